//! A small fully-convolutional estimator with per-channel head activations
//! and exact reverse-mode gradients, all in `f64`.
//!
//! The network maps a normalized depth image to the dense grid tensor:
//! strided 3x3 convolutions with ReLU hidden activations reduce 128x128
//! down to the `S x S` grid, and a final 1x1 convolution produces raw
//! scores per channel. Head activations: logistic for presence and the
//! placement-distance block, identity for the six pose channels, ReLU for
//! the pose-distance estimate, and a per-cell softmax over the class block.
//!
//! Activations are stored in HWC layout; weights as `[ky][kx][in][out]` so
//! the innermost loops run over contiguous output channels.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{CodecConfig, OutputTensor, CH_CLASS, CH_DO, CH_P};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
}

impl ConvSpec {
    pub fn out_size(&self, in_size: usize) -> usize {
        (in_size + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn weight_count(&self) -> usize {
        self.k * self.k * self.in_c * self.out_c
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_size: usize,
    pub convs: Vec<ConvSpec>,
}

impl ArchSpec {
    /// The default backbone: three stride-2 stages down to the grid
    /// resolution, two mixing layers, then the linear head.
    pub fn standard(input_size: usize, s: usize, out_channels: usize) -> ArchSpec {
        assert_eq!(input_size % s, 0, "input must be divisible by grid size");
        let mut convs = Vec::new();
        let mut size = input_size;
        let widths = [16usize, 32, 64];
        let mut in_c = 1;
        let mut wi = 0;
        while size > s {
            let out_c = widths[wi.min(widths.len() - 1)];
            convs.push(ConvSpec {
                in_c,
                out_c,
                k: 3,
                stride: 2,
                pad: 1,
                relu: true,
            });
            in_c = out_c;
            size /= 2;
            wi += 1;
        }
        convs.push(ConvSpec {
            in_c,
            out_c: 96,
            k: 3,
            stride: 1,
            pad: 1,
            relu: true,
        });
        convs.push(ConvSpec {
            in_c: 96,
            out_c: 64,
            k: 1,
            stride: 1,
            pad: 0,
            relu: true,
        });
        convs.push(ConvSpec {
            in_c: 64,
            out_c: out_channels,
            k: 1,
            stride: 1,
            pad: 0,
            relu: false,
        });
        ArchSpec { input_size, convs }
    }

    pub fn output_size(&self) -> usize {
        self.convs
            .iter()
            .fold(self.input_size, |size, c| c.out_size(size))
    }

    pub fn out_channels(&self) -> usize {
        self.convs.last().map(|c| c.out_c).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(ConvSpec::param_count).sum()
    }

    pub fn validate(&self, cfg: &CodecConfig) -> Result<()> {
        if self.convs.is_empty() {
            return Err(Error::config("network has no layers"));
        }
        let mut in_c = 1;
        for (i, c) in self.convs.iter().enumerate() {
            if c.in_c != in_c {
                return Err(Error::config(format!(
                    "layer {i} expects {} input channels, got {}",
                    c.in_c, in_c
                )));
            }
            in_c = c.out_c;
        }
        if self.output_size() != cfg.s {
            return Err(Error::config(format!(
                "network output {} does not match grid size {}",
                self.output_size(),
                cfg.s
            )));
        }
        if self.out_channels() != cfg.channels() {
            return Err(Error::config(format!(
                "network emits {} channels, codec expects {}",
                self.out_channels(),
                cfg.channels()
            )));
        }
        if self.convs.last().map(|c| c.relu) == Some(true) {
            return Err(Error::config("head layer must be linear before activations"));
        }
        Ok(())
    }
}

/// The estimator: an architecture, its parameter vector, and the codec
/// configuration its output tensor is decoded with.
#[derive(Debug, Clone)]
pub struct MiniFcn {
    pub arch: ArchSpec,
    pub codec: CodecConfig,
    pub params: Vec<f64>,
}

/// Everything needed to run the backward pass after a forward pass.
pub struct ForwardCache {
    /// `layer_inputs[i]` is the input of conv `i` (HWC); index 0 holds the
    /// image itself.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation values of every layer.
    pre_acts: Vec<Vec<f64>>,
    /// Head-activated output.
    pub output: OutputTensor,
}

impl ForwardCache {
    /// Hash over all ReLU sign bits (hidden layers and the d_o head).
    /// Two parameter points with equal signatures share the same active
    /// piecewise-linear region, which makes central differences valid.
    pub fn activation_signature(&self, arch: &ArchSpec, codec: &CodecConfig) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bit: bool| {
            h ^= u64::from(bit);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for (spec, z) in arch.convs.iter().zip(&self.pre_acts) {
            if spec.relu {
                for &v in z {
                    feed(v > 0.0);
                }
            }
        }
        // d_o head ReLU.
        let channels = codec.channels();
        let head = self.pre_acts.last().expect("at least one layer");
        for cell in 0..codec.cells() {
            feed(head[cell * channels + CH_DO] > 0.0);
        }
        h
    }
}

impl MiniFcn {
    /// Fresh network with He-uniform weights and zero biases.
    pub fn new(arch: ArchSpec, codec: CodecConfig, seed: u64) -> Result<Self> {
        arch.validate(&codec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; arch.param_count()];
        let mut offset = 0;
        for spec in &arch.convs {
            let fan_in = (spec.k * spec.k * spec.in_c) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for w in &mut params[offset..offset + spec.weight_count()] {
                *w = rng.random_range(-limit..limit);
            }
            // Biases stay zero.
            offset += spec.param_count();
        }
        Ok(MiniFcn {
            arch,
            codec,
            params,
        })
    }

    /// Offset of layer `i`'s weights within the parameter vector.
    fn layer_offset(&self, i: usize) -> usize {
        self.arch.convs[..i].iter().map(ConvSpec::param_count).sum()
    }

    pub fn forward(&self, image: &[f64]) -> OutputTensor {
        self.forward_cached(image).output
    }

    pub fn forward_cached(&self, image: &[f64]) -> ForwardCache {
        let n = self.arch.input_size;
        assert_eq!(
            image.len(),
            n * n,
            "input image must be {n}x{n}, single channel"
        );
        let mut layer_inputs: Vec<Vec<f64>> = Vec::with_capacity(self.arch.convs.len());
        let mut pre_acts: Vec<Vec<f64>> = Vec::with_capacity(self.arch.convs.len());
        let mut current = image.to_vec();
        let mut size = n;
        let mut offset = 0;
        for spec in &self.arch.convs {
            let out_size = spec.out_size(size);
            let weights = &self.params[offset..offset + spec.weight_count()];
            let biases =
                &self.params[offset + spec.weight_count()..offset + spec.param_count()];
            let z = conv_forward(&current, size, spec, weights, biases, out_size);
            layer_inputs.push(std::mem::take(&mut current));
            current = if spec.relu {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre_acts.push(z);
            size = out_size;
            offset += spec.param_count();
        }
        let output = self.apply_head(&current);
        ForwardCache {
            layer_inputs,
            pre_acts,
            output,
        }
    }

    /// Per-channel head activations over the raw scores.
    fn apply_head(&self, scores: &[f64]) -> OutputTensor {
        let cfg = &self.codec;
        let channels = cfg.channels();
        let mut tensor = OutputTensor {
            s: cfg.s,
            channels,
            data: scores.to_vec(),
        };
        for i in 0..cfg.cells() {
            let cell = tensor.cell_mut(i);
            cell[CH_P] = sigmoid(cell[CH_P]);
            // Pose channels stay linear.
            cell[CH_DO] = cell[CH_DO].max(0.0);
            // Stable softmax over the class block.
            let class = &mut cell[CH_CLASS..CH_CLASS + cfg.c];
            let max = class.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in class.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in class.iter_mut() {
                *v /= sum;
            }
            for v in &mut cell[CH_CLASS + cfg.c..] {
                *v = sigmoid(*v);
            }
        }
        tensor
    }

    /// Accumulates `dL/d params` into `grad` given `dL/d output` (with the
    /// output being the head-activated tensor). Returns nothing extra; the
    /// input gradient is dropped at the image.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let cfg = &self.codec;
        let channels = cfg.channels();
        assert_eq!(grad_output.len(), cfg.cells() * channels);
        // Head activations: convert to dL/d score.
        let mut dz = grad_output.to_vec();
        for i in 0..cfg.cells() {
            let base = i * channels;
            let out = cache.output.cell(i);
            // Sigmoid on presence.
            dz[base + CH_P] *= out[CH_P] * (1.0 - out[CH_P]);
            // ReLU on d_o: gradient passes only where the score is positive.
            let z_do = cache.pre_acts.last().unwrap()[base + CH_DO];
            if z_do <= 0.0 {
                dz[base + CH_DO] = 0.0;
            }
            // Softmax jacobian on the class block.
            let s = &out[CH_CLASS..CH_CLASS + cfg.c];
            let da = &grad_output[base + CH_CLASS..base + CH_CLASS + cfg.c];
            let dot: f64 = s.iter().zip(da).map(|(si, dai)| si * dai).sum();
            for j in 0..cfg.c {
                dz[base + CH_CLASS + j] = s[j] * (da[j] - dot);
            }
            // Sigmoid on the placement block.
            for j in CH_CLASS + cfg.c..channels {
                dz[base + j] *= out[j] * (1.0 - out[j]);
            }
        }
        // Convolution chain, last to first.
        let mut sizes = Vec::with_capacity(self.arch.convs.len() + 1);
        let mut size = self.arch.input_size;
        sizes.push(size);
        for spec in &self.arch.convs {
            size = spec.out_size(size);
            sizes.push(size);
        }
        let mut grad_out = dz;
        for li in (0..self.arch.convs.len()).rev() {
            let spec = &self.arch.convs[li];
            let in_size = sizes[li];
            let out_size = sizes[li + 1];
            // ReLU mask of this layer's own activation (the head layer is
            // linear; its activations were handled above).
            if spec.relu {
                for (g, &z) in grad_out.iter_mut().zip(&cache.pre_acts[li]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let offset = self.layer_offset(li);
            let (w_grad, b_grad) = {
                let (w, rest) = grad[offset..offset + spec.param_count()]
                    .split_at_mut(spec.weight_count());
                (w, rest)
            };
            let weights = &self.params[offset..offset + spec.weight_count()];
            let grad_in = conv_backward(
                &cache.layer_inputs[li],
                in_size,
                spec,
                weights,
                &grad_out,
                out_size,
                w_grad,
                b_grad,
                li > 0,
            );
            if li > 0 {
                grad_out = grad_in;
            }
        }
    }

    /// Writes the `MFN1` format: magic, version, embedded codec config
    /// (JSON), architecture, then f64 LE parameters.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"MFN1")?;
        w.write_u32::<LittleEndian>(1)?;
        let codec_json = serde_json::to_vec(&self.codec)?;
        w.write_u32::<LittleEndian>(codec_json.len() as u32)?;
        w.write_all(&codec_json)?;
        w.write_u32::<LittleEndian>(self.arch.input_size as u32)?;
        w.write_u32::<LittleEndian>(self.arch.convs.len() as u32)?;
        for c in &self.arch.convs {
            for v in [c.in_c, c.out_c, c.k, c.stride, c.pad, usize::from(c.relu)] {
                w.write_u32::<LittleEndian>(v as u32)?;
            }
        }
        w.write_u64::<LittleEndian>(self.params.len() as u64)?;
        for &p in &self.params {
            w.write_f64::<LittleEndian>(p)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("model: truncated magic"))?;
        if &magic != b"MFN1" {
            return Err(Error::format("model: bad magic bytes"));
        }
        let version = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("model: truncated header"))?;
        if version != 1 {
            return Err(Error::format(format!(
                "model: unsupported version {version}"
            )));
        }
        let codec_len = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("model: truncated header"))? as usize;
        let mut codec_buf = vec![0u8; codec_len];
        r.read_exact(&mut codec_buf)
            .map_err(|_| Error::format("model: truncated codec config"))?;
        let codec: CodecConfig = serde_json::from_slice(&codec_buf)?;
        let input_size = read_u32(r)? as usize;
        let n_convs = read_u32(r)? as usize;
        let mut convs = Vec::with_capacity(n_convs);
        for _ in 0..n_convs {
            let vals: Vec<u32> = (0..6).map(|_| read_u32(r)).collect::<Result<_>>()?;
            convs.push(ConvSpec {
                in_c: vals[0] as usize,
                out_c: vals[1] as usize,
                k: vals[2] as usize,
                stride: vals[3] as usize,
                pad: vals[4] as usize,
                relu: vals[5] != 0,
            });
        }
        let arch = ArchSpec { input_size, convs };
        let n_params = r
            .read_u64::<LittleEndian>()
            .map_err(|_| Error::format("model: truncated parameter count"))?
            as usize;
        if n_params != arch.param_count() {
            return Err(Error::format(format!(
                "model: parameter count {n_params} does not match architecture ({})",
                arch.param_count()
            )));
        }
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            params.push(
                r.read_f64::<LittleEndian>()
                    .map_err(|_| Error::format("model: truncated parameters"))?,
            );
        }
        arch.validate(&codec)?;
        Ok(MiniFcn {
            arch,
            codec,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::format("model: truncated header"))
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn conv_forward(
    input: &[f64],
    in_size: usize,
    spec: &ConvSpec,
    weights: &[f64],
    biases: &[f64],
    out_size: usize,
) -> Vec<f64> {
    let (ic, oc, k) = (spec.in_c, spec.out_c, spec.k);
    let mut out = vec![0.0; out_size * out_size * oc];
    for oy in 0..out_size {
        for ox in 0..out_size {
            let out_base = (oy * out_size + ox) * oc;
            let acc = &mut out[out_base..out_base + oc];
            acc.copy_from_slice(biases);
            for ky in 0..k {
                let sy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                if sy < 0 || sy >= in_size as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = (ox * spec.stride + kx) as isize - spec.pad as isize;
                    if sx < 0 || sx >= in_size as isize {
                        continue;
                    }
                    let in_base = (sy as usize * in_size + sx as usize) * ic;
                    let w_base = ((ky * k + kx) * ic) * oc;
                    for ci in 0..ic {
                        let v = input[in_base + ci];
                        if v == 0.0 {
                            continue;
                        }
                        let w_row = &weights[w_base + ci * oc..w_base + (ci + 1) * oc];
                        for (a, w) in acc.iter_mut().zip(w_row) {
                            *a += v * w;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_size: usize,
    spec: &ConvSpec,
    weights: &[f64],
    grad_out: &[f64],
    out_size: usize,
    w_grad: &mut [f64],
    b_grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (ic, oc, k) = (spec.in_c, spec.out_c, spec.k);
    let mut grad_in = if need_input_grad {
        vec![0.0; in_size * in_size * ic]
    } else {
        Vec::new()
    };
    for oy in 0..out_size {
        for ox in 0..out_size {
            let out_base = (oy * out_size + ox) * oc;
            let go = &grad_out[out_base..out_base + oc];
            for (b, g) in b_grad.iter_mut().zip(go) {
                *b += g;
            }
            for ky in 0..k {
                let sy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                if sy < 0 || sy >= in_size as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = (ox * spec.stride + kx) as isize - spec.pad as isize;
                    if sx < 0 || sx >= in_size as isize {
                        continue;
                    }
                    let in_base = (sy as usize * in_size + sx as usize) * ic;
                    let w_base = ((ky * k + kx) * ic) * oc;
                    for ci in 0..ic {
                        let v = input[in_base + ci];
                        let row = w_base + ci * oc;
                        if v != 0.0 {
                            let wg = &mut w_grad[row..row + oc];
                            for (w, g) in wg.iter_mut().zip(go) {
                                *w += v * g;
                            }
                        }
                        if need_input_grad {
                            let w_row = &weights[row..row + oc];
                            let mut acc = 0.0;
                            for (w, g) in w_row.iter().zip(go) {
                                acc += w * g;
                            }
                            grad_in[in_base + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    grad_in
}

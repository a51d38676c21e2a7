//! Training-time depth-image augmentation.
//!
//! Five augmentations applied in seed-shuffled order with seed-chosen
//! intensities: far-plane background replacement, Gaussian blur, elastic
//! warping, additive Gaussian noise, and drop noise (single pixels and
//! rectangular regions pulled to a decreased depth, i.e. above the object).
//! Output stays in `[-1, 1]`; a step whose drawn intensity is zero leaves
//! the raster bit-identical.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::render::DepthImage;
use crate::Result;

/// Pixels at or above this normalized value count as far plane.
const FAR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Probability of swapping far-plane pixels for a random background.
    pub background_prob: f64,
    /// Gaussian blur sigma range, pixels.
    pub blur_sigma: (f64, f64),
    /// Elastic displacement magnitude range, pixels.
    pub elastic_alpha: (f64, f64),
    /// Elastic field smoothing sigma, pixels.
    pub elastic_sigma: f64,
    /// Additive Gaussian noise sigma range (normalized units).
    pub noise_sigma: (f64, f64),
    /// Single-pixel drop count range.
    pub drop_pixels: (u32, u32),
    /// Dropped-region count and edge-length ranges.
    pub drop_regions: (u32, u32),
    pub drop_region_size: (u32, u32),
    /// Depth decrease magnitude range (normalized units).
    pub drop_delta: (f64, f64),
}

impl AugmentConfig {
    /// No-op configuration: every intensity zero.
    pub fn identity() -> Self {
        AugmentConfig {
            background_prob: 0.0,
            blur_sigma: (0.0, 0.0),
            elastic_alpha: (0.0, 0.0),
            elastic_sigma: 4.0,
            noise_sigma: (0.0, 0.0),
            drop_pixels: (0, 0),
            drop_regions: (0, 0),
            drop_region_size: (0, 0),
            drop_delta: (0.0, 0.0),
        }
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            background_prob: 0.5,
            blur_sigma: (0.0, 1.2),
            elastic_alpha: (0.0, 2.5),
            elastic_sigma: 6.0,
            noise_sigma: (0.0, 0.03),
            drop_pixels: (0, 40),
            drop_regions: (0, 3),
            drop_region_size: (2, 9),
            drop_delta: (0.05, 0.4),
        }
    }
}

/// Normalized background rasters sampled during augmentation.
#[derive(Debug, Clone, Default)]
pub struct BackgroundStore {
    rasters: Vec<Vec<f64>>,
    width: u32,
    height: u32,
}

impl BackgroundStore {
    pub fn empty() -> Self {
        BackgroundStore::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rasters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rasters.len()
    }

    pub fn push(&mut self, raster: Vec<f64>, width: u32, height: u32) {
        if self.rasters.is_empty() {
            self.width = width;
            self.height = height;
        }
        assert_eq!((width, height), (self.width, self.height));
        self.rasters.push(raster);
    }

    /// Loads every `.dph` raster in the directory, sorted by file name.
    /// Rasters must already be normalized and match the target size.
    pub fn load_dir(dir: &Path, width: u32, height: u32) -> Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "dph"))
            .collect();
        entries.sort();
        let mut store = BackgroundStore::empty();
        for path in entries {
            let img = DepthImage::load(&path)?;
            if img.width == width && img.height == height {
                store.push(img.data, width, height);
            }
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Background,
    Blur,
    Elastic,
    Noise,
    Drop,
}

/// Applies the augmentation stack. Deterministic given the seed; identical
/// input, config, and seed produce a bit-identical raster.
pub fn augment(
    img: &[f64],
    width: u32,
    height: u32,
    backgrounds: &BackgroundStore,
    cfg: &AugmentConfig,
    seed: u64,
) -> Vec<f64> {
    assert_eq!(img.len(), (width * height) as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = [
        Step::Background,
        Step::Blur,
        Step::Elastic,
        Step::Noise,
        Step::Drop,
    ];
    // Fisher-Yates with the same stream that drives intensities.
    for i in (1..steps.len()).rev() {
        let j = rng.random_range(0..=i);
        steps.swap(i, j);
    }
    let mut out = img.to_vec();
    for step in steps {
        match step {
            Step::Background => {
                apply_background(&mut out, backgrounds, cfg, &mut rng);
            }
            Step::Blur => {
                let sigma = sample_range(&mut rng, cfg.blur_sigma);
                if sigma > 0.0 {
                    out = gaussian_blur(&out, width, height, sigma);
                }
            }
            Step::Elastic => {
                let alpha = sample_range(&mut rng, cfg.elastic_alpha);
                if alpha > 0.0 {
                    out = elastic_warp(&out, width, height, alpha, cfg.elastic_sigma, &mut rng);
                }
            }
            Step::Noise => {
                let sigma = sample_range(&mut rng, cfg.noise_sigma);
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("positive sigma");
                    for v in &mut out {
                        *v += normal.sample(&mut rng);
                    }
                }
            }
            Step::Drop => {
                apply_drop_noise(&mut out, width, height, cfg, &mut rng);
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(-1.0, 1.0);
    }
    out
}

fn sample_range(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.1 <= range.0 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

fn sample_range_u32(rng: &mut impl Rng, range: (u32, u32)) -> u32 {
    if range.1 <= range.0 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

fn apply_background(
    out: &mut [f64],
    backgrounds: &BackgroundStore,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) {
    let roll: f64 = rng.random();
    if backgrounds.is_empty() || roll >= cfg.background_prob {
        return;
    }
    let pick = rng.random_range(0..backgrounds.rasters.len());
    let bg = &backgrounds.rasters[pick];
    for (v, b) in out.iter_mut().zip(bg) {
        if *v >= 1.0 - FAR_EPS {
            *v = *b;
        }
    }
}

fn apply_drop_noise(
    out: &mut [f64],
    width: u32,
    height: u32,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) {
    let n_pixels = sample_range_u32(rng, cfg.drop_pixels);
    for _ in 0..n_pixels {
        let x = rng.random_range(0..width);
        let y = rng.random_range(0..height);
        let delta = sample_range(rng, cfg.drop_delta);
        if delta > 0.0 {
            let idx = (y * width + x) as usize;
            out[idx] = (out[idx] - delta).max(-1.0);
        }
    }
    let n_regions = sample_range_u32(rng, cfg.drop_regions);
    for _ in 0..n_regions {
        let size = sample_range_u32(rng, cfg.drop_region_size).max(1);
        let size = size.min(width).min(height);
        let x0 = rng.random_range(0..=width - size);
        let y0 = rng.random_range(0..=height - size);
        let delta = sample_range(rng, cfg.drop_delta);
        if delta <= 0.0 {
            continue;
        }
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                let idx = (y * width + x) as usize;
                out[idx] = (out[idx] - delta).max(-1.0);
            }
        }
    }
}

fn gaussian_blur(img: &[f64], width: u32, height: u32, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let denom = 2.0 * sigma * sigma;
    for k in -radius..=radius {
        kernel.push((-(k as f64) * (k as f64) / denom).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let (w, h) = (width as i64, height as i64);
    let mut tmp = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - radius).clamp(0, w - 1);
                acc += kv * img[(y * w + sx) as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                acc += kv * tmp[(sy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

fn elastic_warp(
    img: &[f64],
    width: u32,
    height: u32,
    alpha: f64,
    field_sigma: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = img.len();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut dx: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let mut dy: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    if field_sigma > 0.0 {
        dx = gaussian_blur(&dx, width, height, field_sigma);
        dy = gaussian_blur(&dy, width, height, field_sigma);
    }
    // Blurring shrinks the field amplitude; rescale to unit RMS before
    // applying alpha so the displacement magnitude tracks the config.
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let (rx, ry) = (rms(&dx).max(1e-12), rms(&dy).max(1e-12));
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            let sx = x as f64 + dx[idx] / rx * alpha;
            let sy = y as f64 + dy[idx] / ry * alpha;
            out[idx] = bilinear(img, w, h, sx, sy);
        }
    }
    out
}

fn bilinear(img: &[f64], w: i64, h: i64, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img[(y0 * w + x0) as usize];
    let p10 = img[(y0 * w + x1) as usize];
    let p01 = img[(y1 * w + x0) as usize];
    let p11 = img[(y1 * w + x1) as usize];
    p00 * (1.0 - fx) * (1.0 - fy) + p10 * fx * (1.0 - fy) + p01 * (1.0 - fx) * fy + p11 * fx * fy
}

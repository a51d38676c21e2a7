//! binpick-core: a model-based bin-picking pipeline in plain Rust.
//!
//! The crate covers the full loop for picking known rigid objects out of
//! clutter with multiple gripper types:
//!
//! * automatic grasp-pose generation on triangle meshes (parallel jaw and
//!   suction grippers) with feasibility filtering,
//! * synthetic cluttered-scene generation with perspective depth rendering,
//!   visibility computation, and proxy grasp/placement labeling,
//! * symmetry-aware pose mathematics (orientation unification, pose
//!   representatives, pose distances),
//! * a dense grid output encoding (`S x S x (8 + C + K_max)`) with an
//!   encoder/decoder pair,
//! * a small fully-convolutional estimator trained with a masked multi-task
//!   loss and exact reverse-mode gradients in `f64`,
//! * a multi-gripper grasp-selection policy and an evaluation harness
//!   (average precision, ADI, classification and placement statistics).
//!
//! Everything is deterministic given explicit seeds; parallel code paths
//! merge results in a fixed order so thread count never changes output.


pub mod augment;
pub mod bvh;




pub mod geom;



pub mod mesh;
pub mod net;







pub mod render;
pub mod scene;
pub mod symmetry;
pub mod train;


pub mod camera;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod grasp;
pub mod library;
pub mod loss;
pub mod object;
pub mod oracle;
pub mod pipeline;
pub mod policy;
pub use geom::{Mat3, Pose, Rotation, Vec3};
pub use object::{ClassGeometry, ObjectModel};
pub use symmetry::SymmetryClass;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed or truncated files, bad magic bytes, version mismatches.
    #[error("format error: {0}")]
    Format(String),
    /// Inconsistent configuration (e.g. per-class grasp count exceeding K_max).
    #[error("config error: {0}")]
    Config(String),
    /// Violated preconditions or domain invariants.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Non-finite values, divergence, or other numeric failures.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A scene could not be populated at the requested fill level.
    #[error("scene unsatisfiable: {0}")]
    Unsatisfiable(String),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Derives a stream seed from a master seed, a stage tag, and an index.
///
/// Every randomized stage of the pipeline draws from its own stream so that
/// stages can run in any order (or in parallel) without perturbing each
/// other's results.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = master ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1));
    for &b in tag.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

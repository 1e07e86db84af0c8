//! Mask-based saliency explanations for spatiotemporal classifiers, with
//! optional DCT-domain band filtering of the optimizer's gradient maps,
//! and the evaluation-metric suite that goes with them.

pub mod data;
pub mod dct;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod perturb;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{ClipShape, Tensor};

/// Double-precision pipeline aliases; the binary file formats and the CLI
/// run on these.
pub type VideoClip = Tensor<f64>;
pub type SaliencyMask = Tensor<f64>;
pub type GradientMap = Tensor<f64>;
pub type FrequencyMap = Tensor<f64>;
pub type BoxVolume = Tensor<f64>;

//! Implicit and explicit positional information in convolutional feature maps.
//!
//! The crate evaluates small convolutional pipelines on i.i.d. Gaussian input
//! and measures, by Monte Carlo and by exact linear algebra, how each padding
//! mode shapes the per-location expectation and autocorrelation of the output.
//! It also builds explicit positional encodings (Cartesian grids, sinusoidal
//! codes, frozen random constants), checks their transformation laws, and
//! provides the scale-dependent pieces of multi-scale training with encodings.

pub mod convnet;
pub mod error;
pub mod export;
pub mod grid;
pub mod posenc;
pub mod mspie;
pub mod presets;
pub mod probe;
pub mod resize;
pub mod rng;
pub mod statlab;

pub use convnet::{
    activate, conv2d, forward, strip_padding, Activation, ConvLayer, NetworkSpec, PaddingMode, Stage,
    StrippedNet,
};
pub use error::{Error, Result};
pub use grid::{FeatureMap, GridSize};
pub use resize::bilinear_resize;
pub use rng::{sample_gaussian, CounterRng, RngSpec};

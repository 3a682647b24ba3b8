//! Built-in networks for the canonical padding cases.

use crate::convnet::{Activation, ConvLayer, NetworkSpec, PaddingMode, Stage, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::grid::GridSize;

/// Input grid used by every preset unless overridden.
pub const DEFAULT_INPUT: (usize, usize) = (16, 16);

pub const PRESET_NAMES: [&str; 5] = [
    "nopad-linear",
    "nopad-2layer",
    "zeropad-2layer",
    "reflect-linear",
    "circular-linear",
];

fn ones(padding: PaddingMode, bias: f64) -> Stage {
    Stage::Conv(ConvLayer::ones(3, 3, bias, padding).expect("valid 3x3 layer"))
}

fn leaky() -> Stage {
    Stage::Act(Activation::leaky_relu(DEFAULT_LEAKY_SLOPE).expect("valid slope"))
}

/// Looks up a preset by name. All use 3x3 all-ones kernels on one channel.
///
/// * `nopad-linear`: valid conv, bias 0.5.
/// * `nopad-2layer`: valid conv, LeakyReLU(0.2), valid conv; biases 0.
/// * `zeropad-2layer`: as above with zero padding 1 on both convs.
/// * `reflect-linear`: reflect padding 1, bias 0.5.
/// * `circular-linear`: circular padding 1, bias 0.5.
pub fn preset(name: &str) -> Result<NetworkSpec> {
    let stages = match name {
        "nopad-linear" => vec![ones(PaddingMode::None, 0.5)],
        "nopad-2layer" => vec![ones(PaddingMode::None, 0.0), leaky(), ones(PaddingMode::None, 0.0)],
        "zeropad-2layer" => vec![
            ones(PaddingMode::Zero(1), 0.0),
            leaky(),
            ones(PaddingMode::Zero(1), 0.0),
        ],
        "reflect-linear" => vec![ones(PaddingMode::Reflect(1), 0.5)],
        "circular-linear" => vec![ones(PaddingMode::Circular(1), 0.5)],
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    NetworkSpec::new(1, stages)
}

pub fn default_input() -> GridSize {
    GridSize::new(DEFAULT_INPUT.0, DEFAULT_INPUT.1).expect("positive")
}

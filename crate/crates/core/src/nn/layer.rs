use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a sequential classifier. Shapes exclude the batch dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Tanh,
    Sigmoid,
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

pub const LAYER_KINDS: [&str; 8] = ["dense", "conv2d", "relu", "tanh", "sigmoid", "maxpool2d", "flatten", "softmax"];

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel_h: kernel, kernel_w: kernel, stride, padding }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    /// Weight tensor shape and bias length for parametrized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], outputs)),
            LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, .. } => {
                Some((vec![out_channels, in_channels, kernel_h, kernel_w], out_channels))
            }
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().map_or(0, |(w, b)| w.iter().product::<usize>() + b)
    }

    pub fn is_elementwise(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid)
    }

    /// Output shape for a given input shape (batch excluded).
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => match input {
                [n] if *n == inputs => Ok(vec![outputs]),
                _ => Err(format!("dense expects [{inputs}], got {input:?}")),
            },
            LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride, padding } => {
                let [c, h, w] = input else {
                    return Err(format!("conv2d expects [channels, height, width], got {input:?}"));
                };
                if *c != in_channels {
                    return Err(format!("conv2d expects {in_channels} input channels, got {c}"));
                }
                if stride == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err("conv2d kernel and stride must be positive".into());
                }
                let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                if ph < kernel_h || pw < kernel_w {
                    return Err(format!("conv2d kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"));
                }
                Ok(vec![out_channels, (ph - kernel_h) / stride + 1, (pw - kernel_w) / stride + 1])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let [c, h, w] = input else {
                    return Err(format!("maxpool2d expects [channels, height, width], got {input:?}"));
                };
                if window == 0 || stride == 0 {
                    return Err("maxpool2d window and stride must be positive".into());
                }
                if *h < window || *w < window {
                    return Err(format!("maxpool2d window {window} larger than input {h}x{w}"));
                }
                Ok(vec![*c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Softmax => match input {
                [_] => Ok(input.to_vec()),
                _ => Err(format!("softmax expects a vector, got {input:?}")),
            },
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid => Ok(input.to_vec()),
        }
    }
}

/// Per-layer output shapes for `layers` applied to `input_shape`.
pub fn infer_shapes(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
    if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(format!("input shape {input_shape:?}")));
    }
    let mut current = input_shape.to_vec();
    let mut shapes = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        current = layer.output_shape(&current).map_err(|reason| Error::ShapeMismatch { layer: i, reason })?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

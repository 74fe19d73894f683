use serde::{Deserialize, Serialize};

use super::NnError;

/// Optional activation fused into a dense or convolutional layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding: output is `(in - kernel) / stride + 1`.
    #[default]
    Valid,
    /// Zero padding so that the output is `ceil(in / stride)`.
    Same,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// One layer of a [`NetworkSpec`].
///
/// Activations are laid out `(channels, height, width)` for spatial layers and
/// as flat vectors for dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default, skip_serializing_if = "is_default")]
        activation: Activation,
    },
    Conv2d {
        channels: usize,
        kernel: [usize; 2],
        #[serde(default = "one", skip_serializing_if = "is_one")]
        stride: usize,
        #[serde(default, skip_serializing_if = "is_default")]
        padding: Padding,
        #[serde(default, skip_serializing_if = "is_default")]
        activation: Activation,
    },
    /// Non-overlapping max pooling (stride equals the window).
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        window: [usize; 2],
    },
    Dropout {
        rate: f64,
    },
    Softmax,
    Flatten,
    Relu,
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, activation: Activation::Identity }
    }

    pub fn dense_relu(units: usize) -> Self {
        LayerSpec::Dense { units, activation: Activation::Relu }
    }

    /// Valid, stride-1 convolution.
    pub fn conv(channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            channels,
            kernel: [kernel, kernel],
            stride: 1,
            padding: Padding::Valid,
            activation: Activation::Identity,
        }
    }

    pub fn conv_relu(channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            channels,
            kernel: [kernel, kernel],
            stride: 1,
            padding: Padding::Valid,
            activation: Activation::Relu,
        }
    }

    pub fn maxpool(window: usize) -> Self {
        LayerSpec::MaxPool2d { window: [window, window] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Relu => "relu",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Output activation shape for the given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                if input.len() != 1 {
                    return Err(format!("dense layer needs a flat input, got {input:?}"));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d { channels, kernel, stride, padding, .. } => {
                if channels == 0 || kernel[0] == 0 || kernel[1] == 0 || stride == 0 {
                    return Err("conv2d dimensions must be at least 1".into());
                }
                let [_, h, w] = spatial(input)?;
                let geo = ConvGeometry::new(input, kernel, stride, padding)
                    .ok_or_else(|| format!("kernel {kernel:?} larger than input {h}x{w}"))?;
                Ok(vec![channels, geo.out_h, geo.out_w])
            }
            LayerSpec::MaxPool2d { window } => {
                if window[0] == 0 || window[1] == 0 {
                    return Err("pooling window must be at least 1".into());
                }
                let [c, h, w] = spatial(input)?;
                if h < window[0] || w < window[1] {
                    return Err(format!("pooling window {window:?} larger than input {h}x{w}"));
                }
                Ok(vec![c, h / window[0], w / window[1]])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(format!("softmax needs a flat input, got {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu => Ok(input.to_vec()),
        }
    }

    /// Shapes of `[weight, bias]` for parameterized layers, empty otherwise.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { units, .. } => {
                vec![vec![units, input.iter().product()], vec![units]]
            }
            LayerSpec::Conv2d { channels, kernel, .. } => {
                vec![vec![channels, input[0], kernel[0], kernel[1]], vec![channels]]
            }
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` used by the uniform initializer.
    pub(crate) fn fans(&self, input: &[usize]) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { units, .. } => (input.iter().product(), units),
            LayerSpec::Conv2d { channels, kernel, .. } => {
                let area = kernel[0] * kernel[1];
                (input[0] * area, channels * area)
            }
            _ => (0, 0),
        }
    }
}

fn spatial(input: &[usize]) -> Result<[usize; 3], String> {
    match *input {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok([c, h, w]),
        _ => Err(format!("needs a (channels, height, width) input, got {input:?}")),
    }
}

/// Resolved convolution arithmetic for one input shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: [usize; 2], stride: usize, padding: Padding) -> Option<Self> {
        let (in_c, in_h, in_w) = (input[0], input[1], input[2]);
        let [k_h, k_w] = kernel;
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if in_h < k_h || in_w < k_w {
                    return None;
                }
                ((in_h - k_h) / stride + 1, (in_w - k_w) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let out_h = in_h.div_ceil(stride);
                let out_w = in_w.div_ceil(stride);
                let total_h = ((out_h - 1) * stride + k_h).saturating_sub(in_h);
                let total_w = ((out_w - 1) * stride + k_w).saturating_sub(in_w);
                (out_h, out_w, total_h / 2, total_w / 2)
            }
        };
        Some(ConvGeometry { in_c, in_h, in_w, k_h, k_w, stride, pad_top, pad_left, out_h, out_w })
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Input shape plus ordered layers. Always terminated by a softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let spec = NetworkSpec { input_shape, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Activation shapes: entry `j` is the input of layer `j`, the last entry is
    /// the network output. Fails on the first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Shape { layer: 0, detail: format!("invalid input shape {:?}", self.input_shape) });
        }
        let last = self
            .layers
            .len()
            .checked_sub(1)
            .ok_or_else(|| NnError::Shape { layer: 0, detail: "network has no layers".into() })?;
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax) != (i == last) {
                let detail = if i == last {
                    "final layer must be softmax".to_string()
                } else {
                    "softmax may only appear as the final layer".to_string()
                };
                return Err(NnError::Shape { layer: i, detail });
            }
            let out = layer.output_shape(&shapes[i]).map_err(|detail| NnError::Shape { layer: i, detail })?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    /// Output width of the terminating softmax.
    pub fn classes(&self) -> Result<usize, NnError> {
        Ok(self.shapes()?.last().map(|s| s[0]).unwrap_or(0))
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnist_like() -> NetworkSpec {
        NetworkSpec {
            input_shape: vec![1, 28, 28],
            layers: vec![
                LayerSpec::conv_relu(64, 5),
                LayerSpec::maxpool(2),
                LayerSpec::conv_relu(128, 5),
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::dense_relu(1024),
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::dense(10),
                LayerSpec::Softmax,
            ],
        }
    }

    #[test]
    fn mnist_shapes() {
        let shapes = mnist_like().shapes().unwrap();
        assert_eq!(shapes[1], vec![64, 24, 24]);
        assert_eq!(shapes[2], vec![64, 12, 12]);
        assert_eq!(shapes[3], vec![128, 8, 8]);
        assert_eq!(shapes[4], vec![128, 4, 4]);
        assert_eq!(shapes[5], vec![2048]);
        assert_eq!(mnist_like().classes().unwrap(), 10);
    }

    #[test]
    fn mnist_weight_count_is_about_two_million() {
        let spec = mnist_like();
        let shapes = spec.shapes().unwrap();
        let total: usize = spec
            .layers
            .iter()
            .zip(&shapes)
            .flat_map(|(l, s)| l.param_shapes(s))
            .map(|s| s.iter().product::<usize>())
            .sum();
        assert!((2_200_000..2_400_000).contains(&total), "{total}");
    }

    #[test]
    fn same_padding_keeps_size() {
        let l = LayerSpec::Conv2d {
            channels: 8,
            kernel: [3, 3],
            stride: 1,
            padding: Padding::Same,
            activation: Activation::Relu,
        };
        assert_eq!(l.output_shape(&[4, 4, 4]).unwrap(), vec![8, 4, 4]);
        let strided = LayerSpec::Conv2d {
            channels: 8,
            kernel: [3, 3],
            stride: 2,
            padding: Padding::Same,
            activation: Activation::Identity,
        };
        assert_eq!(strided.output_shape(&[1, 7, 7]).unwrap(), vec![8, 4, 4]);
    }

    #[test]
    fn strided_valid_conv() {
        let l = LayerSpec::Conv2d {
            channels: 2,
            kernel: [3, 3],
            stride: 2,
            padding: Padding::Valid,
            activation: Activation::Identity,
        };
        assert_eq!(l.output_shape(&[1, 32, 32]).unwrap(), vec![2, 15, 15]);
    }

    #[test]
    fn softmax_must_be_last() {
        let spec = NetworkSpec {
            input_shape: vec![4],
            layers: vec![LayerSpec::dense(3), LayerSpec::Softmax, LayerSpec::dense(3)],
        };
        assert!(matches!(spec.shapes(), Err(NnError::Shape { layer: 1, .. })));
        let spec = NetworkSpec { input_shape: vec![4], layers: vec![LayerSpec::dense(3)] };
        assert!(matches!(spec.shapes(), Err(NnError::Shape { layer: 0, .. })));
    }

    #[test]
    fn reports_offending_layer() {
        let spec = NetworkSpec {
            input_shape: vec![1, 6, 6],
            layers: vec![
                LayerSpec::conv(4, 5),
                LayerSpec::conv(4, 3),
                LayerSpec::Flatten,
                LayerSpec::dense(2),
                LayerSpec::Softmax,
            ],
        };
        match spec.shapes() {
            Err(NnError::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dense_rejects_spatial_input() {
        let spec = NetworkSpec { input_shape: vec![1, 4, 4], layers: vec![LayerSpec::dense(2), LayerSpec::Softmax] };
        assert!(matches!(spec.shapes(), Err(NnError::Shape { layer: 0, .. })));
    }

    #[test]
    fn dropout_rate_bounds() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.output_shape(&[3]).is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.output_shape(&[3]).is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.output_shape(&[3]).is_ok());
    }
}

//! Architecture descriptions and their static shape/parameter arithmetic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, padding: Padding },
    BatchNorm,
    Relu,
    MaxPool1d { window: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    /// Final fully connected layer feeding the softmax; owns `in × classes`
    /// weights plus biases.
    Softmax { classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub input_dim: usize,
    pub classes: usize,
}

/// Per-sample activation shape between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Spatial { len: usize, ch: usize },
    Flat { dim: usize },
}

impl Shape {
    /// Axis batch normalization runs over: channels for spatial activations,
    /// units for flattened ones.
    pub fn channels(self) -> usize {
        match self {
            Shape::Spatial { ch, .. } => ch,
            Shape::Flat { dim } => dim,
        }
    }

    pub fn flat_dim(self) -> usize {
        match self {
            Shape::Spatial { len, ch } => len * ch,
            Shape::Flat { dim } => dim,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { len, ch } => write!(f, "{len}x{ch}"),
            Shape::Flat { dim } => write!(f, "{dim}"),
        }
    }
}

impl ModelSpec {
    /// Standard architecture family: `conv_blocks` convolution blocks (the
    /// first with same padding, the rest valid) each followed by batch norm,
    /// ReLU, 2-wide max pooling and dropout; then two dense blocks and the
    /// softmax output.
    pub fn cnn(
        conv_blocks: usize,
        filters: usize,
        dense_units: usize,
        dropout: f64,
        input_dim: usize,
        classes: usize,
    ) -> Self {
        let mut layers = Vec::new();
        for block in 0..conv_blocks {
            let padding = if block == 0 { Padding::Same } else { Padding::Valid };
            layers.push(LayerSpec::Conv1d { filters, kernel: 3, padding });
            layers.push(LayerSpec::BatchNorm);
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool1d { window: 2 });
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        layers.push(LayerSpec::Flatten);
        for _ in 0..2 {
            layers.push(LayerSpec::Dense { units: dense_units });
            layers.push(LayerSpec::BatchNorm);
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        layers.push(LayerSpec::Softmax { classes });
        ModelSpec { layers, input_dim, classes }
    }

    /// Walks the layer list and returns every activation shape, index 0 being
    /// the input. Fails when shapes collapse below what a layer needs.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("model input dimension must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("model needs at least 2 classes".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("model has no layers".into()));
        }
        let mut shapes = vec![Shape::Spatial { len: self.input_dim, ch: 1 }];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().expect("chain starts with the input shape");
            let next = match layer {
                LayerSpec::Conv1d { filters, kernel, padding } => {
                    let Shape::Spatial { len, ch: _ } = cur else {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: convolution needs a spatial input, got {cur}"
                        )));
                    };
                    if *filters == 0 {
                        return Err(Error::InvalidConfig(format!("layer {i}: zero filters")));
                    }
                    if *kernel == 0 || kernel % 2 == 0 {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: convolution kernel must be odd, got {kernel}"
                        )));
                    }
                    let out_len = match padding {
                        Padding::Same => len,
                        Padding::Valid => {
                            if len < *kernel {
                                return Err(Error::InfeasibleDepth(format!(
                                    "layer {i}: length {len} is shorter than the kernel ({kernel})"
                                )));
                            }
                            len - kernel + 1
                        }
                    };
                    Shape::Spatial { len: out_len, ch: *filters }
                }
                LayerSpec::BatchNorm | LayerSpec::Relu => cur,
                LayerSpec::MaxPool1d { window } => {
                    let Shape::Spatial { len, ch } = cur else {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: max pooling needs a spatial input, got {cur}"
                        )));
                    };
                    if *window != 2 {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: only pooling window 2 is supported, got {window}"
                        )));
                    }
                    if len < 2 {
                        return Err(Error::InfeasibleDepth(format!(
                            "layer {i}: length {len} is too short to pool"
                        )));
                    }
                    Shape::Spatial { len: len / 2, ch }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    cur
                }
                LayerSpec::Flatten => Shape::Flat { dim: cur.flat_dim() },
                LayerSpec::Dense { units } => {
                    let Shape::Flat { dim: _ } = cur else {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: dense layer needs a flattened input"
                        )));
                    };
                    if *units == 0 {
                        return Err(Error::InvalidConfig(format!("layer {i}: zero units")));
                    }
                    Shape::Flat { dim: *units }
                }
                LayerSpec::Softmax { classes } => {
                    let Shape::Flat { dim: _ } = cur else {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: softmax layer needs a flattened input"
                        )));
                    };
                    if i != last {
                        return Err(Error::InvalidConfig(
                            "softmax must be the final layer".into(),
                        ));
                    }
                    if *classes != self.classes {
                        return Err(Error::InvalidConfig(format!(
                            "softmax outputs {classes} classes but the model declares {}",
                            self.classes
                        )));
                    }
                    Shape::Flat { dim: *classes }
                }
            };
            shapes.push(next);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax { .. })) {
            return Err(Error::InvalidConfig("model must end with a softmax layer".into()));
        }
        Ok(shapes)
    }

    /// Trainable-plus-tracked parameters per layer. Batch norm counts four
    /// values per channel (scale, shift, moving mean, moving variance).
    pub fn layer_params(&self) -> Result<Vec<usize>> {
        let shapes = self.validate()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match layer {
                LayerSpec::Conv1d { filters, kernel, .. } => {
                    kernel * input.channels() * filters + filters
                }
                LayerSpec::BatchNorm => 4 * input.channels(),
                LayerSpec::Dense { units } => input.flat_dim() * units + units,
                LayerSpec::Softmax { classes } => input.flat_dim() * classes + classes,
                _ => 0,
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layer_params()?.iter().sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnVariant {
    Cnn1,
    Cnn2,
    Cnn3,
    Cnn4,
    Cnn5,
    Cnn6,
}

impl CnnVariant {
    pub const ALL: [CnnVariant; 6] = [
        CnnVariant::Cnn1,
        CnnVariant::Cnn2,
        CnnVariant::Cnn3,
        CnnVariant::Cnn4,
        CnnVariant::Cnn5,
        CnnVariant::Cnn6,
    ];

    pub fn conv_blocks(self) -> usize {
        match self {
            CnnVariant::Cnn1 => 3,
            CnnVariant::Cnn2 => 4,
            CnnVariant::Cnn3 => 5,
            CnnVariant::Cnn4 => 6,
            CnnVariant::Cnn5 => 7,
            CnnVariant::Cnn6 => 8,
        }
    }
}

impl fmt::Display for CnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cnn{}", self.conv_blocks() - 2)
    }
}

impl FromStr for CnnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn1" => Ok(CnnVariant::Cnn1),
            "cnn2" => Ok(CnnVariant::Cnn2),
            "cnn3" => Ok(CnnVariant::Cnn3),
            "cnn4" => Ok(CnnVariant::Cnn4),
            "cnn5" => Ok(CnnVariant::Cnn5),
            "cnn6" => Ok(CnnVariant::Cnn6),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {other:?}, expected cnn1..cnn6"
            ))),
        }
    }
}

/// Full-width architecture for a variant: 256 filters, 512-unit dense
/// layers, dropout 0.1.
pub fn build_model(variant: CnnVariant, input_dim: usize, classes: usize) -> ModelSpec {
    ModelSpec::cnn(variant.conv_blocks(), 256, 512, 0.1, input_dim, classes)
}

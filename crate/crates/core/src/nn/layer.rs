use serde::{Deserialize, Serialize};

use super::NnError;

/// Activation tensor shape, channel-major: `channels x height x width`.
/// Dense layers see a flat vector, i.e. `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero-pad `kernel / 2` on every side.
    #[default]
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        padding: Padding,
    },
    /// Nearest-neighbour 2x upsampling (each value repeated in a 2x2 block).
    Upsample2,
    Activation {
        function: Activation,
    },
    /// Forward: threshold to +-1 (0 goes to +1). Backward: identity.
    BinarizeSte,
    /// Reinterprets a flat vector as a feature map, e.g. after a dense
    /// bottleneck in a convolutional decoder.
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Dense { in_dim, out_dim }
    }

    pub fn conv(filters: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding: Padding::Same,
        }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation {
            function: Activation::Relu,
        }
    }

    pub fn tanh() -> Self {
        LayerSpec::Activation {
            function: Activation::Tanh,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Upsample2 => "upsample2",
            LayerSpec::Activation {
                function: Activation::Relu,
            } => "relu",
            LayerSpec::Activation {
                function: Activation::Tanh,
            } => "tanh",
            LayerSpec::BinarizeSte => "binarize_ste",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Output shape for `input`, or why the layer cannot accept it.
    pub fn output_shape(&self, index: usize, input: Shape) -> Result<Shape, NnError> {
        let bad = |reason: String| NnError::IncompatibleShape {
            index,
            layer: self.name(),
            input,
            reason,
        };
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(bad("dimensions must be positive".into()));
                }
                if input.len() != in_dim {
                    return Err(bad(format!("expects {in_dim} inputs")));
                }
                Ok(Shape::flat(out_dim))
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if filters == 0 {
                    return Err(bad("filters must be positive".into()));
                }
                if kernel == 0 || kernel % 2 == 0 {
                    return Err(bad("kernel must be odd and positive".into()));
                }
                if stride == 0 {
                    return Err(bad("stride must be at least 1".into()));
                }
                let pad = match padding {
                    Padding::Same => kernel / 2,
                    Padding::Valid => 0,
                };
                let out = |n: usize| -> Result<usize, NnError> {
                    if n + 2 * pad < kernel {
                        return Err(bad(format!("kernel {kernel} exceeds padded input")));
                    }
                    Ok((n + 2 * pad - kernel) / stride + 1)
                };
                Ok(Shape::new(filters, out(input.height)?, out(input.width)?))
            }
            LayerSpec::Upsample2 => Ok(Shape::new(
                input.channels,
                2 * input.height,
                2 * input.width,
            )),
            LayerSpec::Activation { .. } | LayerSpec::BinarizeSte => Ok(input),
            LayerSpec::Reshape {
                channels,
                height,
                width,
            } => {
                let s = Shape::new(channels, height, width);
                if s.len() != input.len() || s.is_empty() {
                    return Err(bad(format!("cannot reshape to {s}")));
                }
                Ok(s)
            }
        }
    }

    /// `(weight count, bias count)` given the input shape.
    pub(crate) fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => (in_dim * out_dim, out_dim),
            LayerSpec::Conv2d {
                filters, kernel, ..
            } => (filters * input.channels * kernel * kernel, filters),
            _ => (0, 0),
        }
    }

    /// Weight fan-in, for initialisation.
    pub(crate) fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, .. } => in_dim,
            LayerSpec::Conv2d { kernel, .. } => input.channels * kernel * kernel,
            _ => 0,
        }
    }
}

/// A spec bound to concrete shapes and a slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub w_off: usize,
    pub w_len: usize,
    pub b_off: usize,
    pub b_len: usize,
}

impl Layer {
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = (
            &params[self.w_off..self.w_off + self.w_len],
            &params[self.b_off..self.b_off + self.b_len],
        );
        match self.spec {
            LayerSpec::Dense { in_dim, out_dim } => (0..out_dim)
                .map(|o| {
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect(),
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => conv_forward(self.input, self.output, kernel, stride, padding, w, b, x),
            LayerSpec::Upsample2 => {
                let (c, h, wd) = (self.input.channels, self.input.height, self.input.width);
                let mut out = vec![0.0; self.output.len()];
                let ow = 2 * wd;
                for ch in 0..c {
                    for r in 0..2 * h {
                        for col in 0..ow {
                            out[(ch * 2 * h + r) * ow + col] = x[(ch * h + r / 2) * wd + col / 2];
                        }
                    }
                }
                out
            }
            LayerSpec::Activation { function } => match function {
                Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Tanh => x.iter().map(|&v| v.tanh()).collect(),
            },
            LayerSpec::BinarizeSte => x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect(),
            LayerSpec::Reshape { .. } => x.to_vec(),
        }
    }

    /// Accumulates parameter gradients into `dparams` and returns the input
    /// gradient.
    pub fn backward(&self, params: &[f64], x: &[f64], g: &[f64], dparams: &mut [f64]) -> Vec<f64> {
        match self.spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                let w = &params[self.w_off..self.w_off + self.w_len];
                let mut dx = vec![0.0; in_dim];
                for o in 0..out_dim {
                    let go = g[o];
                    dparams[self.b_off + o] += go;
                    if go == 0.0 {
                        continue;
                    }
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    let drow = &mut dparams[self.w_off + o * in_dim..self.w_off + (o + 1) * in_dim];
                    for i in 0..in_dim {
                        drow[i] += go * x[i];
                        dx[i] += go * row[i];
                    }
                }
                dx
            }
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => conv_backward(self, params, kernel, stride, padding, x, g, dparams),
            LayerSpec::Upsample2 => {
                let (c, h, wd) = (self.input.channels, self.input.height, self.input.width);
                let ow = 2 * wd;
                let mut dx = vec![0.0; self.input.len()];
                for ch in 0..c {
                    for r in 0..2 * h {
                        for col in 0..ow {
                            dx[(ch * h + r / 2) * wd + col / 2] += g[(ch * 2 * h + r) * ow + col];
                        }
                    }
                }
                dx
            }
            LayerSpec::Activation { function } => match function {
                Activation::Relu => x
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect(),
                Activation::Tanh => x
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| {
                        let t = v.tanh();
                        gv * (1.0 - t * t)
                    })
                    .collect(),
            },
            // Straight-through: the quantiser's Jacobian is taken as identity.
            LayerSpec::BinarizeSte | LayerSpec::Reshape { .. } => g.to_vec(),
        }
    }
}

fn pad_of(kernel: usize, padding: Padding) -> isize {
    match padding {
        Padding::Same => (kernel / 2) as isize,
        Padding::Valid => 0,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: Shape,
    output: Shape,
    k: usize,
    stride: usize,
    padding: Padding,
    w: &[f64],
    b: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let pad = pad_of(k, padding);
    let (cin, h, wd) = (input.channels, input.height as isize, input.width as isize);
    let (oh, ow) = (output.height, output.width);
    let mut out = vec![0.0; output.len()];
    for f in 0..output.channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = b[f];
                let r0 = (i * stride) as isize - pad;
                let c0 = (j * stride) as isize - pad;
                for c in 0..cin {
                    let wbase = (f * cin + c) * k * k;
                    let xbase = c * input.height * input.width;
                    for a in 0..k {
                        let r = r0 + a as isize;
                        if r < 0 || r >= h {
                            continue;
                        }
                        let xrow = xbase + r as usize * input.width;
                        for bb in 0..k {
                            let col = c0 + bb as isize;
                            if col < 0 || col >= wd {
                                continue;
                            }
                            s += w[wbase + a * k + bb] * x[xrow + col as usize];
                        }
                    }
                }
                out[(f * oh + i) * ow + j] = s;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    layer: &Layer,
    params: &[f64],
    k: usize,
    stride: usize,
    padding: Padding,
    x: &[f64],
    g: &[f64],
    dparams: &mut [f64],
) -> Vec<f64> {
    let (input, output) = (layer.input, layer.output);
    let pad = pad_of(k, padding);
    let w = &params[layer.w_off..layer.w_off + layer.w_len];
    let (cin, h, wd) = (input.channels, input.height as isize, input.width as isize);
    let (oh, ow) = (output.height, output.width);
    let mut dx = vec![0.0; input.len()];
    for f in 0..output.channels {
        for i in 0..oh {
            for j in 0..ow {
                let go = g[(f * oh + i) * ow + j];
                dparams[layer.b_off + f] += go;
                if go == 0.0 {
                    continue;
                }
                let r0 = (i * stride) as isize - pad;
                let c0 = (j * stride) as isize - pad;
                for c in 0..cin {
                    let wbase = (f * cin + c) * k * k;
                    let xbase = c * input.height * input.width;
                    for a in 0..k {
                        let r = r0 + a as isize;
                        if r < 0 || r >= h {
                            continue;
                        }
                        let xrow = xbase + r as usize * input.width;
                        for bb in 0..k {
                            let col = c0 + bb as isize;
                            if col < 0 || col >= wd {
                                continue;
                            }
                            let xi = xrow + col as usize;
                            dparams[layer.w_off + wbase + a * k + bb] += go * x[xi];
                            dx[xi] += go * w[wbase + a * k + bb];
                        }
                    }
                }
            }
        }
    }
    dx
}

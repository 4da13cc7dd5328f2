use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec, Shape};
use super::NnError;
use crate::image::Field;
use crate::rng;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Weight initialisation. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian { std: f64 },
    /// Uniform on `+-sqrt(3 / fan_in)`.
    #[default]
    FanInUniform,
}

impl Init {
    /// The small Gaussian used for SRCNN-shaped networks.
    pub const SRCNN: Init = Init::Gaussian { std: 0.001 };
}

/// No layer behaves differently between the two; kept so callers state intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activations recorded by [`Network::forward`]. Entry `i` is the input to
/// layer `i`; the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Network::params`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
    params: Vec<f64>,
    seed: u64,
    generation: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input == other.input
            && self.layers == other.layers
            && self.params == other.params
            && self.seed == other.seed
    }
}

fn bind(specs: &[LayerSpec], input: Shape) -> Result<(Vec<Layer>, usize), NnError> {
    if input.is_empty() {
        return Err(NnError::InvalidConfig(format!("input shape {input} is empty")));
    }
    let mut layers = Vec::with_capacity(specs.len());
    let mut shape = input;
    let mut off = 0;
    for (i, spec) in specs.iter().enumerate() {
        let out = spec.output_shape(i, shape)?;
        let (w_len, b_len) = spec.param_counts(shape);
        layers.push(Layer {
            spec: spec.clone(),
            input: shape,
            output: out,
            w_off: off,
            w_len,
            b_off: off + w_len,
            b_len,
        });
        off += w_len + b_len;
        shape = out;
    }
    Ok((layers, off))
}

fn check_finite(params: &[f64]) -> Result<(), NnError> {
    match params.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NnError::NonFiniteParameter { index }),
        None => Ok(()),
    }
}

impl Network {
    /// Binds `specs` to `input`, checks every adjacent shape, and draws the
    /// weights. Each layer draws from its own stream, so inserting a layer
    /// leaves the others' initial weights alone.
    pub fn new(specs: &[LayerSpec], input: Shape, init: Init, seed: u64) -> Result<Self, NnError> {
        if let Init::Gaussian { std } = init {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(NnError::InvalidConfig(format!("init std {std}")));
            }
        }
        let (layers, n) = bind(specs, input)?;
        let mut params = vec![0.0; n];
        for (i, layer) in layers.iter().enumerate() {
            if layer.w_len == 0 {
                continue;
            }
            let mut r = rng::substream(seed, "init-layer", i as u64);
            let w = &mut params[layer.w_off..layer.w_off + layer.w_len];
            match init {
                Init::Gaussian { std } => {
                    if std > 0.0 {
                        let d = Normal::new(0.0, std).expect("validated std");
                        w.iter_mut().for_each(|v| *v = d.sample(&mut r));
                    }
                }
                Init::FanInUniform => {
                    let a = (3.0 / layer.spec.fan_in(layer.input) as f64).sqrt();
                    w.iter_mut().for_each(|v| *v = r.random_range(-a..a));
                }
            }
        }
        Ok(Network {
            input,
            layers,
            params,
            seed,
            generation: next_generation(),
        })
    }

    /// Rebuilds a network from stored parts, e.g. a checkpoint.
    pub fn from_parts(
        specs: &[LayerSpec],
        input: Shape,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let (layers, n) = bind(specs, input)?;
        if params.len() != n {
            return Err(NnError::GradientLength {
                expected: n,
                got: params.len(),
            });
        }
        check_finite(&params)?;
        Ok(Network {
            input,
            layers,
            params,
            seed,
            generation: next_generation(),
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    /// Shape after the last layer; the input shape for an empty network.
    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    /// Output shape of layer `index`.
    pub fn layer_shape(&self, index: usize) -> Result<Shape, NnError> {
        self.layers
            .get(index)
            .map(|l| l.output)
            .ok_or(NnError::LayerIndex {
                index,
                layers: self.layers.len(),
            })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replaces every parameter. Tapes recorded before the call become stale.
    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::GradientLength {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        check_finite(params)?;
        self.params.copy_from_slice(params);
        self.generation = next_generation();
        Ok(())
    }

    /// `(weights, biases)` of layer `index`; empty for parameter-free layers.
    pub fn layer_params(&self, index: usize) -> Result<(&[f64], &[f64]), NnError> {
        let l = self.layers.get(index).ok_or(NnError::LayerIndex {
            index,
            layers: self.layers.len(),
        })?;
        Ok((
            &self.params[l.w_off..l.w_off + l.w_len],
            &self.params[l.b_off..l.b_off + l.b_len],
        ))
    }

    /// Overwrites the weights and biases of layer `index`.
    pub fn set_layer_params(&mut self, index: usize, w: &[f64], b: &[f64]) -> Result<(), NnError> {
        let l = self.layers.get(index).ok_or(NnError::LayerIndex {
            index,
            layers: self.layers.len(),
        })?;
        if w.len() != l.w_len || b.len() != l.b_len {
            return Err(NnError::GradientLength {
                expected: l.w_len + l.b_len,
                got: w.len() + b.len(),
            });
        }
        check_finite(w)?;
        check_finite(b)?;
        let (wo, bo) = (l.w_off, l.b_off);
        self.params[wo..wo + w.len()].copy_from_slice(w);
        self.params[bo..bo + b.len()].copy_from_slice(b);
        self.generation = next_generation();
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input.len() {
            return Err(NnError::InputShape {
                expected: self.input.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn run(&self, x: &[f64], upto: usize, mut keep: impl FnMut(&[f64])) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for (i, layer) in self.layers[..upto].iter().enumerate() {
            keep(&cur);
            cur = layer.forward(&self.params, &cur);
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite {
                    index: i,
                    layer: layer.spec.name(),
                });
            }
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64], _mode: Mode) -> Result<(Vec<f64>, Tape), NnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let out = self.run(x, self.layers.len(), |a| activations.push(a.to_vec()))?;
        activations.push(out.clone());
        Ok((
            out,
            Tape {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.run(x, self.layers.len(), |_| {})
    }

    /// Output of layer `index` (0-based).
    pub fn activation_at(&self, x: &[f64], index: usize) -> Result<Vec<f64>, NnError> {
        if index >= self.layers.len() {
            return Err(NnError::LayerIndex {
                index,
                layers: self.layers.len(),
            });
        }
        self.run(x, index + 1, |_| {})
    }

    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<Gradients, NnError> {
        if tape.generation != self.generation || tape.activations.len() != self.layers.len() + 1 {
            return Err(NnError::StaleTape);
        }
        let out_len = self.output_shape().len();
        if output_grad.len() != out_len {
            return Err(NnError::GradientLength {
                expected: out_len,
                got: output_grad.len(),
            });
        }
        let mut dparams = vec![0.0; self.params.len()];
        let mut g = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(&self.params, &tape.activations[i], &g, &mut dparams);
        }
        Ok(Gradients {
            params: dparams,
            input: g,
        })
    }
}

/// Activations of layer `layer` for every image, one row per image.
pub fn encode(net: &Network, images: &[Field], layer: usize) -> Result<Vec<Vec<f64>>, NnError> {
    images
        .iter()
        .map(|im| net.activation_at(im.data(), layer))
        .collect()
}

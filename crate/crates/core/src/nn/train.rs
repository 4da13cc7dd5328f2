use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{optimizer_update, OptimizerConfig, OptimizerState};
use super::{Init, LayerSpec, Mode, Network, NnError, Shape};
use crate::image::Field;
use crate::losses::LossFunction;
use crate::rng;

fn default_patience() -> usize {
    1
}
fn default_max_epochs() -> usize {
    50
}

/// Stop once the validation metric has failed to improve on its best value
/// for more than `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            patience: default_patience(),
            max_epochs: default_max_epochs(),
        }
    }
}

/// Everything about a training run other than architecture, loss and data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub init: Init,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub stop: EarlyStop,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example objective over the epoch's mini-batches, each
    /// measured before its update.
    pub train_loss: f64,
    pub valid_metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_valid_metric: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initial ones.
    pub best_epoch: usize,
    pub stop_epoch: usize,
    /// Full-pass training objective of the returned parameters.
    pub final_train_loss: f64,
    pub wall_seconds: f64,
}

/// Equality over everything except `wall_seconds`.
impl PartialEq for TrainReport {
    fn eq(&self, o: &Self) -> bool {
        self.initial_train_loss.to_bits() == o.initial_train_loss.to_bits()
            && self.initial_valid_metric.to_bits() == o.initial_valid_metric.to_bits()
            && self.epochs.len() == o.epochs.len()
            && self.epochs.iter().zip(&o.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.valid_metric.to_bits() == b.valid_metric.to_bits()
            })
            && self.best_epoch == o.best_epoch
            && self.stop_epoch == o.stop_epoch
            && self.final_train_loss.to_bits() == o.final_train_loss.to_bits()
    }
}

impl TrainReport {
    pub fn best_valid_metric(&self) -> f64 {
        if self.best_epoch == 0 {
            self.initial_valid_metric
        } else {
            self.epochs[self.best_epoch - 1].valid_metric
        }
    }
}

/// A model whose parameters live in one flat vector.
pub(crate) trait Objective {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]) -> Result<(), NnError>;
    fn train_len(&self) -> usize;
    /// Mean objective and mean parameter gradient over training examples
    /// `idx`. `step` numbers the optimizer step, for noise streams.
    fn batch(&self, idx: &[usize], step: u64) -> Result<(f64, Vec<f64>), NnError>;
    /// Mean objective over the whole training set, noise-free.
    fn train_metric(&self) -> Result<f64, NnError>;
    fn valid_metric(&self) -> Result<f64, NnError>;
}

pub(crate) fn fit<O: Objective>(
    obj: &mut O,
    opt: &OptimizerConfig,
    stop: &EarlyStop,
    seed: u64,
    on_epoch: &mut dyn FnMut(usize, &O) -> Result<(), NnError>,
) -> Result<TrainReport, NnError> {
    opt.validate()?;
    if stop.max_epochs == 0 {
        return Err(NnError::InvalidConfig("max_epochs must be at least 1".into()));
    }
    let n = obj.train_len();
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    let start = Instant::now();
    let diverged = |epoch: usize, value: f64| NnError::Diverged { epoch, value };

    let initial_train_loss = obj.train_metric()?;
    if !initial_train_loss.is_finite() {
        return Err(diverged(0, initial_train_loss));
    }
    let initial_valid_metric = obj.valid_metric()?;
    let mut best = initial_valid_metric;
    let mut best_params = obj.params();
    let mut best_epoch = 0;
    let mut since = 0;
    let mut params = best_params.clone();
    let mut state = OptimizerState::new(params.len());
    let mut epochs = Vec::new();
    let mut stop_epoch = 0;

    for epoch in 1..=stop.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(opt.batch_size) {
            let (loss, grad) = obj.batch(batch, state.step)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, loss));
            }
            total += loss * batch.len() as f64;
            optimizer_update(&mut params, &grad, &mut state, opt).map_err(|e| match e {
                NnError::NonFiniteGradient { .. } => diverged(epoch, loss),
                e => e,
            })?;
            obj.set_params(&params).map_err(|e| match e {
                NnError::NonFiniteParameter { .. } => diverged(epoch, f64::NAN),
                e => e,
            })?;
        }
        let train_loss = total / n as f64;
        let valid_metric = obj.valid_metric()?;
        if !valid_metric.is_finite() {
            return Err(diverged(epoch, valid_metric));
        }
        on_epoch(epoch, obj)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_metric,
        });
        stop_epoch = epoch;
        if valid_metric < best {
            best = valid_metric;
            best_params.clone_from(&params);
            best_epoch = epoch;
            since = 0;
        } else {
            since += 1;
            if since > stop.patience {
                break;
            }
        }
    }
    obj.set_params(&best_params)?;
    let final_train_loss = obj.train_metric()?;
    Ok(TrainReport {
        initial_train_loss,
        initial_valid_metric,
        epochs,
        best_epoch,
        stop_epoch,
        final_train_loss,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

struct Autoencoder<'a> {
    net: Network,
    loss: &'a LossFunction,
    train: &'a [Field],
    valid: &'a [Field],
}

impl Autoencoder<'_> {
    fn reconstruct(&self, x: &Field) -> Result<Field, NnError> {
        let out = self.net.predict(x.data())?;
        Ok(Field::new(x.height(), x.width(), out)?)
    }

    fn mean_loss(&self, set: &[Field]) -> Result<f64, NnError> {
        let mut total = 0.0;
        for x in set {
            total += self.loss.value(x, &self.reconstruct(x)?)?;
        }
        Ok(total / set.len() as f64 / self.loss.scale)
    }
}

impl Objective for Autoencoder<'_> {
    fn params(&self) -> Vec<f64> {
        self.net.params().to_vec()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<(), NnError> {
        self.net.set_params(p)
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn batch(&self, idx: &[usize], _step: u64) -> Result<(f64, Vec<f64>), NnError> {
        let k = 1.0 / (idx.len() as f64 * self.loss.scale);
        let mut grad = vec![0.0; self.net.num_params()];
        let mut total = 0.0;
        for &i in idx {
            let x = &self.train[i];
            let (out, tape) = self.net.forward(x.data(), Mode::Train)?;
            let xhat = Field::new(x.height(), x.width(), out)?;
            let (v, g) = self.loss.value_and_grad(x, &xhat)?;
            total += v;
            let gp = self.net.backward(&tape, g.data())?;
            grad.iter_mut().zip(&gp.params).for_each(|(a, b)| *a += k * b);
        }
        Ok((total * k, grad))
    }

    fn train_metric(&self) -> Result<f64, NnError> {
        self.mean_loss(self.train)
    }

    fn valid_metric(&self) -> Result<f64, NnError> {
        self.mean_loss(self.valid)
    }
}

/// Checks that every image has the same dimensions and returns them.
pub(crate) fn common_dims(sets: &[&[Field]]) -> Result<(usize, usize), NnError> {
    let first = sets
        .iter()
        .find_map(|s| s.first())
        .ok_or(NnError::EmptyDataset)?;
    let dims = first.dims();
    for s in sets {
        if s.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if let Some(x) = s.iter().find(|x| x.dims() != dims) {
            return Err(NnError::InvalidConfig(format!(
                "images differ in size: {:?} vs {:?}",
                x.dims(),
                dims
            )));
        }
    }
    Ok(dims)
}

pub fn train_autoencoder(
    arch: &[LayerSpec],
    loss: &LossFunction,
    train: &[Field],
    valid: &[Field],
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport), NnError> {
    train_autoencoder_with(arch, loss, train, valid, cfg, &mut |_, _| Ok(()))
}

/// [`train_autoencoder`] with a hook called after every epoch's validation.
pub fn train_autoencoder_with(
    arch: &[LayerSpec],
    loss: &LossFunction,
    train: &[Field],
    valid: &[Field],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &Network) -> Result<(), NnError>,
) -> Result<(Network, TrainReport), NnError> {
    let (h, w) = common_dims(&[train, valid])?;
    let input = Shape::new(1, h, w);
    let net = Network::new(arch, input, cfg.init, cfg.seed)?;
    if net.output_shape().len() != input.len() {
        return Err(NnError::InvalidConfig(format!(
            "network maps {input} to {}, expected {h}x{w} pixels back",
            net.output_shape()
        )));
    }
    let mut ae = Autoencoder {
        net,
        loss,
        train,
        valid,
    };
    let report = fit(&mut ae, &cfg.optimizer, &cfg.stop, cfg.seed, &mut |e, a| {
        on_epoch(e, &a.net)
    })?;
    Ok((ae.net, report))
}

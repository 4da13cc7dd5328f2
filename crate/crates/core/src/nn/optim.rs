use serde::{Deserialize, Serialize};

use super::{Network, NnError};

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd {
                lr,
                momentum,
                weight_decay,
            },
            batch_size: default_batch(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam {
                lr,
                beta1: default_beta1(),
                beta2: default_beta2(),
                eps: default_eps(),
            },
            batch_size: default_batch(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let lr = match self.kind {
            OptimizerKind::Sgd {
                lr,
                momentum,
                weight_decay,
            } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad(format!("momentum {momentum} outside [0,1)"));
                }
                if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
                    return bad(format!("weight_decay {weight_decay}"));
                }
                lr
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0..1.0).contains(&b) {
                        return bad(format!("{name} {b} outside [0,1)"));
                    }
                }
                if !(eps > 0.0 && eps.is_finite()) {
                    return bad(format!("eps {eps}"));
                }
                lr
            }
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return bad(format!("learning rate {lr} must be positive"));
        }
        Ok(())
    }
}

/// Moment buffers. SGD keeps its velocity in `m`; `v` is only used by Adam.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        OptimizerState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One update of a flat parameter vector.
pub fn optimizer_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<(), NnError> {
    if grads.len() != params.len() {
        return Err(NnError::GradientLength {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient { index });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        *state = OptimizerState::new(params.len());
    }
    state.step += 1;
    match cfg.kind {
        OptimizerKind::Sgd {
            lr,
            momentum,
            weight_decay,
        } => {
            for ((w, &g), v) in params.iter_mut().zip(grads).zip(&mut state.m) {
                *v = momentum * *v - lr * (g + weight_decay * *w);
                *w += *v;
            }
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((w, &g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(&mut state.m)
                .zip(&mut state.v)
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// [`optimizer_update`] applied to a network's parameters.
pub fn optimizer_step(
    net: &mut Network,
    grads: &[f64],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<(), NnError> {
    let mut p = net.params().to_vec();
    optimizer_update(&mut p, grads, state, cfg)?;
    net.set_params(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_step() {
        let cfg = OptimizerConfig::sgd(0.1, 0.0, 0.0);
        let mut p = [1.0];
        let mut s = OptimizerState::default();
        optimizer_update(&mut p, &[0.5], &mut s, &cfg).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for cfg in [OptimizerConfig::sgd(0.1, 0.9, 0.0), OptimizerConfig::adam(1e-3)] {
            let mut p = [1.0, -2.0, 0.5];
            let mut s = OptimizerState::default();
            for _ in 0..3 {
                optimizer_update(&mut p, &[0.0; 3], &mut s, &cfg).unwrap();
            }
            assert_eq!(p, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn momentum_and_weight_decay() {
        let cfg = OptimizerConfig::sgd(0.1, 0.5, 0.2);
        let mut p = [1.0];
        let mut s = OptimizerState::default();
        optimizer_update(&mut p, &[1.0], &mut s, &cfg).unwrap();
        // v = -0.1 * (1 + 0.2)
        assert!((p[0] - (1.0 - 0.12)).abs() < 1e-15);
        optimizer_update(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let v2 = 0.5 * -0.12 - 0.1 * (1.0 + 0.2 * 0.88);
        assert!((p[0] - (0.88 + v2)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_minus_lr() {
        let lr = 1e-3;
        let cfg = OptimizerConfig::adam(lr);
        let mut p = [0.0; 4];
        let mut s = OptimizerState::default();
        optimizer_update(&mut p, &[1.0; 4], &mut s, &cfg).unwrap();
        let want = -lr / (1.0 + 1e-8);
        for v in p {
            assert!((v - want).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let cfg = OptimizerConfig::adam(1e-3);
        let mut p = [0.0; 2];
        let mut s = OptimizerState::default();
        let r = optimizer_update(&mut p, &[0.0, f64::NAN], &mut s, &cfg);
        assert!(matches!(r, Err(NnError::NonFiniteGradient { index: 1 })));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::sgd(0.0, 0.0, 0.0).validate().is_err());
        assert!(OptimizerConfig::sgd(0.1, 1.0, 0.0).validate().is_err());
        assert!(OptimizerConfig::adam(1e-3).with_batch_size(0).validate().is_err());
        assert!(OptimizerConfig::adam(1e-3).validate().is_ok());
    }
}

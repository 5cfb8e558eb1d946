//! Loss, reverse pass, optimiser and the full-batch training loop.

mod adam;
pub mod adjoint;
mod backward;
mod loss;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use backward::{backward, GradientBundle};
pub use loss::{accuracy, cross_entropy};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GreadError, Result};
use crate::graph::LabeledGraph;
use crate::model::{forward, forward_traced, Mode, ModelConfig, ModelParams, PreparedGraph};

/// Consecutive non-finite losses that abort a run.
pub const MAX_NON_FINITE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            weight_decay: 5e-4,
            max_epochs: 200,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GreadError::config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GreadError::config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Parameters from the epoch with the highest validation accuracy; the
    /// initial parameters when no epoch ran (`best_epoch == 0`).
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy of `best_params`.
    pub test_acc: f64,
    pub history: Vec<EpochRecord>,
}

/// Dropout seed for one epoch, derived from the run seed.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Names of tensors the optimiser must leave alone under `cfg`.
pub fn frozen_tensors(cfg: &ModelConfig) -> Vec<&'static str> {
    if cfg.train_coefficients {
        Vec::new()
    } else {
        vec!["alpha", "beta"]
    }
}

/// One forward/backward pass; returns the loss and its gradient.
pub fn loss_and_grad(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &PreparedGraph,
    seed: u64,
) -> Result<(f64, GradientBundle)> {
    let (logits, cache) = forward_traced(cfg, params, data, Mode::Train { seed }, true)?;
    let d = data.data();
    let (loss, dlogits) = cross_entropy(&logits, &d.labels, &d.split.train)?;
    if !loss.is_finite() {
        return Err(GreadError::Divergence {
            step: 0,
            context: " (non-finite training loss)".into(),
        });
    }
    Ok((loss, backward(cfg, params, &cache, &dlogits)?))
}

/// Eval-mode accuracy on the validation and test masks.
pub fn evaluate(cfg: &ModelConfig, params: &ModelParams, data: &PreparedGraph) -> Result<(f64, f64)> {
    let (logits, _) = forward(cfg, params, data, Mode::Eval)?;
    let pred = logits.argmax_rows();
    let d = data.data();
    Ok((
        accuracy(&pred, &d.labels, &d.split.val),
        accuracy(&pred, &d.labels, &d.split.test),
    ))
}

pub fn fit(mcfg: &ModelConfig, tcfg: &TrainConfig, data: LabeledGraph) -> Result<FitResult> {
    fit_prepared(mcfg, tcfg, &PreparedGraph::new(data)?)
}

/// Full-batch training with best-validation model selection.
///
/// Ties in validation accuracy keep the earlier epoch. A forward pass that
/// diverges counts as a non-finite loss; three in a row abort the run.
pub fn fit_prepared(mcfg: &ModelConfig, tcfg: &TrainConfig, data: &PreparedGraph) -> Result<FitResult> {
    mcfg.validate()?;
    tcfg.validate()?;
    let d = data.data();
    if !d.split.train.iter().any(|&m| m) {
        return Err(GreadError::data("training split is empty"));
    }
    if !d.split.val.iter().any(|&m| m) {
        return Err(GreadError::data("validation split is empty"));
    }
    if mcfg.n_classes < d.n_classes {
        return Err(GreadError::config(format!(
            "model has {} classes, data has {}",
            mcfg.n_classes, d.n_classes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params = ModelParams::init(mcfg, d.n_features(), d.n_nodes(), &mut rng)?;
    let mut adam = Adam::from_config(tcfg).freeze(&frozen_tensors(mcfg));

    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut history = Vec::with_capacity(tcfg.max_epochs);
    let mut non_finite = 0;
    for epoch in 1..=tcfg.max_epochs {
        let train_loss = match loss_and_grad(mcfg, &params, data, epoch_seed(tcfg.seed, epoch)) {
            Ok((loss, grads)) => {
                non_finite = 0;
                adam.step(&mut params, &grads);
                loss
            }
            Err(e) if e.is_divergence() => {
                non_finite += 1;
                if non_finite >= MAX_NON_FINITE {
                    return Err(GreadError::Divergence {
                        step: epoch,
                        context: format!(" ({MAX_NON_FINITE} consecutive non-finite losses ending at epoch {epoch})"),
                    });
                }
                f64::NAN
            }
            Err(e) => return Err(e),
        };

        let (val_acc, test_acc) = match evaluate(mcfg, &params, data) {
            Ok(acc) => acc,
            Err(e) if e.is_divergence() => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_acc,
            test_acc,
        });
        if best.as_ref().is_none_or(|b| val_acc > b.1) {
            best = Some((epoch, val_acc, params.clone()));
        }
        if let (Some(p), Some(b)) = (tcfg.patience, best.as_ref()) {
            if epoch - b.0 >= p {
                break;
            }
        }
    }

    let (best_epoch, best_val_acc, best_params, test_acc) = match best {
        Some((epoch, val, p)) => (epoch, val, p, history[epoch - 1].test_acc),
        None => {
            let (val, test) = evaluate(mcfg, &params, data).unwrap_or((0.0, 0.0));
            (0, val, params, test)
        }
    };
    Ok(FitResult {
        best_params,
        best_epoch,
        best_val_acc,
        test_acc,
        history,
    })
}

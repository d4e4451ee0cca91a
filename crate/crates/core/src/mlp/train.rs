use serde::{Deserialize, Serialize};

use super::network::MlpNetwork;
use super::rprop::{RpropConfig, RpropState};
use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::preprocess::Range;
use crate::textfmt::{join, LineReader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    /// Hidden layer widths; a single linear output unit is appended.
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation MSE.
    pub patience: Option<usize>,
    /// Independent initializations; the one with the lowest validation MSE is kept.
    pub restarts: usize,
    pub rprop: RpropConfig,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 5, 1],
            max_epochs: 10_000,
            patience: Some(500),
            restarts: 3,
            rprop: RpropConfig::default(),
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn layout(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("mlp max_epochs must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("mlp restarts must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("mlp hidden layers must be non-empty".into()));
        }
        self.rprop.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training MSE (normalized targets) at the weights the epoch started from.
    pub train_mse: f64,
    /// Validation MSE after the epoch's update.
    pub val_mse: f64,
    pub step_min: f64,
    pub step_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Validation MSE of the initial weights.
    pub initial_val_mse: f64,
    /// 0 when no epoch improved on the initial weights.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
    /// Index of the kept initialization.
    #[serde(default)]
    pub restart: usize,
    /// Best validation MSE reached by each initialization.
    #[serde(default)]
    pub restart_val_mse: Vec<f64>,
}

/// Network plus the target scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: MlpNetwork,
    pub target: Range,
}

impl MlpModel {
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        Ok(self.target.denormalize(self.net.forward(x)?))
    }

    pub fn predict(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        Ok(self
            .net
            .predict(set)?
            .into_iter()
            .map(|v| self.target.denormalize(v))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tireforce-mlp 1\n");
        s.push_str(&format!("target {}\n", join(&[self.target.min, self.target.max])));
        self.net.write_text(&mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        Self::read(&mut r)
    }

    pub(crate) fn read(r: &mut LineReader<'_>) -> Result<Self> {
        let v = r.expect("tireforce-mlp")?;
        if v != ["1"] {
            return Err(Error::format(format!("unsupported mlp format version {v:?}")));
        }
        let t = r.expect_floats("target")?;
        let [min, max] = t[..] else {
            return Err(Error::format("target needs min and max"));
        };
        let net = MlpNetwork::read_text(r)?;
        Ok(Self {
            net,
            target: Range { min, max },
        })
    }
}

/// Target scaling to [0, 1]; a constant target gets unit width.
pub(crate) fn target_range(targets: &[f64]) -> Range {
    let r = Range::of(targets.iter().copied());
    if r.is_degenerate() {
        Range { min: r.min, max: r.min + 1.0 }
    } else {
        r
    }
}

/// Seed of initialization `r`; the first uses the configured seed itself.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        crate::rng::derive(seed, &format!("mlp restart {r}"))
    }
}

/// Full-batch Rprop on MSE. Returns the weights with the lowest validation
/// MSE seen over all initializations, including the initial weights.
pub fn train_mlp(
    train: &FeatureSet,
    validation: &FeatureSet,
    cfg: &MlpConfig,
) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if train.dim() != validation.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: validation.dim(),
        });
    }
    let target = target_range(train.targets());
    let scale = |s: &FeatureSet| s.with_targets(s.targets().iter().map(|&y| target.normalize(y)).collect());
    let (tr, va) = (scale(train), scale(validation));

    let mut kept: Option<(MlpNetwork, TrainHistory)> = None;
    let mut scores = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let (net, mut history) = fit_once(&tr, &va, cfg, restart_seed(cfg.seed, r))?;
        scores.push(history.best_val_mse);
        history.restart = r;
        if kept.as_ref().is_none_or(|(_, h)| history.best_val_mse < h.best_val_mse) {
            kept = Some((net, history));
        }
    }
    let (best, mut history) = kept.expect("at least one restart");
    history.restart_val_mse = scores;
    log::debug!(
        "mlp: kept initialization {} of {}, best validation MSE {:.3e} at epoch {}",
        history.restart + 1,
        cfg.restarts,
        history.best_val_mse,
        history.best_epoch
    );
    Ok((MlpModel { net: best, target }, history))
}

fn fit_once(tr: &FeatureSet, va: &FeatureSet, cfg: &MlpConfig, seed: u64) -> Result<(MlpNetwork, TrainHistory)> {
    let mut net = MlpNetwork::init(&cfg.layout(tr.dim()), seed)?;
    let mut state = RpropState::new(net.params().len(), cfg.rprop);
    let initial = net.mse(va)?;
    let mut history = TrainHistory {
        initial_val_mse: initial,
        best_val_mse: initial,
        ..TrainHistory::default()
    };
    let mut best = net.clone();
    for epoch in 1..=cfg.max_epochs {
        let (loss, grad) = net.loss_and_gradient(tr)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        state.step(net.params_mut(), &grad);
        let val = net.mse(va)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let steps = state.step_sizes();
        history.epochs.push(EpochRecord {
            epoch,
            train_mse: loss,
            val_mse: val,
            step_min: steps.iter().copied().fold(f64::INFINITY, f64::min),
            step_max: steps.iter().copied().fold(0.0, f64::max),
        });
        if val < history.best_val_mse {
            history.best_val_mse = val;
            history.best_epoch = epoch;
            best.params_mut().copy_from_slice(net.params());
        } else if cfg.patience.is_some_and(|p| epoch - history.best_epoch >= p) {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok((best, history))
}

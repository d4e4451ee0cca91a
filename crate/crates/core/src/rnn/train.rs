use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Activation, RnnNetwork};
use super::sequence::{SequenceMode, SequenceSet};
use crate::error::{Error, Result};
use crate::mlp::target_range;
use crate::preprocess::Range;
use crate::rng::stream_rng;
use crate::textfmt::{join, parse, LineReader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RnnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub sequence_mode: SequenceMode,
    /// Revolutions per sequence in `revolutions` mode.
    pub sequence_length: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Gradient norm ceiling per minibatch; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without a new best validation MSE.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 5],
            activation: Activation::Tanh,
            sequence_mode: SequenceMode::Revolutions,
            sequence_length: 10,
            batch_size: 50,
            epochs: 10_000,
            learning_rate: 0.001,
            clip_norm: Some(5.0),
            patience: None,
            seed: 0,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.hidden.is_empty()
            && !self.hidden.contains(&0)
            && self.sequence_length > 0
            && self.batch_size > 0
            && self.epochs > 0
            && self.learning_rate > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid rnn settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnEpochRecord {
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    pub val_mse: f64,
    pub clipped_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RnnHistory {
    pub epochs: Vec<RnnEpochRecord>,
    pub initial_val_mse: f64,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub net: RnnNetwork,
    pub target: Range,
    pub sequence_mode: SequenceMode,
    pub sequence_length: usize,
}

impl RnnModel {
    pub fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        if set.seq_len() != self.sequence_length {
            return Err(Error::DimensionMismatch {
                expected: self.sequence_length,
                actual: set.seq_len(),
            });
        }
        Ok(self
            .net
            .predict(set)?
            .into_iter()
            .map(|v| self.target.denormalize(v))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tireforce-rnn 1\n");
        s.push_str(&format!("sequence_mode {}\n", self.sequence_mode.as_str()));
        s.push_str(&format!("sequence_length {}\n", self.sequence_length));
        s.push_str(&format!("target {}\n", join(&[self.target.min, self.target.max])));
        self.net.write_text(&mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(&mut LineReader::new(text))
    }

    pub(crate) fn read(r: &mut LineReader<'_>) -> Result<Self> {
        if r.expect("tireforce-rnn")? != ["1"] {
            return Err(Error::format("unsupported rnn format version"));
        }
        let mode = match r.expect("sequence_mode")?[..] {
            [m] => SequenceMode::parse(m).map_err(|e| Error::format(e.to_string()))?,
            _ => return Err(Error::format("bad sequence_mode line")),
        };
        let len: usize = match r.expect("sequence_length")?[..] {
            [n] => parse(n)?,
            _ => return Err(Error::format("bad sequence_length line")),
        };
        let t = r.expect_floats("target")?;
        let [min, max] = t[..] else {
            return Err(Error::format("target needs min and max"));
        };
        Ok(Self {
            net: RnnNetwork::read_text(r)?,
            target: Range { min, max },
            sequence_mode: mode,
            sequence_length: len,
        })
    }
}

/// Minibatch SGD with backpropagation through time. The minibatch order is
/// reshuffled every epoch from stream 1 of `cfg.seed`. Returns the weights
/// with the lowest validation MSE seen.
pub fn train_rnn(
    train: &SequenceSet,
    validation: &SequenceSet,
    cfg: &RnnConfig,
) -> Result<(RnnModel, RnnHistory)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::invalid("training and validation sequences must be non-empty"));
    }
    if train.step_dim() != validation.step_dim() || train.seq_len() != validation.seq_len() {
        return Err(Error::DimensionMismatch {
            expected: train.step_dim() * train.seq_len(),
            actual: validation.step_dim() * validation.seq_len(),
        });
    }
    let target = target_range(train.targets());
    let scale = |s: &SequenceSet| s.with_targets(s.targets().iter().map(|&y| target.normalize(y)).collect());
    let (tr, va) = (scale(train), scale(validation));
    let mut net = RnnNetwork::init(train.step_dim(), &cfg.hidden, cfg.activation, cfg.seed)?;
    let mut shuffle_rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..tr.len()).collect();

    let initial = net.mse(&va)?;
    let mut history = RnnHistory {
        initial_val_mse: initial,
        best_val_mse: initial,
        ..RnnHistory::default()
    };
    let mut best = net.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut batches, mut clipped) = (0.0, 0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grad) = net.loss_and_gradient(&tr, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if let Some(c) = cfg.clip_norm.filter(|&c| norm > c) {
                grad.iter_mut().for_each(|g| *g *= c / norm);
                clipped += 1;
            }
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            loss_sum += loss;
            batches += 1;
        }
        if clipped > 0 {
            log::debug!("rnn epoch {epoch}: clipped {clipped} of {batches} minibatch gradients");
        }
        let val = net.mse(&va)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.epochs.push(RnnEpochRecord {
            epoch,
            train_mse: loss_sum / batches as f64,
            val_mse: val,
            clipped_batches: clipped,
        });
        if val < history.best_val_mse {
            history.best_val_mse = val;
            history.best_epoch = epoch;
            best.params_mut().copy_from_slice(net.params());
        } else if cfg.patience.is_some_and(|p| epoch - history.best_epoch >= p) {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let total_clipped: usize = history.epochs.iter().map(|e| e.clipped_batches).sum();
    if total_clipped > 0 {
        log::info!("rnn: gradient clipping triggered on {total_clipped} minibatches");
    }
    Ok((
        RnnModel {
            net: best,
            target,
            sequence_mode: cfg.sequence_mode,
            sequence_length: train.seq_len(),
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> SequenceSet {
        let mut rng = stream_rng(seed, 0);
        let mut s = SequenceSet::new(2, 4);
        for _ in 0..n {
            let steps: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            s.push(&steps, f(&steps), Default::default()).unwrap();
        }
        s
    }

    #[test]
    fn constant_target_is_fit() {
        let tr = toy(40, 1, |_| -250.0);
        let va = toy(10, 2, |_| -250.0);
        for activation in [Activation::Logistic, Activation::Tanh] {
            let cfg = RnnConfig { epochs: 1000, learning_rate: 0.1, activation, ..RnnConfig::default() };
            let (m, h) = train_rnn(&tr, &va, &cfg).unwrap();
            assert!(h.best_val_mse < 1e-4 && h.best_val_mse < 1e-3 * h.initial_val_mse, "{activation:?}: {h:?}");
            for p in m.predict(&va).unwrap() {
                assert!((p + 250.0).abs() < 1.0);
            }
        }
    }

    #[test]
    fn learns_last_step_signal() {
        let f = |s: &[f64]| s[6] + 0.5 * s[4];
        let tr = toy(300, 3, f);
        let va = toy(60, 4, f);
        let cfg = RnnConfig {
            epochs: 300,
            learning_rate: 0.5,
            batch_size: 20,
            activation: Activation::Tanh,
            ..RnnConfig::default()
        };
        let (_, h) = train_rnn(&tr, &va, &cfg).unwrap();
        assert!(h.best_val_mse < 0.1 * h.initial_val_mse, "{} vs {}", h.best_val_mse, h.initial_val_mse);
    }

    #[test]
    fn seeded_including_shuffle() {
        let tr = toy(60, 5, |s| s[0]);
        let va = toy(10, 6, |s| s[0]);
        let cfg = RnnConfig { epochs: 5, seed: 3, ..RnnConfig::default() };
        let a = train_rnn(&tr, &va, &cfg).unwrap();
        assert_eq!(a, train_rnn(&tr, &va, &cfg).unwrap());
        assert_ne!(a.0, train_rnn(&tr, &va, &RnnConfig { seed: 4, ..cfg }).unwrap().0);
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let tr = toy(20, 7, |s| 1e3 * s[1]);
        let va = toy(5, 8, |s| s[1]);
        let cfg = RnnConfig {
            epochs: 50,
            learning_rate: 1e300,
            clip_norm: None,
            ..RnnConfig::default()
        };
        assert!(matches!(train_rnn(&tr, &va, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn model_round_trip() {
        let tr = toy(30, 9, |s| s[2] * 40.0);
        let va = toy(8, 10, |s| s[2] * 40.0);
        let (m, _) = train_rnn(&tr, &va, &RnnConfig { epochs: 3, ..RnnConfig::default() }).unwrap();
        let back = RnnModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&va).unwrap(), m.predict(&va).unwrap());
    }
}

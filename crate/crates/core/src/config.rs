//! Run configuration: one flat TOML table, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MethodConfigs, NrmsFormula, SplitSpec};
use crate::forest::ForestConfig;
use crate::mlp::{MlpConfig, RpropConfig};
use crate::preprocess::{PreprocessConfig, SpanMode, WindowSpec};
use crate::rng::derive;
use crate::rnn::{Activation, RnnConfig, SequenceMode};
use crate::simulator::{NoiseLevel, SignalModel, TestSchedule, TireParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `noise_level` is a signal-to-noise ratio in dB.
    SnrDb,
    /// `noise_level` is an absolute standard deviation in m/s^2.
    Std,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random draw in every command derives from it.
    pub seed: u64,
    /// Root of all artifacts.
    pub out_dir: PathBuf,
    /// Read raw CSVs from here instead of `<out_dir>/raw`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,

    /// Override every schedule entry's revolution count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revolutions: Option<usize>,
    /// Keep only this many schedule entries, spread evenly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<usize>,
    pub noise_kind: NoiseKind,
    pub noise_level: f64,

    pub unloaded_radius_m: f64,
    pub effective_rolling_radius_m: f64,
    pub inner_liner_radius_m: f64,
    pub vertical_stiffness_n_per_m: f64,
    pub cornering_stiffness_n_per_rad: f64,
    pub longitudinal_stiffness_n: f64,
    pub friction_coefficient: f64,
    pub sample_rate_hz: f64,
    pub patch_center_deg: f64,
    pub center_jitter_deg: f64,

    pub cutoff_hz: f64,
    pub filter_order: usize,
    pub window_span_deg: f64,
    pub grid_step_deg: f64,
    pub span_mode: SpanMode,
    pub prominence_mads: f64,
    pub speed_compensation: bool,

    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub nrms_formula: NrmsFormula,

    /// Hidden layer widths; a linear output unit is always appended.
    pub mlp_hidden: Vec<usize>,
    pub mlp_max_epochs: usize,
    /// Epoch cap used inside cross-validation folds.
    pub mlp_cv_max_epochs: usize,
    /// 0 disables early stopping.
    pub mlp_patience: usize,
    /// Independent initializations, best validation MSE kept.
    pub mlp_restarts: usize,
    pub rprop_eta_plus: f64,
    pub rprop_eta_minus: f64,
    pub rprop_delta0: f64,
    pub rprop_delta_min: f64,
    pub rprop_delta_max: f64,

    pub forest_n_trees: usize,
    /// 0 means ceil(p / 3).
    pub forest_mtry: usize,
    pub forest_min_leaf: usize,
    /// 0 means unlimited.
    pub forest_max_depth: usize,
    pub forest_bootstrap: bool,

    pub rnn_hidden: Vec<usize>,
    pub rnn_activation: Activation,
    pub rnn_sequence_mode: SequenceMode,
    pub rnn_sequence_length: usize,
    pub rnn_batch_size: usize,
    pub rnn_epochs: usize,
    pub rnn_learning_rate: f64,
    /// 0 disables clipping.
    pub rnn_clip_norm: f64,
    /// 0 disables early stopping.
    pub rnn_patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tire = TireParams::default();
        let signal = SignalModel::default();
        let pre = PreprocessConfig::default();
        let split = SplitSpec::default();
        let mlp = MlpConfig::default();
        let forest = ForestConfig::default();
        let rnn = RnnConfig::default();
        Self {
            seed: 1,
            out_dir: PathBuf::from("tireforce-run"),
            dataset_dir: None,
            revolutions: None,
            conditions: None,
            noise_kind: NoiseKind::SnrDb,
            noise_level: 20.0,
            unloaded_radius_m: tire.unloaded_radius,
            effective_rolling_radius_m: tire.effective_rolling_radius,
            inner_liner_radius_m: tire.inner_liner_radius,
            vertical_stiffness_n_per_m: tire.vertical_stiffness,
            cornering_stiffness_n_per_rad: tire.cornering_stiffness,
            longitudinal_stiffness_n: tire.longitudinal_stiffness,
            friction_coefficient: tire.friction_coefficient,
            sample_rate_hz: signal.sample_rate,
            patch_center_deg: signal.patch_center_deg,
            center_jitter_deg: signal.center_jitter_deg,
            cutoff_hz: pre.cutoff_hz,
            filter_order: pre.filter_order,
            window_span_deg: pre.window.span_deg,
            grid_step_deg: pre.window.step_deg,
            span_mode: pre.window.mode,
            prominence_mads: pre.prominence_mads,
            speed_compensation: pre.speed_compensation,
            train_fraction: split.train,
            validation_fraction: split.validation,
            test_fraction: split.test,
            cv_folds: 10,
            nrms_formula: NrmsFormula::Rms,
            mlp_hidden: mlp.hidden,
            mlp_max_epochs: mlp.max_epochs,
            mlp_cv_max_epochs: 3000,
            mlp_patience: mlp.patience.unwrap_or(0),
            mlp_restarts: mlp.restarts,
            rprop_eta_plus: mlp.rprop.eta_plus,
            rprop_eta_minus: mlp.rprop.eta_minus,
            rprop_delta0: mlp.rprop.delta0,
            rprop_delta_min: mlp.rprop.delta_min,
            rprop_delta_max: mlp.rprop.delta_max,
            forest_n_trees: forest.n_trees,
            forest_mtry: forest.mtry.unwrap_or(0),
            forest_min_leaf: forest.min_leaf,
            forest_max_depth: forest.max_depth.unwrap_or(0),
            forest_bootstrap: forest.bootstrap,
            rnn_hidden: rnn.hidden,
            rnn_activation: rnn.activation,
            rnn_sequence_mode: rnn.sequence_mode,
            rnn_sequence_length: rnn.sequence_length,
            rnn_batch_size: rnn.batch_size,
            rnn_epochs: rnn.epochs,
            rnn_learning_rate: rnn.learning_rate,
            rnn_clip_norm: rnn.clip_norm.unwrap_or(0.0),
            rnn_patience: rnn.patience.unwrap_or(0),
        }
    }
}

fn nonzero(v: usize) -> Option<usize> {
    (v > 0).then_some(v)
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` after applying `key = value` overrides on top of it.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, raw) in overrides {
            let value = parse_value(raw)?;
            table.insert(key.clone(), value);
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().map_err(config_err)?.validate().map_err(config_err)?;
        self.tire().validate().map_err(config_err)?;
        let pre = self.preprocess();
        pre.window.validate().map_err(config_err)?;
        if !(pre.cutoff_hz > 0.0 && pre.cutoff_hz < self.sample_rate_hz / 2.0) || pre.filter_order == 0 {
            return Err(Error::Config(format!(
                "cutoff {} Hz must lie in (0, {}) and filter_order be >= 1",
                pre.cutoff_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        self.split_spec().validate()?;
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        let m = self.method_configs();
        m.mlp.validate()?;
        m.forest.validate()?;
        m.rnn.validate()?;
        if self.mlp_cv_max_epochs == 0 {
            return Err(Error::Config("mlp_cv_max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseLevel {
        match self.noise_kind {
            NoiseKind::SnrDb => NoiseLevel::SnrDb(self.noise_level),
            NoiseKind::Std => NoiseLevel::Std(self.noise_level),
        }
    }

    pub fn schedule(&self) -> Result<TestSchedule> {
        let mut s = TestSchedule::full(derive(self.seed, "simulator"), self.noise());
        if let Some(c) = self.conditions {
            s = s.thinned(c)?;
        }
        if let Some(r) = self.revolutions {
            s = s.with_revolutions(r)?;
        }
        Ok(s)
    }

    pub fn tire(&self) -> TireParams {
        TireParams {
            unloaded_radius: self.unloaded_radius_m,
            effective_rolling_radius: self.effective_rolling_radius_m,
            vertical_stiffness: self.vertical_stiffness_n_per_m,
            cornering_stiffness: self.cornering_stiffness_n_per_rad,
            longitudinal_stiffness: self.longitudinal_stiffness_n,
            friction_coefficient: self.friction_coefficient,
            inner_liner_radius: self.inner_liner_radius_m,
        }
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel {
            sample_rate: self.sample_rate_hz,
            patch_center_deg: self.patch_center_deg,
            center_jitter_deg: self.center_jitter_deg,
            ..SignalModel::default()
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            cutoff_hz: self.cutoff_hz,
            filter_order: self.filter_order,
            window: WindowSpec {
                span_deg: self.window_span_deg,
                step_deg: self.grid_step_deg,
                mode: self.span_mode,
            },
            prominence_mads: self.prominence_mads,
            speed_compensation: self.speed_compensation,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.train_fraction,
            validation: self.validation_fraction,
            test: self.test_fraction,
            seed: derive(self.seed, "split"),
        }
    }

    /// Seed handed to every trainer outside cross-validation.
    pub fn trainer_seed(&self) -> u64 {
        derive(self.seed, "train")
    }

    pub fn method_configs(&self) -> MethodConfigs {
        MethodConfigs {
            mlp: MlpConfig {
                hidden: self.mlp_hidden.clone(),
                max_epochs: self.mlp_max_epochs,
                patience: nonzero(self.mlp_patience),
                restarts: self.mlp_restarts,
                rprop: RpropConfig {
                    eta_plus: self.rprop_eta_plus,
                    eta_minus: self.rprop_eta_minus,
                    delta0: self.rprop_delta0,
                    delta_min: self.rprop_delta_min,
                    delta_max: self.rprop_delta_max,
                },
                seed: 0,
            },
            forest: ForestConfig {
                n_trees: self.forest_n_trees,
                mtry: nonzero(self.forest_mtry),
                min_leaf: self.forest_min_leaf,
                max_depth: nonzero(self.forest_max_depth),
                bootstrap: self.forest_bootstrap,
                seed: 0,
            },
            rnn: RnnConfig {
                hidden: self.rnn_hidden.clone(),
                activation: self.rnn_activation,
                sequence_mode: self.rnn_sequence_mode,
                sequence_length: self.rnn_sequence_length,
                batch_size: self.rnn_batch_size,
                epochs: self.rnn_epochs,
                learning_rate: self.rnn_learning_rate,
                clip_norm: (self.rnn_clip_norm > 0.0).then_some(self.rnn_clip_norm),
                patience: nonzero(self.rnn_patience),
                seed: 0,
            },
        }
    }

    /// Learner settings inside cross-validation folds.
    pub fn cv_method_configs(&self) -> MethodConfigs {
        let mut m = self.method_configs();
        m.mlp.max_epochs = m.mlp.max_epochs.min(self.mlp_cv_max_epochs);
        m
    }
}

/// A command-line value: TOML syntax when it parses as such, otherwise a
/// bare string.
fn parse_value(raw: &str) -> Result<toml::Value> {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => Ok(t.remove("v").expect("key present")),
        Err(_) if !raw.is_empty() => Ok(toml::Value::String(raw.to_string())),
        Err(e) => Err(Error::Config(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["train_fraction = 0.9", "forest_n_trees = 0", "cutoff_hz = 6000.0", "conditions = 0", "grid_step_deg = 0.3"] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn overrides_apply_on_top() {
        let cfg = RunConfig::from_toml_with(
            "seed = 4\nforest_n_trees = 20",
            &[
                ("forest_n_trees".into(), "150".into()),
                ("rnn_activation".into(), "tanh".into()),
                ("mlp_hidden".into(), "[10, 5]".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        let m = cfg.method_configs();
        assert_eq!(m.forest.n_trees, 150);
        assert_eq!(m.rnn.activation, Activation::Tanh);
        assert_eq!(m.mlp.hidden, vec![10, 5]);
        assert!(RunConfig::from_toml_with("", &[("forest_n_trees".into(), "many".into())]).is_err());
    }

    #[test]
    fn method_defaults_carry_through() {
        let m = RunConfig::default().method_configs();
        assert_eq!(m.mlp, MlpConfig::default());
        assert_eq!(m.forest, ForestConfig::default());
        assert_eq!(m.rnn, RnnConfig::default());
        assert_eq!(RunConfig::default().preprocess(), PreprocessConfig::default());
        assert_eq!(RunConfig::default().tire(), TireParams::default());
    }

    #[test]
    fn schedule_overrides() {
        let cfg = RunConfig { revolutions: Some(10), conditions: Some(1), ..RunConfig::default() };
        assert_eq!(cfg.schedule().unwrap().total_revolutions(), 10);
        assert_eq!(RunConfig::default().schedule().unwrap().total_revolutions(), 6833);
    }
}

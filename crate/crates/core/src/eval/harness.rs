use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{nrms_with, BoxStats, NrmsFormula};
use super::split::{fold_parts, indices_of, kfold_indices, Part};
use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestConfig};
use crate::mlp::{train_mlp, MlpConfig, MlpModel, TrainHistory};
use crate::preprocess::{apply_minmax, build_features, fit_minmax, Axis, MinMaxStats, PatchWindow, Range};
use crate::rnn::{build_angular_sequences, build_sequences, train_rnn, RnnConfig, RnnHistory, RnnModel, SequenceMode, SequenceSet};
use crate::textfmt::{join, LineReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mlp,
    Forest,
    Rnn,
    /// Returns the measured label; a harness check, not an estimator.
    Oracle,
}

impl Method {
    pub const LEARNERS: [Method; 3] = [Method::Mlp, Method::Forest, Method::Rnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mlp => "mlp",
            Method::Forest => "forest",
            Method::Rnn => "rnn",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Method::Mlp),
            "forest" | "rf" => Ok(Method::Forest),
            "rnn" => Ok(Method::Rnn),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::invalid(format!("unknown method '{other}' (mlp, forest, rnn, oracle)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MethodConfigs {
    pub mlp: MlpConfig,
    pub forest: ForestConfig,
    pub rnn: RnnConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learned {
    Mlp(MlpModel),
    Forest(Forest),
    Rnn(RnnModel),
    Oracle,
}

/// A trained model together with the feature scaling it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub method: Method,
    pub axis: Axis,
    pub stats: MinMaxStats,
    pub learned: Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum History {
    Mlp(TrainHistory),
    Rnn(RnnHistory),
    None,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub estimator: Estimator,
    pub history: History,
    pub train_size: usize,
    pub validation_size: usize,
    pub seconds: f64,
}

/// Normalized feature rows for `rows` of the window list.
pub fn feature_set(windows: &[PatchWindow], rows: &[usize], stats: &MinMaxStats, axis: Axis) -> Result<FeatureSet> {
    let dim = axis.channels().len() * windows.first().map_or(0, PatchWindow::points);
    let mut set = FeatureSet::new(dim);
    for &r in rows {
        let w = apply_minmax(&windows[r], stats);
        set.push(&build_features(&w, axis), axis.target(&w.label), w.id)?;
    }
    Ok(set)
}

fn sequences(all: &FeatureSet, axis: Axis, mode: SequenceMode, len: usize) -> Result<SequenceSet> {
    match mode {
        SequenceMode::Revolutions => build_sequences(all, len),
        SequenceMode::AngularSteps => build_angular_sequences(all, axis.channels().len()),
    }
}

/// Row index of the revolution each sequence ends on.
fn sequence_rows(seqs: &SequenceSet, all: &FeatureSet) -> Vec<usize> {
    let by_trace: HashMap<u64, usize> = all.ids().iter().enumerate().map(|(i, id)| (id.trace, i)).collect();
    seqs.ids().iter().map(|id| by_trace[&id.trace]).collect()
}

/// Fits feature scaling on the training windows and trains `method` on the
/// `Train` rows, using the `Validation` rows for model selection where the
/// learner has any. `seed` replaces the learner config's seed.
pub fn train_estimator(
    method: Method,
    axis: Axis,
    windows: &[PatchWindow],
    parts: &[Part],
    cfgs: &MethodConfigs,
    seed: u64,
) -> Result<TrainOutcome> {
    if windows.len() != parts.len() {
        return Err(Error::DimensionMismatch {
            expected: windows.len(),
            actual: parts.len(),
        });
    }
    let train_rows = indices_of(parts, Part::Train);
    let val_rows = indices_of(parts, Part::Validation);
    let train_windows: Vec<PatchWindow> = train_rows.iter().map(|&i| windows[i].clone()).collect();
    let stats = fit_minmax(&train_windows, axis.channels())?;
    let start = Instant::now();
    let (learned, history, train_size, validation_size) = match method {
        Method::Mlp => {
            let tr = feature_set(windows, &train_rows, &stats, axis)?;
            let va = feature_set(windows, &val_rows, &stats, axis)?;
            let cfg = MlpConfig { seed, ..cfgs.mlp.clone() };
            let (m, h) = train_mlp(&tr, &va, &cfg)?;
            (Learned::Mlp(m), History::Mlp(h), tr.len(), va.len())
        }
        Method::Forest => {
            let tr = feature_set(windows, &train_rows, &stats, axis)?;
            let cfg = ForestConfig { seed, ..cfgs.forest.clone() };
            (Learned::Forest(train_forest(&tr, &cfg)?), History::None, tr.len(), 0)
        }
        Method::Rnn => {
            let all_rows: Vec<usize> = (0..windows.len()).collect();
            let all = feature_set(windows, &all_rows, &stats, axis)?;
            let cfg = RnnConfig { seed, ..cfgs.rnn.clone() };
            let seqs = sequences(&all, axis, cfg.sequence_mode, cfg.sequence_length)?;
            let ends = sequence_rows(&seqs, &all);
            let pick = |p: Part| -> Vec<usize> { (0..seqs.len()).filter(|&s| parts[ends[s]] == p).collect() };
            let (tr, va) = (seqs.subset(&pick(Part::Train)), seqs.subset(&pick(Part::Validation)));
            let (m, h) = train_rnn(&tr, &va, &cfg)?;
            (Learned::Rnn(m), History::Rnn(h), tr.len(), va.len())
        }
        Method::Oracle => (Learned::Oracle, History::None, train_rows.len(), val_rows.len()),
    };
    Ok(TrainOutcome {
        estimator: Estimator {
            method,
            axis,
            stats,
            learned,
        },
        history,
        train_size,
        validation_size,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl Estimator {
    /// Estimates for the requested rows, as `(row, force)` in ascending row
    /// order. The recurrent model skips rows without a full history.
    pub fn predict_rows(&self, windows: &[PatchWindow], rows: &[usize]) -> Result<Vec<(usize, f64)>> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        match &self.learned {
            Learned::Oracle => Ok(rows.iter().map(|&r| (r, self.axis.target(&windows[r].label))).collect()),
            Learned::Mlp(m) => {
                let set = feature_set(windows, &rows, &self.stats, self.axis)?;
                Ok(rows.into_iter().zip(m.predict(&set)?).collect())
            }
            Learned::Forest(f) => {
                let set = feature_set(windows, &rows, &self.stats, self.axis)?;
                Ok(rows.into_iter().zip(f.predict(&set)?).collect())
            }
            Learned::Rnn(m) => {
                let all_rows: Vec<usize> = (0..windows.len()).collect();
                let all = feature_set(windows, &all_rows, &self.stats, self.axis)?;
                let seqs = sequences(&all, self.axis, m.sequence_mode, m.sequence_length)?;
                let ends = sequence_rows(&seqs, &all);
                let wanted: HashSet<usize> = rows.into_iter().collect();
                let keep: Vec<usize> = (0..seqs.len()).filter(|&s| wanted.contains(&ends[s])).collect();
                let pred = m.predict(&seqs.subset(&keep))?;
                let mut out: Vec<(usize, f64)> = keep.iter().map(|&s| ends[s]).zip(pred).collect();
                out.sort_by_key(|p| p.0);
                Ok(out)
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tireforce-model 1\n");
        let _ = writeln!(s, "method {}", self.method);
        let _ = writeln!(s, "axis {}", self.axis);
        s.push_str(&self.stats.to_text());
        s.push_str("end_header\n");
        match &self.learned {
            Learned::Mlp(m) => s.push_str(&m.to_text()),
            Learned::Forest(f) => s.push_str(&f.to_text()),
            Learned::Rnn(m) => s.push_str(&m.to_text()),
            Learned::Oracle => {}
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        if r.expect("tireforce-model")? != ["1"] {
            return Err(Error::format("unsupported model file version"));
        }
        let one = |v: Vec<&str>| -> Result<String> {
            match v[..] {
                [x] => Ok(x.to_string()),
                _ => Err(Error::format("expected one value")),
            }
        };
        let method = Method::parse(&one(r.expect("method")?)?).map_err(|e| Error::format(e.to_string()))?;
        let axis = Axis::parse(&one(r.expect("axis")?)?).map_err(|e| Error::format(e.to_string()))?;
        let mut stats_text = String::new();
        for c in ["ax", "ay", "az"] {
            let _ = writeln!(stats_text, "{c} {}", join(&r.expect(c)?));
        }
        let stats = MinMaxStats::from_text(&stats_text)?;
        r.expect("end_header")?;
        let learned = match method {
            Method::Mlp => Learned::Mlp(MlpModel::read(&mut r)?),
            Method::Forest => Learned::Forest(Forest::read(&mut r)?),
            Method::Rnn => Learned::Rnn(RnnModel::read(&mut r)?),
            Method::Oracle => Learned::Oracle,
        };
        Ok(Self {
            method,
            axis,
            stats,
            learned,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub sample_index: usize,
    pub measured_n: f64,
    pub estimated_n: f64,
}

/// One method's result on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub axis: Axis,
    pub nrms_pct: Option<f64>,
    pub error: Option<String>,
    pub train_size: usize,
    pub test_size: usize,
    /// Label range seen in training.
    pub train_label_range: Option<Range>,
    #[serde(skip)]
    pub train_seconds: f64,
    #[serde(skip)]
    pub series: Vec<PlotPoint>,
}

/// Scores the estimator on the `Test` rows.
pub fn evaluate_estimator(
    est: &Estimator,
    windows: &[PatchWindow],
    parts: &[Part],
    formula: NrmsFormula,
) -> Result<(f64, Vec<PlotPoint>)> {
    let test = indices_of(parts, Part::Test);
    let pred = est.predict_rows(windows, &test)?;
    let series: Vec<PlotPoint> = pred
        .iter()
        .map(|&(r, e)| PlotPoint {
            sample_index: r,
            measured_n: est.axis.target(&windows[r].label),
            estimated_n: e,
        })
        .collect();
    let measured: Vec<f64> = series.iter().map(|p| p.measured_n).collect();
    let estimated: Vec<f64> = series.iter().map(|p| p.estimated_n).collect();
    Ok((nrms_with(formula, &measured, &estimated)?, series))
}

/// Trains and scores every method on the same split. A method that fails
/// (for example by diverging) is reported with its error and the others
/// still run.
pub fn compare_methods(
    axis: Axis,
    windows: &[PatchWindow],
    parts: &[Part],
    methods: &[Method],
    cfgs: &MethodConfigs,
    seed: u64,
    formula: NrmsFormula,
) -> Vec<(MethodReport, Option<TrainOutcome>)> {
    let train_labels = Range::of(
        indices_of(parts, Part::Train)
            .into_iter()
            .map(|i| axis.target(&windows[i].label)),
    );
    methods
        .iter()
        .map(|&method| {
            let mut report = MethodReport {
                method,
                axis,
                nrms_pct: None,
                error: None,
                train_size: 0,
                test_size: 0,
                train_label_range: Some(train_labels),
                train_seconds: 0.0,
                series: Vec::new(),
            };
            let outcome = train_estimator(method, axis, windows, parts, cfgs, seed)
                .and_then(|o| evaluate_estimator(&o.estimator, windows, parts, formula).map(|r| (o, r)));
            match outcome {
                Ok((o, (score, series))) => {
                    log::info!("{axis} {method}: NRMS {score:.3}% ({} train, {:.1} s)", o.train_size, o.seconds);
                    report.nrms_pct = Some(score);
                    report.train_size = o.train_size;
                    report.test_size = series.len();
                    report.train_seconds = o.seconds;
                    report.series = series;
                    (report, Some(o))
                }
                Err(e) => {
                    log::warn!("{axis} {method}: {e}");
                    report.error = Some(e.to_string());
                    (report, None)
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_scores: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub summary: BoxStats,
    #[serde(skip)]
    pub test_folds: Vec<Vec<usize>>,
}

/// `k`-fold cross-validation over `n` samples. Fold membership comes from
/// `seed`; fold `i` is scored by `score(i, test_rows, seed + i)`.
pub fn kfold_cv(
    n: usize,
    k: usize,
    seed: u64,
    mut score: impl FnMut(usize, &[usize], u64) -> Result<f64>,
) -> Result<CvResult> {
    let folds = kfold_indices(n, k, seed)?;
    let mut scores = Vec::with_capacity(k);
    for (i, fold) in folds.iter().enumerate() {
        scores.push(score(i, fold, seed.wrapping_add(i as u64))?);
    }
    Ok(CvResult {
        summary: BoxStats::of(&scores)?,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        fold_scores: scores,
        test_folds: folds,
    })
}

/// Validation share of the non-test samples in a fold, matching the
/// 70/15 train/validation proportion.
pub const CV_VALIDATION_FRACTION: f64 = 0.15 / 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub axis: Axis,
    pub method: Method,
    pub k: usize,
    #[serde(flatten)]
    pub result: CvResult,
}

pub fn crossval_method(
    axis: Axis,
    windows: &[PatchWindow],
    method: Method,
    cfgs: &MethodConfigs,
    k: usize,
    seed: u64,
    formula: NrmsFormula,
) -> Result<CvReport> {
    let result = kfold_cv(windows.len(), k, seed, |i, fold, fold_seed| {
        let parts = fold_parts(windows.len(), fold, CV_VALIDATION_FRACTION, fold_seed)?;
        let o = train_estimator(method, axis, windows, &parts, cfgs, fold_seed)?;
        let (score, _) = evaluate_estimator(&o.estimator, windows, &parts, formula)?;
        log::info!("{axis} {method} fold {}/{k}: NRMS {score:.3}%", i + 1);
        Ok(score)
    })?;
    Ok(CvReport { axis, method, k, result })
}

/// Everything `evaluate`, `crossval` and `compare` emit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub nrms_formula: NrmsFormula,
    pub methods: Vec<MethodReport>,
    pub crossval: Vec<CvReport>,
}

impl EvalReport {
    /// Wall-clock training seconds keyed by `axis/method`; kept out of the
    /// serialized report so reports stay reproducible.
    pub fn timings(&self) -> BTreeMap<String, f64> {
        self.methods
            .iter()
            .map(|m| (format!("{}/{}", m.axis, m.method), m.train_seconds))
            .collect()
    }

    pub fn nrms(&self, axis: Axis, method: Method) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.axis == axis && m.method == method)
            .and_then(|m| m.nrms_pct)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ForceLabel, OperatingCondition, TraceId};

    /// Windows whose ax channel encodes the target linearly.
    fn windows(n: usize) -> Vec<PatchWindow> {
        (0..n)
            .map(|i| {
                let load = 2000.0 + 40.0 * i as f64;
                let ramp: Vec<f64> = (0..6).map(|k| load * (k as f64 + 1.0) * 1e-3).collect();
                PatchWindow {
                    id: TraceId { trace: i as u64, entry: i / 12, revolution: i % 12 },
                    angles: (0..6).map(|k| k as f64).collect(),
                    ay: ramp.iter().map(|v| v * 0.5 + (i % 3) as f64).collect(),
                    az: ramp.iter().map(|v| -v).collect(),
                    ax: ramp,
                    condition: OperatingCondition::free_rolling(30.0, load),
                    label: ForceLabel { fx: 0.0, fy: 0.0, fz: load },
                }
            })
            .collect()
    }

    #[test]
    fn oracle_method_scores_zero() {
        let w = windows(40);
        let parts = super::super::split::split_dataset(40, &Default::default()).unwrap();
        let r = compare_methods(Axis::Fz, &w, &parts, &[Method::Oracle], &MethodConfigs::default(), 0, NrmsFormula::Rms);
        assert_eq!(r[0].0.nrms_pct, Some(0.0));
        assert_eq!(r[0].0.test_size, 6);
    }

    #[test]
    fn perfect_predictor_gives_zero_in_every_fold() {
        let w = windows(30);
        let cv = kfold_cv(30, 10, 5, |_, fold, _| {
            let m: Vec<f64> = fold.iter().map(|&i| w[i].label.fz).collect();
            nrms_with(NrmsFormula::Rms, &m, &m)
        })
        .unwrap();
        assert_eq!(cv.fold_scores, vec![0.0; 10]);
        let loo = kfold_cv(7, 7, 1, |_, _, _| Ok(1.0)).unwrap();
        assert_eq!(loo.fold_scores.len(), 7);
        assert!(kfold_cv(5, 6, 1, |_, _, _| Ok(0.0)).is_err());
    }

    #[test]
    fn fold_seeds_follow_master_seed() {
        let mut seen = Vec::new();
        kfold_cv(20, 4, 100, |i, _, s| {
            seen.push((i, s));
            Ok(0.0)
        })
        .unwrap();
        assert_eq!(seen, vec![(0, 100), (1, 101), (2, 102), (3, 103)]);
    }

    #[test]
    fn estimators_round_trip_through_text() {
        let w = windows(60);
        let parts = super::super::split::split_dataset(60, &Default::default()).unwrap();
        let mut cfgs = MethodConfigs::default();
        cfgs.mlp.max_epochs = 30;
        cfgs.forest.n_trees = 3;
        cfgs.rnn.epochs = 2;
        cfgs.rnn.sequence_length = 3;
        for method in [Method::Mlp, Method::Forest, Method::Rnn, Method::Oracle] {
            let o = train_estimator(method, Axis::Fz, &w, &parts, &cfgs, 3).unwrap();
            let back = Estimator::from_text(&o.estimator.to_text()).unwrap();
            assert_eq!(back, o.estimator);
            let test = indices_of(&parts, Part::Test);
            let a = o.estimator.predict_rows(&w, &test).unwrap();
            let b = back.predict_rows(&w, &test).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn comparison_uses_identical_training_rows() {
        let w = windows(60);
        let parts = super::super::split::split_dataset(60, &Default::default()).unwrap();
        let mut cfgs = MethodConfigs::default();
        cfgs.mlp.max_epochs = 20;
        cfgs.forest.n_trees = 2;
        let r = compare_methods(Axis::Fz, &w, &parts, &[Method::Mlp, Method::Forest], &cfgs, 1, NrmsFormula::Rms);
        assert_eq!(r[0].0.train_size, r[1].0.train_size);
        assert_eq!(r[0].0.series.iter().map(|p| p.sample_index).collect::<Vec<_>>(),
                   r[1].0.series.iter().map(|p| p.sample_index).collect::<Vec<_>>());
    }

    #[test]
    fn failing_method_is_recorded_and_others_continue() {
        let w = windows(40);
        let parts = super::super::split::split_dataset(40, &Default::default()).unwrap();
        let mut cfgs = MethodConfigs::default();
        cfgs.rnn.learning_rate = 1e300;
        cfgs.rnn.clip_norm = None;
        cfgs.rnn.epochs = 20;
        cfgs.rnn.sequence_length = 2;
        let r = compare_methods(Axis::Fz, &w, &parts, &[Method::Rnn, Method::Oracle], &cfgs, 1, NrmsFormula::Rms);
        assert!(r[0].0.error.as_deref().unwrap().contains("diverged"));
        assert_eq!(r[1].0.nrms_pct, Some(0.0));
    }
}

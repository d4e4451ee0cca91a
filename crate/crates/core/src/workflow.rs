//! File-based pipeline behind the command-line tool.
//!
//! ```text
//! <out_dir>/raw/        samples.csv traces.csv manifest.json
//! <out_dir>/processed/  {fx,fy,fz}.csv stats_{axis}.txt skipped.csv manifest.json
//! <out_dir>/models/     {method}_{axis}.model  .history.csv  .json  .timing.json
//! <out_dir>/reports/{evaluate,crossval,compare}/
//! ```
//!
//! Every artifact except the `*timing.json` files is a pure function of the
//! configuration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    compare_methods, crossval_method, evaluate_estimator, indices_of, split_dataset, CvReport, EvalReport, Estimator,
    History, Learned, Method, MethodReport, Part, PlotPoint, TrainOutcome,
};
use crate::preprocess::{fit_minmax, process_trace, Axis, Butterworth, PatchWindow, Range};
use crate::simulator::{
    simulate_schedule, Channel, ForceLabel, ManeuverKind, OperatingCondition, RevolutionTrace, TraceId,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Artifact locations for one configuration.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
    raw: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.out_dir.clone(),
            raw: cfg.dataset_dir.clone().unwrap_or_else(|| cfg.out_dir.join("raw")),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn raw(&self) -> &Path {
        &self.raw
    }

    pub fn processed(&self) -> PathBuf {
        self.root.join("processed")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports(&self, command: &str) -> PathBuf {
        self.root.join("reports").join(command)
    }

    pub fn processed_csv(&self, axis: Axis) -> PathBuf {
        self.processed().join(format!("{axis}.csv"))
    }

    pub fn model_file(&self, method: Method, axis: Axis) -> PathBuf {
        self.models().join(format!("{method}_{axis}.model"))
    }
}

/// Writer that hashes everything passing through it.
struct HashingWriter<W: Write> {
    inner: W,
    hash: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<HashingWriter<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(HashingWriter {
        inner: BufWriter::with_capacity(1 << 20, f),
        hash: Sha256::new(),
    })
}

fn finish(path: &Path, mut w: HashingWriter<BufWriter<File>>) -> Result<String> {
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(crate::hex(&w.hash.finalize()))
}

fn write_text(path: &Path, text: &str) -> Result<String> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(crate::hex(&Sha256::digest(text.as_bytes())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::with_capacity(1 << 20, f))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut r = open(path)?;
    let mut hash = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hash.update(&buf[..n]);
    }
    Ok(crate::hex(&hash.finalize()))
}

/// SHA-256 of every file under `dir` keyed by relative path, leaving out
/// wall-clock timing files.
pub fn artifact_checksums(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(base, &p, out)?;
            } else if !is_timing_file(&p) {
                let rel = p.strip_prefix(base).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                out.insert(rel, file_digest(&p)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

pub fn is_timing_file(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with("timing.json") || n == "timings.json")
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: u64,
    pub entry: usize,
    pub revolution: usize,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub maneuver: ManeuverKind,
    pub velocity_kph: f64,
    pub pressure_kpa: f64,
    pub vertical_load_n: f64,
    pub slip_deg: f64,
    pub torque_nm: f64,
    pub fx_n: f64,
    pub fy_n: f64,
    pub fz_n: f64,
}

impl TraceRecord {
    fn of(t: &RevolutionTrace) -> Self {
        Self {
            trace_id: t.id.trace,
            entry: t.id.entry,
            revolution: t.id.revolution,
            sample_rate_hz: t.sample_rate,
            n_samples: t.len(),
            maneuver: t.condition.maneuver,
            velocity_kph: t.condition.velocity,
            pressure_kpa: t.condition.inflation_pressure,
            vertical_load_n: t.condition.vertical_load,
            slip_deg: t.condition.slip_angle,
            torque_nm: t.condition.drive_torque,
            fx_n: t.label.fx,
            fy_n: t.label.fy,
            fz_n: t.label.fz,
        }
    }

    fn id(&self) -> TraceId {
        TraceId {
            trace: self.trace_id,
            entry: self.entry,
            revolution: self.revolution,
        }
    }

    fn condition(&self) -> OperatingCondition {
        OperatingCondition {
            velocity: self.velocity_kph,
            inflation_pressure: self.pressure_kpa,
            vertical_load: self.vertical_load_n,
            slip_angle: self.slip_deg,
            drive_torque: self.torque_nm,
            maneuver: self.maneuver,
        }
    }

    fn label(&self) -> ForceLabel {
        ForceLabel {
            fx: self.fx_n,
            fy: self.fy_n,
            fz: self.fz_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub schedule_digest: String,
    pub schedule_entries: usize,
    pub traces: usize,
    pub samples: usize,
    /// Revolutions carrying information for each axis.
    pub usable: BTreeMap<Axis, usize>,
    pub files: BTreeMap<String, String>,
}

/// Simulates the configured schedule into `samples.csv` (one row per
/// sample) and `traces.csv` (one row per revolution).
pub fn cmd_generate(cfg: &RunConfig) -> Result<RawManifest> {
    let layout = Layout::new(cfg);
    let schedule = cfg.schedule().map_err(|e| Error::Config(e.to_string()))?;
    let (tire, model) = (cfg.tire(), cfg.signal_model());
    create_dir(layout.raw())?;
    let samples_path = layout.raw().join("samples.csv");
    let traces_path = layout.raw().join("traces.csv");
    let mut samples = create(&samples_path)?;
    let mut traces = csv::Writer::from_writer(create(&traces_path)?);
    let io = |e: std::io::Error| Error::io(&samples_path, e);
    writeln!(samples, "trace_id,angle_deg,ax,ay,az").map_err(io)?;
    let mut usable: BTreeMap<Axis, usize> = Axis::ALL.iter().map(|&a| (a, 0)).collect();
    let (mut n_traces, mut n_samples) = (0, 0);
    for trace in simulate_schedule(&schedule, &tire, &model)? {
        let t = trace?;
        for i in 0..t.len() {
            writeln!(samples, "{},{},{},{},{}", t.id.trace, t.angles[i], t.ax[i], t.ay[i], t.az[i]).map_err(io)?;
        }
        traces.serialize(TraceRecord::of(&t))?;
        for (axis, n) in usable.iter_mut() {
            *n += usize::from(axis.uses(t.condition.maneuver));
        }
        n_traces += 1;
        n_samples += t.len();
    }
    let traces = traces.into_inner().map_err(|e| Error::io(&traces_path, e.into_error()))?;
    let files = BTreeMap::from([
        ("samples.csv".to_string(), finish(&samples_path, samples)?),
        ("traces.csv".to_string(), finish(&traces_path, traces)?),
    ]);
    let manifest = RawManifest {
        tool: "tireforce".into(),
        version: TOOL_VERSION.into(),
        seed: cfg.seed,
        schedule_digest: schedule.digest(),
        schedule_entries: schedule.entries.len(),
        traces: n_traces,
        samples: n_samples,
        usable,
        files,
    };
    write_json(&layout.raw().join("manifest.json"), &manifest)?;
    log::info!("generated {n_traces} traces, {n_samples} samples in {}", layout.raw().display());
    Ok(manifest)
}

/// Reads raw traces back in file order.
pub fn read_raw_traces(dir: &Path) -> Result<RawTraceReader> {
    let traces_path = dir.join("traces.csv");
    let mut rdr = csv::Reader::from_reader(open(&traces_path)?);
    let records: Vec<TraceRecord> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let samples_path = dir.join("samples.csv");
    let mut lines = open(&samples_path)?.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "trace_id,angle_deg,ax,ay,az" => {}
        Some(Err(e)) => return Err(Error::io(&samples_path, e)),
        _ => return Err(Error::invalid(format!("{}: unexpected header", samples_path.display()))),
    }
    Ok(RawTraceReader {
        records: records.into_iter(),
        lines,
        path: samples_path,
        line_no: 1,
    })
}

/// Streams [`RevolutionTrace`]s out of `traces.csv` and `samples.csv`.
pub struct RawTraceReader {
    records: std::vec::IntoIter<TraceRecord>,
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    line_no: usize,
}

impl RawTraceReader {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.len() == 0
    }

    fn read_trace(&mut self, rec: TraceRecord) -> Result<RevolutionTrace> {
        let mut t = RevolutionTrace {
            id: rec.id(),
            sample_rate: rec.sample_rate_hz,
            angles: Vec::with_capacity(rec.n_samples),
            ax: Vec::with_capacity(rec.n_samples),
            ay: Vec::with_capacity(rec.n_samples),
            az: Vec::with_capacity(rec.n_samples),
            condition: rec.condition(),
            label: rec.label(),
            reference: None,
        };
        for _ in 0..rec.n_samples {
            self.line_no += 1;
            let line = match self.lines.next() {
                Some(l) => l.map_err(|e| Error::io(&self.path, e))?,
                None => return Err(self.bad("file ends inside a trace")),
            };
            let mut f = line.split(',');
            let id: u64 = self.field(f.next())?;
            if id != rec.trace_id {
                return Err(self.bad(&format!("expected trace {}, found {id}", rec.trace_id)));
            }
            t.angles.push(self.field(f.next())?);
            t.ax.push(self.field(f.next())?);
            t.ay.push(self.field(f.next())?);
            t.az.push(self.field(f.next())?);
            if f.next().is_some() {
                return Err(self.bad("too many fields"));
            }
        }
        Ok(t)
    }

    fn field<T: std::str::FromStr>(&self, s: Option<&str>) -> Result<T> {
        let s = s.ok_or_else(|| self.bad("missing field"))?;
        s.trim().parse().map_err(|_| self.bad(&format!("bad value '{s}'")))
    }

    fn bad(&self, msg: &str) -> Error {
        Error::invalid(format!("{} line {}: {msg}", self.path.display(), self.line_no))
    }
}

impl Iterator for RawTraceReader {
    type Item = Result<RevolutionTrace>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        Some(self.read_trace(rec))
    }
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub windows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub label_range: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedManifest {
    pub version: String,
    pub seed: u64,
    pub raw_files: BTreeMap<String, String>,
    pub traces: usize,
    pub skipped: usize,
    pub grid_points: usize,
    pub axes: BTreeMap<Axis, AxisSummary>,
    pub files: BTreeMap<String, String>,
}

fn processed_header(points: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "trace_id",
        "entry",
        "revolution",
        "split",
        "maneuver",
        "velocity_kph",
        "pressure_kpa",
        "vertical_load_n",
        "slip_deg",
        "torque_nm",
        "fx_n",
        "fy_n",
        "fz_n",
        "center_deg",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in Channel::ALL {
        h.extend((0..points).map(|i| format!("{}_{i:03}", c.as_str())));
    }
    h
}

const META_COLUMNS: usize = 14;

fn write_processed(path: &Path, windows: &[PatchWindow], parts: &[Part]) -> Result<String> {
    let points = windows.first().map_or(0, PatchWindow::points);
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(processed_header(points))?;
    let mut row: Vec<String> = Vec::with_capacity(META_COLUMNS + 3 * points);
    for (win, part) in windows.iter().zip(parts) {
        row.clear();
        let c = &win.condition;
        row.extend([
            win.id.trace.to_string(),
            win.id.entry.to_string(),
            win.id.revolution.to_string(),
            part.as_str().to_string(),
            c.maneuver.as_str().to_string(),
            c.velocity.to_string(),
            c.inflation_pressure.to_string(),
            c.vertical_load.to_string(),
            c.slip_angle.to_string(),
            c.drive_torque.to_string(),
            win.label.fx.to_string(),
            win.label.fy.to_string(),
            win.label.fz.to_string(),
            win.angles[points / 2].to_string(),
        ]);
        for ch in Channel::ALL {
            row.extend(win.channel(ch).iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    let inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    finish(path, inner)
}

/// Windows and split labels of one axis, as written by [`cmd_preprocess`].
pub fn load_processed(cfg: &RunConfig, axis: Axis) -> Result<(Vec<PatchWindow>, Vec<Part>)> {
    let path = Layout::new(cfg).processed_csv(axis);
    let mut rdr = csv::Reader::from_reader(open(&path)?);
    let header = rdr.headers()?.clone();
    let offsets = cfg.preprocess().window.offsets();
    let points = offsets.len();
    if header.len() != META_COLUMNS + 3 * points || header.iter().collect::<Vec<_>>() != processed_header(points) {
        return Err(Error::invalid(format!(
            "{}: columns do not match a {points}-point grid; rerun preprocess with this configuration",
            path.display()
        )));
    }
    let bad = |line: u64, what: &str| Error::invalid(format!("{} line {line}: {what}", path.display()));
    let mut windows = Vec::new();
    let mut parts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(line, &format!("bad number '{}'", &rec[i]))) };
        let int = |i: usize| -> Result<u64> { rec[i].parse().map_err(|_| bad(line, &format!("bad integer '{}'", &rec[i]))) };
        parts.push(Part::parse(&rec[3]).map_err(|e| bad(line, &e.to_string()))?);
        let center = num(13)?;
        let channel = |k: usize| -> Result<Vec<f64>> {
            (0..points).map(|i| num(META_COLUMNS + k * points + i)).collect()
        };
        windows.push(PatchWindow {
            id: TraceId {
                trace: int(0)?,
                entry: int(1)? as usize,
                revolution: int(2)? as usize,
            },
            angles: offsets.iter().map(|o| center + o).collect(),
            ax: channel(0)?,
            ay: channel(1)?,
            az: channel(2)?,
            condition: OperatingCondition {
                velocity: num(5)?,
                inflation_pressure: num(6)?,
                vertical_load: num(7)?,
                slip_angle: num(8)?,
                drive_torque: num(9)?,
                maneuver: ManeuverKind::parse(&rec[4]).map_err(|e| bad(line, &e.to_string()))?,
            },
            label: ForceLabel {
                fx: num(10)?,
                fy: num(11)?,
                fz: num(12)?,
            },
        });
    }
    if windows.is_empty() {
        return Err(Error::invalid(format!("{}: no windows", path.display())));
    }
    Ok((windows, parts))
}

/// Filters, detects and resamples every raw trace, then writes one CSV per
/// axis with its train/validation/test split and the min-max statistics
/// fitted on that axis's training windows.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<ProcessedManifest> {
    let layout = Layout::new(cfg);
    let raw_manifest_path = layout.raw().join("manifest.json");
    let mut raw_files = BTreeMap::new();
    for name in ["samples.csv", "traces.csv"] {
        raw_files.insert(name.to_string(), file_digest(&layout.raw().join(name))?);
    }
    if let Ok(text) = read_text(&raw_manifest_path) {
        let m: RawManifest = serde_json::from_str(&text)?;
        if m.files != raw_files {
            log::warn!("raw files differ from the checksums in {}", raw_manifest_path.display());
        }
    }
    let pre = cfg.preprocess();
    let reader = read_raw_traces(layout.raw())?;
    let n_traces = reader.len();
    let mut windows = Vec::with_capacity(n_traces);
    let mut skipped = Vec::new();
    let mut checked_rate = None;
    for trace in reader {
        let t = trace?;
        if checked_rate != Some(t.sample_rate) {
            Butterworth::lowpass(pre.filter_order, pre.cutoff_hz, t.sample_rate)
                .map_err(|e| Error::Config(e.to_string()))?;
            checked_rate = Some(t.sample_rate);
        }
        match process_trace(&t, &pre) {
            Ok(w) => windows.push(w),
            Err(e) => {
                log::warn!("skipping trace {}: {e}", t.id.trace);
                skipped.push((t.id.trace, e.to_string()));
            }
        }
    }

    let dir = layout.processed();
    create_dir(&dir)?;
    let mut files = BTreeMap::new();
    let skipped_path = dir.join("skipped.csv");
    let mut w = csv::Writer::from_writer(create(&skipped_path)?);
    w.write_record(["trace_id", "reason"])?;
    for (id, reason) in &skipped {
        w.write_record([id.to_string(), reason.clone()])?;
    }
    let inner = w.into_inner().map_err(|e| Error::io(&skipped_path, e.into_error()))?;
    files.insert("skipped.csv".to_string(), finish(&skipped_path, inner)?);

    let split = cfg.split_spec();
    let mut axes = BTreeMap::new();
    for axis in Axis::ALL {
        let mine: Vec<PatchWindow> = windows
            .iter()
            .filter(|w| axis.uses(w.condition.maneuver))
            .cloned()
            .collect();
        if mine.is_empty() {
            log::warn!("{axis}: no usable windows");
            continue;
        }
        let parts = split_dataset(mine.len(), &split)?;
        let train: Vec<PatchWindow> = indices_of(&parts, Part::Train).iter().map(|&i| mine[i].clone()).collect();
        let stats = fit_minmax(&train, axis.channels())?;
        let csv_name = format!("{axis}.csv");
        files.insert(csv_name.clone(), write_processed(&dir.join(&csv_name), &mine, &parts)?);
        let stats_name = format!("stats_{axis}.txt");
        files.insert(stats_name.clone(), write_text(&dir.join(&stats_name), &stats.to_text())?);
        axes.insert(
            axis,
            AxisSummary {
                windows: mine.len(),
                train: train.len(),
                validation: indices_of(&parts, Part::Validation).len(),
                test: indices_of(&parts, Part::Test).len(),
                label_range: Range::of(mine.iter().map(|w| axis.target(&w.label))),
            },
        );
    }
    let manifest = ProcessedManifest {
        version: TOOL_VERSION.into(),
        seed: cfg.seed,
        raw_files,
        traces: n_traces,
        skipped: skipped.len(),
        grid_points: pre.window.points(),
        axes,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("preprocessed {n_traces} traces, skipped {}", skipped.len());
    Ok(manifest)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub version: String,
    pub method: Method,
    pub axis: Axis,
    pub seed: u64,
    /// The learner's settings exactly as used, seed included.
    pub hyperparameters: serde_json::Value,
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
    pub best_validation_mse: Option<f64>,
    pub stopped_early: Option<bool>,
    pub processed_digest: String,
    pub model_digest: String,
}

fn hyperparameters(cfg: &RunConfig, method: Method, seed: u64) -> Result<serde_json::Value> {
    let mut m = cfg.method_configs();
    Ok(match method {
        Method::Mlp => {
            m.mlp.seed = seed;
            serde_json::to_value(&m.mlp)?
        }
        Method::Forest => {
            m.forest.seed = seed;
            serde_json::to_value(&m.forest)?
        }
        Method::Rnn => {
            m.rnn.seed = seed;
            serde_json::to_value(&m.rnn)?
        }
        Method::Oracle => serde_json::Value::Null,
    })
}

fn write_history(path: &Path, history: &History) -> Result<Option<String>> {
    let mut w = match history {
        History::None => return Ok(None),
        _ => csv::Writer::from_writer(create(path)?),
    };
    match history {
        History::Mlp(h) => h.epochs.iter().try_for_each(|e| w.serialize(e))?,
        History::Rnn(h) => h.epochs.iter().try_for_each(|e| w.serialize(e))?,
        History::None => {}
    }
    let inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    finish(path, inner).map(Some)
}

/// Trains `method` for `axis` on the processed split and persists the model,
/// its per-epoch history and a manifest of the settings used.
pub fn cmd_train(cfg: &RunConfig, method: Method, axis: Axis) -> Result<(TrainOutcome, TrainManifest)> {
    let layout = Layout::new(cfg);
    let (windows, parts) = load_processed(cfg, axis)?;
    let seed = cfg.trainer_seed();
    let outcome = crate::eval::train_estimator(method, axis, &windows, &parts, &cfg.method_configs(), seed)?;
    let dir = layout.models();
    create_dir(&dir)?;
    let stem = format!("{method}_{axis}");
    let model_digest = write_text(&layout.model_file(method, axis), &outcome.estimator.to_text())?;
    write_history(&dir.join(format!("{stem}.history.csv")), &outcome.history)?;
    let (epochs_run, best_epoch, best_mse, early) = match &outcome.history {
        History::Mlp(h) => (Some(h.epochs.len()), Some(h.best_epoch), Some(h.best_val_mse), Some(h.stopped_early)),
        History::Rnn(h) => (Some(h.epochs.len()), Some(h.best_epoch), Some(h.best_val_mse), Some(h.stopped_early)),
        History::None => (None, None, None, None),
    };
    let manifest = TrainManifest {
        version: TOOL_VERSION.into(),
        method,
        axis,
        seed,
        hyperparameters: hyperparameters(cfg, method, seed)?,
        train_size: outcome.train_size,
        validation_size: outcome.validation_size,
        epochs_run,
        best_epoch,
        best_validation_mse: best_mse,
        stopped_early: early,
        processed_digest: file_digest(&layout.processed_csv(axis))?,
        model_digest,
    };
    write_json(&dir.join(format!("{stem}.json")), &manifest)?;
    write_json(
        &dir.join(format!("{stem}.timing.json")),
        &BTreeMap::from([("train_seconds", outcome.seconds)]),
    )?;
    log::info!("trained {stem} in {:.1} s", outcome.seconds);
    Ok((outcome, manifest))
}

pub fn load_estimator(path: &Path) -> Result<Estimator> {
    Estimator::from_text(&read_text(path)?)
}

// ---------------------------------------------------------------- reports

fn write_plot(path: &Path, series: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if series.is_empty() {
        w.write_record(["sample_index", "measured_n", "estimated_n"])?;
    }
    series.iter().try_for_each(|p| w.serialize(p))?;
    let inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    finish(path, inner).map(|_| ())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}%"))
}

/// Plain-text rendering of a report.
pub fn render_report(report: &EvalReport) -> String {
    let mut s = format!("seed {}  nrms {:?}\n", report.seed, report.nrms_formula);
    if !report.methods.is_empty() {
        s.push_str("\naxis  method   train   test   NRMS\n");
        for m in &report.methods {
            s.push_str(&format!(
                "{:<5} {:<7} {:>6} {:>6}   {}{}\n",
                m.axis.as_str(),
                m.method.as_str(),
                m.train_size,
                m.test_size,
                fmt_pct(m.nrms_pct),
                m.error.as_ref().map_or(String::new(), |e| format!("  ({e})"))
            ));
        }
    }
    for cv in &report.crossval {
        let b = &cv.result.summary;
        s.push_str(&format!(
            "\n{} {} {}-fold: min {:.2}% q1 {:.2}% median {:.2}% q3 {:.2}% max {:.2}% mean {:.2}%\n",
            cv.axis, cv.method, cv.k, b.min, b.q1, b.median, b.q3, b.max, b.mean
        ));
        let folds: Vec<String> = cv.result.fold_scores.iter().map(|v| format!("{v:.2}")).collect();
        s.push_str(&format!("  folds: {}\n", folds.join(" ")));
    }
    s
}

/// Creates a report directory, dropping plot and fold files of earlier runs.
fn report_dir(layout: &Layout, command: &str) -> Result<PathBuf> {
    let dir = layout.reports(command);
    create_dir(&dir)?;
    for e in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let p = e.map_err(|e| Error::io(&dir, e))?.path();
        let stale = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".csv") && (n.starts_with("plot_") || n.starts_with("cv_")));
        if stale {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(dir)
}

fn write_report(dir: &Path, report: &EvalReport, timings: &BTreeMap<String, f64>) -> Result<()> {
    write_text(&dir.join("report.json"), &(report.to_json()? + "\n"))?;
    write_text(&dir.join("report.txt"), &render_report(report))?;
    write_json(&dir.join("timings.json"), timings)?;
    for m in &report.methods {
        if m.nrms_pct.is_some() {
            write_plot(&dir.join(format!("plot_{}_{}.csv", m.method, m.axis)), &m.series)?;
        }
    }
    Ok(())
}

/// Scores persisted models (or the label oracle) on the test split. With no
/// selection, every model under `models/` is evaluated.
pub fn cmd_evaluate(cfg: &RunConfig, methods: &[Method], axes: &[Axis]) -> Result<EvalReport> {
    let layout = Layout::new(cfg);
    let mut pairs = Vec::new();
    if methods.is_empty() && axes.is_empty() {
        for axis in Axis::ALL {
            for method in Method::LEARNERS {
                if layout.model_file(method, axis).exists() {
                    pairs.push((method, axis));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::invalid(format!("no models in {}", layout.models().display())));
        }
    } else {
        let methods = if methods.is_empty() { &[Method::Mlp][..] } else { methods };
        let axes = if axes.is_empty() { &Axis::ALL[..] } else { axes };
        for &axis in axes {
            pairs.extend(methods.iter().map(|&m| (m, axis)));
        }
    }
    let mut report = EvalReport {
        seed: cfg.seed,
        nrms_formula: cfg.nrms_formula,
        ..EvalReport::default()
    };
    let mut loaded: BTreeMap<Axis, (Vec<PatchWindow>, Vec<Part>)> = BTreeMap::new();
    for (method, axis) in pairs {
        if !loaded.contains_key(&axis) {
            loaded.insert(axis, load_processed(cfg, axis)?);
        }
        let (windows, parts) = &loaded[&axis];
        let train_rows = indices_of(parts, Part::Train);
        let est = match method {
            Method::Oracle => {
                let train: Vec<PatchWindow> = train_rows.iter().map(|&i| windows[i].clone()).collect();
                Estimator {
                    method,
                    axis,
                    stats: fit_minmax(&train, axis.channels())?,
                    learned: Learned::Oracle,
                }
            }
            _ => {
                let est = load_estimator(&layout.model_file(method, axis))?;
                if est.method != method || est.axis != axis {
                    return Err(Error::format(format!(
                        "{} holds a {} {} model",
                        layout.model_file(method, axis).display(),
                        est.method,
                        est.axis
                    )));
                }
                est
            }
        };
        let (score, series) = evaluate_estimator(&est, windows, parts, cfg.nrms_formula)?;
        log::info!("{axis} {method}: NRMS {score:.3}%");
        report.methods.push(MethodReport {
            method,
            axis,
            nrms_pct: Some(score),
            error: None,
            train_size: train_rows.len(),
            test_size: series.len(),
            train_label_range: Some(Range::of(train_rows.iter().map(|&i| axis.target(&windows[i].label)))),
            train_seconds: 0.0,
            series,
        });
    }
    let dir = report_dir(&layout, "evaluate")?;
    write_text(&dir.join("report.json"), &(report.to_json()? + "\n"))?;
    write_text(&dir.join("report.txt"), &render_report(&report))?;
    for m in &report.methods {
        write_plot(&dir.join(format!("plot_{}_{}.csv", m.method, m.axis)), &m.series)?;
    }
    Ok(report)
}

fn write_cv(dir: &Path, cv: &CvReport) -> Result<()> {
    let stem = format!("{}_{}", cv.method, cv.axis);
    let path = dir.join(format!("cv_folds_{stem}.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["fold", "test_size", "nrms_pct"])?;
    for (i, (score, size)) in cv.result.fold_scores.iter().zip(&cv.result.fold_sizes).enumerate() {
        w.write_record([(i + 1).to_string(), size.to_string(), score.to_string()])?;
    }
    let inner = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
    finish(&path, inner)?;

    let path = dir.join(format!("cv_boxplot_{stem}.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.serialize(cv.result.summary)?;
    let inner = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
    finish(&path, inner).map(|_| ())
}

/// k-fold cross-validation over every window of each axis. Trainers use the
/// fold-capped learner settings and seed `seed + fold`.
pub fn cmd_crossval(cfg: &RunConfig, methods: &[Method], axes: &[Axis]) -> Result<EvalReport> {
    let layout = Layout::new(cfg);
    let methods = if methods.is_empty() { &[Method::Mlp][..] } else { methods };
    let axes = if axes.is_empty() { &Axis::ALL[..] } else { axes };
    let cfgs = cfg.cv_method_configs();
    let dir = report_dir(&layout, "crossval")?;
    let mut report = EvalReport {
        seed: cfg.seed,
        nrms_formula: cfg.nrms_formula,
        ..EvalReport::default()
    };
    let mut timings = BTreeMap::new();
    for &axis in axes {
        let (windows, _) = load_processed(cfg, axis)?;
        for &method in methods {
            let start = Instant::now();
            let cv = crossval_method(axis, &windows, method, &cfgs, cfg.cv_folds, cfg.seed, cfg.nrms_formula)?;
            timings.insert(format!("{axis}/{method}"), start.elapsed().as_secs_f64());
            write_cv(&dir, &cv)?;
            report.crossval.push(cv);
        }
    }
    write_report(&dir, &report, &timings)?;
    Ok(report)
}

/// Trains and scores each method on the same split for each axis.
pub fn cmd_compare(cfg: &RunConfig, methods: &[Method], axes: &[Axis]) -> Result<EvalReport> {
    let layout = Layout::new(cfg);
    let methods = if methods.is_empty() { &Method::LEARNERS[..] } else { methods };
    let axes = if axes.is_empty() { &Axis::ALL[..] } else { axes };
    let cfgs = cfg.method_configs();
    let mut report = EvalReport {
        seed: cfg.seed,
        nrms_formula: cfg.nrms_formula,
        ..EvalReport::default()
    };
    for &axis in axes {
        let (windows, parts) = load_processed(cfg, axis)?;
        let results = compare_methods(axis, &windows, &parts, methods, &cfgs, cfg.trainer_seed(), cfg.nrms_formula);
        report.methods.extend(results.into_iter().map(|(r, _)| r));
    }
    let dir = report_dir(&layout, "compare")?;
    write_report(&dir, &report, &report.timings())?;
    Ok(report)
}

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::simulator::TraceId;

/// What one recurrent time step consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// Each step is the full feature vector of one revolution; sequences
    /// slide over consecutive revolutions of a schedule entry.
    Revolutions,
    /// Each step is one angular grid point of a single revolution, with one
    /// input per channel.
    AngularSteps,
}

impl SequenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceMode::Revolutions => "revolutions",
            SequenceMode::AngularSteps => "angular_steps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "revolutions" => Ok(SequenceMode::Revolutions),
            "angular_steps" => Ok(SequenceMode::AngularSteps),
            other => Err(Error::invalid(format!("unknown sequence mode '{other}'"))),
        }
    }
}

/// Fixed-length sequences, stored as `len x step_dim` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    step_dim: usize,
    len: usize,
    data: Vec<f64>,
    targets: Vec<f64>,
    /// Identity of the sample whose target each sequence carries.
    ids: Vec<TraceId>,
}

impl SequenceSet {
    pub fn new(step_dim: usize, len: usize) -> Self {
        Self {
            step_dim,
            len,
            data: Vec::new(),
            targets: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn push(&mut self, steps: &[f64], target: f64, id: TraceId) -> Result<()> {
        if steps.len() != self.len * self.step_dim {
            return Err(Error::DimensionMismatch {
                expected: self.len * self.step_dim,
                actual: steps.len(),
            });
        }
        self.data.extend_from_slice(steps);
        self.targets.push(target);
        self.ids.push(id);
        Ok(())
    }

    pub fn step_dim(&self) -> usize {
        self.step_dim
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Steps of sequence `i`, chronological.
    pub fn sequence(&self, i: usize) -> &[f64] {
        let block = self.len * self.step_dim;
        &self.data[i * block..(i + 1) * block]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn id(&self, i: usize) -> TraceId {
        self.ids[i]
    }

    pub fn ids(&self) -> &[TraceId] {
        &self.ids
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.step_dim, self.len);
        for &i in indices {
            out.data.extend_from_slice(self.sequence(i));
            out.targets.push(self.targets[i]);
            out.ids.push(self.ids[i]);
        }
        out
    }

    pub fn with_targets(&self, targets: Vec<f64>) -> Self {
        assert_eq!(targets.len(), self.len());
        Self {
            targets,
            ..self.clone()
        }
    }
}

/// Sliding windows of `len` consecutive revolutions. A run ends where the
/// schedule entry changes or a revolution index is skipped, so no sequence
/// straddles an entry boundary or a dropped trace. Each sequence carries the
/// target and id of its last revolution.
pub fn build_sequences(rows: &FeatureSet, len: usize) -> Result<SequenceSet> {
    if len == 0 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    let mut out = SequenceSet::new(rows.dim(), len);
    let mut start = 0;
    let mut buf = Vec::with_capacity(len * rows.dim());
    for i in 0..=rows.len() {
        let breaks = i == rows.len()
            || (i > 0 && {
                let (prev, cur) = (rows.id(i - 1), rows.id(i));
                cur.entry != prev.entry || cur.revolution != prev.revolution + 1
            });
        if !breaks {
            continue;
        }
        let run = i - start;
        if run < len && run > 0 {
            log::debug!(
                "entry {}: run of {run} revolutions is shorter than {len}",
                rows.id(start).entry
            );
        }
        for end in (start + len - 1)..i {
            buf.clear();
            for r in end + 1 - len..=end {
                buf.extend_from_slice(rows.row(r));
            }
            out.push(&buf, rows.target(end), rows.id(end))?;
        }
        start = i;
    }
    Ok(out)
}

/// One sequence per revolution over the angular grid: step `t` holds the
/// value of every channel at grid point `t`.
pub fn build_angular_sequences(rows: &FeatureSet, channels: usize) -> Result<SequenceSet> {
    if channels == 0 || rows.dim() % channels != 0 {
        return Err(Error::invalid(format!(
            "feature length {} is not a multiple of {channels} channels",
            rows.dim()
        )));
    }
    let points = rows.dim() / channels;
    let mut out = SequenceSet::new(channels, points);
    let mut buf = vec![0.0; rows.dim()];
    for i in 0..rows.len() {
        let x = rows.row(i);
        for t in 0..points {
            for c in 0..channels {
                buf[t * channels + c] = x[c * points + t];
            }
        }
        out.push(&buf, rows.target(i), rows.id(i))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(entries: &[usize]) -> FeatureSet {
        let mut s = FeatureSet::new(2);
        let mut trace = 0;
        for (e, &n) in entries.iter().enumerate() {
            for r in 0..n {
                let id = TraceId { trace, entry: e, revolution: r };
                s.push(&[trace as f64, -(trace as f64)], trace as f64 * 10.0, id).unwrap();
                trace += 1;
            }
        }
        s
    }

    #[test]
    fn counts_follow_run_lengths() {
        assert_eq!(build_sequences(&rows(&[10]), 10).unwrap().len(), 1);
        assert_eq!(build_sequences(&rows(&[12]), 10).unwrap().len(), 3);
        assert_eq!(build_sequences(&rows(&[9]), 10).unwrap().len(), 0);
        let two = build_sequences(&rows(&[10, 10]), 10).unwrap();
        assert_eq!(two.len(), 2);
        // Neither sequence mixes entries: the first ends at trace 9 and starts at 0.
        assert_eq!(two.sequence(0)[0], 0.0);
        assert_eq!(two.sequence(1)[0], 10.0);
        assert_eq!(two.id(1).entry, 1);
        assert_eq!(build_sequences(&rows(&[3, 23, 11]), 10).unwrap().len(), 14 + 2);
    }

    #[test]
    fn sequences_are_chronological_and_carry_last_target() {
        let s = build_sequences(&rows(&[12]), 10).unwrap();
        let seq = s.sequence(2);
        let firsts: Vec<f64> = seq.chunks(2).map(|c| c[0]).collect();
        assert_eq!(firsts, (2..12).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(s.target(2), 110.0);
        assert_eq!(s.id(2).revolution, 11);
    }

    #[test]
    fn skipped_revolution_breaks_the_run() {
        let full = rows(&[20]);
        let keep: Vec<usize> = (0..20).filter(|&i| i != 12).collect();
        let s = build_sequences(&full.subset(&keep), 10).unwrap();
        // Run 0..=11 gives 3 sequences, run 13..=19 gives none.
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn angular_steps_interleave_channels() {
        let mut s = FeatureSet::new(6);
        s.push(&[1.0, 2.0, 3.0, 10.0, 20.0, 30.0], 5.0, TraceId::default()).unwrap();
        let a = build_angular_sequences(&s, 2).unwrap();
        assert_eq!(a.seq_len(), 3);
        assert_eq!(a.step_dim(), 2);
        assert_eq!(a.sequence(0), &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        assert!(build_angular_sequences(&s, 4).is_err());
    }
}

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulator::TraceId;

/// Row-major feature matrix with one scalar target per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    ids: Vec<TraceId>,
}

impl FeatureSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut set = Self::new(dim);
        for (i, (r, &y)) in rows.iter().zip(targets).enumerate() {
            set.push(r, y, TraceId { trace: i as u64, ..TraceId::default() })?;
        }
        if rows.len() != targets.len() {
            return Err(Error::invalid("row and target counts differ"));
        }
        Ok(set)
    }

    pub fn push(&mut self, row: &[f64], target: f64, id: TraceId) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.x.extend_from_slice(row);
        self.y.push(target);
        self.ids.push(id);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn id(&self, i: usize) -> TraceId {
        self.ids[i]
    }

    pub fn ids(&self) -> &[TraceId] {
        &self.ids
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.dim);
        for &i in indices {
            out.x.extend_from_slice(self.row(i));
            out.y.push(self.y[i]);
            out.ids.push(self.ids[i]);
        }
        out
    }

    pub fn with_targets(&self, targets: Vec<f64>) -> Self {
        assert_eq!(targets.len(), self.len());
        Self {
            y: targets,
            ..self.clone()
        }
    }

    /// SHA-256 over dimensions, rows and targets.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for v in self.x.iter().chain(&self.y) {
            h.update(v.to_le_bytes());
        }
        crate::hex(&h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_subset() {
        let mut s = FeatureSet::new(2);
        s.push(&[1.0, 2.0], 3.0, TraceId::default()).unwrap();
        s.push(&[4.0, 5.0], 6.0, TraceId { trace: 1, ..TraceId::default() }).unwrap();
        assert!(s.push(&[1.0], 0.0, TraceId::default()).is_err());
        let sub = s.subset(&[1]);
        assert_eq!(sub.row(0), &[4.0, 5.0]);
        assert_eq!(sub.targets(), &[6.0]);
        assert_eq!(sub.id(0).trace, 1);
        assert_ne!(s.digest(), sub.digest());
        assert_eq!(s.rows().count(), 2);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the error series is reduced before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NrmsFormula {
    /// Root of the mean squared error over the peak measured magnitude.
    #[default]
    Rms,
    /// Sum of squared errors over the peak measured magnitude, no root and
    /// no averaging. Dimensionally a force; kept for inspection only.
    Literal,
}

fn check(measured: &[f64], estimated: &[f64]) -> Result<f64> {
    if measured.is_empty() || measured.len() != estimated.len() {
        return Err(Error::invalid(format!(
            "NRMS needs equal non-empty series, got {} and {}",
            measured.len(),
            estimated.len()
        )));
    }
    let peak = measured.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::UndefinedNormalizer);
    }
    Ok(peak)
}

/// `sqrt(mean((measured - estimated)^2)) / max|measured| * 100`.
pub fn nrms(measured: &[f64], estimated: &[f64]) -> Result<f64> {
    let peak = check(measured, estimated)?;
    let mse = measured
        .iter()
        .zip(estimated)
        .map(|(m, e)| (m - e) * (m - e))
        .sum::<f64>()
        / measured.len() as f64;
    Ok(mse.sqrt() / peak * 100.0)
}

pub fn nrms_with(formula: NrmsFormula, measured: &[f64], estimated: &[f64]) -> Result<f64> {
    match formula {
        NrmsFormula::Rms => nrms(measured, estimated),
        NrmsFormula::Literal => {
            let peak = check(measured, estimated)?;
            let sse: f64 = measured.iter().zip(estimated).map(|(m, e)| (m - e) * (m - e)).sum();
            Ok(sse / peak * 100.0)
        }
    }
}

/// Five-number summary plus mean, quartiles by linear interpolation between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("summary of an empty series"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    pub fn spread(&self) -> f64 {
        self.max - self.min
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example_is_two_and_a_half_percent() {
        let m = [1000.0, 2000.0, -4000.0];
        let e: Vec<f64> = m.iter().map(|v| v + 100.0).collect();
        assert_eq!(nrms(&m, &e).unwrap(), 2.5);
        assert_eq!(nrms(&m, &m).unwrap(), 0.0);
        // 3 * 100^2 / 4000 * 100
        assert_eq!(nrms_with(NrmsFormula::Literal, &m, &e).unwrap(), 750.0);
    }

    #[test]
    fn scale_invariant_and_offset_sensitive() {
        let m = [310.0, -42.5, 1200.0, 7.0];
        let e = [300.0, -40.0, 1234.0, 0.0];
        let base = nrms(&m, &e).unwrap();
        for c in [0.5, 3.0, -2.0] {
            let ms: Vec<f64> = m.iter().map(|v| v * c).collect();
            let es: Vec<f64> = e.iter().map(|v| v * c).collect();
            assert!((nrms(&ms, &es).unwrap() - base).abs() < 1e-12);
        }
        let shifted: Vec<f64> = m.iter().map(|v| v + 1.0).collect();
        assert!(nrms(&m, &shifted).unwrap() > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(nrms(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedNormalizer)));
        assert!(nrms(&[1.0], &[1.0, 2.0]).is_err());
        assert!(nrms(&[], &[]).is_err());
    }

    #[test]
    fn box_stats_interpolate() {
        let s = BoxStats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.spread(), 3.0);
    }
}

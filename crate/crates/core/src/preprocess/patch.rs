use crate::error::{Error, Result};
use crate::simulator::RevolutionTrace;

/// Contact-patch landmarks on the encoder scale, degrees. `entry_deg` lies in
/// [0, 360); `center_deg` and `exit_deg` follow it and may exceed 360 when
/// the patch straddles the encoder zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchMarkers {
    pub entry_deg: f64,
    pub center_deg: f64,
    pub exit_deg: f64,
}

impl PatchMarkers {
    pub fn half_angle(&self) -> f64 {
        (self.exit_deg - self.entry_deg) / 2.0
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Sub-sample position of an extremum from a parabola through three
/// neighbors, as a fractional index offset in [-0.5, 0.5].
fn parabolic_offset(prev: f64, mid: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * mid + next;
    if denom == 0.0 {
        return 0.0;
    }
    (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
}

fn refined_angle(trace: &RevolutionTrace, i: usize) -> f64 {
    let n = trace.len();
    let x = &trace.ax;
    let (ip, inext) = ((i + n - 1) % n, (i + 1) % n);
    let off = parabolic_offset(x[ip], x[i], x[inext]);
    let step_fwd = (trace.angles[inext] - trace.angles[i]).rem_euclid(360.0);
    let step_back = (trace.angles[i] - trace.angles[ip]).rem_euclid(360.0);
    let step = if off >= 0.0 { step_fwd } else { step_back };
    (trace.angles[i] + off * step).rem_euclid(360.0)
}

/// Locates the patch from the tangential boundary spikes: the entry is the
/// dominant positive extremum of `ax`, the exit the dominant negative one
/// within the following half revolution. Both must stand out from the
/// channel median by more than `prominence_mads` median absolute deviations.
pub fn detect_contact_patch(trace: &RevolutionTrace, prominence_mads: f64) -> Result<PatchMarkers> {
    let n = trace.len();
    if n < 4 {
        return Err(Error::PatchNotFound(format!("trace has only {n} samples")));
    }
    let x = &trace.ax;
    let mut scratch = x.clone();
    let med = median(&mut scratch);
    for v in scratch.iter_mut() {
        *v = (*v - med).abs();
    }
    let threshold = prominence_mads * median(&mut scratch);

    let peak = (0..n)
        .max_by(|&a, &b| x[a].total_cmp(&x[b]))
        .expect("nonempty");
    if !(x[peak] - med > threshold) {
        return Err(Error::PatchNotFound(format!(
            "no positive ax extremum above {threshold:.3} m/s^2 prominence"
        )));
    }
    let trough = (1..=n / 2)
        .map(|k| (peak + k) % n)
        .min_by(|&a, &b| x[a].total_cmp(&x[b]))
        .expect("n >= 4");
    if !(med - x[trough] > threshold) {
        return Err(Error::PatchNotFound(format!(
            "no negative ax extremum above {threshold:.3} m/s^2 prominence after the entry"
        )));
    }

    let entry = refined_angle(trace, peak);
    let mut exit = refined_angle(trace, trough);
    if exit <= entry {
        exit += 360.0;
    }
    Ok(PatchMarkers {
        entry_deg: entry,
        center_deg: 0.5 * (entry + exit),
        exit_deg: exit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::simulator::{
        simulate_revolution, NoiseLevel, OperatingCondition, SignalModel, TireParams,
    };

    fn trace(cond: OperatingCondition, center: f64) -> RevolutionTrace {
        let model = SignalModel {
            patch_center_deg: center,
            center_jitter_deg: 0.0,
            ..SignalModel::default()
        };
        let mut rng = stream_rng(1, 0);
        simulate_revolution(&cond, &TireParams::default(), &model, NoiseLevel::Std(0.0), &mut rng)
            .unwrap()
    }

    #[test]
    fn noiseless_markers_match_analytic_boundaries() {
        for cond in [
            OperatingCondition::free_rolling(90.0, 6240.0),
            OperatingCondition::cornering(30.0, 2080.0, -6.0),
            OperatingCondition::driving(60.0, 2080.0, 526.0),
        ] {
            let t = trace(cond, 180.0);
            let r = t.reference.unwrap();
            let step = 360.0 / t.len() as f64;
            let m = detect_contact_patch(&t, 3.0).unwrap();
            assert!((m.entry_deg - (r.center_deg - r.half_angle_deg)).abs() <= step);
            assert!((m.exit_deg - (r.center_deg + r.half_angle_deg)).abs() <= step);
            assert!(m.entry_deg < m.center_deg && m.center_deg < m.exit_deg);
        }
    }

    #[test]
    fn patch_across_encoder_zero() {
        let t = trace(OperatingCondition::free_rolling(60.0, 4160.0), 2.0);
        let m = detect_contact_patch(&t, 3.0).unwrap();
        let half = t.reference.unwrap().half_angle_deg;
        assert!(m.entry_deg > 300.0);
        assert!((m.center_deg - 362.0).abs() < 0.2, "{m:?}");
        assert!((m.half_angle() - half).abs() < 0.2);
    }

    #[test]
    fn flat_trace_has_no_patch() {
        let mut t = trace(OperatingCondition::free_rolling(60.0, 4160.0), 180.0);
        t.ax.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(detect_contact_patch(&t, 3.0), Err(Error::PatchNotFound(_))));
    }
}

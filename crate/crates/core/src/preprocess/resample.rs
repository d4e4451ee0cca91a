use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PatchMarkers;
use crate::simulator::{Channel, ForceLabel, OperatingCondition, RevolutionTrace, TraceId};

/// How the configured window span relates to the patch center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanMode {
    /// The span is the total width, centered on the patch center.
    Total,
    /// The span extends this far on each side of the center.
    Half,
}

/// Angular sampling grid around the patch center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub span_deg: f64,
    pub step_deg: f64,
    pub mode: SpanMode,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            span_deg: 35.0,
            step_deg: 0.5,
            mode: SpanMode::Total,
        }
    }
}

impl WindowSpec {
    pub fn half_width(&self) -> f64 {
        match self.mode {
            SpanMode::Total => self.span_deg / 2.0,
            SpanMode::Half => self.span_deg,
        }
    }

    /// Grid points per channel, both ends included.
    pub fn points(&self) -> usize {
        (2.0 * self.half_width() / self.step_deg).round() as usize + 1
    }

    /// Grid offsets from the center, degrees.
    pub fn offsets(&self) -> Vec<f64> {
        let h = self.half_width();
        (0..self.points())
            .map(|i| -h + i as f64 * self.step_deg)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.span_deg > 0.0 && self.step_deg > 0.0 && self.half_width() < 180.0) {
            return Err(Error::invalid(format!("bad window spec {self:?}")));
        }
        let ratio = 2.0 * self.half_width() / self.step_deg;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::invalid("window span must be a multiple of the grid step"));
        }
        Ok(())
    }
}

/// Fixed-length angular resampling of the contact-patch region.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchWindow {
    pub id: TraceId,
    /// Grid angles on the (unwrapped) encoder scale.
    pub angles: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
    pub condition: OperatingCondition,
    pub label: ForceLabel,
}

impl PatchWindow {
    pub fn channel(&self, c: Channel) -> &[f64] {
        match c {
            Channel::Ax => &self.ax,
            Channel::Ay => &self.ay,
            Channel::Az => &self.az,
        }
    }

    pub fn channel_mut(&mut self, c: Channel) -> &mut Vec<f64> {
        match c {
            Channel::Ax => &mut self.ax,
            Channel::Ay => &mut self.ay,
            Channel::Az => &mut self.az,
        }
    }

    pub fn points(&self) -> usize {
        self.angles.len()
    }
}

/// Linear interpolation of every channel onto the window grid around
/// `markers.center_deg`. The trace is treated as circular; a grid point
/// whose bracketing samples are more than three nominal steps apart is
/// reported as uncovered.
pub fn angular_resample(
    trace: &RevolutionTrace,
    markers: &PatchMarkers,
    spec: &WindowSpec,
) -> Result<PatchWindow> {
    spec.validate()?;
    let n = trace.len();
    let center = markers.center_deg;
    let uncovered = || Error::WindowNotCovered {
        from_deg: center - spec.half_width(),
        to_deg: center + spec.half_width(),
    };
    if n < 2 {
        return Err(uncovered());
    }
    let max_gap = 3.0 * 360.0 / n as f64;
    let angles: Vec<f64> = spec.offsets().iter().map(|o| center + o).collect();
    let mut out = PatchWindow {
        id: trace.id,
        angles: angles.clone(),
        ax: Vec::with_capacity(angles.len()),
        ay: Vec::with_capacity(angles.len()),
        az: Vec::with_capacity(angles.len()),
        condition: trace.condition,
        label: trace.label,
    };
    for &target in &angles {
        let theta = target.rem_euclid(360.0);
        let upper = trace.angles.partition_point(|&a| a <= theta);
        let (lo, lo_angle) = if upper == 0 {
            (n - 1, trace.angles[n - 1] - 360.0)
        } else {
            (upper - 1, trace.angles[upper - 1])
        };
        let (hi, hi_angle) = if upper == n {
            (0, trace.angles[0] + 360.0)
        } else {
            (upper, trace.angles[upper])
        };
        let gap = hi_angle - lo_angle;
        if !(gap > 0.0 && gap <= max_gap) {
            return Err(uncovered());
        }
        let t = (theta - lo_angle) / gap;
        for c in Channel::ALL {
            let x = trace.channel(c);
            out.channel_mut(c).push(x[lo] + t * (x[hi] - x[lo]));
        }
    }
    Ok(out)
}

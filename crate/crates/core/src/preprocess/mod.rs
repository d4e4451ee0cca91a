//! Raw revolution traces to fixed-length contact-patch feature windows:
//! low-pass filtering, encoder segmentation, patch detection, angular
//! resampling and min-max normalization.

mod features;
mod filter;
mod normalize;
mod patch;
mod resample;
mod segment;

use serde::{Deserialize, Serialize};

pub use features::{build_features, feature_len, Axis};
pub use filter::{lowpass_filter, Biquad, Butterworth};
pub use normalize::{apply_minmax, fit_minmax, invert_minmax, MinMaxStats, Range};
pub use patch::{detect_contact_patch, PatchMarkers};
pub use resample::{angular_resample, PatchWindow, SpanMode, WindowSpec};
pub use segment::{segment_revolutions, DiscardedSpan, EncoderStream, Segmentation};

use crate::error::Result;
use crate::simulator::{Channel, RevolutionTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    pub filter_order: usize,
    pub window: WindowSpec,
    pub prominence_mads: f64,
    /// Divide accelerations by the squared wheel speed before resampling.
    pub speed_compensation: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 400.0,
            filter_order: 4,
            window: WindowSpec::default(),
            prominence_mads: 3.0,
            speed_compensation: true,
        }
    }
}

/// Divides every channel by the squared angular speed implied by the
/// revolution's sample count. Accelerations of a fixed deformation shape
/// scale with omega^2, so the result depends on the shape only.
pub fn compensate_speed(trace: &RevolutionTrace) -> RevolutionTrace {
    let omega = trace.angular_speed();
    let scale = 1.0 / (omega * omega);
    let mut out = trace.clone();
    for c in Channel::ALL {
        out.channel_mut(c).iter_mut().for_each(|v| *v *= scale);
    }
    out
}

/// Filter, detect, compensate and resample one revolution.
pub fn process_trace(trace: &RevolutionTrace, cfg: &PreprocessConfig) -> Result<PatchWindow> {
    let filtered = lowpass_filter(trace, cfg.cutoff_hz, cfg.filter_order)?;
    window_from_filtered(&filtered, cfg)
}

/// The steps after filtering.
pub fn window_from_filtered(filtered: &RevolutionTrace, cfg: &PreprocessConfig) -> Result<PatchWindow> {
    let markers = detect_contact_patch(filtered, cfg.prominence_mads)?;
    if cfg.speed_compensation {
        angular_resample(&compensate_speed(filtered), &markers, &cfg.window)
    } else {
        angular_resample(filtered, &markers, &cfg.window)
    }
}

/// A trace that could not be turned into a window.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedTrace {
    pub trace: u64,
    pub reason: String,
}

/// Runs [`process_trace`] over a dataset, keeping order and logging traces
/// that fail detection or resampling.
pub fn process_dataset(
    traces: &[RevolutionTrace],
    cfg: &PreprocessConfig,
) -> Result<(Vec<PatchWindow>, Vec<SkippedTrace>)> {
    // Filter design errors are configuration errors, not per-trace skips.
    if let Some(t) = traces.first() {
        Butterworth::lowpass(cfg.filter_order, cfg.cutoff_hz, t.sample_rate)?;
    }
    cfg.window.validate()?;
    let mut windows = Vec::with_capacity(traces.len());
    let mut skipped = Vec::new();
    for t in traces {
        match process_trace(t, cfg) {
            Ok(w) => windows.push(w),
            Err(e) => {
                log::warn!("skipping trace {}: {e}", t.id.trace);
                skipped.push(SkippedTrace {
                    trace: t.id.trace,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((windows, skipped))
}

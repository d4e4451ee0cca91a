use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PatchWindow;
use crate::simulator::{Channel, ForceLabel, ManeuverKind};

/// Force component being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Fx,
    Fy,
    Fz,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Fx, Axis::Fy, Axis::Fz];

    /// Input channels: all three for the lateral force, tangential and
    /// radial for the other two.
    pub fn channels(self) -> &'static [Channel] {
        match self {
            Axis::Fy => &[Channel::Ax, Channel::Ay, Channel::Az],
            Axis::Fx | Axis::Fz => &[Channel::Ax, Channel::Az],
        }
    }

    pub fn target(self, label: &ForceLabel) -> f64 {
        match self {
            Axis::Fx => label.fx,
            Axis::Fy => label.fy,
            Axis::Fz => label.fz,
        }
    }

    /// Whether revolutions of this maneuver carry information for the axis:
    /// every revolution for Fz, cornering for Fy, driving for Fx.
    pub fn uses(self, maneuver: ManeuverKind) -> bool {
        match self {
            Axis::Fz => true,
            Axis::Fy => maneuver == ManeuverKind::Cornering,
            Axis::Fx => maneuver == ManeuverKind::Driving,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Fx => "fx",
            Axis::Fy => "fy",
            Axis::Fz => "fz",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fx" => Ok(Axis::Fx),
            "fy" => Ok(Axis::Fy),
            "fz" => Ok(Axis::Fz),
            other => Err(Error::invalid(format!("unknown axis '{other}' (fx, fy, fz)"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Concatenated channel samples of a normalized window, in `Axis::channels`
/// order.
pub fn build_features(window: &PatchWindow, axis: Axis) -> Vec<f64> {
    let channels = axis.channels();
    let mut out = Vec::with_capacity(channels.len() * window.points());
    for &c in channels {
        out.extend_from_slice(window.channel(c));
    }
    out
}

pub fn feature_len(axis: Axis, points: usize) -> usize {
    axis.channels().len() * points
}

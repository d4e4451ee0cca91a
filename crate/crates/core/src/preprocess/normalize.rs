use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PatchWindow;
use crate::simulator::Channel;

/// Closed interval used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(Self::empty(), |r, v| r.include(v))
    }

    pub fn include(self, v: f64) -> Self {
        Self {
            min: self.min.min(v),
            max: self.max.max(v),
        }
    }

    pub fn union(self, other: Self) -> Self {
        Self {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max > self.min)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        self.min + x * (self.max - self.min)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

/// Per-channel extremes over a set of training windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub ax: Range,
    pub ay: Range,
    pub az: Range,
}

impl MinMaxStats {
    pub fn channel(&self, c: Channel) -> Range {
        match c {
            Channel::Ax => self.ax,
            Channel::Ay => self.ay,
            Channel::Az => self.az,
        }
    }

    fn channel_mut(&mut self, c: Channel) -> &mut Range {
        match c {
            Channel::Ax => &mut self.ax,
            Channel::Ay => &mut self.ay,
            Channel::Az => &mut self.az,
        }
    }

    /// Fails on the first channel whose range has zero width.
    pub fn check(&self, channels: &[Channel]) -> Result<()> {
        for &c in channels {
            let r = self.channel(c);
            if r.is_degenerate() {
                return Err(Error::DegenerateChannel {
                    channel: c.as_str().to_string(),
                    value: r.min,
                });
            }
        }
        Ok(())
    }

    /// `channel min max` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in Channel::ALL {
            let r = self.channel(c);
            let _ = writeln!(s, "{} {} {}", c.as_str(), r.min, r.max);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut stats = Self {
            ax: Range::empty(),
            ay: Range::empty(),
            az: Range::empty(),
        };
        let mut seen = [false; 3];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, min, max] = parts[..] else {
                return Err(Error::format(format!("bad stats line '{line}'")));
            };
            let c = match name {
                "ax" => Channel::Ax,
                "ay" => Channel::Ay,
                "az" => Channel::Az,
                other => return Err(Error::format(format!("unknown channel '{other}'"))),
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(format!("bad number '{s}'")))
            };
            *stats.channel_mut(c) = Range {
                min: parse(min)?,
                max: parse(max)?,
            };
            seen[c.index()] = true;
        }
        if seen != [true; 3] {
            return Err(Error::format("stats must list ax, ay and az"));
        }
        Ok(stats)
    }
}

/// Channel extremes over the training windows. Only `required` channels
/// must be non-degenerate.
pub fn fit_minmax(training: &[PatchWindow], required: &[Channel]) -> Result<MinMaxStats> {
    if training.is_empty() {
        return Err(Error::invalid("cannot fit normalization on zero windows"));
    }
    let mut stats = MinMaxStats {
        ax: Range::empty(),
        ay: Range::empty(),
        az: Range::empty(),
    };
    for w in training {
        for c in Channel::ALL {
            let r = stats.channel_mut(c);
            *r = r.union(Range::of(w.channel(c).iter().copied()));
        }
    }
    stats.check(required)?;
    Ok(stats)
}

/// Affine min-max scaling. Values outside the training range are not
/// clipped. Degenerate channels map to zero.
pub fn apply_minmax(window: &PatchWindow, stats: &MinMaxStats) -> PatchWindow {
    let mut out = window.clone();
    for c in Channel::ALL {
        let r = stats.channel(c);
        for v in out.channel_mut(c).iter_mut() {
            *v = if r.is_degenerate() { 0.0 } else { r.normalize(*v) };
        }
    }
    out
}

pub fn invert_minmax(window: &PatchWindow, stats: &MinMaxStats) -> PatchWindow {
    let mut out = window.clone();
    for c in Channel::ALL {
        let r = stats.channel(c);
        for v in out.channel_mut(c).iter_mut() {
            *v = r.denormalize(*v);
        }
    }
    out
}

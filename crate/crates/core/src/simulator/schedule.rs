use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    FreeRolling,
    Cornering,
    Driving,
}

impl ManeuverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverKind::FreeRolling => "free_rolling",
            ManeuverKind::Cornering => "cornering",
            ManeuverKind::Driving => "driving",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "free_rolling" => Ok(ManeuverKind::FreeRolling),
            "cornering" => Ok(ManeuverKind::Cornering),
            "driving" => Ok(ManeuverKind::Driving),
            other => Err(Error::invalid(format!("unknown maneuver '{other}'"))),
        }
    }
}

/// One steady rig setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCondition {
    /// km/h
    pub velocity: f64,
    /// kPa
    pub inflation_pressure: f64,
    /// Commanded vertical load, N.
    pub vertical_load: f64,
    /// deg
    pub slip_angle: f64,
    /// N m
    pub drive_torque: f64,
    pub maneuver: ManeuverKind,
}

pub const RIG_PRESSURE_KPA: f64 = 220.0;

impl OperatingCondition {
    pub fn free_rolling(velocity: f64, load: f64) -> Self {
        Self {
            velocity,
            inflation_pressure: RIG_PRESSURE_KPA,
            vertical_load: load,
            slip_angle: 0.0,
            drive_torque: 0.0,
            maneuver: ManeuverKind::FreeRolling,
        }
    }

    pub fn cornering(velocity: f64, load: f64, slip_deg: f64) -> Self {
        Self {
            slip_angle: slip_deg,
            maneuver: ManeuverKind::Cornering,
            ..Self::free_rolling(velocity, load)
        }
    }

    pub fn driving(velocity: f64, load: f64, torque: f64) -> Self {
        Self {
            drive_torque: torque,
            maneuver: ManeuverKind::Driving,
            ..Self::free_rolling(velocity, load)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.velocity.is_finite() && self.velocity > 0.0) {
            return Err(Error::invalid(format!("velocity must be > 0, got {}", self.velocity)));
        }
        if !(self.vertical_load.is_finite() && self.vertical_load > 0.0) {
            return Err(Error::invalid(format!(
                "vertical load must be > 0, got {}",
                self.vertical_load
            )));
        }
        if !(self.slip_angle.is_finite() && self.drive_torque.is_finite()) {
            return Err(Error::invalid("slip angle and torque must be finite"));
        }
        let slip = self.slip_angle != 0.0;
        let torque = self.drive_torque != 0.0;
        let ok = match self.maneuver {
            ManeuverKind::FreeRolling => !slip && !torque,
            // A triangular slip sweep passes through zero, so cornering only
            // forbids torque.
            ManeuverKind::Cornering => !torque,
            ManeuverKind::Driving => !slip && torque,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{} condition with slip {} deg and torque {} N m",
                self.maneuver.as_str(),
                self.slip_angle,
                self.drive_torque
            )));
        }
        Ok(())
    }
}

/// How the condition evolves over an entry's revolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    Constant,
    /// Load rises linearly from `low` to `high` at the midpoint and back.
    TriangularLoad { low: f64, high: f64 },
    /// Slip angle rises linearly from `low` to `high` at the midpoint and back.
    TriangularSlip { low: f64, high: f64 },
}

/// Value of a unit triangle wave at revolution `i` of `n`: 0 at both ends,
/// 1 at the midpoint.
pub fn triangle(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let t = i as f64 / (n - 1) as f64;
    1.0 - (2.0 * t - 1.0).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub condition: OperatingCondition,
    pub n_revolutions: usize,
    pub sweep: Sweep,
}

impl ScheduleEntry {
    pub fn constant(condition: OperatingCondition, n_revolutions: usize) -> Self {
        Self {
            condition,
            n_revolutions,
            sweep: Sweep::Constant,
        }
    }

    /// Condition in force during revolution `rev` of this entry.
    pub fn condition_at(&self, rev: usize) -> OperatingCondition {
        let mut cond = self.condition;
        match self.sweep {
            Sweep::Constant => {}
            Sweep::TriangularLoad { low, high } => {
                cond.vertical_load = low + (high - low) * triangle(rev, self.n_revolutions);
            }
            Sweep::TriangularSlip { low, high } => {
                cond.slip_angle = low + (high - low) * triangle(rev, self.n_revolutions);
            }
        }
        cond
    }
}

/// Measurement noise applied to every channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Absolute standard deviation, m/s^2.
    Std(f64),
    /// Signal-to-noise ratio in dB relative to the mean power of the
    /// noiseless tri-axial revolution signal.
    SnrDb(f64),
}

impl NoiseLevel {
    pub fn std_for(&self, signal_power: f64) -> f64 {
        match *self {
            NoiseLevel::Std(std) => std,
            NoiseLevel::SnrDb(db) => (signal_power / 10f64.powf(db / 10.0)).sqrt(),
        }
    }

    pub fn is_silent(&self) -> bool {
        match *self {
            NoiseLevel::Std(std) => std == 0.0,
            NoiseLevel::SnrDb(db) => db.is_infinite() && db > 0.0,
        }
    }
}

/// Ordered list of rig settings with a seed and noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub rng_seed: u64,
    pub noise: NoiseLevel,
}

pub const SPEEDS_FREE_KPH: [f64; 3] = [30.0, 60.0, 90.0];
pub const SPEEDS_LOADED_KPH: [f64; 2] = [30.0, 60.0];
pub const LOADS_N: [f64; 3] = [2080.0, 4160.0, 6240.0];
pub const SLIP_MAGNITUDES_DEG: [f64; 9] = [6.0, 5.0, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0];
pub const TORQUES_NM: [f64; 8] = [207.0, 218.0, 343.0, 400.0, 442.0, 526.0, 565.0, 650.0];
pub const DRIVING_LOAD_N: f64 = 2080.0;

/// Revolutions per entry in the rig-mirroring schedule. They are chosen so
/// the usable counts per axis come out at 6833 (all), 2713 (cornering) and
/// 352 (driving).
const FREE_STEP_REVS: usize = 300;
const FREE_TRIANGLE_REVS: usize = 356;
const CORNER_STEP_REVS: usize = 23;
const CORNER_TRIANGLE_REVS: [usize; 6] = [38, 38, 38, 38, 38, 39];
const DRIVE_STEP_REVS: usize = 22;

impl TestSchedule {
    /// The full rig-mirroring schedule: free rolling, cornering and driving
    /// blocks in that order.
    pub fn full(rng_seed: u64, noise: NoiseLevel) -> Self {
        let mut entries = Vec::new();
        for &v in &SPEEDS_FREE_KPH {
            for &load in &LOADS_N {
                entries.push(ScheduleEntry::constant(
                    OperatingCondition::free_rolling(v, load),
                    FREE_STEP_REVS,
                ));
            }
        }
        for &v in &SPEEDS_FREE_KPH {
            entries.push(ScheduleEntry {
                condition: OperatingCondition::free_rolling(v, LOADS_N[0]),
                n_revolutions: FREE_TRIANGLE_REVS,
                sweep: Sweep::TriangularLoad {
                    low: 2000.0,
                    high: 6000.0,
                },
            });
        }
        for &v in &SPEEDS_LOADED_KPH {
            for &load in &LOADS_N {
                for &mag in &SLIP_MAGNITUDES_DEG {
                    for sign in [1.0, -1.0] {
                        entries.push(ScheduleEntry::constant(
                            OperatingCondition::cornering(v, load, sign * mag),
                            CORNER_STEP_REVS,
                        ));
                    }
                }
            }
        }
        let mut tri = CORNER_TRIANGLE_REVS.iter();
        for &v in &SPEEDS_LOADED_KPH {
            for &load in &LOADS_N {
                entries.push(ScheduleEntry {
                    condition: OperatingCondition::cornering(v, load, -6.0),
                    n_revolutions: *tri.next().expect("six triangle entries"),
                    sweep: Sweep::TriangularSlip {
                        low: -6.0,
                        high: 6.0,
                    },
                });
            }
        }
        for &v in &SPEEDS_LOADED_KPH {
            for &torque in &TORQUES_NM {
                entries.push(ScheduleEntry::constant(
                    OperatingCondition::driving(v, DRIVING_LOAD_N, torque),
                    DRIVE_STEP_REVS,
                ));
            }
        }
        Self {
            entries,
            rng_seed,
            noise,
        }
    }

    /// Keeps `conditions` entries spread evenly over the schedule.
    pub fn thinned(mut self, conditions: usize) -> Result<Self> {
        if conditions == 0 {
            return Err(Error::invalid("condition count must be >= 1"));
        }
        let n = self.entries.len();
        if conditions < n {
            self.entries = (0..conditions)
                .map(|i| self.entries[i * n / conditions].clone())
                .collect();
        }
        Ok(self)
    }

    /// Overrides every entry's revolution count.
    pub fn with_revolutions(mut self, revolutions: usize) -> Result<Self> {
        if revolutions == 0 {
            return Err(Error::invalid("revolution count must be >= 1"));
        }
        for e in &mut self.entries {
            e.n_revolutions = revolutions;
        }
        Ok(self)
    }

    pub fn total_revolutions(&self) -> usize {
        self.entries.iter().map(|e| e.n_revolutions).sum()
    }

    pub fn revolutions_of(&self, kind: ManeuverKind) -> usize {
        self.entries
            .iter()
            .filter(|e| e.condition.maneuver == kind)
            .map(|e| e.n_revolutions)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("schedule has no entries"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.n_revolutions == 0 {
                return Err(Error::invalid(format!("schedule entry {i} has 0 revolutions")));
            }
            e.condition.validate()?;
        }
        match self.noise {
            NoiseLevel::Std(s) if !(s.is_finite() && s >= 0.0) => {
                Err(Error::invalid("noise std must be finite and >= 0"))
            }
            NoiseLevel::SnrDb(db) if db.is_nan() => Err(Error::invalid("SNR must not be NaN")),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("schedule serializes");
        crate::hex(&Sha256::digest(&json))
    }
}

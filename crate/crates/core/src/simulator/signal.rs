use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::stream_rng;
use crate::simulator::{
    contact_half_angle, ground_truth_forces, ForceLabel, NoiseLevel, OperatingCondition,
    TestSchedule, TireParams,
};

/// Default DAQ rate, Hz.
pub const SAMPLE_RATE_HZ: f64 = 10_000.0;

/// Shape parameters of the synthetic inner-liner signal. All angles in
/// degrees; gains are relative to the centripetal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub sample_rate: f64,
    /// Encoder angle of the contact-patch center before jitter.
    pub patch_center_deg: f64,
    /// Uniform jitter of the patch center per revolution.
    pub center_jitter_deg: f64,
    /// Standard deviation of the boundary spikes in `ax`.
    pub spike_width_deg: f64,
    /// Width of the `az` collapse edges.
    pub edge_width_deg: f64,
    pub spike_gain: f64,
    /// Entry/exit spike asymmetry per unit fx/fz.
    pub spike_fx_gain: f64,
    /// In-patch tangential shear per unit fx/fz.
    pub shear_gain: f64,
    /// In-patch lateral level per unit fy/fz.
    pub lateral_gain: f64,
}

impl Default for SignalModel {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE_HZ,
            patch_center_deg: 180.0,
            center_jitter_deg: 5.0,
            spike_width_deg: 3.0,
            edge_width_deg: 2.0,
            spike_gain: 1.0,
            spike_fx_gain: 0.3,
            shear_gain: 0.2,
            lateral_gain: 0.3,
        }
    }
}

/// Where a revolution sits in its dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TraceId {
    pub trace: u64,
    /// Schedule entry index.
    pub entry: usize,
    /// Revolution index within the entry.
    pub revolution: usize,
}

/// Analytic contact-patch geometry known to the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchReference {
    pub center_deg: f64,
    pub half_angle_deg: f64,
}

/// One wheel revolution of tri-axial acceleration, m/s^2, indexed by
/// encoder angle in [0, 360).
#[derive(Debug, Clone, PartialEq)]
pub struct RevolutionTrace {
    pub id: TraceId,
    pub sample_rate: f64,
    pub angles: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
    pub condition: OperatingCondition,
    pub label: ForceLabel,
    /// Only present on simulated traces.
    pub reference: Option<PatchReference>,
}

impl RevolutionTrace {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Revolution period implied by the sample count, s.
    pub fn period(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Wheel angular speed implied by the sample count, rad/s.
    pub fn angular_speed(&self) -> f64 {
        2.0 * PI / self.period()
    }

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
}

/// Accelerometer axis: x tangential, y lateral, z radial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Ax,
    Ay,
    Az,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Ax, Channel::Ay, Channel::Az];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ax => "ax",
            Channel::Ay => "ay",
            Channel::Az => "az",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

fn gaussian(u: f64, width: f64) -> f64 {
    (-0.5 * (u / width).powi(2)).exp()
}

/// Noiseless signal shape per unit omega^2 (metres) at patch offset `phi`.
struct Shape {
    radius: f64,
    half: f64,
    fx_ratio: f64,
    fy_ratio: f64,
    model: SignalModel,
}

impl Shape {
    fn inside(&self, phi: f64) -> f64 {
        let w = self.model.edge_width_deg;
        0.5 * (((phi + self.half) / w).tanh() - ((phi - self.half) / w).tanh())
    }

    fn dome(&self, phi: f64) -> f64 {
        if phi.abs() >= self.half {
            return 0.0;
        }
        (PI * phi / (2.0 * self.half)).cos().powi(2)
    }

    fn lateral_profile(&self, phi: f64) -> f64 {
        if phi.abs() >= self.half {
            return 0.0;
        }
        let u = (phi + self.half) / (2.0 * self.half);
        (PI * u).sin().powi(2) * (0.5 + u)
    }

    fn eval(&self, phi: f64) -> [f64; 3] {
        let m = &self.model;
        let sw = m.spike_width_deg;
        let entry = m.spike_gain * (1.0 + m.spike_fx_gain * self.fx_ratio);
        let exit = m.spike_gain * (1.0 - m.spike_fx_gain * self.fx_ratio);
        let ax = entry * gaussian(phi + self.half, sw) - exit * gaussian(phi - self.half, sw)
            + m.shear_gain * self.fx_ratio * self.inside(phi) * self.dome(phi);
        let ay = m.lateral_gain * self.fy_ratio * self.inside(phi) * self.lateral_profile(phi);
        let az = 1.0 - self.inside(phi);
        [ax * self.radius, ay * self.radius, az * self.radius]
    }
}

fn wrap180(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

/// Synthesizes one revolution for a steady condition.
pub fn simulate_revolution<R: Rng + ?Sized>(
    cond: &OperatingCondition,
    tire: &TireParams,
    model: &SignalModel,
    noise: NoiseLevel,
    rng: &mut R,
) -> Result<RevolutionTrace> {
    let label = ground_truth_forces(cond, tire)?;
    let half = contact_half_angle(label.fz, tire)?;
    let slip_ratio = label.fx / tire.longitudinal_stiffness;
    let omega = cond.velocity / 3.6 / tire.effective_rolling_radius * (1.0 + slip_ratio);
    let n = (model.sample_rate * 2.0 * PI / omega).round().max(8.0) as usize;

    let jitter = if model.center_jitter_deg > 0.0 {
        rng.random_range(-model.center_jitter_deg..=model.center_jitter_deg)
    } else {
        0.0
    };
    let center = (model.patch_center_deg + jitter).rem_euclid(360.0);
    let shape = Shape {
        radius: tire.inner_liner_radius,
        half,
        fx_ratio: label.fx / label.fz,
        fy_ratio: label.fy / label.fz,
        model: *model,
    };

    let omega2 = omega * omega;
    let mut angles = Vec::with_capacity(n);
    let mut chans = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut power = 0.0;
    for i in 0..n {
        let angle = i as f64 * 360.0 / n as f64;
        let g = shape.eval(wrap180(angle - center));
        angles.push(angle);
        for (c, v) in chans.iter_mut().zip(g) {
            let a = omega2 * v;
            power += a * a;
            c.push(a);
        }
    }
    power /= (3 * n) as f64;

    if !noise.is_silent() {
        let std = noise.std_for(power);
        for c in chans.iter_mut() {
            for v in c.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += std * z;
            }
        }
    }

    let [ax, ay, az] = chans;
    Ok(RevolutionTrace {
        id: TraceId::default(),
        sample_rate: model.sample_rate,
        angles,
        ax,
        ay,
        az,
        condition: *cond,
        label,
        reference: Some(PatchReference {
            center_deg: center,
            half_angle_deg: half,
        }),
    })
}

/// One trace per scheduled revolution, in schedule order. Revolution `k`
/// draws from stream `k` of the schedule seed.
pub fn generate_dataset(
    schedule: &TestSchedule,
    tire: &TireParams,
    model: &SignalModel,
) -> Result<Vec<RevolutionTrace>> {
    simulate_schedule(schedule, tire, model)?.collect()
}

/// Lazy form of [`generate_dataset`], for runs too large to hold every raw
/// trace in memory.
pub fn simulate_schedule<'a>(
    schedule: &'a TestSchedule,
    tire: &'a TireParams,
    model: &'a SignalModel,
) -> Result<impl Iterator<Item = Result<RevolutionTrace>> + 'a> {
    schedule.validate()?;
    tire.validate()?;
    let revs = schedule
        .entries
        .iter()
        .enumerate()
        .flat_map(|(e, entry)| (0..entry.n_revolutions).map(move |r| (e, entry, r)));
    Ok(revs.enumerate().map(move |(k, (entry_idx, entry, rev))| {
        let k = k as u64;
        let cond = entry.condition_at(rev);
        let mut rng = stream_rng(schedule.rng_seed, k);
        let mut trace = simulate_revolution(&cond, tire, model, schedule.noise, &mut rng)?;
        trace.id = TraceId {
            trace: k,
            entry: entry_idx,
            revolution: rev,
        };
        Ok(trace)
    }))
}

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tireforce::mlp::MlpNetwork;
use tireforce::preprocess::{
    angular_resample, compensate_speed, detect_contact_patch, lowpass_filter, process_trace, PreprocessConfig, Range,
};
use tireforce::rnn::{Activation, RnnNetwork, SequenceSet};
use tireforce::rng::stream_rng;
use tireforce::simulator::{
    simulate_revolution, Channel, NoiseLevel, OperatingCondition, RevolutionTrace, SignalModel, TireParams,
};
use tireforce::FeatureSet;

const H: f64 = 1e-6;

/// |a - n| / max(|a|, |n|, 1e-5 * max(1, loss)). A central difference
/// with step `H` carries rounding noise near `eps * loss / H`, about 1e-10
/// times the loss, so components far below the floor cannot be resolved.
pub fn rel_err(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-5 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Worst relative error between backprop and central differences on one
/// random network and batch.
pub fn mlp_gradient_instance(seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let input = rng.random_range(1..8);
    let mut sizes = vec![input];
    for _ in 0..rng.random_range(1..4) {
        sizes.push(rng.random_range(1..7));
    }
    sizes.push(1);
    let mut net = MlpNetwork::zeros(&sizes).unwrap();
    let n = net.params().len();
    net.params_mut().copy_from_slice(&rand_vec(&mut rng, n, 1.0));
    let batch = rng.random_range(1..12);
    let rows: Vec<Vec<f64>> = (0..batch).map(|_| rand_vec(&mut rng, input, 1.0)).collect();
    let y = rand_vec(&mut rng, batch, 1.0);
    let set = FeatureSet::from_rows(&rows, &y).unwrap();
    let (loss, grad) = net.loss_and_gradient(&set).unwrap();
    let mut worst = 0.0f64;
    for k in 0..n {
        let orig = net.params()[k];
        net.params_mut()[k] = orig + H;
        let up = net.mse(&set).unwrap();
        net.params_mut()[k] = orig - H;
        let down = net.mse(&set).unwrap();
        net.params_mut()[k] = orig;
        worst = worst.max(rel_err(grad[k], (up - down) / (2.0 * H), loss));
    }
    worst
}

/// Same check for backpropagation through time. Instance 0 is the tiny
/// cell with 3 inputs, 2 hidden units and 3 steps.
pub fn rnn_gradient_instance(seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 1);
    let (input, hidden, len) = if seed == 0 {
        (3, vec![2], 3)
    } else {
        let layers = rng.random_range(1..3);
        (
            rng.random_range(1..5),
            (0..layers).map(|_| rng.random_range(1..5)).collect(),
            rng.random_range(1..6),
        )
    };
    let act = if seed % 2 == 0 { Activation::Logistic } else { Activation::Tanh };
    let mut net = RnnNetwork::zeros(input, &hidden, act).unwrap();
    let n = net.params().len();
    net.params_mut().copy_from_slice(&rand_vec(&mut rng, n, 1.0));
    let count = rng.random_range(1..6);
    let mut set = SequenceSet::new(input, len);
    for _ in 0..count {
        let steps = rand_vec(&mut rng, input * len, 1.0);
        set.push(&steps, rng.random_range(-1.0..1.0), Default::default()).unwrap();
    }
    let all: Vec<usize> = (0..count).collect();
    let (loss, grad) = net.loss_and_gradient(&set, &all).unwrap();
    let mut worst = 0.0f64;
    for k in 0..n {
        let orig = net.params()[k];
        net.params_mut()[k] = orig + H;
        let up = net.mse(&set).unwrap();
        net.params_mut()[k] = orig - H;
        let down = net.mse(&set).unwrap();
        net.params_mut()[k] = orig;
        worst = worst.max(rel_err(grad[k], (up - down) / (2.0 * H), loss));
    }
    worst
}

pub fn simulate(cond: &OperatingCondition, noise: NoiseLevel, seed: u64, k: u64) -> RevolutionTrace {
    let mut rng = stream_rng(seed, k);
    simulate_revolution(cond, &TireParams::default(), &SignalModel::default(), noise, &mut rng).unwrap()
}

/// Free rolling, cornering and driving settings across the rig ranges.
pub fn conditions() -> Vec<OperatingCondition> {
    let mut out = Vec::new();
    for v in [30.0, 60.0, 90.0] {
        for load in [2080.0, 4160.0, 6240.0] {
            out.push(OperatingCondition::free_rolling(v, load));
        }
    }
    for v in [30.0, 60.0] {
        for load in [2080.0, 6240.0] {
            for slip in [-6.0, -2.5, 1.0, 4.0] {
                out.push(OperatingCondition::cornering(v, load, slip));
            }
        }
        for torque in [207.0, 442.0, 650.0] {
            out.push(OperatingCondition::driving(v, 2080.0, torque));
        }
    }
    out
}

pub fn circular_diff(a: f64, b: f64) -> f64 {
    ((a - b + 180.0).rem_euclid(360.0) - 180.0).abs()
}

/// Worst entry/exit error over [`conditions`] without noise, in samples.
pub fn noiseless_detection_worst_samples() -> f64 {
    let cfg = PreprocessConfig::default();
    let mut worst = 0.0f64;
    for (k, cond) in conditions().iter().enumerate() {
        let raw = simulate(cond, NoiseLevel::Std(0.0), 11, k as u64);
        let r = raw.reference.unwrap();
        let step = 360.0 / raw.len() as f64;
        let filtered = lowpass_filter(&raw, cfg.cutoff_hz, cfg.filter_order).unwrap();
        let m = detect_contact_patch(&filtered, cfg.prominence_mads).unwrap();
        let e_entry = circular_diff(m.entry_deg, r.center_deg - r.half_angle_deg);
        let e_exit = circular_diff(m.exit_deg, r.center_deg + r.half_angle_deg);
        worst = worst.max(e_entry.max(e_exit) / step);
    }
    worst
}

/// Worst entry/exit error in degrees over `n` traces at 20 dB SNR.
pub fn snr20_detection_worst_deg(n: u64) -> f64 {
    let cfg = PreprocessConfig::default();
    let conds = conditions();
    let mut worst = 0.0f64;
    for k in 0..n {
        let cond = &conds[k as usize % conds.len()];
        let raw = simulate(cond, NoiseLevel::SnrDb(20.0), 29, k);
        let r = raw.reference.unwrap();
        let filtered = lowpass_filter(&raw, cfg.cutoff_hz, cfg.filter_order).unwrap();
        let m = detect_contact_patch(&filtered, cfg.prominence_mads).unwrap();
        let e = circular_diff(m.entry_deg, r.center_deg - r.half_angle_deg)
            .max(circular_diff(m.exit_deg, r.center_deg + r.half_angle_deg));
        worst = worst.max(e);
    }
    worst
}

/// Largest difference between the 30 and 90 km/h windows of one condition,
/// as a fraction of the channel range. Both noiseless.
pub fn speed_pair(cond: OperatingCondition, filter: bool) -> f64 {
    let cfg = PreprocessConfig::default();
    let windows: Vec<_> = [30.0, 90.0]
        .iter()
        .map(|&v| {
            let c = OperatingCondition { velocity: v, ..cond };
            let raw = simulate(&c, NoiseLevel::Std(0.0), 5, 0);
            if filter {
                process_trace(&raw, &cfg).unwrap()
            } else {
                let m = detect_contact_patch(&raw, cfg.prominence_mads).unwrap();
                angular_resample(&compensate_speed(&raw), &m, &cfg.window).unwrap()
            }
        })
        .collect();
    let mut worst = 0.0f64;
    for ch in Channel::ALL {
        let (a, b) = (windows[0].channel(ch), windows[1].channel(ch));
        let range = Range::of(a.iter().copied()).width();
        if range < 1e-12 {
            continue;
        }
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(d / range);
    }
    worst
}

pub fn speed_invariance_conditions() -> [OperatingCondition; 4] {
    [
        OperatingCondition::free_rolling(30.0, 2080.0),
        OperatingCondition::free_rolling(30.0, 6240.0),
        OperatingCondition::cornering(30.0, 4160.0, 3.0),
        OperatingCondition::driving(30.0, 2080.0, 565.0),
    ]
}

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sequence::SequenceSet;
use crate::error::{Error, Result};
use crate::mlp::logistic;
use crate::rng::stream_rng;
use crate::textfmt::{join, parse, LineReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Activation::Logistic),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Stacked Elman layers with a linear scalar head. The hidden state of every
/// layer starts at zero for each sequence; the output is read at the last
/// step.
///
/// Flat parameter layout, per layer `l` with input width `i` and width `h`:
/// input weights `i x h`, recurrent weights `h x h`, biases `h`; then the
/// head weights `h_last` and the head bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnNetwork {
    input_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

struct LayerView {
    wx: usize,
    wh: usize,
    b: usize,
    inputs: usize,
    width: usize,
}

impl RnnNetwork {
    pub fn zeros(input_dim: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        if input_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "bad recurrent layout: input {input_dim}, hidden {hidden:?}"
            )));
        }
        let mut n = 0;
        let mut prev = input_dim;
        for &h in hidden {
            n += prev * h + h * h + h;
            prev = h;
        }
        n += prev + 1;
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            params: vec![0.0; n],
        })
    }

    /// Input weights and biases uniform in `+-1/sqrt(inputs)`, recurrent
    /// weights in `+-1/sqrt(width)`.
    pub fn init(input_dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden, activation)?;
        let mut rng = stream_rng(seed, 0);
        for v in net.layers() {
            let bi = 1.0 / (v.inputs as f64).sqrt();
            let bh = 1.0 / (v.width as f64).sqrt();
            for p in &mut net.params[v.wx..v.wh] {
                *p = rng.random_range(-bi..=bi);
            }
            for p in &mut net.params[v.wh..v.b] {
                *p = rng.random_range(-bh..=bh);
            }
            for p in &mut net.params[v.b..v.b + v.width] {
                *p = rng.random_range(-bi..=bi);
            }
        }
        let head = net.head_offset();
        let bo = 1.0 / (*hidden.last().unwrap() as f64).sqrt();
        for p in &mut net.params[head..] {
            *p = rng.random_range(-bo..=bo);
        }
        Ok(net)
    }

    fn layers(&self) -> Vec<LayerView> {
        let mut out = Vec::with_capacity(self.hidden.len());
        let (mut off, mut prev) = (0, self.input_dim);
        for &h in &self.hidden {
            out.push(LayerView {
                wx: off,
                wh: off + prev * h,
                b: off + prev * h + h * h,
                inputs: prev,
                width: h,
            });
            off += prev * h + h * h + h;
            prev = h;
        }
        out
    }

    fn head_offset(&self) -> usize {
        self.params.len() - self.hidden.last().unwrap() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes every recurrent weight matrix.
    pub fn clear_recurrence(&mut self) {
        for v in self.layers() {
            self.params[v.wh..v.b].fill(0.0);
        }
    }

    fn check(&self, steps: &[f64], len: usize) -> Result<()> {
        if len == 0 || steps.len() != len * self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: len.max(1) * self.input_dim,
                actual: steps.len(),
            });
        }
        Ok(())
    }

    /// Runs a sequence of `len` steps and keeps every layer's states:
    /// `states[l][t * width + k]`.
    fn run(&self, steps: &[f64], len: usize, views: &[LayerView], states: &mut [Vec<f64>]) -> f64 {
        for (l, v) in views.iter().enumerate() {
            let (below, rest) = states.split_at_mut(l);
            let out = &mut rest[0];
            out.clear();
            out.resize(len * v.width, 0.0);
            let wx = &self.params[v.wx..v.wh];
            let wh = &self.params[v.wh..v.b];
            let b = &self.params[v.b..v.b + v.width];
            for t in 0..len {
                let input = if l == 0 {
                    &steps[t * v.inputs..(t + 1) * v.inputs]
                } else {
                    &below[l - 1][t * v.inputs..(t + 1) * v.inputs]
                };
                let (done, cur) = out.split_at_mut(t * v.width);
                let z = &mut cur[..v.width];
                z.copy_from_slice(b);
                for (xi, row) in input.iter().zip(wx.chunks_exact(v.width)) {
                    for (zk, w) in z.iter_mut().zip(row) {
                        *zk += xi * w;
                    }
                }
                if t > 0 {
                    let prev = &done[(t - 1) * v.width..];
                    for (hj, row) in prev.iter().zip(wh.chunks_exact(v.width)) {
                        for (zk, w) in z.iter_mut().zip(row) {
                            *zk += hj * w;
                        }
                    }
                }
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
        let last = views.last().unwrap();
        let top = &states[views.len() - 1][(len - 1) * last.width..len * last.width];
        let head = self.head_offset();
        let (wo, bo) = self.params[head..].split_at(last.width);
        bo[0] + top.iter().zip(wo).map(|(h, w)| h * w).sum::<f64>()
    }

    pub fn predict_sequence(&self, steps: &[f64], len: usize) -> Result<f64> {
        self.check(steps, len)?;
        let views = self.layers();
        let mut states = vec![Vec::new(); views.len()];
        Ok(self.run(steps, len, &views, &mut states))
    }

    pub fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        if set.step_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: set.step_dim(),
            });
        }
        let views = self.layers();
        let mut states = vec![Vec::new(); views.len()];
        Ok((0..set.len())
            .map(|i| self.run(set.sequence(i), set.seq_len(), &views, &mut states))
            .collect())
    }

    pub fn mse(&self, set: &SequenceSet) -> Result<f64> {
        let p = self.predict(set)?;
        Ok(p.iter()
            .zip(set.targets())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / set.len().max(1) as f64)
    }

    /// Mean squared error over the selected sequences and its exact gradient
    /// by backpropagation through time.
    pub fn loss_and_gradient(&self, set: &SequenceSet, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if set.step_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: set.step_dim(),
            });
        }
        let len = set.seq_len();
        let views = self.layers();
        let nl = views.len();
        let mut states = vec![Vec::new(); nl];
        let mut grad = vec![0.0; self.params.len()];
        // d_out[l][t * width + k]: loss gradient w.r.t. layer l's state at t
        // arriving from above.
        let mut d_out: Vec<Vec<f64>> = views.iter().map(|v| vec![0.0; len * v.width]).collect();
        let mut carry: Vec<Vec<f64>> = views.iter().map(|v| vec![0.0; v.width]).collect();
        let mut dz: Vec<f64> = Vec::new();
        let head = self.head_offset();
        let scale = 2.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let steps = set.sequence(i);
            let err = self.run(steps, len, &views, &mut states) - set.target(i);
            loss += err * err;
            let dy = scale * err;
            let top = &views[nl - 1];
            let h_top = &states[nl - 1][(len - 1) * top.width..len * top.width];
            for (g, h) in grad[head..head + top.width].iter_mut().zip(h_top) {
                *g += dy * h;
            }
            grad[head + top.width] += dy;
            d_out.iter_mut().for_each(|d| d.fill(0.0));
            let wo = &self.params[head..head + top.width];
            for (d, w) in d_out[nl - 1][(len - 1) * top.width..].iter_mut().zip(wo) {
                *d = dy * w;
            }
            for l in (0..nl).rev() {
                let v = &views[l];
                let (lower, upper) = d_out.split_at_mut(l);
                let d_here = &upper[0];
                let c = &mut carry[l];
                c.fill(0.0);
                for t in (0..len).rev() {
                    let h = &states[l][t * v.width..(t + 1) * v.width];
                    dz.clear();
                    dz.extend(
                        h.iter()
                            .zip(&d_here[t * v.width..(t + 1) * v.width])
                            .zip(c.iter())
                            .map(|((&a, &d), &cr)| (d + cr) * self.activation.slope(a)),
                    );
                    let input = if l == 0 {
                        &steps[t * v.inputs..(t + 1) * v.inputs]
                    } else {
                        &states[l - 1][t * v.inputs..(t + 1) * v.inputs]
                    };
                    let (gx, rest) = grad[v.wx..v.b + v.width].split_at_mut(v.inputs * v.width);
                    let (gh, gb) = rest.split_at_mut(v.width * v.width);
                    for (g, d) in gb.iter_mut().zip(&dz) {
                        *g += d;
                    }
                    for (xi, row) in input.iter().zip(gx.chunks_exact_mut(v.width)) {
                        for (g, d) in row.iter_mut().zip(&dz) {
                            *g += xi * d;
                        }
                    }
                    let wh = &self.params[v.wh..v.b];
                    if t > 0 {
                        let prev = &states[l][(t - 1) * v.width..t * v.width];
                        for (hj, row) in prev.iter().zip(gh.chunks_exact_mut(v.width)) {
                            for (g, d) in row.iter_mut().zip(&dz) {
                                *g += hj * d;
                            }
                        }
                    }
                    for (cj, row) in c.iter_mut().zip(wh.chunks_exact(v.width)) {
                        *cj = row.iter().zip(&dz).map(|(w, d)| w * d).sum();
                    }
                    if l > 0 {
                        let wx = &self.params[v.wx..v.wh];
                        let below = &mut lower[l - 1][t * v.inputs..(t + 1) * v.inputs];
                        for (bj, row) in below.iter_mut().zip(wx.chunks_exact(v.width)) {
                            *bj += row.iter().zip(&dz).map(|(w, d)| w * d).sum::<f64>();
                        }
                    }
                }
            }
        }
        Ok((loss / batch.len() as f64, grad))
    }

    pub(crate) fn write_text(&self, s: &mut String) {
        let _ = writeln!(s, "cell elman");
        let _ = writeln!(s, "activation {}", self.activation.as_str());
        let _ = writeln!(s, "input {}", self.input_dim);
        let _ = writeln!(s, "hidden {}", join(&self.hidden));
        for (l, v) in self.layers().iter().enumerate() {
            let _ = writeln!(s, "input_weights {l} {} {}", v.inputs, v.width);
            for row in self.params[v.wx..v.wh].chunks_exact(v.width) {
                let _ = writeln!(s, "{}", join(row));
            }
            let _ = writeln!(s, "recurrent_weights {l} {} {}", v.width, v.width);
            for row in self.params[v.wh..v.b].chunks_exact(v.width) {
                let _ = writeln!(s, "{}", join(row));
            }
            let _ = writeln!(s, "biases {}", join(&self.params[v.b..v.b + v.width]));
        }
        let head = self.head_offset();
        let _ = writeln!(s, "head_weights {}", join(&self.params[head..self.params.len() - 1]));
        let _ = writeln!(s, "head_bias {}", self.params[self.params.len() - 1]);
    }

    pub(crate) fn read_text(r: &mut LineReader<'_>) -> Result<Self> {
        if r.expect("cell")? != ["elman"] {
            return Err(Error::format("only elman cells are supported"));
        }
        let act = match r.expect("activation")?[..] {
            [a] => Activation::parse(a).map_err(|e| Error::format(e.to_string()))?,
            _ => return Err(Error::format("bad activation line")),
        };
        let input: usize = match r.expect("input")?[..] {
            [a] => parse(a)?,
            _ => return Err(Error::format("bad input line")),
        };
        let hidden = r
            .expect("hidden")?
            .iter()
            .map(|s| parse::<usize>(s))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(input, &hidden, act).map_err(|e| Error::format(e.to_string()))?;
        let rows = |r: &mut LineReader<'_>, n: usize, width: usize, out: &mut [f64]| -> Result<()> {
            for k in 0..n {
                let vals = r.floats()?;
                if vals.len() != width {
                    return Err(Error::format(format!("row has {} values, expected {width}", vals.len())));
                }
                out[k * width..(k + 1) * width].copy_from_slice(&vals);
            }
            Ok(())
        };
        for (l, v) in net.layers().iter().enumerate() {
            let want = [l.to_string(), v.inputs.to_string(), v.width.to_string()];
            if r.expect("input_weights")? != want {
                return Err(Error::format(format!("bad input_weights header for layer {l}")));
            }
            rows(r, v.inputs, v.width, &mut net.params[v.wx..v.wh])?;
            let want = [l.to_string(), v.width.to_string(), v.width.to_string()];
            if r.expect("recurrent_weights")? != want {
                return Err(Error::format(format!("bad recurrent_weights header for layer {l}")));
            }
            rows(r, v.width, v.width, &mut net.params[v.wh..v.b])?;
            let b = r.expect_floats("biases")?;
            if b.len() != v.width {
                return Err(Error::format(format!("layer {l}: {} biases", b.len())));
            }
            net.params[v.b..v.b + v.width].copy_from_slice(&b);
        }
        let head = net.head_offset();
        let wo = r.expect_floats("head_weights")?;
        let bo = r.expect_floats("head_bias")?;
        if wo.len() != net.params.len() - 1 - head || bo.len() != 1 {
            return Err(Error::format("bad head shape"));
        }
        let n = net.params.len();
        net.params[head..n - 1].copy_from_slice(&wo);
        net.params[n - 1] = bo[0];
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::format("non-finite parameter"));
        }
        Ok(net)
    }
}

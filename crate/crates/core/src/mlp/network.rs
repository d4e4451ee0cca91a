use std::fmt::Write as _;

use rand::Rng;

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::textfmt::{join, parse, LineReader};

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fully connected network. Hidden layers are logistic, the last layer is
/// linear. Parameters live in one flat vector: for each layer the
/// `inputs x outputs` weight matrix (row-major, one row per input) followed
/// by the `outputs` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl MlpNetwork {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer layout {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = stream_rng(seed, 0);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + (w[0] + 1) * w[1]] {
                *p = rng.random_range(-bound..=bound);
            }
            off += (w[0] + 1) * w[1];
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// `(inputs, outputs)` of each weight matrix.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Weight matrix and bias vector of `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer);
        let block = &self.params[off..off + (i + 1) * o];
        block.split_at(i * o)
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer);
        let block = &mut self.params[off..off + (i + 1) * o];
        block.split_at_mut(i * o)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut acts = self.activations_buffer();
        Ok(self.forward_into(x, &mut acts))
    }

    pub fn predict(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        if set.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: set.dim(),
            });
        }
        let mut acts = self.activations_buffer();
        Ok(set.rows().map(|r| self.forward_into(r, &mut acts)).collect())
    }

    fn activations_buffer(&self) -> Vec<Vec<f64>> {
        self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect()
    }

    /// Fills `acts[l]` with the outputs of layer `l`.
    fn forward_into(&self, x: &[f64], acts: &mut [Vec<f64>]) -> f64 {
        let last = self.n_layers() - 1;
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.params[off..off + (ni + 1) * no].split_at(ni * no);
            off += (ni + 1) * no;
            let (prev, rest) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            let out = &mut rest[0];
            out.copy_from_slice(b);
            for (xi, row) in input.iter().zip(w.chunks_exact(no)) {
                for (o, wij) in out.iter_mut().zip(row) {
                    *o += xi * wij;
                }
            }
            if l != last {
                out.iter_mut().for_each(|z| *z = logistic(*z));
            }
        }
        acts[last][0]
    }

    /// Mean squared error over the set and its gradient with respect to
    /// every parameter, in `params()` order.
    pub fn loss_and_gradient(&self, set: &FeatureSet) -> Result<(f64, Vec<f64>)> {
        if set.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if set.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: set.dim(),
            });
        }
        let n = set.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut acts = self.activations_buffer();
        let mut deltas = self.activations_buffer();
        let offsets: Vec<usize> = (0..self.n_layers()).map(|l| self.offset(l)).collect();
        let mut loss = 0.0;
        for (i, x) in set.rows().enumerate() {
            let err = self.forward_into(x, &mut acts) - set.target(i);
            loss += err * err;
            let last = self.n_layers() - 1;
            deltas[last][0] = 2.0 * err / n;
            for l in (0..self.n_layers()).rev() {
                let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                let (gw, gb) = grad[off..off + (ni + 1) * no].split_at_mut(ni * no);
                let delta = &deltas[l];
                for (g, d) in gb.iter_mut().zip(delta) {
                    *g += d;
                }
                for (xi, grow) in input.iter().zip(gw.chunks_exact_mut(no)) {
                    for (g, d) in grow.iter_mut().zip(delta) {
                        *g += xi * d;
                    }
                }
                if l > 0 {
                    let w = &self.params[off..off + ni * no];
                    let (lower, upper) = deltas.split_at_mut(l);
                    let delta = &upper[0];
                    for (k, row) in w.chunks_exact(no).enumerate() {
                        let s: f64 = row.iter().zip(delta).map(|(a, b)| a * b).sum();
                        let a = acts[l - 1][k];
                        lower[l - 1][k] = s * a * (1.0 - a);
                    }
                }
            }
        }
        Ok((loss / n, grad))
    }

    pub fn mse(&self, set: &FeatureSet) -> Result<f64> {
        let p = self.predict(set)?;
        Ok(p.iter()
            .zip(set.targets())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / set.len().max(1) as f64)
    }

    pub(crate) fn write_text(&self, s: &mut String) {
        let names: Vec<&str> = (0..self.n_layers())
            .map(|l| if l + 1 == self.n_layers() { "identity" } else { "logistic" })
            .collect();
        let _ = writeln!(s, "layers {}", join(&self.sizes));
        let _ = writeln!(s, "activations {}", names.join(" "));
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let _ = writeln!(s, "weights {l} {ni} {no}");
            for row in w.chunks_exact(no) {
                let _ = writeln!(s, "{}", join(row));
            }
            let _ = writeln!(s, "biases {}", join(b));
        }
    }

    pub(crate) fn read_text(r: &mut LineReader<'_>) -> Result<Self> {
        let sizes = r
            .expect("layers")?
            .iter()
            .map(|s| parse::<usize>(s))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&sizes)?;
        let acts = r.expect("activations")?;
        for (l, a) in acts.iter().enumerate() {
            let want = if l + 1 == net.n_layers() { "identity" } else { "logistic" };
            if *a != want {
                return Err(Error::format(format!("layer {l}: unsupported activation '{a}'")));
            }
        }
        if acts.len() != net.n_layers() {
            return Err(Error::format("activation count does not match layers"));
        }
        for l in 0..net.n_layers() {
            let (ni, no) = (sizes[l], sizes[l + 1]);
            let head = r.expect("weights")?;
            if head != [l.to_string(), ni.to_string(), no.to_string()] {
                return Err(Error::format(format!("bad weights header for layer {l}")));
            }
            let (w, b) = net.layer_mut(l);
            for row in w.chunks_exact_mut(no) {
                let vals = r.floats()?;
                if vals.len() != no {
                    return Err(Error::format(format!("layer {l}: row has {} values", vals.len())));
                }
                row.copy_from_slice(&vals);
            }
            let vals = r.expect_floats("biases")?;
            if vals.len() != no {
                return Err(Error::format(format!("layer {l}: {} biases", vals.len())));
            }
            b.copy_from_slice(&vals);
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::format("non-finite parameter"));
        }
        Ok(net)
    }
}

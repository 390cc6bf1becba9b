//! Dense tanh networks over flat parameter slices, with manual backprop and
//! an Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use coolsim_core::{Error, Result};

/// Layer widths `[in, h1, ..., out]`. Each layer stores its weights
/// (row-major `out x in`) followed by its biases. Hidden layers use tanh;
/// the last layer is affine unless `activate_last`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activate_last: bool,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward ran")
    }
}

impl Mlp {
    pub fn new(sizes: &[usize], activate_last: bool) -> Self {
        assert!(sizes.len() >= 2, "an Mlp needs at least one layer");
        Self {
            sizes: sizes.to_vec(),
            activate_last,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers() || self.activate_last
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; the last layer is scaled by
    /// `last_gain`.
    pub fn init<R: Rng>(&self, rng: &mut R, last_gain: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for (l, w) in self.sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let gain = if l + 1 == self.layers() { last_gain } else { 1.0 };
            for _ in 0..w[0] * w[1] {
                p.push(gain * bound * (2.0 * rng.random::<f64>() - 1.0));
            }
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        p
    }

    pub fn check(&self, p: &[f64], x: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape {
                op: "mlp parameters",
                expected: self.num_params(),
                got: p.len(),
            });
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, p: &[f64], x: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(p.len(), self.num_params());
        debug_assert_eq!(x.len(), self.input_dim());
        cache.acts.resize(self.sizes.len(), Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &p[off..off + n_in * n_out];
            let b = &p[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (before, after) = cache.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            out.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(z);
            }
            if self.activated(l) {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut c = MlpCache::default();
        self.forward_cached(p, x, &mut c);
        c.acts.pop().unwrap()
    }

    /// Accumulates `d(grad_out . y)/dp` into `grad_p` and returns `d/dx`.
    pub fn backward(&self, p: &[f64], cache: &MlpCache, grad_out: &[f64], grad_p: &mut [f64]) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        let mut offsets = Vec::with_capacity(self.layers());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if self.activated(l) {
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let off = offsets[l];
            let input = &cache.acts[l];
            let (gw, gb) = grad_p[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let w = &p[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (nx, wv) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *nx += d * wv;
                    }
                }
            }
            delta = next;
        }
        delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

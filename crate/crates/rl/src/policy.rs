//! Actors and critics for the cabinet and tower agents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use coolsim_core::{Error, Result, SystemTopology};

use crate::dist::{
    self, dirichlet_entropy, dirichlet_entropy_grad, dirichlet_logpdf_grad, dirichlet_logpdf_unchecked,
    gaussian_entropy, gaussian_logpdf,
};
use crate::nn::{sigmoid, softmax, softplus, Mlp, MlpCache};

pub const ALPHA_FLOOR: f64 = 1e-3;

/// Fixed affine observation normalization `(x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsScaler {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ObsScaler {
    pub fn identity(n: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn blade(topo: &SystemTopology) -> Self {
        let b = topo.blade_groups_per_cabinet;
        let p = topo.cabinet.nominal_power;
        let mut offset = vec![303.15; b];
        offset.extend(std::iter::repeat_n(0.5 * p, b));
        let mut scale = vec![10.0; b];
        scale.extend(std::iter::repeat_n(0.5 * p, b));
        Self { offset, scale }
    }

    pub fn tower(topo: &SystemTopology) -> Self {
        let m = topo.cells_per_tower;
        let n = topo.num_towers;
        let pf = topo.tower.fan.p_nom;
        let mut offset = vec![0.0; m];
        let mut scale = vec![0.1 * pf; m];
        offset.extend(std::iter::repeat_n(298.15, n));
        scale.extend(std::iter::repeat_n(5.0, n));
        offset.push(288.15);
        scale.push(5.0);
        Self { offset, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.offset.len() {
            return Err(Error::Shape {
                op: "observation",
                expected: self.offset.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.offset).zip(&self.scale).map(|((v, o), s)| (v - o) / s).collect())
    }
}

/// Exploration std of the continuous head: linear decay per completed
/// episode, floored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionStd {
    pub init: f64,
    pub decay: f64,
    pub min: f64,
    pub current: f64,
}

impl ActionStd {
    pub fn new(init: f64, decay: f64, min: f64) -> Self {
        Self {
            init,
            decay,
            min,
            current: init.max(min),
        }
    }

    pub fn decay_step(&mut self) {
        self.current = (self.current - self.decay).max(self.min);
    }
}

impl Default for ActionStd {
    fn default() -> Self {
        Self::new(0.6, 5e-4, 0.1)
    }
}

/// Trunk plus two heads: tanh-squashed (setpoint, flow) means and
/// softplus Dirichlet concentrations over the valves. Parameters are laid
/// out `[trunk | head1 | head2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadActor {
    pub trunk: Mlp,
    pub head1: Mlp,
    pub head2: Mlp,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ActorScratch {
    trunk: MlpCache,
    head1: MlpCache,
    head2: MlpCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BladeSample {
    /// Pre-clamp Gaussian draw.
    pub raw: [f64; 2],
    pub clamped: [f64; 2],
    pub valves: Vec<f64>,
    pub logprob: f64,
}

impl BladeSample {
    /// Stored action vector: `[raw setpoint, raw flow, valves...]`.
    pub fn action(&self) -> Vec<f64> {
        let mut a = self.raw.to_vec();
        a.extend_from_slice(&self.valves);
        a
    }
}

impl MultiHeadActor {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], valves: usize, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, true);
        let h = trunk.output_dim();
        let head1 = Mlp::new(&[h, 2], false);
        let head2 = Mlp::new(&[h, valves], false);
        let mut params = trunk.init(rng, 1.0);
        params.extend(head1.init(rng, 0.01));
        params.extend(head2.init(rng, 0.01));
        Self {
            trunk,
            head1,
            head2,
            params,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.head1.num_params() + self.head2.num_params()
    }

    pub fn valves(&self) -> usize {
        self.head2.output_dim()
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let (t, rest) = self.params.split_at(self.trunk.num_params());
        let (h1, h2) = rest.split_at(self.head1.num_params());
        (t, h1, h2)
    }

    fn run(&self, obs: &[f64], s: &mut ActorScratch) {
        let (t, h1, h2) = self.split();
        self.trunk.forward_cached(t, obs, &mut s.trunk);
        self.head1.forward_cached(h1, s.trunk.output(), &mut s.head1);
        self.head2.forward_cached(h2, s.trunk.output(), &mut s.head2);
    }

    /// `(tanh means, concentrations)`.
    pub fn forward(&self, obs: &[f64]) -> Result<([f64; 2], Vec<f64>)> {
        self.trunk.check(self.split().0, obs)?;
        let mut s = ActorScratch::default();
        self.run(obs, &mut s);
        let z1 = s.head1.output();
        let mean = [z1[0].tanh(), z1[1].tanh()];
        let alpha = s.head2.output().iter().map(|z| softplus(*z) + ALPHA_FLOOR).collect();
        Ok((mean, alpha))
    }

    pub fn sample<R: Rng>(&self, obs: &[f64], std: f64, rng: &mut R) -> Result<BladeSample> {
        let (mean, alpha) = self.forward(obs)?;
        let mut raw = [0.0; 2];
        for d in 0..2 {
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            raw[d] = mean[d] + std * n;
        }
        let valves = dist::sample_dirichlet(&alpha, rng);
        let logprob = gaussian_logpdf(raw[0], mean[0], std)
            + gaussian_logpdf(raw[1], mean[1], std)
            + dirichlet_logpdf_unchecked(&valves, &alpha);
        Ok(BladeSample {
            raw,
            clamped: [raw[0].clamp(-1.0, 1.0), raw[1].clamp(-1.0, 1.0)],
            valves,
            logprob,
        })
    }

    /// Modal action: head-1 means and the Dirichlet mean.
    pub fn modal(&self, obs: &[f64]) -> Result<([f64; 2], Vec<f64>)> {
        let (mean, alpha) = self.forward(obs)?;
        Ok((mean, dist::dirichlet_mean(&alpha)))
    }

    /// Log-probability and entropy of a stored action; when `grad` is given,
    /// accumulates `d(c_lp * logp + c_h * H)/dparams` into it.
    pub fn evaluate(
        &self,
        obs: &[f64],
        action: &[f64],
        std: f64,
        coefs: Option<(f64, f64, &mut [f64])>,
        s: &mut ActorScratch,
    ) -> (f64, f64) {
        match coefs {
            Some((a, b, g)) => self.evaluate_with(obs, action, std, |_, _| (a, b), Some(g), s),
            None => self.evaluate_with(obs, action, std, |_, _| (0.0, 0.0), None, s),
        }
    }

    /// Like `evaluate`, with the coefficients chosen from `(logp, entropy)`
    /// after the forward pass.
    pub fn evaluate_with(
        &self,
        obs: &[f64],
        action: &[f64],
        std: f64,
        coefs: impl FnOnce(f64, f64) -> (f64, f64),
        grad: Option<&mut [f64]>,
        s: &mut ActorScratch,
    ) -> (f64, f64) {
        self.run(obs, s);
        let z1 = s.head1.output().to_vec();
        let z2 = s.head2.output().to_vec();
        let mean = [z1[0].tanh(), z1[1].tanh()];
        let alpha: Vec<f64> = z2.iter().map(|z| softplus(*z) + ALPHA_FLOOR).collect();
        let valves = &action[2..];
        let lp = gaussian_logpdf(action[0], mean[0], std)
            + gaussian_logpdf(action[1], mean[1], std)
            + dirichlet_logpdf_unchecked(valves, &alpha);
        let ent = 2.0 * gaussian_entropy(std) + dirichlet_entropy(&alpha);

        if let Some(grad) = grad {
            let (c_lp, c_h) = coefs(lp, ent);
            let g1: Vec<f64> = (0..2)
                .map(|d| c_lp * (action[d] - mean[d]) / (std * std) * (1.0 - mean[d] * mean[d]))
                .collect();
            let dl = dirichlet_logpdf_grad(valves, &alpha);
            let dh = dirichlet_entropy_grad(&alpha);
            let g2: Vec<f64> = (0..alpha.len())
                .map(|k| (c_lp * dl[k] + c_h * dh[k]) * sigmoid(z2[k]))
                .collect();
            let nt = self.trunk.num_params();
            let n1 = self.head1.num_params();
            let (t, h1, h2) = self.split();
            let (gt, rest) = grad.split_at_mut(nt);
            let (gh1, gh2) = rest.split_at_mut(n1);
            let d_a = self.head1.backward(h1, &s.head1, &g1, gh1);
            let d_b = self.head2.backward(h2, &s.head2, &g2, gh2);
            let d_trunk: Vec<f64> = d_a.iter().zip(&d_b).map(|(a, b)| a + b).collect();
            self.trunk.backward(t, &s.trunk, &d_trunk, gt);
        }
        (lp, ent)
    }
}

/// Trunk plus a softmax head over the tower setpoint deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteActor {
    pub trunk: Mlp,
    pub head: Mlp,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct DiscreteScratch {
    trunk: MlpCache,
    head: MlpCache,
}

impl DiscreteActor {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], actions: usize, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, true);
        let head = Mlp::new(&[trunk.output_dim(), actions], false);
        let mut params = trunk.init(rng, 1.0);
        params.extend(head.init(rng, 0.01));
        Self { trunk, head, params }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.head.num_params()
    }

    pub fn actions(&self) -> usize {
        self.head.output_dim()
    }

    fn run(&self, obs: &[f64], s: &mut DiscreteScratch) {
        let (t, h) = self.params.split_at(self.trunk.num_params());
        self.trunk.forward_cached(t, obs, &mut s.trunk);
        self.head.forward_cached(h, s.trunk.output(), &mut s.head);
    }

    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.trunk.check(&self.params[..self.trunk.num_params()], obs)?;
        let mut s = DiscreteScratch::default();
        self.run(obs, &mut s);
        Ok(softmax(s.head.output()))
    }

    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Result<(usize, f64)> {
        let p = self.probs(obs)?;
        let a = dist::sample_categorical(&p, rng);
        Ok((a, p[a].ln()))
    }

    pub fn evaluate(
        &self,
        obs: &[f64],
        action: usize,
        coefs: Option<(f64, f64, &mut [f64])>,
        s: &mut DiscreteScratch,
    ) -> (f64, f64) {
        match coefs {
            Some((a, b, g)) => self.evaluate_with(obs, action, |_, _| (a, b), Some(g), s),
            None => self.evaluate_with(obs, action, |_, _| (0.0, 0.0), None, s),
        }
    }

    pub fn evaluate_with(
        &self,
        obs: &[f64],
        action: usize,
        coefs: impl FnOnce(f64, f64) -> (f64, f64),
        grad: Option<&mut [f64]>,
        s: &mut DiscreteScratch,
    ) -> (f64, f64) {
        self.run(obs, s);
        let z = s.head.output();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let logp: Vec<f64> = z.iter().map(|v| v - lse).collect();
        let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let ent = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
        if let Some(grad) = grad {
            let (c_lp, c_h) = coefs(logp[action], ent);
            let g: Vec<f64> = (0..p.len())
                .map(|k| c_lp * ((k == action) as u8 as f64 - p[k]) - c_h * p[k] * (logp[k] + ent))
                .collect();
            let nt = self.trunk.num_params();
            let (t, h) = self.params.split_at(nt);
            let (gt, gh) = grad.split_at_mut(nt);
            let d = self.head.backward(h, &s.head, &g, gh);
            self.trunk.backward(t, &s.trunk, &d, gt);
        }
        (logp[action], ent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub mlp: Mlp,
    pub params: Vec<f64>,
}

impl Critic {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mlp = Mlp::new(&sizes, false);
        let params = mlp.init(rng, 1.0);
        Self { mlp, params }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.mlp.check(&self.params, obs)?;
        Ok(self.mlp.forward(&self.params, obs)[0])
    }

    /// Value, accumulating `coef * dV/dparams` into `grad` when given.
    pub fn evaluate(&self, obs: &[f64], grad: Option<(f64, &mut [f64])>, cache: &mut MlpCache) -> f64 {
        self.mlp.forward_cached(&self.params, obs, cache);
        let v = cache.output()[0];
        if let Some((c, g)) = grad {
            self.mlp.backward(&self.params, cache, &[c], g);
        }
        v
    }
}

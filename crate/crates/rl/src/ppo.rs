//! Clipped-surrogate PPO over per-unit rollout buffers.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use coolsim_core::{Error, Result};

use crate::nn::{Adam, MlpCache};
use crate::policy::{ActionStd, ActorScratch, Critic, DiscreteActor, DiscreteScratch, MultiHeadActor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentHyper {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub k_epochs: usize,
    pub eps_clip: f64,
    pub minibatch_size: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    /// Multiplier applied to environment rewards before learning.
    pub reward_scale: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl AgentHyper {
    pub fn blade() -> Self {
        Self {
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            gamma: 0.80,
            gae_lambda: 0.95,
            k_epochs: 50,
            eps_clip: 0.2,
            minibatch_size: 32,
            ent_coef: 0.01,
            vf_coef: 0.5,
            reward_scale: 0.01,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
        }
    }

    pub fn tower() -> Self {
        Self {
            lr_actor: 6e-4,
            lr_critic: 1e-3,
            gamma: 0.95,
            vf_coef: 0.6,
            reward_scale: 0.1,
            actor_hidden: vec![32, 64],
            critic_hidden: vec![32, 32],
            ..Self::blade()
        }
    }

    pub fn check(&self, who: &str) -> Result<()> {
        let bad = |r: &str| {
            Err(Error::Invalid {
                path: who.to_string(),
                reason: r.to_string(),
            })
        };
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gamma and gae_lambda must lie in (0, 1]");
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return bad("eps_clip must lie in (0, 1)");
        }
        if self.k_epochs == 0 || self.minibatch_size == 0 {
            return bad("K_epochs and minibatch_size must be positive");
        }
        if !(self.ent_coef >= 0.0 && self.vf_coef > 0.0 && self.reward_scale > 0.0) {
            return bad("ent_coef must be non-negative, vf_coef and reward_scale positive");
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() || self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub blade: AgentHyper,
    pub tower: AgentHyper,
    pub update_interval: usize,
    pub total_timesteps: usize,
    pub action_std: ActionStd,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            blade: AgentHyper::blade(),
            tower: AgentHyper::tower(),
            update_interval: 2048,
            total_timesteps: 200_000,
            action_std: ActionStd::default(),
        }
    }
}

impl PpoConfig {
    pub fn check(&self) -> Result<()> {
        self.blade.check("blade")?;
        self.tower.check("tower")?;
        if self.update_interval == 0 || self.total_timesteps == 0 {
            return Err(Error::Invalid {
                path: "update_interval".into(),
                reason: "update_interval and total_timesteps must be positive".into(),
            });
        }
        let s = &self.action_std;
        if !(s.min > 0.0 && s.init >= s.min && s.decay >= 0.0) {
            return Err(Error::Invalid {
                path: "action_std".into(),
                reason: "need 0 < min <= init and decay >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Generalized advantage estimates; `values` carries one bootstrap entry
/// past the last reward.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lam: f64) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Shape {
            op: "gae",
            expected: n,
            got: if dones.len() != n { dones.len() } else { values.len() - 1 },
        });
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * mask - values[t];
        next = delta + gamma * lam * mask * next;
        adv[t] = next;
    }
    Ok(adv)
}

/// Experience of one agent unit (one cabinet or one tower).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub unit: usize,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub logprobs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(unit: usize) -> Self {
        Self {
            unit,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push_step(&mut self, obs: Vec<f64>, action: Vec<f64>, logprob: f64, value: f64) {
        self.obs.push(obs);
        self.actions.push(action);
        self.logprobs.push(logprob);
        self.values.push(value);
    }

    pub fn push_outcome(&mut self, reward: f64, done: bool) {
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        let unit = self.unit;
        *self = Self::new(unit);
    }

    pub fn consistent(&self) -> bool {
        let n = self.obs.len();
        [self.actions.len(), self.logprobs.len(), self.rewards.len(), self.values.len(), self.dones.len()]
            .iter()
            .all(|l| *l == n)
    }
}

/// Flattened training samples with advantages normalized across the update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub logprobs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Originating unit of each sample.
    pub units: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// GAE per buffer (with its own bootstrap value), then concatenation.
pub fn build_batch(buffers: &[RolloutBuffer], bootstrap: &[f64], gamma: f64, lam: f64) -> Result<Batch> {
    if buffers.len() != bootstrap.len() {
        return Err(Error::Shape {
            op: "bootstrap values",
            expected: buffers.len(),
            got: bootstrap.len(),
        });
    }
    let mut b = Batch::default();
    for (buf, &boot) in buffers.iter().zip(bootstrap) {
        if !buf.consistent() {
            return Err(Error::Domain {
                op: "build_batch",
                reason: format!("buffer {} has ragged columns", buf.unit),
            });
        }
        let mut values = buf.values.clone();
        values.push(boot);
        let adv = gae(&buf.rewards, &values, &buf.dones, gamma, lam)?;
        for t in 0..buf.len() {
            b.returns.push(adv[t] + buf.values[t]);
            b.advantages.push(adv[t]);
        }
        b.obs.extend(buf.obs.iter().cloned());
        b.actions.extend(buf.actions.iter().cloned());
        b.logprobs.extend_from_slice(&buf.logprobs);
        b.units.extend(std::iter::repeat_n(buf.unit, buf.len()));
    }
    if b.is_empty() {
        return Err(Error::Domain {
            op: "build_batch",
            reason: "no samples".into(),
        });
    }
    normalize(&mut b.advantages);
    Ok(b)
}

pub fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    v.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// Actor interface the update needs: log-probability and entropy of a
/// stored action, with optional gradient accumulation.
pub trait PolicyNet {
    type Scratch: Default;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn eval(&self, obs: &[f64], action: &[f64], std: f64, coefs: Option<(f64, f64, &mut [f64])>, s: &mut Self::Scratch) -> (f64, f64);
    /// Single forward pass; `coefs` maps `(logp, entropy)` to the gradient
    /// weights applied to them.
    fn eval_with(
        &self,
        obs: &[f64],
        action: &[f64],
        std: f64,
        coefs: &mut dyn FnMut(f64, f64) -> (f64, f64),
        grad: &mut [f64],
        s: &mut Self::Scratch,
    ) -> (f64, f64);
}

impl PolicyNet for MultiHeadActor {
    type Scratch = ActorScratch;
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    fn eval(&self, obs: &[f64], action: &[f64], std: f64, coefs: Option<(f64, f64, &mut [f64])>, s: &mut ActorScratch) -> (f64, f64) {
        self.evaluate(obs, action, std, coefs, s)
    }
    fn eval_with(
        &self,
        obs: &[f64],
        action: &[f64],
        std: f64,
        coefs: &mut dyn FnMut(f64, f64) -> (f64, f64),
        grad: &mut [f64],
        s: &mut ActorScratch,
    ) -> (f64, f64) {
        self.evaluate_with(obs, action, std, coefs, Some(grad), s)
    }
}

impl PolicyNet for DiscreteActor {
    type Scratch = DiscreteScratch;
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    fn eval(&self, obs: &[f64], action: &[f64], _: f64, coefs: Option<(f64, f64, &mut [f64])>, s: &mut DiscreteScratch) -> (f64, f64) {
        self.evaluate(obs, action[0] as usize, coefs, s)
    }
    fn eval_with(
        &self,
        obs: &[f64],
        action: &[f64],
        _: f64,
        coefs: &mut dyn FnMut(f64, f64) -> (f64, f64),
        grad: &mut [f64],
        s: &mut DiscreteScratch,
    ) -> (f64, f64) {
        self.evaluate_with(obs, action[0] as usize, coefs, Some(grad), s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
}

/// Mean loss over the samples `idx`:
/// `-min(rA, clip(r)A) + vf (V - R)^2 - ent H`. With `grads`, the gradient
/// of that mean is accumulated into (actor, critic) buffers.
pub fn minibatch_loss<P: PolicyNet>(
    actor: &P,
    critic: &Critic,
    batch: &Batch,
    idx: &[usize],
    h: &AgentHyper,
    std: f64,
    mut grads: Option<(&mut [f64], &mut [f64])>,
    scratch: &mut (P::Scratch, MlpCache),
) -> LossStats {
    let n = idx.len() as f64;
    let mut st = LossStats::default();
    for &i in idx {
        let obs = &batch.obs[i];
        let act = &batch.actions[i];
        let a = batch.advantages[i];
        let old = batch.logprobs[i];
        let surrogate = |lp: f64| {
            let ratio = (lp - old).exp();
            let clipped = ratio.clamp(1.0 - h.eps_clip, 1.0 + h.eps_clip);
            (ratio, ratio * a, clipped * a)
        };
        let (lp, ent) = match grads.as_mut() {
            Some((ga, _)) => actor.eval_with(
                obs,
                act,
                std,
                &mut |lp, _| {
                    let (ratio, s1, s2) = surrogate(lp);
                    let c_lp = if s1 <= s2 { -a * ratio / n } else { 0.0 };
                    (c_lp, -h.ent_coef / n)
                },
                ga,
                &mut scratch.0,
            ),
            None => actor.eval(obs, act, std, None, &mut scratch.0),
        };
        let (_, s1, s2) = surrogate(lp);
        st.policy -= s1.min(s2) / n;
        st.entropy += ent / n;
        if s1 > s2 {
            st.clip_fraction += 1.0 / n;
        }
        let v = critic.evaluate(obs, None, &mut scratch.1);
        if let Some((_, gc)) = grads.as_mut() {
            let c = 2.0 * h.vf_coef * (v - batch.returns[i]) / n;
            critic.mlp.backward(&critic.params, &scratch.1, &[c], gc);
        }
        st.value += (v - batch.returns[i]).powi(2) / n;
    }
    st.total = st.policy + h.vf_coef * st.value - h.ent_coef * st.entropy;
    st
}

/// `K_epochs` passes of shuffled minibatch Adam steps. Returns the mean
/// statistics of the final epoch.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<P: PolicyNet, R: Rng>(
    actor: &mut P,
    critic: &mut Critic,
    opt_actor: &mut Adam,
    opt_critic: &mut Adam,
    batch: &Batch,
    h: &AgentHyper,
    std: f64,
    rng: &mut R,
) -> Result<LossStats> {
    if batch.is_empty() {
        return Err(Error::Domain {
            op: "ppo_update",
            reason: "empty batch".into(),
        });
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut scratch = (P::Scratch::default(), MlpCache::default());
    let mut ga = vec![0.0; actor.params().len()];
    let mut gc = vec![0.0; critic.params.len()];
    let mut last = LossStats::default();
    for epoch in 0..h.k_epochs {
        order.shuffle(rng);
        let mut acc = LossStats::default();
        let mut batches = 0.0;
        for chunk in order.chunks(h.minibatch_size) {
            ga.iter_mut().for_each(|g| *g = 0.0);
            gc.iter_mut().for_each(|g| *g = 0.0);
            let st = minibatch_loss(&*actor, critic, batch, chunk, h, std, Some((&mut ga, &mut gc)), &mut scratch);
            if !st.total.is_finite() || ga.iter().chain(&gc).any(|g| !g.is_finite()) {
                return Err(Error::Domain {
                    op: "ppo_update",
                    reason: format!(
                        "non-finite loss in epoch {epoch}: policy {} value {} entropy {}",
                        st.policy, st.value, st.entropy
                    ),
                });
            }
            opt_actor.step(actor.params_mut(), &ga);
            opt_critic.step(&mut critic.params, &gc);
            acc.policy += st.policy;
            acc.value += st.value;
            acc.entropy += st.entropy;
            acc.total += st.total;
            acc.clip_fraction += st.clip_fraction;
            batches += 1.0;
        }
        last = LossStats {
            policy: acc.policy / batches,
            value: acc.value / batches,
            entropy: acc.entropy / batches,
            total: acc.total / batches,
            clip_fraction: acc.clip_fraction / batches,
        };
    }
    Ok(last)
}

/// Analytic and central-difference gradients of the minibatch total loss,
/// `(analytic, numeric)` per parameter: actor parameters first, then critic.
pub fn gradient_pairs<P: PolicyNet + Clone>(
    actor: &P,
    critic: &Critic,
    batch: &Batch,
    h: &AgentHyper,
    std: f64,
    step: f64,
) -> Vec<(f64, f64)> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut scratch = (P::Scratch::default(), MlpCache::default());
    let mut ga = vec![0.0; actor.params().len()];
    let mut gc = vec![0.0; critic.params.len()];
    minibatch_loss(actor, critic, batch, &idx, h, std, Some((&mut ga, &mut gc)), &mut scratch);
    let mut out = Vec::with_capacity(ga.len() + gc.len());
    let mut a = actor.clone();
    for (i, g) in ga.iter().enumerate() {
        let x = a.params()[i];
        a.params_mut()[i] = x + step;
        let fp = minibatch_loss(&a, critic, batch, &idx, h, std, None, &mut scratch).total;
        a.params_mut()[i] = x - step;
        let fm = minibatch_loss(&a, critic, batch, &idx, h, std, None, &mut scratch).total;
        a.params_mut()[i] = x;
        out.push((*g, (fp - fm) / (2.0 * step)));
    }
    let mut c = critic.clone();
    for (i, g) in gc.iter().enumerate() {
        let x = c.params[i];
        c.params[i] = x + step;
        let fp = minibatch_loss(actor, &c, batch, &idx, h, std, None, &mut scratch).total;
        c.params[i] = x - step;
        let fm = minibatch_loss(actor, &c, batch, &idx, h, std, None, &mut scratch).total;
        c.params[i] = x;
        out.push((*g, (fp - fm) / (2.0 * step)));
    }
    out
}

/// Counts parameters whose analytic gradient agrees with central differences
/// under `|a - fd| <= atol + rtol |fd|`. Returns `(agreeing, total)`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_agreement<P: PolicyNet + Clone>(
    actor: &P,
    critic: &Critic,
    batch: &Batch,
    h: &AgentHyper,
    std: f64,
    step: f64,
    rtol: f64,
    atol: f64,
) -> (usize, usize) {
    let pairs = gradient_pairs(actor, critic, batch, h, std, step);
    let ok = pairs.iter().filter(|(a, fd)| (a - fd).abs() <= atol + rtol * fd.abs()).count();
    (ok, pairs.len())
}

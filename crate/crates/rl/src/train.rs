//! Centralized-action training: one shared cabinet policy and one shared
//! tower policy, evaluated per unit, with per-unit rollout buffers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use coolsim_core::control::{Command, Controller};
use coolsim_core::env::{CabinetRawAction, CtAction, Environment, StepOutcome};
use coolsim_core::metrics::{d_blade, MetricConfig};
use coolsim_core::{Error, Result, SystemTopology};

use crate::dist::{argmax, dirichlet_mean};
use crate::nn::Adam;
use crate::policy::{Critic, DiscreteActor, MultiHeadActor, ObsScaler};
use crate::ppo::{build_batch, ppo_update, AgentHyper, LossStats, PpoConfig, RolloutBuffer};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agents {
    pub blade_actor: MultiHeadActor,
    pub blade_critic: Critic,
    pub tower_actor: DiscreteActor,
    pub tower_critic: Critic,
    pub blade_scaler: ObsScaler,
    pub tower_scaler: ObsScaler,
}

pub fn blade_obs_dim(topo: &SystemTopology) -> usize {
    2 * topo.blade_groups_per_cabinet
}

pub fn tower_obs_dim(topo: &SystemTopology) -> usize {
    topo.cells_per_tower + topo.num_towers + 1
}

impl Agents {
    pub fn new<R: Rng>(topo: &SystemTopology, cfg: &PpoConfig, rng: &mut R) -> Self {
        let bd = blade_obs_dim(topo);
        let td = tower_obs_dim(topo);
        Self {
            blade_actor: MultiHeadActor::new(bd, &cfg.blade.actor_hidden, topo.blade_groups_per_cabinet, rng),
            blade_critic: Critic::new(bd, &cfg.blade.critic_hidden, rng),
            tower_actor: DiscreteActor::new(td, &cfg.tower.actor_hidden, topo.ct_action_deltas.len(), rng),
            tower_critic: Critic::new(td, &cfg.tower.critic_hidden, rng),
            blade_scaler: ObsScaler::blade(topo),
            tower_scaler: ObsScaler::tower(topo),
        }
    }

    /// Errors unless every network matches the topology's dimensions.
    pub fn check_shapes(&self, topo: &SystemTopology) -> Result<()> {
        let shape = |op: &'static str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Shape { op, expected, got })
            }
        };
        let bd = blade_obs_dim(topo);
        let td = tower_obs_dim(topo);
        shape("blade actor input", bd, self.blade_actor.obs_dim())?;
        shape("blade actor valves", topo.blade_groups_per_cabinet, self.blade_actor.valves())?;
        shape("blade critic input", bd, self.blade_critic.mlp.input_dim())?;
        shape("blade scaler", bd, self.blade_scaler.offset.len())?;
        shape("tower actor input", td, self.tower_actor.obs_dim())?;
        shape("tower actor actions", topo.ct_action_deltas.len(), self.tower_actor.actions())?;
        shape("tower critic input", td, self.tower_critic.mlp.input_dim())?;
        shape("tower scaler", td, self.tower_scaler.offset.len())?;
        shape("blade actor parameters", self.blade_actor.num_params(), self.blade_actor.params.len())?;
        shape("tower actor parameters", self.tower_actor.num_params(), self.tower_actor.params.len())?;
        shape("blade critic parameters", self.blade_critic.mlp.num_params(), self.blade_critic.params.len())?;
        shape("tower critic parameters", self.tower_critic.mlp.num_params(), self.tower_critic.params.len())?;
        let finite = [
            &self.blade_actor.params,
            &self.blade_critic.params,
            &self.tower_actor.params,
            &self.tower_critic.params,
        ]
        .iter()
        .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Invalid {
                path: "checkpoint".into(),
                reason: "non-finite network parameter".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub topology_sha256: String,
    pub blade_groups: usize,
    pub cabinets: usize,
    pub towers: usize,
    pub cells_per_tower: usize,
    pub ct_actions: usize,
    pub seed: u64,
    pub env_steps: usize,
    pub episodes: usize,
    pub action_std: f64,
    pub config: PpoConfig,
    pub agents: Agents,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid {
                path: "version".into(),
                reason: format!("unsupported checkpoint version {}", c.version),
            });
        }
        Ok(c)
    }

    /// Verifies the checkpoint can drive `topo`.
    pub fn check(&self, topo: &SystemTopology) -> Result<()> {
        let dims = [
            ("checkpoint blade groups", topo.blade_groups_per_cabinet, self.blade_groups),
            ("checkpoint cells per tower", topo.cells_per_tower, self.cells_per_tower),
            ("checkpoint towers", topo.num_towers, self.towers),
            ("checkpoint tower actions", topo.ct_action_deltas.len(), self.ct_actions),
        ];
        for (op, expected, got) in dims {
            if expected != got {
                return Err(Error::Shape { op, expected, got });
            }
        }
        self.agents.check_shapes(topo)
    }
}

/// One row of the training log: either a finished episode or an update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub kind: String,
    pub env_steps: usize,
    pub episode: usize,
    pub update: usize,
    pub action_std: f64,
    pub blade_samples: Option<usize>,
    pub ct_samples: Option<usize>,
    pub blade_reward: Option<f64>,
    pub ct_reward: Option<f64>,
    pub d_blade: Option<f64>,
    pub blade_policy_loss: Option<f64>,
    pub blade_value_loss: Option<f64>,
    pub blade_entropy: Option<f64>,
    pub ct_policy_loss: Option<f64>,
    pub ct_value_loss: Option<f64>,
    pub ct_entropy: Option<f64>,
}

impl LogRow {
    pub fn is_episode(&self) -> bool {
        self.kind == "episode"
    }

    pub fn is_update(&self) -> bool {
        self.kind == "update"
    }
}

pub fn write_log_csv(rows: &[LogRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("log row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

pub fn read_log_csv(text: &str) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("training log: {e}"))))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Agents,
    pub log: Vec<LogRow>,
    pub action_std: f64,
    pub env_steps: usize,
    pub episodes: usize,
}

impl TrainOutcome {
    pub fn checkpoint(&self, topo: &SystemTopology, cfg: &PpoConfig, seed: u64) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            topology_sha256: topo.fingerprint(),
            blade_groups: topo.blade_groups_per_cabinet,
            cabinets: topo.num_cabinets,
            towers: topo.num_towers,
            cells_per_tower: topo.cells_per_tower,
            ct_actions: topo.ct_action_deltas.len(),
            seed,
            env_steps: self.env_steps,
            episodes: self.episodes,
            action_std: self.action_std,
            config: cfg.clone(),
            agents: self.agents.clone(),
        }
    }

    /// Mean blade reward of the last `n` completed episodes.
    pub fn final_blade_reward(&self, n: usize) -> Option<f64> {
        last_episode_mean(&self.log, n, |r| r.blade_reward)
    }
}

pub fn last_episode_mean(log: &[LogRow], n: usize, f: impl Fn(&LogRow) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = log.iter().filter(|r| r.is_episode()).filter_map(f).collect();
    if vals.is_empty() || n == 0 {
        return None;
    }
    let tail = &vals[vals.len().saturating_sub(n)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Seed of the environment reset for episode `k` of a run seeded `seed`.
pub fn episode_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

struct Learner {
    blade_actor_opt: Adam,
    blade_critic_opt: Adam,
    tower_actor_opt: Adam,
    tower_critic_opt: Adam,
    blade_bufs: Vec<RolloutBuffer>,
    tower_bufs: Vec<RolloutBuffer>,
}

/// Per-step policy evaluation over all units (scaled observations).
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub blade_obs: Vec<Vec<f64>>,
    pub blade_actions: Vec<Vec<f64>>,
    pub blade_logp: Vec<f64>,
    pub blade_values: Vec<f64>,
    pub tower_obs: Vec<Vec<f64>>,
    pub tower_actions: Vec<usize>,
    pub tower_logp: Vec<f64>,
    pub tower_values: Vec<f64>,
}

impl StepDecision {
    pub fn command(&self) -> (Vec<CabinetRawAction>, Vec<CtAction>) {
        let cabinets = self
            .blade_actions
            .iter()
            .map(|a| CabinetRawAction {
                setpoint: a[0].clamp(-1.0, 1.0),
                flow: a[1].clamp(-1.0, 1.0),
                valves: a[2..].to_vec(),
            })
            .collect();
        let towers = self.tower_actions.iter().map(|&delta_index| CtAction { delta_index }).collect();
        (cabinets, towers)
    }
}

/// Batched sampling of both shared policies over every unit's observation.
pub fn decide<R: Rng>(agents: &Agents, outcome: &StepOutcome, std: f64, rng: &mut R) -> Result<StepDecision> {
    let mut d = StepDecision {
        blade_obs: Vec::new(),
        blade_actions: Vec::new(),
        blade_logp: Vec::new(),
        blade_values: Vec::new(),
        tower_obs: Vec::new(),
        tower_actions: Vec::new(),
        tower_logp: Vec::new(),
        tower_values: Vec::new(),
    };
    for raw in &outcome.blade_obs {
        let obs = agents.blade_scaler.apply(raw)?;
        let s = agents.blade_actor.sample(&obs, std, rng)?;
        d.blade_values.push(agents.blade_critic.value(&obs)?);
        d.blade_actions.push(s.action());
        d.blade_logp.push(s.logprob);
        d.blade_obs.push(obs);
    }
    for raw in &outcome.ct_obs {
        let obs = agents.tower_scaler.apply(raw)?;
        let (a, lp) = agents.tower_actor.sample(&obs, rng)?;
        d.tower_values.push(agents.tower_critic.value(&obs)?);
        d.tower_actions.push(a);
        d.tower_logp.push(lp);
        d.tower_obs.push(obs);
    }
    Ok(d)
}

/// Appends one step of experience to the per-unit buffers; unit `c` only
/// ever receives cabinet `c`'s observation.
pub fn route(dec: &StepDecision, next: &StepOutcome, cfg: &PpoConfig, blade: &mut [RolloutBuffer], tower: &mut [RolloutBuffer]) {
    for (c, buf) in blade.iter_mut().enumerate() {
        buf.push_step(dec.blade_obs[c].clone(), dec.blade_actions[c].clone(), dec.blade_logp[c], dec.blade_values[c]);
        buf.push_outcome(next.blade_rewards[c] * cfg.blade.reward_scale, next.done);
    }
    for (t, buf) in tower.iter_mut().enumerate() {
        buf.push_step(dec.tower_obs[t].clone(), vec![dec.tower_actions[t] as f64], dec.tower_logp[t], dec.tower_values[t]);
        buf.push_outcome(next.ct_rewards[t] * cfg.tower.reward_scale, next.done);
    }
}

fn bootstrap(agents: &Agents, outcome: &StepOutcome) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = outcome
        .blade_obs
        .iter()
        .map(|o| agents.blade_critic.value(&agents.blade_scaler.apply(o)?))
        .collect::<Result<Vec<_>>>()?;
    let t = outcome
        .ct_obs
        .iter()
        .map(|o| agents.tower_critic.value(&agents.tower_scaler.apply(o)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((b, t))
}

fn update_agent<P: crate::ppo::PolicyNet, R: Rng>(
    actor: &mut P,
    critic: &mut Critic,
    opt_a: &mut Adam,
    opt_c: &mut Adam,
    bufs: &mut [RolloutBuffer],
    boot: &[f64],
    h: &AgentHyper,
    std: f64,
    rng: &mut R,
) -> Result<LossStats> {
    let batch = build_batch(bufs, boot, h.gamma, h.gae_lambda)?;
    let st = ppo_update(actor, critic, opt_a, opt_c, &batch, h, std, rng)?;
    bufs.iter_mut().for_each(|b| b.clear());
    Ok(st)
}

/// Trains both agents on `env` for `cfg.total_timesteps` environment steps.
/// Updates run every `cfg.update_interval` steps and once more for any
/// remainder. `on_update` sees the agents after every update.
pub fn train_centralized(
    env: &mut Environment,
    cfg: &PpoConfig,
    seed: u64,
    mut on_update: impl FnMut(usize, &TrainOutcome) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.check()?;
    let topo = env.topology().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = Agents::new(&topo, cfg, &mut rng);
    let mut learner = Learner {
        blade_actor_opt: Adam::new(agents.blade_actor.params.len(), cfg.blade.lr_actor),
        blade_critic_opt: Adam::new(agents.blade_critic.params.len(), cfg.blade.lr_critic),
        tower_actor_opt: Adam::new(agents.tower_actor.params.len(), cfg.tower.lr_actor),
        tower_critic_opt: Adam::new(agents.tower_critic.params.len(), cfg.tower.lr_critic),
        blade_bufs: (0..topo.num_cabinets).map(RolloutBuffer::new).collect(),
        tower_bufs: (0..topo.num_towers).map(RolloutBuffer::new).collect(),
    };
    let mut std = cfg.action_std;
    let mut out = TrainOutcome {
        agents,
        log: Vec::new(),
        action_std: std.current,
        env_steps: 0,
        episodes: 0,
    };
    let metric_cfg = MetricConfig::default();
    let mut updates = 0;

    while out.env_steps < cfg.total_timesteps {
        let mut outcome = env.reset(episode_seed(seed, out.episodes))?;
        let mut blade_sum = vec![0.0; topo.num_cabinets];
        let mut ct_sum = vec![0.0; topo.num_towers];
        let mut temps: Vec<Vec<f64>> = Vec::new();
        loop {
            let dec = decide(&out.agents, &outcome, std.current, &mut rng)?;
            let (cabs, towers) = dec.command();
            let next = env.step(&cabs, &towers)?;
            route(&dec, &next, cfg, &mut learner.blade_bufs, &mut learner.tower_bufs);
            blade_sum.iter_mut().zip(&next.blade_rewards).for_each(|(a, r)| *a += r);
            ct_sum.iter_mut().zip(&next.ct_rewards).for_each(|(a, r)| *a += r);
            temps.push(next.info.blade_temps_c.concat());
            out.env_steps += 1;
            outcome = next;

            let last_step = out.env_steps == cfg.total_timesteps;
            if out.env_steps % cfg.update_interval == 0 || last_step {
                let (bb, tb) = bootstrap(&out.agents, &outcome)?;
                let blade_samples: usize = learner.blade_bufs.iter().map(|b| b.len()).sum();
                let ct_samples: usize = learner.tower_bufs.iter().map(|b| b.len()).sum();
                let a = &mut out.agents;
                let bs = update_agent(
                    &mut a.blade_actor,
                    &mut a.blade_critic,
                    &mut learner.blade_actor_opt,
                    &mut learner.blade_critic_opt,
                    &mut learner.blade_bufs,
                    &bb,
                    &cfg.blade,
                    std.current,
                    &mut rng,
                )?;
                let ts = update_agent(
                    &mut a.tower_actor,
                    &mut a.tower_critic,
                    &mut learner.tower_actor_opt,
                    &mut learner.tower_critic_opt,
                    &mut learner.tower_bufs,
                    &tb,
                    &cfg.tower,
                    std.current,
                    &mut rng,
                )?;
                updates += 1;
                out.log.push(LogRow {
                    kind: "update".into(),
                    env_steps: out.env_steps,
                    episode: out.episodes,
                    update: updates,
                    action_std: std.current,
                    blade_samples: Some(blade_samples),
                    ct_samples: Some(ct_samples),
                    blade_reward: None,
                    ct_reward: None,
                    d_blade: None,
                    blade_policy_loss: Some(bs.policy),
                    blade_value_loss: Some(bs.value),
                    blade_entropy: Some(bs.entropy),
                    ct_policy_loss: Some(ts.policy),
                    ct_value_loss: Some(ts.value),
                    ct_entropy: Some(ts.entropy),
                });
                out.action_std = std.current;
                on_update(updates, &out)?;
            }
            if outcome.done || last_step {
                break;
            }
        }
        if outcome.done {
            out.episodes += 1;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            out.log.push(LogRow {
                kind: "episode".into(),
                env_steps: out.env_steps,
                episode: out.episodes,
                update: updates,
                action_std: std.current,
                blade_samples: None,
                ct_samples: None,
                blade_reward: Some(mean(&blade_sum)),
                ct_reward: Some(mean(&ct_sum)),
                d_blade: Some(d_blade(&temps, &metric_cfg)?),
                blade_policy_loss: None,
                blade_value_loss: None,
                blade_entropy: None,
                ct_policy_loss: None,
                ct_value_loss: None,
                ct_entropy: None,
            });
            std.decay_step();
            out.action_std = std.current;
        }
    }
    Ok(out)
}

/// Drives the environment with trained agents, either with modal actions
/// or by sampling at a fixed exploration std.
pub struct PolicyController {
    pub agents: Agents,
    mode: PolicyMode,
}

enum PolicyMode {
    Modal,
    Stochastic { std: f64, rng: ChaCha8Rng },
}

impl PolicyController {
    pub fn modal(agents: Agents) -> Self {
        Self {
            agents,
            mode: PolicyMode::Modal,
        }
    }

    pub fn stochastic(agents: Agents, std: f64, seed: u64) -> Self {
        Self {
            agents,
            mode: PolicyMode::Stochastic {
                std,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
        }
    }

    /// Modal cabinet action `[setpoint, flow, valves...]` for a raw observation.
    pub fn blade_modal(&self, raw_obs: &[f64]) -> Result<Vec<f64>> {
        let obs = self.agents.blade_scaler.apply(raw_obs)?;
        let (mean, alpha) = self.agents.blade_actor.forward(&obs)?;
        let mut a = mean.to_vec();
        a.extend(dirichlet_mean(&alpha));
        Ok(a)
    }

    pub fn tower_modal(&self, raw_obs: &[f64]) -> Result<usize> {
        let obs = self.agents.tower_scaler.apply(raw_obs)?;
        Ok(argmax(&self.agents.tower_actor.probs(&obs)?))
    }
}

impl Controller for PolicyController {
    fn name(&self) -> String {
        "ppo".into()
    }

    fn details(&self) -> String {
        match &self.mode {
            PolicyMode::Modal => "multi-head CA-PPO, modal actions".into(),
            PolicyMode::Stochastic { std, .. } => format!("multi-head CA-PPO, sampled actions (std {std})"),
        }
    }

    fn act(&mut self, outcome: &StepOutcome) -> Result<Command> {
        match &mut self.mode {
            PolicyMode::Modal => {
                let cabinets = outcome
                    .blade_obs
                    .iter()
                    .map(|o| {
                        let a = self.blade_modal(o)?;
                        Ok(CabinetRawAction {
                            setpoint: a[0],
                            flow: a[1],
                            valves: a[2..].to_vec(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let towers = outcome
                    .ct_obs
                    .iter()
                    .map(|o| Ok(CtAction { delta_index: self.tower_modal(o)? }))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Command::Agent { cabinets, towers })
            }
            PolicyMode::Stochastic { std, rng } => {
                let d = decide(&self.agents, outcome, *std, rng)?;
                let (cabinets, towers) = d.command();
                Ok(Command::Agent { cabinets, towers })
            }
        }
    }
}

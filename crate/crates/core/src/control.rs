//! Controller interface and episode rollout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blade::CabinetActuation;
use crate::env::{CabinetRawAction, CtAction, Environment, StepOutcome};
use crate::error::Result;
use crate::topology::SystemTopology;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Agent {
        cabinets: Vec<CabinetRawAction>,
        towers: Vec<CtAction>,
    },
    Physical {
        cabinets: Vec<CabinetActuation>,
        lwt_setpoints: Vec<f64>,
    },
}

pub trait Controller {
    fn name(&self) -> String;
    fn details(&self) -> String;
    /// Next command given the latest outcome (the reset outcome on step 0).
    fn act(&mut self, outcome: &StepOutcome) -> Result<Command>;
}

impl Environment {
    pub fn apply(&mut self, cmd: &Command) -> Result<StepOutcome> {
        match cmd {
            Command::Agent { cabinets, towers } => self.step(cabinets, towers),
            Command::Physical { cabinets, lwt_setpoints } => self.step_physical(cabinets, lwt_setpoints),
        }
    }
}

/// Runs one full episode from an already-reset outcome. The returned log
/// starts with `initial`.
pub fn run_from(env: &mut Environment, ctrl: &mut dyn Controller, initial: StepOutcome) -> Result<Vec<StepOutcome>> {
    let mut log = vec![initial];
    loop {
        let last = log.last().expect("non-empty");
        if last.done {
            break;
        }
        let cmd = ctrl.act(last)?;
        log.push(env.apply(&cmd)?);
    }
    Ok(log)
}

pub fn run_episode(env: &mut Environment, ctrl: &mut dyn Controller, seed: u64) -> Result<Vec<StepOutcome>> {
    let first = env.reset(seed)?;
    run_from(env, ctrl, first)
}

/// Holds one agent-space command forever.
#[derive(Debug, Clone)]
pub struct FixedController {
    pub command: Command,
}

impl FixedController {
    /// Mid-range setpoint and flow, equal valves, zero tower delta.
    pub fn neutral(topo: &SystemTopology) -> Self {
        let zero = topo.zero_delta_index().unwrap_or(topo.ct_action_deltas.len() / 2);
        Self {
            command: Command::Agent {
                cabinets: vec![
                    CabinetRawAction {
                        setpoint: 0.0,
                        flow: 0.0,
                        valves: vec![1.0; topo.blade_groups_per_cabinet],
                    };
                    topo.num_cabinets
                ],
                towers: vec![CtAction { delta_index: zero }; topo.num_towers],
            },
        }
    }
}

impl Controller for FixedController {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn details(&self) -> String {
        "constant actions".into()
    }

    fn act(&mut self, _: &StepOutcome) -> Result<Command> {
        Ok(self.command.clone())
    }
}

/// Uniform random actions: setpoint and flow uniform on `[-1, 1]`, valve
/// weights uniform on `[0, 1]` before projection, tower deltas uniform.
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
    cabinets: usize,
    blade_groups: usize,
    towers: usize,
    deltas: usize,
}

impl RandomController {
    pub fn new(topo: &SystemTopology, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cabinets: topo.num_cabinets,
            blade_groups: topo.blade_groups_per_cabinet,
            towers: topo.num_towers,
            deltas: topo.ct_action_deltas.len(),
        }
    }
}

impl Controller for RandomController {
    fn name(&self) -> String {
        "random".into()
    }

    fn details(&self) -> String {
        "uniform random actions".into()
    }

    fn act(&mut self, _: &StepOutcome) -> Result<Command> {
        let rng = &mut self.rng;
        let cabinets = (0..self.cabinets)
            .map(|_| CabinetRawAction {
                setpoint: rng.random_range(-1.0..=1.0),
                flow: rng.random_range(-1.0..=1.0),
                valves: (0..self.blade_groups).map(|_| rng.random::<f64>()).collect(),
            })
            .collect();
        let towers = (0..self.towers)
            .map(|_| CtAction {
                delta_index: rng.random_range(0..self.deltas),
            })
            .collect();
        Ok(Command::Agent { cabinets, towers })
    }
}

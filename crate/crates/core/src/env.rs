//! Two-MDP environment: cabinets (blade thermal + CDU loops) and cooling
//! towers sharing one facility water loop, advanced in fixed substeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blade::{self, BladeGroupState, CabinetActuation, CabinetState};
use crate::error::{domain, Error, Result};
use crate::hru;
use crate::psychro::{self, MoistAirState, KELVIN};
use crate::topology::SystemTopology;
use crate::tower::{self, Ambient, WaterInflow};
use crate::trace::ExogenousTrace;

pub const OBS_T_MIN: f64 = 273.15;
pub const OBS_T_MAX: f64 = 373.15;
pub const OBS_P_MAX: f64 = 400e3;
/// Per-blade-group offset of the shifted blade reward, °C.
pub const REWARD_T_REF: f64 = 100.0;

/// Agent-space cabinet action: setpoint and flow in `[-1, 1]`, valve weights
/// projected onto the simplex before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinetRawAction {
    pub setpoint: f64,
    pub flow: f64,
    pub valves: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtAction {
    pub delta_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    /// Seconds since reset.
    pub elapsed_s: f64,
    /// Trace time at the end of the step.
    pub trace_time_s: f64,
    pub t_owb: f64,
    /// Unclamped blade temperatures, °C, per cabinet.
    pub blade_temps_c: Vec<Vec<f64>>,
    /// Blade-group loads at the end of the step, W.
    pub blade_loads_w: Vec<Vec<f64>>,
    /// Step-averaged heat removed per cabinet, W.
    pub cabinet_heat_w: Vec<f64>,
    pub coolant_setpoint_c: Vec<f64>,
    pub coolant_delivered_c: Vec<f64>,
    pub coolant_return_c: Vec<f64>,
    pub pump_flow: Vec<f64>,
    pub valves: Vec<Vec<f64>>,
    pub pump_power_w: Vec<f64>,
    /// Step-averaged fan power per tower cell, W.
    pub cell_power_w: Vec<Vec<f64>>,
    pub tower_setpoint_c: Vec<f64>,
    pub tower_inlet_k: Vec<f64>,
    pub tower_outlet_k: Vec<f64>,
    /// Step-averaged evaporation per tower (all cells), kg/s.
    pub evaporation: Vec<f64>,
    pub fan_speed: Vec<f64>,
    /// Step-averaged heat diverted by the recovery unit, W.
    pub heat_recovered_w: f64,
    pub facility_supply_k: f64,
    pub shifted_blade_rewards: Vec<f64>,
    /// Raw action components clamped into range so far this episode.
    pub action_clamps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub blade_obs: Vec<Vec<f64>>,
    pub ct_obs: Vec<Vec<f64>>,
    pub blade_rewards: Vec<f64>,
    pub ct_rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn write_jsonl(outcomes: &[StepOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&o.to_json_line());
        s.push('\n');
    }
    s
}

pub fn read_jsonl(text: &str) -> Result<Vec<StepOutcome>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(StepOutcome::from_json_line).collect()
}

/// Maps `[-1, 1]` onto `[lo, hi]`. Out-of-range input is clamped and
/// reported through the flag.
pub fn scale_action(raw: f64, lo: f64, hi: f64) -> (f64, bool) {
    let r = if raw.is_nan() { 0.0 } else { raw.clamp(-1.0, 1.0) };
    (lo + (r + 1.0) / 2.0 * (hi - lo), r != raw)
}

/// Clips to `[1e-6, 1]` and renormalizes onto the simplex.
pub fn project_valves(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw
        .iter()
        .map(|v| if v.is_nan() { 1e-6 } else { v.clamp(1e-6, 1.0) })
        .collect();
    let s: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / s).collect()
}

pub fn reward_blade(temps_c: &[Vec<f64>]) -> Result<f64> {
    if temps_c.iter().all(|r| r.is_empty()) {
        return Err(domain("reward_blade", "empty temperature matrix"));
    }
    Ok(-temps_c.iter().flatten().sum::<f64>())
}

pub fn reward_ct(cell_powers_w: &[Vec<f64>]) -> Result<f64> {
    if cell_powers_w.iter().all(|r| r.is_empty()) {
        return Err(domain("reward_ct", "empty power matrix"));
    }
    Ok(-cell_powers_w.iter().flatten().sum::<f64>() / 1000.0)
}

/// Per-cabinet observations `(T_i1..T_iB, P_i1..P_iB)`.
pub fn decompose_blade_obs(temps: &[Vec<f64>], loads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if temps.len() != loads.len() {
        return Err(Error::Shape {
            op: "decompose_blade_obs",
            expected: temps.len(),
            got: loads.len(),
        });
    }
    temps
        .iter()
        .zip(loads)
        .map(|(t, p)| {
            if t.len() != p.len() {
                return Err(Error::Shape {
                    op: "decompose_blade_obs",
                    expected: t.len(),
                    got: p.len(),
                });
            }
            let mut o = Vec::with_capacity(2 * t.len());
            o.extend(t.iter().map(|v| v.clamp(OBS_T_MIN, OBS_T_MAX)));
            o.extend(p.iter().map(|v| v.clamp(0.0, OBS_P_MAX)));
            Ok(o)
        })
        .collect()
}

/// Per-tower observations `(P_i1..P_im, T_ret_1..T_ret_N, T_owb)`.
pub fn decompose_ct_obs(cell_powers: &[Vec<f64>], t_ret: &[f64], t_owb: f64) -> Result<Vec<Vec<f64>>> {
    if cell_powers.len() != t_ret.len() {
        return Err(Error::Shape {
            op: "decompose_ct_obs",
            expected: t_ret.len(),
            got: cell_powers.len(),
        });
    }
    Ok(cell_powers
        .iter()
        .map(|p| {
            let mut o = Vec::with_capacity(p.len() + t_ret.len() + 1);
            o.extend(p.iter().map(|v| v.max(0.0)));
            o.extend(t_ret.iter().map(|v| v.clamp(OBS_T_MIN, OBS_T_MAX)));
            o.push(t_owb);
            o
        })
        .collect())
}

/// Leaving-water setpoint window `[T_owb + min_approach, lwt_max]`, °C. The
/// lower bound wins when the window is empty.
pub fn clamp_lwt(setpoint: f64, t: &SystemTopology, t_owb: f64) -> f64 {
    (setpoint.min(t.tower.lwt_max)).max(t_owb - KELVIN + t.tower.min_approach)
}

pub fn apply_ct_delta(setpoint: f64, idx: usize, t: &SystemTopology, t_owb: f64) -> Result<f64> {
    let d = t.ct_action_deltas.get(idx).ok_or_else(|| {
        domain(
            "apply_ct_delta",
            format!("index {idx} outside 0..{}", t.ct_action_deltas.len()),
        )
    })?;
    Ok(clamp_lwt(setpoint + d, t, t_owb))
}

/// Inlet air implied by a wet-bulb temperature and the configured depression.
pub fn ambient_from_wetbulb(t_owb: f64, t: &SystemTopology) -> Result<Ambient> {
    let dry = t_owb + t.ambient.wetbulb_depression;
    let x = psychro::humidity_ratio_from_wetbulb(dry, t_owb, t.ambient.pressure)?;
    Ok(Ambient {
        t_wb: t_owb,
        air: MoistAirState {
            t: dry,
            x,
            p: t.ambient.pressure,
        },
    })
}

#[derive(Debug, Clone)]
struct TowerOutcome {
    t_out: f64,
    cell_power: f64,
    m_evap: f64,
    speed: f64,
}

pub struct Environment {
    topo: SystemTopology,
    trace: ExogenousTrace,
    cabinets: Vec<CabinetState>,
    actuation: Vec<CabinetActuation>,
    tower_setpoints: Vec<f64>,
    tower_outlet: Vec<f64>,
    tower_inlet: Vec<f64>,
    delivered: Vec<f64>,
    facility_supply: f64,
    start_time: f64,
    elapsed: f64,
    step_index: usize,
    clamps: u64,
    done: bool,
    started: bool,
}

impl Environment {
    pub fn new(topo: SystemTopology, trace: ExogenousTrace) -> Result<Self> {
        let v = crate::topology::validate_topology(&topo);
        if let Some(first) = v.first() {
            return Err(Error::Invalid {
                path: first.path.clone(),
                reason: first.message.clone(),
            });
        }
        if trace.cabinets != topo.num_cabinets || trace.blade_groups != topo.blade_groups_per_cabinet {
            return Err(Error::Trace(format!(
                "trace is {}x{} but topology has {} cabinets x {} blade groups",
                trace.cabinets, trace.blade_groups, topo.num_cabinets, topo.blade_groups_per_cabinet
            )));
        }
        Ok(Self {
            topo,
            trace,
            cabinets: Vec::new(),
            actuation: Vec::new(),
            tower_setpoints: Vec::new(),
            tower_outlet: Vec::new(),
            tower_inlet: Vec::new(),
            delivered: Vec::new(),
            facility_supply: 0.0,
            start_time: 0.0,
            elapsed: 0.0,
            step_index: 0,
            clamps: 0,
            done: false,
            started: false,
        })
    }

    pub fn topology(&self) -> &SystemTopology {
        &self.topo
    }

    pub fn trace(&self) -> &ExogenousTrace {
        &self.trace
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn tower_setpoints(&self) -> &[f64] {
        &self.tower_setpoints
    }

    pub fn cabinet_states(&self) -> &[CabinetState] {
        &self.cabinets
    }

    pub fn default_actuation(&self) -> CabinetActuation {
        let p = &self.topo.cabinet;
        let b = self.topo.blade_groups_per_cabinet;
        CabinetActuation {
            supply_setpoint: p.coolant_setpoint_range.mid(),
            flow: p.flow_range.mid(),
            valves: vec![1.0 / b as f64; b],
        }
    }

    /// Resets to an episode starting at a seed-chosen, step-aligned offset
    /// into the trace (the trace start when it is no longer than an episode).
    pub fn reset(&mut self, seed: u64) -> Result<StepOutcome> {
        if self.trace.is_empty() {
            return Err(Error::Trace("empty trace".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = self.trace.end() - self.trace.start();
        let ep = self.topo.timing.max_episode_duration;
        let step = self.topo.timing.step_size;
        let start = if span > ep {
            let slots = ((span - ep) / step).floor() as u64 + 1;
            self.trace.start() + rng.random_range(0..slots) as f64 * step
        } else {
            self.trace.start()
        };
        self.reset_at(start)
    }

    pub fn reset_at(&mut self, start_time: f64) -> Result<StepOutcome> {
        if self.trace.is_empty() {
            return Err(Error::Trace("empty trace".into()));
        }
        let topo = &self.topo;
        let p = &topo.cabinet;
        let b = topo.blade_groups_per_cabinet;
        let sample = self.trace.sample(start_time);
        let t_owb = sample.t_owb;

        let lwt_mid = 0.5 * (t_owb - KELVIN + topo.tower.min_approach + topo.tower.lwt_max);
        self.tower_setpoints = vec![clamp_lwt(lwt_mid, topo, t_owb); topo.num_towers];
        let facility = self.tower_setpoints[0] + KELVIN;
        self.facility_supply = facility;

        let act = self.default_actuation();
        let eps = p.hx_effectiveness;
        let mut q = Vec::with_capacity(topo.num_cabinets);
        let mut delivered_all = Vec::with_capacity(topo.num_cabinets);
        self.cabinets = (0..topo.num_cabinets)
            .map(|i| {
                let loads = &sample.loads[i * b..(i + 1) * b];
                let phis = loads
                    .iter()
                    .map(|&l| blade::phi_scale(l, &p.phi, p.nominal_power))
                    .collect::<Result<Vec<_>>>()?;
                let heat: f64 = phis.iter().sum();
                let rise = heat / (act.flow * p.coolant_cp);
                let delivered = (act.supply_setpoint + KELVIN).max(facility + (1.0 - eps) / eps * rise);
                q.push(heat);
                delivered_all.push(delivered);
                let blades = phis
                    .iter()
                    .zip(&act.valves)
                    .map(|(&phi, &v)| {
                        let g = blade::conductance_from_flow(act.flow, v, p);
                        BladeGroupState::new(if g > 0.0 { delivered + phi / g } else { delivered })
                    })
                    .collect();
                Ok(CabinetState {
                    blades,
                    return_t: delivered + rise,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.actuation = vec![act; topo.num_cabinets];
        self.delivered = delivered_all;
        self.start_time = start_time;
        self.elapsed = 0.0;
        self.step_index = 0;
        self.clamps = 0;
        self.done = false;
        self.started = true;

        let total_q: f64 = q.iter().sum();
        let f = topo.facility_flow();
        let mut ret = facility + total_q / (f * topo.tower.water_cp);
        let mut recovered = 0.0;
        if let Some(h) = &topo.hru {
            let o = hru::hru_extract(ret, f, topo.tower.water_cp, h)?;
            recovered = o.q_recovered;
            ret = o.downstream_t;
        }
        let amb = ambient_from_wetbulb(t_owb, topo)?;
        let towers = self
            .tower_setpoints
            .iter()
            .map(|&sp| self.tower_substep(ret, sp, &amb))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Step {
                step: 0,
                source: Box::new(e),
            })?;
        self.tower_inlet = vec![ret; topo.num_towers];
        self.tower_outlet = towers.iter().map(|t| t.t_out).collect();
        let pump: Vec<f64> = self.actuation.iter().map(|a| blade::pump_power(a.flow, p)).collect();
        Ok(self.assemble(&q, &towers, recovered, &pump))
    }

    fn tower_substep(&self, t_in: f64, setpoint: f64, ambient: &Ambient) -> Result<TowerOutcome> {
        let tp = &self.topo.tower;
        let r = tower::tower_cell_step(
            WaterInflow {
                t_in,
                m_w: tp.design_water_flow,
            },
            setpoint,
            ambient,
            tp,
            self.topo.timing.sim_time_step,
        )?;
        Ok(TowerOutcome {
            t_out: r.t_out,
            cell_power: r.p_fan,
            m_evap: r.m_evap * self.topo.cells_per_tower as f64,
            speed: r.speed_ratio,
        })
    }

    fn check_counts(&self, cabinets: usize, towers: usize) -> Result<()> {
        if !self.started {
            return Err(domain("step", "reset must be called first"));
        }
        if self.done {
            return Err(domain("step", "episode finished; reset first"));
        }
        if cabinets != self.topo.num_cabinets {
            return Err(Error::Shape {
                op: "step cabinet actions",
                expected: self.topo.num_cabinets,
                got: cabinets,
            });
        }
        if towers != self.topo.num_towers {
            return Err(Error::Shape {
                op: "step tower actions",
                expected: self.topo.num_towers,
                got: towers,
            });
        }
        Ok(())
    }

    /// Agent-space step.
    pub fn step(&mut self, cabinet_actions: &[CabinetRawAction], ct_actions: &[CtAction]) -> Result<StepOutcome> {
        self.check_counts(cabinet_actions.len(), ct_actions.len())?;
        let b = self.topo.blade_groups_per_cabinet;
        let p = &self.topo.cabinet;
        let mut acts = Vec::with_capacity(cabinet_actions.len());
        let mut clamps = 0;
        for a in cabinet_actions {
            if a.valves.len() != b {
                return Err(Error::Shape {
                    op: "cabinet valve vector",
                    expected: b,
                    got: a.valves.len(),
                });
            }
            let (sp, c1) = scale_action(a.setpoint, p.coolant_setpoint_range.min, p.coolant_setpoint_range.max);
            let (flow, c2) = scale_action(a.flow, p.flow_range.min, p.flow_range.max);
            clamps += c1 as u64 + c2 as u64;
            acts.push(CabinetActuation {
                supply_setpoint: sp,
                flow,
                valves: project_valves(&a.valves),
            });
        }
        let t_owb = self.trace.sample(self.start_time + self.elapsed).t_owb;
        let setpoints = ct_actions
            .iter()
            .zip(&self.tower_setpoints)
            .map(|(a, &sp)| apply_ct_delta(sp, a.delta_index, &self.topo, t_owb))
            .collect::<Result<Vec<_>>>()?;
        self.clamps += clamps;
        self.advance(acts, setpoints)
    }

    /// Physical-unit step: cabinet actuations as-is (validated) and absolute
    /// leaving-water setpoints in °C (clamped to the wet-bulb window).
    pub fn step_physical(&mut self, actuation: &[CabinetActuation], lwt_setpoints: &[f64]) -> Result<StepOutcome> {
        self.check_counts(actuation.len(), lwt_setpoints.len())?;
        for a in actuation {
            a.check(&self.topo.cabinet, self.topo.blade_groups_per_cabinet)?;
        }
        let t_owb = self.trace.sample(self.start_time + self.elapsed).t_owb;
        let setpoints = lwt_setpoints.iter().map(|&s| clamp_lwt(s, &self.topo, t_owb)).collect();
        self.advance(actuation.to_vec(), setpoints)
    }

    fn advance(&mut self, actuation: Vec<CabinetActuation>, setpoints: Vec<f64>) -> Result<StepOutcome> {
        let step = self.step_index;
        let wrap = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let n_sub = self.topo.timing.substeps_per_step();
        let dt = self.topo.timing.sim_time_step;
        let b = self.topo.blade_groups_per_cabinet;
        let n_cab = self.topo.num_cabinets;
        let n_tow = self.topo.num_towers;
        let f = self.topo.facility_flow();
        let cp_w = self.topo.tower.water_cp;

        let mut q_sum = vec![0.0; n_cab];
        let mut power_sum = vec![0.0; n_tow];
        let mut evap_sum = vec![0.0; n_tow];
        let mut recovered_sum = 0.0;
        let mut last_towers = Vec::new();
        let mut delivered = vec![0.0; n_cab];
        let mut inlet = self.facility_supply;

        for k in 0..n_sub {
            let t = self.start_time + self.elapsed + k as f64 * dt;
            let sample = self.trace.sample(t);
            let mut total_q = 0.0;
            for (i, cab) in self.cabinets.iter_mut().enumerate() {
                let r = blade::cdu_loop_step(
                    cab,
                    &actuation[i],
                    &sample.loads[i * b..(i + 1) * b],
                    self.facility_supply,
                    dt,
                    &self.topo.cabinet,
                )
                .map_err(wrap)?;
                q_sum[i] += r.q_cabinet;
                total_q += r.q_cabinet;
                delivered[i] = r.delivered_t;
                *cab = r.state;
            }
            let mut ret = self.facility_supply + total_q / (f * cp_w);
            if let Some(h) = &self.topo.hru {
                let o = hru::hru_extract(ret, f, cp_w, h).map_err(wrap)?;
                recovered_sum += o.q_recovered;
                ret = o.downstream_t;
            }
            inlet = ret;
            let amb = ambient_from_wetbulb(sample.t_owb, &self.topo).map_err(wrap)?;
            let towers = setpoints
                .iter()
                .map(|&sp| self.tower_substep(ret, sp, &amb))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            for (j, tw) in towers.iter().enumerate() {
                power_sum[j] += tw.cell_power;
                evap_sum[j] += tw.m_evap;
            }
            self.facility_supply = towers.iter().map(|t| t.t_out).sum::<f64>() / n_tow as f64;
            last_towers = towers;
        }

        let inv = 1.0 / n_sub as f64;
        self.elapsed += self.topo.timing.step_size;
        self.step_index += 1;
        self.done = self.elapsed >= self.topo.timing.max_episode_duration - 1e-9;
        self.tower_setpoints = setpoints;
        self.tower_inlet = vec![inlet; n_tow];
        self.tower_outlet = last_towers.iter().map(|t| t.t_out).collect();
        self.actuation = actuation;

        let q_avg: Vec<f64> = q_sum.iter().map(|q| q * inv).collect();
        let towers: Vec<TowerOutcome> = last_towers
            .iter()
            .enumerate()
            .map(|(j, t)| TowerOutcome {
                t_out: t.t_out,
                cell_power: power_sum[j] * inv,
                m_evap: evap_sum[j] * inv,
                speed: t.speed,
            })
            .collect();
        let pump: Vec<f64> = self
            .actuation
            .iter()
            .map(|a| blade::pump_power(a.flow, &self.topo.cabinet))
            .collect();
        self.delivered = delivered;
        Ok(self.assemble(&q_avg, &towers, recovered_sum * inv, &pump))
    }

    fn assemble(&self, q: &[f64], towers: &[TowerOutcome], recovered: f64, pump: &[f64]) -> StepOutcome {
        let topo = &self.topo;
        let b = topo.blade_groups_per_cabinet;
        let now = self.start_time + self.elapsed;
        let sample = self.trace.sample(now);
        let temps_k: Vec<Vec<f64>> = self.cabinets.iter().map(|c| c.blades.iter().map(|g| g.t).collect()).collect();
        let loads: Vec<Vec<f64>> = (0..topo.num_cabinets).map(|i| sample.loads[i * b..(i + 1) * b].to_vec()).collect();
        let temps_c: Vec<Vec<f64>> = temps_k.iter().map(|r| r.iter().map(|t| t - KELVIN).collect()).collect();
        let cell_power: Vec<Vec<f64>> = towers.iter().map(|t| vec![t.cell_power; topo.cells_per_tower]).collect();

        let blade_obs = decompose_blade_obs(&temps_k, &loads).expect("consistent shapes");
        let ct_obs = decompose_ct_obs(&cell_power, &self.tower_outlet, sample.t_owb).expect("consistent shapes");
        let blade_rewards: Vec<f64> = temps_c.iter().map(|r| -r.iter().sum::<f64>()).collect();
        let ct_rewards: Vec<f64> = cell_power.iter().map(|r| -r.iter().sum::<f64>() / 1000.0).collect();
        let shifted = blade_rewards.iter().map(|r| r + b as f64 * REWARD_T_REF).collect();

        StepOutcome {
            blade_obs,
            ct_obs,
            blade_rewards,
            ct_rewards,
            done: self.done,
            info: StepInfo {
                step: self.step_index,
                elapsed_s: self.elapsed,
                trace_time_s: now,
                t_owb: sample.t_owb,
                blade_temps_c: temps_c,
                blade_loads_w: loads,
                cabinet_heat_w: q.to_vec(),
                coolant_setpoint_c: self.actuation.iter().map(|a| a.supply_setpoint).collect(),
                coolant_delivered_c: self.delivered.iter().map(|d| d - KELVIN).collect(),
                coolant_return_c: self.cabinets.iter().map(|c| c.return_t - KELVIN).collect(),
                pump_flow: self.actuation.iter().map(|a| a.flow).collect(),
                valves: self.actuation.iter().map(|a| a.valves.clone()).collect(),
                pump_power_w: pump.to_vec(),
                cell_power_w: cell_power,
                tower_setpoint_c: self.tower_setpoints.clone(),
                tower_inlet_k: self.tower_inlet.clone(),
                tower_outlet_k: self.tower_outlet.clone(),
                evaporation: towers.iter().map(|t| t.m_evap).collect(),
                fan_speed: towers.iter().map(|t| t.speed).collect(),
                heat_recovered_w: recovered,
                facility_supply_k: self.facility_supply,
                shifted_blade_rewards: shifted,
                action_clamps: self.clamps,
            },
        }
    }
}

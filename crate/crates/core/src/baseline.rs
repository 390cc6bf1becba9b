//! Trim-and-respond setpoint reset for the CDU coolant supply and the tower
//! leaving-water temperature.

use serde::{Deserialize, Serialize};

use crate::blade::CabinetActuation;
use crate::control::{Command, Controller};
use crate::env::StepOutcome;
use crate::error::{domain, Error, Result};
use crate::psychro::KELVIN;
use crate::topology::SystemTopology;
use crate::tower::TowerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimRespondParams {
    pub coolant_min: f64,
    pub coolant_max: f64,
    pub trim_amount: f64,
    pub respond_amount: f64,
    pub request_threshold: u32,
    pub critical_threshold: f64,
    pub warning_threshold: f64,
    pub persistence_s: f64,
    pub util_threshold: f64,
    pub control_interval_s: f64,
    /// Minimum rise over one control interval counted as "rising", K.
    pub rising_threshold: f64,
}

impl Default for TrimRespondParams {
    fn default() -> Self {
        Self {
            coolant_min: 18.0,
            coolant_max: 30.0,
            trim_amount: 0.1,
            respond_amount: 0.3,
            request_threshold: 2,
            critical_threshold: 40.0,
            warning_threshold: 35.0,
            persistence_s: 120.0,
            util_threshold: 0.85,
            control_interval_s: 120.0,
            rising_threshold: 0.05,
        }
    }
}

impl TrimRespondParams {
    pub fn check(&self) -> Result<()> {
        if !(self.coolant_min < self.coolant_max) {
            return Err(domain("trim-respond params", "coolant_min must be below coolant_max"));
        }
        if !(self.trim_amount > 0.0 && self.respond_amount > 0.0) {
            return Err(domain("trim-respond params", "trim and respond amounts must be positive"));
        }
        if !(self.control_interval_s > 0.0) {
            return Err(domain("trim-respond params", "control interval must be positive"));
        }
        Ok(())
    }
}

/// Time each cabinet has continuously spent above the critical and warning
/// thresholds, s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestTimers {
    pub critical: Vec<f64>,
    pub warning: Vec<f64>,
}

impl RequestTimers {
    pub fn new(cabinets: usize) -> Self {
        Self {
            critical: vec![0.0; cabinets],
            warning: vec![0.0; cabinets],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimRespondState {
    pub coolant_setpoint: f64,
    pub lwt_setpoint: f64,
    pub timers: RequestTimers,
    pub ct_request_latched: bool,
}

/// Per-cabinet requests (3 critical, 2 warning, 1 busy and warming, 0 quiet)
/// summed over cabinets, with the persistence timers advanced by `dt`.
pub fn cooling_requests(
    temps: &[f64],
    utils: &[f64],
    rising: &[bool],
    timers: &RequestTimers,
    p: &TrimRespondParams,
    dt: f64,
) -> Result<(u32, RequestTimers)> {
    let n = temps.len();
    for (len, what) in [
        (utils.len(), "utilizations"),
        (rising.len(), "rising flags"),
        (timers.critical.len(), "critical timers"),
        (timers.warning.len(), "warning timers"),
    ] {
        if len != n {
            return Err(Error::Shape {
                op: what,
                expected: n,
                got: len,
            });
        }
    }
    let mut next = RequestTimers::new(n);
    let mut total = 0;
    for i in 0..n {
        next.critical[i] = if temps[i] > p.critical_threshold { timers.critical[i] + dt } else { 0.0 };
        next.warning[i] = if temps[i] > p.warning_threshold { timers.warning[i] + dt } else { 0.0 };
        total += if next.critical[i] >= p.persistence_s {
            3
        } else if next.warning[i] >= p.persistence_s {
            2
        } else if utils[i] > p.util_threshold && rising[i] {
            1
        } else {
            0
        };
    }
    Ok((total, next))
}

pub fn coolant_trim_respond(setpoint: f64, total_requests: u32, p: &TrimRespondParams) -> f64 {
    let s = if total_requests == 0 {
        setpoint + p.trim_amount
    } else if total_requests >= p.request_threshold {
        setpoint - p.respond_amount * total_requests as f64
    } else {
        setpoint
    };
    p.coolant_min.max(p.coolant_max.min(s))
}

/// Returns the new leaving-water setpoint (°C) and latch state.
pub fn ct_trim_respond(
    lwt_setpoint: f64,
    latched: bool,
    t_owb_c: f64,
    coolant_setpoint: f64,
    p: &TrimRespondParams,
    tower: &TowerParams,
) -> (f64, bool) {
    let latched = if coolant_setpoint < 1.05 * p.coolant_min {
        true
    } else if coolant_setpoint > 1.15 * p.coolant_min {
        false
    } else {
        latched
    };
    let requests = latched as u32;
    let mut s = if requests == 0 {
        lwt_setpoint + p.trim_amount
    } else {
        lwt_setpoint - p.respond_amount * requests as f64
    };
    let optimal = t_owb_c + tower.optimal_approach;
    if s < optimal - 0.5 {
        s = optimal;
    }
    let lwt_min = t_owb_c + tower.min_approach;
    (lwt_min.max(tower.lwt_max.min(s)), latched)
}

/// Trim-and-respond controller driving every cabinet with one shared coolant
/// setpoint, fixed mid-range pump flow and equal valves.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub params: TrimRespondParams,
    topo: SystemTopology,
    state: Option<TrimRespondState>,
    prev_temps: Vec<f64>,
    since_control: f64,
}

impl BaselineController {
    pub fn new(topo: &SystemTopology, params: TrimRespondParams) -> Result<Self> {
        params.check()?;
        Ok(Self {
            params,
            topo: topo.clone(),
            state: None,
            prev_temps: Vec::new(),
            since_control: 0.0,
        })
    }

    pub fn state(&self) -> Option<&TrimRespondState> {
        self.state.as_ref()
    }

    fn server_temps(o: &StepOutcome) -> Vec<f64> {
        o.info
            .blade_temps_c
            .iter()
            .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    fn command(&self) -> Command {
        let st = self.state.as_ref().expect("initialized");
        let p = &self.topo.cabinet;
        let b = self.topo.blade_groups_per_cabinet;
        let act = CabinetActuation {
            supply_setpoint: p.coolant_setpoint_range.clamp(st.coolant_setpoint),
            flow: p.flow_range.mid(),
            valves: vec![1.0 / b as f64; b],
        };
        Command::Physical {
            cabinets: vec![act; self.topo.num_cabinets],
            lwt_setpoints: vec![st.lwt_setpoint; self.topo.num_towers],
        }
    }

    fn initialize(&mut self, o: &StepOutcome) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let p = &self.params;
        let coolant = mean(&o.info.coolant_delivered_c).clamp(p.coolant_min, p.coolant_max);
        let outlet: Vec<f64> = o.info.tower_outlet_k.iter().map(|t| t - KELVIN).collect();
        let t_owb_c = o.info.t_owb - KELVIN;
        let lwt = (mean(&outlet).min(self.topo.tower.lwt_max)).max(t_owb_c + self.topo.tower.min_approach);
        self.state = Some(TrimRespondState {
            coolant_setpoint: coolant,
            lwt_setpoint: lwt,
            timers: RequestTimers::new(self.topo.num_cabinets),
            ct_request_latched: false,
        });
        self.prev_temps = Self::server_temps(o);
        self.since_control = 0.0;
    }
}

impl Controller for BaselineController {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn details(&self) -> String {
        "trim-and-respond (coolant supply + tower LWT)".into()
    }

    fn act(&mut self, o: &StepOutcome) -> Result<Command> {
        if o.info.step == 0 || self.state.is_none() {
            self.initialize(o);
            return Ok(self.command());
        }
        self.since_control += self.topo.timing.step_size;
        if self.since_control + 1e-9 < self.params.control_interval_s {
            return Ok(self.command());
        }
        let dt = self.since_control;
        self.since_control = 0.0;

        let temps = Self::server_temps(o);
        let b = self.topo.blade_groups_per_cabinet as f64;
        let p_nom = self.topo.cabinet.nominal_power;
        let utils: Vec<f64> = o.info.blade_loads_w.iter().map(|l| l.iter().sum::<f64>() / (b * p_nom)).collect();
        let rising: Vec<bool> = temps
            .iter()
            .zip(&self.prev_temps)
            .map(|(t, prev)| t - prev > self.params.rising_threshold)
            .collect();
        let p = self.params;
        let tower = self.topo.tower.clone();
        let st = self.state.as_mut().expect("initialized");
        let (requests, timers) = cooling_requests(&temps, &utils, &rising, &st.timers, &p, dt)?;
        st.timers = timers;
        st.coolant_setpoint = coolant_trim_respond(st.coolant_setpoint, requests, &p);
        let (lwt, latched) = ct_trim_respond(
            st.lwt_setpoint,
            st.ct_request_latched,
            o.info.t_owb - KELVIN,
            st.coolant_setpoint,
            &p,
            &tower,
        );
        st.lwt_setpoint = lwt;
        st.ct_request_latched = latched;
        self.prev_temps = temps;
        Ok(self.command())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> TrimRespondParams {
        TrimRespondParams::default()
    }

    #[test]
    fn coolant_cases() {
        assert!((coolant_trim_respond(25.0, 0, &p()) - 25.1).abs() < 1e-12);
        assert!((coolant_trim_respond(25.0, 3, &p()) - 24.1).abs() < 1e-12);
        assert_eq!(coolant_trim_respond(25.0, 1, &p()), 25.0);
        assert_eq!(coolant_trim_respond(29.95, 0, &p()), 30.0);
        assert_eq!(coolant_trim_respond(18.2, 6, &p()), 18.0);
    }

    #[test]
    fn ct_cases() {
        let t = TowerParams::default();
        let (s, l) = ct_trim_respond(24.0, false, 18.0, 25.0, &p(), &t);
        assert!((s - 24.1).abs() < 1e-12);
        assert!(!l);
        let (s, l) = ct_trim_respond(24.0, false, 18.0, 18.5, &p(), &t);
        assert!((s - 23.7).abs() < 1e-12);
        assert!(l);
        let (s, _) = ct_trim_respond(20.0, false, 18.0, 25.0, &p(), &t);
        assert_eq!(s, 21.5);
        let (s, _) = ct_trim_respond(29.35, false, 18.0, 25.0, &p(), &t);
        assert_eq!(s, 29.4);
    }

    #[test]
    fn request_cases() {
        let q = p();
        let t0 = RequestTimers::new(1);
        assert_eq!(cooling_requests(&[41.0], &[0.5], &[false], &t0, &q, 120.0).unwrap().0, 3);
        assert_eq!(cooling_requests(&[36.0], &[0.5], &[false], &t0, &q, 120.0).unwrap().0, 2);
        assert_eq!(cooling_requests(&[30.0], &[0.9], &[true], &t0, &q, 120.0).unwrap().0, 1);
        assert_eq!(cooling_requests(&[30.0, 31.0], &[0.5, 0.5], &[true, true], &RequestTimers::new(2), &q, 120.0).unwrap().0, 0);
        // Not yet sustained.
        let (r, t1) = cooling_requests(&[41.0], &[0.5], &[false], &t0, &q, 60.0).unwrap();
        assert_eq!(r, 0);
        assert_eq!(cooling_requests(&[41.0], &[0.5], &[false], &t1, &q, 60.0).unwrap().0, 3);
        // Timer resets when the condition breaks.
        let (_, t2) = cooling_requests(&[30.0], &[0.5], &[false], &t1, &q, 60.0).unwrap();
        assert_eq!(t2.critical[0], 0.0);
        assert!(cooling_requests(&[30.0], &[0.5, 0.1], &[false], &t0, &q, 60.0).is_err());
    }
}

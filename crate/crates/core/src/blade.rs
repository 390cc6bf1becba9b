//! Blade-group thermal dynamics and the per-cabinet CDU loop.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::psychro::KELVIN;

/// Polynomial shaping of the generated heat, evaluated on normalized load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhiPoly {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Default for PhiPoly {
    fn default() -> Self {
        Self {
            a0: 0.0,
            a1: 1.0,
            a2: 0.015,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Per-cabinet parameters. Thermal capacitance, conductance and nominal
/// power are per blade group; flows are per cabinet except `nominal_flow`,
/// which is the per-branch flow at which the conductance is nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CabinetParams {
    pub thermal_capacitance: f64,
    pub nominal_conductance: f64,
    pub conductance_exponent: f64,
    pub nominal_flow: f64,
    pub nominal_power: f64,
    pub phi: PhiPoly,
    pub hx_effectiveness: f64,
    /// Coolant supply setpoint window, °C.
    pub coolant_setpoint_range: Range,
    /// Cabinet pump flow window, kg/s.
    pub flow_range: Range,
    pub coolant_cp: f64,
    /// Pump power at `flow_range.max`; scales with the cube of flow.
    pub pump_nominal_power: f64,
}

impl Default for CabinetParams {
    fn default() -> Self {
        Self {
            thermal_capacitance: 1.5e6,
            nominal_conductance: 1500.0,
            conductance_exponent: 0.8,
            nominal_flow: 10.0,
            nominal_power: 40_000.0,
            phi: PhiPoly::default(),
            hx_effectiveness: 0.9,
            coolant_setpoint_range: Range::new(18.0, 30.0),
            flow_range: Range::new(2.0, 40.0),
            coolant_cp: 4186.0,
            pump_nominal_power: 3000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BladeGroupState {
    /// Temperature, K.
    pub t: f64,
    /// Heat removed by the coolant since reset, J.
    pub accumulated_heat: f64,
}

impl BladeGroupState {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            accumulated_heat: 0.0,
        }
    }
}

/// Physical CDU command for one cabinet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinetActuation {
    /// Coolant supply setpoint, °C.
    pub supply_setpoint: f64,
    /// Pump flow, kg/s.
    pub flow: f64,
    /// Valve fractions, one per blade group, on the simplex.
    pub valves: Vec<f64>,
}

impl CabinetActuation {
    pub fn check(&self, params: &CabinetParams, blade_groups: usize) -> Result<()> {
        if self.valves.len() != blade_groups {
            return Err(Error::Shape {
                op: "cabinet actuation",
                expected: blade_groups,
                got: self.valves.len(),
            });
        }
        if self.valves.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(domain("cabinet actuation", "valve outside [0, 1]"));
        }
        let sum: f64 = self.valves.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(domain("cabinet actuation", format!("valves sum to {sum}")));
        }
        let r = params.coolant_setpoint_range;
        if !(r.min..=r.max).contains(&self.supply_setpoint) {
            return Err(domain(
                "cabinet actuation",
                format!("setpoint {} °C outside [{}, {}]", self.supply_setpoint, r.min, r.max),
            ));
        }
        let f = params.flow_range;
        if !(f.min..=f.max).contains(&self.flow) {
            return Err(domain("cabinet actuation", format!("flow {} kg/s outside range", self.flow)));
        }
        Ok(())
    }
}

/// Thermal state of one cabinet: its blade groups and the secondary coolant
/// temperature returning to the CDU heat exchanger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinetState {
    pub blades: Vec<BladeGroupState>,
    pub return_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinetStepResult {
    pub state: CabinetState,
    /// Heat handed to the facility loop, W.
    pub q_cabinet: f64,
    /// Per-branch convective flows, W.
    pub branch_q: Vec<f64>,
    /// Coolant temperature delivered to the blade groups, K.
    pub delivered_t: f64,
    pub pump_power: f64,
}

impl CabinetStepResult {
    pub fn coolant_return_t(&self) -> f64 {
        self.state.return_t
    }
}

pub fn phi_scale(p_branch: f64, poly: &PhiPoly, p_nom: f64) -> Result<f64> {
    if p_branch < 0.0 {
        return Err(domain("phi_scale", format!("negative load {p_branch} W")));
    }
    if p_nom <= 0.0 {
        return Err(domain("phi_scale", "nominal power must be positive"));
    }
    let u = p_branch / p_nom;
    Ok((poly.a0 + poly.a1 * u + poly.a2 * u * u) * p_nom)
}

pub fn convective_flow(g_c: f64, t_solid: f64, t_fluid: f64) -> f64 {
    g_c * (t_solid - t_fluid)
}

/// `G_nom (valve * flow / m_nom)^e`.
pub fn conductance_from_flow(m_flow: f64, valve: f64, params: &CabinetParams) -> f64 {
    let ratio = (valve * m_flow / params.nominal_flow).max(0.0);
    if ratio == 0.0 {
        return 0.0;
    }
    params.nominal_conductance * ratio.powf(params.conductance_exponent)
}

/// One RK4 step of `C dT/dt = phi(P) - G (T - T_fluid)`.
pub fn blade_group_step(
    state: &BladeGroupState,
    p_branch: f64,
    t_fluid: f64,
    g_c: f64,
    dt: f64,
    params: &CabinetParams,
) -> Result<BladeGroupState> {
    if dt <= 0.0 {
        return Err(domain("blade_group_step", format!("dt {dt} must be positive")));
    }
    if params.thermal_capacitance <= 0.0 {
        return Err(domain("blade_group_step", "thermal capacitance must be positive"));
    }
    if g_c < 0.0 {
        return Err(domain("blade_group_step", "negative conductance"));
    }
    let heat = phi_scale(p_branch, &params.phi, params.nominal_power)?;
    let c = params.thermal_capacitance;
    let rate = |t: f64| (heat - convective_flow(g_c, t, t_fluid)) / c;
    let t0 = state.t;
    let k1 = rate(t0);
    let k2 = rate(t0 + 0.5 * dt * k1);
    let k3 = rate(t0 + 0.5 * dt * k2);
    let k4 = rate(t0 + dt * k3);
    let t1 = t0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if !t1.is_finite() {
        return Err(domain("blade_group_step", "non-finite temperature"));
    }
    let removed = convective_flow(g_c, 0.5 * (t0 + t1), t_fluid) * dt;
    Ok(BladeGroupState {
        t: t1,
        accumulated_heat: state.accumulated_heat + removed,
    })
}

/// Lowest coolant temperature the CDU heat exchanger can deliver: the
/// secondary stream leaves the exchanger at `T_fac + (1 - eps)(T_ret - T_fac)`.
pub fn hx_outlet_t(facility_supply_t: f64, secondary_return_t: f64, effectiveness: f64) -> f64 {
    facility_supply_t + (1.0 - effectiveness) * (secondary_return_t - facility_supply_t)
}

pub fn delivered_coolant_t(
    setpoint_c: f64,
    facility_supply_t: f64,
    secondary_return_t: f64,
    effectiveness: f64,
) -> f64 {
    (setpoint_c + KELVIN).max(hx_outlet_t(facility_supply_t, secondary_return_t, effectiveness))
}

pub fn pump_power(flow: f64, params: &CabinetParams) -> f64 {
    let r = flow / params.flow_range.max;
    params.pump_nominal_power * r * r * r
}

pub fn cdu_loop_step(
    state: &CabinetState,
    act: &CabinetActuation,
    loads: &[f64],
    facility_supply_t: f64,
    dt: f64,
    params: &CabinetParams,
) -> Result<CabinetStepResult> {
    let b = state.blades.len();
    if loads.len() != b {
        return Err(Error::Shape {
            op: "cdu_loop_step",
            expected: b,
            got: loads.len(),
        });
    }
    act.check(params, b)?;

    let delivered_t = delivered_coolant_t(
        act.supply_setpoint,
        facility_supply_t,
        state.return_t,
        params.hx_effectiveness,
    );
    let mut blades = Vec::with_capacity(b);
    let mut branch_q = Vec::with_capacity(b);
    for ((blade, &load), &valve) in state.blades.iter().zip(loads).zip(&act.valves) {
        let g = conductance_from_flow(act.flow, valve, params);
        let next = blade_group_step(blade, load, delivered_t, g, dt, params)?;
        branch_q.push(convective_flow(g, 0.5 * (blade.t + next.t), delivered_t));
        blades.push(next);
    }
    let q_cabinet: f64 = branch_q.iter().sum();
    let return_t = if act.flow > 0.0 {
        delivered_t + q_cabinet / (act.flow * params.coolant_cp)
    } else {
        delivered_t
    };
    Ok(CabinetStepResult {
        state: CabinetState { blades, return_t },
        q_cabinet,
        branch_q,
        delivered_t,
        pump_power: pump_power(act.flow, params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> CabinetParams {
        CabinetParams::default()
    }

    #[test]
    fn phi_cases() {
        let p = params();
        assert_eq!(phi_scale(0.0, &p.phi, p.nominal_power).unwrap(), 0.0);
        let lin = PhiPoly { a0: 0.0, a1: 1.0, a2: 0.0 };
        assert_relative_eq!(phi_scale(12_345.0, &lin, 40_000.0).unwrap(), 12_345.0, max_relative = 1e-15);
        assert_relative_eq!(phi_scale(40_000.0, &p.phi, 40_000.0).unwrap(), 1.015 * 40_000.0, max_relative = 1e-15);
        assert!(phi_scale(-1.0, &p.phi, 40_000.0).is_err());
    }

    #[test]
    fn convection_cases() {
        assert_eq!(convective_flow(0.0, 320.0, 300.0), 0.0);
        assert_eq!(convective_flow(100.0, 300.0, 300.0), 0.0);
        assert_eq!(convective_flow(100.0, 305.0, 300.0), 500.0);
    }

    #[test]
    fn conductance_cases() {
        let p = params();
        assert_eq!(conductance_from_flow(10.0, 0.0, &p), 0.0);
        assert_relative_eq!(conductance_from_flow(p.nominal_flow, 1.0, &p), p.nominal_conductance, max_relative = 1e-15);
        assert_relative_eq!(
            conductance_from_flow(p.nominal_flow / 2.0, 1.0, &p),
            p.nominal_conductance * 0.5_f64.powf(0.8),
            max_relative = 1e-15
        );
    }

    #[test]
    fn blade_step_fixed_point_and_pure_heating() {
        let p = params();
        let s = BladeGroupState::new(300.0);
        let same = blade_group_step(&s, 0.0, 300.0, 2000.0, 1.0, &p).unwrap();
        assert_eq!(same.t, 300.0);

        // G = 0: dT = phi(P) dt / C exactly.
        let heat = phi_scale(30_000.0, &p.phi, p.nominal_power).unwrap();
        let next = blade_group_step(&s, 30_000.0, 290.0, 0.0, 1.0, &p).unwrap();
        assert_relative_eq!(next.t - 300.0, heat / p.thermal_capacitance, max_relative = 1e-12);

        assert!(blade_group_step(&s, 0.0, 300.0, 1.0, 0.0, &p).is_err());
        let bad = CabinetParams { thermal_capacitance: 0.0, ..p };
        assert!(blade_group_step(&s, 0.0, 300.0, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn blade_step_reaches_steady_state() {
        let p = params();
        let g = 3000.0;
        let heat = phi_scale(25_000.0, &p.phi, p.nominal_power).unwrap();
        let mut s = BladeGroupState::new(300.0);
        for _ in 0..20_000 {
            s = blade_group_step(&s, 25_000.0, 295.0, g, 1.0, &p).unwrap();
        }
        assert!((s.t - (295.0 + heat / g)).abs() < 1e-3);
    }

    fn cabinet(b: usize, t: f64) -> CabinetState {
        CabinetState {
            blades: vec![BladeGroupState::new(t); b],
            return_t: t,
        }
    }

    #[test]
    fn cdu_equilibrium() {
        let p = params();
        let t = 25.0 + KELVIN;
        let act = CabinetActuation {
            supply_setpoint: 25.0,
            flow: 20.0,
            valves: vec![1.0 / 3.0; 3],
        };
        let act = CabinetActuation {
            valves: vec![act.valves[0], act.valves[1], 1.0 - 2.0 * act.valves[0]],
            ..act
        };
        let r = cdu_loop_step(&cabinet(3, t), &act, &[0.0; 3], 20.0 + KELVIN, 1.0, &p).unwrap();
        assert_eq!(r.q_cabinet, 0.0);
        for blade in &r.state.blades {
            assert_eq!(blade.t, t);
        }
    }

    #[test]
    fn cdu_single_branch_matches_blade_step() {
        let p = params();
        let state = cabinet(1, 310.0);
        let act = CabinetActuation {
            supply_setpoint: 24.0,
            flow: 15.0,
            valves: vec![1.0],
        };
        let r = cdu_loop_step(&state, &act, &[35_000.0], 290.0, 1.0, &p).unwrap();
        let t_fluid = delivered_coolant_t(24.0, 290.0, 310.0, p.hx_effectiveness);
        let g = conductance_from_flow(15.0, 1.0, &p);
        let direct = blade_group_step(&state.blades[0], 35_000.0, t_fluid, g, 1.0, &p).unwrap();
        assert_eq!(r.state.blades[0], direct);
        assert_eq!(r.delivered_t, t_fluid);
    }

    #[test]
    fn cdu_three_branches_bookkeeping() {
        let p = params();
        let state = CabinetState {
            blades: vec![
                BladeGroupState::new(305.0),
                BladeGroupState::new(309.0),
                BladeGroupState::new(312.0),
            ],
            return_t: 303.0,
        };
        let third = 1.0 / 3.0;
        let act = CabinetActuation {
            supply_setpoint: 22.0,
            flow: 24.0,
            valves: vec![third, third, 1.0 - 2.0 * third],
        };
        let loads = [10_000.0, 20_000.0, 30_000.0];
        let r = cdu_loop_step(&state, &act, &loads, 293.0, 1.0, &p).unwrap();
        // Independent recomputation, one branch at a time.
        let t_fluid = (22.0 + KELVIN).max(293.0 + 0.1 * (303.0 - 293.0));
        let mut sum = 0.0;
        for j in 0..3 {
            let g = p.nominal_conductance * (act.valves[j] * 24.0 / p.nominal_flow).powf(0.8);
            let heat = (loads[j] / 40_000.0 + 0.015 * (loads[j] / 40_000.0).powi(2)) * 40_000.0;
            let f = |t: f64| (heat - g * (t - t_fluid)) / p.thermal_capacitance;
            let t0 = state.blades[j].t;
            let k1 = f(t0);
            let k2 = f(t0 + 0.5 * k1);
            let k3 = f(t0 + 0.5 * k2);
            let k4 = f(t0 + k3);
            let t1 = t0 + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            sum += g * (0.5 * (t0 + t1) - t_fluid);
        }
        assert_relative_eq!(r.q_cabinet, sum, max_relative = 1e-9);
        let branch_sum: f64 = r.branch_q.iter().sum();
        assert_relative_eq!(r.q_cabinet, branch_sum, max_relative = 1e-12);
        assert_relative_eq!(r.coolant_return_t(), r.delivered_t + r.q_cabinet / (24.0 * p.coolant_cp), max_relative = 1e-12);
    }

    #[test]
    fn cdu_rejects_bad_shapes() {
        let p = params();
        let act = CabinetActuation {
            supply_setpoint: 22.0,
            flow: 24.0,
            valves: vec![0.5, 0.5],
        };
        assert!(cdu_loop_step(&cabinet(3, 300.0), &act, &[0.0; 3], 293.0, 1.0, &p).is_err());
        assert!(cdu_loop_step(&cabinet(2, 300.0), &act, &[0.0; 3], 293.0, 1.0, &p).is_err());
        let off = CabinetActuation { valves: vec![0.7, 0.7], ..act };
        assert!(cdu_loop_step(&cabinet(2, 300.0), &off, &[0.0; 2], 293.0, 1.0, &p).is_err());
    }
}

//! Cooling-tower cell model: empirical approach correlation, quasi-steady
//! water/air balances, evaporation and fan power.
//!
//! Sump and air-volume storage terms are treated as quasi-steady at the
//! physics substep, so each call enforces the steady forms of the balances:
//! `m_evap = m_a (X_out - X_in)`, `Q_tot = m_a (h_out - h_in)` and
//! `Q_sen = Q_tot - Q_lat`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::psychro::{self, MoistAirState, KELVIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YorkCalcCoeffs {
    pub c: [f64; 10],
    #[serde(rename = "A_R")]
    pub approach_ratio: f64,
    #[serde(rename = "R_F_nom")]
    pub nominal_flow_ratio: f64,
    pub use_q_ratio: bool,
}

impl YorkCalcCoeffs {
    /// Illustrative coefficient preset sized for the default cell. It is not
    /// fitted to any real tower.
    pub fn preset() -> Self {
        Self {
            c: [0.3, 0.05, 0.0, 1.2, 0.5, 0.0, 0.8, 0.2, 0.0, 0.0],
            approach_ratio: 1.0,
            nominal_flow_ratio: 1.0,
            use_q_ratio: true,
        }
    }
}

impl Default for YorkCalcCoeffs {
    fn default() -> Self {
        Self::preset()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FanParams {
    pub eta_fan: f64,
    #[serde(rename = "dp_nom")]
    pub dp_nom: f64,
    #[serde(rename = "V_nom")]
    pub v_nom: f64,
    #[serde(rename = "P_nom")]
    pub p_nom: f64,
    pub rho_a: f64,
}

impl Default for FanParams {
    fn default() -> Self {
        Self {
            eta_fan: 0.5,
            dp_nom: 300.0,
            v_nom: 25.0,
            p_nom: 15_000.0,
            rho_a: 1.2,
        }
    }
}

/// Per-cell tower parameters. Flows are per cell; temperatures in °C and
/// approaches in K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerParams {
    pub yorkcalc: YorkCalcCoeffs,
    pub fan: FanParams,
    pub water_cp: f64,
    pub design_water_flow: f64,
    pub design_air_flow: f64,
    pub lwt_max: f64,
    pub min_approach: f64,
    pub optimal_approach: f64,
    pub speed_min: f64,
    /// Water-side temperature drop at nominal load; normalizes the load ratio.
    pub design_range: f64,
}

impl Default for TowerParams {
    fn default() -> Self {
        Self {
            yorkcalc: YorkCalcCoeffs::preset(),
            fan: FanParams::default(),
            water_cp: 4186.0,
            design_water_flow: 30.0,
            design_air_flow: 30.0,
            lwt_max: 29.4,
            min_approach: 2.8,
            optimal_approach: 3.5,
            speed_min: 0.1,
            design_range: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterInflow {
    /// Inlet (return) water temperature, K.
    pub t_in: f64,
    pub m_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ambient {
    /// Inlet-air wet-bulb temperature, K.
    pub t_wb: f64,
    pub air: MoistAirState,
}

/// Per-tower state carried by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerState {
    pub t_ret: f64,
    pub t_out: f64,
    /// Leaving-water setpoint, °C.
    pub setpoint: f64,
    pub m_w: f64,
    pub cell_powers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirSolution {
    pub air_out: MoistAirState,
    pub m_evap: f64,
    pub q_sen: f64,
    pub q_lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerStepResult {
    pub q_tot: f64,
    pub q_sen: f64,
    pub q_lat: f64,
    pub m_evap: f64,
    pub air_out: MoistAirState,
    pub p_fan: f64,
    pub t_out: f64,
    pub speed_ratio: f64,
    /// Water leaving the cell, `m_w - m_evap`.
    pub water_out: f64,
    /// Dry-air flow through the cell at the chosen speed.
    pub m_a: f64,
}

/// YorkCalc-form approach polynomial, clamped at zero. `t_wb` in °C.
pub fn approach_temperature(t_wb: f64, r_f: f64, q_ratio: f64, k: &YorkCalcCoeffs) -> Result<f64> {
    if r_f < 0.0 {
        return Err(domain("approach_temperature", format!("flow ratio {r_f} negative")));
    }
    let c = &k.c;
    let mut poly = c[0] + c[1] * t_wb + c[2] * t_wb * t_wb + c[3] * r_f + c[4] * r_f * r_f + c[5] * r_f * t_wb;
    if k.use_q_ratio {
        if q_ratio < 0.0 {
            return Err(domain("approach_temperature", format!("load ratio {q_ratio} negative")));
        }
        let q = q_ratio;
        poly += c[6] * q + c[7] * q * q + c[8] * q * t_wb + c[9] * q * r_f;
    }
    Ok((k.approach_ratio * poly).max(0.0))
}

/// `max(setpoint, T_wb + dT_app)`; all temperatures in K.
pub fn outlet_water_temperature(t_wb: f64, dt_app: f64, setpoint: f64) -> Result<f64> {
    if dt_app < 0.0 {
        return Err(domain("outlet_water_temperature", "negative approach"));
    }
    Ok(setpoint.max(t_wb + dt_app))
}

pub fn tower_heat_rejection(m_w: f64, t_in: f64, t_out: f64, cp_w: f64) -> Result<f64> {
    if m_w < 0.0 {
        return Err(domain("tower_heat_rejection", "negative water flow"));
    }
    Ok(m_w * cp_w * (t_in - t_out))
}

/// Outlet-air temperature cap used to detect an undersized air stream.
pub const AIR_T_CAP: f64 = 333.15;
const AIR_MAX_ITER: usize = 200;

/// Outlet air state for a given heat load.
///
/// Heat is first assigned to evaporation (`X_out = X_in + Q / (m_a h_fg)`);
/// when that would supersaturate the outlet air, the outlet is placed on the
/// saturation curve at the enthalpy required by the air-side energy balance
/// and the remainder is carried sensibly.
pub fn solve_outlet_air(q_tot: f64, air_in: &MoistAirState, m_a: f64, h_fg: f64) -> Result<AirSolution> {
    if m_a <= 0.0 {
        return Err(domain("solve_outlet_air", "air flow must be positive"));
    }
    if q_tot < 0.0 {
        return Err(domain("solve_outlet_air", "negative heat load"));
    }
    if q_tot == 0.0 {
        return Ok(AirSolution {
            air_out: *air_in,
            m_evap: 0.0,
            q_sen: 0.0,
            q_lat: 0.0,
        });
    }
    let k = psychro::AirConstants::default();
    let p = air_in.p;
    let h_target = air_in.enthalpy() + q_tot / m_a;

    let x_latent = air_in.x + q_tot / (m_a * h_fg);
    let t_latent = KELVIN + (h_target - x_latent * k.h_fg0) / (k.cp_dry_air + x_latent * k.cp_vapor);

    let (t_out, x_out) = if t_latent >= psychro::T_MIN
        && x_latent <= psychro::saturation_humidity_ratio(t_latent.min(psychro::T_MAX), p)?
    {
        (t_latent, x_latent)
    } else {
        let sat_gap = |t: f64| -> Result<f64> {
            Ok(psychro::moist_air_enthalpy(t, psychro::saturation_humidity_ratio(t, p)?) - h_target)
        };
        if sat_gap(AIR_T_CAP)? < 0.0 {
            return Err(Error::AirCapacity { q_w: q_tot });
        }
        let mut lo = t_latent.clamp(psychro::T_MIN, AIR_T_CAP);
        if sat_gap(lo)? > 0.0 {
            lo = psychro::T_MIN;
        }
        let mut hi = AIR_T_CAP;
        let tol = 1e-10 * q_tot / m_a;
        let mut converged = false;
        for _ in 0..AIR_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            let g = sat_gap(mid)?;
            if g > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if g.abs() <= tol || hi - lo < 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                op: "solve_outlet_air",
                iterations: AIR_MAX_ITER,
            });
        }
        let t = 0.5 * (lo + hi);
        (t, psychro::saturation_humidity_ratio(t, p)?)
    };

    let m_evap = m_a * (x_out - air_in.x);
    let q_lat = m_evap * h_fg;
    Ok(AirSolution {
        air_out: MoistAirState { t: t_out, x: x_out, p },
        m_evap,
        q_sen: q_tot - q_lat,
        q_lat,
    })
}

pub fn fan_power(v_dot: f64, dp: f64, eta: f64) -> Result<f64> {
    if eta <= 0.0 {
        return Err(domain("fan_power", "efficiency must be positive"));
    }
    if v_dot < 0.0 || dp < 0.0 {
        return Err(domain("fan_power", "negative flow or pressure rise"));
    }
    Ok(v_dot * dp / eta)
}

/// Fan power and volume flow at a speed ratio (cubic affinity law).
pub fn fan_power_curve(speed_ratio: f64, fp: &FanParams) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&speed_ratio) {
        return Err(domain("fan_power_curve", format!("speed ratio {speed_ratio} outside [0, 1]")));
    }
    Ok((fp.p_nom * speed_ratio.powi(3), fp.v_nom * speed_ratio))
}

/// Speed resolution of the fan-modulation bisection.
pub const SPEED_TOL: f64 = 1e-4;

/// Load ratio fed to the approach correlation: demanded heat rejection
/// (inlet down to setpoint) over the nominal `m_design cp dT_design`.
pub fn load_ratio(inflow: &WaterInflow, setpoint_k: f64, params: &TowerParams) -> f64 {
    (inflow.t_in - setpoint_k).max(0.0) * inflow.m_w / (params.design_water_flow * params.design_range)
}

/// Achievable leaving-water temperature at a fan speed ratio.
pub fn floor_at_speed(
    speed: f64,
    inflow: &WaterInflow,
    t_wb: f64,
    q_ratio: f64,
    params: &TowerParams,
) -> Result<f64> {
    let r_f = inflow.m_w / (params.design_air_flow * speed);
    Ok(t_wb + approach_temperature(t_wb - KELVIN, r_f, q_ratio, &params.yorkcalc)?)
}

/// One quasi-steady substep of a tower cell. `setpoint` is in °C.
///
/// The fan runs at the smallest speed in `[speed_min, 1]` that reaches the
/// setpoint (or full speed when the setpoint is below the full-speed floor).
/// When the inlet water is already at or below that target, the cell idles
/// at `speed_min` and passes the water through unchanged.
pub fn tower_cell_step(
    inflow: WaterInflow,
    setpoint: f64,
    ambient: &Ambient,
    params: &TowerParams,
    dt: f64,
) -> Result<TowerStepResult> {
    if dt <= 0.0 {
        return Err(domain("tower_cell_step", "dt must be positive"));
    }
    if inflow.m_w < 0.0 {
        return Err(domain("tower_cell_step", "negative water flow"));
    }
    let setpoint_k = setpoint + KELVIN;
    let t_wb = ambient.t_wb;
    let q_ratio = load_ratio(&inflow, setpoint_k, params);
    let floor = |s: f64| floor_at_speed(s, &inflow, t_wb, q_ratio, params);

    let target = setpoint_k.max(floor(1.0)?);
    let s_min = params.speed_min;

    let (speed, t_out) = if inflow.t_in <= target {
        (s_min, inflow.t_in)
    } else {
        let speed = if floor(s_min)? <= target {
            s_min
        } else {
            let (mut lo, mut hi) = (s_min, 1.0);
            while hi - lo > SPEED_TOL {
                let mid = 0.5 * (lo + hi);
                if floor(mid)? <= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        (speed, outlet_water_temperature(t_wb, floor(speed)? - t_wb, setpoint_k)?)
    };

    let q_tot = tower_heat_rejection(inflow.m_w, inflow.t_in, t_out, params.water_cp)?;
    let m_a = params.design_air_flow * speed;
    let air = solve_outlet_air(q_tot, &ambient.air, m_a, psychro::latent_heat(t_out))?;
    let (p_fan, _) = fan_power_curve(speed, &params.fan)?;
    Ok(TowerStepResult {
        q_tot,
        q_sen: air.q_sen,
        q_lat: air.q_lat,
        m_evap: air.m_evap,
        air_out: air.air_out,
        p_fan,
        t_out,
        speed_ratio: speed,
        water_out: inflow.m_w - air.m_evap,
        m_a,
    })
}

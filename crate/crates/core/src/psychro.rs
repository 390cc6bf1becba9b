//! Moist-air property functions used by the cooling-tower solve.
//!
//! Temperatures are in kelvin, pressures in pascal and humidity ratios in
//! kg of vapor per kg of dry air. Enthalpies use a 0 °C dry-air/liquid-water
//! datum.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const KELVIN: f64 = 273.15;
/// Molar-mass ratio of water vapor to dry air.
pub const EPSILON: f64 = 0.622;
pub const STANDARD_PRESSURE: f64 = 101_325.0;

/// Validity window of the saturation correlation, in kelvin.
pub const T_MIN: f64 = 173.15;
pub const T_MAX: f64 = 473.15;

/// Magnus coefficients over liquid water: `p = A exp(B t / (C + t))`, `t` in °C.
pub const MAGNUS_A: f64 = 611.2;
pub const MAGNUS_B: f64 = 17.62;
pub const MAGNUS_C: f64 = 243.12;

/// Specific heat of liquid water used by the wet-bulb balance.
pub const CP_LIQUID: f64 = 4186.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirConstants {
    pub cp_dry_air: f64,
    pub cp_vapor: f64,
    pub h_fg0: f64,
}

impl Default for AirConstants {
    fn default() -> Self {
        Self {
            cp_dry_air: 1006.0,
            cp_vapor: 1860.0,
            h_fg0: 2.501e6,
        }
    }
}

/// Dry-bulb temperature, humidity ratio and total pressure of an air stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoistAirState {
    pub t: f64,
    pub x: f64,
    pub p: f64,
}

impl MoistAirState {
    pub fn relative_humidity(&self) -> Result<f64> {
        let p_v = self.p * self.x / (EPSILON + self.x);
        Ok(p_v / saturation_pressure(self.t)?)
    }

    pub fn enthalpy(&self) -> f64 {
        moist_air_enthalpy(self.t, self.x)
    }
}

fn check_window(op: &'static str, t: f64) -> Result<()> {
    if !(T_MIN..=T_MAX).contains(&t) {
        return Err(domain(op, format!("temperature {t} K outside [{T_MIN}, {T_MAX}]")));
    }
    Ok(())
}

pub fn saturation_pressure(t: f64) -> Result<f64> {
    check_window("saturation_pressure", t)?;
    let tc = t - KELVIN;
    Ok(MAGNUS_A * (MAGNUS_B * tc / (MAGNUS_C + tc)).exp())
}

/// Humidity ratio from vapor partial pressure.
pub fn humidity_ratio_from_vapor_pressure(p_v: f64, p: f64) -> Result<f64> {
    if p_v >= p {
        return Err(domain(
            "humidity_ratio",
            format!("vapor pressure {p_v} Pa not below total pressure {p} Pa"),
        ));
    }
    Ok(EPSILON * p_v / (p - p_v))
}

pub fn humidity_ratio_from_rh(t: f64, phi: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(domain("humidity_ratio_from_rh", format!("phi {phi} outside [0, 1]")));
    }
    let p_v = phi * saturation_pressure(t)?;
    humidity_ratio_from_vapor_pressure(p_v, p)
}

pub fn saturation_humidity_ratio(t: f64, p: f64) -> Result<f64> {
    humidity_ratio_from_rh(t, 1.0, p)
}

/// `h = cp_da t + X (h_fg0 + cp_v t)` with `t` in °C.
pub fn moist_air_enthalpy(t: f64, x: f64) -> f64 {
    moist_air_enthalpy_with(&AirConstants::default(), t, x)
}

pub fn moist_air_enthalpy_with(k: &AirConstants, t: f64, x: f64) -> f64 {
    let tc = t - KELVIN;
    k.cp_dry_air * tc + x * (k.h_fg0 + k.cp_vapor * tc)
}

/// Latent heat of vaporization at water temperature `t`.
pub fn latent_heat(t: f64) -> f64 {
    let k = AirConstants::default();
    k.h_fg0 + (k.cp_vapor - CP_LIQUID) * (t - KELVIN)
}

/// Residual of the adiabatic-saturation balance at trial wet-bulb `t_wb`.
/// Increasing in `t_wb`; zero at the thermodynamic wet-bulb temperature.
fn adiabatic_residual(t: f64, x: f64, p: f64, t_wb: f64) -> Result<f64> {
    let x_s = saturation_humidity_ratio(t_wb, p)?;
    let h_in = moist_air_enthalpy(t, x);
    let h_s = moist_air_enthalpy(t_wb, x_s);
    Ok(h_s - h_in - (x_s - x) * CP_LIQUID * (t_wb - KELVIN))
}

const WETBULB_TOL: f64 = 1e-4;
const WETBULB_MAX_ITER: usize = 100;

pub fn wetbulb_temperature(t: f64, x: f64, p: f64) -> Result<f64> {
    check_window("wetbulb_temperature", t)?;
    if x < 0.0 {
        return Err(domain("wetbulb_temperature", format!("negative humidity ratio {x}")));
    }
    let x_sat = saturation_humidity_ratio(t, p)?;
    if x >= x_sat {
        return Ok(t);
    }
    let mut hi = t;
    let mut lo = (t - 100.0).max(T_MIN);
    if adiabatic_residual(t, x, p, lo)? > 0.0 {
        return Err(domain("wetbulb_temperature", "root not bracketed"));
    }
    for _ in 0..WETBULB_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if adiabatic_residual(t, x, p, mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < WETBULB_TOL {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence {
        op: "wetbulb_temperature",
        iterations: WETBULB_MAX_ITER,
    })
}

/// Humidity ratio of air at dry-bulb `t` whose wet-bulb is `t_wb`; the exact
/// inverse of [`wetbulb_temperature`]'s balance.
pub fn humidity_ratio_from_wetbulb(t: f64, t_wb: f64, p: f64) -> Result<f64> {
    if t_wb > t {
        return Err(domain(
            "humidity_ratio_from_wetbulb",
            format!("wet-bulb {t_wb} K above dry-bulb {t} K"),
        ));
    }
    let k = AirConstants::default();
    let x_s = saturation_humidity_ratio(t_wb, p)?;
    let tc = t - KELVIN;
    let twc = t_wb - KELVIN;
    let num = (k.h_fg0 + (k.cp_vapor - CP_LIQUID) * twc) * x_s - k.cp_dry_air * (tc - twc);
    let den = k.h_fg0 + k.cp_vapor * tc - CP_LIQUID * twc;
    Ok((num / den).max(0.0))
}

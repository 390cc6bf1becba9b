//! JSON-driven system description and its validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blade::CabinetParams;
use crate::error::{Error, Result};
use crate::hru::HruParams;
use crate::psychro::STANDARD_PRESSURE;
use crate::tower::TowerParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub sim_time_step: f64,
    pub step_size: f64,
    pub max_episode_duration: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            sim_time_step: 1.0,
            step_size: 60.0,
            max_episode_duration: 12_000.0,
        }
    }
}

impl TimingConfig {
    pub fn substeps_per_step(&self) -> usize {
        (self.step_size / self.sim_time_step).round() as usize
    }

    pub fn steps_per_episode(&self) -> usize {
        (self.max_episode_duration / self.step_size).round() as usize
    }
}

/// Outdoor air assumptions used to turn a wet-bulb trace into an inlet air
/// state for the towers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbientParams {
    /// Dry-bulb minus wet-bulb, K.
    pub wetbulb_depression: f64,
    pub pressure: f64,
}

impl Default for AmbientParams {
    fn default() -> Self {
        Self {
            wetbulb_depression: 5.0,
            pressure: STANDARD_PRESSURE,
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_deltas() -> Vec<f64> {
    vec![-0.5, -0.25, 0.0, 0.25, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTopology {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub num_towers: usize,
    pub cells_per_tower: usize,
    pub num_cabinets: usize,
    pub blade_groups_per_cabinet: usize,
    #[serde(default)]
    pub tower: TowerParams,
    #[serde(default)]
    pub cabinet: CabinetParams,
    #[serde(default)]
    pub hru: Option<HruParams>,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default = "default_deltas")]
    pub ct_action_deltas: Vec<f64>,
    #[serde(default)]
    pub ambient: AmbientParams,
}

impl SystemTopology {
    /// Default parameters with the given counts.
    pub fn with_counts(towers: usize, cells: usize, cabinets: usize, blade_groups: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_towers: towers,
            cells_per_tower: cells,
            num_cabinets: cabinets,
            blade_groups_per_cabinet: blade_groups,
            tower: TowerParams::default(),
            cabinet: CabinetParams::default(),
            hru: None,
            timing: TimingConfig::default(),
            ct_action_deltas: default_deltas(),
            ambient: AmbientParams::default(),
        }
    }

    /// Total facility water flow through all tower cells, kg/s.
    pub fn facility_flow(&self) -> f64 {
        (self.num_towers * self.cells_per_tower) as f64 * self.tower.design_water_flow
    }

    pub fn zero_delta_index(&self) -> Option<usize> {
        self.ct_action_deltas.iter().position(|d| *d == 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("topology serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn fail(&mut self, path: &str, message: String) {
        self.0.push(Violation {
            path: path.to_string(),
            message,
        });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.fail(path, format!("must be positive and finite, got {v}"));
        }
    }

    fn non_negative(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v >= 0.0) {
            self.fail(path, format!("must be non-negative and finite, got {v}"));
        }
    }

    fn within(&mut self, path: &str, v: f64, lo: f64, hi: f64, lo_open: bool) {
        let ok = v.is_finite() && v <= hi && if lo_open { v > lo } else { v >= lo };
        if !ok {
            let open = if lo_open { "(" } else { "[" };
            self.fail(path, format!("must lie in {open}{lo}, {hi}], got {v}"));
        }
    }

    fn count(&mut self, path: &str, v: usize) {
        if v < 1 {
            self.fail(path, "must be at least 1".to_string());
        }
    }

    fn multiple(&mut self, path: &str, v: f64, unit: f64) {
        let ratio = v / unit;
        if !(ratio.is_finite() && ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0)) {
            self.fail(path, format!("{v} is not an integer multiple of {unit}"));
        }
    }
}

/// Every invariant violation, sorted by field path.
pub fn validate_topology(t: &SystemTopology) -> Vec<Violation> {
    let mut c = Checker(Vec::new());
    if t.schema_version != SCHEMA_VERSION {
        c.fail("schema_version", format!("unsupported version {}", t.schema_version));
    }
    c.count("num_towers", t.num_towers);
    c.count("cells_per_tower", t.cells_per_tower);
    c.count("num_cabinets", t.num_cabinets);
    c.count("blade_groups_per_cabinet", t.blade_groups_per_cabinet);

    let d = &t.ct_action_deltas;
    if d.is_empty() {
        c.fail("ct_action_deltas", "must not be empty".into());
    } else {
        if !d.windows(2).all(|w| w[0] < w[1]) {
            c.fail("ct_action_deltas", "must be strictly increasing".into());
        }
        if !d.contains(&0.0) {
            c.fail("ct_action_deltas", "must contain 0".into());
        }
        if d.iter().any(|v| !v.is_finite()) {
            c.fail("ct_action_deltas", "must be finite".into());
        }
    }

    let tw = &t.tower;
    let yc = &tw.yorkcalc;
    if yc.c.iter().any(|v| !v.is_finite()) {
        c.fail("tower.yorkcalc.c", "coefficients must be finite".into());
    }
    c.positive("tower.yorkcalc.A_R", yc.approach_ratio);
    c.positive("tower.yorkcalc.R_F_nom", yc.nominal_flow_ratio);
    c.within("tower.fan.eta_fan", tw.fan.eta_fan, 0.0, 1.0, true);
    c.positive("tower.fan.dp_nom", tw.fan.dp_nom);
    c.positive("tower.fan.V_nom", tw.fan.v_nom);
    c.positive("tower.fan.P_nom", tw.fan.p_nom);
    c.positive("tower.fan.rho_a", tw.fan.rho_a);
    c.positive("tower.water_cp", tw.water_cp);
    c.positive("tower.design_water_flow", tw.design_water_flow);
    c.positive("tower.design_air_flow", tw.design_air_flow);
    if !tw.lwt_max.is_finite() {
        c.fail("tower.lwt_max", "must be finite".into());
    }
    c.positive("tower.min_approach", tw.min_approach);
    c.positive("tower.optimal_approach", tw.optimal_approach);
    if tw.optimal_approach < tw.min_approach {
        c.fail(
            "tower.optimal_approach",
            format!("{} is below min_approach {}", tw.optimal_approach, tw.min_approach),
        );
    }
    c.within("tower.speed_min", tw.speed_min, 0.0, 1.0, true);
    c.positive("tower.design_range", tw.design_range);

    let cb = &t.cabinet;
    c.positive("cabinet.thermal_capacitance", cb.thermal_capacitance);
    c.positive("cabinet.nominal_conductance", cb.nominal_conductance);
    c.within("cabinet.conductance_exponent", cb.conductance_exponent, 0.0, 1.5, true);
    c.positive("cabinet.nominal_flow", cb.nominal_flow);
    c.positive("cabinet.nominal_power", cb.nominal_power);
    for (name, v) in [("a0", cb.phi.a0), ("a1", cb.phi.a1), ("a2", cb.phi.a2)] {
        if !v.is_finite() {
            c.fail(&format!("cabinet.phi.{name}"), "must be finite".into());
        }
    }
    c.within("cabinet.hx_effectiveness", cb.hx_effectiveness, 0.0, 1.0, true);
    if !(cb.coolant_setpoint_range.min < cb.coolant_setpoint_range.max) {
        c.fail("cabinet.coolant_setpoint_range", "min must be below max".into());
    }
    c.non_negative("cabinet.flow_range.min", cb.flow_range.min);
    if !(cb.flow_range.min < cb.flow_range.max) {
        c.fail("cabinet.flow_range", "min must be below max".into());
    }
    c.positive("cabinet.coolant_cp", cb.coolant_cp);
    c.non_negative("cabinet.pump_nominal_power", cb.pump_nominal_power);

    if let Some(h) = &t.hru {
        c.within("hru.effectiveness", h.effectiveness, 0.0, 1.0, false);
        c.positive("hru.sink_inlet_T", h.sink_inlet_t);
        c.non_negative("hru.sink_m_flow", h.sink_m_flow);
        c.positive("hru.sink_cp", h.sink_cp);
    }

    let tm = &t.timing;
    c.positive("timing.sim_time_step", tm.sim_time_step);
    c.positive("timing.step_size", tm.step_size);
    c.positive("timing.max_episode_duration", tm.max_episode_duration);
    if tm.sim_time_step > 0.0 && tm.step_size > 0.0 {
        c.multiple("timing.step_size", tm.step_size, tm.sim_time_step);
    }
    if tm.step_size > 0.0 && tm.max_episode_duration > 0.0 {
        c.multiple("timing.max_episode_duration", tm.max_episode_duration, tm.step_size);
    }

    c.non_negative("ambient.wetbulb_depression", t.ambient.wetbulb_depression);
    c.positive("ambient.pressure", t.ambient.pressure);

    let mut v = c.0;
    v.sort();
    v
}

fn missing_field_name(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Parse and validate a topology document, filling defaults.
pub fn parse_topology(text: &str) -> Result<SystemTopology> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let topo: SystemTopology = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        if let Some(name) = missing_field_name(&msg) {
            let full = if path == "." { name.to_string() } else { format!("{path}.{name}") };
            Error::MissingField(full)
        } else if inner.is_syntax() || inner.is_eof() {
            Error::Parse(msg)
        } else {
            Error::Invalid { path, reason: msg }
        }
    })?;
    let violations = validate_topology(&topo);
    if let Some(first) = violations.first() {
        let reason = if violations.len() > 1 {
            format!("{} (and {} more)", first.message, violations.len() - 1)
        } else {
            first.message.clone()
        };
        return Err(Error::Invalid {
            path: first.path.clone(),
            reason,
        });
    }
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MEDIUM: &str = r#"{"num_towers": 2, "cells_per_tower": 2, "num_cabinets": 5, "blade_groups_per_cabinet": 3}"#;

    #[test]
    fn parses_counts_with_defaults() {
        let t = parse_topology(MEDIUM).unwrap();
        assert_eq!((t.num_towers, t.cells_per_tower, t.num_cabinets, t.blade_groups_per_cabinet), (2, 2, 5, 3));
        assert_eq!(t.tower.lwt_max, 29.4);
        assert_eq!(t.tower.min_approach, 2.8);
        assert_eq!(t.tower.optimal_approach, 3.5);
        assert_eq!(t.cabinet.coolant_setpoint_range.min, 18.0);
        assert_eq!(t.cabinet.coolant_setpoint_range.max, 30.0);
        assert_eq!(t.cabinet.phi.a2, 0.015);
        assert_eq!(t.timing.substeps_per_step(), 60);
        assert_eq!(t.timing.steps_per_episode(), 200);
        assert_eq!(t.ct_action_deltas, vec![-0.5, -0.25, 0.0, 0.25, 0.5]);
        assert!(t.hru.is_none());
    }

    #[test]
    fn missing_count_is_named() {
        let doc = r#"{"cells_per_tower": 2, "num_cabinets": 5, "blade_groups_per_cabinet": 3}"#;
        match parse_topology(doc) {
            Err(Error::MissingField(f)) => assert_eq!(f, "num_towers"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_missing_field_carries_path() {
        let doc = r#"{"num_towers": 1, "cells_per_tower": 1, "num_cabinets": 1, "blade_groups_per_cabinet": 1,
                      "cabinet": {"flow_range": {"min": 1.0}}}"#;
        match parse_topology(doc) {
            Err(Error::MissingField(f)) => assert_eq!(f, "cabinet.flow_range.max"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_blade_groups_is_range_error() {
        let doc = r#"{"num_towers": 2, "cells_per_tower": 2, "num_cabinets": 5, "blade_groups_per_cabinet": 0}"#;
        match parse_topology(doc) {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "blade_groups_per_cabinet"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_unknown() {
        assert!(matches!(parse_topology("{"), Err(Error::Parse(_))));
        let doc = r#"{"num_towers": 1, "cells_per_tower": 1, "num_cabinets": 1, "blade_groups_per_cabinet": 1, "bogus": 3}"#;
        assert!(matches!(parse_topology(doc), Err(Error::Invalid { .. })));
    }

    #[test]
    fn validation_cases() {
        let t = SystemTopology::with_counts(2, 2, 5, 3);
        assert!(validate_topology(&t).is_empty());

        let mut no_zero = t.clone();
        no_zero.ct_action_deltas = vec![-0.5, 0.5];
        assert_eq!(validate_topology(&no_zero).len(), 1);

        let mut approach = t.clone();
        approach.tower.optimal_approach = 2.0;
        let v = validate_topology(&approach);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "tower.optimal_approach");
    }

    #[test]
    fn violations_are_sorted_by_path() {
        let mut t = SystemTopology::with_counts(0, 1, 0, 1);
        t.timing.step_size = 2.5;
        t.cabinet.hx_effectiveness = 0.0;
        let v = validate_topology(&t);
        let paths: Vec<_> = v.iter().map(|x| x.path.as_str()).collect();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn timing_multiples() {
        let mut t = SystemTopology::with_counts(1, 1, 1, 1);
        t.timing.max_episode_duration = 12_030.0;
        let v = validate_topology(&t);
        assert_eq!(v[0].path, "timing.max_episode_duration");
    }
}

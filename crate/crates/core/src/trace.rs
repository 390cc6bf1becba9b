//! Exogenous driving data: outdoor wet-bulb temperature and per-blade-group
//! heat loads, stored as CSV and interpolated linearly in time.
//!
//! CSV columns: `timestamp_s,t_owb_k,load_c{i}_b{j}_w,...` with zero-based
//! cabinet `i` and blade group `j` in row-major (cabinet, blade group) order.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psychro::KELVIN;
use crate::topology::SystemTopology;

pub const T_OWB_MIN: f64 = 243.15;
pub const T_OWB_MAX: f64 = 323.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousTrace {
    pub cabinets: usize,
    pub blade_groups: usize,
    pub timestamps: Vec<f64>,
    pub t_owb: Vec<f64>,
    /// One row per timestamp, `cabinets * blade_groups` loads in W.
    pub loads: Vec<Vec<f64>>,
}

/// Interpolated exogenous values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSample {
    pub t_owb: f64,
    pub loads: Vec<f64>,
}

pub fn header(cabinets: usize, blade_groups: usize) -> Vec<String> {
    let mut h = vec!["timestamp_s".to_string(), "t_owb_k".to_string()];
    for i in 0..cabinets {
        for j in 0..blade_groups {
            h.push(format!("load_c{i}_b{j}_w"));
        }
    }
    h
}

impl ExogenousTrace {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.timestamps.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.timestamps.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.cabinets * self.blade_groups;
        if self.t_owb.len() != self.timestamps.len() || self.loads.len() != self.timestamps.len() {
            return Err(Error::Trace("column lengths differ".into()));
        }
        for (r, w) in self.timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Trace(format!("timestamps not strictly increasing at row {}", r + 1)));
            }
        }
        for (r, (&t, row)) in self.t_owb.iter().zip(&self.loads).enumerate() {
            if !(T_OWB_MIN..=T_OWB_MAX).contains(&t) {
                return Err(Error::Trace(format!("row {r}: wet-bulb {t} K outside [{T_OWB_MIN}, {T_OWB_MAX}]")));
            }
            if row.len() != width {
                return Err(Error::Trace(format!("row {r}: {} loads, expected {width}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Trace(format!("row {r}: invalid load {v}")));
            }
        }
        Ok(())
    }

    /// Linear interpolation, holding the end values outside the covered span.
    pub fn sample(&self, t: f64) -> ExogenousSample {
        let ts = &self.timestamps;
        let n = ts.len();
        assert!(n > 0, "sampling an empty trace");
        if t <= ts[0] || n == 1 {
            return ExogenousSample {
                t_owb: self.t_owb[0],
                loads: self.loads[0].clone(),
            };
        }
        if t >= ts[n - 1] {
            return ExogenousSample {
                t_owb: self.t_owb[n - 1],
                loads: self.loads[n - 1].clone(),
            };
        }
        let hi = ts.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let w = (t - ts[lo]) / (ts[hi] - ts[lo]);
        let lerp = |a: f64, b: f64| a + w * (b - a);
        ExogenousSample {
            t_owb: lerp(self.t_owb[lo], self.t_owb[hi]),
            loads: self.loads[lo].iter().zip(&self.loads[hi]).map(|(&a, &b)| lerp(a, b)).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header(self.cabinets, self.blade_groups)).expect("in-memory write");
        for ((t, wb), row) in self.timestamps.iter().zip(&self.t_owb).zip(&self.loads) {
            let mut rec = vec![t.to_string(), wb.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    /// Rows whose timestamps fall in `[from, to]`, re-based to start at zero.
    pub fn window(&self, from: f64, to: f64) -> ExogenousTrace {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.timestamps[i] >= from && self.timestamps[i] <= to)
            .collect();
        let base = idx.first().map(|&i| self.timestamps[i]).unwrap_or(0.0);
        ExogenousTrace {
            cabinets: self.cabinets,
            blade_groups: self.blade_groups,
            timestamps: idx.iter().map(|&i| self.timestamps[i] - base).collect(),
            t_owb: idx.iter().map(|&i| self.t_owb[i]).collect(),
            loads: idx.iter().map(|&i| self.loads[i].clone()).collect(),
        }
    }
}

fn parse_f64(field: &str, row: usize, col: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Trace(format!("row {row}, column {col}: not a number: {field:?}")))
}

pub fn load_trace(text: &str, topology: &SystemTopology) -> Result<ExogenousTrace> {
    let cabinets = topology.num_cabinets;
    let blade_groups = topology.blade_groups_per_cabinet;
    let width = cabinets * blade_groups;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let head = rdr.headers().map_err(|e| Error::Trace(e.to_string()))?.clone();
    if head.len() != width + 2 {
        return Err(Error::Trace(format!(
            "expected {} load columns for {cabinets} cabinets x {blade_groups} blade groups, found {}",
            width,
            head.len().saturating_sub(2)
        )));
    }
    let mut trace = ExogenousTrace {
        cabinets,
        blade_groups,
        timestamps: Vec::new(),
        t_owb: Vec::new(),
        loads: Vec::new(),
    };
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Trace(e.to_string()))?;
        if rec.len() != width + 2 {
            return Err(Error::Trace(format!("row {r}: {} columns, expected {}", rec.len(), width + 2)));
        }
        trace.timestamps.push(parse_f64(&rec[0], r, 0)?);
        trace.t_owb.push(parse_f64(&rec[1], r, 1)?);
        let row = (2..rec.len()).map(|c| parse_f64(&rec[c], r, c)).collect::<Result<Vec<_>>>()?;
        trace.loads.push(row);
    }
    trace.validate()?;
    Ok(trace)
}

/// Parameters of the quasi-periodic synthetic workload generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceSpec {
    pub duration_s: f64,
    pub interval_s: f64,
    /// Mean blade-group load, W.
    pub mean_load: f64,
    /// Slow and fast load swing amplitudes, W.
    pub slow_amplitude: f64,
    pub fast_amplitude: f64,
    pub slow_period_s: f64,
    pub fast_period_s: f64,
    /// Relative white-noise amplitude on the load.
    pub noise: f64,
    /// Mean wet-bulb, °C, with a diurnal swing.
    pub mean_wetbulb_c: f64,
    pub wetbulb_swing: f64,
}

impl Default for SyntheticTraceSpec {
    fn default() -> Self {
        Self {
            duration_s: 2.0 * 86_400.0,
            interval_s: 60.0,
            mean_load: 28_000.0,
            slow_amplitude: 11_200.0,
            fast_amplitude: 7_000.0,
            slow_period_s: 4.0 * 3600.0,
            fast_period_s: 1500.0,
            noise: 0.03,
            mean_wetbulb_c: 17.0,
            wetbulb_swing: 4.0,
        }
    }
}

/// Deterministic quasi-periodic trace: every blade group gets its own phase
/// and scale, so loads differ across groups and over time.
pub fn synthetic_trace(cabinets: usize, blade_groups: usize, spec: &SyntheticTraceSpec, seed: u64) -> ExogenousTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (spec.duration_s / spec.interval_s).floor() as usize + 1;
    let width = cabinets * blade_groups;
    let groups: Vec<(f64, f64, f64)> = (0..width)
        .map(|_| (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU, 0.7 + 0.6 * rng.random::<f64>()))
        .collect();
    let wb_phase = rng.random::<f64>() * TAU;
    let mut trace = ExogenousTrace {
        cabinets,
        blade_groups,
        timestamps: Vec::with_capacity(n),
        t_owb: Vec::with_capacity(n),
        loads: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = k as f64 * spec.interval_s;
        trace.timestamps.push(t);
        let wb = spec.mean_wetbulb_c
            + spec.wetbulb_swing * (TAU * t / 86_400.0 + wb_phase).sin()
            + 0.5 * (TAU * t / 5400.0).sin();
        trace.t_owb.push(wb + KELVIN);
        let row = groups
            .iter()
            .map(|&(slow, fast, scale)| {
                let base = spec.mean_load
                    + spec.slow_amplitude * (TAU * t / spec.slow_period_s + slow).sin()
                    + spec.fast_amplitude * (TAU * t / spec.fast_period_s + fast).sin();
                let jitter = 1.0 + spec.noise * (2.0 * rng.random::<f64>() - 1.0);
                (scale * base * jitter).max(0.0)
            })
            .collect();
        trace.loads.push(row);
    }
    trace
}

/// Square-wave loads alternating between `low` and `high` every `half_period`
/// rows, constant wet-bulb.
pub fn square_wave_trace(
    cabinets: usize,
    blade_groups: usize,
    rows: usize,
    interval_s: f64,
    low: f64,
    high: f64,
    half_period: usize,
    t_owb: f64,
) -> ExogenousTrace {
    let width = cabinets * blade_groups;
    ExogenousTrace {
        cabinets,
        blade_groups,
        timestamps: (0..rows).map(|k| k as f64 * interval_s).collect(),
        t_owb: vec![t_owb; rows],
        loads: (0..rows)
            .map(|k| vec![if (k / half_period.max(1)) % 2 == 0 { low } else { high }; width])
            .collect(),
    }
}

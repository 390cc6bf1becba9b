//! Evaluation metrics over run logs and the report documents built from them.

use serde::{Deserialize, Serialize};

use crate::env::StepOutcome;
use crate::error::{domain, Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const REPORT_COLUMNS: [&str; 7] = [
    "control_type",
    "control_details",
    "d_blade_avg",
    "ct_avg_power_kw",
    "it_avg_cooling_power_kw",
    "avg_episode_reward_per_cabinet",
    "avg_episode_reward_per_tower",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// Upper blade temperature bound, °C.
    pub upper_t: f64,
    pub lower_t: f64,
    /// Constant carbon intensity, kg CO2/kWh.
    pub carbon_intensity: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            upper_t: 40.0,
            lower_t: 20.0,
            carbon_intensity: 0.4,
        }
    }
}

impl MetricConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lower_t < self.upper_t) {
            return Err(domain("metric config", "lower bound must be below upper bound"));
        }
        if !(self.carbon_intensity >= 0.0) {
            return Err(domain("metric config", "negative carbon intensity"));
        }
        Ok(())
    }
}

/// Percentage of samples strictly inside `(lower_t, upper_t)`. Rows are time
/// samples, columns blade groups.
pub fn d_blade(temps: &[Vec<f64>], cfg: &MetricConfig) -> Result<f64> {
    cfg.check()?;
    let total: usize = temps.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(domain("d_blade", "empty temperature series"));
    }
    let inside = temps
        .iter()
        .flatten()
        .filter(|&&t| cfg.upper_t > t && t > cfg.lower_t)
        .count();
    Ok(100.0 * inside as f64 / total as f64)
}

pub enum Intensity<'a> {
    Constant(f64),
    /// One value per power sample.
    Series(&'a [f64]),
}

/// Trapezoidal emissions integral in tonnes CO2 for a power series in W
/// sampled every `dt` seconds.
pub fn carbon_footprint(power_w: &[f64], intensity: Intensity<'_>, dt: f64) -> Result<f64> {
    if power_w.iter().any(|p| !(*p >= 0.0)) {
        return Err(domain("carbon_footprint", "negative or non-finite power"));
    }
    if !(dt > 0.0) {
        return Err(domain("carbon_footprint", "dt must be positive"));
    }
    let rate: Vec<f64> = match intensity {
        Intensity::Constant(c) => power_w.iter().map(|p| p * c).collect(),
        Intensity::Series(s) => {
            if s.len() != power_w.len() {
                return Err(Error::Shape {
                    op: "carbon_footprint",
                    expected: power_w.len(),
                    got: s.len(),
                });
            }
            power_w.iter().zip(s).map(|(p, c)| p * c).collect()
        }
    };
    // W * (kg/kWh) * s -> kg via / 3.6e6, then tonnes.
    let kg: f64 = rate.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum::<f64>() / 3.6e6;
    Ok(kg / 1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub steps: usize,
    pub d_blade_avg: f64,
    pub ct_avg_power_kw: f64,
    pub it_avg_cooling_power_kw: f64,
    pub pump_avg_power_kw: f64,
    pub avg_episode_reward_per_cabinet: f64,
    pub avg_episode_reward_per_tower: f64,
    pub avg_shifted_episode_reward_per_cabinet: f64,
    pub heat_recovered_avg_kw: f64,
    pub evaporation_avg_kg_s: f64,
    pub carbon_tower_t: f64,
    pub carbon_total_cooling_t: f64,
}

/// Averages over the post-reset steps of each episode log (the reset outcome
/// that opens each log carries no action and is skipped).
pub fn summarize(episodes: &[Vec<StepOutcome>], cfg: &MetricConfig) -> Result<RunSummary> {
    let steps: Vec<&StepOutcome> = episodes.iter().flat_map(|e| e.iter().filter(|o| o.info.step > 0)).collect();
    if steps.is_empty() {
        return Err(domain("summarize", "empty run log"));
    }
    let n = steps.len() as f64;
    let mean = |f: &dyn Fn(&StepOutcome) -> f64| steps.iter().map(|o| f(o)).sum::<f64>() / n;
    let temps: Vec<Vec<f64>> = steps.iter().map(|o| o.info.blade_temps_c.concat()).collect();

    let per_episode = |f: &dyn Fn(&StepOutcome) -> f64| {
        let totals: Vec<f64> = episodes
            .iter()
            .filter(|e| e.iter().any(|o| o.info.step > 0))
            .map(|e| e.iter().filter(|o| o.info.step > 0).map(f).sum::<f64>())
            .collect();
        totals.iter().sum::<f64>() / totals.len() as f64
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut carbon_tower = 0.0;
    let mut carbon_total = 0.0;
    for e in episodes {
        let live: Vec<&StepOutcome> = e.iter().filter(|o| o.info.step > 0).collect();
        if live.len() < 2 {
            continue;
        }
        let dt = live[1].info.elapsed_s - live[0].info.elapsed_s;
        let tower: Vec<f64> = live.iter().map(|o| o.info.cell_power_w.iter().flatten().sum()).collect();
        let total: Vec<f64> = live
            .iter()
            .zip(&tower)
            .map(|(o, t)| t + o.info.pump_power_w.iter().sum::<f64>())
            .collect();
        carbon_tower += carbon_footprint(&tower, Intensity::Constant(cfg.carbon_intensity), dt)?;
        carbon_total += carbon_footprint(&total, Intensity::Constant(cfg.carbon_intensity), dt)?;
    }

    Ok(RunSummary {
        episodes: episodes.len(),
        steps: steps.len(),
        d_blade_avg: d_blade(&temps, cfg)?,
        ct_avg_power_kw: mean(&|o| o.info.cell_power_w.iter().flatten().sum::<f64>() / 1000.0),
        it_avg_cooling_power_kw: mean(&|o| o.info.cabinet_heat_w.iter().sum::<f64>() / 1000.0),
        pump_avg_power_kw: mean(&|o| o.info.pump_power_w.iter().sum::<f64>() / 1000.0),
        avg_episode_reward_per_cabinet: per_episode(&|o| avg(&o.blade_rewards)),
        avg_episode_reward_per_tower: per_episode(&|o| avg(&o.ct_rewards)),
        avg_shifted_episode_reward_per_cabinet: per_episode(&|o| avg(&o.info.shifted_blade_rewards)),
        heat_recovered_avg_kw: mean(&|o| o.info.heat_recovered_w / 1000.0),
        evaporation_avg_kg_s: mean(&|o| o.info.evaporation.iter().sum::<f64>()),
        carbon_tower_t: carbon_tower,
        carbon_total_cooling_t: carbon_total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub control_type: String,
    pub control_details: String,
    pub d_blade_avg: f64,
    pub ct_avg_power_kw: f64,
    pub it_avg_cooling_power_kw: f64,
    pub avg_episode_reward_per_cabinet: f64,
    pub avg_episode_reward_per_tower: f64,
}

impl ReportRow {
    pub fn from_summary(control_type: &str, control_details: &str, s: &RunSummary) -> Self {
        Self {
            control_type: control_type.into(),
            control_details: control_details.into(),
            d_blade_avg: s.d_blade_avg,
            ct_avg_power_kw: s.ct_avg_power_kw,
            it_avg_cooling_power_kw: s.it_avg_cooling_power_kw,
            avg_episode_reward_per_cabinet: s.avg_episode_reward_per_cabinet,
            avg_episode_reward_per_tower: s.avg_episode_reward_per_tower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub topology_sha256: String,
    pub seed: u64,
    pub software_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub fingerprint: Fingerprint,
    pub metric_config: MetricConfig,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<RunSummary>,
}

impl MetricsReport {
    pub fn new(topology_sha256: String, seed: u64, metric_config: MetricConfig) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            fingerprint: Fingerprint {
                topology_sha256,
                seed,
                software_version: env!("CARGO_PKG_VERSION").into(),
            },
            metric_config,
            rows: Vec::new(),
            summaries: Vec::new(),
        }
    }

    pub fn push(&mut self, control_type: &str, control_details: &str, s: RunSummary) {
        self.rows.push(ReportRow::from_summary(control_type, control_details, &s));
        self.summaries.push(s);
    }
}

/// JSON and CSV documents for a report.
pub fn emit_report(r: &MetricsReport) -> (String, String) {
    let json = serde_json::to_string_pretty(r).expect("report serializes") + "\n";
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    for row in &r.rows {
        w.serialize(row).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8");
    (json, csv)
}

pub fn read_report_json(text: &str) -> Result<MetricsReport> {
    let r: MetricsReport = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if r.schema_version != REPORT_SCHEMA_VERSION {
        return Err(domain("read_report_json", format!("unsupported schema {}", r.schema_version)));
    }
    Ok(r)
}

pub fn read_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if head.iter().ne(REPORT_COLUMNS) {
        return Err(Error::Parse(format!("unexpected report columns {head:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(|e| Error::Parse(e.to_string()))).collect()
}

/// Ranks with ties sharing their average rank (1-based).
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(domain("spearman", "need two equal-length series of at least 2 samples"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

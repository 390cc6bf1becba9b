//! Heat-recovery unit on the tower-bound facility stream.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::psychro::KELVIN;

/// Effectiveness/minimum-capacitance exchanger between the hot facility
/// stream and a reuse sink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HruParams {
    pub effectiveness: f64,
    /// Sink inlet temperature, K.
    #[serde(rename = "sink_inlet_T")]
    pub sink_inlet_t: f64,
    pub sink_m_flow: f64,
    pub sink_cp: f64,
}

impl Default for HruParams {
    fn default() -> Self {
        Self {
            effectiveness: 0.4,
            sink_inlet_t: 20.0 + KELVIN,
            sink_m_flow: 30.0,
            sink_cp: 4186.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HruOutcome {
    pub q_recovered: f64,
    pub downstream_t: f64,
}

pub fn hru_extract(stream_t: f64, stream_m: f64, stream_cp: f64, p: &HruParams) -> Result<HruOutcome> {
    if stream_m <= 0.0 || stream_cp <= 0.0 {
        return Err(domain("hru_extract", "stream flow and heat capacity must be positive"));
    }
    let c_stream = stream_m * stream_cp;
    let c_min = c_stream.min(p.sink_m_flow * p.sink_cp);
    let q_recovered = p.effectiveness * c_min * (stream_t - p.sink_inlet_t).max(0.0);
    Ok(HruOutcome {
        q_recovered,
        downstream_t: stream_t - q_recovered / c_stream,
    })
}

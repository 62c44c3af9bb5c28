//! Relative risks from steady-state gains.
//!
//! Holding every input at its level except input `j`, which rises by `Δx`,
//! multiplies the expected count by `exp(g_j·Δx)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::PtfmFit;

/// Default increment for pollutant concentrations (µg/m³).
pub const POLLUTANT_DELTA_X: f64 = 50.0;
/// Default increment for temperature (°C) and relative humidity (%).
pub const WEATHER_DELTA_X: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRisk {
    pub input: String,
    pub delta_x: f64,
    pub unit: String,
    pub gain: f64,
    pub g_delta_x: f64,
    pub rr: f64,
    /// `None` when the gain's standard error is unavailable.
    pub ci: Option<(f64, f64)>,
    pub confidence_level: f64,
}

/// `exp(gain · delta_x)`.
pub fn relative_risk(gain: f64, delta_x: f64) -> f64 {
    (gain * delta_x).exp()
}

/// `exp((g ± z·se)·Δx)`, ordered low to high.
pub fn rr_confidence_interval(gain: f64, gain_se: f64, delta_x: f64, level: f64) -> Result<(f64, f64)> {
    if !(gain_se >= 0.0) {
        return Err(Error::Domain(format!("standard error must be >= 0, got {gain_se}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0,1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let a = ((gain - z * gain_se) * delta_x).exp();
    let b = ((gain + z * gain_se) * delta_x).exp();
    Ok((a.min(b), a.max(b)))
}

/// Relative risk of `input` for an increase `delta_x`, with a delta-method
/// interval when the fit carries a gain standard error.
pub fn rr_from_fit(fit: &PtfmFit, input: &str, delta_x: f64, level: f64) -> Result<RelativeRisk> {
    let term = fit.term(input).ok_or_else(|| Error::UnknownSeries(input.to_string()))?;
    let gain = term.lag.steady_state_gain()?;
    let ci = match term.gain_se {
        Some(se) => Some(rr_confidence_interval(gain, se, delta_x, level)?),
        None => None,
    };
    Ok(RelativeRisk {
        input: input.to_string(),
        delta_x,
        unit: String::new(),
        gain,
        g_delta_x: gain * delta_x,
        rr: relative_risk(gain, delta_x),
        ci,
        confidence_level: level,
    })
}

/// Conventional increment for a named input: 10 for temperature and
/// humidity, 50 otherwise.
pub fn default_delta_x(name: &str) -> f64 {
    let n = name.to_ascii_lowercase();
    if n.contains("temp") || n.contains("humid") {
        WEATHER_DELTA_X
    } else {
        POLLUTANT_DELTA_X
    }
}

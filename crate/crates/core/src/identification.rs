//! Box-Jenkins structure identification for each input series:
//!
//! 1. fit every ARMA candidate of a grid to the input and keep the one with
//!    the lowest AIC (BIC breaks ties);
//! 2. prewhiten input and output with that model and read the delay `b` off
//!    the largest significant cross-correlation;
//! 3. search transfer orders `(r, s)` upwards, rejecting candidates with a
//!    coefficient below the t threshold or with residuals still correlated
//!    with the prewhitened input.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::arma::{fit_arma_with, prewhiten, ArmaFilter, ArmaFit, ArmaOptions, ArmaSpec};
use crate::error::{Error, Result};
use crate::model::{fit_ptfm, InputTerm, NoiseOrders, PtfmFit, PtfmSpec, MAX_TRANSFER_ORDER};
use crate::series::{Dataset, TimeSeries};

/// Ordered list of ARMA candidates for prewhitening.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub specs: Vec<ArmaSpec>,
}

impl Default for CandidateGrid {
    /// ARMA(1,1), (1,2), (2,1), (2,2), (2,3), (3,2), (3,3).
    fn default() -> Self {
        let specs = [(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 2), (3, 3)]
            .iter()
            .map(|&(p, q)| ArmaSpec { p, q })
            .collect();
        Self { specs }
    }
}

impl CandidateGrid {
    pub fn new(specs: Vec<ArmaSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Domain("candidate grid is empty".into()));
        }
        Ok(Self { specs })
    }
}

/// One row of the ARMA selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub spec: ArmaSpec,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

/// Fits every grid member on a common conditioning sample and returns the
/// fit with the lowest AIC, ties broken by BIC and then by the smaller model.
pub fn select_prewhitening_model(series: &TimeSeries, grid: &CandidateGrid) -> Result<(ArmaFit, Vec<SelectionRow>)> {
    let max_p = grid.specs.iter().map(|s| s.p).max().unwrap_or(0);
    let opts = ArmaOptions { condition: Some(max_p), ..ArmaOptions::default() };
    let fits: Vec<Result<ArmaFit>> = grid.specs.par_iter().map(|&s| fit_arma_with(series, s, &opts)).collect();
    let table: Vec<SelectionRow> = grid
        .specs
        .iter()
        .zip(&fits)
        .map(|(&spec, f)| match f {
            Ok(f) => SelectionRow { spec, aic: Some(f.aic), bic: Some(f.bic), error: None },
            Err(e) => SelectionRow { spec, aic: None, bic: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = fits
        .into_iter()
        .flatten()
        .min_by(|a, b| {
            a.aic
                .total_cmp(&b.aic)
                .then(a.bic.total_cmp(&b.bic))
                .then((a.spec.p + a.spec.q).cmp(&(b.spec.p + b.spec.q)))
                .then(a.spec.p.cmp(&b.spec.p))
        });
    match best {
        Some(fit) => Ok((fit, table)),
        None => Err(Error::NoCandidate(format!(
            "no ARMA candidate could be fitted to `{}`: {}",
            series.name(),
            table
                .iter()
                .map(|r| format!("{}: {}", r.spec, r.error.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}

/// `ccf(k) = Σ (x_{t−k} − x̄)(y_t − ȳ) / (n s_x s_y)` for `k = 0..=max_lag`,
/// over the positions where both series are available.
pub fn cross_correlation(x: &TimeSeries, y: &TimeSeries, max_lag: usize) -> Result<Vec<(usize, f64)>> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let start = x.warmup().max(y.warmup());
    Ok(ccf_slices(&x.values()[start..], &y.values()[start..], max_lag)?
        .into_iter()
        .enumerate()
        .collect())
}

pub(crate) fn ccf_slices(x: &[f64], y: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if 4 * max_lag >= n {
        return Err(Error::Precondition(format!("max_lag {max_lag} must be below n/4 (n = {n})")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / nf).sqrt();
    let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / nf).sqrt();
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::Domain("cross-correlation of a zero-variance series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| (k..n).map(|t| (x[t - k] - mx) * (y[t] - my)).sum::<f64>() / (nf * sx * sy))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDetection {
    Delay(usize),
    /// No lag exceeded the significance band.
    NoSignal,
}

/// Significance band `band/√n` (the usual choice is `band = 2`).
pub fn ccf_threshold(n: usize, band: f64) -> f64 {
    band / (n as f64).sqrt()
}

/// Band multiplier holding the chance of any false spike among `tests`
/// independent null correlations at `alpha` (Bonferroni).
pub fn family_band(alpha: f64, tests: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || tests == 0 {
        return Err(Error::Domain(format!("family_band needs alpha in (0,1) and tests >= 1, got {alpha}, {tests}")));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * tests as f64)))
}

/// Smallest lag whose |ccf| exceeds `2/√n` and equals the maximum |ccf| over
/// the significant lags (ties within 1e-12 resolve to the smaller lag).
pub fn detect_delay(ccf: &[(usize, f64)], n: usize) -> Result<DelayDetection> {
    detect_delay_with_band(ccf, n, 2.0)
}

pub fn detect_delay_with_band(ccf: &[(usize, f64)], n: usize, band: f64) -> Result<DelayDetection> {
    if ccf.is_empty() {
        return Err(Error::Precondition("empty cross-correlation".into()));
    }
    let thr = ccf_threshold(n, band);
    let peak = ccf
        .iter()
        .filter(|(_, v)| v.abs() > thr)
        .map(|(_, v)| v.abs())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let Some(peak) = peak else {
        return Ok(DelayDetection::NoSignal);
    };
    let lag = ccf
        .iter()
        .filter(|(_, v)| v.abs() > thr && (v.abs() - peak).abs() <= 1e-12)
        .map(|(k, _)| *k)
        .min()
        .expect("peak exists");
    Ok(DelayDetection::Delay(lag))
}

/// Bounds and thresholds of the transfer-order search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearch {
    pub max_r: usize,
    pub max_s: usize,
    /// Coefficients with |t| below this are considered removable.
    pub t_threshold: f64,
    /// Lags `0..=residual_lags` enter the residual cross-correlation check.
    pub residual_lags: usize,
    /// The residual check fails when the portmanteau p-value is below this.
    pub residual_alpha: f64,
}

impl Default for OrderSearch {
    fn default() -> Self {
        Self { max_r: 2, max_s: 2, t_threshold: 2.0, residual_lags: 12, residual_alpha: 0.01 }
    }
}

impl OrderSearch {
    pub fn validate(&self) -> Result<()> {
        if self.max_r > MAX_TRANSFER_ORDER || self.max_s > MAX_TRANSFER_ORDER {
            return Err(Error::Precondition(format!(
                "order bounds ({}, {}) exceed {MAX_TRANSFER_ORDER}",
                self.max_r, self.max_s
            )));
        }
        Ok(())
    }

    /// `(r, s)` pairs by increasing `r + s`, then increasing `r`.
    pub fn candidates(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for total in 0..=self.max_r + self.max_s {
            for r in 0..=total.min(self.max_r) {
                let s = total - r;
                if s <= self.max_s {
                    v.push((r, s));
                }
            }
        }
        v
    }
}

/// Diagnostics of one `(r, s)` candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub r: usize,
    pub s: usize,
    pub min_abs_t: Option<f64>,
    pub residual_statistic: Option<f64>,
    pub residual_p_value: Option<f64>,
    pub t_ok: bool,
    pub residual_ok: bool,
    pub error: Option<String>,
}

impl CandidateOutcome {
    pub fn passed(&self) -> bool {
        self.t_ok && self.residual_ok && self.error.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct OrderChoice {
    pub r: usize,
    pub s: usize,
    pub fit: PtfmFit,
    pub trail: Vec<CandidateOutcome>,
}

/// Portmanteau check of residual/prewhitened-input cross-correlations:
/// `S = m Σ_{k=0}^{K} ccf_k²` against chi-square with `K + 1 − (r + s + 1)`
/// degrees of freedom. Returns `(S, p-value)`.
pub fn residual_cross_check(
    residuals: &TimeSeries,
    prewhitened_input: &TimeSeries,
    lags: usize,
    fitted: usize,
) -> Result<(f64, f64)> {
    let ccf = cross_correlation(prewhitened_input, residuals, lags)?;
    let m = residuals.len() - residuals.warmup().max(prewhitened_input.warmup());
    let stat = m as f64 * ccf.iter().map(|(_, v)| v * v).sum::<f64>();
    let df = (lags + 1).saturating_sub(fitted).max(1);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((stat, 1.0 - chi.cdf(stat)))
}

fn evaluate_candidate<F>(
    data: &Dataset,
    term: &InputTerm,
    search: &OrderSearch,
    prewhitened_input: &TimeSeries,
    fit: &F,
) -> (CandidateOutcome, Option<PtfmFit>)
where
    F: Fn(&InputTerm) -> Result<PtfmFit>,
{
    let mut out = CandidateOutcome {
        r: term.r,
        s: term.s,
        min_abs_t: None,
        residual_statistic: None,
        residual_p_value: None,
        t_ok: false,
        residual_ok: false,
        error: None,
    };
    let f = match fit(term) {
        Ok(f) => f,
        Err(e) => {
            out.error = Some(e.to_string());
            return (out, None);
        }
    };
    let Some(ft) = f.term(&term.name) else {
        out.error = Some(format!("fit callback dropped `{}`", term.name));
        return (out, None);
    };
    let ts: Vec<Option<f64>> = ft.coefficients().map(|c| c.t_value).collect();
    if ts.iter().all(Option::is_some) {
        let min = ts.iter().flatten().fold(f64::INFINITY, |m, t| m.min(t.abs()));
        out.min_abs_t = Some(min);
        out.t_ok = min >= search.t_threshold;
    }
    match f
        .pearson_residuals(data)
        .and_then(|res| residual_cross_check(&res, prewhitened_input, search.residual_lags, term.n_params()))
    {
        Ok((stat, p)) => {
            out.residual_statistic = Some(stat);
            out.residual_p_value = Some(p);
            out.residual_ok = p >= search.residual_alpha;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    (out, Some(f))
}

/// Searches `(r, s)` for one input at a known delay. `fit` receives the
/// candidate term and returns a fitted model containing it (other inputs may
/// be included as the caller sees fit).
///
/// Returns the first candidate whose coefficients all clear the t threshold
/// and whose residuals are not correlated with the prewhitened input.
pub fn identify_orders<F>(
    data: &Dataset,
    input: &str,
    delay: usize,
    search: &OrderSearch,
    prewhitened_input: &TimeSeries,
    fit: F,
) -> Result<OrderChoice>
where
    F: Fn(&InputTerm) -> Result<PtfmFit>,
{
    let (choice, trail) = search_orders(data, input, delay, search, prewhitened_input, &fit)?;
    match choice {
        Some((r, s, f)) => Ok(OrderChoice { r, s, fit: f, trail }),
        None => {
            let best = trail
                .iter()
                .filter(|o| o.error.is_none())
                .max_by(|a, b| a.min_abs_t.unwrap_or(0.0).total_cmp(&b.min_abs_t.unwrap_or(0.0)));
            Err(Error::NoCandidate(match best {
                Some(b) => format!(
                    "no (r, s) for `{input}` passed; best candidate ({}, {}) had min |t| {:?} and residual p-value {:?}",
                    b.r, b.s, b.min_abs_t, b.residual_p_value
                ),
                None => format!("every (r, s) candidate for `{input}` failed to fit"),
            }))
        }
    }
}

type Found = Option<(usize, usize, PtfmFit)>;

fn search_orders<F>(
    data: &Dataset,
    input: &str,
    delay: usize,
    search: &OrderSearch,
    prewhitened_input: &TimeSeries,
    fit: &F,
) -> Result<(Found, Vec<CandidateOutcome>)>
where
    F: Fn(&InputTerm) -> Result<PtfmFit>,
{
    search.validate()?;
    if data.input(input).is_none() {
        return Err(Error::UnknownSeries(input.to_string()));
    }
    let mut trail = Vec::new();
    for (r, s) in search.candidates() {
        let term = InputTerm::new(input, r, s, delay);
        let (outcome, f) = evaluate_candidate(data, &term, search, prewhitened_input, fit);
        let passed = outcome.passed();
        trail.push(outcome);
        if passed {
            return Ok((Some((r, s, f.expect("passed implies fitted"))), trail));
        }
    }
    Ok((None, trail))
}

/// Settings of the full identification protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub grid: CandidateGrid,
    /// Largest delay examined in the cross-correlation.
    pub max_delay: usize,
    /// Significance band multiplier for cross-correlation spikes.
    pub ccf_band: f64,
    pub orders: OrderSearch,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { grid: CandidateGrid::default(), max_delay: 10, ccf_band: 2.0, orders: OrderSearch::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStatus {
    /// Delay and orders identified; residual check passed.
    Identified,
    /// No candidate passed the residual check; the candidate with all
    /// coefficients significant and the cleanest residuals was kept.
    ResidualWarning,
    /// No significant cross-correlation spike.
    NoSignal,
    /// No candidate had all coefficients significant.
    NoEffect,
    /// Prewhitening or correlation failed.
    Failed,
}

impl InputStatus {
    pub fn retained(&self) -> bool {
        matches!(self, InputStatus::Identified | InputStatus::ResidualWarning)
    }
}

/// Identification result for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputIdentification {
    pub name: String,
    pub selection: Vec<SelectionRow>,
    pub selected: Option<ArmaSpec>,
    pub prewhitening: Option<ArmaFilter>,
    pub ccf: Vec<(usize, f64)>,
    pub ccf_threshold: f64,
    pub delay: Option<usize>,
    pub r: Option<usize>,
    pub s: Option<usize>,
    pub trail: Vec<CandidateOutcome>,
    pub status: InputStatus,
    pub message: Option<String>,
}

impl InputIdentification {
    pub fn term(&self) -> Option<InputTerm> {
        match (self.status.retained(), self.delay, self.r, self.s) {
            (true, Some(b), Some(r), Some(s)) => Some(InputTerm::new(self.name.clone(), r, s, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedStructure {
    pub n: usize,
    pub inputs: Vec<InputIdentification>,
}

impl IdentifiedStructure {
    pub fn terms(&self) -> Vec<InputTerm> {
        self.inputs.iter().filter_map(InputIdentification::term).collect()
    }

    pub fn input(&self, name: &str) -> Option<&InputIdentification> {
        self.inputs.iter().find(|i| i.name == name)
    }

    /// Model specification for the retained inputs.
    pub fn to_spec(&self, noise: NoiseOrders) -> PtfmSpec {
        PtfmSpec::new(self.terms(), noise)
    }
}

struct Stage1 {
    ident: InputIdentification,
    alpha: Option<TimeSeries>,
}

fn stage_one(data: &Dataset, x: &TimeSeries, y: &TimeSeries, config: &IdentifyConfig) -> Stage1 {
    let n = data.len();
    let mut ident = InputIdentification {
        name: x.name().to_string(),
        selection: Vec::new(),
        selected: None,
        prewhitening: None,
        ccf: Vec::new(),
        ccf_threshold: ccf_threshold(n, config.ccf_band),
        delay: None,
        r: None,
        s: None,
        trail: Vec::new(),
        status: InputStatus::Failed,
        message: None,
    };
    let result = (|| -> Result<(TimeSeries, Vec<(usize, f64)>, DelayDetection)> {
        let (fit, table) = select_prewhitening_model(x, &config.grid)?;
        ident.selection = table;
        ident.selected = Some(fit.spec);
        ident.prewhitening = Some(fit.filter());
        let alpha = prewhiten(&fit, x)?;
        let beta = ArmaFilter { mean: y.mean(), ..fit.filter() }.whiten(y)?;
        let ccf = cross_correlation(&alpha, &beta, config.max_delay)?;
        let m = alpha.len() - alpha.warmup();
        ident.ccf_threshold = ccf_threshold(m, config.ccf_band);
        let d = detect_delay_with_band(&ccf, m, config.ccf_band)?;
        Ok((alpha, ccf, d))
    })();
    match result {
        Ok((alpha, ccf, d)) => {
            ident.ccf = ccf;
            match d {
                DelayDetection::Delay(b) => {
                    ident.delay = Some(b);
                    Stage1 { ident, alpha: Some(alpha) }
                }
                DelayDetection::NoSignal => {
                    ident.status = InputStatus::NoSignal;
                    Stage1 { ident, alpha: None }
                }
            }
        }
        Err(e) => {
            ident.message = Some(e.to_string());
            Stage1 { ident, alpha: None }
        }
    }
}

/// Runs the identification protocol on every input of `data`.
///
/// The output is prewhitened with each input's AR and MA coefficients
/// around its own sample mean.
///
/// While searching the orders of one input, every other input with a
/// detected delay enters the model as a static term at that delay.
pub fn identify(data: &Dataset, config: &IdentifyConfig) -> Result<IdentifiedStructure> {
    config.orders.validate()?;
    let y = data.output().clone();
    let stage1: Vec<Stage1> = data
        .inputs()
        .par_iter()
        .map(|x| stage_one(data, x, &y, config))
        .collect();

    let delays: Vec<(String, usize)> = stage1
        .iter()
        .filter_map(|s| s.ident.delay.map(|b| (s.ident.name.clone(), b)))
        .collect();
    let sample_start = delays.iter().map(|(_, b)| *b).max().unwrap_or(0) + config.orders.max_s;

    let inputs: Vec<InputIdentification> = stage1
        .into_par_iter()
        .map(|s| {
            let Stage1 { mut ident, alpha } = s;
            let (Some(alpha), Some(b)) = (alpha, ident.delay) else {
                return ident;
            };
            let name = ident.name.clone();
            let fit = |term: &InputTerm| {
                let mut terms = vec![term.clone()];
                terms.extend(
                    delays
                        .iter()
                        .filter(|(n, _)| *n != name)
                        .map(|(n, d)| InputTerm::new(n.clone(), 0, 0, *d)),
                );
                let mut spec = PtfmSpec::new(terms, NoiseOrders::NONE);
                spec.options.sample_start = sample_start;
                fit_ptfm(data, &spec)
            };
            match search_orders(data, &name, b, &config.orders, &alpha, &fit) {
                Ok((Some((r, s, _)), trail)) => {
                    ident.r = Some(r);
                    ident.s = Some(s);
                    ident.trail = trail;
                    ident.status = InputStatus::Identified;
                }
                Ok((None, trail)) => {
                    let fallback = trail
                        .iter()
                        .filter(|o| o.t_ok && o.error.is_none())
                        .max_by(|a, b| {
                            a.residual_p_value
                                .unwrap_or(0.0)
                                .total_cmp(&b.residual_p_value.unwrap_or(0.0))
                        })
                        .map(|o| (o.r, o.s));
                    match fallback {
                        Some((r, s)) => {
                            ident.r = Some(r);
                            ident.s = Some(s);
                            ident.status = InputStatus::ResidualWarning;
                        }
                        None => ident.status = InputStatus::NoEffect,
                    }
                    ident.trail = trail;
                }
                Err(e) => {
                    ident.status = InputStatus::Failed;
                    ident.message = Some(e.to_string());
                }
            }
            ident
        })
        .collect();
    Ok(IdentifiedStructure { n: data.len(), inputs })
}

//! Forward simulation of the Poisson transfer model, used as ground truth
//! for every estimator in the crate.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), whose output stream is
//! fixed by its seed on every platform. Replicate `i` of a recovery
//! experiment uses stream `i + 1` of the experiment seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::arma::simulate_arma_with;
use crate::error::{Error, Result};
use crate::identification::{identify, IdentifyConfig};
use crate::model::{fit_ptfm, run_predictor, transfer_sum, InputTerm, NoiseOrders, PtfmParams, PtfmSpec, TermParams};
use crate::risk::{default_delta_x, relative_risk, rr_confidence_interval};
use crate::series::{Dataset, RationalLag, TimeSeries};

/// Mean daily count used as the default intensity.
pub const DEFAULT_MEAN_COUNT: f64 = 9.1177;
pub const DEFAULT_LENGTH: usize = 1096;

/// How an input series is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputGenerator {
    /// Gaussian ARMA process with the given mean and innovation sd.
    Arma {
        #[serde(default)]
        ar: Vec<f64>,
        #[serde(default)]
        ma: Vec<f64>,
        mean: f64,
        innovation_sd: f64,
    },
    /// Fixed values, at least `n` long; the last `n` are used.
    Replay { values: Vec<f64> },
}

impl InputGenerator {
    /// Stationary mean of the generator.
    pub fn mean(&self) -> f64 {
        match self {
            InputGenerator::Arma { mean, .. } => *mean,
            InputGenerator::Replay { values } => values.iter().sum::<f64>() / values.len().max(1) as f64,
        }
    }
}

/// One input: its generator and its true transfer filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputScenario {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub generator: InputGenerator,
    /// `ω_0, ω_1, …` with `ω(B) = ω_0 − ω_1 B − …`.
    pub omega: Vec<f64>,
    /// `δ_1, …` with `δ(B) = 1 − δ_1 B − …`.
    #[serde(default)]
    pub delta: Vec<f64>,
    pub delay: usize,
    /// Level at which the transfer component is zero; defaults to the
    /// generator mean.
    #[serde(default)]
    pub reference: Option<f64>,
}

impl InputScenario {
    pub fn lag(&self) -> Result<RationalLag> {
        RationalLag::new(self.omega.clone(), self.delta.clone(), self.delay)
    }

    pub fn reference(&self) -> f64 {
        self.reference.unwrap_or_else(|| self.generator.mean())
    }
}

fn default_n() -> usize {
    DEFAULT_LENGTH
}
fn default_intercept() -> f64 {
    DEFAULT_MEAN_COUNT.ln()
}
fn default_output() -> String {
    "admissions".into()
}
fn default_burn_in() -> usize {
    200
}

/// Full description of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Log rate with every input at its reference level.
    #[serde(default = "default_intercept")]
    pub intercept: f64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub inputs: Vec<InputScenario>,
    #[serde(default)]
    pub noise_ar: Vec<f64>,
    #[serde(default)]
    pub noise_ma: Vec<f64>,
    /// Leading rows simulated and discarded. Forced to zero when any input
    /// is replayed.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Scenario {
    /// Three pollutants with delays 2, 1, 1 at the default intensity.
    fn default() -> Self {
        let pollutant = |name: &str, mean: f64, sd: f64, omega: Vec<f64>, delta: Vec<f64>, delay| InputScenario {
            name: name.into(),
            unit: "ug/m3".into(),
            generator: InputGenerator::Arma { ar: vec![0.6], ma: vec![0.3], mean, innovation_sd: sd },
            omega,
            delta,
            delay,
            reference: None,
        };
        Self {
            n: DEFAULT_LENGTH,
            intercept: default_intercept(),
            output: default_output(),
            inputs: vec![
                pollutant("so2", 60.0, 16.0, vec![0.007], vec![], 2),
                pollutant("no2", 50.0, 13.0, vec![0.006], vec![], 1),
                pollutant("pm10", 80.0, 20.0, vec![0.008], vec![0.5], 1),
            ],
            noise_ar: Vec::new(),
            noise_ma: Vec::new(),
            burn_in: default_burn_in(),
            seed: 20_240_601,
        }
    }
}

impl Scenario {
    /// Scenario with no inputs' effect: every ω set to zero.
    pub fn zero_effect(&self) -> Scenario {
        let mut s = self.clone();
        for i in &mut s.inputs {
            i.omega.iter_mut().for_each(|w| *w = 0.0);
        }
        s
    }

    pub fn true_params(&self) -> Result<PtfmParams> {
        let terms = self
            .inputs
            .iter()
            .map(|i| Ok(TermParams { name: i.name.clone(), lag: i.lag()?, reference: i.reference() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(PtfmParams {
            intercept: self.intercept,
            terms,
            noise_ar: self.noise_ar.clone(),
            noise_ma: self.noise_ma.clone(),
        })
    }

    pub fn true_spec(&self) -> PtfmSpec {
        PtfmSpec::new(
            self.inputs
                .iter()
                .map(|i| InputTerm::new(i.name.clone(), i.delta.len(), i.omega.len().saturating_sub(1), i.delay))
                .collect(),
            NoiseOrders { ar: self.noise_ar.len(), ma: self.noise_ma.len() },
        )
    }

    fn has_replay(&self) -> bool {
        self.inputs.iter().any(|i| matches!(i.generator, InputGenerator::Replay { .. }))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("scenario length must be >= 1".into()));
        }
        let mean = self.intercept.exp();
        if !(mean > 0.1 && mean < 1000.0) {
            return Err(Error::Domain(format!("implied mean count {mean} outside (0.1, 1000)")));
        }
        for i in &self.inputs {
            i.lag()?;
            match &i.generator {
                InputGenerator::Arma { innovation_sd, .. } if !(*innovation_sd > 0.0) => {
                    return Err(Error::Domain(format!("input `{}`: innovation sd must be > 0", i.name)))
                }
                InputGenerator::Replay { values } if values.len() < self.n => {
                    return Err(Error::Domain(format!(
                        "input `{}`: replay holds {} values, need {}",
                        i.name,
                        values.len(),
                        self.n
                    )))
                }
                _ => {}
            }
        }
        crate::arma::ArmaFilter { ar: self.noise_ar.clone(), ma: self.noise_ma.clone(), mean: 0.0 }.check_stable()?;
        Ok(())
    }
}

/// Everything needed to score an estimate of a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: PtfmParams,
    pub spec: PtfmSpec,
    /// `(name, steady-state gain)` per input.
    pub gains: Vec<(String, f64)>,
    /// `η_t` used for every retained row.
    pub eta: Vec<f64>,
    pub seed: u64,
}

/// One Poisson variate: inversion below λ = 30, Hörmann's PTRS
/// transformed rejection at and above.
pub fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("Poisson rate must be finite and > 0, got {lambda}")));
    }
    if lambda < 30.0 {
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p <= 0.0 && k as f64 > lambda {
                break;
            }
        }
        return Ok(k);
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return Ok(k as u64);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - ln_gamma(k + 1.0) {
            return Ok(k as u64);
        }
    }
}

/// Simulates the scenario with its own seed.
pub fn generate(scenario: &Scenario) -> Result<(Dataset, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    generate_with(scenario, &mut rng)
}

/// Simulates the scenario drawing from `rng`.
pub fn generate_with<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    scenario.validate()?;
    let params = scenario.true_params()?;
    let burn = if scenario.has_replay() { 0 } else { scenario.burn_in };
    let total = scenario.n + burn;

    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(scenario.inputs.len());
    for i in &scenario.inputs {
        raw.push(match &i.generator {
            InputGenerator::Arma { ar, ma, mean, innovation_sd } => {
                simulate_arma_with(ar, ma, *mean, innovation_sd * innovation_sd, total, rng)?.values().to_vec()
            }
            InputGenerator::Replay { values } => values[values.len() - scenario.n..].to_vec(),
        });
    }
    let slices: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
    let transfer = transfer_sum(&params.terms, &slices, total);
    let start = params.sample_start().min(total);

    let mut y = vec![0.0; total];
    let base = scenario.intercept.exp();
    for v in y.iter_mut().take(start) {
        *v = poisson_draw(base, rng)? as f64;
    }
    let mut eta = run_predictor(scenario.intercept, &transfer, &params.noise_ar, &params.noise_ma, start, |t, h| {
        let draw = poisson_draw(h.exp(), rng)? as f64;
        y[t] = draw;
        Ok(draw)
    })?;
    eta[..start].iter_mut().for_each(|v| *v = scenario.intercept);

    let output = TimeSeries::new(scenario.output.clone(), y[burn..].to_vec())?;
    let inputs = scenario
        .inputs
        .iter()
        .zip(raw)
        .map(|(i, v)| Ok(TimeSeries::new(i.name.clone(), v[burn..].to_vec())?.with_unit(i.unit.clone())))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::new(output, inputs)?;
    let gains = params
        .terms
        .iter()
        .map(|t| Ok((t.name.clone(), t.lag.steady_state_gain()?)))
        .collect::<Result<Vec<_>>>()?;
    let truth = GroundTruth { params, spec: scenario.true_spec(), gains, eta: eta[burn..].to_vec(), seed: scenario.seed };
    Ok((data, truth))
}

/// Settings of a recovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub identify: IdentifyConfig,
    /// Noise orders of the final fit; `None` uses the scenario's.
    pub fit_noise: Option<NoiseOrders>,
    pub confidence_level: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { identify: IdentifyConfig::default(), fit_noise: None, confidence_level: 0.95 }
    }
}

/// Estimate against truth for one input in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecovery {
    pub name: String,
    pub true_delay: usize,
    pub delay: Option<usize>,
    pub r: Option<usize>,
    pub s: Option<usize>,
    /// The input entered the final model.
    pub retained: bool,
    pub true_gain: f64,
    pub gain: Option<f64>,
    pub gain_se: Option<f64>,
    pub delta_x: f64,
    pub true_rr: f64,
    pub rr: Option<f64>,
    pub rr_ci: Option<(f64, f64)>,
}

impl InputRecovery {
    pub fn within_se(&self, k: f64) -> bool {
        match (self.gain, self.gain_se) {
            (Some(g), Some(se)) => (g - self.true_gain).abs() <= k * se,
            _ => false,
        }
    }

    pub fn ci_covers(&self) -> bool {
        self.rr_ci.is_some_and(|(lo, hi)| lo <= self.true_rr && self.true_rr <= hi)
    }

    /// The effect was declared significant: retained with a CI excluding 1.
    pub fn flagged(&self) -> bool {
        self.rr_ci.is_some_and(|(lo, hi)| lo > 1.0 || hi < 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub inputs: Vec<InputRecovery>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn all_delays_recovered(&self) -> bool {
        self.error.is_none() && self.inputs.iter().all(|i| i.delay == Some(i.true_delay))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub name: String,
    pub delay_rate: f64,
    pub retained_rate: f64,
    pub gain_bias: Option<f64>,
    pub within_3se_rate: f64,
    pub ci_coverage: f64,
    pub flag_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n_replicates: usize,
    pub n_failed: usize,
    /// Replicates with every delay recovered exactly.
    pub delay_recovery_rate: f64,
    /// Over all (replicate, input) pairs.
    pub within_3se_rate: f64,
    pub ci_coverage: f64,
    /// Replicates with at least one input flagged.
    pub any_flag_rate: f64,
    pub inputs: Vec<InputSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

fn run_replicate(scenario: &Scenario, opts: &RecoveryOptions, replicate: usize, seed: u64) -> ReplicateRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    let mut record = ReplicateRecord { replicate, inputs: Vec::new(), error: None };
    let (data, truth) = match generate_with(scenario, &mut rng) {
        Ok(v) => v,
        Err(e) => {
            record.error = Some(format!("generate: {e}"));
            return record;
        }
    };
    let rr_truth = |name: &str, dx: f64| {
        let g = truth.gains.iter().find(|(n, _)| n == name).map(|(_, g)| *g).unwrap_or(0.0);
        (g, relative_risk(g, dx))
    };
    let structure = match identify(&data, &opts.identify) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(format!("identify: {e}"));
            return record;
        }
    };
    let noise = opts.fit_noise.unwrap_or(NoiseOrders { ar: scenario.noise_ar.len(), ma: scenario.noise_ma.len() });
    let spec = structure.to_spec(noise);
    let fit = if spec.inputs.is_empty() && noise == NoiseOrders::NONE {
        None
    } else {
        match fit_ptfm(&data, &spec) {
            Ok(f) => Some(f),
            Err(e) => {
                record.error = Some(format!("fit: {e}"));
                None
            }
        }
    };
    for i in &scenario.inputs {
        let dx = default_delta_x(&i.name);
        let (true_gain, true_rr) = rr_truth(&i.name, dx);
        let ident = structure.input(&i.name);
        let term = fit.as_ref().and_then(|f| f.term(&i.name));
        let gain = term.map(|t| t.gain);
        let gain_se = term.and_then(|t| t.gain_se);
        let rr_ci = match (gain, gain_se) {
            (Some(g), Some(se)) => rr_confidence_interval(g, se, dx, opts.confidence_level).ok(),
            _ => None,
        };
        record.inputs.push(InputRecovery {
            name: i.name.clone(),
            true_delay: i.delay,
            delay: ident.and_then(|d| d.delay),
            r: ident.and_then(|d| d.r),
            s: ident.and_then(|d| d.s),
            retained: term.is_some(),
            true_gain,
            gain,
            gain_se,
            delta_x: dx,
            true_rr,
            rr: gain.map(|g| relative_risk(g, dx)),
            rr_ci,
        });
    }
    record
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Generates `n_replicates` data sets, runs identification and fitting on
/// each, and scores the estimates against truth. Replicates run in
/// parallel; results do not depend on scheduling.
pub fn recovery_experiment(
    scenario: &Scenario,
    n_replicates: usize,
    seed: u64,
    opts: &RecoveryOptions,
) -> Result<RecoveryReport> {
    if n_replicates == 0 {
        return Err(Error::Domain("n_replicates must be >= 1".into()));
    }
    scenario.validate()?;
    let replicates: Vec<ReplicateRecord> = (0..n_replicates)
        .into_par_iter()
        .map(|i| run_replicate(scenario, opts, i, seed))
        .collect();
    Ok(summarize(&scenario.inputs.iter().map(|i| i.name.clone()).collect::<Vec<_>>(), replicates))
}

fn summarize(names: &[String], replicates: Vec<ReplicateRecord>) -> RecoveryReport {
    let n = replicates.len();
    let n_failed = replicates.iter().filter(|r| r.error.is_some()).count();
    let pairs: Vec<&InputRecovery> = replicates.iter().flat_map(|r| &r.inputs).collect();
    let total_pairs = n * names.len();
    let inputs = names
        .iter()
        .map(|name| {
            let rows: Vec<&InputRecovery> = pairs.iter().copied().filter(|p| &p.name == name).collect();
            let errs: Vec<f64> = rows.iter().filter_map(|p| p.gain.map(|g| g - p.true_gain)).collect();
            InputSummary {
                name: name.clone(),
                delay_rate: rate(rows.iter().filter(|p| p.delay == Some(p.true_delay)).count(), n),
                retained_rate: rate(rows.iter().filter(|p| p.retained).count(), n),
                gain_bias: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
                within_3se_rate: rate(rows.iter().filter(|p| p.within_se(3.0)).count(), n),
                ci_coverage: rate(rows.iter().filter(|p| p.ci_covers()).count(), n),
                flag_rate: rate(rows.iter().filter(|p| p.flagged()).count(), n),
            }
        })
        .collect();
    RecoveryReport {
        n_replicates: n,
        n_failed,
        delay_recovery_rate: rate(replicates.iter().filter(|r| r.all_delays_recovered()).count(), n),
        within_3se_rate: rate(pairs.iter().filter(|p| p.within_se(3.0)).count(), total_pairs),
        ci_coverage: rate(pairs.iter().filter(|p| p.ci_covers()).count(), total_pairs),
        any_flag_rate: rate(replicates.iter().filter(|r| r.inputs.iter().any(InputRecovery::flagged)).count(), n),
        inputs,
        replicates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_draw_rejects_bad_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(poisson_draw(0.0, &mut rng).is_err());
        assert!(poisson_draw(-1.0, &mut rng).is_err());
        assert!(poisson_draw(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn poisson_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..100_000).map(|_| poisson_draw(5.0, &mut rng).unwrap() as f64).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((4.95..=5.05).contains(&m), "{m}");
        assert!((4.8..=5.2).contains(&v), "{v}");
    }

    #[test]
    fn poisson_point_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeros = (0..20_000).filter(|_| poisson_draw(1.0, &mut rng).unwrap() == 0).count();
        assert!((zeros as f64 / 20_000.0 - 0.3679).abs() < 0.01);
        let twos = (0..20_000).filter(|_| poisson_draw(2.0, &mut rng).unwrap() == 2).count();
        assert!((twos as f64 / 20_000.0 - 0.2707).abs() < 0.01);
    }

    #[test]
    fn large_rate_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..100_000).map(|_| poisson_draw(120.0, &mut rng).unwrap() as f64).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((m - 120.0).abs() < 0.2, "{m}");
        assert!((v / 120.0 - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn default_scenario_shape() {
        let s = Scenario::default();
        let (data, truth) = generate(&s).unwrap();
        assert_eq!(data.len(), 1096);
        assert_eq!(data.input_names(), vec!["so2", "no2", "pm10"]);
        assert_eq!(truth.gains.len(), 3);
        assert_eq!(truth.eta.len(), 1096);
    }

    #[test]
    fn zero_effect_mean() {
        let s = Scenario::default().zero_effect();
        let (data, _) = generate(&s).unwrap();
        let m = data.output().mean();
        assert!((m / DEFAULT_MEAN_COUNT - 1.0).abs() < 0.05, "{m}");
    }

    #[test]
    fn same_seed_same_data() {
        let s = Scenario::default();
        assert_eq!(generate(&s).unwrap().0, generate(&s).unwrap().0);
        let other = Scenario { seed: s.seed + 1, ..s.clone() };
        assert_ne!(generate(&s).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = Scenario::default();
        s.inputs[0].delta = vec![1.2];
        assert!(generate(&s).is_err());
        let s = Scenario { intercept: 10.0, ..Scenario::default() };
        assert!(generate(&s).is_err());
        let mut s = Scenario::default();
        s.inputs[0].generator = InputGenerator::Replay { values: vec![1.0; 10] };
        assert!(generate(&s).is_err());
        assert!(recovery_experiment(&Scenario::default(), 0, 1, &RecoveryOptions::default()).is_err());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = Scenario::default();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}

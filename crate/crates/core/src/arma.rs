//! Univariate ARMA(p, q) estimation by conditional sum of squares, plus
//! simulation, prewhitening and residual diagnostics.
//!
//! Sign convention: `φ(B) = 1 − φ_1·B − … − φ_p·B^p` and
//! `θ(B) = 1 + θ_1·B + … + θ_q·B^q`, so that
//! `x_t − μ = Σ φ_j (x_{t−j} − μ) + a_t + Σ θ_j a_{t−j}`.
//!
//! Stationarity and invertibility are structural: the optimizer works on
//! partial autocorrelations mapped through `tanh`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions};
use crate::series::{LagPolynomial, TimeSeries};

pub const MAX_ORDER: usize = 5;

/// Largest partial autocorrelation magnitude before a fit is flagged as
/// sitting on the stationarity/invertibility boundary.
const BOUNDARY_PACF: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub p: usize,
    pub q: usize,
}

impl ArmaSpec {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p > MAX_ORDER || q > MAX_ORDER {
            return Err(Error::Domain(format!("ARMA orders must be <= {MAX_ORDER}, got ({p},{q})")));
        }
        if p + q == 0 {
            return Err(Error::Domain("ARMA(0,0) has nothing to estimate".into()));
        }
        Ok(Self { p, q })
    }

    /// Number of estimated parameters: φ, θ, mean and σ².
    pub fn n_params(&self) -> usize {
        self.p + self.q + 2
    }

    pub fn min_length(&self) -> usize {
        10 * self.n_params()
    }
}

impl std::fmt::Display for ArmaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ARMA({},{})", self.p, self.q)
    }
}

/// Maps partial autocorrelations to the coefficients of a stationary
/// `1 − a_1·B − … − a_k·B^k` (Durbin-Levinson recursion).
pub(crate) fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(r.len());
    for &rk in r {
        let old = a.clone();
        let k = old.len();
        for j in 0..k {
            a[j] = old[j] - rk * old[k - 1 - j];
        }
        a.push(rk);
    }
    a
}

/// Inverse of [`pacf_to_ar`]; `None` when the polynomial is not stationary.
#[cfg(test)]
pub(crate) fn ar_to_pacf(a: &[f64]) -> Option<Vec<f64>> {
    let mut cur = a.to_vec();
    let mut r = vec![0.0; a.len()];
    for k in (1..=a.len()).rev() {
        let rk = cur[k - 1];
        if !(rk.abs() < 1.0) {
            return None;
        }
        r[k - 1] = rk;
        let den = 1.0 - rk * rk;
        cur = (0..k - 1).map(|j| (cur[j] + rk * cur[k - 2 - j]) / den).collect();
    }
    Some(r)
}

/// Unconstrained vector → stationary AR coefficients.
pub(crate) fn unconstrained_to_ar(u: &[f64]) -> Vec<f64> {
    pacf_to_ar(&u.iter().map(|v| v.tanh()).collect::<Vec<_>>())
}

/// The whitening filter `θ(B)⁻¹φ(B)` around a mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFilter {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub mean: f64,
}

impl ArmaFilter {
    pub fn ar_polynomial(&self) -> LagPolynomial {
        LagPolynomial::denominator_form(&self.ar)
    }

    /// `1 + θ_1·B + …` as a plain polynomial.
    pub fn ma_polynomial(&self) -> LagPolynomial {
        let mut c = vec![1.0];
        c.extend(&self.ma);
        LagPolynomial::new(c).expect("non-empty")
    }

    pub fn check_stable(&self) -> Result<()> {
        if !self.ar_polynomial().is_stable() {
            return Err(Error::Unstable(format!("AR polynomial {:?} is not stationary", self.ar)));
        }
        if !self.ma_polynomial().is_stable() {
            return Err(Error::Unstable(format!("MA polynomial {:?} is not invertible", self.ma)));
        }
        Ok(())
    }

    /// Residual recursion on `w = x − μ` over `x[start..]`, conditioning on
    /// the first `cond` available values. Returns `a` with zeros before
    /// `start + cond`.
    fn innovations(&self, x: &[f64], start: usize, cond: usize) -> Vec<f64> {
        let mut a = vec![0.0; x.len()];
        let first = start + cond;
        for t in first..x.len() {
            let mut e = x[t] - self.mean;
            for (j, phi) in self.ar.iter().enumerate() {
                e -= phi * (x[t - j - 1] - self.mean);
            }
            for (j, th) in self.ma.iter().enumerate() {
                if t >= first + j + 1 {
                    e -= th * a[t - j - 1];
                }
            }
            a[t] = e;
        }
        a
    }

    /// Applies `θ(B)⁻¹φ(B)` to the mean-adjusted series. The first `p`
    /// available positions become unavailable.
    pub fn whiten(&self, series: &TimeSeries) -> Result<TimeSeries> {
        self.check_stable()?;
        let p = self.ar.len();
        if series.len() <= series.warmup() + p {
            return Err(Error::Precondition("series too short to prewhiten".into()));
        }
        let a = self.innovations(series.values(), series.warmup(), p);
        Ok(TimeSeries::with_warmup(series.name(), a, series.warmup() + p)
            .with_unit(series.unit())
            .with_origin(series.origin()))
    }

    /// Inverse of [`ArmaFilter::whiten`]: rebuilds the mean-adjusted series from
    /// innovations `a` and the first `p` mean-adjusted values `initial`.
    pub fn color(&self, a: &[f64], initial: &[f64]) -> Vec<f64> {
        let p = self.ar.len();
        let mut w = vec![0.0; a.len()];
        w[..p].copy_from_slice(&initial[..p]);
        for t in p..a.len() {
            let mut v = a[t];
            for (j, phi) in self.ar.iter().enumerate() {
                v += phi * w[t - j - 1];
            }
            for (j, th) in self.ma.iter().enumerate() {
                if t >= p + j + 1 {
                    v += th * a[t - j - 1];
                }
            }
            w[t] = v;
        }
        w
    }
}

/// An estimated ARMA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFit {
    pub spec: ArmaSpec,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub mean: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub residuals: TimeSeries,
    pub n_effective: usize,
    pub iterations: usize,
    /// Set when a partial autocorrelation ended up at the boundary of the
    /// admissible region; the coefficients were projected inside it.
    pub boundary_warning: bool,
}

impl ArmaFit {
    pub fn filter(&self) -> ArmaFilter {
        ArmaFilter { ar: self.ar.clone(), ma: self.ma.clone(), mean: self.mean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaOptions {
    /// Number of leading observations the sum of squares conditions on.
    /// Defaults to `p`; set it to the largest `p` of a candidate set so that
    /// information criteria are computed on a common sample.
    pub condition: Option<usize>,
    pub bfgs: BfgsOptions,
}

impl Default for ArmaOptions {
    fn default() -> Self {
        Self { condition: None, bfgs: BfgsOptions::default() }
    }
}

/// `(aic, bic) = (−2ℓ + 2k, −2ℓ + k ln n)`.
/// `n` is a real so that non-integer effective sizes can be passed through.
pub fn information_criteria(loglik: f64, k: usize, n: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Precondition("parameter count must be >= 1".into()));
    }
    if !(n > 0.0) {
        return Err(Error::Precondition("sample size must be positive".into()));
    }
    let k = k as f64;
    Ok((-2.0 * loglik + 2.0 * k, -2.0 * loglik + k * n.ln()))
}

/// Fits ARMA(p, q) by conditional sum of squares.
pub fn fit_arma(series: &TimeSeries, spec: ArmaSpec) -> Result<ArmaFit> {
    fit_arma_with(series, spec, &ArmaOptions::default())
}

pub fn fit_arma_with(series: &TimeSeries, spec: ArmaSpec, opts: &ArmaOptions) -> Result<ArmaFit> {
    let x = series.available();
    let n = x.len();
    if n < spec.min_length() {
        return Err(Error::Precondition(format!(
            "{spec} needs at least {} observations, got {n}",
            spec.min_length()
        )));
    }
    let cond = opts.condition.unwrap_or(spec.p).max(spec.p);
    if cond >= n {
        return Err(Error::Precondition("conditioning sample exceeds series length".into()));
    }
    let n_eff = n - cond;
    let center = series.mean();
    let scale = series.std_dev();
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("series `{}` is constant", series.name())));
    }
    let z: Vec<f64> = x.iter().map(|v| (v - center) / scale).collect();
    let (p, q) = (spec.p, spec.q);

    let unpack = |theta: &[f64]| ArmaFilter {
        mean: theta[0],
        ar: unconstrained_to_ar(&theta[1..1 + p]),
        ma: unconstrained_to_ar(&theta[1 + p..]).iter().map(|v| -v).collect(),
    };
    let objective = |theta: &[f64]| {
        let f = unpack(theta);
        let a = f.innovations(&z, 0, cond);
        let ssr: f64 = a[cond..].iter().map(|v| v * v).sum();
        0.5 * n_eff as f64 * (ssr / n_eff as f64).ln()
    };

    let mut theta0 = vec![0.0; 1 + p + q];
    let r = sample_pacf(&z, p);
    for (k, rk) in r.iter().enumerate() {
        theta0[1 + k] = rk.clamp(-0.9, 0.9).atanh();
    }
    let min = optim::minimize(objective, &theta0, &opts.bfgs)?;

    let boundary_warning = min.x[1..].iter().any(|u| u.tanh().abs() > BOUNDARY_PACF);
    let mut theta = min.x.clone();
    for u in &mut theta[1..] {
        *u = u.clamp(-BOUNDARY_PACF.atanh(), BOUNDARY_PACF.atanh());
    }
    let unit = unpack(&theta);
    let filter = ArmaFilter { ar: unit.ar, ma: unit.ma, mean: center + scale * unit.mean };
    let a = filter.innovations(x, 0, cond);
    let ssr: f64 = a[cond..].iter().map(|v| v * v).sum();
    let sigma2 = ssr / n_eff as f64;
    let loglik = -0.5 * n_eff as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let (aic, bic) = information_criteria(loglik, spec.n_params(), n_eff as f64)?;

    let mut resid = vec![0.0; series.len()];
    resid[series.warmup()..].copy_from_slice(&a);
    let residuals = TimeSeries::with_warmup(format!("{}.residuals", series.name()), resid, series.warmup() + cond)
        .with_unit(series.unit())
        .with_origin(series.origin());

    Ok(ArmaFit {
        spec,
        ar: filter.ar,
        ma: filter.ma,
        mean: filter.mean,
        sigma2,
        loglik,
        aic,
        bic,
        residuals,
        n_effective: n_eff,
        iterations: min.iterations,
        boundary_warning,
    })
}

/// Sample autocorrelations `ρ̂_0..ρ̂_max_lag` of a slice.
pub fn acf_slice(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                return 0.0;
            }
            (k..n).map(|t| (x[t] - m) * (x[t - k] - m)).sum::<f64>() / c0
        })
        .collect()
}

/// Sample autocorrelations of the available part of `series`.
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    if series.std_dev() == 0.0 {
        return Err(Error::Domain(format!("series `{}` has zero variance", series.name())));
    }
    Ok(acf_slice(series.available(), max_lag))
}

fn sample_pacf(x: &[f64], p: usize) -> Vec<f64> {
    if p == 0 {
        return Vec::new();
    }
    let rho = acf_slice(x, p);
    // Durbin-Levinson on sample autocorrelations
    let mut phi: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(p);
    for k in 1..=p {
        let num = rho[k] - (1..k).map(|j| phi[j - 1] * rho[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * rho[j]).sum::<f64>();
        let r = if den.abs() > 1e-12 { num / den } else { 0.0 };
        let old = phi.clone();
        for j in 1..k {
            phi[j - 1] = old[j - 1] - r * old[k - j - 1];
        }
        phi.push(r);
        out.push(r);
    }
    out
}

/// Applies the fitted model's whitening filter to `series`.
pub fn prewhiten(fit: &ArmaFit, series: &TimeSeries) -> Result<TimeSeries> {
    fit.filter().whiten(series)
}

/// Simulates an ARMA process with Gaussian innovations. The first
/// `10·(p+q+1)` draws are discarded as burn-in.
pub fn simulate_arma(ar: &[f64], ma: &[f64], mean: f64, sigma2: f64, n: usize, seed: u64) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_arma_with(ar, ma, mean, sigma2, n, &mut rng)
}

pub fn simulate_arma_with<R: Rng + ?Sized>(
    ar: &[f64],
    ma: &[f64],
    mean: f64,
    sigma2: f64,
    n: usize,
    rng: &mut R,
) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::Domain("simulation length must be >= 1".into()));
    }
    if !(sigma2 > 0.0) || !mean.is_finite() {
        return Err(Error::Domain("innovation variance must be positive".into()));
    }
    ArmaFilter { ar: ar.to_vec(), ma: ma.to_vec(), mean }.check_stable()?;
    let burn = 10 * (ar.len() + ma.len() + 1);
    let total = n + burn;
    let sd = sigma2.sqrt();
    let a: Vec<f64> = (0..total).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut w = vec![0.0; total];
    for t in 0..total {
        let mut v = a[t];
        for (j, phi) in ar.iter().enumerate() {
            if t > j {
                v += phi * w[t - j - 1];
            }
        }
        for (j, th) in ma.iter().enumerate() {
            if t > j {
                v += th * a[t - j - 1];
            }
        }
        w[t] = v;
    }
    TimeSeries::new("arma", w[burn..].iter().map(|v| v + mean).collect())
}

/// Ljung-Box portmanteau statistic and its chi-square(`max_lag`) p-value.
pub fn ljung_box(residuals: &TimeSeries, max_lag: usize) -> Result<(f64, f64)> {
    let x = residuals.available();
    let n = x.len();
    if max_lag == 0 || 4 * max_lag >= n {
        return Err(Error::Precondition(format!("max_lag {max_lag} must be in 1..n/4 (n = {n})")));
    }
    let rho = acf(residuals, max_lag)?;
    let nf = n as f64;
    let q = nf * (nf + 2.0) * (1..=max_lag).map(|k| rho[k] * rho[k] / (nf - k as f64)).sum::<f64>();
    let chi = ChiSquared::new(max_lag as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((q, 1.0 - chi.cdf(q)))
}

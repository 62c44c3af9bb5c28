//! The Poisson-type multivariate transfer function model.
//!
//! ```text
//! y_t ~ Poisson(λ_t),   ln λ_t = η_t
//! η_t = c + Z_t + Σ_i [δ_i(B)⁻¹ ω_i(B)] (x_{i, t−b_i} − m_i)
//! ```
//!
//! `m_i` is a reference level for input `i` (the sample mean when fitting):
//! the recursion starts from zero pre-sample outputs, which is the steady
//! state for inputs held at `m_i`. The intercept `c` is therefore the log
//! rate at the reference levels; [`PtfmParams::intercept_at_zero`] gives the
//! log rate with all inputs at zero.
//!
//! `Z_t` is an optional ARMA(r₀, s₀) disturbance driven by the one-step
//! working residuals `e_t = (y_t − λ_t)/λ_t`:
//!
//! ```text
//! Z_t = Σ_j φ_j (Z_{t−j} + e_{t−j}) + Σ_j θ_j e_{t−j}
//! ```
//!
//! so that `Z_t + e_t` follows `φ(B)W_t = θ(B)e_t` with the same sign
//! convention as [`crate::arma`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::arma::unconstrained_to_ar;
use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions};
use crate::series::{Dataset, RationalLag, TimeSeries};

/// Linear predictors above this value are treated as divergence.
pub const ETA_CAP: f64 = 30.0;

/// Largest admissible transfer order on either side of a rational lag.
pub const MAX_TRANSFER_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputTerm {
    pub name: String,
    /// Denominator order.
    pub r: usize,
    /// Numerator order.
    pub s: usize,
    pub delay: usize,
}

impl InputTerm {
    pub fn new(name: impl Into<String>, r: usize, s: usize, delay: usize) -> Self {
        Self { name: name.into(), r, s, delay }
    }

    pub fn n_params(&self) -> usize {
        self.r + self.s + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NoiseOrders {
    pub ar: usize,
    pub ma: usize,
}

impl NoiseOrders {
    pub const NONE: NoiseOrders = NoiseOrders { ar: 0, ma: 0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub f_rel_tol: f64,
    pub g_tol: f64,
    /// First time index that may enter the likelihood; the structural warm-up
    /// is applied on top of this.
    pub sample_start: usize,
    /// Relative step of the central-difference Hessian.
    pub hessian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, f_rel_tol: 1e-12, g_tol: 1e-9, sample_start: 0, hessian_step: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtfmSpec {
    pub inputs: Vec<InputTerm>,
    pub intercept: bool,
    pub noise: NoiseOrders,
    pub options: FitOptions,
}

impl PtfmSpec {
    pub fn new(inputs: Vec<InputTerm>, noise: NoiseOrders) -> Self {
        Self { inputs, intercept: true, noise, options: FitOptions::default() }
    }

    pub fn n_params(&self) -> usize {
        usize::from(self.intercept)
            + self.inputs.iter().map(InputTerm::n_params).sum::<usize>()
            + self.noise.ar
            + self.noise.ma
    }

    /// First index at which every transfer term is defined.
    pub fn structural_start(&self) -> usize {
        self.inputs.iter().map(|t| t.delay + t.s).max().unwrap_or(0)
    }

    pub fn sample_start(&self) -> usize {
        self.structural_start().max(self.options.sample_start)
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        for term in &self.inputs {
            if data.input(&term.name).is_none() {
                return Err(Error::Precondition(format!(
                    "input `{}` is not present in the dataset",
                    term.name
                )));
            }
            if term.r > MAX_TRANSFER_ORDER || term.s > MAX_TRANSFER_ORDER {
                return Err(Error::Precondition(format!(
                    "orders (r={}, s={}) of `{}` exceed {MAX_TRANSFER_ORDER}",
                    term.r, term.s, term.name
                )));
            }
        }
        for (i, t) in self.inputs.iter().enumerate() {
            if self.inputs[..i].iter().any(|o| o.name == t.name) {
                return Err(Error::Precondition(format!("input `{}` listed twice", t.name)));
            }
        }
        if self.noise.ar > MAX_TRANSFER_ORDER || self.noise.ma > MAX_TRANSFER_ORDER {
            return Err(Error::Precondition("noise orders exceed 3".into()));
        }
        Ok(())
    }
}

/// One input's transfer component with its reference level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermParams {
    pub name: String,
    pub lag: RationalLag,
    pub reference: f64,
}

/// A full parameter set of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtfmParams {
    pub intercept: f64,
    pub terms: Vec<TermParams>,
    pub noise_ar: Vec<f64>,
    pub noise_ma: Vec<f64>,
}

impl PtfmParams {
    pub fn intercept_only(intercept: f64) -> Self {
        Self { intercept, terms: Vec::new(), noise_ar: Vec::new(), noise_ma: Vec::new() }
    }

    /// `c − Σ g_i m_i`: the log rate with every input held at zero.
    pub fn intercept_at_zero(&self) -> Result<f64> {
        let mut c = self.intercept;
        for t in &self.terms {
            if t.reference != 0.0 {
                c -= t.lag.steady_state_gain()? * t.reference;
            }
        }
        Ok(c)
    }

    pub fn sample_start(&self) -> usize {
        self.terms.iter().map(|t| t.lag.warmup()).max().unwrap_or(0)
    }

    fn input_slices<'a>(&self, data: &'a Dataset) -> Result<Vec<&'a [f64]>> {
        self.terms
            .iter()
            .map(|t| {
                data.input(&t.name)
                    .map(|x| x.values())
                    .ok_or_else(|| Error::Misaligned(format!("dataset lacks input `{}`", t.name)))
            })
            .collect()
    }
}

/// Sum over terms of the filtered, centred inputs. Entries before each
/// term's warm-up are zero; callers only read from the common start on.
pub(crate) fn transfer_sum(terms: &[TermParams], inputs: &[&[f64]], n: usize) -> Vec<f64> {
    let mut total = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut centred = vec![0.0; n];
    for (term, x) in terms.iter().zip(inputs) {
        for (c, v) in centred.iter_mut().zip(x.iter()) {
            *c = v - term.reference;
        }
        buf.iter_mut().for_each(|v| *v = 0.0);
        let first = term.lag.filter_into(&centred, 0, &mut buf);
        for t in first..n {
            total[t] += buf[t];
        }
    }
    total
}

/// Runs the predictor recursion from `start` to `n`. `observe(t, η_t)` must
/// return the count at `t` (read from data or drawn); it feeds the noise
/// recursion. Returns `η` with zeros before `start`.
pub(crate) fn run_predictor(
    intercept: f64,
    transfer: &[f64],
    noise_ar: &[f64],
    noise_ma: &[f64],
    start: usize,
    mut observe: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let n = transfer.len();
    let mut eta = vec![0.0; n];
    let has_noise = !(noise_ar.is_empty() && noise_ma.is_empty());
    let mut w = vec![0.0; if has_noise { n } else { 0 }];
    let mut e = vec![0.0; if has_noise { n } else { 0 }];
    for t in start..n {
        let mut z = 0.0;
        if has_noise {
            for (j, phi) in noise_ar.iter().enumerate() {
                if t >= start + j + 1 {
                    z += phi * w[t - j - 1];
                }
            }
            for (j, th) in noise_ma.iter().enumerate() {
                if t >= start + j + 1 {
                    z += th * e[t - j - 1];
                }
            }
        }
        let h = intercept + transfer[t] + z;
        if !(h <= ETA_CAP) {
            return Err(Error::Divergence { t, eta: h });
        }
        eta[t] = h;
        let y = observe(t, h)?;
        if has_noise {
            let lam = h.exp();
            e[t] = (y - lam) / lam;
            w[t] = z + e[t];
        }
    }
    Ok(eta)
}

fn eta_series(params: &PtfmParams, data: &Dataset, start: usize) -> Result<Vec<f64>> {
    let inputs = params.input_slices(data)?;
    let n = data.len();
    if start >= n {
        return Err(Error::Precondition(format!("sample start {start} beyond series length {n}")));
    }
    let transfer = transfer_sum(&params.terms, &inputs, n);
    let y = data.counts();
    run_predictor(params.intercept, &transfer, &params.noise_ar, &params.noise_ma, start, |t, _| Ok(y[t]))
}

/// `η_t` at a single index; `None` inside the warm-up.
pub fn linear_predictor(params: &PtfmParams, data: &Dataset, t: usize) -> Result<Option<f64>> {
    let start = params.sample_start();
    if t < start {
        return Ok(None);
    }
    if t >= data.len() {
        return Err(Error::Domain(format!("index {t} beyond series length {}", data.len())));
    }
    Ok(Some(eta_series(params, data, start)?[t]))
}

/// Poisson log-likelihood term `y·η − e^η − ln y!`.
pub fn poisson_log_term(y: f64, eta: f64) -> f64 {
    y * eta - eta.exp() - ln_gamma(y + 1.0)
}

/// Σ_t [y_t η_t − exp(η_t) − ln y_t!] over the post-warm-up sample.
pub fn log_likelihood(params: &PtfmParams, data: &Dataset) -> Result<f64> {
    log_likelihood_from(params, data, params.sample_start())
}

/// As [`log_likelihood`] with an explicit first index (at least the warm-up).
pub fn log_likelihood_from(params: &PtfmParams, data: &Dataset, start: usize) -> Result<f64> {
    let start = start.max(params.sample_start());
    let eta = eta_series(params, data, start)?;
    let y = data.counts();
    Ok((start..data.len()).map(|t| poisson_log_term(y[t], eta[t])).sum())
}

/// Poisson log-linear regression by Newton-Raphson (IRLS). `x` holds the
/// columns of the design without the intercept.
pub fn poisson_regression(y: &[f64], x: &[Vec<f64>], max_iter: usize) -> Result<Vec<f64>> {
    let n = y.len();
    let k = x.len() + 1;
    let ybar = y.iter().sum::<f64>() / n as f64;
    if !(ybar > 0.0) {
        return Err(Error::Domain("all counts are zero".into()));
    }
    let mut beta = DVector::zeros(k);
    beta[0] = ybar.ln();
    let row = |t: usize, j: usize| if j == 0 { 1.0 } else { x[j - 1][t] };
    for _ in 0..max_iter {
        let mut info = DMatrix::<f64>::zeros(k, k);
        let mut score = DVector::<f64>::zeros(k);
        for t in 0..n {
            let eta: f64 = (0..k).map(|j| beta[j] * row(t, j)).sum();
            let mu = eta.min(ETA_CAP).exp();
            for a in 0..k {
                score[a] += (y[t] - mu) * row(t, a);
                for b in 0..=a {
                    info[(a, b)] += mu * row(t, a) * row(t, b);
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Domain("singular information in Poisson regression".into()))?
            .solve(&score);
        beta += &step;
        if step.amax() < 1e-12 * (1.0 + beta.amax()) {
            break;
        }
    }
    Ok(beta.as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub t_value: Option<f64>,
}

impl Coefficient {
    fn new(name: String, value: f64, se: Option<f64>) -> Self {
        let t_value = se.filter(|s| *s > 0.0).map(|s| value / s);
        Self { name, value, se, t_value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub name: String,
    pub lag: RationalLag,
    pub reference: f64,
    pub omega: Vec<Coefficient>,
    pub delta: Vec<Coefficient>,
    pub gain: f64,
    pub gain_se: Option<f64>,
}

impl FittedTerm {
    /// Coefficients of this term, numerator first.
    pub fn coefficients(&self) -> impl Iterator<Item = &Coefficient> {
        self.omega.iter().chain(&self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    /// False when the Hessian was not negative definite and standard errors
    /// are unavailable.
    pub hessian_ok: bool,
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtfmFit {
    pub spec: PtfmSpec,
    pub intercept: Coefficient,
    pub terms: Vec<FittedTerm>,
    pub noise_ar: Vec<Coefficient>,
    pub noise_ma: Vec<Coefficient>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    pub n_used: usize,
    pub sample_start: usize,
    pub lambda_hat: TimeSeries,
    /// Covariance of the coefficients in [`PtfmFit::coefficients`] order.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub diagnostics: FitDiagnostics,
}

impl PtfmFit {
    pub fn params(&self) -> PtfmParams {
        PtfmParams {
            intercept: self.intercept.value,
            terms: self
                .terms
                .iter()
                .map(|t| TermParams { name: t.name.clone(), lag: t.lag.clone(), reference: t.reference })
                .collect(),
            noise_ar: self.noise_ar.iter().map(|c| c.value).collect(),
            noise_ma: self.noise_ma.iter().map(|c| c.value).collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<&FittedTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Every estimated coefficient: intercept, per-term ω then δ, noise AR then MA.
    pub fn coefficients(&self) -> Vec<&Coefficient> {
        let mut v = Vec::new();
        if self.spec.intercept {
            v.push(&self.intercept);
        }
        for t in &self.terms {
            v.extend(t.coefficients());
        }
        v.extend(&self.noise_ar);
        v.extend(&self.noise_ma);
        v
    }

    /// `(y_t − λ̂_t)/√λ̂_t` over the fitted sample.
    pub fn pearson_residuals(&self, data: &Dataset) -> Result<TimeSeries> {
        let lam = self.lambda_hat.values();
        if lam.len() != data.len() {
            return Err(Error::Misaligned("dataset length differs from the fit".into()));
        }
        let y = data.counts();
        let r = (0..data.len())
            .map(|t| if t < self.sample_start { f64::NAN } else { (y[t] - lam[t]) / lam[t].sqrt() })
            .collect();
        Ok(TimeSeries::with_warmup("pearson_residuals", r, self.sample_start).with_origin(data.output().origin()))
    }
}

/// Parameter layout shared by the optimizer and the Hessian.
struct Layout {
    intercept: bool,
    terms: Vec<(usize, usize)>,
    noise: NoiseOrders,
}

impl Layout {
    fn len(&self) -> usize {
        usize::from(self.intercept)
            + self.terms.iter().map(|(r, s)| r + s + 1).sum::<usize>()
            + self.noise.ar
            + self.noise.ma
    }
}

/// Internal data: inputs centred at their mean and scaled by their standard
/// deviation.
struct Prepared {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    delays: Vec<usize>,
    start: usize,
    log_fact: Vec<f64>,
}

impl Prepared {
    /// Log-likelihood at natural internal parameters
    /// `[c, (ω̃_0..ω̃_s, δ_1..δ_r)_i, φ, θ]`; `None` on divergence.
    fn loglik(&self, layout: &Layout, p: &[f64]) -> Option<f64> {
        let n = self.y.len();
        let mut k = 0;
        let c = if layout.intercept {
            k += 1;
            p[0]
        } else {
            0.0
        };
        let mut terms = Vec::with_capacity(layout.terms.len());
        for (i, &(r, s)) in layout.terms.iter().enumerate() {
            let omega = p[k..k + s + 1].to_vec();
            let delta = p[k + s + 1..k + s + 1 + r].to_vec();
            k += r + s + 1;
            terms.push(TermParams {
                name: String::new(),
                lag: RationalLag::new_unchecked(omega, delta, self.delays[i]),
                reference: 0.0,
            });
        }
        let ar = &p[k..k + layout.noise.ar];
        let ma = &p[k + layout.noise.ar..];
        let inputs: Vec<&[f64]> = self.x.iter().map(Vec::as_slice).collect();
        let transfer = transfer_sum(&terms, &inputs, n);
        let y = &self.y;
        let eta = run_predictor(c, &transfer, ar, ma, self.start, |t, _| Ok(y[t])).ok()?;
        let ll: f64 = (self.start..n).map(|t| y[t] * eta[t] - eta[t].exp() - self.log_fact[t]).sum();
        ll.is_finite().then_some(ll)
    }

    /// Maps the unconstrained optimizer vector to natural internal parameters.
    fn natural(&self, layout: &Layout, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(u.len());
        let mut k = 0;
        if layout.intercept {
            out.push(u[0]);
            k = 1;
        }
        for &(r, s) in &layout.terms {
            out.extend_from_slice(&u[k..k + s + 1]);
            out.extend(unconstrained_to_ar(&u[k + s + 1..k + s + 1 + r]));
            k += r + s + 1;
        }
        out.extend(unconstrained_to_ar(&u[k..k + layout.noise.ar]));
        k += layout.noise.ar;
        out.extend(unconstrained_to_ar(&u[k..k + layout.noise.ma]).iter().map(|v| -v));
        out
    }
}

/// Joint maximum-likelihood fit of every coefficient.
pub fn fit_ptfm(data: &Dataset, spec: &PtfmSpec) -> Result<PtfmFit> {
    spec.validate(data)?;
    let n = data.len();
    let start = spec.sample_start();
    let layout = Layout {
        intercept: spec.intercept,
        terms: spec.inputs.iter().map(|t| (t.r, t.s)).collect(),
        noise: spec.noise,
    };
    let n_params = layout.len();
    if n_params == 0 {
        return Err(Error::Precondition("model has no free parameters".into()));
    }
    if start >= n || n - start < 10 * n_params {
        return Err(Error::Precondition(format!(
            "{} usable observations for {n_params} parameters (need 10 per parameter)",
            n.saturating_sub(start)
        )));
    }

    let mut x = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for term in &spec.inputs {
        let s = data.input(&term.name).expect("validated");
        let (m, sd) = (s.mean(), s.std_dev());
        if !(sd > 0.0) {
            return Err(Error::Domain(format!("input `{}` is constant", term.name)));
        }
        x.push(s.values().iter().map(|v| (v - m) / sd).collect::<Vec<_>>());
        means.push(m);
        scales.push(sd);
    }
    let y = data.counts().to_vec();
    let prepared = Prepared {
        log_fact: y.iter().map(|v| ln_gamma(v + 1.0)).collect(),
        y,
        x,
        means,
        scales,
        delays: spec.inputs.iter().map(|t| t.delay).collect(),
        start,
    };

    // starting values from a static Poisson regression on the delayed inputs
    let ys = &prepared.y[start..];
    let cols: Vec<Vec<f64>> = spec
        .inputs
        .iter()
        .zip(&prepared.x)
        .map(|(t, x)| (start..n).map(|i| x[i - t.delay]).collect())
        .collect();
    let init = poisson_regression(ys, &cols, 50).unwrap_or_else(|_| {
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let mut v = vec![0.0; cols.len() + 1];
        v[0] = m.max(1e-3).ln();
        v
    });
    let mut u0 = Vec::with_capacity(n_params);
    if spec.intercept {
        u0.push(init[0]);
    }
    for (i, term) in spec.inputs.iter().enumerate() {
        u0.push(init[i + 1]);
        u0.extend(std::iter::repeat_n(0.0, term.s + term.r));
    }
    u0.extend(std::iter::repeat_n(0.0, spec.noise.ar + spec.noise.ma));

    let objective = |u: &[f64]| {
        let p = prepared.natural(&layout, u);
        prepared.loglik(&layout, &p).map_or(f64::INFINITY, |v| -v)
    };
    let bfgs = BfgsOptions {
        max_iter: spec.options.max_iter,
        f_rel_tol: spec.options.f_rel_tol,
        g_tol: spec.options.g_tol,
        ..BfgsOptions::default()
    };
    let min = optim::minimize(objective, &u0, &bfgs)?;
    let nat = prepared.natural(&layout, &min.x);
    let loglik = prepared
        .loglik(&layout, &nat)
        .ok_or_else(|| Error::Divergence { t: start, eta: f64::INFINITY })?;

    // observed information in natural internal coordinates
    let steps: Vec<f64> = nat.iter().map(|v| spec.options.hessian_step * v.abs().max(1.0)).collect();
    let ll = |p: &[f64]| prepared.loglik(&layout, p).unwrap_or(f64::NAN);
    let hess = optim::central_hessian(&ll, &nat, &steps);
    let cov_internal = (-hess).cholesky().and_then(|c| {
        let inv = c.inverse();
        inv.iter().all(|v| v.is_finite()).then_some(inv)
    });

    // back to raw input units: ω = ω̃ / sd
    let mut scale = vec![1.0; n_params];
    let mut k = usize::from(spec.intercept);
    for (i, term) in spec.inputs.iter().enumerate() {
        for j in 0..=term.s {
            scale[k + j] = 1.0 / prepared.scales[i];
        }
        k += term.n_params();
    }
    let value: Vec<f64> = nat.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let cov = cov_internal.map(|c| DMatrix::from_fn(n_params, n_params, |a, b| c[(a, b)] * scale[a] * scale[b]));
    let se = |a: usize| cov.as_ref().map(|c| c[(a, a)].max(0.0).sqrt());

    let intercept = if spec.intercept {
        Coefficient::new("intercept".into(), value[0], se(0))
    } else {
        Coefficient::new("intercept".into(), 0.0, Some(0.0))
    };
    let mut k = usize::from(spec.intercept);
    let mut terms = Vec::with_capacity(spec.inputs.len());
    for (i, term) in spec.inputs.iter().enumerate() {
        let omega: Vec<Coefficient> = (0..=term.s)
            .map(|j| Coefficient::new(format!("{}.omega{j}", term.name), value[k + j], se(k + j)))
            .collect();
        let delta: Vec<Coefficient> = (0..term.r)
            .map(|j| {
                let a = k + term.s + 1 + j;
                Coefficient::new(format!("{}.delta{}", term.name, j + 1), value[a], se(a))
            })
            .collect();
        let lag = RationalLag::new_unchecked(
            omega.iter().map(|c| c.value).collect(),
            delta.iter().map(|c| c.value).collect(),
            term.delay,
        );
        let gain = lag.steady_state_gain()?;
        let gain_se = cov.as_ref().map(|c| {
            let grad = gain_gradient(&lag);
            let idx: Vec<usize> = (k..k + term.n_params()).collect();
            quad_form(c, &idx, &grad).max(0.0).sqrt()
        });
        terms.push(FittedTerm {
            name: term.name.clone(),
            lag,
            reference: prepared.means[i],
            omega,
            delta,
            gain,
            gain_se,
        });
        k += term.n_params();
    }
    let noise_ar: Vec<Coefficient> = (0..spec.noise.ar)
        .map(|j| Coefficient::new(format!("noise.ar{}", j + 1), value[k + j], se(k + j)))
        .collect();
    k += spec.noise.ar;
    let noise_ma: Vec<Coefficient> = (0..spec.noise.ma)
        .map(|j| Coefficient::new(format!("noise.ma{}", j + 1), value[k + j], se(k + j)))
        .collect();

    let mut fit = PtfmFit {
        spec: spec.clone(),
        intercept,
        terms,
        noise_ar,
        noise_ma,
        loglik,
        aic: -2.0 * loglik + 2.0 * n_params as f64,
        bic: -2.0 * loglik + n_params as f64 * ((n - start) as f64).ln(),
        n_params,
        n_used: n - start,
        sample_start: start,
        lambda_hat: TimeSeries::with_warmup("lambda_hat", vec![0.0; n], n),
        covariance: cov.map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect()),
        diagnostics: FitDiagnostics {
            iterations: min.iterations,
            evaluations: min.evaluations,
            gradient_norm: min.gradient_norm,
            hessian_ok: false,
        },
    };
    fit.diagnostics.hessian_ok = fit.covariance.is_some();
    let eta = eta_series(&fit.params(), data, start)?;
    let lam: Vec<f64> = eta.iter().map(|v| v.exp()).collect();
    fit.lambda_hat = TimeSeries::with_warmup("lambda_hat", lam, start).with_origin(data.output().origin());
    Ok(fit)
}

/// ∂g/∂(ω_0..ω_s, δ_1..δ_r) for `g = ω(1)/δ(1)`.
pub fn gain_gradient(lag: &RationalLag) -> Vec<f64> {
    let num = lag.numerator().at_one();
    let den = lag.denominator().at_one();
    let mut g = Vec::with_capacity(lag.s() + 1 + lag.r());
    g.push(1.0 / den);
    g.extend(std::iter::repeat_n(-1.0 / den, lag.s()));
    g.extend(std::iter::repeat_n(num / (den * den), lag.r()));
    g
}

fn quad_form(c: &DMatrix<f64>, idx: &[usize], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            acc += v[a] * c[(i, j)] * v[b];
        }
    }
    acc
}

/// `λ_t = exp(η_t)` for `data` under the fitted parameters.
pub fn predict(fit: &PtfmFit, data: &Dataset) -> Result<TimeSeries> {
    let params = fit.params();
    for t in &params.terms {
        if data.input(&t.name).is_none() {
            return Err(Error::Misaligned(format!("dataset lacks fitted input `{}`", t.name)));
        }
    }
    predict_params(&params, data)
}

/// `λ_t = exp(η_t)` for `data` under an arbitrary parameter set.
pub fn predict_params(params: &PtfmParams, data: &Dataset) -> Result<TimeSeries> {
    let start = params.sample_start();
    let eta = eta_series(params, data, start)?;
    let lam = eta.into_iter().map(f64::exp).collect();
    Ok(TimeSeries::with_warmup("lambda", lam, start).with_origin(data.output().origin()))
}

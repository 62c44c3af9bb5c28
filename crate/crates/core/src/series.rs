//! Time-series container, lag-polynomial algebra and rational distributed-lag
//! filters.
//!
//! A [`RationalLag`] stores its coefficients in the Box-Jenkins sign
//! convention
//!
//! ```text
//!            ω_0 − ω_1·B − … − ω_s·B^s
//!   z_t  =  ─────────────────────────── · x_{t−b}
//!            1 − δ_1·B − … − δ_r·B^r
//! ```
//!
//! so that the printed coefficients of a published model can be entered
//! verbatim. [`LagPolynomial`] on the other hand is a plain polynomial
//! `c_0 + c_1·B + … + c_k·B^k`.
//!
//! Operations that shift or filter a series leave a number of leading
//! positions without a defined value. Those positions are kept in place (the
//! output has the same length as the input) but are marked unavailable via
//! [`TimeSeries::warmup`], and hold `NaN`.

use std::fmt;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Roots of a stable denominator must have modulus strictly above this bound.
pub const STABILITY_MARGIN: f64 = 1.0 + 1e-9;

/// Label of the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Index(i64),
    Date(NaiveDate),
}

impl Origin {
    /// Label of the observation `steps` periods later.
    pub fn advance(self, steps: usize) -> Origin {
        match self {
            Origin::Index(i) => Origin::Index(i + steps as i64),
            Origin::Date(d) => Origin::Date(d + Duration::days(steps as i64)),
        }
    }
}

impl Default for Origin {
    fn default() -> Self {
        Origin::Index(0)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Index(i) => write!(f, "{i}"),
            Origin::Date(d) => write!(f, "{d}"),
        }
    }
}

/// A named, unit-annotated, equally spaced sequence of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    unit: String,
    origin: Origin,
    values: Vec<f64>,
    warmup: usize,
}

impl TimeSeries {
    /// Builds a fully observed series. Every value must be finite.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::Domain(format!("series `{name}` is empty")));
        }
        if let Some(t) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "series `{name}` has a non-finite value at position {t}"
            )));
        }
        Ok(Self {
            name,
            unit: String::new(),
            origin: Origin::default(),
            values,
            warmup: 0,
        })
    }

    /// Builds a series whose first `warmup` values are unavailable. Those
    /// positions are overwritten with `NaN`.
    pub(crate) fn with_warmup(name: impl Into<String>, mut values: Vec<f64>, warmup: usize) -> Self {
        let warmup = warmup.min(values.len());
        for v in &mut values[..warmup] {
            *v = f64::NAN;
        }
        Self {
            name: name.into(),
            unit: String::new(),
            origin: Origin::default(),
            values,
            warmup,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of leading positions without a defined value.
    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// All positions, `NaN` inside the warm-up.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The available tail of the series.
    pub fn available(&self) -> &[f64] {
        &self.values[self.warmup..]
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        if t < self.warmup {
            None
        } else {
            self.values.get(t).copied()
        }
    }

    /// Mean of the available values.
    pub fn mean(&self) -> f64 {
        let a = self.available();
        a.iter().sum::<f64>() / a.len() as f64
    }

    /// Population standard deviation of the available values.
    pub fn std_dev(&self) -> f64 {
        let a = self.available();
        let m = self.mean();
        (a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    /// Applies `f` to every available value, keeping metadata.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(t, &v)| if t < self.warmup { f64::NAN } else { f(v) })
            .collect();
        TimeSeries { values, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> TimeSeries {
        TimeSeries {
            name: self.name.clone(),
            unit: self.unit.clone(),
            origin: self.origin,
            values: Vec::new(),
            warmup: self.warmup,
        }
    }
}

/// Plain polynomial `c_0 + c_1·B + … + c_k·B^k` in the backshift operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagPolynomial {
    coefficients: Vec<f64>,
}

impl LagPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Domain("lag polynomial needs at least one coefficient".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("lag polynomial has a non-finite coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    /// `1 − a_1·B − … − a_k·B^k`, the form of an autoregressive or
    /// denominator polynomial.
    pub fn denominator_form(a: &[f64]) -> Self {
        let mut coefficients = Vec::with_capacity(a.len() + 1);
        coefficients.push(1.0);
        coefficients.extend(a.iter().map(|v| -v));
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Whether `c_0 = 1` exactly.
    pub fn is_denominator_form(&self) -> bool {
        self.coefficients[0] == 1.0
    }

    /// Value at `B = 1`, i.e. the coefficient sum.
    pub fn at_one(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    pub fn eval(&self, b: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * b + c)
    }

    /// Moduli of the polynomial's roots (trailing zero coefficients dropped).
    pub fn root_moduli(&self) -> Vec<f64> {
        let mut c = self.coefficients.clone();
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        let k = c.len() - 1;
        if k == 0 {
            return Vec::new();
        }
        if k == 1 {
            return vec![(c[0] / c[1]).abs()];
        }
        let lead = c[k];
        let companion = DMatrix::from_fn(k, k, |i, j| {
            if i == 0 {
                -c[k - 1 - j] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    }

    /// True when every root lies strictly outside the circle of radius
    /// [`STABILITY_MARGIN`].
    pub fn is_stable(&self) -> bool {
        self.root_moduli().iter().all(|m| *m > STABILITY_MARGIN)
    }
}

/// One input channel's transfer component: `ω(B)/δ(B)` applied to `x_{t−b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalLag {
    omega: Vec<f64>,
    delta: Vec<f64>,
    delay: usize,
}

impl RationalLag {
    /// `omega = [ω_0, …, ω_s]` and `delta = [δ_1, …, δ_r]` in the
    /// Box-Jenkins sign convention. Rejects unstable denominators.
    pub fn new(omega: Vec<f64>, delta: Vec<f64>, delay: usize) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Domain("numerator needs at least ω_0".into()));
        }
        if omega.iter().chain(&delta).any(|c| !c.is_finite()) {
            return Err(Error::Domain("rational lag has a non-finite coefficient".into()));
        }
        let lag = Self { omega, delta, delay };
        let den = lag.denominator();
        if !den.is_stable() {
            return Err(Error::Unstable(format!(
                "denominator {:?} has a root of modulus <= {STABILITY_MARGIN}",
                den.coefficients()
            )));
        }
        if den.at_one() == 0.0 {
            return Err(Error::SingularGain(0.0));
        }
        Ok(lag)
    }

    /// Static gain `g` applied at lag `delay`.
    pub fn static_gain(g: f64, delay: usize) -> Result<Self> {
        Self::new(vec![g], Vec::new(), delay)
    }

    pub(crate) fn new_unchecked(omega: Vec<f64>, delta: Vec<f64>, delay: usize) -> Self {
        Self { omega, delta, delay }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Denominator order `r`.
    pub fn r(&self) -> usize {
        self.delta.len()
    }

    /// Numerator order `s`.
    pub fn s(&self) -> usize {
        self.omega.len() - 1
    }

    /// `ω(B)` as a plain polynomial `ω_0 − ω_1·B − …`.
    pub fn numerator(&self) -> LagPolynomial {
        let coefficients = self
            .omega
            .iter()
            .enumerate()
            .map(|(k, &w)| if k == 0 { w } else { -w })
            .collect();
        LagPolynomial { coefficients }
    }

    /// `δ(B)` as a plain polynomial `1 − δ_1·B − …`.
    pub fn denominator(&self) -> LagPolynomial {
        LagPolynomial::denominator_form(&self.delta)
    }

    /// Number of leading outputs that cannot be formed: `b + s`.
    pub fn warmup(&self) -> usize {
        self.delay + self.s()
    }

    /// `ω(1)/δ(1)`.
    pub fn steady_state_gain(&self) -> Result<f64> {
        steady_state_gain(self)
    }

    /// First `len` coefficients `v_0, v_1, …` of `ω(B)B^b/δ(B)`.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for t in 0..len {
            let mut acc = match t.checked_sub(self.delay) {
                Some(0) => self.omega[0],
                Some(k) if k < self.omega.len() => -self.omega[k],
                _ => 0.0,
            };
            for (j, d) in self.delta.iter().enumerate() {
                if t > j {
                    acc += d * v[t - j - 1];
                }
            }
            v[t] = acc;
        }
        v
    }

    /// Runs the recursion over `x`, treating positions before `start` of `x`
    /// as unavailable and pre-sample outputs as zero. Returns the first
    /// index written.
    pub(crate) fn filter_into(&self, x: &[f64], start: usize, out: &mut [f64]) -> usize {
        let first = start + self.warmup();
        let ns = self.omega.len();
        for t in first..x.len() {
            let base = t - self.delay;
            let mut acc = self.omega[0] * x[base];
            for k in 1..ns {
                acc -= self.omega[k] * x[base - k];
            }
            for (j, d) in self.delta.iter().enumerate() {
                let lag = j + 1;
                if t >= first + lag {
                    acc += d * out[t - lag];
                }
            }
            out[t] = acc;
        }
        first
    }
}

/// `ω(1)/δ(1) = (ω_0 − ω_1 − … − ω_s)/(1 − δ_1 − … − δ_r)`.
pub fn steady_state_gain(filter: &RationalLag) -> Result<f64> {
    let den = filter.denominator().at_one();
    if den == 0.0 || !den.is_finite() {
        return Err(Error::SingularGain(den));
    }
    Ok(filter.numerator().at_one() / den)
}

/// Iterated first differences `∇^order x`. Consumes the first `order` points.
pub fn difference(series: &TimeSeries, order: usize) -> Result<TimeSeries> {
    if order == 0 {
        return Err(Error::Domain("difference order must be positive".into()));
    }
    if order >= series.len() {
        return Err(Error::Domain(format!(
            "difference order {order} >= series length {}",
            series.len()
        )));
    }
    let mut v = series.values.clone();
    for _ in 0..order {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let warmup = series.warmup.min(v.len());
    let mut out = TimeSeries::with_warmup(series.name.clone(), v, warmup);
    out.unit = series.unit.clone();
    out.origin = series.origin.advance(order);
    Ok(out)
}

/// `B^k x`: element `t` of the result equals element `t − k` of the input.
pub fn backshift(series: &TimeSeries, k: usize) -> Result<TimeSeries> {
    if k >= series.len() {
        return Err(Error::Domain(format!(
            "backshift {k} >= series length {}",
            series.len()
        )));
    }
    let n = series.len();
    let mut v = vec![f64::NAN; n];
    v[k..].copy_from_slice(&series.values[..n - k]);
    let mut out = TimeSeries::with_warmup(series.name.clone(), v, series.warmup + k);
    out.unit = series.unit.clone();
    out.origin = series.origin;
    Ok(out)
}

/// Filters `series` through `filter`. The first `warmup + b + s` outputs are
/// unavailable; the recursion starts from zero pre-sample outputs.
pub fn apply_rational_lag(filter: &RationalLag, series: &TimeSeries) -> Result<TimeSeries> {
    if !filter.denominator().is_stable() {
        return Err(Error::Unstable(format!(
            "denominator {:?}",
            filter.denominator().coefficients()
        )));
    }
    let need = series.warmup + filter.warmup();
    if series.len() <= need {
        return Err(Error::Precondition(format!(
            "series of length {} too short for delay {} and numerator order {}",
            series.len(),
            filter.delay,
            filter.s()
        )));
    }
    let mut out = vec![0.0; series.len()];
    let first = filter.filter_into(&series.values, series.warmup, &mut out);
    let mut ts = TimeSeries::with_warmup(series.name.clone(), out, first);
    ts.unit = series.unit.clone();
    ts.origin = series.origin;
    Ok(ts)
}

/// The joint record of a count output and its aligned input series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    output: TimeSeries,
    inputs: Vec<TimeSeries>,
}

impl Dataset {
    pub fn new(output: TimeSeries, inputs: Vec<TimeSeries>) -> Result<Self> {
        if let Some(t) = output
            .values
            .iter()
            .position(|v| *v < 0.0 || v.fract() != 0.0 || !v.is_finite())
        {
            return Err(Error::Domain(format!(
                "output `{}` must hold nonnegative integer counts (position {t} is {})",
                output.name, output.values[t]
            )));
        }
        if output.warmup != 0 {
            return Err(Error::Domain("output series must be fully observed".into()));
        }
        for x in &inputs {
            if x.len() != output.len() {
                return Err(Error::Misaligned(format!(
                    "input `{}` has length {} but output has {}",
                    x.name,
                    x.len(),
                    output.len()
                )));
            }
            if x.origin != output.origin {
                return Err(Error::Misaligned(format!(
                    "input `{}` starts at {} but output starts at {}",
                    x.name, x.origin, output.origin
                )));
            }
            if x.warmup != 0 {
                return Err(Error::Domain(format!("input `{}` must be fully observed", x.name)));
            }
        }
        for (i, x) in inputs.iter().enumerate() {
            if inputs[..i].iter().any(|o| o.name == x.name) || x.name == output.name {
                return Err(Error::Domain(format!("duplicate series name `{}`", x.name)));
            }
        }
        Ok(Self { output, inputs })
    }

    pub fn output(&self) -> &TimeSeries {
        &self.output
    }

    pub fn counts(&self) -> &[f64] {
        &self.output.values
    }

    pub fn inputs(&self) -> &[TimeSeries] {
        &self.inputs
    }

    pub fn input(&self, name: &str) -> Option<&TimeSeries> {
        self.inputs.iter().find(|x| x.name == name)
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|x| x.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    /// Copy restricted to the named inputs, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Dataset> {
        let inputs = names
            .iter()
            .map(|n| {
                self.input(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownSeries(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.output.clone(), inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new("x", v.to_vec()).unwrap()
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&ts(&[1., 2., 4., 7.]), 1).unwrap().values(), &[1., 2., 3.]);
        assert_eq!(difference(&ts(&[1., 2., 4., 7.]), 2).unwrap().values(), &[1., 1.]);
        let d = difference(&ts(&[3.5; 8]), 3).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
        assert_eq!(d.len(), 5);
        assert!(matches!(difference(&ts(&[1., 2.]), 2), Err(Error::Domain(_))));
    }

    #[test]
    fn difference_advances_origin() {
        let d = difference(&ts(&[1., 2., 4.]).with_origin(Origin::Index(10)), 1).unwrap();
        assert_eq!(d.origin(), Origin::Index(11));
        let date = NaiveDate::from_ymd_opt(2004, 1, 1).unwrap();
        let d = difference(&ts(&[1., 2., 4.]).with_origin(Origin::Date(date)), 2).unwrap();
        assert_eq!(d.origin(), Origin::Date(NaiveDate::from_ymd_opt(2004, 1, 3).unwrap()));
    }

    #[test]
    fn backshift_examples() {
        let x = ts(&[5., 6., 7.]);
        assert_eq!(backshift(&x, 0).unwrap().values(), x.values());
        let b = backshift(&x, 1).unwrap();
        assert_eq!(b.get(0), None);
        assert_eq!(b.available(), &[5., 6.]);
        assert!(backshift(&x, 3).is_err());
    }

    #[test]
    fn identity_and_pure_delay_filters() {
        let x = ts(&[1., -2., 3., 0.5, 9.]);
        let id = RationalLag::new(vec![1.0], vec![], 0).unwrap();
        assert_eq!(apply_rational_lag(&id, &x).unwrap().values(), x.values());
        let d2 = RationalLag::new(vec![1.0], vec![], 2).unwrap();
        let z = apply_rational_lag(&d2, &x).unwrap();
        assert_eq!(z.warmup(), 2);
        assert_eq!(z.available(), &[1., -2., 3.]);
    }

    #[test]
    fn first_order_impulse_response() {
        let f = RationalLag::new(vec![0.5], vec![0.5], 0).unwrap();
        let mut impulse = vec![0.0; 8];
        impulse[0] = 1.0;
        let z = apply_rational_lag(&f, &ts(&impulse)).unwrap();
        for (t, v) in z.values().iter().enumerate() {
            assert!((v - 0.5f64.powi(t as i32 + 1)).abs() < 1e-15);
        }
        assert_eq!(f.impulse_response(8), z.values());
    }

    #[test]
    fn impulse_response_with_delay_and_numerator() {
        // (2 − B)B² / (1 − 0.5B): 0, 0, 2, 0, 0, 0, …
        let f = RationalLag::new(vec![2.0, 1.0], vec![0.5], 2).unwrap();
        assert_eq!(f.impulse_response(6), vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let g = RationalLag::new(vec![1.0, -1.0], vec![], 1).unwrap();
        assert_eq!(g.impulse_response(4), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn numerator_sign_convention() {
        // ω_0 − ω_1·B with ω = [2, 1]: z_t = 2 x_t − x_{t−1}
        let f = RationalLag::new(vec![2.0, 1.0], vec![], 0).unwrap();
        let z = apply_rational_lag(&f, &ts(&[1., 1., 1., 5.])).unwrap();
        assert_eq!(z.warmup(), 1);
        assert_eq!(z.available(), &[1., 1., 9.]);
        assert_eq!(f.numerator().coefficients(), &[2.0, -1.0]);
    }

    #[test]
    fn unstable_denominators_rejected() {
        assert!(matches!(RationalLag::new(vec![1.0], vec![1.0], 0), Err(Error::Unstable(_))));
        assert!(matches!(RationalLag::new(vec![1.0], vec![1.2], 0), Err(Error::Unstable(_))));
        // 1 − 0.5B − 0.5B² has a unit root
        assert!(RationalLag::new(vec![1.0], vec![0.5, 0.5], 0).is_err());
        assert!(RationalLag::new(vec![1.0], vec![0.0772, 0.8806], 2).is_ok());
    }

    #[test]
    fn too_short_series_rejected() {
        let f = RationalLag::new(vec![1.0, 0.3], vec![], 3).unwrap();
        assert!(matches!(
            apply_rational_lag(&f, &ts(&[1., 2., 3., 4.])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn static_gain() {
        let f = RationalLag::static_gain(0.7, 0).unwrap();
        assert_eq!(steady_state_gain(&f).unwrap(), 0.7);
    }

    #[test]
    fn root_moduli_quadratic() {
        // 1 − 0.25B² has roots ±2
        let p = LagPolynomial::denominator_form(&[0.0, 0.25]);
        let mut m = p.root_moduli();
        m.sort_by(f64::total_cmp);
        assert!((m[0] - 2.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12);
        assert!(LagPolynomial::new(vec![]).is_err());
    }

    #[test]
    fn dataset_validation() {
        let y = ts(&[1., 2., 3.]).with_name("y");
        assert!(Dataset::new(y.clone(), vec![ts(&[1., 2.])]).is_err());
        let bad = ts(&[1., 2.5, 3.]).with_name("y");
        assert!(Dataset::new(bad, vec![]).is_err());
        let ok = Dataset::new(y, vec![ts(&[0., 0., 1.])]).unwrap();
        assert_eq!(ok.input_names(), vec!["x"]);
        assert!(ok.select(&["nope"]).is_err());
    }
}

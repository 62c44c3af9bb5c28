//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero when any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptfm::arma::{fit_arma, simulate_arma, ArmaSpec};
use ptfm::identification::CandidateGrid;
use ptfm::model::{fit_ptfm, log_likelihood, InputTerm, NoiseOrders, PtfmParams, PtfmSpec, TermParams};
use ptfm::risk::relative_risk;
use ptfm::synth::{poisson_draw, recovery_experiment, RecoveryOptions, Scenario};
use ptfm::{apply_rational_lag, backshift, difference, Dataset, RationalLag, TimeSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// The five transfer filters printed for the fitted hospital model, with the
/// published `g·Δx` and RR values and the increment used for each.
fn published_filters() -> Vec<(&'static str, RationalLag, f64, f64, f64)> {
    vec![
        ("SO2", RationalLag::new(vec![-0.3696e-3, -0.4723e-3], vec![0.0772, 0.8806], 2).unwrap(), 50.0, 0.1217, 1.129),
        ("NO2", RationalLag::new(vec![3.011e-3], vec![-0.7138], 1).unwrap(), 50.0, 0.0878, 1.092),
        ("PM10", RationalLag::new(vec![0.2257e-3, 0.4513e-3, -0.3605e-3], vec![0.8992], 1).unwrap(), 50.0, 0.0669, 1.069),
        ("avtemp", RationalLag::new(vec![-0.0006], vec![0.1398, 0.2337], 0).unwrap(), 10.0, -0.0096, 0.9905),
        ("humidity", RationalLag::new(vec![-0.003, 0.00154, -0.00187], vec![-0.8444], 1).unwrap(), 10.0, -0.0145, 0.9856),
    ]
}

fn gain_golden() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, lag, dx, expected, _) in published_filters() {
        let v = lag.steady_state_gain().unwrap() * dx;
        worst = worst.max((v - expected).abs());
        parts.push(format!("{name}={v:.4}"));
    }
    outcome(worst <= 0.0005, format!("{} (max |err| {worst:.2e}, tol 5e-4)", parts.join(" ")))
}

fn rr_golden() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, lag, dx, _, expected) in published_filters() {
        let rr = relative_risk(lag.steady_state_gain().unwrap(), dx);
        worst = worst.max((rr - expected).abs());
        parts.push(format!("{name}={rr:.4}"));
    }
    outcome(worst <= 0.001, format!("{} (max |err| {worst:.2e}, tol 1e-3)", parts.join(" ")))
}

/// Direct recursion for `η_t`, written independently of the library.
fn oracle_eta(p: &PtfmParams, x: &[Vec<f64>], y: &[f64]) -> (usize, Vec<f64>) {
    let n = y.len();
    let start = p.terms.iter().map(|t| t.lag.delay() + t.lag.s()).max().unwrap_or(0);
    let mut total = vec![0.0; n];
    for (term, xs) in p.terms.iter().zip(x) {
        let b = term.lag.delay();
        let om = term.lag.omega();
        let de = term.lag.delta();
        let first = b + om.len() - 1;
        let mut z = vec![0.0; n];
        for t in first..n {
            let mut v = om[0] * (xs[t - b] - term.reference);
            for k in 1..om.len() {
                v -= om[k] * (xs[t - b - k] - term.reference);
            }
            for (j, d) in de.iter().enumerate() {
                if t >= first + j + 1 {
                    v += d * z[t - j - 1];
                }
            }
            z[t] = v;
        }
        for t in 0..n {
            total[t] += z[t];
        }
    }
    let mut eta = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut e = vec![0.0; n];
    for t in start..n {
        let mut noise = 0.0;
        for (j, a) in p.noise_ar.iter().enumerate() {
            if t > start + j {
                noise += a * w[t - j - 1];
            }
        }
        for (j, m) in p.noise_ma.iter().enumerate() {
            if t > start + j {
                noise += m * e[t - j - 1];
            }
        }
        eta[t] = p.intercept + total[t] + noise;
        let lam = eta[t].exp();
        e[t] = (y[t] - lam) / lam;
        w[t] = noise + e[t];
    }
    (start, eta)
}

fn likelihood_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut diverged = 0;
    let mut disagreements = 0;
    while compared < 200 {
        let n = rng.random_range(8..=50);
        let n_inputs = rng.random_range(0..=2);
        let mut terms = Vec::new();
        let mut xs = Vec::new();
        for i in 0..n_inputs {
            let s = rng.random_range(0..=1);
            let r = rng.random_range(0..=1);
            let omega: Vec<f64> = (0..=s).map(|_| rng.random_range(-0.05..0.05)).collect();
            let delta: Vec<f64> = (0..r).map(|_| rng.random_range(-0.8..0.8)).collect();
            let b = rng.random_range(0..=2);
            terms.push(TermParams {
                name: format!("x{i}"),
                lag: RationalLag::new(omega, delta, b).unwrap(),
                reference: rng.random_range(0.0..20.0),
            });
            xs.push((0..n).map(|_| rng.random_range(0.0..40.0)).collect::<Vec<f64>>());
        }
        let noise_ar = if rng.random_bool(0.5) { vec![rng.random_range(-0.5..0.5)] } else { vec![] };
        let noise_ma = if rng.random_bool(0.5) { vec![rng.random_range(-0.5..0.5)] } else { vec![] };
        let intercept: f64 = rng.random_range(-0.5..2.5);
        let params = PtfmParams { intercept, terms, noise_ar, noise_ma };
        let mut y = vec![0.0; n];
        for t in 0..n {
            let (start, eta) = oracle_eta(&params, &xs, &y[..=t]);
            let lam = if t < start { intercept.exp() } else { eta[t].exp() };
            y[t] = poisson_draw(lam.min(1e6), &mut rng).unwrap() as f64;
        }
        let data = Dataset::new(
            TimeSeries::new("y", y.clone()).unwrap(),
            xs.iter().enumerate().map(|(i, v)| TimeSeries::new(format!("x{i}"), v.clone()).unwrap()).collect(),
        )
        .unwrap();
        let (start, eta) = oracle_eta(&params, &xs, &y);
        let oracle_diverges = eta[start..].iter().any(|e| !(*e <= 30.0));
        let ll = match log_likelihood(&params, &data) {
            Ok(ll) => ll,
            Err(ptfm::Error::Divergence { .. }) => {
                diverged += 1;
                if !oracle_diverges {
                    disagreements += 1;
                }
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        if oracle_diverges {
            disagreements += 1;
        }
        compared += 1;
        let mut product = 1.0f64;
        for t in start..n {
            let lam = eta[t].exp();
            let mut fact = 1.0f64;
            for k in 1..=(y[t] as u64) {
                fact *= k as f64;
            }
            product *= (-lam).exp() * lam.powf(y[t]) / fact;
        }
        worst = worst.max((ll - product.ln()).abs());
    }
    outcome(
        worst <= 1e-10 && disagreements == 0,
        format!(
            "200 datasets, max |ℓ − ln Π pmf| = {worst:.2e} (tol 1e-10); {diverged} divergent draws skipped, {disagreements} divergence disagreements"
        ),
    )
}

/// Newton-Raphson for Poisson log-linear regression with its own Gaussian
/// elimination.
fn irls(y: &[f64], design: &[Vec<f64>]) -> Vec<f64> {
    let k = design[0].len();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut beta = vec![0.0; k];
    beta[0] = mean.ln();
    for _ in 0..100 {
        let mut a = vec![vec![0.0; k + 1]; k];
        for (row, &yt) in design.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = eta.exp();
            let z = eta + (yt - mu) / mu;
            for i in 0..k {
                for j in 0..k {
                    a[i][j] += mu * row[i] * row[j];
                }
                a[i][k] += mu * row[i] * z;
            }
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..k {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for j in c..=k {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        let next: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
        let step = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        if step < 1e-13 {
            break;
        }
    }
    beta
}

fn regression_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 400;
        let delays = [rng.random_range(0..=2), rng.random_range(0..=2)];
        let x: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.random_range(0.0..50.0)).collect()).collect();
        let beta = [rng.random_range(1.0..2.5), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)];
        let y: Vec<f64> = (0..n)
            .map(|t| {
                let mut eta = beta[0];
                for i in 0..2 {
                    if t >= delays[i] {
                        eta += beta[i + 1] * x[i][t - delays[i]];
                    }
                }
                poisson_draw(eta.exp(), &mut rng).unwrap() as f64
            })
            .collect();
        let data = Dataset::new(
            TimeSeries::new("y", y.clone()).unwrap(),
            vec![TimeSeries::new("a", x[0].clone()).unwrap(), TimeSeries::new("b", x[1].clone()).unwrap()],
        )
        .unwrap();
        let spec = PtfmSpec::new(
            vec![InputTerm::new("a", 0, 0, delays[0]), InputTerm::new("b", 0, 0, delays[1])],
            NoiseOrders::NONE,
        );
        let fit = fit_ptfm(&data, &spec).unwrap();
        let start = fit.sample_start;
        let design: Vec<Vec<f64>> = (start..n).map(|t| vec![1.0, x[0][t - delays[0]], x[1][t - delays[1]]]).collect();
        let oracle = irls(&y[start..], &design);
        let got = [
            fit.params().intercept_at_zero().unwrap(),
            fit.term("a").unwrap().omega[0].value,
            fit.term("b").unwrap().omega[0].value,
        ];
        for (g, o) in got.iter().zip(&oracle) {
            worst = worst.max((g - o).abs());
        }
    }
    outcome(worst <= 1e-6, format!("20 datasets, max |Δβ| = {worst:.2e} (tol 1e-6)"))
}

fn recovery() -> (Outcome, Outcome) {
    let scenario = Scenario::default();
    let t0 = Instant::now();
    let report = recovery_experiment(&scenario, 100, 20_240_601, &RecoveryOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let strength: Vec<String> = scenario
        .inputs
        .iter()
        .map(|i| {
            let g = i.lag().unwrap().steady_state_gain().unwrap();
            let (data, _) = ptfm::synth::generate(&scenario).unwrap();
            format!("{}: g·sd={:.3}", i.name, g * data.input(&i.name).unwrap().std_dev())
        })
        .collect();
    let delays = outcome(
        report.delay_recovery_rate >= 0.85 && secs < 600.0,
        format!(
            "all delays (2,1,1) recovered in {:.0}% of 100 runs (need ≥ 85%), {} failed, {secs:.1}s (limit 600s); {}",
            100.0 * report.delay_recovery_rate,
            report.n_failed,
            strength.join(", ")
        ),
    );
    let params = outcome(
        report.within_3se_rate >= 0.90 && (0.88..=0.99).contains(&report.ci_coverage),
        format!(
            "gain within 3 SE for {:.1}% of pairs (need ≥ 90%), RR 95% CI coverage {:.1}% (need 88–99%)",
            100.0 * report.within_3se_rate,
            100.0 * report.ci_coverage
        ),
    );
    (delays, params)
}

/// Asymptotic standard errors of (φ, θ, μ) for an ARMA model: the inverse of
/// the covariance of the derivative processes `φ(B)u = a`, `θ(B)v = a`,
/// computed from truncated MA(∞) weights.
fn arma_asymptotic_se(ar: &[f64], ma: &[f64], sigma2: f64, n: usize) -> Vec<f64> {
    let m = 2000;
    let weights = |c: &[f64], sign: f64| {
        let mut w = vec![0.0; m];
        w[0] = 1.0;
        for k in 1..m {
            let mut v = 0.0;
            for (j, cj) in c.iter().enumerate() {
                if k > j {
                    v += sign * cj * w[k - j - 1];
                }
            }
            w[k] = v;
        }
        w
    };
    let psi = weights(ar, 1.0);
    let pi = weights(ma, -1.0);
    let cov = |a: &[f64], b: &[f64], shift: isize| {
        (0..m)
            .filter_map(|k| {
                let j = k as isize + shift;
                (j >= 0 && (j as usize) < m).then(|| a[k] * b[j as usize])
            })
            .sum::<f64>()
    };
    let p = ar.len();
    let q = ma.len();
    let k = p + q;
    let mut v = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let (a, ia) = if i < p { (&psi, i) } else { (&pi, i - p) };
            let (b, jb) = if j < p { (&psi, j) } else { (&pi, j - p) };
            v[(i, j)] = cov(a, b, ia as isize - jb as isize);
        }
    }
    let inv = v.try_inverse().expect("information matrix invertible");
    let mut se: Vec<f64> = (0..k).map(|i| (inv[(i, i)] / n as f64).sqrt()).collect();
    let theta1 = 1.0 + ma.iter().sum::<f64>();
    let phi1 = 1.0 - ar.iter().sum::<f64>();
    se.push((sigma2 * theta1 * theta1 / (phi1 * phi1 * n as f64)).sqrt());
    se
}

fn arma_round_trip() -> Outcome {
    let models: [(&[f64], &[f64]); 7] = [
        (&[0.7], &[]),
        (&[], &[0.5]),
        (&[0.6], &[0.3]),
        (&[0.5, -0.3], &[]),
        (&[], &[0.4, 0.3]),
        (&[0.5, -0.3], &[0.4]),
        (&[0.6], &[-0.3, 0.25]),
    ];
    let n = 1096;
    let mut worst = 1.0f64;
    let mut parts = Vec::new();
    for (mi, (ar, ma)) in models.iter().enumerate() {
        let se = arma_asymptotic_se(ar, ma, 1.0, n);
        let truth: Vec<f64> = ar.iter().chain(ma.iter()).copied().chain([10.0]).collect();
        let mut hits = vec![0usize; truth.len()];
        for seed in 0..100u64 {
            let x = simulate_arma(ar, ma, 10.0, 1.0, n, 50_000 + 100 * mi as u64 + seed).unwrap();
            let fit = fit_arma(&x, ArmaSpec::new(ar.len(), ma.len()).unwrap()).unwrap();
            let est: Vec<f64> = fit.ar.iter().chain(fit.ma.iter()).copied().chain([fit.mean]).collect();
            for i in 0..truth.len() {
                if (est[i] - truth[i]).abs() <= 3.0 * se[i] {
                    hits[i] += 1;
                }
            }
        }
        let min = *hits.iter().min().unwrap() as f64 / 100.0;
        worst = worst.min(min);
        parts.push(format!("ARMA({},{}) {:.0}%", ar.len(), ma.len(), 100.0 * min));
    }
    outcome(worst >= 0.95, format!("worst per-parameter rate {:.0}% (need ≥ 95%): {}", 100.0 * worst, parts.join(", ")))
}

fn random_stable_lag(rng: &mut ChaCha8Rng, max_root_inv: f64) -> RationalLag {
    loop {
        let r = rng.random_range(0..=3);
        let s = rng.random_range(0..=3);
        let omega: Vec<f64> = (0..=s).map(|_| rng.random_range(-2.0..2.0)).collect();
        let delta: Vec<f64> = (0..r).map(|_| rng.random_range(-0.9..0.9)).collect();
        let b = rng.random_range(0..=3);
        if let Ok(lag) = RationalLag::new(omega, delta, b) {
            if lag.denominator().root_moduli().iter().all(|m| 1.0 / m <= max_root_inv) {
                return lag;
            }
        }
    }
}

fn operator_identities() -> Outcome {
    let cases = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fails = [0usize; 4];

    for _ in 0..cases {
        let n = rng.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let ts = TimeSeries::new("x", x.clone()).unwrap();
        let b = backshift(&ts, 1).unwrap();
        let d = difference(&ts, 1).unwrap();
        for t in 1..n {
            if (b.values()[t] + d.values()[t - 1] - x[t]).abs() > 1e-9 * x[t].abs().max(1.0) {
                fails[0] += 1;
                break;
            }
        }
    }

    for _ in 0..cases {
        let lag = random_stable_lag(&mut rng, 0.99);
        let n = 60 + rng.random_range(0..100);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (a, c) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + c * v).collect();
        let f = |v: &[f64]| apply_rational_lag(&lag, &TimeSeries::new("s", v.to_vec()).unwrap()).unwrap();
        let (fx, fy, fc) = (f(&x), f(&y), f(&combo));
        for t in fc.warmup()..n {
            let expect = a * fx.values()[t] + c * fy.values()[t];
            let scale = (a * fx.values()[t]).abs() + (c * fy.values()[t]).abs();
            if (fc.values()[t] - expect).abs() > 1e-12 * scale.max(1.0) {
                fails[1] += 1;
                break;
            }
        }
    }

    for _ in 0..cases {
        let lag = random_stable_lag(&mut rng, 0.95);
        let c = rng.random_range(-100.0..100.0);
        let n = 600;
        let z = apply_rational_lag(&lag, &TimeSeries::new("c", vec![c; n]).unwrap()).unwrap();
        let g = lag.steady_state_gain().unwrap();
        let irf: f64 = lag.impulse_response(1000 + lag.delay()).iter().sum();
        if (z.values()[n - 1] - g * c).abs() > 1e-8 * c.abs().max(1.0) * g.abs().max(1.0)
            || (irf - g).abs() > 1e-8 * g.abs().max(1.0)
        {
            fails[2] += 1;
        }
    }

    for _ in 0..cases {
        let g = rng.random_range(-0.05..0.05);
        let a = rng.random_range(-100.0..100.0);
        let b = rng.random_range(-100.0..100.0);
        let lhs = relative_risk(g, a + b);
        let rhs = relative_risk(g, a) * relative_risk(g, b);
        if (lhs - rhs).abs() > 1e-12 * lhs.max(1.0) {
            fails[3] += 1;
        }
    }
    outcome(
        fails.iter().all(|f| *f == 0),
        format!(
            "{cases} cases each; failures: B=1−∇ {}, linearity {}, gain convergence {}, RR multiplicativity {}",
            fails[0], fails[1], fails[2], fails[3]
        ),
    )
}

fn structural_statement() -> Outcome {
    let grid: Vec<(usize, usize)> = CandidateGrid::default().specs.iter().map(|s| (s.p, s.q)).collect();
    let expected = vec![(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 2), (3, 3)];
    outcome(
        grid == expected,
        format!(
            "published fitted coefficients and AIC/BIC tables need the unpublished hospital data and are not re-estimated; \
             criteria 1–2 take the printed coefficients as inputs; candidate grid {grid:?} has the published 7-member shape"
        ),
    )
}

fn main() {
    let t0 = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gain golden values", gain_golden()),
        (2, "relative-risk golden values", rr_golden()),
        (3, "likelihood brute-force oracle", likelihood_oracle()),
        (4, "Poisson-regression reduction", regression_reduction()),
    ];
    let (delays, params) = recovery();
    results.push((5, "delay recovery", delays));
    results.push((6, "parameter recovery", params));
    results.push((7, "ARMA round trip", arma_round_trip()));
    results.push((8, "operator identities", operator_identities()));
    results.push((9, "structural coverage of unreproducible tables", structural_statement()));

    let mut failed = 0;
    for (i, name, o) in &results {
        println!("[{}] criterion {i}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

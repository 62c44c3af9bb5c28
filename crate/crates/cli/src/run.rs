use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use ptfm::arma::acf_slice;
use ptfm::csv_io::{load_csv, write_csv};
use ptfm::identification::identify as run_identification;
use ptfm::model::{fit_ptfm, log_likelihood, predict_params, InputTerm, NoiseOrders, PtfmFit, PtfmParams, PtfmSpec};
use ptfm::risk::{default_delta_x, relative_risk, rr_from_fit};
use ptfm::synth::{generate, Scenario};
use ptfm::{Dataset, TimeSeries};

use crate::config::{ColumnConfig, DataConfig, FitSection, FixedParams, IdentifySection, InputConfig, RunConfig};
use crate::plot::{acf_chart, line_chart, Line};
use crate::report::{
    num, table, CoefficientRow, FitReport, FitStatistics, IdentificationReport, NamedSeries, RiskRow, SeriesBlock,
    TermRow, FIT_SCHEMA, IDENTIFY_SCHEMA,
};
use crate::{Common, ConfigError, DataError};

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError).context(msg.into())
}

fn data_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(DataError).context(msg.into())
}

fn load_config(common: &Common) -> Result<Option<RunConfig>> {
    common.config.as_deref().map(RunConfig::load).transpose()
}

fn data_path(common: &Common, config: &RunConfig) -> Option<PathBuf> {
    common.data.clone().or_else(|| config.data.path.clone())
}

fn out_dir(common: &Common, config: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn load_data(config: &RunConfig, path: &Path) -> Result<Dataset> {
    load_csv(path, &config.schema()).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn identify_report(
    config: &RunConfig,
    data: &Dataset,
    path: &Path,
    seed: Option<u64>,
    max_lag: Option<usize>,
) -> Result<IdentificationReport> {
    let mut settings = config.identify.clone();
    if let Some(m) = max_lag {
        settings.max_delay = m;
    }
    let mut ident = config.identify_config()?;
    ident.max_delay = settings.max_delay;
    let structure = run_identification(data, &ident).context("identification failed")?;
    Ok(IdentificationReport {
        schema: IDENTIFY_SCHEMA.into(),
        seed: seed.or(config.seed),
        data_path: Some(path.display().to_string()),
        n: structure.n,
        settings,
        inputs: structure.inputs,
    })
}

pub fn identify(common: &Common, max_lag: Option<usize>) -> Result<()> {
    let config = load_config(common)?.ok_or_else(|| config_error("identify needs --config"))?;
    let path = data_path(common, &config).ok_or_else(|| config_error("no data path in the config or on the command line"))?;
    let data = load_data(&config, &path)?;
    let report = identify_report(&config, &data, &path, common.seed, max_lag)?;
    let out = out_dir(common, Some(&config))?;
    write_json(&out.join("identification.json"), &report)?;
    let text = report.render();
    write_text(&out.join("identification.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn coefficient_names(params: &PtfmParams) -> Vec<(String, f64)> {
    let mut v = vec![("intercept".to_string(), params.intercept)];
    for t in &params.terms {
        v.extend(t.lag.omega().iter().enumerate().map(|(j, w)| (format!("{}.omega{j}", t.name), *w)));
        v.extend(t.lag.delta().iter().enumerate().map(|(j, d)| (format!("{}.delta{}", t.name, j + 1), *d)));
    }
    v.extend(params.noise_ar.iter().enumerate().map(|(j, a)| (format!("noise.ar{}", j + 1), *a)));
    v.extend(params.noise_ma.iter().enumerate().map(|(j, m)| (format!("noise.ma{}", j + 1), *m)));
    v
}

fn series_block(data: &Dataset, fitted: &TimeSeries) -> SeriesBlock {
    let origin = data.output().origin();
    SeriesBlock {
        index: (0..data.len()).map(|t| origin.advance(t).to_string()).collect(),
        output: data.output().name().to_string(),
        observed: data.counts().to_vec(),
        fitted: fitted.values().iter().map(|v| v.is_finite().then_some(*v)).collect(),
        inputs: data
            .inputs()
            .iter()
            .map(|x| NamedSeries { name: x.name().into(), unit: x.unit().into(), values: x.values().to_vec() })
            .collect(),
    }
}

/// Terms for the configured inputs that the identification retained.
fn structure_terms(config: &RunConfig, ident: &IdentificationReport, warnings: &mut Vec<String>) -> Vec<InputTerm> {
    let mut terms = Vec::new();
    for input in &config.data.inputs {
        match ident.inputs.iter().find(|i| i.name == input.name) {
            None => warnings.push(format!("input `{}` is absent from the structure and is excluded", input.name)),
            Some(i) => match i.term() {
                Some(t) => terms.push(t),
                None => warnings.push(format!("input `{}` was not retained by identification ({:?})", i.name, i.status)),
            },
        }
    }
    for i in &ident.inputs {
        if !config.data.inputs.iter().any(|c| c.name == i.name) {
            warnings.push(format!("structure input `{}` is not configured and is ignored", i.name));
        }
    }
    terms
}

fn read_identification(path: &Path) -> Result<IdentificationReport> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read structure {}", path.display()))?;
    let report: IdentificationReport = serde_json::from_str(&text)
        .map_err(|e| data_error(format!("{}: not an identification report: {e}", path.display())))?;
    if report.schema != IDENTIFY_SCHEMA {
        return Err(data_error(format!("{}: unsupported schema `{}`", path.display(), report.schema)));
    }
    Ok(report)
}

fn write_trace(dir: &Path, spec: &PtfmSpec, err: &ptfm::Error) -> Result<()> {
    if let ptfm::Error::Convergence { iterations, best_value, best_params, message } = err {
        let trace = serde_json::json!({
            "spec": spec,
            "iterations": iterations,
            "best_value": best_value,
            "best_params": best_params,
            "message": message,
        });
        write_json(&dir.join("trace.json"), &trace)?;
    }
    Ok(())
}

fn estimated_report(config: &RunConfig, fit: &PtfmFit, data: &Dataset, path: &Path, seed: Option<u64>, warnings: Vec<String>) -> Result<FitReport> {
    let level = config.fit.confidence_level;
    let relative_risks = fit
        .terms
        .iter()
        .map(|t| {
            let rr = rr_from_fit(fit, &t.name, config.delta_x(&t.name), level)?;
            Ok(RiskRow {
                input: t.name.clone(),
                unit: config.unit(&t.name),
                gain: rr.gain,
                gain_se: t.gain_se,
                delta_x: rr.delta_x,
                g_delta_x: rr.g_delta_x,
                rr: rr.rr,
                ci_low: rr.ci.map(|c| c.0),
                ci_high: rr.ci.map(|c| c.1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitReport {
        schema: FIT_SCHEMA.into(),
        estimated: true,
        seed: seed.or(config.seed),
        data_path: Some(path.display().to_string()),
        structure: fit
            .spec
            .inputs
            .iter()
            .map(|t| TermRow { input: t.name.clone(), r: t.r, s: t.s, delay: t.delay })
            .collect(),
        noise: fit.spec.noise,
        warnings,
        coefficients: fit
            .coefficients()
            .into_iter()
            .map(|c| CoefficientRow { name: c.name.clone(), value: c.value, se: c.se, t_value: c.t_value })
            .collect(),
        relative_risks,
        confidence_level: level,
        statistics: Some(FitStatistics {
            loglik: fit.loglik,
            aic: Some(fit.aic),
            bic: Some(fit.bic),
            n_params: fit.n_params,
            n_used: fit.n_used,
            sample_start: fit.sample_start,
        }),
        series: Some(series_block(data, &fit.lambda_hat)),
    })
}

fn fixed_report(config: Option<&RunConfig>, fixed: &FixedParams, data: Option<(&Dataset, &Path)>, seed: Option<u64>) -> Result<FitReport> {
    let params = fixed.params()?;
    let level = config.map_or(FitSection::default().confidence_level, |c| c.fit.confidence_level);
    let relative_risks = params
        .terms
        .iter()
        .map(|t| {
            let gain = t.lag.steady_state_gain()?;
            let delta_x = fixed
                .delta_x(&t.name)
                .or_else(|| config.map(|c| c.delta_x(&t.name)))
                .unwrap_or_else(|| default_delta_x(&t.name));
            Ok(RiskRow {
                input: t.name.clone(),
                unit: config.map(|c| c.unit(&t.name)).unwrap_or_default(),
                gain,
                gain_se: None,
                delta_x,
                g_delta_x: gain * delta_x,
                rr: relative_risk(gain, delta_x),
                ci_low: None,
                ci_high: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_params = coefficient_names(&params).len();
    let (statistics, series) = match data {
        Some((data, _)) => {
            let lambda = predict_params(&params, data)?;
            let start = params.sample_start();
            let stats = FitStatistics {
                loglik: log_likelihood(&params, data)?,
                aic: None,
                bic: None,
                n_params,
                n_used: data.len() - start,
                sample_start: start,
            };
            (Some(stats), Some(series_block(data, &lambda)))
        }
        None => (None, None),
    };
    Ok(FitReport {
        schema: FIT_SCHEMA.into(),
        estimated: false,
        seed: seed.or(config.and_then(|c| c.seed)),
        data_path: data.map(|(_, p)| p.display().to_string()),
        structure: params
            .terms
            .iter()
            .map(|t| TermRow { input: t.name.clone(), r: t.lag.r(), s: t.lag.s(), delay: t.lag.delay() })
            .collect(),
        noise: NoiseOrders { ar: params.noise_ar.len(), ma: params.noise_ma.len() },
        warnings: Vec::new(),
        coefficients: coefficient_names(&params)
            .into_iter()
            .map(|(name, value)| CoefficientRow { name, value, se: None, t_value: None })
            .collect(),
        relative_risks,
        confidence_level: level,
        statistics,
        series,
    })
}

pub fn fit(common: &Common, structure: Option<&Path>, fixed: Option<&Path>, max_lag: Option<usize>) -> Result<()> {
    let config = load_config(common)?;
    let out = out_dir(common, config.as_ref())?;
    let report = if let Some(fixed_path) = fixed {
        let fixed = FixedParams::load(fixed_path)?;
        let path = match &config {
            Some(c) => data_path(common, c),
            None => common.data.clone(),
        };
        match (path, &config) {
            (Some(path), Some(c)) => {
                let data = load_data(c, &path)?;
                fixed_report(Some(c), &fixed, Some((&data, &path)), common.seed)?
            }
            (Some(_), None) => return Err(config_error("--data needs --config to describe the columns")),
            (None, c) => fixed_report(c.as_ref(), &fixed, None, common.seed)?,
        }
    } else {
        let config = config.ok_or_else(|| config_error("fit needs --config unless --fixed-params is given"))?;
        let path = data_path(common, &config).ok_or_else(|| config_error("no data path in the config or on the command line"))?;
        let data = load_data(&config, &path)?;
        let ident = match structure {
            Some(p) => read_identification(p)?,
            None => identify_report(&config, &data, &path, common.seed, max_lag)?,
        };
        let mut warnings = Vec::new();
        let terms = structure_terms(&config, &ident, &mut warnings);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        let mut spec = PtfmSpec::new(terms, config.noise());
        spec.options.max_iter = config.fit.max_iter;
        let fit = match fit_ptfm(&data, &spec) {
            Ok(f) => f,
            Err(e) => {
                write_trace(&out, &spec, &e)?;
                return Err(anyhow::Error::new(e).context("model fit failed"));
            }
        };
        estimated_report(&config, &fit, &data, &path, common.seed, warnings)?
    };
    write_json(&out.join("fit.json"), &report)?;
    let text = report.render();
    write_text(&out.join("fit.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_config_for(scenario: &Scenario) -> RunConfig {
    RunConfig {
        data: DataConfig {
            path: Some(PathBuf::from("data.csv")),
            index_column: Some("day".into()),
            output: ColumnConfig { name: scenario.output.clone(), unit: "count".into() },
            inputs: scenario
                .inputs
                .iter()
                .map(|i| InputConfig { name: i.name.clone(), unit: i.unit.clone(), delta_x: None })
                .collect(),
            missing: Default::default(),
        },
        identify: IdentifySection::default(),
        fit: FitSection { noise_ar: scenario.noise_ar.len(), noise_ma: scenario.noise_ma.len(), ..FitSection::default() },
        seed: Some(scenario.seed),
        output_dir: None,
    }
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut scenario = match config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read scenario {}", p.display()))
                .map_err(|e| e.context(ConfigError))?;
            toml::from_str::<Scenario>(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => Scenario::default(),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate().map_err(|e| anyhow::Error::new(e).context(ConfigError))?;
    let (data, truth) = generate(&scenario).context("simulation failed")?;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut csv = Vec::new();
    write_csv(&data, "day", &mut csv)?;
    fs::write(out.join("data.csv"), csv).context("cannot write data.csv")?;
    write_json(&out.join("truth.json"), &truth)?;
    let run = toml::to_string(&run_config_for(&scenario)).context("cannot serialise run config")?;
    write_text(&out.join("run.toml"), &run)?;

    let mut rows = vec![vec![
        data.output().name().to_string(),
        num(data.output().mean()),
        num(data.output().std_dev()),
        String::new(),
    ]];
    for (x, (_, gain)) in data.inputs().iter().zip(&truth.gains) {
        rows.push(vec![x.name().to_string(), num(x.mean()), num(x.std_dev()), num(*gain)]);
    }
    println!("Simulated {} rows (seed {}) into {}", data.len(), scenario.seed, out.display());
    print!("{}", table(&["series", "mean", "sd", "true gain"], &rows));
    Ok(())
}

pub fn report(path: &Path, out: &Path, max_lag: usize, plots: bool) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read report {}", path.display()))?;
    let report: FitReport =
        serde_json::from_str(&text).map_err(|e| data_error(format!("{}: malformed fit report: {e}", path.display())))?;
    if report.schema != FIT_SCHEMA {
        return Err(data_error(format!("{}: unsupported schema `{}`", path.display(), report.schema)));
    }
    let series = report.series.as_ref().ok_or_else(|| data_error("the report carries no fitted series"))?;
    if series.observed.len() != series.fitted.len() || series.index.len() != series.observed.len() {
        return Err(data_error("observed and fitted series differ in length"));
    }
    if max_lag == 0 {
        return Err(config_error("--max-lag must be at least 1"));
    }
    let residuals: Vec<Option<f64>> = series
        .observed
        .iter()
        .zip(&series.fitted)
        .map(|(y, f)| f.map(|l| (y - l) / l.sqrt()))
        .collect();
    let available: Vec<f64> = residuals.iter().flatten().copied().collect();
    if available.len() <= max_lag + 1 {
        return Err(data_error(format!("{} fitted points are too few for {max_lag} lags", available.len())));
    }
    let acf = acf_slice(&available, max_lag);
    let band = 2.0 / (available.len() as f64).sqrt();
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;

    let mut fitted_csv = format!("index,{},fitted,pearson_residual\n", series.output);
    for t in 0..series.observed.len() {
        let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
        let _ = writeln!(fitted_csv, "{},{},{},{}", series.index[t], num(series.observed[t]), cell(series.fitted[t]), cell(residuals[t]));
    }
    write_text(&out.join("fitted.csv"), &fitted_csv)?;

    let acf_rows: Vec<Vec<String>> = acf[1..]
        .iter()
        .enumerate()
        .map(|(k, r)| vec![(k + 1).to_string(), num(*r), if r.abs() > band { "*".into() } else { String::new() }])
        .collect();
    let mut acf_csv = String::from("lag,acf,outside_band\n");
    for row in &acf_rows {
        let _ = writeln!(acf_csv, "{},{},{}", row[0], row[1], !row[2].is_empty());
    }
    write_text(&out.join("residual_acf.csv"), &acf_csv)?;

    let mut summary = report.render();
    let _ = writeln!(summary, "\nPearson residual autocorrelation (band {})", num(band));
    summary.push_str(&table(&["lag", "acf", "outside band"], &acf_rows));
    print!("{summary}");
    let fitted_rows: Vec<Vec<String>> = (0..series.observed.len())
        .map(|t| {
            let cell = |v: Option<f64>| v.map(num).unwrap_or_else(|| "-".into());
            vec![series.index[t].clone(), num(series.observed[t]), cell(series.fitted[t]), cell(residuals[t])]
        })
        .collect();
    let _ = writeln!(summary, "\nObserved and fitted counts");
    summary.push_str(&table(&["index", "observed", "fitted", "residual"], &fitted_rows));
    write_text(&out.join("report.txt"), &summary)?;

    if plots {
        let dir = out.join("plots");
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let observed: Vec<Option<f64>> = series.observed.iter().map(|v| Some(*v)).collect();
        let svg = line_chart(
            &format!("{}: observed and fitted", series.output),
            &[Line { label: "observed", values: &observed }, Line { label: "fitted", values: &series.fitted }],
        );
        write_text(&dir.join("observed_fitted.svg"), &svg)?;
        write_text(&dir.join("residual_acf.svg"), &acf_chart("Pearson residual ACF", &acf[1..], band))?;
        for input in &series.inputs {
            let values: Vec<Option<f64>> = input.values.iter().map(|v| v.is_finite().then_some(*v)).collect();
            let title = if input.unit.is_empty() { input.name.clone() } else { format!("{} ({})", input.name, input.unit) };
            let svg = line_chart(&title, &[Line { label: &input.name, values: &values }]);
            let file = format!("input_{}.svg", input.name.replace(|c: char| !c.is_ascii_alphanumeric(), "_"));
            write_text(&dir.join(file), &svg)?;
        }
    }
    Ok(())
}

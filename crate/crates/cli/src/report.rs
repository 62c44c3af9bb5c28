//! Machine-readable reports and the plain-text tables derived from them.
//!
//! Every number printed in a table is rendered with [`num`], which uses the
//! same shortest round-trip formatting as the JSON document, so the text can
//! be matched against the report byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use ptfm::identification::InputIdentification;
use ptfm::model::NoiseOrders;

use crate::config::IdentifySection;

pub const FIT_SCHEMA: &str = "ptfm-report/1";
pub const IDENTIFY_SCHEMA: &str = "ptfm-identification/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub schema: String,
    pub seed: Option<u64>,
    pub data_path: Option<String>,
    pub n: usize,
    pub settings: IdentifySection,
    pub inputs: Vec<InputIdentification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    /// False when the coefficients were supplied rather than estimated.
    pub estimated: bool,
    pub seed: Option<u64>,
    pub data_path: Option<String>,
    pub structure: Vec<TermRow>,
    pub noise: NoiseOrders,
    pub warnings: Vec<String>,
    pub coefficients: Vec<CoefficientRow>,
    pub relative_risks: Vec<RiskRow>,
    pub confidence_level: f64,
    pub statistics: Option<FitStatistics>,
    pub series: Option<SeriesBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub input: String,
    pub r: usize,
    pub s: usize,
    pub delay: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub t_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub input: String,
    pub unit: String,
    pub gain: f64,
    pub gain_se: Option<f64>,
    pub delta_x: f64,
    pub g_delta_x: f64,
    pub rr: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub loglik: f64,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub n_params: usize,
    pub n_used: usize,
    pub sample_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBlock {
    pub index: Vec<String>,
    pub output: String,
    pub observed: Vec<f64>,
    /// `None` inside the warm-up.
    pub fitted: Vec<Option<f64>>,
    pub inputs: Vec<NamedSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Shortest round-trip rendering, identical to the JSON number text.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Left-aligned first column, right-aligned others.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

impl IdentificationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Identification ({} observations)\n", self.n);
        for input in &self.inputs {
            let _ = writeln!(out, "Input {}: {}", input.name, status_label(input));
            if let Some(msg) = &input.message {
                let _ = writeln!(out, "  note: {msg}");
            }
            let rows: Vec<Vec<String>> = input
                .selection
                .iter()
                .map(|row| {
                    let chosen = input.selected == Some(row.spec);
                    vec![
                        format!("ARMA({},{})", row.spec.p, row.spec.q),
                        opt(row.aic),
                        opt(row.bic),
                        if chosen { "*".into() } else { String::new() },
                    ]
                })
                .collect();
            out.push_str(&table(&["model", "AIC", "BIC", "selected"], &rows));
            let ccf: Vec<Vec<String>> = input
                .ccf
                .iter()
                .map(|(k, r)| {
                    let mark = if r.abs() > input.ccf_threshold { "*" } else { "" };
                    vec![k.to_string(), num(*r), mark.into()]
                })
                .collect();
            let _ = writeln!(out, "\n  cross-correlation (threshold {})", num(input.ccf_threshold));
            out.push_str(&table(&["lag", "ccf", "significant"], &ccf));
            let _ = writeln!(
                out,
                "\n  delay b = {}, orders r = {}, s = {}\n",
                opt_usize(input.delay),
                opt_usize(input.r),
                opt_usize(input.s)
            );
        }
        let rows: Vec<Vec<String>> = self
            .inputs
            .iter()
            .map(|i| {
                vec![i.name.clone(), opt_usize(i.delay), opt_usize(i.r), opt_usize(i.s), status_label(i).into()]
            })
            .collect();
        out.push_str("Summary\n");
        out.push_str(&table(&["input", "b", "r", "s", "status"], &rows));
        out
    }
}

fn status_label(i: &InputIdentification) -> &'static str {
    use ptfm::identification::InputStatus::*;
    match i.status {
        Identified => "identified",
        ResidualWarning => "residual_warning",
        NoSignal => "no_signal",
        NoEffect => "no_effect",
        Failed => "failed",
    }
}

impl FitReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let how = if self.estimated { "maximum likelihood" } else { "fixed parameters" };
        let _ = writeln!(out, "Transfer function model ({how})\n");
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        if !self.warnings.is_empty() {
            out.push('\n');
        }
        let rows: Vec<Vec<String>> =
            self.structure.iter().map(|t| vec![t.input.clone(), t.r.to_string(), t.s.to_string(), t.delay.to_string()]).collect();
        out.push_str(&table(&["input", "r", "s", "b"], &rows));
        let _ = writeln!(out, "noise ARMA({},{})\n", self.noise.ar, self.noise.ma);

        let rows: Vec<Vec<String>> = self
            .coefficients
            .iter()
            .map(|c| vec![c.name.clone(), num(c.value), opt(c.se), opt(c.t_value)])
            .collect();
        out.push_str(&table(&["coefficient", "estimate", "se", "t"], &rows));
        out.push('\n');

        let level = num(self.confidence_level);
        let rows: Vec<Vec<String>> = self
            .relative_risks
            .iter()
            .map(|r| {
                vec![
                    r.input.clone(),
                    num(r.gain),
                    opt(r.gain_se),
                    num(r.delta_x),
                    num(r.g_delta_x),
                    num(r.rr),
                    opt(r.ci_low),
                    opt(r.ci_high),
                ]
            })
            .collect();
        let _ = writeln!(out, "Relative risks (confidence level {level})");
        out.push_str(&table(&["input", "gain", "gain se", "dx", "g*dx", "RR", "RR low", "RR high"], &rows));

        if let Some(s) = &self.statistics {
            let _ = writeln!(out);
            let rows = vec![
                vec!["loglik".into(), num(s.loglik)],
                vec!["AIC".into(), opt(s.aic)],
                vec!["BIC".into(), opt(s.bic)],
                vec!["parameters".into(), s.n_params.to_string()],
                vec!["observations used".into(), s.n_used.to_string()],
                vec!["first fitted index".into(), s.sample_start.to_string()],
            ];
            out.push_str(&table(&["statistic", "value"], &rows));
        }
        out
    }
}

//! JSON report schemas, curve CSVs, the gain table and a minimal SVG chart.
//!
//! Every report carries `spec_version`; readers accept any minor revision of
//! the same major and reject the rest.

use crate::alignment::{Aggregate, ScoreReport};
use crate::allocation::{AllocationCoefficients, AllocationResult, ComputeModel, Method, Verification};
use crate::fit::{AnyFit, FitForm, JointFit, PowerLawFit, Rescale, ShiftedPowerLawFit, XKind};
use crate::records::{Region, Target};
use crate::uncertainty::{BootstrapResult, CurveBand, Interval};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const SPEC_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: &str = "1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: missing spec_version")]
    MissingVersion { path: String },
    #[error("{path}: unsupported spec_version {found:?} (this build reads {SUPPORTED_MAJOR}.x)")]
    UnsupportedVersion { path: String, found: String },
    #[error("report is not a single-region power-law fit: {0}")]
    NotRegionFit(String),
    #[error("no fit report for region {0}")]
    MissingRegion(Region),
    #[error("fit report is missing parameter {0}")]
    MissingParam(&'static str),
    #[error("fit report for form {form} has no x_kind")]
    MissingXKind { form: FitForm },
}

pub fn check_spec_version(found: &str) -> bool {
    found.split('.').next() == Some(SUPPORTED_MAJOR)
}

/// Read a report, checking its version before decoding the rest.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: p.clone(), source })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| ReportError::Json { path: p.clone(), source })?;
    let version = value
        .get("spec_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ReportError::MissingVersion { path: p.clone() })?;
    if !check_spec_version(version) {
        return Err(ReportError::UnsupportedVersion {
            path: p,
            found: version.to_string(),
        });
    }
    serde_json::from_value(value).map_err(|source| ReportError::Json { path: p, source })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    fs::write(path, to_json(value)).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub spec_version: String,
    pub form: FitForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_kind: Option<XKind>,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    pub params: Params,
    pub objective: f64,
    pub init_used: Vec<f64>,
    pub degenerate: bool,
    pub converged: bool,
    pub rescale: Rescale,
    pub n_points: usize,
}

impl FitReport {
    pub fn new(fit: &AnyFit, x_kind: Option<XKind>, target: Target, rescale: Rescale, n_points: usize) -> Self {
        let params = match fit {
            AnyFit::Power(f) => Params { e: f.e, a: f.a, alpha: f.alpha, lambda: None, b: None, beta: None },
            AnyFit::Shifted(f) => Params {
                e: f.e,
                a: f.a,
                alpha: f.alpha,
                lambda: Some(f.lambda),
                b: None,
                beta: None,
            },
            AnyFit::Joint(f) => Params {
                e: f.e,
                a: f.a,
                alpha: f.alpha,
                lambda: None,
                b: Some(f.b),
                beta: Some(f.beta),
            },
        };
        FitReport {
            spec_version: SPEC_VERSION.to_string(),
            form: fit.form(),
            x_kind: if fit.form() == FitForm::Joint { None } else { x_kind },
            target,
            group: None,
            filter: None,
            params,
            objective: fit.objective(),
            init_used: fit.init_used().to_vec(),
            degenerate: fit.degenerate(),
            converged: fit.converged(),
            rescale,
            n_points,
        }
    }

    /// Rebuild the fit this report describes.
    pub fn to_fit(&self) -> Result<AnyFit, ReportError> {
        let p = &self.params;
        let x_scale = || {
            self.x_kind
                .map(|k| self.rescale.scale_for(k))
                .ok_or(ReportError::MissingXKind { form: self.form })
        };
        Ok(match self.form {
            FitForm::Power => AnyFit::Power(PowerLawFit {
                e: p.e,
                a: p.a,
                alpha: p.alpha,
                objective: self.objective,
                init_used: self.init_used.clone(),
                degenerate: self.degenerate,
                converged: self.converged,
                x_scale: x_scale()?,
            }),
            FitForm::Shifted => AnyFit::Shifted(ShiftedPowerLawFit {
                e: p.e,
                a: p.a,
                alpha: p.alpha,
                lambda: p.lambda.ok_or(ReportError::MissingParam("lambda"))?,
                objective: self.objective,
                init_used: self.init_used.clone(),
                degenerate: self.degenerate,
                converged: self.converged,
                x_scale: x_scale()?,
            }),
            FitForm::Joint => AnyFit::Joint(JointFit {
                e: p.e,
                a: p.a,
                alpha: p.alpha,
                b: p.b.ok_or(ReportError::MissingParam("B"))?,
                beta: p.beta.ok_or(ReportError::MissingParam("beta"))?,
                objective: self.objective,
                init_used: self.init_used.clone(),
                degenerate: self.degenerate,
                converged: self.converged,
                n_scale: self.rescale.n_scale,
                d_scale: self.rescale.d_scale,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    #[serde(flatten)]
    pub fit: FitReport,
    pub param_ci: BTreeMap<String, Interval>,
    pub curve_ci: Vec<CurveBand>,
    pub resamples: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub n_failed_resamples: usize,
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_by: Option<String>,
}

impl BootstrapReport {
    pub fn new(fit: FitReport, r: &BootstrapResult, warm_start: bool, cluster_by: Option<String>) -> Self {
        BootstrapReport {
            fit,
            param_ci: r.param_ci.clone(),
            curve_ci: r.curve_ci.clone(),
            resamples: r.resamples,
            ci_level: r.ci_level,
            seed: r.seed,
            n_failed_resamples: r.n_failed_resamples,
            warm_start,
            cluster_by,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Raw,
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeModelSummary {
    pub m: f64,
    pub n: f64,
    pub r2: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeModelReport {
    pub spec_version: String,
    #[serde(flatten)]
    pub model: ComputeModel,
}

impl ComputeModelReport {
    pub fn new(model: ComputeModel) -> Self {
        ComputeModelReport {
            spec_version: SPEC_VERSION.to_string(),
            model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub n_star: f64,
    pub d_star: f64,
    #[serde(rename = "predicted_L")]
    pub predicted_l: f64,
    pub log10_n_discrepancy: f64,
    pub grid_spacing_log10: f64,
    pub grid_points: usize,
    pub within_one_cell: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub spec_version: String,
    pub units: Units,
    #[serde(rename = "budget_C")]
    pub budget_c: f64,
    pub n_star: f64,
    pub d_star: f64,
    #[serde(rename = "predicted_L")]
    pub predicted_l: f64,
    #[serde(rename = "predicted_S")]
    pub predicted_s: f64,
    pub method: Method,
    pub coefficients: AllocationCoefficients,
    pub compute_model: ComputeModelSummary,
    pub rescale: Rescale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
}

impl AllocationReport {
    /// `result` and `verification` are in rescaled units; `units` picks what is written.
    pub fn new(
        result: &AllocationResult,
        coefficients: AllocationCoefficients,
        cm: &ComputeModel,
        units: Units,
        verification: Option<&Verification>,
    ) -> Self {
        let conv = |r: &AllocationResult| match units {
            Units::Raw => r.in_raw_units(cm),
            Units::Rescaled => *r,
        };
        let r = conv(result);
        AllocationReport {
            spec_version: SPEC_VERSION.to_string(),
            units,
            budget_c: r.budget_c,
            n_star: r.n_star,
            d_star: r.d_star,
            predicted_l: r.predicted_l,
            predicted_s: r.predicted_s,
            method: r.method,
            coefficients,
            compute_model: ComputeModelSummary {
                m: cm.m,
                n: cm.n,
                r2: cm.r2,
                n_points: cm.n_points,
            },
            rescale: Rescale {
                c_scale: cm.c_scale,
                n_scale: cm.n_scale,
                d_scale: cm.d_scale,
            },
            verification: verification.map(|v| {
                let b = conv(&v.brute_force);
                VerificationSummary {
                    n_star: b.n_star,
                    d_star: b.d_star,
                    predicted_l: b.predicted_l,
                    log10_n_discrepancy: v.log10_n_discrepancy,
                    grid_spacing_log10: v.grid_spacing_log10,
                    grid_points: v.grid_points,
                    within_one_cell: v.within_one_cell,
                }
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub spec_version: String,
    pub region: Region,
    pub raw: f64,
    pub ceiled: f64,
    pub ceiling: f64,
    pub n_repeats: usize,
    pub seed: u64,
    pub aggregate: Aggregate,
    /// `null` for neuroids never defined on a held-out split.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_neuroid: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl From<&ScoreReport> for ScoreFile {
    fn from(r: &ScoreReport) -> Self {
        ScoreFile {
            spec_version: SPEC_VERSION.to_string(),
            region: r.region,
            raw: r.raw,
            ceiled: r.ceiled,
            ceiling: r.ceiling,
            n_repeats: r.n_repeats,
            seed: r.seed,
            aggregate: r.aggregate,
            per_neuroid: r.per_neuroid.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub region: Region,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub gain: f64,
    pub degenerate: bool,
}

/// Per-region gains `A * 10^alpha`, sorted by group then gain (descending).
///
/// Every region in `require` must have a report.
pub fn gain_table(reports: &[FitReport], require: &[Region]) -> Result<Vec<GainRow>, ReportError> {
    let mut rows = Vec::with_capacity(reports.len());
    for r in reports {
        let Target::Region(region) = r.target else {
            return Err(ReportError::NotRegionFit(format!("target {}", r.target)));
        };
        let AnyFit::Power(fit) = r.to_fit()? else {
            return Err(ReportError::NotRegionFit(format!("form {}", r.form)));
        };
        let g = crate::fit::region_gain(&fit);
        rows.push(GainRow {
            region,
            group: r.group.clone(),
            e: fit.e,
            a: fit.a,
            alpha: fit.alpha,
            gain: g.gain,
            degenerate: g.degenerate,
        });
    }
    for &need in require {
        if !rows.iter().any(|r| r.region == need) {
            return Err(ReportError::MissingRegion(need));
        }
    }
    rows.sort_by(|x, y| {
        x.group
            .cmp(&y.group)
            .then(y.gain.total_cmp(&x.gain))
            .then(x.region.cmp(&y.region))
    });
    Ok(rows)
}

pub fn gain_table_csv(rows: &[GainRow]) -> String {
    let mut s = String::from("group,region,E,A,alpha,gain,degenerate\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.group.as_deref().unwrap_or(""),
            r.region,
            r.e,
            r.a,
            r.alpha,
            r.gain,
            r.degenerate
        );
    }
    s
}

/// Fixed-width text rendering for terminals.
pub fn gain_table_text(rows: &[GainRow]) -> String {
    let mut s = format!(
        "{:<10} {:<9} {:>9} {:>9} {:>9} {:>9}\n",
        "group", "region", "E", "A", "alpha", "gain"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:<9} {:>9.4} {:>9.4} {:>9.4} {:>9.4}{}",
            r.group.as_deref().unwrap_or("-"),
            r.region.to_string(),
            r.e,
            r.a,
            r.alpha,
            r.gain,
            if r.degenerate { "  (degenerate)" } else { "" }
        );
    }
    s
}

/// `x,L,S` samples of a fitted curve.
pub fn curve_csv(samples: &[(f64, f64)]) -> String {
    let mut s = String::from("x,L,S\n");
    for (x, l) in samples {
        let _ = writeln!(s, "{x},{l},{}", 1.0 - l);
    }
    s
}

/// A line chart on a log-x axis: the fitted curve, optional observed points
/// and an optional confidence band.
#[derive(Debug, Clone, Default)]
pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub curve: &'a [(f64, f64)],
    pub observed: &'a [(f64, f64)],
    /// `(x, lo, hi)`
    pub band: &'a [(f64, f64, f64)],
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 56.0;

pub fn svg_chart(c: &Chart<'_>) -> String {
    let xs = c
        .curve
        .iter()
        .map(|p| p.0)
        .chain(c.observed.iter().map(|p| p.0))
        .chain(c.band.iter().map(|p| p.0))
        .filter(|x| *x > 0.0)
        .map(f64::log10);
    let ys = c
        .curve
        .iter()
        .map(|p| p.1)
        .chain(c.observed.iter().map(|p| p.1))
        .chain(c.band.iter().flat_map(|p| [p.1, p.2]))
        .filter(|y| y.is_finite());
    let (x0, x1) = span(xs);
    let (y0, y1) = span(ys);
    let px = |x: f64| M + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle">{}</text>"#, W / 2.0, escape(c.title));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(c.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(c.y_label)
    );
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = px(10f64.powi(d));
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#,
            H - M + 16.0
        );
    }
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{y:.3}</text>"#,
            M - 6.0,
            py(y) + 4.0
        );
    }
    if !c.band.is_empty() {
        let mut d = String::new();
        for (i, (x, _, hi)) in c.band.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(*x), py(*hi));
        }
        for (x, lo, _) in c.band.iter().rev() {
            let _ = write!(d, "L{:.2} {:.2} ", px(*x), py(*lo));
        }
        let _ = writeln!(s, r##"<path d="{}Z" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##, d);
    }
    for (x, y) in c.observed {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#555"/>"##, px(*x), py(*y));
    }
    if !c.curve.is_empty() {
        let mut d = String::new();
        for (i, (x, y)) in c.curve.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(*x), py(*y));
        }
        let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, d.trim_end());
    }
    s.push_str("</svg>\n");
    s
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(a: f64, alpha: f64, region: Region) -> FitReport {
        let fit = AnyFit::Power(PowerLawFit {
            e: 0.5,
            a,
            alpha,
            objective: 0.0,
            init_used: vec![0.0, 0.0, 0.0],
            degenerate: a == 0.0,
            converged: true,
            x_scale: 1e13,
        });
        FitReport::new(&fit, Some(XKind::Flops), Target::Region(region), Rescale::default(), 10)
    }

    #[test]
    fn version_check() {
        assert!(check_spec_version("1.0"));
        assert!(check_spec_version("1.7"));
        assert!(!check_spec_version("2.0"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let mut r = power(1.0, 0.2, Region::V1);
        r.spec_version = "2.0".into();
        write_json(&p, &r).unwrap();
        assert!(matches!(read_json::<FitReport>(&p), Err(ReportError::UnsupportedVersion { .. })));
        r.spec_version = "1.3".into();
        write_json(&p, &r).unwrap();
        assert_eq!(read_json::<FitReport>(&p).unwrap(), r);
    }

    #[test]
    fn fit_report_round_trip() {
        let r = power(0.55, 0.16, Region::IT);
        let text = to_json(&r);
        assert!(text.contains("\"alpha\": 0.16"));
        assert!(!text.contains("lambda"));
        let back: FitReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let AnyFit::Power(f) = back.to_fit().unwrap() else { panic!() };
        assert_eq!(f.x_scale, 1e13);
    }

    #[test]
    fn gains_sorted_and_degenerate_listed() {
        let gains = [0.1, 0.2, 0.3, 0.4, 0.5];
        let reports: Vec<FitReport> = Region::ALL
            .iter()
            .zip(gains)
            .map(|(r, g)| power(g, 0.0, *r))
            .collect();
        let rows = gain_table(&reports, &Region::ALL).unwrap();
        let order: Vec<Region> = rows.iter().map(|r| r.region).collect();
        assert_eq!(
            order,
            vec![Region::Behavior, Region::IT, Region::V4, Region::V2, Region::V1]
        );
        let rows = gain_table(&[power(0.0, 0.3, Region::V4)], &[]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].gain, 0.0);
        assert!(rows[0].degenerate);
        assert!(matches!(
            gain_table(&[power(1.0, 0.3, Region::V4)], &[Region::IT]),
            Err(ReportError::MissingRegion(Region::IT))
        ));
    }

    #[test]
    fn svg_is_well_formed_and_deterministic() {
        let curve: Vec<(f64, f64)> = (0..20).map(|i| (10f64.powf(i as f64 / 4.0), 1.0 / (1.0 + i as f64))).collect();
        let band: Vec<(f64, f64, f64)> = curve.iter().map(|(x, y)| (*x, y - 0.01, y + 0.01)).collect();
        let c = Chart {
            title: "L vs C <test>",
            x_label: "C",
            y_label: "L",
            curve: &curve,
            observed: &curve[..3],
            band: &band,
        };
        let a = svg_chart(&c);
        assert_eq!(a, svg_chart(&c));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("&lt;test&gt;"));
        assert!(!a.contains("NaN"));
    }
}

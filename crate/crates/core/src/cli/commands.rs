use super::*;
use crate::alignment::io::{
    load_behavior, load_benchmark, write_labels_csv, write_matrix_csv, write_pattern_csv, BehaviorFiles,
};
use crate::alignment::{behavior_score, neural_score, NeuralConfig, ScoreReport};
use crate::allocation::{
    allocation_coefficients, fit_compute_model, optimal_allocation, verify_allocation, ComputeModel,
};
use crate::fit::{
    curve_points, fit_joint, fit_power_law, fit_shifted_power_law, joint_points, AnyFit, CurvePoint, FitConfig,
    FitInput, JointPoint, Rescale,
};
use crate::numerics::HuberParams;
use crate::records::{export, filter_for_fit, ingest as read_table, select_families, FilterRule, RunTable};
use crate::report::{
    curve_csv, gain_table, gain_table_csv, gain_table_text, read_json, svg_chart, to_json, AllocationReport,
    BootstrapReport, Chart, ComputeModelReport, FitReport, ScoreFile, SPEC_VERSION,
};
use crate::synth::{
    gen_behavior, gen_benchmark, gen_curve_points, logspace, noise_for_target_r, run_table, runs_for_curve,
    runs_for_joint, runs_for_regions, scale_nd, scale_x, subsampling_grid, BehaviorGenerator, BenchmarkGenerator,
    CurveGenerator, CurveSpec,
};
use crate::uncertainty::{bootstrap_fit, BootstrapConfig, BootstrapData};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

const CURVE_SAMPLES: usize = 100;

pub(super) struct Ctx {
    pub seed: u64,
    write_log: bool,
    argv: Vec<String>,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    pub fn new(seed: u64, write_log: bool, argv: Vec<String>) -> Self {
        Ctx {
            seed,
            write_log,
            argv,
            outputs: Vec::new(),
        }
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        fs::write(path, contents).map_err(|e| io_err(path, e))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn record(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Sidecar log next to the first output.
    pub fn finish(self) -> Result<(), CliError> {
        if !self.write_log {
            return Ok(());
        }
        let Some(primary) = self.outputs.first() else { return Ok(()) };
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut log = format!(
            "scalefit {}\nfinished_unix_time: {secs}\nseed: {}\ncommand: {}\noutputs:\n",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.argv.join(" ")
        );
        for o in &self.outputs {
            log.push_str(&format!("  {}\n", o.display()));
        }
        let mut name = primary.as_os_str().to_owned();
        name.push(".log");
        let path = PathBuf::from(name);
        fs::write(&path, log).map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_table(a: &TableArgs) -> Result<RunTable, CliError> {
    let format = a.format.map(Format::from).unwrap_or_else(|| Format::from_path(&a.input));
    let mut t = read_table(&a.input, format)?;
    if a.average_seeds {
        t = t.average_seeds();
    }
    if let Some(rule) = &a.filter {
        t = filter_for_fit(&t, &FilterRule::by_name(rule)?);
    }
    if !a.families.is_empty() {
        t = select_families(&t, &a.families);
    }
    Ok(t)
}

fn rescale(s: &ScaleArgs) -> Result<Rescale, CliError> {
    for (name, v) in [("c-scale", s.c_scale), ("n-scale", s.n_scale), ("d-scale", s.d_scale)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(usage(format!("--{name} must be positive, got {v}")));
        }
    }
    Ok(Rescale {
        c_scale: s.c_scale,
        n_scale: s.n_scale,
        d_scale: s.d_scale,
    })
}

fn fit_config(c: &CurveArgs) -> Result<FitConfig, CliError> {
    let huber = HuberParams::new(c.delta).map_err(|e| usage(format!("--delta: {e}")))?;
    Ok(FitConfig {
        huber,
        rescale: rescale(&c.scale)?,
        freeze_lambda: c.freeze_lambda,
        ..Default::default()
    })
}

fn require_x(c: &CurveArgs) -> Result<Option<XKind>, CliError> {
    match (c.form, c.x) {
        (FitForm::Joint, _) => Ok(None),
        (_, Some(x)) => Ok(Some(x)),
        (_, None) => Err(usage(format!("--x is required for --form {}", c.form))),
    }
}

enum Points {
    Curve(Vec<CurvePoint>, XKind),
    Joint(Vec<JointPoint>),
}

impl Points {
    fn len(&self) -> usize {
        match self {
            Points::Curve(p, _) => p.len(),
            Points::Joint(p) => p.len(),
        }
    }

    fn data(&self) -> BootstrapData<'_> {
        match self {
            Points::Curve(p, k) => BootstrapData::Curve { points: p, x_kind: *k },
            Points::Joint(p) => BootstrapData::Joint(p),
        }
    }
}

fn points_for(table: &RunTable, c: &CurveArgs) -> Result<Points, CliError> {
    if table.is_empty() {
        return Err(usage("no runs left after filtering"));
    }
    Ok(match require_x(c)? {
        Some(x) => Points::Curve(curve_points(table, x, c.target)?, x),
        None => Points::Joint(joint_points(table, c.target)?),
    })
}

fn fit_points(points: &Points, form: FitForm, cfg: &FitConfig) -> Result<AnyFit, CliError> {
    Ok(match (points, form) {
        (Points::Curve(p, k), FitForm::Power) => AnyFit::Power(fit_power_law(p, cfg, *k)?),
        (Points::Curve(p, k), FitForm::Shifted) => AnyFit::Shifted(fit_shifted_power_law(p, cfg, *k)?),
        (Points::Joint(p), FitForm::Joint) => AnyFit::Joint(fit_joint(p, cfg)?),
        _ => return Err(usage("form and x do not match")),
    })
}

fn fit_report(fit: &AnyFit, points: &Points, c: &CurveArgs, t: &TableArgs, cfg: &FitConfig) -> FitReport {
    let x = match points {
        Points::Curve(_, k) => Some(*k),
        Points::Joint(_) => None,
    };
    let mut r = FitReport::new(fit, x, c.target, cfg.rescale, points.len());
    r.group = c.group.clone();
    r.filter = t.filter.clone();
    r
}

/// Raw-unit x values to evaluate the curve at, spanning the data.
fn curve_grid(points: &Points) -> Vec<FitInput> {
    match points {
        Points::Curve(p, _) => {
            let (lo, hi) = positive_span(p.iter().map(|q| q.x));
            logspace(lo, hi, CURVE_SAMPLES).into_iter().map(|x| FitInput::X { x }).collect()
        }
        Points::Joint(p) => {
            let (lo, hi) = positive_span(p.iter().map(|q| q.n));
            let d = median(p.iter().map(|q| q.d).collect());
            logspace(lo, hi, CURVE_SAMPLES)
                .into_iter()
                .map(|n| FitInput::ND { n, d })
                .collect()
        }
    }
}

fn positive_span(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs.filter(|x| *x > 0.0) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    (lo.log10(), hi.log10())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn grid_x(at: &FitInput) -> f64 {
    match *at {
        FitInput::X { x } => x,
        FitInput::ND { n, .. } => n,
    }
}

fn predict_raw(fit: &AnyFit, at: FitInput) -> Option<f64> {
    let p = match (fit, at) {
        (AnyFit::Power(f), FitInput::X { x }) => f.predict_raw(x),
        (AnyFit::Shifted(f), FitInput::X { x }) => f.predict_raw(x),
        (AnyFit::Joint(f), FitInput::ND { n, d }) => f.predict_raw(n, d),
        _ => return None,
    };
    p.ok().map(|p| p.l)
}

fn observed(points: &Points) -> Vec<(f64, f64)> {
    match points {
        Points::Curve(p, _) => p.iter().map(|q| (q.x, q.l)).collect(),
        Points::Joint(p) => p.iter().map(|q| (q.n, q.l)).collect(),
    }
}

fn emit_curve(
    ctx: &mut Ctx,
    prefix: &Path,
    fit: &AnyFit,
    points: &Points,
    band: &[(f64, f64, f64)],
    title: &str,
) -> Result<(), CliError> {
    let grid = curve_grid(points);
    let samples: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|at| predict_raw(fit, *at).map(|l| (grid_x(at), l)))
        .collect();
    let x_label = match points {
        Points::Curve(_, k) => k.to_string(),
        Points::Joint(_) => "params (D at its median)".to_string(),
    };
    let obs = observed(points);
    let svg = svg_chart(&Chart {
        title,
        x_label: &x_label,
        y_label: "misalignment L",
        curve: &samples,
        observed: &obs,
        band,
    });
    ctx.write(&with_suffix(prefix, ".csv"), &curve_csv(&samples))?;
    ctx.write(&with_suffix(prefix, ".svg"), &svg)
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub(super) fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> Result<(), CliError> {
    let t = load_table(&a.table)?;
    let mut families: Vec<&str> = t.rows.iter().map(|r| r.family.as_str()).collect();
    families.sort_unstable();
    families.dedup();
    println!("runs: {}", t.len());
    println!("families: {}", families.join(", "));
    if let (Some(lo), Some(hi)) = (
        t.rows.iter().map(|r| r.flops).min_by(f64::total_cmp),
        t.rows.iter().map(|r| r.flops).max_by(f64::total_cmp),
    ) {
        println!("flops: {lo:e} .. {hi:e}");
    }
    if let Some(out) = &a.output {
        export(&t, out, Format::from_path(out))?;
        ctx.record(out);
    }
    Ok(())
}

pub(super) fn fit(ctx: &mut Ctx, a: &FitArgs) -> Result<(), CliError> {
    let cfg = fit_config(&a.curve)?;
    let table = load_table(&a.table)?;
    let points = points_for(&table, &a.curve)?;
    let fit = fit_points(&points, a.curve.form, &cfg)?;
    let report = fit_report(&fit, &points, &a.curve, &a.table, &cfg);
    ctx.write(&a.output, &to_json(&report))?;
    println!(
        "{} fit on {} runs: {}",
        report.form,
        report.n_points,
        fit.params()
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if report.degenerate {
        log::warn!("fit is degenerate (no usable power-law component)");
    }
    if let Some(prefix) = &a.emit_curve {
        let title = format!("{} fit, target {}", report.form, report.target);
        emit_curve(ctx, prefix, &fit, &points, &[], &title)?;
    }
    Ok(())
}

pub(super) fn allocate(ctx: &mut Ctx, a: &AllocateArgs) -> Result<(), CliError> {
    if !(a.budget > 0.0 && a.budget.is_finite()) {
        return Err(usage(format!("--budget must be positive, got {}", a.budget)));
    }
    let report: FitReport = read_json(&a.fit)?;
    let AnyFit::Joint(fit) = report.to_fit()? else {
        return Err(usage(format!("{} holds a {} fit; allocation needs a joint fit", a.fit.display(), report.form)));
    };
    let rs = report.rescale;
    let cm = match (&a.compute_model, &a.fit_compute_model, a.m, a.n) {
        (Some(p), _, _, _) => read_json::<ComputeModelReport>(p)?.model,
        (None, Some(p), _, _) => {
            let t = read_table(p, Format::from_path(p))?;
            let cm = fit_compute_model(&t, &rs)?;
            if let Some(out) = &a.compute_model_out {
                ctx.write(out, &to_json(&ComputeModelReport::new(cm)))?;
            }
            cm
        }
        (None, None, Some(m), Some(n)) => {
            if !(m > 0.0 && n > 0.0) {
                return Err(usage("--m and --n must be positive"));
            }
            // C = m (N D)^n in raw counts becomes m' (N~ D~)^n with
            // m' = m (n_scale d_scale)^n / c_scale.
            let mut cm = ComputeModel::fixed(m * (rs.n_scale * rs.d_scale).powf(n) / rs.c_scale, n);
            cm.c_scale = rs.c_scale;
            cm.n_scale = rs.n_scale;
            cm.d_scale = rs.d_scale;
            cm
        }
        _ => return Err(usage("give one of --compute-model, --fit-compute-model or --m/--n")),
    };
    let units: Units = a.units.into();
    let budget = match units {
        Units::Raw => a.budget / cm.c_scale,
        Units::Rescaled => a.budget,
    };
    let coefficients = allocation_coefficients(&fit)?;
    let result = optimal_allocation(&fit, &cm, budget)?;
    let verification = if a.verify {
        Some(verify_allocation(&fit, &cm, &result, a.grid_points)?)
    } else {
        None
    };
    let out = AllocationReport::new(&result, coefficients, &cm, units, verification.as_ref());
    // Written first so the output is the primary file of the sidecar log.
    ctx.outputs.insert(0, a.output.clone());
    fs::write(&a.output, to_json(&out)).map_err(|e| io_err(&a.output, e))?;
    println!(
        "N* = {:e}, D* = {:e}, predicted L = {:.6}",
        out.n_star, out.d_star, out.predicted_l
    );
    if let Some(v) = &verification {
        println!(
            "brute force: |dlog10 N| = {:.3e} (grid spacing {:.3e})",
            v.log10_n_discrepancy, v.grid_spacing_log10
        );
        if !v.within_one_cell {
            return Err(CliError::Verification(format!(
                "closed form and brute force differ by {:.3e} decades, more than one grid cell",
                v.log10_n_discrepancy
            )));
        }
    }
    Ok(())
}

pub(super) fn bootstrap(ctx: &mut Ctx, a: &BootstrapArgs) -> Result<(), CliError> {
    if a.resamples < 2 {
        return Err(usage(format!("--resamples must be at least 2, got {}", a.resamples)));
    }
    if !(a.ci > 0.0 && a.ci < 1.0) {
        return Err(usage(format!("--ci must lie in (0, 1), got {}", a.ci)));
    }
    let cfg = fit_config(&a.curve)?;
    let table = load_table(&a.table)?;
    let points = points_for(&table, &a.curve)?;
    let mut grid = curve_grid(&points);
    if a.curve_points != CURVE_SAMPLES {
        grid = match &points {
            Points::Curve(p, _) => {
                let (lo, hi) = positive_span(p.iter().map(|q| q.x));
                logspace(lo, hi, a.curve_points).into_iter().map(|x| FitInput::X { x }).collect()
            }
            Points::Joint(p) => {
                let (lo, hi) = positive_span(p.iter().map(|q| q.n));
                let d = median(p.iter().map(|q| q.d).collect());
                logspace(lo, hi, a.curve_points)
                    .into_iter()
                    .map(|n| FitInput::ND { n, d })
                    .collect()
            }
        };
    }
    let clusters = a.cluster_by.map(|c| {
        table
            .rows
            .iter()
            .map(|r| match c {
                ClusterBy::Family => r.family.clone(),
                ClusterBy::Arch => r.arch.clone(),
                ClusterBy::Dataset => r.dataset.clone(),
            })
            .collect()
    });
    let bs = BootstrapConfig {
        resamples: a.resamples,
        ci_level: a.ci,
        seed: ctx.seed,
        curve_grid: grid,
        warm_start: a.warm_start,
        clusters,
    };
    let r = bootstrap_fit(points.data(), a.curve.form, &cfg, &bs)?;
    let fit_rep = fit_report(&r.point_estimate, &points, &a.curve, &a.table, &cfg);
    let cluster_name = a.cluster_by.map(|c| {
        match c {
            ClusterBy::Family => "family",
            ClusterBy::Arch => "arch",
            ClusterBy::Dataset => "dataset",
        }
        .to_string()
    });
    let report = BootstrapReport::new(fit_rep, &r, a.warm_start, cluster_name);
    ctx.write(&a.output, &to_json(&report))?;
    for (name, iv) in &r.param_ci {
        println!("{name}: [{:.6}, {:.6}]", iv.lo, iv.hi);
    }
    if r.n_failed_resamples > 0 {
        println!("{} resamples failed and were excluded", r.n_failed_resamples);
    }
    if let Some(prefix) = &a.emit_curve {
        let band: Vec<(f64, f64, f64)> = r.curve_ci.iter().map(|b| (grid_x(&b.at), b.lo_l, b.hi_l)).collect();
        let title = format!("{} fit with {:.0}% bootstrap band", report.fit.form, a.ci * 100.0);
        emit_curve(ctx, prefix, &r.point_estimate, &points, &band, &title)?;
    }
    Ok(())
}

fn finish_score(ctx: &mut Ctx, report: &ScoreReport, output: &Path, append: &AppendArgs) -> Result<(), CliError> {
    ctx.write(output, &to_json(&ScoreFile::from(report)))?;
    println!(
        "{}: raw {:.6}, ceiled {:.6} (ceiling {})",
        report.region, report.raw, report.ceiled, report.ceiling
    );
    if let (Some(path), Some(run_id)) = (&append.append_to, &append.run_id) {
        let format = Format::from_path(path);
        let mut t = read_table(path, format)?;
        t.set_score(run_id, report.region, report.ceiled)?;
        export(&t, path, format)?;
        ctx.record(path);
    }
    Ok(())
}

pub(super) fn score_neural(ctx: &mut Ctx, a: &NeuralArgs) -> Result<(), CliError> {
    let data = load_benchmark(&a.activations, &a.recordings, a.ceiling, a.region)?;
    let cfg = NeuralConfig {
        repeats: a.repeats,
        train_fraction: a.train_fraction,
        seed: ctx.seed,
        ridge: a.ridge,
        aggregate: a.aggregate,
    };
    let report = neural_score(&data, &cfg)?;
    finish_score(ctx, &report, &a.output, &a.append)
}

pub(super) fn score_behavior(ctx: &mut Ctx, a: &BehaviorArgs) -> Result<(), CliError> {
    let files = BehaviorFiles {
        train_features: &a.train_features,
        train_labels: &a.train_labels,
        test_features: &a.test_features,
        test_labels: &a.test_labels,
        pattern: &a.pattern,
    };
    let data = load_behavior(&files, a.ceiling)?;
    let report = behavior_score(&data, ctx.seed)?;
    finish_score(ctx, &report, &a.output, &a.append)
}

#[derive(Serialize)]
struct Truth<'a, T: Serialize> {
    spec_version: &'static str,
    seed: u64,
    #[serde(flatten)]
    generator: &'a T,
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| usage(format!("csv write failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn table_csv(t: &RunTable) -> Result<String, CliError> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub(super) fn simulate_curve(ctx: &mut Ctx, a: &SimCurveArgs) -> Result<(), CliError> {
    let rs = rescale(&a.scale)?;
    let spec = match a.form {
        FitForm::Power => CurveSpec::Power { e: a.e, a: a.a, alpha: a.alpha },
        FitForm::Shifted => CurveSpec::Shifted {
            e: a.e,
            a: a.a,
            alpha: a.alpha,
            lambda: a.lambda.ok_or_else(|| usage("--lambda is required for --form shifted"))?,
        },
        FitForm::Joint => CurveSpec::Joint {
            e: a.e,
            a: a.a,
            alpha: a.alpha,
            b: a.b.ok_or_else(|| usage("--B is required for --form joint"))?,
            beta: a.beta.ok_or_else(|| usage("--beta is required for --form joint"))?,
        },
    };
    let mut g = CurveGenerator {
        spec,
        x_grid: vec![],
        n_grid: vec![],
        d_grid: vec![],
        noise_sigma_log: a.sigma,
        seed: ctx.seed,
    };
    let runs = if spec.is_joint() {
        g.n_grid = logspace(a.lo, a.hi, a.points);
        g.d_grid = match a.subsampling {
            Some(k) => subsampling_grid(k).iter().map(|d| d / rs.d_scale).collect(),
            None => logspace(a.d_lo, a.d_hi, a.d_points),
        };
        let c = gen_curve_points(&g)?;
        runs_for_joint(&scale_nd(c.joint(), rs.n_scale, rs.d_scale))?
    } else {
        g.x_grid = logspace(a.lo, a.hi, a.points);
        let c = gen_curve_points(&g)?;
        runs_for_curve(&scale_x(c.curve(), rs.scale_for(a.x)), a.x)?
    };
    let table = run_table(&runs, &a.family, &a.output.display().to_string())?;
    ctx.write(&a.output, &table_csv(&table)?)?;
    if let Some(t) = &a.truth {
        let truth = Truth {
            spec_version: SPEC_VERSION,
            seed: ctx.seed,
            generator: &g,
        };
        ctx.write(t, &to_json(&truth))?;
    }
    println!("wrote {} runs to {}", table.len(), a.output.display());
    Ok(())
}

fn parse_region_spec(s: &str) -> Result<(Region, CurveSpec), CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(format!("--region expects REGION:E:A:alpha, got {s:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let region: Region = parts[0].parse().map_err(|_| bad())?;
    let num = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    Ok((region, CurveSpec::Power { e: num(1)?, a: num(2)?, alpha: num(3)? }))
}

pub(super) fn simulate_regions(ctx: &mut Ctx, a: &SimRegionsArgs) -> Result<(), CliError> {
    let curves = a.regions.iter().map(|s| parse_region_spec(s)).collect::<Result<Vec<_>, _>>()?;
    let flops: Vec<f64> = logspace(a.lo, a.hi, a.points).iter().map(|x| x * a.c_scale).collect();
    let runs = runs_for_regions(&curves, &flops, a.c_scale, a.sigma, ctx.seed)?;
    let table = run_table(&runs, "Synthetic", &a.output.display().to_string())?;
    ctx.write(&a.output, &table_csv(&table)?)?;
    println!("wrote {} runs to {}", table.len(), a.output.display());
    Ok(())
}

pub(super) fn simulate_benchmark(ctx: &mut Ctx, a: &SimBenchmarkArgs) -> Result<(), CliError> {
    let noise = match (a.noise, a.target_r) {
        (Some(s), None) => s,
        (None, Some(r)) if r > 0.0 && r <= 1.0 => noise_for_target_r(r),
        (None, Some(r)) => return Err(usage(format!("--target-r must lie in (0, 1], got {r}"))),
        _ => 0.0,
    };
    let g = BenchmarkGenerator {
        n_stimuli: a.stimuli,
        n_features: a.features,
        n_neuroids: a.neuroids,
        noise_sigma: noise,
        seed: ctx.seed,
        ceiling: a.ceiling,
        region: a.region,
    };
    let b = gen_benchmark(&g)?;
    let ids = &b.data.stimulus_ids;
    let act = csv_string(|w| write_matrix_csv(w, ids, &b.data.activations, "f"))?;
    let rec = csv_string(|w| write_matrix_csv(w, ids, &b.data.recordings, "n"))?;
    ctx.write(&a.out_dir.join("activations.csv"), &act)?;
    ctx.write(&a.out_dir.join("recordings.csv"), &rec)?;
    #[derive(Serialize)]
    struct BenchTruth<'a> {
        generator: &'a BenchmarkGenerator,
        theoretical_r: &'a [f64],
    }
    let truth = Truth {
        spec_version: SPEC_VERSION,
        seed: ctx.seed,
        generator: &BenchTruth {
            generator: &g,
            theoretical_r: &b.theoretical_r,
        },
    };
    ctx.write(&a.out_dir.join("truth.json"), &to_json(&truth))?;
    println!("wrote benchmark to {} (noise sigma {noise})", a.out_dir.display());
    Ok(())
}

pub(super) fn simulate_behavior(ctx: &mut Ctx, a: &SimBehaviorArgs) -> Result<(), CliError> {
    let g = BehaviorGenerator {
        n_classes: a.classes,
        n_features: a.features,
        train_per_class: a.train_per_class,
        test_per_class: a.test_per_class,
        separation: a.separation,
        pattern_noise: a.pattern_noise,
        ceiling: a.ceiling,
        seed: ctx.seed,
    };
    let b = gen_behavior(&g)?;
    let d = &b.data;
    let dir = &a.out_dir;
    let names = &d.class_names;
    let files = [
        ("train_features.csv", csv_string(|w| write_matrix_csv(w, &b.train_ids, &d.train_features, "f"))?),
        ("train_labels.csv", csv_string(|w| write_labels_csv(w, &b.train_ids, &d.train_labels, names))?),
        ("test_features.csv", csv_string(|w| write_matrix_csv(w, &b.test_ids, &d.test_features, "f"))?),
        ("test_labels.csv", csv_string(|w| write_labels_csv(w, &b.test_ids, &d.test_labels, names))?),
        (
            "pattern.csv",
            csv_string(|w| write_pattern_csv(w, &b.test_ids, &d.test_labels, names, &d.primate_pattern))?,
        ),
    ];
    for (name, body) in &files {
        ctx.write(&dir.join(name), body)?;
    }
    #[derive(Serialize)]
    struct BehaviorTruth<'a> {
        generator: &'a BehaviorGenerator,
        analytic_r: f64,
    }
    let truth = Truth {
        spec_version: SPEC_VERSION,
        seed: ctx.seed,
        generator: &BehaviorTruth {
            generator: &g,
            analytic_r: b.analytic_r,
        },
    };
    ctx.write(&dir.join("truth.json"), &to_json(&truth))?;
    println!("wrote behavioral task to {}", dir.display());
    Ok(())
}

pub(super) fn report(ctx: &mut Ctx, a: &ReportArgs) -> Result<(), CliError> {
    let reports = a
        .fits
        .iter()
        .map(|p| read_json::<FitReport>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = gain_table(&reports, &a.require)?;
    let body = match a.format {
        TableFormat::Text => gain_table_text(&rows),
        TableFormat::Csv => gain_table_csv(&rows),
        TableFormat::Json => {
            #[derive(Serialize)]
            struct GainReport<'a> {
                spec_version: &'static str,
                rows: &'a [crate::report::GainRow],
            }
            to_json(&GainReport {
                spec_version: SPEC_VERSION,
                rows: &rows,
            })
        }
    };
    match &a.output {
        Some(p) => ctx.write(p, &body)?,
        None => print!("{body}"),
    }
    Ok(())
}

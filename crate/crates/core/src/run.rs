//! Orchestration of the three run modes and the artifacts they write.
//!
//! Every artifact is a pure function of the configuration (and seed), so
//! repeated runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Format, Mode, RunSpec};
use crate::curvature::{expansion_h0, mean_curvature, schwarzschild_sphere_curvature, ExpansionForm};
use crate::error::Result;
use crate::foliation::{sweep_with_policy, FailurePolicy, FoliationRecord, LeafFailure, Schedule};
use crate::metric::{least_squares_slope, MetricSpec, Perturbation};
use crate::solver::{center_residual, SolverOptions};
use crate::sphere_field::{radial_graph, SphereGraph, SphereGrid};
use crate::verification::{kernel_bound_integral, kernel_bound_samples, uniqueness_report, UniquenessReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct LeafJson {
    r: f64,
    tau: [f64; 3],
    phi_coeffs: Vec<f64>,
    target_h: f64,
    residual_sup: f64,
    iterations: usize,
    diam: f64,
    diam_metric_factor: f64,
    diam_g: f64,
    sup_a: f64,
    area: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    n: usize,
    mass_sigma: f64,
    perturbation: &'a Perturbation,
    r_min: f64,
    schedule: &'a Schedule,
    solver: &'a SolverOptions,
    p0: [f64; 3],
    leaves: Vec<LeafJson>,
    failures: &'a [LeafFailure],
    nesting: &'a Option<crate::foliation::NestingReport>,
    diagnostics: &'a [crate::foliation::LeafDiagnostics],
    trends: &'a [crate::foliation::TrendReport],
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub passed: bool,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    fs::create_dir_all(&spec.out_dir)?;
    match spec.mode {
        Mode::Sweep => run_sweep(spec).map(|(outcome, _)| outcome),
        Mode::Verify => run_verify(spec),
        Mode::OracleCheck => run_oracles(spec),
    }
}

fn sweep_record(spec: &RunSpec) -> FoliationRecord {
    let mut record = match sweep_with_policy(&spec.metric, &spec.schedule, &spec.solver, FailurePolicy::Skip) {
        Ok(record) => record,
        Err(e) => {
            let mut partial = *e.partial;
            partial.failures.push(LeafFailure { r: f64::NAN, message: e.source.to_string() });
            partial
        }
    };
    let p0 = Vector3::from(spec.p0);
    if p0 != Vector3::zeros() {
        if let Err(e) = record.analyze(&p0) {
            record.failures.push(LeafFailure { r: f64::NAN, message: e.to_string() });
        }
    }
    record
}

fn run_sweep(spec: &RunSpec) -> Result<(RunOutcome, FoliationRecord)> {
    let record = sweep_record(spec);
    let mut artifacts = Vec::new();
    if spec.formats.contains(&Format::Csv) {
        artifacts.push(write_leaves_csv(spec, &record)?);
        artifacts.extend(write_plotdata(spec, &record)?);
    }
    if spec.formats.contains(&Format::Json) {
        let path = spec.out_dir.join("report.json");
        write_json(&path, &report_json(spec, &record))?;
        artifacts.push(path);
    }
    let exit_code = if record.failures.is_empty() && !record.leaves.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
    let summary = format!("{} leaves converged, {} failures", record.leaves.len(), record.failures.len());
    Ok((RunOutcome { exit_code, artifacts, summary }, record))
}

fn report_json<'a>(spec: &'a RunSpec, record: &'a FoliationRecord) -> ReportJson<'a> {
    let leaves = record
        .leaves
        .iter()
        .map(|l| LeafJson {
            r: l.r,
            tau: l.tau.into(),
            phi_coeffs: l.phi.coeffs().to_vec(),
            target_h: l.target_h,
            residual_sup: l.residual_sup,
            iterations: l.iterations,
            diam: l.curvature.diam,
            diam_metric_factor: l.curvature.diam_metric_factor,
            diam_g: l.curvature.diam_g(),
            sup_a: l.curvature.sup_a,
            area: l.curvature.area,
        })
        .collect();
    ReportJson {
        n: spec.metric.n(),
        mass_sigma: spec.metric.sigma(),
        perturbation: spec.metric.perturbation(),
        r_min: spec.metric.r_min(),
        schedule: &spec.schedule,
        solver: &spec.solver,
        p0: spec.p0,
        leaves,
        failures: &record.failures,
        nesting: &record.nesting,
        diagnostics: &record.diagnostics,
        trends: &record.trends,
    }
}

const LEAF_COLUMNS: [&str; 17] = [
    "r",
    "tau_1",
    "tau_2",
    "tau_3",
    "phi_sup",
    "phi_const",
    "target_H",
    "residual_sup",
    "diam",
    "sup_A",
    "balance_ratio",
    "weak_balance_ratio",
    "regularity_product",
    "pinch_ratio",
    "nesting_margin_to_prev",
    "iterations",
    "diam_metric_factor",
];

fn write_leaves_csv(spec: &RunSpec, record: &FoliationRecord) -> Result<PathBuf> {
    let path = spec.out_dir.join("leaves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(LEAF_COLUMNS)?;
    for (k, leaf) in record.leaves.iter().enumerate() {
        let d = record.diagnostics.get(k);
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let margin = if k == 0 {
            None
        } else {
            record.nesting.as_ref().and_then(|n| n.pairs.get(k - 1)).map(|p| p.min_gap)
        };
        w.write_record([
            num(leaf.r),
            num(leaf.tau.x),
            num(leaf.tau.y),
            num(leaf.tau.z),
            num(leaf.phi.sup_norm()),
            num(leaf.phi.coeffs()[0] / (4.0 * std::f64::consts::PI).sqrt()),
            num(leaf.target_h),
            num(leaf.residual_sup),
            num(leaf.curvature.diam),
            num(leaf.curvature.sup_a),
            opt(d.map(|d| d.balance_ratio)),
            opt(d.map(|d| d.weak_balance_ratio)),
            opt(d.map(|d| d.regularity_product)),
            opt(d.map(|d| d.pinch_ratio)),
            opt(margin),
            leaf.iterations.to_string(),
            num(leaf.curvature.diam_metric_factor),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// Radial profile `φ̃(u)` of every leaf on its grid.
fn write_plotdata(spec: &RunSpec, record: &FoliationRecord) -> Result<Vec<PathBuf>> {
    let dir = spec.out_dir.join("plotdata");
    fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for (k, leaf) in record.leaves.iter().enumerate() {
        let Ok(profile) = leaf.graph(spec.metric.n()).and_then(|g| radial_graph(&g)) else {
            continue;
        };
        let grid = profile.grid();
        let path = dir.join(format!("leaf_{k:03}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["theta", "lambda", "u_1", "u_2", "u_3", "radius"])?;
        for j in 0..grid.nlat() {
            for l in 0..grid.nlon() {
                let u = grid.point(j, l);
                w.write_record([
                    num(grid.theta(j)),
                    num(grid.lambda(l)),
                    num(u.x),
                    num(u.y),
                    num(u.z),
                    num(profile.values()[grid.node(j, l)]),
                ])?;
            }
        }
        w.flush()?;
        out.push(path);
    }
    Ok(out)
}

fn run_verify(spec: &RunSpec) -> Result<RunOutcome> {
    let (mut outcome, record) = run_sweep(spec)?;
    let basin = spec.basin_config().map(|c| (spec.basin_r, c));
    let report = uniqueness_report(&spec.metric, &record, basin, &spec.solver)?;
    let path = spec.out_dir.join("uniqueness.json");
    write_json(&path, &report)?;
    outcome.artifacts.push(path);
    if !verification_passed(&report) {
        outcome.exit_code = EXIT_PARTIAL;
    }
    outcome.summary.push_str(&format!(
        "; basin {}/{} returned",
        report.basin.as_ref().map_or(0, |b| b.returned),
        report.basin.as_ref().map_or(0, |b| b.trials.len())
    ));
    Ok(outcome)
}

fn verification_passed(report: &UniquenessReport) -> bool {
    report.leaves.iter().all(|l| l.r_of_h_error.is_some_and(|e| e <= 1e-8))
        && report.kernel_bound_table.iter().all(|row| row.holds)
        && report.basin.as_ref().is_none_or(|b| b.returned == b.trials.len())
}

fn run_oracles(spec: &RunSpec) -> Result<RunOutcome> {
    let checks = oracle_suite(spec.solver.lmax)?;
    let path = spec.out_dir.join("oracle.json");
    write_json(&path, &checks)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    Ok(RunOutcome {
        exit_code: if failed == 0 { EXIT_OK } else { EXIT_PARTIAL },
        artifacts: vec![path],
        summary: format!("{} of {} oracle checks passed", checks.len() - failed, checks.len()),
    })
}

fn sup_deviation(spec: &MetricSpec, graph: &SphereGraph, f: impl Fn(&Vector3<f64>) -> f64) -> Result<f64> {
    let report = mean_curvature(spec, graph)?;
    let grid = graph.grid();
    Ok(grid
        .points()
        .iter()
        .zip(report.h.values())
        .map(|(x, h)| (h - f(x)).abs())
        .fold(0.0, f64::max))
}

/// Closed-form checks of the curvature engine: flat exactness, the
/// Schwarzschild sphere curvature, the order of the expansion remainder,
/// the kernel coefficient and the kernel integral bound.
pub fn oracle_suite(lmax: usize) -> Result<Vec<OracleCheck>> {
    let grid = SphereGrid::shared_default(lmax);
    let mut checks = Vec::new();

    let flat = MetricSpec::flat();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let r = rng.random_range(0.01..0.2);
        let tau = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            * rng.random_range(0.0..0.5);
        let graph = SphereGraph::round(grid.clone(), r, tau)?;
        worst = worst.max(sup_deviation(&flat, &graph, |_| 2.0)?);
    }
    checks.push(OracleCheck { name: "flat_exactness".into(), value: worst, tolerance: "< 1e-8".into(), passed: worst < 1e-8 });

    for sigma in [1.0, -0.5] {
        let spec = MetricSpec::schwarzschild(sigma)?;
        let mut worst = 0.0f64;
        for r in [0.1, 0.05, 0.025] {
            let graph = SphereGraph::round(grid.clone(), r, Vector3::zeros())?;
            let f = schwarzschild_sphere_curvature(2, sigma, r);
            worst = worst.max(sup_deviation(&spec, &graph, |_| f)?);
        }
        checks.push(OracleCheck {
            name: format!("schwarzschild_closed_form_sigma_{sigma}"),
            value: worst,
            tolerance: "< 1e-6".into(),
            passed: worst < 1e-6,
        });
    }

    let spec = MetricSpec::schwarzschild(1.0)?;
    let tau = Vector3::new(0.1, 0.0, 0.0);
    let mut pts = Vec::new();
    for r in [0.1, 0.05, 0.025] {
        let graph = SphereGraph::round(grid.clone(), r, tau)?;
        let dev = sup_deviation(&spec, &graph, |x| expansion_h0(2, 1.0, r, &tau, x, ExpansionForm::Full))?;
        pts.push((f64::ln(r), dev.ln()));
    }
    let p = least_squares_slope(&pts);
    checks.push(OracleCheck { name: "expansion_order".into(), value: p, tolerance: "in [1.7, 2.3]".into(), passed: (1.7..=2.3).contains(&p) });

    let r = 0.01;
    let q = center_residual(&spec, r, &tau, &crate::sphere_field::SpectralField::zeros(grid.clone()))? * r;
    let lead = tau * (4.0 * std::f64::consts::PI * r);
    let rel = (q - lead).norm() / lead.norm();
    checks.push(OracleCheck { name: "kernel_coefficient".into(), value: rel, tolerance: "<= 0.1 relative".into(), passed: rel <= 0.1 });

    let mut margin = f64::INFINITY;
    for ell in kernel_bound_samples() {
        let (lhs, rhs) = kernel_bound_integral(ell, 2)?;
        margin = margin.min(lhs - rhs);
    }
    checks.push(OracleCheck { name: "kernel_bound_integral".into(), value: margin, tolerance: "lhs - rhs >= 0".into(), passed: margin >= 0.0 });
    Ok(checks)
}

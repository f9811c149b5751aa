//! Downward sweeps in `r`, the nesting certificate and the asymptotic
//! balance/regularity diagnostics of a leaf family.
//!
//! Distances and diameters in the diagnostics are chart-Euclidean; the
//! metric correction of each leaf's diameter is reported alongside.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::mean_curvature;
use crate::error::{CmcError, Result};
use crate::metric::MetricSpec;
use crate::solver::{solve_leaf, LeafRecord, SolverOptions};
use crate::sphere_field::{radial_graph, SpectralField, SphereGraph, SphereGrid};
use crate::target_mean_curvature;

/// Geometric schedule `r_k = r_start · ratio^k ≥ r_end`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Schedule {
    pub r_start: f64,
    pub r_end: f64,
    pub ratio: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.5 && self.ratio < 0.95) {
            return Err(CmcError::Config(format!("ratio {} outside (0.5, 0.95)", self.ratio)));
        }
        if !(self.r_start > 0.0 && self.r_end > 0.0 && self.r_end <= self.r_start) {
            return Err(CmcError::Config(format!(
                "need 0 < r_end <= r_start, got r_start = {}, r_end = {}",
                self.r_start, self.r_end
            )));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut r = self.r_start;
        while r >= self.r_end * (1.0 - 1e-12) {
            out.push(r);
            r *= self.ratio;
        }
        out
    }
}

/// What a sweep does when a leaf fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailurePolicy {
    Abort,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafFailure {
    pub r: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct NestingReport {
    /// `min_k min_u φ̃(r_{k+1}, u) − φ̃(r_k, u)`.
    pub margin: f64,
    pub nested: bool,
    pub pairs: Vec<PairGap>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairGap {
    pub r_outer: f64,
    pub r_inner: f64,
    pub min_gap: f64,
    /// Extremes over nodes of `r_k r_{k+1} (φ̃(r_{k+1}) − φ̃(r_k)) / (r_k − r_{k+1})`.
    pub normalized_min: f64,
    pub normalized_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafDiagnostics {
    pub r: f64,
    pub balance_ratio: f64,
    pub weak_balance_ratio: f64,
    pub regularity_product: f64,
    pub pinch_ratio: f64,
    pub geodesic_center: [f64; 3],
    pub center_search_tolerance: f64,
    pub diam_metric_factor: f64,
    /// Set when the family failed the nesting check.
    pub non_nested: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendReport {
    pub quantity: String,
    pub values: Vec<f64>,
    /// Least-squares line `value ≈ intercept + slope · r` over the computed range.
    pub slope: f64,
    pub intercept: f64,
    /// Whether the values move monotonically (within `1e-3`) as `r` decreases
    /// toward the intercept.
    pub monotone: bool,
    pub note: &'static str,
}

const TREND_NOTE: &str = "fit over the computed r-range only; the r -> 0 value is an extrapolation";

#[derive(Clone, Debug)]
pub struct FoliationRecord {
    pub n: usize,
    /// Lattice points with `|p|` below this are excluded from center searches.
    pub exclusion_radius: f64,
    /// Ordered by decreasing `r`.
    pub leaves: Vec<LeafRecord>,
    pub failures: Vec<LeafFailure>,
    pub nesting: Option<NestingReport>,
    pub diagnostics: Vec<LeafDiagnostics>,
    pub trends: Vec<TrendReport>,
}

impl FoliationRecord {
    pub fn from_leaves(n: usize, exclusion_radius: f64, leaves: Vec<LeafRecord>) -> Self {
        Self { n, exclusion_radius, leaves, failures: Vec::new(), nesting: None, diagnostics: Vec::new(), trends: Vec::new() }
    }

    /// Fills `nesting`, `diagnostics` and `trends`, with distances measured from `p0`.
    pub fn analyze(&mut self, p0: &Vector3<f64>) -> Result<()> {
        self.nesting = if self.leaves.len() >= 2 { Some(nesting_check(self)?) } else { None };
        let non_nested = self.nesting.as_ref().is_some_and(|n| !n.nested);
        self.diagnostics = diagnostics(self, p0)?;
        for d in &mut self.diagnostics {
            d.non_nested = non_nested;
        }
        self.trends = trends(&self.diagnostics);
        Ok(())
    }
}

/// Aborted sweep: the leaves solved before the failure plus its cause.
#[derive(Debug)]
pub struct SweepError {
    pub partial: Box<FoliationRecord>,
    pub source: CmcError,
}

impl std::fmt::Display for SweepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sweep aborted after {} leaves: {}", self.partial.leaves.len(), self.source)
    }
}

impl std::error::Error for SweepError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Sweeps the schedule downward, aborting at the first failed leaf.
pub fn sweep(spec: &MetricSpec, schedule: &Schedule, opts: &SolverOptions) -> Result<FoliationRecord, SweepError> {
    let fail = |source| SweepError { partial: Box::new(FoliationRecord::from_leaves(spec.n(), spec.r_min(), Vec::new())), source };
    schedule.validate().map_err(fail)?;
    if schedule.r_start > opts.r_max {
        return Err(fail(CmcError::Domain(format!("r_start = {} exceeds r_max = {}", schedule.r_start, opts.r_max))));
    }
    sweep_with_policy(spec, schedule, opts, FailurePolicy::Abort)
}

/// Sweeps the schedule downward. Each leaf is warm-started from the last
/// converged one with `τ` and `φ` scaled by the ratio of scales.
pub fn sweep_with_policy(
    spec: &MetricSpec,
    schedule: &Schedule,
    opts: &SolverOptions,
    policy: FailurePolicy,
) -> Result<FoliationRecord, SweepError> {
    let mut record = FoliationRecord::from_leaves(spec.n(), spec.r_min(), Vec::new());
    if let Err(source) = schedule.validate() {
        return Err(SweepError { partial: Box::new(record), source });
    }
    for r in schedule.radii() {
        let warm = record.leaves.last().map(|prev| {
            let s = r / prev.r;
            (prev.tau * s, prev.phi.scaled(s))
        });
        match solve_leaf(spec, r, warm.as_ref().map(|(t, p)| (t, p)), opts) {
            Ok(leaf) => record.leaves.push(leaf),
            Err(source) => match policy {
                FailurePolicy::Abort => return Err(SweepError { partial: Box::new(record), source }),
                FailurePolicy::Skip => record.failures.push(LeafFailure { r, message: source.to_string() }),
            },
        }
    }
    if let Err(source) = record.analyze(&Vector3::zeros()) {
        if policy == FailurePolicy::Abort {
            return Err(SweepError { partial: Box::new(record), source });
        }
        record.failures.push(LeafFailure { r: f64::NAN, message: source.to_string() });
    }
    Ok(record)
}

pub fn nesting_check(fol: &FoliationRecord) -> Result<NestingReport> {
    if fol.leaves.len() < 2 {
        return Err(CmcError::Precondition("nesting needs at least two leaves".into()));
    }
    let radial: Vec<SpectralField> = fol
        .leaves
        .par_iter()
        .map(|leaf| radial_graph(&leaf.graph(fol.n)?))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::with_capacity(fol.leaves.len() - 1);
    for k in 0..fol.leaves.len() - 1 {
        let (ro, ri) = (fol.leaves[k].r, fol.leaves[k + 1].r);
        let (outer, inner) = (radial[k].values(), radial[k + 1].values());
        let norm = ro * ri / (ro - ri);
        let mut pair = PairGap {
            r_outer: ro,
            r_inner: ri,
            min_gap: f64::INFINITY,
            normalized_min: f64::INFINITY,
            normalized_max: f64::NEG_INFINITY,
        };
        for (a, b) in outer.iter().zip(inner) {
            let gap = b - a;
            pair.min_gap = pair.min_gap.min(gap);
            pair.normalized_min = pair.normalized_min.min(norm * gap);
            pair.normalized_max = pair.normalized_max.max(norm * gap);
        }
        pairs.push(pair);
    }
    let margin = pairs.iter().map(|p| p.min_gap).fold(f64::INFINITY, f64::min);
    Ok(NestingReport { margin, nested: margin > 0.0, pairs })
}

/// Nearest and farthest points of a leaf from a given point, by a dense scan
/// followed by local refinement on the parameter sphere.
struct SurfaceProbe {
    graph: SphereGraph,
    params: Vec<Vector3<f64>>,
    points: Vec<Vector3<f64>>,
    spacing: f64,
}

const PROBE_LMAX: usize = 46;

impl SurfaceProbe {
    fn new(graph: SphereGraph) -> Self {
        let fine = SphereGrid::shared_default(PROBE_LMAX);
        let phi = graph.phi.resampled(fine.clone());
        let params = fine.points();
        let points = params
            .iter()
            .zip(phi.values())
            .map(|(x, f)| (graph.tau + x * (1.0 - f)) / graph.r)
            .collect();
        let spacing = std::f64::consts::PI / fine.nlat() as f64;
        Self { graph, params, points, spacing }
    }

    fn surface(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (self.graph.tau + x * (1.0 - self.graph.phi.eval_at(x))) / self.graph.r
    }

    fn refine(&self, p: &Vector3<f64>, mut x: Vector3<f64>, farthest: bool) -> f64 {
        let sign = if farthest { -1.0 } else { 1.0 };
        let cost = |x: &Vector3<f64>| sign * (self.surface(x) - p).norm();
        let mut best = cost(&x);
        let mut step = self.spacing;
        while step > 1e-10 {
            let helper = if x.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
            let e1 = x.cross(&helper).normalize();
            let e2 = x.cross(&e1);
            let mut moved = false;
            for d in [e1, -e1, e2, -e2] {
                let trial = (x + d * step).normalize();
                let c = cost(&trial);
                if c < best {
                    best = c;
                    x = trial;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        sign * best
    }

    /// `(dist(p, S), diam(p, S))`.
    fn extremes(&self, p: &Vector3<f64>) -> (f64, f64) {
        let (mut imin, mut imax) = (0, 0);
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0);
        for (i, q) in self.points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < dmin {
                dmin = d;
                imin = i;
            }
            if d > dmax {
                dmax = d;
                imax = i;
            }
        }
        (self.refine(p, self.params[imin], false), self.refine(p, self.params[imax], true))
    }

    fn inside(&self, p: &Vector3<f64>) -> bool {
        let c = self.graph.center();
        let d = p - c;
        let norm = d.norm();
        if norm == 0.0 {
            return true;
        }
        let u = d / norm;
        norm < (1.0 - self.graph.phi.eval_at(&u)) / self.graph.r
    }
}

/// Approximate maximizer of `dist(p, S) / diam(p, S)` over the interior of `S`
/// outside the excluded ball, and the ratio attained.
fn geodesic_center(probe: &SurfaceProbe, exclusion: f64, diam: f64, tol: f64) -> (Vector3<f64>, f64) {
    let (lo, hi) = probe.points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), q| (lo.inf(q), hi.sup(q)),
    );
    let admissible = |p: &Vector3<f64>| probe.inside(p) && p.norm() >= exclusion;
    let objective = |p: &Vector3<f64>| {
        let (d, m) = probe.extremes(p);
        d / m
    };
    const LATTICE: usize = 7;
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for i in 0..LATTICE {
        for j in 0..LATTICE {
            for k in 0..LATTICE {
                let t = Vector3::new(i as f64, j as f64, k as f64) / (LATTICE - 1) as f64;
                let p = lo + (hi - lo).component_mul(&t);
                if !admissible(&p) {
                    continue;
                }
                let v = objective(&p);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((p, v));
                }
            }
        }
    }
    let (mut p, mut value) = best.unwrap_or_else(|| (probe.graph.center(), objective(&probe.graph.center())));
    let mut step = (hi - lo).max() / (LATTICE - 1) as f64;
    while step > tol * diam {
        let mut moved = false;
        for axis in 0..3 {
            for s in [1.0, -1.0] {
                let mut trial = p;
                trial[axis] += s * step;
                if !admissible(&trial) {
                    continue;
                }
                let v = objective(&trial);
                if v > value {
                    p = trial;
                    value = v;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (p, value)
}

/// Relative tolerance of the geodesic-center search.
pub const CENTER_SEARCH_TOL: f64 = 1e-4;

/// Per-leaf balance, weak balance, regularity and pinch quantities at `p0`.
pub fn diagnostics(fol: &FoliationRecord, p0: &Vector3<f64>) -> Result<Vec<LeafDiagnostics>> {
    fol.leaves
        .par_iter()
        .map(|leaf| {
            let probe = SurfaceProbe::new(leaf.graph(fol.n)?);
            let diam = leaf.curvature.diam;
            let (dist0, far0) = probe.extremes(p0);
            let (center, _) = geodesic_center(&probe, fol.exclusion_radius, diam, CENTER_SEARCH_TOL);
            let (_, far_c) = probe.extremes(&center);
            Ok(LeafDiagnostics {
                r: leaf.r,
                balance_ratio: dist0 / far0,
                weak_balance_ratio: (p0 - center).norm() / far_c,
                regularity_product: leaf.curvature.sup_a * diam,
                pinch_ratio: far0 / dist0,
                geodesic_center: center.into(),
                center_search_tolerance: CENTER_SEARCH_TOL,
                diam_metric_factor: leaf.curvature.diam_metric_factor,
                non_nested: false,
            })
        })
        .collect()
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Linear-in-`r` trends of the four diagnostic ratios.
pub fn trends(diags: &[LeafDiagnostics]) -> Vec<TrendReport> {
    let rs: Vec<f64> = diags.iter().map(|d| d.r).collect();
    let columns: [(&str, fn(&LeafDiagnostics) -> f64); 4] = [
        ("balance_ratio", |d| d.balance_ratio),
        ("weak_balance_ratio", |d| d.weak_balance_ratio),
        ("regularity_product", |d| d.regularity_product),
        ("pinch_ratio", |d| d.pinch_ratio),
    ];
    columns
        .iter()
        .map(|(name, get)| {
            let values: Vec<f64> = diags.iter().map(get).collect();
            let (slope, intercept) = if values.len() >= 2 { linear_fit(&rs, &values) } else { (0.0, values.first().copied().unwrap_or(f64::NAN)) };
            let dir = -slope.signum();
            let monotone = values.windows(2).all(|w| dir * (w[1] - w[0]) >= -1e-3);
            TrendReport { quantity: name.to_string(), values, slope, intercept, monotone, note: TREND_NOTE }
        })
        .collect()
}

/// Leaf made of the flat round sphere of chart radius `radius` centered at
/// `center`, for checking the diagnostics on closed-form families.
pub fn round_sphere_leaf(radius: f64, center: &Vector3<f64>, lmax: usize) -> Result<LeafRecord> {
    let grid = SphereGrid::shared_default(lmax);
    let r = 1.0 / radius;
    let tau = center * r;
    let phi = SpectralField::zeros(grid);
    let graph = SphereGraph::new(r, tau, phi.clone())?;
    Ok(LeafRecord {
        r,
        tau,
        phi,
        target_h: target_mean_curvature(2, 0.0, r),
        residual_sup: 0.0,
        iterations: 0,
        curvature: mean_curvature(&MetricSpec::flat(), &graph)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(radii: &[f64], center: impl Fn(f64) -> Vector3<f64>) -> FoliationRecord {
        let leaves = radii.iter().map(|&rho| round_sphere_leaf(rho, &center(rho), 12).unwrap()).collect();
        FoliationRecord::from_leaves(2, 0.0, leaves)
    }

    #[test]
    fn schedule_radii() {
        let s = Schedule { r_start: 0.1, r_end: 0.02, ratio: 0.8 };
        assert_eq!(s.radii().len(), 8);
        assert!(Schedule { r_start: 0.1, r_end: 0.02, ratio: 0.97 }.validate().is_err());
    }

    #[test]
    fn concentric_margin_is_radius_difference() {
        let fol = family(&[10.0, 12.5, 20.0], |_| Vector3::zeros());
        let report = nesting_check(&fol).unwrap();
        assert!((report.margin - 2.5).abs() < 1e-10);
        assert!(report.nested);
        let p = &report.pairs[0];
        assert!((p.normalized_min - 1.0).abs() < 1e-10 && (p.normalized_max - 1.0).abs() < 1e-10);
        let same = family(&[10.0, 10.0], |_| Vector3::zeros());
        let report = nesting_check(&same).unwrap();
        assert_eq!(report.margin, 0.0);
        assert!(!report.nested);
    }

    #[test]
    fn concentric_diagnostics() {
        let fol = family(&[10.0, 20.0], |_| Vector3::zeros());
        for d in diagnostics(&fol, &Vector3::zeros()).unwrap() {
            assert!((d.balance_ratio - 1.0).abs() < 1e-9);
            assert!((d.pinch_ratio - 1.0).abs() < 1e-9);
            assert!((d.regularity_product - 2.0).abs() < 1e-6);
            assert!(d.weak_balance_ratio < 1e-3);
        }
    }

    #[test]
    fn drifting_centers_are_weakly_balanced_only() {
        let fol = family(&[10.0, 20.0, 40.0], |rho| Vector3::new(0.5 * rho, 0.0, 0.0));
        for d in diagnostics(&fol, &Vector3::zeros()).unwrap() {
            assert!((d.weak_balance_ratio - 0.5).abs() < 1e-3, "{}", d.weak_balance_ratio);
            assert!((d.balance_ratio - 1.0 / 3.0).abs() < 1e-3, "{}", d.balance_ratio);
            assert!((d.pinch_ratio - 3.0).abs() < 1e-2);
        }
    }

    #[test]
    fn flat_sweep_reports_degenerate_mass() {
        let s = Schedule { r_start: 0.1, r_end: 0.02, ratio: 0.8 };
        let err = sweep(&MetricSpec::flat(), &s, &SolverOptions { lmax: 8, ..Default::default() }).unwrap_err();
        assert!(matches!(err.source, CmcError::DegenerateMass));
        assert!(err.partial.leaves.is_empty());
    }

    #[test]
    fn schwarzschild_sweep_nests() {
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let s = Schedule { r_start: 0.1, r_end: 0.02, ratio: 0.8 };
        let fol = sweep(&spec, &s, &SolverOptions { lmax: 8, ..Default::default() }).unwrap();
        assert_eq!(fol.leaves.len(), 8);
        let nest = fol.nesting.as_ref().unwrap();
        assert!(nest.margin > 0.0);
        for p in &nest.pairs {
            assert!(p.normalized_min >= 0.8 && p.normalized_max <= 1.2);
        }
        let balance = &fol.trends[0];
        assert!(balance.monotone);
        assert!(fol.diagnostics.iter().all(|d| d.regularity_product < 4.0));
    }
}

//! The leaf equation `H(r, τ, r^{n−1}φ) = n − σn²/2 · r^{n−1}`, solved by
//! alternating a Newton solve for the center `τ` (the kernel part) with a
//! flat-Jacobian update of the rescaled graph function `φ` (the complement).
//!
//! Residuals are evaluated on a grid padded to `⌈3 lmax / 2⌉` so products in
//! `H` do not alias back into the retained band.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::curvature::{mean_curvature, pointwise_curvature, CurvatureReport};
use crate::error::{CmcError, Result};
use crate::jacobi::{project_kernel, solve_complement};
use crate::metric::MetricSpec;
use crate::sphere_field::{SpectralField, SphereGraph, SphereGrid};
use crate::target_mean_curvature;

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    pub lmax: usize,
    /// Stop when the rescaled residual satisfies `sup|R| ≤ tol`.
    pub tol: f64,
    pub max_outer: usize,
    /// Center equation stops at `|Q| ≤ center_tol · max(1, |σ|)`.
    pub center_tol: f64,
    pub max_center: usize,
    pub fd_step: f64,
    pub max_halvings: usize,
    pub r_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lmax: 16,
            tol: 1e-10,
            max_outer: 60,
            center_tol: 1e-10,
            max_center: 50,
            fd_step: 1e-6,
            max_halvings: 10,
            r_max: 0.15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CenterSolution {
    pub tau: Vector3<f64>,
    pub iterations: usize,
    /// `|τ| / r`.
    pub beta: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct LeafRecord {
    pub r: f64,
    pub tau: Vector3<f64>,
    /// Rescaled graph function; the surface is the graph of `r^{n−1} φ`.
    pub phi: SpectralField,
    pub target_h: f64,
    /// `sup |H − target_h| / r^{n−1}` on the padded grid.
    pub residual_sup: f64,
    pub iterations: usize,
    pub curvature: CurvatureReport,
}

impl LeafRecord {
    /// The geometric graph surface.
    pub fn graph(&self, n: usize) -> Result<SphereGraph> {
        SphereGraph::new(self.r, self.tau, self.phi.scaled(self.r.powi(n as i32 - 1)))
    }
}

fn padded_lmax(lmax: usize) -> usize {
    (3 * lmax).div_ceil(2)
}

fn padded_grid(lmax: usize) -> Arc<SphereGrid> {
    SphereGrid::shared_default(padded_lmax(lmax))
}

/// Rescaled residual `r^{1−n}(H − target)` at the nodes of `grid`.
fn residual_values(
    spec: &MetricSpec,
    r: f64,
    tau: &Vector3<f64>,
    phi: &SpectralField,
    grid: &Arc<SphereGrid>,
) -> Result<Vec<f64>> {
    let scale = r.powi(spec.n() as i32 - 1);
    let graph = SphereGraph::new(r, *tau, phi.resampled(grid.clone()).scaled(scale))?;
    let target = target_mean_curvature(spec.n(), spec.sigma(), r);
    Ok(pointwise_curvature(spec, &graph)?.h.into_iter().map(|h| (h - target) / scale).collect())
}

fn kernel_pairing(grid: &SphereGrid, values: &[f64]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for j in 0..grid.nlat() {
        let w = grid.weight(j);
        for k in 0..grid.nlon() {
            out += grid.point(j, k) * (w * values[grid.node(j, k)]);
        }
    }
    out
}

fn center_q(spec: &MetricSpec, r: f64, tau: &Vector3<f64>, phi: &SpectralField, grid: &Arc<SphereGrid>) -> Result<Vector3<f64>> {
    Ok(kernel_pairing(grid, &residual_values(spec, r, tau, phi, grid)?))
}

/// `Q = r^{1−n} P̃(H(r, τ, r^{n−1}φ) − target)`.
pub fn center_residual(spec: &MetricSpec, r: f64, tau: &Vector3<f64>, phi: &SpectralField) -> Result<Vector3<f64>> {
    center_q(spec, r, tau, phi, &padded_grid(phi.lmax()))
}

fn check_preconditions(spec: &MetricSpec, r: f64, tau: &Vector3<f64>, opts: &SolverOptions) -> Result<()> {
    if spec.sigma() == 0.0 {
        return Err(CmcError::DegenerateMass);
    }
    if !(r > 0.0 && r <= opts.r_max) {
        return Err(CmcError::Domain(format!("r = {r} outside (0, {}]", opts.r_max)));
    }
    if !(tau.norm() <= 0.5) {
        return Err(CmcError::Domain(format!("|τ| = {} exceeds 0.5", tau.norm())));
    }
    Ok(())
}

fn newton_center(
    spec: &MetricSpec,
    r: f64,
    phi: &SpectralField,
    tau0: &Vector3<f64>,
    opts: &SolverOptions,
    grid: &Arc<SphereGrid>,
) -> Result<CenterSolution> {
    let tol = opts.center_tol * spec.sigma().abs().max(1.0);
    let mut tau = *tau0;
    let mut q = center_q(spec, r, &tau, phi, grid)?;
    for it in 0..opts.max_center {
        if q.norm() <= tol {
            return Ok(CenterSolution { tau, iterations: it, beta: tau.norm() / r, residual: q.norm() });
        }
        let mut jac = Matrix3::zeros();
        for i in 0..3 {
            let mut shifted = tau;
            shifted[i] += opts.fd_step;
            let col = (center_q(spec, r, &shifted, phi, grid)? - q) / opts.fd_step;
            jac.set_column(i, &col);
        }
        let delta = jac
            .lu()
            .solve(&q)
            .ok_or_else(|| CmcError::Divergence("singular center Jacobian".into()))?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = tau - delta * step;
            if let Ok(qt) = center_q(spec, r, &trial, phi, grid) {
                if qt.norm() < q.norm() {
                    accepted = Some((trial, qt));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((t, qt)) => {
                tau = t;
                q = qt;
            }
            None if q.norm() <= 100.0 * tol => {
                // stagnated at the rounding floor
                return Ok(CenterSolution { tau, iterations: it, beta: tau.norm() / r, residual: q.norm() });
            }
            None => return Err(CmcError::Divergence(format!("center line search failed at |Q| = {:.3e}", q.norm()))),
        }
    }
    if q.norm() <= tol {
        return Ok(CenterSolution { tau, iterations: opts.max_center, beta: tau.norm() / r, residual: q.norm() });
    }
    Err(CmcError::Divergence(format!(
        "center equation not solved in {} iterations (|Q| = {:.3e})",
        opts.max_center,
        q.norm()
    )))
}

/// Solves the center equation `Q(τ) = 0` for fixed `φ` by damped Newton.
pub fn solve_center(
    spec: &MetricSpec,
    r: f64,
    phi: &SpectralField,
    tau0: &Vector3<f64>,
    opts: &SolverOptions,
) -> Result<CenterSolution> {
    check_preconditions(spec, r, tau0, opts)?;
    newton_center(spec, r, phi, tau0, opts, &padded_grid(phi.lmax()))
}

/// Solves one leaf, cold (`τ = 0`, `φ = 0`) or from a warm start.
pub fn solve_leaf(
    spec: &MetricSpec,
    r: f64,
    warm: Option<(&Vector3<f64>, &SpectralField)>,
    opts: &SolverOptions,
) -> Result<LeafRecord> {
    let grid = SphereGrid::shared_default(opts.lmax);
    let pad = padded_grid(opts.lmax);
    let (mut tau, mut phi) = match warm {
        Some((t, p)) => (*t, project_kernel(&p.resampled(grid.clone())).remainder),
        None => (Vector3::zeros(), SpectralField::zeros(grid.clone())),
    };
    check_preconditions(spec, r, &tau, opts)?;
    let n = spec.n();
    let scale = r.powi(n as i32 - 1);
    let mut residual_sup = f64::INFINITY;
    for it in 1..=opts.max_outer {
        tau = newton_center(spec, r, &phi, &tau, opts, &pad)?.tau;
        let residual = residual_values(spec, r, &tau, &phi, &pad)?;
        residual_sup = residual.iter().fold(0.0, |a, v| a.max(v.abs()));
        if residual_sup <= opts.tol {
            let graph = SphereGraph::new(r, tau, phi.scaled(scale))?;
            return Ok(LeafRecord {
                r,
                tau,
                curvature: mean_curvature(spec, &graph)?,
                phi,
                target_h: target_mean_curvature(n, spec.sigma(), r),
                residual_sup,
                iterations: it,
            });
        }
        let banded = SpectralField::from_values(pad.clone(), residual)?.resampled(grid.clone());
        let delta = solve_complement(&project_kernel(&banded).remainder)?;
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..=opts.max_halvings {
            let trial = phi.add_scaled(&delta, -step)?;
            if SphereGraph::new(r, tau, trial.resampled(pad.clone()).scaled(scale)).is_ok() {
                next = Some(trial);
                break;
            }
            step *= 0.5;
        }
        phi = next.ok_or_else(|| CmcError::Divergence(format!("graph update stays inadmissible at r = {r}")))?;
    }
    Err(CmcError::Divergence(format!(
        "leaf at r = {r} not converged in {} iterations (sup|R| = {residual_sup:.3e})",
        opts.max_outer
    )))
}

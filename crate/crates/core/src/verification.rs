//! Finite-range checks of the uniqueness argument: roundness defect, the
//! curvature-to-scale map, center drift, the kernel integral inequality and
//! re-solves from perturbed starting points.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CmcError, Result};
use crate::foliation::FoliationRecord;
use crate::jacobi::project_kernel;
use crate::metric::MetricSpec;
use crate::solver::{solve_leaf, LeafRecord, SolverOptions};
use crate::sphere_field::{coeff_count, coeff_index, SpectralField, SphereGrid, EMBEDDING_EPS};
use crate::unit_ball_volume;

/// `H̃ · diam_g − 2n` with `H̃ = r · target_H` the unrescaled mean curvature.
pub fn roundness_defect(leaf: &LeafRecord, n: usize) -> f64 {
    leaf.r * leaf.target_h * leaf.curvature.diam_g() - 2.0 * n as f64
}

/// Unrescaled mean curvature measured on the leaf: `r` times the sphere
/// average of the rescaled `H`.
pub fn measured_mean_curvature(leaf: &LeafRecord) -> f64 {
    leaf.r * leaf.curvature.h.integrate() / (4.0 * std::f64::consts::PI)
}

/// Small root of `n r − (σ n² / 2) rⁿ = h̃` in `(0, r_max]`.
pub fn r_from_mean_curvature(h_tilde: f64, n: usize, sigma: f64, r_max: f64) -> Result<f64> {
    let nf = n as f64;
    if sigma == 0.0 {
        return Ok(h_tilde / nf);
    }
    let p = |r: f64| nf * r - sigma * nf * nf / 2.0 * r.powi(n as i32);
    let dp = |r: f64| nf - sigma * nf.powi(3) / 2.0 * r.powi(n as i32 - 1);
    let mut hi = r_max;
    if sigma > 0.0 {
        // p increases up to its critical point
        hi = hi.min((2.0 / (sigma * nf * nf)).powf(1.0 / (nf - 1.0)));
    }
    let mut lo = 0.0;
    if !(h_tilde > p(lo) && h_tilde <= p(hi)) {
        return Err(CmcError::Range(format!(
            "mean curvature {h_tilde} not attained for r in (0, {hi}]"
        )));
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = p(r) - h_tilde;
        if f == 0.0 {
            return Ok(r);
        }
        if f < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - f / dp(r);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - r).abs() <= 1e-16 * r.max(1e-300) {
            return Ok(next);
        }
        r = next;
    }
    Ok(r)
}

/// `|τ|/r` per leaf and its maximum.
#[derive(Clone, Debug, Serialize)]
pub struct CenterDrift {
    pub r: Vec<f64>,
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
}

pub fn center_drift_check(fol: &FoliationRecord) -> Result<CenterDrift> {
    if fol.leaves.len() < 3 {
        return Err(CmcError::Precondition("center drift needs at least three leaves".into()));
    }
    let r: Vec<f64> = fol.leaves.iter().map(|l| l.r).collect();
    let ratio: Vec<f64> = fol.leaves.iter().map(|l| l.tau.norm() / l.r).collect();
    let max_ratio = ratio.iter().copied().fold(0.0, f64::max);
    Ok(CenterDrift { r, ratio, max_ratio })
}

const KERNEL_BOUND_LMAX: usize = 32;

/// `(lhs, rhs)` with `lhs = −∫ x¹/|1+ℓx¹|^{n−1} − (n−1) ∫ x¹/|1+ℓx¹|ⁿ` over the
/// unit sphere and `rhs = (n−1)(n+1) ω_{n+1} ℓ`.
pub fn kernel_bound_integral(ell: f64, n: usize) -> Result<(f64, f64)> {
    if n != 2 {
        return Err(CmcError::UnsupportedDimension(n));
    }
    if !(ell > 0.0 && ell < 1.0) {
        return Err(CmcError::Domain(format!("ℓ = {ell} outside (0, 1)")));
    }
    let nf = n as f64;
    let grid = SphereGrid::shared_default(KERNEL_BOUND_LMAX);
    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| {
            let d = (1.0 + ell * x.x).abs();
            -x.x / d.powf(nf - 1.0) - (nf - 1.0) * x.x / d.powf(nf)
        })
        .collect();
    let lhs = grid.integrate_values(&values);
    let rhs = (nf - 1.0) * (nf + 1.0) * unit_ball_volume(n + 1) * ell;
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BasinBounds {
    pub dtau: f64,
    pub dphi: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BasinConfig {
    pub trials: usize,
    pub bounds: BasinBounds,
    pub seed: u64,
    /// Distance below which a re-solve counts as the same leaf.
    pub tolerance: f64,
}

impl BasinConfig {
    pub fn new(trials: usize, bounds: BasinBounds, seed: u64) -> Self {
        Self { trials, bounds, seed, tolerance: BASIN_TOLERANCE }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Returned,
    Different,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub status: TrialStatus,
    /// Max of the coefficient distance of `φ` and the distance of `τ`.
    pub distance: Option<f64>,
    pub iterations: Option<usize>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasinReport {
    pub r: f64,
    pub config: BasinConfig,
    pub trials: Vec<TrialOutcome>,
    pub returned: usize,
    pub success_fraction: f64,
}

pub const BASIN_TOLERANCE: f64 = 1e-8;

/// Degrees carrying the random graph perturbation (degree one is the kernel).
const PERTURBATION_DEGREES: [usize; 4] = [0, 2, 3, 4];

fn random_perturbation(leaf: &LeafRecord, bounds: &BasinBounds, seed: u64, trial: usize) -> (Vector3<f64>, SpectralField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let grid = leaf.phi.grid().clone();
    let mut coeffs = vec![0.0; coeff_count(grid.lmax())];
    for &l in PERTURBATION_DEGREES.iter().filter(|&&l| l <= grid.lmax()) {
        for m in -(l as i64)..=(l as i64) {
            coeffs[coeff_index(l, m)] = rng.random_range(-1.0..1.0);
        }
    }
    let raw = SpectralField::from_coeffs(grid, coeffs).expect("coefficients sized by the grid");
    let dphi = raw.scaled(bounds.dphi * rng.random::<f64>() / raw.sup_norm().max(f64::MIN_POSITIVE));
    let dir = loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            break v / norm;
        }
    };
    let dtau = dir * (bounds.dtau * rng.random::<f64>().cbrt());
    (dtau, dphi)
}

/// Checks that the worst case of the bounds keeps trial starts admissible.
fn bounds_admissible(spec: &MetricSpec, leaf: &LeafRecord, bounds: &BasinBounds) -> std::result::Result<(), String> {
    let scale = leaf.r.powi(spec.n() as i32 - 1);
    let tau = leaf.tau.norm() + bounds.dtau;
    let graph = scale * (leaf.phi.sup_norm() + bounds.dphi);
    if !(bounds.dtau >= 0.0 && bounds.dphi >= 0.0) {
        return Err("negative perturbation bound".into());
    }
    if tau > 0.5 {
        return Err(format!("|τ| + dtau = {tau} exceeds 0.5"));
    }
    if graph > EMBEDDING_EPS {
        return Err(format!("worst-case graph sup {graph} exceeds ε₀"));
    }
    if tau + leaf.r + graph > 1.0 {
        return Err("worst-case |τ| + r + sup|φ| exceeds 1".into());
    }
    Ok(())
}

/// Re-solves `leaf` from `config.trials` random perturbed starts. Trial `k`
/// draws from stream `k` of a ChaCha8 generator seeded with `config.seed`.
pub fn uniqueness_basin(spec: &MetricSpec, leaf: &LeafRecord, config: BasinConfig, opts: &SolverOptions) -> BasinReport {
    let BasinConfig { trials, bounds, seed, tolerance } = config;
    let admissible = bounds_admissible(spec, leaf, &bounds);
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            if let Err(message) = &admissible {
                return TrialOutcome { trial, status: TrialStatus::Skipped, distance: None, iterations: None, message: Some(message.clone()) };
            }
            let (dtau, dphi) = random_perturbation(leaf, &bounds, seed, trial);
            let start_tau = leaf.tau + dtau;
            let start_phi = leaf.phi.add_scaled(&dphi, 1.0).expect("same grid");
            match solve_leaf(spec, leaf.r, Some((&start_tau, &start_phi)), opts) {
                Ok(other) => {
                    let distance = other.phi.coeff_distance(&leaf.phi).max((other.tau - leaf.tau).norm());
                    let status = if distance < tolerance { TrialStatus::Returned } else { TrialStatus::Different };
                    TrialOutcome { trial, status, distance: Some(distance), iterations: Some(other.iterations), message: None }
                }
                Err(e) => TrialOutcome { trial, status: TrialStatus::Failed, distance: None, iterations: None, message: Some(e.to_string()) },
            }
        })
        .collect();
    let returned = outcomes.iter().filter(|o| o.status == TrialStatus::Returned).count();
    BasinReport {
        r: leaf.r,
        config,
        success_fraction: if trials == 0 { 1.0 } else { returned as f64 / trials as f64 },
        returned,
        trials: outcomes,
    }
}

/// Re-solve from the leaf itself, perturbation-free.
pub fn zero_perturbation_distance(spec: &MetricSpec, leaf: &LeafRecord, opts: &SolverOptions) -> Result<f64> {
    let phi = project_kernel(&leaf.phi).remainder;
    let again = solve_leaf(spec, leaf.r, Some((&leaf.tau, &phi)), opts)?;
    Ok(again.phi.coeff_distance(&leaf.phi).max((again.tau - leaf.tau).norm()))
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafUniqueness {
    pub r: f64,
    pub roundness_defect: f64,
    pub measured_h_tilde: f64,
    pub r_of_h: Option<f64>,
    pub r_of_h_error: Option<f64>,
    pub center_norm_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelBoundRow {
    pub ell: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub leaves: Vec<LeafUniqueness>,
    pub center_ratio_max: Option<f64>,
    /// `|h|` at the smallest `r` is at most half of `|h|` at the largest.
    pub roundness_decays: bool,
    pub kernel_bound_table: Vec<KernelBoundRow>,
    pub basin: Option<BasinReport>,
    pub note: &'static str,
}

/// The `ℓ` samples of the kernel bound table: 17 points evenly spaced in `[0.05, 0.9]`.
pub fn kernel_bound_samples() -> Vec<f64> {
    (0..17).map(|i| 0.05 + 0.85 * i as f64 / 16.0).collect()
}

/// Gathers the per-leaf checks, the kernel bound table and a basin run on
/// the leaf closest to `basin_r`.
pub fn uniqueness_report(
    spec: &MetricSpec,
    fol: &FoliationRecord,
    basin: Option<(f64, BasinConfig)>,
    opts: &SolverOptions,
) -> Result<UniquenessReport> {
    let n = spec.n();
    let leaves: Vec<LeafUniqueness> = fol
        .leaves
        .iter()
        .map(|leaf| {
            let h = measured_mean_curvature(leaf);
            let r_of_h = r_from_mean_curvature(h, n, spec.sigma(), opts.r_max).ok();
            LeafUniqueness {
                r: leaf.r,
                roundness_defect: roundness_defect(leaf, n),
                measured_h_tilde: h,
                r_of_h,
                r_of_h_error: r_of_h.map(|x| (x - leaf.r).abs()),
                center_norm_ratio: leaf.tau.norm() / leaf.r,
            }
        })
        .collect();
    let roundness_decays = match (leaves.first(), leaves.last()) {
        (Some(a), Some(b)) if leaves.len() >= 2 => b.roundness_defect.abs() <= 0.5 * a.roundness_defect.abs(),
        _ => false,
    };
    let kernel_bound_table = kernel_bound_samples()
        .into_iter()
        .map(|ell| {
            let (lhs, rhs) = kernel_bound_integral(ell, 2)?;
            Ok(KernelBoundRow { ell, lhs, rhs, holds: lhs >= rhs })
        })
        .collect::<Result<_>>()?;
    let basin = basin.and_then(|(target, config)| {
        let leaf = fol.leaves.iter().min_by(|a, b| (a.r - target).abs().total_cmp(&(b.r - target).abs()))?;
        Some(uniqueness_basin(spec, leaf, config, opts))
    });
    Ok(UniquenessReport {
        center_ratio_max: center_drift_check(fol).ok().map(|d| d.max_ratio),
        leaves,
        roundness_decays,
        kernel_bound_table,
        basin,
        note: "finite-range checks over the swept scales; no limit is asserted",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::round_sphere_leaf;
    use crate::sphere_field::gauss_legendre;
    use std::f64::consts::PI;

    #[test]
    fn r_from_h_examples() {
        assert!((r_from_mean_curvature(0.18, 2, 1.0, 0.15).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r_from_mean_curvature(0.3, 2, 0.0, 0.15).unwrap(), 0.15);
        assert!((r_from_mean_curvature(0.1, 2, -0.5, 0.15).unwrap() - (1.1f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!(matches!(r_from_mean_curvature(0.5, 2, 1.0, 0.15), Err(CmcError::Range(_))));
        assert!(matches!(r_from_mean_curvature(-0.1, 2, 1.0, 0.15), Err(CmcError::Range(_))));
    }

    #[test]
    fn flat_round_sphere_has_no_defect() {
        let leaf = round_sphere_leaf(10.0, &Vector3::new(1.0, 2.0, 0.0), 12).unwrap();
        assert!(roundness_defect(&leaf, 2).abs() < 1e-9);
    }

    /// `∫_{S²} g(x¹) = 2π ∫_{-1}^{1} g(t) dt`, evaluated with 200-point Gauss–Legendre.
    fn archimedes(g: impl Fn(f64) -> f64) -> f64 {
        let (t, w) = gauss_legendre(200);
        2.0 * PI * t.iter().zip(&w).map(|(t, w)| w * g(*t)).sum::<f64>()
    }

    #[test]
    fn kernel_bound_matches_one_dimensional_oracle() {
        for ell in kernel_bound_samples() {
            let (lhs, rhs) = kernel_bound_integral(ell, 2).unwrap();
            let oracle = archimedes(|t| -t / (1.0 + ell * t) - t / (1.0 + ell * t).powi(2));
            assert!((lhs - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "ℓ = {ell}");
            assert!((rhs - 4.0 * PI * ell).abs() < 1e-12);
            assert!(lhs >= rhs);
        }
        let (lhs, rhs) = kernel_bound_integral(0.5, 2).unwrap();
        assert!((rhs - 2.0 * PI).abs() < 1e-12 && lhs > rhs);
        let (lhs, _) = kernel_bound_integral(1e-4, 2).unwrap();
        assert!((lhs / 1e-4 - 4.0 * PI).abs() < 1e-5);
        assert!(matches!(kernel_bound_integral(1.0, 2), Err(CmcError::Domain(_))));
        assert!(matches!(kernel_bound_integral(0.0, 2), Err(CmcError::Domain(_))));
    }

    #[test]
    fn basin_examples() {
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let opts = SolverOptions { lmax: 8, ..Default::default() };
        let leaf = solve_leaf(&spec, 0.05, None, &opts).unwrap();
        assert!(zero_perturbation_distance(&spec, &leaf, &opts).unwrap() < 1e-12);
        let config = BasinConfig::new(6, BasinBounds { dtau: 0.1, dphi: 0.05 }, 7);
        let report = uniqueness_basin(&spec, &leaf, config, &opts);
        assert_eq!(report.returned, 6, "{:?}", report.trials);
        let again = uniqueness_basin(&spec, &leaf, config, &opts);
        for (a, b) in report.trials.iter().zip(&again.trials) {
            assert_eq!(a.distance, b.distance);
        }
        let wide = BasinConfig::new(3, BasinBounds { dtau: 0.6, dphi: 0.05 }, 7);
        let skipped = uniqueness_basin(&spec, &leaf, wide, &opts);
        assert!(skipped.trials.iter().all(|t| t.status == TrialStatus::Skipped));
    }
}

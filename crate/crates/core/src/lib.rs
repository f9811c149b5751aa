//! Constant-mean-curvature sphere foliations near infinity of asymptotically
//! flat ends, built by the moving-center perturbation method.
//!
//! The crate is organized bottom-up:
//!
//! * [`metric`]: asymptotically flat metrics, their derivatives and Christoffel symbols.
//! * [`sphere_field`]: spectral scalar fields on S², quadrature and graph surfaces.
//! * [`curvature`]: mean curvature and second fundamental form of graph surfaces.
//! * [`jacobi`]: the flat-limit Jacobi operator `L = Δ + n`, its kernel and inverse.
//! * [`solver`]: the center/graph two-tier leaf solver.
//! * [`foliation`]: downward sweeps in `r`, nesting and asymptotic diagnostics.
//! * [`verification`]: checks of the uniqueness machinery.
//! * [`config`] and [`run`]: configuration ingestion and artifact emission for the CLI.

pub mod config;
pub mod curvature;
pub mod error;
pub mod foliation;
pub mod jacobi;
pub mod metric;
pub mod run;
pub mod solver;
pub mod sphere_field;
pub mod verification;

pub use error::{CmcError, Result};

/// Volume of the unit ball in `R^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / k as f64 * unit_ball_volume(k - 2),
    }
}

/// Volume of the round unit sphere `S^n`, equal to `(n+1)·ω_{n+1}`.
pub fn sphere_volume(n: usize) -> f64 {
    (n + 1) as f64 * unit_ball_volume(n + 1)
}

/// The constant the leaf equation targets: `n − σn²/2 · r^{n−1}`.
pub fn target_mean_curvature(n: usize, sigma: f64, r: f64) -> f64 {
    let nf = n as f64;
    nf - sigma * nf * nf / 2.0 * r.powi(n as i32 - 1)
}

//! The flat linearized operator `L = Δ + n` on the grid sphere, its kernel
//! (the degree-one harmonics) and inversion on the complement.

use nalgebra::Vector3;

use crate::error::{CmcError, Result};
use crate::sphere_field::{coeff_index, degree_one_index, SpectralField, DEGREE_ONE_SCALE};

/// Dimension of the sphere carried by [`crate::sphere_field::SphereGrid`].
const SPHERE_DIM: usize = 2;

/// Relative size of a degree-one component treated as nonzero.
pub const KERNEL_TOLERANCE: f64 = 1e-8;

/// Eigenvalue `n − ℓ(ℓ+n−1)` of `L` on degree-`ℓ` harmonics.
pub fn eigenvalue(n: usize, l: usize) -> f64 {
    n as f64 - (l * (l + n - 1)) as f64
}

#[derive(Clone, Debug)]
pub struct KernelProjection {
    /// `∫ f x^i` over the unit sphere.
    pub vector: Vector3<f64>,
    /// The input with its degree-one part removed.
    pub remainder: SpectralField,
}

fn map_degrees(field: &SpectralField, f: impl Fn(usize) -> f64) -> SpectralField {
    let lmax = field.lmax();
    let mut coeffs = field.coeffs().to_vec();
    for l in 0..=lmax {
        let factor = f(l);
        for m in -(l as i64)..=(l as i64) {
            coeffs[coeff_index(l, m)] *= factor;
        }
    }
    SpectralField::from_coeffs(field.grid().clone(), coeffs).expect("coefficients sized by the grid")
}

pub fn apply_l(field: &SpectralField) -> SpectralField {
    map_degrees(field, |l| eigenvalue(SPHERE_DIM, l))
}

pub fn project_kernel(field: &SpectralField) -> KernelProjection {
    let mut vector = Vector3::zeros();
    let mut coeffs = field.coeffs().to_vec();
    if field.lmax() >= 1 {
        for axis in 0..3 {
            let slot = degree_one_index(axis);
            vector[axis] = coeffs[slot] / DEGREE_ONE_SCALE;
            coeffs[slot] = 0.0;
        }
    }
    let remainder = SpectralField::from_coeffs(field.grid().clone(), coeffs).expect("coefficients sized by the grid");
    KernelProjection { vector, remainder }
}

/// Solves `L φ = f` with `φ` free of degree one. `f` must already be free of
/// degree one.
pub fn solve_complement(field: &SpectralField) -> Result<SpectralField> {
    if field.lmax() >= 1 {
        let norm = field.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
        let kernel = (0..3).map(|a| field.coeffs()[degree_one_index(a)].powi(2)).sum::<f64>().sqrt();
        if kernel > KERNEL_TOLERANCE * norm {
            return Err(CmcError::Precondition(format!(
                "input has a kernel component of relative size {:.3e}",
                kernel / norm
            )));
        }
    }
    Ok(map_degrees(field, |l| if l == 1 { 0.0 } else { 1.0 / eigenvalue(SPHERE_DIM, l) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_field::{coeff_count, SphereGrid};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn y20(grid: std::sync::Arc<SphereGrid>) -> SpectralField {
        let mut c = vec![0.0; coeff_count(grid.lmax())];
        c[coeff_index(2, 0)] = 1.0;
        SpectralField::from_coeffs(grid, c).unwrap()
    }

    #[test]
    fn spectrum_examples() {
        let grid = SphereGrid::shared_default(8);
        let x = SpectralField::coordinate(grid.clone(), 0);
        assert!(apply_l(&x).sup_norm() < 1e-14);
        let one = SpectralField::constant(grid.clone(), 1.0);
        assert!(apply_l(&one).values().iter().all(|v| (v - 2.0).abs() < 1e-13));
        let y = y20(grid.clone());
        let ly = apply_l(&y);
        assert!(ly.add_scaled(&y, 4.0).unwrap().sup_norm() < 1e-13);
        let inv = solve_complement(&y).unwrap();
        assert!(inv.add_scaled(&y, 0.25).unwrap().sup_norm() < 1e-13);
        let c = solve_complement(&SpectralField::constant(grid.clone(), 3.0)).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.5).abs() < 1e-13));
        assert!(matches!(solve_complement(&x), Err(CmcError::Precondition(_))));
    }

    #[test]
    fn coordinate_pairing_is_ball_volume() {
        let grid = SphereGrid::shared_default(8);
        let p = project_kernel(&SpectralField::coordinate(grid.clone(), 0));
        assert!((p.vector - Vector3::new(4.0 * PI / 3.0, 0.0, 0.0)).norm() < 1e-13);
        assert!(p.remainder.sup_norm() < 1e-14);
        // the pairing agrees with quadrature
        let f = SpectralField::from_fn(grid.clone(), |x| x.x * x.y + 0.3 * x.z + x.y.powi(3));
        let p = project_kernel(&f);
        for axis in 0..3 {
            let q = SpectralField::from_fn(grid.clone(), |x| f.eval_at(x) * x[axis]).integrate();
            assert!((p.vector[axis] - q).abs() < 1e-12);
        }
        let c = project_kernel(&SpectralField::constant(grid, 2.0));
        assert!(c.vector.norm() < 1e-14);
    }

    /// Finite-difference Laplace–Beltrami on the sphere in (θ, λ).
    fn fd_laplacian(f: &SpectralField, theta: f64, lam: f64, h: f64) -> f64 {
        let at = |t: f64, l: f64| f.eval_at(&Vector3::new(t.sin() * l.cos(), t.sin() * l.sin(), t.cos()));
        let f0 = at(theta, lam);
        let ftt = (at(theta + h, lam) - 2.0 * f0 + at(theta - h, lam)) / (h * h);
        let ft = (at(theta + h, lam) - at(theta - h, lam)) / (2.0 * h);
        let fll = (at(theta, lam + h) - 2.0 * f0 + at(theta, lam - h)) / (h * h);
        ftt + theta.cos() / theta.sin() * ft + fll / theta.sin().powi(2)
    }

    #[test]
    fn eigenvalues_match_finite_difference_laplacian() {
        let grid = SphereGrid::shared_default(32);
        for l in 0..=3usize {
            let mut c = vec![0.0; coeff_count(32)];
            for m in -(l as i64)..=(l as i64) {
                c[coeff_index(l, m)] = 1.0 + 0.1 * m as f64;
            }
            let f = SpectralField::from_coeffs(grid.clone(), c).unwrap();
            let (theta, lam) = (1.1f64, 0.7f64);
            let x = Vector3::new(theta.sin() * lam.cos(), theta.sin() * lam.sin(), theta.cos());
            let estimate = (fd_laplacian(&f, theta, lam, 1e-4) + 2.0 * f.eval_at(&x)) / f.eval_at(&x);
            assert!((estimate - eigenvalue(2, l)).abs() < 1e-3, "l={l}: {estimate}");
        }
    }

    fn random_field(coeffs: Vec<f64>) -> SpectralField {
        let grid = SphereGrid::shared_default(10);
        let mut c = vec![0.0; coeff_count(10)];
        c[..coeffs.len()].copy_from_slice(&coeffs);
        SpectralField::from_coeffs(grid, c).unwrap()
    }

    proptest! {
        #[test]
        fn range_of_l_is_kernel_free(coeffs in prop::collection::vec(-1.0f64..1.0, 1..121)) {
            let f = random_field(coeffs);
            prop_assert!(project_kernel(&apply_l(&f)).vector.norm() < 1e-12);
        }

        #[test]
        fn inverse_on_complement(coeffs in prop::collection::vec(-1.0f64..1.0, 1..121)) {
            let f = project_kernel(&random_field(coeffs)).remainder;
            let phi = solve_complement(&f).unwrap();
            prop_assert!(apply_l(&phi).coeff_distance(&f) < 1e-11);
            prop_assert!(project_kernel(&phi).vector.norm() < 1e-14);
        }

        #[test]
        fn projection_splits_input(coeffs in prop::collection::vec(-1.0f64..1.0, 1..121)) {
            let f = random_field(coeffs);
            let p = project_kernel(&f);
            prop_assert!(project_kernel(&p.remainder).vector.norm() < 1e-12);
            let mut rebuilt = p.remainder.clone();
            for axis in 0..3 {
                let x = SpectralField::coordinate(f.grid().clone(), axis);
                rebuilt = rebuilt.add_scaled(&x, 3.0 / (4.0 * PI) * p.vector[axis]).unwrap();
            }
            prop_assert!(rebuilt.coeff_distance(&f) < 1e-13);
        }
    }
}

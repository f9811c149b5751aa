//! Mean curvature and second fundamental form of graph surfaces in the
//! metric `g`, together with the closed-form and truncated-expansion values
//! used to check them.
//!
//! Orientation: the normal is the inward `g`-unit normal and the flat unit
//! sphere has mean curvature `+n`. Tangents and second derivatives of the
//! embedding come from exact spectral derivatives of `φ`, so the only
//! discretization error is the band limit of `φ` itself.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{CmcError, Result};
use crate::metric::{christoffel_from, MetricSpec};
use crate::sphere_field::{SpectralField, SphereGraph};

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    /// Rescaled mean curvature `H(r, τ, φ)` at the grid nodes.
    pub h: SpectralField,
    /// Largest absolute principal curvature in `g`, unrescaled.
    pub sup_a: f64,
    /// Chart-Euclidean extrinsic diameter over the grid nodes.
    pub diam: f64,
    /// `g`-length factor of the diameter chord, `sqrt(g(e, e))` averaged
    /// over the chord's endpoints; `diam · diam_metric_factor` is the
    /// metric-corrected diameter.
    pub diam_metric_factor: f64,
    /// Area in `g`.
    pub area: f64,
}

impl CurvatureReport {
    pub fn diam_g(&self) -> f64 {
        self.diam * self.diam_metric_factor
    }
}

/// Pointwise quantities on the grid of the graph.
#[derive(Clone, Debug)]
pub(crate) struct PointwiseCurvature {
    pub h: Vec<f64>,
    pub kappa_max: Vec<f64>,
    pub area_element: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
}

#[inline]
fn bilinear(gamma: &[Matrix3<f64>; 3], u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(u.dot(&(gamma[0] * v)), u.dot(&(gamma[1] * v)), u.dot(&(gamma[2] * v)))
}

pub(crate) fn pointwise_curvature(spec: &MetricSpec, graph: &SphereGraph) -> Result<PointwiseCurvature> {
    let grid = graph.grid().clone();
    let jet = grid.synthesize_derivatives(graph.phi.coeffs())?;
    // grid values win over the band-limited synthesis when they differ
    let values = graph.phi.values();
    let r = graph.r;
    let size = grid.len();
    let mut out = PointwiseCurvature {
        h: Vec::with_capacity(size),
        kappa_max: Vec::with_capacity(size),
        area_element: Vec::with_capacity(size),
        points: Vec::with_capacity(size),
    };
    for j in 0..grid.nlat() {
        let (st, ct) = (grid.sin_theta(j), grid.cos_theta(j));
        for k in 0..grid.nlon() {
            let (sl, cl) = (grid.lambda(k).sin(), grid.lambda(k).cos());
            let i = grid.node(j, k);
            let x = Vector3::new(st * cl, st * sl, ct);
            let x_t = Vector3::new(ct * cl, ct * sl, -st);
            let x_l = Vector3::new(-st * sl, st * cl, 0.0);
            let x_tt = -x;
            let x_tl = Vector3::new(-ct * sl, ct * cl, 0.0);
            let x_ll = Vector3::new(-st * cl, -st * sl, 0.0);
            let f = values[i];
            let (ft, fl) = (jet.d_theta[i], jet.d_lambda[i]);
            let (ftt, ftl, fll) = (jet.d_theta2[i], jet.d_theta_lambda[i], jet.d_lambda2[i]);
            let s = 1.0 - f;

            let y = (graph.tau + x * s) / r;
            let y_t = (x_t * s - x * ft) / r;
            let y_l = (x_l * s - x * fl) / r;
            let y_tt = (x_tt * s - x * ftt - x_t * (2.0 * ft)) / r;
            let y_tl = (x_tl * s - x * ftl - x_l * ft - x_t * fl) / r;
            let y_ll = (x_ll * s - x * fll - x_l * (2.0 * fl)) / r;

            if !(y.norm() >= spec.r_min()) {
                return Err(CmcError::Domain(format!(
                    "surface point at radius {} leaves the chart (r_min = {})",
                    y.norm(),
                    spec.r_min()
                )));
            }
            let (g, dg) = spec.metric_with_derivatives_unchecked(&y);
            let gamma = christoffel_from(&g, &dg);
            let ginv = g.try_inverse().ok_or_else(|| CmcError::Domain("degenerate metric".into()))?;

            let gt = g * y_t;
            let gl = g * y_l;
            let induced = Matrix2::new(y_t.dot(&gt), y_t.dot(&gl), y_l.dot(&gt), y_l.dot(&gl));
            let det = induced.determinant();
            if !(det > 1e-14 * induced.trace().powi(2)) {
                return Err(CmcError::Fold(format!("degenerate induced metric at node ({j}, {k})")));
            }
            let cov = y_t.cross(&y_l);
            let nu = -cov / (cov.dot(&(ginv * cov))).sqrt();

            let second = |yab: &Vector3<f64>, ya: &Vector3<f64>, yb: &Vector3<f64>| {
                nu.dot(&(yab + bilinear(&gamma, ya, yb)))
            };
            let a_tt = second(&y_tt, &y_t, &y_t);
            let a_tl = second(&y_tl, &y_t, &y_l);
            let a_ll = second(&y_ll, &y_l, &y_l);
            let a = Matrix2::new(a_tt, a_tl, a_tl, a_ll);
            let inv = induced.try_inverse().ok_or_else(|| CmcError::Fold("singular induced metric".into()))?;
            let shape = inv * a;
            let mean = shape.trace();
            let half = 0.5 * mean;
            let disc = (half * half - shape.determinant()).max(0.0).sqrt();
            out.h.push(mean / r);
            out.kappa_max.push((half + disc).abs().max((half - disc).abs()));
            out.area_element.push(det.sqrt() / st);
            out.points.push(y);
        }
    }
    Ok(out)
}

/// Rescaled inward mean curvature `H(r, τ, φ)` of the graph together with the
/// shape-operator sup, extrinsic diameter and area.
pub fn mean_curvature(spec: &MetricSpec, graph: &SphereGraph) -> Result<CurvatureReport> {
    graph.check_admissible()?;
    let pw = pointwise_curvature(spec, graph)?;
    let grid = graph.grid().clone();
    let mut area = 0.0;
    for j in 0..grid.nlat() {
        let w = grid.weight(j);
        for k in 0..grid.nlon() {
            area += w * pw.area_element[grid.node(j, k)];
        }
    }
    let sup_a = pw.kappa_max.iter().fold(0.0f64, |a, b| a.max(*b));
    let (diam, ends) = diameter(&pw.points);
    let chord = (ends.1 - ends.0).normalize();
    let factor = [ends.0, ends.1]
        .iter()
        .map(|p| chord.dot(&(spec.metric_unchecked(p) * chord)).sqrt())
        .sum::<f64>()
        / 2.0;
    Ok(CurvatureReport {
        h: SpectralField::from_values(grid, pw.h)?,
        sup_a,
        diam,
        diam_metric_factor: factor,
        area,
    })
}

/// Largest pairwise distance and the pair realizing it.
pub fn diameter(points: &[Vector3<f64>]) -> (f64, (Vector3<f64>, Vector3<f64>)) {
    let mut best = (0.0, (points[0], points[0]));
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d2 = (p - q).norm_squared();
            if d2 > best.0 {
                best = (d2, (*p, *q));
            }
        }
    }
    (best.0.sqrt(), best.1)
}

/// Which truncation [`expansion_h0`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionForm {
    /// `n − (nσ/2) r^{n−1}|x+τ|^{1−n} − (n(n−1)σ/2) r^{n−1}(1 + τ·x)|x+τ|^{−n−1}`.
    Full,
    /// `n − σn²/2 r^{n−1} + σn(n−1)(n+1)/2 r^{n−1} τ·x`.
    LinearInTau,
}

/// Truncated expansion of `H(r, τ, 0)(x)` for the centered conformal part of
/// the metric, dropping the `r^{n−1} f` remainder.
pub fn expansion_h0(n: usize, sigma: f64, r: f64, tau: &Vector3<f64>, node: &Vector3<f64>, form: ExpansionForm) -> f64 {
    let nf = n as f64;
    let rp = r.powi(n as i32 - 1);
    let tx = tau.dot(node);
    match form {
        ExpansionForm::Full => {
            let d = (node + tau).norm();
            nf - nf * sigma / 2.0 * rp * d.powf(1.0 - nf)
                - nf * (nf - 1.0) * sigma / 2.0 * rp * d.powf(-nf - 1.0)
                - nf * (nf - 1.0) * sigma / 2.0 * rp * tx * d.powf(-nf - 1.0)
        }
        ExpansionForm::LinearInTau => {
            nf - sigma * nf * nf / 2.0 * rp + sigma * nf * (nf - 1.0) * (nf + 1.0) / 2.0 * rp * tx
        }
    }
}

/// Rescaled mean curvature of the centered coordinate sphere of radius `1/r`
/// in `(1 + σ/|x|^{n−1}) δ`:
/// `F(r) = n (1 + σr^{n−1})^{−1/2} [1 − (n−1)σr^{n−1} / (2(1 + σr^{n−1}))]`.
pub fn schwarzschild_sphere_curvature(n: usize, sigma: f64, r: f64) -> f64 {
    let nf = n as f64;
    let q = sigma * r.powi(n as i32 - 1);
    let u = 1.0 + q;
    nf / u.sqrt() * (1.0 - (nf - 1.0) * q / (2.0 * u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Perturbation;
    use crate::sphere_field::SphereGrid;
    use std::f64::consts::PI;

    #[test]
    fn flat_unit_scale_sphere_has_curvature_n() {
        let grid = SphereGrid::shared_default(16);
        let graph = SphereGraph::round(grid, 0.1, Vector3::new(0.3, 0.0, 0.0)).unwrap();
        let report = mean_curvature(&MetricSpec::flat(), &graph).unwrap();
        for h in report.h.values() {
            assert!((h - 2.0).abs() < 1e-8);
        }
        assert!((report.sup_a - 0.1).abs() < 1e-8);
        assert!((report.diam - 20.0).abs() < 1e-10);
        assert!((report.area - 400.0 * PI).abs() < 1e-8);
        assert!((report.diam_metric_factor - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_constant_graph_has_curvature_n_over_radius() {
        let grid = SphereGrid::shared_default(12);
        let graph = SphereGraph::new(0.1, Vector3::zeros(), SpectralField::constant(grid, 0.1)).unwrap();
        let report = mean_curvature(&MetricSpec::flat(), &graph).unwrap();
        for h in report.h.values() {
            assert!((h - 2.0 / 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn schwarzschild_closed_form_value() {
        assert!((schwarzschild_sphere_curvature(2, 1.0, 0.1) - 1.820_246_761_287).abs() < 1e-11);
        // series 2 − 2σr + (9/4)σ²r² + O(r³)
        let r: f64 = 1e-3;
        let series = 2.0 - 2.0 * r + 2.25 * r * r;
        assert!((schwarzschild_sphere_curvature(2, 1.0, r) - series).abs() < 10.0 * r.powi(3));
    }

    #[test]
    fn centered_schwarzschild_sphere_matches_closed_form() {
        let grid = SphereGrid::shared_default(16);
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let graph = SphereGraph::round(grid, 0.1, Vector3::zeros()).unwrap();
        let report = mean_curvature(&spec, &graph).unwrap();
        let f = schwarzschild_sphere_curvature(2, 1.0, 0.1);
        for h in report.h.values() {
            assert!((h - f).abs() < 1e-12);
        }
        let expected_factor = (1.1f64).sqrt();
        assert!((report.diam_metric_factor - expected_factor).abs() < 1e-12);
    }

    #[test]
    fn expansion_examples() {
        let tau = Vector3::zeros();
        let x = Vector3::new(0.0, 0.6, 0.8);
        let full = expansion_h0(2, 1.0, 0.1, &tau, &x, ExpansionForm::Full);
        let lin = expansion_h0(2, 1.0, 0.1, &tau, &x, ExpansionForm::LinearInTau);
        assert!((full - 1.8).abs() < 1e-15);
        assert!((lin - 1.8).abs() < 1e-15);
        let tau = Vector3::new(0.3, -0.2, 0.1);
        assert_eq!(expansion_h0(2, 0.0, 0.1, &tau, &x, ExpansionForm::Full), 2.0);
        assert_eq!(expansion_h0(2, 0.0, 0.1, &tau, &x, ExpansionForm::LinearInTau), 2.0);
    }

    #[test]
    fn linear_form_is_the_tau_linearization_of_full_form() {
        let x = Vector3::new(0.48, 0.6, 0.64);
        let dir = Vector3::new(0.2, -0.7, 0.4);
        let eps = 1e-6;
        let full = |t: f64| expansion_h0(2, 1.3, 0.07, &(dir * t), &x, ExpansionForm::Full);
        let lin = |t: f64| expansion_h0(2, 1.3, 0.07, &(dir * t), &x, ExpansionForm::LinearInTau);
        assert!((full(0.0) - lin(0.0)).abs() < 1e-15);
        let dfull = (full(eps) - full(-eps)) / (2.0 * eps);
        let dlin = (lin(eps) - lin(-eps)) / (2.0 * eps);
        assert!((dfull - dlin).abs() < 1e-8);
    }

    #[test]
    fn rotation_about_axis_commutes_with_curvature() {
        let grid = SphereGrid::shared_default(12);
        let spec = MetricSpec::schwarzschild(0.8).unwrap();
        let phi = SpectralField::from_fn(grid.clone(), |x| 0.02 * x.x * x.z + 0.01 * x.y * x.y);
        let tau = Vector3::new(0.05, -0.02, 0.03);
        let base = mean_curvature(&spec, &SphereGraph::new(0.1, tau, phi.clone()).unwrap()).unwrap();
        // rotate by `shift` longitude steps: grid-preserving
        let shift = 5;
        let angle = 2.0 * PI * shift as f64 / grid.nlon() as f64;
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        let rotated_phi = SpectralField::from_fn(grid.clone(), |x| phi.eval_at(&(rot.inverse() * x)));
        let rotated =
            mean_curvature(&spec, &SphereGraph::new(0.1, rot * tau, rotated_phi).unwrap()).unwrap();
        for j in 0..grid.nlat() {
            for k in 0..grid.nlon() {
                let a = base.h.values()[grid.node(j, k)];
                let b = rotated.h.values()[grid.node(j, (k + shift) % grid.nlon())];
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn leaving_the_chart_is_a_domain_error() {
        let grid = SphereGrid::shared_default(8);
        let spec = MetricSpec::new(2, 1.0, Perturbation::None, 15.0).unwrap();
        let graph = SphereGraph::round(grid, 0.1, Vector3::zeros()).unwrap();
        assert!(matches!(mean_curvature(&spec, &graph), Err(CmcError::Domain(_))));
    }
}

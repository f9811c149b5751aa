//! Asymptotically flat metrics `g_ij = (1 + σ/r^{n−1}) δ_ij + h_ij` on the
//! chart `R^{n+1} \ B_{r_min}`, with closed-form first derivatives and
//! Christoffel symbols for every built-in perturbation family.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};

/// `∂_k g_ij`, indexed as `dg[k][(i, j)]`.
pub type MetricDerivative = [Matrix3<f64>; 3];

/// `Γ^k_ij`, indexed as `gamma[k][(i, j)]`.
pub type Christoffel = [Matrix3<f64>; 3];

/// The non-conformal part `h_ij` of the metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// `g = (1 + σ/|x − c'|^{n−1}) δ` with `c' = center · reference_radius`.
    TranslatedCenter {
        center: [f64; 3],
        #[serde(default = "default_reference_radius")]
        reference_radius: f64,
    },
    /// `h_ij = eps · p_i p_j · (1 + |x|²)^{−n/2}`.
    RankOneBump { direction: [f64; 3], eps: f64 },
}

fn default_reference_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    n: usize,
    sigma: f64,
    perturbation: Perturbation,
    r_min: f64,
}

impl MetricSpec {
    /// Validates the family and raises `r_min` for negative mass so that the
    /// conformal factor stays at least 1/2 on the chart.
    pub fn new(n: usize, sigma: f64, perturbation: Perturbation, r_min: f64) -> Result<Self> {
        if n < 2 {
            return Err(CmcError::Domain(format!("sphere dimension n = {n} must be at least 2")));
        }
        if n != 2 {
            return Err(CmcError::UnsupportedDimension(n));
        }
        if !sigma.is_finite() {
            return Err(CmcError::Domain("mass must be finite".into()));
        }
        if !(r_min >= 1.0) {
            return Err(CmcError::Domain(format!("r_min = {r_min} must be at least 1")));
        }
        let mut r_min = r_min;
        let mut perturbation = perturbation;
        let offset = match &mut perturbation {
            Perturbation::None => 0.0,
            Perturbation::TranslatedCenter { center, reference_radius } => {
                let c = Vector3::from(*center);
                if !(c.norm() < 1.0) {
                    return Err(CmcError::Domain(format!("translated center |c| = {} must be < 1", c.norm())));
                }
                if !(*reference_radius > 0.0) {
                    return Err(CmcError::Domain("reference radius must be positive".into()));
                }
                c.norm() * *reference_radius
            }
            Perturbation::RankOneBump { direction, eps } => {
                let p = Vector3::from(*direction);
                if !(p.norm() > 0.0) || !eps.is_finite() {
                    return Err(CmcError::Domain("bump direction must be nonzero and eps finite".into()));
                }
                *direction = (p / p.norm()).into();
                0.0
            }
        };
        if sigma < 0.0 {
            let half_radius = (-2.0 * sigma).powf(1.0 / (n as f64 - 1.0));
            r_min = r_min.max(half_radius + offset);
        }
        Ok(Self { n, sigma, perturbation, r_min })
    }

    pub fn flat() -> Self {
        Self { n: 2, sigma: 0.0, perturbation: Perturbation::None, r_min: 1.0 }
    }

    /// Spatial Schwarzschild, `(1 + σ/r) δ` for n = 2.
    pub fn schwarzschild(sigma: f64) -> Result<Self> {
        Self::new(2, sigma, Perturbation::None, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// Chart-scale center of the conformal factor (zero unless translated).
    pub fn conformal_center(&self) -> Vector3<f64> {
        match &self.perturbation {
            Perturbation::TranslatedCenter { center, reference_radius } => {
                Vector3::from(*center) * *reference_radius
            }
            _ => Vector3::zeros(),
        }
    }

    fn check_point(&self, x: &Vector3<f64>) -> Result<()> {
        let radius = x.norm();
        if !(radius >= self.r_min) {
            return Err(CmcError::Domain(format!(
                "point at radius {radius} lies inside the validity radius {}",
                self.r_min
            )));
        }
        Ok(())
    }

    /// Conformal factor `1 + σ|x − a|^{1−n}` and its gradient.
    fn conformal(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let d = x - self.conformal_center();
        let rho = d.norm();
        let nf = self.n as f64;
        let u = 1.0 + self.sigma * rho.powf(1.0 - nf);
        let du = d * (self.sigma * (1.0 - nf) * rho.powf(-nf - 1.0));
        (u, du)
    }

    fn bump(&self, x: &Vector3<f64>) -> Option<(Matrix3<f64>, Vector3<f64>, f64)> {
        match &self.perturbation {
            Perturbation::RankOneBump { direction, eps } => {
                let p = Vector3::from(*direction);
                let nf = self.n as f64;
                let q = 1.0 + x.norm_squared();
                let s = q.powf(-nf / 2.0);
                let ds = x * (-nf * q.powf(-nf / 2.0 - 1.0));
                Some((p * p.transpose() * *eps, ds, s))
            }
            _ => None,
        }
    }

    pub fn metric_at(&self, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
        self.check_point(x)?;
        Ok(self.metric_unchecked(x))
    }

    pub(crate) fn metric_unchecked(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let (u, _) = self.conformal(x);
        let mut g = Matrix3::identity() * u;
        if let Some((ppt, _, s)) = self.bump(x) {
            g += ppt * s;
        }
        g
    }

    /// The metric together with its analytic first derivatives.
    pub fn metric_with_derivatives(&self, x: &Vector3<f64>) -> Result<(Matrix3<f64>, MetricDerivative)> {
        self.check_point(x)?;
        Ok(self.metric_with_derivatives_unchecked(x))
    }

    pub(crate) fn metric_with_derivatives_unchecked(&self, x: &Vector3<f64>) -> (Matrix3<f64>, MetricDerivative) {
        let (u, du) = self.conformal(x);
        let mut g = Matrix3::identity() * u;
        let mut dg = [
            Matrix3::identity() * du.x,
            Matrix3::identity() * du.y,
            Matrix3::identity() * du.z,
        ];
        if let Some((ppt, ds, s)) = self.bump(x) {
            g += ppt * s;
            for k in 0..3 {
                dg[k] += ppt * ds[k];
            }
        }
        (g, dg)
    }

    pub fn christoffel_at(&self, x: &Vector3<f64>) -> Result<Christoffel> {
        self.check_point(x)?;
        let (g, dg) = self.metric_with_derivatives_unchecked(x);
        Ok(christoffel_from(&g, &dg))
    }

    /// `h_ij` and its analytic derivatives through order two, as
    /// `(h, ∂_k h, ∂_k∂_l h)`.
    pub fn perturbation_jet(&self, x: &Vector3<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 3], [[Matrix3<f64>; 3]; 3]) {
        let zero = Matrix3::zeros();
        let nf = self.n as f64;
        match &self.perturbation {
            Perturbation::None => (zero, [zero; 3], [[zero; 3]; 3]),
            Perturbation::TranslatedCenter { .. } => {
                let (a0, a1, a2) = inverse_power_jet(x, &self.conformal_center(), nf);
                let (b0, b1, b2) = inverse_power_jet(x, &Vector3::zeros(), nf);
                let id = Matrix3::identity() * self.sigma;
                let mut d1 = [zero; 3];
                let mut d2 = [[zero; 3]; 3];
                for k in 0..3 {
                    d1[k] = id * (a1[k] - b1[k]);
                    for l in 0..3 {
                        d2[k][l] = id * (a2[(k, l)] - b2[(k, l)]);
                    }
                }
                (id * (a0 - b0), d1, d2)
            }
            Perturbation::RankOneBump { direction, eps } => {
                let p = Vector3::from(*direction);
                let ppt = p * p.transpose() * *eps;
                let q = 1.0 + x.norm_squared();
                let s = q.powf(-nf / 2.0);
                let mut d1 = [zero; 3];
                let mut d2 = [[zero; 3]; 3];
                for k in 0..3 {
                    d1[k] = ppt * (-nf * x[k] * q.powf(-nf / 2.0 - 1.0));
                    for l in 0..3 {
                        let delta = if k == l { 1.0 } else { 0.0 };
                        let v = -nf * delta * q.powf(-nf / 2.0 - 1.0)
                            + nf * (nf + 2.0) * x[k] * x[l] * q.powf(-nf / 2.0 - 2.0);
                        d2[k][l] = ppt * v;
                    }
                }
                (ppt * s, d1, d2)
            }
        }
    }
}

/// Value, gradient and Hessian of `|x − a|^{1−n}`.
fn inverse_power_jet(x: &Vector3<f64>, a: &Vector3<f64>, nf: f64) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let d = x - a;
    let rho = d.norm();
    let v = rho.powf(1.0 - nf);
    let grad = d * ((1.0 - nf) * rho.powf(-nf - 1.0));
    let hess = (Matrix3::identity() * rho.powf(-nf - 1.0) - d * d.transpose() * ((nf + 1.0) * rho.powf(-nf - 3.0)))
        * (1.0 - nf);
    (v, grad, hess)
}

/// `Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn christoffel_from(g: &Matrix3<f64>, dg: &MetricDerivative) -> Christoffel {
    let ginv = g.try_inverse().expect("metric is positive definite on the chart");
    // lowered symbols Γ_{l,ij}
    let mut lowered = [Matrix3::zeros(); 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                lowered[l][(i, j)] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
    }
    let mut gamma = [Matrix3::zeros(); 3];
    for k in 0..3 {
        for l in 0..3 {
            let c = ginv[(k, l)];
            if c != 0.0 {
                gamma[k] += lowered[l] * c;
            }
        }
    }
    gamma
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayOrder {
    pub order: usize,
    /// `sup |∂^m h| · r^{n+m}` over the sample directions, one entry per radius.
    pub scaled_sup: Vec<f64>,
    /// Least-squares slope of `log(scaled_sup)` against `log(r)`.
    pub loglog_slope: f64,
    pub growing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub radii: Vec<f64>,
    pub orders: Vec<DecayOrder>,
    pub valid: bool,
}

/// Slope above which a scaled sup counts as growing along the radii.
pub const DECAY_GROWTH_SLOPE: f64 = 0.05;

/// Samples `|∂^m h| · r^{n+m}` for `m = 0, 1, 2` on a fixed set of directions.
/// Orders three and four are not sampled.
pub fn validate_decay(spec: &MetricSpec, radii: &[f64]) -> DecayReport {
    let directions = fibonacci_directions(96);
    let nf = spec.n() as f64;
    let mut orders: Vec<DecayOrder> = (0..3)
        .map(|order| DecayOrder { order, scaled_sup: Vec::new(), loglog_slope: 0.0, growing: false })
        .collect();
    for &radius in radii {
        let mut sups = [0.0f64; 3];
        for dir in &directions {
            let x = dir * radius;
            let (h, d1, d2) = spec.perturbation_jet(&x);
            sups[0] = sups[0].max(h.amax());
            for k in 0..3 {
                sups[1] = sups[1].max(d1[k].amax());
                for l in 0..3 {
                    sups[2] = sups[2].max(d2[k][l].amax());
                }
            }
        }
        for (m, entry) in orders.iter_mut().enumerate() {
            entry.scaled_sup.push(sups[m] * radius.powf(nf + m as f64));
        }
    }
    for entry in &mut orders {
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .zip(&entry.scaled_sup)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&r, &v)| (r.ln(), v.ln()))
            .collect();
        if pts.len() >= 2 {
            entry.loglog_slope = least_squares_slope(&pts);
            entry.growing = entry.loglog_slope > DECAY_GROWTH_SLOPE;
        }
    }
    let valid = orders.iter().all(|o| !o.growing);
    DecayReport { radii: radii.to_vec(), orders, valid }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn fibonacci_directions(count: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let s = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(s * phi.cos(), s * phi.sin(), z)
        })
        .collect()
}

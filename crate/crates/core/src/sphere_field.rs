//! Scalar fields on S² in a real, fully normalized spherical-harmonic basis,
//! sampled on a Gauss–Legendre × equispaced-longitude grid, plus the graph
//! surfaces `y(x) = (τ + (1 − φ(x)) x) / r` built from them.
//!
//! Basis: `Y_l0 = P̃_l0(cos θ)`, `Y_lm = √2 P̃_lm cos(mλ)` and
//! `Y_l,−m = √2 P̃_lm sin(mλ)` for `m > 0`, with `∫ Y_lm² = 1` and no
//! Condon–Shortley phase. With this choice the degree-one harmonics are the
//! coordinate functions scaled by [`DEGREE_ONE_SCALE`]:
//! `Y_1,1 = s·x¹`, `Y_1,−1 = s·x²`, `Y_1,0 = s·x³`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::error::{CmcError, Result};

/// `sqrt(3 / 4π)`, the factor between `Y_1,·` and the coordinate functions.
pub const DEGREE_ONE_SCALE: f64 = 0.488_602_511_902_919_9;

/// Graph amplitude bound `ε₀ < 1/4` keeping `S^n_φ` embedded.
pub const EMBEDDING_EPS: f64 = 0.2;

/// Tolerance of the pointwise inversion of the direction map.
const RADIAL_INVERSION_TOL: f64 = 1e-12;

/// Index of `(l, m)`, `|m| ≤ l`, in a real coefficient vector.
#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Number of real coefficients through degree `lmax`.
#[inline]
pub fn coeff_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Coefficient slot of the degree-one harmonic proportional to `x^i`.
pub fn degree_one_index(axis: usize) -> usize {
    match axis {
        0 => coeff_index(1, 1),
        1 => coeff_index(1, -1),
        2 => coeff_index(1, 0),
        _ => panic!("axis {axis} out of range"),
    }
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// `P_count(z)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(count: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, 0.0);
    for j in 0..count {
        let p2 = p1;
        p1 = p0;
        p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
    }
    (p0, count as f64 * (z * p0 - p1) / (z * z - 1.0))
}

/// Gauss–Legendre nodes and weights on [−1, 1], nodes in decreasing order.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    for i in 0..count.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (count as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(count, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(count, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = z;
        nodes[count - 1 - i] = -z;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

/// Normalized associated Legendre functions `P̃_lm(cos θ)` and their first
/// and second θ-derivatives, triangular storage. Requires `sin θ > 0`.
fn legendre_jet(lmax: usize, mu: f64, sin_theta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let size = tri(lmax, lmax) + 1;
    let mut p = vec![0.0; size];
    p[0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        p[tri(m, m)] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sin_theta * p[tri(m - 1, m - 1)];
    }
    for m in 0..lmax {
        p[tri(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * mu * p[tri(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[tri(l, m)] = a * (mu * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    let cot = mu / sin_theta;
    let mut dp = vec![0.0; size];
    let mut d2p = vec![0.0; size];
    for l in 0..=lmax {
        for m in 0..=l {
            let (lf, mf) = (l as f64, m as f64);
            let lower = if l > m {
                ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[tri(l - 1, m)]
            } else {
                0.0
            };
            let d = (lf * mu * p[tri(l, m)] - lower) / sin_theta;
            dp[tri(l, m)] = d;
            d2p[tri(l, m)] =
                -cot * d - (lf * (lf + 1.0) - mf * mf / (sin_theta * sin_theta)) * p[tri(l, m)];
        }
    }
    (p, dp, d2p)
}

/// Quadrature grid and transform tables for band limit `lmax`.
#[derive(Debug)]
pub struct SphereGrid {
    lmax: usize,
    nlat: usize,
    nlon: usize,
    mu: Vec<f64>,
    sin_theta: Vec<f64>,
    theta: Vec<f64>,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    // cos(mλ_k), sin(mλ_k), row-major in m
    cos_ml: Vec<f64>,
    sin_ml: Vec<f64>,
    // per latitude, triangular in (l, m)
    p: Vec<Vec<f64>>,
    dp: Vec<Vec<f64>>,
    d2p: Vec<Vec<f64>>,
}

impl SphereGrid {
    pub fn new(lmax: usize, nlat: usize, nlon: usize) -> Result<Self> {
        if nlat < lmax + 1 {
            return Err(CmcError::Shape(format!("nlat = {nlat} cannot resolve lmax = {lmax} (need ≥ {})", lmax + 1)));
        }
        if nlon < 2 * lmax + 1 {
            return Err(CmcError::Shape(format!(
                "nlon = {nlon} cannot resolve lmax = {lmax} (need ≥ {})",
                2 * lmax + 1
            )));
        }
        let (mu, gw) = gauss_legendre(nlat);
        let sin_theta: Vec<f64> = mu.iter().map(|m| (1.0 - m * m).sqrt()).collect();
        let theta: Vec<f64> = mu.iter().map(|m| m.acos()).collect();
        let dl = 2.0 * PI / nlon as f64;
        let weights: Vec<f64> = gw.iter().map(|w| w * dl).collect();
        let lambda: Vec<f64> = (0..nlon).map(|k| dl * k as f64).collect();
        let mut cos_ml = vec![0.0; (lmax + 1) * nlon];
        let mut sin_ml = vec![0.0; (lmax + 1) * nlon];
        for m in 0..=lmax {
            for k in 0..nlon {
                // exact reduction of m·k modulo nlon keeps the tables symmetric
                let angle = dl * ((m * k) % nlon) as f64;
                cos_ml[m * nlon + k] = angle.cos();
                sin_ml[m * nlon + k] = angle.sin();
            }
        }
        let mut p = Vec::with_capacity(nlat);
        let mut dp = Vec::with_capacity(nlat);
        let mut d2p = Vec::with_capacity(nlat);
        for j in 0..nlat {
            let (a, b, c) = legendre_jet(lmax, mu[j], sin_theta[j]);
            p.push(a);
            dp.push(b);
            d2p.push(c);
        }
        Ok(Self { lmax, nlat, nlon, mu, sin_theta, theta, weights, lambda, cos_ml, sin_ml, p, dp, d2p })
    }

    /// Default resolution `nlat = lmax + 2`, `nlon = 2·lmax + 4`.
    pub fn with_lmax(lmax: usize) -> Self {
        Self::new(lmax, lmax + 2, 2 * lmax + 4).expect("default grid sizes resolve lmax")
    }

    /// Process-wide cache of grids, keyed by resolution.
    pub fn shared(lmax: usize, nlat: usize, nlon: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<SphereGrid>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (lmax, nlat, nlon);
        if let Some(grid) = cache.lock().expect("grid cache").get(&key) {
            return Ok(grid.clone());
        }
        let grid = Arc::new(Self::new(lmax, nlat, nlon)?);
        cache.lock().expect("grid cache").insert(key, grid.clone());
        Ok(grid)
    }

    pub fn shared_default(lmax: usize) -> Arc<Self> {
        Self::shared(lmax, lmax + 2, 2 * lmax + 4).expect("default grid sizes resolve lmax")
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.theta[j]
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.lambda[k]
    }

    pub fn sin_theta(&self, j: usize) -> f64 {
        self.sin_theta[j]
    }

    pub fn cos_theta(&self, j: usize) -> f64 {
        self.mu[j]
    }

    /// Quadrature weight of node `(j, k)` for `∫_{S²} f dvol`.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Flat node index.
    #[inline]
    pub fn node(&self, j: usize, k: usize) -> usize {
        j * self.nlon + k
    }

    /// Unit vector of node `(j, k)`.
    pub fn point(&self, j: usize, k: usize) -> Vector3<f64> {
        let s = self.sin_theta[j];
        Vector3::new(s * self.lambda[k].cos(), s * self.lambda[k].sin(), self.mu[j])
    }

    /// All node unit vectors in flat order.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.nlat {
            for k in 0..self.nlon {
                out.push(self.point(j, k));
            }
        }
        out
    }

    fn cos_at(&self, m: usize, k: usize) -> f64 {
        self.cos_ml[m * self.nlon + k]
    }

    fn sin_at(&self, m: usize, k: usize) -> f64 {
        self.sin_ml[m * self.nlon + k]
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != coeff_count(self.lmax) {
            return Err(CmcError::Shape(format!(
                "{} coefficients do not match lmax = {} ({} expected)",
                coeffs.len(),
                self.lmax,
                coeff_count(self.lmax)
            )));
        }
        Ok(())
    }

    fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(CmcError::Shape(format!(
                "{} grid values do not match a {}×{} grid",
                values.len(),
                self.nlat,
                self.nlon
            )));
        }
        Ok(())
    }

    /// Quadrature of grid values over the round sphere.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.nlat {
            let row: f64 = values[j * self.nlon..(j + 1) * self.nlon].iter().sum();
            total += self.weights[j] * row;
        }
        total
    }

    /// Coefficients of the degree-`lmax` projection of grid values.
    pub fn analyze(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_values(values)?;
        let lmax = self.lmax;
        let mut coeffs = vec![0.0; coeff_count(lmax)];
        let mut a = vec![0.0; lmax + 1];
        let mut b = vec![0.0; lmax + 1];
        for j in 0..self.nlat {
            let row = &values[j * self.nlon..(j + 1) * self.nlon];
            for m in 0..=lmax {
                let (mut sa, mut sb) = (0.0, 0.0);
                for (k, v) in row.iter().enumerate() {
                    sa += v * self.cos_at(m, k);
                    sb += v * self.sin_at(m, k);
                }
                a[m] = sa * self.weights[j];
                b[m] = sb * self.weights[j];
            }
            let p = &self.p[j];
            for l in 0..=lmax {
                coeffs[coeff_index(l, 0)] += p[tri(l, 0)] * a[0];
                for m in 1..=l {
                    let pl = std::f64::consts::SQRT_2 * p[tri(l, m)];
                    coeffs[coeff_index(l, m as i64)] += pl * a[m];
                    coeffs[coeff_index(l, -(m as i64))] += pl * b[m];
                }
            }
        }
        Ok(coeffs)
    }

    /// Grid values of a coefficient vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.synthesize_jet(coeffs, false)?.value)
    }

    /// Values and exact θ/λ derivatives through second order.
    pub fn synthesize_derivatives(&self, coeffs: &[f64]) -> Result<GridJet> {
        self.synthesize_jet(coeffs, true)
    }

    fn synthesize_jet(&self, coeffs: &[f64], derivatives: bool) -> Result<GridJet> {
        self.check_coeffs(coeffs)?;
        let lmax = self.lmax;
        let n = self.len();
        let mut jet = GridJet {
            value: vec![0.0; n],
            d_theta: vec![0.0; if derivatives { n } else { 0 }],
            d_lambda: vec![0.0; if derivatives { n } else { 0 }],
            d_theta2: vec![0.0; if derivatives { n } else { 0 }],
            d_theta_lambda: vec![0.0; if derivatives { n } else { 0 }],
            d_lambda2: vec![0.0; if derivatives { n } else { 0 }],
        };
        // per-m latitude sums [cos-part, sin-part] for value, ∂θ, ∂θθ
        let mut a = vec![[0.0f64; 3]; lmax + 1];
        let mut b = vec![[0.0f64; 3]; lmax + 1];
        for j in 0..self.nlat {
            let (p, dp, d2p) = (&self.p[j], &self.dp[j], &self.d2p[j]);
            for m in 0..=lmax {
                let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let mut sa = [0.0; 3];
                let mut sb = [0.0; 3];
                for l in m..=lmax {
                    let t = tri(l, m);
                    let ca = coeffs[coeff_index(l, m as i64)];
                    let cb = if m > 0 { coeffs[coeff_index(l, -(m as i64))] } else { 0.0 };
                    sa[0] += ca * p[t];
                    sb[0] += cb * p[t];
                    if derivatives {
                        sa[1] += ca * dp[t];
                        sb[1] += cb * dp[t];
                        sa[2] += ca * d2p[t];
                        sb[2] += cb * d2p[t];
                    }
                }
                for q in 0..3 {
                    a[m][q] = norm * sa[q];
                    b[m][q] = norm * sb[q];
                }
            }
            for k in 0..self.nlon {
                let idx = self.node(j, k);
                let mut v = [0.0; 6];
                for m in 0..=lmax {
                    let (c, s) = (self.cos_at(m, k), self.sin_at(m, k));
                    let mf = m as f64;
                    v[0] += a[m][0] * c + b[m][0] * s;
                    if derivatives {
                        v[1] += a[m][1] * c + b[m][1] * s;
                        v[2] += mf * (-a[m][0] * s + b[m][0] * c);
                        v[3] += a[m][2] * c + b[m][2] * s;
                        v[4] += mf * (-a[m][1] * s + b[m][1] * c);
                        v[5] += -mf * mf * (a[m][0] * c + b[m][0] * s);
                    }
                }
                jet.value[idx] = v[0];
                if derivatives {
                    jet.d_theta[idx] = v[1];
                    jet.d_lambda[idx] = v[2];
                    jet.d_theta2[idx] = v[3];
                    jet.d_theta_lambda[idx] = v[4];
                    jet.d_lambda2[idx] = v[5];
                }
            }
        }
        Ok(jet)
    }
}

/// Grid values of a field and its θ/λ partial derivatives.
#[derive(Clone, Debug)]
pub struct GridJet {
    pub value: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_lambda: Vec<f64>,
    pub d_theta2: Vec<f64>,
    pub d_theta_lambda: Vec<f64>,
    pub d_lambda2: Vec<f64>,
}

/// Analysis of grid values into spherical-harmonic coefficients.
pub fn sht_analyze(grid: &SphereGrid, values: &[f64]) -> Result<Vec<f64>> {
    grid.analyze(values)
}

/// Synthesis of spherical-harmonic coefficients onto the grid.
pub fn sht_synthesize(grid: &SphereGrid, coeffs: &[f64]) -> Result<Vec<f64>> {
    grid.synthesize(coeffs)
}

/// A scalar field on S²: harmonic coefficients through `lmax` and values on
/// the quadrature nodes. Fields built from coefficients are band-limited;
/// fields built from values keep the sampled values verbatim alongside their
/// projection.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<SphereGrid>,
    coeffs: Vec<f64>,
    values: Vec<f64>,
}

impl SpectralField {
    pub fn from_coeffs(grid: Arc<SphereGrid>, coeffs: Vec<f64>) -> Result<Self> {
        let values = grid.synthesize(&coeffs)?;
        Ok(Self { grid, coeffs, values })
    }

    pub fn from_values(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        let coeffs = grid.analyze(&values)?;
        Ok(Self { grid, coeffs, values })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(&Vector3<f64>) -> f64) -> Self {
        let values = grid.points().iter().map(f).collect();
        Self::from_values(grid, values).expect("values sized by the grid")
    }

    pub fn zeros(grid: Arc<SphereGrid>) -> Self {
        let n = grid.len();
        let c = coeff_count(grid.lmax());
        Self { grid, coeffs: vec![0.0; c], values: vec![0.0; n] }
    }

    pub fn constant(grid: Arc<SphereGrid>, value: f64) -> Self {
        let mut coeffs = vec![0.0; coeff_count(grid.lmax())];
        coeffs[0] = value * (4.0 * PI).sqrt();
        let values = vec![value; grid.len()];
        Self { grid, coeffs, values }
    }

    /// The coordinate function `x^axis` restricted to the sphere.
    pub fn coordinate(grid: Arc<SphereGrid>, axis: usize) -> Self {
        let mut coeffs = vec![0.0; coeff_count(grid.lmax())];
        coeffs[degree_one_index(axis)] = 1.0 / DEGREE_ONE_SCALE;
        Self::from_coeffs(grid, coeffs).expect("coefficients sized by the grid")
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn lmax(&self) -> usize {
        self.grid.lmax()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeff(&self, l: usize, m: i64) -> f64 {
        self.coeffs[coeff_index(l, m)]
    }

    /// Integral over the round sphere by quadrature of the grid values.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Sup over the grid of the field and its first and second θ/λ derivatives.
    pub fn c2_sup_norm(&self) -> f64 {
        let jet = self.grid.synthesize_derivatives(&self.coeffs).expect("sized by the grid");
        [&jet.value, &jet.d_theta, &jet.d_lambda, &jet.d_theta2, &jet.d_theta_lambda, &jet.d_lambda2]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + factor · other`; both fields must share a grid.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        if self.grid.len() != other.grid.len() || self.lmax() != other.lmax() {
            return Err(CmcError::Shape("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + factor * b).collect(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + factor * b).collect(),
        })
    }

    /// Maximum absolute coefficient difference; coefficient vectors of
    /// different band limits are compared with zero padding.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let len = self.coeffs.len().max(other.coeffs.len());
        (0..len)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(0.0);
                let b = other.coeffs.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The same coefficients (truncated or zero padded) on another grid.
    pub fn resampled(&self, grid: Arc<SphereGrid>) -> Self {
        let mut coeffs = vec![0.0; coeff_count(grid.lmax())];
        let shared = coeffs.len().min(self.coeffs.len());
        coeffs[..shared].copy_from_slice(&self.coeffs[..shared]);
        Self::from_coeffs(grid, coeffs).expect("coefficients sized by the grid")
    }

    /// Value at an arbitrary unit vector.
    pub fn eval_at(&self, x: &Vector3<f64>) -> f64 {
        self.eval_with_gradient(x).0
    }

    /// Value and surface gradient (a tangent vector in R³) at a unit vector.
    pub fn eval_with_gradient(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let lmax = self.lmax();
        let mu = x.z.clamp(-1.0, 1.0);
        let sin_theta = (x.x * x.x + x.y * x.y).sqrt().max(1e-300);
        let lam = x.y.atan2(x.x);
        let (p, dp, _) = legendre_jet(lmax, mu, sin_theta);
        let (mut f, mut ft, mut fl) = (0.0, 0.0, 0.0);
        for m in 0..=lmax {
            let mf = m as f64;
            let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
            let (c, s) = ((mf * lam).cos(), (mf * lam).sin());
            for l in m..=lmax {
                let ca = self.coeffs[coeff_index(l, m as i64)];
                let cb = if m > 0 { self.coeffs[coeff_index(l, -(m as i64))] } else { 0.0 };
                let t = tri(l, m);
                f += norm * p[t] * (ca * c + cb * s);
                ft += norm * dp[t] * (ca * c + cb * s);
                fl += norm * p[t] * mf * (-ca * s + cb * c);
            }
        }
        let e_theta = Vector3::new(mu * lam.cos(), mu * lam.sin(), -sin_theta);
        let e_lambda = Vector3::new(-lam.sin(), lam.cos(), 0.0);
        (f, e_theta * ft + e_lambda * (fl / sin_theta))
    }
}

/// One candidate leaf `S_{r,τ,φ}`: the surface `y(x) = (τ + (1 − φ(x)) x) / r`
/// over the unit sphere, with inward normal `ν(x) = −x`.
#[derive(Clone, Debug)]
pub struct SphereGraph {
    pub r: f64,
    pub tau: Vector3<f64>,
    pub phi: SpectralField,
}

impl SphereGraph {
    /// Checks `0 < r < 1/4`, `|τ| + r + sup|φ| ≤ 1` and `sup|φ| ≤ ε₀`.
    pub fn new(r: f64, tau: Vector3<f64>, phi: SpectralField) -> Result<Self> {
        let graph = Self { r, tau, phi };
        graph.check_admissible()?;
        Ok(graph)
    }

    pub fn round(grid: Arc<SphereGrid>, r: f64, tau: Vector3<f64>) -> Result<Self> {
        Self::new(r, tau, SpectralField::zeros(grid))
    }

    pub fn check_admissible(&self) -> Result<()> {
        let sup = self.phi.sup_norm();
        if !(self.r > 0.0 && self.r < 0.25) {
            return Err(CmcError::Domain(format!("scale r = {} outside (0, 1/4)", self.r)));
        }
        if !(self.tau.norm() + self.r + sup <= 1.0) {
            return Err(CmcError::Domain(format!(
                "|τ| + r + sup|φ| = {} exceeds 1",
                self.tau.norm() + self.r + sup
            )));
        }
        if !(sup <= EMBEDDING_EPS) {
            return Err(CmcError::Domain(format!("sup|φ| = {sup} exceeds ε₀ = {EMBEDDING_EPS}")));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.phi.grid()
    }

    /// Surface points at every grid node.
    pub fn surface_points(&self) -> Vec<Vector3<f64>> {
        let grid = self.grid();
        let mut out = Vec::with_capacity(grid.len());
        for j in 0..grid.nlat() {
            for k in 0..grid.nlon() {
                let x = grid.point(j, k);
                let phi = self.phi.values()[grid.node(j, k)];
                out.push((self.tau + x * (1.0 - phi)) / self.r);
            }
        }
        out
    }

    /// Chart center `τ / r` of the underlying round sphere.
    pub fn center(&self) -> Vector3<f64> {
        self.tau / self.r
    }
}

/// Surface point `y = (τ + (1 − φ(x)) x) / r` above the unit vector `x`.
pub fn embed(graph: &SphereGraph, node: &Vector3<f64>) -> Result<Vector3<f64>> {
    graph.check_admissible()?;
    let x = node.normalize();
    Ok((graph.tau + x * (1.0 - graph.phi.eval_at(&x))) / graph.r)
}

/// Direction map `v(x) = y(x)/|y(x)|`, its tangent Jacobian in an orthonormal
/// frame `(e1, e2)` at `x`, and `|y(x)|`.
fn direction_map(graph: &SphereGraph, x: &Vector3<f64>) -> (Vector3<f64>, [Vector3<f64>; 2], [Vector3<f64>; 2], f64) {
    let (phi, grad) = graph.phi.eval_with_gradient(x);
    let y = (graph.tau + x * (1.0 - phi)) / graph.r;
    let norm = y.norm();
    let v = y / norm;
    let helper = if x.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = x.cross(&helper).normalize();
    let e2 = x.cross(&e1);
    let frame = [e1, e2];
    let dv = frame.map(|e| {
        let dy = (e * (1.0 - phi) - x * grad.dot(&e)) / graph.r;
        (dy - v * v.dot(&dy)) / norm
    });
    (v, frame, dv, norm)
}

/// Re-expresses the leaf as a radial graph `{φ̃(u) u}` over the unit sphere:
/// `φ̃(v(x)) = |y(x)|`, resampled onto the grid of `graph.phi` by inverting the
/// direction map pointwise with Newton's method.
pub fn radial_graph(graph: &SphereGraph) -> Result<SpectralField> {
    graph.check_admissible()?;
    let grid = graph.grid().clone();
    // the direction map must be a local diffeomorphism at every node
    for (idx, x) in grid.points().iter().enumerate() {
        let (v, _, dv, _) = direction_map(graph, x);
        let det = dv[0].cross(&dv[1]).dot(&v);
        if !(det > 1e-3) {
            return Err(CmcError::GraphFold(format!("direction map degenerates at node {idx} (det = {det})")));
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    for u in grid.points() {
        let mut x = u;
        let mut converged = None;
        for _ in 0..60 {
            let (v, frame, dv, norm) = direction_map(graph, &x);
            let rhs = u - v;
            if rhs.norm() < RADIAL_INVERSION_TOL {
                converged = Some(norm);
                break;
            }
            let jtj = Matrix2::new(dv[0].dot(&dv[0]), dv[0].dot(&dv[1]), dv[1].dot(&dv[0]), dv[1].dot(&dv[1]));
            let jtr = Vector2::new(dv[0].dot(&rhs), dv[1].dot(&rhs));
            let step = jtj
                .lu()
                .solve(&jtr)
                .ok_or_else(|| CmcError::GraphFold("singular direction-map Jacobian".into()))?;
            x = (x + frame[0] * step.x + frame[1] * step.y).normalize();
        }
        let value = converged.ok_or_else(|| {
            CmcError::GraphFold(format!("direction map inversion did not converge at u = {u:?}"))
        })?;
        values.push(value);
    }
    SpectralField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lmax: usize) -> Arc<SphereGrid> {
        SphereGrid::shared_default(lmax)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for deg in 0..14 {
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn degree_one_scale_constant() {
        assert!((DEGREE_ONE_SCALE - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn constant_field_is_single_coefficient() {
        let g = grid(8);
        let coeffs = g.analyze(&vec![1.0; g.len()]).unwrap();
        assert!((coeffs[0] - (4.0 * PI).sqrt()).abs() < 1e-13);
        assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn coordinate_function_is_single_degree_one_coefficient() {
        let g = grid(12);
        let field = SpectralField::from_fn(g.clone(), |x| x.x);
        for (i, c) in field.coeffs().iter().enumerate() {
            if i == degree_one_index(0) {
                assert!((c - 1.0 / DEGREE_ONE_SCALE).abs() < 1e-12);
            } else {
                assert!(c.abs() < 1e-12, "coefficient {i} = {c}");
            }
        }
        for axis in 0..3 {
            let f = SpectralField::coordinate(g.clone(), axis);
            for (v, p) in f.values().iter().zip(g.points()) {
                assert!((v - p[axis]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn integration_examples() {
        let g = grid(16);
        assert!((SpectralField::constant(g.clone(), 1.0).integrate() - 4.0 * PI).abs() < 1e-12);
        assert!(SpectralField::from_fn(g.clone(), |x| x.x).integrate().abs() < 1e-12);
        let sq = SpectralField::from_fn(g, |x| x.x * x.x).integrate();
        assert!((sq - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let g = grid(6);
        assert!(matches!(g.analyze(&[1.0; 5]), Err(CmcError::Shape(_))));
        assert!(matches!(g.synthesize(&[1.0; 5]), Err(CmcError::Shape(_))));
        assert!(matches!(SphereGrid::new(10, 9, 40), Err(CmcError::Shape(_))));
        assert!(matches!(SphereGrid::new(10, 12, 20), Err(CmcError::Shape(_))));
    }

    #[test]
    fn theta_derivatives_match_finite_differences() {
        let lmax = 9;
        let h = 1e-5;
        for &theta in &[0.3f64, 1.1, 2.5] {
            let (p, dp, d2p) = legendre_jet(lmax, theta.cos(), theta.sin());
            let (pp, dpp, _) = legendre_jet(lmax, (theta + h).cos(), (theta + h).sin());
            let (pm, dpm, _) = legendre_jet(lmax, (theta - h).cos(), (theta - h).sin());
            for t in 0..p.len() {
                let fd = (pp[t] - pm[t]) / (2.0 * h);
                assert!((fd - dp[t]).abs() < 1e-7 * (1.0 + dp[t].abs()), "dp[{t}]");
                let fd2 = (dpp[t] - dpm[t]) / (2.0 * h);
                assert!((fd2 - d2p[t]).abs() < 1e-6 * (1.0 + d2p[t].abs()), "d2p[{t}]");
            }
        }
    }

    #[test]
    fn grid_derivatives_of_a_known_function() {
        // f = x¹x³ = sin θ cos θ cos λ
        let g = grid(6);
        let f = SpectralField::from_fn(g.clone(), |x| x.x * x.z);
        let jet = g.synthesize_derivatives(f.coeffs()).unwrap();
        for j in 0..g.nlat() {
            for k in 0..g.nlon() {
                let (t, l) = (g.theta(j), g.lambda(k));
                let i = g.node(j, k);
                assert!((jet.d_theta[i] - (2.0 * t).cos() * l.cos()).abs() < 1e-13);
                assert!((jet.d_lambda[i] + 0.5 * (2.0 * t).sin() * l.sin()).abs() < 1e-13);
                assert!((jet.d_theta2[i] + 2.0 * (2.0 * t).sin() * l.cos()).abs() < 1e-13);
                assert!((jet.d_theta_lambda[i] + (2.0 * t).cos() * l.sin()).abs() < 1e-13);
                assert!((jet.d_lambda2[i] + 0.5 * (2.0 * t).sin() * l.cos()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn point_evaluation_matches_grid_and_gradient() {
        let g = grid(8);
        let f = SpectralField::from_fn(g.clone(), |x| x.x * x.y + 0.3 * x.z.powi(3) - 0.2);
        let x = Vector3::new(0.2, -0.5, 0.7).normalize();
        let (v, grad) = f.eval_with_gradient(&x);
        let exact = x.x * x.y + 0.3 * x.z.powi(3) - 0.2;
        assert!((v - exact).abs() < 1e-13);
        let ambient = Vector3::new(x.y, x.x, 0.9 * x.z * x.z);
        let tangential = ambient - x * ambient.dot(&x);
        assert!((grad - tangential).norm() < 1e-12);
        for (i, p) in g.points().iter().enumerate().step_by(7) {
            assert!((f.eval_at(p) - f.values()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn embed_examples() {
        let g = grid(8);
        let flat = SphereGraph::round(g.clone(), 0.1, Vector3::zeros()).unwrap();
        assert!((embed(&flat, &Vector3::x()).unwrap() - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
        let shifted =
            SphereGraph::new(0.1, Vector3::new(0.05, 0.0, 0.0), SpectralField::constant(g.clone(), 0.2)).unwrap();
        assert!((embed(&shifted, &Vector3::x()).unwrap() - Vector3::new(8.5, 0.0, 0.0)).norm() < 1e-12);
        let tilted = SphereGraph::new(0.1, Vector3::zeros(), SpectralField::coordinate(g, 0).scaled(0.1)).unwrap();
        assert!((embed(&tilted, &Vector3::y()).unwrap() - Vector3::new(0.0, 10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inadmissible_graphs_are_rejected() {
        let g = grid(8);
        assert!(matches!(SphereGraph::round(g.clone(), 0.3, Vector3::zeros()), Err(CmcError::Domain(_))));
        assert!(matches!(
            SphereGraph::new(0.1, Vector3::new(0.95, 0.0, 0.0), SpectralField::constant(g.clone(), 0.0)),
            Err(CmcError::Domain(_))
        ));
        assert!(matches!(
            SphereGraph::new(0.1, Vector3::zeros(), SpectralField::constant(g, 0.24)),
            Err(CmcError::Domain(_))
        ));
    }

    #[test]
    fn radial_graph_of_round_spheres() {
        let g = grid(12);
        let centered = SphereGraph::round(g.clone(), 0.1, Vector3::zeros()).unwrap();
        let rg = radial_graph(&centered).unwrap();
        assert!(rg.values().iter().all(|v| (v - 10.0).abs() < 1e-12));

        let shifted = SphereGraph::round(g.clone(), 0.1, Vector3::new(0.1, 0.0, 0.0)).unwrap();
        let rg = radial_graph(&shifted).unwrap();
        // exact radial function of the sphere of radius 10 about e₁
        for (u, v) in g.points().iter().zip(rg.values()) {
            let b = u.x;
            let exact = b + (b * b + 99.0).sqrt();
            assert!((v - exact).abs() < 1e-10);
        }
        assert!((rg.eval_at(&Vector3::x()) - 11.0).abs() < 1e-3);
    }

    #[test]
    fn radial_graph_of_constant_graph_with_shift() {
        let g = grid(10);
        let c = 0.05;
        let tau = Vector3::new(0.0, 0.04, -0.03);
        let graph = SphereGraph::new(0.1, tau, SpectralField::constant(g.clone(), c)).unwrap();
        let rg = radial_graph(&graph).unwrap();
        let center = tau / 0.1;
        let radius = (1.0 - c) / 0.1;
        for (u, v) in g.points().iter().zip(rg.values()) {
            let b = u.dot(&center);
            let exact = b + (b * b - center.norm_squared() + radius * radius).sqrt();
            assert!((v - exact).abs() < 1e-10);
        }
    }
}

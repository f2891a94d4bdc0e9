//! Exact stationary analysis of the splittings on the unit linear
//! oscillator `U = q²/2`, `M = 1`.
//!
//! One step is affine, `x' = A x + noise` with `A = Θ_h D` and noise
//! covariance `Q = Θ_h N Θ_hᵀ`, where `Θ_h` is the linear map of the
//! deterministic factor, `D = diag(1, e^{−γh})` and `N = diag(0, Σ_h)`. The
//! stationary law is the centred Gaussian whose covariance solves
//! `Σ = A Σ Aᵀ + Q`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{require_positive, GlaError, Result};
use crate::gla::SplittingMethod;

/// A Gaussian law on the `(q, p)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        let sym = (cov - cov.transpose()).abs().max();
        let det = cov.determinant();
        if !(cov[(0, 0)] > 0.0 && det > 0.0) || sym > 1e-12 * cov.abs().max() {
            return Err(GlaError::invalid(format!("covariance is not SPD: {cov:?}")));
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: Matrix2<f64>) -> Result<Self> {
        Self::new(Vector2::zeros(), cov)
    }

    /// The Boltzmann–Gibbs law of the unit oscillator, `N(0, β⁻¹ I)`.
    pub fn oscillator_gibbs(beta: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        Self::centered(Matrix2::identity() / beta)
    }

    pub fn density(&self, x: Vector2<f64>) -> f64 {
        let d = x - self.mean;
        let inv = self.cov.try_inverse().expect("SPD covariance is invertible");
        let quad = (d.transpose() * inv * d)[(0, 0)];
        (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * self.cov.determinant().sqrt())
    }
}

/// Linear map `Θ_h` of the deterministic factor on `U = q²/2`, `M = 1`.
pub fn oscillator_flow_matrix(method: &SplittingMethod, h: f64) -> Matrix2<f64> {
    match method {
        SplittingMethod::ExactHarmonic => {
            let (s, c) = h.sin_cos();
            Matrix2::new(c, s, -s, c)
        }
        SplittingMethod::Gla(scheme) => {
            let coeffs = scheme.coefficients();
            let mut theta = Matrix2::identity();
            for (&c, &d) in coeffs.kicks().iter().zip(coeffs.drifts()) {
                let kick = Matrix2::new(1.0, 0.0, -c * h, 1.0);
                let drift = Matrix2::new(1.0, d * h, 0.0, 1.0);
                theta = drift * kick * theta;
            }
            theta
        }
    }
}

/// `(A, Q)` of one splitting step on the unit oscillator.
pub fn linear_scheme_matrices(
    method: &SplittingMethod,
    h: f64,
    gamma: f64,
    beta: f64,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    require_positive("step size h", h)?;
    require_positive("gamma", gamma)?;
    require_positive("beta", beta)?;
    let theta = oscillator_flow_matrix(method, h);
    let decay = Matrix2::new(1.0, 0.0, 0.0, (-gamma * h).exp());
    let sigma = -(-2.0 * gamma * h).exp_m1() / beta;
    let noise = Matrix2::new(0.0, 0.0, 0.0, sigma);
    Ok((theta * decay, theta * noise * theta.transpose()))
}

/// Largest eigenvalue modulus of a 2×2 matrix.
pub fn spectral_radius_2x2(a: &Matrix2<f64>) -> f64 {
    let tr = a.trace();
    let det = a.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
    } else {
        det.abs().sqrt()
    }
}

/// Unique symmetric solution of `Σ = A Σ Aᵀ + Q`, by a 3×3 solve on
/// `(Σ₁₁, Σ₁₂, Σ₂₂)`. Requires spectral radius of `A` below one.
pub fn discrete_lyapunov_2x2(a: &Matrix2<f64>, q: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let radius = spectral_radius_2x2(a);
    if radius.is_nan() || radius >= 1.0 {
        return Err(GlaError::UnstableScheme { spectral_radius: radius });
    }
    let idx = [(0, 0), (0, 1), (1, 1)];
    let mut lhs = Matrix3::zeros();
    for (row, &(i, j)) in idx.iter().enumerate() {
        let coeffs = [
            a[(i, 0)] * a[(j, 0)],
            a[(i, 0)] * a[(j, 1)] + a[(i, 1)] * a[(j, 0)],
            a[(i, 1)] * a[(j, 1)],
        ];
        for col in 0..3 {
            lhs[(row, col)] = if row == col { 1.0 } else { 0.0 } - coeffs[col];
        }
    }
    let rhs = Vector3::new(q[(0, 0)], 0.5 * (q[(0, 1)] + q[(1, 0)]), q[(1, 1)]);
    let lu = lhs.lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| GlaError::Numeric("singular Lyapunov system".into()))?;
    // One step of iterative refinement.
    if let Some(dx) = lu.solve(&(rhs - lhs * x)) {
        x += dx;
    }
    Ok(Matrix2::new(x[0], x[1], x[1], x[2]))
}

/// `max |Σ − AΣAᵀ − Q|`.
pub fn lyapunov_residual(a: &Matrix2<f64>, q: &Matrix2<f64>, sigma: &Matrix2<f64>) -> f64 {
    (sigma - a * sigma * a.transpose() - q).abs().max()
}

/// Stationary covariance of the splitting on the unit oscillator.
pub fn stationary_covariance(
    method: &SplittingMethod,
    h: f64,
    gamma: f64,
    beta: f64,
) -> Result<Matrix2<f64>> {
    let (a, q) = linear_scheme_matrices(method, h, gamma, beta)?;
    discrete_lyapunov_2x2(&a, &q)
}

/// `|σ_q² − 1/β| + |σ_p² − 1/β| + |κ|`.
pub fn moment_error(sigma: &Matrix2<f64>, beta: f64) -> f64 {
    (sigma[(0, 0)] - 1.0 / beta).abs() + (sigma[(1, 1)] - 1.0 / beta).abs() + sigma[(0, 1)].abs()
}

//! Exact Ornstein–Uhlenbeck flow of the friction/noise part of Langevin
//! dynamics,
//!
//! ```text
//! dq = 0,    dp = −γ M⁻¹ p dt + √(2γ/β) dW,
//! ```
//!
//! sampled in one shot as `p' = e^{−γM⁻¹h} p + A_h ξ` with
//! `A_h A_hᵀ = Σ_h = β⁻¹ (I − e^{−2γM⁻¹h}) M`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{require_positive, GlaError, Result};
use crate::model::{mat_vec, MassKind, MassMatrix, PhaseState};

/// Scalar functions that can be lifted to SPD mass matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixFunction {
    /// `e^{−s M⁻¹}`
    ExpScaled { scale: f64 },
}

impl MatrixFunction {
    fn eval(&self, eigenvalue: f64) -> f64 {
        match *self {
            MatrixFunction::ExpScaled { scale } => (-scale / eigenvalue).exp(),
        }
    }
}

/// Evaluates `f(M)` through the eigenvalues of `M`: elementwise for scalar
/// and diagonal storage, `V f(Λ) Vᵀ` for dense.
pub fn spd_matrix_function(mass: &MassMatrix, f: MatrixFunction) -> Result<DMatrix<f64>> {
    let (values, vectors) = mass.eigen();
    let mapped: Vec<f64> = values.iter().map(|&l| f.eval(l)).collect();
    if mapped.iter().any(|v| !v.is_finite()) {
        return Err(GlaError::Numeric("matrix function produced non-finite eigenvalues".into()));
    }
    Ok(conjugate(&vectors, &mapped, mass.kind()))
}

fn conjugate(vectors: &DMatrix<f64>, diag: &[f64], kind: MassKind) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
    match kind {
        MassKind::Scalar | MassKind::Diagonal => d,
        MassKind::Dense => vectors * d * vectors.transpose(),
    }
}

#[derive(Debug, Clone)]
enum Factors {
    /// Scalar and diagonal masses: every matrix is diagonal.
    Diagonal { decay: Vec<f64>, sigma: Vec<f64>, chol: Vec<f64> },
    Dense { decay: DMatrix<f64>, sigma: DMatrix<f64>, chol: DMatrix<f64> },
}

/// Precomputed exact OU step `ψ_h` for fixed `(γ, β, M, h)`.
#[derive(Debug, Clone)]
pub struct OUOperator {
    gamma: f64,
    beta: f64,
    h: f64,
    mass: MassMatrix,
    factors: Factors,
}

/// Builds `ψ_h`. `Σ_h` is formed per eigenvalue `λ` of `M` as
/// `β⁻¹ · (−expm1(−2γh/λ)) · λ`, which stays accurate for tiny `h`.
pub fn build_ou_operator(gamma: f64, beta: f64, mass: &MassMatrix, h: f64) -> Result<OUOperator> {
    require_positive("gamma", gamma)?;
    require_positive("beta", beta)?;
    require_positive("step size h", h)?;
    let (values, vectors) = mass.eigen();
    let mut decay = Vec::with_capacity(values.len());
    let mut sigma = Vec::with_capacity(values.len());
    for &lambda in &values {
        let rate = gamma * h / lambda;
        let s = -(-2.0 * rate).exp_m1() * lambda / beta;
        if !(s.is_finite() && s >= f64::MIN_POSITIVE) {
            return Err(GlaError::DegenerateCovariance { h });
        }
        decay.push((-rate).exp());
        sigma.push(s);
    }
    let factors = match mass.kind() {
        MassKind::Scalar | MassKind::Diagonal => {
            let chol = sigma.iter().map(|s| s.sqrt()).collect();
            Factors::Diagonal { decay, sigma, chol }
        }
        MassKind::Dense => {
            let decay = conjugate(&vectors, &decay, MassKind::Dense);
            let sigma = conjugate(&vectors, &sigma, MassKind::Dense);
            let sigma = (&sigma + sigma.transpose()) * 0.5;
            let chol = Cholesky::new(sigma.clone())
                .ok_or(GlaError::DegenerateCovariance { h })?
                .l();
            Factors::Dense { decay, sigma, chol }
        }
    };
    Ok(OUOperator { gamma, beta, h, mass: mass.clone(), factors })
}

impl OUOperator {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn decay_matrix(&self) -> DMatrix<f64> {
        match &self.factors {
            Factors::Diagonal { decay, .. } => diag_matrix(decay),
            Factors::Dense { decay, .. } => decay.clone(),
        }
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        match &self.factors {
            Factors::Diagonal { sigma, .. } => diag_matrix(sigma),
            Factors::Dense { sigma, .. } => sigma.clone(),
        }
    }

    pub fn chol_matrix(&self) -> DMatrix<f64> {
        match &self.factors {
            Factors::Diagonal { chol, .. } => diag_matrix(chol),
            Factors::Dense { chol, .. } => chol.clone(),
        }
    }

    /// Per-coordinate `(decay, Σ_h)` for scalar/diagonal masses.
    pub fn diagonal_factors(&self) -> Option<(&[f64], &[f64])> {
        match &self.factors {
            Factors::Diagonal { decay, sigma, .. } => Some((decay, sigma)),
            Factors::Dense { .. } => None,
        }
    }

    /// `p ← e^{−γM⁻¹h} p + A_h ξ`. `scratch` must have length `n`; it is
    /// only touched for dense masses.
    #[inline]
    pub fn apply_noise(&self, p: &mut [f64], xi: &[f64], scratch: &mut [f64]) {
        match &self.factors {
            Factors::Diagonal { decay, chol, .. } => {
                for (((p, d), c), z) in p.iter_mut().zip(decay).zip(chol).zip(xi) {
                    *p = d * *p + c * z;
                }
            }
            Factors::Dense { decay, chol, .. } => {
                mat_vec(decay, p, scratch);
                mat_vec(chol, xi, p);
                for (p, s) in p.iter_mut().zip(scratch.iter()) {
                    *p += s;
                }
            }
        }
    }

    /// `p ← e^{−γM⁻¹h} p + η` for an already-correlated noise increment `η`.
    #[inline]
    pub fn apply_increment(&self, p: &mut [f64], eta: &[f64], scratch: &mut [f64]) {
        match &self.factors {
            Factors::Diagonal { decay, .. } => {
                for ((p, d), e) in p.iter_mut().zip(decay).zip(eta) {
                    *p = d * *p + e;
                }
            }
            Factors::Dense { decay, .. } => {
                mat_vec(decay, p, scratch);
                for ((p, s), e) in p.iter_mut().zip(scratch.iter()).zip(eta) {
                    *p = s + e;
                }
            }
        }
    }

    /// `A_h ξ`.
    pub fn noise_increment(&self, xi: &[f64], out: &mut [f64]) {
        match &self.factors {
            Factors::Diagonal { chol, .. } => {
                for ((o, c), z) in out.iter_mut().zip(chol).zip(xi) {
                    *o = c * z;
                }
            }
            Factors::Dense { chol, .. } => mat_vec(chol, xi, out),
        }
    }

    /// Relative residual of `decay·(β⁻¹M)·decayᵀ + Σ_h = β⁻¹M`: the matrix
    /// form of "ψ_h leaves the Gibbs momentum law invariant".
    pub fn gibbs_preservation_residual(&self) -> f64 {
        let target = self.mass.to_matrix() / self.beta;
        let decay = self.decay_matrix();
        let lhs = &decay * &target * decay.transpose() + self.sigma_matrix();
        (lhs - &target).amax() / target.amax()
    }
}

fn diag_matrix(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

/// `ψ_h(x)` with caller-supplied standard normal `ξ`; `q` is returned
/// untouched.
pub fn ou_step(op: &OUOperator, x: &PhaseState, xi: &[f64]) -> Result<PhaseState> {
    let n = op.dim();
    GlaError::check_dim(n, x.q.len())?;
    GlaError::check_dim(n, x.p.len())?;
    GlaError::check_dim(n, xi.len())?;
    let mut out = x.clone();
    let mut scratch = vec![0.0; n];
    op.apply_noise(&mut out.p, xi, &mut scratch);
    Ok(out)
}

/// Gaussian transition density of `p1` given `p0`: mean `e^{−γM⁻¹h}p0`,
/// covariance `Σ_h`, normalized by `(2π)^{−n/2} det(Σ_h)^{−1/2}`.
pub fn ou_transition_density(op: &OUOperator, p0: &[f64], p1: &[f64]) -> Result<f64> {
    let n = op.dim();
    GlaError::check_dim(n, p0.len())?;
    GlaError::check_dim(n, p1.len())?;
    let mut mean = p0.to_vec();
    let mut scratch = vec![0.0; n];
    op.apply_increment(&mut mean, &vec![0.0; n], &mut scratch);
    let diff = DVector::from_iterator(n, p1.iter().zip(&mean).map(|(a, b)| a - b));
    let chol = op.chol_matrix();
    let z = chol
        .solve_lower_triangular(&diff)
        .ok_or(GlaError::DegenerateCovariance { h: op.h })?;
    let log_det_half: f64 = chol.diagonal().iter().map(|l| l.ln()).sum();
    let log_density = -0.5 * z.norm_squared() - 0.5 * n as f64 * (2.0 * PI).ln() - log_det_half;
    Ok(log_density.exp())
}

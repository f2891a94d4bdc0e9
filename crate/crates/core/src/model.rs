//! Phase-space states, mass matrices, potentials and the separable
//! Hamiltonian `H(q, p) = ½ pᵀM⁻¹p + U(q)` built from them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{require_positive, GlaError, Result};

/// A point `(q, p)` in `2n`-dimensional phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(GlaError::invalid("phase state must have dimension n >= 1"));
        }
        GlaError::check_dim(q.len(), p.len())?;
        let state = Self { q, p };
        if !state.is_finite() {
            return Err(GlaError::NonFiniteState { step: None });
        }
        Ok(state)
    }

    pub fn scalar(q: f64, p: f64) -> Self {
        Self { q: vec![q], p: vec![p] }
    }

    pub fn zeros(n: usize) -> Self {
        Self { q: vec![0.0; n], p: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// Largest absolute component over both `q` and `p`.
    pub fn max_abs(&self) -> f64 {
        self.q.iter().chain(&self.p).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the full phase-space vector.
    pub fn norm(&self) -> f64 {
        self.q.iter().chain(&self.p).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Flattened `[q..., p...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_slice(n: usize, flat: &[f64]) -> Self {
        debug_assert_eq!(flat.len(), 2 * n);
        Self { q: flat[..n].to_vec(), p: flat[n..].to_vec() }
    }

    /// The state with momentum reversed, `(q, -p)`.
    pub fn flip_momentum(&self) -> Self {
        Self { q: self.q.clone(), p: self.p.iter().map(|v| -v).collect() }
    }
}

/// Storage class of a mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassKind {
    Scalar,
    Diagonal,
    Dense,
}

#[derive(Debug, Clone)]
enum MassRepr {
    /// `m·I`
    Scalar(f64),
    Diagonal(Vec<f64>),
    Dense {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
    },
}

/// Symmetric positive-definite mass matrix `M`.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    dim: usize,
    repr: MassRepr,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl MassMatrix {
    pub fn identity(n: usize) -> Self {
        Self { dim: n, repr: MassRepr::Scalar(1.0) }
    }

    pub fn scalar(n: usize, m: f64) -> Result<Self> {
        if n == 0 {
            return Err(GlaError::invalid("mass matrix dimension must be >= 1"));
        }
        if !(m.is_finite() && m > 0.0) {
            return Err(GlaError::NotSpd(format!("scalar mass {m} is not positive")));
        }
        Ok(Self { dim: n, repr: MassRepr::Scalar(m) })
    }

    pub fn diagonal(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(GlaError::invalid("mass matrix dimension must be >= 1"));
        }
        if let Some(bad) = entries.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(GlaError::NotSpd(format!("diagonal entry {bad} is not positive")));
        }
        Ok(Self { dim: entries.len(), repr: MassRepr::Diagonal(entries) })
    }

    /// Dense SPD mass matrix. Rejects matrices that are asymmetric beyond
    /// `1e-12` relative or have a non-positive eigenvalue.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(GlaError::NotSpd(format!(
                "mass matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GlaError::NotSpd("mass matrix has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(GlaError::NotSpd(format!("asymmetry {asym:e} exceeds tolerance")));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let min_eig = eig.eigenvalues.min();
        if min_eig.is_nan() || min_eig <= 0.0 {
            return Err(GlaError::NotSpd(format!("smallest eigenvalue {min_eig:e} is not positive")));
        }
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
        Ok(Self {
            dim: n,
            repr: MassRepr::Dense {
                matrix: sym,
                inverse,
                eigenvalues: eig.eigenvalues.iter().copied().collect(),
                eigenvectors: eig.eigenvectors,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MassKind {
        match self.repr {
            MassRepr::Scalar(_) => MassKind::Scalar,
            MassRepr::Diagonal(_) => MassKind::Diagonal,
            MassRepr::Dense { .. } => MassKind::Dense,
        }
    }

    /// Diagonal entries when the matrix is stored as scalar or diagonal.
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        match &self.repr {
            MassRepr::Scalar(m) => Some(vec![*m; self.dim]),
            MassRepr::Diagonal(d) => Some(d.clone()),
            MassRepr::Dense { .. } => None,
        }
    }

    pub fn scalar_value(&self) -> Option<f64> {
        match self.repr {
            MassRepr::Scalar(m) => Some(m),
            _ => None,
        }
    }

    /// Eigenvalues and orthonormal eigenvectors (columns).
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        match &self.repr {
            MassRepr::Scalar(m) => (vec![*m; self.dim], DMatrix::identity(self.dim, self.dim)),
            MassRepr::Diagonal(d) => (d.clone(), DMatrix::identity(self.dim, self.dim)),
            MassRepr::Dense { eigenvalues, eigenvectors, .. } => {
                (eigenvalues.clone(), eigenvectors.clone())
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            MassRepr::Scalar(m) => DMatrix::identity(self.dim, self.dim) * *m,
            MassRepr::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            MassRepr::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `out = M⁻¹ p`
    #[inline]
    pub fn apply_inverse(&self, p: &[f64], out: &mut [f64]) {
        match &self.repr {
            MassRepr::Scalar(m) => {
                let inv = 1.0 / m;
                for (o, v) in out.iter_mut().zip(p) {
                    *o = v * inv;
                }
            }
            MassRepr::Diagonal(d) => {
                for ((o, v), m) in out.iter_mut().zip(p).zip(d) {
                    *o = v / m;
                }
            }
            MassRepr::Dense { inverse, .. } => mat_vec(inverse, p, out),
        }
    }

    /// Kinetic energy `½ pᵀM⁻¹p`.
    pub fn kinetic_energy(&self, p: &[f64]) -> f64 {
        match &self.repr {
            MassRepr::Scalar(m) => 0.5 * p.iter().map(|v| v * v).sum::<f64>() / m,
            MassRepr::Diagonal(d) => 0.5 * p.iter().zip(d).map(|(v, m)| v * v / m).sum::<f64>(),
            MassRepr::Dense { inverse, .. } => {
                let mut w = vec![0.0; self.dim];
                mat_vec(inverse, p, &mut w);
                0.5 * p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }
}

/// Dense matrix-vector product into a slice.
#[inline]
pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        *o = acc;
    }
}

/// Potential energy `U(q)` with its gradient.
///
/// Implementors must keep `gradient` consistent with `energy`; the shipped
/// potentials are checked against central differences in the tests.
pub trait Potential: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Required configuration dimension, or `None` if any `n` works.
    fn dim(&self) -> Option<usize>;

    fn energy(&self, q: &[f64]) -> f64;

    /// Writes `∇U(q)` into `grad`.
    fn gradient(&self, q: &[f64], grad: &mut [f64]);

    /// `Some(k)` when `U(q) = ½ k |q|²`, which enables the exact harmonic flow.
    fn harmonic_stiffness(&self) -> Option<f64> {
        None
    }
}

/// `U(q) = ½ |q|²` in any dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harmonic;

impl Potential for Harmonic {
    fn name(&self) -> &str {
        "harmonic"
    }

    fn dim(&self) -> Option<usize> {
        None
    }

    fn energy(&self, q: &[f64]) -> f64 {
        0.5 * q.iter().map(|v| v * v).sum::<f64>()
    }

    #[inline]
    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(q);
    }

    fn harmonic_stiffness(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// One-dimensional quartic double well `U(q) = q⁴/4 − q²/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

impl Potential for DoubleWell {
    fn name(&self) -> &str {
        "double-well"
    }

    fn dim(&self) -> Option<usize> {
        Some(1)
    }

    fn energy(&self, q: &[f64]) -> f64 {
        let x2 = q[0] * q[0];
        0.25 * x2 * x2 - 0.5 * x2
    }

    #[inline]
    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        let x = q[0];
        grad[0] = x * x * x - x;
    }
}

/// One-dimensional polynomial `U(q) = Σ a_k q^k`, coefficients in
/// ascending powers.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coefficients: Vec<f64>,
    derivative: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(GlaError::invalid("polynomial needs at least one coefficient"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(GlaError::invalid("polynomial coefficients must be finite"));
        }
        let derivative = coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| k as f64 * a)
            .collect();
        Ok(Self { coefficients, derivative })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

impl Potential for Polynomial {
    fn name(&self) -> &str {
        "polynomial"
    }

    fn dim(&self) -> Option<usize> {
        Some(1)
    }

    fn energy(&self, q: &[f64]) -> f64 {
        horner(&self.coefficients, q[0])
    }

    fn gradient(&self, q: &[f64], grad: &mut [f64]) {
        grad[0] = horner(&self.derivative, q[0]);
    }
}

/// Builds a shipped potential from its name and parameter list.
///
/// `harmonic` and `double-well` take no parameters; `polynomial` takes its
/// coefficients in ascending powers.
pub fn potential_by_name(name: &str, params: &[f64]) -> Result<Arc<dyn Potential>> {
    let no_params = |p: Arc<dyn Potential>| {
        if params.is_empty() {
            Ok(p)
        } else {
            Err(GlaError::invalid(format!("potential '{name}' takes no parameters")))
        }
    };
    match name {
        "harmonic" => no_params(Arc::new(Harmonic)),
        "double-well" | "doublewell" | "double_well" => no_params(Arc::new(DoubleWell)),
        "polynomial" => Ok(Arc::new(Polynomial::new(params.to_vec())?)),
        other => Err(GlaError::invalid(format!("unknown potential '{other}'"))),
    }
}

/// Central-difference gradient with step `1e-5·(1 + |q|)`.
pub fn finite_difference_gradient(potential: &dyn Potential, q: &[f64]) -> Vec<f64> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = 1e-5 * (1.0 + norm);
    let mut work = q.to_vec();
    (0..q.len())
        .map(|i| {
            work[i] = q[i] + eps;
            let up = potential.energy(&work);
            work[i] = q[i] - eps;
            let down = potential.energy(&work);
            work[i] = q[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Mass matrix plus potential: the separable Hamiltonian.
#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    mass: MassMatrix,
    potential: Arc<dyn Potential>,
}

impl HamiltonianSystem {
    pub fn new(mass: MassMatrix, potential: Arc<dyn Potential>) -> Result<Self> {
        if let Some(n) = potential.dim() {
            GlaError::check_dim(n, mass.dim())?;
        }
        Ok(Self { mass, potential })
    }

    /// Unit-mass harmonic oscillator in dimension `n`.
    pub fn harmonic(n: usize) -> Self {
        Self { mass: MassMatrix::identity(n), potential: Arc::new(Harmonic) }
    }

    /// Unit-mass quartic double well.
    pub fn double_well() -> Self {
        Self { mass: MassMatrix::identity(1), potential: Arc::new(DoubleWell) }
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn potential_arc(&self) -> Arc<dyn Potential> {
        Arc::clone(&self.potential)
    }

    pub(crate) fn check_state(&self, x: &PhaseState) -> Result<()> {
        GlaError::check_dim(self.dim(), x.q.len())?;
        GlaError::check_dim(self.dim(), x.p.len())
    }

    /// Angular frequency of the harmonic flow when `U = ½k|q|²` and
    /// `M = m·I`; `None` otherwise.
    pub fn harmonic_frequency(&self) -> Option<f64> {
        let k = self.potential.harmonic_stiffness()?;
        let m = self.mass.scalar_value()?;
        Some((k / m).sqrt())
    }

    /// `H(q, p) = ½ pᵀM⁻¹p + U(q)`.
    pub fn hamiltonian_energy(&self, x: &PhaseState) -> Result<f64> {
        self.check_state(x)?;
        Ok(self.mass.kinetic_energy(&x.p) + self.potential.energy(&x.q))
    }

    /// `−β H(x)`, the Boltzmann–Gibbs log-density up to `log Z`.
    pub fn gibbs_log_density_unnormalized(&self, beta: f64, x: &PhaseState) -> Result<f64> {
        require_positive("beta", beta)?;
        Ok(-beta * self.hamiltonian_energy(x)?)
    }
}

//! One-dimensional adaptive quadrature, Boltzmann–Gibbs moments of 1-D
//! potentials, and total variation between planar Gaussians.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use super::linear::GaussianMeasure;
use crate::error::{require_positive, GlaError, Result};
use crate::model::Potential;

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1] (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

const MAX_SEGMENTS: usize = 20_000;

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(GlaError::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let mut heap = BinaryHeap::new();
    let (value, error) = gauss_kronrod_15(&f, a, b);
    heap.push(Segment { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(GlaError::Numeric(format!(
                "quadrature did not converge: error estimate {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gauss_kronrod_15(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod_15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
        if !total.is_finite() {
            return Err(GlaError::Numeric("non-finite integrand".into()));
        }
    }
    // Re-sum to shed the drift of the running total.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Integral { value, error })
}

/// Adaptive Simpson with Richardson correction. Independent of
/// [`integrate`]; used to cross-check reference values.
pub fn integrate_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(GlaError::Numeric("adaptive Simpson exceeded its depth limit".into()));
        }
        Ok(recurse(f, (a, fa), (lm, flm), (m, fm), left, tol / 2.0, depth - 1)?
            + recurse(f, (m, fm), (rm, frm), (b, fb), right, tol / 2.0, depth - 1)?)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, (a, fa), (m, fm), (b, fb), whole, tol, 50)
}

/// Observables integrated against the 1-D Gibbs measure `∝ e^{−βU(q)}`.
#[derive(Debug, Clone, Copy)]
pub enum GibbsObservable {
    Q,
    QSquared,
    QFourth,
    AbsQ,
    Custom(fn(f64) -> f64),
}

impl GibbsObservable {
    fn eval(&self, q: f64) -> f64 {
        match self {
            Self::Q => q,
            Self::QSquared => q * q,
            Self::QFourth => q * q * q * q,
            Self::AbsQ => q.abs(),
            Self::Custom(f) => f(q),
        }
    }
}

/// Which 1-D rule [`gibbs_moment_quadrature_with`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    GaussKronrod,
    Simpson,
}

/// Energy margin (in units of `1/β`) the potential must clear for the
/// measure to count as coercive.
const COERCIVITY_MARGIN: f64 = 20.0;
/// Energy margin at which the integration range is truncated.
const TRUNCATION_MARGIN: f64 = 40.0;
const MAX_RADIUS: f64 = 1e6;

/// Truncation radius `R` with `βU(±R) ≥ βU_ref + margin`, found by doubling.
fn radius_for_margin(potential: &dyn Potential, beta: f64, reference: f64, margin: f64) -> Option<f64> {
    let mut r = 1.0;
    while r <= MAX_RADIUS {
        let lo = potential.energy(&[-r]);
        let hi = potential.energy(&[r]);
        if beta * (lo - reference) >= margin && beta * (hi - reference) >= margin {
            return Some(r);
        }
        r *= 2.0;
    }
    None
}

/// `μ(f) = ∫ f e^{−βU} / ∫ e^{−βU}` for a one-dimensional potential.
pub fn gibbs_moment_quadrature(potential: &dyn Potential, beta: f64, observable: GibbsObservable) -> Result<f64> {
    gibbs_moment_quadrature_with(potential, beta, observable, QuadratureRule::GaussKronrod)
}

pub fn gibbs_moment_quadrature_with(
    potential: &dyn Potential,
    beta: f64,
    observable: GibbsObservable,
    rule: QuadratureRule,
) -> Result<f64> {
    require_positive("beta", beta)?;
    if potential.dim().is_some_and(|n| n != 1) {
        return Err(GlaError::invalid("Gibbs quadrature needs a one-dimensional potential"));
    }
    let u0 = potential.energy(&[0.0]);
    let coercive = radius_for_margin(potential, beta, u0, COERCIVITY_MARGIN).ok_or_else(|| {
        GlaError::UnboundedMeasure(format!(
            "U(±R) never exceeds U(0) + {COERCIVITY_MARGIN}/β for R ≤ {MAX_RADIUS:e}"
        ))
    })?;
    // Integrand scale: the smallest energy seen on a grid over the coercive range.
    let grid = 4000;
    let reference = (0..=grid)
        .map(|i| potential.energy(&[-coercive + 2.0 * coercive * i as f64 / grid as f64]))
        .fold(u0, f64::min);
    let radius = radius_for_margin(potential, beta, reference, TRUNCATION_MARGIN)
        .ok_or_else(|| GlaError::UnboundedMeasure("tail never becomes negligible".into()))?;
    let weight = |q: f64| (-beta * (potential.energy(&[q]) - reference)).exp();
    let (num, den) = match rule {
        QuadratureRule::GaussKronrod => {
            let i = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
                Ok(integrate(g, -radius, 0.0, 0.0, 1e-13)?.value + integrate(g, 0.0, radius, 0.0, 1e-13)?.value)
            };
            (i(&|q| observable.eval(q) * weight(q))?, i(&weight)?)
        }
        QuadratureRule::Simpson => {
            let i = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
                Ok(integrate_simpson(g, -radius, 0.0, 1e-14)? + integrate_simpson(g, 0.0, radius, 1e-14)?)
            };
            (i(&|q| observable.eval(q) * weight(q))?, i(&weight)?)
        }
    };
    Ok(num / den)
}

/// `P(X ∈ A)` for `X ~ N(mean, sd²)` and `A = {y : a y² + b y + c > 0}`.
fn quadratic_region_probability(a: f64, b: f64, c: f64, mean: f64, sd: f64) -> f64 {
    // P(X < r) and P(X > r) via erfc to keep tails accurate.
    let below = |r: f64| 0.5 * libm::erfc(-(r - mean) / (sd * SQRT_2));
    let above = |r: f64| 0.5 * libm::erfc((r - mean) / (sd * SQRT_2));
    if a == 0.0 {
        return match b.partial_cmp(&0.0) {
            Some(Ordering::Greater) => above(-c / b),
            Some(Ordering::Less) => below(-c / b),
            _ => f64::from(u8::from(c > 0.0)),
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return if a > 0.0 { 1.0 } else { 0.0 };
    }
    let q = -0.5 * (b + b.signum().max(0.0).mul_add(2.0, -1.0) * disc.sqrt());
    let (r1, r2) = {
        let x1 = q / a;
        let x2 = if q != 0.0 { c / q } else { -x1 };
        (x1.min(x2), x1.max(x2))
    };
    if a > 0.0 {
        below(r1) + above(r2)
    } else {
        // P(r1 < X < r2), computed on the side of the mean with smaller tails.
        if r1 >= mean {
            above(r1) - above(r2)
        } else if r2 <= mean {
            below(r2) - below(r1)
        } else {
            1.0 - below(r1) - above(r2)
        }
    }
}

/// Total variation `½∫|φ₁ − φ₂|` between two planar Gaussians.
///
/// Both laws are mapped by the affine change of variables that whitens `g1`
/// and diagonalizes `g2`. In those coordinates the set `{φ₁ > φ₂}` is cut by
/// each vertical line in a quadric, whose probability under either law
/// follows from `erfc`. What remains is a smooth 1-D integral, evaluated
/// adaptively to an absolute accuracy far below `1e-8`.
pub fn gaussian_tv_quadrature(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    let l1 = g1
        .cov
        .cholesky()
        .ok_or_else(|| GlaError::invalid("first covariance is not SPD"))?
        .l();
    let l1_inv = l1.try_inverse().ok_or_else(|| GlaError::Numeric("singular Cholesky factor".into()))?;
    let c = l1_inv * g2.cov * l1_inv.transpose();
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let (c1, c2) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(GlaError::invalid("second covariance is not SPD"));
    }
    let rot: Matrix2<f64> = eig.eigenvectors;
    let shift: Vector2<f64> = rot.transpose() * (l1_inv * (g2.mean - g1.mean));
    let (m1, m2) = (shift[0], shift[1]);
    let (s1, s2) = (c1.sqrt(), c2.sqrt());

    // log φ₁ − log φ₂ = a y₂² + b y₂ + c(y₁) in the new coordinates.
    let a = 0.5 * (1.0 / c2 - 1.0);
    let b = -m2 / c2;
    let c_base = 0.5 * m2 * m2 / c2 + 0.5 * (c1 * c2).ln();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let integrand = |y1: f64| {
        let c = c_base + 0.5 * (y1 - m1) * (y1 - m1) / c1 - 0.5 * y1 * y1;
        let p1 = quadratic_region_probability(a, b, c, 0.0, 1.0);
        let p2 = quadratic_region_probability(a, b, c, m2, s2);
        let phi1 = norm * (-0.5 * y1 * y1).exp();
        let phi2 = norm / s1 * (-0.5 * (y1 - m1) * (y1 - m1) / c1).exp();
        phi1 * p1 - phi2 * p2
    };
    let lo = (-12.0f64).min(m1 - 12.0 * s1);
    let hi = 12.0f64.max(m1 + 12.0 * s1);
    let tv = integrate(integrand, lo, hi, 1e-16, 1e-12)?.value;
    Ok(tv.clamp(0.0, 1.0))
}

//! Estimators, exact linear-oscillator analysis, quadrature oracles and
//! convergence studies.

pub mod convergence;
pub mod linear;
pub mod quadrature;
pub mod stats;

pub use convergence::{
    convergence_study, fitted_order, global_error_curve, linear_convergence_study, local_error_curve,
    log2_slopes, loglog_slope, ConvergenceConfig, ConvergenceRow, LinearRow, LocalErrorRow, ObservedOrder, FLOOR_FACTOR,
};
pub use linear::{
    discrete_lyapunov_2x2, linear_scheme_matrices, lyapunov_residual, moment_error, oscillator_flow_matrix,
    spectral_radius_2x2, stationary_covariance, GaussianMeasure,
};
pub use quadrature::{
    gaussian_tv_quadrature, gibbs_moment_quadrature, gibbs_moment_quadrature_with, integrate,
    integrate_simpson, GibbsObservable, QuadratureRule,
};
pub use stats::{batch_means, pool_estimates, BatchAccumulator, MomentEstimate};

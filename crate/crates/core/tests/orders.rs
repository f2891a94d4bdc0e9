use gla_core::analysis::{global_error_curve, linear_convergence_study, local_error_curve, log2_slopes, loglog_slope};
use gla_core::gla::{strong_error_experiment, SplittingMethod, StrongErrorConfig};
use gla_core::integrators::{
    default_jacobian_eps, jacobian_fd, symplecticity_defect, IntegratorScheme,
};
use gla_core::model::{HamiltonianSystem, PhaseState};
use gla_core::noise::NoiseStream;

const STEPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

#[test]
fn maps_are_symplectic_on_both_potentials() {
    let stream = NoiseStream::new(77, 0);
    for sys in [HamiltonianSystem::harmonic(1), HamiltonianSystem::double_well()] {
        for scheme in IntegratorScheme::shipped() {
            for &h in &[0.05, 0.1, 0.2] {
                for k in 0..20u64 {
                    let x = PhaseState::scalar(2.0 * stream.normal(2 * k), 2.0 * stream.normal(2 * k + 1));
                    let jac = jacobian_fd(&scheme, &sys, h, &x, default_jacobian_eps(&x)).unwrap();
                    assert!((jac.determinant() - 1.0).abs() <= 1e-6);
                    assert!(symplecticity_defect(&jac) <= 1e-5);
                }
            }
        }
    }
}

#[test]
fn stationary_errors_scale_with_the_integrator_order() {
    for scheme in IntegratorScheme::shipped() {
        let p = scheme.order() as f64;
        let rows = linear_convergence_study(&SplittingMethod::Gla(scheme.clone()), &STEPS, 1.0, 2.0).unwrap();
        let moment: Vec<f64> = rows.iter().map(|r| r.moment_error).collect();
        let tv: Vec<f64> = rows.iter().map(|r| r.tv).collect();
        // The finest pair is closest to the asymptotic regime.
        let last = |v: &[f64]| *log2_slopes(v).last().unwrap();
        assert!((last(&moment) - p).abs() <= 0.1, "{}: {:?}", scheme.name(), log2_slopes(&moment));
        assert!((last(&tv) - p).abs() <= 0.1, "{}: {:?}", scheme.name(), log2_slopes(&tv));
    }
}

#[test]
fn local_and_global_errors_on_the_oscillator() {
    let sys = HamiltonianSystem::harmonic(1);
    let x = PhaseState::scalar(1.0, 0.5);
    let hs = [0.2, 0.1, 0.05, 0.025];
    for scheme in IntegratorScheme::shipped() {
        let p = scheme.order() as f64;
        let local: Vec<f64> = local_error_curve(&scheme, &sys, &hs, &x).unwrap().iter().map(|r| r.energy_error).collect();
        assert!((loglog_slope(&hs, &local) - (p + 1.0)).abs() <= 0.2, "{}: {local:?}", scheme.name());
        let global: Vec<f64> = global_error_curve(&scheme, &sys, &hs, 1.0, &x).unwrap().iter().map(|r| r.1).collect();
        assert!((loglog_slope(&hs, &global) - p).abs() <= 0.2, "{}: {global:?}", scheme.name());
    }
}

#[test]
fn strong_order_is_one() {
    let sys = HamiltonianSystem::harmonic(1);
    for scheme in IntegratorScheme::shipped() {
        let config = StrongErrorConfig {
            gamma: 1.0,
            beta: 2.0,
            h0: 0.2,
            levels: 4,
            horizon: 1.0,
            replicas: 2_000,
            reference_extra: StrongErrorConfig::DEFAULT_REFERENCE_EXTRA,
            zero_noise: false,
            x0: PhaseState::zeros(1),
            workers: 1,
        };
        let report = strong_error_experiment(&scheme, &sys, &config, 1).unwrap();
        assert_eq!(report.discarded, 0);
        for s in report.slopes() {
            assert!((s - 1.0).abs() <= 0.15, "{}: {:?}", scheme.name(), report.slopes());
        }
    }
}

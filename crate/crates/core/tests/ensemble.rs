use photon_filter_core::operator::KetState;
use photon_filter_core::pulse::PulseShape;
use photon_filter_core::{
    integrate_master, run_ensemble, simulate_trajectory, MasterMethod, MeasurementScheme, ModelParams, SimulationConfig,
};

fn gaussian_pair(kappa2: f64, omega: f64, r: f64) -> ModelParams {
    ModelParams {
        kappa1: 1.0,
        kappa2,
        r,
        pulse1: PulseShape::Gaussian { omega, tau: 3.0 },
        pulse2: PulseShape::Gaussian { omega, tau: 3.0 },
        eta: KetState::ground(),
    }
}

fn config(params: ModelParams, scheme: MeasurementScheme) -> SimulationConfig {
    SimulationConfig {
        dt: 2e-3,
        seed: 11,
        ..SimulationConfig::new(params, scheme)
    }
}

#[test]
fn master_curve_is_independent_of_beam_splitter() {
    let reference = integrate_master(&config(gaussian_pair(1.0, 2.92, 0.0), MeasurementScheme::HomodyneHomodyne), MasterMethod::Rk4)
        .unwrap();
    for r in [std::f64::consts::FRAC_1_SQRT_2, 1.0] {
        let curve = integrate_master(&config(gaussian_pair(1.0, 2.92, r), MeasurementScheme::HomodyneHomodyne), MasterMethod::Rk4)
            .unwrap();
        let gap = curve.pe.iter().zip(&reference.pe).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-12, "r = {r}: {gap}");
    }
}

#[test]
fn master_curve_ignores_scheme_and_seed() {
    let params = gaussian_pair(0.5, 2.0, 0.3);
    let a = integrate_master(&config(params, MeasurementScheme::HomodyneHomodyne), MasterMethod::Rk4).unwrap();
    let b = integrate_master(
        &SimulationConfig {
            seed: 99,
            ..config(params, MeasurementScheme::HomodynePhotocount)
        },
        MasterMethod::Rk4,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn ensemble_gap_shrinks_like_inverse_sqrt_m() {
    let params = gaussian_pair(0.0, 1.46, std::f64::consts::FRAC_1_SQRT_2);
    let gap = |m: usize| {
        run_ensemble(&SimulationConfig {
            n_traj: m,
            ..config(params, MeasurementScheme::HomodyneHomodyne)
        })
        .unwrap()
        .sup_gap()
    };
    let ratio = gap(100) / gap(400);
    assert!((1.4..=2.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn trajectories_stay_normalized_and_hermitian() {
    for scheme in [MeasurementScheme::HomodyneHomodyne, MeasurementScheme::HomodynePhotocount] {
        let cfg = SimulationConfig {
            n_traj: 64,
            ..config(gaussian_pair(1.0, 2.92, std::f64::consts::FRAC_1_SQRT_2), scheme)
        };
        let e = run_ensemble(&cfg).unwrap();
        assert!(e.max_trace_error < 1e-8, "{scheme:?}: {}", e.max_trace_error);
        assert!(e.max_hermiticity_error < 1e-8, "{scheme:?}: {}", e.max_hermiticity_error);
        assert_eq!(e.n_failed, 0);
        assert_eq!(e.peaks.len(), 64);
    }
}

#[test]
fn renormalization_keeps_trace_exact() {
    let cfg = SimulationConfig {
        renormalize: true,
        ..config(gaussian_pair(1.0, 2.92, 0.4), MeasurementScheme::HomodynePhotocount)
    };
    let r = simulate_trajectory(&cfg, 5).unwrap();
    assert!(r.diagnostics.max_trace_error < 1e-14);
}

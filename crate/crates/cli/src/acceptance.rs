//! Pass/fail evaluation of the numbered acceptance criteria.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use photon_filter_core::engine::{noise_stream, standard_normal};
use photon_filter_core::oracle::extract_component;
use photon_filter_core::{
    build_oracle, convergence_study, integrate_master, local_maxima, run_ensemble, Component, ConvergenceStudy, Curve,
    EnsembleResult, Error, MasterMethod, MeasurementScheme, Oracle, SimulationConfig,
};

use crate::presets::{self, AcceptanceTarget, Target, DECAY_TOLERANCE, MASTER_DT, PE_TOLERANCE, T_TOLERANCE};

/// Seed shared by every stochastic acceptance check.
pub const ACCEPTANCE_SEED: u64 = 2024;
/// Ensemble mean must stay within this many standard errors of the master curve.
pub const ENSEMBLE_BAND: f64 = 3.0;
/// Presets whose ensembles are checked against the master curve.
pub const ENSEMBLE_PRESETS: [&str; 2] = ["fig4a", "fig4d"];
/// Preset used for the filter/oracle convergence check.
pub const ORACLE_PRESET: &str = "fig4a";
pub const ORACLE_GAP_MAX: f64 = 5e-2;
pub const ORACLE_RATIO_RANGE: (f64, f64) = (1.5, 2.5);
pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const HERMITICITY_TOLERANCE: f64 = 1e-8;
pub const PAIRING_TOLERANCE: f64 = 1e-10;
pub const R_INVARIANCE_TOLERANCE: f64 = 1e-12;
pub const REDUCTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceFlag {
    pub criterion: u8,
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl AcceptanceFlag {
    fn new(criterion: u8, label: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            criterion,
            label: label.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// `PASS [criterion 7] fig4a peak ... (measured ...)`.
    pub fn line(&self) -> String {
        format!(
            "{} [criterion {:>2}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.label,
            self.detail
        )
    }
}

fn close(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Checks one peak-type target against a master curve.
pub fn evaluate_target(name: &str, t: &AcceptanceTarget, curve: &Curve) -> AcceptanceFlag {
    let peak = curve.peak;
    match &t.target {
        Target::Peak { pe, t: None } => AcceptanceFlag::new(
            t.criterion,
            format!("{name} peak Pe = {pe:.2}"),
            close(peak.pe, *pe, PE_TOLERANCE),
            format!("measured Pe = {:.4} at t = {:.3}", peak.pe, peak.t),
        ),
        Target::Peak { pe, t: Some(at) } => AcceptanceFlag::new(
            t.criterion,
            format!("{name} peak Pe = {pe:.2} at t = {at:.1}"),
            close(peak.pe, *pe, PE_TOLERANCE) && close(peak.t, *at, T_TOLERANCE),
            format!("measured Pe = {:.4} at t = {:.3}", peak.pe, peak.t),
        ),
        Target::PeakBefore { pe, t_max } => AcceptanceFlag::new(
            t.criterion,
            format!("{name} peak Pe = {pe:.2} at t < {t_max}"),
            close(peak.pe, *pe, PE_TOLERANCE) && peak.t < *t_max,
            format!("measured Pe = {:.4} at t = {:.3}", peak.pe, peak.t),
        ),
        Target::Peaks { pe, times } => {
            let maxima = local_maxima(&curve.times, &curve.pe);
            let found: Vec<_> = times
                .iter()
                .map(|at| {
                    maxima
                        .iter()
                        .copied()
                        .filter(|m| close(m.t, *at, T_TOLERANCE))
                        .max_by(|a, b| a.pe.total_cmp(&b.pe))
                })
                .collect();
            let passed = found.iter().all(|m| m.is_some_and(|m| close(m.pe, *pe, PE_TOLERANCE)));
            let detail = found
                .iter()
                .zip(times)
                .map(|(m, at)| match m {
                    Some(m) => format!("Pe = {:.4} at t = {:.3}", m.pe, m.t),
                    None => format!("no local maximum near t = {at}"),
                })
                .collect::<Vec<_>>()
                .join("; ");
            let label = format!(
                "{name} peaks Pe = {pe:.2} at t = {}",
                times.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(", ")
            );
            AcceptanceFlag::new(t.criterion, label, passed, detail)
        }
        Target::FreeDecay { rate } => {
            let start = peak.t.max(0.0);
            let worst = curve
                .times
                .iter()
                .zip(&curve.pe)
                .filter(|(time, _)| **time >= start)
                .map(|(time, p)| (p - (-rate * time).exp()).abs())
                .fold(0.0, f64::max);
            AcceptanceFlag::new(
                t.criterion,
                format!("{name} post-peak decay exp(-{rate} t)"),
                worst <= DECAY_TOLERANCE,
                format!("max deviation {worst:.2e} (tolerance {DECAY_TOLERANCE:.0e})"),
            )
        }
    }
}

/// One line per criterion: all of its checks must pass.
pub fn summarize(flags: &[AcceptanceFlag]) -> Vec<AcceptanceFlag> {
    let mut ids: Vec<u8> = flags.iter().map(|f| f.criterion).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let group: Vec<_> = flags.iter().filter(|f| f.criterion == id).collect();
            let label = group.iter().map(|f| f.label.as_str()).collect::<Vec<_>>().join("; ");
            let detail = group
                .iter()
                .map(|f| format!("{}{}", if f.passed { "" } else { "[fail] " }, f.detail))
                .collect::<Vec<_>>()
                .join("; ");
            AcceptanceFlag::new(id, label, group.iter().all(|f| f.passed), detail)
        })
        .collect()
}

pub fn evaluate_targets(name: &str, targets: &[AcceptanceTarget], curve: &Curve) -> Vec<AcceptanceFlag> {
    targets.iter().map(|t| evaluate_target(name, t, curve)).collect()
}

/// Master curve on the acceptance grid: step `MASTER_DT`, output every 1e-3.
pub fn master_curve(cfg: &SimulationConfig) -> Result<Curve, Error> {
    let cfg = SimulationConfig {
        dt: MASTER_DT,
        sample_every: 10,
        ..*cfg
    };
    integrate_master(&cfg, MasterMethod::Rk4)
}

pub fn ensemble_flag(name: &str, e: &EnsembleResult) -> AcceptanceFlag {
    AcceptanceFlag::new(
        11,
        format!("{name} ensemble mean within {ENSEMBLE_BAND} stderr of master (M = {})", e.n_ok),
        e.within_band(ENSEMBLE_BAND),
        format!("sup gap {:.4}, max |gap|/stderr {:.2}", e.sup_gap(), e.max_z()),
    )
}

pub fn oracle_flag(name: &str, scheme: MeasurementScheme, study: &ConvergenceStudy) -> AcceptanceFlag {
    let ratio = study.ratio();
    let passed = study.coarse.sup_pe_gap <= ORACLE_GAP_MAX && (ORACLE_RATIO_RANGE.0..=ORACLE_RATIO_RANGE.1).contains(&ratio);
    AcceptanceFlag::new(
        12,
        format!("{name} {} filter vs oracle on a shared record", scheme.short_name()),
        passed,
        format!(
            "sup gap {:.3e} at dt = {:.0e}, {:.3e} at dt/2, ratio {ratio:.3}",
            study.coarse.sup_pe_gap, study.coarse.dt, study.fine.sup_pe_gap
        ),
    )
}

/// Criterion 11 for one preset.
pub fn check_ensemble(preset: &str) -> Result<AcceptanceFlag, Error> {
    let p = presets::find(preset).expect("known preset");
    let cfg = SimulationConfig {
        seed: ACCEPTANCE_SEED,
        keep_trajectories: 0,
        ..p.cfg
    };
    Ok(ensemble_flag(preset, &run_ensemble(&cfg)?))
}

/// Criterion 12 for both schemes on `fig4a`.
pub fn check_oracle() -> Result<Vec<AcceptanceFlag>, Error> {
    let p = presets::find(ORACLE_PRESET).expect("known preset");
    [MeasurementScheme::HomodyneHomodyne, MeasurementScheme::HomodynePhotocount]
        .into_iter()
        .map(|scheme| {
            let cfg = SimulationConfig {
                scheme,
                dt: MASTER_DT,
                seed: ACCEPTANCE_SEED,
                ..p.cfg
            };
            Ok(oracle_flag(ORACLE_PRESET, scheme, &convergence_study(&cfg, 0)?))
        })
        .collect()
}

fn invariant_config(scheme: MeasurementScheme) -> SimulationConfig {
    let p = presets::find("fig4d").expect("known preset");
    SimulationConfig {
        scheme,
        n_traj: 200,
        seed: ACCEPTANCE_SEED,
        keep_trajectories: 0,
        ..p.cfg
    }
}

/// Criterion 13: conservation, pairing, martingale and invariance checks.
pub fn check_invariants() -> Result<Vec<AcceptanceFlag>, Error> {
    let mut flags = Vec::new();
    for scheme in [MeasurementScheme::HomodyneHomodyne, MeasurementScheme::HomodynePhotocount] {
        let e = run_ensemble(&invariant_config(scheme))?;
        let tag = scheme.short_name();
        flags.push(AcceptanceFlag::new(
            13,
            format!("{tag} trace of rho^(11;11) stays 1"),
            e.max_trace_error <= TRACE_TOLERANCE,
            format!("max |Tr - 1| = {:.2e}", e.max_trace_error),
        ));
        flags.push(AcceptanceFlag::new(
            13,
            format!("{tag} rho^(11;11) stays hermitian"),
            e.max_hermiticity_error <= HERMITICITY_TOLERANCE,
            format!("max hermiticity error {:.2e}", e.max_hermiticity_error),
        ));
        flags.push(AcceptanceFlag::new(
            13,
            format!("{tag} channel-1 innovation has zero mean"),
            e.innovation.within(0.0, 3.0),
            format!("mean {:.4} +- {:.4}", e.innovation.mean, e.innovation.stderr),
        ));
        if scheme == MeasurementScheme::HomodynePhotocount {
            flags.push(AcceptanceFlag::new(
                13,
                "hp count matches integrated intensity",
                e.compensated_count.within(0.0, 3.0),
                format!(
                    "mean N - sum Kp dt = {:.4} +- {:.4}",
                    e.compensated_count.mean, e.compensated_count.stderr
                ),
            ));
        }
    }
    flags.push(adjoint_pairing()?);
    flags.push(r_invariance()?);
    Ok(flags)
}

/// Extracted components obey `rho^(mn;jk) = (rho^(jk;mn))^†` along an oracle path.
fn adjoint_pairing() -> Result<AcceptanceFlag, Error> {
    let cfg = invariant_config(MeasurementScheme::HomodyneHomodyne);
    let grid = cfg.grid()?;
    let oracle = Oracle::new(&cfg.params)?;
    let mut rng = noise_stream(cfg.seed, 0);
    let mut s = build_oracle(&cfg.params, grid.start());
    let sqrt_dt = cfg.dt.sqrt();
    let mut worst: f64 = 0.0;
    let pulses = cfg.params.pulses();
    for k in 0..grid.steps() {
        s.t = grid.time(k);
        let h = grid.time(k + 1) - s.t;
        let dw1 = standard_normal(&mut rng) * sqrt_dt;
        let dw2 = standard_normal(&mut rng) * sqrt_dt;
        s = oracle.hh_step(&s, h, dw1, dw2)?;
        s.t = grid.time(k + 1);
        if k % 50 == 0 {
            for c in Component::all() {
                let pair = (
                    extract_component(&s, &pulses, s.t, c),
                    extract_component(&s, &pulses, s.t, c.dagger()),
                );
                if let (Some(a), Some(b)) = pair {
                    worst = worst.max(a.max_abs_diff(&b.adjoint()));
                }
            }
        }
    }
    Ok(AcceptanceFlag::new(
        13,
        "adjoint pairing of extracted components",
        worst <= PAIRING_TOLERANCE,
        format!("max deviation {worst:.2e}"),
    ))
}

fn r_invariance() -> Result<AcceptanceFlag, Error> {
    let base = invariant_config(MeasurementScheme::HomodyneHomodyne);
    let curve = |r: f64| {
        let mut cfg = base;
        cfg.params.r = r;
        integrate_master(&cfg, MasterMethod::Rk4)
    };
    let reference = curve(FRAC_1_SQRT_2)?;
    let mut worst: f64 = 0.0;
    for r in [0.0, 1.0] {
        let c = curve(r)?;
        worst = c.pe.iter().zip(&reference.pe).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok(AcceptanceFlag::new(
        13,
        "master curve invariant under r in {0, 1/sqrt2, 1}",
        worst <= R_INVARIANCE_TOLERANCE,
        format!("max deviation {worst:.2e}"),
    ))
}

/// Criterion 14: `kappa2 = 0, r = 0` reproduces the fig4a master curve.
pub fn check_reduction() -> Result<AcceptanceFlag, Error> {
    let p = presets::find("fig4a").expect("known preset");
    let reference = master_curve(&p.cfg)?;
    let mut cfg = p.cfg;
    cfg.params.r = 0.0;
    let reduced = master_curve(&cfg)?;
    let worst = reduced.pe.iter().zip(&reference.pe).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(AcceptanceFlag::new(
        14,
        "kappa2 = 0, r = 0 master curve equals fig4a",
        worst <= REDUCTION_TOLERANCE && reduced.times == reference.times,
        format!("max deviation {worst:.2e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(times: Vec<f64>, pe: Vec<f64>) -> Curve {
        let peak = photon_filter_core::peak_stats(&times, &pe).unwrap();
        Curve { times, pe, peak }
    }

    #[test]
    fn peak_target_respects_both_tolerances() {
        let c = curve(vec![3.9, 4.0, 4.1], vec![0.7, 0.81, 0.7]);
        let t = AcceptanceTarget {
            criterion: 7,
            target: Target::Peak { pe: 0.8, t: Some(4.0) },
        };
        assert!(evaluate_target("x", &t, &c).passed);
        let t = AcceptanceTarget {
            criterion: 7,
            target: Target::Peak { pe: 0.8, t: Some(3.5) },
        };
        assert!(!evaluate_target("x", &t, &c).passed);
    }

    #[test]
    fn two_peak_target_needs_both() {
        let c = curve(vec![3.4, 3.5, 3.6, 5.0, 6.4, 6.5, 6.6], vec![0.3, 0.4, 0.3, 0.1, 0.3, 0.39, 0.3]);
        let mut t = AcceptanceTarget {
            criterion: 8,
            target: Target::Peaks {
                pe: 0.4,
                times: vec![3.5, 6.5],
            },
        };
        assert!(evaluate_target("x", &t, &c).passed);
        t.target = Target::Peaks {
            pe: 0.4,
            times: vec![3.5, 8.0],
        };
        assert!(!evaluate_target("x", &t, &c).passed);
    }

    #[test]
    fn free_decay_target_checks_tail() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let pe: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let t = AcceptanceTarget {
            criterion: 1,
            target: Target::FreeDecay { rate: 1.0 },
        };
        assert!(evaluate_target("x", &t, &curve(times.clone(), pe.clone())).passed);
        let shifted: Vec<f64> = pe.iter().map(|p| p * 0.99).collect();
        assert!(!evaluate_target("x", &t, &curve(times, shifted)).passed);
    }

    #[test]
    fn summary_needs_every_check() {
        let flags = [
            AcceptanceFlag::new(6, "a", true, "x"),
            AcceptanceFlag::new(1, "b", true, "y"),
            AcceptanceFlag::new(6, "c", false, "z"),
        ];
        let s = summarize(&flags);
        assert_eq!(s.iter().map(|f| (f.criterion, f.passed)).collect::<Vec<_>>(), [(1, true), (6, false)]);
        assert_eq!(s[1].detail, "x; [fail] z");
    }

    #[test]
    fn flag_line_format() {
        let f = AcceptanceFlag::new(3, "label", false, "detail");
        assert_eq!(f.line(), "FAIL [criterion  3] label: detail");
    }
}

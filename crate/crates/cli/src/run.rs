use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use photon_filter_core::{
    convergence_study, integrate_master, local_maxima, run_ensemble, ConvergenceStudy, Curve, EnsembleResult,
    MeasurementScheme, PulseShape, SimulationConfig,
};

use crate::acceptance::{self, AcceptanceFlag};
use crate::config::Scenario;
use crate::error::CliError;

/// Output spacing the automatic `sample_every` aims for.
pub const OUTPUT_SPACING: f64 = 1e-3;
/// Upper bound on rows in a result CSV.
pub const MAX_ROWS: usize = 50_000;

/// `sample_every` giving roughly `OUTPUT_SPACING` between rows, capped at `MAX_ROWS`.
pub fn auto_sample_every(cfg: &SimulationConfig) -> usize {
    let every = ((OUTPUT_SPACING / cfg.dt).round() as usize).max(1);
    match cfg.grid() {
        Ok(grid) => every.max(grid.steps().div_ceil(MAX_ROWS)),
        Err(_) => every,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub t: f64,
    pub pe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kappa1: f64,
    pub kappa2: f64,
    pub r: f64,
    pub pulse1: PulseShape,
    pub pulse2: PulseShape,
    /// Initial atom amplitudes as `[re, im]` pairs, excited first.
    pub eta: [[f64; 2]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_ok: usize,
    pub n_failed: usize,
    pub first_failure: Option<String>,
    pub sup_gap_to_master: f64,
    pub max_gap_over_stderr: f64,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub innovation_mean: f64,
    pub innovation_stderr: f64,
    pub compensated_count_mean: f64,
    pub compensated_count_stderr: f64,
    pub mean_peak: PeakSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub trajectory: u64,
    pub dt: f64,
    pub sup_pe_gap: f64,
    pub sup_pe_gap_half_step: f64,
    pub ratio: f64,
    pub component_gaps: Vec<f64>,
    pub clicks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub name: String,
    pub preset: Option<String>,
    pub scheme: String,
    pub seed: u64,
    pub dt: f64,
    pub n_traj: usize,
    pub window: [f64; 2],
    pub sample_every: usize,
    pub model: ModelSummary,
    pub master_peak: PeakSummary,
    pub local_maxima: Vec<PeakSummary>,
    pub ensemble: Option<EnsembleSummary>,
    pub oracle: Option<OracleSummary>,
    pub acceptance: Vec<AcceptanceFlag>,
    pub qualitative: bool,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn failed_criteria(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.acceptance.iter().filter(|f| !f.passed).map(|f| f.criterion).collect();
        ids.dedup();
        ids
    }
}

/// Everything a run computes, before it is written out.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub master: Curve,
    pub ensemble: Option<EnsembleResult>,
    pub oracle: Option<ConvergenceStudy>,
    pub acceptance: Vec<AcceptanceFlag>,
}

/// Trajectory used for the filter/oracle comparison.
pub const ORACLE_TRAJECTORY: u64 = 0;

pub fn compute(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    let cfg = &scenario.cfg;
    let master = integrate_master(cfg, cfg.master_method)?;
    let ensemble = if cfg.n_traj > 0 { Some(run_ensemble(cfg)?) } else { None };
    let oracle = if cfg.oracle_compare {
        Some(convergence_study(cfg, ORACLE_TRAJECTORY)?)
    } else {
        None
    };

    let mut flags = acceptance::evaluate_targets(&scenario.name, &scenario.targets, &master);
    // Stochastic criteria only apply to the untouched presets they were set for.
    let preset = scenario.preset.as_deref().filter(|_| !scenario.targets.is_empty());
    if let (Some(e), Some(p)) = (&ensemble, preset) {
        if cfg.scheme == MeasurementScheme::HomodyneHomodyne && acceptance::ENSEMBLE_PRESETS.contains(&p) {
            flags.push(acceptance::ensemble_flag(&scenario.name, e));
        }
    }
    if let (Some(study), Some(p)) = (&oracle, preset) {
        if p == acceptance::ORACLE_PRESET {
            flags.push(acceptance::oracle_flag(&scenario.name, cfg.scheme, study));
        }
    }
    Ok(RunOutcome {
        master,
        ensemble,
        oracle,
        acceptance: flags,
    })
}

/// Runs a scenario and writes `<name>.csv`, `report.json` and, with an oracle
/// comparison, `<name>_oracle.csv` into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunReport, CliError> {
    let outcome = compute(scenario)?;
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;

    let csv_path = out_dir.join(format!("{}.csv", scenario.name));
    let file = File::create(&csv_path).map_err(CliError::io(&csv_path))?;
    emit_csv(&outcome.master, outcome.ensemble.as_ref(), BufWriter::new(file)).map_err(CliError::io(&csv_path))?;
    let mut files = vec![csv_path];

    if let Some(study) = &outcome.oracle {
        let path = out_dir.join(format!("{}_oracle.csv", scenario.name));
        let file = File::create(&path).map_err(CliError::io(&path))?;
        emit_oracle_csv(study, BufWriter::new(file)).map_err(CliError::io(&path))?;
        files.push(path);
    }

    let report_path = out_dir.join("report.json");
    files.push(report_path.clone());
    let report = build_report(scenario, &outcome, files);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(CliError::io(&report_path))?;
    Ok(report)
}

fn summary(p: photon_filter_core::Peak) -> PeakSummary {
    PeakSummary { t: p.t, pe: p.pe }
}

pub fn build_report(scenario: &Scenario, outcome: &RunOutcome, files: Vec<PathBuf>) -> RunReport {
    let cfg = &scenario.cfg;
    let amps = cfg.params.eta.amplitudes();
    let ensemble = outcome.ensemble.as_ref().map(|e| EnsembleSummary {
        n_ok: e.n_ok,
        n_failed: e.n_failed,
        first_failure: e.first_failure.as_ref().map(ToString::to_string),
        sup_gap_to_master: e.sup_gap(),
        max_gap_over_stderr: e.max_z(),
        max_trace_error: e.max_trace_error,
        max_hermiticity_error: e.max_hermiticity_error,
        innovation_mean: e.innovation.mean,
        innovation_stderr: e.innovation.stderr,
        compensated_count_mean: e.compensated_count.mean,
        compensated_count_stderr: e.compensated_count.stderr,
        mean_peak: photon_filter_core::peak_stats(&e.times, &e.pe_mean)
            .map(summary)
            .unwrap_or(PeakSummary { t: f64::NAN, pe: f64::NAN }),
    });
    let oracle = outcome.oracle.as_ref().map(|s| OracleSummary {
        trajectory: ORACLE_TRAJECTORY,
        dt: s.coarse.dt,
        sup_pe_gap: s.coarse.sup_pe_gap,
        sup_pe_gap_half_step: s.fine.sup_pe_gap,
        ratio: s.ratio(),
        component_gaps: s.coarse.component_gaps.to_vec(),
        clicks: s.coarse.clicks,
    });
    RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        name: scenario.name.clone(),
        preset: scenario.preset.clone(),
        scheme: cfg.scheme.short_name().to_string(),
        seed: cfg.seed,
        dt: cfg.dt,
        n_traj: cfg.n_traj,
        window: [cfg.t0, cfg.t1],
        sample_every: cfg.sample_every,
        model: ModelSummary {
            kappa1: cfg.params.kappa1,
            kappa2: cfg.params.kappa2,
            r: cfg.params.r,
            pulse1: cfg.params.pulse1,
            pulse2: cfg.params.pulse2,
            eta: amps.map(|a| [a.re, a.im]),
        },
        master_peak: summary(outcome.master.peak),
        local_maxima: local_maxima(&outcome.master.times, &outcome.master.pe).into_iter().map(summary).collect(),
        ensemble,
        oracle,
        acceptance: outcome.acceptance.clone(),
        qualitative: scenario.qualitative,
        files,
    }
}

fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Columns `t,pe_master,pe_mean,pe_stderr,pe_traj_0,...`; the ensemble columns
/// are `NaN` when no trajectories were run.
pub fn emit_csv(master: &Curve, ensemble: Option<&EnsembleResult>, mut w: impl Write) -> std::io::Result<()> {
    let kept = ensemble.map_or(0, |e| e.kept.len());
    let mut header = String::from("t,pe_master,pe_mean,pe_stderr");
    for i in 0..kept {
        header.push_str(&format!(",pe_traj_{i}"));
    }
    writeln!(w, "{header}")?;
    for (i, (&t, &pe)) in master.times.iter().zip(&master.pe).enumerate() {
        let mut row = vec![number(t), number(pe)];
        match ensemble {
            Some(e) => {
                debug_assert_eq!(e.times.len(), master.times.len());
                row.push(number(e.pe_mean[i]));
                row.push(number(e.pe_stderr[i]));
                row.extend(e.kept.iter().map(|c| number(c.pe[i])));
            }
            None => row.extend([number(f64::NAN), number(f64::NAN)]),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn emit_oracle_csv(study: &ConvergenceStudy, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "t,pe_filter,pe_oracle")?;
    let c = &study.coarse;
    for ((t, f), o) in c.times.iter().zip(&c.pe_filter).zip(&c.pe_oracle) {
        writeln!(w, "{},{},{}", number(*t), number(*f), number(*o))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn auto_sampling_targets_millisecond_rows() {
        let mut cfg = presets::find("fig4a").unwrap().cfg;
        assert_eq!(auto_sample_every(&cfg), 1);
        cfg.dt = 1e-4;
        assert_eq!(auto_sample_every(&cfg), 10);
    }

    #[test]
    fn auto_sampling_caps_rows() {
        let cfg = presets::find("fig3a_green").unwrap().cfg;
        let every = auto_sample_every(&cfg);
        let steps = cfg.grid().unwrap().steps();
        assert!(steps / every <= MAX_ROWS);
    }

    #[test]
    fn csv_without_ensemble_has_four_columns() {
        let curve = Curve {
            times: vec![0.0, 0.5],
            pe: vec![0.0, 0.25],
            peak: photon_filter_core::Peak { t: 0.5, pe: 0.25 },
        };
        let mut buf = Vec::new();
        emit_csv(&curve, None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,pe_master,pe_mean,pe_stderr");
        assert_eq!(lines[2], "5.0000000000000000e-1,2.5000000000000000e-1,NaN,NaN");
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut scenario: Scenario = presets::find("fig4a").unwrap().into();
        scenario.cfg.n_traj = 4;
        scenario.cfg.keep_trajectories = 2;
        scenario.cfg.t1 = 3.0;
        scenario.cfg.sample_every = 100;
        let outcome = compute(&scenario).unwrap();
        let report = build_report(&scenario, &outcome, vec![]);
        let json = serde_json::to_string(&report).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}

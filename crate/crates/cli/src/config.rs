//! Scenario files: TOML with one level of sections, every key optional when a
//! `preset` supplies the base scenario.
//!
//! ```toml
//! preset = "fig4a"          # optional base
//!
//! [model]
//! kappa1 = 1.0
//! kappa2 = 0.0
//! r = 0.7071067811865476
//! eta = "ground"            # ground | excited | plus
//!
//! [pulse1]
//! kind = "gaussian"         # rising_exp | delayed_rising_exp | gaussian | vacuum
//! omega = 1.46
//! tau = 3.0
//!
//! [pulse2]
//! kind = "vacuum"
//!
//! [simulation]
//! scheme = "hh"             # hh | hp
//! t0 = -2.0
//! t1 = 15.0
//! dt = 1e-3
//! n_traj = 500
//! seed = 1
//! renormalize = false
//! oracle_compare = false
//! jump_form = "derived"     # derived | as_printed
//! keep_trajectories = 10
//! sample_every = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use photon_filter_core::operator::KetState;
use photon_filter_core::{default_window, HpJumpForm, MeasurementScheme, ModelParams, PulseShape, SimulationConfig};

use crate::error::CliError;
use crate::run::auto_sample_every;
use crate::presets::{self, AcceptanceTarget, ScenarioPreset};

/// A fully resolved run request.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub preset: Option<String>,
    pub cfg: SimulationConfig,
    pub targets: Vec<AcceptanceTarget>,
    pub qualitative: bool,
}

impl From<ScenarioPreset> for Scenario {
    fn from(p: ScenarioPreset) -> Self {
        Self {
            name: p.name.to_string(),
            preset: Some(p.name.to_string()),
            cfg: SimulationConfig {
                sample_every: auto_sample_every(&p.cfg),
                ..p.cfg
            },
            targets: p.targets,
            qualitative: p.qualitative,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    name: Option<String>,
    model: Option<ModelSection>,
    pulse1: Option<PulseSection>,
    pulse2: Option<PulseSection>,
    simulation: Option<SimulationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kappa1: Option<f64>,
    kappa2: Option<f64>,
    r: Option<f64>,
    eta: Option<Eta>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Eta {
    Ground,
    Excited,
    Plus,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PulseSection {
    RisingExp { gamma: f64 },
    DelayedRisingExp { gamma: f64, delay: f64 },
    Gaussian { omega: f64, tau: f64 },
    Vacuum,
}

impl From<PulseSection> for PulseShape {
    fn from(p: PulseSection) -> Self {
        match p {
            PulseSection::RisingExp { gamma } => PulseShape::RisingExp { gamma },
            PulseSection::DelayedRisingExp { gamma, delay } => PulseShape::DelayedRisingExp { gamma, delay },
            PulseSection::Gaussian { omega, tau } => PulseShape::Gaussian { omega, tau },
            PulseSection::Vacuum => PulseShape::Vacuum,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Hh,
    Hp,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum JumpForm {
    Derived,
    AsPrinted,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    scheme: Option<Scheme>,
    t0: Option<f64>,
    t1: Option<f64>,
    dt: Option<f64>,
    n_traj: Option<usize>,
    seed: Option<u64>,
    renormalize: Option<bool>,
    oracle_compare: Option<bool>,
    jump_form: Option<JumpForm>,
    keep_trajectories: Option<usize>,
    sample_every: Option<usize>,
}

/// Resolves a preset name or a config file path.
pub fn parse_config(target: &str) -> Result<Scenario, CliError> {
    let path = Path::new(target);
    if path.is_file() {
        return parse_file(path);
    }
    if let Some(p) = presets::find(target) {
        return Ok(p.into());
    }
    if path.extension().is_some() || target.contains(std::path::MAIN_SEPARATOR) {
        Err(CliError::MissingFile(path.to_path_buf()))
    } else {
        Err(CliError::UnknownPreset(target.to_string()))
    }
}

pub fn parse_file(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|_| CliError::MissingFile(path.to_path_buf()))?;
    parse_str(&text, path)
}

/// Parses config text; `origin` is only used in messages and for the default name.
pub fn parse_str(text: &str, origin: &Path) -> Result<Scenario, CliError> {
    let schema = |message: String| CliError::Schema {
        path: PathBuf::from(origin),
        message,
    };
    let file: ConfigFile = toml::from_str(text).map_err(|e| schema(e.to_string()))?;

    let base = match &file.preset {
        Some(name) => Some(presets::find(name).ok_or_else(|| CliError::UnknownPreset(name.clone()))?),
        None => None,
    };
    let physics_overridden = file.model.is_some() || file.pulse1.is_some() || file.pulse2.is_some();

    let model = file.model.unwrap_or(ModelSection {
        kappa1: None,
        kappa2: None,
        r: None,
        eta: None,
    });
    let base_params = base.as_ref().map(|b| b.cfg.params);
    let required = |v: Option<f64>, from_base: Option<f64>, key: &str| {
        v.or(from_base).ok_or_else(|| schema(format!("missing key `model.{key}` (no preset given)")))
    };
    let pulse = |section: Option<PulseSection>, from_base: Option<PulseShape>, key: &str| {
        section
            .map(PulseShape::from)
            .or(from_base)
            .ok_or_else(|| schema(format!("missing section `[{key}]` (no preset given)")))
    };
    let params = ModelParams {
        kappa1: required(model.kappa1, base_params.map(|p| p.kappa1), "kappa1")?,
        kappa2: required(model.kappa2, base_params.map(|p| p.kappa2), "kappa2")?,
        r: model
            .r
            .or(base_params.map(|p| p.r))
            .unwrap_or(std::f64::consts::FRAC_1_SQRT_2),
        pulse1: pulse(file.pulse1, base_params.map(|p| p.pulse1), "pulse1")?,
        pulse2: pulse(file.pulse2, base_params.map(|p| p.pulse2), "pulse2")?,
        eta: match model.eta {
            Some(Eta::Ground) => KetState::ground(),
            Some(Eta::Excited) => KetState::excited(),
            Some(Eta::Plus) => KetState::plus(),
            None => base_params.map_or_else(KetState::ground, |p| p.eta),
        },
    };

    let mut cfg = match &base {
        Some(b) if !physics_overridden => b.cfg,
        Some(b) => {
            let (t0, t1) = default_window(&params);
            SimulationConfig { params, t0, t1, ..b.cfg }
        }
        None => SimulationConfig::new(params, MeasurementScheme::HomodyneHomodyne),
    };
    if let Some(sim) = file.simulation {
        if let Some(s) = sim.scheme {
            cfg.scheme = match s {
                Scheme::Hh => MeasurementScheme::HomodyneHomodyne,
                Scheme::Hp => MeasurementScheme::HomodynePhotocount,
            };
        }
        if let Some(f) = sim.jump_form {
            cfg.jump_form = match f {
                JumpForm::Derived => HpJumpForm::Derived,
                JumpForm::AsPrinted => HpJumpForm::AsPrinted,
            };
        }
        cfg.t0 = sim.t0.unwrap_or(cfg.t0);
        cfg.t1 = sim.t1.unwrap_or(cfg.t1);
        cfg.dt = sim.dt.unwrap_or(cfg.dt);
        cfg.n_traj = sim.n_traj.unwrap_or(cfg.n_traj);
        cfg.seed = sim.seed.unwrap_or(cfg.seed);
        cfg.renormalize = sim.renormalize.unwrap_or(cfg.renormalize);
        cfg.oracle_compare = sim.oracle_compare.unwrap_or(cfg.oracle_compare);
        cfg.keep_trajectories = sim.keep_trajectories.unwrap_or(cfg.keep_trajectories);
        cfg.sample_every = sim.sample_every.unwrap_or_else(|| auto_sample_every(&cfg));
    } else {
        cfg.sample_every = auto_sample_every(&cfg);
    }
    cfg.validate()?;

    let default_name = origin.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
    let keep_targets = base.is_some() && !physics_overridden;
    Ok(Scenario {
        name: file.name.unwrap_or(default_name),
        preset: file.preset,
        cfg,
        targets: if keep_targets { base.as_ref().unwrap().targets.clone() } else { Vec::new() },
        qualitative: base.as_ref().is_some_and(|b| b.qualitative) || !keep_targets,
    })
}

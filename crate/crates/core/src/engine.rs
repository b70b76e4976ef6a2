//! Time grids, seeded noise, single trajectories, ensembles and the
//! filter/oracle comparison runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{excitation_probability, Filter, FilterState, HpJumpForm, MasterMethod, MeasurementScheme, ModelParams};
use crate::oracle::{build_oracle, check_compatibility, Oracle};

/// Upper bound on the number of steps of one run.
pub const MAX_STEPS: u64 = 100_000_000;
/// Trajectories per parallel work unit. Fixed so results do not depend on the
/// number of threads.
pub const ENSEMBLE_BLOCK: usize = 8;
/// Fraction of failed trajectories above which an ensemble is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
/// Absolute slack added to the `3 * stderr` band, for grid points where every
/// trajectory is still identical.
pub const BAND_FLOOR: f64 = 1e-12;

const ORACLE_STREAM_SALT: u64 = 0x6f72_6163_6c65;
const CLOCK_STREAM_SALT: u64 = 0x636c_6f63_6b00;

/// Default window: earliest pulse window start, up to the latest window end
/// plus eight atomic lifetimes.
pub fn default_window(params: &ModelParams) -> (f64, f64) {
    let pulses = params.pulses();
    let t0 = pulses.iter().filter_map(|p| p.window_start()).fold(f64::INFINITY, f64::min);
    let t0 = if t0.is_finite() { t0 } else { 0.0 };
    let end = pulses.iter().filter_map(|p| p.window_end()).fold(f64::NEG_INFINITY, f64::max);
    let end = if end.is_finite() { end } else { t0 };
    let kappa_min = [params.kappa1, params.kappa2]
        .into_iter()
        .filter(|k| *k > 0.0)
        .fold(f64::INFINITY, f64::min);
    let tail = if kappa_min.is_finite() { 8.0 / kappa_min } else { 8.0 };
    (t0, end + tail)
}

/// Uniform grid `t_k = (k0 + k) dt` with selected points snapped exactly onto
/// pulse discontinuities.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    first: i64,
    dt: f64,
    steps: usize,
    snaps: Vec<f64>,
}

impl TimeGrid {
    /// Grid covering `[t0, t1]`; starts at the largest multiple of `dt` not above `t0`.
    pub fn new(t0: f64, t1: f64, dt: f64, snaps: &[f64]) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::invalid("t1", format!("window [{t0}, {t1}] is empty")));
        }
        let first = (t0 / dt + 1e-9).floor();
        let last = (t1 / dt - 1e-9).ceil();
        let steps = last - first;
        if steps > MAX_STEPS as f64 {
            return Err(Error::invalid("dt", format!("{steps} steps exceed the limit of {MAX_STEPS}")));
        }
        Ok(Self {
            first: first as i64,
            dt,
            steps: steps as usize,
            snaps: snaps.to_vec(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn start(&self) -> f64 {
        self.time(0)
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        let t = (self.first + k as i64) as f64 * self.dt;
        self.snaps
            .iter()
            .copied()
            .find(|s| (t - s).abs() < 1e-6 * self.dt)
            .unwrap_or(t)
    }

    /// Grid with half the step on the same start point.
    pub fn halved(&self) -> Self {
        Self {
            first: 2 * self.first,
            dt: 0.5 * self.dt,
            steps: 2 * self.steps,
            snaps: self.snaps.clone(),
        }
    }

    /// Indices `0, every, 2 every, ...` plus the final index.
    pub fn sample_indices(&self, every: usize) -> Vec<usize> {
        let every = every.max(1);
        let mut idx: Vec<usize> = (0..=self.steps).step_by(every).collect();
        if idx.last() != Some(&self.steps) {
            idx.push(self.steps);
        }
        idx
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub scheme: MeasurementScheme,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub renormalize: bool,
    /// Request a filter/oracle comparison alongside the run.
    pub oracle_compare: bool,
    pub jump_form: HpJumpForm,
    pub master_method: MasterMethod,
    /// Keep every `sample_every`-th grid point in returned curves.
    pub sample_every: usize,
    /// Number of individual trajectories returned alongside ensemble statistics.
    pub keep_trajectories: usize,
}

impl SimulationConfig {
    pub fn new(params: ModelParams, scheme: MeasurementScheme) -> Self {
        let (t0, t1) = default_window(&params);
        Self {
            params,
            scheme,
            t0,
            t1,
            dt: 1e-3,
            n_traj: 500,
            seed: 0,
            renormalize: false,
            oracle_compare: false,
            jump_form: HpJumpForm::default(),
            master_method: MasterMethod::default(),
            sample_every: 1,
            keep_trajectories: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !check_compatibility(&self.scheme.matrices()) {
            return Err(Error::invalid("scheme", "measurement matrices are not compatible"));
        }
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every", "must be at least 1"));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let snaps: Vec<f64> = self.params.pulses().iter().filter_map(|p| p.cutoff()).collect();
        TimeGrid::new(self.t0, self.t1, self.dt, &snaps)
    }

    pub fn filter(&self) -> Result<Filter> {
        Ok(Filter::new(self.params)?
            .with_jump_form(self.jump_form)
            .with_renormalize(self.renormalize))
    }
}

/// Independent reproducible stream per `(seed, index)`.
pub fn noise_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Sampled curve of `Pe`, with the maximum found on the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub times: Vec<f64>,
    pub pe: Vec<f64>,
    pub peak: Peak,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub t: f64,
    pub pe: f64,
}

impl Peak {
    fn start() -> Self {
        Self {
            t: f64::NAN,
            pe: f64::NEG_INFINITY,
        }
    }

    fn offer(&mut self, t: f64, pe: f64) {
        if pe > self.pe {
            *self = Self { t, pe };
        }
    }
}

/// Earliest global maximum.
pub fn peak_stats(times: &[f64], values: &[f64]) -> Option<Peak> {
    let mut peak = Peak::start();
    for (&t, &v) in times.iter().zip(values) {
        peak.offer(t, v);
    }
    peak.t.is_finite().then_some(peak)
}

/// Interior local maxima (strictly above the left neighbour, not below the right).
pub fn local_maxima(times: &[f64], values: &[f64]) -> Vec<Peak> {
    values
        .windows(3)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] && w[1] >= w[2])
        .map(|(i, w)| Peak { t: times[i + 1], pe: w[1] })
        .collect()
}

/// Per-trajectory health and martingale bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Smallest unclamped counting intensity seen (counting scheme only).
    pub min_kp_raw: f64,
    pub clicks: u64,
    /// `sum Kp dt` over the run (counting scheme only).
    pub integrated_kp: f64,
    /// Sum of the channel-1 innovations.
    pub innovation_sum: f64,
}

impl Diagnostics {
    fn observe(&mut self, s: &FilterState) {
        self.max_trace_error = self.max_trace_error.max((s.trace() - 1.0).abs());
        self.max_hermiticity_error = self.max_hermiticity_error.max(s.hermiticity_error());
    }
}

/// Measurement record, one entry per step.
#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Homodyne { dw1: Vec<f64>, dw2: Vec<f64> },
    Counting { dw1: Vec<f64>, clicks: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub index: u64,
    pub curve: Curve,
    pub record: Option<Record>,
    pub diagnostics: Diagnostics,
}

/// Simulates trajectory `index` of `cfg`, keeping its measurement record.
pub fn simulate_trajectory(cfg: &SimulationConfig, index: u64) -> Result<TrajectoryResult> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    run_trajectory(cfg, &cfg.filter()?, &grid, index, true)
}

fn run_trajectory(cfg: &SimulationConfig, filter: &Filter, grid: &TimeGrid, index: u64, keep_record: bool) -> Result<TrajectoryResult> {
    let mut rng = noise_stream(cfg.seed, index);
    let mut s = filter.init(grid.start());
    let mut diag = Diagnostics {
        min_kp_raw: f64::INFINITY,
        ..Diagnostics::default()
    };
    diag.observe(&s);
    let mut dw1s = Vec::new();
    let mut dw2s = Vec::new();
    let mut clicks = Vec::new();
    let mut times = vec![s.t];
    let mut pe = vec![excitation_probability(&s)];
    let mut peak = Peak::start();
    peak.offer(s.t, pe[0]);

    for k in 0..grid.steps() {
        let t = grid.time(k);
        let h = grid.time(k + 1) - t;
        s.t = t;
        let sqrt_h = h.sqrt();
        let dw1 = standard_normal(&mut rng) * sqrt_h;
        let step = match cfg.scheme {
            MeasurementScheme::HomodyneHomodyne => {
                let dw2 = standard_normal(&mut rng) * sqrt_h;
                if keep_record {
                    dw2s.push(dw2);
                }
                filter.hh_step(&s, h, dw1, dw2)
            }
            MeasurementScheme::HomodynePhotocount => {
                let u: f64 = rng.random();
                filter.hp_step_sampled(&s, h, dw1, u).map(|(next, click, kp_raw)| {
                    diag.min_kp_raw = diag.min_kp_raw.min(kp_raw);
                    diag.integrated_kp += kp_raw.max(0.0) * h;
                    if click {
                        diag.clicks += 1;
                        if keep_record {
                            clicks.push(k);
                        }
                    }
                    next
                })
            }
        };
        s = step.map_err(|e| Error::Trajectory {
            trajectory: index,
            step: k,
            source: Box::new(e),
        })?;
        s.t = grid.time(k + 1);
        diag.innovation_sum += dw1;
        if keep_record {
            dw1s.push(dw1);
        }
        diag.observe(&s);
        let p = excitation_probability(&s);
        peak.offer(s.t, p);
        if (k + 1) % cfg.sample_every == 0 || k + 1 == grid.steps() {
            times.push(s.t);
            pe.push(p);
        }
    }
    if !diag.min_kp_raw.is_finite() {
        diag.min_kp_raw = 0.0;
    }
    let record = keep_record.then_some(match cfg.scheme {
        MeasurementScheme::HomodyneHomodyne => Record::Homodyne { dw1: dw1s, dw2: dw2s },
        MeasurementScheme::HomodynePhotocount => Record::Counting { dw1: dw1s, clicks },
    });
    Ok(TrajectoryResult {
        index,
        curve: Curve { times, pe, peak },
        record,
        diagnostics: diag,
    })
}

/// Deterministic dynamics on the grid of `cfg` with the given integrator.
pub fn integrate_master(cfg: &SimulationConfig, method: MasterMethod) -> Result<Curve> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let filter = Filter::new(cfg.params)?;
    let mut s = filter.init(grid.start());
    let mut times = vec![s.t];
    let mut pe = vec![excitation_probability(&s)];
    let mut peak = Peak::start();
    peak.offer(s.t, pe[0]);
    for k in 0..grid.steps() {
        let t = grid.time(k);
        s.t = t;
        s = filter.master_step(&s, grid.time(k + 1) - t, method)?;
        s.t = grid.time(k + 1);
        let p = excitation_probability(&s);
        peak.offer(s.t, p);
        if (k + 1) % cfg.sample_every == 0 || k + 1 == grid.steps() {
            times.push(s.t);
            pe.push(p);
        }
    }
    Ok(Curve { times, pe, peak })
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = sum / nf;
        let stderr = if n > 1 {
            ((sum_sq - nf * mean * mean).max(0.0) / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }

    /// `|mean - target| <= k * stderr + BAND_FLOOR`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + BAND_FLOOR
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub pe_mean: Vec<f64>,
    pub pe_stderr: Vec<f64>,
    /// Euler solution of the averaged dynamics on the same grid.
    pub pe_master: Vec<f64>,
    /// The first `keep_trajectories` curves.
    pub kept: Vec<Curve>,
    pub peaks: Vec<Peak>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub first_failure: Option<Error>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    /// Channel-1 innovation totals, expected to average to zero.
    pub innovation: MeanEstimate,
    /// `N - sum Kp dt` per trajectory (counting scheme), expected to average to zero.
    pub compensated_count: MeanEstimate,
}

impl EnsembleResult {
    pub fn sup_gap(&self) -> f64 {
        self.pe_mean
            .iter()
            .zip(&self.pe_master)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when the mean stays within `k` standard errors of the master curve everywhere.
    pub fn within_band(&self, k: f64) -> bool {
        self.pe_mean
            .iter()
            .zip(&self.pe_stderr)
            .zip(&self.pe_master)
            .all(|((m, e), p)| (m - p).abs() <= k * e + BAND_FLOOR)
    }

    /// Largest `|mean - master| / stderr`, skipping points whose gap is below
    /// `BAND_FLOOR` (round-off where the ensemble has no spread yet).
    pub fn max_z(&self) -> f64 {
        self.pe_mean
            .iter()
            .zip(&self.pe_stderr)
            .zip(&self.pe_master)
            .map(|((m, e), p)| ((m - p).abs(), *e))
            .filter(|&(gap, e)| gap > BAND_FLOOR && e > 0.0)
            .map(|(gap, e)| gap / e)
            .fold(0.0, f64::max)
    }
}

#[derive(Default)]
struct Partial {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    kept: Vec<Curve>,
    peaks: Vec<Peak>,
    ok: usize,
    failures: Vec<Error>,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    innovation: [f64; 2],
    compensated: [f64; 2],
}

impl Partial {
    fn absorb(&mut self, r: TrajectoryResult, keep: bool) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; r.curve.pe.len()];
            self.sum_sq = vec![0.0; r.curve.pe.len()];
        }
        for ((s, q), p) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(&r.curve.pe) {
            *s += p;
            *q += p * p;
        }
        let d = r.diagnostics;
        self.ok += 1;
        self.peaks.push(r.curve.peak);
        self.max_trace_error = self.max_trace_error.max(d.max_trace_error);
        self.max_hermiticity_error = self.max_hermiticity_error.max(d.max_hermiticity_error);
        self.innovation[0] += d.innovation_sum;
        self.innovation[1] += d.innovation_sum * d.innovation_sum;
        let c = d.clicks as f64 - d.integrated_kp;
        self.compensated[0] += c;
        self.compensated[1] += c * c;
        if keep {
            self.kept.push(r.curve);
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        if self.sum.is_empty() {
            self.sum = other.sum;
            self.sum_sq = other.sum_sq;
        } else if !other.sum.is_empty() {
            for (a, b) in self.sum.iter_mut().zip(&other.sum) {
                *a += b;
            }
            for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
                *a += b;
            }
        }
        self.kept.extend(other.kept);
        self.peaks.extend(other.peaks);
        self.ok += other.ok;
        self.failures.extend(other.failures);
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_error = self.max_hermiticity_error.max(other.max_hermiticity_error);
        for i in 0..2 {
            self.innovation[i] += other.innovation[i];
            self.compensated[i] += other.compensated[i];
        }
        self
    }
}

/// Runs `cfg.n_traj` trajectories in parallel and compares their mean with
/// the Euler master curve on the same grid.
pub fn run_ensemble(cfg: &SimulationConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    if cfg.n_traj == 0 {
        return Err(Error::invalid("n_traj", "an ensemble needs at least one trajectory"));
    }
    let grid = cfg.grid()?;
    let filter = cfg.filter()?;
    let blocks: Vec<(usize, usize)> = (0..cfg.n_traj)
        .step_by(ENSEMBLE_BLOCK)
        .map(|a| (a, (a + ENSEMBLE_BLOCK).min(cfg.n_traj)))
        .collect();
    let partials: Vec<Partial> = blocks
        .par_iter()
        .map(|&(a, b)| {
            let mut part = Partial::default();
            for i in a..b {
                match run_trajectory(cfg, &filter, &grid, i as u64, false) {
                    Ok(r) => part.absorb(r, i < cfg.keep_trajectories),
                    Err(e) => part.failures.push(e),
                }
            }
            part
        })
        .collect();
    let total = partials.into_iter().fold(Partial::default(), Partial::merge);

    let n_failed = total.failures.len();
    if n_failed as f64 > MAX_FAILURE_FRACTION * cfg.n_traj as f64 || total.ok == 0 {
        return Err(Error::EnsembleFailed {
            failed: n_failed,
            total: cfg.n_traj,
            first: Box::new(total.failures.into_iter().next().expect("at least one failure")),
        });
    }
    let master = integrate_master(cfg, MasterMethod::Euler)?;
    let (pe_mean, pe_stderr) = total
        .sum
        .iter()
        .zip(&total.sum_sq)
        .map(|(s, q)| {
            let e = MeanEstimate::from_sums(*s, *q, total.ok);
            (e.mean, e.stderr)
        })
        .unzip();
    Ok(EnsembleResult {
        times: master.times,
        pe_mean,
        pe_stderr,
        pe_master: master.pe,
        kept: total.kept,
        peaks: total.peaks,
        n_ok: total.ok,
        n_failed,
        first_failure: total.failures.into_iter().next(),
        max_trace_error: total.max_trace_error,
        max_hermiticity_error: total.max_hermiticity_error,
        innovation: MeanEstimate::from_sums(total.innovation[0], total.innovation[1], total.ok),
        compensated_count: MeanEstimate::from_sums(total.compensated[0], total.compensated[1], total.ok),
    })
}

/// Filter and oracle driven by one shared measurement record.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    pub dt: f64,
    pub times: Vec<f64>,
    pub pe_filter: Vec<f64>,
    pub pe_oracle: Vec<f64>,
    /// `sup_t |Pe_filter - Pe_oracle|` over the full grid.
    pub sup_pe_gap: f64,
    /// Sup-norm gap per stored component, over times where the oracle can
    /// recover it.
    pub component_gaps: [f64; 10],
    pub clicks: usize,
}

/// Ratio of the gaps at `dt` and `dt / 2` on the same noise path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub coarse: OracleComparison,
    pub fine: OracleComparison,
}

impl ConvergenceStudy {
    pub fn ratio(&self) -> f64 {
        self.coarse.sup_pe_gap / self.fine.sup_pe_gap
    }
}

/// Runs filter and oracle side by side on trajectory `index` at `cfg.dt`.
///
/// The oracle generates the record: `dY = dW + m_oracle dt`, and the filter is
/// fed the innovation `dY - m_filter dt`. Brownian increments are drawn at
/// `dt / 2` and summed in pairs, so [`convergence_study`] can reuse the path.
/// Counts come from an exponential clock on the oracle intensity.
pub fn compare_with_oracle(cfg: &SimulationConfig, index: u64) -> Result<OracleComparison> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    run_comparison(cfg, &grid, 2, index)
}

pub fn convergence_study(cfg: &SimulationConfig, index: u64) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let coarse = run_comparison(cfg, &grid, 2, index)?;
    let fine = run_comparison(cfg, &grid.halved(), 1, index)?;
    Ok(ConvergenceStudy { coarse, fine })
}

fn run_comparison(cfg: &SimulationConfig, grid: &TimeGrid, aggregate: usize, index: u64) -> Result<OracleComparison> {
    let filter = cfg.filter()?;
    let oracle = Oracle::new(&cfg.params)?;
    let mut path = noise_stream(cfg.seed ^ ORACLE_STREAM_SALT, index);
    let mut clock = noise_stream(cfg.seed ^ CLOCK_STREAM_SALT, index);
    let mut threshold: f64 = clock.sample(Exp1);
    let mut accumulated = 0.0;
    let fine_scale = (grid.dt() / aggregate as f64).sqrt();

    let mut fs = filter.init(grid.start());
    let mut os = build_oracle(&cfg.params, grid.start());
    let mut times = vec![fs.t];
    let mut pe_filter = vec![excitation_probability(&fs)];
    let mut pe_oracle = vec![os.excitation_probability()];
    let mut sup_pe_gap: f64 = 0.0;
    let mut component_gaps = [0.0_f64; 10];
    let mut clicks = 0;
    let wrap = |k: usize| {
        move |e: Error| Error::Trajectory {
            trajectory: index,
            step: k,
            source: Box::new(e),
        }
    };

    for k in 0..grid.steps() {
        let t = grid.time(k);
        let h = grid.time(k + 1) - t;
        fs.t = t;
        os.t = t;
        let mut dw = [0.0; 2];
        for _ in 0..aggregate {
            dw[0] += standard_normal(&mut path) * fine_scale;
            dw[1] += standard_normal(&mut path) * fine_scale;
        }
        let (om1, om2) = oracle.homodyne_means(&os);
        let (fm1, fm2) = filter.homodyne_means(&fs);
        let dy1 = dw[0] + om1 * h;
        match cfg.scheme {
            MeasurementScheme::HomodyneHomodyne => {
                let dy2 = dw[1] + om2 * h;
                os = oracle.hh_step(&os, h, dw[0], dw[1]).map_err(wrap(k))?;
                fs = filter.hh_step(&fs, h, dy1 - fm1 * h, dy2 - fm2 * h).map_err(wrap(k))?;
            }
            MeasurementScheme::HomodynePhotocount => {
                accumulated += oracle.counting_intensity(&os) * h;
                let click = accumulated >= threshold;
                if click {
                    clicks += 1;
                    accumulated = 0.0;
                    threshold = clock.sample(Exp1);
                }
                os = oracle.hp_step(&os, h, dw[0], click).map_err(wrap(k))?;
                fs = filter.hp_step(&fs, h, dy1 - fm1 * h, click).map_err(wrap(k))?;
            }
        }
        let t_next = grid.time(k + 1);
        fs.t = t_next;
        os.t = t_next;
        let extraction = oracle.extract(&os);
        let (pf, po) = (excitation_probability(&fs), extraction.excitation_probability());
        sup_pe_gap = sup_pe_gap.max((pf - po).abs());
        for (i, (gap, m)) in component_gaps.iter_mut().zip(&extraction.components).enumerate() {
            if let Some(m) = m {
                *gap = gap.max(fs.rho[i].max_abs_diff(m));
            }
        }
        if (k + 1) % cfg.sample_every == 0 || k + 1 == grid.steps() {
            times.push(t_next);
            pe_filter.push(pf);
            pe_oracle.push(po);
        }
    }
    Ok(OracleComparison {
        dt: grid.dt(),
        times,
        pe_filter,
        pe_oracle,
        sup_pe_gap,
        component_gaps,
        clicks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::testing::gaussian_params;
    use crate::operator::KetState;
    use crate::pulse::PulseShape;
    use approx::assert_relative_eq;

    fn single_photon(gamma: f64) -> ModelParams {
        ModelParams {
            kappa1: 1.0,
            kappa2: 0.0,
            r: std::f64::consts::FRAC_1_SQRT_2,
            pulse1: PulseShape::RisingExp { gamma },
            pulse2: PulseShape::Vacuum,
            eta: KetState::ground(),
        }
    }

    fn quick(params: ModelParams, scheme: MeasurementScheme) -> SimulationConfig {
        SimulationConfig {
            t0: -6.0,
            t1: 4.0,
            dt: 2e-3,
            n_traj: 40,
            seed: 7,
            ..SimulationConfig::new(params, scheme)
        }
    }

    #[test]
    fn default_window_covers_pulses_and_decay() {
        let (t0, t1) = default_window(&single_photon(1.0));
        assert_relative_eq!(t0, -20.0);
        assert_relative_eq!(t1, 8.0);
        let (t0, t1) = default_window(&gaussian_params(1.0, 0.5));
        assert!(t0 < 3.0 && t1 > 3.0 + 8.0);
    }

    #[test]
    fn grid_snaps_onto_discontinuities() {
        let grid = TimeGrid::new(-10.05, 2.0, 1e-4, &[0.0, -10.0]).unwrap();
        let hits: Vec<f64> = (0..=grid.steps()).map(|k| grid.time(k)).filter(|t| *t == 0.0 || *t == -10.0).collect();
        assert_eq!(hits, vec![-10.0, 0.0]);
        assert!(grid.start() <= -10.05 && grid.end() >= 2.0);
        let fine = grid.halved();
        for k in (0..grid.steps()).step_by(997) {
            assert_eq!(fine.time(2 * k), grid.time(k));
        }
    }

    #[test]
    fn grid_rejects_bad_windows() {
        assert!(TimeGrid::new(1.0, 0.0, 1e-3, &[]).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0, &[]).is_err());
        assert!(TimeGrid::new(0.0, 1e6, 1e-6, &[]).is_err());
    }

    #[test]
    fn sample_indices_include_endpoints() {
        let grid = TimeGrid::new(0.0, 1.0, 0.1, &[]).unwrap();
        assert_eq!(grid.sample_indices(3), vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn peaks_pick_earliest_maximum() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = [0.1, 0.5, 0.2, 0.5, 0.1];
        let p = peak_stats(&t, &v).unwrap();
        assert_eq!((p.t, p.pe), (1.0, 0.5));
        assert_eq!(local_maxima(&t, &v).len(), 2);
        assert!(peak_stats(&[], &[]).is_none());
    }

    #[test]
    fn trajectories_are_reproducible_per_index() {
        let cfg = quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodyneHomodyne);
        let a = simulate_trajectory(&cfg, 3).unwrap();
        let b = simulate_trajectory(&cfg, 3).unwrap();
        let c = simulate_trajectory(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.curve.pe, c.curve.pe);
    }

    #[test]
    fn ensemble_is_independent_of_thread_count() {
        let cfg = quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodynePhotocount);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_ensemble(&cfg)).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.pe_mean, b.pe_mean);
        assert_eq!(a.pe_stderr, b.pe_stderr);
    }

    #[test]
    fn homodyne_trajectory_keeps_trace_and_hermiticity() {
        let cfg = quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodyneHomodyne);
        let r = simulate_trajectory(&cfg, 0).unwrap();
        assert!(r.diagnostics.max_trace_error < 1e-8);
        assert!(r.diagnostics.max_hermiticity_error < 1e-8);
        match r.record.unwrap() {
            Record::Homodyne { dw1, dw2 } => assert_eq!(dw1.len(), dw2.len()),
            other => panic!("unexpected record {other:?}"),
        }
    }

    #[test]
    fn black_preset_counts_at_most_one_photon() {
        let params = single_photon(1.0);
        let cfg = SimulationConfig {
            scheme: MeasurementScheme::HomodynePhotocount,
            ..quick(params, MeasurementScheme::HomodynePhotocount)
        };
        for i in 0..20 {
            let r = simulate_trajectory(&cfg, i).unwrap();
            assert!(r.diagnostics.clicks <= 1, "trajectory {i}");
        }
    }

    #[test]
    fn master_rk4_decays_exponentially_after_rising_pulse() {
        let cfg = SimulationConfig {
            dt: 1e-3,
            ..SimulationConfig::new(single_photon(1.0), MeasurementScheme::HomodyneHomodyne)
        };
        let curve = integrate_master(&cfg, MasterMethod::Rk4).unwrap();
        assert_relative_eq!(curve.peak.pe, 1.0, epsilon = 1e-6);
        assert!(curve.peak.t.abs() < 2e-3);
        for (t, p) in curve.times.iter().zip(&curve.pe).filter(|(t, _)| **t > 0.0) {
            assert!((p - (-t).exp()).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn too_coarse_counting_step_is_reported() {
        let mut params = gaussian_params(1.0, 0.5);
        params.pulse1 = PulseShape::Gaussian { omega: 60.0, tau: 3.0 };
        params.kappa1 = 50.0;
        let cfg = SimulationConfig {
            t0: 2.5,
            t1: 3.5,
            dt: 0.05,
            ..SimulationConfig::new(params, MeasurementScheme::HomodynePhotocount)
        };
        let err = simulate_trajectory(&cfg, 0).unwrap_err();
        assert!(matches!(err, Error::Trajectory { ref source, .. } if matches!(**source, Error::JumpProbabilityTooLarge { .. })));
        assert!(err.is_numerical());
    }

    #[test]
    fn single_member_ensemble_is_the_trajectory() {
        let cfg = SimulationConfig {
            n_traj: 1,
            ..quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodyneHomodyne)
        };
        let e = run_ensemble(&cfg).unwrap();
        let r = simulate_trajectory(&cfg, 0).unwrap();
        assert_eq!(e.pe_mean, r.curve.pe);
        assert!(e.pe_stderr.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn vacuum_inputs_leave_ground_state_untouched() {
        let mut params = single_photon(1.0);
        params.pulse1 = PulseShape::Vacuum;
        params.kappa2 = 1.0;
        for scheme in [MeasurementScheme::HomodyneHomodyne, MeasurementScheme::HomodynePhotocount] {
            let cfg = SimulationConfig {
                t0: 0.0,
                t1: 2.0,
                ..quick(params, scheme)
            };
            for i in 0..4 {
                let r = simulate_trajectory(&cfg, i).unwrap();
                assert!(r.curve.pe.iter().all(|p| *p == 0.0));
            }
        }
    }

    #[test]
    fn homodyne_ensemble_tracks_master_within_three_stderr() {
        let cfg = SimulationConfig {
            t0: 0.0,
            t1: 8.0,
            n_traj: 200,
            ..quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodyneHomodyne)
        };
        let e = run_ensemble(&cfg).unwrap();
        assert!(e.within_band(3.0), "max z {}", e.max_z());
        assert!(e.innovation.within(0.0, 3.0));
    }

    #[test]
    fn counting_ensemble_tracks_master_within_variance_bound() {
        // Pe lies in [0, 1], so Var(Pe) <= m (1 - m) bounds the standard error
        // even where rare records dominate the sample.
        let cfg = SimulationConfig {
            t0: 0.0,
            t1: 8.0,
            n_traj: 200,
            ..quick(gaussian_params(1.0, 0.5), MeasurementScheme::HomodynePhotocount)
        };
        let e = run_ensemble(&cfg).unwrap();
        let m = e.n_ok as f64;
        for (mean, master) in e.pe_mean.iter().zip(&e.pe_master) {
            let bound = (master * (1.0 - master)).max(0.0) / m;
            assert!((mean - master).abs() <= 3.0 * bound.sqrt() + BAND_FLOOR);
        }
        assert!(e.compensated_count.within(0.0, 3.0), "{:?}", e.compensated_count);
    }

    #[test]
    fn oracle_comparison_tracks_filter() {
        for scheme in [MeasurementScheme::HomodyneHomodyne, MeasurementScheme::HomodynePhotocount] {
            let cfg = SimulationConfig {
                dt: 1e-3,
                ..quick(gaussian_params(1.0, 0.5), scheme)
            };
            let cmp = compare_with_oracle(&cfg, 1).unwrap();
            assert!(cmp.sup_pe_gap < 5e-2, "{scheme:?}: {}", cmp.sup_pe_gap);
            assert!(cmp.component_gaps.iter().all(|g| g.is_finite()));
        }
    }
}

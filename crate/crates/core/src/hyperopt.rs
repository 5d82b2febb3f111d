//! Hyperparameter search over `(rho, G, phi0, tau/T, lambda)`.
//!
//! Two samplers are provided: uniform random search and a tree-structured
//! Parzen estimator (TPE). Studies are append-only and persist as JSON lines:
//! one `header` record followed by one `trial` record per evaluation.
//!
//! Every suggestion draws from its own generator seeded by
//! `(sampler seed, trial id)`, and trials evaluated in parallel only see the
//! history preceding their batch, so a study is a pure function of its
//! settings whatever the interruption and resume points were.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Experiment, TaskKind, TaskOptions};
use crate::reservoir::ReservoirConfig;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Sample uniformly in `log10` rather than linearly.
    pub log: bool,
}

impl Interval {
    pub const fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    pub const fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: true }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::config(format!("search interval for {name} is empty")));
        }
        if self.log && !(self.lo > 0.0) {
            return Err(Error::config(format!("log interval for {name} must be positive")));
        }
        Ok(())
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    /// Maps `u` (clamped to `[1e-9, 1]`) back into the interval. The lower
    /// clamp keeps half-open intervals such as `(0, 1.2]` satisfied.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(1e-9, 1.0);
        if self.log {
            let e = self.lo.log10() + u * (self.hi.log10() - self.lo.log10());
            10f64.powf(e).clamp(self.lo, self.hi)
        } else {
            (self.lo + u * (self.hi - self.lo)).min(self.hi)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub const DIMENSIONS: [&str; 5] = ["rho", "gain", "phi0", "tau_over_t", "lambda"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub rho: Interval,
    pub gain: Interval,
    pub phi0: Interval,
    pub tau_over_t: Interval,
    pub lambda: Interval,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            rho: Interval::linear(0.0, 1.0),
            gain: Interval::linear(0.0, 1.2),
            phi0: Interval::linear(0.0, std::f64::consts::PI),
            tau_over_t: Interval::linear(0.0, 5.0),
            lambda: Interval::log(1e-8, 1.0),
        }
    }
}

impl SearchSpace {
    pub fn dims(&self) -> [Interval; 5] {
        [self.rho, self.gain, self.phi0, self.tau_over_t, self.lambda]
    }

    pub fn validate(&self) -> Result<()> {
        for (iv, name) in self.dims().iter().zip(DIMENSIONS) {
            iv.validate(name)?;
        }
        Ok(())
    }

    /// Gain and delay ratio must also be strictly positive.
    pub fn contains(&self, p: &Params) -> bool {
        self.dims().iter().zip(p.to_array()).all(|(iv, v)| iv.contains(v)) && p.gain > 0.0 && p.tau_over_t > 0.0
    }

    pub fn from_unit(&self, u: [f64; 5]) -> Params {
        let d = self.dims();
        Params::from_array(std::array::from_fn(|i| d[i].from_unit(u[i])))
    }

    pub fn to_unit(&self, p: &Params) -> [f64; 5] {
        let d = self.dims();
        let v = p.to_array();
        std::array::from_fn(|i| d[i].to_unit(v[i]))
    }

    pub fn sample_uniform<R: Rng>(&self, r: &mut R) -> Params {
        self.from_unit(std::array::from_fn(|_| 1.0 - r.gen::<f64>()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub rho: f64,
    pub gain: f64,
    pub phi0: f64,
    pub tau_over_t: f64,
    pub lambda: f64,
}

impl Params {
    pub fn to_array(&self) -> [f64; 5] {
        [self.rho, self.gain, self.phi0, self.tau_over_t, self.lambda]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { rho: a[0], gain: a[1], phi0: a[2], tau_over_t: a[3], lambda: a[4] }
    }

    /// `template` with the four reservoir parameters applied; `tau/T` is
    /// snapped to a whole number of node spacings.
    pub fn apply<T: Scalar>(&self, template: &ReservoirConfig<T>) -> ReservoirConfig<T> {
        let mut cfg = template.clone();
        cfg.input_scaling = T::lit(self.rho);
        cfg.gain = T::lit(self.gain);
        cfg.phase_bias = T::lit(self.phi0);
        cfg.set_delay_ratio(T::lit(self.tau_over_t));
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

/// How a trial's parameters were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Uniform draw by the random-search sampler.
    Random,
    /// Uniform draw while TPE has fewer than `n_startup` ok trials.
    Startup,
    Tpe,
    /// Uniform draw because every ok loss was identical.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub params: Params,
    pub loss: Option<f64>,
    pub seed: u64,
    pub status: TrialStatus,
    pub origin: Origin,
    pub wall_time: Option<f64>,
}

impl Trial {
    pub fn ok_loss(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Ok => self.loss,
            TrialStatus::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    Tpe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub kind: SamplerKind,
    pub seed: u64,
    /// Share of ok trials forming the "good" density.
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Lower bound on kernel bandwidths, as a fraction of each interval.
    pub bandwidth_floor: f64,
    /// Trials suggested from the same history and evaluated together.
    pub width: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Tpe,
            seed: 0,
            gamma: 0.25,
            n_startup: 20,
            n_candidates: 24,
            bandwidth_floor: 0.01,
            width: 1,
        }
    }
}

impl SamplerSettings {
    pub fn random(seed: u64) -> Self {
        Self { kind: SamplerKind::Random, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if self.n_candidates == 0 || self.width == 0 {
            return Err(Error::config("n_candidates and width must be at least 1"));
        }
        if !(self.bandwidth_floor > 0.0) {
            return Err(Error::config("bandwidth_floor must be positive"));
        }
        Ok(())
    }
}

/// What is being optimised: free-form task name, data seed and the fixed
/// reservoir settings as text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDescriptor {
    pub task: String,
    pub data_seed: u64,
    pub template: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyHeader {
    pub version: u32,
    pub space: SearchSpace,
    pub objective: ObjectiveDescriptor,
    pub sampler: SamplerSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(StudyHeader),
    Trial(Trial),
}

pub const STUDY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub header: StudyHeader,
    pub trials: Vec<Trial>,
}

impl Study {
    pub fn new(space: SearchSpace, objective: ObjectiveDescriptor, sampler: SamplerSettings) -> Result<Self> {
        space.validate()?;
        sampler.validate()?;
        Ok(Self {
            header: StudyHeader { version: STUDY_FORMAT_VERSION, space, objective, sampler },
            trials: Vec::new(),
        })
    }

    /// Lowest-loss ok trial; earlier trials win ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter_map(|t| t.ok_loss().map(|l| (t, l)))
            .fold(None, |best: Option<(&Trial, f64)>, (t, l)| match best {
                Some((_, b)) if b <= l => best,
                _ => Some((t, l)),
            })
            .map(|(t, _)| t)
    }

    /// Best ok loss seen up to and including each trial.
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(l) = t.ok_loss() {
                    best = Some(best.map_or(l, |b| b.min(l)));
                }
                best
            })
            .collect()
    }

    pub fn write_header<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Record::Header(self.header.clone()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        self.write_header(&mut w)?;
        for t in &self.trials {
            write_trial(&mut w, t)?;
        }
        Ok(())
    }

    /// Reads a study log. A truncated final line, as left by an interrupted
    /// writer, is ignored.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut header = None;
        let mut trials = Vec::new();
        let last = lines.len();
        for (idx, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(_) if idx + 1 == last && header.is_some() => break,
                Err(e) => return Err(Error::Parse { line: idx + 1, message: e.to_string() }),
            };
            match record {
                Record::Header(h) if header.is_none() => header = Some(h),
                Record::Header(_) => {
                    return Err(Error::Parse { line: idx + 1, message: "second header record".into() })
                }
                Record::Trial(t) => {
                    if t.id != trials.len() {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("trial id {} where {} was expected", t.id, trials.len()),
                        });
                    }
                    trials.push(t);
                }
            }
        }
        let header = header.ok_or(Error::Parse { line: 1, message: "missing header record".into() })?;
        Ok(Self { header, trials })
    }
}

pub fn write_trial<W: Write>(mut w: W, t: &Trial) -> Result<()> {
    serde_json::to_writer(&mut w, &Record::Trial(t.clone()))?;
    writeln!(w)?;
    Ok(())
}

/// Objective signature: parameters and a per-trial seed to a loss, or a
/// reason for failure.
pub trait Objective: Sync {
    fn evaluate(&self, params: &Params, seed: u64) -> std::result::Result<f64, String>;
}

impl<F> Objective for F
where
    F: Fn(&Params, u64) -> std::result::Result<f64, String> + Sync,
{
    fn evaluate(&self, params: &Params, seed: u64) -> std::result::Result<f64, String> {
        self(params, seed)
    }
}

fn suggestion_rng(settings: &SamplerSettings, id: usize) -> ChaCha8Rng {
    rng::chacha(rng::derive_seed(settings.seed, id as u64))
}

fn trial_seed(settings: &SamplerSettings, id: usize) -> u64 {
    rng::derive_seed(settings.seed ^ 0x0074_19a1, id as u64)
}

/// Parameters for trial `id` given the trials that precede its batch.
pub fn suggest(history: &[Trial], space: &SearchSpace, settings: &SamplerSettings, id: usize) -> (Params, Origin) {
    let mut r = suggestion_rng(settings, id);
    match settings.kind {
        SamplerKind::Random => (space.sample_uniform(&mut r), Origin::Random),
        SamplerKind::Tpe => tpe_suggest(history, space, settings, &mut r),
    }
}

/// One-dimensional Parzen density on `[0, 1]`: Gaussian kernels at the
/// observations mixed with one uniform prior component.
struct Parzen {
    centers: Vec<f64>,
    bandwidth: f64,
}

impl Parzen {
    fn new(centers: Vec<f64>, floor: f64) -> Self {
        let n = centers.len() as f64;
        let mean = centers.iter().sum::<f64>() / n.max(1.0);
        let var = centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n.max(1.0);
        let scott = 1.06 * var.sqrt() * n.max(1.0).powf(-0.2);
        Self { centers, bandwidth: scott.clamp(floor, 1.0) }
    }

    fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let kernels: f64 = self.centers.iter().map(|&c| norm * (-0.5 * ((x - c) / h).powi(2)).exp()).sum();
        (kernels + 1.0) / (self.centers.len() as f64 + 1.0)
    }

    fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        if self.centers.is_empty() {
            return 1.0 - r.gen::<f64>();
        }
        let c = self.centers[r.gen_range(0..self.centers.len())];
        for _ in 0..64 {
            let x = c + self.bandwidth * standard_normal(r);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        c.clamp(0.0, 1.0)
    }
}

fn standard_normal<R: Rng>(r: &mut R) -> f64 {
    let u1 = 1.0 - r.gen::<f64>();
    let u2 = r.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// TPE suggestion from the ok trials in `history`.
///
/// Ok trials are sorted by loss (ties by id) and the best
/// `ceil(gamma * n)` form the good set. Candidates are drawn from the good
/// densities and the one maximising `sum_d ln l_d(x) - ln g_d(x)` wins; the
/// first candidate wins ties.
pub fn tpe_suggest<R: Rng>(
    history: &[Trial],
    space: &SearchSpace,
    settings: &SamplerSettings,
    r: &mut R,
) -> (Params, Origin) {
    let mut ok: Vec<(f64, usize, [f64; 5])> =
        history.iter().filter_map(|t| t.ok_loss().map(|l| (l, t.id, space.to_unit(&t.params)))).collect();
    if ok.len() < settings.n_startup.max(1) {
        return (space.sample_uniform(r), Origin::Startup);
    }
    if ok.iter().all(|o| o.0 == ok[0].0) {
        return (space.sample_uniform(r), Origin::Degenerate);
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_good = ((settings.gamma * ok.len() as f64).ceil() as usize).clamp(1, ok.len());
    let (good, bad) = ok.split_at(n_good);
    let dens = |set: &[(f64, usize, [f64; 5])], d: usize| {
        Parzen::new(set.iter().map(|o| o.2[d]).collect(), settings.bandwidth_floor)
    };
    let good_d: Vec<Parzen> = (0..5).map(|d| dens(good, d)).collect();
    let bad_d: Vec<Parzen> = (0..5).map(|d| dens(bad, d)).collect();

    let mut best: Option<([f64; 5], f64)> = None;
    for _ in 0..settings.n_candidates {
        let x: [f64; 5] = std::array::from_fn(|d| good_d[d].sample(r));
        let score: f64 = (0..5).map(|d| good_d[d].density(x[d]).ln() - bad_d[d].density(x[d]).ln()).sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((x, score));
        }
    }
    (space.from_unit(best.expect("n_candidates >= 1").0), Origin::Tpe)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Total number of trials the study should hold when done.
    pub budget: usize,
    /// Store evaluation wall time; off keeps study files reproducible.
    pub record_wall_time: bool,
}

/// Extends `study` to `options.budget` trials, passing each finished trial
/// to `sink` in id order. Trials already present are kept, so an
/// interrupted study resumes where it stopped.
pub fn optimize<O: Objective + ?Sized>(
    study: &mut Study,
    objective: &O,
    options: RunOptions,
    mut sink: impl FnMut(&Trial) -> Result<()>,
) -> Result<()> {
    if options.budget == 0 {
        return Err(Error::config("study budget must be at least 1"));
    }
    let settings = study.header.sampler;
    let space = study.header.space;
    let width = settings.width;
    while study.trials.len() < options.budget {
        let first = study.trials.len();
        let batch_start = first - first % width;
        let batch_end = (batch_start + width).min(options.budget);
        let history = &study.trials[..batch_start];
        let evaluated: Vec<Trial> = (first..batch_end)
            .into_par_iter()
            .map(|id| {
                let (params, origin) = suggest(history, &space, &settings, id);
                let seed = trial_seed(&settings, id);
                let started = Instant::now();
                let result = objective.evaluate(&params, seed);
                let wall_time = options.record_wall_time.then(|| started.elapsed().as_secs_f64());
                let (loss, status) = match result {
                    Ok(l) if l.is_finite() && l >= 0.0 => (Some(l), TrialStatus::Ok),
                    Ok(l) => (None, TrialStatus::Failed(format!("invalid loss {l}"))),
                    Err(e) => (None, TrialStatus::Failed(e)),
                };
                Trial { id, params, loss, seed, status, origin, wall_time }
            })
            .collect();
        for t in evaluated {
            sink(&t)?;
            study.trials.push(t);
        }
    }
    Ok(())
}

/// Uniform random search with `n_trials` evaluations.
pub fn random_search<O: Objective + ?Sized>(
    objective: &O,
    space: SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<Study> {
    let mut study = Study::new(space, ObjectiveDescriptor::default(), SamplerSettings::random(seed))?;
    optimize(&mut study, objective, RunOptions { budget: n_trials, record_wall_time: false }, |_| Ok(()))?;
    Ok(study)
}

/// Reservoir objective: test NMSE of `experiment` with `params` applied to
/// `template`. Configuration and numerical errors become failed trials.
pub fn reservoir_objective<'a, T: Scalar>(
    experiment: &'a Experiment<T>,
    template: &'a ReservoirConfig<T>,
) -> impl Fn(&Params, u64) -> std::result::Result<f64, String> + Sync + 'a {
    move |p: &Params, _seed: u64| {
        let cfg = p.apply(template);
        experiment.evaluate(&cfg, T::lit(p.lambda)).map(|o| o.nmse.to_f64_lossy()).map_err(|e| e.to_string())
    }
}

/// Runs (or resumes) a reservoir study on a prepared experiment.
pub fn run_study<T: Scalar>(
    experiment: &Experiment<T>,
    template: &ReservoirConfig<T>,
    study: &mut Study,
    options: RunOptions,
    sink: impl FnMut(&Trial) -> Result<()>,
) -> Result<()> {
    template.validate()?;
    let objective = reservoir_objective(experiment, template);
    optimize(study, &objective, options, sink)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// First grid value that mapped to `d`.
    pub tau_over_t: f64,
    pub d: usize,
    pub nmse_mean: f64,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub nmse_std: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Grid values dropped because their `d` was already present.
    pub collapsed: usize,
}

/// Test NMSE across a grid of `tau/T` with every other parameter held, one
/// repeat per data seed. Grid values rounding to the same `d` are evaluated
/// once.
pub fn resonance_sweep<T: Scalar>(
    task: TaskKind,
    options: &TaskOptions,
    base: &ReservoirConfig<T>,
    lambda: T,
    grid: &[f64],
    data_seeds: &[u64],
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::config("delay sweep grid is empty"));
    }
    if data_seeds.is_empty() {
        return Err(Error::config("delay sweep needs at least one repeat"));
    }
    base.validate()?;
    let mut points: Vec<(f64, usize, ReservoirConfig<T>)> = Vec::new();
    let mut collapsed = 0;
    for &ratio in grid {
        let mut cfg = base.clone();
        cfg.set_delay_ratio(T::lit(ratio));
        let d = cfg.sample_delay()?;
        if points.iter().any(|p| p.1 == d) {
            collapsed += 1;
        } else {
            points.push((ratio, d, cfg));
        }
    }
    let experiments =
        data_seeds.par_iter().map(|&s| Experiment::prepare(task, options, s)).collect::<Result<Vec<_>>>()?;
    let rows = points
        .par_iter()
        .map(|(ratio, d, cfg)| {
            let losses = experiments
                .iter()
                .map(|e| e.evaluate(cfg, lambda).map(|o| o.nmse.to_f64_lossy()))
                .collect::<Result<Vec<f64>>>()?;
            let n = losses.len() as f64;
            let mean = losses.iter().sum::<f64>() / n;
            let std = if losses.len() > 1 {
                (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(SweepRow { tau_over_t: *ratio, d: *d, nmse_mean: mean, nmse_std: std, repeats: losses.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows, collapsed })
}

/// `start, start + step, ...` up to `stop` inclusive (with a small slack for
/// rounding), each value computed as `start + i * step`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::config("grid needs step > 0 and stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn quadratic(space: SearchSpace) -> impl Fn(&Params, u64) -> std::result::Result<f64, String> + Sync {
        move |p: &Params, _| Ok(space.to_unit(p).iter().map(|u| (u - 0.3).powi(2)).sum())
    }

    fn tpe_study(seed: u64) -> Study {
        let settings = SamplerSettings { seed, ..SamplerSettings::default() };
        Study::new(SearchSpace::default(), ObjectiveDescriptor::default(), settings).unwrap()
    }

    #[test]
    fn single_trial_random_search() {
        let obj = |_: &Params, _: u64| Ok(1.0);
        assert_eq!(random_search(&obj, SearchSpace::default(), 1, 0).unwrap().trials.len(), 1);
    }

    #[test]
    fn random_search_finds_rho_optimum() {
        let obj = |p: &Params, _: u64| Ok((p.rho - 0.3).powi(2));
        let study = random_search(&obj, SearchSpace::default(), 200, 5).unwrap();
        assert!((study.best().unwrap().params.rho - 0.3).abs() < 0.05);
        assert_eq!(random_search(&obj, SearchSpace::default(), 200, 5).unwrap(), study);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let obj = |p: &Params, _: u64| if p.rho < 0.5 { Err("boom".to_string()) } else { Ok(p.rho) };
        let study = random_search(&obj, SearchSpace::default(), 40, 1).unwrap();
        assert_eq!(study.trials.len(), 40);
        assert!(study.trials.iter().any(|t| matches!(t.status, TrialStatus::Failed(_)) && t.loss.is_none()));
        assert!(study.best().unwrap().params.rho >= 0.5);
    }

    #[test]
    fn tpe_startup_and_degenerate_fallbacks() {
        let space = SearchSpace::default();
        let settings = SamplerSettings::default();
        let mut r = rng::chacha(0);
        assert_eq!(tpe_suggest(&[], &space, &settings, &mut r).1, Origin::Startup);
        let flat: Vec<Trial> = (0..30)
            .map(|id| Trial {
                id,
                params: space.sample_uniform(&mut r),
                loss: Some(1.0),
                seed: 0,
                status: TrialStatus::Ok,
                origin: Origin::Startup,
                wall_time: None,
            })
            .collect();
        assert_eq!(tpe_suggest(&flat, &space, &settings, &mut r).1, Origin::Degenerate);
    }

    #[test]
    fn tpe_improves_on_random_startup() {
        let space = SearchSpace::default();
        let mut study = tpe_study(3);
        optimize(&mut study, &quadratic(space), RunOptions { budget: 120, record_wall_time: false }, |_| Ok(()))
            .unwrap();
        let losses: Vec<f64> = study.trials.iter().map(|t| t.loss.unwrap()).collect();
        assert!(study.trials[..20].iter().all(|t| t.origin == Origin::Startup));
        assert!(study.trials[20..].iter().all(|t| t.origin == Origin::Tpe));
        let first = losses[..20].iter().sum::<f64>() / 20.0;
        let last = losses[100..].iter().sum::<f64>() / 20.0;
        assert!(last < first, "last {last} first {first}");
    }

    #[test]
    fn suggestions_are_deterministic() {
        let space = SearchSpace::default();
        let mut a = tpe_study(9);
        optimize(&mut a, &quadratic(space), RunOptions { budget: 40, record_wall_time: false }, |_| Ok(())).unwrap();
        let (p1, _) = suggest(&a.trials, &space, &a.header.sampler, 40);
        let (p2, _) = suggest(&a.trials, &space, &a.header.sampler, 40);
        assert_eq!(p1, p2);
    }

    #[test]
    fn jsonl_roundtrip_and_resume() {
        let space = SearchSpace::default();
        let obj = quadratic(space);
        let mut full = tpe_study(4);
        let mut log = Vec::new();
        full.write_header(&mut log).unwrap();
        optimize(&mut full, &obj, RunOptions { budget: 30, record_wall_time: false }, |t| write_trial(&mut log, t))
            .unwrap();
        let read = Study::read_jsonl(&log[..]).unwrap();
        assert_eq!(read, full);

        let mut partial = tpe_study(4);
        optimize(&mut partial, &obj, RunOptions { budget: 23, record_wall_time: false }, |_| Ok(())).unwrap();
        let mut buf = Vec::new();
        partial.write_jsonl(&mut buf).unwrap();
        buf.extend_from_slice(b"{\"record\":\"trial\",\"id\":23,\"par");
        let mut resumed = Study::read_jsonl(&buf[..]).unwrap();
        assert_eq!(resumed.trials.len(), 23);
        optimize(&mut resumed, &obj, RunOptions { budget: 30, record_wall_time: false }, |_| Ok(())).unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn parallel_width_is_deterministic_and_resumable() {
        let space = SearchSpace::default();
        let obj = quadratic(space);
        let settings = SamplerSettings { seed: 2, width: 4, ..SamplerSettings::default() };
        let run = |budget| {
            let mut s = Study::new(space, ObjectiveDescriptor::default(), settings).unwrap();
            optimize(&mut s, &obj, RunOptions { budget, record_wall_time: false }, |_| Ok(())).unwrap();
            s
        };
        let full = run(34);
        assert_eq!(run(34), full);
        let mut part = run(26);
        optimize(&mut part, &obj, RunOptions { budget: 34, record_wall_time: false }, |_| Ok(())).unwrap();
        assert_eq!(part, full);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let mut study = tpe_study(1);
        let obj = quadratic(SearchSpace::default());
        optimize(&mut study, &obj, RunOptions { budget: 50, record_wall_time: false }, |_| Ok(())).unwrap();
        let curve: Vec<f64> = study.best_so_far().into_iter().map(Option::unwrap).collect();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*curve.last().unwrap(), study.best().unwrap().loss.unwrap());
    }

    #[test]
    fn grid_construction() {
        let g = linear_grid(0.1, 2.0, 0.02).unwrap();
        assert_eq!(g.len(), 96);
        assert!((g[95] - 2.0).abs() < 1e-12);
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn sweep_collapses_duplicate_delays() {
        let base = ReservoirConfig::<f64> { size: 10, washout_cycles: 20, ..ReservoirConfig::default() };
        let options = TaskOptions { narma_length: 400, ..TaskOptions::default() };
        let table = resonance_sweep(TaskKind::Narma10, &options, &base, 1e-3, &[0.5, 0.52, 0.6, 1.0], &[0, 1]).unwrap();
        assert_eq!(table.collapsed, 1);
        assert_eq!(table.rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![5, 6, 10]);
        assert!(table.rows.iter().all(|r| r.repeats == 2 && r.nmse_std >= 0.0));
        assert!(resonance_sweep(TaskKind::Narma10, &options, &base, 1e-3, &[], &[0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn suggestions_stay_in_box(seed in any::<u64>()) {
            let space = SearchSpace::default();
            let settings = SamplerSettings { seed, ..SamplerSettings::default() };
            let mut r = rng::chacha(seed);
            let history: Vec<Trial> = (0..40)
                .map(|id| {
                    let params = space.sample_uniform(&mut r);
                    Trial { id, params, loss: Some(r.gen()), seed: 0, status: TrialStatus::Ok, origin: Origin::Startup, wall_time: None }
                })
                .collect();
            for id in 0..1250 {
                let (p, _) = suggest(&history, &space, &settings, id);
                prop_assert!(space.contains(&p), "{:?}", p);
            }
        }
    }
}

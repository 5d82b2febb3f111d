//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted (`reservoir.gain`, `optimize.budget`, ...). Numbers may
//! carry a `pi` suffix (`0.68pi`, `pi`). A config file plus overrides
//! resolves to one [`ExperimentConfig`], whose canonical text form lists
//! every key with its resolved value; feeding that text back in reproduces
//! the same configuration exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use delayrc::dynamics::{OscillatorParams, SweepAxis};
use delayrc::experiment::{TaskKind, TaskOptions};
use delayrc::hyperopt::{Interval, Params, SamplerKind, SamplerSettings, SearchSpace};
use delayrc::reservoir::{ReservoirConfig, DEFAULT_SAMPLE_RATE};

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", idx + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// `KEY=VALUE` from the command line.
pub fn parse_assignment(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// A real number, optionally multiplied by pi: `2.5`, `0.68pi`, `pi`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(prefix) = s.strip_suffix("pi") {
        let prefix = prefix.trim().trim_end_matches('*').trim();
        let factor = if prefix.is_empty() { 1.0 } else { prefix.parse::<f64>().ok()? };
        return Some(factor * PI);
    }
    s.parse::<f64>().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSettings {
    pub params: OscillatorParams<f64>,
    pub x0: f64,
    pub steps: usize,
    pub axis: SweepAxis,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub max_period: usize,
    pub dt: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub mask_seed: u64,
    pub data_seed: u64,
    pub sampler_seed: u64,
    pub reservoir: ReservoirConfig<f64>,
    /// Requested `tau / T`; the reservoir delay is this value snapped to the
    /// node grid.
    pub tau_over_t: f64,
    pub lambda: f64,
    pub data: TaskOptions,
    pub sampler: SamplerSettings,
    pub budget: usize,
    pub record_wall_time: bool,
    pub space: SearchSpace,
    pub sweep: SweepSettings,
    pub dynamics: DynamicsSettings,
}

/// Reservoir template `(rho, G, phi0, tau/T, lambda, washout)` per task.
pub fn task_template(task: TaskKind) -> (f64, f64, f64, f64, f64, usize) {
    match task {
        TaskKind::SineSquare => (0.19, 0.39, 0.67 * PI, 0.27, 1.4e-3, 50),
        TaskKind::Narma10 => (0.33, 0.7, 0.68 * PI, 0.49, 5e-3, 100),
        TaskKind::Vowels => (0.47, 0.52, 0.44 * PI, 0.35, 3e-7, 50),
    }
}

fn axis_name(a: SweepAxis) -> &'static str {
    match a {
        SweepAxis::Gain => "gain",
        SweepAxis::MaxPower => "power",
        SweepAxis::Bias => "bias",
    }
}

fn interval_text(iv: &Interval) -> String {
    format!("{},{}", iv.lo, iv.hi)
}

impl ExperimentConfig {
    /// Built-in defaults for `task`.
    pub fn defaults(task: TaskKind) -> Self {
        let (rho, gain, phi0, tau_over_t, lambda, washout) = task_template(task);
        let mut reservoir = ReservoirConfig::<f64> {
            input_scaling: rho,
            gain,
            phase_bias: phi0,
            washout_cycles: washout,
            ..ReservoirConfig::default()
        };
        reservoir.set_delay_ratio(tau_over_t);
        let budget = match task {
            TaskKind::SineSquare | TaskKind::Vowels => 200,
            TaskKind::Narma10 => 300,
        };
        Self {
            task,
            mask_seed: 0,
            data_seed: 0,
            sampler_seed: 0,
            reservoir,
            tau_over_t,
            lambda,
            data: TaskOptions::default(),
            sampler: SamplerSettings::default(),
            budget,
            record_wall_time: false,
            space: SearchSpace::default(),
            sweep: SweepSettings { start: 0.1, stop: 2.0, step: 0.02, repeats: 5 },
            dynamics: DynamicsSettings {
                params: OscillatorParams::new(0.56, 0.983, 0.0),
                x0: 0.1,
                steps: 20,
                axis: SweepAxis::Gain,
                from: 0.1,
                to: 1.6,
                points: 300,
                max_period: 8,
                dt: 1e-7,
                duration: 2e-4,
            },
        }
    }

    /// Applies `entries` in order on top of the defaults of the task they
    /// select (`narma10` when none is given).
    pub fn resolve(entries: &[(String, String)]) -> Result<Self, CliError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in entries {
            map.insert(k.as_str(), v.as_str());
        }
        let task = match map.get("task") {
            Some(t) => t.parse::<TaskKind>().map_err(|e| CliError::Config(e.to_string()))?,
            None => TaskKind::Narma10,
        };
        let mut cfg = Self::defaults(task);
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        cfg.reservoir.set_delay_ratio(cfg.tau_over_t);
        cfg.reservoir.mask_seed = cfg.mask_seed;
        cfg.sampler.seed = cfg.sampler_seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Config(format!("{key}: expected {what}, got {value:?}"));
        let num = || parse_number(value).ok_or_else(|| bad("a number"));
        let int = || value.parse::<u64>().map_err(|_| bad("a non-negative integer"));
        let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let interval = |log: bool| -> Result<Interval, CliError> {
            let (a, b) = value.split_once(',').ok_or_else(|| bad("lo,hi"))?;
            let lo = parse_number(a).ok_or_else(|| bad("lo,hi"))?;
            let hi = parse_number(b).ok_or_else(|| bad("lo,hi"))?;
            Ok(Interval { lo, hi, log })
        };
        let r = &mut self.reservoir;
        let d = &mut self.dynamics;
        match key {
            "task" => {}
            "seed.mask" => self.mask_seed = int()?,
            "seed.data" => self.data_seed = int()?,
            "seed.sampler" => self.sampler_seed = int()?,
            "reservoir.k" => r.size = count()?,
            "reservoir.theta" => r.node_spacing = num()?,
            "reservoir.rho" => r.input_scaling = num()?,
            "reservoir.beta" => r.feedback_scaling = num()?,
            "reservoir.gain" => r.gain = num()?,
            "reservoir.depth" => r.modulation_depth = num()?,
            "reservoir.phi0" => r.phase_bias = num()?,
            "reservoir.tau_over_t" => self.tau_over_t = num()?,
            "reservoir.washout" => r.washout_cycles = count()?,
            "readout.lambda" => self.lambda = num()?,
            "data.split_fraction" => self.data.split_fraction = num()?,
            "data.narma_length" => self.data.narma_length = count()?,
            "data.sine_waveforms" => self.data.sine.waveforms = count()?,
            "data.sine_min_period" => self.data.sine.min_period = num()?,
            "data.sine_max_period" => self.data.sine.max_period = num()?,
            "data.sine_periods" => self.data.sine.periods = count()?,
            "data.vowels_dir" => self.data.vowels_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.vowels_per_class" => self.data.synthetic_per_class = count()?,
            "optimize.budget" => self.budget = count()?,
            "optimize.sampler" => {
                self.sampler.kind = match value {
                    "tpe" => SamplerKind::Tpe,
                    "random" => SamplerKind::Random,
                    _ => return Err(bad("tpe or random")),
                }
            }
            "optimize.width" => self.sampler.width = count()?,
            "optimize.gamma" => self.sampler.gamma = num()?,
            "optimize.startup" => self.sampler.n_startup = count()?,
            "optimize.candidates" => self.sampler.n_candidates = count()?,
            "optimize.bandwidth_floor" => self.sampler.bandwidth_floor = num()?,
            "optimize.record_wall_time" => {
                self.record_wall_time = value.parse::<bool>().map_err(|_| bad("true or false"))?
            }
            "space.rho" => self.space.rho = interval(false)?,
            "space.gain" => self.space.gain = interval(false)?,
            "space.phi0" => self.space.phi0 = interval(false)?,
            "space.tau_over_t" => self.space.tau_over_t = interval(false)?,
            "space.lambda" => self.space.lambda = interval(true)?,
            "sweep.start" => self.sweep.start = num()?,
            "sweep.stop" => self.sweep.stop = num()?,
            "sweep.step" => self.sweep.step = num()?,
            "sweep.repeats" => self.sweep.repeats = count()?,
            "dynamics.gain" => d.params.gain = num()?,
            "dynamics.depth" => d.params.modulation_depth = num()?,
            "dynamics.bias" => d.params.bias = num()?,
            "dynamics.delay" => d.params.delay = num()?,
            "dynamics.response_time" => d.params.response_time = num()?,
            "dynamics.x0" => d.x0 = num()?,
            "dynamics.steps" => d.steps = count()?,
            "dynamics.axis" => {
                d.axis = match value {
                    "gain" => SweepAxis::Gain,
                    "power" => SweepAxis::MaxPower,
                    "bias" => SweepAxis::Bias,
                    _ => return Err(bad("gain, power or bias")),
                }
            }
            "dynamics.from" => d.from = num()?,
            "dynamics.to" => d.to = num()?,
            "dynamics.points" => d.points = count()?,
            "dynamics.max_period" => d.max_period = count()?,
            "dynamics.dt" => d.dt = num()?,
            "dynamics.duration" => d.duration = num()?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let field = |key: &str, ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("{key}: {what}")))
            }
        };
        let r = &self.reservoir;
        field("reservoir.k", r.size >= 1, "must be at least 1")?;
        field("reservoir.theta", r.node_spacing > 0.0, "must be positive")?;
        field("reservoir.rho", r.input_scaling >= 0.0, "must be non-negative")?;
        field("reservoir.gain", r.gain > 0.0, "must be positive")?;
        field("reservoir.depth", r.modulation_depth > 0.0 && r.modulation_depth <= 1.0, "must lie in (0, 1]")?;
        field("reservoir.tau_over_t", self.tau_over_t > 0.0, "must be positive")?;
        field("readout.lambda", self.lambda >= 0.0, "must be non-negative")?;
        field(
            "data.split_fraction",
            self.data.split_fraction > 0.0 && self.data.split_fraction < 1.0,
            "must lie in (0, 1)",
        )?;
        field("optimize.budget", self.budget >= 1, "must be at least 1")?;
        field("optimize.width", self.sampler.width >= 1, "must be at least 1")?;
        field("sweep.repeats", self.sweep.repeats >= 1, "must be at least 1")?;
        field("sweep.step", self.sweep.step > 0.0, "must be positive")?;
        field("sweep.stop", self.sweep.stop >= self.sweep.start, "must not be below sweep.start")?;
        let d = &self.dynamics;
        field("dynamics.gain", d.params.gain > 0.0, "must be positive")?;
        field(
            "dynamics.depth",
            d.params.modulation_depth > 0.0 && d.params.modulation_depth <= 1.0,
            "must lie in (0, 1]",
        )?;
        field("dynamics.to", d.to > d.from, "must exceed dynamics.from")?;
        field("dynamics.points", d.points >= 2, "must be at least 2")?;
        self.sampler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.space.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Every key with its resolved value.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let r = &self.reservoir;
        let d = &self.dynamics;
        let s = &self.data.sine;
        let entries: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("seed.mask", self.mask_seed.to_string()),
            ("seed.data", self.data_seed.to_string()),
            ("seed.sampler", self.sampler_seed.to_string()),
            ("reservoir.k", r.size.to_string()),
            ("reservoir.theta", r.node_spacing.to_string()),
            ("reservoir.rho", r.input_scaling.to_string()),
            ("reservoir.beta", r.feedback_scaling.to_string()),
            ("reservoir.gain", r.gain.to_string()),
            ("reservoir.depth", r.modulation_depth.to_string()),
            ("reservoir.phi0", r.phase_bias.to_string()),
            ("reservoir.tau_over_t", self.tau_over_t.to_string()),
            ("reservoir.washout", r.washout_cycles.to_string()),
            ("readout.lambda", self.lambda.to_string()),
            ("data.split_fraction", self.data.split_fraction.to_string()),
            ("data.narma_length", self.data.narma_length.to_string()),
            ("data.sine_waveforms", s.waveforms.to_string()),
            ("data.sine_min_period", s.min_period.to_string()),
            ("data.sine_max_period", s.max_period.to_string()),
            ("data.sine_periods", s.periods.to_string()),
            ("data.vowels_dir", self.data.vowels_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("data.vowels_per_class", self.data.synthetic_per_class.to_string()),
            ("optimize.budget", self.budget.to_string()),
            (
                "optimize.sampler",
                match self.sampler.kind {
                    SamplerKind::Tpe => "tpe".into(),
                    SamplerKind::Random => "random".into(),
                },
            ),
            ("optimize.width", self.sampler.width.to_string()),
            ("optimize.gamma", self.sampler.gamma.to_string()),
            ("optimize.startup", self.sampler.n_startup.to_string()),
            ("optimize.candidates", self.sampler.n_candidates.to_string()),
            ("optimize.bandwidth_floor", self.sampler.bandwidth_floor.to_string()),
            ("optimize.record_wall_time", self.record_wall_time.to_string()),
            ("space.rho", interval_text(&self.space.rho)),
            ("space.gain", interval_text(&self.space.gain)),
            ("space.phi0", interval_text(&self.space.phi0)),
            ("space.tau_over_t", interval_text(&self.space.tau_over_t)),
            ("space.lambda", interval_text(&self.space.lambda)),
            ("sweep.start", self.sweep.start.to_string()),
            ("sweep.stop", self.sweep.stop.to_string()),
            ("sweep.step", self.sweep.step.to_string()),
            ("sweep.repeats", self.sweep.repeats.to_string()),
            ("dynamics.gain", d.params.gain.to_string()),
            ("dynamics.depth", d.params.modulation_depth.to_string()),
            ("dynamics.bias", d.params.bias.to_string()),
            ("dynamics.delay", d.params.delay.to_string()),
            ("dynamics.response_time", d.params.response_time.to_string()),
            ("dynamics.x0", d.x0.to_string()),
            ("dynamics.steps", d.steps.to_string()),
            ("dynamics.axis", axis_name(d.axis).into()),
            ("dynamics.from", d.from.to_string()),
            ("dynamics.to", d.to.to_string()),
            ("dynamics.points", d.points.to_string()),
            ("dynamics.max_period", d.max_period.to_string()),
            ("dynamics.dt", d.dt.to_string()),
            ("dynamics.duration", d.duration.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn canonical_text(&self) -> String {
        let mut out = format!("# delayrc {} effective configuration\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in self.canonical() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Comment line opening every CSV the tool writes.
    pub fn provenance_line(&self) -> String {
        format!(
            "# delayrc {} task={} seed.mask={} seed.data={} seed.sampler={}",
            env!("CARGO_PKG_VERSION"),
            self.task,
            self.mask_seed,
            self.data_seed,
            self.sampler_seed
        )
    }

    /// This configuration with the searched parameters replaced by `p`.
    pub fn with_params(&self, p: &Params) -> Self {
        let mut cfg = self.clone();
        cfg.reservoir.input_scaling = p.rho;
        cfg.reservoir.gain = p.gain;
        cfg.reservoir.phase_bias = p.phi0;
        cfg.tau_over_t = p.tau_over_t;
        cfg.reservoir.set_delay_ratio(p.tau_over_t);
        cfg.lambda = p.lambda;
        cfg
    }
}

/// Node spacing matching the default datalogger rate.
pub fn default_theta() -> f64 {
    1.0 / DEFAULT_SAMPLE_RATE
}

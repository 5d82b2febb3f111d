//! One benchmark evaluation: prepared train/test data, reservoir, ridge
//! readout and test metrics.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::readout::{self, ReadoutWeights};
use crate::reservoir::{make_input_mask, run_reservoir, ReservoirConfig, StateMatrix};
use crate::scalar::Scalar;
use crate::tasks::{self, LabeledSeries, SineSquareSpec, SplitUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    SineSquare,
    Narma10,
    Vowels,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::SineSquare, TaskKind::Narma10, TaskKind::Vowels];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SineSquare => "sine-square",
            TaskKind::Narma10 => "narma10",
            TaskKind::Vowels => "vowels",
        }
    }

    pub fn is_classification(self) -> bool {
        self == TaskKind::Vowels
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown task {s:?}; expected sine-square, narma10 or vowels")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOptions {
    pub sine: SineSquareSpec,
    pub narma_length: usize,
    /// Share of the data used for training.
    pub split_fraction: f64,
    /// Directory holding `ae.train` / `ae.test`; the synthetic stand-in is
    /// used when `None`.
    pub vowels_dir: Option<PathBuf>,
    pub synthetic_per_class: usize,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            sine: SineSquareSpec::default(),
            narma_length: 8000,
            split_fraction: 0.5,
            vowels_dir: None,
            synthetic_per_class: 60,
        }
    }
}

/// Where the data of an experiment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Generated,
    VowelFiles,
    SyntheticVowels,
}

#[derive(Debug, Clone)]
pub struct Experiment<T> {
    pub task: TaskKind,
    pub data_seed: u64,
    pub source: DataSource,
    pub train: LabeledSeries<T>,
    pub test: LabeledSeries<T>,
}

/// Test-set result of one evaluation. `test` holds the scored steps and
/// `readout` the matching `outputs x N` predictions.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub nmse: T,
    pub nrmse: T,
    pub train_nmse: T,
    pub wer: Option<f64>,
    pub weights: ReadoutWeights<T>,
    pub test: LabeledSeries<T>,
    pub readout: Matrix<T>,
}

impl<T: Scalar> Experiment<T> {
    /// Generates or loads the task data and splits it.
    ///
    /// NARMA10 is split into two contiguous blocks; the other tasks are split
    /// by whole segments (the real vowel files keep their own partition).
    pub fn prepare(task: TaskKind, options: &TaskOptions, data_seed: u64) -> Result<Self> {
        let frac = options.split_fraction;
        let (source, train, test) = match task {
            TaskKind::SineSquare => {
                let data = tasks::gen_sine_square(&options.sine, data_seed)?;
                let (a, b) = tasks::split_train_test(&data, frac, data_seed, SplitUnit::Segment)?;
                (DataSource::Generated, a, b)
            }
            TaskKind::Narma10 => {
                let data = tasks::gen_narma10(options.narma_length, data_seed)?;
                let (a, b) = tasks::split_train_test(&data, frac, data_seed, SplitUnit::StepBlock)?;
                (DataSource::Generated, a, b)
            }
            TaskKind::Vowels => match &options.vowels_dir {
                Some(dir) => {
                    let data = tasks::load_japanese_vowels::<T>(dir)?;
                    let classes = tasks::VOWEL_SPEAKERS;
                    (
                        DataSource::VowelFiles,
                        tasks::encode_multiplexed(&data.train, classes)?,
                        tasks::encode_multiplexed(&data.test, classes)?,
                    )
                }
                None => {
                    let utts = tasks::gen_synthetic_vowels::<T>(options.synthetic_per_class, data_seed)?;
                    let labels: Vec<usize> = utts.iter().map(|u| u.label).collect();
                    let (tr, te) = tasks::stratified_split(&labels, frac, data_seed)?;
                    let pick = |idx: &[usize]| idx.iter().map(|&i| utts[i].clone()).collect::<Vec<_>>();
                    let (tr, te) = tasks::standardize(&pick(&tr), &pick(&te))?;
                    let classes = tasks::VOWEL_SPEAKERS;
                    (
                        DataSource::SyntheticVowels,
                        tasks::encode_multiplexed(&tr, classes)?,
                        tasks::encode_multiplexed(&te, classes)?,
                    )
                }
            },
        };
        Ok(Self { task, data_seed, source, train, test })
    }

    /// Runs the reservoir over `series` and returns states aligned with the
    /// scored part of it. Segment tasks get a zero-input prefix covering the
    /// washout so every labelled step is kept; NARMA10 drops its first
    /// `washout_cycles` steps instead.
    fn harvest(
        &self,
        series: &LabeledSeries<T>,
        cfg: &ReservoirConfig<T>,
    ) -> Result<(StateMatrix<T>, LabeledSeries<T>)> {
        let mask = make_input_mask(cfg.size, cfg.mask_seed)?;
        if series.segments.is_empty() {
            let states = run_reservoir(&series.input, cfg, &mask)?;
            Ok((states, series.slice(cfg.washout_cycles..series.len())))
        } else {
            let padded = series.with_zero_prefix(cfg.washout_cycles);
            let states = run_reservoir(&padded.input, cfg, &mask)?;
            Ok((states, series.clone()))
        }
    }

    pub fn evaluate(&self, cfg: &ReservoirConfig<T>, lambda: T) -> Result<RunOutcome<T>> {
        let (train_states, train) = self.harvest(&self.train, cfg)?;
        let weights = readout::train_ridge(&train_states, &train.target, lambda)?;
        let train_pred = readout::predict(&weights, &train_states)?;
        let train_nmse = readout::nmse_channels(&train.target, &train_pred)?;

        let (test_states, test) = self.harvest(&self.test, cfg)?;
        let pred = readout::predict(&weights, &test_states)?;
        let nmse = readout::nmse_channels(&test.target, &pred)?;
        if !nmse.is_finite() {
            return Err(Error::domain("test NMSE is not finite"));
        }
        let wer = if self.task.is_classification() {
            Some(readout::classify_sequences(&pred, &test.segments)?.error_rate)
        } else {
            None
        };
        Ok(RunOutcome { nmse, nrmse: nmse.sqrt(), train_nmse, wer, weights, test, readout: pred })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narma_template() -> ReservoirConfig<f64> {
        ReservoirConfig { washout_cycles: 100, ..ReservoirConfig::default() }
    }

    #[test]
    fn task_names_roundtrip() {
        for t in TaskKind::ALL {
            assert_eq!(t.name().parse::<TaskKind>().unwrap(), t);
        }
        assert!(matches!("mackey".parse::<TaskKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn narma_split_sizes() {
        let exp = Experiment::<f64>::prepare(TaskKind::Narma10, &TaskOptions::default(), 1).unwrap();
        assert_eq!((exp.train.len(), exp.test.len()), (4000, 4000));
        let out = exp.evaluate(&narma_template(), 5e-3).unwrap();
        assert_eq!(out.test.len(), 3900);
        assert_eq!(out.readout.cols(), 3900);
        assert!(out.wer.is_none());
        assert!(out.nmse < 1.0, "nmse {}", out.nmse);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let exp = Experiment::<f64>::prepare(TaskKind::SineSquare, &TaskOptions::default(), 3).unwrap();
        let cfg = ReservoirConfig::default();
        let a = exp.evaluate(&cfg, 1e-3).unwrap();
        let b = exp.evaluate(&cfg, 1e-3).unwrap();
        assert_eq!(a.nmse.to_bits(), b.nmse.to_bits());
        assert_eq!(a.test.len(), exp.test.len());
    }

    #[test]
    fn synthetic_vowels_report_wer() {
        let exp = Experiment::<f64>::prepare(TaskKind::Vowels, &TaskOptions::default(), 2).unwrap();
        assert_eq!(exp.source, DataSource::SyntheticVowels);
        let out = exp.evaluate(&ReservoirConfig::default(), 1e-4).unwrap();
        let wer = out.wer.unwrap();
        assert!((0.0..=1.0).contains(&wer));
    }
}

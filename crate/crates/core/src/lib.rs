//! Simulation and hyperparameter search for optoelectronic delay-based
//! reservoir computers.
//!
//! The crate models the sinusoidal optoelectronic oscillator (discrete Ikeda
//! map and its delay-differential parent), the FIR delay line that closes the
//! loop, a time-multiplexed reservoir built on top of both, a ridge-regression
//! readout and the benchmark tasks used to score it. The [`hyperopt`] module
//! searches the five reservoir hyperparameters with random search and a
//! tree-structured Parzen estimator.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the experiments use.

pub mod delay_line;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hyperopt;
pub mod linalg;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type OscillatorParams64 = dynamics::OscillatorParams<f64>;
pub type FixedPoint64 = dynamics::FixedPoint<f64>;
pub type FirConfig64 = delay_line::FirConfig<f64>;
pub type ReservoirConfig64 = reservoir::ReservoirConfig<f64>;
pub type InputMask64 = reservoir::InputMask<f64>;
pub type StateMatrix64 = reservoir::StateMatrix<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ReadoutWeights64 = readout::ReadoutWeights<f64>;
pub type LabeledSeries64 = tasks::LabeledSeries<f64>;
pub type Experiment64 = experiment::Experiment<f64>;

pub type OscillatorParams32 = dynamics::OscillatorParams<f32>;
pub type ReservoirConfig32 = reservoir::ReservoirConfig<f32>;
pub type StateMatrix32 = reservoir::StateMatrix<f32>;

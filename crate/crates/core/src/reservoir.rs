//! Time-multiplexed delay reservoir.
//!
//! A single nonlinear node is driven by the masked input and by its own
//! output delayed by `d` samples. With one sample per virtual neuron and `k`
//! neurons per clock cycle, sample `m = i + n k` is neuron `i` of cycle `n`:
//!
//! ```text
//! s(m) = G/2 * (1 + M sin(beta * s(m - d) + rho * J(m) + phi0)),   s(m < 0) = 0
//! ```
//!
//! where `J` is the sample-and-hold input multiplied by the periodic mask.
//! The dependency pattern of a whole cycle on earlier cycles is exposed by
//! [`transition_structure`] for analysis and cross-checking.

use std::f64::consts::PI;
use std::io::Write;

use crate::delay_line::DelayLine;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Datalogger sampling rate used for the node separation, in samples/s.
pub const DEFAULT_SAMPLE_RATE: f64 = 488.3e3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirConfig<T> {
    /// Number of virtual neurons `k`.
    pub size: usize,
    /// Node separation `theta` in seconds; the clock cycle is `size * theta`.
    pub node_spacing: T,
    /// Input scaling `rho`.
    pub input_scaling: T,
    /// Feedback scaling `beta`.
    pub feedback_scaling: T,
    /// Net gain `G`.
    pub gain: T,
    /// Modulation depth `M`.
    pub modulation_depth: T,
    /// Phase bias `phi0` in radians.
    pub phase_bias: T,
    /// Loop delay `tau` in seconds.
    pub delay: T,
    pub washout_cycles: usize,
    pub mask_seed: u64,
}

impl<T: Scalar> Default for ReservoirConfig<T> {
    fn default() -> Self {
        let theta = T::lit(1.0 / DEFAULT_SAMPLE_RATE);
        let mut cfg = Self {
            size: 50,
            node_spacing: theta,
            input_scaling: T::lit(0.33),
            feedback_scaling: T::PI(),
            gain: T::lit(0.7),
            modulation_depth: T::lit(0.983),
            phase_bias: T::lit(0.68 * PI),
            delay: theta,
            washout_cycles: 50,
            mask_seed: 0,
        };
        cfg.set_delay_ratio(T::lit(0.49));
        cfg
    }
}

impl<T: Scalar> ReservoirConfig<T> {
    /// Clock cycle `T = k * theta`.
    pub fn clock_cycle(&self) -> T {
        T::lit(self.size as f64) * self.node_spacing
    }

    /// Sets `tau` to `round(k * ratio)` node spacings, i.e. snaps `tau / T`
    /// onto the sample grid.
    pub fn set_delay_ratio(&mut self, ratio: T) {
        let d = (T::lit(self.size as f64) * ratio).round();
        self.delay = d * self.node_spacing;
    }

    pub fn delay_ratio(&self) -> T {
        self.delay / self.clock_cycle()
    }

    /// Feedback delay in samples, `round(tau / theta)`.
    pub fn sample_delay(&self) -> Result<usize> {
        let d = (self.delay / self.node_spacing).round();
        match d.to_usize() {
            Some(d) if d >= 1 => Ok(d),
            _ => Err(Error::config(format!(
                "delay {} s is below one node spacing of {} s",
                self.delay, self.node_spacing
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("reservoir size must be at least 1"));
        }
        if !(self.node_spacing > T::zero()) {
            return Err(Error::config("node_spacing must be positive"));
        }
        if !(self.delay > T::zero()) {
            return Err(Error::config("delay must be positive"));
        }
        if !(self.modulation_depth > T::zero() && self.modulation_depth <= T::one()) {
            return Err(Error::config("modulation_depth must lie in (0, 1]"));
        }
        if !(self.input_scaling >= T::zero()) {
            return Err(Error::config("input_scaling must be non-negative"));
        }
        if !(self.gain > T::zero()) {
            return Err(Error::config("gain must be positive"));
        }
        self.sample_delay().map(|_| ())
    }

    /// Bounds `[G/2 (1 - M), G/2 (1 + M)]` every state lies in.
    pub fn state_bounds(&self) -> (T, T) {
        let half = self.gain / T::lit(2.0);
        (half * (T::one() - self.modulation_depth), half * (T::one() + self.modulation_depth))
    }

    #[inline]
    fn node(&self, feedback: T, drive: T) -> T {
        let half = self.gain / T::lit(2.0);
        half * (T::one()
            + self.modulation_depth
                * (self.feedback_scaling * feedback + self.input_scaling * drive + self.phase_bias).sin())
    }
}

/// Input weights: one value per virtual neuron, uniform in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMask<T> {
    pub values: Vec<T>,
    pub seed: u64,
}

/// Mask value `i` is `2 u_i - 1` with `u_i` the `i`-th SplitMix64 counter
/// output mapped to `[0, 1)`.
pub fn make_input_mask<T: Scalar>(size: usize, seed: u64) -> Result<InputMask<T>> {
    if size == 0 {
        return Err(Error::domain("mask size must be at least 1"));
    }
    let values = (0..size as u64).map(|i| T::lit(2.0 * rng::counter_unit(seed, i) - 1.0)).collect();
    Ok(InputMask { values, seed })
}

/// Sample-and-hold with periodic masking: `J[i + n k] = mask[i] * u[n]`.
pub fn mask_input<T: Scalar>(input: &[T], mask: &InputMask<T>, size: usize) -> Result<Vec<T>> {
    if mask.values.len() != size {
        return Err(Error::domain(format!(
            "mask has {} values but the reservoir has {size} neurons",
            mask.values.len()
        )));
    }
    Ok(input.iter().flat_map(|&u| mask.values.iter().map(move |&m| m * u)).collect())
}

/// Harvested neuron states, `k` rows by `N` cycles, stored cycle by cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix<T> {
    neurons: usize,
    cycles: usize,
    data: Vec<T>,
}

impl<T: Scalar> StateMatrix<T> {
    /// Wraps cycle-major samples (`data[n * k + i]` is neuron `i` of cycle `n`).
    pub fn from_samples(neurons: usize, data: Vec<T>) -> Result<Self> {
        if neurons == 0 || data.len() % neurons != 0 {
            return Err(Error::domain("sample count is not a multiple of the neuron count"));
        }
        Ok(Self { neurons, cycles: data.len() / neurons, data })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn get(&self, neuron: usize, cycle: usize) -> T {
        self.data[cycle * self.neurons + neuron]
    }

    /// State vector of one cycle.
    pub fn column(&self, cycle: usize) -> &[T] {
        &self.data[cycle * self.neurons..(cycle + 1) * self.neurons]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.neurons)
    }

    pub fn samples(&self) -> &[T] {
        &self.data
    }

    /// Cycles `range` as a new matrix.
    pub fn slice_cycles(&self, range: std::ops::Range<usize>) -> Self {
        let data = self.data[range.start * self.neurons..range.end * self.neurons].to_vec();
        Self { neurons: self.neurons, cycles: range.len(), data }
    }

    /// Copy with a constant row of ones appended (readout intercept).
    pub fn with_bias_row(&self) -> Self {
        let mut data = Vec::with_capacity(self.cycles * (self.neurons + 1));
        for col in self.columns() {
            data.extend_from_slice(col);
            data.push(T::one());
        }
        Self { neurons: self.neurons + 1, cycles: self.cycles, data }
    }

    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let neurons = parts.first().map_or(0, |p| p.neurons);
        if parts.iter().any(|p| p.neurons != neurons) {
            return Err(Error::domain("cannot concatenate state matrices of different sizes"));
        }
        let data: Vec<T> = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self { neurons, cycles: data.len() / neurons.max(1), data })
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.neurons, self.cycles, |i, n| self.get(i, n))
    }

    /// CSV with one row per neuron and one column per cycle.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.cycles).map(|n| format!("c{n}")).collect();
        writeln!(w, "neuron,{}", header.join(","))?;
        for i in 0..self.neurons {
            write!(w, "{i}")?;
            for n in 0..self.cycles {
                write!(w, ",{}", self.get(i, n))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs the sample-level recursion and harvests one state per neuron and
/// cycle, dropping the first `washout_cycles` cycles.
pub fn run_reservoir<T: Scalar>(input: &[T], cfg: &ReservoirConfig<T>, mask: &InputMask<T>) -> Result<StateMatrix<T>> {
    run_reservoir_with_history(input, cfg, mask, &[])
}

/// [`run_reservoir`] starting from a non-zero history: `history` holds the
/// samples preceding `s(0)`, most recent last; missing samples are zero.
pub fn run_reservoir_with_history<T: Scalar>(
    input: &[T],
    cfg: &ReservoirConfig<T>,
    mask: &InputMask<T>,
    history: &[T],
) -> Result<StateMatrix<T>> {
    cfg.validate()?;
    let d = cfg.sample_delay()?;
    if input.len() <= cfg.washout_cycles {
        return Err(Error::config(format!(
            "{} input steps do not exceed the washout of {} cycles",
            input.len(),
            cfg.washout_cycles
        )));
    }
    let drive = mask_input(input, mask, cfg.size)?;
    let mut line = DelayLine::pure(d);
    for &h in history.iter().rev().take(d).rev() {
        line.push(h);
    }
    let skip = cfg.washout_cycles * cfg.size;
    let mut kept = Vec::with_capacity(drive.len() - skip);
    for (m, &j) in drive.iter().enumerate() {
        let s = cfg.node(line.feedback(), j);
        line.push(s);
        if m >= skip {
            kept.push(s);
        }
    }
    StateMatrix::from_samples(cfg.size, kept)
}

/// Per-cycle-lag dependency matrices of the delay reservoir.
///
/// `lags[l][(i, j)] == 1` when neuron `i` of cycle `n` is fed by neuron `j`
/// of cycle `n - l`. With `d' = d mod k` and `c = d / k`, neuron `i` reads
/// neuron `i - d'` of cycle `n - c` when `i >= d'`, otherwise neuron
/// `i - d' + k` of cycle `n - c - 1`. Lag 0 is strictly lower triangular and
/// is resolved in neuron order within the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStructure<T> {
    pub lags: Vec<Matrix<T>>,
}

impl<T: Scalar> TransitionStructure<T> {
    /// Dependencies within the current cycle.
    pub fn same_cycle(&self) -> &Matrix<T> {
        &self.lags[0]
    }

    /// Dependencies on the previous cycle.
    pub fn previous_cycle(&self) -> &Matrix<T> {
        &self.lags[1]
    }
}

pub fn transition_structure<T: Scalar>(size: usize, delay: usize) -> Result<TransitionStructure<T>> {
    if delay < 1 {
        return Err(Error::domain("sample delay must be at least 1"));
    }
    if size == 0 {
        return Err(Error::domain("reservoir size must be at least 1"));
    }
    let shift = delay % size;
    let base_lag = delay / size;
    let mut lags = vec![Matrix::zeros(size, size); base_lag + 2];
    for i in 0..size {
        if i >= shift {
            lags[base_lag][(i, i - shift)] = T::one();
        } else {
            lags[base_lag + 1][(i, i + size - shift)] = T::one();
        }
    }
    Ok(TransitionStructure { lags })
}

/// Cycle-level simulation driven by [`transition_structure`]:
/// `x(n) = G/2 (1 + M sin(beta sum_l W_l x(n - l) + rho J(n) + phi0))`.
pub fn run_transition_form<T: Scalar>(
    input: &[T],
    cfg: &ReservoirConfig<T>,
    mask: &InputMask<T>,
) -> Result<StateMatrix<T>> {
    cfg.validate()?;
    let k = cfg.size;
    let structure = transition_structure::<T>(k, cfg.sample_delay()?)?;
    if input.len() <= cfg.washout_cycles {
        return Err(Error::config("input does not exceed the washout"));
    }
    let mut states: Vec<Vec<T>> = Vec::with_capacity(input.len());
    for (n, &u) in input.iter().enumerate() {
        let mut x = vec![T::zero(); k];
        for i in 0..k {
            let mut fb = T::zero();
            for (lag, w) in structure.lags.iter().enumerate() {
                let src: Option<&[T]> = if lag == 0 {
                    Some(&x)
                } else if n >= lag {
                    Some(&states[n - lag])
                } else {
                    None
                };
                if let Some(src) = src {
                    for (j, &wij) in w.row(i).iter().enumerate() {
                        if wij != T::zero() {
                            fb = fb + wij * src[j];
                        }
                    }
                }
            }
            x[i] = cfg.node(fb, mask.values[i] * u);
        }
        states.push(x);
    }
    let kept: Vec<T> = states[cfg.washout_cycles..].concat();
    StateMatrix::from_samples(k, kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{iterate, OscillatorParams};
    use proptest::prelude::*;
    use rand::Rng;

    fn config(k: usize, d: usize) -> ReservoirConfig<f64> {
        ReservoirConfig { size: k, node_spacing: 1.0, delay: d as f64, washout_cycles: 0, ..ReservoirConfig::default() }
    }

    #[test]
    fn mask_is_deterministic_and_bounded() {
        let a = make_input_mask::<f64>(64, 9).unwrap();
        let b = make_input_mask::<f64>(64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(make_input_mask::<f64>(1, 3).unwrap().values.len(), 1);
        assert_ne!(a, make_input_mask::<f64>(64, 10).unwrap());
    }

    #[test]
    fn mask_moments() {
        let m = make_input_mask::<f64>(100_000, 1).unwrap();
        let n = m.values.len() as f64;
        let mean = m.values.iter().sum::<f64>() / n;
        let var = m.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0 / 3.0).abs() < 0.05 / 3.0);
    }

    #[test]
    fn masking_layout() {
        let mask = InputMask { values: vec![0.5, -0.25, 1.0], seed: 0 };
        assert_eq!(mask_input(&[2.0, -1.0], &mask, 3).unwrap(), vec![1.0, -0.5, 2.0, -0.5, 0.25, -1.0]);
        assert_eq!(mask_input(&[1.0], &mask, 3).unwrap(), mask.values);
        assert!(mask_input(&[0.0; 4], &mask, 3).unwrap().iter().all(|&v| v == 0.0));
        assert!(mask_input(&[1.0], &mask, 4).is_err());
    }

    #[test]
    fn zero_input_without_feedback_is_constant() {
        let cfg = ReservoirConfig { feedback_scaling: 0.0, ..config(5, 3) };
        let mask = make_input_mask(5, 0).unwrap();
        let x = run_reservoir(&[0.0; 10], &cfg, &mask).unwrap();
        let expect = cfg.gain / 2.0 * (1.0 + cfg.modulation_depth * cfg.phase_bias.sin());
        assert!(x.samples().iter().all(|&s| s == expect));
    }

    #[test]
    fn synchronous_delay_reduces_to_ikeda_map() {
        let k = 6;
        let cfg = ReservoirConfig {
            input_scaling: 0.0,
            phase_bias: 0.0,
            feedback_scaling: std::f64::consts::PI,
            gain: 0.93,
            ..config(k, k)
        };
        let mask = make_input_mask(k, 4).unwrap();
        let x = run_reservoir(&[0.3; 40], &cfg, &mask).unwrap();
        let p = OscillatorParams::new(cfg.gain, cfg.modulation_depth, 0.0);
        // s(m < 0) = 0, so every neuron starts from the map applied to zero.
        let orbit = iterate(0.0, 40, &p);
        for i in 0..k {
            for n in 0..40 {
                assert_eq!(x.get(i, n), orbit[n + 1]);
            }
        }
    }

    #[test]
    fn reference_narma_settings_accepted() {
        let cfg = ReservoirConfig::<f64> { washout_cycles: 10, ..ReservoirConfig::default() };
        assert_eq!(cfg.sample_delay().unwrap(), 25);
        let mask = make_input_mask(cfg.size, 0).unwrap();
        let mut rng = crate::rng::chacha(1);
        let u: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..0.5)).collect();
        let x = run_reservoir(&u, &cfg, &mask).unwrap();
        assert_eq!(x.cycles(), 190);
        assert!(x.samples().iter().all(|&s| (0.0..=0.7).contains(&s)));
    }

    #[test]
    fn configuration_errors() {
        let mask = make_input_mask(4, 0).unwrap();
        let short = ReservoirConfig { delay: 0.4, ..config(4, 1) };
        assert!(matches!(run_reservoir(&[0.0; 8], &short, &mask), Err(Error::Config(_))));
        let washout = ReservoirConfig { washout_cycles: 8, ..config(4, 2) };
        assert!(matches!(run_reservoir(&[0.0; 8], &washout, &mask), Err(Error::Config(_))));
    }

    #[test]
    fn transition_structure_examples() {
        let sync = transition_structure::<f64>(4, 4).unwrap();
        assert_eq!(*sync.same_cycle(), Matrix::zeros(4, 4));
        assert_eq!(*sync.previous_cycle(), Matrix::identity(4));

        let one = transition_structure::<f64>(4, 1).unwrap();
        assert_eq!(one.previous_cycle()[(0, 3)], 1.0);
        for i in 1..4 {
            assert_eq!(one.same_cycle()[(i, i - 1)], 1.0);
        }
        assert_eq!(one.same_cycle().frobenius_norm(), 3f64.sqrt());

        // tau = T + theta: neurons 1..3 read their left neighbour one cycle back,
        // neuron 0 wraps around to neuron 3 two cycles back.
        let ring = transition_structure::<f64>(4, 5).unwrap();
        assert_eq!(*ring.same_cycle(), Matrix::zeros(4, 4));
        for i in 1..4 {
            assert_eq!(ring.previous_cycle()[(i, i - 1)], 1.0);
        }
        assert_eq!(ring.lags[2][(0, 3)], 1.0);
        assert!(transition_structure::<f64>(4, 0).is_err());
    }

    #[test]
    fn f32_states_in_bounds() {
        let cfg = ReservoirConfig::<f32> { washout_cycles: 0, ..ReservoirConfig::default() };
        let mask = make_input_mask(cfg.size, 2).unwrap();
        let u: Vec<f32> = (0..50).map(|i| (i as f32 * 0.37).sin()).collect();
        let x = run_reservoir(&u, &cfg, &mask).unwrap();
        let (lo, hi) = cfg.state_bounds();
        assert!(x.samples().iter().all(|&s| s >= lo - 1e-6 && s <= hi + 1e-6));
    }

    #[test]
    fn bias_row_and_slicing() {
        let x = StateMatrix::from_samples(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = x.with_bias_row();
        assert_eq!(b.neurons(), 3);
        assert_eq!(b.column(1), &[3.0, 4.0, 1.0]);
        assert_eq!(x.slice_cycles(1..3).column(0), &[3.0, 4.0]);
        let mut csv = Vec::new();
        x.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "neuron,c0,c1,c2\n0,1,3,5\n1,2,4,6\n");
    }

    fn history_gap(cfg: &ReservoirConfig<f64>, amplitude: f64, cycle: usize) -> f64 {
        let mask = make_input_mask(cfg.size, 0).unwrap();
        let mut r = crate::rng::chacha(3);
        let u: Vec<f64> = (0..cycle + 1).map(|_| r.gen_range(0.0..0.5)).collect();
        let base = run_reservoir(&u, cfg, &mask).unwrap();
        (0..5)
            .map(|seed| {
                let mut r = crate::rng::chacha(100 + seed);
                let history: Vec<f64> = (0..cfg.size).map(|_| r.gen_range(0.0..amplitude)).collect();
                let other = run_reservoir_with_history(&u, cfg, &mask, &history).unwrap();
                base.column(cycle).iter().zip(other.column(cycle)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn fading_memory_with_unit_feedback_scaling() {
        let cfg = ReservoirConfig::<f64> { washout_cycles: 0, feedback_scaling: 1.0, ..ReservoirConfig::default() };
        assert!(history_gap(&cfg, cfg.gain, 50) < 1e-6);
    }

    #[test]
    fn fading_memory_within_narma_washout() {
        // With beta = pi the loop is only weakly contracting: small history
        // perturbations die out within the 100-cycle washout.
        let cfg = ReservoirConfig::<f64> { washout_cycles: 0, ..ReservoirConfig::default() };
        assert!(history_gap(&cfg, 0.1, 100) < 1e-6);
    }

    proptest! {
        #[test]
        fn transition_form_matches_sample_recursion(
            k in 1usize..=8,
            d_frac in 0.0f64..1.0,
            n in 1usize..=20,
            seed in any::<u64>(),
            rho in 0.0f64..1.0,
            gain in 0.05f64..1.2,
            phase in 0.0f64..std::f64::consts::PI,
        ) {
            let d = 1 + (d_frac * (2 * k) as f64) as usize;
            let d = d.min(2 * k);
            let cfg = ReservoirConfig { input_scaling: rho, gain, phase_bias: phase, ..config(k, d) };
            let mask = make_input_mask(k, seed).unwrap();
            let mut r = crate::rng::chacha(seed);
            let u: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let a = run_reservoir(&u, &cfg, &mask).unwrap();
            let b = run_transition_form(&u, &cfg, &mask).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn states_stay_within_bounds(seed in any::<u64>(), gain in 0.05f64..1.2, rho in 0.0f64..1.0, d in 1usize..30) {
            let cfg = ReservoirConfig { input_scaling: rho, gain, ..config(10, d) };
            let mask = make_input_mask(10, seed).unwrap();
            let mut r = crate::rng::chacha(seed);
            let u: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
            let x = run_reservoir(&u, &cfg, &mask).unwrap();
            let (lo, hi) = cfg.state_bounds();
            prop_assert!(x.samples().iter().all(|&s| s >= lo - 1e-15 && s <= hi + 1e-15 && s <= gain));
            prop_assert_eq!(run_reservoir(&u, &cfg, &mask).unwrap(), x);
        }
    }
}

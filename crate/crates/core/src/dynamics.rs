//! Optoelectronic oscillator dynamics.
//!
//! In the limit of a fast detector (response time much shorter than the loop
//! delay) the normalised modulator voltage `x = V / V_pi` obeys the discrete
//! Ikeda map
//!
//! ```text
//! x[n+1] = G/2 * (1 + M sin(pi (x[n] + x_b)))
//! ```
//!
//! This module iterates the map, locates fixed points of its iterates,
//! classifies the long-run regime and integrates the full delay-differential
//! model so the discrete limit can be checked.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimensionless map parameters plus the physical quantities they derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams<T> {
    /// Net open-loop gain `G`.
    pub gain: T,
    /// Modulation depth `M` of the Mach-Zehnder transmission, in `(0, 1]`.
    pub modulation_depth: T,
    /// Normalised bias `x_b = V_B / V_pi`; the intrinsic modulator phase is folded in.
    pub bias: T,
    /// Half-wave voltage in volts.
    pub half_wave_voltage: T,
    /// Maximum optical power in watts.
    pub max_power: T,
    /// Photodetector voltage gain in volts per watt.
    pub detector_gain: T,
    /// Detector/driver response time in seconds.
    pub response_time: T,
    /// Loop delay in seconds.
    pub delay: T,
}

impl<T: Scalar> OscillatorParams<T> {
    /// Parameters with the given map constants and a nominal physical loop:
    /// 1 V half-wave voltage, optical power chosen to give `gain`, zero
    /// response time and a 10 us delay.
    pub fn new(gain: T, modulation_depth: T, bias: T) -> Self {
        let detector_gain = T::lit(DETECTOR_GAIN_PER_VPI);
        Self {
            gain,
            modulation_depth,
            bias,
            half_wave_voltage: T::one(),
            max_power: gain / detector_gain,
            detector_gain,
            response_time: T::zero(),
            delay: T::lit(10e-6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::domain(what.to_string()))
            }
        };
        check(self.gain > T::zero(), "gain must be positive")?;
        check(
            self.modulation_depth > T::zero() && self.modulation_depth <= T::one(),
            "modulation_depth must lie in (0, 1]",
        )?;
        check(self.bias.is_finite(), "bias must be finite")?;
        check(self.half_wave_voltage > T::zero(), "half_wave_voltage must be positive")?;
        check(self.max_power >= T::zero(), "max_power must be non-negative")?;
        check(self.response_time >= T::zero(), "response_time must be non-negative")?;
        check(self.delay > T::zero(), "delay must be positive")
    }

    /// True when the response time is short enough (`T_R < tau / 20`) for the
    /// discrete map to describe the loop.
    pub fn discrete_limit_valid(&self) -> bool {
        self.response_time < self.delay / T::lit(20.0)
    }

    pub fn with_gain(mut self, gain: T) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_bias(mut self, bias: T) -> Self {
        self.bias = bias;
        self
    }
}

/// Ratio `G* / V_pi` (per watt) implied by pairing 0.3 mW with `G = 0.56`.
pub const DETECTOR_GAIN_PER_VPI: f64 = 0.56 / 0.3e-3;

/// One application of the Ikeda map.
#[inline]
pub fn step_map<T: Scalar>(x: T, p: &OscillatorParams<T>) -> T {
    let half = p.gain / (T::one() + T::one());
    half * (T::one() + p.modulation_depth * (T::PI() * (x + p.bias)).sin())
}

/// Derivative of [`step_map`] with respect to `x`.
#[inline]
pub fn map_derivative<T: Scalar>(x: T, p: &OscillatorParams<T>) -> T {
    let half = p.gain / (T::one() + T::one());
    half * p.modulation_depth * T::PI() * (T::PI() * (x + p.bias)).cos()
}

/// Net gain `G = G* P_max / V_pi`.
pub fn net_gain<T: Scalar>(max_power: T, detector_gain: T, half_wave_voltage: T) -> Result<T> {
    if !(max_power > T::zero() && detector_gain > T::zero() && half_wave_voltage > T::zero()) {
        return Err(Error::domain("net_gain requires positive power, detector gain and V_pi"));
    }
    Ok(detector_gain * max_power / half_wave_voltage)
}

/// `n` iterations from `x0`; the result has `n + 1` entries starting at `x0`.
pub fn iterate<T: Scalar>(x0: T, n: usize, p: &OscillatorParams<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..n {
        x = step_map(x, p);
        out.push(x);
    }
    out
}

/// The `n`-fold composition of the map evaluated at `x`.
pub fn iterate_n<T: Scalar>(x: T, n: usize, p: &OscillatorParams<T>) -> T {
    (0..n).fold(x, |x, _| step_map(x, p))
}

/// Cobweb path `(x0, x1), (x1, x1), (x1, x2), (x2, x2), ...` with `2 n` points.
pub fn cobweb<T: Scalar>(x0: T, n: usize, p: &OscillatorParams<T>) -> Vec<(T, T)> {
    let orbit = iterate(x0, n, p);
    let mut pts = Vec::with_capacity(2 * n);
    for w in orbit.windows(2) {
        pts.push((w[0], w[1]));
        pts.push((w[1], w[1]));
    }
    pts
}

pub fn write_cobweb_csv<T: Scalar, W: Write>(points: &[(T, T)], mut w: W) -> Result<()> {
    writeln!(w, "x,y")?;
    for (x, y) in points {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

/// A root of `f^N(x) = x`, labelled with its minimal period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<T> {
    pub x_star: T,
    /// Minimal period of the orbit through `x_star`.
    pub period: usize,
    pub stable: bool,
    /// Multiplier of exactly one: reported unstable but flagged.
    pub marginal: bool,
    /// `prod |f'(x_i)|` over one period of the orbit.
    pub multiplier: T,
}

pub const MAX_FIXED_POINT_PERIOD: usize = 16;
const ROOT_GRID_CELLS: usize = 4096;
const PERIOD_TOL: f64 = 1e-8;
const DEDUP_TOL: f64 = 1e-8;
const MARGINAL_TOL: f64 = 1e-12;

/// Multiplier of the period-`period` orbit through `x`.
pub fn orbit_multiplier<T: Scalar>(x: T, period: usize, p: &OscillatorParams<T>) -> T {
    let mut m = T::one();
    let mut xi = x;
    for _ in 0..period {
        m = m * map_derivative(xi, p).abs();
        xi = step_map(xi, p);
    }
    m
}

fn bisect<T: Scalar>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let mut flo = f(lo);
    let two = T::one() + T::one();
    for _ in 0..256 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm > T::zero()) == (flo > T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// All roots of `f^N(x) - x` on `[-0.1, G + 0.1]`.
///
/// Roots are bracketed by sign changes on a 4096-cell grid and refined by
/// bisection down to adjacent floating-point values. Each root carries the
/// smallest period dividing `period` for which it is fixed. Tangential roots
/// without a sign change are not detected.
pub fn fixed_points_of_iterate<T: Scalar>(p: &OscillatorParams<T>, period: usize) -> Result<Vec<FixedPoint<T>>> {
    if period == 0 || period > MAX_FIXED_POINT_PERIOD {
        return Err(Error::domain(format!("period must lie in 1..={MAX_FIXED_POINT_PERIOD}, got {period}")));
    }
    let f = |x: T| iterate_n(x, period, p) - x;
    let margin = T::lit(0.1);
    let lo = -margin;
    let hi = p.gain + margin;
    let cells = T::lit(ROOT_GRID_CELLS as f64);
    let grid = |i: usize| lo + (hi - lo) * T::lit(i as f64) / cells;

    let mut roots: Vec<T> = Vec::new();
    let mut x_prev = grid(0);
    let mut f_prev = f(x_prev);
    if f_prev == T::zero() {
        roots.push(x_prev);
    }
    for i in 1..=ROOT_GRID_CELLS {
        let x = grid(i);
        let fx = f(x);
        if fx == T::zero() {
            roots.push(x);
        } else if f_prev != T::zero() && (fx > T::zero()) != (f_prev > T::zero()) {
            roots.push(bisect(x_prev, x, f));
        }
        x_prev = x;
        f_prev = fx;
    }

    let dedup = T::lit(DEDUP_TOL);
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    roots.dedup_by(|a, b| (*a - *b).abs() < dedup);

    let period_tol = T::lit(PERIOD_TOL);
    Ok(roots
        .into_iter()
        .map(|x| {
            let minimal = (1..=period)
                .filter(|d| period % d == 0)
                .find(|&d| (iterate_n(x, d, p) - x).abs() < period_tol)
                .unwrap_or(period);
            let multiplier = orbit_multiplier(x, minimal, p);
            let marginal = (multiplier - T::one()).abs() <= T::lit(MARGINAL_TOL);
            FixedPoint { x_star: x, period: minimal, stable: multiplier < T::one() && !marginal, marginal, multiplier }
        })
        .collect())
}

/// Gain at which the period-1 multiplier crosses one (first period doubling),
/// located by bisection on `[lo, hi]` with all other parameters from `base`.
pub fn period_doubling_gain<T: Scalar>(base: &OscillatorParams<T>, lo: T, hi: T) -> Result<T> {
    let excess = |g: T| -> Result<T> {
        let p = base.with_gain(g);
        let fps = fixed_points_of_iterate(&p, 1)?;
        match fps.as_slice() {
            [fp] => Ok(fp.multiplier - T::one()),
            _ => Err(Error::domain(format!("expected a unique period-1 point at G = {g}, found {}", fps.len()))),
        }
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (excess(a)?, excess(b)?);
    if (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::domain("period-1 multiplier does not cross one on the interval"));
    }
    let two = T::one() + T::one();
    for _ in 0..200 {
        let mid = (a + b) / two;
        if mid <= a || mid >= b {
            break;
        }
        if (excess(mid)? > T::zero()) == (fa > T::zero()) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a + b) / two)
}

/// Parameter swept by [`bifurcation_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gain,
    /// Optical power in watts; gain follows via [`net_gain`].
    MaxPower,
    Bias,
}

impl SweepAxis {
    pub fn apply<T: Scalar>(self, base: &OscillatorParams<T>, value: T) -> Result<OscillatorParams<T>> {
        let mut p = *base;
        match self {
            SweepAxis::Gain => p.gain = value,
            SweepAxis::MaxPower => {
                p.max_power = value;
                p.gain = net_gain(value, p.detector_gain, p.half_wave_voltage)?;
            }
            SweepAxis::Bias => p.bias = value,
        }
        Ok(p)
    }
}

/// Transient and tail lengths used by the orbit-based analyses.
#[derive(Debug, Clone, Copy)]
pub struct OrbitSettings {
    pub initial_state: f64,
    pub transient: usize,
    pub tail: usize,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        Self { initial_state: 0.1, transient: 10_000, tail: 1024 }
    }
}

#[derive(Debug, Clone)]
pub struct BifurcationRow<T> {
    pub axis_value: T,
    /// Fixed points of minimal period `1..=max_period`, each listed once.
    pub fixed_points: Vec<FixedPoint<T>>,
    /// Last 128 states after the transient.
    pub orbit: Vec<T>,
}

pub const BIFURCATION_TAIL: usize = 128;

/// Fixed points and asymptotic orbit samples over a uniform parameter grid.
pub fn bifurcation_sweep<T: Scalar>(
    axis: SweepAxis,
    range: (T, T),
    steps: usize,
    base: &OscillatorParams<T>,
    max_period: usize,
) -> Result<Vec<BifurcationRow<T>>> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::domain("sweep range must have positive width"));
    }
    if steps < 2 {
        return Err(Error::domain("sweep needs at least two steps"));
    }
    if max_period == 0 || max_period > MAX_FIXED_POINT_PERIOD {
        return Err(Error::domain(format!("max_period must lie in 1..={MAX_FIXED_POINT_PERIOD}")));
    }
    let settings = OrbitSettings { tail: BIFURCATION_TAIL, ..OrbitSettings::default() };
    (0..steps)
        .into_par_iter()
        .map(|i| {
            let value = lo + (hi - lo) * T::lit(i as f64) / T::lit((steps - 1) as f64);
            let p = axis.apply(base, value)?;
            let mut fixed_points = Vec::new();
            for n in 1..=max_period {
                fixed_points.extend(fixed_points_of_iterate(&p, n)?.into_iter().filter(|fp| fp.period == n));
            }
            Ok(BifurcationRow { axis_value: value, fixed_points, orbit: orbit_tail(&p, settings) })
        })
        .collect()
}

/// Writes the sweep as one row per fixed point (`orbit_sample` empty) followed
/// by one row per orbit sample (fixed-point columns empty).
pub fn write_bifurcation_csv<T: Scalar, W: Write>(rows: &[BifurcationRow<T>], mut w: W) -> Result<()> {
    writeln!(w, "axis_value,branch_id,x_star,period,stable,orbit_sample")?;
    for row in rows {
        for (branch, fp) in row.fixed_points.iter().enumerate() {
            writeln!(w, "{},{},{},{},{},", row.axis_value, branch, fp.x_star, fp.period, fp.stable)?;
        }
        for x in &row.orbit {
            writeln!(w, "{},,,,,{}", row.axis_value, x)?;
        }
    }
    Ok(())
}

/// `settings.tail` states following `settings.transient` discarded iterations.
pub fn orbit_tail<T: Scalar>(p: &OscillatorParams<T>, settings: OrbitSettings) -> Vec<T> {
    let x = iterate_n(T::lit(settings.initial_state), settings.transient, p);
    let mut orbit = iterate(x, settings.tail.saturating_sub(1), p);
    orbit.truncate(settings.tail);
    orbit
}

/// Smallest `q <= max_period` with `|x[i+q] - x[i]| < tol` along the whole tail.
pub fn detect_period<T: Scalar>(tail: &[T], max_period: usize, tol: T) -> Option<usize> {
    (1..=max_period.min(tail.len().saturating_sub(1))).find(|&q| tail.windows(q + 1).all(|w| (w[q] - w[0]).abs() < tol))
}

/// Mean of `ln |f'(x)|` along an orbit.
pub fn lyapunov_exponent<T: Scalar>(orbit: &[T], p: &OscillatorParams<T>) -> T {
    let tiny = T::min_positive_value();
    let sum: T = orbit.iter().map(|&x| map_derivative(x, p).abs().max(tiny).ln()).sum();
    sum / T::lit(orbit.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Stable,
    Periodic(usize),
    Chaotic,
    /// No period up to the search limit, yet a non-positive Lyapunov exponent
    /// (long periods or slow convergence).
    Unresolved,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Stable => write!(f, "stable"),
            Regime::Periodic(q) => write!(f, "periodic({q})"),
            Regime::Chaotic => write!(f, "chaotic"),
            Regime::Unresolved => write!(f, "unresolved"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport<T> {
    pub regime: Regime,
    pub lyapunov: T,
}

pub const REGIME_MAX_PERIOD: usize = 64;
pub const REGIME_PERIOD_TOL: f64 = 1e-6;

/// Classifies the asymptotic behaviour from a 1024-sample tail after a
/// 10^4-step transient.
pub fn classify_regime<T: Scalar>(p: &OscillatorParams<T>) -> RegimeReport<T> {
    let tail = orbit_tail(p, OrbitSettings::default());
    let lyapunov = lyapunov_exponent(&tail, p);
    let regime = match detect_period(&tail, REGIME_MAX_PERIOD, T::lit(REGIME_PERIOD_TOL)) {
        Some(1) => Regime::Stable,
        Some(q) => Regime::Periodic(q),
        None if lyapunov > T::zero() => Regime::Chaotic,
        None => Regime::Unresolved,
    };
    RegimeReport { regime, lyapunov }
}

pub fn write_regime_csv<T: Scalar, W: Write>(
    reports: &[(OscillatorParams<T>, RegimeReport<T>)],
    mut w: W,
) -> Result<()> {
    writeln!(w, "G,M,x_b,regime,period,lyapunov")?;
    for (p, r) in reports {
        let (name, period) = match r.regime {
            Regime::Stable => ("stable", 1),
            Regime::Periodic(q) => ("periodic", q),
            Regime::Chaotic => ("chaotic", 0),
            Regime::Unresolved => ("unresolved", 0),
        };
        writeln!(w, "{},{},{},{},{},{}", p.gain, p.modulation_depth, p.bias, name, period, r.lyapunov)?;
    }
    Ok(())
}

/// Uniformly sampled solution of the delay-differential loop equation.
#[derive(Debug, Clone)]
pub struct DdeTrace<T> {
    pub dt: T,
    /// `values[j]` is `V(j * dt)` in volts; `values[0]` is the last history value.
    pub values: Vec<T>,
}

impl<T: Scalar> DdeTrace<T> {
    /// `V(t)` by linear interpolation; `None` outside the integrated span.
    pub fn value_at(&self, t: T) -> Option<T> {
        let pos = t / self.dt;
        if pos < T::zero() {
            return None;
        }
        let j = pos.floor().to_usize()?;
        let frac = pos - T::lit(j as f64);
        let a = *self.values.get(j)?;
        if frac == T::zero() {
            return Some(a);
        }
        let b = *self.values.get(j + 1)?;
        Some(a + (b - a) * frac)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.values.len()).map(move |j| self.dt * T::lit(j as f64))
    }
}

/// Integrates `V + T_R dV/dt = G* P[V(t - tau)]` with explicit Euler steps,
/// reading the delayed term from the history buffer by linear interpolation.
///
/// The loop is integrated in the normalised form
/// `x + T_R dx/dt = G/2 (1 + M sin(pi (x(t - tau) + x_b)))` with `x = V / V_pi`;
/// `history` supplies `V(t)` on `[-tau, 0]`. With `T_R = 0` the update is the
/// algebraic map applied to the delayed value.
pub fn integrate_dde<T: Scalar>(
    p: &OscillatorParams<T>,
    history: impl Fn(T) -> T,
    duration: T,
    dt: T,
) -> Result<DdeTrace<T>> {
    p.validate()?;
    if !(dt > T::zero()) || dt > p.delay / T::lit(100.0) {
        return Err(Error::config("dt must be positive and at most tau / 100"));
    }
    if p.response_time > T::zero() && dt > p.response_time / T::lit(10.0) {
        return Err(Error::config("dt must be at most T_R / 10"));
    }
    if !(duration > T::zero()) {
        return Err(Error::config("duration must be positive"));
    }
    let v_pi = p.half_wave_voltage;
    let lag = p.delay / dt;
    let mut whole = lag.floor();
    let mut frac = lag - whole;
    let snap = T::lit(1e-9);
    if frac < snap {
        frac = T::zero();
    } else if T::one() - frac < snap {
        whole = whole + T::one();
        frac = T::zero();
    }
    let lag_steps = whole.to_usize().ok_or_else(|| Error::config("delay too long"))?;
    let steps = (duration / dt).ceil().to_usize().ok_or_else(|| Error::config("duration too long"))?;

    // buf[i] holds x at step i - lag_steps - 1 so the history covers [-tau - dt, 0].
    let offset = lag_steps + 1;
    let mut buf: Vec<T> = (0..=offset)
        .map(|i| {
            let t = dt * T::lit(i as f64 - offset as f64);
            history(t.max(-p.delay)) / v_pi
        })
        .collect();
    buf.reserve(steps);

    for j in 0..steps {
        // delayed value at time (j + 1) dt - tau
        let idx = j + 1 + offset - lag_steps;
        let delayed = if frac == T::zero() { buf[idx] } else { buf[idx - 1] * frac + buf[idx] * (T::one() - frac) };
        let drive = step_map(delayed, p);
        let next = if p.response_time == T::zero() {
            drive
        } else {
            let x = buf[j + offset];
            x + dt / p.response_time * (drive - x)
        };
        buf.push(next);
    }
    let values = buf[offset..].iter().map(|&x| x * v_pi).collect();
    Ok(DdeTrace { dt, values })
}

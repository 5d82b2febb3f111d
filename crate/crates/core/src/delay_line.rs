//! Sample-clocked FIR delay line, the digital feedback path of the loop.
//!
//! `y[m] = sum_l h[l] * x[m - l - latency]` with zero history before the
//! first sample. A pure delay of `L - 1` samples has a single unit tap at
//! index `L - 1`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FirConfig<T> {
    pub taps: Vec<T>,
    /// Sampling rate in samples per second.
    pub rate: T,
    /// Extra pipeline delay in whole samples.
    pub latency_samples: usize,
}

impl<T: Scalar> FirConfig<T> {
    pub fn new(taps: Vec<T>, rate: T, latency_samples: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::domain("FIR filter needs at least one tap"));
        }
        if !(rate > T::zero()) {
            return Err(Error::domain("FIR sampling rate must be positive"));
        }
        Ok(Self { taps, rate, latency_samples })
    }

    /// Filter order `L`.
    pub fn order(&self) -> usize {
        self.taps.len()
    }

    pub fn is_pure_delay(&self) -> bool {
        let (last, rest) = self.taps.split_last().expect("non-empty taps");
        *last == T::one() && rest.iter().all(|&h| h == T::zero())
    }

    pub fn with_latency(mut self, latency_samples: usize) -> Self {
        self.latency_samples = latency_samples;
        self
    }
}

/// Pure delay of `order - 1` samples: all taps zero except a final 1.
pub fn make_pure_delay<T: Scalar>(order: usize, rate: T) -> Result<FirConfig<T>> {
    if order < 2 {
        return Err(Error::domain(format!("pure delay needs order >= 2, got {order}")));
    }
    let mut taps = vec![T::zero(); order];
    taps[order - 1] = T::one();
    FirConfig::new(taps, rate, 0)
}

/// Delay of a pure-delay filter in seconds, `(L - 1 + latency) / r`.
pub fn delay_time<T: Scalar>(cfg: &FirConfig<T>) -> Result<T> {
    if !cfg.is_pure_delay() {
        return Err(Error::domain("delay_time is only defined for pure-delay filters"));
    }
    let samples = (cfg.order() - 1 + cfg.latency_samples) as f64;
    Ok(T::lit(samples) / cfg.rate)
}

/// Filters a whole sequence; the output has the input's length.
pub fn fir_apply<T: Scalar>(input: &[T], cfg: &FirConfig<T>) -> Vec<T> {
    let mut line = DelayLine::new(cfg);
    input.iter().map(|&x| line.step(x)).collect()
}

/// Streaming FIR filter over a ring buffer.
#[derive(Debug, Clone)]
pub struct DelayLine<T> {
    /// Non-zero taps as `(total lag, coefficient)`, latency included.
    taps: Vec<(usize, T)>,
    buffer: Vec<T>,
    /// Index the next pushed sample will occupy.
    head: usize,
}

impl<T: Scalar> DelayLine<T> {
    pub fn new(cfg: &FirConfig<T>) -> Self {
        let taps: Vec<(usize, T)> = cfg
            .taps
            .iter()
            .enumerate()
            .filter(|(_, &h)| h != T::zero())
            .map(|(l, &h)| (l + cfg.latency_samples, h))
            .collect();
        let span = cfg.order() + cfg.latency_samples;
        Self { taps, buffer: vec![T::zero(); span], head: 0 }
    }

    /// A pure delay of `samples` samples, `samples >= 1`.
    pub fn pure(samples: usize) -> Self {
        assert!(samples >= 1, "pure delay line needs at least one sample of delay");
        Self { taps: vec![(samples, T::one())], buffer: vec![T::zero(); samples + 1], head: 0 }
    }

    fn at_lag(&self, lag: usize) -> T {
        let n = self.buffer.len();
        // lag 0 is the slot `head` is about to fill
        self.buffer[(self.head + n - lag % n) % n]
    }

    /// Output at the next index counting only samples already pushed, i.e.
    /// with the upcoming input taken as zero. For filters whose smallest lag
    /// is at least one this equals the true next output, which is what a
    /// feedback loop needs before it can compute the next input.
    pub fn feedback(&self) -> T {
        self.taps.iter().filter(|(lag, _)| *lag > 0).map(|&(lag, h)| h * self.at_lag(lag)).sum()
    }

    pub fn push(&mut self, x: T) {
        let n = self.buffer.len();
        self.buffer[self.head] = x;
        self.head = (self.head + 1) % n;
    }

    /// Pushes `x` and returns the output at its index. Terms are summed in
    /// increasing lag order.
    pub fn step(&mut self, x: T) -> T {
        let y = self.taps.iter().map(|&(lag, h)| h * if lag == 0 { x } else { self.at_lag(lag) }).sum();
        self.push(x);
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Direct double-loop convolution with zero history.
    fn naive(input: &[f64], taps: &[f64], latency: usize) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        for m in 0..input.len() {
            let mut acc = 0.0;
            for (l, &h) in taps.iter().enumerate() {
                let lag = l + latency;
                if m >= lag {
                    acc += h * input[m - lag];
                }
            }
            out[m] = acc;
        }
        out
    }

    #[test]
    fn pure_delay_shifts_impulse() {
        let cfg = make_pure_delay(3, 1.0).unwrap();
        assert_eq!(fir_apply(&[1.0, 0.0, 0.0, 0.0, 0.0], &cfg), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn single_unit_tap_is_identity() {
        let cfg = FirConfig::new(vec![1.0], 1.0, 0).unwrap();
        let x = [0.3, -1.0, 2.5, 7.0];
        assert_eq!(fir_apply(&x, &cfg), x.to_vec());
    }

    #[test]
    fn random_filter_matches_naive_convolution() {
        let mut rng = crate::rng::chacha(11);
        for latency in [0, 3] {
            let input: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let taps: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cfg = FirConfig::new(taps.clone(), 1.0, latency).unwrap();
            let got = fir_apply(&input, &cfg);
            let want = naive(&input, &taps, latency);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn pure_delay_times() {
        let cfg = make_pure_delay(232, 3.906e6).unwrap();
        let tau = delay_time(&cfg).unwrap();
        assert_relative_eq!(tau, 231.0 / 3.906e6, max_relative = 1e-12);
        assert!(tau > 0.5e-6 && tau < 60e-6);
        assert_relative_eq!(delay_time(&make_pure_delay(2, 976.6e3).unwrap()).unwrap(), 1.024e-6, max_relative = 1e-3);
        assert_relative_eq!(
            delay_time(&make_pure_delay(465, 976.6e3).unwrap()).unwrap(),
            475.1e-6,
            max_relative = 1e-3
        );
        assert!(make_pure_delay::<f64>(1, 1.0).is_err());
    }

    #[test]
    fn latency_adds_to_delay() {
        let cfg = make_pure_delay(3, 1.0).unwrap();
        assert_eq!(delay_time(&cfg).unwrap(), 2.0);
        assert_eq!(delay_time(&cfg.clone().with_latency(1)).unwrap(), 3.0);
        let general = FirConfig::new(vec![0.5, 0.5], 1.0, 0).unwrap();
        assert!(delay_time(&general).is_err());
    }

    #[test]
    fn feedback_reads_delayed_sample() {
        let mut line = DelayLine::<f64>::pure(3);
        let mut seen = Vec::new();
        for x in 1..=6 {
            seen.push(line.feedback());
            line.push(x as f64);
        }
        assert_eq!(seen, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn f32_filtering() {
        let cfg = make_pure_delay(2, 1.0f32).unwrap();
        assert_eq!(fir_apply(&[1.0f32, 2.0, 3.0], &cfg), vec![0.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            u in prop::collection::vec(-1.0f64..1.0, 32),
            v in prop::collection::vec(-1.0f64..1.0, 32),
            taps in prop::collection::vec(-1.0f64..1.0, 1..6),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let cfg = FirConfig::new(taps, 1.0, 1).unwrap();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = fir_apply(&mix, &cfg);
            let (fu, fv) = (fir_apply(&u, &cfg), fir_apply(&v, &cfg));
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * fu[i] + b * fv[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn filter_is_time_invariant(
            u in prop::collection::vec(-1.0f64..1.0, 24),
            taps in prop::collection::vec(-1.0f64..1.0, 1..6),
            shift in 0usize..8,
        ) {
            let cfg = FirConfig::new(taps, 1.0, 0).unwrap();
            let mut shifted = vec![0.0; shift];
            shifted.extend_from_slice(&u);
            let y = fir_apply(&u, &cfg);
            let ys = fir_apply(&shifted, &cfg);
            for i in 0..u.len() {
                prop_assert_eq!(ys[i + shift], y[i]);
            }
        }

        #[test]
        fn pure_delay_preserves_values(u in prop::collection::vec(-5.0f64..5.0, 1..40), order in 2usize..10) {
            let cfg = make_pure_delay(order, 1.0).unwrap();
            let y = fir_apply(&u, &cfg);
            let d = order - 1;
            for (i, &val) in y.iter().enumerate() {
                if i < d {
                    prop_assert_eq!(val, 0.0);
                } else {
                    prop_assert_eq!(val, u[i - d]);
                }
            }
        }
    }
}

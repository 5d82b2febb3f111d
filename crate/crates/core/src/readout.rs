//! Linear readout: ridge-regression training, prediction and error metrics.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::reservoir::StateMatrix;
use crate::scalar::Scalar;
use crate::tasks::Segment;

/// Trained readout `W^R` (`outputs x neurons`) and the ridge constant used.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights<T> {
    pub weights: Matrix<T>,
    pub lambda: T,
}

impl<T: Scalar> ReadoutWeights<T> {
    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn neurons(&self) -> usize {
        self.weights.cols()
    }

    /// CSV: a `# lambda=.. k=.. outputs=..` comment, a `w0..w{k-1}` header and
    /// one row per output channel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# lambda={} k={} outputs={}", self.lambda, self.neurons(), self.outputs())?;
        let header: Vec<String> = (0..self.neurons()).map(|i| format!("w{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for r in 0..self.outputs() {
            let row: Vec<String> = self.weights.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lambda = None;
        let mut k = None;
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let parse_err = |message: String| Error::Parse { line: lineno, message };
            if let Some(meta) = line.strip_prefix('#') {
                for field in meta.split_whitespace() {
                    match field.split_once('=') {
                        Some(("lambda", v)) => lambda = Some(v.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
                        Some(("k", v)) => k = Some(v.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                        _ => {}
                    }
                }
            } else if !saw_header {
                saw_header = true;
            } else if !line.trim().is_empty() {
                let row = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map(T::lit).map_err(|e| parse_err(e.to_string())))
                    .collect::<Result<Vec<T>>>()?;
                if Some(row.len()) != k {
                    return Err(parse_err(format!("expected {} weights, found {}", k.unwrap_or(0), row.len())));
                }
                rows.push(row);
            }
        }
        let lambda = lambda.ok_or(Error::Parse { line: 1, message: "missing lambda".into() })?;
        Ok(Self { weights: Matrix::from_rows(&rows)?, lambda: T::lit(lambda) })
    }
}

/// Solves `W^R (X X^T + lambda I) = Y X^T` by Cholesky factorisation.
///
/// `targets` is `outputs x N`, one column per harvested cycle.
pub fn train_ridge<T: Scalar>(states: &StateMatrix<T>, targets: &Matrix<T>, lambda: T) -> Result<ReadoutWeights<T>> {
    let (k, n) = (states.neurons(), states.cycles());
    if n == 0 {
        return Err(Error::domain("ridge training needs at least one cycle"));
    }
    if targets.cols() != n {
        return Err(Error::domain(format!("{n} state columns but {} target columns", targets.cols())));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::domain("ridge constant must be non-negative"));
    }
    let o = targets.rows();
    let mut gram = Matrix::zeros(k, k);
    let mut cross = Matrix::zeros(k, o);
    for (c, x) in states.columns().enumerate() {
        let y = targets.column(c);
        for (i, &xi) in x.iter().enumerate() {
            for (g, &xj) in gram.row_mut(i)[..=i].iter_mut().zip(x) {
                *g = *g + xi * xj;
            }
            for (acc, &yt) in cross.row_mut(i).iter_mut().zip(&y) {
                *acc = *acc + xi * yt;
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
        gram[(i, i)] = gram[(i, i)] + lambda;
    }
    let solution = Cholesky::new(&gram)?.solve(&cross)?;
    Ok(ReadoutWeights { weights: solution.transpose(), lambda })
}

/// `y_out(n) = W^R x(n)` for every cycle; returns `outputs x N`.
pub fn predict<T: Scalar>(w: &ReadoutWeights<T>, states: &StateMatrix<T>) -> Result<Matrix<T>> {
    if w.neurons() != states.neurons() {
        return Err(Error::domain(format!(
            "readout expects {} neurons, states have {}",
            w.neurons(),
            states.neurons()
        )));
    }
    let mut out = Matrix::zeros(w.outputs(), states.cycles());
    for (c, x) in states.columns().enumerate() {
        for r in 0..w.outputs() {
            out[(r, c)] = w.weights.row(r).iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }
    Ok(out)
}

/// `||y - y_hat||^2 / (N var(y))` with the population variance of `y`.
pub fn nmse<T: Scalar>(target: &[T], prediction: &[T]) -> Result<T> {
    if target.len() != prediction.len() {
        return Err(Error::domain("target and prediction lengths differ"));
    }
    if target.len() < 2 {
        return Err(Error::domain("NMSE needs at least two samples"));
    }
    let n = T::lit(target.len() as f64);
    let mean = target.iter().copied().sum::<T>() / n;
    let var = target.iter().map(|&y| (y - mean) * (y - mean)).sum::<T>() / n;
    if !(var > T::zero()) {
        return Err(Error::domain("target variance is zero"));
    }
    let sse = target.iter().zip(prediction).map(|(&y, &p)| (y - p) * (y - p)).sum::<T>();
    Ok(sse / (n * var))
}

pub fn nrmse<T: Scalar>(target: &[T], prediction: &[T]) -> Result<T> {
    nmse(target, prediction).map(|v| v.sqrt())
}

/// Mean of the per-channel NMSE over the rows of `outputs x N` matrices.
pub fn nmse_channels<T: Scalar>(target: &Matrix<T>, prediction: &Matrix<T>) -> Result<T> {
    if target.rows() != prediction.rows() || target.cols() != prediction.cols() {
        return Err(Error::domain("target and prediction shapes differ"));
    }
    let mut total = T::zero();
    for r in 0..target.rows() {
        total = total + nmse(target.row(r), prediction.row(r))?;
    }
    Ok(total / T::lit(target.rows().max(1) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: Vec<usize>,
    /// Fraction of misclassified segments.
    pub error_rate: f64,
}

/// Averages each output channel over every segment and predicts the argmax
/// channel; ties go to the lowest index.
pub fn classify_sequences<T: Scalar>(outputs: &Matrix<T>, segments: &[Segment]) -> Result<Classification> {
    let mut predicted = Vec::with_capacity(segments.len());
    let mut wrong = 0usize;
    for seg in segments {
        if seg.end <= seg.start {
            return Err(Error::domain(format!("empty segment at {}", seg.start)));
        }
        if seg.end > outputs.cols() {
            return Err(Error::domain("segment extends past the outputs"));
        }
        let mut best = (0usize, T::neg_infinity());
        for ch in 0..outputs.rows() {
            let row = &outputs.row(ch)[seg.start..seg.end];
            let avg = row.iter().copied().sum::<T>() / T::lit(row.len() as f64);
            if avg > best.1 {
                best = (ch, avg);
            }
        }
        if best.0 != seg.class {
            wrong += 1;
        }
        predicted.push(best.0);
    }
    let error_rate = if segments.is_empty() { 0.0 } else { wrong as f64 / segments.len() as f64 };
    Ok(Classification { predicted, error_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_states(k: usize, n: usize, seed: u64) -> StateMatrix<f64> {
        let mut r = crate::rng::chacha(seed);
        StateMatrix::from_samples(k, (0..k * n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut r = crate::rng::chacha(seed);
        Matrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
    }

    /// Explicit Gauss-Jordan inverse with partial pivoting.
    fn dense_inverse(a: &Matrix<f64>) -> Matrix<f64> {
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
            for j in 0..n {
                let (t1, t2) = (m[(c, j)], inv[(c, j)]);
                m[(c, j)] = m[(p, j)];
                m[(p, j)] = t1;
                inv[(c, j)] = inv[(p, j)];
                inv[(p, j)] = t2;
            }
            let d = m[(c, c)];
            for j in 0..n {
                m[(c, j)] /= d;
                inv[(c, j)] /= d;
            }
            for i in 0..n {
                if i != c {
                    let f = m[(i, c)];
                    for j in 0..n {
                        m[(i, j)] -= f * m[(c, j)];
                        inv[(i, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
        inv
    }

    fn normal_equation_oracle(x: &StateMatrix<f64>, y: &Matrix<f64>, lambda: f64) -> Matrix<f64> {
        let xm = x.to_matrix();
        let xt = xm.transpose();
        let mut a = xm.matmul(&xt).unwrap();
        for i in 0..a.rows() {
            a[(i, i)] += lambda;
        }
        y.matmul(&xt).unwrap().matmul(&dense_inverse(&a)).unwrap()
    }

    #[test]
    fn identity_problems() {
        let x = StateMatrix::from_samples(3, Matrix::<f64>::identity(3).as_slice().to_vec()).unwrap();
        let y = Matrix::identity(3);
        let w0 = train_ridge(&x, &y, 0.0).unwrap();
        assert_eq!(w0.weights, Matrix::identity(3));
        let w1 = train_ridge(&x, &y, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(w1.weights[(i, j)], if i == j { 0.5 } else { 0.0 });
            }
        }
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let x = random_states(5, 40, 1);
        let y = random_matrix(1, 40, 2);
        let got = train_ridge(&x, &y, 1e-3).unwrap();
        let want = normal_equation_oracle(&x, &y, 1e-3);
        let err = got.weights.as_slice().iter().zip(want.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / want.frobenius_norm() < 1e-8);
    }

    #[test]
    fn singular_without_regularisation() {
        let x = StateMatrix::from_samples(2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(train_ridge(&x, &y, 0.0), Err(Error::Singular { .. })));
        assert!(train_ridge(&x, &y, 1e-3).is_ok());
    }

    #[test]
    fn shape_errors() {
        let x = random_states(3, 10, 4);
        assert!(train_ridge(&x, &random_matrix(1, 9, 5), 0.1).is_err());
        let w = ReadoutWeights { weights: Matrix::zeros(1, 4), lambda: 0.0 };
        assert!(predict(&w, &x).is_err());
    }

    #[test]
    fn prediction_with_trivial_weights() {
        let x = random_states(3, 10, 6);
        let zero = ReadoutWeights { weights: Matrix::zeros(2, 3), lambda: 0.0 };
        assert!(predict(&zero, &x).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let id = ReadoutWeights { weights: Matrix::identity(3), lambda: 0.0 };
        assert_eq!(predict(&id, &x).unwrap(), x.to_matrix());
    }

    #[test]
    fn least_squares_beats_random_weights() {
        let x = random_states(6, 60, 7);
        let y = random_matrix(1, 60, 8);
        let mse = |w: &ReadoutWeights<f64>| {
            let p = predict(w, &x).unwrap();
            p.row(0).iter().zip(y.row(0)).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let best = mse(&train_ridge(&x, &y, 0.0).unwrap());
        let mut r = crate::rng::chacha(9);
        for _ in 0..100 {
            let w = ReadoutWeights { weights: Matrix::from_fn(1, 6, |_, _| r.gen_range(-2.0..2.0)), lambda: 0.0 };
            assert!(best <= mse(&w));
        }
    }

    #[test]
    fn residual_orthogonal_to_state_rows() {
        let x = random_states(5, 50, 10);
        let y = random_matrix(1, 50, 11);
        let p = predict(&train_ridge(&x, &y, 0.0).unwrap(), &x).unwrap();
        let resid: Vec<f64> = y.row(0).iter().zip(p.row(0)).map(|(a, b)| a - b).collect();
        let rnorm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..5 {
            let row: Vec<f64> = (0..50).map(|n| x.get(i, n)).collect();
            let xnorm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = row.iter().zip(&resid).map(|(a, b)| a * b).sum();
            assert!(dot.abs() / (xnorm * rnorm) < 1e-8);
        }
    }

    #[test]
    fn shrinkage_and_large_lambda_limit() {
        let x = random_states(4, 30, 12);
        let y = random_matrix(2, 30, 13);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let norm = train_ridge(&x, &y, lambda).unwrap().weights.frobenius_norm();
            assert!(norm <= prev * (1.0 + 1e-12));
            prev = norm;
        }
        let xm = x.to_matrix();
        let gram_norm = xm.matmul(&xm.transpose()).unwrap().frobenius_norm();
        let lambda = 1e6 * gram_norm;
        let w = train_ridge(&x, &y, lambda).unwrap();
        let approx = y.matmul(&xm.transpose()).unwrap();
        for (a, b) in w.weights.as_slice().iter().zip(approx.as_slice()) {
            assert!((a - b / lambda).abs() <= 0.01 * (b / lambda).abs());
        }
    }

    #[test]
    fn nmse_reference_values() {
        let y = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        assert_eq!(nmse(&y, &[0.5; 4]).unwrap(), 1.0);
        assert_eq!(nmse(&y, &[0.0; 4]).unwrap(), 2.0);
        assert_eq!(nrmse(&y, &[0.0; 4]).unwrap(), 2f64.sqrt());
        assert!(nmse(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(nmse(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn classification_rules() {
        let onehot = Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
        let segs = [Segment { start: 0, end: 2, class: 0 }, Segment { start: 2, end: 4, class: 1 }];
        let c = classify_sequences(&onehot, &segs).unwrap();
        assert_eq!(c.predicted, vec![0, 1]);
        assert_eq!(c.error_rate, 0.0);

        let flat = Matrix::from_fn(3, 4, |_, _| 0.5);
        assert_eq!(classify_sequences(&flat, &segs).unwrap().predicted, vec![0, 0]);
        assert!(classify_sequences(&flat, &[Segment { start: 1, end: 1, class: 0 }]).is_err());
    }

    #[test]
    fn random_outputs_give_chance_error() {
        let mut rates = Vec::new();
        for seed in 0..5 {
            let mut r = crate::rng::chacha(seed);
            let segs: Vec<Segment> =
                (0..640).map(|i| Segment { start: 4 * i, end: 4 * i + 4, class: r.gen_range(0..9) }).collect();
            let out = Matrix::from_fn(9, 2560, |_, _| r.gen::<f64>());
            rates.push(classify_sequences(&out, &segs).unwrap().error_rate);
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!((mean - 8.0 / 9.0).abs() < 0.05);
    }

    #[test]
    fn weights_csv_roundtrip() {
        let w = ReadoutWeights { weights: random_matrix(2, 5, 14), lambda: 1.4e-3 };
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# lambda=0.0014 k=5 outputs=2\nw0,w1,w2,w3,w4\n"));
        assert_eq!(ReadoutWeights::read_csv(&buf[..]).unwrap(), w);
    }

    proptest! {
        #[test]
        fn nmse_shift_and_scale_invariant(
            y in prop::collection::vec(-10.0f64..10.0, 8..32),
            noise in prop::collection::vec(-1.0f64..1.0, 32),
            shift in -5.0f64..5.0,
            scale in prop_oneof![-4.0f64..-0.25, 0.25f64..4.0],
        ) {
            let p: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
            let base = nmse(&y, &p);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let ys: Vec<f64> = y.iter().map(|v| (v + shift) * scale).collect();
            let ps: Vec<f64> = p.iter().map(|v| (v + shift) * scale).collect();
            let moved = nmse(&ys, &ps).unwrap();
            prop_assert!((moved - base).abs() <= 1e-9 * base.max(1e-12));
        }

        #[test]
        fn ridge_matches_oracle(seed in any::<u64>(), k in 1usize..8, extra in 0usize..30, lambda in 1e-6f64..1.0) {
            let n = k + 1 + extra;
            let x = random_states(k, n, seed);
            let y = random_matrix(2, n, seed ^ 0xABCD);
            let got = train_ridge(&x, &y, lambda).unwrap();
            let want = normal_equation_oracle(&x, &y, lambda);
            let err = got.weights.as_slice().iter().zip(want.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * want.frobenius_norm().max(1e-300));
        }
    }
}

//! Benchmark data: sine/square classification, NARMA10, Japanese vowels
//! (file ingestion and a synthetic stand-in) and train/test splitting.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

/// Half-open step range `[start, end)` carrying one class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskMeta {
    pub task: String,
    pub seed: u64,
    /// Generation parameters as `(name, value)` pairs.
    pub params: Vec<(String, String)>,
    /// Times the generator had to redraw its input.
    pub regenerations: usize,
}

/// Scalar input stream with an `outputs x N` target and optional class
/// segments partitioning `[0, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries<T> {
    pub input: Vec<T>,
    pub target: Matrix<T>,
    pub segments: Vec<Segment>,
    pub meta: TaskMeta,
}

impl<T: Scalar> LabeledSeries<T> {
    pub fn new(input: Vec<T>, target: Matrix<T>, segments: Vec<Segment>, meta: TaskMeta) -> Result<Self> {
        let s = Self { input, target, segments, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.target.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.cols() != self.input.len() {
            return Err(Error::domain(format!(
                "{} input steps but {} target steps",
                self.input.len(),
                self.target.cols()
            )));
        }
        if !self.segments.is_empty() {
            let mut next = 0;
            for s in &self.segments {
                if s.start != next || s.is_empty() {
                    return Err(Error::domain(format!("segments do not partition the series at step {next}")));
                }
                next = s.end;
            }
            if next != self.input.len() {
                return Err(Error::domain("segments do not cover the whole series"));
            }
        }
        Ok(())
    }

    /// Steps `range` as a new series; segments are dropped.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            input: self.input[range.clone()].to_vec(),
            target: self.target.columns(range),
            segments: Vec::new(),
            meta: self.meta.clone(),
        }
    }

    /// Concatenation of the listed segments, in the order given.
    pub fn select_segments(&self, indices: &[usize]) -> Self {
        let mut input = Vec::new();
        let mut parts = Vec::with_capacity(indices.len());
        let mut segments = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self.segments[i];
            segments.push(Segment { start: input.len(), end: input.len() + s.len(), class: s.class });
            input.extend_from_slice(&self.input[s.start..s.end]);
            parts.push(self.target.columns(s.start..s.end));
        }
        let refs: Vec<&Matrix<T>> = parts.iter().collect();
        let target = if refs.is_empty() {
            Matrix::zeros(self.outputs(), 0)
        } else {
            Matrix::hstack(&refs).expect("equal row counts")
        };
        Self { input, target, segments, meta: self.meta.clone() }
    }

    /// Prepends `steps` zero-input steps whose targets are zero, shifting the
    /// segments. Used to give a reservoir a transient it can discard.
    pub fn with_zero_prefix(&self, steps: usize) -> Self {
        let pad = Matrix::zeros(self.outputs(), steps);
        let mut input = vec![T::zero(); steps];
        input.extend_from_slice(&self.input);
        let target = Matrix::hstack(&[&pad, &self.target]).expect("equal row counts");
        let segments = self
            .segments
            .iter()
            .map(|s| Segment { start: s.start + steps, end: s.end + steps, class: s.class })
            .collect();
        Self { input, target, segments, meta: self.meta.clone() }
    }

    /// CSV with columns `step,u,y0..y{o-1},segment_id`; `segment_id` is empty
    /// for series without segments.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "step,u")?;
        for o in 0..self.outputs() {
            write!(w, ",y{o}")?;
        }
        writeln!(w, ",segment_id")?;
        let mut seg = 0;
        for n in 0..self.len() {
            write!(w, "{n},{}", self.input[n])?;
            for o in 0..self.outputs() {
                write!(w, ",{}", self.target[(o, n)])?;
            }
            while seg < self.segments.len() && self.segments[seg].end <= n {
                seg += 1;
            }
            if seg < self.segments.len() {
                writeln!(w, ",{seg}")?;
            } else {
                writeln!(w, ",")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineSquareSpec {
    pub waveforms: usize,
    /// Samples per period, drawn uniformly from `[min_period, max_period]`.
    pub min_period: f64,
    pub max_period: f64,
    pub periods: usize,
}

impl Default for SineSquareSpec {
    fn default() -> Self {
        Self { waveforms: 20, min_period: 12.0, max_period: 30.0, periods: 2 }
    }
}

pub const SQUARE_CLASS: usize = 0;
pub const SINE_CLASS: usize = 1;

/// Randomly ordered sine and square waveforms of unit amplitude, half of
/// each. The single target channel is 1 on sine samples and 0 on square ones;
/// segment classes follow the same convention.
pub fn gen_sine_square<T: Scalar>(spec: &SineSquareSpec, seed: u64) -> Result<LabeledSeries<T>> {
    if spec.waveforms < 2 || spec.waveforms % 2 != 0 {
        return Err(Error::domain(format!("waveform count must be even and >= 2, got {}", spec.waveforms)));
    }
    if !(spec.min_period > 0.0 && spec.min_period <= spec.max_period) || spec.periods == 0 {
        return Err(Error::domain("empty samples-per-period range"));
    }
    let mut r = rng::chacha(rng::derive_seed(seed, 0x5153));
    let mut classes: Vec<usize> = (0..spec.waveforms).map(|i| i % 2).collect();
    classes.shuffle(&mut r);

    let mut input = Vec::new();
    let mut target = Vec::new();
    let mut segments = Vec::with_capacity(spec.waveforms);
    for &class in &classes {
        let period = if spec.max_period > spec.min_period {
            r.gen_range(spec.min_period..=spec.max_period)
        } else {
            spec.min_period
        };
        let len = ((spec.periods as f64 * period).round() as usize).max(1);
        let start = input.len();
        for n in 0..len {
            let s = (2.0 * PI * n as f64 / period).sin();
            input.push(T::lit(if class == SINE_CLASS {
                s
            } else if s >= 0.0 {
                1.0
            } else {
                -1.0
            }));
            target.push(T::lit(class as f64));
        }
        segments.push(Segment { start, end: input.len(), class });
    }
    let n = target.len();
    let meta = TaskMeta {
        task: "sine-square".into(),
        seed,
        params: vec![
            ("waveforms".into(), spec.waveforms.to_string()),
            ("min_period".into(), spec.min_period.to_string()),
            ("max_period".into(), spec.max_period.to_string()),
            ("periods".into(), spec.periods.to_string()),
        ],
        regenerations: 0,
    };
    LabeledSeries::new(input, Matrix::from_row_major(1, n, target)?, segments, meta)
}

pub const NARMA_ORDER: usize = 10;

/// Tenth-order NARMA response to `u` with zero history.
///
/// `out[n]` is the system output one step after `u[n]` is applied:
/// `out[n] = 0.3 out[n-1] + 0.05 out[n-1] sum_{i=0}^{9} out[n-1-i]
///           + 1.5 u[n-9] u[n] + 0.1`.
pub fn narma10_response<T: Scalar>(u: &[T]) -> Vec<T> {
    let at = |v: &[T], i: isize| if i >= 0 { v[i as usize] } else { T::zero() };
    let mut y: Vec<T> = Vec::with_capacity(u.len());
    for n in 0..u.len() as isize {
        let prev = at(&y, n - 1);
        let window: T = (0..NARMA_ORDER as isize).map(|i| at(&y, n - 1 - i)).sum();
        let next =
            T::lit(0.3) * prev + T::lit(0.05) * prev * window + T::lit(1.5) * at(u, n - 9) * at(u, n) + T::lit(0.1);
        y.push(next);
    }
    y
}

/// NARMA10 driven by i.i.d. uniform input on `[0, 0.5]`. Any draw whose
/// response leaves `[-1, 1]` is discarded and redrawn from a derived seed.
pub fn gen_narma10<T: Scalar>(length: usize, seed: u64) -> Result<LabeledSeries<T>> {
    if length < NARMA_ORDER + 1 {
        return Err(Error::domain(format!("NARMA10 needs at least 11 steps, got {length}")));
    }
    let mut attempt = 0u64;
    loop {
        let mut r = rng::chacha(rng::derive_seed(seed, attempt));
        let u: Vec<T> = (0..length).map(|_| T::lit(0.5 * r.gen::<f64>())).collect();
        let y = narma10_response(&u);
        if y.iter().all(|v| v.is_finite() && v.abs() <= T::one()) {
            let meta = TaskMeta {
                task: "narma10".into(),
                seed,
                params: vec![("length".into(), length.to_string())],
                regenerations: attempt as usize,
            };
            return LabeledSeries::new(u, Matrix::from_row_major(1, length, y)?, Vec::new(), meta);
        }
        attempt += 1;
    }
}

pub const MFCC_CHANNELS: usize = 12;
pub const VOWEL_SPEAKERS: usize = 9;
pub const VOWEL_TRAIN_COUNTS: [usize; VOWEL_SPEAKERS] = [30; VOWEL_SPEAKERS];
pub const VOWEL_TEST_COUNTS: [usize; VOWEL_SPEAKERS] = [31, 35, 88, 44, 29, 24, 40, 50, 29];

/// One recording: `frames x 12` coefficients and its speaker label.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance<T> {
    pub frames: Matrix<T>,
    pub label: usize,
}

/// Parses blank-line separated blocks of 12-column frames. Block `b` gets
/// the label whose cumulative count range contains `b`.
pub fn parse_vowel_blocks<R: BufRead>(reader: R, counts: &[usize]) -> Result<Vec<Utterance<f64>>> {
    let total: usize = counts.iter().sum();
    let mut out = Vec::with_capacity(total);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut last_line = 0;
    let finish = |rows: &mut Vec<Vec<f64>>, line: usize, out: &mut Vec<Utterance<f64>>| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let label = label_for_block(out.len(), counts).ok_or_else(|| Error::Parse {
            line,
            message: format!("block {} has no speaker label; counts cover {total} blocks", out.len() + 1),
        })?;
        out.push(Utterance { frames: Matrix::from_rows(rows)?, label });
        rows.clear();
        Ok(())
    };
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        last_line = lineno;
        if line.trim().is_empty() {
            finish(&mut rows, lineno, &mut out)?;
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>().map_err(|e| Error::Parse { line: lineno, message: format!("bad value {v:?}: {e}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != MFCC_CHANNELS {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {MFCC_CHANNELS} columns, found {}", values.len()),
            });
        }
        rows.push(values);
    }
    finish(&mut rows, last_line, &mut out)?;
    if out.len() != total {
        return Err(Error::Parse { line: last_line, message: format!("expected {total} blocks, found {}", out.len()) });
    }
    Ok(out)
}

fn label_for_block(block: usize, counts: &[usize]) -> Option<usize> {
    let mut upper = 0;
    for (label, &c) in counts.iter().enumerate() {
        upper += c;
        if block < upper {
            return Some(label);
        }
    }
    None
}

/// Per-speaker block counts, optionally overridden by an `ae.counts` file
/// holding `train = a,b,..` and `test = a,b,..` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelCounts {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Default for VowelCounts {
    fn default() -> Self {
        Self { train: VOWEL_TRAIN_COUNTS.to_vec(), test: VOWEL_TEST_COUNTS.to_vec() }
    }
}

impl VowelCounts {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut counts = Self::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = counts".into()))?;
            let list = value
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|e| err(e.to_string())))
                .collect::<Result<Vec<usize>>>()?;
            match key.trim() {
                "train" => counts.train = list,
                "test" => counts.test = list,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VowelData<T> {
    pub train: Vec<Utterance<T>>,
    pub test: Vec<Utterance<T>>,
}

/// Reads `ae.train` and `ae.test` (and `ae.counts` when present) from `dir`
/// and standardizes both sets with training statistics.
pub fn load_japanese_vowels<T: Scalar>(dir: &Path) -> Result<VowelData<T>> {
    let counts_path = dir.join("ae.counts");
    let counts = if counts_path.exists() {
        VowelCounts::parse(BufReader::new(std::fs::File::open(counts_path)?))?
    } else {
        VowelCounts::default()
    };
    let open = |name: &str| -> Result<BufReader<std::fs::File>> {
        let path = dir.join(name);
        let file = std::fs::File::open(&path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Ok(BufReader::new(file))
    };
    let train = parse_vowel_blocks(open("ae.train")?, &counts.train)?;
    let test = parse_vowel_blocks(open("ae.test")?, &counts.test)?;
    let (train, test) = standardize(&train, &test)?;
    Ok(VowelData { train: convert(train), test: convert(test) })
}

fn convert<T: Scalar>(utts: Vec<Utterance<f64>>) -> Vec<Utterance<T>> {
    utts.into_iter()
        .map(|u| Utterance {
            frames: Matrix::from_fn(u.frames.rows(), u.frames.cols(), |r, c| T::lit(u.frames[(r, c)])),
            label: u.label,
        })
        .collect()
}

/// Channel-wise zero mean and unit variance, with statistics taken from
/// `train` only and applied to both sets.
pub fn standardize<T: Scalar>(
    train: &[Utterance<T>],
    test: &[Utterance<T>],
) -> Result<(Vec<Utterance<T>>, Vec<Utterance<T>>)> {
    let channels = train.first().map_or(0, |u| u.frames.cols());
    let frames: usize = train.iter().map(|u| u.frames.rows()).sum();
    if frames == 0 {
        return Err(Error::domain("no training frames to standardize with"));
    }
    let n = T::lit(frames as f64);
    let mut mean = vec![T::zero(); channels];
    for u in train {
        for r in 0..u.frames.rows() {
            for (m, &v) in mean.iter_mut().zip(u.frames.row(r)) {
                *m = *m + v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); channels];
    for u in train {
        for r in 0..u.frames.rows() {
            for c in 0..channels {
                let d = u.frames[(r, c)] - mean[c];
                var[c] = var[c] + d * d;
            }
        }
    }
    let std: Vec<T> = var
        .iter()
        .map(|&v| {
            let s = (v / n).sqrt();
            if s > T::zero() {
                s
            } else {
                T::one()
            }
        })
        .collect();
    let apply = |set: &[Utterance<T>]| -> Result<Vec<Utterance<T>>> {
        set.iter()
            .map(|u| {
                if u.frames.cols() != channels {
                    return Err(Error::domain("utterances have different channel counts"));
                }
                let frames = Matrix::from_fn(u.frames.rows(), channels, |r, c| (u.frames[(r, c)] - mean[c]) / std[c]);
                Ok(Utterance { frames, label: u.label })
            })
            .collect()
    };
    Ok((apply(train)?, apply(test)?))
}

/// Serializes each frame's channels into consecutive input steps and holds
/// a one-hot speaker target over the whole utterance.
pub fn encode_multiplexed<T: Scalar>(utts: &[Utterance<T>], class_count: usize) -> Result<LabeledSeries<T>> {
    if class_count < 2 {
        return Err(Error::domain("class_count must be at least 2"));
    }
    let mut input = Vec::new();
    let mut segments = Vec::with_capacity(utts.len());
    for u in utts {
        if u.label >= class_count {
            return Err(Error::domain(format!("label {} out of range for {class_count} classes", u.label)));
        }
        let start = input.len();
        input.extend_from_slice(u.frames.as_slice());
        if input.len() == start {
            return Err(Error::domain("utterance without frames"));
        }
        segments.push(Segment { start, end: input.len(), class: u.label });
    }
    let mut target = Matrix::zeros(class_count, input.len());
    for s in &segments {
        for n in s.start..s.end {
            target[(s.class, n)] = T::one();
        }
    }
    let meta = TaskMeta {
        task: "vowels".into(),
        params: vec![("classes".into(), class_count.to_string())],
        ..TaskMeta::default()
    };
    LabeledSeries::new(input, target, segments, meta)
}

/// Inverse of [`encode_multiplexed`] for `channels`-wide frames.
pub fn decode_multiplexed<T: Scalar>(series: &LabeledSeries<T>, channels: usize) -> Result<Vec<Utterance<T>>> {
    series
        .segments
        .iter()
        .map(|s| {
            if s.len() % channels != 0 {
                return Err(Error::domain("segment length is not a whole number of frames"));
            }
            let frames = Matrix::from_row_major(s.len() / channels, channels, series.input[s.start..s.end].to_vec())?;
            Ok(Utterance { frames, label: s.class })
        })
        .collect()
}

/// Nine speakers, each a noisy stable linear system
/// `x(t+1) = A_c x(t) + b_c + noise` over 12 channels. Lengths vary from 7 to
/// 29 frames. Utterances come out grouped by class.
pub fn gen_synthetic_vowels<T: Scalar>(n_per_class: usize, seed: u64) -> Result<Vec<Utterance<T>>> {
    if n_per_class == 0 {
        return Err(Error::domain("n_per_class must be at least 1"));
    }
    const NOISE: f64 = 0.5;
    let c = MFCC_CHANNELS;
    let mut out = Vec::with_capacity(VOWEL_SPEAKERS * n_per_class);
    for class in 0..VOWEL_SPEAKERS {
        let mut sys = rng::chacha(rng::derive_seed(seed, 0x5600 + class as u64));
        let mut a = Matrix::from_fn(c, c, |_, _| sys.gen_range(-1.0..1.0));
        let norm = (0..c).map(|r| a.row(r).iter().map(|v: &f64| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        for v in 0..c * c {
            let (r, col) = (v / c, v % c);
            a[(r, col)] *= 0.7 / norm;
        }
        let b: Vec<f64> = (0..c).map(|_| sys.gen_range(-1.0..1.0)).collect();
        let mut draw = rng::chacha(rng::derive_seed(seed, 0x5700 + class as u64));
        for _ in 0..n_per_class {
            let len = draw.gen_range(7..=29);
            let mut x: Vec<f64> = b.iter().map(|&bi| bi + NOISE * gaussian(&mut draw)).collect();
            let mut data = Vec::with_capacity(len * c);
            for _ in 0..len {
                data.extend(x.iter().map(|&v| T::lit(v)));
                x = (0..c)
                    .map(|r| {
                        let ax: f64 = a.row(r).iter().zip(&x).map(|(p, q)| p * q).sum();
                        ax + b[r] + NOISE * gaussian(&mut draw)
                    })
                    .collect();
            }
            out.push(Utterance { frames: Matrix::from_row_major(len, c, data)?, label: class });
        }
    }
    Ok(out)
}

/// Standard normal deviate by Box-Muller.
fn gaussian<R: Rng>(r: &mut R) -> f64 {
    let u1 = 1.0 - r.gen::<f64>();
    let u2 = r.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Seeded stratified split of item indices by class label. Within each
/// class `round(fraction * count)` items go to train; both index lists come
/// back in ascending order.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(fraction)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut r = rng::chacha(rng::derive_seed(seed, 0x5e9));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut r);
        let cut = (fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() || test.is_empty() {
        return Err(Error::domain(format!("fraction {fraction} leaves one side of the split empty")));
    }
    Ok((train, test))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    /// Two contiguous blocks; a seeded coin picks which one trains.
    StepBlock,
    /// Whole segments, stratified by class.
    Segment,
}

pub fn split_train_test<T: Scalar>(
    data: &LabeledSeries<T>,
    fraction: f64,
    seed: u64,
    unit: SplitUnit,
) -> Result<(LabeledSeries<T>, LabeledSeries<T>)> {
    check_fraction(fraction)?;
    match unit {
        SplitUnit::StepBlock => {
            let n = data.len();
            let cut = (fraction * n as f64).round() as usize;
            if cut == 0 || cut >= n {
                return Err(Error::domain(format!("fraction {fraction} leaves one side of the split empty")));
            }
            let train_last = rng::chacha(rng::derive_seed(seed, 0xb10c)).gen::<bool>();
            if train_last {
                Ok((data.slice(n - cut..n), data.slice(0..n - cut)))
            } else {
                Ok((data.slice(0..cut), data.slice(cut..n)))
            }
        }
        SplitUnit::Segment => {
            if data.segments.is_empty() {
                return Err(Error::domain("segment split of a series without segments"));
            }
            let labels: Vec<usize> = data.segments.iter().map(|s| s.class).collect();
            let (train, test) = stratified_split(&labels, fraction, seed)?;
            Ok((data.select_segments(&train), data.select_segments(&test)))
        }
    }
}

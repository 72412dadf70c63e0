//! Monte Carlo checks of the sketch accuracy guarantees.
//!
//! Every trial draws fresh sketches from a sub-seed of the master seed, so
//! results are reproducible and trials run in parallel.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocked::ceil_div;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::multiply::sketched_product;
use crate::seeding::{derive_seed, rng_for};
use crate::sketch::{CountSketchSpec, OverSketchSpec};

/// Builds one count-sketch `(n, b, seed)`. Swappable so tests can check that
/// the harness catches a broken sketch.
pub type SketchFactory = dyn Fn(usize, usize, u64) -> Result<CountSketchSpec> + Sync;

pub fn default_factory(n: usize, b: usize, seed: u64) -> Result<CountSketchSpec> {
    CountSketchSpec::random(n, b, seed)
}

/// A deliberately broken factory: correct buckets, every sign `+1`. The
/// estimator is then biased and the verification suites should say so.
pub fn plus_sign_factory(n: usize, b: usize, seed: u64) -> Result<CountSketchSpec> {
    let s = CountSketchSpec::random(n, b, seed)?;
    CountSketchSpec::from_maps(b, s.buckets().to_vec(), vec![1.0; n])
}

/// `‖exact − approx‖_F / ‖exact‖_F`.
pub fn frobenius_error(exact: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    if exact.shape() != approx.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            exact.shape(),
            approx.shape()
        )));
    }
    let norm = exact.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    Ok(approx.sub(exact)?.frobenius_norm() / norm)
}

/// Target accuracy `(ε, θ)` and the sketch dimension it calls for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    pub epsilon: f64,
    pub theta: f64,
    pub block: usize,
}

impl AccuracyParams {
    pub fn new(epsilon: f64, theta: f64, block: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0 && theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid("epsilon and theta must lie in (0, 1)"));
        }
        if block == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        Ok(AccuracyParams {
            epsilon,
            theta,
            block,
        })
    }

    /// `⌈2/(εθ)⌉` rounded up to a multiple of the block size.
    pub fn d(&self) -> usize {
        let raw = (2.0 / (self.epsilon * self.theta) - 1e-9).ceil() as usize;
        ceil_div(raw.max(1), self.block) * self.block
    }

    pub fn n_keep(&self) -> usize {
        self.d() / self.block
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub seed: u64,
    pub relative: f64,
    /// `‖AB − ASSᵀB‖_F²`.
    pub abs_sq: f64,
    /// `ε‖A‖_F²‖B‖_F²`.
    pub bound: f64,
}

impl ErrorSample {
    pub fn failed(&self) -> bool {
        self.abs_sq > self.bound
    }
}

/// Sample moments of the bilinear estimator `xᵀ S Sᵀ y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub trials: usize,
    /// `xᵀy`.
    pub target: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// Closed-form variance of the estimator.
    pub exact_variance: f64,
    /// `(2/d)‖x‖²‖y‖²`.
    pub bound: f64,
    pub bias_ok: bool,
    pub variance_ok: bool,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.bias_ok && self.variance_ok
    }

    pub fn bound_ratio(&self) -> f64 {
        if self.bound == 0.0 {
            0.0
        } else {
            self.variance / self.bound
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Variance of `xᵀ Sᶜ Sᶜᵀ y` for one `b`-bucket count-sketch:
/// `(1/b)[‖x‖²‖y‖² + (xᵀy)² − 2Σ xᵢ²yᵢ²]`.
pub fn count_sketch_variance(x: &[f64], y: &[f64], b: usize) -> f64 {
    let diag: f64 = x.iter().zip(y).map(|(a, c)| a * a * c * c).sum();
    (dot(x, x) * dot(y, y) + dot(x, y).powi(2) - 2.0 * diag) / b as f64
}

fn moments(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, var)
}

/// Stacked sketch of `n_keep + e` sub-sketches from `factory`; sub-sketch
/// `i` uses `derive_seed(seed, i)`.
pub fn build_oversketch(
    factory: &SketchFactory,
    n: usize,
    b: usize,
    n_keep: usize,
    e: usize,
    seed: u64,
) -> Result<OverSketchSpec> {
    let sketches = (0..n_keep + e)
        .map(|i| factory(n, b, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    OverSketchSpec::from_sketches(n_keep, sketches)
}

/// Bilinear estimator built from `n_keep` surviving sub-sketches out of
/// `n_keep + e`, with the dropped ones chosen uniformly per trial.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_moments(
    x: &[f64],
    y: &[f64],
    b: usize,
    n_keep: usize,
    e: usize,
    trials: usize,
    seed: u64,
    factory: &SketchFactory,
) -> Result<MomentReport> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid("x and y must be non-empty and of equal length"));
    }
    if trials < 2 {
        return Err(Error::invalid("at least two trials are needed"));
    }
    let n = x.len();
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t as u64);
            let spec = build_oversketch(factory, n, b, n_keep, e, trial_seed)?;
            let mut rng = rng_for(trial_seed, u64::MAX);
            let kept = sample(&mut rng, n_keep + e, n_keep);
            Ok(kept.iter().map(|k| spec.sketch(k).bilinear(x, y)).sum::<f64>() / n_keep as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, variance) = moments(&samples);
    let std_error = (variance / trials as f64).sqrt();
    let target = dot(x, y);
    let d = n_keep * b;
    let bound = 2.0 / d as f64 * dot(x, x) * dot(y, y);
    let scale = dot(x, x).sqrt() * dot(y, y).sqrt();
    Ok(MomentReport {
        trials,
        target,
        mean,
        variance,
        std_error,
        exact_variance: count_sketch_variance(x, y, b) / n_keep as f64,
        bound,
        bias_ok: (mean - target).abs() <= 4.0 * std_error + 1e-12 * scale,
        variance_ok: variance <= 1.05 * bound + 1e-12 * scale * scale,
    })
}

/// Two vectors with entries uniform on `(-1, 1)`.
pub fn random_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(seed, 0x7879);
    let mut draw = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    (draw(), draw())
}

/// Single count-sketch: unbiased with variance at most `(2/b)‖x‖²‖y‖²`.
/// Uses a fixed random `x, y` drawn from `seed`.
pub fn verify_lemma1(n: usize, b: usize, trials: usize, seed: u64) -> Result<MomentReport> {
    let (x, y) = random_pair(n, seed);
    verify_lemma1_with(&x, &y, b, trials, seed, &default_factory)
}

pub fn verify_lemma1_with(
    x: &[f64],
    y: &[f64],
    b: usize,
    trials: usize,
    seed: u64,
    factory: &SketchFactory,
) -> Result<MomentReport> {
    if trials < 10_000 {
        return Err(Error::invalid("at least 10^4 trials are required"));
    }
    bilinear_moments(x, y, b, 1, 0, trials, seed, factory)
}

/// `N` stacked sketches: variance at most `(2/d)‖x‖²‖y‖²` with `d = Nb`.
pub fn verify_lemma2(
    n: usize,
    b: usize,
    n_keep: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentReport> {
    let (x, y) = random_pair(n, seed);
    bilinear_moments(&x, &y, b, n_keep, 0, trials, seed, &default_factory)
}

/// Drop `e` random sub-sketches of `N + e` without rescaling; the estimator
/// stays unbiased.
pub fn verify_straggler_unbiased(
    n: usize,
    b: usize,
    n_keep: usize,
    e: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentReport> {
    let (x, y) = random_pair(n, seed);
    bilinear_moments(&x, &y, b, n_keep, e, trials, seed, &default_factory)
}

/// Per-block random kept sets: for each of `blocks` output blocks, `n_keep`
/// of `n_keep + e` sub-sketch indices, sorted.
pub fn random_kept<R: Rng + ?Sized>(
    rng: &mut R,
    blocks: usize,
    n_keep: usize,
    e: usize,
) -> Vec<Vec<usize>> {
    (0..blocks)
        .map(|_| {
            let mut k = sample(rng, n_keep + e, n_keep).into_vec();
            k.sort_unstable();
            k
        })
        .collect()
}

/// Sketch configuration shared by the matrix-level checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub block: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub e: usize,
    pub trials: usize,
    pub seed: u64,
}

/// One error sample per trial with stragglers dropped uniformly per block.
/// `bound` is filled with `epsilon · scale`, where `scale` is supplied.
pub fn error_samples(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &TrialConfig,
    epsilon: f64,
    scale: f64,
    factory: &SketchFactory,
) -> Result<Vec<ErrorSample>> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("at least one trial is needed"));
    }
    let exact = a.matmul(b)?;
    let exact_norm = exact.frobenius_norm();
    let blocks = ceil_div(a.rows(), cfg.block) * ceil_div(b.cols(), cfg.block);
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(cfg.seed, t as u64);
            let spec = build_oversketch(factory, a.cols(), cfg.block, cfg.n_keep, cfg.e, trial_seed)?;
            let mut rng = rng_for(trial_seed, u64::MAX);
            let kept = random_kept(&mut rng, blocks, cfg.n_keep, cfg.e);
            let approx = sketched_product(a, b, &spec, &kept)?;
            let abs_sq = approx.sub(&exact)?.frobenius_norm_sq();
            Ok(ErrorSample {
                seed: trial_seed,
                relative: if exact_norm > 0.0 {
                    abs_sq.sqrt() / exact_norm
                } else {
                    f64::NAN
                },
                abs_sq,
                bound: epsilon * scale,
            })
        })
        .collect()
}

/// Mean squared error against `(2/d)‖A‖_F²‖B‖_F²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixErrorReport {
    pub d: usize,
    pub trials: usize,
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub bound: f64,
    pub mean_relative_error: f64,
    pub passed: bool,
}

pub fn verify_lemma3(a: &DenseMatrix, b: &DenseMatrix, cfg: &TrialConfig) -> Result<MatrixErrorReport> {
    let samples = error_samples(a, b, cfg, 0.0, 0.0, &default_factory)?;
    let sq: Vec<f64> = samples.iter().map(|s| s.abs_sq).collect();
    let (mean, var) = moments(&sq);
    let d = cfg.n_keep * cfg.block;
    let bound = 2.0 / d as f64 * a.frobenius_norm_sq() * b.frobenius_norm_sq();
    Ok(MatrixErrorReport {
        d,
        trials: cfg.trials,
        mean_sq_error: mean,
        std_error: (var / cfg.trials as f64).sqrt(),
        bound,
        mean_relative_error: samples.iter().map(|s| s.relative).sum::<f64>() / cfg.trials as f64,
        passed: mean <= 1.05 * bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub epsilon: f64,
    pub theta: f64,
    pub d: usize,
    pub e: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// `θ + 3·√(θ(1−θ)/trials)`.
    pub threshold: f64,
    pub passed: bool,
    pub samples: Vec<ErrorSample>,
}

/// Fraction of trials with `‖AB − ASSᵀB‖_F² > ε‖A‖_F²‖B‖_F²`.
pub fn verify_theorem2(
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &TrialConfig,
    epsilon: f64,
    theta: f64,
) -> Result<Theorem2Report> {
    let d = cfg.n_keep * cfg.block;
    if (d as f64) < 2.0 / (epsilon * theta) - 1e-9 {
        log::warn!("d = {d} is below 2/(eps*theta); the guarantee does not apply");
    }
    let scale = a.frobenius_norm_sq() * b.frobenius_norm_sq();
    let samples = error_samples(a, b, cfg, epsilon, scale, &default_factory)?;
    Ok(failure_report(samples, epsilon, theta, d, cfg.e))
}

fn failure_report(
    samples: Vec<ErrorSample>,
    epsilon: f64,
    theta: f64,
    d: usize,
    e: usize,
) -> Theorem2Report {
    let trials = samples.len();
    let failures = samples.iter().filter(|s| s.failed()).count();
    let failure_fraction = failures as f64 / trials as f64;
    let threshold = theta + 3.0 * (theta * (1.0 - theta) / trials as f64).sqrt();
    Theorem2Report {
        epsilon,
        theta,
        d,
        e,
        trials,
        failures,
        failure_fraction,
        threshold,
        passed: failure_fraction <= threshold,
        samples,
    }
}

/// Two-proportion z statistic for `x1/n1` vs `x2/n2` with pooled variance.
pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> f64 {
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let p = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Numerical rank with relative tolerance `1e-10`.
pub fn numerical_rank(a: &DenseMatrix) -> usize {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankBoundReport {
    pub rank: usize,
    pub epsilon: f64,
    pub theta: f64,
    /// `r(d + eb)`.
    pub z: usize,
    pub trials: usize,
    /// Empirical `(1−θ)`-quantile of the squared error.
    pub quantile: f64,
    /// `ε‖A‖₂²‖B‖_F²`.
    pub bound: f64,
    pub passed: bool,
}

/// With the sketch grown to `z = r(d + eb)`, the `(1−θ)`-quantile of the
/// squared error should sit below `ε‖A‖₂²‖B‖_F²` (10% slack).
pub fn verify_rank_bound(
    a: &DenseMatrix,
    b: &DenseMatrix,
    rank: usize,
    accuracy: &AccuracyParams,
    e: usize,
    trials: usize,
    seed: u64,
) -> Result<RankBoundReport> {
    if rank == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    let cfg = TrialConfig {
        block: accuracy.block,
        n_keep: rank * accuracy.n_keep(),
        e: rank * e,
        trials,
        seed,
    };
    let samples = error_samples(a, b, &cfg, 0.0, 0.0, &default_factory)?;
    let mut sq: Vec<f64> = samples.iter().map(|s| s.abs_sq).collect();
    sq.sort_by(f64::total_cmp);
    let idx = (((1.0 - accuracy.theta) * trials as f64).ceil() as usize).clamp(1, trials) - 1;
    let quantile = sq[idx];
    let bound = accuracy.epsilon * spectral_norm(a).powi(2) * b.frobenius_norm_sq();
    Ok(RankBoundReport {
        rank,
        epsilon: accuracy.epsilon,
        theta: accuracy.theta,
        z: rank * (accuracy.d() + e * accuracy.block),
        trials,
        quantile,
        bound,
        passed: quantile <= 1.1 * bound,
    })
}

/// Mean relative error as a function of ignored workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorVsE {
    pub e: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub trials: usize,
    pub mean_relative_error: f64,
    pub std_relative_error: f64,
}

/// For a fixed total of `count` sub-sketches, keep `count − e` per block for
/// each `e` in `es`.
pub fn error_vs_e(
    a: &DenseMatrix,
    b: &DenseMatrix,
    block: usize,
    count: usize,
    es: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorVsE>> {
    es.iter()
        .map(|&e| {
            if e >= count {
                return Err(Error::invalid(format!("e = {e} leaves no sub-sketch of {count}")));
            }
            let cfg = TrialConfig {
                block,
                n_keep: count - e,
                e,
                trials,
                seed,
            };
            let rel: Vec<f64> = error_samples(a, b, &cfg, 0.0, 0.0, &default_factory)?
                .iter()
                .map(|s| s.relative)
                .collect();
            let (mean, var) = moments(&rel);
            Ok(ErrorVsE {
                e,
                n_keep: count - e,
                trials,
                mean_relative_error: mean,
                std_relative_error: var.sqrt(),
            })
        })
        .collect()
}

pub fn write_error_vs_e_csv<W: Write>(rows: &[ErrorVsE], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

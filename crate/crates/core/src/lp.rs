//! Log-barrier interior-point solver for `min cᵀx s.t. Ax ≤ b`, with the
//! Newton Hessian computed exactly or through the sketched distributed
//! multiply.
//!
//! For barrier weight `τ` the centering objective is
//! `f(x) = τcᵀx − Σ log(bᵢ − aᵢᵀx)`, with gradient `τc + Σ aᵢ/sᵢ` and Hessian
//! `Aᵀ diag(1/s²) A = (diag(1/s) A)ᵀ (diag(1/s) A)`, where `s = b − Ax`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::multiply::{oversketch_multiply, oversketch_multiply_with_spec, OverSketchOptions};
use crate::seeding::{derive_seed, rng_for};
use crate::sim::{ShortfallMode, Simulator};
use crate::sketch::{CountSketchSpec, DropPolicy, OverSketchSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    /// `n × m`: one row per constraint.
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl LpProblem {
    pub fn new(a: DenseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() || c.len() != a.cols() {
            return Err(Error::invalid(format!(
                "A is {}x{} but b has {} and c has {} entries",
                a.rows(),
                a.cols(),
                b.len(),
                c.len()
            )));
        }
        if !a.is_finite() || b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::invalid("problem data must be finite"));
        }
        Ok(LpProblem { a, b, c })
    }

    /// `lo ≤ x ≤ hi` written as `[I; −I] x ≤ [hi; −lo]`.
    pub fn box_constrained(lo: &[f64], hi: &[f64], c: Vec<f64>) -> Result<Self> {
        let m = lo.len();
        if hi.len() != m || lo.iter().zip(hi).any(|(l, h)| l >= h) {
            return Err(Error::invalid("box bounds must have equal length and lo < hi"));
        }
        let a = DenseMatrix::from_fn(2 * m, m, |i, j| {
            if i < m && i == j {
                1.0
            } else if i >= m && i - m == j {
                -1.0
            } else {
                0.0
            }
        });
        let b = hi.iter().copied().chain(lo.iter().map(|l| -l)).collect();
        LpProblem::new(a, b, c)
    }

    pub fn constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn variables(&self) -> usize {
        self.a.cols()
    }

    /// `b − Ax`; errors unless every slack is strictly positive.
    pub fn slacks(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.matvec(x)?;
        let s: Vec<f64> = self.b.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        if s.is_empty() || min > 0.0 {
            Ok(s)
        } else {
            Err(Error::InfeasibleIterate(min))
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    pub fn barrier(&self, tau: f64, x: &[f64]) -> Result<f64> {
        let s = self.slacks(x)?;
        Ok(tau * self.objective(x) - s.iter().map(|v| v.ln()).sum::<f64>())
    }

    pub fn gradient(&self, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.slacks(x)?;
        let mut g: Vec<f64> = self.c.iter().map(|c| tau * c).collect();
        for (i, si) in s.iter().enumerate() {
            for (gj, aij) in g.iter_mut().zip(self.a.row(i)) {
                *gj += aij / si;
            }
        }
        Ok(g)
    }

    /// `diag(1/s) A`, so that `Hsqrtᵀ Hsqrt` is the barrier Hessian.
    pub fn hessian_sqrt(&self, x: &[f64]) -> Result<DenseMatrix> {
        let s = self.slacks(x)?;
        let mut out = self.a.clone();
        for (i, si) in s.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v /= si);
        }
        Ok(out)
    }

    /// `Σ aᵢaᵢᵀ / sᵢ²`, accumulated row by row.
    pub fn hessian(&self, x: &[f64]) -> Result<DenseMatrix> {
        let s = self.slacks(x)?;
        let m = self.variables();
        let mut h = DenseMatrix::zeros(m, m);
        for (i, si) in s.iter().enumerate() {
            let row = self.a.row(i);
            let w = 1.0 / (si * si);
            for p in 0..m {
                let rp = row[p] * w;
                for (hq, rq) in h.row_mut(p).iter_mut().zip(row) {
                    *hq += rp * rq;
                }
            }
        }
        Ok(h)
    }

    /// Whitespace-separated: `n m`, then `A` row by row, then `b`, then `c`.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut dim = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        let n = dim("constraint count")?;
        let m = dim("variable count")?;
        let rest: Vec<f64> = it
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let expected = n * m + n + m;
        if rest.len() != expected {
            return Err(Error::Parse(format!(
                "expected {expected} numbers after the header, found {}",
                rest.len()
            )));
        }
        let a = DenseMatrix::from_vec(n, m, rest[..n * m].to_vec())?;
        let b = rest[n * m..n * m + n].to_vec();
        let c = rest[n * m + n..].to_vec();
        LpProblem::new(a, b, c)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "{} {}", self.constraints(), self.variables())?;
        for i in 0..self.constraints() {
            writeln!(w, "{}", join(self.a.row(i)))?;
        }
        writeln!(w, "{}", join(&self.b))?;
        writeln!(w, "{}", join(&self.c))?;
        Ok(())
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Midpoint of a box: the analytic center of `lo ≤ x ≤ hi`.
pub fn box_center(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect()
}

/// A generated instance with a strictly feasible starting point and, when
/// known in closed form, its optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLp {
    pub problem: LpProblem,
    pub start: Vec<f64>,
    pub optimum: Option<f64>,
    pub x_opt: Option<Vec<f64>>,
}

fn unit_rows<R: Rng>(n: usize, m: usize, rng: &mut R) -> DenseMatrix {
    let mut a = DenseMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    for i in 0..n {
        let norm = a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        a.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    a
}

/// Random `n × m` instance: unit-norm Gaussian rows, `b = A x₀ + U[0.5, 1.5]`
/// for a Gaussian `x₀` (the returned start), and Gaussian `c`.
///
/// With `n` well above `m` the feasible set is bounded with overwhelming
/// probability; the optimum is not known in closed form (see
/// [`reference_optimum`]).
pub fn generate_lp(n: usize, m: usize, seed: u64) -> Result<GeneratedLp> {
    if m == 0 || n <= m {
        return Err(Error::invalid("need at least one variable and more constraints than variables"));
    }
    let mut rng = rng_for(seed, 0x1a);
    let a = unit_rows(n, m, &mut rng);
    let x0: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b = a
        .matvec(&x0)?
        .into_iter()
        .map(|v| v + rng.random_range(0.5..1.5))
        .collect();
    let c = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(GeneratedLp {
        problem: LpProblem::new(a, b, c)?,
        start: x0,
        optimum: None,
        x_opt: None,
    })
}

/// Random `n × m` instance whose optimum is a known vertex.
///
/// `m` rows are made active at `x*` (`aᵢᵀx* = 1`); the rest get slack
/// `bᵢ = max(aᵢᵀx*, 0) + U[0.5, 1.5]`. Taking `c = −Σ wᵢaᵢ` over the active
/// rows with `wᵢ > 0` makes `x*` optimal with value `−Σ wᵢ`, and `x = 0` is
/// strictly feasible.
pub fn generate_lp_with_optimum(n: usize, m: usize, seed: u64) -> Result<GeneratedLp> {
    if m == 0 || n <= m {
        return Err(Error::invalid("need at least one variable and more constraints than variables"));
    }
    let mut rng = rng_for(seed, 0x1b);
    for _ in 0..16 {
        let a = unit_rows(n, m, &mut rng);
        let active = DMatrix::from_row_slice(m, m, &a.as_slice()[..m * m]);
        let Some(x) = active.lu().solve(&DVector::from_element(m, 1.0)) else {
            continue;
        };
        let x_opt: Vec<f64> = x.iter().copied().collect();
        let ax = a.matvec(&x_opt)?;
        let mut b = vec![1.0; n];
        for i in m..n {
            b[i] = ax[i].max(0.0) + rng.random_range(0.5..1.5);
        }
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut c = vec![0.0; m];
        for (i, wi) in w.iter().enumerate() {
            for (cj, aij) in c.iter_mut().zip(a.row(i)) {
                *cj -= wi * aij;
            }
        }
        return Ok(GeneratedLp {
            problem: LpProblem::new(a, b, c)?,
            start: vec![0.0; m],
            optimum: Some(-w.iter().sum::<f64>()),
            x_opt: Some(x_opt),
        });
    }
    Err(Error::InfeasibleProblem("could not draw a nonsingular active set".into()))
}

/// Optimal value estimated by a long exact-Hessian run (300 iterations,
/// final `τ = 2²⁹`), used as the percentage-error baseline when the optimum
/// is not known.
pub fn reference_optimum(problem: &LpProblem, x0: Option<&[f64]>) -> Result<f64> {
    let opts = LpOptions {
        schedule: Schedule {
            iterations: 300,
            ..Schedule::default()
        },
        ..LpOptions::default()
    };
    let mut sim = Simulator::new(crate::sim::SimConfig::default())?;
    Ok(solve_lp(problem, x0, &opts, &mut sim)?.objective)
}

/// `τ` starts at `tau0` and doubles every `doubling_period` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub tau0: f64,
    pub doubling_period: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            iterations: 100,
            tau0: 1.0,
            doubling_period: 10,
        }
    }
}

impl Schedule {
    pub fn tau(&self, iteration: usize) -> f64 {
        let doublings = iteration / self.doubling_period.max(1);
        self.tau0 * 2f64.powi(doublings as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchedHessian {
    pub block: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub e: usize,
    pub seed: u64,
    /// Draw a new sketch every iteration (seeded from `(seed, iteration)`).
    pub fresh_seeds: bool,
    pub ignore_sketch_stragglers: bool,
    pub shortfall: ShortfallMode,
    #[serde(default)]
    pub drop_policy: DropPolicy,
}

impl SketchedHessian {
    /// Sketch dimension fixed at `count · b`, of which `e` sub-sketches may
    /// be ignored per block. Sketch-phase stragglers are ignored too, with
    /// graceful shortfall, when `e > 0`.
    pub fn with_total(block: usize, count: usize, e: usize, seed: u64) -> Result<Self> {
        if e >= count {
            return Err(Error::invalid(format!("e = {e} must be below {count} sub-sketches")));
        }
        Ok(SketchedHessian {
            block,
            n_keep: count - e,
            e,
            seed,
            fresh_seeds: true,
            ignore_sketch_stragglers: e > 0,
            shortfall: if e > 0 {
                ShortfallMode::Graceful
            } else {
                ShortfallMode::Strict
            },
            drop_policy: DropPolicy::PerBlock,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianMode {
    Exact,
    Sketched(SketchedHessian),
    /// The distributed sketched path with `S = I`; reproduces exact steps.
    Identity,
}

/// Outcome of one damped Newton step.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonStep {
    pub x: Vec<f64>,
    /// `√(gᵀH⁻¹g)` with the Hessian actually used.
    pub decrement: f64,
    pub step: f64,
    pub hessian_compute_time: f64,
    pub hessian_wall_clock: f64,
}

fn cholesky_solve(h: &DenseMatrix, g: &[f64]) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(h.rows(), h.cols(), h.as_slice());
    let chol = m.cholesky().ok_or(Error::HessianDegenerate)?;
    finite(chol.solve(&DVector::from_column_slice(g)))
}

/// Symmetrizes and adds `λI`, `λ = 1e-8·tr(H)/m`. If that is still not
/// positive definite, eigenvalues are clipped at `λ` instead: per-block kept
/// sets can differ under graceful shortfall, so the sketched product is not
/// always a Gram matrix.
fn regularized_solve(h: &DenseMatrix, g: &[f64]) -> Result<Vec<f64>> {
    let m = h.rows();
    let sym = DMatrix::from_fn(m, m, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    let lambda = 1e-8 * sym.trace() / m as f64;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::HessianDegenerate);
    }
    let shifted = &sym + DMatrix::identity(m, m) * lambda;
    if let Some(chol) = shifted.clone().cholesky() {
        return finite(chol.solve(&DVector::from_column_slice(g)));
    }
    // Scale-aware fallback: grow a diagonal shift μ·diag(H) until positive definite.
    let diag = DMatrix::from_diagonal(&sym.diagonal().map(|v| v.max(lambda)));
    let mut mu = 1e-3;
    while mu <= 1e3 {
        if let Some(chol) = (&shifted + &diag * mu).cholesky() {
            return finite(chol.solve(&DVector::from_column_slice(g)));
        }
        mu *= 2.0;
    }
    Err(Error::HessianDegenerate)
}

fn finite(x: DVector<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x.iter().copied().collect())
    } else {
        Err(Error::HessianDegenerate)
    }
}

/// Hessian per `mode` plus the simulated compute and wall-clock time it took.
pub fn compute_hessian(
    problem: &LpProblem,
    x: &[f64],
    mode: &HessianMode,
    sim: &mut Simulator,
    iteration: usize,
) -> Result<(DenseMatrix, f64, f64)> {
    let sqrt = problem.hessian_sqrt(x)?;
    let out = match mode {
        HessianMode::Exact => return Ok((sqrt.transpose().matmul(&sqrt)?, 0.0, 0.0)),
        HessianMode::Sketched(cfg) => {
            let seed = if cfg.fresh_seeds {
                derive_seed(cfg.seed, iteration as u64)
            } else {
                cfg.seed
            };
            let opts = OverSketchOptions {
                block: cfg.block,
                n_keep: cfg.n_keep,
                e: cfg.e,
                seed,
                shortfall: cfg.shortfall,
                ignore_sketch_stragglers: cfg.ignore_sketch_stragglers,
                drop_policy: cfg.drop_policy,
            };
            oversketch_multiply(&sqrt.transpose(), &sqrt, &opts, sim)?
        }
        HessianMode::Identity => {
            let n = problem.constraints();
            let spec = Arc::new(OverSketchSpec::from_sketches(1, vec![CountSketchSpec::identity(n)?])?);
            let opts = OverSketchOptions::new(n, 1, 0, 0);
            oversketch_multiply_with_spec(&sqrt.transpose(), &sqrt, spec, &opts, sim)?
        }
    };
    let waves = &sim.trace().waves[out.waves.clone()];
    let compute: f64 = waves.iter().map(|w| w.compute_time).sum();
    let wall: f64 = waves.iter().map(|w| w.wall_clock()).sum();
    sim.store_mut().clear();
    Ok((out.product, compute, wall))
}

const ARMIJO: f64 = 0.1;
const SHRINK: f64 = 0.5;
const BOUNDARY_FRACTION: f64 = 0.99;

/// One damped Newton step on the centering problem with weight `tau`.
pub fn newton_step(
    problem: &LpProblem,
    tau: f64,
    x: &[f64],
    mode: &HessianMode,
    sim: &mut Simulator,
    iteration: usize,
) -> Result<NewtonStep> {
    let f0 = problem.barrier(tau, x)?;
    let g = problem.gradient(tau, x)?;
    let (h, compute, wall) = compute_hessian(problem, x, mode, sim, iteration)?;
    let solved = match mode {
        HessianMode::Sketched(_) => regularized_solve(&h, &g)?,
        _ => cholesky_solve(&h, &g)?,
    };
    let dx: Vec<f64> = solved.iter().map(|v| -v).collect();
    let slope = dot(&g, &dx);
    let decrement = (-slope).max(0.0).sqrt();
    let unchanged = |decrement| NewtonStep {
        x: x.to_vec(),
        decrement,
        step: 0.0,
        hessian_compute_time: compute,
        hessian_wall_clock: wall,
    };
    if decrement * decrement / 2.0 < 1e-14 * f0.abs().max(1.0) {
        return Ok(unchanged(decrement));
    }

    // Largest step keeping every slack positive.
    let s = problem.slacks(x)?;
    let ads = problem.a.matvec(&dx)?;
    let t_max = s
        .iter()
        .zip(&ads)
        .filter(|(_, d)| **d > 0.0)
        .map(|(si, d)| si / d)
        .fold(f64::INFINITY, f64::min);
    let mut eta = (BOUNDARY_FRACTION * t_max).min(1.0);
    let tol = 4.0 * f64::EPSILON * f0.abs();
    while eta > 1e-20 {
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + eta * di).collect();
        if let Ok(f) = problem.barrier(tau, &trial) {
            if f <= f0 + ARMIJO * eta * slope + tol {
                return Ok(NewtonStep {
                    x: trial,
                    decrement,
                    step: eta,
                    hessian_compute_time: compute,
                    hessian_wall_clock: wall,
                });
            }
        }
        eta *= SHRINK;
    }
    // No progress possible at working precision.
    if decrement * decrement < 1e-10 * f0.abs().max(1.0) {
        return Ok(unchanged(decrement));
    }
    Err(Error::StepFailure)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tau: f64,
    pub objective: f64,
    pub barrier: f64,
    pub decrement: f64,
    pub step: f64,
    pub hessian_compute_time: f64,
    pub hessian_wall_clock: f64,
    pub cumulative_compute_time: f64,
    pub cumulative_wall_clock: f64,
    /// `cᵀx − p*`; NaN without a reference.
    pub gap: f64,
    /// `100·|gap|/|p*|`.
    pub percent_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    pub schedule: Schedule,
    pub mode: HessianMode,
    /// Optimal value to measure the gap against.
    pub reference: Option<f64>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            schedule: Schedule::default(),
            mode: HessianMode::Exact,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub records: Vec<IterationRecord>,
}

impl LpSolution {
    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.gap)
    }

    pub fn total_compute_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_compute_time)
    }
}

/// Runs the barrier schedule from `x0`, or from the origin when it is
/// strictly feasible.
pub fn solve_lp(
    problem: &LpProblem,
    x0: Option<&[f64]>,
    opts: &LpOptions,
    sim: &mut Simulator,
) -> Result<LpSolution> {
    let mut x = match x0 {
        Some(x) if x.len() != problem.variables() => {
            return Err(Error::invalid("starting point has the wrong length"))
        }
        Some(x) => x.to_vec(),
        None => vec![0.0; problem.variables()],
    };
    if let Err(Error::InfeasibleIterate(min)) = problem.slacks(&x) {
        return Err(Error::InfeasibleProblem(format!(
            "starting point is not strictly feasible (min slack {min:e}); supply one"
        )));
    }
    if opts.schedule.tau0.is_nan() || opts.schedule.tau0 <= 0.0 {
        return Err(Error::invalid("tau0 must be positive"));
    }
    let mut records = Vec::with_capacity(opts.schedule.iterations);
    let (mut compute, mut wall) = (0.0, 0.0);
    for it in 0..opts.schedule.iterations {
        let tau = opts.schedule.tau(it);
        let step = newton_step(problem, tau, &x, &opts.mode, sim, it)?;
        x = step.x;
        compute += step.hessian_compute_time;
        wall += step.hessian_wall_clock;
        let objective = problem.objective(&x);
        let (gap, percent_error) = match opts.reference {
            Some(p) => {
                let gap = objective - p;
                (gap, 100.0 * gap.abs() / p.abs().max(f64::MIN_POSITIVE))
            }
            None => (f64::NAN, f64::NAN),
        };
        records.push(IterationRecord {
            iteration: it,
            tau,
            objective,
            barrier: problem.barrier(tau, &x)?,
            decrement: step.decrement,
            step: step.step,
            hessian_compute_time: step.hessian_compute_time,
            hessian_wall_clock: step.hessian_wall_clock,
            cumulative_compute_time: compute,
            cumulative_wall_clock: wall,
            gap,
            percent_error,
        });
    }
    Ok(LpSolution {
        objective: problem.objective(&x),
        x,
        records,
    })
}

const RECORD_HEADER: [&str; 12] = [
    "iteration",
    "tau",
    "objective",
    "barrier",
    "decrement",
    "step",
    "hessian_compute_time",
    "hessian_wall_clock",
    "cumulative_compute_time",
    "cumulative_wall_clock",
    "gap",
    "percent_error",
];

/// Header is written even when there are no records.
pub fn write_iterations_csv<W: Write>(records: &[IterationRecord], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(RECORD_HEADER)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    fn sim() -> Simulator {
        Simulator::new(SimConfig::default()).unwrap()
    }

    fn exact_opts(tau0: f64, reference: f64) -> LpOptions {
        LpOptions {
            schedule: Schedule {
                tau0,
                ..Schedule::default()
            },
            mode: HessianMode::Exact,
            reference: Some(reference),
        }
    }

    #[test]
    fn gradient_without_constraints_is_c() {
        let p = LpProblem::new(DenseMatrix::zeros(0, 3), vec![], vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.gradient(1.0, &[0.3, 0.1, 9.0]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn one_dimensional_hand_case() {
        let p = LpProblem::new(DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![1.0], vec![0.0])
            .unwrap();
        assert_eq!(p.gradient(1.0, &[0.0]).unwrap(), vec![1.0]);
        assert_eq!(p.hessian(&[0.0]).unwrap().as_slice(), &[1.0]);
        assert!(matches!(p.slacks(&[1.0]), Err(Error::InfeasibleIterate(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = generate_lp_with_optimum(30, 6, 1).unwrap();
        let p = &g.problem;
        let x: Vec<f64> = g.x_opt.as_ref().unwrap().iter().map(|v| 0.3 * v).collect();
        let grad = p.gradient(2.0, &x).unwrap();
        for j in 0..6 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.barrier(2.0, &xp).unwrap() - p.barrier(2.0, &xm).unwrap()) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * grad[j].abs().max(1.0), "{j}: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn unit_slacks_give_a() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        let p = LpProblem::new(a.clone(), vec![1.0; 3], vec![0.0; 2]).unwrap();
        assert_eq!(p.hessian_sqrt(&[0.0, 0.0]).unwrap(), a);
    }

    #[test]
    fn sqrt_factor_reproduces_hessian() {
        let g = generate_lp_with_optimum(40, 8, 2).unwrap();
        let x: Vec<f64> = g.x_opt.as_ref().unwrap().iter().map(|v| 0.5 * v).collect();
        let s = g.problem.hessian_sqrt(&x).unwrap();
        let h = g.problem.hessian(&x).unwrap();
        let via = s.transpose().matmul(&s).unwrap();
        assert!(via.sub(&h).unwrap().frobenius_norm() <= 1e-10 * h.frobenius_norm());
    }

    #[test]
    fn generator_optimum_is_feasible_and_dual_certified() {
        let g = generate_lp_with_optimum(50, 5, 3).unwrap();
        let ax = g.problem.a.matvec(g.x_opt.as_ref().unwrap()).unwrap();
        for (i, (v, b)) in ax.iter().zip(&g.problem.b).enumerate() {
            if i < 5 {
                assert!((v - b).abs() < 1e-9);
            } else {
                assert!(v < b);
            }
        }
        assert!((g.problem.objective(g.x_opt.as_ref().unwrap()) - g.optimum.unwrap()).abs() < 1e-9);
        assert!(g.problem.slacks(&vec![0.0; 5]).is_ok());
    }

    #[test]
    fn exact_run_reaches_known_optimum() {
        let g = generate_lp_with_optimum(40, 10, 4).unwrap();
        let sol = solve_lp(&g.problem, None, &exact_opts(100.0, g.optimum.unwrap()), &mut sim()).unwrap();
        assert_eq!(sol.records.len(), 100);
        let rel = sol.final_gap().unwrap().abs() / g.optimum.unwrap().abs();
        assert!(rel < 1e-4, "relative gap {rel}");
        assert!(sol.records.iter().all(|r| r.barrier.is_finite()));
    }

    #[test]
    fn box_lp_reaches_all_ones() {
        let m = 4;
        let (lo, hi) = (vec![0.0; m], vec![1.0; m]);
        let p = LpProblem::box_constrained(&lo, &hi, vec![-1.0; m]).unwrap();
        assert!(matches!(
            solve_lp(&p, None, &LpOptions::default(), &mut sim()),
            Err(Error::InfeasibleProblem(_))
        ));
        let x0 = box_center(&lo, &hi);
        let sol = solve_lp(&p, Some(&x0), &exact_opts(1000.0, -(m as f64)), &mut sim()).unwrap();
        assert!(sol.final_gap().unwrap().abs() < 1e-4);
        assert!(sol.x.iter().all(|v| (v - 1.0).abs() < 1e-4));
    }

    #[test]
    fn barrier_decreases_between_tau_updates() {
        let g = generate_lp_with_optimum(30, 6, 5).unwrap();
        let sol = solve_lp(&g.problem, None, &exact_opts(1.0, g.optimum.unwrap()), &mut sim()).unwrap();
        for w in sol.records.windows(2) {
            if w[0].tau == w[1].tau {
                assert!(w[1].barrier <= w[0].barrier + 1e-9 * w[0].barrier.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identity_sketch_reproduces_exact_steps() {
        let g = generate_lp_with_optimum(24, 4, 6).unwrap();
        let schedule = Schedule {
            iterations: 20,
            tau0: 1.0,
            doubling_period: 10,
        };
        let run = |mode| {
            let opts = LpOptions {
                schedule,
                mode,
                reference: g.optimum,
            };
            solve_lp(&g.problem, None, &opts, &mut sim()).unwrap()
        };
        let exact = run(HessianMode::Exact);
        let ident = run(HessianMode::Identity);
        for (a, b) in exact.records.iter().zip(&ident.records) {
            assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective.abs().max(1.0));
        }
        assert!(ident.total_compute_time() > 0.0);
    }

    #[test]
    fn random_instance_starts_feasible() {
        let g = generate_lp(60, 6, 9).unwrap();
        assert!(g.problem.slacks(&g.start).unwrap().iter().all(|&s| s >= 0.5));
        assert!(g.optimum.is_none());
        let p = reference_optimum(&g.problem, Some(&g.start)).unwrap();
        assert!(p < g.problem.objective(&g.start));
    }

    #[test]
    fn sketched_run_makes_progress() {
        let g = generate_lp(160, 16, 7).unwrap();
        let p = reference_optimum(&g.problem, Some(&g.start)).unwrap();
        let opts = LpOptions {
            schedule: Schedule {
                iterations: 30,
                ..Schedule::default()
            },
            mode: HessianMode::Sketched(SketchedHessian::with_total(4, 20, 1, 3).unwrap()),
            reference: Some(p),
        };
        let sol = solve_lp(&g.problem, Some(&g.start), &opts, &mut sim()).unwrap();
        let first = sol.records[0].percent_error;
        let last = sol.records.last().unwrap().percent_error;
        assert!(last < first);
        assert!(sol.total_compute_time() > 0.0);
    }

    #[test]
    fn sketched_hessian_is_unbiased() {
        let g = generate_lp(16, 4, 10).unwrap();
        let x = &g.start;
        let exact = g.problem.hessian(x).unwrap();
        let mut cfg = SketchedHessian::with_total(2, 3, 1, 77).unwrap();
        cfg.ignore_sketch_stragglers = false;
        cfg.shortfall = ShortfallMode::Strict;
        let trials = 2000;
        let mut sum = vec![0.0; 16];
        let mut sq = vec![0.0; 16];
        let mut s = sim();
        for t in 0..trials {
            let (h, _, _) = compute_hessian(&g.problem, x, &HessianMode::Sketched(cfg), &mut s, t).unwrap();
            for (k, v) in h.as_slice().iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let nt = trials as f64;
        for k in 0..16 {
            let mean = sum[k] / nt;
            let se = ((sq[k] / nt - mean * mean).max(0.0) / nt).sqrt();
            let want = exact.as_slice()[k];
            assert!((mean - want).abs() <= 4.0 * se + 1e-12, "entry {k}: {mean} vs {want} (se {se})");
        }
    }

    #[test]
    fn text_round_trip() {
        let g = generate_lp_with_optimum(6, 2, 8).unwrap();
        let mut buf = Vec::new();
        g.problem.write_text(&mut buf).unwrap();
        let back = LpProblem::read_text(&buf[..]).unwrap();
        assert!(back.a.max_abs_diff(&g.problem.a).unwrap() < 1e-15);
        assert!(LpProblem::read_text("2 1\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_csv_has_header() {
        let mut buf = Vec::new();
        write_iterations_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}

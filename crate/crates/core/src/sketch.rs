//! Count-sketch and the stacked, over-provisioned sketch built from it.
//!
//! A count-sketch `S_c ∈ R^{n×b}` sends each input coordinate `k` to one
//! bucket `h(k)` with a random sign `s(k)`. The stacked sketch is
//! `S = (S_1, …, S_{N+e}) / √N`: `N + e` independent count-sketches with a
//! scale chosen for `N` of them, so that any `e` can be dropped per output
//! block and `A S Sᵀ B` stays an unbiased estimate of `A B`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocked::BlockedMatrix;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::seeding::{derive_seed, rng_for};
use crate::sim::{ShortfallMode, Simulator, TerminationRule, WaveKind, WorkerTask};

#[derive(Clone, Debug, PartialEq)]
pub struct CountSketchSpec {
    n: usize,
    b: usize,
    buckets: Vec<usize>,
    signs: Vec<f64>,
}

impl CountSketchSpec {
    /// Buckets uniform on `0..b`, signs ±1 with probability 1/2, all drawn
    /// from `seed`.
    pub fn random(n: usize, b: usize, seed: u64) -> Result<Self> {
        if n == 0 || b == 0 {
            return Err(Error::invalid("count-sketch dimensions must be positive"));
        }
        let mut rng = rng_for(seed, 0);
        let mut buckets = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        for _ in 0..n {
            buckets.push(rng.random_range(0..b));
            signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        Ok(CountSketchSpec {
            n,
            b,
            buckets,
            signs,
        })
    }

    /// A sketch with explicit 0-based bucket and ±1 sign maps.
    pub fn from_maps(b: usize, buckets: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let n = buckets.len();
        if n == 0 || b == 0 {
            return Err(Error::invalid("count-sketch dimensions must be positive"));
        }
        if signs.len() != n {
            return Err(Error::invalid("sign map and bucket map lengths differ"));
        }
        if buckets.iter().any(|&h| h >= b) {
            return Err(Error::invalid("bucket index out of range"));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::invalid("signs must be +1 or -1"));
        }
        Ok(CountSketchSpec {
            n,
            b,
            buckets,
            signs,
        })
    }

    /// `h = identity`, `s ≡ +1`.
    pub fn identity(n: usize) -> Result<Self> {
        CountSketchSpec::from_maps(n, (0..n).collect(), vec![1.0; n])
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn sketch_dim(&self) -> usize {
        self.b
    }

    pub fn buckets(&self) -> &[usize] {
        &self.buckets
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// `A S_c`: column `j` of the result is `Σ_{h(k)=j} s(k) A(:, k)`.
    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.cols() != self.n {
            return Err(Error::invalid(format!(
                "matrix has {} columns, sketch expects {}",
                a.cols(),
                self.n
            )));
        }
        let mut out = DenseMatrix::zeros(a.rows(), self.b);
        for r in 0..a.rows() {
            let src = a.row(r);
            let dst = out.row_mut(r);
            for ((&v, &h), &s) in src.iter().zip(&self.buckets).zip(&self.signs) {
                dst[h] += s * v;
            }
        }
        Ok(out)
    }

    /// `S_cᵀ B`: row `j` of the result is `Σ_{h(k)=j} s(k) B(k, :)`.
    pub fn apply_left(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.n {
            return Err(Error::invalid(format!(
                "matrix has {} rows, sketch expects {}",
                b.rows(),
                self.n
            )));
        }
        let mut out = DenseMatrix::zeros(self.b, b.cols());
        for k in 0..self.n {
            let s = self.signs[k];
            let src = b.row(k);
            for (o, &v) in out.row_mut(self.buckets[k]).iter_mut().zip(src) {
                *o += s * v;
            }
        }
        Ok(out)
    }

    /// The explicit `n × b` matrix.
    pub fn materialize(&self) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.n, self.b);
        for k in 0..self.n {
            s[(k, self.buckets[k])] = self.signs[k];
        }
        s
    }

    /// `xᵀ S_c S_cᵀ y` in `O(n)`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut sx = vec![0.0; self.b];
        let mut sy = vec![0.0; self.b];
        for k in 0..self.n {
            sx[self.buckets[k]] += self.signs[k] * x[k];
            sy[self.buckets[k]] += self.signs[k] * y[k];
        }
        sx.iter().zip(&sy).map(|(a, b)| a * b).sum()
    }
}

/// Parameters that fully determine an [`OverSketchSpec`]; this is what gets
/// serialized, the maps are always regenerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverSketchParams {
    pub seed: u64,
    pub n: usize,
    pub b: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub e: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverSketchSpec {
    params: OverSketchParams,
    sketches: Vec<CountSketchSpec>,
}

impl OverSketchSpec {
    /// `N + e` count-sketches of width `b`; sub-sketch `i` is seeded from
    /// `(seed, i)`.
    pub fn new(n: usize, b: usize, n_keep: usize, e: usize, seed: u64) -> Result<Self> {
        OverSketchSpec::from_params(OverSketchParams {
            seed,
            n,
            b,
            n_keep,
            e,
        })
    }

    pub fn from_params(params: OverSketchParams) -> Result<Self> {
        if params.n_keep == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        let sketches = (0..params.n_keep + params.e)
            .map(|i| CountSketchSpec::random(params.n, params.b, derive_seed(params.seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OverSketchSpec { params, sketches })
    }

    /// Stacks caller-supplied sub-sketches; all must share `n` and `b`.
    pub fn from_sketches(n_keep: usize, sketches: Vec<CountSketchSpec>) -> Result<Self> {
        let first = sketches
            .first()
            .ok_or_else(|| Error::invalid("at least one sub-sketch required"))?;
        let (n, b) = (first.n, first.b);
        if n_keep == 0 || n_keep > sketches.len() {
            return Err(Error::invalid("N must be between 1 and the number of sub-sketches"));
        }
        if sketches.iter().any(|s| s.n != n || s.b != b) {
            return Err(Error::invalid("sub-sketches differ in shape"));
        }
        Ok(OverSketchSpec {
            params: OverSketchParams {
                seed: 0,
                n,
                b,
                n_keep,
                e: sketches.len() - n_keep,
            },
            sketches,
        })
    }

    pub fn params(&self) -> OverSketchParams {
        self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.n
    }

    pub fn block(&self) -> usize {
        self.params.b
    }

    pub fn n_keep(&self) -> usize {
        self.params.n_keep
    }

    pub fn stragglers(&self) -> usize {
        self.params.e
    }

    pub fn count(&self) -> usize {
        self.sketches.len()
    }

    /// `z = (N + e) b`.
    pub fn total_dim(&self) -> usize {
        self.count() * self.params.b
    }

    /// `1/√N`, independent of `e`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.params.n_keep as f64).sqrt()
    }

    pub fn sketches(&self) -> &[CountSketchSpec] {
        &self.sketches
    }

    pub fn sketch(&self, i: usize) -> &CountSketchSpec {
        &self.sketches[i]
    }

    /// Explicit `n × z` matrix including the `1/√N` scale.
    pub fn materialize(&self) -> DenseMatrix {
        let b = self.params.b;
        let mut s = DenseMatrix::zeros(self.params.n, self.total_dim());
        for (i, sk) in self.sketches.iter().enumerate() {
            s.set_window(0, i * b, &sk.materialize());
        }
        s.scaled(self.scale())
    }

    /// Full `A S` (`m × z`).
    pub fn apply_right(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        let b = self.params.b;
        let mut out = DenseMatrix::zeros(a.rows(), self.total_dim());
        for (i, sk) in self.sketches.iter().enumerate() {
            out.set_window(0, i * b, &sk.apply_right(a)?);
        }
        Ok(out.scaled(self.scale()))
    }

    /// Full `Sᵀ B` (`z × l`).
    pub fn apply_left(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        let b = self.params.b;
        let mut out = DenseMatrix::zeros(self.total_dim(), m.cols());
        for (i, sk) in self.sketches.iter().enumerate() {
            out.set_window(i * b, 0, &sk.apply_left(m)?);
        }
        Ok(out.scaled(self.scale()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.params)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        OverSketchSpec::from_params(serde_json::from_str(s)?)
    }
}

/// Shorthand for [`CountSketchSpec::random`].
pub fn make_count_sketch(n: usize, b: usize, seed: u64) -> Result<CountSketchSpec> {
    CountSketchSpec::random(n, b, seed)
}

/// Shorthand for [`OverSketchSpec::new`].
pub fn make_oversketch(n: usize, b: usize, n_keep: usize, e: usize, seed: u64) -> Result<OverSketchSpec> {
    OverSketchSpec::new(n, b, n_keep, e, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `Ã = A S`; the input is stored as `b × n` row panels.
    Right,
    /// `B̃ = Sᵀ B`; the input is stored as `n × b` column panels.
    Left,
}

/// Which tasks a straggler-ignoring wave may leave behind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropPolicy {
    /// Every output block (or sketch panel) keeps its own fastest `N`.
    #[default]
    PerBlock,
    /// The same sub-sketches are dropped everywhere: the wave keeps the `N`
    /// sub-sketches whose slowest task finished first. `A S Sᵀ Aᵀ` then
    /// stays a Gram matrix.
    WholeSketch,
}

/// How a sketch wave terminates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SketchWait {
    All,
    Ignore(ShortfallMode, DropPolicy),
}

/// Termination for waves whose task `t` belongs to sub-sketch `t % count`:
/// keeps the `n_keep` sub-sketches with the earliest finish among those with
/// no pre-ignored task. Returns the counted mask and the wave compute time.
pub(crate) fn decide_whole_sketches(
    count: usize,
    n_keep: usize,
    shortfall: ShortfallMode,
    tasks: &[WorkerTask],
    durations: &[f64],
) -> Result<(Vec<bool>, f64)> {
    let mut finish = vec![0.0f64; count];
    let mut eligible = vec![true; count];
    for (t, task) in tasks.iter().enumerate() {
        let k = t % count;
        finish[k] = finish[k].max(durations[t]);
        eligible[k] &= !task.pre_ignored;
    }
    let mut order: Vec<usize> = (0..count).filter(|&k| eligible[k]).collect();
    order.sort_by(|&x, &y| finish[x].total_cmp(&finish[y]).then(x.cmp(&y)));
    if order.len() < n_keep && shortfall == ShortfallMode::Strict {
        return Err(Error::InsufficientResults {
            group: 0,
            got: order.len(),
            needed: n_keep,
        });
    }
    order.truncate(n_keep);
    let compute_time = order.iter().map(|&k| finish[k]).fold(0.0, f64::max);
    let mut keep = vec![false; count];
    order.iter().for_each(|&k| keep[k] = true);
    let counted = (0..tasks.len()).map(|t| keep[t % count]).collect();
    Ok((counted, compute_time))
}

#[derive(Clone, Debug)]
pub struct SketchOutcome {
    /// `b × b` blocks: `(m/b) × (N+e)` for the right side, `(N+e) × (l/b)`
    /// for the left.
    pub sketched: BlockedMatrix,
    /// `(panel, sub-sketch)` pairs whose blocks were not waited for.
    pub ignored: Vec<(usize, usize)>,
}

/// Sketches a panel-partitioned matrix with one worker per
/// `(panel, sub-sketch)` pair.
///
/// With [`SketchWait::Ignore`] only `N` of the `N + e` sketch blocks of each
/// panel are waited for (chosen per panel or per whole sub-sketch); the rest
/// are reported in [`SketchOutcome::ignored`] so the multiply phase can treat
/// them as stragglers. [`SketchWait::All`] waits for every block.
pub fn distributed_sketch(
    input: &BlockedMatrix,
    spec: &Arc<OverSketchSpec>,
    sim: &mut Simulator,
    side: Side,
    wait: SketchWait,
) -> Result<SketchOutcome> {
    let b = spec.block();
    let n = spec.input_dim();
    let count = spec.count();
    let (panels, panel_ok) = match side {
        Side::Right => (
            input.grid_rows,
            input.grid_cols == 1 && input.block_cols == n && input.block_rows == b,
        ),
        Side::Left => (
            input.grid_cols,
            input.grid_rows == 1 && input.block_rows == n && input.block_cols == b,
        ),
    };
    if !panel_ok {
        return Err(Error::invalid(format!(
            "input must be stored as {} panels of width {b} over n = {n}",
            match side {
                Side::Right => "row",
                Side::Left => "column",
            }
        )));
    }
    let sketched = match side {
        Side::Right => sim.declare(b, b, panels, count),
        Side::Left => sim.declare(b, b, count, panels),
    };

    let mut tasks = Vec::with_capacity(panels * count);
    for p in 0..panels {
        for j in 0..count {
            let (read, write) = match side {
                Side::Right => (input.key(p, 0), sketched.key(p, j)),
                Side::Left => (input.key(0, p), sketched.key(j, p)),
            };
            let spec = Arc::clone(spec);
            tasks.push(
                WorkerTask::new(vec![read], vec![write], (b * n) as u64, move |inputs| {
                    let sk = spec.sketch(j);
                    let out = match side {
                        Side::Right => sk.apply_right(&inputs[0])?,
                        Side::Left => sk.apply_left(&inputs[0])?,
                    };
                    Ok(vec![out.scaled(spec.scale())])
                })
                .in_group(p),
            );
        }
    }
    let label = match side {
        Side::Right => "sketch-right",
        Side::Left => "sketch-left",
    };
    let outcome = match wait {
        SketchWait::All => sim.run_wave(label, tasks, WaveKind::Compute, TerminationRule::wait_all())?,
        SketchWait::Ignore(mode, DropPolicy::PerBlock) => {
            sim.run_wave(label, tasks, WaveKind::Compute, TerminationRule::any(spec.n_keep(), mode))?
        }
        SketchWait::Ignore(mode, DropPolicy::WholeSketch) => {
            let n_keep = spec.n_keep();
            sim.run_wave_until(label, tasks, WaveKind::Compute, |t, d| {
                decide_whole_sketches(count, n_keep, mode, t, d)
            })?
        }
    };
    let ignored = outcome
        .ignored()
        .map(|t| (t / count, t % count))
        .collect();
    Ok(SketchOutcome { sketched, ignored })
}

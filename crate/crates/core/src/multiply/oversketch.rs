use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blocked::{assemble, ceil_div, multiply_flops};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::{ShortfallMode, Simulator, TerminationRule, WaveKind, WorkerTask};
use crate::sketch::{decide_whole_sketches, distributed_sketch, DropPolicy, OverSketchSpec, Side, SketchWait};

use super::{reduce_wave, MultiplyPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverSketchOptions {
    pub block: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub e: usize,
    pub seed: u64,
    #[serde(default)]
    pub shortfall: ShortfallMode,
    /// Let each sketch panel stop after `N` of its `N + e` blocks. Blocks
    /// left behind are pre-ignored in the multiply phase and use up that
    /// output block's straggler budget.
    #[serde(default)]
    pub ignore_sketch_stragglers: bool,
    #[serde(default)]
    pub drop_policy: DropPolicy,
}

impl OverSketchOptions {
    pub fn new(block: usize, n_keep: usize, e: usize, seed: u64) -> Self {
        OverSketchOptions {
            block,
            n_keep,
            e,
            seed,
            shortfall: ShortfallMode::Strict,
            ignore_sketch_stragglers: false,
            drop_policy: DropPolicy::PerBlock,
        }
    }

    pub fn graceful(mut self) -> Self {
        self.shortfall = ShortfallMode::Graceful;
        self
    }

    pub fn ignoring_sketch_stragglers(mut self, on: bool) -> Self {
        self.ignore_sketch_stragglers = on;
        self
    }

    pub fn with_drop_policy(mut self, policy: DropPolicy) -> Self {
        self.drop_policy = policy;
        self
    }
}

/// Sub-sketch indices whose partial products were summed, per output block
/// in row-major order. Sorted ascending.
pub type KeptSketches = Vec<Vec<usize>>;

#[derive(Clone, Debug)]
pub struct OverSketchOutput {
    pub product: DenseMatrix,
    pub plan: MultiplyPlan,
    pub spec: Arc<OverSketchSpec>,
    pub kept: KeptSketches,
    /// Sketch dimension actually used per output block, `|kept| · b`.
    pub effective_d: Vec<usize>,
    pub waves: std::ops::Range<usize>,
}

impl OverSketchOutput {
    pub fn min_effective_d(&self) -> usize {
        self.effective_d.iter().copied().min().unwrap_or(0)
    }
}

/// Approximates `A·B` as `(A S)(Sᵀ B)` with one shared OverSketch `S`.
///
/// Runs four waves: right sketch of `A`, left sketch of `B`, `N + e`
/// block products per output block of which any `N` are kept, and a
/// reduction summing the kept partials.
pub fn oversketch_multiply(
    a: &DenseMatrix,
    b: &DenseMatrix,
    opts: &OverSketchOptions,
    sim: &mut Simulator,
) -> Result<OverSketchOutput> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    MultiplyPlan::oversketch(a.rows(), a.cols(), b.cols(), opts.block, opts.n_keep, opts.e)?;
    let spec = Arc::new(OverSketchSpec::new(a.cols(), opts.block, opts.n_keep, opts.e, opts.seed)?);
    oversketch_multiply_with_spec(a, b, spec, opts, sim)
}

/// [`oversketch_multiply`] with a caller-built sketch; `opts.block`,
/// `opts.n_keep` and `opts.e` are taken from `spec`.
pub fn oversketch_multiply_with_spec(
    a: &DenseMatrix,
    b: &DenseMatrix,
    spec: Arc<OverSketchSpec>,
    opts: &OverSketchOptions,
    sim: &mut Simulator,
) -> Result<OverSketchOutput> {
    if a.cols() != b.rows() {
        return Err(Error::invalid("inner dimensions differ"));
    }
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    if spec.input_dim() != n {
        return Err(Error::invalid(format!(
            "sketch input dimension {} does not match inner dimension {n}",
            spec.input_dim()
        )));
    }
    let bs = spec.block();
    let (n_keep, count) = (spec.n_keep(), spec.count());
    let plan = MultiplyPlan::oversketch(m, n, l, bs, n_keep, spec.stragglers())?;
    if count * bs > n {
        log::warn!(
            "sketch dimension {} exceeds inner dimension {n}; sketching does not reduce work",
            count * bs
        );
    }

    let first_wave = sim.next_wave_id();
    let a_panels = sim.upload(a, bs, n)?;
    let b_panels = sim.upload(b, n, bs)?;
    let sketch_rule = if opts.ignore_sketch_stragglers {
        SketchWait::Ignore(ShortfallMode::Graceful, opts.drop_policy)
    } else {
        SketchWait::All
    };
    let right = distributed_sketch(&a_panels, &spec, sim, Side::Right, sketch_rule)?;
    let left = distributed_sketch(&b_panels, &spec, sim, Side::Left, sketch_rule)?;
    let lost_right: HashSet<_> = right.ignored.iter().copied().collect();
    let lost_left: HashSet<_> = left.ignored.iter().copied().collect();

    let (mb, lb) = (a_panels.grid_rows, b_panels.grid_cols);
    let partials: Vec<_> = (0..count).map(|_| sim.declare(bs, bs, mb, lb)).collect();
    let mut tasks = Vec::with_capacity(mb * lb * count);
    for i in 0..mb {
        for j in 0..lb {
            for (k, partial) in partials.iter().enumerate() {
                let lost = lost_right.contains(&(i, k)) || lost_left.contains(&(j, k));
                tasks.push(
                    WorkerTask::new(
                        vec![right.sketched.key(i, k), left.sketched.key(k, j)],
                        vec![partial.key(i, j)],
                        multiply_flops(bs, bs, bs),
                        |inputs| Ok(vec![inputs[0].matmul(&inputs[1])?]),
                    )
                    .in_group(i * lb + j)
                    .pre_ignored(lost),
                );
            }
        }
    }
    let outcome = match opts.drop_policy {
        DropPolicy::PerBlock => sim.run_wave(
            "multiply",
            tasks,
            WaveKind::Compute,
            TerminationRule::any(n_keep, opts.shortfall),
        )?,
        DropPolicy::WholeSketch => sim.run_wave_until("multiply", tasks, WaveKind::Compute, |t, d| {
            decide_whole_sketches(count, n_keep, opts.shortfall, t, d)
        })?,
    };

    let kept: KeptSketches = outcome
        .counted
        .chunks(count)
        .map(|c| (0..count).filter(|&k| c[k]).collect())
        .collect();
    let c = sim.declare(bs, bs, mb, lb);
    let sources: Vec<Vec<_>> = kept
        .iter()
        .map(|ks| ks.iter().map(|&k| &partials[k]).collect())
        .collect();
    reduce_wave(sim, &c, &sources)?;

    let product = assemble(&c, m, l, sim.store())?;
    let effective_d = kept.iter().map(|k| k.len() * bs).collect();
    Ok(OverSketchOutput {
        product,
        plan,
        spec,
        kept,
        effective_d,
        waves: first_wave..sim.next_wave_id(),
    })
}

/// Dense reference for [`oversketch_multiply`]: block `(i, j)` is
/// `Σ_{k ∈ kept} (A_i S_k)(S_kᵀ B_j) / N`.
pub fn sketched_product(
    a: &DenseMatrix,
    b: &DenseMatrix,
    spec: &OverSketchSpec,
    kept: &[Vec<usize>],
) -> Result<DenseMatrix> {
    let n = spec.input_dim();
    if a.cols() != n || b.rows() != n {
        return Err(Error::invalid("inputs do not match the sketch input dimension"));
    }
    let bs = spec.block();
    let (mb, lb) = (ceil_div(a.rows(), bs), ceil_div(b.cols(), bs));
    if kept.len() != mb * lb {
        return Err(Error::invalid(format!(
            "expected {} kept sets, got {}",
            mb * lb,
            kept.len()
        )));
    }
    let scale = spec.scale();
    let right: Vec<Vec<DenseMatrix>> = (0..mb)
        .map(|i| {
            let panel = a.window(i * bs, 0, bs, n);
            spec.sketches()
                .iter()
                .map(|s| s.apply_right(&panel).map(|x| x.scaled(scale)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let left: Vec<Vec<DenseMatrix>> = (0..lb)
        .map(|j| {
            let panel = b.window(0, j * bs, n, bs);
            spec.sketches()
                .iter()
                .map(|s| s.apply_left(&panel).map(|x| x.scaled(scale)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = DenseMatrix::zeros(mb * bs, lb * bs);
    for i in 0..mb {
        for j in 0..lb {
            let mut acc = DenseMatrix::zeros(bs, bs);
            for &k in &kept[i * lb + j] {
                if k >= spec.count() {
                    return Err(Error::invalid(format!("sub-sketch {k} out of range")));
                }
                acc.add_assign(&right[i][k].matmul(&left[j][k])?)?;
            }
            out.set_window(i * bs, j * bs, &acc);
        }
    }
    Ok(out.window(0, 0, a.rows(), b.cols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SimConfig, StragglerModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn four_tasks_per_block_any_three() {
        let bs = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseMatrix::random_normal(2 * bs, 8 * bs, &mut rng);
        let b = DenseMatrix::random_normal(8 * bs, 2 * bs, &mut rng);
        let mut sim = Simulator::new(SimConfig::with_seed(3)).unwrap();
        let out = oversketch_multiply(&a, &b, &OverSketchOptions::new(bs, 3, 1, 9), &mut sim)
            .unwrap();
        let trace = sim.trace();
        let multiply = &trace.waves[2];
        assert_eq!(multiply.tasks, 16);
        assert_eq!(multiply.counted, 12);
        assert!(out.kept.iter().all(|k| k.len() == 3));
        assert_eq!(out.effective_d, vec![3 * bs; 4]);
        let dense = sketched_product(&a, &b, &out.spec, &out.kept).unwrap();
        assert!(rel(&out.product, &dense) < 1e-10);
    }

    #[test]
    fn no_stragglers_equals_dense_sketch() {
        let bs = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DenseMatrix::random_normal(7, 40, &mut rng);
        let b = DenseMatrix::random_normal(40, 5, &mut rng);
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let out = oversketch_multiply(&a, &b, &OverSketchOptions::new(bs, 4, 0, 2), &mut sim)
            .unwrap();
        let s = out.spec.materialize();
        let dense = a.matmul(&s).unwrap().matmul(&s.transpose().matmul(&b).unwrap()).unwrap();
        assert!(rel(&out.product, &dense) < 1e-10);
    }

    #[test]
    fn output_depends_only_on_kept_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DenseMatrix::random_normal(8, 30, &mut rng);
        let b = DenseMatrix::random_normal(30, 8, &mut rng);
        let opts = OverSketchOptions::new(4, 2, 2, 5);
        let runs: Vec<_> = (0..4)
            .map(|s| {
                let mut sim = Simulator::new(SimConfig::with_seed(s)).unwrap();
                oversketch_multiply(&a, &b, &opts, &mut sim).unwrap()
            })
            .collect();
        for r in &runs {
            let dense = sketched_product(&a, &b, &r.spec, &r.kept).unwrap();
            assert!(r.product.max_abs_diff(&dense).unwrap() < 1e-10);
        }
        assert!(runs.windows(2).any(|w| w[0].kept != w[1].kept));
    }

    #[test]
    fn sketch_stragglers_spend_budget() {
        let mut config = SimConfig::with_seed(4);
        config.model = StragglerModel {
            straggler_prob: 0.3,
            ..StragglerModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::random_normal(8, 40, &mut rng);
        let b = DenseMatrix::random_normal(40, 8, &mut rng);
        let opts = OverSketchOptions::new(4, 3, 1, 1)
            .graceful()
            .ignoring_sketch_stragglers(true);
        let mut sim = Simulator::new(config).unwrap();
        let out = oversketch_multiply(&a, &b, &opts, &mut sim).unwrap();
        let pre: Vec<_> = sim
            .trace()
            .tasks_in_wave(out.waves.start + 2)
            .filter(|t| t.pre_ignored)
            .collect();
        assert!(!pre.is_empty());
        assert!(pre.iter().all(|t| !t.counted));
        // Each sketch panel dropped one block, so every product block lost
        // at least one of its four partials and some lost two.
        assert!(out.kept.iter().all(|k| k.len() <= 3));
        assert!(out.min_effective_d() <= 3 * 4);
    }

    #[test]
    fn strict_mode_fails_when_budget_exhausted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::random_normal(8, 40, &mut rng);
        let b = DenseMatrix::random_normal(40, 8, &mut rng);
        let opts = OverSketchOptions::new(4, 3, 1, 1).ignoring_sketch_stragglers(true);
        let failures = (0..10)
            .filter(|&s| {
                let mut sim = Simulator::new(SimConfig::with_seed(s)).unwrap();
                matches!(
                    oversketch_multiply(&a, &b, &opts, &mut sim),
                    Err(Error::InsufficientResults { .. })
                )
            })
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn rank_two_family_error_within_variance_bound() {
        let bs = 16;
        let a = DenseMatrix::index_sum(10 * bs, 60 * bs);
        let b = a.transpose();
        let exact = a.matmul(&b).unwrap();
        // RMS relative error of a d-column sketch of A·Aᵀ is at most
        // sqrt((‖A‖⁴ + ‖AAᵀ‖²) / d) / ‖AAᵀ‖.
        let d = (26 * bs) as f64;
        let bound = ((a.frobenius_norm_sq().powi(2) + exact.frobenius_norm_sq()) / d).sqrt()
            / exact.frobenius_norm();
        let mean = (0..10)
            .map(|seed| {
                let mut sim = Simulator::new(SimConfig::with_seed(seed)).unwrap();
                let opts = OverSketchOptions::new(bs, 26, 4, seed);
                let out = oversketch_multiply(&a, &b, &opts, &mut sim).unwrap();
                rel(&out.product, &exact)
            })
            .sum::<f64>()
            / 10.0;
        assert!(mean <= bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn kept_set_length_checked() {
        let spec = OverSketchSpec::new(6, 2, 1, 0, 0).unwrap();
        let a = DenseMatrix::zeros(4, 6);
        assert!(sketched_product(&a, &a.transpose(), &spec, &[vec![0]]).is_err());
    }
}

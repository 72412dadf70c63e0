//! Distributed multiplication schemes, each run as simulator waves.

mod blocked;
mod coded;
mod naive;
mod oversketch;

use serde::{Deserialize, Serialize};

use crate::blocked::{ceil_div, BlockedMatrix};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sim::{Simulator, TerminationRule, WaveKind, WorkerTask};

pub use blocked::blocked_multiply;
pub use coded::{coded_naive_multiply, decode_order, CodedOutput, CodedStragglers};
pub use naive::naive_multiply;
pub use oversketch::{
    oversketch_multiply, oversketch_multiply_with_spec, sketched_product, KeptSketches, OverSketchOptions, OverSketchOutput,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Naive,
    Blocked,
    Oversketch,
    CodedNaive,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Scheme::Naive),
            "blocked" => Ok(Scheme::Blocked),
            "oversketch" => Ok(Scheme::Oversketch),
            "coded-naive" | "coded" => Ok(Scheme::CodedNaive),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub name: String,
    pub tasks: usize,
}

/// Shapes and per-phase worker counts of one multiplication.
///
/// `block` is the chunk width `a` for the naive and coded schemes and the
/// block size `b` otherwise. Counts include padding blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplyPlan {
    pub scheme: Scheme,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub block: usize,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_keep: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<usize>,
    pub phases: Vec<PhasePlan>,
}

fn phase(name: &str, tasks: usize) -> PhasePlan {
    PhasePlan {
        name: name.to_string(),
        tasks,
    }
}

fn check_shape(m: usize, n: usize, l: usize, block: usize) -> Result<()> {
    if m == 0 || n == 0 || l == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    if block == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    Ok(())
}

impl MultiplyPlan {
    pub fn naive(m: usize, n: usize, l: usize, a: usize) -> Result<Self> {
        check_shape(m, n, l, a)?;
        Ok(MultiplyPlan {
            scheme: Scheme::Naive,
            m,
            n,
            l,
            block: a,
            n_keep: None,
            e: None,
            z: None,
            phases: vec![phase("multiply", ceil_div(m, a) * ceil_div(l, a))],
        })
    }

    pub fn blocked(m: usize, n: usize, l: usize, b: usize) -> Result<Self> {
        check_shape(m, n, l, b)?;
        let out = ceil_div(m, b) * ceil_div(l, b);
        let nb = ceil_div(n, b);
        let mut phases = vec![phase("multiply", out * nb)];
        if nb > 1 {
            phases.push(phase("reduce", out));
        }
        Ok(MultiplyPlan {
            scheme: Scheme::Blocked,
            m,
            n,
            l,
            block: b,
            n_keep: None,
            e: None,
            z: None,
            phases,
        })
    }

    pub fn oversketch(
        m: usize,
        n: usize,
        l: usize,
        b: usize,
        n_keep: usize,
        e: usize,
    ) -> Result<Self> {
        check_shape(m, n, l, b)?;
        if n_keep == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        let count = n_keep + e;
        let (mb, lb) = (ceil_div(m, b), ceil_div(l, b));
        Ok(MultiplyPlan {
            scheme: Scheme::Oversketch,
            m,
            n,
            l,
            block: b,
            n_keep: Some(n_keep),
            e: Some(e),
            z: Some(count * b),
            phases: vec![
                phase("sketch-right", mb * count),
                phase("sketch-left", count * lb),
                phase("multiply", mb * lb * count),
                phase("reduce", mb * lb),
            ],
        })
    }

    pub fn coded_naive(m: usize, n: usize, l: usize, a: usize) -> Result<Self> {
        check_shape(m, n, l, a)?;
        Ok(MultiplyPlan {
            scheme: Scheme::CodedNaive,
            m,
            n,
            l,
            block: a,
            n_keep: None,
            e: None,
            z: None,
            phases: vec![phase(
                "multiply",
                (ceil_div(m, a) + 1) * (ceil_div(l, a) + 1),
            )],
        })
    }

    pub fn total_tasks(&self) -> usize {
        self.phases.iter().map(|p| p.tasks).sum()
    }
}

/// Result of an exact distributed multiplication.
#[derive(Clone, Debug)]
pub struct MultiplyOutput {
    pub product: DenseMatrix,
    pub plan: MultiplyPlan,
    /// Ids of the waves this run added to the simulator trace.
    pub waves: std::ops::Range<usize>,
}

/// One reduction worker per output block, summing the listed partial
/// products. `sources[g]` holds the partial matrices to read for row-major
/// block `g` of `out`.
pub(crate) fn reduce_wave(
    sim: &mut Simulator,
    out: &BlockedMatrix,
    sources: &[Vec<&BlockedMatrix>],
) -> Result<()> {
    let entries = out.block_entries() as u64;
    let mut tasks = Vec::with_capacity(sources.len());
    for (g, partials) in sources.iter().enumerate() {
        let (i, j) = (g / out.grid_cols, g % out.grid_cols);
        let reads = partials.iter().map(|p| p.key(i, j)).collect::<Vec<_>>();
        let (br, bc) = (out.block_rows, out.block_cols);
        tasks.push(
            WorkerTask::new(
                reads,
                vec![out.key(i, j)],
                entries * partials.len() as u64,
                move |inputs| {
                    let mut acc = DenseMatrix::zeros(br, bc);
                    for p in inputs {
                        acc.add_assign(p)?;
                    }
                    Ok(vec![acc])
                },
            )
            .in_group(g),
        );
    }
    sim.run_wave("reduce", tasks, WaveKind::Reduction, TerminationRule::wait_all())?;
    Ok(())
}

pub(crate) fn check_budget(sim: &Simulator, per_task_entries: u64) -> Result<()> {
    match sim.memory_budget() {
        Some(budget) if per_task_entries > budget => Err(Error::MemoryBudget {
            needed: per_task_entries,
            budget,
        }),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_worker_counts() {
        let naive = MultiplyPlan::naive(8, 8, 8, 2).unwrap();
        assert_eq!(naive.total_tasks(), 16);
        let blocked = MultiplyPlan::blocked(12, 18, 6, 3).unwrap();
        assert_eq!(blocked.phases[0].tasks, 4 * 2 * 6);
        assert_eq!(blocked.phases[1].tasks, 4 * 2);
        let os = MultiplyPlan::oversketch(32, 100, 32, 16, 3, 1).unwrap();
        assert_eq!(os.phases[2].tasks, 32 * 32 * 64 / 16usize.pow(3));
        assert_eq!(os.z, Some(64));
        assert_eq!(MultiplyPlan::coded_naive(4, 4, 4, 2).unwrap().total_tasks(), 9);
        assert!(MultiplyPlan::naive(8, 8, 8, 0).is_err());
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("coded-naive".parse::<Scheme>().unwrap(), Scheme::CodedNaive);
        assert!("strassen".parse::<Scheme>().is_err());
    }
}

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blocked::BlockKey;
use crate::error::Result;
use crate::matrix::DenseMatrix;

use super::store::Payload;

pub type ComputeFn = Arc<dyn Fn(&[Payload]) -> Result<Vec<DenseMatrix>> + Send + Sync>;

/// One stateless worker job: fetch `reads`, run `compute`, store the outputs
/// under `writes`.
#[derive(Clone)]
pub struct WorkerTask {
    pub reads: Vec<BlockKey>,
    pub writes: Vec<BlockKey>,
    pub flops: u64,
    /// Termination group; usually the output block the task contributes to.
    pub group: usize,
    /// Pre-ignored tasks run and are billed but never count toward their
    /// group's threshold.
    pub pre_ignored: bool,
    pub(crate) compute: ComputeFn,
}

impl WorkerTask {
    pub fn new<F>(reads: Vec<BlockKey>, writes: Vec<BlockKey>, flops: u64, compute: F) -> Self
    where
        F: Fn(&[Payload]) -> Result<Vec<DenseMatrix>> + Send + Sync + 'static,
    {
        WorkerTask {
            reads,
            writes,
            flops,
            group: 0,
            pre_ignored: false,
            compute: Arc::new(compute),
        }
    }

    pub fn in_group(mut self, group: usize) -> Self {
        self.group = group;
        self
    }

    pub fn pre_ignored(mut self, ignored: bool) -> Self {
        self.pre_ignored = ignored;
        self
    }
}

impl fmt::Debug for WorkerTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorkerTask")
            .field("reads", &self.reads)
            .field("writes", &self.writes)
            .field("flops", &self.flops)
            .field("group", &self.group)
            .field("pre_ignored", &self.pre_ignored)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    /// Wait for every task in the group.
    All,
    /// Stop once this many tasks of the group have returned.
    Count(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortfallMode {
    /// A group with fewer eligible tasks than its threshold is an error.
    #[default]
    Strict,
    /// Such a group waits for all of its eligible tasks instead.
    Graceful,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TerminationRule {
    pub threshold: Threshold,
    pub shortfall: ShortfallMode,
}

impl TerminationRule {
    pub fn wait_all() -> Self {
        TerminationRule {
            threshold: Threshold::All,
            shortfall: ShortfallMode::Strict,
        }
    }

    pub fn any(count: usize, shortfall: ShortfallMode) -> Self {
        TerminationRule {
            threshold: Threshold::Count(count),
            shortfall,
        }
    }
}

/// Which duration model a wave samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveKind {
    Compute,
    Reduction,
}

/// What a caller needs from a finished wave.
#[derive(Clone, Debug)]
pub struct WaveOutcome {
    pub wave_id: usize,
    /// Per task, in submission order: whether its result was waited for.
    pub counted: Vec<bool>,
    pub durations: Vec<f64>,
    pub compute_time: f64,
}

impl WaveOutcome {
    pub fn ignored(&self) -> impl Iterator<Item = usize> + '_ {
        self.counted
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(i, _)| i)
    }
}

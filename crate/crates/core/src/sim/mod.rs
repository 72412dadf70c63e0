//! Deterministic discrete-event model of a serverless platform.
//!
//! Workers are stateless and only talk to the [`ObjectStore`]. Every task in a
//! wave runs to completion and is billed, but a wave ends in virtual time as
//! soon as each group meets its [`TerminationRule`]; results from tasks past
//! that point are left in the store and never read. Durations come from a
//! seeded [`StragglerModel`], so a run is a pure function of its inputs and
//! seed.

mod store;
mod straggler;
mod trace;
mod wave;

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocked::{partition_with, BlockedMatrix, MatrixId};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::seeding::rng_for;

pub use store::{ObjectStore, Payload, StoreCounters};
pub use straggler::StragglerModel;
pub use trace::{SimulationTrace, TaskRecord, WaveSummary};
pub use wave::{
    ComputeFn, ShortfallMode, TerminationRule, Threshold, WaveKind, WaveOutcome, WorkerTask,
};

use store::payload_bytes;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub model: StragglerModel,
    /// Model for reduction waves; `None` means the compute model without
    /// its straggler tail.
    pub reduction_model: Option<StragglerModel>,
    /// Virtual seconds charged once per wave for launching workers.
    pub invocation_overhead: f64,
    /// Entries a multiplication worker may receive. Checked by the naive and
    /// blocked schemes before launching.
    pub memory_budget: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            model: StragglerModel::default(),
            reduction_model: None,
            invocation_overhead: 9.0,
            memory_budget: None,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug)]
pub struct Simulator {
    config: SimConfig,
    store: ObjectStore,
    rng: ChaCha8Rng,
    trace: SimulationTrace,
    next_task: usize,
    next_matrix: u32,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.model.validate()?;
        if let Some(m) = &config.reduction_model {
            m.validate()?;
        }
        if !(config.invocation_overhead >= 0.0 && config.invocation_overhead.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "invocation overhead must be a non-negative number of seconds".into(),
            ));
        }
        let rng = rng_for(config.seed, 0x5157);
        Ok(Simulator {
            config,
            store: ObjectStore::new(),
            rng,
            trace: SimulationTrace::default(),
            next_task: 0,
            next_matrix: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ObjectStore {
        &mut self.store
    }

    pub fn trace(&self) -> &SimulationTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> SimulationTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn memory_budget(&self) -> Option<u64> {
        self.config.memory_budget
    }

    /// Next wave id; useful for slicing the trace after a run.
    pub fn next_wave_id(&self) -> usize {
        self.trace.waves.len()
    }

    pub fn new_matrix_id(&mut self) -> MatrixId {
        let id = MatrixId(self.next_matrix);
        self.next_matrix += 1;
        id
    }

    /// Client-side upload of `a` split into `block_rows × block_cols`
    /// blocks. Not charged to any worker.
    pub fn upload(
        &mut self,
        a: &DenseMatrix,
        block_rows: usize,
        block_cols: usize,
    ) -> Result<BlockedMatrix> {
        let id = self.new_matrix_id();
        partition_with(a, block_rows, block_cols, id, &mut self.store)
    }

    /// Metadata for a matrix that tasks will write.
    pub fn declare(
        &mut self,
        block_rows: usize,
        block_cols: usize,
        grid_rows: usize,
        grid_cols: usize,
    ) -> BlockedMatrix {
        BlockedMatrix {
            id: self.new_matrix_id(),
            block_rows,
            block_cols,
            grid_rows,
            grid_cols,
        }
    }

    /// Runs one wave of tasks.
    ///
    /// Every task executes and writes its outputs. A group finishes at the
    /// `k`-th smallest duration among its eligible tasks, where `k` is the
    /// threshold; ties are broken by submission order. The wave's compute
    /// time is the latest group finish.
    pub fn run_wave(
        &mut self,
        label: &str,
        tasks: Vec<WorkerTask>,
        kind: WaveKind,
        rule: TerminationRule,
    ) -> Result<WaveOutcome> {
        let groups = group_members(&tasks);
        if let Threshold::Count(k) = rule.threshold {
            if let Some((g, members)) = groups.iter().find(|(_, m)| m.len() < k) {
                return Err(Error::InvalidConfiguration(format!(
                    "threshold {k} exceeds size {} of group {g} in wave {label:?}",
                    members.len()
                )));
            }
        }
        check_isolation(&tasks)?;
        self.execute(label, tasks, kind, |tasks, durations| {
            decide_by_groups(&groups, tasks, durations, rule)
        })
    }

    /// Runs a wave whose stopping point is chosen by `decide`, which sees the
    /// sampled durations and returns which tasks were waited for together
    /// with the wave's compute time.
    pub fn run_wave_until<F>(
        &mut self,
        label: &str,
        tasks: Vec<WorkerTask>,
        kind: WaveKind,
        decide: F,
    ) -> Result<WaveOutcome>
    where
        F: FnOnce(&[WorkerTask], &[f64]) -> Result<(Vec<bool>, f64)>,
    {
        check_isolation(&tasks)?;
        self.execute(label, tasks, kind, decide)
    }

    fn execute<F>(
        &mut self,
        label: &str,
        tasks: Vec<WorkerTask>,
        kind: WaveKind,
        decide: F,
    ) -> Result<WaveOutcome>
    where
        F: FnOnce(&[WorkerTask], &[f64]) -> Result<(Vec<bool>, f64)>,
    {
        let model = match kind {
            WaveKind::Compute => self.config.model,
            WaveKind::Reduction => self
                .config
                .reduction_model
                .unwrap_or_else(|| self.config.model.without_stragglers()),
        };
        let durations: Vec<f64> = tasks.iter().map(|_| model.sample(&mut self.rng)).collect();
        let (counted, compute_time) = decide(&tasks, &durations)?;
        if counted.len() != tasks.len() {
            return Err(Error::InvalidConfiguration(
                "termination decision does not cover every task".into(),
            ));
        }

        // Workers fetch, compute, and write. Fetches and writes go through the
        // store in submission order; the pure compute step may run in parallel.
        let mut inputs = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let fetched = task
                .reads
                .iter()
                .map(|k| self.store.get(k))
                .collect::<Result<Vec<_>>>()?;
            inputs.push(fetched);
        }
        let outputs: Vec<Result<Vec<DenseMatrix>>> = tasks
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(task, fetched)| (task.compute)(fetched))
            .collect();

        let wave_id = self.trace.waves.len();
        for (i, (task, out)) in tasks.iter().zip(outputs).enumerate() {
            let out = out?;
            if out.len() != task.writes.len() {
                return Err(Error::InvalidConfiguration(format!(
                    "task produced {} outputs for {} write keys",
                    out.len(),
                    task.writes.len()
                )));
            }
            let bytes_read = inputs[i].iter().map(|p| payload_bytes(p.len())).sum();
            let mut bytes_written = 0;
            for (key, block) in task.writes.iter().zip(out) {
                bytes_written += payload_bytes(block.len());
                self.store.put(*key, block)?;
            }
            self.trace.tasks.push(TaskRecord {
                task_id: self.next_task,
                wave_id,
                group: task.group,
                duration: durations[i],
                messages: (task.reads.len() + task.writes.len()) as u64,
                bytes_read,
                bytes_written,
                flops: task.flops,
                counted: counted[i],
                pre_ignored: task.pre_ignored,
            });
            self.next_task += 1;
        }
        self.trace.waves.push(WaveSummary {
            wave_id,
            label: label.to_string(),
            tasks: tasks.len(),
            counted: counted.iter().filter(|&&c| c).count(),
            compute_time,
            invocation_overhead: if tasks.is_empty() {
                0.0
            } else {
                self.config.invocation_overhead
            },
        });
        Ok(WaveOutcome {
            wave_id,
            counted,
            durations,
            compute_time,
        })
    }
}

fn decide_by_groups(
    groups: &BTreeMap<usize, Vec<usize>>,
    tasks: &[WorkerTask],
    durations: &[f64],
    rule: TerminationRule,
) -> Result<(Vec<bool>, f64)> {
    let mut counted = vec![false; tasks.len()];
    let mut compute_time: f64 = 0.0;
    for (&group, members) in groups {
        let mut eligible: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&t| !tasks[t].pre_ignored)
            .collect();
        eligible.sort_by(|&x, &y| durations[x].total_cmp(&durations[y]).then(x.cmp(&y)));
        let needed = match rule.threshold {
            Threshold::All => members.len(),
            Threshold::Count(k) => k,
        };
        let take = if eligible.len() >= needed {
            needed
        } else {
            match rule.shortfall {
                ShortfallMode::Strict => {
                    return Err(Error::InsufficientResults {
                        group,
                        got: eligible.len(),
                        needed,
                    })
                }
                ShortfallMode::Graceful => eligible.len(),
            }
        };
        for &t in &eligible[..take] {
            counted[t] = true;
        }
        if take > 0 {
            compute_time = compute_time.max(durations[eligible[take - 1]]);
        }
    }
    Ok((counted, compute_time))
}

fn group_members(tasks: &[WorkerTask]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        groups.entry(t.group).or_default().push(i);
    }
    groups
}

/// Workers in one wave cannot see each other's output.
fn check_isolation(tasks: &[WorkerTask]) -> Result<()> {
    let written: HashSet<_> = tasks.iter().flat_map(|t| t.writes.iter()).collect();
    for t in tasks {
        if let Some(k) = t.reads.iter().find(|k| written.contains(k)) {
            return Err(Error::InvalidConfiguration(format!(
                "task reads {k}, which is written in the same wave"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocked::BlockKey;

    fn copy_tasks(sim: &mut Simulator, groups: usize, per_group: usize) -> Vec<WorkerTask> {
        let src = sim.upload(&DenseMatrix::identity(2), 2, 2).unwrap();
        let dst = sim.new_matrix_id();
        let mut tasks = Vec::new();
        for g in 0..groups {
            for t in 0..per_group {
                tasks.push(
                    WorkerTask::new(
                        vec![src.key(0, 0)],
                        vec![BlockKey::new(dst, g, t)],
                        8,
                        |inp| Ok(vec![(*inp[0]).clone()]),
                    )
                    .in_group(g),
                );
            }
        }
        tasks
    }

    #[test]
    fn threshold_is_kth_order_statistic() {
        let mut sim = Simulator::new(SimConfig::with_seed(11)).unwrap();
        let tasks = copy_tasks(&mut sim, 4, 30);
        let out = sim
            .run_wave(
                "w",
                tasks,
                WaveKind::Compute,
                TerminationRule::any(26, ShortfallMode::Strict),
            )
            .unwrap();
        let mut expected: f64 = 0.0;
        for g in 0..4 {
            let mut d: Vec<f64> = out.durations[g * 30..(g + 1) * 30].to_vec();
            d.sort_by(f64::total_cmp);
            expected = expected.max(d[25]);
            assert_eq!(out.counted[g * 30..(g + 1) * 30].iter().filter(|&&c| c).count(), 26);
        }
        assert_eq!(out.compute_time, expected);
        assert_eq!(sim.trace().tasks.iter().filter(|t| !t.counted).count(), 16);
    }

    #[test]
    fn no_stragglers_wall_clock_near_median() {
        let mut config = SimConfig::with_seed(1);
        config.model.straggler_prob = 0.0;
        let mut sim = Simulator::new(config).unwrap();
        let tasks = copy_tasks(&mut sim, 5, 10);
        let out = sim
            .run_wave("w", tasks, WaveKind::Compute, TerminationRule::wait_all())
            .unwrap();
        assert!(out.compute_time > 40.0 && out.compute_time < 50.0, "{}", out.compute_time);
    }

    #[test]
    fn threshold_above_group_size_rejected() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let tasks = copy_tasks(&mut sim, 1, 3);
        let err = sim
            .run_wave("w", tasks, WaveKind::Compute, TerminationRule::any(4, ShortfallMode::Strict))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfiguration(_)));
    }

    #[test]
    fn reading_same_wave_output_rejected() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let id = sim.new_matrix_id();
        let a = BlockKey::new(id, 0, 0);
        let b = BlockKey::new(id, 0, 1);
        let tasks = vec![
            WorkerTask::new(vec![], vec![a], 0, |_| Ok(vec![DenseMatrix::zeros(1, 1)])),
            WorkerTask::new(vec![a], vec![b], 0, |i| Ok(vec![(*i[0]).clone()])),
        ];
        assert!(sim
            .run_wave("w", tasks, WaveKind::Compute, TerminationRule::wait_all())
            .is_err());
    }

    #[test]
    fn pre_ignored_tasks_shortfall() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let tasks: Vec<_> = copy_tasks(&mut sim, 1, 3)
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.pre_ignored(i < 2))
            .collect();
        let err = sim
            .run_wave(
                "w",
                tasks.clone(),
                WaveKind::Compute,
                TerminationRule::any(2, ShortfallMode::Strict),
            )
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientResults { got: 1, needed: 2, .. }));

        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let tasks: Vec<_> = copy_tasks(&mut sim, 1, 3)
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.pre_ignored(i < 2))
            .collect();
        let out = sim
            .run_wave(
                "w",
                tasks,
                WaveKind::Compute,
                TerminationRule::any(2, ShortfallMode::Graceful),
            )
            .unwrap();
        assert_eq!(out.counted, vec![false, false, true]);
        assert_eq!(out.compute_time, out.durations[2]);
    }

    #[test]
    fn bytes_and_messages_accounted() {
        let mut sim = Simulator::new(SimConfig::default()).unwrap();
        let tasks = copy_tasks(&mut sim, 2, 2);
        sim.run_wave("w", tasks, WaveKind::Compute, TerminationRule::wait_all())
            .unwrap();
        let trace = sim.trace();
        for t in &trace.tasks {
            assert_eq!(t.messages, 2);
            assert_eq!(t.bytes_read, 32);
            assert_eq!(t.bytes_written, 32);
        }
        assert_eq!(trace.total_bytes(), 4 * 64);
        let c = sim.store().counters();
        assert_eq!(c.bytes_read + c.bytes_written, trace.total_bytes());
        assert_eq!(c.messages, 8);
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let mut sim = Simulator::new(SimConfig::with_seed(seed)).unwrap();
            let tasks = copy_tasks(&mut sim, 3, 7);
            sim.run_wave("w", tasks, WaveKind::Compute, TerminationRule::any(5, ShortfallMode::Strict))
                .unwrap();
            sim.take_trace()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: usize,
    pub wave_id: usize,
    pub group: usize,
    pub duration: f64,
    pub messages: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub flops: u64,
    /// Whether the wave waited for this task.
    pub counted: bool,
    pub pre_ignored: bool,
}

impl TaskRecord {
    pub fn entries_moved(&self) -> u64 {
        (self.bytes_read + self.bytes_written) / 8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSummary {
    pub wave_id: usize,
    pub label: String,
    pub tasks: usize,
    pub counted: usize,
    /// Virtual seconds from launch until the termination rule is met.
    pub compute_time: f64,
    pub invocation_overhead: f64,
}

impl WaveSummary {
    pub fn wall_clock(&self) -> f64 {
        self.compute_time + self.invocation_overhead
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub tasks: Vec<TaskRecord>,
    pub waves: Vec<WaveSummary>,
}

impl SimulationTrace {
    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty() && self.waves.is_empty()
    }

    pub fn tasks_in_wave(&self, wave_id: usize) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.iter().filter(move |t| t.wave_id == wave_id)
    }

    pub fn compute_time(&self) -> f64 {
        self.waves.iter().map(|w| w.compute_time).sum()
    }

    pub fn wall_clock(&self) -> f64 {
        self.waves.iter().map(WaveSummary::wall_clock).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.tasks
            .iter()
            .map(|t| t.bytes_read + t.bytes_written)
            .sum()
    }

    /// The trace restricted to waves whose id is at least `first_wave`.
    pub fn since(&self, first_wave: usize) -> SimulationTrace {
        SimulationTrace {
            tasks: self
                .tasks
                .iter()
                .filter(|t| t.wave_id >= first_wave)
                .cloned()
                .collect(),
            waves: self
                .waves
                .iter()
                .filter(|w| w.wave_id >= first_wave)
                .cloned()
                .collect(),
        }
    }

    /// One row per task.
    pub fn write_tasks_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        if self.tasks.is_empty() {
            writer.write_record([
                "task_id",
                "wave_id",
                "group",
                "duration",
                "messages",
                "bytes_read",
                "bytes_written",
                "flops",
                "counted",
                "pre_ignored",
            ])?;
        }
        for t in &self.tasks {
            writer.serialize(t)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Per-wave summary as a JSON array.
    pub fn write_waves_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.waves)?;
        Ok(())
    }
}

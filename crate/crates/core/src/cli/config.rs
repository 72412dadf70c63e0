use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::multiply::Scheme;
use crate::sim::{SimConfig, StragglerModel};
use crate::sketch::DropPolicy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!("unknown format {other:?}; use csv or json"))),
        }
    }
}

/// Input matrices for `multiply` and `error-sweep`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `A(x, y) = x + y` (1-based), `B = Aᵀ`; needs `l = m`.
    #[default]
    Rank2,
    /// Independent standard normal entries drawn from the seed.
    Gaussian,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank2" => Ok(Family::Rank2),
            "gaussian" => Ok(Family::Gaussian),
            other => Err(Error::invalid(format!("unknown family {other:?}; use rank2 or gaussian"))),
        }
    }
}

/// Shape family for `cost-compare`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostShapes {
    /// `m = n = l`, sketch of `N + e` sub-sketches of width `b`.
    #[default]
    Square,
    /// `m = n = l` with `z = n/2 + b`, the coded-baseline comparison.
    Coded,
}

impl FromStr for CostShapes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(CostShapes::Square),
            "coded" => Ok(CostShapes::Coded),
            other => Err(Error::invalid(format!("unknown shape family {other:?}; use square or coded"))),
        }
    }
}

pub fn parse_drop_policy(s: &str) -> Result<DropPolicy> {
    match s {
        "per-block" => Ok(DropPolicy::PerBlock),
        "whole-sketch" => Ok(DropPolicy::WholeSketch),
        other => Err(Error::invalid(format!("unknown drop policy {other:?}; use per-block or whole-sketch"))),
    }
}

/// Everything a command needs; a config plus the code version determines
/// the output bytes. Loaded from JSON with every field optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    /// Block size `b`.
    #[serde(alias = "b")]
    pub block: usize,
    /// Chunk width `a` for the naive and coded schemes; defaults to `block`.
    #[serde(alias = "a")]
    pub chunk: Option<usize>,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub e: usize,
    /// Keep going with fewer than `N` partials when more than `e` straggle.
    pub graceful: bool,
    pub ignore_sketch_stragglers: bool,
    pub drop_policy: DropPolicy,

    /// `error-sweep`: `e` runs over `e_min..=e_max` with `N + e` fixed.
    pub e_min: usize,
    pub e_max: usize,
    pub trials: usize,

    /// `cost-compare`: dimensions to evaluate.
    pub ns: Vec<usize>,
    pub shapes: CostShapes,

    /// `lp`: generated instance size, or a problem file.
    pub constraints: usize,
    pub variables: usize,
    pub problem: Option<PathBuf>,
    /// Sub-sketches per output block (`z / b`).
    pub sketch_count: usize,
    pub es: Vec<usize>,
    pub iterations: usize,
    pub tau0: f64,
    /// Also run with the exact Hessian.
    pub exact: bool,
    pub fresh_seeds: bool,

    /// `verify`: Monte Carlo trials per suite; suite defaults when absent.
    pub verify_trials: Option<usize>,
    /// Test hook: build every sketch with all signs `+1`.
    pub corrupt_signs: bool,

    pub straggler: StragglerModel,
    pub invocation_overhead: f64,
    pub cost: CostParams,
    /// Overrides `cost.memory`; `cost-compare` otherwise picks a default per
    /// shape family.
    pub memory: Option<u64>,
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub write_product: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Oversketch,
            family: Family::Rank2,
            m: 160,
            n: 960,
            l: 160,
            block: 16,
            chunk: None,
            n_keep: 26,
            e: 4,
            graceful: false,
            ignore_sketch_stragglers: false,
            drop_policy: DropPolicy::PerBlock,
            e_min: 0,
            e_max: 10,
            trials: 10,
            ns: Vec::new(),
            shapes: CostShapes::Square,
            constraints: 640,
            variables: 80,
            problem: None,
            sketch_count: 20,
            es: vec![0, 1, 2],
            iterations: 100,
            tau0: 1.0,
            exact: false,
            fresh_seeds: true,
            verify_trials: None,
            corrupt_signs: false,
            straggler: StragglerModel::default(),
            invocation_overhead: 9.0,
            cost: CostParams::default(),
            memory: None,
            seed: 0,
            out: PathBuf::from("results"),
            format: OutputFormat::Csv,
            write_product: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfiguration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| Error::InvalidConfiguration(format!("{}: {e}", path.display())))
    }

    pub fn chunk(&self) -> usize {
        self.chunk.unwrap_or(self.block)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            model: self.straggler,
            reduction_model: None,
            invocation_overhead: self.invocation_overhead,
            memory_budget: None,
        }
    }

    pub fn cost_params(&self) -> CostParams {
        match self.memory {
            Some(m) => self.cost.with_memory(m),
            None => self.cost,
        }
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        self.straggler.validate()?;
        self.cost_params().validate()?;
        if !(self.invocation_overhead >= 0.0 && self.invocation_overhead.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "invocation_overhead must be a non-negative number of seconds".into(),
            ));
        }
        Ok(())
    }
}

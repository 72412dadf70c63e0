//! Experiment runners behind the `oversketch` binary. Each runner writes its
//! tables under `cfg.out` and returns the paths plus a few summary lines;
//! output depends only on the config.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{
    measure_costs, predict_blocked, CostParams, predict_blocked_with, predict_coded, predict_naive, predict_naive_with,
    predict_oversketch, write_reports_csv, CostReport,
};
use crate::error::{Error, Result};
use crate::lp::{
    generate_lp, reference_optimum, solve_lp, HessianMode, IterationRecord, LpOptions, LpProblem, Schedule,
    SketchedHessian,
};
use crate::matrix::DenseMatrix;
use crate::multiply::{
    blocked_multiply, coded_naive_multiply, naive_multiply, oversketch_multiply, CodedStragglers,
    OverSketchOptions, Scheme,
};
use crate::seeding::rng_for;
use crate::sim::Simulator;
use crate::stats::{
    bilinear_moments, default_factory, frobenius_error, plus_sign_factory, random_pair, verify_lemma3,
    verify_rank_bound, verify_theorem2, AccuracyParams, SketchFactory, TrialConfig,
};

pub use config::{parse_drop_policy, CostShapes, ExperimentConfig, Family, OutputFormat};

/// Trials below this are flagged as too few for the statistical checks.
pub const MIN_VERIFY_TRIALS: usize = 1000;

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
    /// False only when a verification check failed.
    pub passed: bool,
}

impl RunSummary {
    fn new() -> Self {
        RunSummary {
            passed: true,
            ..Default::default()
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

/// `stem.csv` or `stem.json`. The CSV header comes from the row type, or
/// from `header` when there are no rows.
fn write_table<T: Serialize>(
    cfg: &ExperimentConfig,
    stem: &str,
    header: &[&str],
    rows: &[T],
) -> Result<PathBuf> {
    match cfg.format {
        OutputFormat::Csv => {
            let (path, w) = create(&cfg.out, &format!("{stem}.csv"))?;
            let mut wtr = csv::Writer::from_writer(w);
            if rows.is_empty() {
                wtr.write_record(header)?;
            }
            for r in rows {
                wtr.serialize(r)?;
            }
            wtr.flush()?;
            Ok(path)
        }
        OutputFormat::Json => {
            let (path, mut w) = create(&cfg.out, &format!("{stem}.json"))?;
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
            w.flush()?;
            Ok(path)
        }
    }
}

fn write_reports(cfg: &ExperimentConfig, stem: &str, reports: &[CostReport]) -> Result<PathBuf> {
    match cfg.format {
        OutputFormat::Csv => {
            let (path, mut w) = create(&cfg.out, &format!("{stem}.csv"))?;
            write_reports_csv(reports, &mut w)?;
            w.flush()?;
            Ok(path)
        }
        OutputFormat::Json => {
            let (path, mut w) = create(&cfg.out, &format!("{stem}.json"))?;
            serde_json::to_writer_pretty(&mut w, reports)?;
            writeln!(w)?;
            w.flush()?;
            Ok(path)
        }
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Naive => "naive",
        Scheme::Blocked => "blocked",
        Scheme::Oversketch => "oversketch",
        Scheme::CodedNaive => "coded-naive",
    }
}

/// `A` and `B` for the configured family.
pub fn input_matrices(cfg: &ExperimentConfig, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n, l) = (cfg.m, cfg.n, cfg.l);
    if m == 0 || n == 0 || l == 0 {
        return Err(Error::invalid("m, n and l must be positive"));
    }
    match cfg.family {
        Family::Rank2 => {
            if l != m {
                return Err(Error::invalid(format!(
                    "the rank2 family multiplies A by its transpose and needs l = m (got m = {m}, l = {l})"
                )));
            }
            let a = DenseMatrix::index_sum(m, n);
            let b = a.transpose();
            Ok((a, b))
        }
        Family::Gaussian => {
            let a = DenseMatrix::random_normal(m, n, &mut rng_for(seed, 0xa1));
            let b = DenseMatrix::random_normal(n, l, &mut rng_for(seed, 0xb1));
            Ok((a, b))
        }
    }
}

fn oversketch_options(cfg: &ExperimentConfig, n_keep: usize, e: usize, seed: u64) -> OverSketchOptions {
    let mut opts = OverSketchOptions::new(cfg.block, n_keep, e, seed)
        .ignoring_sketch_stragglers(cfg.ignore_sketch_stragglers)
        .with_drop_policy(cfg.drop_policy);
    if cfg.graceful {
        opts = opts.graceful();
    }
    opts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplyRow {
    pub scheme: String,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub block: usize,
    #[serde(rename = "N")]
    pub n_keep: Option<usize>,
    pub e: Option<usize>,
    pub seed: u64,
    pub workers: u64,
    pub compute_time: f64,
    pub wall_clock: f64,
    pub dollars: f64,
    pub predicted_dollars: Option<f64>,
    pub relative_error: Option<f64>,
    pub min_effective_d: Option<usize>,
}

/// One simulated run; shared by `multiply` and `error-sweep`.
struct MultiplyRun {
    row: MultiplyRow,
    product: DenseMatrix,
    sim: Simulator,
    predicted: Option<CostReport>,
}

fn multiply_once(
    cfg: &ExperimentConfig,
    a: &DenseMatrix,
    b: &DenseMatrix,
    oracle: Option<&DenseMatrix>,
    n_keep: usize,
    e: usize,
    seed: u64,
) -> Result<MultiplyRun> {
    let (m, n, l) = (a.rows(), a.cols(), b.cols());
    let params = cfg.cost_params();
    let mut sim = Simulator::new(cfg.sim_config(seed))?;
    let (product, block, keep, min_d, predicted) = match cfg.scheme {
        Scheme::Naive => {
            let out = naive_multiply(a, b, cfg.chunk(), &mut sim)?;
            (out.product, cfg.chunk(), None, None, predict_naive_with(m, n, l, cfg.chunk(), &params).ok())
        }
        Scheme::Blocked => {
            let out = blocked_multiply(a, b, cfg.block, &mut sim)?;
            (out.product, cfg.block, None, None, predict_blocked_with(m, n, l, cfg.block, &params).ok())
        }
        Scheme::Oversketch => {
            let out = oversketch_multiply(a, b, &oversketch_options(cfg, n_keep, e, seed), &mut sim)?;
            let min_d = out.min_effective_d();
            let pred = predict_oversketch(m, n, l, cfg.block, n_keep, e, &params).ok();
            (out.product, cfg.block, Some((n_keep, e)), Some(min_d), pred)
        }
        Scheme::CodedNaive => {
            let a_w = cfg.chunk();
            let out = coded_naive_multiply(a, b, a_w, &mut sim, &CodedStragglers::Simulated)?;
            let pred = crate::cost::predict_coded_with(m, n, l, a_w, &params).ok();
            (out.product, a_w, None, None, pred)
        }
    };
    let measured = measure_costs(sim.trace(), &params);
    let relative_error = match oracle {
        Some(c) => match frobenius_error(c, &product) {
            Ok(v) => Some(v),
            Err(Error::UndefinedRelativeError) => None,
            Err(err) => return Err(err),
        },
        None => None,
    };
    let row = MultiplyRow {
        scheme: scheme_name(cfg.scheme).into(),
        m,
        n,
        l,
        block,
        n_keep: keep.map(|k| k.0),
        e: keep.map(|k| k.1),
        seed,
        workers: measured.workers(),
        compute_time: sim.trace().compute_time(),
        wall_clock: sim.trace().wall_clock(),
        dollars: measured.dollars(),
        predicted_dollars: predicted.as_ref().map(|p| p.dollars()),
        relative_error,
        min_effective_d: min_d,
    };
    Ok(MultiplyRun {
        row,
        product,
        sim,
        predicted,
    })
}

const MULTIPLY_HEADER: [&str; 15] = [
    "scheme", "m", "n", "l", "block", "N", "e", "seed", "workers", "compute_time", "wall_clock", "dollars",
    "predicted_dollars", "relative_error", "min_effective_d",
];

/// Dense products above this many multiply-adds are not checked.
const ORACLE_LIMIT: usize = 4_000_000_000;

pub fn run_multiply(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (a, b) = input_matrices(cfg, cfg.seed)?;
    let oracle = if cfg.m * cfg.n * cfg.l <= ORACLE_LIMIT {
        Some(a.matmul(&b)?)
    } else {
        log::warn!("product too large for the dense check; relative_error left empty");
        None
    };
    let run = multiply_once(cfg, &a, &b, oracle.as_ref(), cfg.n_keep, cfg.e, cfg.seed)?;
    let mut summary = RunSummary::new();
    summary
        .files
        .push(write_table(cfg, "multiply", &MULTIPLY_HEADER, std::slice::from_ref(&run.row))?);

    let (path, mut w) = create(&cfg.out, "trace_tasks.csv")?;
    run.sim.trace().write_tasks_csv(&mut w)?;
    w.flush()?;
    summary.files.push(path);
    let (path, mut w) = create(&cfg.out, "trace_waves.json")?;
    run.sim.trace().write_waves_json(&mut w)?;
    w.flush()?;
    summary.files.push(path);

    let mut measured = measure_costs(run.sim.trace(), &cfg.cost_params());
    measured.scheme = format!("{}-measured", run.row.scheme);
    (measured.m, measured.n, measured.l, measured.block) = (run.row.m, run.row.n, run.row.l, run.row.block);
    let mut reports = vec![measured];
    if let Some(mut p) = run.predicted {
        p.scheme = format!("{}-predicted", run.row.scheme);
        reports.push(p);
    }
    summary.files.push(write_reports(cfg, "cost", &reports)?);

    if cfg.write_product {
        let (path, mut w) = create(&cfg.out, "product.csv")?;
        run.product.write_csv(&mut w)?;
        w.flush()?;
        summary.files.push(path);
    }
    let r = &run.row;
    summary.lines.push(format!(
        "{} {}x{}x{}: workers {}, compute {:.3} s, wall clock {:.3} s, ${:.6}",
        r.scheme, r.m, r.n, r.l, r.workers, r.compute_time, r.wall_clock, r.dollars
    ));
    if let Some(err) = r.relative_error {
        summary.lines.push(format!("relative error {err:.6e}"));
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub e: usize,
    #[serde(rename = "N")]
    pub n_keep: usize,
    pub trials: usize,
    pub mean_relative_error: f64,
    /// Sample standard deviation; empty for a single trial.
    pub std_relative_error: Option<f64>,
    pub min_relative_error: f64,
    pub max_relative_error: f64,
    pub mean_compute_time: f64,
    pub mean_wall_clock: f64,
}

const SWEEP_HEADER: [&str; 9] = [
    "e",
    "N",
    "trials",
    "mean_relative_error",
    "std_relative_error",
    "min_relative_error",
    "max_relative_error",
    "mean_compute_time",
    "mean_wall_clock",
];

/// Error of the simulated OverSketch product as `e` grows with `N + e`
/// fixed. Trial `t` uses seed `seed + t` for both the sketch and the
/// simulator, so the `e = 0` row of a one-trial sweep equals `multiply`
/// with the same seed and `N = N + e`, `e = 0`.
pub fn error_sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let count = cfg.n_keep + cfg.e;
    if cfg.e_min > cfg.e_max {
        return Err(Error::invalid("e_min must not exceed e_max"));
    }
    if cfg.e_max >= count {
        return Err(Error::invalid(format!(
            "e_max = {} leaves no sub-sketch of N + e = {count}",
            cfg.e_max
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if cfg.trials == 1 {
        log::warn!("a single trial per e gives no spread; std_relative_error is left empty");
    } else if cfg.trials < 10 {
        log::warn!("{} trials per e; at least 10 sketch seeds are recommended", cfg.trials);
    }
    let cfg = &ExperimentConfig {
        scheme: Scheme::Oversketch,
        ..cfg.clone()
    };
    let (a, b) = input_matrices(cfg, cfg.seed)?;
    let oracle = a.matmul(&b)?;
    let es: Vec<usize> = (cfg.e_min..=cfg.e_max).collect();
    let jobs: Vec<(usize, usize)> = es.iter().flat_map(|&e| (0..cfg.trials).map(move |t| (e, t))).collect();
    let rows: Vec<MultiplyRow> = jobs
        .par_iter()
        .map(|&(e, t)| {
            let seed = cfg.seed.wrapping_add(t as u64);
            multiply_once(cfg, &a, &b, Some(&oracle), count - e, e, seed).map(|r| r.row)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(es.len());
    for (i, &e) in es.iter().enumerate() {
        let runs = &rows[i * cfg.trials..(i + 1) * cfg.trials];
        let errs: Vec<f64> = runs
            .iter()
            .map(|r| r.relative_error.ok_or(Error::UndefinedRelativeError))
            .collect::<Result<_>>()?;
        let k = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / k;
        let std = (errs.len() > 1)
            .then(|| (errs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
        out.push(SweepRow {
            e,
            n_keep: count - e,
            trials: cfg.trials,
            mean_relative_error: mean,
            std_relative_error: std,
            min_relative_error: errs.iter().copied().fold(f64::INFINITY, f64::min),
            max_relative_error: errs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_compute_time: runs.iter().map(|r| r.compute_time).sum::<f64>() / k,
            mean_wall_clock: runs.iter().map(|r| r.wall_clock).sum::<f64>() / k,
        });
    }
    Ok(out)
}

pub fn run_error_sweep(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let out = error_sweep_rows(cfg)?;
    let mut summary = RunSummary::new();
    summary.files.push(write_table(cfg, "error_sweep", &SWEEP_HEADER, &out)?);
    for r in &out {
        summary.lines.push(format!(
            "e = {:2} (N = {:2}): mean relative error {:.6e}",
            r.e, r.n_keep, r.mean_relative_error
        ));
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub n: usize,
    pub scheme: String,
    pub block: Option<usize>,
    #[serde(rename = "N")]
    pub n_keep: Option<usize>,
    pub e: Option<usize>,
    pub workers: Option<u64>,
    pub t_worker: Option<f64>,
    pub c_total: Option<f64>,
    pub dollars: Option<f64>,
    pub feasible: bool,
}

const COST_HEADER: [&str; 10] =
    ["n", "scheme", "block", "N", "e", "workers", "t_worker", "c_total", "dollars", "feasible"];

fn cost_row(n: usize, scheme: &str, keep: Option<(usize, usize)>, report: Result<CostReport>) -> Result<CostRow> {
    match report {
        Ok(r) => Ok(CostRow {
            n,
            scheme: scheme.into(),
            block: Some(r.block),
            n_keep: keep.map(|k| k.0),
            e: keep.map(|k| k.1),
            workers: Some(r.workers()),
            t_worker: Some(r.t_worker()),
            c_total: Some(r.c_total()),
            dollars: Some(r.dollars()),
            feasible: true,
        }),
        Err(Error::InfeasibleMemory(msg)) => {
            log::warn!("{scheme} at n = {n}: {msg}");
            Ok(CostRow {
                n,
                scheme: scheme.into(),
                block: None,
                n_keep: keep.map(|k| k.0),
                e: keep.map(|k| k.1),
                workers: None,
                t_worker: None,
                c_total: None,
                dollars: None,
                feasible: false,
            })
        }
        Err(err) => Err(err),
    }
}

pub const SQUARE_NS: [usize; 5] = [1000, 2000, 4000, 8000, 16000];
pub const CODED_NS: [usize; 5] = [96, 128, 160, 192, 224];
/// Worker memory for the coded comparison, small enough that the coded
/// scheme is forced to narrow chunks.
/// `2 · 1000²`: the smallest default size fits in one block, so its naive
/// and blocked rows coincide.
pub const SQUARE_MEMORY: u64 = 2_000_000;
pub const CODED_MEMORY: u64 = 800;

/// Predicted cost per scheme over square problems `n × n × n`.
///
/// `square` compares naive, blocked and OverSketch (with the blocked
/// scheme's block size and `N + e` sub-sketches). `coded` compares the
/// product-coded naive scheme against OverSketch with `b = block` and
/// `z = n/2 + b`, i.e. `⌈(n/2 + b)/b⌉` sub-sketches of which
/// `min(e, count − 1)` may straggle.
pub fn run_cost_compare(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut params = cfg.cost_params();
    if cfg.memory.is_none() && cfg.cost.memory == CostParams::default().memory {
        params = params.with_memory(match cfg.shapes {
            CostShapes::Square => SQUARE_MEMORY,
            CostShapes::Coded => CODED_MEMORY,
        });
    }
    let ns: Vec<usize> = if cfg.ns.is_empty() {
        match cfg.shapes {
            CostShapes::Square => SQUARE_NS.to_vec(),
            CostShapes::Coded => CODED_NS.to_vec(),
        }
    } else {
        cfg.ns.clone()
    };
    if cfg.block == 0 || cfg.n_keep == 0 {
        return Err(Error::invalid("block size and N must be at least 1"));
    }
    let mut rows = Vec::new();
    for &n in &ns {
        match cfg.shapes {
            CostShapes::Square => {
                rows.push(cost_row(n, "naive", None, predict_naive(n, n, n, &params))?);
                let blocked = predict_blocked(n, n, n, &params);
                let b = blocked.as_ref().map(|r| r.block).unwrap_or(cfg.block);
                rows.push(cost_row(n, "blocked", None, blocked)?);
                let keep = (cfg.n_keep, cfg.e);
                rows.push(cost_row(n, "oversketch", Some(keep), predict_oversketch(n, n, n, b, cfg.n_keep, cfg.e, &params))?);
            }
            CostShapes::Coded => {
                rows.push(cost_row(n, "coded-naive", None, predict_coded(n, n, n, &params))?);
                let b = cfg.block;
                let count = (n / 2 + b).div_ceil(b);
                let e = cfg.e.min(count - 1);
                let keep = (count - e, e);
                rows.push(cost_row(n, "oversketch", Some(keep), predict_oversketch(n, n, n, b, count - e, e, &params))?);
            }
        }
    }
    let mut summary = RunSummary::new();
    summary.files.push(write_table(cfg, "cost_compare", &COST_HEADER, &rows)?);
    for r in &rows {
        summary.lines.push(match (r.workers, r.dollars) {
            (Some(w), Some(d)) => format!("n = {:6} {:12} workers {:>12} ${:.6}", r.n, r.scheme, w, d),
            _ => format!("n = {:6} {:12} infeasible", r.n, r.scheme),
        });
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpRow {
    pub hessian: String,
    pub e: Option<usize>,
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
    pub gap: f64,
    pub percent_error: f64,
}

const LP_HEADER: [&str; 14] = [
    "hessian",
    "e",
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

fn lp_rows(hessian: &str, e: Option<usize>, records: &[IterationRecord]) -> Vec<LpRow> {
    records
        .iter()
        .map(|r| LpRow {
            hessian: hessian.into(),
            e,
            iteration: r.iteration,
            tau: r.tau,
            objective: r.objective,
            barrier: r.barrier,
            decrement: r.decrement,
            step: r.step,
            hessian_compute_time: r.hessian_compute_time,
            hessian_wall_clock: r.hessian_wall_clock,
            cumulative_compute_time: r.cumulative_compute_time,
            cumulative_wall_clock: r.cumulative_wall_clock,
            gap: r.gap,
            percent_error: r.percent_error,
        })
        .collect()
}

/// Barrier method with a sketched Hessian for each `e` in `cfg.es`, and
/// optionally the exact Hessian. The gap is measured against a long exact
/// run from the same start.
pub fn run_lp(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (problem, start) = match &cfg.problem {
        Some(path) => {
            let f = File::open(path)
                .map_err(|e| Error::InvalidConfiguration(format!("cannot open {}: {e}", path.display())))?;
            (LpProblem::read_text(std::io::BufReader::new(f))?, None)
        }
        None => {
            let g = generate_lp(cfg.constraints, cfg.variables, cfg.seed)?;
            (g.problem, Some(g.start))
        }
    };
    let schedule = Schedule {
        iterations: cfg.iterations,
        tau0: cfg.tau0,
        ..Schedule::default()
    };
    let reference = if cfg.iterations == 0 {
        None
    } else {
        Some(reference_optimum(&problem, start.as_deref())?)
    };
    let mut runs: Vec<(String, Option<usize>, HessianMode)> = Vec::new();
    if cfg.exact {
        runs.push(("exact".into(), None, HessianMode::Exact));
    }
    for &e in &cfg.es {
        let mut h = SketchedHessian::with_total(cfg.block, cfg.sketch_count, e, cfg.seed)?;
        h.fresh_seeds = cfg.fresh_seeds;
        h.drop_policy = cfg.drop_policy;
        runs.push(("sketched".into(), Some(e), HessianMode::Sketched(h)));
    }
    let mut rows = Vec::new();
    let mut summary = RunSummary::new();
    let mut baseline = None;
    for (name, e, mode) in runs {
        let mut sim = Simulator::new(cfg.sim_config(cfg.seed))?;
        let opts = LpOptions {
            schedule,
            mode,
            reference,
        };
        let sol = solve_lp(&problem, start.as_deref(), &opts, &mut sim)?;
        let compute = sol.total_compute_time();
        let label = match e {
            Some(e) => format!("{name} e = {e}"),
            None => name.clone(),
        };
        let mut line = format!("{label}: objective {:.6}", sol.objective);
        if let Some(gap) = sol.final_gap() {
            line.push_str(&format!(", gap {gap:.6e}"));
        }
        line.push_str(&format!(", hessian compute {compute:.3} s"));
        if e == Some(0) {
            baseline = Some(compute);
        } else if let (Some(base), Some(_)) = (baseline, e) {
            if base > 0.0 {
                line.push_str(&format!(" ({:.1}% below e = 0)", 100.0 * (1.0 - compute / base)));
            }
        }
        summary.lines.push(line);
        rows.extend(lp_rows(&name, e, &sol.records));
    }
    summary.files.push(write_table(cfg, "lp", &LP_HEADER, &rows)?);
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub case: String,
    pub statistic: String,
    pub observed: f64,
    pub limit: f64,
    pub passed: bool,
}

const CHECK_HEADER: [&str; 6] = ["suite", "case", "statistic", "observed", "limit", "passed"];

fn check(suite: &str, case: String, statistic: &str, observed: f64, limit: f64, passed: bool) -> CheckRow {
    CheckRow {
        suite: suite.into(),
        case,
        statistic: statistic.into(),
        observed,
        limit,
        passed,
    }
}

fn moment_checks(rows: &mut Vec<CheckRow>, suite: &str, case: String, r: &crate::stats::MomentReport) {
    let scale = r.target.abs().max(1e-300);
    rows.push(check(
        suite,
        case.clone(),
        "bias",
        (r.mean - r.target).abs() / scale,
        4.0 * r.std_error / scale,
        r.bias_ok,
    ));
    rows.push(check(suite, case, "variance/bound", r.bound_ratio(), 1.05, r.variance_ok));
}

/// Monte Carlo checks of the sketch's accuracy guarantees. Each row is one
/// check; the run passes when every row does.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(t) = cfg.verify_trials {
        if t < 2 {
            return Err(Error::invalid("verify_trials must be at least 2"));
        }
        if t < MIN_VERIFY_TRIALS {
            log::warn!(
                "{t} trials per suite gives insufficient statistical power; checks may fail or pass by chance"
            );
        }
    }
    let trials = |default: usize| cfg.verify_trials.unwrap_or(default);
    let factory: &SketchFactory = if cfg.corrupt_signs {
        &plus_sign_factory
    } else {
        &default_factory
    };
    let seed = cfg.seed;
    let mut rows = Vec::new();

    let (x, y) = random_pair(20, seed);
    for b in [2, 4, 8, 16] {
        let r = bilinear_moments(&x, &y, b, 1, 0, trials(100_000), seed, factory)?;
        moment_checks(&mut rows, "lemma1", format!("n=20 b={b}"), &r);
    }

    let (x, y) = random_pair(40, seed);
    let mut variances = Vec::new();
    for n_keep in [1, 2, 4, 8] {
        let r = bilinear_moments(&x, &y, 4, n_keep, 0, trials(20_000), seed, factory)?;
        moment_checks(&mut rows, "lemma2", format!("n=40 b=4 N={n_keep}"), &r);
        variances.push((n_keep, r.variance));
    }
    for w in variances.windows(2) {
        let ratio = w[0].1 / w[1].1;
        rows.push(check(
            "lemma2",
            format!("N={} vs N={}", w[0].0, w[1].0),
            "variance ratio",
            ratio,
            2.0,
            (ratio / 2.0 - 1.0).abs() <= 0.15,
        ));
    }

    for (n_keep, e) in [(3, 1), (3, 2), (2, 4)] {
        let r = bilinear_moments(&x, &y, 4, n_keep, e, trials(20_000), seed, factory)?;
        moment_checks(&mut rows, "stragglers", format!("n=40 b=4 N={n_keep} e={e}"), &r);
    }

    let a = DenseMatrix::random_normal(8, 40, &mut rng_for(seed, 0x3a));
    let bm = DenseMatrix::random_normal(40, 8, &mut rng_for(seed, 0x3b));
    let lemma3 = verify_lemma3(
        &a,
        &bm,
        &TrialConfig {
            block: 4,
            n_keep: 4,
            e: 0,
            trials: trials(2000),
            seed,
        },
    )?;
    rows.push(check(
        "lemma3",
        "8x40x8 b=4 N=4".into(),
        "mean squared error/bound",
        lemma3.mean_sq_error / lemma3.bound,
        1.05,
        lemma3.passed,
    ));

    let accuracy = AccuracyParams::new(0.5, 0.5, 4)?;
    for e in [0, 1, 2] {
        let t2 = verify_theorem2(
            &a,
            &bm,
            &TrialConfig {
                block: 4,
                n_keep: accuracy.n_keep(),
                e,
                trials: trials(2000),
                seed,
            },
            0.5,
            0.5,
        )?;
        rows.push(check(
            "theorem2",
            format!("eps=0.5 theta=0.5 d={} e={e}", t2.d),
            "failure fraction",
            t2.failure_fraction,
            t2.threshold,
            t2.passed,
        ));
    }

    // rank-2 pair: A(x, y) = x + y and its transpose
    let a2 = DenseMatrix::index_sum(8, 40);
    let b2 = a2.transpose();
    let rb = verify_rank_bound(&a2, &b2, 2, &accuracy, 1, trials(2000), seed)?;
    rows.push(check(
        "rank",
        format!("rank=2 z={}", rb.z),
        "error quantile/bound",
        rb.quantile / rb.bound,
        1.1,
        rb.passed,
    ));

    let mut summary = RunSummary::new();
    summary.passed = rows.iter().all(|r| r.passed);
    summary.files.push(write_table(cfg, "verify", &CHECK_HEADER, &rows)?);
    for r in &rows {
        summary.lines.push(format!(
            "{} {:10} {:28} {:24} {:.4} (limit {:.4})",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.case,
            r.statistic,
            r.observed,
            r.limit
        ));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            m: 32,
            n: 64,
            l: 32,
            block: 8,
            n_keep: 4,
            e: 2,
            out: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_json(r#"{"N": 3, "b": 4, "scheme": "blocked"}"#).unwrap();
        assert_eq!((partial.n_keep, partial.block, partial.scheme), (3, 4, Scheme::Blocked));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rank2_family_needs_square_output() {
        let cfg = ExperimentConfig {
            l: 10,
            ..ExperimentConfig::default()
        };
        assert!(input_matrices(&cfg, 0).is_err());
    }

    #[test]
    fn multiply_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = run_multiply(&cfg).unwrap();
        assert!(dir.path().join("multiply.csv").exists());
        assert!(dir.path().join("trace_tasks.csv").exists());
        assert!(dir.path().join("cost.csv").exists());
        assert!(s.files.len() >= 4);
    }

    #[test]
    fn exact_schemes_have_tiny_error() {
        let dir = tempfile::tempdir().unwrap();
        for scheme in [Scheme::Naive, Scheme::Blocked, Scheme::CodedNaive] {
            let cfg = ExperimentConfig {
                scheme,
                family: Family::Gaussian,
                ..small(dir.path())
            };
            let (a, b) = input_matrices(&cfg, 0).unwrap();
            let oracle = a.matmul(&b).unwrap();
            let run = multiply_once(&cfg, &a, &b, Some(&oracle), 4, 2, 0).unwrap();
            assert!(run.row.relative_error.unwrap() < 1e-12, "{scheme:?}");
        }
    }

    #[test]
    fn sweep_rejects_e_beyond_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            e_max: 6,
            ..small(dir.path())
        };
        assert!(run_error_sweep(&cfg).is_err());
    }

    #[test]
    fn empty_lp_run_writes_header() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            iterations: 0,
            constraints: 40,
            variables: 8,
            block: 4,
            ..small(dir.path())
        };
        run_lp(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("lp.csv")).unwrap();
        assert_eq!(text.trim(), LP_HEADER.join(","));
    }

    #[test]
    fn coded_shapes_cover_every_n() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            shapes: CostShapes::Coded,
            ..small(dir.path())
        };
        run_cost_compare(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("cost_compare.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), COST_HEADER.join(","));
        assert_eq!(text.lines().count(), 1 + 2 * CODED_NS.len());
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oversketch::cli::{
    parse_drop_policy, run_cost_compare, run_error_sweep, run_lp, run_multiply, run_verify, CostShapes,
    ExperimentConfig, Family, OutputFormat, RunSummary,
};
use oversketch::multiply::Scheme;
use oversketch::sketch::DropPolicy;

/// Straggler-resilient sketched matrix multiplication on a simulated
/// serverless platform.
#[derive(Parser)]
#[command(name = "oversketch", version, about)]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One distributed multiplication with trace and cost tables.
    Multiply(MultiplyArgs),
    /// OverSketch error as the number of ignored stragglers grows.
    ErrorSweep(SweepArgs),
    /// Predicted cost of each scheme over a range of sizes.
    CostCompare(CostArgs),
    /// Barrier method for an LP with a sketched Hessian.
    Lp(LpArgs),
    /// Monte Carlo checks of the sketch's error guarantees.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct ShapeArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    /// rank2 or gaussian.
    #[arg(long)]
    family: Option<Family>,
}

#[derive(Args, Default)]
struct SketchArgs {
    /// Block size b.
    #[arg(long = "block", short = 'b', visible_alias = "b")]
    block: Option<usize>,
    /// Sub-sketches kept per output block.
    #[arg(long = "N")]
    n_keep: Option<usize>,
    /// Stragglers ignored per output block.
    #[arg(long)]
    e: Option<usize>,
    /// per-block or whole-sketch.
    #[arg(long, value_parser = parse_drop_policy)]
    drop_policy: Option<DropPolicy>,
}

#[derive(Args, Default)]
struct PlatformArgs {
    /// Median worker time in seconds.
    #[arg(long)]
    median: Option<f64>,
    /// Probability that a worker straggles.
    #[arg(long)]
    straggler_prob: Option<f64>,
    #[arg(long)]
    invocation_overhead: Option<f64>,
    /// Entries a worker may receive.
    #[arg(long)]
    memory: Option<u64>,
}

#[derive(Args)]
struct MultiplyArgs {
    /// naive, blocked, oversketch or coded-naive.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Chunk width a for the naive and coded schemes.
    #[arg(long = "chunk", short = 'a', visible_alias = "a")]
    chunk: Option<usize>,
    #[arg(long)]
    graceful: bool,
    #[arg(long)]
    ignore_sketch_stragglers: bool,
    /// Also write the computed product.
    #[arg(long)]
    write_product: bool,
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    sketch: SketchArgs,
    #[command(flatten)]
    platform: PlatformArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    e_min: Option<usize>,
    #[arg(long)]
    e_max: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    sketch: SketchArgs,
    #[command(flatten)]
    platform: PlatformArgs,
}

#[derive(Args)]
struct CostArgs {
    /// square or coded.
    #[arg(long)]
    shapes: Option<CostShapes>,
    /// Comma-separated sizes.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[command(flatten)]
    sketch: SketchArgs,
    #[command(flatten)]
    platform: PlatformArgs,
}

#[derive(Args)]
struct LpArgs {
    #[arg(long)]
    constraints: Option<usize>,
    #[arg(long)]
    variables: Option<usize>,
    /// Problem file: "n m", then A (n rows), b, c.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Comma-separated straggler counts.
    #[arg(long, value_delimiter = ',')]
    es: Option<Vec<usize>>,
    /// Sub-sketches per output block.
    #[arg(long)]
    sketch_count: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    tau0: Option<f64>,
    /// Also run with the exact Hessian.
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    sketch: SketchArgs,
    #[command(flatten)]
    platform: PlatformArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trials per suite; each suite has its own default.
    #[arg(long)]
    trials: Option<usize>,
    /// Build sketches with every sign +1 (the checks should then fail).
    #[arg(long)]
    corrupt_signs: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ShapeArgs {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.m, self.m);
        set(&mut cfg.n, self.n);
        set(&mut cfg.l, self.l);
        set(&mut cfg.family, self.family);
    }
}

impl SketchArgs {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.block, self.block);
        set(&mut cfg.n_keep, self.n_keep);
        set(&mut cfg.e, self.e);
        set(&mut cfg.drop_policy, self.drop_policy);
    }
}

impl PlatformArgs {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.straggler.median, self.median);
        set(&mut cfg.straggler.straggler_prob, self.straggler_prob);
        set(&mut cfg.invocation_overhead, self.invocation_overhead);
        if self.memory.is_some() {
            cfg.memory = self.memory;
        }
    }
}

type Runner = fn(&ExperimentConfig) -> oversketch::Result<RunSummary>;

fn resolve(cli: Cli) -> oversketch::Result<(ExperimentConfig, Runner, bool)> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.out, cli.out);
    set(&mut cfg.format, cli.format);
    set(&mut cfg.seed, cli.seed);
    let runner: Runner = match cli.command {
        Command::Multiply(a) => {
            set(&mut cfg.scheme, a.scheme);
            if a.chunk.is_some() {
                cfg.chunk = a.chunk;
            }
            cfg.graceful |= a.graceful;
            cfg.ignore_sketch_stragglers |= a.ignore_sketch_stragglers;
            cfg.write_product |= a.write_product;
            a.shape.apply(&mut cfg);
            a.sketch.apply(&mut cfg);
            a.platform.apply(&mut cfg);
            run_multiply
        }
        Command::ErrorSweep(a) => {
            set(&mut cfg.e_min, a.e_min);
            set(&mut cfg.e_max, a.e_max);
            set(&mut cfg.trials, a.trials);
            a.shape.apply(&mut cfg);
            a.sketch.apply(&mut cfg);
            a.platform.apply(&mut cfg);
            run_error_sweep
        }
        Command::CostCompare(a) => {
            set(&mut cfg.shapes, a.shapes);
            set(&mut cfg.ns, a.ns);
            a.sketch.apply(&mut cfg);
            a.platform.apply(&mut cfg);
            run_cost_compare
        }
        Command::Lp(a) => {
            set(&mut cfg.constraints, a.constraints);
            set(&mut cfg.variables, a.variables);
            if a.problem.is_some() {
                cfg.problem = a.problem;
            }
            set(&mut cfg.es, a.es);
            set(&mut cfg.sketch_count, a.sketch_count);
            set(&mut cfg.iterations, a.iterations);
            set(&mut cfg.tau0, a.tau0);
            cfg.exact |= a.exact;
            a.sketch.apply(&mut cfg);
            a.platform.apply(&mut cfg);
            run_lp
        }
        Command::Verify(a) => {
            if a.trials.is_some() {
                cfg.verify_trials = a.trials;
            }
            cfg.corrupt_signs |= a.corrupt_signs;
            run_verify
        }
    };
    Ok((cfg, runner, cli.print_config))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (cfg, runner, print_config) = match resolve(cli) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    if print_config {
        match serde_json::to_string_pretty(&cfg) {
            Ok(s) => {
                println!("{s}");
                return ExitCode::SUCCESS;
            }
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(1);
            }
        }
    }
    match runner(&cfg) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use smw::bench::{self, BenchConfig, BenchMode, BenchRecord};
use smw::io::{load_measure_auto, read_matrix_csv, save_measure, write_matrix_csv, Format};
use smw::measures::generate_gaussians;
use smw::rlreward::{
    composite_reward, multitask_rewards, RewardConfig, RewardScale, TrajectoryBatch,
};
use smw::slicing::{sample_directions, smw_squared, sw_squared};
use smw::solvers::{
    barycenter_solve, generate_corrupted_ellipses, mtde_fit, multitask_score,
    pairwise_barycenter_solve, SolveTrace, SolverConfig,
};
use smw::verify::{run_suite, SuiteConfig};
use smw::{Execution, MeasureSet, SimplexWeights, SmwError};

#[derive(Parser)]
#[command(
    name = "smw",
    version,
    about = "Sliced multi-marginal Wasserstein distances and solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate SMW² (or SW² with --pairwise) between measure files.
    Dist(DistArgs),
    /// Free-support barycenter of the given measures.
    Bary(BaryArgs),
    /// Multi-task density estimation.
    Mtde(MtdeArgs),
    /// Multi-task rewards for a batch of agent trajectories.
    Reward(RewardArgs),
    /// Run the self-certification suite.
    Verify(VerifyArgs),
    /// Timing and variance sweeps, as CSV.
    Bench(BenchArgs),
    /// Write synthetic measures to disk.
    Gen(GenArgs),
}

#[derive(Args)]
struct DistArgs {
    #[arg(long, num_args = 1.., required = true)]
    measures: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    projections: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform` or comma-separated weights summing to 1.
    #[arg(long, default_value = "uniform")]
    weights: String,
    /// Two measures only; reports SW².
    #[arg(long)]
    pairwise: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    iters: Option<usize>,
    /// Step size.
    #[arg(long)]
    lr: Option<f64>,
    /// Directions per step.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    /// Keep the step size constant instead of cosine decay.
    #[arg(long)]
    constant_lr: bool,
    /// Where to write trace.jsonl and final_<p>.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl SolveArgs {
    fn apply(&self, mut config: SolverConfig) -> SolverConfig {
        config.iters = self.iters.unwrap_or(config.iters);
        config.step_size = self.lr.unwrap_or(config.step_size);
        config.k_per_step = self.k.unwrap_or(config.k_per_step);
        config.seed = self.seed;
        config.log_every = self.log_every;
        config.cosine_decay = !self.constant_lr;
        config
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaryObjective {
    Smw,
    Pairwise,
}

#[derive(Args)]
struct BaryArgs {
    #[arg(long, num_args = 1.., required = true)]
    measures: Vec<PathBuf>,
    /// Atoms of the barycenter; defaults to the atom count of the inputs.
    #[arg(long)]
    atoms: Option<usize>,
    #[arg(long, value_enum, default_value = "smw")]
    objective: BaryObjective,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct MtdeArgs {
    #[arg(long, num_args = 1.., required = true)]
    measures: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    gamma: f64,
    /// Atoms per learned measure; defaults to the atom count of the inputs.
    #[arg(long)]
    atoms: Option<usize>,
    /// Minibatch size; defaults to every atom.
    #[arg(long)]
    batch: Option<usize>,
    /// Reference measures, one per task, for the multi-task score.
    #[arg(long, num_args = 1..)]
    reference: Vec<PathBuf>,
    /// Directions of the score estimate.
    #[arg(long, default_value_t = 500)]
    score_k: usize,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Neg,
    Exp,
}

#[derive(Args)]
struct RewardArgs {
    /// One file per agent, T rows of d states.
    #[arg(long, num_args = 1.., required = true)]
    trajectories: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "neg")]
    scale: ScaleArg,
    /// Rate of the exponential scale.
    #[arg(long, default_value_t = RewardScale::DEFAULT_EXP_RATE)]
    rate: f64,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// P x T matrix of canonical rewards; zeros when omitted.
    #[arg(long)]
    canonical: Option<PathBuf>,
    /// Where to write multitask.csv and shaped.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 6)]
    max_n: usize,
    #[arg(long, default_value_t = 4)]
    max_p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the line-delimited report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Samples,
    Measures,
    Projections,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Comma-separated values; `2^k` is accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_grid_value, required = true)]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Timed runs per grid value (after one warm-up), or independent
    /// estimates per K in projections mode.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
    /// Use the sequential kernels.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum GenKind {
    /// Isotropic Gaussians with random means.
    Gaussians {
        #[arg(long, default_value_t = 3)]
        p: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 5.0)]
        spread: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Nested ellipses with a removed arc (corrupted_<p> and clean_<p>).
    Ellipses {
        #[arg(long, default_value_t = 20)]
        p: usize,
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 0.25)]
        removal: f64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// csv or bin.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Data(String),
    Failed,
}

impl From<SmwError> for Failure {
    fn from(e: SmwError) -> Self {
        match e {
            SmwError::InvalidWeights(_) | SmwError::InvalidArgument(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn parse_grid_value(s: &str) -> Result<usize, String> {
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let base: usize = base.parse().map_err(|_| format!("bad grid value {s:?}"))?;
        let exp: u32 = exp.parse().map_err(|_| format!("bad grid value {s:?}"))?;
        base.checked_pow(exp)
            .ok_or_else(|| format!("grid value {s:?} overflows"))
    } else {
        s.parse().map_err(|_| format!("bad grid value {s:?}"))
    }
}

fn parse_weights(spec: &str, p: usize) -> Result<SimplexWeights, Failure> {
    if spec == "uniform" {
        return Ok(SimplexWeights::uniform(p));
    }
    let beta = spec
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| {
            Failure::Usage(format!(
                "weights must be 'uniform' or numbers, got {spec:?}"
            ))
        })?;
    if beta.len() != p {
        return Err(Failure::Usage(format!(
            "{} weights for {p} measures",
            beta.len()
        )));
    }
    Ok(SimplexWeights::new(beta)?)
}

fn load_set(paths: &[PathBuf]) -> Result<MeasureSet, Failure> {
    let measures = paths
        .iter()
        .map(load_measure_auto)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureSet::new(measures)?)
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn cmd_dist(args: DistArgs) -> CmdResult {
    if args.projections == 0 {
        return Err(Failure::Usage("--projections must be at least 1".into()));
    }
    if args.pairwise && args.measures.len() != 2 {
        return Err(Failure::Usage(
            "--pairwise takes exactly two measures".into(),
        ));
    }
    let set = load_set(&args.measures)?;
    let beta = parse_weights(&args.weights, set.p_count())?;
    let proj = sample_directions(set.dim(), args.projections, args.seed)?;
    let est = if args.pairwise {
        sw_squared(set.get(0), set.get(1), &proj)?
    } else {
        smw_squared(&set, &beta, &proj)?
    };
    print_json(json!({
        "estimate": est.estimate,
        "std_error": est.std_error,
        "k": est.k_count,
        "p": set.p_count(),
        "n": set.n_atoms(),
        "d": set.dim(),
        "seed": args.seed,
    }));
    Ok(())
}

fn finish_solve(
    trace: &SolveTrace,
    out_dir: Option<&Path>,
    mut summary: serde_json::Value,
) -> CmdResult {
    if let Some(dir) = out_dir {
        trace.write_to(dir)?;
        summary["out_dir"] = json!(dir.display().to_string());
    }
    let (head, tail) = trace.head_tail_medians();
    summary["objective_head"] = json!(head);
    summary["objective_tail"] = json!(tail);
    summary["objective_last"] = json!(trace.objective_history.last());
    print_json(summary);
    Ok(())
}

fn cmd_bary(args: BaryArgs) -> CmdResult {
    let targets = load_set(&args.measures)?;
    let config = args.solve.apply(SolverConfig::barycenter_defaults());
    let atoms = args.atoms.unwrap_or(targets.n_atoms());
    let trace = match args.objective {
        BaryObjective::Smw => barycenter_solve(&targets, atoms, &config)?,
        BaryObjective::Pairwise => pairwise_barycenter_solve(&targets, atoms, &config)?,
    };
    let summary = json!({
        "p": targets.p_count(),
        "n": atoms,
        "d": targets.dim(),
        "iters": config.iters,
        "seed": config.seed,
    });
    finish_solve(&trace, args.solve.out_dir.as_deref(), summary)
}

fn cmd_mtde(args: MtdeArgs) -> CmdResult {
    let targets = load_set(&args.measures)?;
    let mut config = args.solve.apply(SolverConfig::mtde_defaults());
    config.batch = args.batch;
    let atoms = args.atoms.unwrap_or(targets.n_atoms());
    let trace = mtde_fit(&targets, atoms, args.gamma, &config)?;
    let mut summary = json!({
        "p": targets.p_count(),
        "n": atoms,
        "d": targets.dim(),
        "gamma": args.gamma,
        "iters": config.iters,
        "seed": config.seed,
    });
    if !args.reference.is_empty() {
        let reference = load_set(&args.reference)?;
        let proj = sample_directions(targets.dim(), args.score_k, args.solve.seed)?;
        summary["score"] = json!(multitask_score(&trace.final_measures, &reference, &proj)?);
    }
    finish_solve(&trace, args.solve.out_dir.as_deref(), summary)
}

fn cmd_reward(args: RewardArgs) -> CmdResult {
    if args.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let batch = TrajectoryBatch::load(&args.trajectories)?;
    let proj = sample_directions(batch.dim(), args.k, args.seed)?;
    let canonical = match &args.canonical {
        Some(path) => read_matrix_csv(path)?,
        None => vec![vec![0.0; batch.horizon()]; batch.p_count()],
    };
    let scale = match args.scale {
        ScaleArg::Neg => RewardScale::Neg,
        ScaleArg::Exp => RewardScale::Exp { rate: args.rate },
    };
    let multitask = multitask_rewards(&batch, &proj)?;
    let shaped = composite_reward(
        &batch,
        &canonical,
        &RewardConfig {
            gamma: args.gamma,
            scale,
            projections: proj.clone(),
        },
    )?;
    let set = MeasureSet::new(batch.agents().to_vec());
    let mut summary = json!({
        "p": batch.p_count(),
        "t": batch.horizon(),
        "d": batch.dim(),
        "k": args.k,
        "gamma": args.gamma,
        "seed": args.seed,
        "multitask_sum": multitask.iter().flatten().sum::<f64>(),
        "shaped_sum": shaped.iter().flatten().sum::<f64>(),
    });
    // a single agent is a valid batch but has no multi-marginal distance
    if let Ok(set) = set {
        summary["smw_squared"] =
            json!(smw_squared(&set, &SimplexWeights::uniform(set.p_count()), &proj)?.estimate);
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
        write_matrix_csv(dir.join("multitask.csv"), &multitask)?;
        write_matrix_csv(dir.join("shaped.csv"), &shaped)?;
        summary["out_dir"] = json!(dir.display().to_string());
    }
    print_json(summary);
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let report = run_suite(SuiteConfig {
        trials: args.trials,
        max_n: args.max_n,
        max_p: args.max_p,
        seed: args.seed,
    })?;
    let jsonl = report.to_jsonl();
    if let Some(path) = &args.report {
        fs::write(path, &jsonl).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    }
    print!("{jsonl}");
    eprintln!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let pool = match args.threads {
        Some(0) => return Err(Failure::Usage("--threads must be at least 1".into())),
        Some(t) => build_pool(t)?,
        None => None,
    };
    let config = BenchConfig {
        p_count: args.p,
        n_atoms: args.n,
        dim: args.d,
        k_count: args.k,
        repeats: args.repeats,
        seed: args.seed,
        exec: if args.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    let run = || -> CmdResult {
        match args.mode {
            ModeArg::Projections => {
                println!("{}", bench::VARIANCE_CSV_HEADER);
                for row in bench::variance_sweep(&args.grid, &config)? {
                    println!("{}", bench::variance_csv_row(&row));
                }
            }
            mode => {
                let mode = match mode {
                    ModeArg::Samples => BenchMode::Samples,
                    _ => BenchMode::Measures,
                };
                println!("{}", BenchRecord::CSV_HEADER);
                // one grid value at a time so rows appear as they finish
                for &v in &args.grid {
                    for r in bench::scaling_sweep(mode, &[v], &config)? {
                        println!("{}", r.csv_row());
                    }
                }
            }
        }
        Ok(())
    };
    run_in(pool, run)
}

#[cfg(feature = "parallel")]
type Pool = rayon::ThreadPool;
#[cfg(not(feature = "parallel"))]
type Pool = ();

#[cfg(feature = "parallel")]
fn build_pool(threads: usize) -> Result<Option<Pool>, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Failure::Data(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn build_pool(_threads: usize) -> Result<Option<Pool>, Failure> {
    Ok(None)
}

fn run_in(pool: Option<Pool>, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    match pool {
        #[cfg(feature = "parallel")]
        Some(pool) => pool.install(f),
        _ => f(),
    }
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let format: Format = args.format.parse()?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Binary => "bin",
    };
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.out_dir.display())))?;
    let mut written = Vec::new();
    let mut save = |name: String, m: &smw::DiscreteMeasure| -> CmdResult {
        let path = args.out_dir.join(format!("{name}.{ext}"));
        save_measure(m, &path, format)?;
        written.push(path.display().to_string());
        Ok(())
    };
    match args.kind {
        GenKind::Gaussians {
            p,
            n,
            d,
            spread,
            sigma,
        } => {
            let set = generate_gaussians(p, n, d, spread, sigma, args.seed)?;
            for (i, m) in set.iter().enumerate() {
                save(format!("gaussian_{i}"), m)?;
            }
        }
        GenKind::Ellipses { p, n, removal } => {
            let tasks = generate_corrupted_ellipses(p, n, removal, args.seed)?;
            for (i, (bad, good)) in tasks.corrupted.iter().zip(&tasks.clean).enumerate() {
                save(format!("corrupted_{i}"), bad)?;
                save(format!("clean_{i}"), good)?;
            }
        }
    }
    print_json(json!({ "files": written }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dist(a) => cmd_dist(a),
        Command::Bary(a) => cmd_bary(a),
        Command::Mtde(a) => cmd_mtde(a),
        Command::Reward(a) => cmd_reward(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Failed) => ExitCode::from(1),
    }
}

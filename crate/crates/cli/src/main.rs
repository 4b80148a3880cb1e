use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use hamlet::clock::{clock_instance, VerifierCircuit};
use hamlet::degree::compute_params;
use hamlet::instance::{densify, embed_csp, gen_random_dense, parse_dimacs, CspForm, Diagnostic};
use hamlet::operator::max_dim;
use hamlet::pipeline::{
    approximate, compare, iteration_model, oracle_extreme_eig, oracle_product, CompareReport, Extreme, OracleOptions,
    ParamMode, PipelineConfig, ORACLE_DENSE_CAP,
};
use hamlet::{Direction, Error, LocalHamiltonianInstance, SCHEMA_VERSION};

/// Approximation toolkit for dense MAX-k-local Hamiltonian instances.
#[derive(Parser)]
#[command(name = "hamlet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run the sample / linearize / solve pipeline on an instance.
    Solve(SolveArgs),
    /// Exact extreme eigenvalue and best product value of a small instance.
    Oracle(OracleArgs),
    /// Pipeline against the oracles, over a batch of seeds.
    Compare(CompareArgs),
    /// Check an instance file and list every violation.
    Validate { input: PathBuf },
}

#[derive(Subcommand)]
enum GenKind {
    /// One random PSD term with norm at most one per k-subset of sites.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Embed a DIMACS CNF formula as a diagonal instance.
    Csp {
        #[arg(long)]
        dimacs: PathBuf,
        /// Mark satisfying assignments instead of failing ones.
        #[arg(long)]
        reward: bool,
        /// Locality; defaults to the widest clause.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Append fresh sites joined by |0..0><0..0| terms.
    Densify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        extra: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Clock Hamiltonian of a verifier circuit.
    Clock {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Practical,
    Theory,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Max,
    Min,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Self {
        match d {
            Dir::Max => Direction::Maximize,
            Dir::Min => Direction::Minimize,
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value_t = Mode::Practical)]
    mode: Mode,
    /// Target additive error (theory mode).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 3)]
    sample_size: usize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    eps_prime: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_sdp: f64,
    #[arg(long, value_enum, default_value_t = Dir::Max)]
    direction: Dir,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    iteration_cap: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Fan-out cutoff of the estimator, as a fraction of n.
    #[arg(long)]
    cutoff: Option<f64>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let mode = match self.mode {
            Mode::Theory => ParamMode::Theory { eps: self.theory_eps()? },
            Mode::Practical => ParamMode::Practical {
                sample_size: self.sample_size,
                delta: self.delta,
                eps_prime: self.eps_prime,
                eps_sdp: self.eps_sdp,
            },
        };
        Ok(PipelineConfig {
            mode,
            direction: self.direction.into(),
            seed: self.seed,
            iteration_cap: self.iteration_cap,
            jobs: self.jobs,
            cutoff_fraction: self.cutoff,
        })
    }

    fn theory_eps(&self) -> Result<f64, CliError> {
        self.eps.ok_or_else(|| CliError::usage("--mode theory needs --eps"))
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file; optional with --dry-run.
    input: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Print the theory parameters and stop.
    #[arg(long)]
    dry_run: bool,
    /// Instance shape for --dry-run without an input file.
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Report file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-iteration table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Text dump of the best iteration's linearized program.
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Leave wall-clock fields at zero so reruns are byte-identical.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct OracleArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Dir::Max)]
    which: Dir,
    /// Also search for the best product assignment.
    #[arg(long)]
    product: bool,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    input: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Summary row as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    no_timings: bool,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Capacity { .. }) { 3 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::usage(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))
}

fn load_instance(path: &Path) -> CliResult<LocalHamiltonianInstance> {
    let inst = LocalHamiltonianInstance::from_json(&read(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(first) = inst.validate().first() {
        return Err(CliError::usage(format!("{}: {first}", path.display())));
    }
    Ok(inst)
}

fn dense_cap() -> usize {
    if std::env::var_os("HAMLET_MAX_DIM").is_some() {
        max_dim()
    } else {
        ORACLE_DENSE_CAP
    }
}

fn save_instance(inst: &LocalHamiltonianInstance, path: &Path) -> CliResult<()> {
    write(path, &inst.to_json()?)?;
    info!("wrote {} terms to {}", inst.terms().len(), path.display());
    Ok(())
}

fn cmd_gen(kind: GenKind) -> CliResult<()> {
    match kind {
        GenKind::Random { n, d, k, seed, output } => save_instance(&gen_random_dense(n, d, k, seed)?, &output),
        GenKind::Csp { dimacs, reward, k, output } => {
            let (n, clauses) =
                parse_dimacs(&read(&dimacs)?).map_err(|e| CliError::usage(format!("{}: {e}", dimacs.display())))?;
            let widest = clauses.iter().map(|c| c.vars().len()).max().unwrap_or(1);
            let form = if reward { CspForm::Reward } else { CspForm::Penalty };
            let emb = embed_csp(n, 2, k.unwrap_or(widest).max(1), &clauses, form)?;
            if emb.scale != 1.0 {
                eprintln!("clauses on a shared support were merged; instance scaled by 1/{}", emb.scale);
            }
            save_instance(&emb.instance, &output)
        }
        GenKind::Densify { input, extra, output } => save_instance(&densify(&load_instance(&input)?, extra)?, &output),
        GenKind::Clock { circuit, output } => {
            let c = VerifierCircuit::from_json(&read(&circuit)?)
                .map_err(|e| CliError::usage(format!("{}: {e}", circuit.display())))?;
            let emb = clock_instance(&c)?;
            eprintln!("clock instance scaled by 1/{} (spectrum of H = scale * spectrum of instance)", emb.scale);
            save_instance(&emb.instance, &output)
        }
    }
}

#[derive(Serialize)]
struct DryRun<T: Serialize> {
    schema_version: u32,
    params: T,
}

fn cmd_solve(args: SolveArgs) -> CliResult<u8> {
    let config = args.pipeline.config()?;
    if args.dry_run {
        let (n, d, k) = match &args.input {
            Some(p) => {
                let inst = load_instance(p)?;
                (inst.n(), inst.d(), inst.max_arity().max(1))
            }
            None => (args.n, args.d, args.k),
        };
        let eps = args.pipeline.theory_eps()?;
        let params = compute_params(eps, n, d, k)?;
        emit(args.output.as_deref(), &to_json(&DryRun { schema_version: SCHEMA_VERSION, params })?)?;
        return Ok(0);
    }
    let input = args.input.as_deref().ok_or_else(|| CliError::usage("solve needs an instance file"))?;
    let inst = load_instance(input)?;
    let mut report = approximate(&inst, &config)?;
    if args.no_timings {
        report = report.without_timings();
    }
    emit(args.output.as_deref(), &report.to_json()?)?;
    if let Some(p) = &args.csv {
        write(p, &report.to_csv())?;
    }
    if let Some(p) = &args.dump_model {
        let id = report.best_iter.unwrap_or(0);
        write(p, &iteration_model(&inst, &config, id)?.dump())?;
    }
    if report.best_iter.is_none() {
        eprintln!("no iteration produced a feasible program; the report has no assignment");
    }
    if report.partial {
        eprintln!(
            "stopped after {} of {} iterations (iteration cap)",
            report.iterations_run,
            report.planned_iterations.map_or("more than 2^64".to_string(), |p| p.to_string())
        );
        return Ok(2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct OracleReport {
    schema_version: u32,
    which: Extreme,
    eigenvalue: f64,
    dense_cap: usize,
    product_value: Option<f64>,
    product_assignment: Option<Vec<hamlet::pipeline::JsonMatrix>>,
}

fn cmd_oracle(args: OracleArgs) -> CliResult<()> {
    let inst = load_instance(&args.input)?;
    let which = match args.which {
        Dir::Max => Extreme::Max,
        Dir::Min => Extreme::Min,
    };
    let cap = dense_cap();
    let (eigenvalue, _) = oracle_extreme_eig(&inst, which, cap)?;
    let product =
        if args.product { Some(oracle_product(&inst, args.which.into(), args.restarts, args.seed)?) } else { None };
    let report = OracleReport {
        schema_version: SCHEMA_VERSION,
        which,
        eigenvalue,
        dense_cap: cap,
        product_value: product.as_ref().map(|p| p.value),
        product_assignment: product
            .as_ref()
            .map(|p| p.assignment.blocks().iter().map(|b| hamlet::pipeline::matrix_to_json(b.op().matrix())).collect()),
    };
    emit(args.output.as_deref(), &to_json(&report)?)
}

#[derive(Serialize, Default)]
struct Stats {
    count: usize,
    min: Option<f64>,
    mean: Option<f64>,
    max: Option<f64>,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Self::default();
        }
        Self {
            count: v.len(),
            min: v.iter().copied().reduce(f64::min),
            mean: Some(v.iter().sum::<f64>() / v.len() as f64),
            max: v.iter().copied().reduce(f64::max),
        }
    }

    fn csv(&self) -> String {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        format!("{},{},{},{}", self.count, f(self.min), f(self.mean), f(self.max))
    }
}

#[derive(Serialize)]
struct CompareSummary {
    seeds: u64,
    ratio_to_product: Stats,
    ratio_to_extreme: Stats,
    product_ratio_holds: usize,
    pipeline_within_product: usize,
}

#[derive(Serialize)]
struct CompareBatch {
    schema_version: u32,
    summary: CompareSummary,
    runs: Vec<CompareReport>,
}

fn cmd_compare(args: CompareArgs) -> CliResult<u8> {
    let inst = load_instance(&args.input)?;
    let base = args.pipeline.config()?;
    let oracle = OracleOptions { restarts: args.restarts, dense_cap: dense_cap() };
    let mut runs = Vec::new();
    for s in 0..args.seeds.max(1) {
        let config = PipelineConfig { seed: base.seed.wrapping_add(s), ..base.clone() };
        let mut r = compare(&inst, &config, &oracle)?;
        if args.no_timings {
            r.run = r.run.without_timings();
        }
        runs.push(r);
    }
    let partial = runs.iter().any(|r| r.run.partial);
    let summary = CompareSummary {
        seeds: runs.len() as u64,
        ratio_to_product: Stats::of(runs.iter().filter_map(|r| r.ratio_to_product)),
        ratio_to_extreme: Stats::of(runs.iter().filter_map(|r| r.ratio_to_extreme)),
        product_ratio_holds: runs.iter().filter(|r| r.product_ratio_holds == Some(true)).count(),
        pipeline_within_product: runs.iter().filter(|r| r.pipeline_within_product == Some(true)).count(),
    };
    if let Some(p) = &args.csv {
        let text = format!(
            "seeds,product_count,product_min,product_mean,product_max,extreme_count,extreme_min,extreme_mean,extreme_max,product_ratio_holds,pipeline_within_product\n{},{},{},{},{}\n",
            summary.seeds,
            summary.ratio_to_product.csv(),
            summary.ratio_to_extreme.csv(),
            summary.product_ratio_holds,
            summary.pipeline_within_product
        );
        write(p, &text)?;
    }
    let batch = CompareBatch { schema_version: SCHEMA_VERSION, summary, runs };
    emit(args.output.as_deref(), &to_json(&batch)?)?;
    Ok(if partial { 2 } else { 0 })
}

#[derive(Serialize)]
struct ValidateReport {
    schema_version: u32,
    valid: bool,
    n: usize,
    d: usize,
    k: usize,
    terms: usize,
    density_value: f64,
    diagnostics: Vec<Diagnostic>,
}

fn cmd_validate(input: &Path) -> CliResult<u8> {
    let inst = LocalHamiltonianInstance::from_json(&read(input)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?;
    let diagnostics = inst.validate();
    for d in &diagnostics {
        eprintln!("{}: {d}", input.display());
    }
    let report = ValidateReport {
        schema_version: SCHEMA_VERSION,
        valid: diagnostics.is_empty(),
        n: inst.n(),
        d: inst.d(),
        k: inst.k(),
        terms: inst.terms().len(),
        density_value: inst.density_value(),
        diagnostics,
    };
    emit(None, &to_json(&report)?)?;
    Ok(if report.valid { 0 } else { 1 })
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Gen { kind } => cmd_gen(kind).map(|_| 0),
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a).map(|_| 0),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate { input } => cmd_validate(&input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

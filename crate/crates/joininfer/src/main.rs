//! Command-line driver: `infer` runs the engine on a UAI network and writes
//! `.mar` marginals; `bench` times the product strategies on one model and
//! emits CSV.
//!
//! Exit codes: 0 success, 2 model error (parse failures, inconsistent
//! evidence or model), 3 resource error (index overflow, size guard,
//! timeout).

use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use joininfer::error::Error;
use joininfer::hyjar::Strategy;
use joininfer::join::OpCounters;
use joininfer::model::Pgm;
use joininfer::oracle::brute_force_marginals;
use joininfer::preprocess::{induce_sparsity, SparsityOptions};
use joininfer::propagation::{run_inference, RunOptions, RunStats, StrategyChoice};
use joininfer::uai::{parse_evidence, parse_uai, to_listing, write_marginals, Evidence};

#[derive(Parser)]
#[command(name = "joininfer", version, about = "Exact inference on discrete graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute all variable marginals of a UAI network.
    Infer(InferArgs),
    /// Time the product strategies on one network and print CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Joininfer,
    Brute,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Hyjar,
    Multiway,
    Multiway01,
    Pairwise,
}

impl StrategyArg {
    fn to_choice(self) -> StrategyChoice {
        match self {
            StrategyArg::Hyjar => StrategyChoice::Hyjar,
            StrategyArg::Multiway => StrategyChoice::Fixed(Strategy::Multiway),
            StrategyArg::Multiway01 => StrategyChoice::Fixed(Strategy::Multiway01),
            StrategyArg::Pairwise => StrategyChoice::Fixed(Strategy::Pairwise),
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Path to the `.uai` network.
    model: PathBuf,
    /// Optional `.uai.evid` evidence file.
    #[arg(long)]
    evidence: Option<PathBuf>,
    /// Thin factor tables to this sparsity before inference (0, 1].
    #[arg(long, value_name = "P")]
    induce_sparsity: Option<f64>,
    /// Seed for sparsity induction and randomized strategy choices;
    /// the JOININFER_SEED environment variable overrides this flag.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = EngineArg::Joininfer)]
    engine: EngineArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::Hyjar)]
    strategy: StrategyArg,
    /// Write decomposition stats and per-bag counters to stderr.
    #[arg(long)]
    stats: bool,
    /// Write stats to a file instead of stderr.
    #[arg(long, value_name = "FILE")]
    stats_out: Option<PathBuf>,
    /// Wall-clock limit in seconds, enforced cooperatively.
    #[arg(long, value_name = "SECS")]
    timeout: Option<f64>,
    /// Write marginals to a file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Discard 01-projections denser than this threshold.
    #[arg(long, default_value_t = 0.9, value_name = "X")]
    proj_density_threshold: f64,
    /// Domain-size threshold separating the timed and the randomized
    /// strategy selection.
    #[arg(long, default_value_t = 1e9, value_name = "X")]
    rho_threshold: f64,
    /// Trials per kernel during strategy selection (median wins).
    #[arg(long, default_value_t = 1, value_name = "K")]
    hyjar_trials: usize,
    /// Renormalize messages and track the scale in log space.
    #[arg(long)]
    normalize_messages: bool,
    /// Worker threads for per-level bag parallelism.
    #[arg(long, default_value_t = 1, value_name = "N")]
    threads: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated strategies to time.
    #[arg(long, value_delimiter = ',', default_value = "multiway,multiway01,pairwise,hyjar")]
    strategies: Vec<StrategyArg>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 1, value_name = "N")]
    threads: usize,
    /// Write the CSV to a file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Infer(args) => infer(args),
        Command::Bench(args) => bench(args),
    };
    std::process::exit(code);
}

fn exit_code(err: &Error) -> i32 {
    if err.is_resource_error() {
        3
    } else {
        2
    }
}

fn module_of(err: &Error) -> &'static str {
    match err {
        Error::DuplicateTuple(_)
        | Error::ValueOutOfRange { .. }
        | Error::NegativeProbability(_)
        | Error::KeepNotSubset
        | Error::EmptyIntersection
        | Error::ScopeMismatch { .. } => "model",
        Error::BadHeader(_) | Error::CountMismatch(_) | Error::DuplicateVariable(_) => "uai",
        Error::InconsistentEvidence { .. } | Error::Unsatisfiable(_) => "preprocess",
        Error::UncoverableVariable(_) | Error::LpInfeasible => "decomposition",
        Error::IndexOverflow | Error::InconsistentOrder | Error::UnsortedInput => "storage",
        Error::InconsistentModel => "propagation",
        Error::TooLarge(_) => "oracle",
        Error::Timeout => "runtime",
        Error::Invalid(_) => "model",
    }
}

fn fail(err: Error) -> i32 {
    eprintln!("error[{}]: {}", module_of(&err), err);
    exit_code(&err)
}

fn read_to_string(path: &PathBuf) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error[io]: cannot read {}: {e}", path.display());
        2
    })
}

fn load_model(args: &ModelArgs, seed: u64) -> Result<(Pgm, Evidence), i32> {
    let text = read_to_string(&args.model)?;
    let net = parse_uai(&text).map_err(fail_value)?;
    let mut pgm = to_listing(&net).map_err(fail_value)?;
    if let Some(target) = args.induce_sparsity {
        pgm = induce_sparsity(&pgm, target, seed, SparsityOptions::default())
            .map_err(fail_value)?;
    }
    let evidence = match &args.evidence {
        Some(path) => parse_evidence(&read_to_string(path)?).map_err(fail_value)?,
        None => Evidence::default(),
    };
    Ok((pgm, evidence))
}

fn fail_value(err: Error) -> i32 {
    fail(err)
}

fn effective_seed(flag: u64) -> u64 {
    std::env::var("JOININFER_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(flag)
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), i32> {
    match path {
        Some(file) => std::fs::write(file, content).map_err(|e| {
            eprintln!("error[io]: cannot write {}: {e}", file.display());
            2
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn infer(args: InferArgs) -> i32 {
    let seed = effective_seed(args.model.seed);
    let (pgm, evidence) = match load_model(&args.model, seed) {
        Ok(x) => x,
        Err(code) => return code,
    };

    let marginals;
    let mut stats_text = None;
    match args.engine {
        EngineArg::Brute => match brute_force_marginals(&pgm, &evidence) {
            Ok(result) => {
                if args.stats || args.stats_out.is_some() {
                    stats_text =
                        Some(format!("engine=brute\nlog_z={:.12e}\n", result.z.ln()));
                }
                marginals = result.var_marginals;
            }
            Err(err) => return fail(err),
        },
        EngineArg::Joininfer => {
            let opts = RunOptions {
                strategy: args.strategy.to_choice(),
                seed,
                proj_density_threshold: args.proj_density_threshold,
                rho_threshold: args.rho_threshold,
                hyjar_trials: args.hyjar_trials,
                normalize_messages: args.normalize_messages,
                threads: args.threads,
                timeout: args.timeout.map(Duration::from_secs_f64),
                ..Default::default()
            };
            match run_inference(&pgm, &evidence, &opts) {
                Ok(out) => {
                    if args.stats || args.stats_out.is_some() {
                        stats_text = Some(render_stats(&out.stats));
                    }
                    marginals = out.var_marginals;
                }
                Err(err) => return fail(err),
            }
        }
    }

    if let Some(text) = stats_text {
        match &args.stats_out {
            Some(path) => {
                if let Err(code) = write_output(&Some(path.clone()), &text) {
                    return code;
                }
            }
            None => eprint!("{text}"),
        }
    }
    match write_output(&args.out, &write_marginals(&marginals)) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

fn render_stats(stats: &RunStats) -> String {
    let mut out = String::new();
    out.push_str("engine=joininfer\n");
    out.push_str(&format!("reduced_vars={}\n", stats.reduced_vars));
    out.push_str(&format!("reduced_factors={}\n", stats.reduced_factors));
    out.push_str(&format!("fixed_vars={}\n", stats.fixed_vars));
    out.push_str(&format!("tw={}\n", stats.tw));
    out.push_str(&format!("fhtw={:.6}\n", stats.fhtw));
    out.push_str("htw=unavailable\n");
    out.push_str(&format!("rho={:.6e}\n", stats.rho));
    out.push_str(&format!("r_j={:.6e}\n", stats.r_j));
    out.push_str(&format!("r_d={:.6e}\n", stats.r_d));
    out.push_str(&format!("log_z={:.12e}\n", stats.log_z));
    if !stats.bags.is_empty() {
        out.push_str("\nbag  size  domain_product  agm_log2  strategy    seeks  emits  backtracks  chi\n");
        for bag in &stats.bags {
            out.push_str(&format!(
                "{:<4} {:<5} {:<15.6e} {:<9.4} {:<11} {:<6} {:<6} {:<11} {:?}\n",
                bag.node,
                bag.chi.len(),
                bag.domain_product,
                bag.agm_log2,
                bag.strategy.to_string(),
                bag.counters.seek_count,
                bag.counters.emit_count,
                bag.counters.backtrack_count,
                bag.chi,
            ));
        }
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn bench(args: BenchArgs) -> i32 {
    let seed = effective_seed(args.model.seed);
    let (pgm, evidence) = match load_model(&args.model, seed) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let mut csv =
        String::from("strategy,repeats,mean_seconds,seeks,emits,backtracks,marginal_checksum\n");
    for strategy in &args.strategies {
        let opts = RunOptions {
            strategy: strategy.to_choice(),
            seed,
            threads: args.threads,
            ..Default::default()
        };
        let mut total = Duration::ZERO;
        let mut counters = OpCounters::default();
        let mut checksum = 0u64;
        for _ in 0..args.repeats.max(1) {
            let start = Instant::now();
            match run_inference(&pgm, &evidence, &opts) {
                Ok(out) => {
                    total += start.elapsed();
                    counters = OpCounters::default();
                    for bag in &out.stats.bags {
                        counters.merge(&bag.counters);
                    }
                    checksum = fnv1a(write_marginals(&out.var_marginals).as_bytes());
                }
                Err(err) => return fail(err),
            }
        }
        let name = match strategy {
            StrategyArg::Hyjar => "hyjar".to_string(),
            StrategyArg::Multiway => Strategy::Multiway.to_string(),
            StrategyArg::Multiway01 => Strategy::Multiway01.to_string(),
            StrategyArg::Pairwise => Strategy::Pairwise.to_string(),
        };
        csv.push_str(&format!(
            "{},{},{:.6},{},{},{},{:016x}\n",
            name,
            args.repeats.max(1),
            total.as_secs_f64() / args.repeats.max(1) as f64,
            counters.seek_count,
            counters.emit_count,
            counters.backtrack_count,
            checksum,
        ));
    }
    match write_output(&args.out, &csv) {
        Ok(()) => 0,
        Err(code) => code,
    }
}

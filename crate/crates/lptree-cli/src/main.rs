//! Command-line front end for the `lptree` library: learn trees from choice
//! samples, answer rank/compare/optimum queries, evaluate trees exactly,
//! generate seeded synthetic targets and samples, compute sample-size bounds,
//! and drive learning-curve experiments.
//!
//! Exit codes: 0 on success, 2 for usage and input problems, 1 when a
//! resource guard refuses a brute-force or exact-enumeration request.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lptree::decimal::decimal_string;
use lptree::learn::{learn_linear_multivariate_with, learn_linear_univariate_with, LearnError};
use lptree::metrics::{empirical_mean_rank, ranking_loss, MetricsError};
use lptree::oracle::{exhaustive_erm, OracleError};
use lptree::synth::{
    exact_distribution, learning_curve, random_tree, sample_bound, sample_from, write_curve_csv,
    DecreasingSpec, ExperimentConfig, SynthError, TreeClass, PRNG_ALGORITHM, TRIAL_SEED_SCHEME,
};
use lptree::{
    BigRational, LPTree, Parallelism, Sample, SampleError, Schema, SchemaError, ScoreVariant,
    TreeError,
};

#[derive(Parser)]
#[command(
    name = "lptree",
    version,
    about = "Learn, query and evaluate lexicographic preference trees"
)]
struct Cli {
    /// Worker threads for parallel scans (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a tree to a sample and report its empirical mean rank.
    Learn(LearnArgs),
    /// Rank of one alternative under a tree (1 = most preferred).
    Rank(QueryArgs),
    /// Which of two alternatives a tree prefers.
    Compare(CompareArgs),
    /// The tree's most preferred alternative.
    Optimal(TreeOnlyArgs),
    /// Evaluate a tree against a sample, or against a target tree under a
    /// decreasing law.
    Eval(EvalArgs),
    /// Generate a seeded random target tree and, optionally, a sample drawn
    /// from it.
    Gen(GenArgs),
    /// Sufficient sample size for the learner's probabilistic guarantee.
    Bound(BoundArgs),
    /// Learning curves over a synthetic target: a sizes-by-trials CSV.
    Experiment(ExperimentArgs),
    /// Exhaustive minimum over the candidate class (small domains only).
    Oracle(OracleArgs),
}

/// Candidate class selector: `lin1` is the chain class, `link` allows nodes
/// with up to `--k` attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Lin1,
    Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Shifted,
    Unshifted,
}

impl From<VariantArg> for ScoreVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Shifted => ScoreVariant::Shifted,
            VariantArg::Unshifted => ScoreVariant::Unshifted,
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Attribute schema (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Observed choices (CSV, optional `__count` column).
    #[arg(long)]
    sample: PathBuf,
    #[arg(long, value_enum)]
    class: ClassArg,
    /// Node size bound; required for `link`, fixed at 1 for `lin1`.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = VariantArg::Shifted)]
    score_variant: VariantArg,
    /// Where to write the learned tree (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Tree file (JSON, schema embedded).
    #[arg(long)]
    tree: PathBuf,
    /// Alternative as `attr=value,...`, every attribute assigned once.
    alternative: String,
}

#[derive(Args)]
struct CompareArgs {
    /// Tree file (JSON, schema embedded).
    #[arg(long)]
    tree: PathBuf,
    /// First alternative, `attr=value,...`.
    first: String,
    /// Second alternative, `attr=value,...`.
    second: String,
}

#[derive(Args)]
struct TreeOnlyArgs {
    /// Tree file (JSON, schema embedded).
    #[arg(long)]
    tree: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Tree under evaluation (JSON).
    #[arg(long)]
    tree: PathBuf,
    /// Score the tree's mean rank on this sample (CSV).
    #[arg(long, conflicts_with_all = ["target", "dist"])]
    sample: Option<PathBuf>,
    /// Score ranking loss against this target tree (JSON); needs --dist.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Law over the target order: `geometric:<theta>`, `linear` or `uniform`.
    #[arg(long)]
    dist: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    /// Attribute schema (JSON).
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_enum)]
    class: ClassArg,
    /// Node size bound; required for `link`, fixed at 1 for `lin1`.
    #[arg(long)]
    k: Option<usize>,
    /// Seed for the target tree.
    #[arg(long)]
    seed: u64,
    /// Where to write the target tree (JSON).
    #[arg(long)]
    out_tree: PathBuf,
    /// Law for drawing the sample: `geometric:<theta>`, `linear` or `uniform`.
    #[arg(long)]
    dist: Option<String>,
    /// Number of draws.
    #[arg(long)]
    size: Option<u64>,
    /// Where to write the drawn sample (CSV); needs --dist and --size.
    #[arg(long)]
    out_sample: Option<PathBuf>,
    /// Seed for the draws (default: the tree seed).
    #[arg(long)]
    sample_seed: Option<u64>,
}

#[derive(Args)]
struct BoundArgs {
    /// Number of attributes.
    #[arg(long)]
    n: u64,
    /// Largest domain size.
    #[arg(long)]
    d: u64,
    /// Node size bound.
    #[arg(long)]
    k: u32,
    /// Branch length cap (default: 1 group).
    #[arg(long, default_value_t = 1)]
    l: u64,
    /// Ranking-loss tolerance, in (0, 1).
    #[arg(long)]
    eps: f64,
    /// Failure probability, in (0, 1).
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Attribute schema (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Target class to draw from.
    #[arg(long, value_enum)]
    class: ClassArg,
    /// Node size bound of the target; required for `link`.
    #[arg(long)]
    k: Option<usize>,
    /// Seed for the target tree.
    #[arg(long)]
    tree_seed: u64,
    /// Law over the target order: `geometric:<theta>`, `linear` or `uniform`.
    #[arg(long)]
    dist: String,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long)]
    sizes: String,
    /// Trials per size.
    #[arg(long)]
    trials: u32,
    /// Master seed; each row's seed derives from it, the size and the trial.
    #[arg(long)]
    seed: u64,
    /// Run the bounded learner with this node cap (default: the chain learner).
    #[arg(long)]
    learner_k: Option<usize>,
    #[arg(long, value_enum, default_value_t = VariantArg::Shifted)]
    score_variant: VariantArg,
    /// Weight the full domain instead of drawing (the infinite-sample limit).
    #[arg(long)]
    exact: bool,
    /// Where to write the curve (CSV); a `.meta.json` sidecar pins the setup.
    #[arg(long)]
    out: PathBuf,
    /// Also write the target tree here (JSON).
    #[arg(long)]
    out_target: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Attribute schema (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Observed choices (CSV).
    #[arg(long)]
    sample: PathBuf,
    /// Node size bound of the candidate class.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Where to write the minimizing tree (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    /// Bad flags, unreadable files, malformed inputs: exit 2.
    Usage(String),
    /// A deliberate resource guard said no: exit 1.
    Guard(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Guard(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Guard(_) => 1,
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SampleError> for CliError {
    fn from(e: SampleError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::NodeDomainTooLarge => CliError::Guard(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::DomainTooLarge => CliError::Guard(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::DomainTooLarge { .. } | OracleError::TooManyTrees { .. } => {
                CliError::Guard(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::DomainTooLarge { .. } | SynthError::BoundOverflow => {
                CliError::Guard(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_schema(path: &Path) -> Result<Arc<Schema>, CliError> {
    Ok(Arc::new(Schema::from_json_slice(&read_file(path)?)?))
}

fn load_tree(path: &Path) -> Result<LPTree, CliError> {
    Ok(LPTree::from_json_slice(&read_file(path)?)?)
}

fn load_sample(path: &Path, schema: &Arc<Schema>) -> Result<Sample, CliError> {
    Ok(Sample::from_csv_reader(&read_file(path)?[..], schema)?)
}

/// Resolves `--class`/`--k` to the node size bound.
fn node_cap(class: ClassArg, k: Option<usize>) -> Result<usize, CliError> {
    match (class, k) {
        (ClassArg::Lin1, None) | (ClassArg::Lin1, Some(1)) => Ok(1),
        (ClassArg::Lin1, Some(k)) => {
            Err(CliError::Usage(format!("--class lin1 fixes --k at 1, got {k}")))
        }
        (ClassArg::Link, Some(k)) if k >= 1 => Ok(k),
        (ClassArg::Link, Some(_)) => Err(CliError::Usage("--k must be at least 1".into())),
        (ClassArg::Link, None) => Err(CliError::Usage("--class link requires --k".into())),
    }
}

fn parse_spec(text: &str) -> Result<DecreasingSpec, CliError> {
    Ok(text.parse::<DecreasingSpec>()?)
}

fn parse_sizes(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("invalid size `{}`", piece.trim())))
        })
        .collect()
}

/// `<decimal> (<numerator>/<denominator>)`, exact alongside readable.
fn rational_line(value: &BigRational) -> String {
    format!("{} ({}/{})", decimal_string(value, 12), value.numer(), value.denom())
}

fn execution_mode(threads: Option<usize>) -> Parallelism {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Parallelism::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Parallelism::Sequential
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = execution_mode(cli.threads);
    match run(cli.command, mode) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command, mode: Parallelism) -> Result<(), CliError> {
    match command {
        Command::Learn(args) => {
            let schema = load_schema(&args.schema)?;
            let sample = load_sample(&args.sample, &schema)?;
            let cap = node_cap(args.class, args.k)?;
            let variant = args.score_variant.into();
            let tree = if cap == 1 {
                learn_linear_univariate_with(&sample, variant, mode)?
            } else {
                learn_linear_multivariate_with(&sample, cap, variant, mode)?
            };
            let erank = empirical_mean_rank(&tree, &sample)?;
            if let Some(out) = &args.out {
                write_file(out, &tree.to_json_vec())?;
            }
            println!("erank {}", rational_line(&erank));
            Ok(())
        }
        Command::Rank(args) => {
            let tree = load_tree(&args.tree)?;
            let alt = tree.schema().parse_alternative(&args.alternative)?;
            println!("{}", tree.rank(&alt));
            Ok(())
        }
        Command::Compare(args) => {
            let tree = load_tree(&args.tree)?;
            let first = tree.schema().parse_alternative(&args.first)?;
            let second = tree.schema().parse_alternative(&args.second)?;
            let preferred = tree
                .compare(&first, &second)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            println!("{preferred}");
            Ok(())
        }
        Command::Optimal(args) => {
            let tree = load_tree(&args.tree)?;
            let best = tree.optimal();
            println!("{}", tree.schema().format_alternative(&best));
            Ok(())
        }
        Command::Eval(args) => {
            let tree = load_tree(&args.tree)?;
            match (&args.sample, &args.target, &args.dist) {
                (Some(sample), None, None) => {
                    let sample = load_sample(sample, tree.schema())?;
                    let erank = empirical_mean_rank(&tree, &sample)?;
                    println!("erank {}", rational_line(&erank));
                    Ok(())
                }
                (None, Some(target), Some(dist)) => {
                    let target = load_tree(target)?;
                    let spec = parse_spec(dist)?;
                    let p = exact_distribution(&target, &spec)?;
                    let loss = ranking_loss(&tree, &target, &p)?;
                    println!("rloss {}", rational_line(&loss));
                    Ok(())
                }
                _ => Err(CliError::Usage(
                    "pass either --sample, or --target with --dist".into(),
                )),
            }
        }
        Command::Gen(args) => {
            let schema = load_schema(&args.schema)?;
            let cap = node_cap(args.class, args.k)?;
            let class = if cap == 1 { TreeClass::Chain } else { TreeClass::Grouped(cap) };
            let tree = random_tree(&schema, class, args.seed)?;
            write_file(&args.out_tree, &tree.to_json_vec())?;
            match (&args.out_sample, &args.dist, &args.size) {
                (None, None, None) => Ok(()),
                (Some(out_sample), Some(dist), Some(size)) => {
                    let spec = parse_spec(dist)?;
                    let seed = args.sample_seed.unwrap_or(args.seed);
                    let sample = sample_from(&tree, &spec, *size, seed)?;
                    write_file(out_sample, &sample.to_csv_vec())
                }
                _ => Err(CliError::Usage(
                    "--out-sample, --dist and --size go together".into(),
                )),
            }
        }
        Command::Bound(args) => {
            let m = sample_bound(args.n, args.d, args.k, args.l, args.eps, args.delta)?;
            println!("{m}");
            Ok(())
        }
        Command::Experiment(args) => {
            let schema = load_schema(&args.schema)?;
            let cap = node_cap(args.class, args.k)?;
            let class = if cap == 1 { TreeClass::Chain } else { TreeClass::Grouped(cap) };
            let spec = parse_spec(&args.dist)?;
            let sizes = parse_sizes(&args.sizes)?;
            let config = ExperimentConfig {
                schema,
                class,
                tree_seed: args.tree_seed,
                spec: spec.clone(),
                sizes: sizes.clone(),
                trials: args.trials,
                seed: args.seed,
                learner_k: args.learner_k,
                variant: args.score_variant.into(),
                exact: args.exact,
            };
            let curve = learning_curve(&config, mode)?;
            let mut csv = Vec::new();
            write_curve_csv(&curve.rows, &mut csv)?;
            write_file(&args.out, &csv)?;
            if let Some(out_target) = &args.out_target {
                write_file(out_target, &curve.target.to_json_vec())?;
            }
            let meta = serde_json::json!({
                "prng": PRNG_ALGORITHM,
                "trial_seed_scheme": TRIAL_SEED_SCHEME,
                "schema": args.schema,
                "class": match class { TreeClass::Chain => "lin1", TreeClass::Grouped(_) => "link" },
                "k": args.k,
                "tree_seed": args.tree_seed,
                "dist": spec.to_string(),
                "sizes": sizes,
                "trials": args.trials,
                "seed": args.seed,
                "learner_k": args.learner_k,
                "score_variant": match args.score_variant {
                    VariantArg::Shifted => "shifted",
                    VariantArg::Unshifted => "unshifted",
                },
                "exact": args.exact,
            });
            let mut meta_bytes =
                serde_json::to_vec_pretty(&meta).expect("metadata serialization cannot fail");
            meta_bytes.push(b'\n');
            write_file(&args.out.with_extension("meta.json"), &meta_bytes)
        }
        Command::Oracle(args) => {
            let schema = load_schema(&args.schema)?;
            let sample = load_sample(&args.sample, &schema)?;
            let (tree, erank) = exhaustive_erm(&sample, args.k)?;
            if let Some(out) = &args.out {
                write_file(out, &tree.to_json_vec())?;
            }
            println!("erank {}", rational_line(&erank));
            Ok(())
        }
    }
}

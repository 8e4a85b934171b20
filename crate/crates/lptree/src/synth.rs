//! Synthetic workloads: seeded random targets, rank-decreasing sampling
//! distributions with exact integer weights, i.i.d. and full-support samplers,
//! a sufficient-sample-size bound, and the trial driver behind the `experiment`
//! command.
//!
//! Reproducibility contract: all randomness flows through ChaCha8 streams
//! seeded from explicit `u64`s, and per-trial seeds are derived with a fixed
//! splitmix64 chain, so any row of any experiment can be regenerated in
//! isolation on any platform and thread count.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use itertools::Itertools;
use num_bigint::{BigInt, BigUint, RandBigInt};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::decimal::decimal_string;
use crate::exec::{map_indexed, Parallelism};
use crate::learn::{
    learn_linear_multivariate_with, learn_linear_univariate_with, LearnError, ScoreVariant,
};
use crate::metrics::{empirical_mean_rank, ranking_loss, DiscreteDistribution, MetricsError};
use crate::model::{Children, LPTree, Node, PreferenceTable, TreeError};
use crate::schema::{Alternative, Sample, SampleError, Schema};

/// Largest domain the exact samplers will enumerate.
pub const MAX_EXACT_DOMAIN: u64 = 1_000_000;

/// PRNG behind every seeded routine in this module.
pub const PRNG_ALGORITHM: &str = "chacha8";

/// How per-trial seeds derive from the experiment seed; see [`trial_seed`].
pub const TRIAL_SEED_SCHEME: &str = "splitmix64(splitmix64(splitmix64(seed) ^ size) ^ trial)";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("node size bound must satisfy 1 <= k <= {n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("geometric parameter must be strictly between 0 and 1")]
    InvalidTheta,
    #[error("unrecognized distribution spec `{0}`, expected `geometric:<theta>`, `linear` or `uniform`")]
    BadSpec(String),
    #[error("domain has {count} alternatives, above the exact-sampling limit {limit}")]
    DomainTooLarge { count: BigUint, limit: u64 },
    #[error("sample size must be at least 1")]
    ZeroSize,
    #[error("sizes must be non-empty and strictly increasing")]
    BadSizes,
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("invalid bound parameter: {0}")]
    BadParams(String),
    #[error("sample bound does not fit in 64 bits")]
    BoundOverflow,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Shape class for random single-branch targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeClass {
    /// One attribute per node.
    Chain,
    /// Nodes hold up to the given number of attributes.
    Grouped(usize),
}

fn shuffled_table(
    schema: &Schema,
    vars: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<PreferenceTable, TreeError> {
    let mut order: Vec<Vec<u32>> = vars
        .iter()
        .map(|&v| (0..schema.domain_size(v) as u32).collect::<Vec<_>>())
        .multi_cartesian_product()
        .collect();
    order.shuffle(rng);
    PreferenceTable::new(schema, vars, order)
}

/// Draws a single-branch tree of the given class: a uniform-ish random capped
/// grouping of the attributes, random node order, random tables. Deterministic
/// in `seed`.
pub fn random_tree(schema: &Arc<Schema>, class: TreeClass, seed: u64) -> Result<LPTree, SynthError> {
    let n = schema.attr_count();
    let k = match class {
        TreeClass::Chain => 1,
        TreeClass::Grouped(k) => k,
    };
    if k == 0 || k > n {
        return Err(SynthError::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for attr in 0..n {
        let open: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.len() < k)
            .map(|(i, _)| i)
            .collect();
        let choice = rng.gen_range(0..=open.len());
        if choice == open.len() {
            parts.push(vec![attr]);
        } else {
            parts[open[choice]].push(attr);
        }
    }
    parts.shuffle(&mut rng);
    let tables = parts
        .into_iter()
        .map(|part| shuffled_table(schema, part, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LPTree::linear(Arc::clone(schema), tables)?)
}

/// Draws a general tree with random single/split children and node sizes up to
/// `max_node_size`. Meant for validation workloads over small schemas, where
/// splitting exercises the branch-sensitive code paths.
pub fn random_split_tree(
    schema: &Arc<Schema>,
    max_node_size: usize,
    seed: u64,
) -> Result<LPTree, SynthError> {
    let n = schema.attr_count();
    if max_node_size == 0 || max_node_size > n {
        return Err(SynthError::InvalidK { k: max_node_size, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = build_random_node(schema, (0..n).collect(), max_node_size, &mut rng)?;
    Ok(LPTree::new(Arc::clone(schema), root)?)
}

fn build_random_node(
    schema: &Schema,
    mut remaining: Vec<usize>,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Node, TreeError> {
    remaining.shuffle(rng);
    let size = rng.gen_range(1..=cap.min(remaining.len()));
    let mut vars: Vec<usize> = remaining.drain(..size).collect();
    vars.sort_unstable();
    let table = shuffled_table(schema, vars, rng)?;
    let children = if remaining.is_empty() {
        Children::Leaf
    } else if rng.gen_bool(0.5) {
        Children::Single(Box::new(build_random_node(schema, remaining, cap, rng)?))
    } else {
        let dom = table.domain_size();
        let mut children = Vec::with_capacity(dom);
        for _ in 0..dom {
            children.push(build_random_node(schema, remaining.clone(), cap, rng)?);
        }
        Children::Split(children)
    };
    Ok(Node::new(table, children))
}

/// Families of integer rank weights that never increase with rank, used to
/// induce sampling distributions favoring a target order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecreasingSpec {
    /// Weight proportional to `theta^(rank-1)`, `0 < theta < 1`; strictly
    /// decreasing.
    Geometric(BigRational),
    /// Weight `N - rank + 1`; strictly decreasing.
    Linear,
    /// Weight 1 for every rank.
    Uniform,
}

impl DecreasingSpec {
    pub fn geometric(theta: BigRational) -> Result<Self, SynthError> {
        if theta <= BigRational::zero() || theta >= BigRational::one() {
            return Err(SynthError::InvalidTheta);
        }
        Ok(DecreasingSpec::Geometric(theta))
    }

    /// Integer weight of the alternative at `rank` (1-based) among `total`.
    /// For `theta = a/b` the geometric weight is `a^(rank-1) * b^(total-rank)`,
    /// the common positive scaling of `theta^(rank-1)` by `b^(total-1)`.
    pub fn weight(&self, rank: u64, total: u64) -> BigUint {
        debug_assert!(rank >= 1 && rank <= total);
        match self {
            DecreasingSpec::Geometric(theta) => {
                let a = theta.numer().magnitude();
                let b = theta.denom().magnitude();
                a.pow((rank - 1) as u32) * b.pow((total - rank) as u32)
            }
            DecreasingSpec::Linear => BigUint::from(total - rank + 1),
            DecreasingSpec::Uniform => BigUint::one(),
        }
    }
}

impl fmt::Display for DecreasingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecreasingSpec::Geometric(theta) => {
                write!(f, "geometric:{}/{}", theta.numer(), theta.denom())
            }
            DecreasingSpec::Linear => write!(f, "linear"),
            DecreasingSpec::Uniform => write!(f, "uniform"),
        }
    }
}

fn parse_positive_rational(text: &str) -> Option<BigRational> {
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if !frac.chars().all(|c| c.is_ascii_digit()) || frac.is_empty() {
            return None;
        }
        let int: BigInt = if int.is_empty() { BigInt::zero() } else { int.parse().ok()? };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_val: BigInt = frac.parse().ok()?;
        return Some(BigRational::new(int * &scale + frac_val, scale));
    }
    let int: BigInt = text.trim().parse().ok()?;
    Some(BigRational::from_integer(int))
}

impl FromStr for DecreasingSpec {
    type Err = SynthError;

    /// Accepts `uniform`, `linear`, `geometric:<theta>` with theta a decimal
    /// (`0.9`) or a fraction (`9/10`).
    fn from_str(text: &str) -> Result<Self, SynthError> {
        match text.trim() {
            "uniform" => Ok(DecreasingSpec::Uniform),
            "linear" => Ok(DecreasingSpec::Linear),
            other => {
                if let Some(theta) = other.strip_prefix("geometric:") {
                    let theta = parse_positive_rational(theta.trim())
                        .ok_or_else(|| SynthError::BadSpec(text.to_owned()))?;
                    DecreasingSpec::geometric(theta)
                } else {
                    Err(SynthError::BadSpec(text.to_owned()))
                }
            }
        }
    }
}

/// All alternatives indexed by rank under `target` (position 0 = rank 1).
/// Requires an enumerable domain.
fn ranked_alternatives(target: &LPTree) -> Result<Vec<Alternative>, SynthError> {
    let schema = target.schema();
    let count = schema.domain_count();
    if count > BigUint::from(MAX_EXACT_DOMAIN) {
        return Err(SynthError::DomainTooLarge { count, limit: MAX_EXACT_DOMAIN });
    }
    let n = count.to_usize().expect("within the guard");
    let mut ranked: Vec<Option<Alternative>> = vec![None; n];
    for o in schema.alternatives() {
        let r = target.rank(&o).to_usize().expect("rank within the guard");
        ranked[r - 1] = Some(o);
    }
    Ok(ranked.into_iter().map(|o| o.expect("rank is a bijection")).collect())
}

/// The normalized distribution the spec induces over the whole domain of the
/// target's schema, decreasing along the target order.
pub fn exact_distribution(
    target: &LPTree,
    spec: &DecreasingSpec,
) -> Result<DiscreteDistribution, SynthError> {
    let ranked = ranked_alternatives(target)?;
    let total = ranked.len() as u64;
    let weights = ranked.into_iter().enumerate().map(|(i, alt)| {
        let w = spec.weight(i as u64 + 1, total);
        (alt, BigRational::from_integer(BigInt::from(w)))
    });
    Ok(DiscreteDistribution::from_weights(Arc::clone(target.schema()), weights)?)
}

/// The full-support sample whose multiplicities are the exact integer weights:
/// its empirical distribution equals [`exact_distribution`]. Stands in for the
/// infinite-sample limit in experiments.
pub fn exact_sample(target: &LPTree, spec: &DecreasingSpec) -> Result<Sample, SynthError> {
    let ranked = ranked_alternatives(target)?;
    let total = ranked.len() as u64;
    let rows = ranked
        .into_iter()
        .enumerate()
        .map(|(i, alt)| (alt, spec.weight(i as u64 + 1, total)));
    Ok(Sample::from_counts(Arc::clone(target.schema()), rows)?)
}

/// Draws `size` i.i.d. alternatives from the spec-induced distribution by
/// exact inverse-CDF sampling over big-integer cumulative weights.
/// Deterministic in `seed`.
pub fn sample_from(
    target: &LPTree,
    spec: &DecreasingSpec,
    size: u64,
    seed: u64,
) -> Result<Sample, SynthError> {
    if size == 0 {
        return Err(SynthError::ZeroSize);
    }
    let ranked = ranked_alternatives(target)?;
    let total = ranked.len() as u64;
    let mut cumulative = Vec::with_capacity(ranked.len());
    let mut running = BigUint::zero();
    for i in 0..ranked.len() {
        running += spec.weight(i as u64 + 1, total);
        cumulative.push(running.clone());
    }
    let grand_total = running;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; ranked.len()];
    for _ in 0..size {
        let x = rng.gen_biguint_below(&grand_total);
        let idx = cumulative.partition_point(|c| *c <= x);
        counts[idx] += 1;
    }
    let rows = ranked
        .into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(alt, c)| (alt, BigUint::from(c)));
    Ok(Sample::from_counts(Arc::clone(target.schema()), rows)?)
}

/// A sufficient sample size for the bounded-node-size learner to reach ranking
/// loss within `eps` of the class optimum with probability `1 - delta`, for
/// `n` attributes of domain size at most `d`, node sizes at most `k`, and
/// branch length at most `l` candidate-relevant groups per tree. Grows with
/// `ln` of the class size and quadratically in `d^k / eps`.
pub fn sample_bound(
    n: u64,
    d: u64,
    k: u32,
    l: u64,
    eps: f64,
    delta: f64,
) -> Result<u64, SynthError> {
    if n < 1 {
        return Err(SynthError::BadParams(format!("n must be >= 1, got {n}")));
    }
    if d < 2 {
        return Err(SynthError::BadParams(format!("d must be >= 2, got {d}")));
    }
    if k < 1 {
        return Err(SynthError::BadParams(format!("k must be >= 1, got {k}")));
    }
    if l < 1 {
        return Err(SynthError::BadParams(format!("l must be >= 1, got {l}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SynthError::BadParams(format!("eps must be in (0,1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SynthError::BadParams(format!("delta must be in (0,1), got {delta}")));
    }
    let dk = (d as f64).powi(k as i32);
    let spread = (l as f64) * dk * (dk + 1.0);
    let log_term = (k as f64) * ((d as f64).ln() + ((n + 1) as f64).ln()) + (1.0 / delta).ln();
    let raw = log_term * spread * spread / (2.0 * eps * eps);
    if !raw.is_finite() || raw >= 9.0e18 {
        return Err(SynthError::BoundOverflow);
    }
    Ok(raw.ceil() as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The seed for one trial, derived so every `(seed, size, trial)` triple maps
/// to an independent-looking stream and any row can be re-run alone.
pub fn trial_seed(seed: u64, size: u64, trial: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ size) ^ trial as u64)
}

/// Everything `learning_curve` needs. `sizes` must be strictly increasing;
/// `learner_k: None` runs the chain learner, `Some(k)` the bounded one;
/// `exact: true` replaces drawn samples with the full weighted support.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub schema: Arc<Schema>,
    pub class: TreeClass,
    pub tree_seed: u64,
    pub spec: DecreasingSpec,
    pub sizes: Vec<u64>,
    pub trials: u32,
    pub seed: u64,
    pub learner_k: Option<usize>,
    pub variant: ScoreVariant,
    pub exact: bool,
}

/// One learned-tree evaluation: the sample size and trial index it came from,
/// the seed that regenerates its sample, and exact quality numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRow {
    pub size: u64,
    pub trial: u32,
    pub erank: BigRational,
    pub rloss: BigRational,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LearningCurve {
    pub target: LPTree,
    pub rows: Vec<TrialRow>,
}

/// Runs the full grid `sizes x trials`: draw (or weight) a sample, learn, and
/// score against the target under the exact spec-induced distribution. Rows
/// come back sorted by `(size, trial)` whatever the execution mode.
pub fn learning_curve(config: &ExperimentConfig, mode: Parallelism) -> Result<LearningCurve, SynthError> {
    if config.sizes.is_empty() || !config.sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(SynthError::BadSizes);
    }
    if config.trials == 0 {
        return Err(SynthError::ZeroTrials);
    }
    let target = random_tree(&config.schema, config.class, config.tree_seed)?;
    let p = exact_distribution(&target, &config.spec)?;
    let jobs: Vec<(u64, u32)> = config
        .sizes
        .iter()
        .flat_map(|&size| (0..config.trials).map(move |trial| (size, trial)))
        .collect();
    let rows = map_indexed(mode, jobs, |(size, trial)| -> Result<TrialRow, SynthError> {
        let seed = trial_seed(config.seed, size, trial);
        let sample = if config.exact {
            exact_sample(&target, &config.spec)?
        } else {
            sample_from(&target, &config.spec, size, seed)?
        };
        let tree = match config.learner_k {
            None => learn_linear_univariate_with(&sample, config.variant, Parallelism::Sequential)?,
            Some(k) => {
                learn_linear_multivariate_with(&sample, k, config.variant, Parallelism::Sequential)?
            }
        };
        let erank = empirical_mean_rank(&tree, &sample)?;
        let rloss = ranking_loss(&tree, &target, &p)?;
        Ok(TrialRow { size, trial, erank, rloss, seed })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(LearningCurve { target, rows })
}

/// Writes rows as CSV: readable decimals plus exact numerator/denominator
/// columns, one row per trial, in the given order.
pub fn write_curve_csv(rows: &[TrialRow], writer: impl std::io::Write) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "size",
        "trial",
        "erank",
        "rloss",
        "seed",
        "erank_num",
        "erank_den",
        "rloss_num",
        "rloss_den",
    ])?;
    for row in rows {
        w.write_record([
            row.size.to_string(),
            row.trial.to_string(),
            decimal_string(&row.erank, 12),
            decimal_string(&row.rloss, 12),
            row.seed.to_string(),
            row.erank.numer().to_string(),
            row.erank.denom().to_string(),
            row.rloss.numer().to_string(),
            row.rloss.denom().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

//! Learners that fit single-branch trees to a sample by empirical-rank
//! minimization.
//!
//! The chain learner sorts attributes greedily by score; the bounded learner
//! additionally groups attributes into multi-attribute nodes of size at most
//! `k` by exhaustively scanning all such groupings. Both pick locally optimal
//! tables (instantiations by non-increasing count) and are exact-arithmetic
//! throughout, so results are deterministic regardless of execution mode.

use std::cmp::Ordering;
use std::collections::HashMap;

use itertools::Itertools;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::exec::{map_indexed, min_by_total_order, Parallelism};
use crate::metrics::{e_star, BestLocalOrder, MetricsError};
use crate::model::{LPTree, PreferenceTable, TreeError};
use crate::schema::{Sample, SampleError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("node size bound must satisfy 1 <= k <= {n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// How a local expectation is normalized into an attribute-set score.
///
/// `Shifted` scores the excess of the best expected local rank over 1, divided
/// by `|dom V| - 1`; `Unshifted` divides the raw expectation instead. The two
/// orders agree whenever all compared sets have equal domain sizes. `Shifted`
/// is the default: sorting by it minimizes the mean rank over all orderings of
/// fixed parts (a pairwise swap never improves), which `Unshifted` does not
/// guarantee when domain sizes differ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScoreVariant {
    #[default]
    Shifted,
    Unshifted,
}

/// An attribute-set score kept in unreduced integer form so comparisons are
/// exact cross-multiplications. The value is `num / (dom_minus_one * total)`.
#[derive(Debug, Clone)]
pub struct ScoreValue {
    num: BigUint,
    dom_minus_one: BigUint,
    total: BigUint,
}

impl ScoreValue {
    pub fn from_best_local(best: &BestLocalOrder, variant: ScoreVariant) -> Self {
        let num = match variant {
            ScoreVariant::Shifted => &best.weighted_rank_sum - &best.total,
            ScoreVariant::Unshifted => best.weighted_rank_sum.clone(),
        };
        ScoreValue {
            num,
            dom_minus_one: BigUint::from(best.ordering.len() - 1),
            total: best.total.clone(),
        }
    }

    pub fn value(&self) -> BigRational {
        BigRational::new(
            self.num.clone().into(),
            (&self.dom_minus_one * &self.total).into(),
        )
    }
}

impl PartialEq for ScoreValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScoreValue {}

impl PartialOrd for ScoreValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = &self.num * &other.dom_minus_one * &other.total;
        let rhs = &other.num * &self.dom_minus_one * &self.total;
        lhs.cmp(&rhs)
    }
}

/// Scores an attribute set against a sample: the best achievable expected
/// local rank, normalized per `variant`. Lower is more important.
pub fn score(sample: &Sample, vars: &[usize], variant: ScoreVariant) -> Result<ScoreValue, LearnError> {
    let counts = sample.marginal_counts(vars)?;
    let best = e_star(sample.schema(), vars, &counts)?;
    Ok(ScoreValue::from_best_local(&best, variant))
}

/// Fits a single-branch tree with one attribute per node: attributes sorted by
/// non-decreasing score (ties toward lower attribute index), tables locally
/// optimal.
pub fn learn_linear_univariate(sample: &Sample) -> Result<LPTree, LearnError> {
    learn_linear_univariate_with(sample, ScoreVariant::default(), Parallelism::default())
}

pub fn learn_linear_univariate_with(
    sample: &Sample,
    variant: ScoreVariant,
    mode: Parallelism,
) -> Result<LPTree, LearnError> {
    let schema = sample.schema();
    let counts = sample.value_counts();
    let stats = map_indexed(mode, counts.into_iter().enumerate().collect(), |(attr, cnt)| {
        let map = cnt
            .into_iter()
            .enumerate()
            .map(|(v, c)| (vec![v as u32], c))
            .collect();
        let best = e_star(schema, &[attr], &map).expect("per-attribute counts are well formed");
        let sv = ScoreValue::from_best_local(&best, variant);
        (attr, sv, best)
    });
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[a].1.cmp(&stats[b].1).then(a.cmp(&b)));
    let tables = order
        .into_iter()
        .map(|i| PreferenceTable::new(schema, vec![stats[i].0], stats[i].2.ordering.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LPTree::linear(std::sync::Arc::clone(schema), tables)?)
}

/// A grouping of `0..n` into disjoint non-empty parts; parts are ordered by
/// least element and each part lists its attributes in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KPartition {
    pub parts: Vec<Vec<usize>>,
}

/// Streams every partition of `0..n` whose parts have at most `k` elements, in
/// lexicographic order of the restricted-growth encoding (part index per
/// element). The first partition groups consecutive attributes `k` at a time;
/// the last is all singletons.
pub fn enumerate_k_partitions(n: usize, k: usize) -> Result<KPartitions, LearnError> {
    if n == 0 || k == 0 || k > n {
        return Err(LearnError::InvalidK { k, n });
    }
    Ok(KPartitions::new(n, k))
}

pub struct KPartitions {
    n: usize,
    k: usize,
    code: Vec<usize>,
    sizes: Vec<usize>,
    started: bool,
    done: bool,
}

impl KPartitions {
    fn new(n: usize, k: usize) -> Self {
        let mut code = vec![0; n];
        let mut sizes = vec![0; n + 1];
        for (i, c) in code.iter_mut().enumerate() {
            *c = i / k;
            sizes[i / k] += 1;
        }
        KPartitions { n, k, code, sizes, started: false, done: false }
    }

    fn current(&self) -> KPartition {
        let nparts = self.code.iter().max().map_or(0, |&m| m + 1);
        let mut parts = vec![Vec::new(); nparts];
        for (i, &c) in self.code.iter().enumerate() {
            parts[c].push(i);
        }
        KPartition { parts }
    }

    /// Smallest pick for every position from `i` on: the lowest open part.
    fn refill_suffix(&mut self, i: usize) {
        for j in i..self.n {
            let w = (0..self.n).find(|&w| self.sizes[w] < self.k).expect("an open part exists");
            self.code[j] = w;
            self.sizes[w] += 1;
        }
    }
}

impl Iterator for KPartitions {
    type Item = KPartition;

    fn next(&mut self) -> Option<KPartition> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        // Advance the restricted-growth code: from the right, bump a position
        // to the next open part index allowed by its prefix, then refill.
        let mut i = self.n;
        loop {
            if i == 1 {
                // Position 0 is pinned to part 0.
                self.done = true;
                return None;
            }
            i -= 1;
            let v = self.code[i];
            self.sizes[v] -= 1;
            let prefix_max = *self.code[..i].iter().max().expect("prefix is non-empty");
            if let Some(w) = (v + 1..=prefix_max + 1).find(|&w| self.sizes[w] < self.k) {
                self.code[i] = w;
                self.sizes[w] += 1;
                self.refill_suffix(i + 1);
                return Some(self.current());
            }
        }
    }
}

/// Fits the empirical-rank-minimizing tree among single-branch trees whose
/// nodes hold at most `k` attributes: scans every admissible grouping, orders
/// each one by score, and keeps the candidate with the smallest mean rank
/// (ties broken toward the earlier grouping in enumeration order).
pub fn learn_linear_multivariate(sample: &Sample, k: usize) -> Result<LPTree, LearnError> {
    learn_linear_multivariate_with(sample, k, ScoreVariant::default(), Parallelism::default())
}

struct PartStat {
    ordering: Vec<Vec<u32>>,
    weighted_rank_sum: BigUint,
    dom: usize,
    score: ScoreValue,
}

pub fn learn_linear_multivariate_with(
    sample: &Sample,
    k: usize,
    variant: ScoreVariant,
    mode: Parallelism,
) -> Result<LPTree, LearnError> {
    let schema = sample.schema();
    let n = schema.attr_count();
    if k == 0 || k > n {
        return Err(LearnError::InvalidK { k, n });
    }
    // Local statistics for every attribute set that can label a node.
    let subsets: Vec<Vec<usize>> =
        (1..=k).flat_map(|size| (0..n).combinations(size)).collect();
    let stats: Vec<Result<PartStat, LearnError>> = map_indexed(mode, subsets.clone(), |vars| {
        let counts = sample.marginal_counts(&vars)?;
        let best = e_star(schema, &vars, &counts)?;
        let score = ScoreValue::from_best_local(&best, variant);
        let dom = best.ordering.len();
        Ok(PartStat { ordering: best.ordering, weighted_rank_sum: best.weighted_rank_sum, dom, score })
    });
    let mut by_subset: HashMap<Vec<usize>, PartStat> = HashMap::with_capacity(subsets.len());
    for (vars, stat) in subsets.into_iter().zip(stats) {
        by_subset.insert(vars, stat?);
    }
    let total = sample.total();

    // Mean rank of a candidate over the common denominator `total`:
    // total + sum_i |dom below part i| * (weighted_rank_sum_i - total).
    // The additive constant is shared, so the sum alone is the sort key.
    let eval = |(idx, partition): (usize, KPartition)| {
        let mut parts = partition.parts;
        parts.sort_by(|a, b| {
            by_subset[a].score.cmp(&by_subset[b].score).then_with(|| a.cmp(b))
        });
        let mut below = BigUint::from(1u32);
        let mut key = BigUint::zero();
        for part in parts.iter().rev() {
            let stat = &by_subset[part];
            key += &below * (&stat.weighted_rank_sum - total);
            below *= BigUint::from(stat.dom);
        }
        (key, idx, parts)
    };
    let winner = min_by_total_order(
        mode,
        enumerate_k_partitions(n, k)?.enumerate(),
        eval,
        |a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)),
    )
    .expect("at least one partition exists");

    let tables = winner
        .2
        .into_iter()
        .map(|part| {
            let ordering = by_subset[&part].ordering.clone();
            PreferenceTable::new(schema, part, ordering)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LPTree::linear(std::sync::Arc::clone(schema), tables)?)
}

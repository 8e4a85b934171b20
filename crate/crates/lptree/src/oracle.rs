//! Brute-force baselines for cross-checking the fast paths.
//!
//! Ranks here are produced by counting or sorting with pairwise `compare`
//! queries only — never through the arithmetic decomposition — so agreement
//! between this module and the rest of the crate is meaningful evidence.
//! Everything is guarded: these routines enumerate whole domains or whole
//! candidate classes and refuse inputs past fixed limits instead of hanging.

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::learn::{enumerate_k_partitions, LearnError};
use crate::model::{LPTree, Preferred, PreferenceTable, TreeError};
use crate::schema::{Alternative, Sample, Schema};

/// Largest domain the brute-force routines will enumerate.
pub const MAX_BRUTE_FORCE_DOMAIN: u64 = 1_000_000;

/// Largest candidate class the tree enumerator will stream.
pub const MAX_BRUTE_FORCE_TREES: u64 = 2_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("domain has {count} alternatives, above the brute-force limit {limit}")]
    DomainTooLarge { count: BigUint, limit: u64 },
    #[error("candidate class exceeds the enumeration limit {limit}")]
    TooManyTrees { limit: u64 },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

fn check_domain(schema: &Schema) -> Result<(), OracleError> {
    let count = schema.domain_count();
    if count > BigUint::from(MAX_BRUTE_FORCE_DOMAIN) {
        return Err(OracleError::DomainTooLarge { count, limit: MAX_BRUTE_FORCE_DOMAIN });
    }
    Ok(())
}

/// Rank by definition: one plus the number of alternatives strictly preferred
/// to `o`, found by comparing `o` against the entire domain.
pub fn naive_rank(tree: &LPTree, o: &Alternative) -> Result<BigUint, OracleError> {
    check_domain(tree.schema())?;
    let mut rank = BigUint::one();
    for other in tree.schema().alternatives() {
        if other == *o {
            continue;
        }
        if tree.compare(&other, o).expect("distinct alternatives compare") == Preferred::First {
            rank += BigUint::one();
        }
    }
    Ok(rank)
}

/// Number of single-branch trees with node sizes at most `k`: over every
/// admissible grouping, the orderings of its parts times the table choices per
/// part. Errs out early once the count passes the enumeration limit.
pub fn count_linear_trees(schema: &Arc<Schema>, k: usize) -> Result<BigUint, OracleError> {
    let n = schema.attr_count();
    let limit = BigUint::from(MAX_BRUTE_FORCE_TREES);
    let mut total = BigUint::zero();
    for partition in enumerate_k_partitions(n, k)? {
        let mut trees = factorial(partition.parts.len());
        for part in &partition.parts {
            let dom: usize = (&schema.domain_size_of(part))
                .try_into()
                .map_err(|_| OracleError::TooManyTrees { limit: MAX_BRUTE_FORCE_TREES })?;
            trees *= factorial(dom);
        }
        total += trees;
        if total > limit {
            return Err(OracleError::TooManyTrees { limit: MAX_BRUTE_FORCE_TREES });
        }
    }
    Ok(total)
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Streams every single-branch tree whose nodes hold at most `k` attributes:
/// all groupings, all orderings of their parts, all tables per node.
pub fn enumerate_linear_trees(
    schema: &Arc<Schema>,
    k: usize,
) -> Result<impl Iterator<Item = LPTree> + Send, OracleError> {
    count_linear_trees(schema, k)?;
    let n = schema.attr_count();
    let schema = Arc::clone(schema);
    let iter = enumerate_k_partitions(n, k)?
        .flat_map(|partition| {
            let m = partition.parts.len();
            partition.parts.into_iter().permutations(m)
        })
        .flat_map(move |ordered_parts| {
            let schema = Arc::clone(&schema);
            let axes: Vec<_> = ordered_parts
                .iter()
                .map(|part| {
                    let tuples: Vec<Vec<u32>> = part
                        .iter()
                        .map(|&v| (0..schema.domain_size(v) as u32).collect::<Vec<_>>())
                        .multi_cartesian_product()
                        .collect();
                    let len = tuples.len();
                    tuples.into_iter().permutations(len)
                })
                .collect();
            axes.into_iter().multi_cartesian_product().map(move |orders| {
                let tables = ordered_parts
                    .iter()
                    .zip(orders)
                    .map(|(part, order)| {
                        PreferenceTable::new(&schema, part.clone(), order)
                            .expect("enumerated tables are well formed")
                    })
                    .collect();
                LPTree::linear(Arc::clone(&schema), tables)
                    .expect("enumerated trees are well formed")
            })
        });
    Ok(iter)
}

/// The empirical-rank minimizer over the whole candidate class, found by
/// scoring every tree with compare-sorted ranks. Ties go to the earlier tree
/// in enumeration order. Returns the tree and its exact mean rank.
pub fn exhaustive_erm(sample: &Sample, k: usize) -> Result<(LPTree, BigRational), OracleError> {
    let schema = sample.schema();
    check_domain(schema)?;
    let alternatives: Vec<Alternative> = schema.alternatives().collect();
    let mut best: Option<(BigUint, LPTree)> = None;
    for tree in enumerate_linear_trees(schema, k)? {
        let mut order: Vec<usize> = (0..alternatives.len()).collect();
        order.sort_by(|&a, &b| {
            match tree
                .compare(&alternatives[a], &alternatives[b])
                .expect("distinct alternatives compare")
            {
                Preferred::First => std::cmp::Ordering::Less,
                Preferred::Second => std::cmp::Ordering::Greater,
            }
        });
        let mut rank_of: HashMap<&Alternative, u64> = HashMap::with_capacity(order.len());
        for (pos, &i) in order.iter().enumerate() {
            rank_of.insert(&alternatives[i], pos as u64 + 1);
        }
        let mut weighted = BigUint::zero();
        for (alt, count) in sample.rows() {
            weighted += BigUint::from(rank_of[alt]) * count;
        }
        let better = match &best {
            None => true,
            Some((incumbent, _)) => weighted < *incumbent,
        };
        if better {
            best = Some((weighted, tree));
        }
    }
    let (weighted, tree) = best.expect("the candidate class is never empty");
    let erank = BigRational::new(BigInt::from(weighted), BigInt::from(sample.total().clone()));
    Ok((tree, erank))
}

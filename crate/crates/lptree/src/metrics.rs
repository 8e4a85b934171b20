//! Exact evaluation of trees against weighted data: mean ranks, expected ranks
//! under a distribution, best-achievable local expectations, and ranking loss.
//!
//! Everything here is exact rational arithmetic; nothing is sampled or rounded.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::LPTree;
use crate::schema::{Alternative, Sample, Schema};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("operands were built against different schemas")]
    SchemaMismatch,
    #[error("no attributes given")]
    EmptyVars,
    #[error("attribute index {0} out of range")]
    VarOutOfRange(usize),
    #[error("attribute index {0} repeated")]
    DuplicateVar(usize),
    #[error("tuple does not fit the given attributes")]
    BadTuple,
    #[error("joint domain too large to enumerate")]
    DomainTooLarge,
    #[error("weights sum to zero")]
    ZeroTotal,
    #[error("negative weight")]
    NegativeWeight,
}

/// A probability distribution with exact rational weights over a finite set of
/// alternatives. Construction normalizes, so the support weights sum to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteDistribution {
    schema: Arc<Schema>,
    support: Vec<(Alternative, BigRational)>,
}

impl DiscreteDistribution {
    pub fn from_weights(
        schema: Arc<Schema>,
        weights: impl IntoIterator<Item = (Alternative, BigRational)>,
    ) -> Result<Self, MetricsError> {
        let mut agg: BTreeMap<Alternative, BigRational> = BTreeMap::new();
        for (alt, w) in weights {
            if schema.alternative(alt.values().to_vec()).is_err() {
                return Err(MetricsError::BadTuple);
            }
            if w.is_negative() {
                return Err(MetricsError::NegativeWeight);
            }
            if w.is_zero() {
                continue;
            }
            let entry = agg.entry(alt).or_insert_with(BigRational::zero);
            *entry += w;
        }
        let mut total = BigRational::zero();
        for w in agg.values() {
            total += w;
        }
        if total.is_zero() {
            return Err(MetricsError::ZeroTotal);
        }
        let support = agg.into_iter().map(|(alt, w)| (alt, w / &total)).collect();
        Ok(DiscreteDistribution { schema, support })
    }

    /// The empirical distribution of a sample: multiplicities over the total.
    pub fn from_sample(sample: &Sample) -> Self {
        let total = BigRational::from_integer(BigInt::from(sample.total().clone()));
        let support = sample
            .rows()
            .iter()
            .map(|(alt, c)| {
                (alt.clone(), BigRational::from_integer(BigInt::from(c.clone())) / &total)
            })
            .collect();
        DiscreteDistribution { schema: Arc::clone(sample.schema()), support }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Alternatives with positive probability, in canonical order.
    pub fn support(&self) -> &[(Alternative, BigRational)] {
        &self.support
    }

    pub fn prob(&self, alt: &Alternative) -> BigRational {
        match self.support.binary_search_by(|(a, _)| a.cmp(alt)) {
            Ok(i) => self.support[i].1.clone(),
            Err(_) => BigRational::zero(),
        }
    }
}

/// Mean rank of the sample's rows under the tree's order, exact.
pub fn empirical_mean_rank(tree: &LPTree, sample: &Sample) -> Result<BigRational, MetricsError> {
    if **tree.schema() != **sample.schema() {
        return Err(MetricsError::SchemaMismatch);
    }
    let mut weighted = BigUint::zero();
    for (alt, count) in sample.rows() {
        weighted += tree.rank(alt) * count;
    }
    Ok(BigRational::new(BigInt::from(weighted), BigInt::from(sample.total().clone())))
}

/// Expected rank of a random alternative under `p`, computed node by node:
/// one plus, per node, the domain below it times the probability mass that
/// reaches it weighted by local position.
pub fn expected_rank(tree: &LPTree, p: &DiscreteDistribution) -> Result<BigRational, MetricsError> {
    if **tree.schema() != **p.schema() {
        return Err(MetricsError::SchemaMismatch);
    }
    let mut acc = BigRational::one();
    tree.for_each_node(|node, ctx| {
        let table = node.table();
        let mut mass = vec![BigRational::zero(); table.domain_size()];
        for (alt, w) in p.support() {
            if ctx.inst.matches(alt) {
                mass[table.flat_of_alt(alt)] += w;
            }
        }
        let mut node_sum = BigRational::zero();
        for (flat, m) in mass.into_iter().enumerate() {
            let pos = table.position_of_flat(flat);
            if pos > 0 && !m.is_zero() {
                node_sum += m * BigInt::from(pos);
            }
        }
        if !node_sum.is_zero() {
            acc += node_sum * BigInt::from(ctx.desc_domain.clone());
        }
    });
    Ok(acc)
}

/// The smallest expected local rank any order over `vars` can achieve against
/// the given joint counts, together with an order achieving it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestLocalOrder {
    /// An optimal order, best first; count ties are broken toward the
    /// canonical enumeration order, so the result is deterministic.
    pub ordering: Vec<Vec<u32>>,
    /// Sum of `position * count` over the ordering, positions 1-based.
    pub weighted_rank_sum: BigUint,
    /// Sum of all counts.
    pub total: BigUint,
}

impl BestLocalOrder {
    /// The expectation itself: `weighted_rank_sum / total`.
    pub fn value(&self) -> BigRational {
        BigRational::new(BigInt::from(self.weighted_rank_sum.clone()), BigInt::from(self.total.clone()))
    }
}

/// Minimizes the expected local rank over `vars`: sort instantiations by
/// non-increasing count. `counts` maps value tuples (in `vars` order) to
/// multiplicities, as produced by [`Sample::marginal_counts`].
pub fn e_star(
    schema: &Schema,
    vars: &[usize],
    counts: &BTreeMap<Vec<u32>, BigUint>,
) -> Result<BestLocalOrder, MetricsError> {
    if vars.is_empty() {
        return Err(MetricsError::EmptyVars);
    }
    for (i, &v) in vars.iter().enumerate() {
        if v >= schema.attr_count() {
            return Err(MetricsError::VarOutOfRange(v));
        }
        if vars[..i].contains(&v) {
            return Err(MetricsError::DuplicateVar(v));
        }
    }
    let dims: Vec<usize> = vars.iter().map(|&v| schema.domain_size(v)).collect();
    let dom = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&d| d <= (1 << 26))
        .ok_or(MetricsError::DomainTooLarge)?;
    let mut cnt = vec![BigUint::zero(); dom];
    let mut total = BigUint::zero();
    for (tuple, c) in counts {
        if tuple.len() != vars.len() {
            return Err(MetricsError::BadTuple);
        }
        let mut flat = 0usize;
        for (j, &v) in tuple.iter().enumerate() {
            if v as usize >= dims[j] {
                return Err(MetricsError::BadTuple);
            }
            flat = flat * dims[j] + v as usize;
        }
        cnt[flat] += c;
        total += c;
    }
    if total.is_zero() {
        return Err(MetricsError::ZeroTotal);
    }
    let mut by_count: Vec<usize> = (0..dom).collect();
    by_count.sort_by(|&a, &b| cnt[b].cmp(&cnt[a]).then(a.cmp(&b)));
    let mut weighted_rank_sum = BigUint::zero();
    for (i, &flat) in by_count.iter().enumerate() {
        weighted_rank_sum += &cnt[flat] * BigUint::from(i + 1);
    }
    let unflatten = |mut flat: usize| {
        let mut tuple = vec![0u32; dims.len()];
        for j in (0..dims.len()).rev() {
            tuple[j] = (flat % dims[j]) as u32;
            flat /= dims[j];
        }
        tuple
    };
    let ordering = by_count.into_iter().map(unflatten).collect();
    Ok(BestLocalOrder { ordering, weighted_rank_sum, total })
}

/// Does every table sort its instantiations by non-increasing probability of
/// the mass that reaches its node?
pub fn is_locally_optimal(tree: &LPTree, p: &DiscreteDistribution) -> Result<bool, MetricsError> {
    if **tree.schema() != **p.schema() {
        return Err(MetricsError::SchemaMismatch);
    }
    let mut ok = true;
    tree.for_each_node(|node, ctx| {
        if !ok {
            return;
        }
        let table = node.table();
        let mut mass = vec![BigRational::zero(); table.domain_size()];
        for (alt, w) in p.support() {
            if ctx.inst.matches(alt) {
                mass[table.flat_of_alt(alt)] += w;
            }
        }
        let order = table.order();
        for pair in order.windows(2) {
            let above = &mass[table.flat_of_tuple(&pair[0])];
            let below = &mass[table.flat_of_tuple(&pair[1])];
            if above < below {
                ok = false;
                return;
            }
        }
    });
    Ok(ok)
}

/// Expected-rank gap between a learned tree and a target tree under `p`,
/// normalized by the domain size. Zero iff the two orders have equal expected
/// rank; negative values are possible when `p` does not favor the target.
pub fn ranking_loss(
    learned: &LPTree,
    target: &LPTree,
    p: &DiscreteDistribution,
) -> Result<BigRational, MetricsError> {
    if **learned.schema() != **target.schema() {
        return Err(MetricsError::SchemaMismatch);
    }
    let gap = expected_rank(learned, p)? - expected_rank(target, p)?;
    Ok(gap / BigRational::from_integer(BigInt::from(learned.schema().domain_count())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Children, Node, PreferenceTable};
    use std::sync::Arc;

    fn ab_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                ("A".into(), vec!["a1".into(), "a2".into()]),
                ("B".into(), vec!["b1".into(), "b2".into()]),
            ])
            .unwrap(),
        )
    }

    fn ab_sample(s: &Arc<Schema>) -> Sample {
        let csv = "A,B,__count\na1,b1,4\na1,b2,3\na2,b1,2\na2,b2,1\n";
        Sample::from_csv_reader(csv.as_bytes(), s).unwrap()
    }

    fn table(s: &Schema, vars: Vec<usize>, order: Vec<Vec<u32>>) -> PreferenceTable {
        PreferenceTable::new(s, vars, order).unwrap()
    }

    fn chain(s: &Arc<Schema>, first: usize) -> LPTree {
        let second = 1 - first;
        let t1 = table(s, vec![first], vec![vec![0], vec![1]]);
        let t2 = table(s, vec![second], vec![vec![0], vec![1]]);
        LPTree::linear(Arc::clone(s), vec![t1, t2]).unwrap()
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn best_local_order_on_the_worked_counts() {
        let s = ab_schema();
        let sample = ab_sample(&s);
        let ea = e_star(&s, &[0], &sample.marginal_counts(&[0]).unwrap()).unwrap();
        assert_eq!(ea.value(), ratio(13, 10));
        assert_eq!(ea.ordering, vec![vec![0], vec![1]]);
        let eb = e_star(&s, &[1], &sample.marginal_counts(&[1]).unwrap()).unwrap();
        assert_eq!(eb.value(), ratio(14, 10));
        let eab = e_star(&s, &[0, 1], &sample.marginal_counts(&[0, 1]).unwrap()).unwrap();
        // Joint counts 4,3,2,1 are already in canonical order.
        assert_eq!(eab.value(), ratio(4 + 2 * 3 + 3 * 2 + 4, 10));
        assert_eq!(eab.ordering, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn count_ties_break_toward_canonical_order() {
        let s = ab_schema();
        let mut counts = BTreeMap::new();
        counts.insert(vec![0u32], BigUint::from(5u32));
        counts.insert(vec![1u32], BigUint::from(5u32));
        let e = e_star(&s, &[1], &counts).unwrap();
        assert_eq!(e.ordering, vec![vec![0], vec![1]]);
        // Absent tuples count zero and sort last.
        let mut counts = BTreeMap::new();
        counts.insert(vec![1u32], BigUint::from(5u32));
        let e = e_star(&s, &[0], &counts).unwrap();
        assert_eq!(e.ordering, vec![vec![1], vec![0]]);
        assert_eq!(e.value(), BigRational::one());
    }

    #[test]
    fn e_star_rejects_bad_input() {
        let s = ab_schema();
        let counts: BTreeMap<Vec<u32>, BigUint> = BTreeMap::new();
        assert!(matches!(e_star(&s, &[], &counts), Err(MetricsError::EmptyVars)));
        assert!(matches!(e_star(&s, &[4], &counts), Err(MetricsError::VarOutOfRange(4))));
        assert!(matches!(e_star(&s, &[0, 0], &counts), Err(MetricsError::DuplicateVar(0))));
        assert!(matches!(e_star(&s, &[0], &counts), Err(MetricsError::ZeroTotal)));
        let mut bad = BTreeMap::new();
        bad.insert(vec![0u32, 0u32], BigUint::one());
        assert!(matches!(e_star(&s, &[0], &bad), Err(MetricsError::BadTuple)));
    }

    #[test]
    fn mean_rank_of_the_worked_sample() {
        let s = ab_schema();
        let sample = ab_sample(&s);
        let a_first = chain(&s, 0);
        let b_first = chain(&s, 1);
        assert_eq!(empirical_mean_rank(&a_first, &sample).unwrap(), ratio(2, 1));
        assert_eq!(empirical_mean_rank(&b_first, &sample).unwrap(), ratio(21, 10));
        // The same number through the node-by-node decomposition.
        let p = DiscreteDistribution::from_sample(&sample);
        assert_eq!(expected_rank(&a_first, &p).unwrap(), ratio(2, 1));
        assert_eq!(expected_rank(&b_first, &p).unwrap(), ratio(21, 10));
    }

    #[test]
    fn expected_rank_agrees_with_direct_summation_on_a_split_tree() {
        let s = ab_schema();
        let tb = table(&s, vec![1], vec![vec![1], vec![0]]);
        let children = Children::Split(vec![
            Node::new(table(&s, vec![0], vec![vec![1], vec![0]]), Children::Leaf),
            Node::new(table(&s, vec![0], vec![vec![0], vec![1]]), Children::Leaf),
        ]);
        let t = LPTree::new(Arc::clone(&s), Node::new(tb, children)).unwrap();
        let weights: Vec<(Alternative, BigRational)> = s
            .alternatives()
            .zip([7i64, 1, 3, 9])
            .map(|(o, w)| (o, BigRational::from_integer(BigInt::from(w))))
            .collect();
        let p = DiscreteDistribution::from_weights(Arc::clone(&s), weights).unwrap();
        let direct: BigRational = p
            .support()
            .iter()
            .map(|(o, w)| w * BigRational::from_integer(BigInt::from(t.rank(o))))
            .sum();
        assert_eq!(expected_rank(&t, &p).unwrap(), direct);
    }

    #[test]
    fn local_optimality_checks_conditional_mass() {
        let s = ab_schema();
        let sample = ab_sample(&s);
        let p = DiscreteDistribution::from_sample(&sample);
        assert!(is_locally_optimal(&chain(&s, 0), &p).unwrap());
        // Flipping the B order makes the second node suboptimal: 6 vs 4.
        let t1 = table(&s, vec![0], vec![vec![0], vec![1]]);
        let t2 = table(&s, vec![1], vec![vec![1], vec![0]]);
        let flipped = LPTree::linear(Arc::clone(&s), vec![t1, t2]).unwrap();
        assert!(!is_locally_optimal(&flipped, &p).unwrap());
        // In a split tree, optimality is per-branch: mass b1-side prefers a2.
        let tb = table(&s, vec![1], vec![vec![0], vec![1]]);
        let children = Children::Split(vec![
            Node::new(table(&s, vec![0], vec![vec![1], vec![0]]), Children::Leaf),
            Node::new(table(&s, vec![0], vec![vec![0], vec![1]]), Children::Leaf),
        ]);
        let split = LPTree::new(Arc::clone(&s), Node::new(tb, children)).unwrap();
        // Marginals: b1 8 vs b2 7 (root fine), a2 8 vs a1 7 (chain root not),
        // while the b1 branch prefers a2 (6 vs 2) and the b2 branch a1 (5 vs 2).
        let weights: Vec<(Alternative, BigRational)> = s
            .alternatives()
            .zip([2i64, 5, 6, 2])
            .map(|(o, w)| (o, BigRational::from_integer(BigInt::from(w))))
            .collect();
        let p2 = DiscreteDistribution::from_weights(Arc::clone(&s), weights).unwrap();
        assert!(is_locally_optimal(&split, &p2).unwrap());
        assert!(!is_locally_optimal(&chain(&s, 0), &p2).unwrap());
    }

    #[test]
    fn ranking_loss_of_the_worked_pair() {
        let s = ab_schema();
        let sample = ab_sample(&s);
        let p = DiscreteDistribution::from_sample(&sample);
        let a_first = chain(&s, 0);
        let b_first = chain(&s, 1);
        assert_eq!(ranking_loss(&a_first, &a_first, &p).unwrap(), BigRational::zero());
        assert_eq!(ranking_loss(&b_first, &a_first, &p).unwrap(), ratio(1, 40));
        assert_eq!(ranking_loss(&a_first, &b_first, &p).unwrap(), ratio(-1, 40));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let s = ab_schema();
        let other = Arc::new(
            Schema::new(vec![
                ("A".into(), vec!["a1".into(), "a2".into()]),
                ("B".into(), vec!["b1".into(), "b9".into()]),
            ])
            .unwrap(),
        );
        let sample = ab_sample(&s);
        let t = chain(&other, 0);
        assert!(matches!(
            empirical_mean_rank(&t, &sample),
            Err(MetricsError::SchemaMismatch)
        ));
        let p = DiscreteDistribution::from_sample(&sample);
        assert!(matches!(expected_rank(&t, &p), Err(MetricsError::SchemaMismatch)));
        assert!(matches!(
            ranking_loss(&t, &chain(&s, 0), &p),
            Err(MetricsError::SchemaMismatch)
        ));
    }

    #[test]
    fn distribution_normalizes_and_validates() {
        let s = ab_schema();
        let alt = |v: Vec<u32>| s.alternative(v).unwrap();
        let p = DiscreteDistribution::from_weights(
            Arc::clone(&s),
            vec![
                (alt(vec![0, 0]), ratio(3, 1)),
                (alt(vec![1, 1]), ratio(1, 1)),
                (alt(vec![0, 0]), ratio(2, 1)),
                (alt(vec![0, 1]), BigRational::zero()),
            ],
        )
        .unwrap();
        let sum: BigRational = p.support().iter().map(|(_, w)| w.clone()).sum();
        assert_eq!(sum, BigRational::one());
        assert_eq!(p.prob(&alt(vec![0, 0])), ratio(5, 6));
        assert_eq!(p.prob(&alt(vec![0, 1])), BigRational::zero());
        assert!(matches!(
            DiscreteDistribution::from_weights(Arc::clone(&s), vec![(alt(vec![0, 0]), ratio(-1, 2))]),
            Err(MetricsError::NegativeWeight)
        ));
        assert!(matches!(
            DiscreteDistribution::from_weights(Arc::clone(&s), vec![]),
            Err(MetricsError::ZeroTotal)
        ));
    }
}

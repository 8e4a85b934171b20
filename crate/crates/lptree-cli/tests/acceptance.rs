//! The acceptance gate. One test per numbered criterion; each enforces its
//! stated tolerance (exact unless noted) and time budget, and prints a
//! one-line verdict. The harness emits one pass/fail line per criterion
//! either way; run with `--nocapture` to see the verdict details.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use itertools::Itertools;
use lptree::decimal::decimal_string;
use lptree::learn::{
    enumerate_k_partitions, learn_linear_multivariate_with, learn_linear_univariate_with,
};
use lptree::metrics::{empirical_mean_rank, ranking_loss};
use lptree::oracle::{count_linear_trees, exhaustive_erm, naive_rank};
use lptree::synth::{
    exact_distribution, exact_sample, learning_curve, random_split_tree, random_tree,
    sample_bound, DecreasingSpec, ExperimentConfig, TreeClass,
};
use lptree::{
    Alternative, BigRational, BigUint, LPTree, Parallelism, Preferred, PreferenceTable, Sample,
    Schema, ScoreVariant,
};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(number: u32, name: &str, detail: &str, started: Instant) {
    println!("criterion {number:02} {name}: PASS ({detail}) in {:.2?}", started.elapsed());
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../lptree/tests/data").join(name)
}

fn binary_schema(n: usize) -> Arc<Schema> {
    Arc::new(
        Schema::new(
            (0..n)
                .map(|i| (format!("x{i}"), vec!["f".to_owned(), "t".to_owned()]))
                .collect(),
        )
        .unwrap(),
    )
}

fn random_schema(rng: &mut ChaCha8Rng, max_n: usize, max_d: usize) -> Arc<Schema> {
    let n = rng.gen_range(2..=max_n);
    Arc::new(
        Schema::new(
            (0..n)
                .map(|i| {
                    let d = rng.gen_range(2..=max_d);
                    (format!("x{i}"), (0..d).map(|v| format!("v{v}")).collect())
                })
                .collect(),
        )
        .unwrap(),
    )
}

fn random_sample(rng: &mut ChaCha8Rng, schema: &Arc<Schema>) -> Sample {
    loop {
        let rows: Vec<(Alternative, BigUint)> = schema
            .alternatives()
            .map(|alt| (alt, BigUint::from(rng.gen_range(0u32..5))))
            .collect();
        if rows.iter().any(|(_, c)| !c.is_zero()) {
            return Sample::from_counts(Arc::clone(schema), rows).unwrap();
        }
    }
}

fn median(mut values: Vec<BigRational>) -> BigRational {
    assert!(!values.is_empty());
    values.sort();
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid].clone()
    } else {
        (&values[mid - 1] + &values[mid]) / BigRational::from_integer(2.into())
    }
}

#[test]
fn criterion_01_bundled_example_queries() {
    let started = Instant::now();
    let tree = LPTree::from_json_slice(&fs::read(fixture("holiday_tree.json")).unwrap()).unwrap();
    let schema = Arc::clone(tree.schema());
    let queried = schema.parse_alternative("W=w,C=c1,P=p").unwrap();
    assert_eq!(tree.rank(&queried), BigUint::from(11u32));
    assert_eq!(schema.format_alternative(&tree.optimal()), "W=wbar,C=c3,P=p");
    let first = schema.parse_alternative("W=w,C=c2,P=pbar").unwrap();
    let second = schema.parse_alternative("W=w,C=c3,P=p").unwrap();
    assert_eq!(tree.compare(&first, &second).unwrap(), Preferred::First);
    assert!(started.elapsed() < Duration::from_secs(1));
    verdict(
        1,
        "bundled-example queries",
        "rank 11, optimum W=wbar,C=c3,P=p, compare first; exact",
        started,
    );
}

#[test]
fn criterion_02_rank_decomposition_matches_win_counting() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0202);
    let mut pairs = 0u32;
    let mut trees = 0u32;
    while pairs < 500 {
        let schema = random_schema(&mut rng, 4, 3);
        let cap = rng.gen_range(1..=2.min(schema.attr_count()));
        let tree = random_split_tree(&schema, cap, rng.gen()).unwrap();
        trees += 1;
        let alts: Vec<Alternative> = schema.alternatives().collect();
        let mut seen = vec![false; alts.len()];
        for alt in &alts {
            let rank = usize::try_from(&tree.rank(alt)).unwrap();
            assert!((1..=alts.len()).contains(&rank));
            assert!(!seen[rank - 1], "rank {rank} repeated");
            seen[rank - 1] = true;
        }
        for _ in 0..10 {
            let alt = &alts[rng.gen_range(0..alts.len())];
            assert_eq!(tree.rank(alt), naive_rank(&tree, alt).unwrap());
            pairs += 1;
        }
    }
    assert!(started.elapsed() < Duration::from_secs(30));
    verdict(
        2,
        "rank decomposition vs win counting",
        &format!("{pairs} (tree, alternative) pairs over {trees} trees, all exact; full-domain ranks bijective"),
        started,
    );
}

#[test]
fn criterion_03_chain_learner_attains_the_exhaustive_minimum() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0303);
    let rounds = 100;
    for round in 0..rounds {
        let schema = random_schema(&mut rng, 4, 3);
        let sample = random_sample(&mut rng, &schema);
        let learned =
            learn_linear_univariate_with(&sample, ScoreVariant::Shifted, Parallelism::Sequential)
                .unwrap();
        let learned_erank = empirical_mean_rank(&learned, &sample).unwrap();
        let (_, oracle_erank) = exhaustive_erm(&sample, 1).unwrap();
        assert_eq!(learned_erank, oracle_erank, "round {round}");
    }
    assert!(started.elapsed() < Duration::from_secs(60));
    verdict(
        3,
        "chain learner is an empirical-risk minimizer",
        &format!("{rounds} random samples, erank ties are exact"),
        started,
    );
}

#[test]
fn criterion_04_bounded_learner_attains_the_exhaustive_minimum() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0404);
    let schema = binary_schema(4);
    assert_eq!(count_linear_trees(&schema, 2).unwrap(), BigUint::from(7296u32));
    let rounds = 50;
    for round in 0..rounds {
        let sample = random_sample(&mut rng, &schema);
        let learned = learn_linear_multivariate_with(
            &sample,
            2,
            ScoreVariant::Shifted,
            Parallelism::Sequential,
        )
        .unwrap();
        let learned_erank = empirical_mean_rank(&learned, &sample).unwrap();
        let (_, oracle_erank) = exhaustive_erm(&sample, 2).unwrap();
        assert_eq!(learned_erank, oracle_erank, "round {round}");
    }
    verdict(
        4,
        "bounded learner is an empirical-risk minimizer",
        &format!("{rounds} random samples against all 7296 candidates, erank ties are exact"),
        started,
    );
}

#[test]
fn criterion_05_ranking_loss_range_and_separation() {
    let started = Instant::now();

    // Exhaustive half: every one of the 8! linear orders over a 3-attribute
    // binary domain, realized as single-node trees against a fixed target
    // under a strictly decreasing law.
    let schema = binary_schema(3);
    let tuples: Vec<Vec<u32>> = schema.alternatives().map(|a| a.values().to_vec()).collect();
    let target_table = PreferenceTable::new(&schema, vec![0, 1, 2], tuples.clone()).unwrap();
    let target = LPTree::linear(Arc::clone(&schema), vec![target_table]).unwrap();
    let spec: DecreasingSpec = "geometric:1/2".parse().unwrap();
    let p = exact_distribution(&target, &spec).unwrap();
    let mut orders = 0u32;
    let mut zero_hits = 0u32;
    for perm in tuples.iter().permutations(tuples.len()) {
        let rows: Vec<Vec<u32>> = perm.iter().map(|t| (*t).clone()).collect();
        let is_target = rows == tuples;
        let table = PreferenceTable::new(&schema, vec![0, 1, 2], rows).unwrap();
        let order = LPTree::linear(Arc::clone(&schema), vec![table]).unwrap();
        let loss = ranking_loss(&order, &target, &p).unwrap();
        assert!(loss >= BigRational::zero() && loss < BigRational::from_integer(1.into()));
        assert_eq!(loss.is_zero(), is_target);
        zero_hits += u32::from(loss.is_zero());
        orders += 1;
    }
    assert_eq!(orders, 40_320);
    assert_eq!(zero_hits, 1);

    // Randomized half: general trees, strictly and weakly decreasing laws.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0505);
    for _ in 0..30 {
        let schema = random_schema(&mut rng, 3, 3);
        let cap = 2.min(schema.attr_count());
        let target = random_split_tree(&schema, cap, rng.gen()).unwrap();
        let other = random_split_tree(&schema, cap, rng.gen()).unwrap();
        let strict: [DecreasingSpec; 2] =
            ["geometric:2/3".parse().unwrap(), DecreasingSpec::Linear];
        for spec in strict {
            let p = exact_distribution(&target, &spec).unwrap();
            let loss = ranking_loss(&other, &target, &p).unwrap();
            assert!(loss >= BigRational::zero() && loss < BigRational::from_integer(1.into()));
            let same_order = schema.alternatives().all(|o| other.rank(&o) == target.rank(&o));
            assert_eq!(loss.is_zero(), same_order);
        }
        // Under the flat law every order has the same expected rank.
        let p = exact_distribution(&target, &DecreasingSpec::Uniform).unwrap();
        assert!(ranking_loss(&other, &target, &p).unwrap().is_zero());
    }
    verdict(
        5,
        "ranking-loss range and separation",
        "all 40320 orders: loss in [0,1), zero exactly once; 30 randomized instances agree",
        started,
    );
}

#[test]
fn criterion_06_full_support_recovery_of_chain_targets() {
    let started = Instant::now();
    let spec: DecreasingSpec = "geometric:0.9".parse().unwrap();
    let mut recovered = 0u32;
    for n in 2..=6 {
        let schema = binary_schema(n);
        for round in 0..5u64 {
            let target =
                random_tree(&schema, TreeClass::Chain, 0x0600 + 31 * n as u64 + round).unwrap();
            let sample = exact_sample(&target, &spec).unwrap();
            let learned = learn_linear_univariate_with(
                &sample,
                ScoreVariant::Shifted,
                Parallelism::Sequential,
            )
            .unwrap();
            let p = exact_distribution(&target, &spec).unwrap();
            let loss = ranking_loss(&learned, &target, &p).unwrap();
            assert!(loss.is_zero(), "n={n} round={round}: rloss {loss}");
            recovered += 1;
        }
    }
    verdict(
        6,
        "full-support recovery of chain targets",
        &format!("{recovered} targets over 2..=6 binary attributes, rloss = 0 exactly"),
        started,
    );
}

#[test]
fn criterion_07_learning_curves_improve_with_size() {
    let started = Instant::now();
    let bound = sample_bound(6, 2, 1, 1, 0.2, 0.2).unwrap();
    assert_eq!(bound, 1912);
    let trials = 20;
    let config = ExperimentConfig {
        schema: binary_schema(6),
        class: TreeClass::Chain,
        tree_seed: 0x0701,
        spec: "geometric:0.9".parse().unwrap(),
        sizes: vec![10, 100, 1000, bound, 10_000],
        trials,
        seed: 0x0702,
        learner_k: None,
        variant: ScoreVariant::Shifted,
        exact: false,
    };
    let curve = learning_curve(&config, Parallelism::default()).unwrap();
    let losses_at = |size: u64| -> Vec<BigRational> {
        curve.rows.iter().filter(|r| r.size == size).map(|r| r.rloss.clone()).collect()
    };

    let medians: Vec<BigRational> =
        [10u64, 100, 1000, 10_000].iter().map(|&s| median(losses_at(s))).collect();
    let shown: Vec<String> = medians.iter().map(|m| decimal_string(m, 4)).collect();
    for pair in medians.windows(2) {
        assert!(pair[1] <= pair[0], "median rloss rose with size: {shown:?}");
    }
    assert!(medians[3] < medians[0], "no improvement across the grid: {shown:?}");

    let at_bound = losses_at(bound);
    assert_eq!(at_bound.len() as u32, trials);
    let eps = BigRational::new(1.into(), 5.into());
    let hits = at_bound.iter().filter(|loss| **loss <= eps).count() as u32;
    assert!(hits * 10 >= trials * 8, "only {hits}/{trials} trials within 0.2 at size {bound}");

    assert!(started.elapsed() < Duration::from_secs(600));
    verdict(
        7,
        "learning curves improve with sample size",
        &format!("medians {shown:?}; {hits}/{trials} trials within 0.2 at the {bound}-draw bound"),
        started,
    );
}

#[test]
fn criterion_08_sample_bound_value_and_monotonicity() {
    let started = Instant::now();
    assert_eq!(sample_bound(3, 2, 1, 1, 0.1, 0.05).unwrap(), 9136);
    assert_eq!(sample_bound(6, 2, 1, 1, 0.2, 0.2).unwrap(), 1912);

    // Halving the tolerance quadruples the bound, up to rounding.
    let halved = sample_bound(3, 2, 1, 1, 0.05, 0.05).unwrap();
    assert!(halved.abs_diff(4 * 9136) <= 4, "got {halved}");

    // Monotone along every axis of a small grid, other parameters fixed.
    let ns = [3u64, 4, 6];
    let ds = [2u64, 3];
    let ks = [1u32, 2];
    let ls = [1u64, 2];
    let eps_grid = [0.3f64, 0.2, 0.1];
    let deltas = [0.2f64, 0.1, 0.05];
    let bound = |n, d, k, l, eps, delta| sample_bound(n, d, k, l, eps, delta).unwrap();
    let mut checked = 0u32;
    for (&n, &d, &k, &l) in itertools::iproduct!(&ns, &ds, &ks, &ls) {
        for (&eps, &delta) in itertools::iproduct!(&eps_grid, &deltas) {
            let here = bound(n, d, k, l, eps, delta);
            for &n2 in &ns {
                if n2 > n {
                    assert!(bound(n2, d, k, l, eps, delta) >= here);
                }
            }
            for &d2 in &ds {
                if d2 > d {
                    assert!(bound(n, d2, k, l, eps, delta) >= here);
                }
            }
            for &k2 in &ks {
                if k2 > k {
                    assert!(bound(n, d, k2, l, eps, delta) >= here);
                }
            }
            for &l2 in &ls {
                if l2 > l {
                    assert!(bound(n, d, k, l2, eps, delta) >= here);
                }
            }
            for &eps2 in &eps_grid {
                if eps2 < eps {
                    assert!(bound(n, d, k, l, eps2, delta) >= here);
                }
            }
            for &delta2 in &deltas {
                if delta2 < delta {
                    assert!(bound(n, d, k, l, eps, delta2) >= here);
                }
            }
            checked += 1;
        }
    }
    verdict(
        8,
        "closed-form sample bound",
        &format!("9136 and 1912 reproduced; monotone at all {checked} grid points; tolerance-halving within 4"),
        started,
    );
}

/// Every set partition of `0..n`, built by inserting each element into each
/// existing part or a fresh one. Parts stay sorted by minimum element, so the
/// output is already canonical.
fn partitions_by_insertion(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for item in 0..n {
        let mut next = Vec::new();
        for parts in &out {
            for i in 0..parts.len() {
                let mut grown = parts.clone();
                grown[i].push(item);
                next.push(grown);
            }
            let mut fresh = parts.clone();
            fresh.push(vec![item]);
            next.push(fresh);
        }
        out = next;
    }
    out
}

fn growth_code(parts: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut code = vec![0; n];
    for (idx, part) in parts.iter().enumerate() {
        for &e in part {
            code[e] = idx;
        }
    }
    code
}

#[test]
fn criterion_09_partition_enumeration_matches_an_independent_oracle() {
    let started = Instant::now();
    for (n, k, expected) in [(3usize, 1usize, 1usize), (4, 2, 10), (5, 5, 52), (5, 2, 26)] {
        let streamed: Vec<Vec<Vec<usize>>> =
            enumerate_k_partitions(n, k).unwrap().map(|p| p.parts).collect();
        assert_eq!(streamed.len(), expected, "count for n={n}, k={k}");
        // Strictly increasing growth codes: canonical order, no duplicates.
        let codes: Vec<Vec<usize>> = streamed.iter().map(|p| growth_code(p, n)).collect();
        assert!(codes.windows(2).all(|w| w[0] < w[1]), "order for n={n}, k={k}");
        // Same set as filtering all partitions from the insertion oracle.
        let mut filtered: Vec<Vec<Vec<usize>>> = partitions_by_insertion(n)
            .into_iter()
            .filter(|parts| parts.iter().all(|part| part.len() <= k))
            .collect();
        filtered.sort_by_key(|p| growth_code(p, n));
        let mut sorted = streamed.clone();
        sorted.sort_by_key(|p| growth_code(p, n));
        assert_eq!(sorted, filtered, "set mismatch for n={n}, k={k}");
        // Stable: a second pass enumerates the same sequence.
        let again: Vec<Vec<Vec<usize>>> =
            enumerate_k_partitions(n, k).unwrap().map(|p| p.parts).collect();
        assert_eq!(streamed, again);
    }
    verdict(
        9,
        "capped partition enumeration",
        "counts 1, 10, 52 (and 26) match the insertion oracle; canonical order, duplicate-free",
        started,
    );
}

#[test]
fn criterion_10_wide_learning_is_fast_and_deterministic() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let attrs = 100usize;
    let schema = binary_schema(attrs);
    let schema_path = dir.path().join("wide_schema.json");
    fs::write(&schema_path, schema.to_json_vec()).unwrap();

    // One hundred thousand draws over one hundred binary attributes.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A0A);
    let names: Vec<String> = (0..attrs).map(|i| format!("x{i}")).collect();
    let mut csv = String::with_capacity(22 * 1024 * 1024);
    csv.push_str(&names.join(","));
    csv.push('\n');
    for _ in 0..100_000 {
        for i in 0..attrs {
            if i > 0 {
                csv.push(',');
            }
            csv.push(if rng.gen::<bool>() { 't' } else { 'f' });
        }
        csv.push('\n');
    }
    let sample_path = dir.path().join("wide_sample.csv");
    fs::write(&sample_path, csv).unwrap();

    let learn = |threads: Option<&str>, out_name: &str| -> (String, Vec<u8>, Duration) {
        let out = dir.path().join(out_name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lptree"));
        if let Some(threads) = threads {
            cmd.args(["--threads", threads]);
        }
        cmd.args([
            "learn",
            "--schema",
            schema_path.to_str().unwrap(),
            "--sample",
            sample_path.to_str().unwrap(),
            "--class",
            "lin1",
            "--out",
            out.to_str().unwrap(),
        ]);
        let clock = Instant::now();
        let output = cmd.output().unwrap();
        let took = clock.elapsed();
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(took <= Duration::from_secs(10), "run took {took:.2?}");
        (String::from_utf8(output.stdout).unwrap(), fs::read(out).unwrap(), took)
    };

    let (stdout_a, tree_a, first_run) = learn(None, "a.json");
    let (stdout_b, tree_b, _) = learn(None, "b.json");
    let (stdout_c, tree_c, _) = learn(Some("1"), "c.json");
    let (stdout_d, tree_d, _) = learn(Some("2"), "d.json");
    assert!(stdout_a.starts_with("erank "));
    assert_eq!(stdout_a, stdout_b, "repeated run differs");
    assert_eq!(stdout_a, stdout_c, "one thread differs");
    assert_eq!(stdout_a, stdout_d, "two threads differ");
    assert_eq!(tree_a, tree_b);
    assert_eq!(tree_a, tree_c);
    assert_eq!(tree_a, tree_d);
    verdict(
        10,
        "wide chain learning is fast and deterministic",
        &format!(
            "100 attributes, 100000 rows: first run {first_run:.2?}, bit-identical across runs and thread counts"
        ),
        started,
    );
}

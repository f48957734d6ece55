use std::collections::HashMap;

use num_bigint::BigUint;
use pathload_core::config::*;
use pathload_core::distributions::RandomStream;
use pathload_core::selstructs::*;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn example_one() -> GraphConfiguration {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/example1.xml")).unwrap();
    parse_graph_config(&text).unwrap()
}

/// Upper 0.001 quantile of the chi-square law.
fn chi_square_critical(df: f64) -> f64 {
    ChiSquared::new(df).unwrap().inverse_cdf(0.999)
}

// Walks are written as the edge index taken at each step.
fn endpoint(g: &SchemaGraph, start: usize, steps: &[usize]) -> usize {
    steps.iter().fold(start, |n, &k| g.edges[n][k].target)
}

fn all_walks(g: &SchemaGraph, start: usize, length: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    walks_from(g, start, length, &mut out, &mut Vec::new());
    out
}

fn walks_from(g: &SchemaGraph, start: usize, length: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if cur.len() == length {
        out.push(cur.clone());
        return;
    }
    let node = endpoint(g, start, cur);
    for k in 0..g.edges[node].len() {
        cur.push(k);
        walks_from(g, start, length, out, cur);
        cur.pop();
    }
}

#[test]
fn draw_path_is_uniform() {
    let g = build_schema_graph(&example_one());
    // Pick the first (class, length) whose walk population is small enough.
    let (class, length, table) = SelectivityClass::ALL
        .iter()
        .flat_map(|&c| (1..=4).map(move |l| (c, l)))
        .map(|(c, l)| (c, l, saturate_path_counts(&g, c, l)))
        .find(|(_, l, t)| {
            let total = t.total(*l);
            total >= BigUint::from(5u32) && total <= BigUint::from(50u32)
        })
        .expect("a small walk population exists");
    let mut population: Vec<(usize, Vec<usize>)> = Vec::new();
    for s in 0..g.len() {
        for w in all_walks(&g, s, length) {
            if qualifies(&g.nodes[endpoint(&g, s, &w)], class) {
                population.push((s, w));
            }
        }
    }
    assert_eq!(BigUint::from(population.len()), table.total(length));

    let draws = 100_000;
    let mut rng = RandomStream::new(2024);
    let mut seen: HashMap<(usize, Vec<usize>), u64> = HashMap::new();
    for _ in 0..draws {
        let p = draw_path(&g, &table, length, &mut rng).unwrap();
        // Map labels back to edge indices.
        let mut steps = Vec::new();
        for (i, label) in p.labels.iter().enumerate() {
            let k = g.edges[p.nodes[i]].iter().position(|e| e.label == *label && e.target == p.nodes[i + 1]).unwrap();
            steps.push(k);
        }
        *seen.entry((p.start, steps)).or_insert(0) += 1;
    }
    assert!(seen.keys().all(|k| population.contains(k)));
    let expected = draws as f64 / population.len() as f64;
    let chi2: f64 = population
        .iter()
        .map(|k| {
            let o = *seen.get(k).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let critical = chi_square_critical(population.len() as f64 - 1.0);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical} over {} walks", population.len());
}

fn distribution() -> impl Strategy<Value = DegreeDistribution> {
    prop_oneof![
        Just(DegreeDistribution::Uniform { min: 1, max: 2 }),
        Just(DegreeDistribution::Gaussian { mu: 2.0, sigma: 1.0 }),
        Just(DegreeDistribution::Zipfian { s: 2.0, max: None }),
    ]
}

prop_compose! {
    fn small_schema()(
        counts in prop::collection::vec(prop_oneof![
            Just(CountConstraint::Proportion(0.3)),
            Just(CountConstraint::Fixed(3)),
        ], 1..=3),
        raw in prop::collection::vec((0usize..3, 0usize..3, 0usize..2, distribution(), distribution()), 1..=3),
    ) -> GraphConfiguration {
        let node_types: Vec<NodeType> = counts.into_iter().enumerate().map(|(i, count)| NodeType { name: format!("t{i}"), count }).collect();
        let predicates = vec![Predicate { name: "a".into() }, Predicate { name: "b".into() }];
        let mut constraints: Vec<EdgeConstraint> = Vec::new();
        for (s, t, p, d_in, d_out) in raw {
            let (s, t) = (TypeId(s % node_types.len()), TypeId(t % node_types.len()));
            if constraints.iter().any(|c| (c.source, c.target, c.predicate) == (s, t, PredicateId(p))) {
                continue;
            }
            constraints.push(EdgeConstraint { source: s, target: t, predicate: PredicateId(p), d_in, d_out });
        }
        GraphConfiguration { n: 100, predicates, node_types, constraints }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn selectivity_graph_matches_walk_enumeration(cfg in small_schema(), l_min in 1usize..=3, extra in 0usize..=3) {
        let g = build_schema_graph(&cfg);
        if g.len() > 12 {
            return Ok(());
        }
        let l_max = l_min + extra;
        let sel = build_selectivity_graph(&g, l_min, l_max);
        for s in 0..g.len() {
            let mut reach = vec![false; g.len()];
            for len in l_min..=l_max {
                for w in all_walks(&g, s, len) {
                    reach[endpoint(&g, s, &w)] = true;
                }
            }
            for (m, &r) in reach.iter().enumerate() {
                prop_assert_eq!(sel.has_edge(s, m), r, "{} -> {}", s, m);
            }
        }
    }

    #[test]
    fn path_counts_match_walk_enumeration(cfg in small_schema(), class in prop::sample::select(SelectivityClass::ALL.to_vec())) {
        let g = build_schema_graph(&cfg);
        if g.len() > 12 {
            return Ok(());
        }
        let table = saturate_path_counts(&g, class, 4);
        for s in 0..g.len() {
            for len in 0..=4 {
                let brute = all_walks(&g, s, len).iter().filter(|w| qualifies(&g.nodes[endpoint(&g, s, w)], class)).count();
                prop_assert_eq!(table.nb_path(s, len), &BigUint::from(brute));
            }
        }
    }

    #[test]
    fn schema_graph_nodes_are_normalized_and_bounded(cfg in small_schema()) {
        let g = build_schema_graph(&cfg);
        prop_assert!(g.len() <= cfg.node_types.len() * 13);
        for n in &g.nodes {
            prop_assert!(n.triple.is_normalized());
        }
        let d = build_distance_matrix(&g);
        for (i, row) in g.edges.iter().enumerate() {
            for e in row {
                prop_assert!(d.get(i, e.target).is_some_and(|x| x <= 1));
            }
        }
    }
}

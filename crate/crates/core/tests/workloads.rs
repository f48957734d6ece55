use std::collections::{BTreeMap, HashMap};

use pathload_core::config::*;
use pathload_core::querygen::*;
use pathload_core::selalgebra::*;

type Map = BTreeMap<(TypeId, TypeId), SelectivityTriple>;

fn bib() -> GraphConfiguration {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bib.xml")).unwrap();
    parse_graph_config(&text).unwrap()
}

fn shipped(name: &str) -> WorkloadConfiguration {
    let path = format!("{}/../../configs/bib-{name}.xml", env!("CARGO_MANIFEST_DIR"));
    parse_workload_config(&std::fs::read_to_string(path).unwrap(), &bib()).unwrap()
}

fn workload(graph: &GraphConfiguration, text: &str) -> WorkloadConfiguration {
    parse_workload_config(text, graph).unwrap()
}

// Independent recomputation of the algebra over a query.

fn put(m: &mut Map, k: (TypeId, TypeId), t: SelectivityTriple) {
    let v = m.get(&k).map_or(t, |&old| disjoin_triples(old, t));
    m.insert(k, v);
}

fn epsilon(cfg: &GraphConfiguration) -> Map {
    cfg.node_types.iter().enumerate().map(|(i, t)| ((TypeId(i), TypeId(i)), epsilon_triple(t))).collect()
}

fn then(a: &Map, b: &Map) -> Map {
    let mut out = Map::new();
    for (&(x, y), &t1) in a {
        for (&(y2, z), &t2) in b {
            if y == y2 {
                put(&mut out, (x, z), concat_triples(t1, t2).unwrap());
            }
        }
    }
    out
}

fn symbol(cfg: &GraphConfiguration, s: &Symbol) -> Map {
    let mut m = Map::new();
    for c in &cfg.constraints {
        if cfg.predicate(c.predicate).name != s.predicate {
            continue;
        }
        if s.inverse {
            put(&mut m, (c.target, c.source), base_triple(c, Direction::Inverse, cfg));
        } else {
            put(&mut m, (c.source, c.target), base_triple(c, Direction::Forward, cfg));
        }
    }
    m
}

fn conjunct(cfg: &GraphConfiguration, r: &RegularExpression) -> Map {
    let mut d = Map::new();
    for p in &r.disjuncts {
        let m = p.iter().fold(epsilon(cfg), |acc, s| then(&acc, &symbol(cfg, s)));
        for (k, t) in m {
            put(&mut d, k, t);
        }
    }
    if !r.star {
        return d;
    }
    let mut s = epsilon(cfg);
    loop {
        let mut next = s.clone();
        for (k, t) in then(&s, &d) {
            put(&mut next, k, t);
        }
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Estimated exponent of a chain rule walked from its first head variable.
fn chain_alpha(cfg: &GraphConfiguration, rule: &QueryRule) -> u8 {
    let mut at = rule.head[0];
    let mut acc = epsilon(cfg);
    let mut steps = 0;
    while at != rule.head[1] || steps == 0 {
        let c = rule.body.iter().find(|c| c.from == at).expect("chain continues");
        acc = then(&acc, &conjunct(cfg, &c.regex));
        at = c.to;
        steps += 1;
    }
    acc.values().map(|&t| alpha_hat(t)).max().expect("chain has a triple")
}

fn check_sizes(cfg: &WorkloadConfiguration, q: &Query) {
    let size = &cfg.size;
    assert!(size.rules.contains(q.rules.len()), "query {}", q.id);
    assert!(cfg.arity.contains(q.arity()));
    for rule in &q.rules {
        assert_eq!(rule.head, q.rules[0].head);
        assert!(size.conjuncts.contains(rule.body.len()), "query {} has {} conjuncts", q.id, rule.body.len());
        for c in &rule.body {
            assert!(size.disjuncts.contains(c.regex.disjuncts.len()), "query {}", q.id);
            for p in &c.regex.disjuncts {
                assert!(!p.is_empty());
                assert!(size.path_length.contains(p.len()) || q.metadata.relaxations > 0, "query {}: length {}", q.id, p.len());
            }
            if c.regex.star {
                // Every disjunct of a starred conjunct loops on one common type.
                let loops: Vec<Vec<TypeId>> = c
                    .regex
                    .disjuncts
                    .iter()
                    .map(|p| {
                        let m = conjunct(&cfg.graph, &RegularExpression { disjuncts: vec![p.clone()], star: false });
                        m.keys().filter(|(a, b)| a == b).map(|k| k.0).collect()
                    })
                    .collect();
                assert!(loops[0].iter().any(|t| loops.iter().all(|l| l.contains(t))), "query {}", q.id);
            }
        }
    }
}

#[test]
fn shipped_workloads_hit_their_classes() {
    for name in ["len", "dis", "con", "rec"] {
        let cfg = shipped(name);
        let queries = generate_workload(&cfg, 3).unwrap();
        assert_eq!(queries.len(), 30);
        let mut per_class: HashMap<SelectivityClass, usize> = HashMap::new();
        for q in &queries {
            check_sizes(&cfg, q);
            let target = q.metadata.selectivity.expect("enforced workload");
            *per_class.entry(target).or_default() += 1;
            for rule in &q.rules {
                assert_eq!(chain_alpha(&cfg.graph, rule), target.alpha(), "{name} query {}: {q}", q.id);
            }
        }
        assert!(SelectivityClass::ALL.iter().all(|c| per_class[c] == 10));
    }
}

#[test]
fn recursive_workload_uses_stars() {
    let queries = generate_workload(&shipped("rec"), 5).unwrap();
    let starred = queries.iter().flat_map(|q| &q.rules).flat_map(|r| &r.body).filter(|c| c.regex.star).count();
    assert!(starred > 0);
}

const ALL_SHAPES: &str = r#"<workload queries="200" recursion="0.3">
  <arity min="0" max="4"/>
  <shapes>chain,star,cycle,starchain</shapes>
  <size rules="1,2" conjuncts="2,5" disjuncts="1,3" length="1,3"/>
</workload>"#;

#[test]
fn free_workloads_respect_sizes() {
    let graph = bib();
    let cfg = workload(&graph, ALL_SHAPES);
    let queries = generate_workload(&cfg, 9).unwrap();
    assert_eq!(queries.len(), 200);
    for q in &queries {
        assert!(q.metadata.selectivity.is_none());
        check_sizes(&cfg, q);
        let vars = q.rules[0].variables();
        assert!(q.head().iter().all(|v| vars.contains(v)));
    }
    let shapes: std::collections::HashSet<_> = queries.iter().map(|q| q.metadata.shape).collect();
    assert_eq!(shapes.len(), 4);
}

fn example_one_workload(classes: &str) -> (GraphConfiguration, WorkloadConfiguration) {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/example1.xml")).unwrap();
    let graph = parse_graph_config(&text).unwrap();
    let cfg = workload(
        &graph,
        &format!(
            r#"<workload queries="40" recursion="0.5">
  <arity min="2" max="2"/>
  <shapes>chain</shapes>
  <selectivities>{classes}</selectivities>
  <size rules="1,1" conjuncts="1,3" disjuncts="1,2" length="1,3"/>
</workload>"#
        ),
    );
    (graph, cfg)
}

#[test]
fn example_one_linear_and_quadratic() {
    let (graph, cfg) = example_one_workload("linear,quadratic");
    let queries = generate_workload(&cfg, 1).unwrap();
    for q in &queries {
        check_sizes(&cfg, q);
        assert_eq!(chain_alpha(&graph, &q.rules[0]), q.metadata.selectivity.unwrap().alpha(), "{q}");
    }
}

#[test]
fn example_one_constant_is_reported_not_mislabelled() {
    // The only fixed type is T3, and every label touching it also links
    // proportional types, so no regular expression is constant overall.
    let (_, cfg) = example_one_workload("constant,linear");
    let err = generate_workload(&cfg, 1).unwrap_err();
    assert_eq!(err.failed, (0..20).collect::<Vec<_>>());
    assert_eq!(err.partial.len(), 20);
    assert!(err.partial.iter().all(|q| q.metadata.selectivity == Some(SelectivityClass::Linear)));
}

#[test]
fn generation_is_deterministic_and_thread_independent() {
    let graph = bib();
    let cfg = workload(&graph, ALL_SHAPES);
    let a = workload_to_xml(&generate_workload(&cfg, 21).unwrap());
    let b = workload_to_xml(&generate_workload(&cfg, 21).unwrap());
    let c = workload_to_xml(&generate_workload_with(&cfg, 21, 3).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, workload_to_xml(&generate_workload(&cfg, 22).unwrap()));
}

#[test]
fn workload_xml_round_trips() {
    let graph = bib();
    for cfg in [workload(&graph, ALL_SHAPES), shipped("rec")] {
        let queries = generate_workload(&cfg, 4).unwrap();
        assert_eq!(parse_workload_xml(&workload_to_xml(&queries)).unwrap(), queries);
    }
}

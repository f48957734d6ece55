use pathload_core::config::{parse_graph_config, SelectivityClass};
use pathload_core::selalgebra::*;
use pathload_core::selstructs::build_schema_graph;
use proptest::prelude::*;

use SelOp::*;
use SizeClass::{One, N};

// Tables exactly as printed: rows are the second operand, columns the first.
const OPS: [SelOp; 5] = [Eq, Lt, Gt, Diamond, Cross];

const PRINTED_DISJUNCTION: &str = "
= < > D X
< < D D X
> D > D X
D D D D X
X X X X X";

const PRINTED_CONCATENATION: &str = "
= < > D X
< < X X X
> D > D X
D D X X X
X X X X X";

fn op_of(c: &str) -> SelOp {
    match c {
        "=" => Eq,
        "<" => Lt,
        ">" => Gt,
        "D" => Diamond,
        "X" => Cross,
        other => panic!("bad cell {other}"),
    }
}

/// `cell(o1, o2)` read in (column, row) order.
fn printed(table: &str) -> impl Fn(SelOp, SelOp) -> SelOp + '_ {
    let rows: Vec<Vec<SelOp>> = table
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(op_of).collect())
        .collect();
    move |o1, o2| {
        let col = OPS.iter().position(|&o| o == o1).unwrap();
        let row = OPS.iter().position(|&o| o == o2).unwrap();
        rows[row][col]
    }
}

#[test]
fn disjunction_table_all_cells() {
    let cell = printed(PRINTED_DISJUNCTION);
    for o1 in OPS {
        for o2 in OPS {
            assert_eq!(compose_disjunction(o1, o2), cell(o1, o2), "{o1:?} + {o2:?}");
        }
    }
}

#[test]
fn concatenation_table_all_cells() {
    let cell = printed(PRINTED_CONCATENATION);
    for o1 in OPS {
        for o2 in OPS {
            assert_eq!(compose_concatenation(o1, o2), cell(o1, o2), "{o1:?} . {o2:?}");
        }
    }
}

#[test]
fn identity_absorption_and_commutativity() {
    for o in OPS {
        assert_eq!(compose_disjunction(Eq, o), o);
        assert_eq!(compose_disjunction(o, Eq), o);
        assert_eq!(compose_concatenation(Eq, o), o);
        assert_eq!(compose_concatenation(o, Eq), o);
        assert_eq!(compose_disjunction(Cross, o), Cross);
        assert_eq!(compose_concatenation(o, Cross), Cross);
        for o2 in OPS {
            assert_eq!(compose_disjunction(o, o2), compose_disjunction(o2, o));
        }
    }
    assert_eq!(compose_concatenation(Lt, Gt), Diamond);
    assert_eq!(compose_concatenation(Gt, Lt), Cross);
}

#[test]
fn normalize_examples() {
    let t = SelectivityTriple::new;
    assert_eq!(normalize(t(One, Cross, One)), t(One, Eq, One));
    assert_eq!(normalize(t(One, Diamond, One)), t(One, Eq, One));
    assert_eq!(normalize(t(N, Diamond, N)), t(N, Diamond, N));
    assert_eq!(normalize(t(One, Cross, N)), t(One, Lt, N));
    assert_eq!(normalize(t(N, Diamond, One)), t(N, Gt, One));
}

#[test]
fn concatenation_examples() {
    let t = SelectivityTriple::new;
    let chain = concat_triples(t(N, Eq, N), t(N, Gt, N)).and_then(|x| concat_triples(x, t(N, Eq, N)));
    assert_eq!(chain, Ok(t(N, Gt, N)));
    assert_eq!(concat_triples(t(N, Gt, One), t(One, Lt, N)), Ok(t(N, Cross, N)));
    assert!(concat_triples(t(N, Gt, One), t(N, Lt, N)).is_err());
    assert!(star_triple(t(N, Lt, N), false).is_err());
    assert_eq!(star_triple(t(N, Lt, N), true), Ok(t(N, Lt, N)));
    assert_eq!(star_triple(t(N, Gt, N), true), Ok(t(N, Gt, N)));
}

#[test]
fn alpha_hat_classes() {
    let t = SelectivityTriple::new;
    assert_eq!(selectivity_class(t(One, Eq, One)), SelectivityClass::Constant);
    assert_eq!(selectivity_class(t(N, Eq, N)), SelectivityClass::Linear);
    assert_eq!(selectivity_class(t(N, Diamond, N)), SelectivityClass::Linear);
    assert_eq!(selectivity_class(t(One, Lt, N)), SelectivityClass::Linear);
    assert_eq!(selectivity_class(t(N, Cross, N)), SelectivityClass::Quadratic);
}

#[test]
fn alpha_hat_is_monotone_under_disjunction() {
    for t1 in SelectivityTriple::all_normalized() {
        for t2 in SelectivityTriple::all_normalized() {
            if (t1.left, t1.right) != (t2.left, t2.right) {
                continue;
            }
            let d = disjoin_triples(t1, t2);
            assert!(alpha_hat(d) >= alpha_hat(t1).max(alpha_hat(t2)), "{t1} + {t2} = {d}");
        }
    }
}

#[test]
fn schema_graph_size_bound() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bib.xml")).unwrap();
    let cfg = parse_graph_config(&text).unwrap();
    let g = build_schema_graph(&cfg);
    assert!(g.len() <= cfg.node_types.len() * 13);
    for node in &g.nodes {
        assert!(node.triple.is_normalized(), "{}", node.triple);
    }
}

fn any_triple() -> impl Strategy<Value = SelectivityTriple> {
    let class = prop_oneof![Just(One), Just(N)];
    (class.clone(), proptest::sample::select(OPS.to_vec()), class)
        .prop_map(|(l, o, r)| SelectivityTriple::new(l, o, r))
}

proptest! {
    #[test]
    fn normalize_is_idempotent(t in any_triple()) {
        let once = normalize(t);
        prop_assert_eq!(normalize(once), once);
        prop_assert!(SelectivityTriple::all_normalized().contains(&once));
    }

    #[test]
    fn mirror_reverses_concatenation(a in any_triple(), b in any_triple()) {
        // (p . q) reversed is q^- . p^-.
        if let Ok(ab) = concat_triples(normalize(a), normalize(b)) {
            let ba = concat_triples(normalize(b).mirror(), normalize(a).mirror()).unwrap();
            prop_assert_eq!(ab.mirror(), ba);
        }
    }
}

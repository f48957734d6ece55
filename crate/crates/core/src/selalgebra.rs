//! Selectivity classes of binary path queries.
//!
//! A triple `(t_A, op, t_B)` abstracts how the answers of a path query from
//! nodes of type `A` to nodes of type `B` grow with the graph. `t` is `ONE`
//! for fixed-size types and `N` for types that scale; `op` records which
//! side has bounded fan:
//!
//! | op | fan-out | fan-in |
//! |----|---------|--------|
//! | `=` | bounded | bounded |
//! | `<` | unbounded | bounded |
//! | `>` | bounded | unbounded |
//! | `◇` | unbounded | unbounded, sub-quadratic |
//! | `×` | unbounded | unbounded, quadratic |

use std::fmt;

use thiserror::Error;

use crate::config::{CountConstraint, EdgeConstraint, GraphConfiguration, NodeType, SelectivityClass};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("cannot concatenate {0} with {1}: middle size classes differ")]
    Incompatible(SelectivityTriple, SelectivityTriple),
    #[error("star is only defined when both endpoints have the same type")]
    StarEndpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeClass {
    One,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelOp {
    Eq,
    Lt,
    Gt,
    Diamond,
    Cross,
}

impl SelOp {
    pub const ALL: [SelOp; 5] = [SelOp::Eq, SelOp::Lt, SelOp::Gt, SelOp::Diamond, SelOp::Cross];

    fn index(self) -> usize {
        self as usize
    }

    /// Operator of the reversed relation.
    pub fn mirror(self) -> SelOp {
        match self {
            SelOp::Lt => SelOp::Gt,
            SelOp::Gt => SelOp::Lt,
            other => other,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            SelOp::Eq => "=",
            SelOp::Lt => "<",
            SelOp::Gt => ">",
            SelOp::Diamond => "◇",
            SelOp::Cross => "×",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::One => "1",
            SizeClass::N => "N",
        })
    }
}

impl fmt::Display for SelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

use SelOp::{Cross as X, Diamond as D, Eq as E, Gt as G, Lt as L};

// Indexed [o1][o2].
const DISJUNCTION: [[SelOp; 5]; 5] = [
    [E, L, G, D, X],
    [L, L, D, D, X],
    [G, D, G, D, X],
    [D, D, D, D, X],
    [X, X, X, X, X],
];

// Indexed [o1][o2]: o1 is the left operand of the concatenation.
const CONCATENATION: [[SelOp; 5]; 5] = [
    [E, L, G, D, X],
    [L, L, D, D, X],
    [G, X, G, X, X],
    [D, X, D, X, X],
    [X, X, X, X, X],
];

pub fn compose_disjunction(o1: SelOp, o2: SelOp) -> SelOp {
    DISJUNCTION[o1.index()][o2.index()]
}

pub fn compose_concatenation(o1: SelOp, o2: SelOp) -> SelOp {
    CONCATENATION[o1.index()][o2.index()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SelectivityTriple {
    pub left: SizeClass,
    pub op: SelOp,
    pub right: SizeClass,
}

impl SelectivityTriple {
    pub const fn new(left: SizeClass, op: SelOp, right: SizeClass) -> Self {
        SelectivityTriple { left, op, right }
    }

    /// Triple of the reversed relation.
    pub fn mirror(self) -> Self {
        SelectivityTriple::new(self.right, self.op.mirror(), self.left)
    }

    pub fn is_normalized(self) -> bool {
        normalize(self) == self
    }

    /// All triples that can appear after normalization.
    pub fn all_normalized() -> Vec<SelectivityTriple> {
        let mut out = vec![
            SelectivityTriple::new(SizeClass::One, SelOp::Eq, SizeClass::One),
            SelectivityTriple::new(SizeClass::One, SelOp::Lt, SizeClass::N),
            SelectivityTriple::new(SizeClass::N, SelOp::Gt, SizeClass::One),
        ];
        out.extend(SelOp::ALL.iter().map(|&op| SelectivityTriple::new(SizeClass::N, op, SizeClass::N)));
        out
    }
}

impl fmt::Display for SelectivityTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.left, self.op, self.right)
    }
}

pub fn type_size_class(t: &NodeType) -> SizeClass {
    match t.count {
        CountConstraint::Fixed(_) => SizeClass::One,
        CountConstraint::Proportion(_) => SizeClass::N,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub fn base_triple(constraint: &EdgeConstraint, direction: Direction, schema: &GraphConfiguration) -> SelectivityTriple {
    let ta = type_size_class(schema.node_type(constraint.source));
    let tb = type_size_class(schema.node_type(constraint.target));
    let op = match (ta, tb) {
        (SizeClass::N, SizeClass::One) => SelOp::Gt,
        (SizeClass::One, SizeClass::N) => SelOp::Lt,
        (SizeClass::One, SizeClass::One) => SelOp::Eq,
        (SizeClass::N, SizeClass::N) => match (constraint.d_out.is_zipfian(), constraint.d_in.is_zipfian()) {
            (true, true) => SelOp::Diamond,
            (true, false) => SelOp::Lt,
            (false, true) => SelOp::Gt,
            (false, false) => SelOp::Eq,
        },
    };
    let forward = SelectivityTriple::new(ta, op, tb);
    match direction {
        Direction::Forward => forward,
        Direction::Inverse => forward.mirror(),
    }
}

pub fn normalize(t: SelectivityTriple) -> SelectivityTriple {
    use SizeClass::*;
    match (t.left, t.right) {
        (One, One) => SelectivityTriple::new(One, SelOp::Eq, One),
        (One, N) => SelectivityTriple::new(One, SelOp::Lt, N),
        (N, One) => SelectivityTriple::new(N, SelOp::Gt, One),
        (N, N) => t,
    }
}

pub fn concat_triples(t1: SelectivityTriple, t2: SelectivityTriple) -> Result<SelectivityTriple, AlgebraError> {
    if t1.right != t2.left {
        return Err(AlgebraError::Incompatible(t1, t2));
    }
    Ok(normalize(SelectivityTriple::new(
        t1.left,
        compose_concatenation(t1.op, t2.op),
        t2.right,
    )))
}

/// Disjunction of two triples over the same pair of types.
pub fn disjoin_triples(t1: SelectivityTriple, t2: SelectivityTriple) -> SelectivityTriple {
    debug_assert_eq!((t1.left, t1.right), (t2.left, t2.right));
    normalize(SelectivityTriple::new(t1.left, compose_disjunction(t1.op, t2.op), t1.right))
}

pub fn star_triple(t: SelectivityTriple, same_endpoint_type: bool) -> Result<SelectivityTriple, AlgebraError> {
    if !same_endpoint_type {
        return Err(AlgebraError::StarEndpoints);
    }
    concat_triples(t, t)
}

pub fn alpha_hat(t: SelectivityTriple) -> u8 {
    match (t.left, t.op, t.right) {
        (SizeClass::One, SelOp::Eq, SizeClass::One) => 0,
        (SizeClass::N, SelOp::Cross, SizeClass::N) => 2,
        _ => 1,
    }
}

pub fn selectivity_class(t: SelectivityTriple) -> SelectivityClass {
    SelectivityClass::from_alpha(alpha_hat(t)).expect("alpha_hat is within 0..=2")
}

pub fn epsilon_triple(t: &NodeType) -> SelectivityTriple {
    let c = type_size_class(t);
    SelectivityTriple::new(c, SelOp::Eq, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DegreeDistribution as Dd, Predicate, PredicateId, TypeId};
    use SizeClass::{One, N};

    fn t(l: SizeClass, op: SelOp, r: SizeClass) -> SelectivityTriple {
        SelectivityTriple::new(l, op, r)
    }

    fn example_one() -> GraphConfiguration {
        let ty = |name: &str, count| NodeType { name: name.into(), count };
        let c = |s, tg, p, d_in, d_out| EdgeConstraint {
            source: TypeId(s),
            target: TypeId(tg),
            predicate: PredicateId(p),
            d_in,
            d_out,
        };
        GraphConfiguration {
            n: 5,
            predicates: vec![Predicate { name: "a".into() }, Predicate { name: "b".into() }],
            node_types: vec![
                ty("T1", CountConstraint::Proportion(0.6)),
                ty("T2", CountConstraint::Proportion(0.2)),
                ty("T3", CountConstraint::Fixed(1)),
            ],
            constraints: vec![
                c(0, 0, 0, Dd::Gaussian { mu: 2.0, sigma: 1.0 }, Dd::Zipfian { s: 2.5, max: None }),
                c(0, 1, 1, Dd::Uniform { min: 1, max: 3 }, Dd::Gaussian { mu: 1.0, sigma: 1.0 }),
                c(1, 1, 1, Dd::Gaussian { mu: 1.0, sigma: 1.0 }, Dd::NonSpecified),
                c(1, 2, 1, Dd::NonSpecified, Dd::Uniform { min: 1, max: 1 }),
            ],
        }
    }

    #[test]
    fn size_classes() {
        let cfg = example_one();
        assert_eq!(type_size_class(&cfg.node_types[0]), N);
        assert_eq!(type_size_class(&cfg.node_types[2]), One);
        let city = NodeType { name: "city".into(), count: CountConstraint::Fixed(100) };
        assert_eq!(type_size_class(&city), One);
        assert_eq!(epsilon_triple(&city), t(One, SelOp::Eq, One));
        assert_eq!(epsilon_triple(&cfg.node_types[0]), t(N, SelOp::Eq, N));
    }

    #[test]
    fn base_triples_of_example_one() {
        let cfg = example_one();
        let c = &cfg.constraints;
        assert_eq!(base_triple(&c[0], Direction::Forward, &cfg), t(N, SelOp::Lt, N));
        assert_eq!(base_triple(&c[0], Direction::Inverse, &cfg), t(N, SelOp::Gt, N));
        assert_eq!(base_triple(&c[1], Direction::Forward, &cfg), t(N, SelOp::Eq, N));
        assert_eq!(base_triple(&c[3], Direction::Forward, &cfg), t(N, SelOp::Gt, One));
        assert_eq!(base_triple(&c[3], Direction::Inverse, &cfg), t(One, SelOp::Lt, N));
    }

    #[test]
    fn named_cells() {
        assert_eq!(compose_disjunction(SelOp::Lt, SelOp::Gt), SelOp::Diamond);
        assert_eq!(compose_concatenation(SelOp::Lt, SelOp::Gt), SelOp::Diamond);
        assert_eq!(compose_concatenation(SelOp::Gt, SelOp::Lt), SelOp::Cross);
        for o in SelOp::ALL {
            assert_eq!(compose_disjunction(SelOp::Eq, o), o);
            assert_eq!(compose_concatenation(SelOp::Eq, o), o);
            assert_eq!(compose_disjunction(SelOp::Cross, o), SelOp::Cross);
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize(t(One, SelOp::Cross, One)), t(One, SelOp::Eq, One));
        assert_eq!(normalize(t(One, SelOp::Diamond, One)), t(One, SelOp::Eq, One));
        assert_eq!(normalize(t(N, SelOp::Diamond, N)), t(N, SelOp::Diamond, N));
        assert_eq!(normalize(t(One, SelOp::Cross, N)), t(One, SelOp::Lt, N));
    }

    #[test]
    fn triple_concatenation() {
        let eq = t(N, SelOp::Eq, N);
        let gt = t(N, SelOp::Gt, N);
        let chained = concat_triples(concat_triples(eq, gt).unwrap(), eq).unwrap();
        assert_eq!(chained, gt);
        assert_eq!(
            concat_triples(t(N, SelOp::Gt, One), t(One, SelOp::Lt, N)).unwrap(),
            t(N, SelOp::Cross, N)
        );
        assert_eq!(concat_triples(eq, eq).unwrap(), eq);
        assert!(concat_triples(t(N, SelOp::Gt, One), eq).is_err());
    }

    #[test]
    fn stars() {
        assert_eq!(star_triple(t(N, SelOp::Lt, N), true).unwrap(), t(N, SelOp::Lt, N));
        assert_eq!(star_triple(t(N, SelOp::Diamond, N), true).unwrap(), t(N, SelOp::Cross, N));
        assert_eq!(star_triple(t(N, SelOp::Eq, N), true).unwrap(), t(N, SelOp::Eq, N));
        assert_eq!(star_triple(t(N, SelOp::Eq, N), false), Err(AlgebraError::StarEndpoints));
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha_hat(t(One, SelOp::Eq, One)), 0);
        assert_eq!(alpha_hat(t(N, SelOp::Cross, N)), 2);
        assert_eq!(alpha_hat(t(N, SelOp::Diamond, N)), 1);
    }

    #[test]
    fn normalized_triple_count() {
        let all = SelectivityTriple::all_normalized();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|t| t.is_normalized()));
    }
}

//! Query workload generation.
//!
//! A query is built in four steps: a shape-specific skeleton of conjunct
//! placeholders, a choice of head variables, an assignment of schema-graph
//! nodes to the skeleton's variables, and finally the instantiation of each
//! placeholder with concrete label paths.
//!
//! The assignment is a walk on the selectivity graph. For every chain of the
//! skeleton the walk starts at an ε seed and takes one step per conjunct, so
//! the node reached after a conjunct carries the selectivity triple of the
//! whole chain prefix. A starred conjunct stays on its node: its disjuncts
//! are label paths from the type's seed back to that seed, whose own triple
//! is `(c, =, c)` and therefore leaves the prefix triple unchanged. When the
//! workload asks for a selectivity class, the main chain must end on a node
//! of that class.
//!
//! Each placeholder then gets a number of disjuncts and a length per
//! disjunct; every disjunct is a label path drawn uniformly among the
//! schema-graph paths of that length between the two assigned nodes. If no
//! path has the requested length, the nearest feasible length is used and
//! the query records a relaxation. A final check recomputes the class of the
//! emitted regular expressions with the algebra and retries on mismatch.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use roxmltree::{Document, Node};
use thiserror::Error;

use crate::config::{
    ConfigError, GraphConfiguration, Interval, QueryShape, QuerySize, SelectivityClass, TypeId, WorkloadConfiguration,
};
use crate::distributions::RandomStream;
use crate::selalgebra::{
    alpha_hat, base_triple, concat_triples, disjoin_triples, epsilon_triple, Direction, SelectivityTriple,
};
use crate::selstructs::{draw_path_from, qualifies, weighted_index, Label, SchemaStructures};

/// Fresh attempts per query before it is reported as failed.
pub const RETRY_BUDGET: usize = 50;
/// Relaxed lengths may exceed the configured maximum by this much.
pub const RELAXATION_MARGIN: usize = 2;
/// Redraws spent trying to avoid a duplicate disjunct within a conjunct.
const DISTINCT_DISJUNCT_TRIES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryGenError {
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("instantiation failed: {0}")]
    Instantiation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub predicate: String,
    pub inverse: bool,
}

impl Symbol {
    pub fn forward(name: &str) -> Self {
        Symbol { predicate: name.to_string(), inverse: false }
    }

    pub fn inverse(name: &str) -> Self {
        Symbol { predicate: name.to_string(), inverse: true }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "{}-", self.predicate)
        } else {
            f.write_str(&self.predicate)
        }
    }
}

pub type PathExpr = Vec<Symbol>;

/// `(P1 + ... + Pk)` or `(P1 + ... + Pk)*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegularExpression {
    pub disjuncts: Vec<PathExpr>,
    pub star: bool,
}

impl fmt::Display for RegularExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, p) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let parts: Vec<String> = p.iter().map(|s| s.to_string()).collect();
            f.write_str(&parts.join("."))?;
        }
        f.write_str(")")?;
        if self.star {
            f.write_str("*")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

impl std::str::FromStr for Var {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('x')
            .and_then(|d| d.parse().ok())
            .filter(|&d| d >= 1)
            .map(Var)
            .ok_or_else(|| format!("bad variable name {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conjunct {
    pub from: Var,
    pub regex: RegularExpression,
    pub to: Var,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRule {
    pub head: Vec<Var>,
    pub body: Vec<Conjunct>,
}

impl QueryRule {
    pub fn variables(&self) -> Vec<Var> {
        let mut vars: Vec<Var> = self.body.iter().flat_map(|c| [c.from, c.to]).collect();
        vars.sort();
        vars.dedup();
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryMetadata {
    pub shape: QueryShape,
    /// Target class; `None` when the workload does not control selectivity.
    pub selectivity: Option<SelectivityClass>,
    pub relaxations: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: usize,
    pub rules: Vec<QueryRule>,
    pub metadata: QueryMetadata,
}

impl Query {
    pub fn head(&self) -> &[Var] {
        &self.rules[0].head
    }

    pub fn arity(&self) -> usize {
        self.head().len()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, rule) in self.rules.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let head: Vec<String> = rule.head.iter().map(|v| format!("?{v}")).collect();
            write!(f, "({}) <- ", head.join(","))?;
            for (j, c) in rule.body.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "(?{}, {}, ?{})", c.from, c.regex, c.to)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Skeletons

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonConjunct {
    pub from: Var,
    pub to: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainRole {
    /// Runs between the two designated endpoints.
    Main,
    /// Second chain of a cycle; ends on the main chain's last variable.
    Closing,
    /// Hangs off a variable of the main chain; free end.
    Branch,
}

/// Consecutive conjuncts starting at `root`. The first chain is always the
/// main one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub role: ChainRole,
    pub root: Var,
    pub conjuncts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySkeleton {
    pub shape: QueryShape,
    pub conjuncts: Vec<SkeletonConjunct>,
    pub chains: Vec<Chain>,
    pub num_vars: u32,
}

impl QuerySkeleton {
    /// Start and end of the main chain.
    pub fn endpoints(&self) -> (Var, Var) {
        let main = &self.chains[0];
        let last = *main.conjuncts.last().expect("chains are non-empty");
        (main.root, self.conjuncts[last].to)
    }

    pub fn variables(&self) -> Vec<Var> {
        (1..=self.num_vars).map(Var).collect()
    }
}

struct SkeletonBuilder {
    conjuncts: Vec<SkeletonConjunct>,
    chains: Vec<Chain>,
    next_var: u32,
}

impl SkeletonBuilder {
    fn new() -> Self {
        SkeletonBuilder { conjuncts: Vec::new(), chains: Vec::new(), next_var: 2 }
    }

    fn fresh(&mut self) -> Var {
        let v = Var(self.next_var);
        self.next_var += 1;
        v
    }

    /// Adds `len` conjuncts from `root`; the last one ends at `end` if given.
    fn chain(&mut self, role: ChainRole, root: Var, len: usize, end: Option<Var>) -> Vec<Var> {
        let mut vars = vec![root];
        let mut ids = Vec::with_capacity(len);
        for i in 0..len {
            let to = match end {
                Some(e) if i + 1 == len => e,
                _ => self.fresh(),
            };
            ids.push(self.conjuncts.len());
            self.conjuncts.push(SkeletonConjunct { from: *vars.last().unwrap(), to });
            vars.push(to);
        }
        self.chains.push(Chain { role, root, conjuncts: ids });
        vars
    }

    fn finish(self, shape: QueryShape) -> QuerySkeleton {
        QuerySkeleton {
            shape,
            conjuncts: self.conjuncts,
            chains: self.chains,
            num_vars: self.next_var - 1,
        }
    }
}

/// Uniform composition of `total` into `parts` positive summands.
fn random_composition(total: usize, parts: usize, rng: &mut RandomStream) -> Vec<usize> {
    debug_assert!(parts >= 1 && parts <= total);
    let mut cuts: Vec<usize> = sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

pub fn get_query_skeleton(shape: QueryShape, size: &QuerySize, rng: &mut RandomStream) -> Result<QuerySkeleton, QueryGenError> {
    let need = shape.min_conjuncts();
    if size.conjuncts.max < need {
        return Err(QueryGenError::Contract(format!(
            "shape {shape} needs at least {need} conjuncts, at most {} allowed",
            size.conjuncts.max
        )));
    }
    let c = rng.random_range(size.conjuncts.min.max(need)..=size.conjuncts.max);
    let mut b = SkeletonBuilder::new();
    let x1 = Var(1);
    match shape {
        QueryShape::Chain => {
            b.chain(ChainRole::Main, x1, c, None);
        }
        QueryShape::Star => {
            let k = rng.random_range(2..=c);
            let parts = random_composition(c, k, rng);
            b.chain(ChainRole::Main, x1, parts[0], None);
            for &len in &parts[1..] {
                b.chain(ChainRole::Branch, x1, len, None);
            }
        }
        QueryShape::Cycle => {
            let first = rng.random_range(1..c);
            let vars = b.chain(ChainRole::Main, x1, first, None);
            b.chain(ChainRole::Closing, x1, c - first, Some(*vars.last().unwrap()));
        }
        QueryShape::StarChain => {
            let backbone = rng.random_range(2..c);
            let vars = b.chain(ChainRole::Main, x1, backbone, None);
            let rest = c - backbone;
            let k = rng.random_range(1..=rest);
            let interior = &vars[1..vars.len() - 1];
            for len in random_composition(rest, k, rng) {
                let root = interior[rng.random_range(0..interior.len())];
                b.chain(ChainRole::Branch, root, len, None);
            }
        }
    }
    Ok(b.finish(shape))
}

pub fn add_projection_variables(
    skeleton: &QuerySkeleton,
    arity: Interval,
    selectivity_enforced: bool,
    rng: &mut RandomStream,
) -> Result<Vec<Var>, QueryGenError> {
    if selectivity_enforced {
        let (s, e) = skeleton.endpoints();
        return Ok(vec![s, e]);
    }
    let n = skeleton.num_vars as usize;
    if arity.min > n {
        return Err(QueryGenError::Contract(format!(
            "skeleton has {n} variables, fewer than the minimum arity {}",
            arity.min
        )));
    }
    let k = rng.random_range(arity.min..=arity.max.min(n));
    Ok(choose_vars(n, k, rng))
}

fn choose_vars(n: usize, k: usize, rng: &mut RandomStream) -> Vec<Var> {
    let mut head: Vec<Var> = sample(rng, n, k).into_iter().map(|i| Var(i as u32 + 1)).collect();
    head.sort();
    head
}

/// Disjunct lengths of one placeholder.
pub fn build_path_skeleton(size: &QuerySize, rng: &mut RandomStream) -> Vec<usize> {
    let d = rng.random_range(size.disjuncts.min..=size.disjuncts.max);
    (0..d)
        .map(|_| rng.random_range(size.path_length.min..=size.path_length.max))
        .collect()
}

// ---------------------------------------------------------------------------
// Assignment

/// Schema-graph nodes bound to the two ends of a placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConjunctAssignment {
    pub from_node: usize,
    pub to_node: usize,
    pub starred: bool,
}

impl ConjunctAssignment {
    /// (source type, prefix triple after the conjunct, target type).
    pub fn describe(&self, structures: &SchemaStructures) -> (TypeId, SelectivityTriple, TypeId) {
        let g = &structures.graph;
        (
            g.nodes[self.from_node].node_type,
            g.nodes[self.to_node].triple,
            g.nodes[self.to_node].node_type,
        )
    }
}

enum WalkStart<'a> {
    AnyOf(&'a [usize]),
    At(usize),
}

/// Draws a walk on the selectivity graph with one step per entry of `star`;
/// starred steps stay in place and need a seed self-loop. Uniform among all
/// admissible walks. Returns the visited nodes, start included.
fn draw_walk(
    st: &SchemaStructures,
    start: WalkStart<'_>,
    star: &[bool],
    accept_end: &dyn Fn(usize) -> bool,
    rng: &mut RandomStream,
) -> Option<Vec<usize>> {
    let n = st.graph.len();
    let steps = star.len();
    let self_ok: Vec<bool> = (0..n)
        .map(|v| {
            let seed = st.graph.seeds[st.graph.nodes[v].node_type.0];
            st.selectivity.has_edge(seed, seed)
        })
        .collect();
    let mut remaining: Vec<Vec<BigUint>> = vec![Vec::new(); steps + 1];
    remaining[steps] = (0..n)
        .map(|v| if accept_end(v) { BigUint::one() } else { BigUint::zero() })
        .collect();
    for i in (0..steps).rev() {
        let next = &remaining[i + 1];
        let row = (0..n)
            .map(|v| {
                if star[i] {
                    if self_ok[v] {
                        next[v].clone()
                    } else {
                        BigUint::zero()
                    }
                } else {
                    st.selectivity_succ[v].iter().fold(BigUint::zero(), |acc, &m| acc + &next[m])
                }
            })
            .collect();
        remaining[i] = row;
    }
    let first = match start {
        WalkStart::At(v) => {
            if remaining[0][v].is_zero() {
                return None;
            }
            v
        }
        WalkStart::AnyOf(cands) => cands[weighted_index(cands.iter().map(|&v| &remaining[0][v]), rng)?],
    };
    let mut walk = vec![first];
    let mut cur = first;
    for i in 0..steps {
        if !star[i] {
            let succ = &st.selectivity_succ[cur];
            cur = succ[weighted_index(succ.iter().map(|&m| &remaining[i + 1][m]), rng)
                .expect("positive count implies a positive successor")];
        }
        walk.push(cur);
    }
    Some(walk)
}

/// Binds every placeholder of `skeleton` to schema-graph nodes, chain by
/// chain. Star flags are drawn per conjunct with probability `p_r`; if the
/// drawn pattern admits no walk, the chain falls back to no stars.
pub fn assign_conjunct_types(
    skeleton: &QuerySkeleton,
    target: Option<SelectivityClass>,
    structures: &SchemaStructures,
    p_r: f64,
    rng: &mut RandomStream,
) -> Result<Vec<ConjunctAssignment>, QueryGenError> {
    let g = &structures.graph;
    let mut assignment: Vec<Option<ConjunctAssignment>> = vec![None; skeleton.conjuncts.len()];
    let mut var_node: HashMap<Var, usize> = HashMap::new();
    let main_end = skeleton.endpoints().1;

    for chain in &skeleton.chains {
        let star: Vec<bool> = chain.conjuncts.iter().map(|_| rng.random_bool(p_r)).collect();
        let root_seed = var_node.get(&chain.root).map(|&v| g.seeds[g.nodes[v].node_type.0]);
        let start = match root_seed {
            Some(s) => WalkStart::At(s),
            None => WalkStart::AnyOf(&g.seeds),
        };
        let end_type = match chain.role {
            ChainRole::Closing => Some(g.nodes[var_node[&main_end]].node_type),
            _ => None,
        };
        let class = match chain.role {
            ChainRole::Main | ChainRole::Closing => target,
            ChainRole::Branch => None,
        };
        let accept = |v: usize| {
            let node = &g.nodes[v];
            end_type.is_none_or(|t| node.node_type == t) && class.is_none_or(|c| qualifies(node, c))
        };
        let walk = match draw_walk(structures, start_clone(&start), &star, &accept, rng) {
            Some(w) => Some((w, star)),
            None if star.iter().any(|&s| s) => {
                let plain = vec![false; star.len()];
                draw_walk(structures, start, &plain, &accept, rng).map(|w| (w, plain))
            }
            None => None,
        };
        let (walk, star) = walk.ok_or_else(|| {
            QueryGenError::Instantiation(format!(
                "no walk of {} steps reaches an admissible node",
                chain.conjuncts.len()
            ))
        })?;
        var_node.entry(chain.root).or_insert(walk[0]);
        for (i, &cid) in chain.conjuncts.iter().enumerate() {
            let conj = skeleton.conjuncts[cid];
            assignment[cid] = Some(ConjunctAssignment {
                from_node: walk[i],
                to_node: walk[i + 1],
                starred: star[i],
            });
            var_node.entry(conj.to).or_insert(walk[i + 1]);
        }
    }
    Ok(assignment.into_iter().map(|a| a.expect("every conjunct lies on a chain")).collect())
}

fn start_clone<'a>(s: &WalkStart<'a>) -> WalkStart<'a> {
    match s {
        WalkStart::AnyOf(c) => WalkStart::AnyOf(c),
        WalkStart::At(v) => WalkStart::At(*v),
    }
}

// ---------------------------------------------------------------------------
// Instantiation

/// Candidate lengths by increasing distance from `requested`, shorter first
/// on ties, within `[1, max]`.
pub fn relaxation_order(requested: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if (1..=max).contains(&requested) {
        out.push(requested);
    }
    for delta in 1..=max.max(requested) {
        if requested > delta && requested - delta <= max {
            out.push(requested - delta);
        }
        if requested + delta <= max {
            out.push(requested + delta);
        }
    }
    out
}

fn label_symbol(label: Label, schema: &GraphConfiguration) -> Symbol {
    Symbol {
        predicate: schema.predicate(label.predicate).name.clone(),
        inverse: label.inverse,
    }
}

/// Fills one placeholder. Returns the expression and the number of relaxed
/// disjuncts.
fn instantiate_conjunct(
    a: &ConjunctAssignment,
    lengths: &[usize],
    structures: &SchemaStructures,
    schema: &GraphConfiguration,
    rng: &mut RandomStream,
) -> Result<(RegularExpression, u32), QueryGenError> {
    let g = &structures.graph;
    let (from, to) = if a.starred {
        let seed = g.seeds[g.nodes[a.from_node].node_type.0];
        (seed, seed)
    } else {
        (a.from_node, a.to_node)
    };
    let counts = structures.counts_to(to);
    let mut relaxed = 0;
    let mut disjuncts: Vec<PathExpr> = Vec::with_capacity(lengths.len());
    for &requested in lengths {
        let len = relaxation_order(requested, structures.max_length)
            .into_iter()
            .find(|&l| !counts.nb_path(from, l).is_zero())
            .ok_or_else(|| {
                QueryGenError::Instantiation(format!(
                    "no schema path between nodes {from} and {to} within length {}",
                    structures.max_length
                ))
            })?;
        if len != requested {
            relaxed += 1;
        }
        let mut path = Vec::new();
        for _ in 0..DISTINCT_DISJUNCT_TRIES {
            let drawn = draw_path_from(g, counts, from, len, rng).expect("length has a positive count");
            path = drawn.labels.iter().map(|&l| label_symbol(l, schema)).collect();
            if !disjuncts.contains(&path) {
                break;
            }
        }
        disjuncts.push(path);
    }
    Ok((RegularExpression { disjuncts, star: a.starred }, relaxed))
}

/// Turns an assigned skeleton into a rule body. `path_skeletons[i]` lists the
/// requested disjunct lengths of placeholder `i`.
pub fn instantiate_placeholders(
    skeleton: &QuerySkeleton,
    assignment: &[ConjunctAssignment],
    path_skeletons: &[Vec<usize>],
    structures: &SchemaStructures,
    schema: &GraphConfiguration,
    rng: &mut RandomStream,
) -> Result<(Vec<Conjunct>, u32), QueryGenError> {
    let mut body = Vec::with_capacity(skeleton.conjuncts.len());
    let mut relaxations = 0;
    for (i, sc) in skeleton.conjuncts.iter().enumerate() {
        let (regex, r) = instantiate_conjunct(&assignment[i], &path_skeletons[i], structures, schema, rng)?;
        relaxations += r;
        body.push(Conjunct { from: sc.from, regex, to: sc.to });
    }
    Ok((body, relaxations))
}

// ---------------------------------------------------------------------------
// Algebra audit

/// Triple of an expression for every pair of types it can connect.
type TypeMap = HashMap<(TypeId, TypeId), SelectivityTriple>;

fn merge_into(map: &mut TypeMap, key: (TypeId, TypeId), t: SelectivityTriple) {
    map.entry(key).and_modify(|old| *old = disjoin_triples(*old, t)).or_insert(t);
}

fn compose_maps(m1: &TypeMap, m2: &TypeMap) -> TypeMap {
    let mut out = TypeMap::new();
    for (&(a, c), &t1) in m1 {
        for (&(c2, b), &t2) in m2 {
            if c == c2 {
                let t = concat_triples(t1, t2).expect("shared middle type has one size class");
                merge_into(&mut out, (a, b), t);
            }
        }
    }
    out
}

/// Recomputes triples of regular expressions from the schema alone.
pub struct Auditor<'a> {
    schema: &'a GraphConfiguration,
    symbols: HashMap<Symbol, TypeMap>,
}

impl<'a> Auditor<'a> {
    pub fn new(schema: &'a GraphConfiguration) -> Self {
        let mut symbols: HashMap<Symbol, TypeMap> = HashMap::new();
        for c in &schema.constraints {
            let name = &schema.predicate(c.predicate).name;
            merge_into(
                symbols.entry(Symbol::forward(name)).or_default(),
                (c.source, c.target),
                base_triple(c, Direction::Forward, schema),
            );
            merge_into(
                symbols.entry(Symbol::inverse(name)).or_default(),
                (c.target, c.source),
                base_triple(c, Direction::Inverse, schema),
            );
        }
        Auditor { schema, symbols }
    }

    fn epsilon(&self) -> TypeMap {
        self.schema
            .node_types
            .iter()
            .enumerate()
            .map(|(i, t)| ((TypeId(i), TypeId(i)), epsilon_triple(t)))
            .collect()
    }

    pub fn path_map(&self, path: &[Symbol]) -> TypeMap {
        let mut acc = self.epsilon();
        for s in path {
            let m = self.symbols.get(s).cloned().unwrap_or_default();
            acc = compose_maps(&acc, &m);
        }
        acc
    }

    pub fn regex_map(&self, regex: &RegularExpression) -> TypeMap {
        let mut d = TypeMap::new();
        for p in &regex.disjuncts {
            for (k, t) in self.path_map(p) {
                merge_into(&mut d, k, t);
            }
        }
        if !regex.star {
            return d;
        }
        // Least fixpoint of S = ε + S·D over a finite lattice.
        let mut s = self.epsilon();
        loop {
            let mut next = s.clone();
            for (k, t) in compose_maps(&s, &d) {
                merge_into(&mut next, k, t);
            }
            if next == s {
                return s;
            }
            s = next;
        }
    }

    /// Largest estimated exponent over the directed conjunct paths linking
    /// the two head variables of a binary rule.
    pub fn rule_alpha(&self, rule: &QueryRule) -> Option<u8> {
        if rule.head.len() != 2 {
            return None;
        }
        let maps: Vec<TypeMap> = rule.body.iter().map(|c| self.regex_map(&c.regex)).collect();
        let mut best = None;
        let mut stack: Vec<(Var, TypeMap, Vec<bool>)> = vec![(rule.head[0], self.epsilon(), vec![false; rule.body.len()])];
        while let Some((v, acc, used)) = stack.pop() {
            if v == rule.head[1] && used.iter().any(|&u| u) {
                if let Some(a) = acc.values().map(|&t| alpha_hat(t)).max() {
                    best = Some(best.map_or(a, |b: u8| b.max(a)));
                }
                continue;
            }
            for (i, c) in rule.body.iter().enumerate() {
                if !used[i] && c.from == v {
                    let mut u = used.clone();
                    u[i] = true;
                    stack.push((c.to, compose_maps(&acc, &maps[i]), u));
                }
            }
        }
        best
    }

    pub fn query_alpha(&self, q: &Query) -> Option<u8> {
        q.rules.iter().filter_map(|r| self.rule_alpha(r)).max()
    }
}

// ---------------------------------------------------------------------------
// Queries and workloads

/// Renames the variables of `rule` so that its head reads `target`.
fn align_head(rule: &mut QueryRule, target: &[Var]) {
    let mut map: HashMap<Var, Var> = HashMap::new();
    for (h, t) in rule.head.iter().zip(target) {
        map.insert(*h, *t);
    }
    let mut taken: Vec<Var> = target.to_vec();
    for v in rule.variables() {
        if map.contains_key(&v) {
            continue;
        }
        let mut k = 1;
        while taken.contains(&Var(k)) {
            k += 1;
        }
        taken.push(Var(k));
        map.insert(v, Var(k));
    }
    for c in &mut rule.body {
        c.from = map[&c.from];
        c.to = map[&c.to];
    }
    rule.head = target.to_vec();
}

/// Generates queries against one workload configuration.
pub struct QueryGenerator<'a> {
    pub config: &'a WorkloadConfiguration,
    pub structures: SchemaStructures,
    auditor: Auditor<'a>,
}

impl<'a> QueryGenerator<'a> {
    pub fn new(config: &'a WorkloadConfiguration) -> Self {
        let size = &config.size;
        let structures = SchemaStructures::new(
            &config.graph,
            size.path_length.min,
            size.path_length.max,
            size.path_length.max + RELAXATION_MARGIN,
        );
        QueryGenerator { config, structures, auditor: Auditor::new(&config.graph) }
    }

    pub fn auditor(&self) -> &Auditor<'a> {
        &self.auditor
    }

    fn rule(
        &self,
        shape: QueryShape,
        target: Option<SelectivityClass>,
        arity: Option<usize>,
        rng: &mut RandomStream,
    ) -> Result<(QueryRule, u32), QueryGenError> {
        let cfg = self.config;
        let skeleton = get_query_skeleton(shape, &cfg.size, rng)?;
        let head = match arity {
            _ if target.is_some() => add_projection_variables(&skeleton, cfg.arity, true, rng)?,
            None => add_projection_variables(&skeleton, cfg.arity, false, rng)?,
            Some(k) if k <= skeleton.num_vars as usize => choose_vars(skeleton.num_vars as usize, k, rng),
            Some(k) => {
                return Err(QueryGenError::Instantiation(format!(
                    "rule skeleton has fewer than {k} variables"
                )))
            }
        };
        let assignment = assign_conjunct_types(&skeleton, target, &self.structures, cfg.recursion_probability, rng)?;
        let paths: Vec<Vec<usize>> = skeleton.conjuncts.iter().map(|_| build_path_skeleton(&cfg.size, rng)).collect();
        let (body, relaxations) =
            instantiate_placeholders(&skeleton, &assignment, &paths, &self.structures, &cfg.graph, rng)?;
        Ok((QueryRule { head, body }, relaxations))
    }

    fn attempt(
        &self,
        id: usize,
        shape: QueryShape,
        target: Option<SelectivityClass>,
        rng: &mut RandomStream,
    ) -> Result<Query, QueryGenError> {
        let rules_n = rng.random_range(self.config.size.rules.min..=self.config.size.rules.max);
        let mut rules: Vec<QueryRule> = Vec::with_capacity(rules_n);
        let mut relaxations = 0;
        for _ in 0..rules_n {
            let arity = rules.first().map(|r| r.head.len());
            let (mut rule, r) = self.rule(shape, target, arity, rng)?;
            if let Some(first) = rules.first() {
                align_head(&mut rule, &first.head);
            }
            relaxations += r;
            rules.push(rule);
        }
        let q = Query {
            id,
            rules,
            metadata: QueryMetadata { shape, selectivity: target, relaxations },
        };
        if let Some(class) = target {
            let got = self.auditor.query_alpha(&q);
            if got != Some(class.alpha()) {
                return Err(QueryGenError::Instantiation(format!(
                    "algebra check gives {got:?}, target {}",
                    class
                )));
            }
        }
        Ok(q)
    }

    /// One query with up to [`RETRY_BUDGET`] attempts.
    pub fn generate_query(
        &self,
        id: usize,
        shape: QueryShape,
        target: Option<SelectivityClass>,
        rng: &mut RandomStream,
    ) -> Result<Query, QueryGenError> {
        let mut last = None;
        for _ in 0..RETRY_BUDGET {
            match self.attempt(id, shape, target, rng) {
                Ok(q) => return Ok(q),
                Err(e @ QueryGenError::Contract(_)) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("budget is positive"))
    }
}

/// Class of the `i`-th query: equal blocks per class, earlier classes take
/// the remainder.
pub fn class_for_index(i: usize, total: usize, classes: &[SelectivityClass]) -> SelectivityClass {
    let k = classes.len();
    let base = total / k;
    let extra = total % k;
    let mut start = 0;
    for (c, &class) in classes.iter().enumerate() {
        let quota = base + usize::from(c < extra);
        if i < start + quota {
            return class;
        }
        start += quota;
    }
    *classes.last().expect("non-empty class list")
}

#[derive(Debug, Error, Clone)]
#[error("{} of {total} queries could not be generated (indices {failed:?})", failed.len())]
pub struct WorkloadError {
    pub total: usize,
    pub failed: Vec<usize>,
    pub reasons: Vec<QueryGenError>,
    /// Successfully generated queries, in index order.
    pub partial: Vec<Query>,
}

pub fn generate_workload(cfg: &WorkloadConfiguration, seed: u64) -> Result<Vec<Query>, WorkloadError> {
    generate_workload_with(cfg, seed, 1)
}

/// Each query uses the child stream of its index, so the result does not
/// depend on `threads`.
pub fn generate_workload_with(cfg: &WorkloadConfiguration, seed: u64, threads: usize) -> Result<Vec<Query>, WorkloadError> {
    let generator = QueryGenerator::new(cfg);
    let root = RandomStream::new(seed);
    let one = |i: usize| {
        let mut rng = root.child(i as u64);
        let shape = cfg.shapes[rng.random_range(0..cfg.shapes.len())];
        let target = cfg.selectivities.as_deref().map(|cl| class_for_index(i, cfg.num_queries, cl));
        generator.generate_query(i, shape, target, &mut rng)
    };
    let results: Vec<Result<Query, QueryGenError>> = if threads > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| (0..cfg.num_queries).into_par_iter().map(one).collect()),
            Err(_) => (0..cfg.num_queries).map(one).collect(),
        }
    } else {
        (0..cfg.num_queries).map(one).collect()
    };
    let mut queries = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    let mut reasons = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(q) => queries.push(q),
            Err(e) => {
                failed.push(i);
                reasons.push(e);
            }
        }
    }
    if failed.is_empty() {
        Ok(queries)
    } else {
        Err(WorkloadError { total: cfg.num_queries, failed, reasons, partial: queries })
    }
}

// ---------------------------------------------------------------------------
// Workload XML

pub fn workload_to_xml(queries: &[Query]) -> String {
    let mut out = String::from("<workload>\n");
    for q in queries {
        let _ = write!(out, "  <query id=\"{}\" shape=\"{}\"", q.id, q.metadata.shape);
        if let Some(c) = q.metadata.selectivity {
            let _ = write!(out, " selectivity=\"{c}\"");
        }
        let _ = writeln!(out, " relaxations=\"{}\">", q.metadata.relaxations);
        if q.head().is_empty() {
            out.push_str("    <head/>\n");
        } else {
            out.push_str("    <head>");
            for v in q.head() {
                let _ = write!(out, "<var name=\"{v}\"/>");
            }
            out.push_str("</head>\n");
        }
        for rule in &q.rules {
            out.push_str("    <rule>\n");
            for c in &rule.body {
                let _ = writeln!(
                    out,
                    "      <conjunct from=\"{}\" to=\"{}\" star=\"{}\">",
                    c.from,
                    c.to,
                    u8::from(c.regex.star)
                );
                for d in &c.regex.disjuncts {
                    out.push_str("        <disjunct>");
                    for s in d {
                        let _ = write!(out, "<symbol name=\"{}\" inverse=\"{}\"/>", s.predicate, u8::from(s.inverse));
                    }
                    out.push_str("</disjunct>\n");
                }
                out.push_str("      </conjunct>\n");
            }
            out.push_str("    </rule>\n");
        }
        out.push_str("  </query>\n");
    }
    out.push_str("</workload>\n");
    out
}

fn xml_err(doc: &Document<'_>, node: Node<'_, '_>, msg: impl Into<String>) -> ConfigError {
    let pos = doc.text_pos_at(node.range().start);
    ConfigError::Syntax { line: pos.row, column: pos.col, message: msg.into() }
}

fn attr<'n>(doc: &Document<'_>, node: Node<'n, '_>, name: &str) -> Result<&'n str, ConfigError> {
    node.attribute(name)
        .ok_or_else(|| xml_err(doc, node, format!("<{}> is missing attribute {name:?}", node.tag_name().name())))
}

fn flag(doc: &Document<'_>, node: Node<'_, '_>, name: &str) -> Result<bool, ConfigError> {
    match attr(doc, node, name)? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(xml_err(doc, node, format!("attribute {name:?} must be 0 or 1, got {other:?}"))),
    }
}

fn var_attr(doc: &Document<'_>, node: Node<'_, '_>, name: &str) -> Result<Var, ConfigError> {
    attr(doc, node, name)?.parse().map_err(|e: String| xml_err(doc, node, e))
}

fn check_tag(doc: &Document<'_>, node: Node<'_, '_>, tag: &str) -> Result<(), ConfigError> {
    if node.tag_name().name() == tag {
        Ok(())
    } else {
        Err(xml_err(doc, node, format!("expected <{tag}>, found <{}>", node.tag_name().name())))
    }
}

fn elements<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element())
}

/// Reads a workload written by [`workload_to_xml`].
pub fn parse_workload_xml(text: &str) -> Result<Vec<Query>, ConfigError> {
    let doc = Document::parse(text).map_err(|e| ConfigError::Syntax {
        line: e.pos().row,
        column: e.pos().col,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    check_tag(&doc, root, "workload")?;
    let mut queries = Vec::new();
    for qn in elements(root) {
        check_tag(&doc, qn, "query")?;
        let id = attr(&doc, qn, "id")?
            .parse()
            .map_err(|_| xml_err(&doc, qn, "query id must be a non-negative integer"))?;
        let shape: QueryShape = attr(&doc, qn, "shape")?.parse()?;
        let selectivity = qn.attribute("selectivity").map(str::parse::<SelectivityClass>).transpose()?;
        let relaxations = attr(&doc, qn, "relaxations")?
            .parse()
            .map_err(|_| xml_err(&doc, qn, "relaxations must be a non-negative integer"))?;
        let mut head = None;
        let mut rules = Vec::new();
        for child in elements(qn) {
            match child.tag_name().name() {
                "head" if head.is_none() => {
                    let mut vars = Vec::new();
                    for v in elements(child) {
                        check_tag(&doc, v, "var")?;
                        vars.push(var_attr(&doc, v, "name")?);
                    }
                    head = Some(vars);
                }
                "rule" => {
                    let mut body = Vec::new();
                    for cn in elements(child) {
                        check_tag(&doc, cn, "conjunct")?;
                        let mut disjuncts = Vec::new();
                        for dn in elements(cn) {
                            check_tag(&doc, dn, "disjunct")?;
                            let mut path = Vec::new();
                            for sn in elements(dn) {
                                check_tag(&doc, sn, "symbol")?;
                                path.push(Symbol {
                                    predicate: attr(&doc, sn, "name")?.to_string(),
                                    inverse: flag(&doc, sn, "inverse")?,
                                });
                            }
                            if path.is_empty() {
                                return Err(xml_err(&doc, dn, "empty disjunct"));
                            }
                            disjuncts.push(path);
                        }
                        if disjuncts.is_empty() {
                            return Err(xml_err(&doc, cn, "conjunct without disjuncts"));
                        }
                        body.push(Conjunct {
                            from: var_attr(&doc, cn, "from")?,
                            regex: RegularExpression { disjuncts, star: flag(&doc, cn, "star")? },
                            to: var_attr(&doc, cn, "to")?,
                        });
                    }
                    if body.is_empty() {
                        return Err(xml_err(&doc, child, "rule without conjuncts"));
                    }
                    rules.push(body);
                }
                other => return Err(xml_err(&doc, child, format!("unexpected element <{other}>"))),
            }
        }
        let head = head.ok_or_else(|| xml_err(&doc, qn, "query without <head>"))?;
        if rules.is_empty() {
            return Err(xml_err(&doc, qn, "query without rules"));
        }
        let rules: Vec<QueryRule> = rules.into_iter().map(|body| QueryRule { head: head.clone(), body }).collect();
        for r in &rules {
            let vars = r.variables();
            if let Some(v) = r.head.iter().find(|v| !vars.contains(v)) {
                return Err(ConfigError::Validation(format!("query {id}: head variable {v} missing from a rule body")));
            }
        }
        queries.push(Query {
            id,
            rules,
            metadata: QueryMetadata { shape, selectivity, relaxations },
        });
    }
    Ok(queries)
}

//! Schema graph, distance matrix, selectivity graph and counted path draws.
//!
//! The schema graph has one node per reachable `(type, triple)` pair, where
//! the triple is the selectivity class of the path walked so far. Extending
//! a path ending in `(T, τ)` by a symbol `a` (or `a⁻`) leads to
//! `(T', normalize(τ · base(a)))`. Starting points are the ε seeds
//! `(T, (c, =, c))`.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use thiserror::Error;

use crate::config::{GraphConfiguration, PredicateId, SelectivityClass, TypeId};
use crate::distributions::RandomStream;
use crate::selalgebra::{
    alpha_hat, base_triple, concat_triples, epsilon_triple, Direction, SelectivityTriple,
};

pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("no path of length {0} reaches a qualifying node")]
    NoPath(usize),
    #[error("length {requested} exceeds the saturated maximum {max}")]
    TooLong { requested: usize, max: usize },
}

/// A predicate traversed forwards or backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub predicate: PredicateId,
    pub inverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemaGraphNode {
    pub node_type: TypeId,
    pub triple: SelectivityTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemaEdge {
    pub label: Label,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct SchemaGraph {
    pub nodes: Vec<SchemaGraphNode>,
    /// Outgoing edges per node, in discovery order.
    pub edges: Vec<Vec<SchemaEdge>>,
    /// ε seed node of every type, indexed by type.
    pub seeds: Vec<usize>,
    index: HashMap<SchemaGraphNode, usize>,
}

impl SchemaGraph {
    pub fn node_index(&self, node: &SchemaGraphNode) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Successor lists with one entry per labelled edge.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        self.edges.iter().map(|es| es.iter().map(|e| e.target).collect()).collect()
    }

    /// Plain-text adjacency listing, one node per line.
    pub fn dump(&self, schema: &GraphConfiguration) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = write!(out, "{i} ({}, {}):", schema.node_type(n.node_type).name, n.triple);
            for e in &self.edges[i] {
                let name = &schema.predicate(e.label.predicate).name;
                let inv = if e.label.inverse { "^-" } else { "" };
                let _ = write!(out, " {name}{inv}->{}", e.target);
            }
            out.push('\n');
        }
        out
    }
}

/// Per-type outgoing moves: (label, target type, base triple).
pub fn type_moves(schema: &GraphConfiguration) -> Vec<Vec<(Label, TypeId, SelectivityTriple)>> {
    let mut moves = vec![Vec::new(); schema.node_types.len()];
    for c in &schema.constraints {
        moves[c.source.0].push((
            Label { predicate: c.predicate, inverse: false },
            c.target,
            base_triple(c, Direction::Forward, schema),
        ));
        moves[c.target.0].push((
            Label { predicate: c.predicate, inverse: true },
            c.source,
            base_triple(c, Direction::Inverse, schema),
        ));
    }
    moves
}

pub fn build_schema_graph(schema: &GraphConfiguration) -> SchemaGraph {
    let moves = type_moves(schema);
    let mut g = SchemaGraph {
        nodes: Vec::new(),
        edges: Vec::new(),
        seeds: Vec::new(),
        index: HashMap::new(),
    };
    let mut queue = VecDeque::new();
    fn intern(g: &mut SchemaGraph, queue: &mut VecDeque<usize>, node: SchemaGraphNode) -> usize {
        if let Some(&i) = g.index.get(&node) {
            return i;
        }
        let i = g.nodes.len();
        g.nodes.push(node);
        g.edges.push(Vec::new());
        g.index.insert(node, i);
        queue.push_back(i);
        i
    }
    for (t, nt) in schema.node_types.iter().enumerate() {
        let seed = intern(
            &mut g,
            &mut queue,
            SchemaGraphNode { node_type: TypeId(t), triple: epsilon_triple(nt) },
        );
        g.seeds.push(seed);
    }
    while let Some(i) = queue.pop_front() {
        let node = g.nodes[i];
        for &(label, target_type, base) in &moves[node.node_type.0] {
            let triple = concat_triples(node.triple, base).expect("middle class is the node type's class");
            let j = intern(&mut g, &mut queue, SchemaGraphNode { node_type: target_type, triple });
            g.edges[i].push(SchemaEdge { label, target: j });
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    pub dist: Vec<Vec<u32>>,
}

impl DistanceMatrix {
    pub fn get(&self, from: usize, to: usize) -> Option<u32> {
        let d = self.dist[from][to];
        (d != UNREACHABLE).then_some(d)
    }
}

fn bfs(succ: &[Vec<usize>], start: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; succ.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn build_distance_matrix(g: &SchemaGraph) -> DistanceMatrix {
    let succ = g.successors();
    DistanceMatrix {
        dist: (0..g.len()).map(|s| bfs(&succ, s)).collect(),
    }
}

/// `edge[n][m]` holds iff some walk from `n` to `m` has a length within the
/// configured interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectivityGraph {
    pub l_min: usize,
    pub l_max: usize,
    pub edge: Vec<Vec<bool>>,
}

impl SelectivityGraph {
    pub fn successors(&self) -> Vec<Vec<usize>> {
        self.edge
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edge[from][to]
    }
}

pub fn build_selectivity_graph(g: &SchemaGraph, l_min: usize, l_max: usize) -> SelectivityGraph {
    assert!(1 <= l_min && l_min <= l_max, "length interval must satisfy 1 <= min <= max");
    let succ = g.successors();
    let n = g.len();
    let mut edge = vec![vec![false; n]; n];
    for (s, row) in edge.iter_mut().enumerate() {
        let mut layer = vec![false; n];
        layer[s] = true;
        for len in 1..=l_max {
            let mut next = vec![false; n];
            for u in (0..n).filter(|&u| layer[u]) {
                for &v in &succ[u] {
                    next[v] = true;
                }
            }
            layer = next;
            if len >= l_min {
                for (m, &hit) in layer.iter().enumerate() {
                    row[m] |= hit;
                }
            }
        }
    }
    SelectivityGraph { l_min, l_max, edge }
}

/// Whether a schema-graph node's triple belongs to a selectivity class.
pub fn qualifies(node: &SchemaGraphNode, class: SelectivityClass) -> bool {
    alpha_hat(node.triple) == class.alpha()
}

/// `counts[i][n]` is the number of walks of length `i` from `n` to a
/// qualifying node, over a successor list that may repeat targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCountTable {
    pub counts: Vec<Vec<BigUint>>,
}

impl PathCountTable {
    pub fn new(succ: &[Vec<usize>], qualifying: &[bool], max_length: usize) -> Self {
        let mut counts = Vec::with_capacity(max_length + 1);
        counts.push(
            qualifying
                .iter()
                .map(|&q| if q { BigUint::one() } else { BigUint::zero() })
                .collect::<Vec<_>>(),
        );
        for i in 1..=max_length {
            let prev: &Vec<BigUint> = &counts[i - 1];
            let row = succ
                .iter()
                .map(|out| out.iter().fold(BigUint::zero(), |acc, &v| acc + &prev[v]))
                .collect();
            counts.push(row);
        }
        PathCountTable { counts }
    }

    pub fn max_length(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn nb_path(&self, node: usize, length: usize) -> &BigUint {
        &self.counts[length][node]
    }

    pub fn total(&self, length: usize) -> BigUint {
        self.counts[length].iter().sum()
    }
}

pub fn saturate_path_counts(g: &SchemaGraph, target: SelectivityClass, max_length: usize) -> PathCountTable {
    let qualifying: Vec<bool> = g.nodes.iter().map(|n| qualifies(n, target)).collect();
    PathCountTable::new(&g.successors(), &qualifying, max_length)
}

/// Uniform integer in `[0, bound)` by rejection on the top bits.
pub fn random_below(bound: &BigUint, rng: &mut RandomStream) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let words = bits.div_ceil(32) as usize;
    let spare = (words as u64 * 32 - bits) as u32;
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
        if let Some(top) = digits.last_mut() {
            *top >>= spare;
        }
        let candidate = BigUint::new(digits);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Picks an index with probability proportional to its weight.
pub fn weighted_index<'a, I>(weights: I, rng: &mut RandomStream) -> Option<usize>
where
    I: IntoIterator<Item = &'a BigUint> + Clone,
{
    let total: BigUint = weights.clone().into_iter().sum();
    if total.is_zero() {
        return None;
    }
    let mut r = random_below(&total, rng);
    for (i, w) in weights.into_iter().enumerate() {
        if &r < w {
            return Some(i);
        }
        r -= w;
    }
    unreachable!("draw is below the total weight")
}

/// Walk of fixed length drawn uniformly among walks counted by a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawnPath {
    pub start: usize,
    pub labels: Vec<Label>,
    pub nodes: Vec<usize>,
}

impl DrawnPath {
    pub fn end(&self) -> usize {
        *self.nodes.last().expect("a path has at least its start node")
    }
}

/// Continues a walk from `start` for `length` steps, weighting each labelled
/// edge by the number of completions it leaves.
pub fn draw_path_from(
    g: &SchemaGraph,
    counts: &PathCountTable,
    start: usize,
    length: usize,
    rng: &mut RandomStream,
) -> Result<DrawnPath, PathError> {
    if length > counts.max_length() {
        return Err(PathError::TooLong { requested: length, max: counts.max_length() });
    }
    if counts.nb_path(start, length).is_zero() {
        return Err(PathError::NoPath(length));
    }
    let mut path = DrawnPath { start, labels: Vec::with_capacity(length), nodes: vec![start] };
    let mut cur = start;
    for remaining in (0..length).rev() {
        let out = &g.edges[cur];
        let pick = weighted_index(out.iter().map(|e| counts.nb_path(e.target, remaining)), rng)
            .expect("positive count implies a positive successor");
        let e = out[pick];
        path.labels.push(e.label);
        path.nodes.push(e.target);
        cur = e.target;
    }
    Ok(path)
}

/// Draws a walk of `length` steps uniformly among all counted walks,
/// choosing the start node by weight first.
pub fn draw_path(
    g: &SchemaGraph,
    counts: &PathCountTable,
    length: usize,
    rng: &mut RandomStream,
) -> Result<DrawnPath, PathError> {
    if length > counts.max_length() {
        return Err(PathError::TooLong { requested: length, max: counts.max_length() });
    }
    let start = weighted_index(counts.counts[length].iter(), rng).ok_or(PathError::NoPath(length))?;
    draw_path_from(g, counts, start, length, rng)
}

/// Everything query generation needs about a schema, for one length
/// interval. Per-target walk counts are built on first use.
#[derive(Debug)]
pub struct SchemaStructures {
    pub graph: SchemaGraph,
    pub distances: DistanceMatrix,
    pub selectivity: SelectivityGraph,
    pub selectivity_succ: Vec<Vec<usize>>,
    /// Longest disjunct length ever requested, relaxation included.
    pub max_length: usize,
    succ: Vec<Vec<usize>>,
    to_node: Vec<OnceLock<PathCountTable>>,
}

impl SchemaStructures {
    pub fn new(schema: &GraphConfiguration, l_min: usize, l_max: usize, max_length: usize) -> Self {
        let graph = build_schema_graph(schema);
        let distances = build_distance_matrix(&graph);
        let selectivity = build_selectivity_graph(&graph, l_min, l_max);
        let selectivity_succ = selectivity.successors();
        let succ = graph.successors();
        let to_node = (0..graph.len()).map(|_| OnceLock::new()).collect();
        SchemaStructures {
            graph,
            distances,
            selectivity,
            selectivity_succ,
            max_length: max_length.max(l_max),
            succ,
            to_node,
        }
    }

    /// Walk counts toward a single node.
    pub fn counts_to(&self, target: usize) -> &PathCountTable {
        self.to_node[target].get_or_init(|| {
            let mut q = vec![false; self.graph.len()];
            q[target] = true;
            PathCountTable::new(&self.succ, &q, self.max_length)
        })
    }
}

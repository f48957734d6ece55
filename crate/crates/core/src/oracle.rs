//! Reference evaluation of queries on in-memory graphs, and empirical
//! estimation of how result sizes grow with the graph.
//!
//! The graph's node set is the set of ids occurring in its edges, which is
//! what a TSV file or a triple store holding the same edges would expose.
//! Paths are evaluated by pushing a set of nodes through the expression;
//! Kleene star is a semi-naive closure that always contains its input, so
//! `(v, v)` belongs to every starred relation for every node `v`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{GraphConfiguration, SelectivityClass};
use crate::distributions::child_seed;
use crate::graphgen::{generate_graph, GraphGenError, GraphInstance};
use crate::querygen::{Query, QueryRule, RegularExpression, Symbol, Var};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("fewer than two non-empty results ({0} usable points)")]
    InsufficientData(usize),
    #[error("sizes must be at least two strictly increasing values")]
    BadSizes,
    #[error(transparent)]
    Generation(#[from] GraphGenError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl Csr {
    fn build(n: usize, pairs: &mut Vec<(u32, u32)>) -> Csr {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0u32; n + 1];
        for &(s, _) in pairs.iter() {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Csr { offsets, targets: pairs.iter().map(|&(_, t)| t).collect() }
    }

    fn neighbors(&self, v: u32) -> &[u32] {
        if self.offsets.is_empty() {
            return &[];
        }
        &self.targets[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }
}

/// Immutable labelled graph with dense node indices.
#[derive(Debug, Clone)]
pub struct OracleGraph {
    ids: Vec<u64>,
    labels: HashMap<String, usize>,
    forward: Vec<Csr>,
    backward: Vec<Csr>,
    edge_count: usize,
}

impl OracleGraph {
    pub fn from_edges<'a, I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (u64, &'a str, u64)>,
    {
        let mut labels: HashMap<String, usize> = HashMap::new();
        let mut raw: Vec<(u64, usize, u64)> = Vec::new();
        for (s, l, t) in edges {
            let next = labels.len();
            let li = *labels.entry(l.to_string()).or_insert(next);
            raw.push((s, li, t));
        }
        let mut ids: Vec<u64> = raw.iter().flat_map(|&(s, _, t)| [s, t]).collect();
        ids.sort_unstable();
        ids.dedup();
        let dense = |x: u64| ids.binary_search(&x).expect("id collected above") as u32;
        let mut per_label: Vec<Vec<(u32, u32)>> = vec![Vec::new(); labels.len()];
        for &(s, l, t) in &raw {
            per_label[l].push((dense(s), dense(t)));
        }
        let n = ids.len();
        let mut forward = Vec::with_capacity(labels.len());
        let mut backward = Vec::with_capacity(labels.len());
        let mut edge_count = 0;
        for mut pairs in per_label {
            let mut rev: Vec<(u32, u32)> = pairs.iter().map(|&(s, t)| (t, s)).collect();
            let f = Csr::build(n, &mut pairs);
            edge_count += f.targets.len();
            forward.push(f);
            backward.push(Csr::build(n, &mut rev));
        }
        OracleGraph { ids, labels, forward, backward, edge_count }
    }

    pub fn from_instance(g: &GraphInstance) -> Self {
        OracleGraph::from_edges(
            g.edges
                .iter()
                .map(|e| (u64::from(e.source), g.predicate_name(e.predicate), u64::from(e.target))),
        )
    }

    /// Reads `SOURCE PREDICATE TARGET` lines; blank lines are skipped.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, OracleError> {
        let mut triples: Vec<(u64, String, u64)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let (s, p, t) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (None, ..) => continue,
                (Some(s), Some(p), Some(t), None) => (s, p, t),
                _ => {
                    return Err(OracleError::Parse { line: i + 1, message: "expected three fields".into() });
                }
            };
            let num = |x: &str| {
                x.parse::<u64>()
                    .map_err(|_| OracleError::Parse { line: i + 1, message: format!("bad node id {x:?}") })
            };
            triples.push((num(s)?, p.to_string(), num(t)?));
        }
        Ok(OracleGraph::from_edges(triples.iter().map(|(s, p, t)| (*s, p.as_str(), *t))))
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn external_id(&self, v: u32) -> u64 {
        self.ids[v as usize]
    }

    pub fn dense_id(&self, id: u64) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| i as u32)
    }

    fn adjacency(&self, s: &Symbol) -> Option<&Csr> {
        let l = *self.labels.get(&s.predicate)?;
        Some(if s.inverse { &self.backward[l] } else { &self.forward[l] })
    }
}

/// Reusable membership stamps over node indices.
struct Marker {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Marker {
    fn new(n: usize) -> Self {
        Marker { stamp: vec![0; n], epoch: 0 }
    }

    fn reset(&mut self) {
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
    }

    /// True if `v` was not yet marked in this epoch.
    fn insert(&mut self, v: u32) -> bool {
        let s = &mut self.stamp[v as usize];
        if *s == self.epoch {
            false
        } else {
            *s = self.epoch;
            true
        }
    }
}

/// Per-thread scratch space for set propagation.
pub struct Evaluator<'g> {
    graph: &'g OracleGraph,
    step_mark: Marker,
    union_mark: Marker,
    closure_mark: Marker,
}

impl<'g> Evaluator<'g> {
    pub fn new(graph: &'g OracleGraph) -> Self {
        let n = graph.node_count();
        Evaluator {
            graph,
            step_mark: Marker::new(n),
            union_mark: Marker::new(n),
            closure_mark: Marker::new(n),
        }
    }

    fn step(&mut self, set: &[u32], sym: &Symbol) -> Vec<u32> {
        let Some(adj) = self.graph.adjacency(sym) else {
            return Vec::new();
        };
        self.step_mark.reset();
        let mut out = Vec::new();
        for &v in set {
            for &w in adj.neighbors(v) {
                if self.step_mark.insert(w) {
                    out.push(w);
                }
            }
        }
        out
    }

    fn path(&mut self, set: &[u32], path: &[Symbol]) -> Vec<u32> {
        let mut cur = set.to_vec();
        for s in path {
            if cur.is_empty() {
                break;
            }
            cur = self.step(&cur, s);
        }
        cur
    }

    fn disjunction(&mut self, set: &[u32], paths: &[Vec<Symbol>]) -> Vec<u32> {
        if paths.len() == 1 {
            return self.path(set, &paths[0]);
        }
        let mut parts = Vec::with_capacity(paths.len());
        for p in paths {
            parts.push(self.path(set, p));
        }
        self.union_mark.reset();
        let mut out = Vec::new();
        for part in parts {
            for v in part {
                if self.union_mark.insert(v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Image of `set` under `regex`.
    pub fn apply(&mut self, set: &[u32], regex: &RegularExpression) -> Vec<u32> {
        if !regex.star {
            return self.disjunction(set, &regex.disjuncts);
        }
        self.closure_mark.reset();
        let mut visited: Vec<u32> = Vec::with_capacity(set.len());
        for &v in set {
            if self.closure_mark.insert(v) {
                visited.push(v);
            }
        }
        let mut frontier = visited.clone();
        while !frontier.is_empty() {
            let image = self.disjunction(&frontier, &regex.disjuncts);
            frontier = image.into_iter().filter(|&v| self.closure_mark.insert(v)).collect();
            visited.extend_from_slice(&frontier);
        }
        visited
    }
}

/// Binary relation over dense node indices, stored as sorted successor
/// lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub succ: Vec<Vec<u32>>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.iter().all(Vec::is_empty)
    }

    pub fn contains(&self, s: u32, t: u32) -> bool {
        self.succ[s as usize].binary_search(&t).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.succ.iter().enumerate().flat_map(|(s, ts)| ts.iter().map(move |&t| (s as u32, t)))
    }

    /// Pairs of external node ids.
    pub fn external(&self, g: &OracleGraph) -> BTreeSet<(u64, u64)> {
        self.iter().map(|(s, t)| (g.external_id(s), g.external_id(t))).collect()
    }

    fn predecessors(&self) -> Vec<Vec<u32>> {
        let mut pred = vec![Vec::new(); self.succ.len()];
        for (s, t) in self.iter() {
            pred[t as usize].push(s);
        }
        pred
    }
}

pub fn evaluate_path(regex: &RegularExpression, graph: &OracleGraph) -> PairSet {
    let mut ev = Evaluator::new(graph);
    let succ = (0..graph.node_count() as u32)
        .map(|s| {
            let mut image = ev.apply(&[s], regex);
            image.sort_unstable();
            image
        })
        .collect();
    PairSet { succ }
}

/// Set of head tuples, as external node ids.
pub type ResultSet = BTreeSet<Vec<u64>>;

/// Generic evaluation by backtracking over conjunct relations. Variables may
/// bind equal nodes.
pub fn evaluate_query(q: &Query, graph: &OracleGraph) -> ResultSet {
    let mut out: HashSet<Vec<u32>> = HashSet::new();
    for rule in &q.rules {
        evaluate_rule(rule, graph, &mut out);
    }
    out.into_iter()
        .map(|t| t.into_iter().map(|v| graph.external_id(v)).collect())
        .collect()
}

fn evaluate_rule(rule: &QueryRule, graph: &OracleGraph, out: &mut HashSet<Vec<u32>>) {
    let rels: Vec<PairSet> = rule.body.iter().map(|c| evaluate_path(&c.regex, graph)).collect();
    let preds: Vec<Vec<Vec<u32>>> = rels.iter().map(PairSet::predecessors).collect();
    // Conjunct order that keeps every step connected to earlier bindings
    // whenever the body allows it.
    let mut order: Vec<usize> = Vec::new();
    let mut bound: HashSet<Var> = HashSet::new();
    while order.len() < rule.body.len() {
        let next = (0..rule.body.len())
            .filter(|i| !order.contains(i))
            .find(|&i| bound.contains(&rule.body[i].from) || bound.contains(&rule.body[i].to))
            .or_else(|| (0..rule.body.len()).find(|i| !order.contains(i)))
            .expect("unplaced conjunct remains");
        bound.insert(rule.body[next].from);
        bound.insert(rule.body[next].to);
        order.push(next);
    }
    let mut binding: HashMap<Var, u32> = HashMap::new();
    backtrack(rule, &order, 0, &rels, &preds, &mut binding, out);
}

fn backtrack(
    rule: &QueryRule,
    order: &[usize],
    depth: usize,
    rels: &[PairSet],
    preds: &[Vec<Vec<u32>>],
    binding: &mut HashMap<Var, u32>,
    out: &mut HashSet<Vec<u32>>,
) {
    if depth == order.len() {
        out.insert(rule.head.iter().map(|v| binding[v]).collect());
        return;
    }
    let i = order[depth];
    let c = &rule.body[i];
    let rel = &rels[i];
    let mut candidates: Vec<(u32, u32)> = Vec::new();
    match (binding.get(&c.from).copied(), binding.get(&c.to).copied()) {
        (Some(s), Some(t)) => {
            if rel.contains(s, t) {
                candidates.push((s, t));
            }
        }
        (Some(s), None) => candidates.extend(rel.succ[s as usize].iter().map(|&t| (s, t))),
        (None, Some(t)) => candidates.extend(preds[i][t as usize].iter().map(|&s| (s, t))),
        (None, None) => candidates.extend(rel.iter()),
    }
    for (s, t) in candidates {
        if c.from == c.to && s != t {
            continue;
        }
        let new_from = !binding.contains_key(&c.from);
        binding.insert(c.from, s);
        let new_to = !binding.contains_key(&c.to);
        binding.insert(c.to, t);
        backtrack(rule, order, depth + 1, rels, preds, binding, out);
        if new_to {
            binding.remove(&c.to);
        }
        if new_from {
            binding.remove(&c.from);
        }
    }
}

/// Body of a chain rule as ordered expressions, if the rule is a simple
/// chain from its first head variable to its second.
fn chain_of(rule: &QueryRule) -> Option<Vec<&RegularExpression>> {
    let (start, end) = match rule.head.as_slice() {
        [s, e] if s != e => (*s, *e),
        _ => return None,
    };
    let mut cur = start;
    let mut used = vec![false; rule.body.len()];
    let mut exprs = Vec::new();
    let mut seen = vec![start];
    while exprs.len() < rule.body.len() {
        let i = (0..rule.body.len()).find(|&i| !used[i] && rule.body[i].from == cur)?;
        used[i] = true;
        cur = rule.body[i].to;
        if seen.contains(&cur) {
            return None;
        }
        seen.push(cur);
        exprs.push(&rule.body[i].regex);
    }
    (cur == end).then_some(exprs)
}

/// Number of distinct answers of `q`. Binary chain queries are counted by
/// pushing each source through the chain; everything else goes through the
/// generic join.
pub fn count_answers(q: &Query, graph: &OracleGraph) -> u64 {
    let chains: Option<Vec<Vec<&RegularExpression>>> = q.rules.iter().map(chain_of).collect();
    let Some(chains) = chains else {
        return evaluate_query(q, graph).len() as u64;
    };
    let n = graph.node_count() as u32;
    let count_range = |lo: u32, hi: u32| {
        let mut ev = Evaluator::new(graph);
        let mut union = Marker::new(graph.node_count());
        let mut total = 0u64;
        for s in lo..hi {
            union.reset();
            for chain in &chains {
                let mut set = vec![s];
                for r in chain {
                    if set.is_empty() {
                        break;
                    }
                    set = ev.apply(&set, r);
                }
                total += set.into_iter().filter(|&v| union.insert(v)).count() as u64;
            }
        }
        total
    };
    let threads = rayon::current_num_threads() as u32;
    if threads <= 1 || n < 1024 {
        return count_range(0, n);
    }
    let chunk = n.div_ceil(threads * 4);
    (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|k| count_range(k * chunk, ((k + 1) * chunk).min(n)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionResult {
    pub alpha: f64,
    pub beta: f64,
    pub points_used: usize,
}

/// Least squares of `ln count` against `ln n`. When more than half of the
/// counts are zero the query is read as constant (`alpha = 0`).
pub fn regress(points: &[(u64, u64)]) -> Result<RegressionResult, OracleError> {
    let nonzero: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, c)| c > 0)
        .map(|&(n, c)| ((n as f64).ln(), (c as f64).ln()))
        .collect();
    let zeros = points.len() - nonzero.len();
    if 2 * zeros > points.len() {
        let beta = if nonzero.is_empty() {
            0.0
        } else {
            (nonzero.iter().map(|p| p.1).sum::<f64>() / nonzero.len() as f64).exp()
        };
        return Ok(RegressionResult { alpha: 0.0, beta, points_used: nonzero.len() });
    }
    if nonzero.len() < 2 {
        return Err(OracleError::InsufficientData(nonzero.len()));
    }
    let k = nonzero.len() as f64;
    let mx = nonzero.iter().map(|p| p.0).sum::<f64>() / k;
    let my = nonzero.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = nonzero.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = nonzero.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(OracleError::InsufficientData(nonzero.len()));
    }
    let alpha = sxy / sxx;
    Ok(RegressionResult { alpha, beta: (my - alpha * mx).exp(), points_used: nonzero.len() })
}

fn check_sizes(sizes: &[u64]) -> Result<(), OracleError> {
    if sizes.len() < 2 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OracleError::BadSizes);
    }
    Ok(())
}

/// Graph of the `i`-th size, seeded from `child_seed(seed, i)`.
pub fn instance_for_size(config: &GraphConfiguration, n: u64, i: usize, seed: u64) -> Result<OracleGraph, OracleError> {
    let cfg = config.with_nodes(n).map_err(GraphGenError::from)?;
    let g = generate_graph(&cfg, child_seed(seed, i as u64))?;
    Ok(OracleGraph::from_instance(&g))
}

pub fn estimate_alpha(q: &Query, config: &GraphConfiguration, sizes: &[u64], seed: u64) -> Result<RegressionResult, OracleError> {
    estimate_alphas(std::slice::from_ref(q), config, sizes, seed)?
        .pop()
        .expect("one query in, one result out")
}

/// Like [`estimate_alpha`] for many queries, generating each graph once.
pub fn estimate_alphas(
    queries: &[Query],
    config: &GraphConfiguration,
    sizes: &[u64],
    seed: u64,
) -> Result<Vec<Result<RegressionResult, OracleError>>, OracleError> {
    check_sizes(sizes)?;
    let mut counts = vec![Vec::with_capacity(sizes.len()); queries.len()];
    for (i, &n) in sizes.iter().enumerate() {
        let g = instance_for_size(config, n, i, seed)?;
        for (q, c) in queries.iter().zip(counts.iter_mut()) {
            c.push((n, count_answers(q, &g)));
        }
    }
    Ok(counts.iter().map(|pts| regress(pts)).collect())
}

/// `query_id,target_class,alpha,beta,points_used`, one line per query.
pub fn csv_report(queries: &[Query], results: &[Result<RegressionResult, OracleError>]) -> String {
    let mut out = String::from("query_id,target_class,alpha,beta,points_used\n");
    for (q, r) in queries.iter().zip(results) {
        let class = q.metadata.selectivity.map_or("none", |c: SelectivityClass| c.as_str());
        match r {
            Ok(r) => out.push_str(&format!("{},{},{:.6},{:.6},{}\n", q.id, class, r.alpha, r.beta, r.points_used)),
            Err(OracleError::InsufficientData(k)) => out.push_str(&format!("{},{},nan,nan,{}\n", q.id, class, k)),
            Err(_) => out.push_str(&format!("{},{},nan,nan,0\n", q.id, class)),
        }
    }
    out
}

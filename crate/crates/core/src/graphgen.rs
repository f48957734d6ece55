//! Graph generation.
//!
//! Each edge constraint `(T1, T2, a)` is handled on its own: one vector gets
//! `draw(D_out)` copies of every source index, the other `draw(D_in)` copies
//! of every target index, both are shuffled and zipped up to the shorter
//! length. The tail of the longer vector is dropped. A non-specified side is
//! filled by uniform sampling with replacement to the length of the other
//! side. Constraints are independent and each uses its own child stream, so
//! they can run in parallel without changing the output.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, DegreeDistribution, EdgeConstraint, GraphConfiguration, NodeLayout, Predicate, PredicateId};
use crate::distributions::{DegreeSampler, RandomStream};

pub const NODE_IRI_PREFIX: &str = "http://example.org/n";
pub const PREDICATE_IRI_PREFIX: &str = "http://example.org/p/";

#[derive(Debug, Error)]
pub enum GraphGenError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("constraint {0} leaves both distributions unspecified")]
    BothUnspecified(usize),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeRecord {
    pub source: u32,
    pub predicate: PredicateId,
    pub target: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationOptions {
    /// Keep duplicate `(source, predicate, target)` triples.
    pub allow_multi_edges: bool,
    /// Replace a Gaussian side by uniform sampling of the expected length
    /// instead of materializing per-node draws.
    pub gaussian_fast_path: bool,
    /// Worker threads; 0 or 1 runs on the calling thread.
    pub threads: usize,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            allow_multi_edges: false,
            gaussian_fast_path: false,
            threads: 1,
        }
    }
}

/// Edges produced by one constraint, with the vector lengths before zipping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintEdges {
    pub constraint: usize,
    pub src_len: usize,
    pub trg_len: usize,
    /// Edges emitted before duplicate removal.
    pub emitted: usize,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub config: GraphConfiguration,
    pub layout: NodeLayout,
    pub edges: Vec<EdgeRecord>,
}

impl GraphInstance {
    pub fn predicate_name(&self, id: PredicateId) -> &str {
        &self.config.predicates[id.0].name
    }
}

pub fn generate_graph(config: &GraphConfiguration, seed: u64) -> Result<GraphInstance, GraphGenError> {
    generate_graph_with(config, seed, &GenerationOptions::default())
}

pub fn generate_graph_with(
    config: &GraphConfiguration,
    seed: u64,
    options: &GenerationOptions,
) -> Result<GraphInstance, GraphGenError> {
    let layout = config.resolve_node_counts()?;
    let mut edges = Vec::new();
    for_each_constraint(config, &layout, seed, options, |part| {
        edges.extend_from_slice(&part.edges);
        Ok::<(), GraphGenError>(())
    })?;
    Ok(GraphInstance {
        config: config.clone(),
        layout,
        edges,
    })
}

/// Generates constraint after constraint and hands each batch to `sink` in
/// constraint order. Only a bounded number of batches is held at once.
pub fn for_each_constraint<E, F>(
    config: &GraphConfiguration,
    layout: &NodeLayout,
    seed: u64,
    options: &GenerationOptions,
    mut sink: F,
) -> Result<(), E>
where
    E: From<GraphGenError>,
    F: FnMut(ConstraintEdges) -> Result<(), E>,
{
    let root = RandomStream::new(seed);
    let count = config.constraints.len();
    if options.threads <= 1 {
        for i in 0..count {
            let part = generate_constraint(config, layout, i, &root, options).map_err(E::from)?;
            sink(part)?;
        }
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| E::from(GraphGenError::ThreadPool(e.to_string())))?;
    for chunk in (0..count).collect::<Vec<_>>().chunks(options.threads) {
        let parts: Vec<Result<ConstraintEdges, GraphGenError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&i| generate_constraint(config, layout, i, &root, options))
                .collect()
        });
        for part in parts {
            sink(part.map_err(E::from)?)?;
        }
    }
    Ok(())
}

/// Generates the edges of constraint `index` from the child stream
/// `root.child(index)`.
pub fn generate_constraint(
    config: &GraphConfiguration,
    layout: &NodeLayout,
    index: usize,
    root: &RandomStream,
    options: &GenerationOptions,
) -> Result<ConstraintEdges, GraphGenError> {
    let c: &EdgeConstraint = &config.constraints[index];
    let mut rng = root.child(index as u64);
    let src = layout.get(c.source);
    let trg = layout.get(c.target);
    let (n_src, n_trg) = (src.count, trg.count);

    // Sides are built in a fixed order (sources, then targets) so a given
    // stream always yields the same vectors.
    let src_side = build_side(&c.d_out, n_src, n_trg, options, &mut rng);
    let trg_side = build_side(&c.d_in, n_trg, n_src, options, &mut rng);
    let (src_side, trg_side) = match (src_side, trg_side) {
        (None, None) => return Err(GraphGenError::BothUnspecified(index)),
        (None, Some(t)) => (Side::Drawn(sample_with_replacement(n_src, t.len(), &mut rng)), t),
        (Some(s), None) => {
            let t = Side::Drawn(sample_with_replacement(n_trg, s.len(), &mut rng));
            (s, t)
        }
        (Some(s), Some(t)) => (s, t),
    };

    let (src_len, trg_len) = (src_side.len(), trg_side.len());
    let m = src_len.min(trg_len);
    // A side built from per-node draws lists its nodes in order; a side drawn
    // with replacement is already exchangeable. Pairing a fixed sequence with
    // a uniform permutation of the other gives the same law as shuffling both,
    // so only one side is ever shuffled and the sources keep node order.
    let src_ordered = src_side.is_ordered();
    let trg_ordered = trg_side.is_ordered();
    let v_src = src_side.thin(m, &mut rng);
    let mut v_trg = trg_side.thin(m, &mut rng);
    if src_ordered && trg_ordered {
        v_trg.shuffle(&mut rng);
    }

    let keep = if options.allow_multi_edges {
        None
    } else if src_ordered {
        Some(first_occurrences_grouped(&v_src, &v_trg, n_trg as usize))
    } else if trg_ordered {
        Some(first_occurrences_grouped(&v_trg, &v_src, n_src as usize))
    } else {
        Some(first_occurrences(&v_src, &v_trg, n_src as usize, n_trg as usize))
    };
    let base_src = src.first_id as u32;
    let base_trg = trg.first_id as u32;
    let mut edges = Vec::with_capacity(m);
    for i in 0..m {
        if keep.as_ref().is_some_and(|k| !k[i]) {
            continue;
        }
        edges.push(EdgeRecord {
            source: base_src + v_src[i],
            predicate: c.predicate,
            target: base_trg + v_trg[i],
        });
    }
    Ok(ConstraintEdges {
        constraint: index,
        src_len,
        trg_len,
        emitted: m,
        edges,
    })
}

/// One end of a constraint before truncation.
enum Side {
    /// Per-node degrees, indexed by local (0-based) node. The side stands for
    /// every node repeated by its degree, in node order.
    Degrees { degrees: Vec<u32>, total: usize },
    /// Local node indices drawn with replacement, already exchangeable.
    Drawn(Vec<u32>),
}

impl Side {
    fn len(&self) -> usize {
        match self {
            Side::Degrees { total, .. } => *total,
            Side::Drawn(v) => v.len(),
        }
    }

    fn is_ordered(&self) -> bool {
        matches!(self, Side::Degrees { .. })
    }

    /// Cuts the side down to `m` entries chosen uniformly. An ordered side is
    /// thinned by selection sampling while it is expanded, so survivors stay
    /// in order and the full vector is never built; a drawn side just loses
    /// its tail.
    fn thin(self, m: usize, rng: &mut RandomStream) -> Vec<u32> {
        match self {
            Side::Drawn(mut v) => {
                v.truncate(m);
                v
            }
            Side::Degrees { degrees, total } => {
                let mut v = Vec::with_capacity(m.min(total));
                let mut needed = m;
                let mut left = total;
                for (j, &d) in degrees.iter().enumerate() {
                    if m >= total {
                        v.extend(std::iter::repeat_n(j as u32, d as usize));
                        continue;
                    }
                    for _ in 0..d {
                        if rng.random_range(0..left) < needed {
                            v.push(j as u32);
                            needed -= 1;
                        }
                        left -= 1;
                    }
                }
                v
            }
        }
    }
}

/// Draws one side. `opposite` is the population on the other end of the
/// constraint. Returns `None` for a non-specified distribution.
fn build_side(
    dist: &DegreeDistribution,
    population: u64,
    opposite: u64,
    options: &GenerationOptions,
    rng: &mut RandomStream,
) -> Option<Side> {
    if let (true, DegreeDistribution::Gaussian { mu, .. }) = (options.gaussian_fast_path, dist) {
        let len = (population as f64 * mu).round() as usize;
        return Some(Side::Drawn(sample_with_replacement(population, len, rng)));
    }
    let sampler = DegreeSampler::new(dist, opposite).ok()?;
    let degrees: Vec<u32> = (0..population).map(|_| sampler.sample(rng) as u32).collect();
    let total = degrees.iter().map(|&d| d as usize).sum();
    Some(Side::Degrees { degrees, total })
}

fn sample_with_replacement(population: u64, len: usize, rng: &mut RandomStream) -> Vec<u32> {
    if population == 0 {
        return Vec::new();
    }
    let population = population as u32;
    (0..len).map(|_| rng.random_range(0..population)).collect()
}

/// Marks the first occurrence of every `(key[i], other[i])` pair when equal
/// keys are contiguous. Short runs are checked in place; only long ones touch
/// the marker array, which keeps most lookups in cache.
fn first_occurrences_grouped(key: &[u32], other: &[u32], n_other: usize) -> Vec<bool> {
    const SHORT_RUN: usize = 16;
    let mut marker = vec![u32::MAX; n_other];
    let mut keep = vec![true; key.len()];
    let mut start = 0;
    while start < key.len() {
        let k = key[start];
        let end = start + key[start..].iter().take_while(|&&x| x == k).count();
        let run = &other[start..end];
        if run.len() <= SHORT_RUN {
            for i in 1..run.len() {
                keep[start + i] = !run[..i].contains(&run[i]);
            }
        } else {
            for (i, &o) in run.iter().enumerate() {
                let slot = &mut marker[o as usize];
                keep[start + i] = *slot != k;
                *slot = k;
            }
        }
        start = end;
    }
    keep
}

/// Marks the first occurrence of every `(src[i], trg[i])` pair. Linear in
/// the input: pairs are bucketed by source and checked against a marker
/// array over targets.
fn first_occurrences(src: &[u32], trg: &[u32], n_src: usize, n_trg: usize) -> Vec<bool> {
    let m = src.len();
    let mut start = vec![0u32; n_src + 1];
    for &s in src {
        start[s as usize + 1] += 1;
    }
    for i in 0..n_src {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut order = vec![0u32; m];
    for (i, &s) in src.iter().enumerate() {
        let slot = &mut fill[s as usize];
        order[*slot as usize] = i as u32;
        *slot += 1;
    }
    let mut marker = vec![u32::MAX; n_trg];
    let mut keep = vec![false; m];
    for s in 0..n_src {
        for &i in &order[start[s] as usize..start[s + 1] as usize] {
            let t = trg[i as usize] as usize;
            if marker[t] != s as u32 {
                marker[t] = s as u32;
                keep[i as usize] = true;
            }
        }
    }
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Tsv,
    NTriples,
}

impl std::str::FromStr for GraphFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(GraphFormat::Tsv),
            "ntriples" | "nt" => Ok(GraphFormat::NTriples),
            other => Err(format!("unknown graph format {other:?} (expected tsv or ntriples)")),
        }
    }
}

pub fn write_edge<W: Write>(edge: &EdgeRecord, predicates: &[Predicate], format: GraphFormat, sink: &mut W) -> io::Result<()> {
    let name = &predicates[edge.predicate.0].name;
    match format {
        GraphFormat::Tsv => writeln!(sink, "{} {} {}", edge.source, name, edge.target),
        GraphFormat::NTriples => writeln!(
            sink,
            "<{NODE_IRI_PREFIX}{}> <{PREDICATE_IRI_PREFIX}{name}> <{NODE_IRI_PREFIX}{}> .",
            edge.source, edge.target
        ),
    }
}

/// Serializes edges one per line and returns how many were written.
pub fn write_graph<'a, I, W>(edges: I, predicates: &[Predicate], format: GraphFormat, sink: &mut W) -> io::Result<u64>
where
    I: IntoIterator<Item = &'a EdgeRecord>,
    W: Write,
{
    let mut written = 0;
    for e in edges {
        write_edge(e, predicates, format, sink)?;
        written += 1;
    }
    Ok(written)
}

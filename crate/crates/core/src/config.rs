//! Graph and workload configurations.
//!
//! A graph configuration is a node count plus a schema: predicates, node
//! types with occurrence constraints, and per-(source, target, predicate)
//! degree distributions. A workload configuration adds the query-side
//! parameters (number of queries, arity, shapes, selectivity classes,
//! recursion probability and query size intervals).
//!
//! Both are read from and written to a small XML dialect; see the README for
//! the grammar.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use roxmltree::{Document, Node};
use thiserror::Error;

/// Fractions are compared against 1.0 with this slack.
pub const PROPORTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

impl ConfigError {
    fn syntax_at(doc: &Document<'_>, node: Node<'_, '_>, message: impl Into<String>) -> Self {
        let pos = doc.text_pos_at(node.range().start);
        ConfigError::Syntax {
            line: pos.row,
            column: pos.col,
            message: message.into(),
        }
    }
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Validation(message.into())
}

/// Index of a predicate in [`GraphConfiguration::predicates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredicateId(pub usize);

/// Index of a node type in [`GraphConfiguration::node_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
}

/// How many nodes of a type a graph holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountConstraint {
    /// A fraction in (0, 1] of the configured node count.
    Proportion(f64),
    /// A constant number of nodes, independent of the graph size.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeType {
    pub name: String,
    pub count: CountConstraint,
}

impl NodeType {
    pub fn is_fixed(&self) -> bool {
        matches!(self.count, CountConstraint::Fixed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeDistribution {
    Uniform { min: u64, max: u64 },
    Gaussian { mu: f64, sigma: f64 },
    /// `max` overrides the support cap, which otherwise defaults to the
    /// population on the opposite side of the constraint.
    Zipfian { s: f64, max: Option<u64> },
    NonSpecified,
}

impl DegreeDistribution {
    pub fn is_specified(&self) -> bool {
        !matches!(self, DegreeDistribution::NonSpecified)
    }

    pub fn is_zipfian(&self) -> bool {
        matches!(self, DegreeDistribution::Zipfian { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DegreeDistribution::Uniform { .. } => "uniform",
            DegreeDistribution::Gaussian { .. } => "gaussian",
            DegreeDistribution::Zipfian { .. } => "zipfian",
            DegreeDistribution::NonSpecified => "nonspecified",
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            DegreeDistribution::Uniform { min, max } if min > max => {
                Err(invalid(format!("uniform min {min} exceeds max {max}")))
            }
            DegreeDistribution::Gaussian { mu, sigma }
                if !(mu.is_finite() && sigma.is_finite() && mu >= 0.0 && sigma >= 0.0) =>
            {
                Err(invalid(format!(
                    "gaussian parameters must be finite and non-negative (mu={mu}, sigma={sigma})"
                )))
            }
            DegreeDistribution::Zipfian { s, max } => {
                if !(s.is_finite() && s > 0.0) {
                    return Err(invalid(format!("zipfian exponent must be positive, got {s}")));
                }
                if max == Some(0) {
                    return Err(invalid("zipfian support cap must be at least 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// The degree distributions attached to one schema triple.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConstraint {
    pub source: TypeId,
    pub target: TypeId,
    pub predicate: PredicateId,
    pub d_in: DegreeDistribution,
    pub d_out: DegreeDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfiguration {
    pub n: u64,
    pub predicates: Vec<Predicate>,
    pub node_types: Vec<NodeType>,
    pub constraints: Vec<EdgeConstraint>,
}

/// Resolved population of one node type. Ids are 1-based and global.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedType {
    pub name: String,
    pub count: u64,
    pub first_id: u64,
}

impl ResolvedType {
    /// Inclusive id range, `None` when the type has no nodes.
    pub fn id_range(&self) -> Option<(u64, u64)> {
        (self.count > 0).then(|| (self.first_id, self.first_id + self.count - 1))
    }

    /// Global id of the `j`-th node of this type, `j` starting at 1.
    pub fn id_of(&self, j: u64) -> u64 {
        debug_assert!(j >= 1 && j <= self.count);
        self.first_id + j - 1
    }
}

/// Per-type node counts and id ranges, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLayout {
    pub types: Vec<ResolvedType>,
}

impl NodeLayout {
    pub fn total(&self) -> u64 {
        self.types.iter().map(|t| t.count).sum()
    }

    pub fn get(&self, ty: TypeId) -> &ResolvedType {
        &self.types[ty.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&ResolvedType> {
        self.types.iter().find(|t| t.name == name)
    }

    /// Type owning a global id.
    pub fn type_of(&self, id: u64) -> Option<TypeId> {
        self.types
            .iter()
            .position(|t| t.count > 0 && id >= t.first_id && id < t.first_id + t.count)
            .map(TypeId)
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl GraphConfiguration {
    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.node_types.iter().position(|t| t.name == name).map(TypeId)
    }

    pub fn predicate_id(&self, name: &str) -> Option<PredicateId> {
        self.predicates.iter().position(|p| p.name == name).map(PredicateId)
    }

    pub fn node_type(&self, id: TypeId) -> &NodeType {
        &self.node_types[id.0]
    }

    pub fn predicate(&self, id: PredicateId) -> &Predicate {
        &self.predicates[id.0]
    }

    /// Same schema, different node count.
    pub fn with_nodes(&self, n: u64) -> Result<GraphConfiguration, ConfigError> {
        let cfg = GraphConfiguration { n, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(invalid("node count n must be positive"));
        }
        let mut seen = HashSet::new();
        for p in &self.predicates {
            if !is_identifier(&p.name) {
                return Err(invalid(format!("predicate name {:?} is not an identifier", p.name)));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(invalid(format!("duplicate predicate {:?}", p.name)));
            }
        }
        let mut seen = HashSet::new();
        let mut proportion_sum = 0.0;
        for t in &self.node_types {
            if !is_identifier(&t.name) {
                return Err(invalid(format!("type name {:?} is not an identifier", t.name)));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(invalid(format!("duplicate type {:?}", t.name)));
            }
            match t.count {
                CountConstraint::Proportion(p) => {
                    if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                        return Err(invalid(format!(
                            "proportion of type {:?} must lie in (0, 1], got {p}",
                            t.name
                        )));
                    }
                    proportion_sum += p;
                }
                CountConstraint::Fixed(c) => {
                    if c > self.n {
                        return Err(invalid(format!(
                            "fixed count {c} of type {:?} exceeds n = {}",
                            t.name, self.n
                        )));
                    }
                }
            }
        }
        if proportion_sum > 1.0 + PROPORTION_TOLERANCE {
            return Err(invalid(format!("type proportions sum to {proportion_sum} > 1")));
        }
        let mut triples = HashSet::new();
        for c in &self.constraints {
            if c.source.0 >= self.node_types.len() || c.target.0 >= self.node_types.len() {
                return Err(invalid("constraint refers to an undeclared type"));
            }
            if c.predicate.0 >= self.predicates.len() {
                return Err(invalid("constraint refers to an undeclared predicate"));
            }
            if !c.d_in.is_specified() && !c.d_out.is_specified() {
                return Err(invalid(format!(
                    "constraint ({}, {}, {}) leaves both distributions unspecified",
                    self.node_types[c.source.0].name,
                    self.node_types[c.target.0].name,
                    self.predicates[c.predicate.0].name
                )));
            }
            c.d_in.validate()?;
            c.d_out.validate()?;
            if !triples.insert((c.source, c.target, c.predicate)) {
                return Err(invalid(format!(
                    "duplicate constraint for ({}, {}, {})",
                    self.node_types[c.source.0].name,
                    self.node_types[c.target.0].name,
                    self.predicates[c.predicate.0].name
                )));
            }
        }
        self.resolve_node_counts().map(|_| ())
    }

    /// Fixed types get their constant, proportional types `floor(n * p)`.
    /// Ids are handed out in declaration order starting at 1.
    pub fn resolve_node_counts(&self) -> Result<NodeLayout, ConfigError> {
        let fixed_sum: u64 = self
            .node_types
            .iter()
            .filter_map(|t| match t.count {
                CountConstraint::Fixed(c) => Some(c),
                _ => None,
            })
            .sum();
        if fixed_sum > self.n {
            return Err(invalid(format!(
                "fixed type counts sum to {fixed_sum}, more than n = {}",
                self.n
            )));
        }
        let mut next = 1u64;
        let mut types = Vec::with_capacity(self.node_types.len());
        for t in &self.node_types {
            let count = match t.count {
                CountConstraint::Fixed(c) => c,
                CountConstraint::Proportion(p) => (self.n as f64 * p + PROPORTION_TOLERANCE).floor() as u64,
            };
            types.push(ResolvedType {
                name: t.name.clone(),
                count,
                first_id: next,
            });
            next += count;
        }
        let layout = NodeLayout { types };
        let total = layout.total();
        if total == 0 {
            return Err(invalid("configuration resolves to zero nodes"));
        }
        if total > u64::from(u32::MAX) {
            return Err(invalid(format!("{total} nodes exceed the supported id space")));
        }
        Ok(layout)
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        out.push_str("<gmark>\n");
        let _ = writeln!(out, "  <graph n=\"{}\"/>", self.n);
        out.push_str("  <types>\n");
        for t in &self.node_types {
            match t.count {
                CountConstraint::Proportion(p) => {
                    let _ = writeln!(out, "    <type name=\"{}\" proportion=\"{}\"/>", t.name, p);
                }
                CountConstraint::Fixed(c) => {
                    let _ = writeln!(out, "    <type name=\"{}\" fixed=\"{}\"/>", t.name, c);
                }
            }
        }
        out.push_str("  </types>\n  <predicates>\n");
        for p in &self.predicates {
            let _ = writeln!(out, "    <predicate name=\"{}\"/>", p.name);
        }
        out.push_str("  </predicates>\n  <constraints>\n");
        for c in &self.constraints {
            let _ = writeln!(
                out,
                "    <constraint source=\"{}\" target=\"{}\" predicate=\"{}\">",
                self.node_types[c.source.0].name,
                self.node_types[c.target.0].name,
                self.predicates[c.predicate.0].name
            );
            let _ = writeln!(out, "      {}", distribution_xml("in", &c.d_in));
            let _ = writeln!(out, "      {}", distribution_xml("out", &c.d_out));
            out.push_str("    </constraint>\n");
        }
        out.push_str("  </constraints>\n</gmark>\n");
        out
    }
}

fn distribution_xml(tag: &str, d: &DegreeDistribution) -> String {
    match *d {
        DegreeDistribution::Uniform { min, max } => {
            format!("<{tag} kind=\"uniform\" min=\"{min}\" max=\"{max}\"/>")
        }
        DegreeDistribution::Gaussian { mu, sigma } => {
            format!("<{tag} kind=\"gaussian\" mu=\"{mu}\" sigma=\"{sigma}\"/>")
        }
        DegreeDistribution::Zipfian { s, max: Some(max) } => {
            format!("<{tag} kind=\"zipfian\" s=\"{s}\" max=\"{max}\"/>")
        }
        DegreeDistribution::Zipfian { s, max: None } => format!("<{tag} kind=\"zipfian\" s=\"{s}\"/>"),
        DegreeDistribution::NonSpecified => format!("<{tag} kind=\"nonspecified\"/>"),
    }
}

// ---------------------------------------------------------------------------
// XML reading helpers

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
}

impl<'a, 'input> Reader<'a, 'input> {
    fn err(&self, node: Node<'_, '_>, msg: impl Into<String>) -> ConfigError {
        ConfigError::syntax_at(self.doc, node, msg)
    }

    fn check_attrs(&self, node: Node<'_, '_>, allowed: &[&str]) -> Result<(), ConfigError> {
        for attr in node.attributes() {
            if !allowed.contains(&attr.name()) {
                return Err(self.err(
                    node,
                    format!("unknown attribute {:?} on <{}>", attr.name(), node.tag_name().name()),
                ));
            }
        }
        Ok(())
    }

    fn required<'n>(&self, node: Node<'n, '_>, name: &str) -> Result<&'n str, ConfigError> {
        node.attribute(name).ok_or_else(|| {
            self.err(node, format!("<{}> is missing attribute {name:?}", node.tag_name().name()))
        })
    }

    fn number<T: FromStr>(&self, node: Node<'_, '_>, name: &str) -> Result<T, ConfigError> {
        let raw = self.required(node, name)?;
        raw.trim()
            .parse()
            .map_err(|_| self.err(node, format!("attribute {name:?} has non-numeric value {raw:?}")))
    }

    fn optional_number<T: FromStr>(&self, node: Node<'_, '_>, name: &str) -> Result<Option<T>, ConfigError> {
        match node.attribute(name) {
            None => Ok(None),
            Some(_) => self.number(node, name).map(Some),
        }
    }

    fn elements<'n>(&self, node: Node<'n, 'input>) -> impl Iterator<Item = Node<'n, 'input>> {
        node.children().filter(|c| c.is_element())
    }

    fn expect_tag(&self, node: Node<'_, '_>, tag: &str) -> Result<(), ConfigError> {
        if node.tag_name().name() != tag {
            return Err(self.err(
                node,
                format!("unexpected element <{}>, expected <{tag}>", node.tag_name().name()),
            ));
        }
        Ok(())
    }

    fn no_text(&self, node: Node<'_, '_>) -> Result<(), ConfigError> {
        for c in node.children() {
            if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
                return Err(self.err(c, "unexpected text content"));
            }
        }
        Ok(())
    }
}

fn parse_document(text: &str) -> Result<Document<'_>, ConfigError> {
    Document::parse(text).map_err(|e| {
        let pos = e.pos();
        ConfigError::Syntax {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })
}

/// Parses and validates a graph configuration document.
pub fn parse_graph_config(text: &str) -> Result<GraphConfiguration, ConfigError> {
    let doc = parse_document(text)?;
    let r = Reader { doc: &doc };
    let root = doc.root_element();
    r.expect_tag(root, "gmark")?;
    r.check_attrs(root, &[])?;
    r.no_text(root)?;

    let mut n = None;
    let mut node_types = Vec::new();
    let mut predicates = Vec::new();
    let mut raw_constraints = Vec::new();
    let mut seen_sections = HashSet::new();

    for section in r.elements(root) {
        let tag = section.tag_name().name();
        if !seen_sections.insert(tag.to_string()) {
            return Err(r.err(section, format!("duplicate <{tag}> section")));
        }
        match tag {
            "graph" => {
                r.check_attrs(section, &["n"])?;
                n = Some(r.number::<u64>(section, "n")?);
            }
            "types" => {
                r.check_attrs(section, &[])?;
                r.no_text(section)?;
                for t in r.elements(section) {
                    r.expect_tag(t, "type")?;
                    r.check_attrs(t, &["name", "proportion", "fixed"])?;
                    let name = r.required(t, "name")?.to_string();
                    let count = match (t.attribute("proportion"), t.attribute("fixed")) {
                        (Some(_), None) => CountConstraint::Proportion(r.number(t, "proportion")?),
                        (None, Some(_)) => CountConstraint::Fixed(r.number(t, "fixed")?),
                        _ => {
                            return Err(r.err(t, "<type> needs exactly one of \"proportion\" or \"fixed\""));
                        }
                    };
                    node_types.push(NodeType { name, count });
                }
            }
            "predicates" => {
                r.check_attrs(section, &[])?;
                r.no_text(section)?;
                for p in r.elements(section) {
                    r.expect_tag(p, "predicate")?;
                    r.check_attrs(p, &["name"])?;
                    predicates.push(Predicate {
                        name: r.required(p, "name")?.to_string(),
                    });
                }
            }
            "constraints" => {
                r.check_attrs(section, &[])?;
                r.no_text(section)?;
                for c in r.elements(section) {
                    r.expect_tag(c, "constraint")?;
                    r.check_attrs(c, &["source", "target", "predicate"])?;
                    r.no_text(c)?;
                    let source = r.required(c, "source")?.to_string();
                    let target = r.required(c, "target")?.to_string();
                    let predicate = r.required(c, "predicate")?.to_string();
                    let mut d_in = None;
                    let mut d_out = None;
                    for d in r.elements(c) {
                        let slot = match d.tag_name().name() {
                            "in" => &mut d_in,
                            "out" => &mut d_out,
                            other => return Err(r.err(d, format!("unexpected element <{other}> in <constraint>"))),
                        };
                        if slot.is_some() {
                            return Err(r.err(d, "distribution given twice"));
                        }
                        *slot = Some(parse_distribution(&r, d)?);
                    }
                    let d_in = d_in.ok_or_else(|| r.err(c, "<constraint> is missing <in>"))?;
                    let d_out = d_out.ok_or_else(|| r.err(c, "<constraint> is missing <out>"))?;
                    raw_constraints.push((source, target, predicate, d_in, d_out));
                }
            }
            other => return Err(r.err(section, format!("unexpected element <{other}>"))),
        }
    }

    let n = n.ok_or_else(|| r.err(root, "missing <graph n=\"...\"/>"))?;
    let mut cfg = GraphConfiguration {
        n,
        predicates,
        node_types,
        constraints: Vec::new(),
    };
    for (source, target, predicate, d_in, d_out) in raw_constraints {
        let s = cfg
            .type_id(&source)
            .ok_or_else(|| invalid(format!("constraint uses undeclared type {source:?}")))?;
        let t = cfg
            .type_id(&target)
            .ok_or_else(|| invalid(format!("constraint uses undeclared type {target:?}")))?;
        let p = cfg
            .predicate_id(&predicate)
            .ok_or_else(|| invalid(format!("constraint uses undeclared predicate {predicate:?}")))?;
        cfg.constraints.push(EdgeConstraint {
            source: s,
            target: t,
            predicate: p,
            d_in,
            d_out,
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_distribution(r: &Reader<'_, '_>, node: Node<'_, '_>) -> Result<DegreeDistribution, ConfigError> {
    let kind = r.required(node, "kind")?;
    let d = match kind {
        "uniform" => {
            r.check_attrs(node, &["kind", "min", "max"])?;
            DegreeDistribution::Uniform {
                min: r.number(node, "min")?,
                max: r.number(node, "max")?,
            }
        }
        "gaussian" => {
            r.check_attrs(node, &["kind", "mu", "sigma"])?;
            DegreeDistribution::Gaussian {
                mu: r.number(node, "mu")?,
                sigma: r.number(node, "sigma")?,
            }
        }
        "zipfian" => {
            r.check_attrs(node, &["kind", "s", "max"])?;
            DegreeDistribution::Zipfian {
                s: r.number(node, "s")?,
                max: r.optional_number(node, "max")?,
            }
        }
        "nonspecified" => {
            r.check_attrs(node, &["kind"])?;
            DegreeDistribution::NonSpecified
        }
        other => return Err(r.err(node, format!("unknown distribution kind {other:?}"))),
    };
    Ok(d)
}

// ---------------------------------------------------------------------------
// Workloads

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryShape {
    Chain,
    Star,
    Cycle,
    StarChain,
}

impl QueryShape {
    pub const ALL: [QueryShape; 4] = [QueryShape::Chain, QueryShape::Star, QueryShape::Cycle, QueryShape::StarChain];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryShape::Chain => "chain",
            QueryShape::Star => "star",
            QueryShape::Cycle => "cycle",
            QueryShape::StarChain => "starchain",
        }
    }

    /// Smallest conjunct count the shape can be built with.
    pub fn min_conjuncts(&self) -> usize {
        match self {
            QueryShape::Chain => 1,
            QueryShape::Star | QueryShape::Cycle => 2,
            QueryShape::StarChain => 3,
        }
    }
}

impl fmt::Display for QueryShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryShape {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "chain" => Ok(QueryShape::Chain),
            "star" => Ok(QueryShape::Star),
            "cycle" => Ok(QueryShape::Cycle),
            "starchain" => Ok(QueryShape::StarChain),
            other => Err(invalid(format!("unknown query shape {other:?}"))),
        }
    }
}

/// Asymptotic growth class of a binary query's result size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectivityClass {
    Constant,
    Linear,
    Quadratic,
}

impl SelectivityClass {
    pub const ALL: [SelectivityClass; 3] = [
        SelectivityClass::Constant,
        SelectivityClass::Linear,
        SelectivityClass::Quadratic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectivityClass::Constant => "constant",
            SelectivityClass::Linear => "linear",
            SelectivityClass::Quadratic => "quadratic",
        }
    }

    /// The exponent this class stands for.
    pub fn alpha(&self) -> u8 {
        match self {
            SelectivityClass::Constant => 0,
            SelectivityClass::Linear => 1,
            SelectivityClass::Quadratic => 2,
        }
    }

    pub fn from_alpha(alpha: u8) -> Option<Self> {
        match alpha {
            0 => Some(SelectivityClass::Constant),
            1 => Some(SelectivityClass::Linear),
            2 => Some(SelectivityClass::Quadratic),
            _ => None,
        }
    }
}

impl fmt::Display for SelectivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectivityClass {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "constant" => Ok(SelectivityClass::Constant),
            "linear" => Ok(SelectivityClass::Linear),
            "quadratic" => Ok(SelectivityClass::Quadratic),
            other => Err(invalid(format!("unknown selectivity class {other:?}"))),
        }
    }
}

/// Closed integer interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub min: usize,
    pub max: usize,
}

impl Interval {
    pub const fn new(min: usize, max: usize) -> Self {
        Interval { min, max }
    }

    pub fn contains(&self, v: usize) -> bool {
        v >= self.min && v <= self.max
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuerySize {
    pub rules: Interval,
    pub conjuncts: Interval,
    pub disjuncts: Interval,
    pub path_length: Interval,
}

impl QuerySize {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, iv) in [
            ("rules", self.rules),
            ("conjuncts", self.conjuncts),
            ("disjuncts", self.disjuncts),
            ("length", self.path_length),
        ] {
            if iv.min < 1 {
                return Err(invalid(format!("{name} interval must start at 1 or more, got {iv}")));
            }
            if iv.min > iv.max {
                return Err(invalid(format!("{name} interval has min > max ({iv})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfiguration {
    pub graph: GraphConfiguration,
    pub num_queries: usize,
    /// Allowed arities, as an interval of non-negative integers.
    pub arity: Interval,
    pub shapes: Vec<QueryShape>,
    /// `None` when the workload does not ask for selectivity control.
    pub selectivities: Option<Vec<SelectivityClass>>,
    pub recursion_probability: f64,
    pub size: QuerySize,
}

impl WorkloadConfiguration {
    pub fn selectivity_enforced(&self) -> bool {
        self.selectivities.is_some()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_queries == 0 {
            return Err(invalid("number of queries must be positive"));
        }
        if self.arity.min > self.arity.max {
            return Err(invalid(format!("arity interval has min > max ({})", self.arity)));
        }
        if self.shapes.is_empty() {
            return Err(invalid("at least one query shape is required"));
        }
        if !(0.0..=1.0).contains(&self.recursion_probability) {
            return Err(invalid(format!(
                "recursion probability {} outside [0, 1]",
                self.recursion_probability
            )));
        }
        self.size.validate()?;
        if let Some(classes) = &self.selectivities {
            if classes.is_empty() {
                return Err(invalid("selectivity set must not be empty when given"));
            }
            if !self.arity.contains(2) {
                return Err(invalid(
                    "selectivity control is only defined for binary queries; arity must allow 2",
                ));
            }
        }
        for shape in &self.shapes {
            if self.size.conjuncts.max < shape.min_conjuncts() {
                return Err(invalid(format!(
                    "shape {shape} needs at least {} conjuncts, size allows at most {}",
                    shape.min_conjuncts(),
                    self.size.conjuncts.max
                )));
            }
        }
        Ok(())
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<workload queries=\"{}\" recursion=\"{}\">",
            self.num_queries, self.recursion_probability
        );
        let _ = writeln!(out, "  <arity min=\"{}\" max=\"{}\"/>", self.arity.min, self.arity.max);
        let shapes: Vec<&str> = self.shapes.iter().map(|s| s.as_str()).collect();
        let _ = writeln!(out, "  <shapes>{}</shapes>", shapes.join(","));
        if let Some(classes) = &self.selectivities {
            let classes: Vec<&str> = classes.iter().map(|c| c.as_str()).collect();
            let _ = writeln!(out, "  <selectivities>{}</selectivities>", classes.join(","));
        }
        let _ = writeln!(
            out,
            "  <size rules=\"{}\" conjuncts=\"{}\" disjuncts=\"{}\" length=\"{}\"/>",
            self.size.rules, self.size.conjuncts, self.size.disjuncts, self.size.path_length
        );
        out.push_str("</workload>\n");
        out
    }
}

fn parse_interval(r: &Reader<'_, '_>, node: Node<'_, '_>, name: &str) -> Result<Interval, ConfigError> {
    let raw = r.required(node, name)?;
    let parts: Vec<&str> = raw.split(',').collect();
    let bad = || r.err(node, format!("attribute {name:?} must be \"min,max\", got {raw:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let min = parts[0].trim().parse().map_err(|_| bad())?;
    let max = parts[1].trim().parse().map_err(|_| bad())?;
    Ok(Interval { min, max })
}

fn parse_list<T: FromStr<Err = ConfigError>>(r: &Reader<'_, '_>, node: Node<'_, '_>) -> Result<Vec<T>, ConfigError> {
    let text = node.text().unwrap_or("");
    let mut out: Vec<T> = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(item.parse().map_err(|e: ConfigError| r.err(node, e.to_string()))?);
    }
    Ok(out)
}

/// Parses and validates a workload configuration against an already
/// validated graph configuration.
pub fn parse_workload_config(text: &str, graph: &GraphConfiguration) -> Result<WorkloadConfiguration, ConfigError> {
    let doc = parse_document(text)?;
    let r = Reader { doc: &doc };
    let root = doc.root_element();
    r.expect_tag(root, "workload")?;
    r.check_attrs(root, &["queries", "recursion"])?;
    r.no_text(root)?;
    let num_queries = r.number(root, "queries")?;
    let recursion_probability = r.optional_number(root, "recursion")?.unwrap_or(0.0);

    let mut arity = None;
    let mut shapes = None;
    let mut selectivities = None;
    let mut size = None;
    for child in r.elements(root) {
        match child.tag_name().name() {
            "arity" if arity.is_none() => {
                r.check_attrs(child, &["min", "max"])?;
                arity = Some(Interval {
                    min: r.number(child, "min")?,
                    max: r.number(child, "max")?,
                });
            }
            "shapes" if shapes.is_none() => {
                r.check_attrs(child, &[])?;
                let mut list: Vec<QueryShape> = parse_list(&r, child)?;
                dedup_in_order(&mut list);
                shapes = Some(list);
            }
            "selectivities" if selectivities.is_none() => {
                r.check_attrs(child, &[])?;
                let mut list: Vec<SelectivityClass> = parse_list(&r, child)?;
                dedup_in_order(&mut list);
                selectivities = Some(list);
            }
            "size" if size.is_none() => {
                r.check_attrs(child, &["rules", "conjuncts", "disjuncts", "length"])?;
                size = Some(QuerySize {
                    rules: parse_interval(&r, child, "rules")?,
                    conjuncts: parse_interval(&r, child, "conjuncts")?,
                    disjuncts: parse_interval(&r, child, "disjuncts")?,
                    path_length: parse_interval(&r, child, "length")?,
                });
            }
            other => return Err(r.err(child, format!("unexpected or repeated element <{other}>"))),
        }
    }
    let cfg = WorkloadConfiguration {
        graph: graph.clone(),
        num_queries,
        arity: arity.ok_or_else(|| r.err(root, "missing <arity>"))?,
        shapes: shapes.ok_or_else(|| r.err(root, "missing <shapes>"))?,
        selectivities,
        recursion_probability,
        size: size.ok_or_else(|| r.err(root, "missing <size>"))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn dedup_in_order<T: PartialEq + Copy>(v: &mut Vec<T>) {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for x in v.iter() {
        if !out.contains(x) {
            out.push(*x);
        }
    }
    *v = out;
}

/// Name → id lookup tables, handy when reading external files.
pub fn predicate_index(cfg: &GraphConfiguration) -> HashMap<&str, PredicateId> {
    cfg.predicates
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), PredicateId(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE_ONE: &str = r#"
<gmark>
  <graph n="5"/>
  <types>
    <type name="T1" proportion="0.6"/>
    <type name="T2" proportion="0.2"/>
    <type name="T3" fixed="1"/>
  </types>
  <predicates>
    <predicate name="a"/>
    <predicate name="b"/>
  </predicates>
  <constraints>
    <constraint source="T1" target="T1" predicate="a">
      <in kind="gaussian" mu="2" sigma="1"/>
      <out kind="zipfian" s="2.5"/>
    </constraint>
    <constraint source="T1" target="T2" predicate="b">
      <in kind="uniform" min="1" max="3"/>
      <out kind="gaussian" mu="1" sigma="1"/>
    </constraint>
    <constraint source="T2" target="T2" predicate="b">
      <in kind="gaussian" mu="1" sigma="1"/>
      <out kind="nonspecified"/>
    </constraint>
    <constraint source="T2" target="T3" predicate="b">
      <in kind="nonspecified"/>
      <out kind="uniform" min="1" max="1"/>
    </constraint>
  </constraints>
</gmark>
"#;

    #[test]
    fn parses_example_one() {
        let cfg = parse_graph_config(EXAMPLE_ONE).unwrap();
        assert_eq!(cfg.node_types.len(), 3);
        assert_eq!(cfg.predicates.len(), 2);
        assert_eq!(cfg.constraints.len(), 4);
        let layout = cfg.resolve_node_counts().unwrap();
        let ranges: Vec<_> = layout.types.iter().map(|t| (t.count, t.id_range())).collect();
        assert_eq!(
            ranges,
            vec![(3, Some((1, 3))), (1, Some((4, 4))), (1, Some((5, 5)))]
        );
        assert_eq!(layout.type_of(4), Some(TypeId(1)));
        assert_eq!(layout.type_of(6), None);
    }

    #[test]
    fn undeclared_predicate_is_rejected() {
        let text = EXAMPLE_ONE.replace(r#"target="T3" predicate="b""#, r#"target="T3" predicate="c""#);
        match parse_graph_config(&text) {
            Err(ConfigError::Validation(msg)) => assert!(msg.contains("\"c\""), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_document_reports_position() {
        let err = parse_graph_config("<gmark>\n  <graph n=\"5\">\n</gmark>").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_attribute_is_rejected() {
        let text = EXAMPLE_ONE.replace(r#"<graph n="5"/>"#, r#"<graph n="5" seed="3"/>"#);
        assert!(matches!(parse_graph_config(&text), Err(ConfigError::Syntax { .. })));
        let text = EXAMPLE_ONE.replace(r#"kind="zipfian" s="2.5""#, r#"kind="zipfian" s="2.5" mu="1""#);
        assert!(matches!(parse_graph_config(&text), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn proportions_over_one_are_rejected() {
        let text = EXAMPLE_ONE.replace(r#"proportion="0.2""#, r#"proportion="0.5""#);
        assert!(matches!(parse_graph_config(&text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn duplicate_constraint_is_rejected() {
        let dup = r#"<constraint source="T1" target="T1" predicate="a">
      <in kind="uniform" min="1" max="1"/><out kind="nonspecified"/></constraint>
  </constraints>"#;
        let text = EXAMPLE_ONE.replace("</constraints>", dup);
        let err = parse_graph_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate constraint"), "{err}");
    }

    #[test]
    fn both_unspecified_is_rejected() {
        let text = EXAMPLE_ONE.replace(
            r#"<in kind="nonspecified"/>
      <out kind="uniform" min="1" max="1"/>"#,
            r#"<in kind="nonspecified"/>
      <out kind="nonspecified"/>"#,
        );
        assert!(matches!(parse_graph_config(&text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn infeasible_fixed_counts() {
        let cfg = GraphConfiguration {
            n: 10,
            predicates: vec![],
            node_types: vec![
                NodeType { name: "A".into(), count: CountConstraint::Fixed(6) },
                NodeType { name: "B".into(), count: CountConstraint::Fixed(6) },
            ],
            constraints: vec![],
        };
        assert!(matches!(cfg.resolve_node_counts(), Err(ConfigError::Validation(_))));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_nodes_is_rejected() {
        let cfg = GraphConfiguration {
            n: 3,
            predicates: vec![],
            node_types: vec![NodeType { name: "A".into(), count: CountConstraint::Proportion(0.1) }],
            constraints: vec![],
        };
        assert!(cfg.resolve_node_counts().is_err());
    }

    const WORKLOAD: &str = r#"<workload queries="30" recursion="0">
  <arity min="2" max="2"/>
  <shapes>chain</shapes>
  <selectivities>constant,linear,quadratic</selectivities>
  <size rules="1,1" conjuncts="1,3" disjuncts="1,2" length="1,4"/>
</workload>"#;

    #[test]
    fn parses_workload() {
        let g = parse_graph_config(EXAMPLE_ONE).unwrap();
        let w = parse_workload_config(WORKLOAD, &g).unwrap();
        assert_eq!(w.num_queries, 30);
        assert_eq!(w.shapes, vec![QueryShape::Chain]);
        assert_eq!(w.selectivities.as_deref(), Some(&SelectivityClass::ALL[..]));
        assert_eq!(w.size.path_length, Interval::new(1, 4));
        assert_eq!(w.size.conjuncts, Interval::new(1, 3));
    }

    #[test]
    fn workload_recursion_out_of_range() {
        let g = parse_graph_config(EXAMPLE_ONE).unwrap();
        let text = WORKLOAD.replace(r#"recursion="0""#, r#"recursion="1.5""#);
        assert!(matches!(parse_workload_config(&text, &g), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn workload_selectivity_needs_binary_arity() {
        let g = parse_graph_config(EXAMPLE_ONE).unwrap();
        let text = WORKLOAD
            .replace(r#"<arity min="2" max="2"/>"#, r#"<arity min="0" max="0"/>"#)
            .replace("constant,linear,quadratic", "linear");
        let err = parse_workload_config(&text, &g).unwrap_err();
        assert!(err.to_string().contains("binary"), "{err}");
        // Without the selectivity element the same arity is fine.
        let text = WORKLOAD
            .replace(r#"<arity min="2" max="2"/>"#, r#"<arity min="0" max="0"/>"#)
            .replace("  <selectivities>constant,linear,quadratic</selectivities>\n", "");
        assert!(parse_workload_config(&text, &g).is_ok());
    }

    #[test]
    fn workload_interval_min_above_max() {
        let g = parse_graph_config(EXAMPLE_ONE).unwrap();
        let text = WORKLOAD.replace(r#"length="1,4""#, r#"length="4,1""#);
        assert!(matches!(parse_workload_config(&text, &g), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn workload_round_trip() {
        let g = parse_graph_config(EXAMPLE_ONE).unwrap();
        let w = parse_workload_config(WORKLOAD, &g).unwrap();
        assert_eq!(parse_workload_config(&w.to_xml(), &g).unwrap(), w);
    }
}

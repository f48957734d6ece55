//! Rendering of queries in concrete query languages.
//!
//! Every rendering counts distinct head tuples (Boolean queries become
//! existence checks). SPARQL, SQL and Datalog are exact translations; Cypher
//! cannot express a star over inverses or concatenations, so such conjuncts
//! are approximated and the output is marked with a leading `/* LOSSY */`.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::querygen::{Conjunct, PathExpr, Query, QueryRule, RegularExpression, Symbol, Var};

pub const SPARQL_PREFIX: &str = "http://example.org/p/";
pub const LOSSY_MARKER: &str = "/* LOSSY */";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslateError {
    #[error("dialect {dialect} cannot express: {feature}")]
    UnsupportedFeature { dialect: &'static str, feature: String },
    #[error("unknown dialect {0:?} (expected sparql, cypher, sql or datalog)")]
    UnknownDialect(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dialect {
    Sparql,
    Cypher,
    Sql,
    Datalog,
}

impl Dialect {
    pub const ALL: [Dialect; 4] = [Dialect::Sparql, Dialect::Cypher, Dialect::Sql, Dialect::Datalog];

    pub fn name(self) -> &'static str {
        match self {
            Dialect::Sparql => "sparql",
            Dialect::Cypher => "cypher",
            Dialect::Sql => "sql",
            Dialect::Datalog => "datalog",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Dialect::Sparql => "sparql",
            Dialect::Cypher => "cypher",
            Dialect::Sql => "sql",
            Dialect::Datalog => "dl",
        }
    }
}

impl FromStr for Dialect {
    type Err = TranslateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sparql" => Ok(Dialect::Sparql),
            "cypher" => Ok(Dialect::Cypher),
            "sql" => Ok(Dialect::Sql),
            "datalog" | "dl" => Ok(Dialect::Datalog),
            other => Err(TranslateError::UnknownDialect(other.to_string())),
        }
    }
}

/// File name of a query rendering, `q<ID>.<ext>`.
pub fn file_name(q: &Query, dialect: Dialect) -> String {
    format!("q{}.{}", q.id, dialect.extension())
}

pub fn translate(q: &Query, dialect: Dialect) -> Result<String, TranslateError> {
    Ok(match dialect {
        Dialect::Sparql => to_sparql(q),
        Dialect::Cypher => to_cypher(q),
        Dialect::Sql => to_sql(q),
        Dialect::Datalog => to_datalog(q),
    })
}

fn body_vars(rule: &QueryRule) -> Vec<Var> {
    rule.variables()
}

// ---------------------------------------------------------------------------
// SPARQL

fn sparql_symbol(s: &Symbol) -> String {
    if s.inverse {
        format!("^:{}", s.predicate)
    } else {
        format!(":{}", s.predicate)
    }
}

fn sparql_sequence(p: &PathExpr) -> String {
    let parts: Vec<String> = p.iter().map(sparql_symbol).collect();
    if parts.len() > 1 {
        format!("({})", parts.join("/"))
    } else {
        parts.join("/")
    }
}

pub fn sparql_path(r: &RegularExpression) -> String {
    let alternatives: Vec<String> = r.disjuncts.iter().map(sparql_sequence).collect();
    let single = alternatives.len() == 1;
    match (r.star, single) {
        (false, true) => alternatives[0].clone(),
        (false, false) => format!("({})", alternatives.join("|")),
        (true, true) => {
            // A lone inverse symbol needs grouping; sequences come grouped.
            let p = &r.disjuncts[0];
            if p.len() == 1 && p[0].inverse {
                format!("({})*", alternatives[0])
            } else {
                format!("{}*", alternatives[0])
            }
        }
        (true, false) => format!("({})*", alternatives.join("|")),
    }
}

fn sparql_patterns(rule: &QueryRule) -> String {
    let parts: Vec<String> = rule
        .body
        .iter()
        .map(|c| format!("?{} {} ?{}", c.from, sparql_path(&c.regex), c.to))
        .collect();
    parts.join(" . ")
}

pub fn to_sparql(q: &Query) -> String {
    let mut out = format!("PREFIX : <{SPARQL_PREFIX}>\n");
    let head: Vec<String> = q.head().iter().map(|v| format!("?{v}")).collect();
    if head.is_empty() {
        let groups: Vec<String> = q.rules.iter().map(|r| format!("{{ {} }}", sparql_patterns(r))).collect();
        let _ = writeln!(out, "ASK WHERE {{ {} }}", groups.join(" UNION "));
        return out;
    }
    let compact = q.rules.len() == 1 && {
        let mut h = q.head().to_vec();
        h.sort();
        h.dedup();
        h == body_vars(&q.rules[0])
    };
    if compact {
        let _ = writeln!(out, "SELECT (COUNT(DISTINCT *) AS ?c) WHERE {{ {} }}", sparql_patterns(&q.rules[0]));
        return out;
    }
    let groups: Vec<String> = q
        .rules
        .iter()
        .map(|r| format!("{{ SELECT {} WHERE {{ {} }} }}", head.join(" "), sparql_patterns(r)))
        .collect();
    let _ = writeln!(out, "SELECT (COUNT(DISTINCT *) AS ?c) WHERE {{ {} }}", groups.join(" UNION "));
    out
}

// ---------------------------------------------------------------------------
// SQL

struct SqlContext {
    ctes: Vec<String>,
}

fn sql_path(p: &PathExpr) -> String {
    let mut from = Vec::new();
    let mut conds = Vec::new();
    let mut ends = Vec::new();
    for (i, s) in p.iter().enumerate() {
        let e = format!("e{i}");
        from.push(format!("edge {e}"));
        conds.push(format!("{e}.label = '{}'", s.predicate));
        let (a, b) = if s.inverse { ("trg", "src") } else { ("src", "trg") };
        ends.push((format!("{e}.{a}"), format!("{e}.{b}")));
    }
    for w in ends.windows(2) {
        conds.push(format!("{} = {}", w[0].1, w[1].0));
    }
    format!(
        "SELECT {} AS src, {} AS trg FROM {} WHERE {}",
        ends[0].0,
        ends[ends.len() - 1].1,
        from.join(", "),
        conds.join(" AND ")
    )
}

fn sql_disjunction(r: &RegularExpression) -> String {
    let parts: Vec<String> = r.disjuncts.iter().map(sql_path).collect();
    parts.join(" UNION ")
}

/// Relation of one conjunct; stars become a `tc_<i>` common table expression.
fn sql_conjunct(r: &RegularExpression, ctx: &mut SqlContext) -> String {
    if !r.star {
        return sql_disjunction(r);
    }
    let name = format!("tc_{}", ctx.ctes.len());
    ctx.ctes.push(format!(
        "{name}(src, trg) AS (\n  SELECT n, n FROM nodes\n  UNION\n  SELECT {name}.src, d.trg FROM {name} JOIN ({}) AS d ON {name}.trg = d.src\n)",
        sql_disjunction(r)
    ));
    format!("SELECT src, trg FROM {name}")
}

fn sql_rule(rule: &QueryRule, head: &[Var], ctx: &mut SqlContext) -> String {
    let mut from = Vec::new();
    let mut conds = Vec::new();
    let mut first: Vec<(Var, String)> = Vec::new();
    let mut bind = |v: Var, col: String, conds: &mut Vec<String>| match first.iter().find(|(w, _)| *w == v) {
        Some((_, c)) => conds.push(format!("{c} = {col}")),
        None => first.push((v, col)),
    };
    for (i, c) in rule.body.iter().enumerate() {
        from.push(format!("({}) AS c{i}", sql_conjunct(&c.regex, ctx)));
        bind(c.from, format!("c{i}.src"), &mut conds);
        bind(c.to, format!("c{i}.trg"), &mut conds);
    }
    let cols: Vec<String> = if head.is_empty() {
        vec!["1 AS t".to_string()]
    } else {
        head.iter()
            .map(|v| {
                let col = &first.iter().find(|(w, _)| w == v).expect("head variable occurs in body").1;
                format!("{col} AS {v}")
            })
            .collect()
    };
    let mut s = format!("SELECT DISTINCT {} FROM {}", cols.join(", "), from.join(", "));
    if !conds.is_empty() {
        let _ = write!(s, " WHERE {}", conds.join(" AND "));
    }
    s
}

pub fn to_sql(q: &Query) -> String {
    let mut ctx = SqlContext { ctes: vec!["nodes(n) AS (SELECT src FROM edge UNION SELECT trg FROM edge)".to_string()] };
    let rules: Vec<String> = q.rules.iter().map(|r| sql_rule(r, q.head(), &mut ctx)).collect();
    // `nodes` is only needed by stars, but keeping it makes every query
    // start the same way.
    format!(
        "WITH RECURSIVE {}\nSELECT COUNT(*) FROM (\n  {}\n) AS q;\n",
        ctx.ctes.join(",\n"),
        rules.join("\n  UNION\n  ")
    )
}

/// Bulk-load script for the single `edge` table from a space-separated file.
pub fn sql_loader(graph_path: &str) -> String {
    format!(
        "CREATE TABLE edge(src TEXT, label TEXT, trg TEXT);\n\
         COPY edge(src, label, trg) FROM '{graph_path}' WITH (FORMAT csv, DELIMITER ' ');\n\
         CREATE INDEX edge_label_src ON edge(label, src, trg);\n\
         CREATE INDEX edge_label_trg ON edge(label, trg, src);\n"
    )
}

// ---------------------------------------------------------------------------
// Datalog

fn datalog_path(p: &PathExpr, x: &str, y: &str) -> String {
    let mut atoms = Vec::new();
    for (i, s) in p.iter().enumerate() {
        let a = if i == 0 { x.to_string() } else { format!("z{i}") };
        let b = if i + 1 == p.len() { y.to_string() } else { format!("z{}", i + 1) };
        let (s_, t_) = if s.inverse { (b, a) } else { (a, b) };
        atoms.push(format!("edge({s_}, \"{}\", {t_})", s.predicate));
    }
    atoms.join(", ")
}

pub fn to_datalog(q: &Query) -> String {
    let mut out = String::new();
    out.push_str(".decl edge(s:symbol, l:symbol, t:symbol)\n");
    out.push_str(".input edge(IO=file, filename=\"edge.facts\", delimiter=\" \")\n");
    let uses_star = q.rules.iter().flat_map(|r| &r.body).any(|c| c.regex.star);
    if uses_star {
        out.push_str(".decl node(n:symbol)\nnode(x) :- edge(x, _, _).\nnode(x) :- edge(_, _, x).\n");
    }
    let head = q.head();
    let head_decl: Vec<String> = head.iter().map(|v| format!("{v}:symbol")).collect();
    if head.is_empty() {
        out.push_str(".decl query(t:number)\n");
    } else {
        let _ = writeln!(out, ".decl query({})", head_decl.join(", "));
    }
    for (ri, rule) in q.rules.iter().enumerate() {
        let mut atoms = Vec::new();
        for (ci, c) in rule.body.iter().enumerate() {
            let rel = format!("r{ri}_c{ci}");
            let inner = if c.regex.star { format!("{rel}_d") } else { rel.clone() };
            let _ = writeln!(out, ".decl {inner}(s:symbol, t:symbol)");
            for p in &c.regex.disjuncts {
                let _ = writeln!(out, "{inner}(x, y) :- {}.", datalog_path(p, "x", "y"));
            }
            if c.regex.star {
                let _ = writeln!(out, ".decl {rel}(s:symbol, t:symbol)");
                let _ = writeln!(out, "{rel}(x, x) :- node(x).");
                let _ = writeln!(out, "{rel}(x, y) :- {rel}(x, z), {inner}(z, y).");
            }
            atoms.push(format!("{rel}({}, {})", c.from, c.to));
        }
        let head_args: Vec<String> = head.iter().map(|v| v.to_string()).collect();
        if head.is_empty() {
            let _ = writeln!(out, "query(1) :- {}.", atoms.join(", "));
        } else {
            let _ = writeln!(out, "query({}) :- {}.", head_args.join(", "), atoms.join(", "));
        }
    }
    let wild: Vec<&str> = if head.is_empty() { vec!["_"] } else { head.iter().map(|_| "_").collect() };
    out.push_str(".decl answer(c:number)\n");
    let _ = writeln!(out, "answer(c) :- c = count : query({}).", wild.join(", "));
    out.push_str(".output answer\n");
    out
}

// ---------------------------------------------------------------------------
// Cypher

fn cypher_step(s: &Symbol, x: &str, y: &str) -> String {
    if s.inverse {
        format!("({x})<-[:{}]-({y})", s.predicate)
    } else {
        format!("({x})-[:{}]->({y})", s.predicate)
    }
}

fn cypher_path(p: &PathExpr, x: &str, y: &str) -> String {
    let mut out = format!("({x})");
    for (i, s) in p.iter().enumerate() {
        let target = if i + 1 == p.len() { format!("({y})") } else { "()".to_string() };
        let rel = if s.inverse {
            format!("<-[:{}]-", s.predicate)
        } else {
            format!("-[:{}]->", s.predicate)
        };
        out.push_str(&rel);
        out.push_str(&target);
    }
    out
}

/// Variable-length pattern for a starred conjunct; `true` when exact.
fn cypher_star(c: &Conjunct) -> (String, bool) {
    let r = &c.regex;
    let (x, y) = (c.from.to_string(), c.to.to_string());
    let singles = r.disjuncts.iter().all(|p| p.len() == 1);
    let direction = r.disjuncts[0][0].inverse;
    if singles && r.disjuncts.iter().all(|p| p[0].inverse == direction) {
        let mut names: Vec<&str> = r.disjuncts.iter().map(|p| p[0].predicate.as_str()).collect();
        names.dedup();
        let types = names.join("|");
        let pat = if direction {
            format!("({x})<-[:{types}*0..]-({y})")
        } else {
            format!("({x})-[:{types}*0..]->({y})")
        };
        return (pat, true);
    }
    let first = &r.disjuncts[0];
    let sym = first.iter().find(|s| !s.inverse).unwrap_or(&first[0]);
    let pat = if sym.inverse {
        format!("({x})<-[:{}*0..]-({y})", sym.predicate)
    } else {
        format!("({x})-[:{}*0..]->({y})", sym.predicate)
    };
    (pat, false)
}

/// Alternative patterns of a conjunct, and whether they are exact.
fn cypher_alternatives(c: &Conjunct) -> (Vec<String>, bool) {
    if c.regex.star {
        let (p, exact) = cypher_star(c);
        return (vec![p], exact);
    }
    let (x, y) = (c.from.to_string(), c.to.to_string());
    let pats = c
        .regex
        .disjuncts
        .iter()
        .map(|p| if p.len() == 1 { cypher_step(&p[0], &x, &y) } else { cypher_path(p, &x, &y) })
        .collect();
    (pats, true)
}

pub fn to_cypher(q: &Query) -> String {
    let head: Vec<String> = q.head().iter().map(|v| v.to_string()).collect();
    let mut lossy = false;
    let mut matches: Vec<String> = Vec::new();
    for rule in &q.rules {
        let mut combos: Vec<Vec<String>> = vec![Vec::new()];
        for c in &rule.body {
            let (alts, exact) = cypher_alternatives(c);
            lossy |= !exact;
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    alts.iter().map(move |a| {
                        let mut p = prefix.clone();
                        p.push(a.clone());
                        p
                    })
                })
                .collect();
        }
        for combo in combos {
            matches.push(format!("MATCH {}", combo.join(", ")));
        }
    }
    let ret = match head.len() {
        0 => "RETURN count(*) > 0 AS c".to_string(),
        1 => format!("RETURN count(DISTINCT {}) AS c", head[0]),
        _ => format!("RETURN count(DISTINCT [{}]) AS c", head.join(", ")),
    };
    let mut out = String::new();
    if lossy {
        out.push_str(LOSSY_MARKER);
        out.push('\n');
    }
    if matches.len() == 1 {
        let _ = writeln!(out, "{}\n{ret}", matches[0]);
        return out;
    }
    let inner_ret = if head.is_empty() {
        "RETURN 1 AS t".to_string()
    } else {
        format!("RETURN {}", head.join(", "))
    };
    let parts: Vec<String> = matches.iter().map(|m| format!("  {m}\n  {inner_ret}")).collect();
    let _ = writeln!(out, "CALL {{\n{}\n}}\n{ret}", parts.join("\n  UNION\n"));
    out
}

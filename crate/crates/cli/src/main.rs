use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pathload_core::config::{parse_graph_config, parse_workload_config, GraphConfiguration, WorkloadConfiguration};
use pathload_core::graphgen::{for_each_constraint, write_edge, GenerationOptions, GraphFormat, GraphGenError};
use pathload_core::oracle::{csv_report, estimate_alphas};
use pathload_core::querygen::{generate_workload_with, parse_workload_xml, workload_to_xml, Query};
use pathload_core::selstructs::build_schema_graph;
use pathload_core::translate::{file_name, sql_loader, translate, Dialect};

/// Schema-driven graph and path-query workload generator.
#[derive(Parser, Debug)]
#[command(name = "pathload", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a graph instance from a graph configuration.
    Graph(GraphArgs),
    /// Generate a query workload.
    Workload(WorkloadArgs),
    /// Render a workload file in one or more query languages.
    Translate(TranslateArgs),
    /// Estimate the selectivity exponent of each workload query.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Random seed.
    #[arg(short = 's', long, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Graph configuration file.
    #[arg(short = 'c', long)]
    config: PathBuf,
    /// Output file (standard output when omitted).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Override the configured node count.
    #[arg(short = 'n', long)]
    nodes: Option<u64>,
    /// Edge format: tsv or ntriples.
    #[arg(long, default_value = "tsv")]
    format: GraphFormat,
    /// Keep duplicate edges.
    #[arg(long)]
    allow_multi_edges: bool,
    /// Print the schema graph to standard error.
    #[arg(long)]
    dump_schema_graph: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct WorkloadArgs {
    /// Graph configuration file.
    #[arg(short = 'c', long)]
    config: PathBuf,
    /// Workload configuration file.
    #[arg(short = 'w', long)]
    workload: PathBuf,
    /// Output file (standard output when omitted).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Override the configured node count.
    #[arg(short = 'n', long)]
    nodes: Option<u64>,
    /// Print the schema graph to standard error.
    #[arg(long)]
    dump_schema_graph: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    /// Workload file produced by `workload`.
    #[arg(short = 'i', long)]
    input: PathBuf,
    /// Comma-separated dialects: sparql, cypher, sql, datalog.
    #[arg(short = 'd', long, value_delimiter = ',', default_value = "sparql,cypher,sql,datalog")]
    dialects: Vec<Dialect>,
    /// Output directory.
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Graph file named in the SQL loader script.
    #[arg(long, default_value = "graph.tsv")]
    graph_file: String,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Graph configuration file.
    #[arg(short = 'c', long)]
    config: PathBuf,
    /// Workload configuration file.
    #[arg(short = 'w', long)]
    workload: PathBuf,
    /// Comma-separated, strictly increasing graph sizes.
    #[arg(long, value_delimiter = ',', default_value = "2000,4000,8000,16000")]
    sizes: Vec<u64>,
    /// CSV output file (standard output when omitted).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

/// Failure classes mapped to exit statuses.
enum Failure {
    Partial(anyhow::Error),
    Fatal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Fatal(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Graph(a) => run_graph(a),
        Command::Workload(a) => run_workload(a),
        Command::Translate(a) => run_translate(a),
        Command::Verify(a) => run_verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (e.g. `| head`) is not an error.
        Err(Failure::Fatal(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(Failure::Partial(e)) => {
            eprintln!("pathload: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("pathload: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe))
}

fn load_graph_config(path: &Path, nodes: Option<u64>) -> Result<GraphConfiguration> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = parse_graph_config(&text).with_context(|| format!("in {}", path.display()))?;
    match nodes {
        Some(n) => Ok(cfg.with_nodes(n)?),
        None => Ok(cfg),
    }
}

fn load_workload_config(path: &Path, graph: &GraphConfiguration) -> Result<WorkloadConfiguration> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_workload_config(&text, graph).with_context(|| format!("in {}", path.display()))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn dump_schema(cfg: &GraphConfiguration) {
    eprint!("{}", build_schema_graph(cfg).dump(cfg));
}

fn run_graph(a: GraphArgs) -> Result<(), Failure> {
    let cfg = load_graph_config(&a.config, a.nodes)?;
    if a.dump_schema_graph {
        dump_schema(&cfg);
    }
    let layout = cfg.resolve_node_counts().map_err(anyhow::Error::from)?;
    let options = GenerationOptions {
        allow_multi_edges: a.allow_multi_edges,
        gaussian_fast_path: false,
        threads: a.common.threads,
    };
    let mut out = open_output(a.output.as_deref())?;
    let seed = a.common.seed;
    for_each_constraint(&cfg, &layout, seed, &options, |part| {
        for e in &part.edges {
            write_edge(e, &cfg.predicates, a.format, &mut out)?;
        }
        Ok::<(), anyhow::Error>(())
    })
    .map_err(|e: anyhow::Error| e.context("graph generation failed"))?;
    out.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

impl From<GraphGenError> for Failure {
    fn from(e: GraphGenError) -> Self {
        Failure::Fatal(e.into())
    }
}

/// Generates the workload; a partial result is returned together with the
/// error describing the missing queries.
fn workload_queries(cfg: &WorkloadConfiguration, common: &Common) -> (Vec<Query>, Option<anyhow::Error>) {
    match generate_workload_with(cfg, common.seed, common.threads) {
        Ok(q) => (q, None),
        Err(e) => {
            let reasons: Vec<String> = e.reasons.iter().map(|r| r.to_string()).collect();
            let msg = anyhow::anyhow!("{e}: {}", reasons.join("; "));
            (e.partial, Some(msg))
        }
    }
}

fn run_workload(a: WorkloadArgs) -> Result<(), Failure> {
    let graph = load_graph_config(&a.config, a.nodes)?;
    let cfg = load_workload_config(&a.workload, &graph)?;
    if a.dump_schema_graph {
        dump_schema(&graph);
    }
    let (queries, partial) = workload_queries(&cfg, &a.common);
    let mut out = open_output(a.output.as_deref())?;
    out.write_all(workload_to_xml(&queries).as_bytes()).map_err(anyhow::Error::from)?;
    out.flush().map_err(anyhow::Error::from)?;
    match partial {
        Some(e) => Err(Failure::Partial(e)),
        None => Ok(()),
    }
}

fn run_translate(a: TranslateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let queries = parse_workload_xml(&text).with_context(|| format!("in {}", a.input.display()))?;
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let write = |name: &str, body: &str| -> Result<()> {
        let path = a.output.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    for &d in &a.dialects {
        for q in &queries {
            write(&file_name(q, d), &translate(q, d).map_err(anyhow::Error::from)?)?;
        }
        if d == Dialect::Sql {
            write("load.sql", &sql_loader(&a.graph_file))?;
        }
    }
    Ok(())
}

fn run_verify(a: VerifyArgs) -> Result<(), Failure> {
    let graph = load_graph_config(&a.config, None)?;
    let cfg = load_workload_config(&a.workload, &graph)?;
    if a.sizes.len() < 2 || a.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Fatal(anyhow::anyhow!("--sizes needs at least two strictly increasing values")));
    }
    let (queries, partial) = workload_queries(&cfg, &a.common);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.common.threads.max(1))
        .build()
        .map_err(anyhow::Error::from)?;
    let results = pool
        .install(|| estimate_alphas(&queries, &graph, &a.sizes, a.common.seed))
        .map_err(anyhow::Error::from)?;
    let mut out = open_output(a.output.as_deref())?;
    out.write_all(csv_report(&queries, &results).as_bytes()).map_err(anyhow::Error::from)?;
    out.flush().map_err(anyhow::Error::from)?;
    match partial {
        Some(e) => Err(Failure::Partial(e)),
        None => Ok(()),
    }
}

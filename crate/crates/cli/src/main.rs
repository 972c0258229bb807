use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qnet_core::baseline::compare_costs;
use qnet_core::experiments::{Experiment, ExperimentConfig, MetricsTable};
use qnet_core::proactive::{build_proactive_overlay, swap_closure};
use qnet_core::protocol::{setup_connection, FallbackBudget};
use qnet_core::topology::{generate_graph, graph_to_json, load_graph, GraphParams};
use qnet_core::{EntanglementOverlay, NodeId, QNetGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "qnet", version, about = "Proactive entanglement distribution and connection setup simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a connected random network and write it as JSON.
    Generate(GenerateArgs),
    /// Build the proactive overlay of a network, before and after swap closure.
    Proactive(ProactiveArgs),
    /// Set up one connection and print the result as JSON.
    Connect(ConnectArgs),
    /// Compare proactive and reactive setup costs for one pair.
    Compare(CompareArgs),
    /// Run an experiment sweep and write its metrics table.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 3.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = GraphParams::DEFAULT_HC_MAX)]
    hc_max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ProactiveArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<output>-initial.json` and `<output>-closed.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SetupArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Overlay to start from; built proactively from the graph when omitted.
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[arg(long)]
    source: u32,
    #[arg(long)]
    target: u32,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    retries: u32,
    /// Defaults to the node count.
    #[arg(long)]
    c1: Option<u32>,
    /// Defaults to the node count.
    #[arg(long)]
    c2: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConnectArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// Also write every attempt's decision trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    setup: SetupArgs,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl From<ExperimentName> for Experiment {
    fn from(e: ExperimentName) -> Self {
        match e {
            ExperimentName::Fig3 => Experiment::Fig3,
            ExperimentName::Fig4 => Experiment::Fig4,
            ExperimentName::Fig5 => Experiment::Fig5,
            ExperimentName::Fig6 => Experiment::Fig6,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// Node counts (comma separated); the experiment's default when omitted.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    #[arg(long)]
    avg_degree: Option<f64>,
    #[arg(long)]
    hc_max: Option<u32>,
    /// Sweeps retries 1..=N.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    retries: Option<u32>,
    #[arg(long)]
    connections: Option<usize>,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    c1: Option<u32>,
    #[arg(long)]
    c2: Option<u32>,
    /// Give every network c1 = c2 = its node count instead of the sweep default (2, 2).
    #[arg(long)]
    budget_per_node: bool,
    /// Defaults to `<name>.csv` or `<name>.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Writes through a temporary file in the destination directory so a failed
/// run never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => write_atomic(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn read_graph(path: &Path) -> Result<QNetGraph> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_graph(f).with_context(|| format!("reading graph {}", path.display()))
}

fn budget(g: &QNetGraph, c1: Option<u32>, c2: Option<u32>) -> FallbackBudget {
    let d = FallbackBudget::for_nodes(g.node_count());
    FallbackBudget::new(c1.unwrap_or(d.c1), c2.unwrap_or(d.c2))
}

/// Graph, starting overlay and the RNG positioned after any overlay build.
fn prepare(args: &SetupArgs) -> Result<(QNetGraph, EntanglementOverlay, ChaCha8Rng)> {
    let g = read_graph(&args.graph)?;
    for id in [args.source, args.target] {
        g.check(NodeId(id))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let o = match &args.overlay {
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("opening {}", p.display()))?;
            EntanglementOverlay::from_json(&s).with_context(|| format!("reading overlay {}", p.display()))?
        }
        None => swap_closure(&build_proactive_overlay(&g, &mut rng)),
    };
    Ok((g, o, rng))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let params = GraphParams::new(args.nodes, args.avg_degree).with_hc_max(args.hc_max);
    let g = generate_graph(&params, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    emit(args.output.as_deref(), graph_to_json(&g).as_bytes())
}

fn cmd_proactive(args: ProactiveArgs) -> Result<()> {
    let g = read_graph(&args.graph)?;
    let initial = build_proactive_overlay(&g, &mut ChaCha8Rng::seed_from_u64(args.seed));
    let closed = swap_closure(&initial);
    let base = args.output.to_string_lossy().into_owned();
    write_atomic(Path::new(&format!("{base}-initial.json")), initial.to_json().as_bytes())?;
    write_atomic(Path::new(&format!("{base}-closed.json")), closed.to_json().as_bytes())
}

fn cmd_connect(args: ConnectArgs) -> Result<()> {
    let (g, mut o, mut rng) = prepare(&args.setup)?;
    let s = &args.setup;
    let result = setup_connection(
        &g,
        &mut o,
        NodeId(s.source),
        NodeId(s.target),
        s.retries,
        budget(&g, s.c1, s.c2),
        &mut rng,
    )?;
    if let Some(p) = &args.trace {
        let lines: String = result.outcomes.iter().map(|a| a.trace_jsonl()).collect();
        write_atomic(p, lines.as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(&result)?;
    json.push('\n');
    emit(args.output.as_deref(), json.as_bytes())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let (g, o, mut rng) = prepare(&args.setup)?;
    let s = &args.setup;
    let cmp = compare_costs(
        &g,
        &o,
        NodeId(s.source),
        NodeId(s.target),
        s.retries,
        budget(&g, s.c1, s.c2),
        &mut rng,
    )?;
    let mut buf = Vec::new();
    match args.format {
        Format::Csv => cmp.write_csv(&mut buf)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &cmp.rows())?;
            buf.push(b'\n');
        }
    }
    emit(args.output.as_deref(), &buf)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let experiment = Experiment::from(args.name);
    let defaults = experiment.default_config();
    let config = ExperimentConfig {
        nodes: args.nodes.unwrap_or(defaults.nodes),
        retries: args.retries.map_or(defaults.retries, |r| (1..=r).collect()),
        connections: args.connections.unwrap_or(defaults.connections),
        avg_degree: args.avg_degree.unwrap_or(defaults.avg_degree),
        hc_max: args.hc_max.unwrap_or(defaults.hc_max),
        replicates: args.replicates,
        base_seed: args.seed,
        budget: match (args.c1, args.c2, args.budget_per_node) {
            (None, None, false) => defaults.budget,
            (None, None, true) => None,
            (Some(c1), Some(c2), false) => Some(FallbackBudget::new(c1, c2)),
            (_, _, true) => bail!("--budget-per-node cannot be combined with --c1/--c2"),
            _ => bail!("--c1 and --c2 must be given together for experiments"),
        },
        max_graph_attempts: defaults.max_graph_attempts,
    };
    let table: MetricsTable = experiment.run(&config)?;
    let mut buf = Vec::new();
    match args.format {
        Format::Csv => table.write_csv(&mut buf)?,
        Format::Json => table.write_json(&mut buf)?,
    }
    let ext = if args.format == Format::Csv { "csv" } else { "json" };
    let path = args
        .output
        .unwrap_or_else(|| PathBuf::from(format!("{}.{ext}", experiment.name())));
    write_atomic(&path, &buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Proactive(a) => cmd_proactive(a),
        Command::Connect(a) => cmd_connect(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qnet: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `ratid`: rational identifiability of linear structural equation models.
//!
//! Exit codes: 0 when the answer is yes (or a sweep found no problem), 1 when
//! it is no, partial or timed out (or a sweep found a problem), 2 on errors.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ratid_core::experiment::{self, SweepOptions};
use ratid_core::graph::{tian_decompose, trek_weights, EdgeProbability, MixedGraph};
use ratid_core::ident::{
    algorithm1, garcia_puente, BaselineOptions, IdentOptions, IdentificationReport, TimeoutScope, Verdict,
};
use ratid_core::verify::check_formulas;

#[derive(Parser)]
#[command(name = "ratid", version, about = "Decide rational identifiability of linear SEMs on acyclic mixed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify the parameters of one graph and print the JSON report.
    Identify(IdentifyArgs),
    /// Run both methods on every small mixed graph.
    Census(CensusArgs),
    /// Run both methods on random graphs and tabulate by edge count.
    RandomExp(RandomArgs),
    /// Identify one graph and check its formulas on exact random samples.
    Verify(VerifyArgs),
    /// Print trek weights, w_trek, d' and the mixed components of a graph.
    TrekInfo(TrekArgs),
}

#[derive(Args, Clone)]
struct Engine {
    /// Degree bound d; the internal budget is d times w_trek.
    #[arg(long, default_value_t = 5)]
    degree: u32,
    /// Split the graph into mixed components first.
    #[arg(long, overrides_with = "no_tian")]
    tian: bool,
    #[arg(long)]
    no_tian: bool,
    /// Stop once every directed-edge parameter is known and read the error
    /// covariances off directly.
    #[arg(long, overrides_with = "no_early_stop_lambda")]
    early_stop_lambda: bool,
    #[arg(long)]
    no_early_stop_lambda: bool,
    /// Per-graph time budget in seconds, for each method.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, value_enum, default_value_t = Scope::All)]
    timeout_scope: Scope,
    /// Cap on processed S-pairs.
    #[arg(long)]
    spair_cap: Option<u64>,
    /// Print Gröbner progress to stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    All,
    Gb,
}

impl Engine {
    fn tian(&self) -> bool {
        !self.no_tian
    }

    fn early(&self, default: bool) -> bool {
        if self.early_stop_lambda {
            true
        } else if self.no_early_stop_lambda {
            false
        } else {
            default
        }
    }

    fn timeout(&self) -> Result<Option<Duration>> {
        match self.timeout {
            None => Ok(None),
            Some(t) if t > 0.0 && t.is_finite() => Ok(Some(Duration::from_secs_f64(t))),
            Some(t) => bail!("--timeout must be positive, got {t}"),
        }
    }

    fn scope(&self) -> TimeoutScope {
        match self.timeout_scope {
            Scope::All => TimeoutScope::All,
            Scope::Gb => TimeoutScope::Gb,
        }
    }

    fn check_degree(&self) -> Result<()> {
        if self.degree < 2 {
            bail!("--degree must be at least 2, got {}", self.degree);
        }
        Ok(())
    }

    fn ident(&self, early_default: bool) -> Result<IdentOptions> {
        self.check_degree()?;
        Ok(IdentOptions {
            degree: self.degree,
            tian: self.tian(),
            early_stop_lambda: self.early(early_default),
            timeout: self.timeout()?,
            timeout_scope: self.scope(),
            spair_cap: self.spair_cap,
            trace: self.trace,
            ..IdentOptions::default()
        })
    }

    fn sweep(&self, seed: u64, samples: usize, workers: Option<usize>, default_timeout: f64) -> Result<SweepOptions> {
        self.check_degree()?;
        let timeout = self.timeout()?.unwrap_or(Duration::from_secs_f64(default_timeout));
        let mut opts = SweepOptions {
            degree: self.degree,
            tian: self.tian(),
            early_stop_lambda: self.early(true),
            timeout: Some(timeout),
            timeout_scope: self.scope(),
            spair_cap: self.spair_cap,
            verify_trials: samples,
            seed,
            ..SweepOptions::default()
        };
        if let Some(w) = workers {
            opts.workers = w.max(1);
        }
        Ok(opts)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    DegreeBounded,
    GarciaPuente,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    engine: Engine,
    #[arg(long, value_enum, default_value_t = MethodArg::DegreeBounded)]
    method: MethodArg,
    /// Also check the formulas on this many exact random samples.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one line per identified parameter to stderr.
    #[arg(long)]
    emit_formulas: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CensusArgs {
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    /// Largest |D| + |B|; defaults to nodes choose 2.
    #[arg(long)]
    max_edges: Option<usize>,
    #[command(flatten)]
    engine: Engine,
    /// Formula-check trials per graph with formulas (0 skips the check).
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-graph CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON; stderr when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct RandomArgs {
    /// Number of sampled graphs.
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value = "1/5")]
    edge_prob: String,
    #[command(flatten)]
    engine: Engine,
    /// Formula-check trials per graph with formulas (0 skips the check).
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-edge-count table CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-graph CSV.
    #[arg(long)]
    rows: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    engine: Engine,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrekArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 5)]
    degree: u32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(ok) => ExitCode::from(if ok { 0 } else { 1 }),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Identify(a) => identify(a),
        Command::Census(a) => census(a),
        Command::RandomExp(a) => random_exp(a),
        Command::Verify(a) => verify(a),
        Command::TrekInfo(a) => trek_info(a),
    }
}

fn load_graph(path: &Path) -> Result<MixedGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MixedGraph::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    Ok(())
}

fn identify(a: IdentifyArgs) -> Result<bool> {
    let graph = load_graph(&a.graph)?;
    let mut report = match a.method {
        MethodArg::DegreeBounded => algorithm1(&graph, &a.engine.ident(false)?)?,
        MethodArg::GarciaPuente => garcia_puente(
            &graph,
            &BaselineOptions {
                timeout: a.engine.timeout()?,
                spair_cap: a.engine.spair_cap,
                trace: a.engine.trace,
                ..BaselineOptions::default()
            },
        ),
    };
    if a.samples > 0 && report.components.iter().any(|c| !c.formulas.is_empty()) {
        report.verification = Some(check_formulas(&report, a.samples, a.seed)?);
    }
    if a.emit_formulas {
        emit_formulas(&report);
    }
    write_text(a.out.as_deref(), &report.to_json())?;
    Ok(report.verdict == Verdict::Yes)
}

fn emit_formulas(report: &IdentificationReport) {
    for p in &report.parameters {
        if let (Some(n), Some(d)) = (&p.formula_numerator, &p.formula_denominator) {
            if d == "1" {
                eprintln!("{} = {n}", p.name);
            } else {
                eprintln!("{} = ({n}) / ({d})", p.name);
            }
        }
    }
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let graph = load_graph(&a.graph)?;
    let report = algorithm1(&graph, &a.engine.ident(false)?)?;
    let v = check_formulas(&report, a.samples, a.seed)?;
    let out = json!({
        "graph": graph.encode(),
        "verdict": report.verdict,
        "verification": v,
    });
    write_text(a.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    Ok(v.passed)
}

fn census(a: CensusArgs) -> Result<bool> {
    let opts = a.engine.sweep(a.seed, a.samples, a.workers, 30.0)?;
    let (rows, summary) = experiment::census(a.nodes, a.max_edges, &opts)?;
    experiment::write_rows_csv(sink(a.out.as_deref())?, &rows)?;
    let text = serde_json::to_string_pretty(&summary)?;
    match &a.summary {
        Some(p) => write_text(Some(p), &text)?,
        None => eprintln!("{text}"),
    }
    Ok(summary.disagreements.is_empty()
        && summary.verification_failures.is_empty()
        && summary.degree_bound_violations.is_empty())
}

fn random_exp(a: RandomArgs) -> Result<bool> {
    let prob: EdgeProbability = a.edge_prob.parse()?;
    let opts = a.engine.sweep(a.seed, a.samples, a.workers, 10.0)?;
    let (rows, table) = experiment::random_experiment(a.graphs, a.nodes, &prob, &opts)?;
    if let Some(p) = &a.rows {
        experiment::write_rows_csv(sink(Some(p))?, &rows)?;
    }
    experiment::write_table_csv(sink(a.out.as_deref())?, &table)?;
    Ok(rows.iter().all(|r| r.verified != Some(false) && r.degree_bound_ok))
}

fn trek_info(a: TrekArgs) -> Result<bool> {
    if a.degree < 2 {
        bail!("--degree must be at least 2, got {}", a.degree);
    }
    let graph = load_graph(&a.graph)?;
    let w = trek_weights(&graph);
    let weights: Vec<_> = w
        .entries()
        .into_iter()
        .map(|(u, v, x)| json!({"u": u, "v": v, "weight": x, "has_trek": w.has_trek(u, v)}))
        .collect();
    let components: Vec<_> = tian_decompose(&graph)
        .into_iter()
        .map(|c| json!({"district": c.district, "nodes": c.nodes, "directed": c.directed, "bidirected": c.bidirected}))
        .collect();
    let out = json!({
        "graph": graph.encode(),
        "weights": weights,
        "w_trek": w.w_trek(),
        "degree": a.degree,
        "d_prime": a.degree * w.w_trek(),
        "components": components,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(true)
}

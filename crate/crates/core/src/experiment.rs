//! Sweeps that run the degree-bounded method and the full-basis baseline side
//! by side: the exhaustive small-graph census and the random-graph experiment
//! with its per-edge-count summary table.
//!
//! Graphs are distributed over a pool of worker threads; rows always come back
//! in graph order. When [`CACHE_ENV`] names a directory, finished rows are
//! appended to a JSON-lines file there and reused by later runs with the same
//! settings.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{enumerate_graphs, enumerate_unique_graphs, random_graph, EdgeProbability, GraphError, MixedGraph};
use crate::ident::{
    algorithm1, garcia_puente, BaselineOptions, FormulaKind, IdentOptions, TimeoutScope, Verdict,
};
use crate::verify::check_formulas;

/// Environment variable naming the row cache directory.
pub const CACHE_ENV: &str = "RATID_CACHE_DIR";

/// Totals the census is compared against.
pub const REFERENCE_CENSUS_TOTAL: usize = 715;
pub const REFERENCE_CENSUS_IDENTIFIABLE: usize = 343;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub degree: u32,
    pub tian: bool,
    pub early_stop_lambda: bool,
    /// Per-graph budget, applied to each method separately.
    pub timeout: Option<Duration>,
    pub timeout_scope: TimeoutScope,
    pub spair_cap: Option<u64>,
    /// Trials of the formula check per graph with formulas; 0 skips it.
    pub verify_trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            degree: crate::ident::DEFAULT_DEGREE,
            tian: true,
            early_stop_lambda: true,
            timeout: Some(Duration::from_secs(10)),
            timeout_scope: TimeoutScope::All,
            spair_cap: None,
            verify_trials: 10,
            seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cache_dir: std::env::var_os(CACHE_ENV).map(PathBuf::from),
        }
    }
}

impl SweepOptions {
    fn ident_options(&self) -> IdentOptions {
        IdentOptions {
            degree: self.degree,
            tian: self.tian,
            early_stop_lambda: self.early_stop_lambda,
            timeout: self.timeout,
            timeout_scope: self.timeout_scope,
            spair_cap: self.spair_cap,
            ..IdentOptions::default()
        }
    }

    fn baseline_options(&self) -> BaselineOptions {
        BaselineOptions { timeout: self.timeout, spair_cap: self.spair_cap, ..BaselineOptions::default() }
    }

    /// Everything that influences a row, for cache file names.
    fn key(&self) -> String {
        let t = self.timeout.map_or("none".to_string(), |t| format!("{}ms", t.as_millis()));
        let scope = match self.timeout_scope {
            TimeoutScope::All => "all",
            TimeoutScope::Gb => "gb",
        };
        let cap = self.spair_cap.map_or("none".to_string(), |c| c.to_string());
        format!(
            "d{}-tian{}-early{}-t{t}-{scope}-cap{cap}-v{}-s{}",
            self.degree, self.tian as u8, self.early_stop_lambda as u8, self.verify_trials, self.seed
        )
    }
}

/// One graph of a sweep. Timing columns are wall-clock milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRow {
    pub index: usize,
    pub graph: String,
    pub directed: usize,
    pub bidirected: usize,
    pub edges: usize,
    pub gp_verdict: Verdict,
    pub gp_ms: f64,
    pub degbd_verdict: Verdict,
    pub degbd_ms: f64,
    pub w_trek: u32,
    pub d_prime: u32,
    /// Largest weighted degree of an identifying polynomial.
    pub max_w_degree: Option<u32>,
    /// Every identifying polynomial lies within its component's budget `d'`.
    pub degree_bound_ok: bool,
    pub formulas: usize,
    /// Outcome of the formula check, when there were formulas to check.
    pub verified: Option<bool>,
}

pub const ROW_HEADER: [&str; 15] = [
    "index",
    "graph",
    "directed",
    "bidirected",
    "edges",
    "gp_verdict",
    "gp_ms",
    "degbd_verdict",
    "degbd_ms",
    "w_trek",
    "d_prime",
    "max_w_degree",
    "degree_bound_ok",
    "formulas",
    "verified",
];

/// Runs both methods on one graph.
pub fn run_graph(index: usize, graph: &MixedGraph, opts: &SweepOptions) -> GraphRow {
    let t = Instant::now();
    let report = algorithm1(graph, &opts.ident_options()).expect("degree validated by the caller");
    let degbd_ms = ms(t.elapsed());
    let t = Instant::now();
    let gp = garcia_puente(graph, &opts.baseline_options());
    let gp_ms = ms(t.elapsed());

    let groebner: Vec<(u32, u32)> = report
        .components
        .iter()
        .flat_map(|c| c.formulas.iter().filter(|f| f.kind == FormulaKind::Groebner).map(move |f| (f.w_degree, c.d_prime)))
        .collect();
    let formulas = report.components.iter().map(|c| c.formulas.len()).sum();
    let verified = (opts.verify_trials > 0 && formulas > 0).then(|| {
        check_formulas(&report, opts.verify_trials, opts.seed ^ index as u64).is_ok_and(|v| v.passed)
    });
    GraphRow {
        index,
        graph: graph.encode(),
        directed: graph.directed().len(),
        bidirected: graph.bidirected().len(),
        edges: graph.edge_count(),
        gp_verdict: gp.verdict,
        gp_ms,
        degbd_verdict: report.verdict,
        degbd_ms,
        w_trek: report.summaries.iter().map(|c| c.w_trek).max().unwrap_or(1),
        d_prime: report.summaries.iter().map(|c| c.d_prime).max().unwrap_or(0),
        max_w_degree: groebner.iter().map(|&(w, _)| w).max(),
        degree_bound_ok: groebner.iter().all(|&(w, bound)| w <= bound),
        formulas,
        verified,
    }
}

/// Milliseconds with microsecond resolution.
fn ms(d: Duration) -> f64 {
    d.as_micros() as f64 / 1000.0
}

/// Runs `graphs` on the worker pool, reusing cached rows under `kind`.
pub fn sweep(kind: &str, graphs: &[MixedGraph], opts: &SweepOptions) -> io::Result<Vec<GraphRow>> {
    let cache_path = opts.cache_dir.as_ref().map(|d| d.join(format!("{kind}-{}.jsonl", opts.key())));
    let mut cached: BTreeMap<usize, GraphRow> = match &cache_path {
        Some(p) => load_cache(p)?,
        None => BTreeMap::new(),
    };
    cached.retain(|&i, row| graphs.get(i).is_some_and(|g| g.encode() == row.graph));
    let cache = match &cache_path {
        Some(p) => {
            fs::create_dir_all(p.parent().expect("cache file has a directory"))?;
            Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?))
        }
        None => None,
    };

    let todo: Vec<usize> = (0..graphs.len()).filter(|i| !cached.contains_key(i)).collect();
    let results: Mutex<Vec<Option<GraphRow>>> = Mutex::new(vec![None; graphs.len()]);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<io::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..opts.workers.clamp(1, todo.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = todo.get(k) else { break };
                let row = run_graph(i, &graphs[i], opts);
                if let Some(file) = &cache {
                    let line = serde_json::to_string(&row).expect("row serializes");
                    if let Err(e) = writeln!(file.lock().unwrap(), "{line}") {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                }
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut rows = results.into_inner().unwrap();
    for (i, row) in cached {
        rows[i] = Some(row);
    }
    Ok(rows.into_iter().map(|r| r.expect("every graph processed")).collect())
}

fn load_cache(path: &Path) -> io::Result<BTreeMap<usize, GraphRow>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e),
    };
    let mut rows = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        // a torn last line from an interrupted run is simply recomputed
        if let Ok(row) = serde_json::from_str::<GraphRow>(&line?) {
            rows.insert(row.index, row);
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a header, also when there are none.
pub fn write_rows_csv<W: Write>(out: W, rows: &[GraphRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// census

#[derive(Debug, Clone, Serialize)]
pub struct Disagreement {
    pub graph: String,
    pub degbd: Verdict,
    pub gp: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusSummary {
    pub p: usize,
    pub max_edges: usize,
    /// Labeled graphs with a topologically ordered directed part.
    pub enumerated_raw: usize,
    /// One representative per isomorphism class; the sweep runs on these.
    pub enumerated: usize,
    pub reference_total: usize,
    pub reference_identifiable: usize,
    pub degbd_identified: usize,
    pub gp_identified: usize,
    pub gp_terminated: usize,
    pub degbd_timeouts: usize,
    pub gp_timeouts: usize,
    /// Graphs where the baseline terminated and both methods give the same
    /// yes/no answer. A degree-bounded timeout counts as "not identified".
    pub agreements: usize,
    pub disagreements: Vec<Disagreement>,
    pub verification_failures: Vec<String>,
    pub degree_bound_violations: Vec<String>,
    pub elapsed_s: f64,
}

/// The exhaustive census of mixed graphs on `p` nodes with at most
/// `max_edges` edges (default `p choose 2`).
pub fn census(p: usize, max_edges: Option<usize>, opts: &SweepOptions) -> Result<(Vec<GraphRow>, CensusSummary), CensusError> {
    let t0 = Instant::now();
    let max_edges = max_edges.unwrap_or(p * p.saturating_sub(1) / 2);
    let raw = enumerate_graphs(p, max_edges)?.count();
    let graphs = enumerate_unique_graphs(p, max_edges)?;
    let rows = sweep(&format!("census-p{p}-e{max_edges}"), &graphs, opts)?;
    let summary = summarize_census(p, max_edges, raw, &rows, t0.elapsed());
    Ok((rows, summary))
}

pub fn summarize_census(p: usize, max_edges: usize, raw: usize, rows: &[GraphRow], elapsed: Duration) -> CensusSummary {
    let yes = |v: Verdict| v == Verdict::Yes;
    let gp_done: Vec<&GraphRow> = rows.iter().filter(|r| r.gp_verdict != Verdict::Partial).collect();
    CensusSummary {
        p,
        max_edges,
        enumerated_raw: raw,
        enumerated: rows.len(),
        reference_total: REFERENCE_CENSUS_TOTAL,
        reference_identifiable: REFERENCE_CENSUS_IDENTIFIABLE,
        degbd_identified: rows.iter().filter(|r| yes(r.degbd_verdict)).count(),
        gp_identified: rows.iter().filter(|r| yes(r.gp_verdict)).count(),
        gp_terminated: gp_done.len(),
        degbd_timeouts: rows.iter().filter(|r| r.degbd_verdict == Verdict::Partial).count(),
        gp_timeouts: rows.len() - gp_done.len(),
        agreements: gp_done.iter().filter(|r| yes(r.degbd_verdict) == yes(r.gp_verdict)).count(),
        disagreements: gp_done
            .iter()
            .filter(|r| yes(r.degbd_verdict) != yes(r.gp_verdict))
            .map(|r| Disagreement { graph: r.graph.clone(), degbd: r.degbd_verdict, gp: r.gp_verdict })
            .collect(),
        verification_failures: rows.iter().filter(|r| r.verified == Some(false)).map(|r| r.graph.clone()).collect(),
        degree_bound_violations: rows.iter().filter(|r| !r.degree_bound_ok).map(|r| r.graph.clone()).collect(),
        elapsed_s: elapsed.as_secs_f64(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CensusError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cache: {0}")]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// random experiment

/// One line of the per-edge-count table. Mean times are in seconds over the
/// graphs the method identified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub edges: usize,
    pub total: usize,
    pub gp_identified: usize,
    pub gp_mean_time_s: Option<f64>,
    pub degbd_identified: usize,
    pub degbd_mean_time_s: Option<f64>,
}

pub const TABLE_HEADER: [&str; 6] =
    ["edges", "total", "gp_identified", "gp_mean_time_s", "degbd_identified", "degbd_mean_time_s"];

/// The graphs of the random experiment: graph `i` is drawn with the `i`-th
/// seed of a stream derived from `seed`.
pub fn random_graphs(n: usize, p: usize, edge_prob: &EdgeProbability, seed: u64) -> Vec<MixedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_graph(p, edge_prob, rng.gen())).collect()
}

pub fn random_experiment(
    n: usize,
    p: usize,
    edge_prob: &EdgeProbability,
    opts: &SweepOptions,
) -> io::Result<(Vec<GraphRow>, Vec<TableRow>)> {
    let graphs = random_graphs(n, p, edge_prob, opts.seed);
    let kind = format!("random-n{n}-p{p}-q{}", edge_prob.to_string().replace('/', "over"));
    let rows = sweep(&kind, &graphs, opts)?;
    let table = table_by_edges(&rows);
    Ok((rows, table))
}

pub fn table_by_edges(rows: &[GraphRow]) -> Vec<TableRow> {
    let mut groups: BTreeMap<usize, Vec<&GraphRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.edges).or_default().push(r);
    }
    let mean = |xs: Vec<f64>| {
        (!xs.is_empty()).then(|| (xs.iter().sum::<f64>() / xs.len() as f64 * 1000.0).round() / 1e6)
    };
    groups
        .into_iter()
        .map(|(edges, rs)| {
            let gp: Vec<f64> = rs.iter().filter(|r| r.gp_verdict == Verdict::Yes).map(|r| r.gp_ms).collect();
            let db: Vec<f64> = rs.iter().filter(|r| r.degbd_verdict == Verdict::Yes).map(|r| r.degbd_ms).collect();
            TableRow {
                edges,
                total: rs.len(),
                gp_identified: gp.len(),
                gp_mean_time_s: mean(gp),
                degbd_identified: db.len(),
                degbd_mean_time_s: mean(db),
            }
        })
        .collect()
}

pub fn write_table_csv<W: Write>(out: W, table: &[TableRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in table {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

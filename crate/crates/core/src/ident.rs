//! Rational identifiability of linear structural equation models.
//!
//! The model ideal is generated by `σ_uv − τ(σ_uv)`, where `τ(σ_uv)` is the
//! trek-rule polynomial of the covariance entry. Homogenizing with the trek
//! weighting makes every generator weighted-homogeneous, so truncated
//! Gröbner bases can be computed degree by degree. A parameter `q` is
//! identified once some basis element has the shape `q·a − b` with `a` and
//! `b` free of unidentified parameters.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{tian_decompose, trek_weights, MixedGraph, TrekWeights};
use crate::groebner::{buchberger_full, Exhausted, GbError, Limits, TruncatedGb};
use crate::poly::{Monomial, MonomialOrder, Polynomial, Var, VariableTable};
use crate::rational::Rational;
use crate::verify::{nonzero_witness, rank, Verification};

/// Degree bound used when none is given.
pub const DEFAULT_DEGREE: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentError {
    #[error("degree bound must be at least 2, got {0}")]
    InvalidDegree(u32),
    #[error("no nonzero witness found for the denominator of {parameter}")]
    DegenerateDenominator { parameter: String },
    #[error("formula chain needs a report in which every parameter is identified")]
    NotIdentified,
}

/// The parameters `λ` (by edge), `ω_vv` (by node) and `ω_uv` (by bidirected
/// edge), in this order.
pub fn parameters(graph: &MixedGraph) -> Vec<Var> {
    let mut out: Vec<Var> = graph.directed().iter().map(|&(u, v)| Var::Lambda(u, v)).collect();
    out.extend(graph.nodes().map(|v| Var::Omega(v, v)));
    out.extend(graph.bidirected().iter().map(|&(u, v)| Var::Omega(u, v)));
    out
}

fn poly_matrix_mul(a: &[Vec<Polynomial>], b: &[Vec<Polynomial>], zero: &Polynomial) -> Vec<Vec<Polynomial>> {
    let n = a.len();
    let mut c = vec![vec![zero.clone(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[k][j].is_zero() {
                    c[i][j] = &c[i][j] + &(&a[i][k] * &b[k][j]);
                }
            }
        }
    }
    c
}

/// `τ(σ_uv)` for `u <= v`: the entries of `(I − Λ)^{-T} Ω (I − Λ)^{-1}`,
/// with the inverse expanded as the finite series `Σ_{k<p} Λ^k`.
pub fn sigma_polynomials(
    graph: &MixedGraph,
    table: &Arc<VariableTable>,
) -> BTreeMap<(usize, usize), Polynomial> {
    let p = graph.p();
    let zero = Polynomial::zero(table);
    let var = |v: Var| Polynomial::var(table, v).expect("graph variable in table");
    let mut lam = vec![vec![zero.clone(); p]; p];
    for &(u, v) in graph.directed() {
        lam[u - 1][v - 1] = var(Var::Lambda(u, v));
    }
    let mut series = vec![vec![zero.clone(); p]; p];
    for (i, row) in series.iter_mut().enumerate() {
        row[i] = Polynomial::one(table);
    }
    let mut power = series.clone();
    for _ in 1..p {
        power = poly_matrix_mul(&power, &lam, &zero);
        if power.iter().all(|r| r.iter().all(Polynomial::is_zero)) {
            break;
        }
        for i in 0..p {
            for j in 0..p {
                if !power[i][j].is_zero() {
                    series[i][j] = &series[i][j] + &power[i][j];
                }
            }
        }
    }
    let mut omega = vec![vec![zero.clone(); p]; p];
    for v in graph.nodes() {
        omega[v - 1][v - 1] = var(Var::Omega(v, v));
    }
    for &(u, v) in graph.bidirected() {
        omega[u - 1][v - 1] = var(Var::Omega(u, v));
        omega[v - 1][u - 1] = var(Var::Omega(u, v));
    }
    // T = Ω M, then Σ_uv = Σ_a M_au T_av
    let t = poly_matrix_mul(&omega, &series, &zero);
    let mut out = BTreeMap::new();
    for u in 0..p {
        for v in u..p {
            let mut acc = zero.clone();
            for a in 0..p {
                if !series[a][u].is_zero() && !t[a][v].is_zero() {
                    acc = &acc + &(&series[a][u] * &t[a][v]);
                }
            }
            out.insert((u + 1, v + 1), acc);
        }
    }
    out
}

fn directed_paths_into(graph: &MixedGraph, target: usize, max_edges: usize) -> Vec<(usize, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    let mut stack = vec![(target, Vec::new())];
    while let Some((node, path)) = stack.pop() {
        if path.len() < max_edges {
            for parent in graph.parents(node) {
                let mut longer = path.clone();
                longer.push((parent, node));
                stack.push((parent, longer));
            }
        }
        out.push((node, path));
    }
    out
}

/// Trek monomials between `u` and `v` of total degree at most `max_len`,
/// one entry per trek (so repeated monomials carry multiplicity). A trek is a
/// directed path into `u` and one into `v` whose sources are joined by a top:
/// either the same node or a bidirected edge.
pub fn treks_enumerate(
    graph: &MixedGraph,
    table: &VariableTable,
    u: usize,
    v: usize,
    max_len: usize,
) -> Vec<Monomial> {
    if max_len == 0 {
        return Vec::new();
    }
    let left = directed_paths_into(graph, u, max_len - 1);
    let right = directed_paths_into(graph, v, max_len - 1);
    let id = |x: Var| table.id(x).expect("graph variable in table");
    let mut out = Vec::new();
    for (s, p) in &left {
        for (t, q) in &right {
            let top = if s == t {
                Var::Omega(*s, *s)
            } else if graph.has_bidirected(*s, *t) {
                Var::omega(*s, *t)
            } else {
                continue;
            };
            if 1 + p.len() + q.len() > max_len {
                continue;
            }
            let lambdas = p.iter().chain(q.iter()).map(|&(a, b)| (id(Var::Lambda(a, b)), 1));
            out.push(Monomial::from_pairs(std::iter::once((id(top), 1)).chain(lambdas)));
        }
    }
    out.sort();
    out
}

/// The homogenized model ideal of a graph.
#[derive(Debug, Clone)]
pub struct ModelIdeal {
    pub graph: MixedGraph,
    pub table: Arc<VariableTable>,
    pub weights: TrekWeights,
    /// `τ(σ_uv)` for `u <= v`.
    pub taus: BTreeMap<(usize, usize), Polynomial>,
    /// `σ_uv − τ(σ_uv)^wh`, in the order of `taus`.
    pub generators: Vec<Polynomial>,
}

impl ModelIdeal {
    /// Builds the ideal; `labels[i - 1]` is the display label of node `i`.
    pub fn new(graph: &MixedGraph, labels: Option<Vec<usize>>) -> Self {
        let weights = trek_weights(graph);
        let mut table = VariableTable::for_graph(graph, &weights);
        if let Some(l) = labels {
            table = table.with_labels(l);
        }
        let taus = sigma_polynomials(graph, &table);
        let generators = taus
            .iter()
            .map(|(&(u, v), tau)| {
                let s = Polynomial::var(&table, Var::Sigma(u, v)).expect("σ in table");
                if tau.is_zero() {
                    s
                } else {
                    let tau_h = tau.homogenize_to(weights.weight(u, v)).expect("trek weight bounds τ");
                    &s - &tau_h
                }
            })
            .collect();
        ModelIdeal { graph: graph.clone(), table, weights, taus, generators }
    }

    /// `σ_uv − τ(σ_uv)` without homogenization.
    pub fn affine_generators(&self) -> Vec<Polynomial> {
        self.taus
            .iter()
            .map(|(&(u, v), tau)| &Polynomial::var(&self.table, Var::Sigma(u, v)).unwrap() - tau)
            .collect()
    }

    /// Replaces every `σ` by its trek polynomial and sets `h = 1`; elements
    /// of the ideal map to zero.
    pub fn substitute_sigma(&self, f: &Polynomial) -> Polynomial {
        f.substitute(&|v| match v {
            Var::Sigma(a, b) => Some(self.taus[&(a, b)].clone()),
            Var::H => Some(Polynomial::one(&self.table)),
            _ => None,
        })
    }

    pub fn w_trek(&self) -> u32 {
        self.weights.w_trek()
    }
}

/// The model ideal of a graph, with nodes rendered under their own labels.
pub fn build_ideal(graph: &MixedGraph) -> ModelIdeal {
    ModelIdeal::new(graph, None)
}

/// A basis element `g = q·a − b` that identifies `q`; `a` and `b` are
/// dehomogenized.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyingPolynomial {
    pub param: Var,
    pub polynomial: Polynomial,
    pub denominator: Polynomial,
    pub numerator: Polynomial,
}

/// Scans `elements` for an identifying polynomial. Parameters are tried in
/// the order of `theta_rem`; for each, elements in the given order. An
/// element identifies `q` when every monomial is free of `theta_rem` except
/// for at most a single factor `q`, and its leading monomial contains `q`.
pub fn detect_identifying(
    elements: &[Polynomial],
    order: &MonomialOrder,
    theta_rem: &[Var],
) -> Option<IdentifyingPolynomial> {
    let table = order.table();
    let rem_ids: Vec<usize> = theta_rem.iter().filter_map(|v| table.id(*v)).collect();
    // for each element, the single remaining parameter it can identify
    let candidates: Vec<Option<usize>> = elements
        .iter()
        .map(|g| {
            let mut target: Option<usize> = None;
            for (m, _) in g.terms() {
                for (v, e) in m.iter() {
                    if rem_ids.contains(&v) {
                        if e > 1 || target.is_some_and(|t| t != v) {
                            return None;
                        }
                        target = Some(v);
                    }
                }
            }
            let q = target?;
            let (lm, _) = g.leading_term(order).ok()?;
            (lm.exponent(q) == 1).then_some(q)
        })
        .collect();
    for &q in &rem_ids {
        for (g, c) in elements.iter().zip(&candidates) {
            if *c != Some(q) {
                continue;
            }
            let mut parts = g.coefficients_in(q);
            let a = parts.remove(&1).unwrap_or_else(|| Polynomial::zero(table));
            if a.is_zero() {
                continue;
            }
            let b = -&parts.remove(&0).unwrap_or_else(|| Polynomial::zero(table));
            return Some(IdentifyingPolynomial {
                param: table.var(q),
                polynomial: g.clone(),
                denominator: a.dehomogenize(),
                numerator: b.dehomogenize(),
            });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    /// Read off a Gröbner basis element.
    Groebner,
    /// `Ω = (I − Λ)^T Σ (I − Λ)` once every `λ` is known.
    Recovered,
}

/// `param = numerator / denominator`, with both sides polynomials in the
/// covariance entries and previously identified parameters.
#[derive(Debug, Clone)]
pub struct Formula {
    pub param: Var,
    pub numerator: Polynomial,
    pub denominator: Polynomial,
    /// The basis element the formula was read from.
    pub source: Option<Polynomial>,
    pub depends_on: Vec<Var>,
    pub w_degree: u32,
    pub plain_degree: u32,
    pub kind: FormulaKind,
    pub elapsed: Duration,
}

impl Formula {
    fn from_identifying(ip: IdentifyingPolynomial, elapsed: Duration) -> Self {
        let mut deps: BTreeSet<usize> = ip.numerator.support();
        deps.extend(ip.denominator.support());
        let table = ip.polynomial.table().clone();
        let depends_on = deps.into_iter().map(|i| table.var(i)).filter(Var::is_theta).collect();
        Formula {
            param: ip.param,
            w_degree: ip.polynomial.weighted_degree().unwrap_or(0),
            plain_degree: ip.polynomial.dehomogenize().total_degree().unwrap_or(0),
            numerator: ip.numerator,
            denominator: ip.denominator,
            source: Some(ip.polynomial),
            depends_on,
            kind: FormulaKind::Groebner,
            elapsed,
        }
    }

    /// `param · denominator − numerator`.
    pub fn as_polynomial(&self) -> Polynomial {
        let q = Polynomial::var(self.numerator.table(), self.param).expect("parameter in table");
        &(&q * &self.denominator) - &self.numerator
    }
}

/// `ω_uv = [(I − Λ)^T Σ (I − Λ)]_uv` for the requested `ω` variables, with
/// every `λ` treated as a known symbol.
pub fn recover_omega(ideal: &ModelIdeal, omegas: &[Var]) -> Vec<Formula> {
    let table = &ideal.table;
    let g = &ideal.graph;
    let var = |v: Var| Polynomial::var(table, v).expect("variable in table");
    // column u of I − Λ as (row, coefficient polynomial)
    let column = |u: usize| -> Vec<(usize, Polynomial)> {
        let mut c = vec![(u, Polynomial::one(table))];
        c.extend(g.parents(u).into_iter().map(|a| (a, -&var(Var::Lambda(a, u)))));
        c
    };
    omegas
        .iter()
        .filter_map(|&w| {
            let Var::Omega(u, v) = w else { return None };
            let mut expr = Polynomial::zero(table);
            for (a, ca) in column(u) {
                for (b, cb) in column(v) {
                    expr = &expr + &(&(&ca * &cb) * &var(Var::sigma(a, b)));
                }
            }
            let depends_on: Vec<Var> = expr.variables().into_iter().filter(Var::is_theta).collect();
            let poly = &var(w) - &expr;
            Some(Formula {
                param: w,
                w_degree: poly.weighted_degree().unwrap_or(0),
                plain_degree: poly.total_degree().unwrap_or(0),
                numerator: expr,
                denominator: Polynomial::one(table),
                source: None,
                depends_on,
                kind: FormulaKind::Recovered,
                elapsed: Duration::ZERO,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutScope {
    /// The budget covers ideal construction and decomposition.
    #[default]
    All,
    /// The budget starts when the first Gröbner computation starts.
    Gb,
}

/// Settings of `algorithm1`.
#[derive(Debug, Clone)]
pub struct IdentOptions {
    pub degree: u32,
    pub tian: bool,
    pub early_stop_lambda: bool,
    /// Extend one truncated basis per order across degrees instead of
    /// recomputing from scratch at every degree.
    pub incremental: bool,
    pub timeout: Option<Duration>,
    pub timeout_scope: TimeoutScope,
    pub spair_cap: Option<u64>,
    /// Skip the orders of parameters that fail the Jacobian test of
    /// [`locally_unidentifiable`]; no identifying polynomial exists for them.
    pub prune_unidentifiable: bool,
    pub trace: bool,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for IdentOptions {
    fn default() -> Self {
        IdentOptions {
            degree: DEFAULT_DEGREE,
            tian: true,
            early_stop_lambda: false,
            incremental: true,
            timeout: None,
            timeout_scope: TimeoutScope::All,
            spair_cap: None,
            prune_unidentifiable: true,
            trace: false,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every parameter is identified.
    Yes,
    /// Some component finished its search with a parameter left over.
    No,
    /// The budget ran out before either answer was reached.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DegreeBounded,
    GarciaPuente,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamStatus {
    Identified,
    NotIdentified,
    Timeout,
}

/// The run on one mixed component (or on the whole graph).
#[derive(Debug, Clone)]
pub struct ComponentResult {
    /// The component graph on `1..=|V_j|`.
    pub graph: MixedGraph,
    /// Original label of each local node.
    pub labels: Vec<usize>,
    /// Original labels of the district `C_j`.
    pub district: Vec<usize>,
    pub ideal: ModelIdeal,
    /// Formulas in identification order.
    pub formulas: Vec<Formula>,
    /// Parameters left unidentified.
    pub unresolved: Vec<Var>,
    pub exhausted: Option<Exhausted>,
    pub d_prime: u32,
    pub pairs_processed: u64,
    pub elapsed: Duration,
}

impl ComponentResult {
    /// A local variable under the original node labels.
    pub fn global_var(&self, v: Var) -> Var {
        let l = |i: usize| self.labels[i - 1];
        match v {
            Var::Lambda(a, b) => Var::Lambda(l(a), l(b)),
            Var::Omega(a, b) => Var::omega(l(a), l(b)),
            Var::Sigma(a, b) => Var::sigma(l(a), l(b)),
            other => other,
        }
    }

    /// Whether a local parameter is a parameter of the full graph handled by
    /// this component. Variances of parent-only nodes are not.
    pub fn owns(&self, v: Var) -> bool {
        match v {
            Var::Omega(a, b) if a == b => self.district.contains(&self.labels[a - 1]),
            other => other.is_theta(),
        }
    }

    pub fn render_var(&self, v: Var) -> String {
        self.ideal.table.render_var(v)
    }

    pub fn is_identified(&self) -> bool {
        self.unresolved.is_empty()
    }
}

/// One parameter of the full graph in a report.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterEntry {
    pub name: String,
    pub status: ParamStatus,
    pub component: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula_numerator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula_denominator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identifying_polynomial: Option<String>,
    pub depends_on: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plain_degree: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<FormulaKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identified_after_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentSummary {
    pub district: Vec<usize>,
    pub nodes: Vec<usize>,
    pub w_trek: u32,
    pub d_prime: u32,
    pub identified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<Exhausted>,
    pub pairs_processed: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_prime: Option<u32>,
    pub tian: bool,
    pub early_stop_lambda: bool,
    pub incremental: bool,
    pub timeout_s: Option<f64>,
    pub timeout_scope: TimeoutScope,
    pub spair_cap: Option<u64>,
    pub prune_unidentifiable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_ms: f64,
    pub preprocessing_ms: f64,
}

fn ser_graph<S: Serializer>(g: &MixedGraph, s: S) -> Result<S::Ok, S::Error> {
    g.to_spec().serialize(s)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// The outcome of an identification run.
#[derive(Debug, Clone, Serialize)]
pub struct IdentificationReport {
    #[serde(serialize_with = "ser_graph")]
    pub graph: MixedGraph,
    pub verdict: Verdict,
    pub parameters: Vec<ParameterEntry>,
    pub identification_order: Vec<String>,
    #[serde(rename = "components")]
    pub summaries: Vec<ComponentSummary>,
    pub timings: Timings,
    pub settings: Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    #[serde(skip)]
    pub components: Vec<ComponentResult>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl IdentificationReport {
    pub fn is_yes(&self) -> bool {
        self.verdict == Verdict::Yes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The formula for a parameter of the full graph, with its component.
    pub fn formula(&self, global: Var) -> Option<(&ComponentResult, &Formula)> {
        self.components.iter().find_map(|c| {
            c.formulas
                .iter()
                .find(|f| c.owns(f.param) && c.global_var(f.param) == global)
                .map(|f| (c, f))
        })
    }

    /// All formulas read off Gröbner bases, with their components.
    pub fn groebner_formulas(&self) -> impl Iterator<Item = (&ComponentResult, &Formula)> {
        self.components
            .iter()
            .flat_map(|c| c.formulas.iter().map(move |f| (c, f)))
            .filter(|(_, f)| f.kind == FormulaKind::Groebner)
    }

    fn assemble(
        graph: &MixedGraph,
        components: Vec<ComponentResult>,
        settings: Settings,
        preprocessing: Duration,
        elapsed: Duration,
    ) -> Self {
        let mut entries = Vec::new();
        for v in parameters(graph) {
            let found = components.iter().enumerate().find_map(|(ci, c)| {
                let local = c.ideal.table.theta().into_iter().find(|&x| c.owns(x) && c.global_var(x) == v)?;
                Some((ci, c, local))
            });
            let Some((ci, c, local)) = found else { continue };
            let name = v.to_string();
            let entry = match c.formulas.iter().find(|f| f.param == local) {
                Some(f) => ParameterEntry {
                    name,
                    status: ParamStatus::Identified,
                    component: ci,
                    formula_numerator: Some(f.numerator.to_string()),
                    formula_denominator: Some(f.denominator.to_string()),
                    identifying_polynomial: f.source.as_ref().map(|p| p.to_string()),
                    depends_on: f.depends_on.iter().map(|d| c.render_var(*d)).collect(),
                    w_degree: Some(f.w_degree),
                    plain_degree: Some(f.plain_degree),
                    kind: Some(f.kind),
                    identified_after_ms: Some(ms(f.elapsed)),
                },
                None => ParameterEntry {
                    name,
                    status: if c.exhausted.is_some() { ParamStatus::Timeout } else { ParamStatus::NotIdentified },
                    component: ci,
                    formula_numerator: None,
                    formula_denominator: None,
                    identifying_polynomial: None,
                    depends_on: Vec::new(),
                    w_degree: None,
                    plain_degree: None,
                    kind: None,
                    identified_after_ms: None,
                },
            };
            entries.push(entry);
        }
        let identification_order = components
            .iter()
            .flat_map(|c| c.formulas.iter().filter(|f| c.owns(f.param)).map(|f| c.global_var(f.param).to_string()))
            .collect();
        let parameters = entries;
        let all = parameters.iter().all(|p| p.status == ParamStatus::Identified);
        let definite_no = components.iter().any(|c| !c.is_identified() && c.exhausted.is_none());
        let verdict = if all {
            Verdict::Yes
        } else if definite_no {
            Verdict::No
        } else {
            Verdict::Partial
        };
        let summaries = components
            .iter()
            .map(|c| ComponentSummary {
                district: c.district.clone(),
                nodes: c.labels.clone(),
                w_trek: c.ideal.w_trek(),
                d_prime: c.d_prime,
                identified: c.is_identified(),
                exhausted: c.exhausted,
                pairs_processed: c.pairs_processed,
                elapsed_ms: ms(c.elapsed),
            })
            .collect();
        IdentificationReport {
            graph: graph.clone(),
            verdict,
            parameters,
            identification_order,
            summaries,
            timings: Timings { total_ms: ms(elapsed), preprocessing_ms: ms(preprocessing) },
            settings,
            verification: None,
            components,
            elapsed,
        }
    }
}

struct Clock {
    deadline: Option<Instant>,
}

fn limits_for(opts: &IdentOptions, clock: &Clock) -> Limits {
    Limits {
        deadline: clock.deadline,
        max_pairs: opts.spair_cap,
        cancel: opts.cancel.clone(),
        trace: opts.trace,
    }
}

fn exhausted_of(e: GbError) -> Exhausted {
    match e {
        GbError::EffortExceeded { reason, .. } => reason,
        other => panic!("model ideal violates a Gröbner precondition: {other}"),
    }
}

const JACOBIAN_POINTS: usize = 2;
const JACOBIAN_SEED: u64 = 0x6a61_636f_6269_616e;

/// Parameters that are not generically locally identifiable: the unit vector
/// of the parameter raises the rank of the Jacobian of `θ ↦ τ(σ)`. Ranks are
/// maximized over random integer points, which attains the generic rank
/// except with negligible probability.
pub fn locally_unidentifiable(ideal: &ModelIdeal) -> Vec<Var> {
    let table = &ideal.table;
    let theta = table.theta();
    let ids: Vec<usize> = theta.iter().map(|&v| table.id(v).expect("θ in table")).collect();
    let grads: Vec<Vec<Polynomial>> =
        ideal.taus.values().map(|tau| ids.iter().map(|&i| tau.derivative(i)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(JACOBIAN_SEED);
    let mut base = 0;
    let mut extended = vec![0; theta.len()];
    for _ in 0..JACOBIAN_POINTS {
        let point: BTreeMap<Var, Rational> = theta
            .iter()
            .map(|&v| (v, Rational::from_integer(rng.gen_range(1..=1 << 20) * if rng.gen_bool(0.5) { 1 } else { -1 })))
            .collect();
        let at = |v: Var| point.get(&v).cloned();
        let jac: Vec<Vec<Rational>> = grads
            .iter()
            .map(|row| row.iter().map(|g| g.evaluate(&at).expect("θ assigned")).collect())
            .collect();
        base = base.max(rank(&jac));
        for (j, r) in extended.iter_mut().enumerate() {
            let mut m = jac.clone();
            m.push((0..theta.len()).map(|c| if c == j { Rational::one() } else { Rational::zero() }).collect());
            *r = (*r).max(rank(&m));
        }
    }
    theta.into_iter().zip(extended).filter(|&(_, r)| r > base).map(|(v, _)| v).collect()
}

/// Degree-bounded identification (Algorithm 1) on one model ideal.
fn identify_ideal(
    ideal: &ModelIdeal,
    opts: &IdentOptions,
    limits: &Limits,
    t0: Instant,
) -> (Vec<Formula>, Vec<Var>, Option<Exhausted>, u64) {
    let table = &ideal.table;
    let mut rem: Vec<Var> = table.theta();
    let mut formulas: Vec<Formula> = Vec::new();
    let d_prime = opts.degree * ideal.w_trek();
    let mut pairs = 0u64;
    let hopeless: BTreeSet<Var> = if opts.prune_unidentifiable {
        locally_unidentifiable(ideal).into_iter().collect()
    } else {
        BTreeSet::new()
    };
    'restart: loop {
        if rem.iter().all(|v| hopeless.contains(v)) {
            break;
        }
        if opts.early_stop_lambda && !rem.iter().any(Var::is_lambda) {
            formulas.extend(recover_omega(ideal, &rem));
            rem.clear();
            break;
        }
        // one truncated basis per choice of smallest parameter, with the
        // number of its elements already scanned
        let mut states: Vec<Option<(TruncatedGb, usize)>> = vec![None; rem.len()];
        for k in 1..=d_prime {
            // complete bases gain nothing at higher degrees
            let done = |qi: usize| {
                hopeless.contains(&rem[qi]) || states[qi].as_ref().is_some_and(|(st, _)| st.is_complete())
            };
            if opts.incremental && (0..rem.len()).all(done) {
                break;
            }
            for qi in 0..rem.len() {
                if hopeless.contains(&rem[qi]) {
                    continue;
                }
                let order = MonomialOrder::for_parameter(table, &rem, rem[qi]).expect("parameter in table");
                let elements = if opts.incremental {
                    let slot = &mut states[qi];
                    if slot.is_none() {
                        *slot = Some((TruncatedGb::new(&ideal.generators, &order).expect("homogeneous ideal"), 0));
                    }
                    let (st, scanned) = slot.as_mut().unwrap();
                    let before = st.stats().pairs_processed;
                    let res = st.extend_to(k, limits);
                    pairs += st.stats().pairs_processed - before;
                    if let Err(e) = res {
                        return (formulas, rem, Some(exhausted_of(e)), pairs);
                    }
                    let fresh: Vec<Polynomial> = (*scanned..st.len()).map(|i| st.element(i)).collect();
                    *scanned = st.len();
                    fresh
                } else {
                    let mut st = TruncatedGb::new(&ideal.generators, &order).expect("homogeneous ideal");
                    let res = st.extend_to(k, limits);
                    pairs += st.stats().pairs_processed;
                    if let Err(e) = res {
                        return (formulas, rem, Some(exhausted_of(e)), pairs);
                    }
                    st.basis().elements
                };
                if let Some(ip) = detect_identifying(&elements, &order, &rem) {
                    if limits.trace {
                        eprintln!("[ident] k={k} order for {} identifies {}: {}", rem[qi], ip.param, ip.polynomial);
                    }
                    rem.retain(|&v| v != ip.param);
                    formulas.push(Formula::from_identifying(ip, t0.elapsed()));
                    continue 'restart;
                }
            }
        }
        break;
    }
    (formulas, rem, None, pairs)
}

/// Runs the degree-bounded identification algorithm, per mixed component
/// when `tian` is set.
pub fn algorithm1(graph: &MixedGraph, opts: &IdentOptions) -> Result<IdentificationReport, IdentError> {
    if opts.degree < 2 {
        return Err(IdentError::InvalidDegree(opts.degree));
    }
    let t0 = Instant::now();
    let mut clock = Clock { deadline: opts.timeout.map(|t| t0 + t) };
    let parts: Vec<(MixedGraph, Vec<usize>, Vec<usize>)> = if opts.tian {
        tian_decompose(graph)
            .into_iter()
            .map(|c| {
                let (g, labels) = c.to_graph();
                (g, labels, c.district)
            })
            .collect()
    } else {
        vec![(graph.clone(), graph.nodes().collect(), graph.nodes().collect())]
    };
    let ideals: Vec<ModelIdeal> =
        parts.iter().map(|(g, labels, _)| ModelIdeal::new(g, Some(labels.clone()))).collect();
    let preprocessing = t0.elapsed();
    if opts.timeout_scope == TimeoutScope::Gb {
        clock.deadline = opts.timeout.map(|t| Instant::now() + t);
    }
    let limits = limits_for(opts, &clock);
    let mut components = Vec::new();
    for ((g, labels, district), ideal) in parts.into_iter().zip(ideals) {
        let tc = Instant::now();
        let (formulas, unresolved, exhausted, pairs) = identify_ideal(&ideal, opts, &limits, t0);
        components.push(ComponentResult {
            graph: g,
            labels,
            district,
            d_prime: opts.degree * ideal.w_trek(),
            ideal,
            formulas,
            unresolved,
            exhausted,
            pairs_processed: pairs,
            elapsed: tc.elapsed(),
        });
    }
    let settings = Settings {
        method: Method::DegreeBounded,
        d: Some(opts.degree),
        d_prime: components.iter().map(|c| c.d_prime).max(),
        tian: opts.tian,
        early_stop_lambda: opts.early_stop_lambda,
        incremental: opts.incremental,
        timeout_s: opts.timeout.map(|t| t.as_secs_f64()),
        timeout_scope: opts.timeout_scope,
        spair_cap: opts.spair_cap,
        prune_unidentifiable: opts.prune_unidentifiable,
    };
    Ok(IdentificationReport::assemble(graph, components, settings, preprocessing, t0.elapsed()))
}

/// Settings of the full-basis baseline.
#[derive(Debug, Clone, Default)]
pub struct BaselineOptions {
    pub timeout: Option<Duration>,
    pub spair_cap: Option<u64>,
    pub trace: bool,
    pub cancel: Option<Arc<AtomicBool>>,
}

/// The lex-elimination order of the baseline: variances first, then the
/// bidirected covariances, then the edge effects, which are the smallest
/// block variables.
pub fn baseline_order(table: &Arc<VariableTable>) -> MonomialOrder {
    let theta = table.theta();
    let mut block: Vec<Var> = theta.iter().copied().filter(|v| matches!(v, Var::Omega(a, b) if a == b)).collect();
    block.extend(theta.iter().copied().filter(|v| matches!(v, Var::Omega(a, b) if a != b)));
    block.extend(theta.iter().copied().filter(Var::is_lambda));
    MonomialOrder::elimination(table, &block, false).expect("parameters in table")
}

/// Identifiability from the full reduced Gröbner basis of the affine model
/// ideal under a lex-elimination order for the parameters. Parameters are
/// decided from the smallest upwards: `q` is identified by an element that
/// is linear in `q`, has `q` in its leading monomial and otherwise mentions
/// only parameters already identified.
pub fn garcia_puente(graph: &MixedGraph, opts: &BaselineOptions) -> IdentificationReport {
    let t0 = Instant::now();
    let ideal = ModelIdeal::new(graph, None);
    let order = baseline_order(&ideal.table);
    let limits = Limits {
        deadline: opts.timeout.map(|t| t0 + t),
        max_pairs: opts.spair_cap,
        cancel: opts.cancel.clone(),
        trace: opts.trace,
    };
    let preprocessing = t0.elapsed();
    let mut formulas = Vec::new();
    let mut exhausted = None;
    let mut pairs = 0;
    let mut unresolved: Vec<Var> = ideal.table.theta();
    match buchberger_full(&ideal.affine_generators(), &order, &limits) {
        Err(e) => exhausted = Some(exhausted_of(e)),
        Ok(gb) => {
            pairs = gb.stats.pairs_processed;
            let table = &ideal.table;
            let mut known: HashSet<usize> = HashSet::new();
            for &q in order.block1().iter().rev() {
                let found = gb.elements.iter().find(|g| {
                    let ok_terms = g.terms().all(|(m, _)| {
                        m.iter().all(|(v, e)| {
                            if v == q {
                                e == 1
                            } else {
                                !table.var(v).is_theta() || known.contains(&v)
                            }
                        })
                    });
                    ok_terms && g.leading_term(&order).is_ok_and(|(lm, _)| lm.exponent(q) == 1)
                });
                if let Some(g) = found {
                    let mut parts = g.coefficients_in(q);
                    let a = parts.remove(&1).unwrap();
                    let b = -&parts.remove(&0).unwrap_or_else(|| Polynomial::zero(table));
                    let mut f = Formula::from_identifying(
                        IdentifyingPolynomial { param: table.var(q), polynomial: g.clone(), denominator: a, numerator: b },
                        t0.elapsed(),
                    );
                    f.w_degree = g.weighted_degree().unwrap_or(0);
                    formulas.push(f);
                    known.insert(q);
                }
            }
            unresolved.retain(|v| !formulas.iter().any(|f| f.param == *v));
        }
    }
    let elapsed = t0.elapsed();
    let component = ComponentResult {
        graph: graph.clone(),
        labels: graph.nodes().collect(),
        district: graph.nodes().collect(),
        d_prime: 0,
        ideal,
        formulas,
        unresolved,
        exhausted,
        pairs_processed: pairs,
        elapsed,
    };
    let settings = Settings {
        method: Method::GarciaPuente,
        d: None,
        d_prime: None,
        tian: false,
        early_stop_lambda: false,
        incremental: false,
        timeout_s: opts.timeout.map(|t| t.as_secs_f64()),
        timeout_scope: TimeoutScope::All,
        spair_cap: opts.spair_cap,
        prune_unidentifiable: false,
    };
    IdentificationReport::assemble(graph, vec![component], settings, preprocessing, elapsed)
}

/// A formula in covariance entries only.
#[derive(Debug, Clone)]
pub struct ChainFormula {
    pub component: usize,
    pub param: Var,
    pub numerator: Polynomial,
    pub denominator: Polynomial,
    /// Seed of a parameter sample at which the denominator is nonzero.
    pub witness_seed: u64,
}

/// Rewrites `p` over `σ` alone given pure-`σ` fractions for the parameters
/// it mentions: returns `(num, den)` with `p = num / den`.
fn clear_parameters(p: &Polynomial, known: &BTreeMap<Var, (Polynomial, Polynomial)>) -> (Polynomial, Polynomial) {
    let table = p.table();
    let mut max_exp: BTreeMap<usize, u32> = BTreeMap::new();
    for v in p.support() {
        if table.var(v).is_theta() {
            max_exp.insert(v, p.degree_in(v));
        }
    }
    let mut den = Polynomial::one(table);
    for (&v, &e) in &max_exp {
        den = &den * &known[&table.var(v)].1.pow(e);
    }
    let mut num = Polynomial::zero(table);
    for (m, c) in p.terms() {
        let mut rest = Vec::new();
        let mut t = Polynomial::constant(table, c.clone());
        for (v, e) in m.iter() {
            match max_exp.get(&v) {
                Some(&top) => {
                    let (n, d) = &known[&table.var(v)];
                    t = &(&t * &n.pow(e)) * &d.pow(top - e);
                }
                None => rest.push((v, e)),
            }
        }
        for (&v, &top) in &max_exp {
            if m.exponent(v) == 0 {
                t = &t * &known[&table.var(v)].1.pow(top);
            }
        }
        num = &num + &t.mul_monomial(&Monomial::from_pairs(rest));
    }
    (num, den)
}

/// Back-substitutes earlier formulas into later ones so that every
/// parameter is a quotient of polynomials in the covariance entries. Each
/// denominator is certified nonzero at a sampled point.
pub fn substitute_formula_chain(report: &IdentificationReport, seed: u64) -> Result<Vec<ChainFormula>, IdentError> {
    if !report.is_yes() {
        return Err(IdentError::NotIdentified);
    }
    let mut out = Vec::new();
    for (ci, comp) in report.components.iter().enumerate() {
        let mut known: BTreeMap<Var, (Polynomial, Polynomial)> = BTreeMap::new();
        for f in &comp.formulas {
            let (bn, bd) = clear_parameters(&f.numerator, &known);
            let (an, ad) = clear_parameters(&f.denominator, &known);
            let (num, den) = if bd == ad { (bn, an) } else { (&bn * &ad, &bd * &an) };
            let witness_seed = nonzero_witness(&comp.graph, &den, seed)
                .ok_or_else(|| IdentError::DegenerateDenominator { parameter: comp.render_var(f.param) })?;
            known.insert(f.param, (num.clone(), den.clone()));
            out.push(ChainFormula { component: ci, param: f.param, numerator: num, denominator: den, witness_seed });
        }
    }
    Ok(out)
}

/// Evaluates `num / den` at a covariance point.
pub fn evaluate_fraction(num: &Polynomial, den: &Polynomial, point: &dyn Fn(Var) -> Option<Rational>) -> Option<Rational> {
    let d = den.evaluate(point).ok()?;
    if d.is_zero() {
        return None;
    }
    Some(&num.evaluate(point).ok()? / &d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::examples;

    fn v(t: &Arc<VariableTable>, x: Var) -> Polynomial {
        Polynomial::var(t, x).unwrap()
    }

    #[test]
    fn iv_trek_polynomials() {
        let ideal = build_ideal(&examples::instrumental_variable());
        assert_eq!(ideal.taus[&(2, 3)].to_string(), "l_{1,2}^2*l_{2,3}*w_{1,1} + l_{2,3}*w_{2,2} + w_{2,3}");
        assert_eq!(ideal.taus[&(1, 2)].to_string(), "l_{1,2}*w_{1,1}");
        let t = &ideal.table;
        let s23 = &v(t, Var::Sigma(2, 3))
            - &(&(&(&v(t, Var::Omega(2, 3)) * &v(t, Var::H).pow(3))
                + &(&(&v(t, Var::Omega(2, 2)) * &v(t, Var::Lambda(2, 3))) * &v(t, Var::H).pow(2)))
                + &(&(&v(t, Var::Omega(1, 1)) * &v(t, Var::Lambda(1, 2)).pow(2)) * &v(t, Var::Lambda(2, 3))));
        assert_eq!(ideal.generators[4], s23);
        assert_eq!(ideal.generators[1], &v(t, Var::Sigma(1, 2)) - &(&v(t, Var::Omega(1, 1)) * &v(t, Var::Lambda(1, 2))));
        assert!(ideal.generators.iter().all(Polynomial::is_w_homogeneous));
    }

    #[test]
    fn jacobian_flags_bow_parameters() {
        let flagged = locally_unidentifiable(&build_ideal(&examples::bow()));
        assert!(!flagged.contains(&Var::Omega(1, 1)));
        for q in [Var::Lambda(1, 2), Var::Omega(2, 2), Var::Omega(1, 2)] {
            assert!(flagged.contains(&q), "{q} not flagged");
        }
        assert!(locally_unidentifiable(&build_ideal(&examples::instrumental_variable())).is_empty());
    }

    #[test]
    fn edgeless_ideal() {
        let ideal = build_ideal(&MixedGraph::empty(3));
        let t = &ideal.table;
        assert_eq!(ideal.taus[&(2, 2)], v(t, Var::Omega(2, 2)));
        assert!(ideal.taus[&(1, 3)].is_zero());
        assert_eq!(ideal.generators[2], v(t, Var::Sigma(1, 3)));
        assert_eq!(ideal.generators.len(), 6);
    }

    #[test]
    fn trek_enumeration_iv() {
        let g = examples::instrumental_variable();
        let ideal = build_ideal(&g);
        let t = &ideal.table;
        let treks = treks_enumerate(&g, t, 2, 3, 10);
        let sum = Polynomial::from_terms(t, treks.iter().map(|m| (m.clone(), Rational::one())));
        assert_eq!(treks.len(), 3);
        assert_eq!(sum, ideal.taus[&(2, 3)]);
        let lone = MixedGraph::new(3, [(1, 2)], []).unwrap();
        let lt = build_ideal(&lone).table;
        assert_eq!(treks_enumerate(&lone, &lt, 3, 3, 5).len(), 1);
        assert!(treks_enumerate(&lone, &lt, 1, 3, 5).is_empty());
    }

    #[test]
    fn recover_omega_iv() {
        let ideal = build_ideal(&examples::instrumental_variable());
        let fs = recover_omega(&ideal, &[Var::Omega(1, 1), Var::Omega(2, 2)]);
        assert_eq!(fs[0].numerator.to_string(), "s_{1,1}");
        let t = &ideal.table;
        let l12 = v(t, Var::Lambda(1, 2));
        let want = &(&v(t, Var::Sigma(2, 2)) - &(&(&l12 * &v(t, Var::Sigma(1, 2))) * &Polynomial::constant(t, Rational::from_integer(2))))
            + &(&l12.pow(2) * &v(t, Var::Sigma(1, 1)));
        assert_eq!(fs[1].numerator, want);
        assert_eq!(fs[1].depends_on, vec![Var::Lambda(1, 2)]);
        let edgeless = build_ideal(&MixedGraph::empty(2));
        let fs = recover_omega(&edgeless, &[Var::Omega(2, 2)]);
        assert_eq!(fs[0].numerator.to_string(), "s_{2,2}");
    }

    #[test]
    fn iv_graph_is_identified() {
        let g = examples::instrumental_variable();
        let rep = algorithm1(&g, &IdentOptions { degree: 2, tian: false, ..Default::default() }).unwrap();
        assert_eq!(rep.verdict, Verdict::Yes);
        let (_, f) = rep.formula(Var::Lambda(2, 3)).unwrap();
        assert_eq!(f.numerator.to_string(), "s_{1,3}");
        assert_eq!(f.denominator.to_string(), "s_{1,2}");
        assert!(rep.to_json().contains("\"verdict\": \"yes\""));
    }

    #[test]
    fn invalid_degree() {
        let g = examples::bow();
        assert_eq!(
            algorithm1(&g, &IdentOptions { degree: 1, ..Default::default() }).unwrap_err(),
            IdentError::InvalidDegree(1)
        );
    }

    #[test]
    fn bow_is_not_identified() {
        let g = examples::bow();
        for tian in [false, true] {
            let rep = algorithm1(&g, &IdentOptions { degree: 3, tian, ..Default::default() }).unwrap();
            assert_eq!(rep.verdict, Verdict::No);
        }
        assert_eq!(garcia_puente(&g, &BaselineOptions::default()).verdict, Verdict::No);
    }

    #[test]
    fn baseline_iv() {
        let g = examples::instrumental_variable();
        let rep = garcia_puente(&g, &BaselineOptions::default());
        assert_eq!(rep.verdict, Verdict::Yes);
        let (_, f) = rep.formula(Var::Lambda(2, 3)).unwrap();
        assert_eq!((f.numerator.to_string(), f.denominator.to_string()), ("s_{1,3}".into(), "s_{1,2}".into()));
    }

    #[test]
    fn chain_of_independent_formula_is_unchanged() {
        let g = examples::instrumental_variable();
        let rep = algorithm1(&g, &IdentOptions { degree: 2, tian: false, ..Default::default() }).unwrap();
        let chain = substitute_formula_chain(&rep, 3).unwrap();
        let c = chain.iter().find(|c| c.param == Var::Lambda(2, 3)).unwrap();
        assert_eq!(c.numerator.to_string(), "s_{1,3}");
        assert_eq!(c.denominator.to_string(), "s_{1,2}");
    }
}

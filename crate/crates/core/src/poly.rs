//! Sparse multivariate polynomials with exact rational coefficients over the
//! model ring `Q[λ, ω, σ, h]`, weighted degrees, weighted homogenization and
//! the block orders used for elimination.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{MixedGraph, TrekWeights};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("polynomials live over different variable tables")]
    TableMismatch,
    #[error("operation undefined for the zero polynomial")]
    ZeroPolynomial,
    #[error("variable {0} is not in the table")]
    UnknownVariable(String),
    #[error("no value assigned to {0}")]
    Unassigned(String),
    #[error("polynomial already contains the homogenizing variable")]
    ContainsH,
    #[error("homogenization target {target} is below the weighted degree {degree}")]
    TargetBelowDegree { target: u32, degree: u32 },
    #[error("monomial order must place every variable in exactly one block")]
    BadBlocks,
}

/// A ring variable. Node indices are the 1-based labels of the graph the
/// table was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Var {
    /// Direct effect `λ_uv` of the edge `u -> v`.
    Lambda(usize, usize),
    /// Error covariance `ω_uv`, `u <= v`.
    Omega(usize, usize),
    /// Covariance entry `σ_uv`, `u <= v`.
    Sigma(usize, usize),
    /// Homogenizing variable.
    H,
    /// Free auxiliary variable, used by generic tests.
    Aux(usize),
}

impl Var {
    pub fn is_theta(&self) -> bool {
        matches!(self, Var::Lambda(..) | Var::Omega(..))
    }

    pub fn is_lambda(&self) -> bool {
        matches!(self, Var::Lambda(..))
    }

    pub fn is_sigma(&self) -> bool {
        matches!(self, Var::Sigma(..))
    }

    /// `σ_uv` with the indices put in order.
    pub fn sigma(u: usize, v: usize) -> Var {
        Var::Sigma(u.min(v), u.max(v))
    }

    /// `ω_uv` with the indices put in order.
    pub fn omega(u: usize, v: usize) -> Var {
        Var::Omega(u.min(v), u.max(v))
    }

    /// Renders the variable, mapping node indices through `labels`
    /// (`labels[i - 1]` is the display label of node `i`).
    pub fn render(&self, labels: Option<&[usize]>) -> String {
        let l = |i: usize| labels.map_or(i, |ls| ls[i - 1]);
        match *self {
            Var::Lambda(u, v) => format!("l_{{{},{}}}", l(u), l(v)),
            Var::Omega(u, v) => format!("w_{{{},{}}}", l(u), l(v)),
            Var::Sigma(u, v) => format!("s_{{{},{}}}", l(u), l(v)),
            Var::H => "h".to_string(),
            Var::Aux(i) => format!("x{i}"),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

/// The ordered list of ring variables with their weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableTable {
    vars: Vec<Var>,
    weights: Vec<u32>,
    index: HashMap<Var, usize>,
    labels: Option<Vec<usize>>,
}

impl VariableTable {
    /// A table over arbitrary variables; weights must be positive.
    pub fn new(vars: Vec<(Var, u32)>) -> Result<Arc<Self>, PolyError> {
        let mut index = HashMap::new();
        for (i, (v, w)) in vars.iter().enumerate() {
            if *w == 0 || index.insert(*v, i).is_some() {
                return Err(PolyError::UnknownVariable(v.to_string()));
            }
        }
        let (vars, weights) = vars.into_iter().unzip();
        Ok(Arc::new(VariableTable { vars, weights, index, labels: None }))
    }

    /// The model ring of a graph, listed as `λ` (by edge), `ω_vv` (by node),
    /// `ω_uv` (by bidirected edge), `σ_uv` (`u <= v`, lexicographic), `h`.
    /// `θ` variables and `h` weigh 1, `σ_uv` weighs `w(σ_uv)`.
    pub fn for_graph(graph: &MixedGraph, weights: &TrekWeights) -> Arc<Self> {
        let mut vars = Vec::new();
        for &(u, v) in graph.directed() {
            vars.push((Var::Lambda(u, v), 1));
        }
        for v in graph.nodes() {
            vars.push((Var::Omega(v, v), 1));
        }
        for &(u, v) in graph.bidirected() {
            vars.push((Var::Omega(u, v), 1));
        }
        for u in graph.nodes() {
            for v in u..=graph.p() {
                vars.push((Var::Sigma(u, v), weights.weight(u, v)));
            }
        }
        vars.push((Var::H, 1));
        Self::new(vars).expect("graph variables are distinct")
    }

    /// Same table, rendering node `i` as `labels[i - 1]`.
    pub fn with_labels(&self, labels: Vec<usize>) -> Arc<Self> {
        let mut t = self.clone();
        t.labels = Some(labels);
        Arc::new(t)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, id: usize) -> Var {
        self.vars[id]
    }

    pub fn weight(&self, id: usize) -> u32 {
        self.weights[id]
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn id(&self, v: Var) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn require(&self, v: Var) -> Result<usize, PolyError> {
        self.id(v).ok_or_else(|| PolyError::UnknownVariable(v.to_string()))
    }

    /// The parameters `θ = λ ∪ ω` in table order.
    pub fn theta(&self) -> Vec<Var> {
        self.vars.iter().copied().filter(Var::is_theta).collect()
    }

    pub fn render_var(&self, v: Var) -> String {
        v.render(self.labels.as_deref())
    }
}

/// A monomial as a sparse list of `(variable id, exponent)` pairs sorted by
/// id; exponents are positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(Vec<(u32, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(id: usize) -> Self {
        Monomial(vec![(id as u32, 1)])
    }

    /// Builds from `(id, exp)` pairs in any order; zero exponents are dropped
    /// and repeated ids are merged.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for (id, e) in pairs {
            if e > 0 {
                *map.entry(id as u32).or_insert(0) += e;
            }
        }
        Monomial(map.into_iter().collect())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, id: usize) -> u32 {
        self.0
            .binary_search_by_key(&(id as u32), |&(v, _)| v)
            .map_or(0, |i| self.0[i].1)
    }

    /// `(id, exponent)` pairs with positive exponent, by increasing id.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|&(v, e)| (v as usize, e))
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn weighted_degree(&self, weights: &[u32]) -> u32 {
        self.0.iter().map(|&(v, e)| weights[v as usize] * e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.iter().all(|(v, e)| other.exponent(v) >= e)
    }

    /// `other / self` when `self` divides `other`.
    pub fn quotient(&self, other: &Monomial) -> Option<Monomial> {
        if !self.divides(other) {
            return None;
        }
        Some(Monomial::from_pairs(other.iter().map(|(v, e)| (v, e - self.exponent(v)))))
    }

    /// The monomial with variable `id` removed.
    pub fn without(&self, id: usize) -> Monomial {
        Monomial(self.0.iter().copied().filter(|&(v, _)| v as usize != id).collect())
    }

    /// The monomial with variable `id` raised to `exp` (0 removes it).
    pub fn with_exponent(&self, id: usize, exp: u32) -> Monomial {
        let mut pairs: Vec<(usize, u32)> = self.without(id).iter().collect();
        pairs.push((id, exp));
        Monomial::from_pairs(pairs)
    }

    pub fn render(&self, table: &VariableTable) -> String {
        if self.is_one() {
            return "1".to_string();
        }
        self.iter()
            .map(|(v, e)| {
                let name = table.render_var(table.var(v));
                if e == 1 {
                    name
                } else {
                    format!("{name}^{e}")
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// A polynomial in canonical form: a map from monomial to nonzero coefficient.
#[derive(Clone)]
pub struct Polynomial {
    table: Arc<VariableTable>,
    terms: BTreeMap<Monomial, Rational>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && same_table(&self.table, &other.table)
    }
}

impl Eq for Polynomial {}

fn same_table(a: &Arc<VariableTable>, b: &Arc<VariableTable>) -> bool {
    Arc::ptr_eq(a, b) || (a.vars == b.vars && a.weights == b.weights)
}

impl Polynomial {
    pub fn zero(table: &Arc<VariableTable>) -> Self {
        Polynomial { table: table.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(table: &Arc<VariableTable>, c: Rational) -> Self {
        Self::term(table, Monomial::one(), c)
    }

    pub fn one(table: &Arc<VariableTable>) -> Self {
        Self::constant(table, Rational::one())
    }

    pub fn term(table: &Arc<VariableTable>, m: Monomial, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Polynomial { table: table.clone(), terms }
    }

    /// The polynomial consisting of the single variable `v`.
    pub fn var(table: &Arc<VariableTable>, v: Var) -> Result<Self, PolyError> {
        Ok(Self::term(table, Monomial::var(table.require(v)?), Rational::one()))
    }

    /// Collects `(monomial, coefficient)` pairs, adding up repeats.
    pub fn from_terms(
        table: &Arc<VariableTable>,
        terms: impl IntoIterator<Item = (Monomial, Rational)>,
    ) -> Self {
        let mut p = Self::zero(table);
        for (m, c) in terms {
            p.add_term(m, &c);
        }
        p
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        &self.table
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical (monomial key) order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    fn add_term(&mut self, m: Monomial, c: &Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get() + c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    fn check(&self, other: &Polynomial) -> Result<(), PolyError> {
        if same_table(&self.table, &other.table) {
            Ok(())
        } else {
            Err(PolyError::TableMismatch)
        }
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), &-c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut out = Polynomial::zero(&self.table);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), &(c1 * c2));
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(&self.table);
        }
        Polynomial {
            table: self.table.clone(),
            terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Polynomial {
        Polynomial {
            table: self.table.clone(),
            terms: self.terms.iter().map(|(t, a)| (t.mul(m), a.clone())).collect(),
        }
    }

    pub fn pow(&self, exp: u32) -> Polynomial {
        let mut acc = Polynomial::one(&self.table);
        for _ in 0..exp {
            acc = &acc * self;
        }
        acc
    }

    /// Maximal weighted degree of a term; `None` for zero.
    pub fn weighted_degree(&self) -> Option<u32> {
        let w = self.table.weights();
        self.terms.keys().map(|m| m.weighted_degree(w)).max()
    }

    /// Maximal total degree of a term; `None` for zero.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::total_degree).max()
    }

    pub fn is_w_homogeneous(&self) -> bool {
        let w = self.table.weights();
        let mut degs = self.terms.keys().map(|m| m.weighted_degree(w));
        match degs.next() {
            None => true,
            Some(d) => degs.all(|e| e == d),
        }
    }

    fn h_id(&self) -> Result<usize, PolyError> {
        self.table.require(Var::H)
    }

    /// Weighted homogenization: pads every term with `h` up to the weighted
    /// degree of the polynomial.
    pub fn homogenize(&self) -> Result<Polynomial, PolyError> {
        let d = self.weighted_degree().ok_or(PolyError::ZeroPolynomial)?;
        self.homogenize_to(d)
    }

    /// Pads every term with `h` up to weighted degree `target`.
    pub fn homogenize_to(&self, target: u32) -> Result<Polynomial, PolyError> {
        let h = self.h_id()?;
        let degree = self.weighted_degree().ok_or(PolyError::ZeroPolynomial)?;
        if self.terms.keys().any(|m| m.exponent(h) > 0) {
            return Err(PolyError::ContainsH);
        }
        if target < degree {
            return Err(PolyError::TargetBelowDegree { target, degree });
        }
        let hw = self.table.weight(h);
        let w = self.table.weights();
        let terms = self.terms.iter().map(|(m, c)| {
            let pad = (target - m.weighted_degree(w)) / hw;
            (m.mul(&Monomial::from_pairs([(h, pad)])), c.clone())
        });
        Ok(Polynomial::from_terms(&self.table, terms))
    }

    /// Sets `h = 1`.
    pub fn dehomogenize(&self) -> Polynomial {
        match self.table.id(Var::H) {
            None => self.clone(),
            Some(h) => Polynomial::from_terms(
                &self.table,
                self.terms.iter().map(|(m, c)| (m.without(h), c.clone())),
            ),
        }
    }

    /// Ids of the variables that occur.
    pub fn support(&self) -> BTreeSet<usize> {
        self.terms.keys().flat_map(|m| m.iter().map(|(v, _)| v)).collect()
    }

    pub fn variables(&self) -> Vec<Var> {
        self.support().into_iter().map(|i| self.table.var(i)).collect()
    }

    pub fn degree_in(&self, id: usize) -> u32 {
        self.terms.keys().map(|m| m.exponent(id)).max().unwrap_or(0)
    }

    /// Coefficients with respect to one variable: `f = Σ_k c_k · x^k`.
    pub fn coefficients_in(&self, id: usize) -> BTreeMap<u32, Polynomial> {
        let mut out: BTreeMap<u32, Polynomial> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.exponent(id))
                .or_insert_with(|| Polynomial::zero(&self.table))
                .add_term(m.without(id), c);
        }
        out
    }

    /// Replaces variables by polynomials; `subst` returns `None` to keep a
    /// variable as is.
    pub fn substitute(&self, subst: &dyn Fn(Var) -> Option<Polynomial>) -> Polynomial {
        let mut cache: HashMap<(usize, u32), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero(&self.table);
        for (m, c) in &self.terms {
            let mut acc = Polynomial::constant(&self.table, c.clone());
            let mut kept = Vec::new();
            for (v, e) in m.iter() {
                match subst(self.table.var(v)) {
                    None => kept.push((v, e)),
                    Some(p) => {
                        let pw = cache.entry((v, e)).or_insert_with(|| p.pow(e));
                        acc = &acc * &*pw;
                    }
                }
            }
            let acc = acc.mul_monomial(&Monomial::from_pairs(kept));
            for (tm, tc) in acc.terms {
                out.add_term(tm, &tc);
            }
        }
        out
    }

    /// Partial derivative with respect to variable `id`.
    pub fn derivative(&self, id: usize) -> Polynomial {
        let terms = self.terms.iter().filter_map(|(m, c)| {
            let e = m.exponent(id);
            (e > 0).then(|| (m.with_exponent(id, e - 1), c * &Rational::from_integer(e as i64)))
        });
        Polynomial::from_terms(&self.table, terms)
    }

    /// Exact evaluation; every occurring variable must be assigned.
    pub fn evaluate(&self, point: &dyn Fn(Var) -> Option<Rational>) -> Result<Rational, PolyError> {
        let mut values: HashMap<usize, Rational> = HashMap::new();
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in m.iter() {
                let x = match values.get(&v) {
                    Some(x) => x.clone(),
                    None => {
                        let var = self.table.var(v);
                        let x = point(var).ok_or_else(|| PolyError::Unassigned(var.to_string()))?;
                        values.insert(v, x.clone());
                        x
                    }
                };
                t = &t * &x.pow(e);
            }
            acc = &acc + &t;
        }
        Ok(acc)
    }

    /// Moves the polynomial to another table holding all of its variables.
    pub fn transfer(&self, table: &Arc<VariableTable>) -> Result<Polynomial, PolyError> {
        let mut map = HashMap::new();
        for v in self.support() {
            map.insert(v, table.require(self.table.var(v))?);
        }
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| (Monomial::from_pairs(m.iter().map(|(v, e)| (map[&v], e))), c.clone()));
        Ok(Polynomial::from_terms(table, terms))
    }

    /// The largest term under `order`.
    pub fn leading_term(&self, order: &MonomialOrder) -> Result<(Monomial, Rational), PolyError> {
        self.terms
            .iter()
            .max_by(|a, b| order.compare(a.0, b.0))
            .map(|(m, c)| (m.clone(), c.clone()))
            .ok_or(PolyError::ZeroPolynomial)
    }

    /// Terms sorted in decreasing `order`.
    pub fn sorted_terms(&self, order: &MonomialOrder) -> Vec<(Monomial, Rational)> {
        let mut ts: Vec<_> = self.terms.iter().map(|(m, c)| (m.clone(), c.clone())).collect();
        ts.sort_by(|a, b| order.compare(&b.0, &a.0));
        ts
    }

    /// Divides by the leading coefficient under `order`.
    pub fn monic(&self, order: &MonomialOrder) -> Polynomial {
        match self.leading_term(order) {
            Ok((_, c)) => self.scale(&c.recip()),
            Err(_) => self.clone(),
        }
    }

    /// Renders with terms in decreasing `order`.
    pub fn render(&self, order: &MonomialOrder) -> String {
        render_terms(&self.table, &self.sorted_terms(order))
    }
}

fn render_terms(table: &VariableTable, terms: &[(Monomial, Rational)]) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    let mut s = String::new();
    for (i, (m, c)) in terms.iter().enumerate() {
        let neg = c.is_negative();
        let mag = c.abs();
        if i == 0 {
            if neg {
                s.push('-');
            }
        } else {
            s.push_str(if neg { " - " } else { " + " });
        }
        if m.is_one() {
            s.push_str(&mag.to_string());
        } else if mag.is_one() {
            s.push_str(&m.render(table));
        } else {
            s.push_str(&format!("{mag}*{}", m.render(table)));
        }
    }
    s
}

impl fmt::Display for Polynomial {
    /// Terms by decreasing weighted degree, then decreasing canonical key.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.table.weights();
        let mut ts: Vec<_> = self.terms.iter().map(|(m, c)| (m.clone(), c.clone())).collect();
        ts.sort_by(|a, b| {
            b.0.weighted_degree(w).cmp(&a.0.weighted_degree(w)).then_with(|| a.0.cmp(&b.0))
        });
        f.write_str(&render_terms(&self.table, &ts))
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

macro_rules! poly_op {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl<'a> std::ops::$tr<&'a Polynomial> for &'a Polynomial {
            type Output = Polynomial;
            /// Panics when the operands live over different tables; use the
            /// `checked_*` form to get an error instead.
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                self.$checked(rhs).expect("polynomials over the same table")
            }
        }
    };
}
poly_op!(Add, add, checked_add);
poly_op!(Sub, sub, checked_sub);
poly_op!(Mul, mul, checked_mul);

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-Rational::one())
    }
}

/// A block order: `block1` is compared lexicographically (first listed
/// variable has the highest priority), ties are broken by weighted reverse
/// lexicographic order on `block2`. A graded order compares the full
/// weighted degree before anything else.
///
/// With `graded = true` this is the w-graded lex-elimination order; with
/// `graded = false` a plain lex-elimination order.
#[derive(Debug, Clone)]
pub struct MonomialOrder {
    table: Arc<VariableTable>,
    graded: bool,
    block1: Vec<usize>,
    block2: Vec<usize>,
}

impl MonomialOrder {
    /// `block1` lists the eliminated variables from largest to smallest; all
    /// other variables form `block2` in table order.
    pub fn elimination(
        table: &Arc<VariableTable>,
        block1: &[Var],
        graded: bool,
    ) -> Result<Self, PolyError> {
        let b1: Vec<usize> = block1.iter().map(|v| table.require(*v)).collect::<Result<_, _>>()?;
        let set: BTreeSet<usize> = b1.iter().copied().collect();
        if set.len() != b1.len() {
            return Err(PolyError::BadBlocks);
        }
        let b2 = (0..table.len()).filter(|i| !set.contains(i)).collect();
        Ok(MonomialOrder { table: table.clone(), graded, block1: b1, block2: b2 })
    }

    /// The w-graded lex-elimination order for `theta_rem` in which `q` is the
    /// smallest block variable. The other block variables keep their table
    /// order.
    pub fn for_parameter(
        table: &Arc<VariableTable>,
        theta_rem: &[Var],
        q: Var,
    ) -> Result<Self, PolyError> {
        if !theta_rem.contains(&q) {
            return Err(PolyError::UnknownVariable(q.to_string()));
        }
        let mut block: Vec<Var> = theta_rem.iter().copied().filter(|&v| v != q).collect();
        block.sort_by_key(|v| table.id(*v));
        block.push(q);
        Self::elimination(table, &block, true)
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        &self.table
    }

    pub fn is_graded(&self) -> bool {
        self.graded
    }

    pub fn block1(&self) -> &[usize] {
        &self.block1
    }

    pub fn block2(&self) -> &[usize] {
        &self.block2
    }

    pub fn block1_vars(&self) -> Vec<Var> {
        self.block1.iter().map(|&i| self.table.var(i)).collect()
    }

    pub fn compare(&self, a: &Monomial, b: &Monomial) -> Ordering {
        let w = self.table.weights();
        if self.graded {
            let o = a.weighted_degree(w).cmp(&b.weighted_degree(w));
            if o != Ordering::Equal {
                return o;
            }
        }
        for &v in &self.block1 {
            let o = a.exponent(v).cmp(&b.exponent(v));
            if o != Ordering::Equal {
                return o;
            }
        }
        let deg2 = |m: &Monomial| self.block2.iter().map(|&v| w[v] * m.exponent(v)).sum::<u32>();
        let o = deg2(a).cmp(&deg2(b));
        if o != Ordering::Equal {
            return o;
        }
        for &v in self.block2.iter().rev() {
            let o = b.exponent(v).cmp(&a.exponent(v));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::{examples, trek_weights};
    use proptest::prelude::*;

    pub(crate) fn aux_table(n: usize, weights: &[u32]) -> Arc<VariableTable> {
        VariableTable::new((0..n).map(|i| (Var::Aux(i), weights[i])).collect()).unwrap()
    }

    fn iv_table() -> Arc<VariableTable> {
        let g = examples::instrumental_variable();
        VariableTable::for_graph(&g, &trek_weights(&g))
    }

    fn v(t: &Arc<VariableTable>, var: Var) -> Polynomial {
        Polynomial::var(t, var).unwrap()
    }

    fn c(t: &Arc<VariableTable>, n: i64) -> Polynomial {
        Polynomial::constant(t, Rational::from_integer(n))
    }

    #[test]
    fn table_layout_for_iv_graph() {
        let t = iv_table();
        let names: Vec<String> = t.vars().iter().map(|v| v.to_string()).collect();
        assert_eq!(
            names,
            [
                "l_{1,2}", "l_{2,3}", "w_{1,1}", "w_{2,2}", "w_{3,3}", "w_{2,3}", "s_{1,1}",
                "s_{1,2}", "s_{1,3}", "s_{2,2}", "s_{2,3}", "s_{3,3}", "h"
            ]
        );
        assert_eq!(t.weight(t.id(Var::Sigma(2, 3)).unwrap()), 4);
        assert_eq!(t.weight(t.id(Var::H).unwrap()), 1);
    }

    #[test]
    fn derivative_lowers_exponents() {
        let t = aux_table(2, &[1, 2]);
        let (x, y) = (v(&t, Var::Aux(0)), v(&t, Var::Aux(1)));
        let f = &(&(&c(&t, 3) * &x.pow(2)) * &y) - &y.pow(3);
        let id0 = t.id(Var::Aux(0)).unwrap();
        let id1 = t.id(Var::Aux(1)).unwrap();
        assert_eq!(f.derivative(id0), &(&c(&t, 6) * &x) * &y);
        assert_eq!(f.derivative(id1), &(&c(&t, 3) * &x.pow(2)) - &(&c(&t, 3) * &y.pow(2)));
        assert!(c(&t, 5).derivative(id0).is_zero());
    }

    #[test]
    fn add_examples() {
        let t = aux_table(2, &[1, 1]);
        let (x, y) = (v(&t, Var::Aux(0)), v(&t, Var::Aux(1)));
        assert!((&x + &-&x).is_zero());
        assert_eq!(&(&x + &y) + &y, &x + &(&y * &c(&t, 2)));
        let t = iv_table();
        let f = &(&v(&t, Var::Lambda(1, 2)) * &v(&t, Var::Sigma(1, 1))) - &v(&t, Var::Sigma(1, 2));
        assert_eq!(&f + &v(&t, Var::Sigma(1, 2)), &v(&t, Var::Lambda(1, 2)) * &v(&t, Var::Sigma(1, 1)));
    }

    #[test]
    fn table_mismatch_is_an_error() {
        let a = v(&aux_table(1, &[1]), Var::Aux(0));
        let b = v(&aux_table(1, &[2]), Var::Aux(0));
        assert_eq!(a.checked_add(&b), Err(PolyError::TableMismatch));
        assert_eq!(a.checked_mul(&b), Err(PolyError::TableMismatch));
    }

    #[test]
    fn mul_examples() {
        let t = aux_table(1, &[1]);
        let x = v(&t, Var::Aux(0));
        assert!((&x * &Polynomial::zero(&t)).is_zero());
        let one = c(&t, 1);
        assert_eq!(&(&x + &one) * &(&x - &one), &(&x * &x) - &one);
        let t = iv_table();
        let m = &(&v(&t, Var::Omega(1, 1)) * &v(&t, Var::Lambda(1, 2)))
            * &(&v(&t, Var::Lambda(1, 2)) * &v(&t, Var::Lambda(2, 3)));
        assert_eq!(m.to_string(), "l_{1,2}^2*l_{2,3}*w_{1,1}");
        assert_eq!(m.weighted_degree(), Some(4));
    }

    fn tau23_iv(t: &Arc<VariableTable>) -> Polynomial {
        let (l12, l23) = (v(t, Var::Lambda(1, 2)), v(t, Var::Lambda(2, 3)));
        &(&v(t, Var::Omega(2, 3)) + &(&v(t, Var::Omega(2, 2)) * &l23))
            + &(&(&v(t, Var::Omega(1, 1)) * &(&l12 * &l12)) * &l23)
    }

    #[test]
    fn weighted_degree_examples() {
        let t = iv_table();
        assert_eq!(v(&t, Var::Sigma(2, 3)).weighted_degree(), Some(4));
        assert_eq!(Polynomial::zero(&t).weighted_degree(), None);
    }

    #[test]
    fn homogenize_iv_tau() {
        let t = iv_table();
        let h = v(&t, Var::H);
        let tau = tau23_iv(&t);
        let expected = &(&(&v(&t, Var::Omega(2, 3)) * &h.pow(3))
            + &(&(&v(&t, Var::Omega(2, 2)) * &v(&t, Var::Lambda(2, 3))) * &h.pow(2)))
            + &(&(&v(&t, Var::Omega(1, 1)) * &v(&t, Var::Lambda(1, 2)).pow(2)) * &v(&t, Var::Lambda(2, 3)));
        let hom = tau.homogenize().unwrap();
        assert_eq!(hom, expected);
        assert!(hom.is_w_homogeneous());
        assert_eq!(hom.dehomogenize(), tau);
        let gen = &v(&t, Var::Sigma(2, 3)) - &hom;
        assert!(gen.is_w_homogeneous());
        assert!(!(&v(&t, Var::Sigma(2, 3)) - &v(&t, Var::Omega(2, 3))).is_w_homogeneous());
    }

    #[test]
    fn homogenize_edge_cases() {
        let t = iv_table();
        assert_eq!(Polynomial::zero(&t).homogenize(), Err(PolyError::ZeroPolynomial));
        let m = v(&t, Var::Sigma(1, 3));
        assert_eq!(m.homogenize().unwrap(), m);
        let already = &v(&t, Var::Sigma(1, 2)) - &(&v(&t, Var::Omega(1, 1)) * &v(&t, Var::Lambda(1, 2)));
        assert_eq!(already.homogenize().unwrap(), already);
        let h = v(&t, Var::H);
        assert_eq!(h.pow(3).dehomogenize(), c(&t, 1));
        assert_eq!(h.homogenize(), Err(PolyError::ContainsH));
    }

    #[test]
    fn order_basic_axioms() {
        let t = iv_table();
        let q = Var::Lambda(2, 3);
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), q).unwrap();
        let one = Monomial::one();
        let m = Monomial::var(t.id(Var::Sigma(1, 1)).unwrap());
        assert_eq!(ord.compare(&one, &m), Ordering::Less);
        let mh = m.mul(&Monomial::var(t.id(Var::H).unwrap()));
        assert_eq!(ord.compare(&m, &mh), Ordering::Less);
        assert_eq!(*ord.block1().last().unwrap(), t.id(q).unwrap());
    }

    #[test]
    fn eliminated_parameter_dominates_at_equal_degree() {
        // four-node graph: w(σ_23) = 1, w(σ_24) = 3, w(σ_14) = 2
        let g = examples::four_node();
        let t = VariableTable::for_graph(&g, &trek_weights(&g));
        let id = |x| t.id(x).unwrap();
        let theta_rem: Vec<Var> = t.theta().into_iter().filter(|v| !matches!(v, Var::Lambda(1, _))).collect();
        let ord = MonomialOrder::for_parameter(&t, &theta_rem, Var::Lambda(3, 4)).unwrap();
        let lhs = Monomial::from_pairs([(id(Var::Lambda(3, 4)), 1), (id(Var::Sigma(2, 3)), 1), (id(Var::H), 1)]);
        let rhs = Monomial::var(id(Var::Sigma(2, 4)));
        assert_eq!(ord.compare(&lhs, &rhs), Ordering::Greater);
        let (l12, l14, l34) = (v(&t, Var::Lambda(1, 2)), v(&t, Var::Lambda(1, 4)), v(&t, Var::Lambda(3, 4)));
        let _ = l14;
        let g3 = &(&(&l34 * &v(&t, Var::Sigma(2, 3))) + &(&l12 * &v(&t, Var::Sigma(1, 4))))
            - &v(&t, Var::Sigma(2, 4));
        let hom = g3.homogenize().unwrap();
        assert_eq!(hom.weighted_degree(), Some(3));
        assert_eq!(hom.leading_term(&ord).unwrap(), (lhs, Rational::one()));
    }

    #[test]
    fn generator_leading_term_under_sigma_elimination() {
        let t = iv_table();
        let sigmas: Vec<Var> = t.vars().iter().copied().filter(Var::is_sigma).collect();
        let ord = MonomialOrder::elimination(&t, &sigmas, true).unwrap();
        let gen = &v(&t, Var::Sigma(1, 2)) - &(&v(&t, Var::Omega(1, 1)) * &v(&t, Var::Lambda(1, 2)));
        let (lm, lc) = gen.leading_term(&ord).unwrap();
        assert_eq!(lm, Monomial::var(t.id(Var::Sigma(1, 2)).unwrap()));
        assert!(lc.is_one());
        let single = v(&t, Var::Omega(2, 3)).scale(&Rational::new(-3, 2));
        assert_eq!(single.leading_term(&ord).unwrap().1, Rational::new(-3, 2));
        assert_eq!(Polynomial::zero(&t).leading_term(&ord), Err(PolyError::ZeroPolynomial));
    }

    #[test]
    fn rendering_follows_order() {
        let t = iv_table();
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), Var::Lambda(2, 3)).unwrap();
        let f = &(&v(&t, Var::Lambda(2, 3)) * &v(&t, Var::Sigma(1, 2))) - &v(&t, Var::Sigma(1, 3));
        assert_eq!(f.render(&ord), "l_{2,3}*s_{1,2} - s_{1,3}");
        let relabelled = t.with_labels(vec![4, 7, 9]);
        let g = f.transfer(&relabelled).unwrap();
        assert_eq!(g.to_string(), "l_{7,9}*s_{4,7} - s_{4,9}");
    }

    #[test]
    fn substitute_and_evaluate() {
        let t = iv_table();
        let s12 = v(&t, Var::Sigma(1, 2));
        let tau = &v(&t, Var::Omega(1, 1)) * &v(&t, Var::Lambda(1, 2));
        let f = &s12.pow(2) - &tau.pow(2);
        let sub = f.substitute(&|x| (x == Var::Sigma(1, 2)).then(|| tau.clone()));
        assert!(sub.is_zero());
        let val = f
            .evaluate(&|x| match x {
                Var::Sigma(1, 2) => Some(Rational::from_integer(3)),
                Var::Omega(1, 1) => Some(Rational::from_integer(2)),
                Var::Lambda(1, 2) => Some(Rational::new(1, 2)),
                _ => None,
            })
            .unwrap();
        assert_eq!(val, Rational::from_integer(8));
        assert!(matches!(f.evaluate(&|_| None), Err(PolyError::Unassigned(_))));
    }

    fn arb_poly(t: Arc<VariableTable>, nvars: usize) -> impl Strategy<Value = Polynomial> {
        prop::collection::vec((prop::collection::vec(0u32..3, nvars), -4i64..=4), 0..5).prop_map(
            move |terms| {
                Polynomial::from_terms(
                    &t,
                    terms.into_iter().map(|(e, c)| {
                        (Monomial::from_pairs(e.into_iter().enumerate()), Rational::from_integer(c))
                    }),
                )
            },
        )
    }

    fn arb_mono(nvars: usize) -> impl Strategy<Value = Monomial> {
        prop::collection::vec(0u32..4, nvars).prop_map(|e| Monomial::from_pairs(e.into_iter().enumerate()))
    }

    fn no_zero_coeffs(p: &Polynomial) -> bool {
        p.terms().all(|(_, c)| !c.is_zero())
    }

    proptest! {
        #[test]
        fn ring_axioms(a in arb_poly(aux_table(3, &[1, 2, 3]), 3),
                       b in arb_poly(aux_table(3, &[1, 2, 3]), 3),
                       c in arb_poly(aux_table(3, &[1, 2, 3]), 3)) {
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert!(no_zero_coeffs(&(&a + &b)) && no_zero_coeffs(&(&a * &b)));
            if !a.is_zero() && !b.is_zero() {
                prop_assert_eq!((&a * &b).weighted_degree().unwrap(),
                                a.weighted_degree().unwrap() + b.weighted_degree().unwrap());
            }
        }

        #[test]
        fn homogenize_round_trip(a in arb_poly(
            VariableTable::new(vec![(Var::Aux(0), 1), (Var::Aux(1), 2), (Var::Aux(2), 3), (Var::H, 1)]).unwrap(), 3)) {
            prop_assume!(!a.is_zero());
            let hom = a.homogenize().unwrap();
            prop_assert!(hom.is_w_homogeneous());
            prop_assert_eq!(hom.weighted_degree(), a.weighted_degree());
            prop_assert_eq!(hom.dehomogenize(), a);
        }

        #[test]
        fn order_is_a_monomial_order(a in arb_mono(5), b in arb_mono(5), c in arb_mono(5),
                                     graded in any::<bool>(), split in 0usize..=5) {
            let t = aux_table(5, &[1, 3, 2, 1, 4]);
            let block: Vec<Var> = (0..split).rev().map(Var::Aux).collect();
            let ord = MonomialOrder::elimination(&t, &block, graded).unwrap();
            prop_assert_eq!(ord.compare(&a, &b), ord.compare(&b, &a).reverse());
            prop_assert_eq!(ord.compare(&a, &b) == Ordering::Equal, a == b);
            if ord.compare(&a, &b) == Ordering::Less && ord.compare(&b, &c) == Ordering::Less {
                prop_assert_eq!(ord.compare(&a, &c), Ordering::Less);
            }
            prop_assert_eq!(ord.compare(&a.mul(&c), &b.mul(&c)), ord.compare(&a, &b));
            prop_assert_ne!(ord.compare(&Monomial::one(), &a), Ordering::Greater);
            let w = t.weights();
            if graded && a.weighted_degree(w) != b.weighted_degree(w) {
                prop_assert_eq!(ord.compare(&a, &b), a.weighted_degree(w).cmp(&b.weighted_degree(w)));
            }
        }
    }
}

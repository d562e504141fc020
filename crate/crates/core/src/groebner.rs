//! Buchberger's algorithm: normal forms, the degree-truncated reduced basis of
//! a weighted-homogeneous ideal (extendable bound by bound), and an untruncated
//! sugar-strategy variant for arbitrary inputs.
//!
//! Polynomials are converted to a dense internal form whose variable layout
//! follows the monomial order, so comparisons are a single pass over the
//! exponent vector.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::poly::{Monomial, MonomialOrder, Polynomial, VariableTable};
use crate::rational::Rational;

/// Work counters, reported on success and carried by effort errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GbStats {
    pub pairs_processed: u64,
    pub zero_reductions: u64,
    pub reduction_steps: u64,
    pub elements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhausted {
    PairCap,
    Deadline,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GbError {
    #[error("generator {index} is not weighted-homogeneous")]
    NotHomogeneous { index: usize },
    #[error("truncated computation requires a weighted-graded order")]
    NotGradedOrder,
    #[error("polynomials live over a different variable table than the order")]
    TableMismatch,
    #[error("computation stopped ({reason:?}) after {} pairs", stats.pairs_processed)]
    EffortExceeded { reason: Exhausted, stats: GbStats },
}

/// Resource limits for a computation.
#[derive(Debug, Clone, Default)]
pub struct Limits {
    pub deadline: Option<Instant>,
    /// Cap on the number of processed pairs and generators.
    pub max_pairs: Option<u64>,
    pub cancel: Option<Arc<AtomicBool>>,
    /// Print one line per processed pair to stderr.
    pub trace: bool,
}

impl Limits {
    pub fn unlimited() -> Self {
        Limits::default()
    }
}

/// A Gröbner basis (or truncation of one), sorted by increasing leading
/// monomial.
#[derive(Debug, Clone)]
pub struct GroebnerBasis {
    pub elements: Vec<Polynomial>,
    pub order: MonomialOrder,
    /// `None` when untruncated.
    pub degree_bound: Option<u32>,
    pub reduced: bool,
    pub stats: GbStats,
}

impl GroebnerBasis {
    /// Checks that every element is monic and that no monomial of an element
    /// is divisible by the leading monomial of another element.
    pub fn is_reduced(&self) -> bool {
        is_reduced(&self.elements, &self.order)
    }

    pub fn leading_monomials(&self) -> Vec<Monomial> {
        self.elements.iter().map(|g| g.leading_term(&self.order).expect("nonzero").0).collect()
    }
}

/// The reduced-basis condition on an arbitrary list of polynomials.
pub fn is_reduced(elements: &[Polynomial], order: &MonomialOrder) -> bool {
    let mut lms = Vec::with_capacity(elements.len());
    for g in elements {
        match g.leading_term(order) {
            Ok((m, c)) if c.is_one() => lms.push(m),
            _ => return false,
        }
    }
    elements.iter().enumerate().all(|(i, g)| {
        g.terms().all(|(m, _)| lms.iter().enumerate().all(|(j, l)| j == i || !l.divides(m)))
    })
}

// ---------------------------------------------------------------------------
// internal representation

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Mono {
    e: Box<[u16]>,
    wdeg: u32,
    w2: u32,
    mask: u64,
}

type Term = (Mono, Rational);

/// Terms in strictly decreasing order.
type IPoly = Vec<Term>;

#[derive(Debug, Clone)]
struct Ctx {
    n: usize,
    nb1: usize,
    graded: bool,
    w: Vec<u32>,
    to_table: Vec<usize>,
    from_table: Vec<usize>,
    table: Arc<VariableTable>,
}

impl Ctx {
    fn new(order: &MonomialOrder) -> Self {
        let table = order.table().clone();
        let mut to_table: Vec<usize> = order.block1().to_vec();
        to_table.extend(order.block2().iter().rev());
        let mut from_table = vec![0; table.len()];
        for (pos, &id) in to_table.iter().enumerate() {
            from_table[id] = pos;
        }
        let w = to_table.iter().map(|&id| table.weight(id)).collect();
        Ctx {
            n: to_table.len(),
            nb1: order.block1().len(),
            graded: order.is_graded(),
            w,
            to_table,
            from_table,
            table,
        }
    }

    fn mono(&self, e: Box<[u16]>) -> Mono {
        let mut wdeg = 0;
        let mut w2 = 0;
        let mut mask = 0u64;
        for (i, &x) in e.iter().enumerate() {
            if x > 0 {
                let d = self.w[i] * x as u32;
                wdeg += d;
                if i >= self.nb1 {
                    w2 += d;
                }
                mask |= 1 << (i % 64);
            }
        }
        Mono { e, wdeg, w2, mask }
    }

    fn cmp(&self, a: &Mono, b: &Mono) -> Ordering {
        if self.graded {
            match a.wdeg.cmp(&b.wdeg) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        for i in 0..self.nb1 {
            match a.e[i].cmp(&b.e[i]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        match a.w2.cmp(&b.w2) {
            Ordering::Equal => {}
            o => return o,
        }
        for i in self.nb1..self.n {
            match b.e[i].cmp(&a.e[i]) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn mul(&self, a: &Mono, b: &Mono) -> Mono {
        let e: Box<[u16]> = a.e.iter().zip(b.e.iter()).map(|(x, y)| x + y).collect();
        Mono { e, wdeg: a.wdeg + b.wdeg, w2: a.w2 + b.w2, mask: a.mask | b.mask }
    }

    fn divides(a: &Mono, b: &Mono) -> bool {
        a.mask & !b.mask == 0 && a.e.iter().zip(b.e.iter()).all(|(x, y)| x <= y)
    }

    /// `b / a`, assuming `a | b`.
    fn quot(&self, a: &Mono, b: &Mono) -> Mono {
        self.mono(a.e.iter().zip(b.e.iter()).map(|(x, y)| y - x).collect())
    }

    fn lcm(&self, a: &Mono, b: &Mono) -> Mono {
        self.mono(a.e.iter().zip(b.e.iter()).map(|(x, y)| *x.max(y)).collect())
    }

    fn coprime(a: &Mono, b: &Mono) -> bool {
        a.mask & b.mask == 0 || a.e.iter().zip(b.e.iter()).all(|(x, y)| *x == 0 || *y == 0)
    }

    fn import(&self, p: &Polynomial) -> Result<IPoly, GbError> {
        if !Arc::ptr_eq(p.table(), &self.table) && p.table().vars() != self.table.vars() {
            return Err(GbError::TableMismatch);
        }
        let mut out: IPoly = p
            .terms()
            .map(|(m, c)| {
                let mut e = vec![0u16; self.n];
                for (id, x) in m.iter() {
                    e[self.from_table[id]] = u16::try_from(x).expect("exponent fits in u16");
                }
                (self.mono(e.into_boxed_slice()), c.clone())
            })
            .collect();
        out.sort_by(|a, b| self.cmp(&b.0, &a.0));
        Ok(out)
    }

    fn export(&self, p: &IPoly) -> Polynomial {
        Polynomial::from_terms(
            &self.table,
            p.iter().map(|(m, c)| {
                let pairs = m.e.iter().enumerate().map(|(i, &x)| (self.to_table[i], x as u32));
                (Monomial::from_pairs(pairs), c.clone())
            }),
        )
    }

    /// `a + c·t·b`, with `a` and `b` decreasing.
    fn add_scaled(&self, a: Vec<Term>, c: &Rational, t: &Mono, b: &[Term]) -> Vec<Term> {
        let mut out = Vec::with_capacity(a.len() + b.len());
        let mut ai = a.into_iter().peekable();
        let mut bi = b.iter().map(|(m, x)| (self.mul(m, t), x * c)).peekable();
        loop {
            let ord = match (ai.peek(), bi.peek()) {
                (Some(x), Some(y)) => self.cmp(&x.0, &y.0),
                (Some(_), None) => Ordering::Greater,
                (None, Some(_)) => Ordering::Less,
                (None, None) => break,
            };
            match ord {
                Ordering::Greater => out.push(ai.next().unwrap()),
                Ordering::Less => out.push(bi.next().unwrap()),
                Ordering::Equal => {
                    let (m, x) = ai.next().unwrap();
                    let (_, y) = bi.next().unwrap();
                    let s = &x + &y;
                    if !s.is_zero() {
                        out.push((m, s));
                    }
                }
            }
        }
        out
    }

    fn make_monic(p: &mut IPoly) {
        if let Some((_, lc)) = p.first() {
            if !lc.is_one() {
                let inv = lc.recip();
                for (_, c) in p.iter_mut() {
                    *c = &*c * &inv;
                }
            }
        }
    }

    /// Full reduction: repeatedly eliminates the largest reducible monomial
    /// with the first divisor found in `basis` order.
    fn reduce<'a>(
        &self,
        f: IPoly,
        basis: impl Fn(&Mono) -> Option<&'a IPoly>,
        meter: &mut Meter,
    ) -> Result<IPoly, GbError> {
        let mut rem = f;
        let mut out: IPoly = Vec::new();
        let mut start = 0;
        while start < rem.len() {
            match basis(&rem[start].0) {
                None => {
                    out.push(std::mem::replace(&mut rem[start], (self.mono(Box::default()), Rational::zero())));
                    start += 1;
                }
                Some(g) => {
                    meter.step()?;
                    let (m, c) = &rem[start];
                    let t = self.quot(&g[0].0, m);
                    let coef = -(c / &g[0].1);
                    let rest = rem.split_off(start + 1);
                    rem = self.add_scaled(rest, &coef, &t, &g[1..]);
                    start = 0;
                }
            }
        }
        Ok(out)
    }

    fn spoly(&self, f: &IPoly, g: &IPoly, lcm: &Mono) -> IPoly {
        let tf = self.quot(&f[0].0, lcm);
        let tg = self.quot(&g[0].0, lcm);
        let a: Vec<Term> = f[1..].iter().map(|(m, c)| (self.mul(m, &tf), c / &f[0].1)).collect();
        self.add_scaled(a, &-g[0].1.recip(), &tg, &g[1..])
    }
}

struct Meter<'a> {
    limits: &'a Limits,
    stats: GbStats,
    since_check: u32,
}

impl<'a> Meter<'a> {
    fn new(limits: &'a Limits) -> Self {
        Meter { limits, stats: GbStats::default(), since_check: 0 }
    }

    fn step(&mut self) -> Result<(), GbError> {
        self.stats.reduction_steps += 1;
        self.since_check += 1;
        if self.since_check >= 32 {
            self.since_check = 0;
            self.check_clock()?;
        }
        Ok(())
    }

    fn pair(&mut self) -> Result<(), GbError> {
        if let Some(max) = self.limits.max_pairs {
            if self.stats.pairs_processed >= max {
                return Err(self.exhausted(Exhausted::PairCap));
            }
        }
        self.stats.pairs_processed += 1;
        Ok(())
    }

    fn check_clock(&self) -> Result<(), GbError> {
        if let Some(d) = self.limits.deadline {
            if Instant::now() >= d {
                return Err(self.exhausted(Exhausted::Deadline));
            }
        }
        if let Some(flag) = &self.limits.cancel {
            if flag.load(AtomicOrdering::Relaxed) {
                return Err(self.exhausted(Exhausted::Cancelled));
            }
        }
        Ok(())
    }

    fn exhausted(&self, reason: Exhausted) -> GbError {
        GbError::EffortExceeded { reason, stats: self.stats }
    }
}

/// Pending pairs keyed by element indices.
type PairSet = BTreeMap<(usize, usize), Mono>;

/// Gebauer–Möller update. `lms` are the leading monomials of all elements
/// ever added, `active` the current (minimal) basis indices and `pairs` the
/// pending pairs. Returns the new pairs `(g, h)` to enqueue.
fn gm_update(
    ctx: &Ctx,
    lms: &[Mono],
    active: &mut Vec<usize>,
    pairs: &mut PairSet,
    h: usize,
) -> Vec<(usize, usize, Mono)> {
    let lh = &lms[h];
    let cand: Vec<(usize, Mono, bool)> = active
        .iter()
        .map(|&g| (g, ctx.lcm(&lms[g], lh), Ctx::coprime(&lms[g], lh)))
        .collect();
    let mut keep = vec![false; cand.len()];
    for i in 0..cand.len() {
        let (_, l1, cop) = &cand[i];
        // later candidates still in C, earlier ones already decided into D
        let dominated = (i + 1..cand.len()).any(|j| Ctx::divides(&cand[j].1, l1))
            || (0..i).any(|j| keep[j] && Ctx::divides(&cand[j].1, l1));
        keep[i] = *cop || !dominated;
    }
    pairs.retain(|&(a, b), l| {
        !Ctx::divides(lh, l) || ctx.lcm(&lms[a], lh) == *l || ctx.lcm(&lms[b], lh) == *l
    });
    let new: Vec<(usize, usize, Mono)> = cand
        .into_iter()
        .zip(keep)
        .filter(|((_, _, cop), k)| *k && !cop)
        .map(|((g, l, _), _)| (g, h, l))
        .collect();
    active.retain(|&g| !Ctx::divides(lh, &lms[g]));
    active.push(h);
    new
}

/// Reduces `f` modulo `basis` under `order`. Basis elements need not be
/// monic; zero elements are ignored.
pub fn normal_form(f: &Polynomial, basis: &[Polynomial], order: &MonomialOrder) -> Polynomial {
    let ctx = Ctx::new(order);
    let basis: Vec<IPoly> = basis
        .iter()
        .map(|g| ctx.import(g).expect("basis over the order's table"))
        .filter(|g| !g.is_empty())
        .collect();
    let f = ctx.import(f).expect("polynomial over the order's table");
    let limits = Limits::unlimited();
    let mut meter = Meter::new(&limits);
    let r = ctx
        .reduce(f, |m| basis.iter().find(|g| Ctx::divides(&g[0].0, m)), &mut meter)
        .expect("unlimited");
    ctx.export(&r)
}

// ---------------------------------------------------------------------------
// truncated, homogeneous

#[derive(Debug, Clone)]
enum Job {
    Generator(IPoly),
    Pair(usize, usize, Mono),
}

/// The state of a degree-truncated Buchberger computation. After
/// `extend_to(k)` the basis holds exactly the elements of the reduced Gröbner
/// basis of weighted degree at most `k`; the bound can be raised later
/// without repeating work.
#[derive(Debug, Clone)]
pub struct TruncatedGb {
    ctx: Ctx,
    order: MonomialOrder,
    basis: Vec<IPoly>,
    lms: Vec<Mono>,
    active: Vec<usize>,
    generators: BTreeMap<u32, Vec<IPoly>>,
    pairs: PairSet,
    bound: Option<u32>,
    stats: GbStats,
}

impl TruncatedGb {
    pub fn new(generators: &[Polynomial], order: &MonomialOrder) -> Result<Self, GbError> {
        if !order.is_graded() {
            return Err(GbError::NotGradedOrder);
        }
        let ctx = Ctx::new(order);
        let mut gens: BTreeMap<u32, Vec<IPoly>> = BTreeMap::new();
        for (index, g) in generators.iter().enumerate() {
            if !g.is_w_homogeneous() {
                return Err(GbError::NotHomogeneous { index });
            }
            let ig = ctx.import(g)?;
            if let Some((m, _)) = ig.first() {
                gens.entry(m.wdeg).or_default().push(ig);
            }
        }
        Ok(TruncatedGb {
            ctx,
            order: order.clone(),
            basis: Vec::new(),
            lms: Vec::new(),
            active: Vec::new(),
            generators: gens,
            pairs: PairSet::new(),
            bound: None,
            stats: GbStats::default(),
        })
    }

    /// The largest bound processed so far.
    pub fn bound(&self) -> Option<u32> {
        self.bound
    }

    pub fn stats(&self) -> GbStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// True when no pending work remains at any degree, so the basis is
    /// already complete.
    pub fn is_complete(&self) -> bool {
        self.pairs.is_empty() && self.generators.is_empty()
    }

    /// Element `i` in discovery order. Elements never change once their
    /// degree has been completed, so indices from earlier bounds stay valid.
    pub fn element(&self, i: usize) -> Polynomial {
        self.ctx.export(&self.basis[i])
    }

    /// Weighted degree of element `i`.
    pub fn element_degree(&self, i: usize) -> u32 {
        self.lms[i].wdeg
    }

    /// Processes all pending work up to weighted degree `bound`.
    pub fn extend_to(&mut self, bound: u32, limits: &Limits) -> Result<(), GbError> {
        let mut meter = Meter::new(limits);
        meter.stats = self.stats;
        let result = self.run(bound, &mut meter);
        self.stats = meter.stats;
        self.stats.elements = self.basis.len();
        result?;
        self.bound = Some(self.bound.map_or(bound, |b| b.max(bound)));
        Ok(())
    }

    fn next_degree(&self) -> Option<u32> {
        let g = self.generators.keys().next().copied();
        let p = self.pairs.values().map(|l| l.wdeg).min();
        match (g, p) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn run(&mut self, bound: u32, meter: &mut Meter) -> Result<(), GbError> {
        while let Some(deg) = self.next_degree().filter(|&d| d <= bound) {
            meter.check_clock()?;
            let mut jobs: Vec<Job> = self
                .generators
                .remove(&deg)
                .unwrap_or_default()
                .into_iter()
                .map(Job::Generator)
                .collect();
            let mut now: Vec<(usize, usize, Mono)> = self
                .pairs
                .iter()
                .filter(|(_, l)| l.wdeg == deg)
                .map(|(&(a, b), l)| (a, b, l.clone()))
                .collect();
            now.sort_by(|a, b| self.ctx.cmp(&a.2, &b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
            jobs.extend(now.into_iter().map(|(a, b, l)| Job::Pair(a, b, l)));
            // pairs queued for this degree may be discarded by the chain
            // criterion while the degree is processed
            let mut queue: std::collections::VecDeque<Job> = jobs.into();
            while let Some(job) = queue.pop_front() {
                if let Job::Pair(a, b, _) = &job {
                    if !self.pairs.contains_key(&(*a, *b)) {
                        continue;
                    }
                }
                self.process(job, deg, meter, &mut queue)?;
            }
        }
        Ok(())
    }

    fn process(
        &mut self,
        job: Job,
        deg: u32,
        meter: &mut Meter,
        queue: &mut std::collections::VecDeque<Job>,
    ) -> Result<(), GbError> {
        let (label, f) = match job {
            Job::Generator(g) => ("gen".to_string(), g),
            Job::Pair(a, b, l) => {
                self.pairs.remove(&(a, b));
                (format!("pair({a},{b})"), self.ctx.spoly(&self.basis[a], &self.basis[b], &l))
            }
        };
        meter.pair()?;
        let (ctx, basis, active) = (&self.ctx, &self.basis, &self.active);
        let r = ctx.reduce(
            f,
            |m| active.iter().map(|&i| &basis[i]).find(|g| Ctx::divides(&g[0].0, m)),
            meter,
        )?;
        if r.is_empty() {
            meter.stats.zero_reductions += 1;
            if meter.limits.trace {
                eprintln!("[gb] deg {deg} {label} -> 0");
            }
            return Ok(());
        }
        let mut r = r;
        Ctx::make_monic(&mut r);
        let h = self.basis.len();
        if meter.limits.trace {
            eprintln!("[gb] deg {deg} {label} -> new #{h} ({} terms)", r.len());
        }
        // tail-reduce same-degree elements by the new one
        for &i in &self.active {
            if self.lms[i].wdeg == deg && self.basis[i][1..].iter().any(|(m, _)| *m == r[0].0) {
                let g = std::mem::take(&mut self.basis[i]);
                let single = [&r];
                let red = self.ctx.reduce(g, |m| single.iter().copied().find(|g| g[0].0 == *m), meter)?;
                self.basis[i] = red;
            }
        }
        self.lms.push(r[0].0.clone());
        self.basis.push(r);
        let new = gm_update(&self.ctx, &self.lms, &mut self.active, &mut self.pairs, h);
        for (a, b, l) in new {
            if l.wdeg == deg {
                queue.push_back(Job::Pair(a, b, l.clone()));
            }
            self.pairs.insert((a, b), l);
        }
        Ok(())
    }

    /// The current truncation as a basis sorted by leading monomial.
    pub fn basis(&self) -> GroebnerBasis {
        let mut idx: Vec<usize> = self.active.clone();
        idx.sort_by(|&a, &b| self.ctx.cmp(&self.lms[a], &self.lms[b]));
        GroebnerBasis {
            elements: idx.iter().map(|&i| self.ctx.export(&self.basis[i])).collect(),
            order: self.order.clone(),
            degree_bound: self.bound,
            reduced: true,
            stats: self.stats,
        }
    }
}

/// The elements of the reduced Gröbner basis of weighted degree at most
/// `bound`, for weighted-homogeneous generators and a weighted-graded order.
pub fn buchberger_truncated(
    generators: &[Polynomial],
    order: &MonomialOrder,
    bound: u32,
    limits: &Limits,
) -> Result<GroebnerBasis, GbError> {
    let mut st = TruncatedGb::new(generators, order)?;
    st.extend_to(bound, limits)?;
    Ok(st.basis())
}

// ---------------------------------------------------------------------------
// full, sugar strategy

/// The reduced Gröbner basis of an arbitrary ideal.
pub fn buchberger_full(
    generators: &[Polynomial],
    order: &MonomialOrder,
    limits: &Limits,
) -> Result<GroebnerBasis, GbError> {
    let ctx = Ctx::new(order);
    let mut meter = Meter::new(limits);
    let mut basis: Vec<IPoly> = Vec::new();
    let mut sugar: Vec<u32> = Vec::new();
    let mut lms: Vec<Mono> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut pairs = PairSet::new();
    let mut gens: Vec<(u32, IPoly)> = Vec::new();
    for g in generators {
        let ig = ctx.import(g)?;
        if !ig.is_empty() {
            let s = ig.iter().map(|(m, _)| m.wdeg).max().unwrap();
            gens.push((s, ig));
        }
    }
    gens.sort_by_key(|(s, _)| *s);
    let mut gens: std::collections::VecDeque<_> = gens.into();
    let pair_sugar = |sugar: &[u32], lms: &[Mono], a: usize, b: usize, l: &Mono| {
        (sugar[a] + l.wdeg - lms[a].wdeg).max(sugar[b] + l.wdeg - lms[b].wdeg)
    };
    loop {
        meter.check_clock()?;
        let best_pair = pairs
            .iter()
            .map(|(&(a, b), l)| (pair_sugar(&sugar, &lms, a, b, l), (a, b), l))
            .min_by(|x, y| x.0.cmp(&y.0).then_with(|| ctx.cmp(x.2, y.2)))
            .map(|(s, key, _)| (s, key));
        let take_gen = match (gens.front(), best_pair) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some((sg, _)), Some((sp, _))) => *sg <= sp,
        };
        let (s, f, label) = if take_gen {
            let (s, g) = gens.pop_front().unwrap();
            (s, g, "gen".to_string())
        } else {
            let (s, (a, b)) = best_pair.unwrap();
            let l = pairs.remove(&(a, b)).unwrap();
            (s, ctx.spoly(&basis[a], &basis[b], &l), format!("pair({a},{b})"))
        };
        meter.pair()?;
        let r = ctx.reduce(
            f,
            |m| active.iter().map(|&i| &basis[i]).find(|g| Ctx::divides(&g[0].0, m)),
            &mut meter,
        )?;
        if r.is_empty() {
            meter.stats.zero_reductions += 1;
            if limits.trace {
                eprintln!("[gb] sugar {s} {label} -> 0");
            }
            continue;
        }
        let mut r = r;
        Ctx::make_monic(&mut r);
        let h = basis.len();
        if limits.trace {
            eprintln!("[gb] sugar {s} {label} -> new #{h} ({} terms)", r.len());
        }
        let s = s.max(r[0].0.wdeg);
        lms.push(r[0].0.clone());
        basis.push(r);
        sugar.push(s);
        let new = gm_update(&ctx, &lms, &mut active, &mut pairs, h);
        pairs.extend(new.into_iter().map(|(a, b, l)| ((a, b), l)));
    }
    // inter-reduce the minimal basis
    active.sort_by(|&a, &b| ctx.cmp(&lms[a], &lms[b]));
    let mut out = Vec::with_capacity(active.len());
    for (k, &i) in active.iter().enumerate() {
        let mut g = basis[i].clone();
        let head = g.remove(0);
        let others: Vec<&IPoly> =
            active.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &j)| &basis[j]).collect();
        let tail = ctx.reduce(g, |m| others.iter().copied().find(|o| Ctx::divides(&o[0].0, m)), &mut meter)?;
        let mut full = vec![head];
        full.extend(tail);
        out.push(ctx.export(&full));
    }
    meter.stats.elements = out.len();
    Ok(GroebnerBasis {
        elements: out,
        order: order.clone(),
        degree_bound: None,
        reduced: true,
        stats: meter.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{examples, trek_weights};
    use crate::poly::Var;

    fn aux(n: usize) -> Arc<VariableTable> {
        VariableTable::new((0..n).map(|i| (Var::Aux(i), 1)).collect()).unwrap()
    }

    fn x(t: &Arc<VariableTable>, i: usize) -> Polynomial {
        Polynomial::var(t, Var::Aux(i)).unwrap()
    }

    fn k(t: &Arc<VariableTable>, c: i64) -> Polynomial {
        Polynomial::constant(t, Rational::from_integer(c))
    }

    #[test]
    fn full_basis_of_univariate_ideal() {
        let t = aux(1);
        let x0 = x(&t, 0);
        let f1 = &x0.pow(2) - &k(&t, 1);
        let f2 = &x0.pow(3) - &x0;
        let ord = MonomialOrder::elimination(&t, &[Var::Aux(0)], false).unwrap();
        let gb = buchberger_full(&[f1.clone(), f2], &ord, &Limits::unlimited()).unwrap();
        assert_eq!(gb.elements, vec![f1]);
        let empty = buchberger_full(&[], &ord, &Limits::unlimited()).unwrap();
        assert!(empty.elements.is_empty());
    }

    #[test]
    fn full_basis_classic_example() {
        // x^2 - y, x*y - 1 under lex x > y gives {y^3 - 1, x - y^2}
        let t = aux(2);
        let (x0, x1) = (x(&t, 0), x(&t, 1));
        let ord = MonomialOrder::elimination(&t, &[Var::Aux(0), Var::Aux(1)], false).unwrap();
        let gens = [&x0.pow(2) - &x1, &(&x0 * &x1) - &k(&t, 1)];
        let gb = buchberger_full(&gens, &ord, &Limits::unlimited()).unwrap();
        assert_eq!(gb.elements, vec![&x1.pow(3) - &k(&t, 1), &x0 - &x1.pow(2)]);
        assert!(gb.is_reduced());
    }

    fn iv_generators() -> (Arc<VariableTable>, Vec<Polynomial>) {
        let g = examples::instrumental_variable();
        let t = VariableTable::for_graph(&g, &trek_weights(&g));
        let v = |var| Polynomial::var(&t, var).unwrap();
        let (l12, l23) = (v(Var::Lambda(1, 2)), v(Var::Lambda(2, 3)));
        let (w11, w22, w33, w23) = (v(Var::Omega(1, 1)), v(Var::Omega(2, 2)), v(Var::Omega(3, 3)), v(Var::Omega(2, 3)));
        let s22 = &w22 + &(&w11 * &l12.pow(2));
        let s23 = &(&w23 + &(&w22 * &l23)) + &(&(&w11 * &l12.pow(2)) * &l23);
        let s33 = &(&(&w33 + &(&(&w23 * &l23) * &k(&t, 2))) + &(&w22 * &l23.pow(2)))
            + &(&(&w11 * &l12.pow(2)) * &l23.pow(2));
        let taus = [
            (Var::Sigma(1, 1), w11.clone()),
            (Var::Sigma(1, 2), &w11 * &l12),
            (Var::Sigma(1, 3), &(&w11 * &l12) * &l23),
            (Var::Sigma(2, 2), s22),
            (Var::Sigma(2, 3), s23),
            (Var::Sigma(3, 3), s33),
        ];
        let gens = taus
            .iter()
            .map(|(s, tau)| {
                let d = t.weight(t.id(*s).unwrap());
                &v(*s) - &tau.homogenize_to(d).unwrap()
            })
            .collect();
        (t, gens)
    }

    #[test]
    fn normal_form_single_division() {
        let (t, gens) = iv_generators();
        let sig: Vec<Var> = t.vars().iter().copied().filter(Var::is_sigma).collect();
        let ord = MonomialOrder::elimination(&t, &sig, true).unwrap();
        let dh = |p: &Polynomial| p.dehomogenize();
        let basis = [dh(&gens[1]), dh(&gens[2])];
        let s13 = Polynomial::var(&t, Var::Sigma(1, 3)).unwrap();
        let nf = normal_form(&s13, &basis, &ord);
        assert_eq!(nf.to_string(), "l_{1,2}*l_{2,3}*w_{1,1}");
        assert!(normal_form(&basis[0], &basis[..1], &ord).is_zero());
        assert_eq!(normal_form(&nf, &basis, &ord), nf);
    }

    #[test]
    fn truncated_iv_contains_instrument_formula() {
        let (t, gens) = iv_generators();
        let q = Var::Lambda(2, 3);
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), q).unwrap();
        let gb = buchberger_truncated(&gens, &ord, 3, &Limits::unlimited()).unwrap();
        let v = |var| Polynomial::var(&t, var).unwrap();
        let target = &(&v(q) * &v(Var::Sigma(1, 2))) - &v(Var::Sigma(1, 3));
        assert!(gb.elements.contains(&target), "{:?}", gb.elements);
        assert!(gb.is_reduced());
        assert!(gb.elements.iter().all(|g| g.weighted_degree().unwrap() <= 3));
        let full = buchberger_full(&gens, &ord, &Limits::unlimited()).unwrap();
        let slice: Vec<_> =
            full.elements.iter().filter(|g| g.weighted_degree().unwrap() <= 3).cloned().collect();
        assert_eq!(gb.elements, slice);
    }

    #[test]
    fn truncated_trivial_cases() {
        let (t, gens) = iv_generators();
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), Var::Lambda(1, 2)).unwrap();
        let gb = buchberger_truncated(&gens[..1], &ord, 5, &Limits::unlimited()).unwrap();
        assert_eq!(gb.elements, vec![gens[0].monic(&ord)]);
        let gb = buchberger_truncated(&gens, &ord, 0, &Limits::unlimited()).unwrap();
        assert!(gb.elements.is_empty());
    }

    #[test]
    fn truncated_rejects_bad_input() {
        let (t, gens) = iv_generators();
        let ord = MonomialOrder::elimination(&t, &t.theta(), false).unwrap();
        assert_eq!(buchberger_truncated(&gens, &ord, 3, &Limits::unlimited()).unwrap_err(), GbError::NotGradedOrder);
        let graded = MonomialOrder::elimination(&t, &t.theta(), true).unwrap();
        let bad = [gens[0].clone(), gens[3].dehomogenize()];
        assert_eq!(
            buchberger_truncated(&bad, &graded, 3, &Limits::unlimited()).unwrap_err(),
            GbError::NotHomogeneous { index: 1 }
        );
    }

    #[test]
    fn incremental_extension_matches_fresh() {
        let (t, gens) = iv_generators();
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), Var::Omega(2, 3)).unwrap();
        let mut st = TruncatedGb::new(&gens, &ord).unwrap();
        for d in 1..=10 {
            st.extend_to(d, &Limits::unlimited()).unwrap();
            let fresh = buchberger_truncated(&gens, &ord, d, &Limits::unlimited()).unwrap();
            assert_eq!(st.basis().elements, fresh.elements, "bound {d}");
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let (t, gens) = iv_generators();
        let ord = MonomialOrder::elimination(&t, &t.theta(), false).unwrap();
        let limits = Limits { max_pairs: Some(3), ..Limits::default() };
        let err = buchberger_full(&gens, &ord, &limits).unwrap_err();
        assert!(matches!(err, GbError::EffortExceeded { reason: Exhausted::PairCap, stats } if stats.pairs_processed == 3));
    }

    #[test]
    fn deterministic_output() {
        let (t, gens) = iv_generators();
        let ord = MonomialOrder::for_parameter(&t, &t.theta(), Var::Lambda(2, 3)).unwrap();
        let a = buchberger_truncated(&gens, &ord, 8, &Limits::unlimited()).unwrap();
        let b = buchberger_truncated(&gens, &ord, 8, &Limits::unlimited()).unwrap();
        assert_eq!(a.elements, b.elements);
    }
}

//! Exact-rational numerical oracle: samples parameters, builds the exact
//! covariance matrix and checks emitted formulas against the sampled truth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::MixedGraph;
use crate::ident::{ComponentResult, IdentificationReport};
use crate::poly::{Polynomial, Var};
use crate::rational::Rational;

/// How many fresh samples a single trial may draw before a zero denominator
/// is treated as persistent.
pub const ZERO_DENOMINATOR_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("denominator of the formula for {parameter} vanished on {ZERO_DENOMINATOR_RETRIES} consecutive samples")]
    PersistentZeroDenominator { parameter: String },
    #[error("report carries no formulas to check")]
    NoFormulas,
}

/// Parameter values for one model. `omega` holds the diagonal and the
/// bidirected entries, keyed with `u <= v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParameterSample {
    pub lambda: BTreeMap<(usize, usize), Rational>,
    pub omega: BTreeMap<(usize, usize), Rational>,
    pub seed: u64,
}

impl ParameterSample {
    pub fn value(&self, v: Var) -> Option<Rational> {
        match v {
            Var::Lambda(a, b) => self.lambda.get(&(a, b)).cloned(),
            Var::Omega(a, b) => self.omega.get(&(a, b)).cloned(),
            _ => None,
        }
    }

    /// `Ω` as a dense symmetric matrix (0-based indices).
    pub fn omega_matrix(&self, p: usize) -> Vec<Vec<Rational>> {
        let mut m = vec![vec![Rational::zero(); p]; p];
        for (&(u, v), x) in &self.omega {
            m[u - 1][v - 1] = x.clone();
            m[v - 1][u - 1] = x.clone();
        }
        m
    }
}

fn nonzero_ratio(rng: &mut ChaCha8Rng) -> Rational {
    let n: i64 = rng.gen_range(1..=9);
    let d: i64 = rng.gen_range(1..=9);
    let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
    Rational::new(sign * n, d)
}

fn positive_ratio(rng: &mut ChaCha8Rng) -> Rational {
    Rational::new(rng.gen_range(1..=9), rng.gen_range(1..=9))
}

/// Draws `λ` and off-diagonal `ω` from `{±1..±9}/{1..9}` and sets each
/// `ω_vv` to its row's absolute off-diagonal sum plus a positive draw, so
/// `Ω` is strictly diagonally dominant.
pub fn sample_params(graph: &MixedGraph, seed: u64) -> ParameterSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = graph.directed().iter().map(|&e| (e, nonzero_ratio(&mut rng))).collect();
    let mut omega: BTreeMap<(usize, usize), Rational> =
        graph.bidirected().iter().map(|&e| (e, nonzero_ratio(&mut rng))).collect();
    let mut row = vec![Rational::zero(); graph.p() + 1];
    for (&(u, v), x) in &omega {
        row[u] = &row[u] + &x.abs();
        row[v] = &row[v] + &x.abs();
    }
    for v in graph.nodes() {
        omega.insert((v, v), &row[v] + &positive_ratio(&mut rng));
    }
    ParameterSample { lambda, omega, seed }
}

fn mat_mul(a: &[Vec<Rational>], b: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let n = a.len();
    let mut c = vec![vec![Rational::zero(); n]; n];
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

/// `Σ = (I − Λ)^{-T} Ω (I − Λ)^{-1}` with `(I − Λ)^{-1} = Σ_k Λ^k`.
pub fn covariance_exact(graph: &MixedGraph, sample: &ParameterSample) -> Vec<Vec<Rational>> {
    let p = graph.p();
    let mut lam = vec![vec![Rational::zero(); p]; p];
    for (&(u, v), x) in &sample.lambda {
        lam[u - 1][v - 1] = x.clone();
    }
    let mut inv = vec![vec![Rational::zero(); p]; p];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = Rational::one();
    }
    let mut power = inv.clone();
    for _ in 1..p {
        power = mat_mul(&power, &lam);
        for i in 0..p {
            for j in 0..p {
                if !power[i][j].is_zero() {
                    inv[i][j] = &inv[i][j] + &power[i][j];
                }
            }
        }
    }
    let inv_t: Vec<Vec<Rational>> = (0..p).map(|i| (0..p).map(|j| inv[j][i].clone()).collect()).collect();
    mat_mul(&mat_mul(&inv_t, &sample.omega_matrix(p)), &inv)
}

/// Rank of a matrix by exact elimination.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let mut a: Vec<Vec<Rational>> = rows.to_vec();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for i in r + 1..a.len() {
            if a[i][c].is_zero() {
                continue;
            }
            let f = &a[i][c] * &inv;
            for k in c..cols {
                let d = &f * &a[r][k];
                a[i][k] = &a[i][k] - &d;
            }
        }
        r += 1;
    }
    r
}

/// Exact positive-definiteness test for a symmetric matrix: Gaussian
/// elimination without pivoting must produce only positive pivots.
pub fn is_positive_definite(m: &[Vec<Rational>]) -> bool {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    for k in 0..n {
        if !(a[k][k] > Rational::zero()) {
            return false;
        }
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = &a[i][k] / &a[k][k];
            for j in k..n {
                let t = &f * &a[k][j];
                a[i][j] = &a[i][j] - &t;
            }
        }
    }
    true
}

/// Value of `σ_uv` from a covariance matrix (1-based labels).
pub fn sigma_value(sigma: &[Vec<Rational>], v: Var) -> Option<Rational> {
    match v {
        Var::Sigma(a, b) => sigma.get(a - 1).and_then(|r| r.get(b - 1)).cloned(),
        _ => None,
    }
}

/// Outcome of a formula check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub trials: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub component: usize,
    pub parameter: String,
    pub seed: u64,
    pub expected: String,
    pub recovered: String,
}

enum TrialOutcome {
    Pass,
    ZeroDenominator(String),
    Mismatch(String, Rational, Rational),
}

fn run_trial(comp: &ComponentResult, seed: u64) -> TrialOutcome {
    let sample = sample_params(&comp.graph, seed);
    let sigma = covariance_exact(&comp.graph, &sample);
    let mut recovered: BTreeMap<Var, Rational> = BTreeMap::new();
    for f in &comp.formulas {
        let point = |v: Var| sigma_value(&sigma, v).or_else(|| recovered.get(&v).cloned());
        let den = f.denominator.evaluate(&point).expect("formula variables are assigned");
        if den.is_zero() {
            return TrialOutcome::ZeroDenominator(comp.render_var(f.param));
        }
        let num = f.numerator.evaluate(&point).expect("formula variables are assigned");
        let value = &num / &den;
        let truth = sample.value(f.param).expect("parameter of the component");
        if value != truth {
            return TrialOutcome::Mismatch(comp.render_var(f.param), truth, value);
        }
        recovered.insert(f.param, value);
    }
    TrialOutcome::Pass
}

/// Checks every formula of the report on `trials` random parameter points
/// per component. Formulas are evaluated in identification order, feeding
/// recovered values of earlier parameters into later formulas. A trial whose
/// denominator vanishes is redrawn, up to the retry limit.
pub fn check_formulas(
    report: &IdentificationReport,
    trials: usize,
    seed: u64,
) -> Result<Verification, VerifyError> {
    if report.components.iter().all(|c| c.formulas.is_empty()) {
        return Err(VerifyError::NoFormulas);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        for (ci, comp) in report.components.iter().enumerate() {
            if comp.formulas.is_empty() {
                continue;
            }
            let mut attempts = 0;
            loop {
                let s: u64 = rng.gen();
                match run_trial(comp, s) {
                    TrialOutcome::Pass => break,
                    TrialOutcome::ZeroDenominator(parameter) => {
                        attempts += 1;
                        if attempts >= ZERO_DENOMINATOR_RETRIES {
                            return Err(VerifyError::PersistentZeroDenominator { parameter });
                        }
                    }
                    TrialOutcome::Mismatch(parameter, truth, value) => {
                        return Ok(Verification {
                            trials,
                            passed: false,
                            counterexample: Some(Counterexample {
                                trial,
                                component: ci,
                                parameter,
                                seed: s,
                                expected: truth.to_string(),
                                recovered: value.to_string(),
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(Verification { trials, passed: true, counterexample: None })
}

/// Looks for a parameter point at which the pure-`σ` polynomial `den` is
/// nonzero, trying up to the retry limit. Returns the seed of the witness.
pub fn nonzero_witness(graph: &MixedGraph, den: &Polynomial, seed: u64) -> Option<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ZERO_DENOMINATOR_RETRIES {
        let s: u64 = rng.gen();
        let sigma = covariance_exact(graph, &sample_params(graph, s));
        let v = den.evaluate(&|x| sigma_value(&sigma, x)).ok()?;
        if !v.is_zero() {
            return Some(s);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::examples;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn samples_are_deterministic_and_dominant() {
        let g = examples::adherence_trial();
        let a = sample_params(&g, 7);
        assert_eq!(a, sample_params(&g, 7));
        assert_ne!(a, sample_params(&g, 8));
        assert_eq!(a.lambda.len(), 4);
        assert_eq!(a.omega.len(), 5);
        let om = a.omega_matrix(4);
        for i in 0..4 {
            let off: Rational = (0..4).filter(|&j| j != i).fold(Rational::zero(), |s, j| &s + &om[i][j].abs());
            assert!(om[i][i] > off);
        }
        assert!(is_positive_definite(&om));
        assert!(a.lambda.values().all(|x| !x.is_zero()));
    }

    #[test]
    fn rank_of_small_matrices() {
        assert_eq!(rank(&[]), 0);
        assert_eq!(rank(&[vec![r(0), r(0)]]), 0);
        assert_eq!(rank(&[vec![r(1), r(2)], vec![r(2), r(4)]]), 1);
        assert_eq!(rank(&[vec![r(0), r(1), r(3)], vec![r(2), r(4), r(0)], vec![r(2), r(5), r(3)]]), 2);
        assert_eq!(rank(&[vec![r(1), r(0)], vec![r(0), r(1)], vec![r(1), r(1)]]), 2);
    }

    #[test]
    fn edgeless_covariance_is_omega() {
        let g = MixedGraph::empty(3);
        let s = sample_params(&g, 1);
        assert_eq!(covariance_exact(&g, &s), s.omega_matrix(3));
        assert!(s.omega_matrix(3).iter().enumerate().all(|(i, row)| row
            .iter()
            .enumerate()
            .all(|(j, x)| (i == j) == !x.is_zero())));
    }

    #[test]
    fn iv_covariance_by_hand() {
        let g = examples::instrumental_variable();
        let s = ParameterSample {
            lambda: [((1, 2), r(1)), ((2, 3), r(1))].into_iter().collect(),
            omega: [((1, 1), r(1)), ((2, 2), r(1)), ((3, 3), r(1)), ((2, 3), r(0))].into_iter().collect(),
            seed: 0,
        };
        let sig = covariance_exact(&g, &s);
        let want = [[1, 1, 1], [1, 2, 2], [1, 2, 3]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sig[i][j], r(want[i][j]), "({i},{j})");
            }
        }
        assert!(is_positive_definite(&sig));
    }

    #[test]
    fn sampled_covariances_are_positive_definite() {
        for seed in 0..20 {
            let g = crate::graph::random_graph(6, &"1/3".parse().unwrap(), seed);
            let sig = covariance_exact(&g, &sample_params(&g, seed));
            assert!(is_positive_definite(&sig));
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(sig[i][j], sig[j][i]);
                }
            }
        }
    }

    #[test]
    fn positive_definite_rejects() {
        assert!(!is_positive_definite(&[vec![r(1), r(2)], vec![r(2), r(1)]]));
        assert!(!is_positive_definite(&[vec![r(0)]]));
        assert!(is_positive_definite(&[vec![r(2), r(1)], vec![r(1), r(2)]]));
    }
}

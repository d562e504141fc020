use std::time::Duration;

use ratid_core::graph::{enumerate_unique_graphs, examples, MixedGraph};
use ratid_core::ident::{algorithm1, garcia_puente, BaselineOptions, FormulaKind, IdentOptions, Verdict};
use ratid_core::poly::Var;
use ratid_core::verify::check_formulas;

fn opts(degree: u32, tian: bool) -> IdentOptions {
    IdentOptions { degree, tian, ..Default::default() }
}

#[test]
fn named_examples() {
    let cases: [(MixedGraph, Verdict); 4] = [
        (examples::instrumental_variable(), Verdict::Yes),
        (examples::adherence_trial(), Verdict::Yes),
        (examples::four_node(), Verdict::Yes),
        (examples::bow(), Verdict::No),
    ];
    for (g, want) in cases {
        for tian in [false, true] {
            let rep = algorithm1(&g, &opts(5, tian)).unwrap();
            assert_eq!(rep.verdict, want, "{} tian={tian}", g.encode());
            if want == Verdict::Yes {
                assert!(check_formulas(&rep, 5, 11).unwrap().passed, "{}", g.encode());
            }
        }
        assert_eq!(garcia_puente(&g, &BaselineOptions::default()).verdict, want, "{}", g.encode());
    }
}

#[test]
fn iv_lambda_needs_the_instrument() {
    let rep = algorithm1(&examples::instrumental_variable(), &opts(5, false)).unwrap();
    let (_, f) = rep.formula(Var::Lambda(2, 3)).unwrap();
    assert_eq!(f.numerator.to_string(), "s_{1,3}");
    assert_eq!(f.denominator.to_string(), "s_{1,2}");
}

#[test]
fn identifying_polynomials_lie_in_the_ideal() {
    for g in [examples::adherence_trial(), examples::four_node(), examples::instrumental_variable()] {
        let rep = algorithm1(&g, &opts(5, true)).unwrap();
        for c in &rep.components {
            for f in c.formulas.iter().filter(|f| f.kind == FormulaKind::Groebner) {
                let src = f.source.as_ref().expect("groebner formulas keep their source").dehomogenize();
                assert!(c.ideal.substitute_sigma(&src).is_zero(), "{} {}", g.encode(), f.param);
            }
        }
    }
}

#[test]
fn decomposition_agrees_with_the_whole_graph() {
    let graphs = enumerate_unique_graphs(4, 3).unwrap();
    let budget = IdentOptions { timeout: Some(Duration::from_secs(10)), ..opts(3, false) };
    for g in &graphs {
        let whole = algorithm1(g, &budget).unwrap();
        let split = algorithm1(g, &IdentOptions { tian: true, ..budget.clone() }).unwrap();
        if whole.verdict != Verdict::Partial && split.verdict != Verdict::Partial {
            assert_eq!(whole.verdict, split.verdict, "{}", g.encode());
        }
    }
}

#[test]
fn larger_degree_never_loses_parameters() {
    for g in enumerate_unique_graphs(4, 3).unwrap() {
        let low = algorithm1(&g, &opts(2, true)).unwrap();
        let high = algorithm1(&g, &opts(4, true)).unwrap();
        for c in &low.components {
            for f in c.formulas.iter().filter(|f| c.owns(f.param)) {
                let q = c.global_var(f.param);
                assert!(high.formula(q).is_some(), "{} lost {q}", g.encode());
            }
        }
    }
}

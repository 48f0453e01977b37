//! Independent oracles for single steps: a literal expansion of the
//! corrected rk2 step at p = 2, the exact variation-of-constants solution of
//! a linear semidiscrete system, and term-by-term φ evaluation.

mod common;

use common::{max_gap, phi_mul, variation_of_constants, AffineData};
use eerk::boundary::{BoundaryCorrectionSet, BoundaryEvaluator, BoundaryMode, HistoryBuffer};
use eerk::integrator::{step_corrected, step_standard, StepInputs};
use eerk::methods::{tableau_krogstad, tableau_rk2};
use eerk::phi::{DenseEngine, KrylovConfig, KrylovEngine, PhiCombination, PhiEngine};
use eerk::problems::{problem_p1, Partial, Problem};
use eerk::spatial::{BoundaryKind, SpatialDiscretization};

#[test]
fn corrected_rk2_p2_matches_literal_expansion() {
    let (stage, update) = common::literal_rk2p2_gaps();
    assert!(stage <= 1e-12, "stage differs by {stage:e}");
    assert!(update <= 1e-12, "update differs by {update:e}");
}

#[test]
fn standard_scheme_matches_variation_of_constants_on_affine_problem() {
    for (name, gap) in common::affine_voc_gap() {
        assert!(gap <= 10.0, "{name}: {gap} tolerance units");
    }
}

#[test]
fn rk2_is_not_exact_on_affine_forcing() {
    let disc = SpatialDiscretization::build_1d_dirichlet(31).unwrap();
    let engine = KrylovEngine::new(&disc, KrylovConfig::default());
    let tab = tableau_rk2();
    let k = 0.05;
    let u: Vec<f64> = disc.nodes().iter().map(|&p| AffineData.initial(p)).collect();
    let out = step_standard(&StepInputs { tableau: &tab, disc: &disc, problem: &AffineData, engine: &engine, u: &u, t: 0.0, k, corrections: None })
        .unwrap();
    let exact = variation_of_constants(&disc, &disc.dense_a(), &u, 0.0, k);
    assert!(max_gap(&out.u, &exact) > 1e-6);
}

#[test]
fn corrected_scheme_with_zero_corrections_reduces_to_interior_forcing() {
    let disc = SpatialDiscretization::build_1d_dirichlet(31).unwrap();
    let a = disc.dense_a();
    let engine = DenseEngine::new(a.clone());
    let tab = tableau_rk2();
    let k = 0.02;
    let u: Vec<f64> = disc.nodes().iter().map(|&p| AffineData.initial(p)).collect();
    let set = BoundaryCorrectionSet::zeros(1, 2, 2);
    let out = step_corrected(&StepInputs { tableau: &tab, disc: &disc, problem: &AffineData, engine: &engine, u: &u, t: 0.0, k, corrections: Some(&set) })
        .unwrap();
    let h: Vec<f64> = disc.nodes().iter().map(|&p| AffineData.forcing(k / 2.0, p, Partial::VALUE)).collect();
    let expect = phi_mul(0, &a, k, &u) + phi_mul(1, &a, k, &h) * k;
    assert!(max_gap(&out.u, expect.as_slice()) < 1e-12);
}

/// Splits every combination into one call per φ-index.
struct TermByTerm(DenseEngine);

impl PhiEngine for TermByTerm {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, combo: &PhiCombination) -> eerk::Result<Vec<f64>> {
        let mut acc = vec![0.0; combo.dim()];
        for (j, w) in combo.terms() {
            let mut single = PhiCombination::new(combo.tau(), combo.dim());
            single.add(j, 1.0, w);
            for (a, b) in acc.iter_mut().zip(self.0.apply(&single)?) {
                *a += b;
            }
        }
        Ok(acc)
    }
}

#[test]
fn fused_combinations_match_term_by_term_evaluation() {
    let prob = problem_p1(BoundaryKind::DirichletBoth);
    let disc = SpatialDiscretization::build_1d_dirichlet(20).unwrap();
    let fused = DenseEngine::new(disc.dense_a());
    let split = TermByTerm(DenseEngine::new(disc.dense_a()));
    let (t, k) = (0.2, 0.05);
    let u: Vec<f64> = disc.nodes().iter().map(|&p| prob.exact(t, p, Partial::VALUE).unwrap()).collect();
    let ev = BoundaryEvaluator::new(&disc, &prob, BoundaryMode::Identity);
    for tab in [tableau_rk2(), tableau_krogstad()] {
        let set = ev.simplified_boundaries(2, &tab, t, k, &HistoryBuffer::new(1)).unwrap();
        let run = |engine: &dyn PhiEngine| {
            step_corrected(&StepInputs { tableau: &tab, disc: &disc, problem: &prob, engine, u: &u, t, k, corrections: Some(&set) })
                .unwrap()
                .u
        };
        let gap = max_gap(&run(&fused), &run(&split));
        assert!(gap <= 1e-12, "{}: {gap:e}", tab.name);
    }
}

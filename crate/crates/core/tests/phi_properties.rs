//! Properties of the φ kernels: the recurrence on a complex grid, the
//! integral representation, uniform bounds on discrete Laplacians, and the
//! agreement of Krylov actions with dense evaluation.

mod common;

use eerk::phi::{inv_factorial, phi_dense, phi_dense_all};
use eerk::spatial::SpatialDiscretization;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn recurrence_residual_on_complex_grid() {
    let worst = common::recurrence_residual();
    assert!(worst <= 1e-12, "worst scaled residual {worst:e}");
}

/// `∫_0^1 e^{(1-θ)M} θ^{j-1}/(j-1)! dθ` by adaptive Simpson.
fn phi_by_quadrature(j: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let f = |th: f64| (m * (1.0 - th)).exp() * (th.powi(j as i32 - 1) * inv_factorial(j - 1));
    fn simpson(a: f64, b: f64, fa: &DMatrix<f64>, fm: &DMatrix<f64>, fb: &DMatrix<f64>) -> DMatrix<f64> {
        (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
    }
    #[allow(clippy::too_many_arguments)]
    fn refine(
        f: &dyn Fn(f64) -> DMatrix<f64>,
        a: f64,
        b: f64,
        fa: DMatrix<f64>,
        fm: DMatrix<f64>,
        fb: DMatrix<f64>,
        whole: DMatrix<f64>,
        tol: f64,
        depth: usize,
    ) -> DMatrix<f64> {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = simpson(a, m, &fa, &flm, &fm);
        let right = simpson(m, b, &fm, &frm, &fb);
        let err = (&left + &right - &whole).amax();
        if depth == 0 || err <= 15.0 * tol {
            return &left + &right + (&left + &right - whole) / 15.0;
        }
        refine(f, a, m, fa, flm, fm.clone(), left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(0.0), f(0.5), f(1.0));
    let whole = simpson(0.0, 1.0, &fa, &fm, &fb);
    refine(&f, 0.0, 1.0, fa, fm, fb, whole, 1e-11, 30)
}

fn stable_matrix(entries: &[f64], t: f64) -> DMatrix<f64> {
    let r = DMatrix::from_row_slice(5, 5, entries);
    let shift = r.row_iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) + 0.1;
    (r - DMatrix::identity(5, 5) * shift) * t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dense_phi_matches_integral_definition(entries in prop::collection::vec(-2.0f64..2.0, 25), t in 0.05f64..3.0) {
        let m = stable_matrix(&entries, t);
        for j in 1..=3 {
            let dense = phi_dense(j, &m).unwrap();
            let quad = phi_by_quadrature(j, &m);
            let gap = (&dense - &quad).amax();
            prop_assert!(gap <= 1e-8, "j = {j}: {gap:e}");
        }
    }

    #[test]
    fn phi_zero_is_the_exponential(entries in prop::collection::vec(-2.0f64..2.0, 25), t in 0.0f64..3.0) {
        let m = stable_matrix(&entries, t);
        let gap = (phi_dense(0, &m).unwrap() - m.exp()).amax();
        prop_assert!(gap <= 1e-12, "{gap:e}");
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[test]
fn phi_bounded_on_1d_dirichlet_laplacian() {
    let worst = common::dirichlet_phi_bound();
    assert!(worst <= 1.01, "j!‖φ_j(tA)‖ reaches {worst}");
}

#[test]
fn phi_bounded_uniformly_on_ninepoint_operator() {
    // A = M⁻¹K is not an M-matrix, so the 1/j! bound is not expected, but the
    // bound must not grow as h shrinks
    let mut bounds = Vec::new();
    for intervals in [5, 10, 20] {
        let a = SpatialDiscretization::build_2d_ninepoint(intervals).unwrap().dense_a();
        let mut worst = [0.0f64; 4];
        for t in [0.01, 0.1, 1.0] {
            for (j, m) in phi_dense_all(3, &(&a * t), usize::MAX).unwrap().iter().enumerate() {
                worst[j] = worst[j].max(inf_norm(m) / inv_factorial(j));
            }
        }
        bounds.push(worst);
    }
    for j in 0..4 {
        assert!(bounds[0][j] < 2.0, "j = {j}: {:?}", bounds);
        assert!(bounds[2][j] <= 1.05 * bounds[0][j], "bound grows with 1/h for j = {j}: {:?}", bounds);
    }
}

#[test]
fn krylov_matches_dense_on_small_operators() {
    // dimension 400 is covered by the acceptance run
    for (label, gap) in common::krylov_dense_suite(150) {
        assert!(gap <= 1e-8, "{label}: {gap:e}");
    }
}

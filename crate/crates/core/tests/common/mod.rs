//! Oracles shared by the property suites and the acceptance run.
#![allow(dead_code)]

use eerk::boundary::{BoundaryEvaluator, BoundaryMode, HistoryBuffer};
use eerk::integrator::{integrate, step_corrected, IntegrateInputs, Scheme, StepInputs};
use eerk::methods::{tableau_krogstad, tableau_rk2, tableau_rk2b};
use eerk::phi::{inv_factorial, phi_apply, phi_dense, phi_dense_all, phi_scalar, DenseEngine, KrylovConfig, KrylovEngine, LinearOperator, PhiCombination};
use eerk::problems::{problem_p1, Partial, Problem, SemidiscreteRhs};
use eerk::spatial::{BoundaryKind, Point, SpatialDiscretization};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn phi_mul(j: usize, a: &DMatrix<f64>, tau: f64, v: &[f64]) -> DVector<f64> {
    phi_dense(j, &(a * tau)).unwrap() * DVector::from_column_slice(v)
}

/// Worst `|zφ_{j+1}(z) - φ_j(z) + 1/j!| / max(1, |φ_j(z)|)` for `j ≤ 7` over
/// `Re z ∈ [-10⁴, 0]`, `Im z ∈ [-10, 10]`.
pub fn recurrence_residual() -> f64 {
    let re: Vec<f64> = (0..=40).map(|i| -(10f64.powf(-3.0 + 7.0 * i as f64 / 40.0))).chain([0.0]).collect();
    let im: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
    let mut worst = 0.0f64;
    for &x in &re {
        for &y in &im {
            let z = Complex64::new(x, y);
            for j in 0..=7 {
                let a = phi_scalar(j, z);
                let b = phi_scalar(j + 1, z);
                worst = worst.max((z * b - a + inv_factorial(j)).norm() / a.norm().max(1.0));
            }
        }
    }
    worst
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Worst `j! ‖φ_j(tA)‖_∞` on the 1D Dirichlet operator for `j ≤ 3`,
/// `t ∈ [0, 1]`, `h ∈ {1/10, 1/20, 1/40}`.
pub fn dirichlet_phi_bound() -> f64 {
    let mut worst = 0.0f64;
    for intervals in [10, 20, 40] {
        let a = SpatialDiscretization::build_1d_dirichlet(intervals).unwrap().dense_a();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            for (j, m) in phi_dense_all(3, &(&a * t), usize::MAX).unwrap().iter().enumerate() {
                worst = worst.max(inf_norm(m) / inv_factorial(j));
            }
        }
    }
    worst
}

/// A nonsymmetric convection-diffusion operator with upwinding.
pub fn convection_diffusion(n: usize) -> DMatrix<f64> {
    let h = 1.0 / (n + 1) as f64;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 / (h * h) - 20.0 / h;
        if i > 0 {
            a[(i, i - 1)] = 1.0 / (h * h) + 20.0 / h;
        }
        if i + 1 < n {
            a[(i, i + 1)] = 1.0 / (h * h);
        }
    }
    a
}

/// Relative gap between the Krylov action of `Σ_j φ_j(τA) w_j` and the dense
/// evaluation, worst over the time scales. The dense reference costs
/// `O((jmax N)³)`, so large operators get the stiffest scale and `j ≤ 2`.
pub fn krylov_dense_gap(op: &dyn LinearOperator, a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let config = KrylovConfig::default();
    let (taus, jmax): (&[f64], usize) = if n > 200 { (&[0.25], 2) } else { (&[1e-4, 1e-2, 0.25], 3) };
    let mut worst = 0.0f64;
    for &tau in taus {
        let mut combo = PhiCombination::new(tau, n);
        let mut reference = DVector::zeros(n);
        let phis = phi_dense_all(jmax, &(a * tau), usize::MAX).unwrap();
        for (j, phi) in phis.iter().enumerate() {
            let w: Vec<f64> = (0..n).map(|i| ((i * (j + 2)) as f64 * 0.37).sin() + 0.1 * j as f64).collect();
            combo.add(j, 1.0, &w);
            reference += phi * DVector::from_column_slice(&w);
        }
        let (got, _) = phi_apply(op, &combo, &config).unwrap();
        worst = worst.max((DVector::from_column_slice(&got) - &reference).amax() / reference.amax().max(1.0));
    }
    worst
}

/// Krylov-versus-dense gaps on the built-in operators and a nonsymmetric
/// one, for grids whose dimension does not exceed `max_dim`.
pub fn krylov_dense_suite(max_dim: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for intervals in [12, 100, 401] {
        let d = SpatialDiscretization::build_1d_dirichlet(intervals).unwrap();
        if d.dim() <= max_dim {
            out.push((format!("1d dirichlet N={}", d.dim()), krylov_dense_gap(&d, &d.dense_a())));
        }
    }
    for intervals in [12, 100, 400] {
        let d = SpatialDiscretization::build_1d_dirichlet_neumann(intervals).unwrap();
        if d.dim() <= max_dim {
            out.push((format!("1d dirichlet-neumann N={}", d.dim()), krylov_dense_gap(&d, &d.dense_a())));
        }
    }
    for intervals in [6, 11, 21] {
        let d = SpatialDiscretization::build_2d_ninepoint(intervals).unwrap();
        if d.dim() <= max_dim {
            out.push((format!("nine-point N={}", d.dim()), krylov_dense_gap(&d, &d.dense_a())));
        }
    }
    for n in [30, 400] {
        if n <= max_dim {
            let a = convection_diffusion(n);
            out.push((format!("convection-diffusion N={n}"), krylov_dense_gap(&a, &a)));
        }
    }
    out
}

/// Stage and update gaps between the corrected rk2 step with `p = 2` and its
/// expansion written out term by term, on a grid with 10 unknowns.
pub fn literal_rk2p2_gaps() -> (f64, f64) {
    let prob = problem_p1(BoundaryKind::DirichletBoth);
    let disc = SpatialDiscretization::build_1d_dirichlet(11).unwrap();
    assert_eq!(disc.dim(), 10);
    let a = disc.dense_a();
    let engine = DenseEngine::new(a.clone());
    let tab = tableau_rk2();
    let (t, k) = (0.3, 0.1);
    let u: Vec<f64> = disc.nodes().iter().map(|&p| prob.exact(t, p, Partial::VALUE).unwrap() + 0.01 * p[0]).collect();

    let ev = BoundaryEvaluator::new(&disc, &prob, BoundaryMode::Identity);
    let set = ev.simplified_boundaries(2, &tab, t, k, &HistoryBuffer::new(1)).unwrap();
    let out = step_corrected(&StepInputs { tableau: &tab, disc: &disc, problem: &prob, engine: &engine, u: &u, t, k, corrections: Some(&set) })
        .unwrap();

    // boundary values straight from the data
    let per_end = |f: &dyn Fn(Point) -> f64| -> Vec<f64> { disc.boundary().iter().map(|b| f(b.point)).collect() };
    let g = |p: Point, n: usize| prob.boundary_data(t, p, Partial::time(n));
    let hb = |p: Point, s: f64, n: usize| prob.forcing(s, p, Partial::time(n));
    let phi = |v: f64, o: usize| prob.nonlinearity(v, o);
    let du = per_end(&|p| g(p, 0));
    let dau = per_end(&|p| g(p, 1) - phi(g(p, 0), 0) - hb(p, t, 0));
    let df_n = per_end(&|p| phi(g(p, 0), 0) + hb(p, t, 0));
    // ∂A²u + ∂Af = ∂Au̇
    let daudot = per_end(&|p| g(p, 2) - hb(p, t, 1) - phi(g(p, 0), 1) * g(p, 1));
    let df_half = per_end(&|p| phi(g(p, 0) + 0.5 * k * g(p, 1), 0) + hb(p, t + 0.5 * k, 0));
    let c = |b: &[f64]| disc.apply_c(b);
    let f = |s: f64, v: &[f64]| -> Vec<f64> {
        v.iter().zip(disc.nodes()).map(|(&x, &p)| phi(x, 0) + prob.forcing(s, p, Partial::VALUE)).collect()
    };

    let h2 = 0.5 * k;
    let k2 = phi_mul(0, &a, h2, &u)
        + phi_mul(1, &a, h2, &c(&du)) * h2
        + phi_mul(2, &a, h2, &c(&dau)) * (h2 * h2)
        + (phi_mul(1, &a, h2, &f(t, &u)) + phi_mul(2, &a, h2, &c(&df_n)) * h2) * h2;
    let f2 = f(t + h2, k2.as_slice());
    let next = phi_mul(0, &a, k, &u)
        + phi_mul(1, &a, k, &c(&du)) * k
        + phi_mul(2, &a, k, &c(&dau)) * k.powi(2)
        + phi_mul(3, &a, k, &c(&daudot)) * k.powi(3)
        + (phi_mul(1, &a, k, &f2) + phi_mul(2, &a, k, &c(&df_half)) * k) * k;

    (max_gap(&out.stages[1], k2.as_slice()), max_gap(&out.u, next.as_slice()))
}

/// `φ = 0`, with boundary data and forcing affine in time, so the nonstiff
/// part of the semidiscrete system is affine in `t`.
pub struct AffineData;

impl Problem for AffineData {
    fn name(&self) -> &'static str {
        "affine"
    }
    fn kind(&self) -> BoundaryKind {
        BoundaryKind::DirichletBoth
    }
    fn nonlinearity(&self, _: f64, _: usize) -> f64 {
        0.0
    }
    fn forcing(&self, t: f64, p: Point, d: Partial) -> f64 {
        let shape = (3.0 * p[0]).sin() + p[0] * p[0];
        match (d.t, d.x) {
            (0, 0) => shape * (1.0 + 2.0 * t),
            (1, 0) => 2.0 * shape,
            (0, 2) => (-9.0 * (3.0 * p[0]).sin() + 2.0) * (1.0 + 2.0 * t),
            _ => 0.0,
        }
    }
    fn boundary_data(&self, t: f64, p: Point, d: Partial) -> f64 {
        let (g0, g1) = if p[0] < 0.5 { (0.5, -1.0) } else { (-0.25, 3.0) };
        match d.t {
            0 => g0 + g1 * t,
            1 => g1,
            _ => 0.0,
        }
    }
    fn initial(&self, p: Point) -> f64 {
        (std::f64::consts::PI * p[0]).sin() + 0.5 - 0.75 * p[0]
    }
    fn initial_time_jet(&self, p: Point) -> [f64; 4] {
        [self.initial(p), 0.0, 0.0, 0.0]
    }
    fn exact(&self, _: f64, _: Point, _: Partial) -> Option<f64> {
        None
    }
}

/// `U(t+k) = e^{kA}U + kφ_1(kA)F(t) + k²φ_2(kA)F'` for affine `F`.
pub fn variation_of_constants(disc: &SpatialDiscretization, a: &DMatrix<f64>, u: &[f64], t: f64, k: f64) -> Vec<f64> {
    let rhs = SemidiscreteRhs { disc, problem: &AffineData };
    let f0 = rhs.boundary_forcing(t);
    let f1 = rhs.boundary_forcing(t + 1.0);
    let slope: Vec<f64> = f1.iter().zip(&f0).map(|(b, a)| b - a).collect();
    let v = phi_mul(0, a, k, u) + phi_mul(1, a, k, &f0) * k + phi_mul(2, a, k, &slope) * (k * k);
    v.as_slice().to_vec()
}

/// Worst gap, in units of the Krylov tolerance times the solution size,
/// between the standard rk2b and Krogstad trajectories (Krylov engine,
/// N = 30) and the exact variation-of-constants solution.
pub fn affine_voc_gap() -> Vec<(String, f64)> {
    let disc = SpatialDiscretization::build_1d_dirichlet(31).unwrap();
    assert_eq!(disc.dim(), 30);
    let a = disc.dense_a();
    let config = KrylovConfig::default();
    let engine = KrylovEngine::new(&disc, config);
    let k = 0.05;
    let mut out = Vec::new();
    for tab in [tableau_rk2b(), tableau_krogstad()] {
        let tr = integrate(
            &IntegrateInputs { tableau: &tab, disc: &disc, problem: &AffineData, engine: &engine, scheme: Scheme::Standard, k, keep_states: true },
            0.5,
        )
        .unwrap();
        let mut exact: Vec<f64> = disc.nodes().iter().map(|&p| AffineData.initial(p)).collect();
        let mut worst = 0.0f64;
        for n in 0..tr.steps {
            exact = variation_of_constants(&disc, &a, &exact, n as f64 * k, k);
            let scale = exact.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            worst = worst.max(max_gap(&tr.states[n + 1], &exact) / (config.tolerance * scale));
        }
        out.push((tab.name.to_string(), worst));
    }
    out
}

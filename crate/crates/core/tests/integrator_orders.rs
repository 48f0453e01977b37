//! Convergence orders of the integrator, from small nonstiff systems up to
//! the local-order law on the one-dimensional reaction-diffusion problem.

use eerk::boundary::BoundaryMode;
use eerk::harness::{estimate_order, exact_grid, run_study, EngineKind, Measure, StudyPlan};
use eerk::integrator::{integrate, step_standard, IntegrateInputs, Scheme, StepInputs};
use eerk::methods::{builtin, tableau_krogstad, tableau_rk2, tableau_rk2b, MethodTableau};
use eerk::phi::{DenseEngine, KrylovConfig};
use eerk::problems::{problem_p1, Partial, Problem};
use eerk::spatial::{BoundaryKind, Point, SpatialDiscretization};
use nalgebra::{DMatrix, DVector};

/// `u' = A u + φ(u) + h(t, x)` with zero boundary data; the stiff operator is
/// whatever the engine carries, the grid only supplies node positions.
struct Ode {
    quadratic: bool,
    lambda: f64,
}

impl Problem for Ode {
    fn name(&self) -> &'static str {
        "ode"
    }
    fn kind(&self) -> BoundaryKind {
        BoundaryKind::DirichletBoth
    }
    fn nonlinearity(&self, u: f64, order: usize) -> f64 {
        match (self.quadratic, order) {
            (false, _) => 0.0,
            (true, 0) => -0.5 * u * u,
            (true, 1) => -u,
            (true, 2) => -1.0,
            _ => 0.0,
        }
    }
    fn forcing(&self, t: f64, p: Point, d: Partial) -> f64 {
        // with φ = 0 and A = λ, u = sin t solves u' = λu + cos t - λ sin t
        let phase = p[0];
        let base = |n: usize| match n % 4 {
            0 => (t + phase).cos() - self.lambda * (t + phase).sin(),
            1 => -(t + phase).sin() - self.lambda * (t + phase).cos(),
            2 => -(t + phase).cos() + self.lambda * (t + phase).sin(),
            _ => (t + phase).sin() + self.lambda * (t + phase).cos(),
        };
        if d.x == 0 && d.y == 0 {
            base(d.t)
        } else {
            0.0
        }
    }
    fn boundary_data(&self, _: f64, _: Point, _: Partial) -> f64 {
        0.0
    }
    fn initial(&self, p: Point) -> f64 {
        p[0].sin()
    }
    fn initial_time_jet(&self, p: Point) -> [f64; 4] {
        [p[0].sin(), p[0].cos(), -p[0].sin(), -p[0].cos()]
    }
    fn exact(&self, _: f64, _: Point, _: Partial) -> Option<f64> {
        None
    }
}

fn run(tab: &MethodTableau, disc: &SpatialDiscretization, prob: &dyn Problem, a: &DMatrix<f64>, k: f64, t_final: f64) -> Vec<f64> {
    let engine = DenseEngine::new(a.clone());
    integrate(
        &IntegrateInputs { tableau: tab, disc, problem: prob, engine: &engine, scheme: Scheme::Standard, k, keep_states: false },
        t_final,
    )
    .unwrap()
    .final_state
}

#[test]
fn scalar_linear_ode_reaches_classical_order() {
    let lambda = -3.0;
    let prob = Ode { quadratic: false, lambda };
    let disc = SpatialDiscretization::build_1d_dirichlet(2).unwrap();
    assert_eq!(disc.dim(), 1);
    let phase = disc.nodes()[0][0];
    let a = DMatrix::from_element(1, 1, lambda);
    let t_final = 1.0;
    for tab in [tableau_rk2(), tableau_rk2b(), tableau_krogstad()] {
        let ks = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = ks.iter().map(|&k| (run(&tab, &disc, &prob, &a, k, t_final)[0] - (t_final + phase).sin()).abs()).collect();
        let orders = estimate_order(&errs).unwrap();
        let last = *orders.last().unwrap();
        assert!((last - tab.nonstiff_order as f64).abs() <= 0.2, "{}: {errs:?} {orders:?}", tab.name);
    }
}

fn rk4_reference(a: &DMatrix<f64>, prob: &Ode, nodes: &[Point], u0: Vec<f64>, t_final: f64) -> DVector<f64> {
    let rhs = |t: f64, u: &DVector<f64>| -> DVector<f64> {
        a * u + DVector::from_iterator(u.len(), u.iter().zip(nodes).map(|(&x, &p)| prob.nonlinearity(x, 0) + prob.forcing(t, p, Partial::VALUE)))
    };
    let steps = 20_000;
    let k = t_final / steps as f64;
    let mut u = DVector::from_vec(u0);
    for n in 0..steps {
        let t = n as f64 * k;
        let k1 = rhs(t, &u);
        let k2 = rhs(t + 0.5 * k, &(&u + &k1 * (0.5 * k)));
        let k3 = rhs(t + 0.5 * k, &(&u + &k2 * (0.5 * k)));
        let k4 = rhs(t + k, &(&u + &k3 * k));
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (k / 6.0);
    }
    u
}

#[test]
fn nonlinear_four_by_four_system_reaches_nonstiff_order() {
    let prob = Ode { quadratic: true, lambda: 0.0 };
    let disc = SpatialDiscretization::build_1d_dirichlet(5).unwrap();
    assert_eq!(disc.dim(), 4);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        -1.0, 0.5, 0.0, 0.2,
        0.3, -2.0, 0.4, 0.0,
        0.0, 0.6, -1.5, 0.3,
        0.1, 0.0, 0.2, -0.8,
    ]);
    let t_final = 1.0;
    let u0: Vec<f64> = disc.nodes().iter().map(|&p| prob.initial(p)).collect();
    let reference = rk4_reference(&a, &prob, disc.nodes(), u0, t_final);
    for tab in [tableau_rk2(), tableau_rk2b(), tableau_krogstad()] {
        let ks = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = ks
            .iter()
            .map(|&k| (DVector::from_vec(run(&tab, &disc, &prob, &a, k, t_final)) - &reference).amax())
            .collect();
        let orders = estimate_order(&errs).unwrap();
        let target = tab.nonstiff_order as f64;
        assert!(orders.iter().skip(1).all(|o| (o - target).abs() <= 0.2), "{}: {errs:?} {orders:?}", tab.name);
    }
}

#[test]
fn first_stage_is_the_state_and_every_stage_evaluates_once() {
    let prob = problem_p1(BoundaryKind::DirichletBoth);
    let disc = SpatialDiscretization::build_1d_dirichlet(30).unwrap();
    let engine = DenseEngine::new(disc.dense_a());
    let u = exact_grid(&prob, &disc, 0.3).unwrap();
    for name in ["rk2", "rk2b", "krogstad"] {
        let tab = builtin(name).unwrap();
        let out = step_standard(&StepInputs { tableau: &tab, disc: &disc, problem: &prob, engine: &engine, u: &u, t: 0.3, k: 0.05, corrections: None })
            .unwrap();
        assert_eq!(out.stages[0], u);
        assert_eq!(out.f_evaluations, tab.stages());
        assert_eq!(out.stage_f.len(), tab.stages());
    }
}

#[test]
fn vanishing_step_is_consistent() {
    let prob = problem_p1(BoundaryKind::DirichletBoth);
    let disc = SpatialDiscretization::build_1d_dirichlet(40).unwrap();
    let engine = DenseEngine::new(disc.dense_a());
    let t = 0.4;
    let u = exact_grid(&prob, &disc, t).unwrap();
    let tab = tableau_krogstad();
    let mut prev = f64::INFINITY;
    for k in [1e-4, 1e-6, 1e-8] {
        let out = step_standard(&StepInputs { tableau: &tab, disc: &disc, problem: &prob, engine: &engine, u: &u, t, k, corrections: None })
            .unwrap();
        let gap = out.u.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap.is_finite() && gap < prev, "k = {k}: {gap:e}");
        prev = gap;
    }
    assert!(prev < 1e-6);
}

fn local_plan(p: usize) -> StudyPlan {
    StudyPlan {
        name: format!("local p{p}"),
        problem: "p1".into(),
        kind: BoundaryKind::DirichletBoth,
        method: "rk2".into(),
        scheme: Scheme::Corrected { p, mode: BoundaryMode::Exact },
        intervals: 1000,
        k_ladder: vec![1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0],
        t_final: 1.0,
        measure: Measure::Local,
        repeats: 1,
        engine: EngineKind::Spectral,
        krylov: KrylovConfig::default(),
    }
}

#[test]
fn local_order_law_with_exact_boundaries() {
    for p in [1, 2] {
        let report = run_study(&local_plan(p)).unwrap();
        let target = (p + 1) as f64;
        let last = *report.order_local.last().unwrap();
        assert!((last - target).abs() <= 0.1, "p = {p}: {:?} {:?}", report.local_errors(), report.order_local);
    }
}

#[test]
fn studies_are_deterministic() {
    let mut plan = local_plan(2);
    plan.intervals = 100;
    plan.measure = Measure::Both;
    plan.k_ladder.truncate(2);
    let a = run_study(&plan).unwrap();
    let b = run_study(&plan).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.local_error.map(f64::to_bits), y.local_error.map(f64::to_bits));
        assert_eq!(x.global_error.map(f64::to_bits), y.global_error.map(f64::to_bits));
    }
}

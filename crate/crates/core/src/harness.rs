//! Convergence studies, order estimates, efficiency sweeps and their CSV
//! and plot-script output.

use std::fmt::Write as _;
use std::time::Instant;

use crate::boundary::{
    bdf_time_derivative, space_boundary_derivative, ApproximationErrorModel, BoundaryEvaluator, BoundaryMode,
    HistoryBuffer,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate, step_corrected, step_count, step_standard, IntegrateInputs, Scheme, StepInputs};
use crate::linalg::norm_inf;
use crate::methods::{self, MethodTableau};
use crate::phi::{DenseEngine, KrylovConfig, KrylovEngine, PhiEngine, SpectralEngine};
use crate::problems::{self, Partial, Problem};
use crate::spatial::{BoundaryKind, Condition, SpatialDiscretization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Local,
    Global,
    Both,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Local => "local",
            Measure::Global => "global",
            Measure::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(Measure::Local),
            "global" => Some(Measure::Global),
            "both" => Some(Measure::Both),
            _ => None,
        }
    }

    fn local(self) -> bool {
        self != Measure::Global
    }

    fn global(self) -> bool {
        self != Measure::Local
    }
}

/// Backend for φ-function actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    /// Sine eigenbasis of the grid operator.
    Spectral,
    Krylov,
    /// Dense matrix functions; small grids only.
    Dense,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Spectral => "spectral",
            EngineKind::Krylov => "krylov",
            EngineKind::Dense => "dense",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spectral" => Some(EngineKind::Spectral),
            "krylov" => Some(EngineKind::Krylov),
            "dense" => Some(EngineKind::Dense),
            _ => None,
        }
    }
}

/// One convergence study: a problem, a method and a ladder of time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub name: String,
    pub problem: String,
    pub kind: BoundaryKind,
    /// Built-in tableau name or path to a tableau definition file.
    pub method: String,
    pub scheme: Scheme,
    /// Number of space intervals, `h = 1 / intervals`.
    pub intervals: usize,
    pub k_ladder: Vec<f64>,
    pub t_final: f64,
    pub measure: Measure,
    pub repeats: usize,
    pub engine: EngineKind,
    pub krylov: KrylovConfig,
}

impl StudyPlan {
    pub fn h(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_ladder.is_empty() {
            return Err(Error::Config(format!("plan {}: empty k ladder", self.name)));
        }
        if self.k_ladder.iter().any(|&k| !(k > 0.0)) || self.k_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config(format!("plan {}: k ladder must be positive and strictly decreasing", self.name)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("plan {}: final time must be positive", self.name)));
        }
        for &k in &self.k_ladder {
            step_count(self.t_final, k)?;
        }
        if self.repeats == 0 {
            return Err(Error::Config(format!("plan {}: repeats must be at least 1", self.name)));
        }
        if let Scheme::Corrected { p, .. } = self.scheme {
            if !(1..=3).contains(&p) {
                return Err(Error::Config(format!("plan {}: correction order {p} outside 1..=3", self.name)));
            }
        }
        self.krylov.validate()?;
        let tab = self.tableau()?;
        if let Scheme::Corrected { p, .. } = self.scheme {
            if p > tab.nonstiff_order {
                return Err(Error::Config(format!("plan {}: correction order {p} exceeds method order {}", self.name, tab.nonstiff_order)));
            }
        }
        self.build_problem()?;
        Ok(())
    }

    pub fn tableau(&self) -> Result<MethodTableau> {
        if let Some(t) = methods::builtin(&self.method) {
            return Ok(t);
        }
        let text = std::fs::read_to_string(&self.method)
            .map_err(|e| Error::Config(format!("method {}: not a built-in and not readable ({e})", self.method)))?;
        MethodTableau::parse(&text)
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>> {
        problems::builtin(&self.problem, self.kind)
            .ok_or_else(|| Error::Config(format!("no problem {} with boundary kind {}", self.problem, self.kind.name())))
    }

    fn mode(&self) -> Option<BoundaryMode> {
        match self.scheme {
            Scheme::Corrected { mode, .. } => Some(mode),
            Scheme::Standard => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub k: f64,
    /// One-step error from the exact initial state.
    pub local_error: Option<f64>,
    /// Maximum over all steps of the one-step error from the exact state.
    pub local_max: Option<f64>,
    /// `t_n` at which the maximum occurs.
    pub local_at: Option<f64>,
    /// `‖U^n - P_h u(T)‖_∞`
    pub global_error: Option<f64>,
    /// Median wall-clock time of the global run.
    pub cpu_ms: f64,
    pub cfl_ratio: f64,
    /// Global error within a factor 10 of the space floor.
    pub floor_limited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub plan: StudyPlan,
    pub rows: Vec<ReportRow>,
    /// `order_local[i]` between rows `i` and `i + 1`.
    pub order_local: Vec<f64>,
    pub order_global: Vec<f64>,
    /// `max_t ‖R_h u(t) - P_h u(t)‖_∞` over a few sample times.
    pub space_floor: f64,
}

impl ConvergenceReport {
    pub fn local_errors(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.local_error).collect()
    }

    pub fn global_errors(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.global_error).collect()
    }

    /// Global orders restricted to rows not limited by the space floor.
    pub fn global_orders_above_floor(&self) -> Vec<f64> {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| !r.floor_limited).collect();
        let (e, k): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.global_error.map(|e| (e, r.k))).unzip();
        estimate_order_ladder(&e, &k).unwrap_or_default()
    }
}

/// Orders for a halving ladder: `log2(e_i / e_{i+1})`.
pub fn estimate_order(errors: &[f64]) -> Result<Vec<f64>> {
    let ks: Vec<f64> = (0..errors.len()).map(|i| 0.5f64.powi(i as i32)).collect();
    estimate_order_ladder(errors, &ks)
}

/// Orders for a general ladder: `log(e_i / e_{i+1}) / log(k_i / k_{i+1})`.
pub fn estimate_order_ladder(errors: &[f64], ks: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = errors.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::NonPositiveError(i));
    }
    Ok(errors
        .windows(2)
        .zip(ks.windows(2))
        .map(|(e, k)| (e[0] / e[1]).ln() / (k[0] / k[1]).ln())
        .collect())
}

fn exact_of(problem: &dyn Problem) -> impl Fn(f64, [f64; 2], Partial) -> Result<f64> + '_ {
    move |t, p, d| problem.exact(t, p, d).ok_or_else(|| Error::Unavailable(format!("problem {} has no exact solution", problem.name())))
}

/// `P_h u(t)`
pub fn exact_grid(problem: &dyn Problem, disc: &SpatialDiscretization, t: f64) -> Result<Vec<f64>> {
    let ex = exact_of(problem);
    disc.nodes().iter().map(|&p| ex(t, p, Partial::VALUE)).collect()
}

/// `‖R_h u(t) - P_h u(t)‖_∞` with `R_h` the elliptic projection.
pub fn elliptic_projection_error(problem: &dyn Problem, disc: &SpatialDiscretization, t: f64) -> Result<f64> {
    let ex = exact_of(problem);
    let dims = disc.kind().space_dim();
    let lap = |p: [f64; 2], extra: Partial| -> Result<f64> {
        (0..dims).map(|a| ex(t, p, extra.plus_space(a, 2))).sum()
    };
    let au = disc.nodes().iter().map(|&p| lap(p, Partial::VALUE)).collect::<Result<Vec<_>>>()?;
    let (bu, bau): (Vec<_>, Vec<_>) = disc
        .boundary()
        .iter()
        .map(|b| {
            let extra = match b.condition {
                Condition::Value => Partial::VALUE,
                Condition::Derivative { axis } => Partial::space(axis, 1),
            };
            Ok((ex(t, b.point, extra)?, lap(b.point, extra)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let r = disc.elliptic_projection(&bu, &au, &bau)?;
    let pu = exact_grid(problem, disc, t)?;
    Ok(r.iter().zip(&pu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Error of the backward-difference `u̇` on the grid at `t` from exact
/// samples at `t, t - k, ...`.
pub fn time_differencing_error(problem: &dyn Problem, disc: &SpatialDiscretization, t: f64, k: f64, accuracy: usize) -> Result<f64> {
    let samples = (0..=accuracy).rev().map(|m| exact_grid(problem, disc, t - m as f64 * k)).collect::<Result<Vec<_>>>()?;
    let ex = exact_of(problem);
    let mut worst: f64 = 0.0;
    let mut line = vec![0.0; samples.len()];
    for (i, &p) in disc.nodes().iter().enumerate() {
        for (l, s) in line.iter_mut().zip(&samples) {
            *l = s[i];
        }
        let approx = bdf_time_derivative(&line, k, 1, accuracy)?;
        worst = worst.max((approx - ex(t, p, Partial::time(1))?).abs());
    }
    Ok(worst)
}

/// Error of the one-sided normal derivative of `P_h u(t)` at the boundary.
pub fn space_differencing_error(problem: &dyn Problem, disc: &SpatialDiscretization, t: f64, accuracy: usize) -> Result<f64> {
    let ex = exact_of(problem);
    let u = exact_grid(problem, disc, t)?;
    let g: Vec<f64> = disc.boundary().iter().map(|b| ex(t, b.point, Partial::VALUE)).collect::<Result<_>>()?;
    let d = space_boundary_derivative(disc, &u, &g, accuracy)?;
    let mut worst: f64 = 0.0;
    for (b, v) in disc.boundary().iter().zip(d) {
        let (Some(v), Some(step)) = (v, b.inward) else { continue };
        let axis = if step[0] != 0 { 0 } else { 1 };
        worst = worst.max((v - ex(t, b.point, Partial::space(axis, 1))?).abs());
    }
    Ok(worst)
}

/// Runs `f` with the φ engine the plan asks for.
pub fn with_engine<R>(
    kind: EngineKind,
    krylov: KrylovConfig,
    disc: &SpatialDiscretization,
    f: impl FnOnce(&dyn PhiEngine) -> R,
) -> R {
    match kind {
        EngineKind::Spectral => {
            let basis = disc.spectral_basis();
            f(&SpectralEngine::new(&basis))
        }
        EngineKind::Krylov => f(&KrylovEngine::new(disc, krylov)),
        EngineKind::Dense => f(&DenseEngine::new(disc.dense_a())),
    }
}

struct Context<'a> {
    plan: &'a StudyPlan,
    tableau: &'a MethodTableau,
    disc: &'a SpatialDiscretization,
    problem: &'a dyn Problem,
    engine: &'a dyn PhiEngine,
}

/// Local errors `(max over n, t_n of the max, first step)`.
fn local_error(cx: &Context, k: f64) -> Result<(f64, f64, f64)> {
    let n = step_count(cx.plan.t_final, k)?;
    let evaluator = cx.plan.mode().map(|m| BoundaryEvaluator::new(cx.disc, cx.problem, m));
    let mut worst = (0.0, 0.0, 0.0);
    for step in 0..n {
        let t = step as f64 * k;
        let u = exact_grid(cx.problem, cx.disc, t)?;
        let set = match (&evaluator, cx.plan.scheme) {
            (Some(ev), Scheme::Corrected { p, mode }) => {
                let mut hist = HistoryBuffer::new(ev.history_needed());
                if mode == BoundaryMode::Differenced {
                    let back = step.min(ev.time_accuracy());
                    for m in (1..=back).rev() {
                        hist.push(t - m as f64 * k, exact_grid(cx.problem, cx.disc, t - m as f64 * k)?)?;
                    }
                    hist.push(t, u.clone())?;
                }
                Some(ev.simplified_boundaries(p, cx.tableau, t, k, &hist)?)
            }
            _ => None,
        };
        let inp = StepInputs {
            tableau: cx.tableau,
            disc: cx.disc,
            problem: cx.problem,
            engine: cx.engine,
            u: &u,
            t,
            k,
            corrections: set.as_ref(),
        };
        let out = if set.is_some() { step_corrected(&inp) } else { step_standard(&inp) }
            .map_err(|e| Error::Step { index: step, source: Box::new(e) })?;
        let exact = exact_grid(cx.problem, cx.disc, t + k)?;
        let err = out.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if step == 0 {
            worst.2 = err;
        }
        if err > worst.0 {
            worst.0 = err;
            worst.1 = t;
        }
    }
    Ok(worst)
}

/// Global error at `T` and median wall-clock time over the plan's repeats
/// (after one warm-up run when repeating).
fn global_error(cx: &Context, k: f64) -> Result<(f64, f64)> {
    let inp = IntegrateInputs {
        tableau: cx.tableau,
        disc: cx.disc,
        problem: cx.problem,
        engine: cx.engine,
        scheme: cx.plan.scheme,
        k,
        keep_states: false,
    };
    let reps = cx.plan.repeats;
    let mut times = Vec::with_capacity(reps);
    let mut err = 0.0;
    for r in 0..reps + usize::from(reps > 1) {
        let start = Instant::now();
        let tr = integrate(&inp, cx.plan.t_final)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if reps > 1 && r == 0 {
            continue;
        }
        times.push(ms);
        let exact = exact_grid(cx.problem, cx.disc, tr.final_time)?;
        err = norm_inf(&tr.final_state.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
    }
    times.sort_by(f64::total_cmp);
    Ok((err, times[times.len() / 2]))
}

fn run_row(cx: &Context, k: f64, floor: f64) -> Result<ReportRow> {
    let wrap = |e: Error| Error::Run { k, h: cx.plan.h(), source: Box::new(e) };
    let local = if cx.plan.measure.local() { Some(local_error(cx, k).map_err(wrap)?) } else { None };
    let (global, cpu) = if cx.plan.measure.global() {
        let (e, ms) = global_error(cx, k).map_err(wrap)?;
        (Some(e), ms)
    } else {
        (None, 0.0)
    };
    let model = ApproximationErrorModel::nominal(cx.plan.kind, 2, 4, k, cx.plan.h());
    Ok(ReportRow {
        k,
        local_error: local.map(|l| l.2),
        local_max: local.map(|l| l.0),
        local_at: local.map(|l| l.1),
        global_error: global,
        cpu_ms: cpu,
        cfl_ratio: model.cfl_ratio(k, cx.plan.h()),
        floor_limited: global.is_some_and(|e| e < 10.0 * floor),
    })
}

/// Runs every time step of the plan, `threads` rows at a time.
pub fn run_study_parallel(plan: &StudyPlan, threads: usize) -> Result<ConvergenceReport> {
    plan.validate()?;
    let tableau = plan.tableau()?;
    let problem = plan.build_problem()?;
    let disc = SpatialDiscretization::build(plan.kind, plan.intervals)?;
    let floor = (0..=4)
        .map(|i| elliptic_projection_error(problem.as_ref(), &disc, plan.t_final * i as f64 / 4.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let rows = with_engine(plan.engine, plan.krylov, &disc, |engine| {
        let cx = Context { plan, tableau: &tableau, disc: &disc, problem: problem.as_ref(), engine };
        let threads = threads.clamp(1, plan.k_ladder.len());
        if threads == 1 {
            return plan.k_ladder.iter().map(|&k| run_row(&cx, k, floor)).collect::<Result<Vec<_>>>();
        }
        let mut out: Vec<Option<Result<ReportRow>>> = (0..plan.k_ladder.len()).map(|_| None).collect();
        for chunk in plan.k_ladder.iter().enumerate().collect::<Vec<_>>().chunks(threads) {
            let results: Vec<(usize, Result<ReportRow>)> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|&(i, &k)| (i, s.spawn({ let cx = &cx; move || run_row(cx, k, floor) }))).collect();
                handles.into_iter().map(|(i, h)| (i, h.join().expect("study thread panicked"))).collect()
            });
            for (i, r) in results {
                out[i] = Some(r);
            }
        }
        out.into_iter().map(|r| r.unwrap()).collect()
    })?;
    let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let order_local = match rows.iter().map(|r| r.local_error).collect::<Option<Vec<_>>>() {
        Some(e) => estimate_order_ladder(&e, &ks)?,
        None => Vec::new(),
    };
    let order_global = match rows.iter().map(|r| r.global_error).collect::<Option<Vec<_>>>() {
        Some(e) => estimate_order_ladder(&e, &ks)?,
        None => Vec::new(),
    };
    Ok(ConvergenceReport { plan: plan.clone(), rows, order_local, order_global, space_floor: floor })
}

pub fn run_study(plan: &StudyPlan) -> Result<ConvergenceReport> {
    run_study_parallel(plan, 1)
}

/// One point of an error-versus-cost curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPoint {
    pub k: f64,
    pub error: f64,
    pub cpu_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    pub label: String,
    pub points: Vec<EfficiencyPoint>,
}

impl EfficiencyCurve {
    /// Cost at the given error by log-log interpolation between, or
    /// extrapolation beyond, the measured points.
    pub fn cost_at(&self, error: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.error.ln(), p.cpu_ms.max(1e-6).ln())).collect();
        if pts.len() < 2 {
            return None;
        }
        let x = error.ln();
        // segment bracketing x, else the end segment nearest to it
        let idx = pts
            .windows(2)
            .position(|w| (w[0].0 - x) * (w[1].0 - x) <= 0.0)
            .unwrap_or(if x > pts[0].0 { 0 } else { pts.len() - 2 });
        let (a, b) = (pts[idx], pts[idx + 1]);
        if a.0 == b.0 {
            return Some(a.1.exp());
        }
        Some((a.1 + (x - a.0) * (b.1 - a.1) / (b.0 - a.0)).exp())
    }
}

/// Global error against run time for each plan.
pub fn efficiency_sweep(plans: &[StudyPlan]) -> Result<Vec<EfficiencyCurve>> {
    plans
        .iter()
        .map(|plan| {
            let mut p = plan.clone();
            p.measure = Measure::Global;
            let report = run_study(&p)?;
            Ok(EfficiencyCurve {
                label: plan.name.clone(),
                points: report
                    .rows
                    .iter()
                    .map(|r| EfficiencyPoint { k: r.k, error: r.global_error.unwrap_or(f64::NAN), cpu_ms: r.cpu_ms })
                    .collect(),
            })
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "problem,method,scheme,p,mode,h,k,local_error,global_error,order_local,order_global,cpu_ms,cfl_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// CSV rows (no header) for a report. The order in a row compares it with
/// the previous, larger step.
pub fn report_csv_rows(r: &ConvergenceReport) -> String {
    let plan = &r.plan;
    let (p, mode) = match plan.scheme {
        Scheme::Standard => (String::new(), String::new()),
        Scheme::Corrected { p, mode } => (p.to_string(), mode.name().to_string()),
    };
    let mut out = String::new();
    for (i, row) in r.rows.iter().enumerate() {
        let order = |o: &Vec<f64>| if i == 0 { None } else { o.get(i - 1).copied() };
        let fmt_order = |o: Option<f64>| o.map(|x| format!("{x:.3}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{}/{},{},{},{},{},{:.6e},{:.6e},{},{},{},{},{:.3},{:.6e}",
            plan.problem,
            plan.kind.name(),
            plan.method,
            plan.scheme.name(),
            p,
            mode,
            plan.h(),
            row.k,
            opt(row.local_error),
            opt(row.global_error),
            fmt_order(order(&r.order_local)),
            fmt_order(order(&r.order_global)),
            row.cpu_ms,
            row.cfl_ratio,
        );
    }
    out
}

pub fn reports_csv(reports: &[ConvergenceReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s.push_str(&report_csv_rows(r));
    }
    s
}

/// A standalone Python/matplotlib script plotting error against CPU time and
/// against `k` from the given CSV file.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
curves = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        label = "{{}} {{}} {{}} p={{}} {{}}".format(row["problem"], row["method"], row["scheme"], row["p"], row["mode"])
        err = row["global_error"] or row["local_error"]
        if err:
            curves[label].append((float(row["k"]), float(err), float(row["cpu_ms"] or 0)))

fig, (ax_cpu, ax_k) = plt.subplots(1, 2, figsize=(11, 4.5))
for label, pts in sorted(curves.items()):
    pts.sort()
    ks, errs, cpu = zip(*pts)
    if any(c > 0 for c in cpu):
        ax_cpu.loglog(cpu, errs, "o-", label=label)
    ax_k.loglog(ks, errs, "o-", label=label)
ax_cpu.set_xlabel("CPU time [ms]")
ax_cpu.set_ylabel("error (max norm)")
ax_k.set_xlabel("k")
ax_k.set_ylabel("error (max norm)")
ax_k.legend(fontsize="small")
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

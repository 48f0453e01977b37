//! One step and full runs of the standard and the boundary-corrected
//! explicit exponential Runge–Kutta schemes.

use std::time::Instant;

use crate::boundary::{BoundaryCorrectionSet, BoundaryEvaluator, BoundaryMode, HistoryBuffer, Source};
use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::methods::MethodTableau;
use crate::phi::{PhiCombination, PhiEngine};
use crate::problems::{Partial, Problem, SemidiscreteRhs};
use crate::spatial::SpatialDiscretization;

/// Which scheme to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Standard,
    /// Boundary-corrected scheme of correction order `p`.
    Corrected { p: usize, mode: BoundaryMode },
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::Corrected { .. } => "corrected",
        }
    }

    pub fn order(self) -> Option<usize> {
        match self {
            Scheme::Standard => None,
            Scheme::Corrected { p, .. } => Some(p),
        }
    }
}

pub struct StepInputs<'a> {
    pub tableau: &'a MethodTableau,
    pub disc: &'a SpatialDiscretization,
    pub problem: &'a dyn Problem,
    pub engine: &'a dyn PhiEngine,
    pub u: &'a [f64],
    pub t: f64,
    pub k: f64,
    /// Present iff the corrected scheme is requested.
    pub corrections: Option<&'a BoundaryCorrectionSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: Vec<f64>,
    /// `K_{n,i}`
    pub stages: Vec<Vec<f64>>,
    /// `F_{n,i}`
    pub stage_f: Vec<Vec<f64>>,
    /// Fused φ-combinations handed to the engine (zero scales excluded).
    pub phi_evaluations: usize,
    pub f_evaluations: usize,
}

/// φ-combinations keyed by scale, plus boundary vectors to be mapped through
/// `C_h` and `D_h` once per (scale, index).
struct Fused<'a> {
    disc: &'a SpatialDiscretization,
    combos: Vec<PhiCombination>,
    // (tau, index, C-weights, D-weights)
    boundary: Vec<(f64, usize, Vec<f64>, Vec<f64>)>,
}

impl<'a> Fused<'a> {
    fn new(disc: &'a SpatialDiscretization) -> Self {
        Self { disc, combos: Vec::new(), boundary: Vec::new() }
    }

    fn combo(&mut self, tau: f64) -> &mut PhiCombination {
        let dim = self.disc.dim();
        let pos = match self.combos.iter().position(|c| c.tau() == tau) {
            Some(p) => p,
            None => {
                self.combos.push(PhiCombination::new(tau, dim));
                self.combos.len() - 1
            }
        };
        &mut self.combos[pos]
    }

    fn add(&mut self, tau: f64, index: usize, coeff: f64, w: &[f64]) {
        self.combo(tau).add(index, coeff, w);
    }

    fn slot(&mut self, tau: f64, index: usize) -> &mut (f64, usize, Vec<f64>, Vec<f64>) {
        let nb = self.disc.boundary_len();
        let pos = match self.boundary.iter().position(|b| b.0 == tau && b.1 == index) {
            Some(p) => p,
            None => {
                self.boundary.push((tau, index, vec![0.0; nb], vec![0.0; nb]));
                self.boundary.len() - 1
            }
        };
        &mut self.boundary[pos]
    }

    /// `coeff φ_index(τA) C_h b`
    fn add_c(&mut self, tau: f64, index: usize, coeff: f64, b: &[f64]) {
        if coeff != 0.0 {
            axpy(coeff, b, &mut self.slot(tau, index).2);
        }
    }

    /// `-coeff φ_index(τA) D_h b`
    fn sub_d(&mut self, tau: f64, index: usize, coeff: f64, b: &[f64]) {
        if coeff != 0.0 && !self.disc.d_is_zero() {
            axpy(coeff, b, &mut self.slot(tau, index).3);
        }
    }

    fn evaluate(mut self, engine: &dyn PhiEngine) -> Result<(Vec<f64>, usize)> {
        for (tau, index, bc, bd) in std::mem::take(&mut self.boundary) {
            let mut w = self.disc.apply_c(&bc);
            if bd.iter().any(|&x| x != 0.0) {
                axpy(-1.0, &self.disc.apply_d(&bd), &mut w);
            }
            self.add(tau, index, 1.0, &w);
        }
        let mut out = vec![0.0; self.disc.dim()];
        let mut calls = 0;
        for c in &self.combos {
            if c.is_empty() {
                continue;
            }
            let v = if c.tau() == 0.0 {
                c.at_zero()
            } else {
                calls += 1;
                engine.apply(c)?
            };
            axpy(1.0, &v, &mut out);
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("step result"));
        }
        Ok((out, calls))
    }
}

fn check_inputs(inp: &StepInputs) -> Result<()> {
    let n = inp.disc.dim();
    if inp.u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: inp.u.len() });
    }
    if inp.engine.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: inp.engine.dim() });
    }
    if !(inp.k > 0.0) {
        return Err(Error::Config(format!("time step {} must be positive", inp.k)));
    }
    Ok(())
}

/// `F(t, K) = φ(K) + P_h h(t)`, the part of the nonstiff term the corrected
/// scheme integrates in the interior.
fn interior_f(disc: &SpatialDiscretization, problem: &dyn Problem, t: f64, u: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(disc.nodes())
        .map(|(&v, &p)| problem.nonlinearity(v, 0) + problem.forcing(t, p, Partial::VALUE))
        .collect()
}

/// Standard scheme: stages and update with `F` the full semidiscrete
/// nonstiff part, boundary data included.
pub fn step_standard(inp: &StepInputs) -> Result<StepOutput> {
    if inp.corrections.is_some() {
        return Err(Error::Config("the standard scheme takes no boundary corrections".into()));
    }
    check_inputs(inp)?;
    let rhs = SemidiscreteRhs { disc: inp.disc, problem: inp.problem };
    run_stages(inp, |t, u| rhs.nonstiff(t, u), |_, _, _| {}, |_, _| {})
}

/// Boundary-corrected scheme with the correction ladders of order `p`.
pub fn step_corrected(inp: &StepInputs) -> Result<StepOutput> {
    check_inputs(inp)?;
    let set = inp.corrections.ok_or_else(|| Error::MissingCorrection("no correction set supplied".into()))?;
    set.check(inp.tableau, inp.disc.boundary_len())?;
    let p = set.p;
    let (tab, k) = (inp.tableau, inp.k);
    let stage_terms = |i: usize, fused: &mut Fused, _: &[Vec<f64>]| {
        let tau = tab.c[i] * k;
        // Σ_{l<p-1} τ^{l+1} φ_{l+1} [C ∂A^l u - D ∂A^{l+1} u] + τ^p φ_p C ∂A^{p-1} u
        for l in 0..p - 1 {
            let s = tau.powi(l as i32 + 1);
            fused.add_c(tau, l + 1, s, &set.stage_u[l].values);
            fused.sub_d(tau, l + 1, s, &set.stage_u[l + 1].values);
        }
        fused.add_c(tau, p, tau.powi(p as i32), &set.stage_u[p - 1].values);
        if p == 1 {
            return;
        }
        for e in tab.lambda_row(i) {
            let taur = tab.c[e.r] * k;
            let row = &set.stage_f[e.j];
            let w = k * e.value;
            for ll in 0..p.saturating_sub(2) {
                let s = w * taur.powi(ll as i32 + 1);
                fused.add_c(taur, e.l + ll + 1, s, &row[ll].values);
                fused.sub_d(taur, e.l + ll + 1, s, &row[ll + 1].values);
            }
            fused.add_c(taur, e.l + p - 1, w * taur.powi(p as i32 - 1), &row[p - 2].values);
        }
    };
    let update_terms = |fused: &mut Fused, _: &[Vec<f64>]| {
        for l in 0..p {
            let s = k.powi(l as i32 + 1);
            fused.add_c(k, l + 1, s, &set.update_u[l].values);
            fused.sub_d(k, l + 1, s, &set.update_u[l + 1].values);
        }
        fused.add_c(k, p + 1, k.powi(p as i32 + 1), &set.update_u[p].values);
        for e in &tab.mu {
            let row = &set.update_f[e.i];
            let w = k * e.value;
            for ll in 0..p - 1 {
                let s = w * k.powi(ll as i32 + 1);
                fused.add_c(k, e.l + ll + 1, s, &row[ll].values);
                fused.sub_d(k, e.l + ll + 1, s, &row[ll + 1].values);
            }
            fused.add_c(k, e.l + p, w * k.powi(p as i32), &row[p - 1].values);
        }
    };
    run_stages(inp, |t, u| interior_f(inp.disc, inp.problem, t, u), stage_terms, update_terms)
}

fn run_stages(
    inp: &StepInputs,
    f: impl Fn(f64, &[f64]) -> Vec<f64>,
    stage_extra: impl Fn(usize, &mut Fused, &[Vec<f64>]),
    update_extra: impl Fn(&mut Fused, &[Vec<f64>]),
) -> Result<StepOutput> {
    let (tab, k, t) = (inp.tableau, inp.k, inp.t);
    let s = tab.stages();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut fs: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut calls = 0;
    for i in 0..s {
        let ki = if i == 0 && tab.c[0] == 0.0 {
            inp.u.to_vec()
        } else {
            let tau = tab.c[i] * k;
            let mut fused = Fused::new(inp.disc);
            fused.add(tau, 0, 1.0, inp.u);
            for e in tab.lambda_row(i) {
                fused.add(tab.c[e.r] * k, e.l, k * e.value, &fs[e.j]);
            }
            stage_extra(i, &mut fused, &fs);
            let (v, c) = fused.evaluate(inp.engine)?;
            calls += c;
            v
        };
        fs.push(f(t + tab.c[i] * k, &ki));
        stages.push(ki);
    }
    let mut fused = Fused::new(inp.disc);
    fused.add(k, 0, 1.0, inp.u);
    for e in &tab.mu {
        fused.add(k, e.l, k * e.value, &fs[e.i]);
    }
    update_extra(&mut fused, &fs);
    let (u, c) = fused.evaluate(inp.engine)?;
    calls += c;
    Ok(StepOutput { u, stages, stage_f: fs, phi_evaluations: calls, f_evaluations: s })
}

/// A full run from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub k: f64,
    pub steps: usize,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    /// All states `U^0..U^n` when requested.
    pub states: Vec<Vec<f64>>,
    /// Least reliable boundary source per step (corrected scheme only).
    pub provenance: Vec<Source>,
    pub phi_evaluations: usize,
    pub elapsed_ms: f64,
}

pub struct IntegrateInputs<'a> {
    pub tableau: &'a MethodTableau,
    pub disc: &'a SpatialDiscretization,
    pub problem: &'a dyn Problem,
    pub engine: &'a dyn PhiEngine,
    pub scheme: Scheme,
    pub k: f64,
    pub keep_states: bool,
}

/// Number of steps of size `k` reaching `t_final`.
pub fn step_count(t_final: f64, k: f64) -> Result<usize> {
    let n = (t_final / k).round();
    if !(k > 0.0) || n < 0.0 || (n * k - t_final).abs() > 1e-9 * t_final.abs().max(k) {
        return Err(Error::Config(format!("final time {t_final} is not a multiple of the step {k}")));
    }
    Ok(n as usize)
}

/// Integrates from `P_h u_0` at `t = 0` to `t_final`.
pub fn integrate(inp: &IntegrateInputs, t_final: f64) -> Result<Trajectory> {
    let n = step_count(t_final, inp.k)?;
    let start = Instant::now();
    let mut u: Vec<f64> = inp.disc.nodes().iter().map(|&p| inp.problem.initial(p)).collect();
    let mut states = if inp.keep_states { vec![u.clone()] } else { Vec::new() };
    let mut provenance = Vec::new();
    let mut calls = 0;

    let corrected = match inp.scheme {
        Scheme::Standard => None,
        Scheme::Corrected { p, mode } => {
            let ev = BoundaryEvaluator::new(inp.disc, inp.problem, mode);
            let cap = ev.history_needed();
            Some((p, ev, HistoryBuffer::new(cap)))
        }
    };
    let mut corrected = corrected;

    for step in 0..n {
        let t = step as f64 * inp.k;
        let result = (|| {
            let set = match corrected.as_mut() {
                Some((p, ev, hist)) => {
                    if ev.mode() == BoundaryMode::Differenced {
                        hist.push(t, u.clone())?;
                    }
                    Some(ev.simplified_boundaries(*p, inp.tableau, t, inp.k, hist)?)
                }
                None => None,
            };
            let si = StepInputs {
                tableau: inp.tableau,
                disc: inp.disc,
                problem: inp.problem,
                engine: inp.engine,
                u: &u,
                t,
                k: inp.k,
                corrections: set.as_ref(),
            };
            let out = if set.is_some() { step_corrected(&si)? } else { step_standard(&si)? };
            Ok::<_, Error>((out, set.map(|s| s.worst_source())))
        })();
        let (out, src) = result.map_err(|e| Error::Step { index: step, source: Box::new(e) })?;
        calls += out.phi_evaluations;
        provenance.extend(src);
        u = out.u;
        if inp.keep_states {
            states.push(u.clone());
        }
    }
    Ok(Trajectory {
        k: inp.k,
        steps: n,
        final_time: n as f64 * inp.k,
        final_state: u,
        states,
        provenance,
        phi_evaluations: calls,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

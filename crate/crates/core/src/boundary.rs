//! Boundary values `∂A^l u(t_n)` and `∂A^l F̄_{n,i}` feeding the corrected
//! scheme, in their simplified (Taylor-expanded) form.
//!
//! Everything is built from a per-node *jet*: the solution and its first
//! time derivatives at the node, plus gradients of `u`, `u_t`, `u_tt`. The
//! jet entries come from the exact solution, from the boundary data, or from
//! numerical differentiation, and every derived value carries the least
//! reliable source among the entries it used.

use std::cell::Cell;
use std::collections::VecDeque;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::methods::MethodTableau;
use crate::phi::inv_factorial;
use crate::problems::{boundary_vector, Partial, Problem};
use crate::spatial::{BoundaryKind, BoundaryNode, Condition, SpatialDiscretization};

/// Where boundary values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    /// The exact solution.
    Exact,
    /// Boundary data and identities of the equation only.
    Identity,
    /// Boundary data where possible, numerical differentiation otherwise.
    Differenced,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Exact => "exact",
            BoundaryMode::Identity => "identity",
            BoundaryMode::Differenced => "differenced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(BoundaryMode::Exact),
            "identity" => Some(BoundaryMode::Identity),
            "differenced" => Some(BoundaryMode::Differenced),
            _ => None,
        }
    }
}

/// Provenance of a value, ordered from most to least reliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Exact,
    Identity,
    Differenced,
}

/// One boundary vector (one entry per boundary node) with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub values: Vec<f64>,
    pub source: Source,
    /// Set when the entry was merged with another one because the tableau
    /// makes their coefficients coincide.
    pub folded: bool,
}

impl BoundaryValues {
    pub fn zeros(len: usize, source: Source) -> Self {
        Self { values: vec![0.0; len], source, folded: false }
    }
}

/// Boundary arguments of the corrected scheme for correction order `p`.
///
/// * `stage_u[l]`, `l < p`: `∂A^l u(t_n)` in the stages.
/// * `stage_f[j][l]`, `l < p - 1`: `∂A^l F̄_{n,j}` in the stages.
/// * `update_u[l]`, `l ≤ p`: `∂A^l u(t_n)` in the update.
/// * `update_f[i][l]`, `l < p`: `∂A^l F̄_{n,i}` in the update.
///
/// Rows for stages whose coefficients never enter are left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCorrectionSet {
    pub p: usize,
    pub stage_u: Vec<BoundaryValues>,
    pub stage_f: Vec<Vec<BoundaryValues>>,
    pub update_u: Vec<BoundaryValues>,
    pub update_f: Vec<Vec<BoundaryValues>>,
}

impl BoundaryCorrectionSet {
    /// All entries zero, every row populated.
    pub fn zeros(p: usize, stages: usize, boundary_len: usize) -> Self {
        let z = || BoundaryValues::zeros(boundary_len, Source::Exact);
        Self {
            p,
            stage_u: (0..p).map(|_| z()).collect(),
            stage_f: (0..stages).map(|_| (0..p.saturating_sub(1)).map(|_| z()).collect()).collect(),
            update_u: (0..=p).map(|_| z()).collect(),
            update_f: (0..stages).map(|_| (0..p).map(|_| z()).collect()).collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &BoundaryValues> {
        self.stage_u
            .iter()
            .chain(self.stage_f.iter().flatten())
            .chain(self.update_u.iter())
            .chain(self.update_f.iter().flatten())
    }

    /// Least reliable source among the entries.
    pub fn worst_source(&self) -> Source {
        self.entries().map(|e| e.source).max().unwrap_or(Source::Exact)
    }

    /// Checks that every entry the scheme reads for `tableau` is present,
    /// sized and finite.
    pub fn check(&self, tableau: &MethodTableau, boundary_len: usize) -> Result<()> {
        let p = self.p;
        let missing = |what: String| Err(Error::MissingCorrection(what));
        if self.stage_u.len() < p {
            return missing(format!("stage ∂A^l u needs {p} entries, has {}", self.stage_u.len()));
        }
        if self.update_u.len() < p + 1 {
            return missing(format!("update ∂A^l u needs {} entries, has {}", p + 1, self.update_u.len()));
        }
        if p >= 2 {
            for e in &tableau.lambda {
                if self.stage_f.get(e.j).map_or(0, |r| r.len()) < p - 1 {
                    return missing(format!("stage ∂A^l F̄ for stage {}", e.j + 1));
                }
            }
        }
        for e in &tableau.mu {
            if self.update_f.get(e.i).map_or(0, |r| r.len()) < p {
                return missing(format!("update ∂A^l F̄ for stage {}", e.i + 1));
            }
        }
        for v in self.entries() {
            if v.values.len() != boundary_len {
                return Err(Error::DimensionMismatch { expected: boundary_len, found: v.values.len() });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("boundary correction"));
            }
        }
        Ok(())
    }
}

/// The last few grid solutions, at uniformly spaced times.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    capacity: usize,
    entries: VecDeque<(f64, Vec<f64>)>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    /// Appends the solution at time `t`, dropping the oldest beyond capacity.
    pub fn push(&mut self, t: f64, u: Vec<f64>) -> Result<()> {
        if let Some(&(last, _)) = self.entries.back() {
            if !(t > last) {
                return Err(Error::Config(format!("history times must increase: {t} after {last}")));
            }
            if self.entries.len() >= 2 {
                let prev = self.entries[self.entries.len() - 2].0;
                let (k_old, k_new) = (last - prev, t - last);
                if (k_new - k_old).abs() > 1e-9 * k_old.max(k_new) {
                    return Err(Error::Config(format!("non-uniform history spacing {k_old} vs {k_new}")));
                }
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((t, u));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn latest(&self) -> Option<(f64, &[f64])> {
        self.entries.back().map(|(t, u)| (*t, u.as_slice()))
    }

    /// Samples from newest to oldest.
    pub fn newest_first(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.entries.iter().rev().map(|(t, u)| (*t, u.as_slice()))
    }
}

/// Backward-difference weights, newest sample first.
fn bdf_weights(derivative_order: usize, accuracy: usize) -> Option<&'static [f64]> {
    const D1: [&[f64]; 3] = [&[1.0, -1.0], &[1.5, -2.0, 0.5], &[11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0]];
    const D2: [&[f64]; 3] = [
        &[1.0, -2.0, 1.0],
        &[2.0, -5.0, 4.0, -1.0],
        &[35.0 / 12.0, -26.0 / 3.0, 19.0 / 2.0, -14.0 / 3.0, 11.0 / 12.0],
    ];
    match (derivative_order, accuracy) {
        (1, a @ 1..=3) => Some(D1[a - 1]),
        (2, a @ 1..=3) => Some(D2[a - 1]),
        _ => None,
    }
}

/// One-sided backward difference for the first or second time derivative at
/// the newest sample. `samples` are ordered oldest to newest with spacing `k`.
pub fn bdf_time_derivative(samples: &[f64], k: f64, derivative_order: usize, accuracy: usize) -> Result<f64> {
    let w = bdf_weights(derivative_order, accuracy)
        .ok_or_else(|| Error::Config(format!("no backward formula for derivative {derivative_order}, accuracy {accuracy}")))?;
    if samples.len() < w.len() {
        return Err(Error::InsufficientHistory { needed: w.len(), available: samples.len() });
    }
    let s: f64 = w.iter().zip(samples.iter().rev()).map(|(a, v)| a * v).sum();
    Ok(s / k.powi(derivative_order as i32))
}

/// Weights of the one-sided first derivative at `v_0` from `v_0, v_1, ...`
/// spaced by 1 in the direction of increasing index.
fn one_sided_weights(accuracy: usize) -> Option<&'static [f64]> {
    const W: [&[f64]; 3] = [
        &[-1.5, 2.0, -0.5],
        &[-11.0 / 6.0, 3.0, -1.5, 1.0 / 3.0],
        &[-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
    ];
    (2..=4).contains(&accuracy).then(|| W[accuracy - 2])
}

/// Normal derivative at each boundary node where a value is prescribed,
/// from the boundary value and the grid values along the inward lattice
/// line. The result is `∂_a` along the axis of the inward direction; it is
/// `None` at corners and at nodes where a derivative is prescribed.
pub fn space_boundary_derivative(
    d: &SpatialDiscretization,
    grid: &[f64],
    boundary: &[f64],
    accuracy: usize,
) -> Result<Vec<Option<f64>>> {
    let w = one_sided_weights(accuracy)
        .ok_or_else(|| Error::Config(format!("no one-sided space formula of accuracy {accuracy}")))?;
    if grid.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: grid.len() });
    }
    d.boundary()
        .iter()
        .zip(boundary)
        .map(|(b, &v0)| {
            let Some(step) = b.inward else { return Ok(None) };
            if b.condition != Condition::Value {
                return Ok(None);
            }
            let axis = if step[0] != 0 { 0 } else { 1 };
            let mut s = w[0] * v0;
            for (m, wm) in w.iter().enumerate().skip(1) {
                let li = b.lattice[0] as isize + m as isize * step[0];
                let lj = b.lattice[1] as isize + m as isize * step[1];
                let idx = (li >= 0 && lj >= 0).then(|| d.unknown_index([li as usize, lj as usize])).flatten().ok_or_else(|| {
                    Error::InvalidGrid(format!("{} interior nodes needed for a one-sided formula", w.len() - 1))
                })?;
                s += wm * grid[idx];
            }
            Ok(Some(s * step[axis] as f64 / d.h()))
        })
        .collect()
}

/// Nominal sizes of the numerical-differentiation errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationErrorModel {
    /// First time derivative.
    pub mu_k1: f64,
    /// Second time derivative.
    pub mu_k2: f64,
    /// Space derivative.
    pub nu_h: f64,
    /// Order of the space derivative the boundary values require.
    pub gamma: u32,
}

impl ApproximationErrorModel {
    pub fn nominal(kind: BoundaryKind, time_accuracy: usize, space_accuracy: usize, k: f64, h: f64) -> Self {
        let gamma = match kind {
            BoundaryKind::DirichletLeftNeumannRight => 0,
            _ => 1,
        };
        Self {
            mu_k1: k.powi(time_accuracy as i32),
            mu_k2: k.powi(time_accuracy as i32 - 1),
            nu_h: h.powi(space_accuracy as i32),
            gamma,
        }
    }

    /// `k / h^γ`.
    pub fn cfl_ratio(&self, k: f64, h: f64) -> f64 {
        k / h.powi(self.gamma as i32)
    }
}

/// Boundary quantities at the solution itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// `∂A^l u`
    APowU(usize),
    /// `∂A^l u̇`
    APowUDot(usize),
    /// `∂A^l f(t, u(t))`
    APowF(usize),
}

impl Quantity {
    pub const U: Quantity = Quantity::APowU(0);
    pub const AU: Quantity = Quantity::APowU(1);
    pub const A2U: Quantity = Quantity::APowU(2);
    pub const A3U: Quantity = Quantity::APowU(3);
    pub const UDOT: Quantity = Quantity::APowUDot(0);
    pub const AUDOT: Quantity = Quantity::APowUDot(1);
    pub const A2UDOT: Quantity = Quantity::APowUDot(2);
    pub const F: Quantity = Quantity::APowF(0);
    pub const AF: Quantity = Quantity::APowF(1);
    pub const A2F: Quantity = Quantity::APowF(2);
}

const JET_FIELDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    /// `∂_t^n u`, `n ≤ 3`
    Time(usize),
    /// `∂_axis ∂_t^n u`, `n ≤ 2`
    Grad(usize, usize),
}

impl Field {
    fn index(self) -> usize {
        match self {
            Field::Time(n) => n,
            Field::Grad(axis, n) => 4 + 3 * axis + n,
        }
    }
}

/// Jet of the solution at one boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeJet {
    fields: [Option<(f64, Source)>; JET_FIELDS],
}

impl NodeJet {
    fn set(&mut self, f: Field, v: f64, s: Source) {
        self.fields[f.index()] = Some((v, s));
    }

    fn get(&self, f: Field) -> Option<(f64, Source)> {
        self.fields[f.index()]
    }

    /// `∂_t^n u`, if known.
    pub fn time_derivative(&self, n: usize) -> Option<f64> {
        self.get(Field::Time(n)).map(|(v, _)| v)
    }

    /// `∂_axis ∂_t^n u`, if known.
    pub fn gradient(&self, axis: usize, n: usize) -> Option<f64> {
        self.get(Field::Grad(axis, n)).map(|(v, _)| v)
    }
}

/// Evaluation of one boundary quantity at one node, recording the least
/// reliable jet entry it reads.
struct NodeEval<'a> {
    problem: &'a dyn Problem,
    node: &'a BoundaryNode,
    jet: &'a NodeJet,
    dims: usize,
    worst: Cell<Source>,
}

impl NodeEval<'_> {
    fn read(&self, f: Field) -> Result<f64> {
        let (v, s) = self.jet.get(f).ok_or_else(|| {
            Error::Unavailable(format!("{f:?} at boundary point ({}, {})", self.node.point[0], self.node.point[1]))
        })?;
        self.worst.set(self.worst.get().max(s));
        Ok(v)
    }

    fn phi(&self, u: f64, order: usize) -> f64 {
        self.problem.nonlinearity(u, order)
    }

    fn h(&self, t: f64, d: Partial) -> f64 {
        self.problem.forcing(t, self.node.point, d)
    }

    fn lap_h(&self, t: f64, dt: usize) -> f64 {
        (0..self.dims).map(|a| self.h(t, Partial::space(a, 2).plus_time(dt))).sum()
    }

    fn derivative_axis(&self) -> Option<usize> {
        match self.node.condition {
            Condition::Value => None,
            Condition::Derivative { axis } => Some(axis),
        }
    }

    fn unavailable(&self, what: &str) -> Error {
        Error::Unavailable(format!(
            "{what} at a node with a prescribed derivative ({}, {})",
            self.node.point[0], self.node.point[1]
        ))
    }

    /// Trace of `Δu = Au`, needed inside other quantities (value nodes only).
    fn lap_u(&self, t: f64) -> Result<f64> {
        let u = self.read(Field::Time(0))?;
        Ok(self.read(Field::Time(1))? - self.phi(u, 0) - self.h(t, Partial::VALUE))
    }

    fn lap_udot(&self, t: f64) -> Result<f64> {
        let u = self.read(Field::Time(0))?;
        let ut = self.read(Field::Time(1))?;
        Ok(self.read(Field::Time(2))? - self.h(t, Partial::time(1)) - self.phi(u, 1) * ut)
    }

    fn u(&self) -> Result<f64> {
        match self.derivative_axis() {
            None => self.read(Field::Time(0)),
            Some(a) => self.read(Field::Grad(a, 0)),
        }
    }

    fn udot(&self) -> Result<f64> {
        match self.derivative_axis() {
            None => self.read(Field::Time(1)),
            Some(a) => self.read(Field::Grad(a, 1)),
        }
    }

    fn au(&self, t: f64) -> Result<f64> {
        match self.derivative_axis() {
            None => self.lap_u(t),
            Some(a) => {
                let u = self.read(Field::Time(0))?;
                Ok(self.read(Field::Grad(a, 1))? - self.phi(u, 1) * self.read(Field::Grad(a, 0))? - self.h(t, Partial::space(a, 1)))
            }
        }
    }

    fn audot(&self, t: f64) -> Result<f64> {
        match self.derivative_axis() {
            None => self.lap_udot(t),
            Some(a) => {
                let u = self.read(Field::Time(0))?;
                let ut = self.read(Field::Time(1))?;
                let g = self.read(Field::Grad(a, 0))?;
                let gt = self.read(Field::Grad(a, 1))?;
                let gtt = self.read(Field::Grad(a, 2))?;
                Ok(gtt - self.h(t, Partial::space(a, 1).plus_time(1)) - self.phi(u, 2) * g * ut - self.phi(u, 1) * gt)
            }
        }
    }

    /// `∂f(t', u + α u̇)`
    fn f_shift(&self, t: f64, alpha: f64) -> Result<f64> {
        let w = self.read(Field::Time(0))? + alpha * self.read(Field::Time(1))?;
        match self.derivative_axis() {
            None => Ok(self.phi(w, 0) + self.h(t, Partial::VALUE)),
            Some(a) => {
                let wa = self.read(Field::Grad(a, 0))? + alpha * self.read(Field::Grad(a, 1))?;
                Ok(self.phi(w, 1) * wa + self.h(t, Partial::space(a, 1)))
            }
        }
    }

    /// `∂Af(t', u + α u̇)` with `Af(t, w) = φ'(w)Δw + φ''(w)|∇w|² + Δh(t)`,
    /// where `t_n` is the time of the jet.
    fn af_shift(&self, t_n: f64, t: f64, alpha: f64) -> Result<f64> {
        if self.derivative_axis().is_some() {
            return Err(self.unavailable("∂Af"));
        }
        let w = self.read(Field::Time(0))? + alpha * self.read(Field::Time(1))?;
        let lap_w = self.lap_u(t_n)? + if alpha != 0.0 { alpha * self.lap_udot(t_n)? } else { 0.0 };
        let mut grad2 = 0.0;
        for a in 0..self.dims {
            let g = self.read(Field::Grad(a, 0))? + if alpha != 0.0 { alpha * self.read(Field::Grad(a, 1))? } else { 0.0 };
            grad2 += g * g;
        }
        Ok(self.phi(w, 1) * lap_w + self.phi(w, 2) * grad2 + self.lap_h(t, 0))
    }

    /// `∂A²u = ∂Au̇ - ∂Af(t, u)`
    fn a2u(&self, t: f64) -> Result<f64> {
        if self.derivative_axis().is_some() {
            return Err(self.unavailable("∂A²u"));
        }
        Ok(self.lap_udot(t)? - self.af_shift(t, t, 0.0)?)
    }

    /// `∂A²u̇`, from `u_ttt = Δu_tt + φ''u_t² + φ'u_tt + h_tt`, and
    /// `Δ(φ'(u)u_t) = φ'Δu_t + φ''u_tΔu + 2φ''∇u·∇u_t + φ'''|∇u|²u_t`.
    fn a2udot(&self, t: f64) -> Result<f64> {
        if self.derivative_axis().is_some() {
            return Err(self.unavailable("∂A²u̇"));
        }
        let u = self.read(Field::Time(0))?;
        let ut = self.read(Field::Time(1))?;
        let utt = self.read(Field::Time(2))?;
        let uttt = self.read(Field::Time(3))?;
        let (p1, p2, p3) = (self.phi(u, 1), self.phi(u, 2), self.phi(u, 3));
        let lap_utt = uttt - self.h(t, Partial::time(2)) - p2 * ut * ut - p1 * utt;
        let mut grad_dot = 0.0;
        let mut grad2 = 0.0;
        for a in 0..self.dims {
            let g = self.read(Field::Grad(a, 0))?;
            grad_dot += g * self.read(Field::Grad(a, 1))?;
            grad2 += g * g;
        }
        let lap_term = p1 * self.lap_udot(t)? + p2 * ut * self.lap_u(t)? + 2.0 * p2 * grad_dot + p3 * grad2 * ut;
        Ok(lap_utt - self.lap_h(t, 1) - lap_term)
    }

    /// `∂f(t', w)` for a value `w` at the node (value nodes only).
    fn f_value(&self, t: f64, w: f64) -> Result<f64> {
        if self.derivative_axis().is_some() {
            return Err(self.unavailable("∂f at an expanded argument"));
        }
        Ok(self.phi(w, 0) + self.h(t, Partial::VALUE))
    }
}

/// `∂ Δ^l ∂_t^dt u` from the exact solution.
fn exact_laplacian_power(problem: &dyn Problem, node: &BoundaryNode, dims: usize, t: f64, l: usize, dt: usize) -> Result<f64> {
    let extra = match node.condition {
        Condition::Value => Partial::VALUE,
        Condition::Derivative { axis } => Partial::space(axis, 1),
    };
    let exact = |d: Partial| {
        problem.exact(t, node.point, d).ok_or_else(|| Error::Unavailable("problem has no exact solution".into()))
    };
    let base = extra.plus_time(dt);
    if dims == 1 {
        return exact(base.plus_space(0, 2 * l));
    }
    // Δ^l = Σ_a C(l, a) ∂_x^{2a} ∂_y^{2(l-a)}
    let mut binom = 1.0;
    let mut s = 0.0;
    for a in 0..=l {
        if a > 0 {
            binom = binom * (l - a + 1) as f64 / a as f64;
        }
        s += binom * exact(base.plus_space(0, 2 * a).plus_space(1, 2 * (l - a)))?;
    }
    Ok(s)
}

/// Builds jets and boundary values for one discretization, problem and mode.
pub struct BoundaryEvaluator<'a> {
    disc: &'a SpatialDiscretization,
    problem: &'a dyn Problem,
    mode: BoundaryMode,
    time_accuracy: usize,
    space_accuracy: usize,
    startup: OnceLock<[Vec<f64>; 3]>,
}

impl<'a> BoundaryEvaluator<'a> {
    /// Time differencing of accuracy 2 in one dimension and 3 in two, space
    /// differencing of accuracy 4.
    pub fn new(disc: &'a SpatialDiscretization, problem: &'a dyn Problem, mode: BoundaryMode) -> Self {
        let time_accuracy = if disc.kind().space_dim() == 1 { 2 } else { 3 };
        Self { disc, problem, mode, time_accuracy, space_accuracy: 4, startup: OnceLock::new() }
    }

    pub fn with_accuracy(mut self, time_accuracy: usize, space_accuracy: usize) -> Self {
        self.time_accuracy = time_accuracy;
        self.space_accuracy = space_accuracy;
        self
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn time_accuracy(&self) -> usize {
        self.time_accuracy
    }

    /// History length the differenced mode uses once past the startup.
    pub fn history_needed(&self) -> usize {
        self.time_accuracy + 1
    }

    fn dims(&self) -> usize {
        self.disc.kind().space_dim()
    }

    fn startup_jets(&self) -> &[Vec<f64>; 3] {
        self.startup.get_or_init(|| {
            let mut out = [Vec::new(), Vec::new(), Vec::new()];
            for &p in self.disc.nodes() {
                let jet = self.problem.initial_time_jet(p);
                for (o, v) in out.iter_mut().zip(&jet[1..]) {
                    o.push(*v);
                }
            }
            out
        })
    }

    /// `u̇` on the grid at the newest history time: Taylor expansion of the
    /// initial time jet while the history is short, then backward
    /// differences. The integration is assumed to start at `t = 0`.
    pub fn grid_time_derivative(&self, hist: &HistoryBuffer, k: f64) -> Result<Vec<f64>> {
        let (t, _) = hist.latest().ok_or(Error::InsufficientHistory { needed: 1, available: 0 })?;
        let acc = self.time_accuracy;
        if hist.len() > acc {
            let w = bdf_weights(1, acc).unwrap();
            let mut out = vec![0.0; self.disc.dim()];
            for (wi, (_, u)) in w.iter().zip(hist.newest_first()) {
                for (o, v) in out.iter_mut().zip(u) {
                    *o += wi * v;
                }
            }
            out.iter_mut().for_each(|x| *x /= k);
            return Ok(out);
        }
        let [ut, utt, uttt] = self.startup_jets();
        Ok((0..self.disc.dim())
            .map(|i| {
                let mut v = ut[i];
                if acc >= 2 {
                    v += t * utt[i];
                }
                if acc >= 3 {
                    v += 0.5 * t * t * uttt[i];
                }
                v
            })
            .collect())
    }

    /// Jets at every boundary node at the newest history time. `hist` must
    /// end with the current grid solution; it is read only in the
    /// differenced mode.
    pub fn jets(&self, t: f64, hist: &HistoryBuffer, k: f64) -> Result<Vec<NodeJet>> {
        let dims = self.dims();
        let mut jets = vec![NodeJet::default(); self.disc.boundary_len()];
        if self.mode == BoundaryMode::Exact {
            for (jet, b) in jets.iter_mut().zip(self.disc.boundary()) {
                let exact = |d: Partial| {
                    self.problem.exact(t, b.point, d).ok_or_else(|| Error::Unavailable("problem has no exact solution".into()))
                };
                for n in 0..4 {
                    jet.set(Field::Time(n), exact(Partial::time(n))?, Source::Exact);
                }
                for a in 0..dims {
                    for n in 0..3 {
                        jet.set(Field::Grad(a, n), exact(Partial::space(a, 1).plus_time(n))?, Source::Exact);
                    }
                }
            }
            return Ok(jets);
        }

        let mut normal_u = None;
        let mut normal_udot = None;
        let mut grid_u = None;
        let mut grid_udot = None;
        if self.mode == BoundaryMode::Differenced {
            let (th, u) = hist.latest().ok_or(Error::InsufficientHistory { needed: 1, available: 0 })?;
            if (th - t).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(Error::Config(format!("history ends at {th}, boundary values requested at {t}")));
            }
            let udot = self.grid_time_derivative(hist, k)?;
            let g = boundary_vector(self.disc, self.problem, t, 0);
            let gdot = boundary_vector(self.disc, self.problem, t, 1);
            normal_u = space_boundary_derivative(self.disc, u, &g, self.space_accuracy).ok();
            normal_udot = space_boundary_derivative(self.disc, &udot, &gdot, self.space_accuracy).ok();
            grid_u = Some(u.to_vec());
            grid_udot = Some(udot);
        }

        for (bi, (jet, b)) in jets.iter_mut().zip(self.disc.boundary()).enumerate() {
            let data = |d: Partial| self.problem.boundary_data(t, b.point, d);
            match b.condition {
                Condition::Value => {
                    for n in 0..4 {
                        jet.set(Field::Time(n), data(Partial::time(n)), Source::Identity);
                    }
                    let normal_axis = b.inward.map(|s| if s[0] != 0 { 0 } else { 1 });
                    for a in 0..dims {
                        if normal_axis != Some(a) {
                            for n in 0..3 {
                                jet.set(Field::Grad(a, n), data(Partial::space(a, 1).plus_time(n)), Source::Identity);
                            }
                            continue;
                        }
                        if let Some(v) = normal_u.as_ref().and_then(|v| v[bi]) {
                            jet.set(Field::Grad(a, 0), v, Source::Differenced);
                        }
                        if let Some(v) = normal_udot.as_ref().and_then(|v| v[bi]) {
                            jet.set(Field::Grad(a, 1), v, Source::Differenced);
                        }
                    }
                }
                Condition::Derivative { axis } => {
                    for n in 0..3 {
                        jet.set(Field::Grad(axis, n), data(Partial::space(axis, 1).plus_time(n)), Source::Identity);
                    }
                    if let Some(idx) = self.disc.unknown_index(b.lattice) {
                        if let Some(u) = &grid_u {
                            jet.set(Field::Time(0), u[idx], Source::Differenced);
                        }
                        if let Some(ud) = &grid_udot {
                            jet.set(Field::Time(1), ud[idx], Source::Differenced);
                        }
                    }
                }
            }
        }
        Ok(jets)
    }

    fn per_node(&self, jets: &[NodeJet], f: impl Fn(&NodeEval) -> Result<f64>) -> Result<BoundaryValues> {
        let mut worst = Source::Exact;
        let mut values = Vec::with_capacity(jets.len());
        for (jet, node) in jets.iter().zip(self.disc.boundary()) {
            let ev = NodeEval { problem: self.problem, node, jet, dims: self.dims(), worst: Cell::new(Source::Exact) };
            values.push(f(&ev)?);
            worst = worst.max(ev.worst.get());
        }
        if self.mode == BoundaryMode::Exact {
            worst = Source::Exact;
        }
        Ok(BoundaryValues { values, source: worst, folded: false })
    }

    /// A boundary quantity at the solution, at the jets' time `t`.
    pub fn quantity(&self, q: Quantity, t: f64, jets: &[NodeJet]) -> Result<BoundaryValues> {
        if self.mode == BoundaryMode::Exact {
            let dims = self.dims();
            let values = self
                .disc
                .boundary()
                .iter()
                .map(|b| match q {
                    Quantity::APowU(l) => exact_laplacian_power(self.problem, b, dims, t, l, 0),
                    Quantity::APowUDot(l) => exact_laplacian_power(self.problem, b, dims, t, l, 1),
                    // f(t, u) = u̇ - Au
                    Quantity::APowF(l) => Ok(exact_laplacian_power(self.problem, b, dims, t, l, 1)?
                        - exact_laplacian_power(self.problem, b, dims, t, l + 1, 0)?),
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(BoundaryValues { values, source: Source::Exact, folded: false });
        }
        match q {
            Quantity::APowU(0) => self.per_node(jets, |e| e.u()),
            Quantity::APowU(1) => self.per_node(jets, |e| e.au(t)),
            Quantity::APowU(2) => self.per_node(jets, |e| e.a2u(t)),
            Quantity::APowUDot(0) => self.per_node(jets, |e| e.udot()),
            Quantity::APowUDot(1) => self.per_node(jets, |e| e.audot(t)),
            Quantity::APowUDot(2) => self.per_node(jets, |e| e.a2udot(t)),
            Quantity::APowF(0) => self.per_node(jets, |e| e.f_shift(t, 0.0)),
            Quantity::APowF(1) => self.per_node(jets, |e| e.af_shift(t, t, 0.0)),
            _ => Err(Error::Unavailable(format!("{q:?} is only available from an exact solution"))),
        }
    }

    /// The simplified boundary arguments of the corrected scheme of order
    /// `p ∈ {1, 2, 3}` at `(t_n, k)`. `hist` must end with the solution at
    /// `t_n` (only read in the differenced mode).
    ///
    /// When the tableau makes the coefficients of the highest `∂A^l u` term
    /// and of the highest `∂A^l F̄` terms coincide (and every such `F̄` term is
    /// simplified to the same value), the pair is merged through
    /// `A^l u + A^{l-1} f(t_n, u(t_n)) = A^{l-1} u̇`; the merged entry is
    /// tagged `folded` and the `F̄` entries become zero.
    pub fn simplified_boundaries(
        &self,
        p: usize,
        tableau: &MethodTableau,
        t_n: f64,
        k: f64,
        hist: &HistoryBuffer,
    ) -> Result<BoundaryCorrectionSet> {
        if !(1..=3).contains(&p) {
            return Err(Error::Config(format!("correction order {p} outside 1..=3")));
        }
        if p > tableau.nonstiff_order {
            return Err(Error::Config(format!("correction order {p} exceeds the order {} of {}", tableau.nonstiff_order, tableau.name)));
        }
        let s = tableau.stages();
        let nb = self.disc.boundary_len();
        let jets = self.jets(t_n, hist, k)?;
        let q = |q: Quantity| self.quantity(q, t_n, &jets);
        let zero_folded = || BoundaryValues { values: vec![0.0; nb], source: Source::Exact, folded: true };
        let folded = |mut v: BoundaryValues| {
            v.folded = true;
            v
        };
        let d_zero = self.disc.d_is_zero();
        let stage_fold = (1..s).all(|i| tableau.stage_collapses(i)) && (p >= 3 || d_zero);
        let update_fold = tableau.update_collapses() && (p >= 2 || d_zero);
        let c = &tableau.c;

        let mut stage_u = Vec::with_capacity(p);
        for l in 0..p {
            let top = l + 1 == p;
            stage_u.push(if top && p >= 2 && stage_fold {
                folded(q(Quantity::APowUDot(l - 1))?)
            } else {
                q(Quantity::APowU(l))?
            });
        }

        let stage_used: Vec<bool> = (0..s).map(|j| tableau.lambda.iter().any(|e| e.j == j)).collect();
        let mut stage_f = vec![Vec::new(); s];
        if p >= 2 {
            for j in (0..s).filter(|&j| stage_used[j]) {
                let row = &mut stage_f[j];
                if p == 3 {
                    let tj = t_n + c[j] * k;
                    let alpha = c[j] * k;
                    row.push(self.per_node(&jets, |e| e.f_shift(tj, alpha))?);
                }
                // highest level: ∂A^{p-2} f(t_n, u(t_n))
                row.push(if stage_fold { zero_folded() } else { q(Quantity::APowF(p - 2))? });
            }
        }

        let mut update_u = Vec::with_capacity(p + 1);
        for l in 0..=p {
            update_u.push(if l == p && update_fold { folded(q(Quantity::APowUDot(p - 1))?) } else { q(Quantity::APowU(l))? });
        }

        let mut update_f = vec![Vec::new(); s];
        for i in (0..s).filter(|&i| tableau.mu_row(i).next().is_some()) {
            let ti = t_n + c[i] * k;
            let alpha = c[i] * k;
            let row = &mut update_f[i];
            match p {
                2 => row.push(self.per_node(&jets, |e| e.f_shift(ti, alpha))?),
                3 => {
                    row.push(self.expanded_stage_f(tableau, i, t_n, k, &jets)?);
                    row.push(self.per_node(&jets, |e| e.af_shift(t_n, ti, alpha))?);
                }
                _ => {}
            }
            row.push(if update_fold { zero_folded() } else { q(Quantity::APowF(p - 1))? });
        }

        Ok(BoundaryCorrectionSet { p, stage_u, stage_f, update_u, update_f })
    }

    /// `∂f(t_n + c_i k, W_i)` with
    /// `W_i = u + k c_i Au + (c_i k)²/2 A²u
    ///        + k Σ_{j,l,r} λ_{i,j,l,r} [f(t_n + c_j k, u + c_j k u̇)/l! + (c_r k)/(l+1)! Af(t_n, u)]`.
    fn expanded_stage_f(&self, tableau: &MethodTableau, i: usize, t_n: f64, k: f64, jets: &[NodeJet]) -> Result<BoundaryValues> {
        let c = &tableau.c;
        let ci = c[i];
        self.per_node(jets, |e| {
            let mut w = e.u()? + k * ci * e.au(t_n)? + 0.5 * (ci * k).powi(2) * e.a2u(t_n)?;
            let mut af = None;
            for lam in tableau.lambda_row(i) {
                let fj = e.f_shift(t_n + c[lam.j] * k, c[lam.j] * k)?;
                let af_n = match af {
                    Some(v) => v,
                    None => *af.insert(e.af_shift(t_n, t_n, 0.0)?),
                };
                w += k * lam.value * (fj * inv_factorial(lam.l) + c[lam.r] * k * inv_factorial(lam.l + 1) * af_n);
            }
            e.f_value(t_n + ci * k, w)
        })
    }
}

/// A boundary quantity at the exact solution at time `t`, from the exact
/// solution or from the data and identities of the equation.
pub fn derived_boundary_data(
    problem: &dyn Problem,
    disc: &SpatialDiscretization,
    quantity: Quantity,
    t: f64,
    mode: BoundaryMode,
) -> Result<BoundaryValues> {
    if mode == BoundaryMode::Differenced {
        return Err(Error::Config("differenced boundary values need a solution history".into()));
    }
    let ev = BoundaryEvaluator::new(disc, problem, mode);
    let jets = ev.jets(t, &HistoryBuffer::new(1), 1.0)?;
    ev.quantity(quantity, t, &jets)
}

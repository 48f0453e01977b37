//! The φ-functions of exponential integrators.
//!
//! `φ_0(z) = e^z` and `φ_{j+1}(z) = (φ_j(z) - 1/j!) / z`, with `φ_j(0) = 1/j!`.
//! They are evaluated here on scalars, on dense matrices (through a single
//! augmented exponential), and as actions `Σ_j φ_j(τA) w_j` on large sparse
//! operators (through Arnoldi projections of an augmented operator).

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_complex::ComplexFloat;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, expm, norm2};

/// Largest φ index any built-in tableau needs.
pub const MAX_PHI_INDEX: usize = 8;

/// Default cutoff for the dense path.
pub const DENSE_CUTOFF: usize = 2000;

const TAYLOR_RADIUS: f64 = 0.5;
const TAYLOR_TERMS: usize = 20;
const RECURRENCE_RADIUS: f64 = 8.0;

const INV_FACTORIAL: [f64; 30] = {
    let mut t = [0.0; 30];
    let mut f = 1.0;
    let mut i = 0;
    while i < 30 {
        if i > 0 {
            f *= i as f64;
        }
        t[i] = 1.0 / f;
        i += 1;
    }
    t
};

pub fn inv_factorial(n: usize) -> f64 {
    INV_FACTORIAL[n]
}

fn lift<T: From<f64>>(x: f64) -> T {
    <T as From<f64>>::from(x)
}

/// Evaluates φ_0..=φ_jmax at `z`, writing into `out[0..=jmax]`.
fn phi_all_into<T>(jmax: usize, z: T, out: &mut [T])
where
    T: ComplexFloat<Real = f64> + From<f64>,
{
    let r = z.abs();
    if r < TAYLOR_RADIUS {
        taylor_into(jmax, z, out);
    } else if r < RECURRENCE_RADIUS {
        // scale into the Taylor disc, then undo the scaling with the doubling
        // relation φ_j(2x) = 2^{-j} [φ_0(x) φ_j(x) + Σ_{i=1}^{j} φ_i(x) / (j-i)!]
        let squarings = (r / TAYLOR_RADIUS).log2().floor() as i32 + 1;
        let scaled = z * lift::<T>(0.5f64.powi(squarings));
        taylor_into(jmax, scaled, out);
        let mut next = [lift::<T>(0.0); MAX_PHI_INDEX + 1];
        for level in (0..squarings).rev() {
            out[0] = (z * lift::<T>(0.5f64.powi(level + 1))).exp();
            for j in 0..=jmax {
                let mut acc = out[0] * out[j];
                for i in 1..=j {
                    acc = acc + out[i] * lift::<T>(INV_FACTORIAL[j - i]);
                }
                next[j] = acc * lift::<T>(0.5f64.powi(j as i32));
            }
            out[..=jmax].copy_from_slice(&next[..=jmax]);
        }
        out[0] = z.exp();
    } else {
        out[0] = z.exp();
        for j in 0..jmax {
            out[j + 1] = (out[j] - lift::<T>(INV_FACTORIAL[j])) / z;
        }
    }
}

fn taylor_into<T>(jmax: usize, z: T, out: &mut [T])
where
    T: ComplexFloat<Real = f64> + From<f64>,
{
    for (j, o) in out.iter_mut().enumerate().take(jmax + 1) {
        // Horner on Σ_m z^m / (m + j)!
        let mut acc = lift::<T>(INV_FACTORIAL[j + TAYLOR_TERMS - 1]);
        for m in (0..TAYLOR_TERMS - 1).rev() {
            acc = acc * z + lift::<T>(INV_FACTORIAL[j + m]);
        }
        *o = acc;
    }
}

fn check_index(j: usize) {
    assert!(j <= MAX_PHI_INDEX, "φ index {j} exceeds the supported maximum {MAX_PHI_INDEX}");
}

/// φ_j(z) for complex `z`.
pub fn phi_scalar(j: usize, z: Complex64) -> Complex64 {
    check_index(j);
    let mut out = [Complex64::new(0.0, 0.0); MAX_PHI_INDEX + 1];
    phi_all_into(j, z, &mut out);
    out[j]
}

/// φ_j(x) for real `x`.
pub fn phi_real(j: usize, x: f64) -> f64 {
    check_index(j);
    let mut out = [0.0; MAX_PHI_INDEX + 1];
    phi_all_into(j, x, &mut out);
    out[j]
}

/// φ_0(x), ..., φ_jmax(x); entries beyond `jmax` are zero.
pub fn phi_real_all(jmax: usize, x: f64) -> [f64; MAX_PHI_INDEX + 1] {
    check_index(jmax);
    let mut out = [0.0; MAX_PHI_INDEX + 1];
    phi_all_into(jmax, x, &mut out);
    out
}

/// φ_j(M) through one exponential of the block matrix
///
/// ```text
/// [ M  I  0 .. 0 ]
/// [ 0  0  I .. 0 ]
/// [ .        .   ]
/// [ 0  0  .. 0 I ]
/// [ 0  0  .. 0 0 ]
/// ```
///
/// whose first block row holds φ_0(M), φ_1(M), ..., φ_j(M).
pub fn phi_dense(j: usize, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(phi_dense_all(j, m, DENSE_CUTOFF)?.pop().unwrap())
}

/// φ_0(M), ..., φ_jmax(M) from a single augmented exponential.
pub fn phi_dense_all(jmax: usize, m: &DMatrix<f64>, cutoff: usize) -> Result<Vec<DMatrix<f64>>> {
    check_index(jmax);
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
    }
    if n > cutoff {
        return Err(Error::DimensionExceeded { dim: n, cutoff });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("dense φ argument"));
    }
    let size = n * (jmax + 1);
    let mut aug = DMatrix::<f64>::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(m);
    for b in 0..jmax {
        for i in 0..n {
            aug[(b * n + i, (b + 1) * n + i)] = 1.0;
        }
    }
    let e = expm(&aug)?;
    Ok((0..=jmax).map(|b| e.view((0, b * n), (n, n)).into_owned()).collect())
}

/// A linear operator `x ↦ A x` on `R^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

impl LinearOperator for crate::linalg::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Relative error bound per unit of (scaled) time.
    pub tolerance: f64,
    pub max_subspace_dim: usize,
    pub max_substeps: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_subspace_dim: 60, max_substeps: 1000 }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("Krylov tolerance must be positive".into()));
        }
        if self.max_subspace_dim < 2 {
            return Err(Error::Config("Krylov subspace dimension must be at least 2".into()));
        }
        if self.max_substeps == 0 {
            return Err(Error::Config("Krylov substep budget must be positive".into()));
        }
        Ok(())
    }
}

/// A linear combination `Σ_j φ_j(τA) w_j` awaiting evaluation.
///
/// Weights added under the same index are summed, so a caller can push every
/// term that shares the argument `τA` and pay for a single evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombination {
    tau: f64,
    dim: usize,
    terms: Vec<Option<Vec<f64>>>,
}

impl PhiCombination {
    pub fn new(tau: f64, dim: usize) -> Self {
        assert!(tau >= 0.0, "negative time scale {tau}");
        Self { tau, dim, terms: vec![None; MAX_PHI_INDEX + 1] }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `coeff * w` to the weight of φ_index.
    pub fn add(&mut self, index: usize, coeff: f64, w: &[f64]) {
        check_index(index);
        assert_eq!(w.len(), self.dim, "weight dimension mismatch");
        if coeff == 0.0 {
            return;
        }
        let slot = self.terms[index].get_or_insert_with(|| vec![0.0; self.dim]);
        axpy(coeff, w, slot);
    }

    pub fn weight(&self, index: usize) -> Option<&[f64]> {
        self.terms.get(index).and_then(|t| t.as_deref())
    }

    /// Non-empty `(index, weight)` pairs.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.terms.iter().enumerate().filter_map(|(j, w)| w.as_deref().map(|w| (j, w)))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms().map(|(j, _)| j).max()
    }

    pub fn is_empty(&self) -> bool {
        self.terms().next().is_none()
    }

    /// `Σ_j w_j / j!`, the value at τ = 0.
    pub fn at_zero(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, w) in self.terms() {
            axpy(INV_FACTORIAL[j], w, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub arnoldi_vectors: usize,
}

// [[τA, W], [0, J]] acting on R^{n+p}; W's columns are w_p, ..., w_1 scaled by 1/η.
struct AugmentedOperator<'a> {
    op: &'a dyn LinearOperator,
    tau: f64,
    columns: Vec<Vec<f64>>,
    n: usize,
}

impl AugmentedOperator<'_> {
    fn p(&self) -> usize {
        self.columns.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let p = self.p();
        let (xt, xb) = x.split_at(n);
        let (yt, yb) = y.split_at_mut(n);
        self.op.apply(xt, yt);
        for v in yt.iter_mut() {
            *v *= self.tau;
        }
        for (col, &coef) in self.columns.iter().zip(xb) {
            if coef != 0.0 {
                axpy(coef, col, yt);
            }
        }
        for i in 0..p {
            yb[i] = if i + 1 < p { xb[i + 1] } else { 0.0 };
        }
    }
}

const CHECKPOINTS: [usize; 12] = [4, 8, 12, 16, 20, 25, 30, 36, 42, 50, 60, 80];

/// Krylov evaluation of `Σ_j φ_j(τA) w_j`.
///
/// The combination is rewritten as one exponential of the augmented operator
/// `[[τA, W], [0, J]]` applied to `[w_0; η e_p]`, which is propagated over
/// the unit interval by Arnoldi projections. Substeps shrink when the
/// projection error estimate exceeds the tolerance; the Arnoldi basis is
/// reused while searching for an admissible substep.
pub fn phi_apply(
    op: &dyn LinearOperator,
    combo: &PhiCombination,
    config: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovStats)> {
    config.validate()?;
    let n = op.dim();
    if combo.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: combo.dim() });
    }
    let mut stats = KrylovStats::default();
    let Some(p) = combo.max_index() else {
        return Ok((vec![0.0; n], stats));
    };
    if combo.tau() == 0.0 {
        return Ok((combo.at_zero(), stats));
    }

    let eta = (1..=p)
        .filter_map(|j| combo.weight(j))
        .map(norm2)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let j = p - i;
            combo.weight(j).map_or_else(|| vec![0.0; n], |w| w.iter().map(|x| x / eta).collect())
        })
        .collect();
    let aug = AugmentedOperator { op, tau: combo.tau(), columns, n };
    let dim = n + p;

    let mut v = vec![0.0; dim];
    if let Some(w0) = combo.weight(0) {
        v[..n].copy_from_slice(w0);
    }
    if p > 0 {
        v[dim - 1] = eta;
    }

    let m_max = config.max_subspace_dim.min(dim.max(1));
    let mut s = 0.0;
    let mut delta_guess = 1.0f64;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    let mut w = vec![0.0; dim];

    while s < 1.0 {
        let remaining = 1.0 - s;
        let beta = norm2(&v);
        if beta == 0.0 {
            break;
        }
        if stats.substeps >= config.max_substeps {
            return Err(Error::NoConvergence { dims: m_max, substeps: stats.substeps });
        }
        basis.clear();
        basis.push(v.iter().map(|x| x / beta).collect());
        let mut h = DMatrix::<f64>::zeros(m_max + 1, m_max);
        let mut m_used = 0;
        let mut breakdown = false;
        let mut accepted: Option<(f64, DMatrix<f64>)> = None;

        for j in 0..m_max {
            aug.apply(&basis[j], &mut w);
            let wnorm = norm2(&w);
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(q, &w);
                h[(i, j)] = hij;
                axpy(-hij, q, &mut w);
            }
            // one pass of reorthogonalization
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[(i, j)] += c;
                axpy(-c, q, &mut w);
            }
            let hnext = norm2(&w);
            h[(j + 1, j)] = hnext;
            m_used = j + 1;
            stats.arnoldi_vectors += 1;
            if hnext <= 1e-12 * wnorm {
                breakdown = true;
                break;
            }
            basis.push(w.iter().map(|x| x / hnext).collect());
            if CHECKPOINTS.contains(&m_used) && m_used < m_max {
                let avnorm = aug_norm(&aug, &basis[m_used], &mut w);
                let (err, e) = projection_error(&h, m_used, remaining, beta, avnorm)?;
                if err <= config.tolerance * remaining * beta {
                    accepted = Some((remaining, e));
                    break;
                }
            }
        }

        let (delta, e) = match accepted {
            Some(found) => found,
            None if breakdown => {
                let hm = h.view((0, 0), (m_used, m_used)).into_owned();
                (remaining, expm(&(hm * remaining))?)
            }
            None => {
                let avnorm = aug_norm(&aug, &basis[m_used], &mut w);
                let mut delta = delta_guess.min(remaining);
                loop {
                    let (err, e) = projection_error(&h, m_used, delta, beta, avnorm)?;
                    if err <= config.tolerance * delta * beta {
                        break (delta, e);
                    }
                    delta *= 0.5;
                    if delta < 1e-14 {
                        return Err(Error::NoConvergence { dims: m_used, substeps: stats.substeps });
                    }
                }
            }
        };

        v.iter_mut().for_each(|x| *x = 0.0);
        for (i, q) in basis.iter().take(m_used).enumerate() {
            axpy(beta * e[(i, 0)], q, &mut v);
        }
        s += delta;
        if remaining - delta <= 1e-15 {
            s = 1.0;
        }
        stats.substeps += 1;
        delta_guess = (2.0 * delta).min(1.0);
    }

    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Krylov φ action"));
    }
    v.truncate(n);
    Ok((v, stats))
}

fn aug_norm(aug: &AugmentedOperator, v: &[f64], scratch: &mut [f64]) -> f64 {
    aug.apply(v, scratch);
    norm2(scratch)
}

/// Error estimate for a projected step of length `delta`, with the projected
/// exponential. Two correction terms are formed from `φ_1(δH)e_1` and
/// `φ_2(δH)e_1`; unlike `e^{δH}e_1` they decay only algebraically for stiff
/// `H`, so the estimate does not vanish spuriously.
fn projection_error(h: &DMatrix<f64>, m: usize, delta: f64, beta: f64, avnorm: f64) -> Result<(f64, DMatrix<f64>)> {
    let mut big = DMatrix::<f64>::zeros(m + 2, m + 2);
    big.view_mut((0, 0), (m, m)).copy_from(&(h.view((0, 0), (m, m)) * delta));
    big[(0, m)] = 1.0;
    big[(m, m + 1)] = 1.0;
    let full = expm(&big)?;
    let hnext = h[(m, m - 1)];
    let err1 = beta * delta * hnext * full[(m - 1, m)].abs();
    let err2 = beta * delta * delta * hnext * avnorm * full[(m - 1, m + 1)].abs();
    let err = if err1 > 10.0 * err2 {
        err2
    } else if err1 > err2 {
        err1 * err2 / (err1 - err2)
    } else {
        err1
    };
    Ok((err, full.view((0, 0), (m, m)).into_owned()))
}

/// Something that can evaluate `Σ_j φ_j(τA) w_j` for a fixed operator `A`.
pub trait PhiEngine: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, combo: &PhiCombination) -> Result<Vec<f64>>;
    /// Number of combinations evaluated so far.
    fn evaluations(&self) -> usize {
        0
    }
}

/// Krylov-backed engine.
pub struct KrylovEngine<'a> {
    op: &'a dyn LinearOperator,
    config: KrylovConfig,
    evaluations: AtomicUsize,
    arnoldi_vectors: AtomicUsize,
}

impl<'a> KrylovEngine<'a> {
    pub fn new(op: &'a dyn LinearOperator, config: KrylovConfig) -> Self {
        Self { op, config, evaluations: AtomicUsize::new(0), arnoldi_vectors: AtomicUsize::new(0) }
    }

    pub fn arnoldi_vectors(&self) -> usize {
        self.arnoldi_vectors.load(Ordering::Relaxed)
    }
}

impl PhiEngine for KrylovEngine<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, combo: &PhiCombination) -> Result<Vec<f64>> {
        let (v, stats) = phi_apply(self.op, combo, &self.config)?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.arnoldi_vectors.fetch_add(stats.arnoldi_vectors, Ordering::Relaxed);
        Ok(v)
    }

    fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// Dense engine: forms φ_j(τA) explicitly. Meant for small reference problems.
pub struct DenseEngine {
    a: DMatrix<f64>,
    evaluations: AtomicUsize,
}

impl DenseEngine {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a, evaluations: AtomicUsize::new(0) }
    }
}

impl PhiEngine for DenseEngine {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, combo: &PhiCombination) -> Result<Vec<f64>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let Some(p) = combo.max_index() else {
            return Ok(vec![0.0; self.dim()]);
        };
        let phis = phi_dense_all(p, &(&self.a * combo.tau()), DENSE_CUTOFF)?;
        let mut out = vec![0.0; self.dim()];
        for (j, w) in combo.terms() {
            let y = &phis[j] * nalgebra::DVector::from_column_slice(w);
            axpy(1.0, y.as_slice(), &mut out);
        }
        Ok(out)
    }

    fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// A basis in which the operator is diagonal: `A = V diag(λ) V⁻¹`.
pub trait Diagonalization: Sync + Send {
    fn dim(&self) -> usize;
    fn eigenvalues(&self) -> &[f64];
    /// `V⁻¹ x`
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    /// `V y`
    fn backward(&self, y: &[f64]) -> Vec<f64>;
}

/// Engine for operators with a known real eigenbasis; evaluates φ on the
/// spectrum, so results are exact up to rounding.
pub struct SpectralEngine<'a> {
    basis: &'a dyn Diagonalization,
    evaluations: AtomicUsize,
}

impl<'a> SpectralEngine<'a> {
    pub fn new(basis: &'a dyn Diagonalization) -> Self {
        Self { basis, evaluations: AtomicUsize::new(0) }
    }
}

impl PhiEngine for SpectralEngine<'_> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn apply(&self, combo: &PhiCombination) -> Result<Vec<f64>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let Some(p) = combo.max_index() else {
            return Ok(vec![0.0; self.dim()]);
        };
        let tau = combo.tau();
        let eig = self.basis.eigenvalues();
        let phis: Vec<[f64; MAX_PHI_INDEX + 1]> = eig.iter().map(|&l| phi_real_all(p, tau * l)).collect();
        let mut acc = vec![0.0; eig.len()];
        for (j, w) in combo.terms() {
            let hat = self.basis.forward(w);
            for ((a, x), f) in acc.iter_mut().zip(&hat).zip(&phis) {
                *a += f[j] * x;
            }
        }
        let out = self.basis.backward(&acc);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spectral φ action"));
        }
        Ok(out)
    }

    fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

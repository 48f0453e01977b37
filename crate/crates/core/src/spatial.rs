//! Finite-difference space discretizations in the form
//!
//! ```text
//! A_h0 U + C_h g = P_h F + D_h ∂F
//! ```
//!
//! for the problem `A u = F`, `∂u = g`. `A_h0` acts on the unknown nodes,
//! `C_h` and `D_h` map boundary data (one value per boundary node) to grid
//! vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::phi::{Diagonalization, LinearOperator};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// `[0, 1]` with values prescribed at both ends.
    DirichletBoth,
    /// `[0, 1]` with the value at 0 and `u_x` at 1.
    DirichletLeftNeumannRight,
    /// The unit square with values on all four sides.
    Dirichlet2D,
}

impl BoundaryKind {
    pub fn space_dim(self) -> usize {
        match self {
            BoundaryKind::Dirichlet2D => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::DirichletBoth => "dir",
            BoundaryKind::DirichletLeftNeumannRight => "dn",
            BoundaryKind::Dirichlet2D => "dir2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [BoundaryKind::DirichletBoth, BoundaryKind::DirichletLeftNeumannRight, BoundaryKind::Dirichlet2D]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// What the boundary datum at a node prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Value,
    /// The partial derivative along `axis`.
    Derivative { axis: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub point: Point,
    /// Lattice index `(i, j)` with coordinates `(i h, j h)`.
    pub lattice: [usize; 2],
    pub condition: Condition,
    /// Lattice step pointing into the domain, or `None` at corners.
    pub inward: Option<[isize; 2]>,
}

#[derive(Debug, Clone)]
pub struct SpatialDiscretization {
    kind: BoundaryKind,
    intervals: usize,
    h: f64,
    nodes: Vec<Point>,
    lattice: Vec<[usize; 2]>,
    boundary: Vec<BoundaryNode>,
    stiffness: CsrMatrix,
    stiffness_lu: BandedLu,
    mass: Option<(CsrMatrix, BandedLu)>,
    boundary_stiffness: CsrMatrix,
    boundary_mass: Option<CsrMatrix>,
}

fn tridiagonal_triplets(n: usize, scale: f64, t: &mut Vec<(usize, usize, f64)>) {
    for i in 0..n {
        t.push((i, i, -2.0 * scale));
        if i > 0 {
            t.push((i, i - 1, scale));
        }
        if i + 1 < n {
            t.push((i, i + 1, scale));
        }
    }
}

impl SpatialDiscretization {
    /// Second-order differences on `[0, 1]` with Dirichlet data at both ends.
    pub fn build_1d_dirichlet(intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 intervals, got {intervals}")));
        }
        let h = 1.0 / intervals as f64;
        let n = intervals - 1;
        let inv_h2 = 1.0 / (h * h);
        let mut t = Vec::with_capacity(3 * n);
        tridiagonal_triplets(n, inv_h2, &mut t);
        let stiffness = CsrMatrix::from_triplets(n, n, &t);
        let boundary_stiffness = CsrMatrix::from_triplets(n, 2, &[(0, 0, inv_h2), (n - 1, 1, inv_h2)]);
        let boundary = vec![
            BoundaryNode { point: [0.0, 0.0], lattice: [0, 0], condition: Condition::Value, inward: Some([1, 0]) },
            BoundaryNode {
                point: [1.0, 0.0],
                lattice: [intervals, 0],
                condition: Condition::Value,
                inward: Some([-1, 0]),
            },
        ];
        let lattice: Vec<[usize; 2]> = (1..intervals).map(|i| [i, 0]).collect();
        Self::assemble(BoundaryKind::DirichletBoth, intervals, h, lattice, boundary, stiffness, None, boundary_stiffness, None)
    }

    /// Second-order differences on `[0, 1]`, Dirichlet at 0 and Neumann at 1
    /// through a centred difference; the node at 1 is an unknown.
    pub fn build_1d_dirichlet_neumann(intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 intervals, got {intervals}")));
        }
        let h = 1.0 / intervals as f64;
        let n = intervals;
        let inv_h2 = 1.0 / (h * h);
        let mut t = Vec::with_capacity(3 * n);
        tridiagonal_triplets(n, inv_h2, &mut t);
        // last row (.., 2, -2) / h²
        t.push((n - 1, n - 2, inv_h2));
        let stiffness = CsrMatrix::from_triplets(n, n, &t);
        let boundary_stiffness = CsrMatrix::from_triplets(n, 2, &[(0, 0, inv_h2), (n - 1, 1, 2.0 / h)]);
        let boundary = vec![
            BoundaryNode { point: [0.0, 0.0], lattice: [0, 0], condition: Condition::Value, inward: Some([1, 0]) },
            BoundaryNode {
                point: [1.0, 0.0],
                lattice: [intervals, 0],
                condition: Condition::Derivative { axis: 0 },
                inward: Some([-1, 0]),
            },
        ];
        let lattice: Vec<[usize; 2]> = (1..=intervals).map(|i| [i, 0]).collect();
        Self::assemble(
            BoundaryKind::DirichletLeftNeumannRight,
            intervals,
            h,
            lattice,
            boundary,
            stiffness,
            None,
            boundary_stiffness,
            None,
        )
    }

    /// Compact fourth-order nine-point scheme on the unit square in mass
    /// form: `K U + K_b g = M P_h F + M_b ∂F`, so `A_h0 = M⁻¹K`,
    /// `C_h = M⁻¹K_b`, `D_h = M⁻¹M_b`.
    pub fn build_2d_ninepoint(intervals: usize) -> Result<Self> {
        if intervals < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 intervals, got {intervals}")));
        }
        let m = intervals;
        let h = 1.0 / m as f64;
        let side = m - 1;
        let n = side * side;
        let inv_6h2 = 1.0 / (6.0 * h * h);

        let mut boundary = Vec::with_capacity(4 * m);
        let mut boundary_index = vec![usize::MAX; (m + 1) * (m + 1)];
        for j in 0..=m {
            for i in 0..=m {
                let on_x = i == 0 || i == m;
                let on_y = j == 0 || j == m;
                if !(on_x || on_y) {
                    continue;
                }
                let inward = match (on_x, on_y) {
                    (true, true) => None,
                    (true, false) => Some([if i == 0 { 1 } else { -1 }, 0]),
                    _ => Some([0, if j == 0 { 1 } else { -1 }]),
                };
                boundary_index[i + (m + 1) * j] = boundary.len();
                boundary.push(BoundaryNode {
                    point: [i as f64 * h, j as f64 * h],
                    lattice: [i, j],
                    condition: Condition::Value,
                    inward,
                });
            }
        }
        let nb = boundary.len();

        let mut kt = Vec::with_capacity(9 * n);
        let mut mt = Vec::with_capacity(5 * n);
        let mut kbt = Vec::new();
        let mut mbt = Vec::new();
        let mut lattice = Vec::with_capacity(n);
        for j in 1..m {
            for i in 1..m {
                let row = (i - 1) + side * (j - 1);
                lattice.push([i, j]);
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        let (ii, jj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                        let (kw, mw) = match di.abs() + dj.abs() {
                            0 => (-20.0, 2.0 / 3.0),
                            1 => (4.0, 1.0 / 12.0),
                            _ => (1.0, 0.0),
                        };
                        let kw = kw * inv_6h2;
                        if (1..m).contains(&ii) && (1..m).contains(&jj) {
                            let col = (ii - 1) + side * (jj - 1);
                            kt.push((row, col, kw));
                            if mw != 0.0 {
                                mt.push((row, col, mw));
                            }
                        } else {
                            let b = boundary_index[ii + (m + 1) * jj];
                            kbt.push((row, b, kw));
                            if mw != 0.0 {
                                mbt.push((row, b, mw));
                            }
                        }
                    }
                }
            }
        }
        let stiffness = CsrMatrix::from_triplets(n, n, &kt);
        let mass = CsrMatrix::from_triplets(n, n, &mt);
        let boundary_stiffness = CsrMatrix::from_triplets(n, nb, &kbt);
        let boundary_mass = CsrMatrix::from_triplets(n, nb, &mbt);
        Self::assemble(
            BoundaryKind::Dirichlet2D,
            intervals,
            h,
            lattice,
            boundary,
            stiffness,
            Some(mass),
            boundary_stiffness,
            Some(boundary_mass),
        )
    }

    pub fn build(kind: BoundaryKind, intervals: usize) -> Result<Self> {
        match kind {
            BoundaryKind::DirichletBoth => Self::build_1d_dirichlet(intervals),
            BoundaryKind::DirichletLeftNeumannRight => Self::build_1d_dirichlet_neumann(intervals),
            BoundaryKind::Dirichlet2D => Self::build_2d_ninepoint(intervals),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: BoundaryKind,
        intervals: usize,
        h: f64,
        lattice: Vec<[usize; 2]>,
        boundary: Vec<BoundaryNode>,
        stiffness: CsrMatrix,
        mass: Option<CsrMatrix>,
        boundary_stiffness: CsrMatrix,
        boundary_mass: Option<CsrMatrix>,
    ) -> Result<Self> {
        let nodes = lattice.iter().map(|&[i, j]| [i as f64 * h, j as f64 * h]).collect();
        let stiffness_lu = BandedLu::factor(&stiffness)?;
        let mass = match mass {
            Some(m) => {
                let lu = BandedLu::factor(&m)?;
                Some((m, lu))
            }
            None => None,
        };
        Ok(Self {
            kind,
            intervals,
            h,
            nodes,
            lattice,
            boundary,
            stiffness,
            stiffness_lu,
            mass,
            boundary_stiffness,
            boundary_mass,
        })
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn lattice(&self) -> &[[usize; 2]] {
        &self.lattice
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    /// Position of the unknown at lattice index `(i, j)`, if it is one.
    pub fn unknown_index(&self, lattice: [usize; 2]) -> Option<usize> {
        let [i, j] = lattice;
        let m = self.intervals;
        match self.kind {
            BoundaryKind::DirichletBoth => (j == 0 && (1..m).contains(&i)).then(|| i - 1),
            BoundaryKind::DirichletLeftNeumannRight => (j == 0 && (1..=m).contains(&i)).then(|| i - 1),
            BoundaryKind::Dirichlet2D => {
                ((1..m).contains(&i) && (1..m).contains(&j)).then(|| (i - 1) + (m - 1) * (j - 1))
            }
        }
    }

    /// The sparse stiffness part: `A_h0` itself in 1D, `K` for the nine-point scheme.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> Option<&CsrMatrix> {
        self.mass.as_ref().map(|(m, _)| m)
    }

    pub fn has_mass(&self) -> bool {
        self.mass.is_some()
    }

    /// True when `D_h ≡ 0`.
    pub fn d_is_zero(&self) -> bool {
        self.boundary_mass.is_none()
    }

    fn mass_solve(&self, x: &mut [f64]) {
        if let Some((_, lu)) = &self.mass {
            lu.solve_in_place(x);
        }
    }

    /// `y = A_h0 x`.
    pub fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        self.stiffness.matvec_into(x, y);
        self.mass_solve(y);
    }

    /// `C_h g`.
    pub fn apply_c(&self, g: &[f64]) -> Vec<f64> {
        let mut y = self.boundary_stiffness.matvec(g);
        self.mass_solve(&mut y);
        y
    }

    /// `D_h g`.
    pub fn apply_d(&self, g: &[f64]) -> Vec<f64> {
        match &self.boundary_mass {
            Some(mb) => {
                let mut y = mb.matvec(g);
                self.mass_solve(&mut y);
                y
            }
            None => vec![0.0; self.dim()],
        }
    }

    /// `A_h0⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = match &self.mass {
            Some((m, _)) => m.matvec(b),
            None => b.to_vec(),
        };
        self.stiffness_lu.solve_in_place(&mut x);
        x
    }

    /// Grid values `P_h u`.
    pub fn project(&self, u: impl Fn(Point) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&p| u(p)).collect()
    }

    /// Boundary values of `u` as prescribed at each boundary node: the value,
    /// or the partial derivative `du(point, axis)` where a derivative is
    /// prescribed.
    pub fn boundary_data(&self, u: impl Fn(Point) -> f64, du: impl Fn(Point, usize) -> f64) -> Vec<f64> {
        self.boundary
            .iter()
            .map(|b| match b.condition {
                Condition::Value => u(b.point),
                Condition::Derivative { axis } => du(b.point, axis),
            })
            .collect()
    }

    /// Elliptic projection `R_h u`, the solution of
    /// `A_h0 R_h u + C_h ∂u = P_h Au + D_h ∂Au`.
    pub fn elliptic_projection(&self, boundary_u: &[f64], au: &[f64], boundary_au: &[f64]) -> Result<Vec<f64>> {
        if au.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: au.len() });
        }
        for b in [boundary_u, boundary_au] {
            if b.len() != self.boundary_len() {
                return Err(Error::DimensionMismatch { expected: self.boundary_len(), found: b.len() });
            }
        }
        let mut rhs = au.to_vec();
        let cu = self.apply_c(boundary_u);
        let dau = self.apply_d(boundary_au);
        for ((r, c), d) in rhs.iter_mut().zip(&cu).zip(&dau) {
            *r += d - c;
        }
        let r = self.solve(&rhs);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::SolveFailure("elliptic projection".into()));
        }
        Ok(r)
    }

    /// `A_h0` as a dense matrix, for small reference computations.
    pub fn dense_a(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_a(&e, &mut col);
            a.set_column(j, &DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        a
    }

    /// The sine eigenbasis of `A_h0`.
    pub fn spectral_basis(&self) -> SineBasis {
        SineBasis::new(self)
    }
}

impl LinearOperator for SpatialDiscretization {
    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_a(x, y);
    }
}

/// Eigenvalue of the second difference `tridiag(1, -2, 1)` at angle θ.
fn second_difference_symbol(theta: f64) -> f64 {
    -4.0 * (0.5 * theta).sin().powi(2)
}

/// Explicit eigenbasis of the built-in discretizations: discrete sines.
#[derive(Debug, Clone)]
pub struct SineBasis {
    kind: BoundaryKind,
    eigenvalues: Vec<f64>,
    // columns are eigenvectors (1D), or the 1D factor of the tensor basis (2D)
    vectors: DMatrix<f64>,
    // V⁻¹ in 1D; the scaled transpose factor in 2D
    inverse: DMatrix<f64>,
    side: usize,
}

impl SineBasis {
    fn new(d: &SpatialDiscretization) -> Self {
        let h = d.h();
        let m = d.intervals();
        match d.kind() {
            BoundaryKind::DirichletBoth => {
                let n = m - 1;
                let vectors = DMatrix::from_fn(n, n, |i, j| ((i + 1) as f64 * (j + 1) as f64 * std::f64::consts::PI * h).sin());
                let inverse = vectors.transpose() * (2.0 * h);
                let eigenvalues =
                    (1..=n).map(|j| second_difference_symbol(j as f64 * std::f64::consts::PI * h) / (h * h)).collect();
                Self { kind: d.kind(), eigenvalues, vectors, inverse, side: n }
            }
            BoundaryKind::DirichletLeftNeumannRight => {
                let n = m;
                let theta = |j: usize| (j as f64 + 0.5) * std::f64::consts::PI / m as f64;
                let vectors = DMatrix::from_fn(n, n, |i, j| ((i + 1) as f64 * theta(j)).sin());
                // orthogonal for the weight diag(1, .., 1, 1/2)
                let mut inverse = vectors.transpose();
                for j in 0..n {
                    let norm: f64 = (0..n)
                        .map(|i| {
                            let w = if i + 1 == n { 0.5 } else { 1.0 };
                            w * vectors[(i, j)].powi(2)
                        })
                        .sum();
                    for i in 0..n {
                        let w = if i + 1 == n { 0.5 } else { 1.0 };
                        inverse[(j, i)] *= w / norm;
                    }
                }
                let eigenvalues = (0..n).map(|j| second_difference_symbol(theta(j)) / (h * h)).collect();
                Self { kind: d.kind(), eigenvalues, vectors, inverse, side: n }
            }
            BoundaryKind::Dirichlet2D => {
                let side = m - 1;
                let vectors =
                    DMatrix::from_fn(side, side, |i, j| ((i + 1) as f64 * (j + 1) as f64 * std::f64::consts::PI * h).sin());
                let inverse = vectors.transpose() * (2.0 * h);
                let mu: Vec<f64> =
                    (1..=side).map(|j| second_difference_symbol(j as f64 * std::f64::consts::PI * h)).collect();
                let mut eigenvalues = Vec::with_capacity(side * side);
                for &mb in &mu {
                    for &ma in &mu {
                        let k = (ma + mb + ma * mb / 6.0) / (h * h);
                        let mass = 1.0 + (ma + mb) / 12.0;
                        eigenvalues.push(k / mass);
                    }
                }
                Self { kind: d.kind(), eigenvalues, vectors, inverse, side }
            }
        }
    }
}

impl Diagonalization for SineBasis {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            BoundaryKind::Dirichlet2D => {
                let u = DMatrix::from_column_slice(self.side, self.side, x);
                let hat = &self.inverse * u * self.inverse.transpose();
                hat.as_slice().to_vec()
            }
            _ => (&self.inverse * DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            BoundaryKind::Dirichlet2D => {
                let hat = DMatrix::from_column_slice(self.side, self.side, y);
                let u = &self.vectors * hat * self.vectors.transpose();
                u.as_slice().to_vec()
            }
            _ => (&self.vectors * DVector::from_column_slice(y)).as_slice().to_vec(),
        }
    }
}

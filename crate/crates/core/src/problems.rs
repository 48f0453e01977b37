//! Semilinear parabolic problems `u_t = Δu + φ(u) + h(t, x)` with boundary
//! data, and the two benchmark problems with exact solution `cos(t + x [+ y])`.

use crate::spatial::{BoundaryKind, Condition, Point, SpatialDiscretization};

/// Multi-index of a partial derivative `∂_t^t ∂_x^x ∂_y^y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Partial {
    pub t: usize,
    pub x: usize,
    pub y: usize,
}

impl Partial {
    pub const VALUE: Partial = Partial { t: 0, x: 0, y: 0 };

    pub fn new(t: usize, x: usize, y: usize) -> Self {
        Self { t, x, y }
    }

    pub fn time(n: usize) -> Self {
        Self { t: n, ..Self::VALUE }
    }

    /// `n` derivatives along `axis` (0 = x, 1 = y).
    pub fn space(axis: usize, n: usize) -> Self {
        Self::VALUE.plus_space(axis, n)
    }

    pub fn plus_time(self, n: usize) -> Self {
        Self { t: self.t + n, ..self }
    }

    pub fn plus_space(self, axis: usize, n: usize) -> Self {
        match axis {
            0 => Self { x: self.x + n, ..self },
            1 => Self { y: self.y + n, ..self },
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn order(self) -> usize {
        self.t + self.x + self.y
    }
}

/// A problem `u_t = Δu + φ(u) + h(t, x)` on the domain of its [`BoundaryKind`].
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> BoundaryKind;

    /// `φ^{(order)}(u)` for `order ≤ 3`.
    fn nonlinearity(&self, u: f64, order: usize) -> f64;

    /// A partial derivative of the forcing `h`.
    fn forcing(&self, t: f64, p: Point, d: Partial) -> f64;

    /// Boundary data at boundary point `p`, as a function of time and of the
    /// position along the boundary. At a node with a prescribed value `d`
    /// may contain time derivatives and derivatives tangential to the
    /// boundary; at a node with a prescribed derivative it must contain that
    /// derivative, plus time derivatives.
    fn boundary_data(&self, t: f64, p: Point, d: Partial) -> f64;

    fn initial(&self, p: Point) -> f64;

    /// `u_0(p)` and the first three time derivatives of the solution at
    /// `t = 0`, obtained from `u_0` through the equation.
    fn initial_time_jet(&self, p: Point) -> [f64; 4];

    /// A partial derivative of the exact solution, if known.
    fn exact(&self, t: f64, p: Point, d: Partial) -> Option<f64>;

    fn has_exact(&self) -> bool {
        self.exact(0.0, [0.0, 0.0], Partial::VALUE).is_some()
    }

    /// `f(t, u) = φ(u) + h(t, p)`.
    fn f(&self, t: f64, p: Point, u: f64) -> f64 {
        self.nonlinearity(u, 0) + self.forcing(t, p, Partial::VALUE)
    }
}

/// `d^n/dx^n cos(x)`.
pub fn cos_derivative(n: usize, x: f64) -> f64 {
    match n % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

/// The benchmark family `u = cos(t + Σ x_a)` in `dims` space dimensions with
/// `φ(u) = u²` and `h = -sin ψ + dims·cos ψ - cos² ψ`, `ψ = t + Σ x_a`.
#[derive(Debug, Clone, Copy)]
struct CosineWave {
    dims: usize,
}

impl CosineWave {
    fn psi(&self, t: f64, p: Point) -> f64 {
        t + p[..self.dims].iter().sum::<f64>()
    }

    fn depends_on(&self, d: Partial) -> bool {
        self.dims == 2 || d.y == 0
    }

    fn exact(&self, t: f64, p: Point, d: Partial) -> f64 {
        if !self.depends_on(d) {
            return 0.0;
        }
        cos_derivative(d.order(), self.psi(t, p))
    }

    fn forcing(&self, t: f64, p: Point, d: Partial) -> f64 {
        if !self.depends_on(d) {
            return 0.0;
        }
        let n = d.order();
        let psi = self.psi(t, p);
        // -sin ψ = cos'(ψ);  cos²ψ = (1 + cos 2ψ) / 2
        let square = if n == 0 { 0.5 * (1.0 + (2.0 * psi).cos()) } else { 2f64.powi(n as i32 - 1) * cos_derivative(n, 2.0 * psi) };
        cos_derivative(n + 1, psi) + self.dims as f64 * cos_derivative(n, psi) - square
    }

    /// Time jet at `t = 0` from the equation. Everything at `t = 0` is a
    /// function of `ψ` alone, so the jet is carried as Taylor coefficients
    /// in `ψ`, with `Δ = dims · d²/dψ²` and `φ(u) = u²`.
    fn initial_time_jet(&self, p: Point) -> [f64; 4] {
        const DEG: usize = 7;
        type Series = [f64; DEG];
        let psi0 = self.psi(0.0, p);
        let mut fact = 1.0;
        let mut u0: Series = [0.0; DEG];
        let mut h: [Series; 3] = [[0.0; DEG]; 3];
        for n in 0..DEG {
            if n > 0 {
                fact *= n as f64;
            }
            u0[n] = cos_derivative(n, psi0) / fact;
            for (dt, hs) in h.iter_mut().enumerate() {
                hs[n] = self.forcing(0.0, p, Partial::new(dt, n, 0)) / fact;
            }
        }
        let dims = self.dims as f64;
        let laplacian = |s: &Series| -> Series {
            let mut out = [0.0; DEG];
            for n in 0..DEG - 2 {
                out[n] = dims * ((n + 2) * (n + 1)) as f64 * s[n + 2];
            }
            out
        };
        let product = |a: &Series, b: &Series| -> Series {
            let mut out = [0.0; DEG];
            for i in 0..DEG {
                for j in 0..DEG - i {
                    out[i + j] += a[i] * b[j];
                }
            }
            out
        };
        let add = |parts: &[Series]| -> Series {
            let mut out = [0.0; DEG];
            for s in parts {
                for (o, v) in out.iter_mut().zip(s) {
                    *o += v;
                }
            }
            out
        };
        let scale = |s: Series, c: f64| s.map(|v| v * c);
        // u_t = Δu + u² + h
        let ut = add(&[laplacian(&u0), product(&u0, &u0), h[0]]);
        // u_tt = Δu_t + 2 u u_t + h_t
        let utt = add(&[laplacian(&ut), scale(product(&u0, &ut), 2.0), h[1]]);
        // u_ttt = Δu_tt + 2 u_t² + 2 u u_tt + h_tt
        let uttt = add(&[laplacian(&utt), scale(product(&ut, &ut), 2.0), scale(product(&u0, &utt), 2.0), h[2]]);
        [u0[0], ut[0], utt[0], uttt[0]]
    }
}

/// `u_t = u_xx + u² + h` on `[0, 1]`, exact solution `cos(x + t)`, with
/// Dirichlet data at both ends or Dirichlet at 0 and Neumann at 1.
#[derive(Debug, Clone, Copy)]
pub struct ProblemP1 {
    kind: BoundaryKind,
    wave: CosineWave,
}

impl ProblemP1 {
    /// Panics unless `kind` is one-dimensional.
    pub fn new(kind: BoundaryKind) -> Self {
        assert!(kind.space_dim() == 1, "p1 is one-dimensional");
        Self { kind, wave: CosineWave { dims: 1 } }
    }
}

/// `u_t = u_xx + u_yy + u² + h` on the unit square, exact solution
/// `cos(t + x + y)`, Dirichlet data on all sides.
#[derive(Debug, Clone, Copy)]
pub struct ProblemP2 {
    wave: CosineWave,
}

impl ProblemP2 {
    pub fn new() -> Self {
        Self { wave: CosineWave { dims: 2 } }
    }
}

impl Default for ProblemP2 {
    fn default() -> Self {
        Self::new()
    }
}

fn square_nonlinearity(u: f64, order: usize) -> f64 {
    match order {
        0 => u * u,
        1 => 2.0 * u,
        2 => 2.0,
        _ => 0.0,
    }
}

macro_rules! cosine_problem {
    ($ty:ty, $name:expr, $kind:expr) => {
        impl Problem for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn kind(&self) -> BoundaryKind {
                $kind(self)
            }

            fn nonlinearity(&self, u: f64, order: usize) -> f64 {
                square_nonlinearity(u, order)
            }

            fn forcing(&self, t: f64, p: Point, d: Partial) -> f64 {
                self.wave.forcing(t, p, d)
            }

            fn boundary_data(&self, t: f64, p: Point, d: Partial) -> f64 {
                self.wave.exact(t, p, d)
            }

            fn initial(&self, p: Point) -> f64 {
                self.wave.exact(0.0, p, Partial::VALUE)
            }

            fn initial_time_jet(&self, p: Point) -> [f64; 4] {
                self.wave.initial_time_jet(p)
            }

            fn exact(&self, t: f64, p: Point, d: Partial) -> Option<f64> {
                Some(self.wave.exact(t, p, d))
            }
        }
    };
}

cosine_problem!(ProblemP1, "p1", |s: &ProblemP1| s.kind);
cosine_problem!(ProblemP2, "p2", |_: &ProblemP2| BoundaryKind::Dirichlet2D);

pub fn problem_p1(kind: BoundaryKind) -> ProblemP1 {
    ProblemP1::new(kind)
}

pub fn problem_p2() -> ProblemP2 {
    ProblemP2::new()
}

/// Boundary data vector `g(t)` (one entry per boundary node), with `dt` time
/// derivatives.
pub fn boundary_vector(d: &SpatialDiscretization, problem: &dyn Problem, t: f64, dt: usize) -> Vec<f64> {
    d.boundary()
        .iter()
        .map(|b| {
            let partial = match b.condition {
                Condition::Value => Partial::time(dt),
                Condition::Derivative { axis } => Partial::space(axis, 1).plus_time(dt),
            };
            problem.boundary_data(t, b.point, partial)
        })
        .collect()
}

/// The semidiscrete system `U' = A_h0 U + F(t, U)` with nonstiff part
///
/// ```text
/// F(t, U) = C_h g(t) + φ(U) + P_h h(t) + D_h (φ(g(t)) + ∂h(t) - ġ(t))
/// ```
pub struct SemidiscreteRhs<'a> {
    pub disc: &'a SpatialDiscretization,
    pub problem: &'a dyn Problem,
}

impl SemidiscreteRhs<'_> {
    /// The part of `F` that does not depend on `U`.
    pub fn boundary_forcing(&self, t: f64) -> Vec<f64> {
        let d = self.disc;
        let g = boundary_vector(d, self.problem, t, 0);
        let mut out = d.apply_c(&g);
        for (o, &p) in out.iter_mut().zip(d.nodes()) {
            *o += self.problem.forcing(t, p, Partial::VALUE);
        }
        if !d.d_is_zero() {
            let gdot = boundary_vector(d, self.problem, t, 1);
            let w: Vec<f64> = d
                .boundary()
                .iter()
                .zip(g.iter().zip(&gdot))
                .map(|(b, (&g, &gd))| {
                    self.problem.nonlinearity(g, 0) + self.problem.forcing(t, b.point, Partial::VALUE) - gd
                })
                .collect();
            for (o, v) in out.iter_mut().zip(d.apply_d(&w)) {
                *o += v;
            }
        }
        out
    }

    pub fn nonstiff(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = self.boundary_forcing(t);
        for (o, &v) in out.iter_mut().zip(u) {
            *o += self.problem.nonlinearity(v, 0);
        }
        out
    }

    /// `A_h0 U + F(t, U)`.
    pub fn full(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.disc.apply_a(u, &mut out);
        for (o, v) in out.iter_mut().zip(self.nonstiff(t, u)) {
            *o += v;
        }
        out
    }
}

/// Built-in problem by name and boundary kind name (`dir`, `dn`, `dir2d`).
pub fn builtin(name: &str, kind: BoundaryKind) -> Option<Box<dyn Problem>> {
    match (name, kind) {
        ("p1", BoundaryKind::DirichletBoth | BoundaryKind::DirichletLeftNeumannRight) => Some(Box::new(ProblemP1::new(kind))),
        ("p2", BoundaryKind::Dirichlet2D) => Some(Box::new(ProblemP2::new())),
        _ => None,
    }
}

//! Explicit exponential Runge–Kutta tableaus in φ-coefficient form:
//!
//! ```text
//! a_ij(z) = Σ_{l,r} λ_{i,j,l,r} φ_l(c_r z),    b_i(z) = Σ_l μ_{i,l} φ_l(z)
//! ```
//!
//! Stage, φ and node indices are zero-based in the API; the text definition
//! format uses one-based stage indices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::phi::{inv_factorial, MAX_PHI_INDEX};

const CONSISTENCY_TOL: f64 = 1e-13;

/// One nonzero `λ_{i,j,l,r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEntry {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub r: usize,
    pub value: f64,
}

/// One nonzero `μ_{i,l}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEntry {
    pub i: usize,
    pub l: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTableau {
    pub name: String,
    pub c: Vec<f64>,
    pub lambda: Vec<LambdaEntry>,
    pub mu: Vec<MuEntry>,
    pub nonstiff_order: usize,
}

impl MethodTableau {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// Entries of stage `i` (all `j < i`).
    pub fn lambda_row(&self, i: usize) -> impl Iterator<Item = &LambdaEntry> {
        self.lambda.iter().filter(move |e| e.i == i)
    }

    pub fn mu_row(&self, i: usize) -> impl Iterator<Item = &MuEntry> {
        self.mu.iter().filter(move |e| e.i == i)
    }

    /// `a_ij(0) = Σ_{l,r} λ_{i,j,l,r} / l!`
    pub fn a_at_zero(&self, i: usize, j: usize) -> f64 {
        self.lambda_row(i).filter(|e| e.j == j).map(|e| e.value * inv_factorial(e.l)).sum()
    }

    /// `b_i(0) = Σ_l μ_{i,l} / l!`
    pub fn b_at_zero(&self, i: usize) -> f64 {
        self.mu_row(i).map(|e| e.value * inv_factorial(e.l)).sum()
    }

    /// Largest φ index appearing in the coefficients.
    pub fn max_phi_index(&self) -> usize {
        self.lambda.iter().map(|e| e.l).chain(self.mu.iter().map(|e| e.l)).max().unwrap_or(0)
    }

    /// Whether `Σ_j λ_{i,j,l,r} = c_i δ_{l,1} δ_{r,i}` for every `(l, r)`:
    /// the stage sums collapse to `c_i φ_1(c_i z)` when every `F_j` is equal.
    pub fn stage_collapses(&self, i: usize) -> bool {
        let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in self.lambda_row(i) {
            *sums.entry((e.l, e.r)).or_default() += e.value;
        }
        sums.insert((1, i), sums.get(&(1, i)).copied().unwrap_or(0.0) - self.c[i]);
        sums.values().all(|v| v.abs() <= CONSISTENCY_TOL)
    }

    /// Whether `Σ_i μ_{i,l} = δ_{l,1}` for every `l`.
    pub fn update_collapses(&self) -> bool {
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        sums.insert(1, -1.0);
        for e in &self.mu {
            *sums.entry(e.l).or_default() += e.value;
        }
        sums.values().all(|v| v.abs() <= CONSISTENCY_TOL)
    }

    /// Every violated tableau invariant, as a human-readable line.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let s = self.stages();
        if s == 0 {
            out.push("tableau has no stages".to_string());
            return out;
        }
        if self.c[0] != 0.0 {
            out.push(format!("first node must be 0, got {}", self.c[0]));
        }
        for (i, c) in self.c.iter().enumerate() {
            if !c.is_finite() {
                out.push(format!("node c_{} is not finite", i + 1));
            }
        }
        for e in &self.lambda {
            if e.i >= s || e.r >= s {
                out.push(format!(
                    "lambda({}, {}, {}, {}) refers to a stage beyond {s}",
                    e.i + 1,
                    e.j + 1,
                    e.l,
                    e.r + 1
                ));
            } else if e.j >= e.i {
                out.push(format!(
                    "lambda({}, {}, {}, {}) is not strictly lower triangular",
                    e.i + 1,
                    e.j + 1,
                    e.l,
                    e.r + 1
                ));
            }
            if e.l == 0 || e.l > MAX_PHI_INDEX {
                out.push(format!("lambda φ index {} outside 1..={MAX_PHI_INDEX}", e.l));
            }
            if !e.value.is_finite() {
                out.push("non-finite lambda coefficient".to_string());
            }
        }
        for e in &self.mu {
            if e.i >= s {
                out.push(format!("mu({}, {}) refers to a stage beyond {s}", e.i + 1, e.l));
            }
            if e.l == 0 || e.l > MAX_PHI_INDEX {
                out.push(format!("mu φ index {} outside 1..={MAX_PHI_INDEX}", e.l));
            }
            if !e.value.is_finite() {
                out.push("non-finite mu coefficient".to_string());
            }
        }
        if !out.is_empty() {
            return out;
        }
        for i in 0..s {
            let sum: f64 = (0..i).map(|j| self.a_at_zero(i, j)).sum();
            if (sum - self.c[i]).abs() > CONSISTENCY_TOL {
                out.push(format!("row {} sums to {sum} but c_{} = {}", i + 1, i + 1, self.c[i]));
            }
        }
        if self.nonstiff_order >= 1 {
            let sum: f64 = (0..s).map(|i| self.b_at_zero(i)).sum();
            if (sum - 1.0).abs() > CONSISTENCY_TOL {
                out.push(format!("weights sum to {sum}, expected 1"));
            }
        }
        out
    }

    /// Writes the text definition understood by [`MethodTableau::parse`].
    pub fn to_definition(&self) -> String {
        let mut out = String::new();
        writeln!(out, "name = {}", self.name).unwrap();
        writeln!(out, "stages = {}", self.stages()).unwrap();
        writeln!(out, "order = {}", self.nonstiff_order).unwrap();
        let c: Vec<String> = self.c.iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "c = {}", c.join(", ")).unwrap();
        for e in &self.lambda {
            writeln!(out, "lambda {} {} {} {} = {:?}", e.i + 1, e.j + 1, e.l, e.r + 1, e.value).unwrap();
        }
        for e in &self.mu {
            writeln!(out, "mu {} {} = {:?}", e.i + 1, e.l, e.value).unwrap();
        }
        out
    }

    /// Parses a text definition:
    ///
    /// ```text
    /// # comment
    /// name = rk2
    /// stages = 2
    /// order = 2
    /// c = 0, 1/2
    /// lambda 2 1 1 2 = 1/2     # λ_{i,j,l,r}, stages counted from 1
    /// mu 2 1 = 1               # μ_{i,l}
    /// ```
    ///
    /// The result is validated; any violation is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut stages = None;
        let mut order = None;
        let mut c = None;
        let mut lambda = Vec::new();
        let mut mu = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let value = value.trim();
            let mut words = key.split_whitespace();
            let head = words.next().ok_or_else(|| err("missing key".into()))?;
            let indices: Vec<usize> = words
                .map(|w| w.parse::<usize>().map_err(|_| err(format!("bad index `{w}`"))))
                .collect::<Result<_>>()?;
            let one_based = |k: usize| k.checked_sub(1).ok_or_else(|| err("stage indices start at 1".into()));
            match (head, indices.len()) {
                ("name", 0) => name = Some(value.to_string()),
                ("stages", 0) => stages = Some(value.parse::<usize>().map_err(|_| err("bad stage count".into()))?),
                ("order", 0) => order = Some(value.parse::<usize>().map_err(|_| err("bad order".into()))?),
                ("c", 0) => {
                    c = Some(value.split(',').map(|v| parse_number(v.trim()).map_err(&err)).collect::<Result<Vec<_>>>()?)
                }
                ("lambda", 4) => lambda.push(LambdaEntry {
                    i: one_based(indices[0])?,
                    j: one_based(indices[1])?,
                    l: indices[2],
                    r: one_based(indices[3])?,
                    value: parse_number(value).map_err(&err)?,
                }),
                ("mu", 2) => mu.push(MuEntry { i: one_based(indices[0])?, l: indices[1], value: parse_number(value).map_err(&err)? }),
                _ => return Err(err(format!("unknown key `{}`", key.trim()))),
            }
        }
        let c = c.ok_or_else(|| Error::InvalidTableau("missing `c`".into()))?;
        if let Some(s) = stages {
            if s != c.len() {
                return Err(Error::InvalidTableau(format!("stages = {s} but {} nodes given", c.len())));
            }
        }
        let tableau = MethodTableau {
            name: name.unwrap_or_else(|| "custom".to_string()),
            c,
            lambda,
            mu,
            nonstiff_order: order.ok_or_else(|| Error::InvalidTableau("missing `order`".into()))?,
        };
        let problems = tableau.validate();
        if problems.is_empty() {
            Ok(tableau)
        } else {
            Err(Error::InvalidTableau(problems.join("; ")))
        }
    }
}

/// A decimal or a fraction `a/b`.
pub(crate) fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{s}`"));
    match s.split_once('/') {
        Some((a, b)) => {
            let d = parse(b)?;
            if d == 0.0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            Ok(parse(a)? / d)
        }
        None => parse(s),
    }
}

fn lam(i: usize, j: usize, l: usize, r: usize, value: f64) -> LambdaEntry {
    LambdaEntry { i: i - 1, j: j - 1, l, r: r - 1, value }
}

fn mu(i: usize, l: usize, value: f64) -> MuEntry {
    MuEntry { i: i - 1, l, value }
}

/// Two stages, `a_21 = φ_1(z/2)/2`, `b = (0, φ_1)`.
pub fn tableau_rk2() -> MethodTableau {
    MethodTableau {
        name: "rk2".into(),
        c: vec![0.0, 0.5],
        lambda: vec![lam(2, 1, 1, 2, 0.5)],
        mu: vec![mu(2, 1, 1.0)],
        nonstiff_order: 2,
    }
}

/// Same stages as [`tableau_rk2`], `b = (φ_1 - 2φ_2, 2φ_2)`.
pub fn tableau_rk2b() -> MethodTableau {
    MethodTableau {
        name: "rk2b".into(),
        c: vec![0.0, 0.5],
        lambda: vec![lam(2, 1, 1, 2, 0.5)],
        mu: vec![mu(1, 1, 1.0), mu(1, 2, -2.0), mu(2, 2, 2.0)],
        nonstiff_order: 2,
    }
}

/// Krogstad's four-stage method.
pub fn tableau_krogstad() -> MethodTableau {
    MethodTableau {
        name: "krogstad".into(),
        c: vec![0.0, 0.5, 0.5, 1.0],
        lambda: vec![
            lam(2, 1, 1, 2, 0.5),
            lam(3, 1, 1, 3, 0.5),
            lam(3, 1, 2, 3, -1.0),
            lam(3, 2, 2, 3, 1.0),
            lam(4, 1, 1, 4, 1.0),
            lam(4, 1, 2, 4, -2.0),
            lam(4, 3, 2, 4, 2.0),
        ],
        mu: vec![
            mu(1, 1, 1.0),
            mu(1, 2, -3.0),
            mu(1, 3, 4.0),
            mu(2, 2, 2.0),
            mu(2, 3, -4.0),
            mu(3, 2, 2.0),
            mu(3, 3, -4.0),
            mu(4, 2, -1.0),
            mu(4, 3, 4.0),
        ],
        nonstiff_order: 4,
    }
}

/// Built-in tableau by name.
pub fn builtin(name: &str) -> Option<MethodTableau> {
    match name {
        "rk2" => Some(tableau_rk2()),
        "rk2b" => Some(tableau_rk2b()),
        "krogstad" => Some(tableau_krogstad()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["rk2", "rk2b", "krogstad"];

//! Run configurations and the built-in reproduction presets.
//!
//! The text format is line oriented. Top-level keys come first, then one
//! `[study NAME]` section per study:
//!
//! ```text
//! output = results
//! threads = 2
//! preset = table7          # adds the preset's studies
//! desk_scale = true        # two-dimensional presets at h = 1/40
//!
//! [study my-run]
//! problem = p1
//! boundary = dir            # dir | dn | dir2d
//! method = rk2              # built-in name or tableau file
//! scheme = corrected        # standard | corrected
//! p = 2
//! mode = identity           # exact | identity | differenced
//! intervals = 1000
//! k = 1/20, 1/40, 1/80, 1/160
//! t_final = 1
//! measure = both            # local | global | both
//! repeats = 1
//! engine = spectral         # spectral | krylov | dense
//! krylov_tolerance = 1e-10
//! krylov_max_dim = 60
//! krylov_max_substeps = 1000
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::boundary::BoundaryMode;
use crate::error::{Error, Result};
use crate::harness::{EngineKind, Measure, StudyPlan};
use crate::integrator::Scheme;
use crate::methods::parse_number;
use crate::phi::KrylovConfig;
use crate::spatial::BoundaryKind;

pub const PRESET_NAMES: [&str; 11] =
    ["table6", "table6dn", "table7", "table7dn", "table8", "table8dn", "table9", "table10", "fig1", "fig1dn", "fig2"];

/// Everything one CLI run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plans: Vec<StudyPlan>,
    pub output_dir: Option<PathBuf>,
    pub threads: usize,
    /// Also write a plotting script next to the CSV.
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { plans: Vec::new(), output_dir: None, threads: 1, plot: true }
    }
}

fn halving(first_denominator: u32, count: u32) -> Vec<f64> {
    (0..count).map(|i| 1.0 / (first_denominator as f64 * 2f64.powi(i as i32))).collect()
}

fn plan(name: &str, kind: BoundaryKind, method: &str, scheme: Scheme, intervals: usize, k: Vec<f64>) -> StudyPlan {
    StudyPlan {
        name: name.to_string(),
        problem: if kind == BoundaryKind::Dirichlet2D { "p2" } else { "p1" }.to_string(),
        kind,
        method: method.to_string(),
        scheme,
        intervals,
        k_ladder: k,
        t_final: 1.0,
        measure: Measure::Both,
        repeats: 1,
        engine: EngineKind::Spectral,
        krylov: KrylovConfig::default(),
    }
}

fn corrected(p: usize, mode: BoundaryMode) -> Scheme {
    Scheme::Corrected { p, mode }
}

/// The studies behind a preset. `desk_scale` shrinks the two-dimensional
/// ones to `h = 1/40`, `k ∈ {1/8, …, 1/64}`.
pub fn preset(name: &str, desk_scale: bool) -> Result<Vec<StudyPlan>> {
    use BoundaryKind::*;
    use BoundaryMode::*;
    let one_d = |n: &str, kind, method, scheme| plan(n, kind, method, scheme, 1000, halving(20, 4));
    let (h2, k2) = if desk_scale { (40, halving(8, 4)) } else { (160, halving(8, 6)) };
    let fig = |n: &str, kind, method, scheme| {
        let mut p = plan(n, kind, method, scheme, 1000, halving(10, 5));
        p.measure = Measure::Global;
        p.repeats = 3;
        p
    };
    let plans = match name {
        "table6" => vec![one_d("table6", DirichletBoth, "rk2", Scheme::Standard)],
        "table6dn" => vec![one_d("table6dn", DirichletLeftNeumannRight, "rk2", Scheme::Standard)],
        "table7" => vec![one_d("table7", DirichletBoth, "rk2", corrected(1, Identity))],
        "table7dn" => vec![one_d("table7dn", DirichletLeftNeumannRight, "rk2", corrected(1, Differenced))],
        "table8" => vec![one_d("table8", DirichletBoth, "rk2", corrected(2, Identity))],
        "table8dn" => vec![one_d("table8dn", DirichletLeftNeumannRight, "rk2", corrected(2, Differenced))],
        "table9" => vec![plan("table9", Dirichlet2D, "krogstad", Scheme::Standard, h2, k2)],
        "table10" => vec![plan("table10", Dirichlet2D, "krogstad", corrected(3, Differenced), h2, k2)],
        "fig1" | "fig1dn" => {
            let (kind, mode) = if name == "fig1" { (DirichletBoth, Identity) } else { (DirichletLeftNeumannRight, Differenced) };
            vec![
                fig(&format!("{name}-rk2"), kind, "rk2", Scheme::Standard),
                fig(&format!("{name}-rk2b"), kind, "rk2b", Scheme::Standard),
                fig(&format!("{name}-rk2-p1"), kind, "rk2", corrected(1, mode)),
                fig(&format!("{name}-rk2-p2"), kind, "rk2", corrected(2, mode)),
            ]
        }
        "fig2" => {
            let mut std = plan("fig2-krogstad", Dirichlet2D, "krogstad", Scheme::Standard, h2, k2.clone());
            let mut cor = plan("fig2-krogstad-p3", Dirichlet2D, "krogstad", corrected(3, Differenced), h2, k2);
            for p in [&mut std, &mut cor] {
                p.measure = Measure::Global;
                p.repeats = 3;
            }
            vec![std, cor]
        }
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(plans)
}

struct Section {
    line: usize,
    plan: StudyPlan,
    seen: Vec<&'static str>,
    order: Option<usize>,
    mode: Option<BoundaryMode>,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Parses the text format. Unknown keys, sections and values are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut presets: Vec<(usize, String)> = Vec::new();
        let mut desk_scale = false;
        let mut current: Option<Section> = None;
        let mut sections = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
                let name = header
                    .strip_prefix("study")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| err(format!("expected `[study NAME]`, found `[{header}]`")))?;
                sections.extend(current.take());
                let mut p = plan(name, BoundaryKind::DirichletBoth, "rk2", Scheme::Standard, 0, Vec::new());
                p.problem.clear();
                current = Some(Section { line: line_no, plan: p, seen: Vec::new(), order: None, mode: None });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let uint = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{key}` expects a non-negative integer, got `{v}`")));
            let num = |v: &str| parse_number(v).map_err(&err);
            let boolean = |v: &str| match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(err(format!("`{key}` expects true or false, got `{v}`"))),
            };
            let Some(Section { plan: p, seen, order, mode, .. }) = current.as_mut() else {
                match key {
                    "output" => cfg.output_dir = Some(PathBuf::from(value)),
                    "threads" => cfg.threads = uint(value)?.max(1),
                    "plot" => cfg.plot = boolean(value)?,
                    "preset" => presets.push((line_no, value.to_string())),
                    "desk_scale" => desk_scale = boolean(value)?,
                    _ => return Err(err(format!("unknown top-level key `{key}`"))),
                }
                continue;
            };
            const KEYS: [&str; 15] = [
                "problem", "boundary", "method", "scheme", "p", "mode", "intervals", "k", "t_final", "measure",
                "repeats", "engine", "krylov_tolerance", "krylov_max_dim", "krylov_max_substeps",
            ];
            let Some(&k) = KEYS.iter().find(|&&k| k == key) else {
                return Err(err(format!("unknown study key `{key}`")));
            };
            if seen.contains(&k) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(k);
            match k {
                "problem" => p.problem = value.to_string(),
                "boundary" => {
                    p.kind = BoundaryKind::parse(value).ok_or_else(|| err(format!("unknown boundary kind `{value}`")))?
                }
                "method" => p.method = value.to_string(),
                "scheme" => {
                    p.scheme = match value {
                        "standard" => Scheme::Standard,
                        "corrected" => Scheme::Corrected { p: 0, mode: BoundaryMode::Exact },
                        _ => return Err(err(format!("unknown scheme `{value}`"))),
                    }
                }
                "p" => *order = Some(uint(value)?),
                "mode" => *mode = Some(BoundaryMode::parse(value).ok_or_else(|| err(format!("unknown mode `{value}`")))?),
                "intervals" => p.intervals = uint(value)?,
                "k" => p.k_ladder = value.split(',').map(|v| num(v.trim())).collect::<Result<_>>()?,
                "t_final" => p.t_final = num(value)?,
                "measure" => p.measure = Measure::parse(value).ok_or_else(|| err(format!("unknown measure `{value}`")))?,
                "repeats" => p.repeats = uint(value)?,
                "engine" => p.engine = EngineKind::parse(value).ok_or_else(|| err(format!("unknown engine `{value}`")))?,
                "krylov_tolerance" => p.krylov.tolerance = num(value)?,
                "krylov_max_dim" => p.krylov.max_subspace_dim = uint(value)?,
                "krylov_max_substeps" => p.krylov.max_substeps = uint(value)?,
                _ => unreachable!(),
            }
        }
        sections.extend(current.take());

        for (line_no, name) in presets {
            let plans = preset(&name, desk_scale).map_err(|e| match e {
                Error::UnknownPreset(n) => Error::Parse { line: line_no, message: format!("unknown preset `{n}`") },
                e => e,
            })?;
            cfg.plans.extend(plans);
        }
        for Section { line, plan: mut p, seen, order, mode } in sections {
            let err = |message: String| Error::Parse { line, message };
            for required in ["problem", "boundary", "method", "scheme", "intervals", "k"] {
                if !seen.contains(&required) {
                    return Err(err(format!("study `{}` is missing `{required}`", p.name)));
                }
            }
            p.scheme = match (p.scheme, order, mode) {
                (Scheme::Standard, None, None) => Scheme::Standard,
                (Scheme::Standard, _, _) => return Err(err(format!("study `{}`: `p` and `mode` need scheme = corrected", p.name))),
                (Scheme::Corrected { .. }, Some(order), Some(mode)) => Scheme::Corrected { p: order, mode },
                _ => return Err(err(format!("study `{}`: corrected scheme needs `p` and `mode`", p.name))),
            };
            cfg.plans.push(p);
        }
        if cfg.plans.is_empty() {
            return Err(Error::Config("configuration defines no studies".into()));
        }
        for p in &cfg.plans {
            p.validate()?;
        }
        Ok(cfg)
    }

    /// The effective configuration with every study spelled out; parsing it
    /// gives back an identical configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(s, "output = {}", dir.display());
        }
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "plot = {}", self.plot);
        for p in &self.plans {
            let _ = writeln!(s, "\n[study {}]", p.name);
            let _ = writeln!(s, "problem = {}", p.problem);
            let _ = writeln!(s, "boundary = {}", p.kind.name());
            let _ = writeln!(s, "method = {}", p.method);
            let _ = writeln!(s, "scheme = {}", p.scheme.name());
            if let Scheme::Corrected { p: order, mode } = p.scheme {
                let _ = writeln!(s, "p = {order}");
                let _ = writeln!(s, "mode = {}", mode.name());
            }
            let _ = writeln!(s, "intervals = {}", p.intervals);
            let ks: Vec<String> = p.k_ladder.iter().map(|&k| fmt_f64(k)).collect();
            let _ = writeln!(s, "k = {}", ks.join(", "));
            let _ = writeln!(s, "t_final = {}", fmt_f64(p.t_final));
            let _ = writeln!(s, "measure = {}", p.measure.name());
            let _ = writeln!(s, "repeats = {}", p.repeats);
            let _ = writeln!(s, "engine = {}", p.engine.name());
            let _ = writeln!(s, "krylov_tolerance = {}", fmt_f64(p.krylov.tolerance));
            let _ = writeln!(s, "krylov_max_dim = {}", p.krylov.max_subspace_dim);
            let _ = writeln!(s, "krylov_max_substeps = {}", p.krylov.max_substeps);
        }
        s
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eerk::config::{preset, RunConfig, PRESET_NAMES};
use eerk::harness::{
    plot_script, reports_csv, run_study_parallel, ConvergenceReport, EfficiencyCurve, EfficiencyPoint, Measure,
};
use eerk::methods::MethodTableau;
use eerk::Error;

/// Output directory override, below `--output` and above the config file.
const OUTPUT_ENV: &str = "EERK_OUTPUT_DIR";

/// Exit codes.
mod code {
    pub const CONFIG: u8 = 3;
    pub const UNKNOWN_PRESET: u8 = 4;
    pub const INVALID_TABLEAU: u8 = 5;
    pub const RUN: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Parser)]
#[command(name = "eerk", version, about = "Convergence studies for exponential Runge-Kutta methods with boundary corrections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Directory for CSV, plot script and effective configuration.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Studies run in parallel, one time step per thread.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip the plotting script.
    #[arg(long)]
    no_plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the studies in a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a built-in reproduction preset.
    Preset {
        name: String,
        /// Two-dimensional presets at h = 1/40, k = 1/8 ... 1/64.
        #[arg(long)]
        desk_scale: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print the preset names.
    ListPresets,
    /// Check a tableau definition file.
    ValidateTableau { file: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Config(_) => code::CONFIG,
        Error::UnknownPreset(_) => code::UNKNOWN_PRESET,
        Error::InvalidTableau(_) => code::INVALID_TABLEAU,
        Error::Io(_) => code::IO,
        _ => code::RUN,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn print_report(r: &ConvergenceReport) {
    println!("\n{} ({} {}, h = 1/{})", r.plan.name, r.plan.method, r.plan.scheme.name(), r.plan.intervals);
    println!("{:>10} {:>12} {:>7} {:>12} {:>7} {:>10}", "k", "local", "order", "global", "order", "cpu_ms");
    for (i, row) in r.rows.iter().enumerate() {
        let order = |o: &[f64]| if i == 0 { String::new() } else { o.get(i - 1).map(|x| format!("{x:.2}")).unwrap_or_default() };
        let err = |e: Option<f64>| e.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
        let floor = if row.floor_limited { "  (space floor)" } else { "" };
        println!(
            "{:>10} {:>12} {:>7} {:>12} {:>7} {:>10.1}{floor}",
            format!("1/{}", (1.0 / row.k).round()),
            err(row.local_error),
            order(&r.order_local),
            err(row.global_error),
            order(&r.order_global),
            row.cpu_ms
        );
    }
}

fn print_efficiency(reports: &[ConvergenceReport]) {
    let curves: Vec<EfficiencyCurve> = reports
        .iter()
        .filter(|r| r.plan.measure == Measure::Global)
        .map(|r| EfficiencyCurve {
            label: r.plan.name.clone(),
            points: r
                .rows
                .iter()
                .filter_map(|row| row.global_error.map(|error| EfficiencyPoint { k: row.k, error, cpu_ms: row.cpu_ms }))
                .collect(),
        })
        .collect();
    if curves.len() < 2 {
        return;
    }
    println!("\ncost at global error 1e-5 (log-log interpolation):");
    for c in &curves {
        if let Some(ms) = c.cost_at(1e-5) {
            println!("  {:<24} {ms:>12.1} ms", c.label);
        }
    }
}

fn execute(mut cfg: RunConfig, stem: &str, out: OutputArgs) -> Result<(), Error> {
    if let Some(t) = out.threads {
        cfg.threads = t.max(1);
    }
    if out.no_plot {
        cfg.plot = false;
    }
    let dir = out
        .output
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let mut reports = Vec::with_capacity(cfg.plans.len());
    for plan in &cfg.plans {
        let report = run_study_parallel(plan, cfg.threads)?;
        print_report(&report);
        reports.push(report);
    }
    print_efficiency(&reports);
    write_outputs(&dir, stem, &cfg, &reports)
}

fn write_outputs(dir: &Path, stem: &str, cfg: &RunConfig, reports: &[ConvergenceReport]) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, reports_csv(reports))?;
    std::fs::write(dir.join(format!("{stem}.effective.cfg")), cfg.to_text())?;
    println!("\nwrote {}", csv.display());
    if cfg.plot {
        let script = dir.join(format!("{stem}_plot.py"));
        std::fs::write(&script, plot_script(&format!("{stem}.csv")))?;
        println!("wrote {}", script.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListPresets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::ValidateTableau { file } => std::fs::read_to_string(&file).map_err(Error::from).and_then(|text| {
            MethodTableau::parse(&text)
                .map(|t| println!("ok: {} ({} stages, order {})", t.name, t.stages(), t.nonstiff_order))
                .map_err(|e| match e {
                    Error::InvalidTableau(_) => e,
                    other => Error::InvalidTableau(other.to_string()),
                })
        }),
        Command::Preset { name, desk_scale, out } => preset(&name, desk_scale).and_then(|plans| {
            let cfg = RunConfig { plans, ..RunConfig::default() };
            execute(cfg, &name, out)
        }),
        Command::Run { config, out } => std::fs::read_to_string(&config)
            .map_err(Error::from)
            .and_then(|text| RunConfig::parse(&text))
            .and_then(|cfg| {
                let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
                execute(cfg, &stem, out)
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

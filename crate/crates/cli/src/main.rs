use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smoothflow_cli::bench::{self, CommandReport};
use smoothflow_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "smoothflow", version, about = "Smoothed supremum functions and inertial flows")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; each command writes into its own subdirectory [default: smoothflow-out].
    #[arg(long, global = true, env = "SMOOTHFLOW_OUT")]
    out: Option<PathBuf>,
    /// Overrides the configured seed [config default: 2].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print failures.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct FlowOverrides {
    /// Damping coefficient α [config default: 3.1; ignored by run-gradflow].
    #[arg(long)]
    alpha: Option<f64>,
    /// Final time T [config defaults: bench-moo 50, bench-dro 20, run-inertial 50, run-gradflow 500].
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Schedule exponents r in μ(t) = c·t^(−r), comma separated [config defaults: bench-moo and
    /// bench-dro 2.1,3,5; run-inertial 3; run-gradflow 1.5,3].
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate φ and φ_μ for the one-dimensional examples.
    SmoothProfile,
    /// Multiobjective quadratic benchmark.
    BenchMoo(FlowOverrides),
    /// Moment-constrained DRO benchmark.
    BenchDro(FlowOverrides),
    /// Inertial flow on the configured problem.
    RunInertial(FlowOverrides),
    /// First-order smoothed gradient flow on the configured problem.
    RunGradflow(FlowOverrides),
    /// Report which schedule assumptions hold.
    CheckSchedule {
        /// Exponents to check, comma separated [config default: 2.1,2,1.5].
        #[arg(long, value_delimiter = ',')]
        r: Option<Vec<f64>>,
    },
    /// Compute and cache the reference minimizer of the configured problem.
    ReferenceSolve,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn apply(o: &FlowOverrides, alpha: &mut f64, t_end: &mut f64, r: &mut Vec<f64>) {
    if let Some(a) = o.alpha {
        *alpha = a;
    }
    if let Some(t) = o.t_end {
        *t_end = t;
    }
    if let Some(rs) = &o.r {
        *r = rs.clone();
    }
}

fn run(cli: &Cli) -> anyhow::Result<Option<CommandReport>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    match &cli.command {
        Command::BenchMoo(o) => apply(o, &mut cfg.moo.alpha, &mut cfg.moo.t_end, &mut cfg.moo.r),
        Command::BenchDro(o) => apply(o, &mut cfg.dro.alpha, &mut cfg.dro.t_end, &mut cfg.dro.r),
        Command::RunInertial(o) => apply(o, &mut cfg.flow.alpha, &mut cfg.flow.t_end, &mut cfg.flow.r),
        Command::RunGradflow(o) => {
            let mut unused = 0.0;
            apply(o, &mut unused, &mut cfg.gradflow.t_end, &mut cfg.gradflow.r)
        }
        Command::CheckSchedule { r: Some(r) } => cfg.schedule.r = r.clone(),
        _ => {}
    }
    cfg.validate()?;
    let base = Path::new("smoothflow-out");
    let report = match &cli.command {
        Command::SmoothProfile => bench::smooth_profile(&cfg, base)?,
        Command::BenchMoo(_) => bench::bench_moo(&cfg, base)?,
        Command::BenchDro(_) => bench::bench_dro(&cfg, base)?,
        Command::RunInertial(_) => bench::run_inertial(&cfg, base)?,
        Command::RunGradflow(_) => bench::run_gradflow(&cfg, base)?,
        Command::CheckSchedule { .. } => bench::check_schedule(&cfg, base)?,
        Command::ReferenceSolve => bench::reference_solve_cmd(&cfg, base)?,
        Command::ShowConfig => {
            print!("{}", toml::to_string(&cfg)?);
            return Ok(None);
        }
    };
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            let mut seen = std::collections::HashSet::new();
            for w in report.warnings.iter().filter(|w| seen.insert(w.as_str())) {
                eprintln!("warning: {w}");
            }
            for c in &report.checks {
                if !c.pass || !cli.quiet {
                    println!("[{}] {}: {}", if c.pass { "ok" } else { "FAILED" }, c.name, c.detail);
                }
            }
            if !cli.quiet {
                for f in &report.files {
                    println!("wrote {}", f.display());
                }
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

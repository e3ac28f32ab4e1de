mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, Failure, Outcome, Report};
use config::ExperimentConfig;

/// Correlation decay experiments for suspension flows over nonuniformly expanding maps.
#[derive(Parser, Debug)]
#[command(name = "flowdecay", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat warnings as failures.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Build the induced map and its partition.
    Induce,
    /// Return-time tail and its power-law fit.
    Tail,
    /// Young tower levels and measures.
    Tower,
    /// Truncated towers and their identities.
    Truncate,
    /// Correlations of the map from the transfer operator.
    CorrMap,
    /// Monte Carlo correlations of the flow.
    CorrFlow,
    /// Return-time truncation error against its bound.
    TruncError,
    /// Roof truncation error against its bound.
    RoofTrunc,
    /// Twisted resolvent norms along vertical lines.
    Resolvent,
    /// Renewal equation residuals.
    Renewal,
    /// Tower operator decomposition residuals.
    Decomp,
    /// Laplace transform of the correlation, series against Monte Carlo.
    Laplace,
    /// Rate budget and the dominant term.
    Budget,
    /// Periodic data and the Diophantine scan.
    Periodic,
    /// Approximate eigenfunction search.
    Eigenfun,
    /// Run the acceptance suite.
    Accept,
}

fn run(cli: &Cli) -> Outcome<Report> {
    let mut cfg = match (&cli.config, cli.cmd) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Cmd::Accept) => ExperimentConfig::acceptance_profile(),
        (None, _) => return Err(Failure::Config("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    let seed = cfg.seed.ok_or_else(|| Failure::Config("a seed is required (config `seed` or --seed)".into()))?;
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    commands::ensure_dir(&out)?;
    let ctx = Ctx { cfg, out, seed };
    match cli.cmd {
        Cmd::Induce => commands::induce(&ctx),
        Cmd::Tail => commands::tail(&ctx),
        Cmd::Tower => commands::tower(&ctx),
        Cmd::Truncate => commands::truncate(&ctx),
        Cmd::CorrMap => commands::corr_map(&ctx),
        Cmd::CorrFlow => commands::corr_flow(&ctx),
        Cmd::TruncError => commands::trunc_error(&ctx),
        Cmd::RoofTrunc => commands::roof_trunc(&ctx),
        Cmd::Resolvent => commands::resolvent(&ctx),
        Cmd::Renewal => commands::renewal(&ctx),
        Cmd::Decomp => commands::decomp(&ctx),
        Cmd::Laplace => commands::laplace(&ctx),
        Cmd::Budget => commands::budget(&ctx),
        Cmd::Periodic => commands::periodic(&ctx),
        Cmd::Eigenfun => commands::eigenfun(&ctx),
        Cmd::Accept => commands::accept(&ctx, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(rep) => {
            for l in &rep.lines {
                println!("{l}");
            }
            for (name, ok) in &rep.checks {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
            let failed = rep.failed();
            if !failed.is_empty() {
                eprintln!("{} check(s) failed", failed.len());
                ExitCode::from(2)
            } else if cli.strict && !rep.warnings.is_empty() {
                eprintln!("warnings are failures under --strict");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

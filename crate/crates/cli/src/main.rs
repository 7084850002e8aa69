mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{parse_gammas, RunConfig};
use output::Outputs;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "mtlab", version, about = "Concentrating solutions of -Δu = λ u e^{u²}: solvers and checks")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "MTLAB_THREADS")]
    threads: Option<usize>,
    /// Seed for multistart searches.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Bubble moments and expansion constants.
    Constants {
        #[arg(long)]
        moments: bool,
        #[arg(long)]
        full: bool,
    },
    /// Radial branch on the unit disk over an amplitude grid.
    RadialBranch {
        /// Comma-separated amplitudes, ascending.
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Radial linearized eigenvalues of one angular mode.
    Spectrum {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        mode: Option<u32>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Finite-element solve on a domain read from JSON.
    FemSolve {
        /// Domain JSON; defaults to the config's `domain`.
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Boundary-form identities on Green functions and a radial solution.
    Pohozaev {
        #[arg(long)]
        report: bool,
    },
    /// Critical points of the Kirchhoff–Routh function.
    Kr {
        /// Domain JSON; defaults to the config's `domain`.
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Fit branch data against the expansions.
    Report {
        #[arg(long)]
        branch: PathBuf,
        #[arg(long)]
        constants: PathBuf,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Constants { .. } => "constants",
            Cmd::RadialBranch { .. } => "radial-branch",
            Cmd::Spectrum { .. } => "spectrum",
            Cmd::FemSolve { .. } => "fem-solve",
            Cmd::Pohozaev { .. } => "pohozaev",
            Cmd::Kr { .. } => "kr",
            Cmd::Report { .. } => "report",
        }
    }
}

fn domain_spec(path: Option<&std::path::Path>, cfg: &mut RunConfig) -> mtlab_core::Result<config::DomainSpec> {
    if let Some(p) = path {
        cfg.domain = Some(config::load_domain(p)?);
    }
    commands::require(cfg.domain.clone(), "domain")
}

fn run(cli: &Cli, out: &mut Outputs, cfg: &mut RunConfig) -> mtlab_core::Result<()> {
    let tol = cfg.tol.unwrap_or(commands::DEFAULT_TOL);
    match &cli.cmd {
        Cmd::Constants { moments, full } => commands::constants(out, *moments, *full),
        Cmd::RadialBranch { gammas, tol: t } => {
            if let Some(g) = gammas {
                cfg.gammas = Some(parse_gammas(g)?);
            }
            let g = commands::require(cfg.gammas.clone(), "gammas")?;
            commands::radial_branch(out, &g, t.unwrap_or(tol))
        }
        Cmd::Spectrum { gamma, mode, count } => {
            let gamma = commands::require(gamma.or(cfg.gamma), "gamma")?;
            commands::spectrum(out, gamma, mode.or(cfg.mode).unwrap_or(0), count.or(cfg.count).unwrap_or(2), tol)
        }
        Cmd::FemSolve { domain, gamma, resolution } => {
            if resolution.is_some() {
                cfg.resolution = *resolution;
            }
            let gamma = commands::require(gamma.or(cfg.gamma), "gamma")?;
            let spec = domain_spec(domain.as_deref(), cfg)?;
            commands::fem_solve(out, &spec, gamma, cfg)
        }
        Cmd::Pohozaev { .. } => commands::pohozaev(out),
        Cmd::Kr { domain, k, seeds } => {
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            cfg.seed = Some(seed);
            let spec = domain_spec(domain.as_deref(), cfg)?;
            commands::kr(out, &spec, k.or(cfg.k).unwrap_or(1), seeds.or(cfg.seeds).unwrap_or(200), seed)
        }
        Cmd::Report { branch, constants } => commands::report(out, branch, constants),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let fail = |e: mtlab_core::Error| {
        eprintln!("error[{}]: {e}", e.code());
        ExitCode::from(2)
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(config::invalid("threads", "must be at least 1"));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match RunConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut out = match Outputs::new(&cli.out) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let result = run(&cli, &mut out, &mut cfg);
    let status = match &result {
        Ok(()) if out.all_ok() => "ok",
        Ok(()) => "checks_failed",
        Err(e) => e.code(),
    };
    let manifest = json!({
        "command": cli.cmd.name(),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "artifacts": out.artifacts,
        "checks": out.checks,
        "status": status,
    });
    if let Err(e) = out.write_json("manifest.json", &manifest) {
        return fail(e);
    }
    match result {
        Err(e) => fail(e),
        Ok(()) => {
            for c in &out.checks {
                println!("{:<7} {}", c.verdict.as_str(), c.id);
            }
            if out.all_ok() { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use surfns_cli::config::{parse_over, Command, RunConfig};
use surfns_cli::{preset, run, PRESETS};

#[derive(Parser)]
#[command(name = "surfns", version, about = "Surface calculus and thin-film Navier-Stokes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from a shipped preset; config file keys override it
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Run the operator identity suite
    Verify,
    /// IMEX solve of the limit equations (sphere)
    Solve,
    /// Galerkin solve in eigenfields of the shifted energy form (sphere)
    Galerkin,
    /// Weighted and general Helmholtz-Leray projection checks
    Helmholtz,
    /// Thin-domain identities and epsilon-rate sweep
    Thinfilm,
    /// Run whatever command the config or preset names
    Run,
    /// List shipped presets
    Presets,
}

fn load(cli: &Cli) -> Result<RunConfig, surfns::Error> {
    let base = match &cli.preset {
        Some(name) => preset(name).ok_or_else(|| {
            surfns::Error::Config(format!("unknown preset '{name}' ({})", PRESETS.map(|(n, _)| n).join(", ")))
        })?,
        None => RunConfig::default(),
    };
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_over(base, &text)?;
    let wanted = match cli.command {
        Sub::Verify => Some(Command::Verify),
        Sub::Solve => Some(Command::Solve),
        Sub::Galerkin => Some(Command::Galerkin),
        Sub::Helmholtz => Some(Command::Helmholtz),
        Sub::Thinfilm => Some(Command::Thinfilm),
        Sub::Run | Sub::Presets => None,
    };
    if let Some(c) = wanted {
        let explicit = cli.preset.is_some() || text.lines().any(|l| l.trim_start().starts_with("command"));
        if explicit && cfg.command != c {
            return Err(surfns::Error::Config(format!(
                "subcommand {} conflicts with command={} from the config",
                c.name(),
                cfg.command.name()
            )));
        }
        cfg.command = c;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    // re-validate after overrides
    Ok(parse_over(RunConfig::default(), &cfg.to_text())?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if matches!(cli.command, Sub::Presets) {
        for (name, text) in PRESETS {
            println!("{name}: {}", text.lines().next().unwrap_or(""));
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = std::env::var("SURFNS_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            error!("could not size the worker pool: {e}");
        }
    }
    let outcome = load(&cli).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(o) => {
            for f in &o.files {
                info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmce_cli::commands;
use mmce_cli::config::RunConfig;
use mmce_cli::CliError;

/// Time-varying mmWave MIMO-OFDM channel estimation: simulate pilot
/// acquisition, run the tensor estimators, benchmark against the
/// Cramer-Rao bound.
#[derive(Parser)]
#[command(name = "mmce", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (also settable via MMCE_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// SNR value(s) in dB; repeatable. One value sets the operating SNR,
    /// several define the bench/CRB grids.
    #[arg(long = "snr-db", global = true)]
    snr_db: Vec<f64>,

    /// Monte Carlo trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Number of propagation paths to draw.
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Pilot subcarrier count K.
    #[arg(long = "k-pilot", global = true)]
    k_pilot: Option<usize>,

    /// Mini-slot count M.
    #[arg(long = "m-slots", global = true)]
    m_slots: Option<usize>,

    /// Comma-separated estimator list: esprit,als.
    #[arg(long, global = true, value_delimiter = ',')]
    estimators: Option<Vec<String>>,

    /// Scenario file with explicit path parameters.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Golden-section refinement around the coarse angle argmax.
    #[arg(long = "refine-angles", global = true)]
    refine_angles: bool,

    /// Gain convention for the CRB: split (6L) or paper (5L).
    #[arg(long = "crb-mode", global = true)]
    crb_mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw (or load) paths, build the observation tensor, write it out.
    Simulate,
    /// Run the estimators on a simulated run directory.
    Estimate {
        /// Directory produced by `mmce simulate`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Monte Carlo sweep with per-trial logs and aggregate tables.
    Bench {
        /// Sweep axis: snr-db | k-pilot | m-slots | l-paths.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values (defaults to the SNR flags or config).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Append Cramer-Rao columns.
        #[arg(long = "with-crb")]
        with_crb: bool,
    },
    /// Cramer-Rao bounds over an SNR grid.
    Crb,
    /// Evaluate the decomposition uniqueness conditions.
    CheckUniqueness,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(CliError::io)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.system.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.bench.trials = trials;
    }
    if let Some(paths) = cli.paths {
        cfg.paths.l_paths = paths;
    }
    if let Some(k) = cli.k_pilot {
        cfg.system.k_pilot = k;
    }
    if let Some(m) = cli.m_slots {
        cfg.system.m_slots = m;
    }
    if let Some(est) = &cli.estimators {
        cfg.estimate.estimators = est.clone();
    }
    if cli.refine_angles {
        cfg.estimate.refine_angles = true;
    }
    if let Some(mode) = &cli.crb_mode {
        cfg.crb.mode = mode.clone();
    }
    match cli.snr_db.len() {
        0 => {}
        1 => cfg.system.snr_db = cli.snr_db[0],
        _ => {
            cfg.system.snr_db = cli.snr_db[0];
            cfg.bench.values = cli.snr_db.clone();
            cfg.crb.snr_grid_db = cli.snr_db.clone();
        }
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("MMCE_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("mmce-out")
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = resolve_config(cli)?;
    let dir = out_dir(cli);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let outputs = match &cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, cli.scenario.as_deref(), &dir)?,
        Command::Estimate { input } => commands::cmd_estimate(&cfg, input, &dir)?,
        Command::Bench {
            axis,
            values,
            with_crb,
        } => {
            if let Some(a) = axis {
                cfg.bench.axis = a.clone();
            }
            if let Some(v) = values {
                cfg.bench.values = v.clone();
            }
            if *with_crb {
                cfg.bench.with_crb = true;
            }
            commands::cmd_bench(&cfg, &dir)?
        }
        Command::Crb => commands::cmd_crb(&cfg, cli.scenario.as_deref(), &dir)?,
        Command::CheckUniqueness => commands::cmd_check_uniqueness(&cfg, &dir)?,
    };
    for path in outputs {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trion_cli::output::DataFormat;
use trion_cli::{config, reproduce, scenario};

/// Simulator and inference toolkit for a four-level quantum-dot spin system
/// with polarization-selective waveguide coupling.
#[derive(Parser)]
#[command(name = "trion", version, about, propagate_version = true)]
struct Cli {
    /// Master seed override for the noise streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for data files and manifests.
    #[arg(long, global = true, env = "TRION_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for noise realizations and sweep points (0 = auto).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Data table format.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation scenario from a configuration file.
    Simulate {
        /// Scenario kind; must match the configuration.
        #[arg(value_parser = ["pumping", "saturation", "rabi", "ramsey", "transmission", "spectrum"])]
        kind: String,
        /// Scenario configuration (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a model to a two-column CSV data file.
    Fit {
        #[arg(value_parser = ["exponential", "saturation", "ramsey"])]
        kind: String,
        /// Data file: (time_ns, rate) for exponential, (power, rate) for
        /// saturation, (tau_ns, amplitude) for ramsey.
        #[arg(long)]
        data: PathBuf,
        /// Fixed gamma_0 for saturation fits, e.g. "3.07 ns^-1".
        #[arg(long)]
        gamma0: Option<String>,
        /// Fixed spectral-diffusion sigma for saturation fits, e.g. "140 MHz".
        #[arg(long)]
        sigma: Option<String>,
        /// Constant background level already present in the data.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
    },
    /// Run a bundled reference experiment and print the comparison table.
    Reproduce {
        /// One of: fig2, fig3a, fig3b, fig4b, fig4c.
        id: String,
    },
    /// Validate a configuration file and report all problems.
    Validate {
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // ignore failure when a pool already exists (e.g. repeated init in
        // tests); determinism does not depend on the thread count
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let format: DataFormat = match cli.format.parse() {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };

    let result = match &cli.command {
        Command::Simulate { kind, config: path } => {
            simulate(kind, path, cli.seed, &cli.out, format)
        }
        Command::Fit {
            kind,
            data,
            gamma0,
            sigma,
            background,
        } => fit(kind, data, gamma0.as_deref(), sigma.as_deref(), *background),
        Command::Reproduce { id } => run_reproduce(id, cli.seed, &cli.out),
        Command::Validate { config: path } => validate(path),
    };
    match result {
        Ok(code) => code,
        Err(msg) => fail(&msg),
    }
}

/// Machine-readable error on stderr, nonzero exit.
fn fail(message: &str) -> ExitCode {
    let err = serde_json::json!({ "error": message });
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn simulate(
    kind: &str,
    path: &Path,
    seed: Option<u64>,
    out: &Path,
    format: DataFormat,
) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg = config::parse_str(&text).map_err(|e| e.to_string())?;
    if cfg.experiment.kind != kind {
        return Err(format!(
            "config kind {:?} does not match requested {kind:?}",
            cfg.experiment.kind
        ));
    }
    let artifacts =
        scenario::run_scenario(&text, seed, out, format).map_err(|e| e.to_string())?;
    for f in &artifacts.files {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn fit(
    kind: &str,
    data: &Path,
    gamma0: Option<&str>,
    sigma: Option<&str>,
    background: f64,
) -> Result<ExitCode, String> {
    let parse_angular = |s: &str| -> Result<f64, String> {
        trion_core::units::Quantity::parse(s)
            .and_then(|q| q.rate_per_ns())
            .map_err(|e| format!("{s:?}: {e}"))
    };
    let g0 = gamma0.map(parse_angular).transpose()?;
    let sg = sigma
        .map(|s| {
            trion_core::units::Quantity::parse(s)
                .and_then(|q| q.angular_rad_ns())
                .map_err(|e| format!("{s:?}: {e}"))
        })
        .transpose()?;
    let value =
        scenario::fit_file(kind, data, g0, sg, background).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn run_reproduce(id: &str, seed: Option<u64>, out: &Path) -> Result<ExitCode, String> {
    let rows = reproduce::reproduce(id, seed, out).map_err(|e| e.to_string())?;
    print!("{}", reproduce::render_table(&rows));
    if rows.iter().all(|r| r.pass) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn validate(path: &Path) -> Result<ExitCode, String> {
    let cfg = config::load_path(path).map_err(|e| e.to_string())?;
    config::resolve(&cfg, None).map_err(|e| e.to_string())?;
    println!("OK: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

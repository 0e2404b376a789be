use std::path::PathBuf;
use std::process::ExitCode;

use accsurf::commands::{calibrate, estimate, explore, report, ten_arm};
use accsurf::{CliError, CliResult, ExperimentConfig, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "accsurf",
    version,
    about = "Accuracy-surface estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated run seeds, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Added to every run seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Continue exploration runs from their saved state.
    #[arg(long, global = true)]
    resume: bool,
    /// Stop exploration runs after this many rounds; continue with --resume.
    #[arg(long, global = true)]
    max_rounds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Ten-arm setting with hand-set supports.
    ReplicateTenArm,
    /// Fit every estimator on a fixed labeled sample.
    Estimate,
    /// Budgeted active exploration.
    Explore,
    /// Compare calibration modes by held-out NLL.
    Calibrate,
    /// Aggregate metric files into seed means.
    Report,
    /// Print the resolved config as JSON.
    ShowConfig,
}

fn resolve(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seeds) = &c.seeds {
        cfg.seeds = seeds.clone();
        cfg.ten_arm.seeds = seeds.clone();
    }
    if c.seed_offset != 0 {
        for s in cfg.seeds.iter_mut().chain(cfg.ten_arm.seeds.iter_mut()) {
            *s += c.seed_offset;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(&cli.common)?;
    let mut opts = RunOptions {
        resume: cli.common.resume,
        max_rounds: cli.common.max_rounds,
        ..RunOptions::default()
    };
    if let Some(j) = cli.common.jobs {
        opts.jobs = j;
    }
    let result = match cli.command {
        Command::ReplicateTenArm => ten_arm::replicate_ten_arm(&cfg, &opts).map(|r| {
            for m in &r.methods {
                println!(
                    "{:<12} psi max/min {:.2}  mse {:.3}  var {:.3}  length {:.2}",
                    m.method.name(),
                    m.psi_ratio(),
                    m.bias_variance.mse,
                    m.bias_variance.variance,
                    m.kernel_length
                );
            }
        }),
        Command::Estimate => estimate::estimate(&cfg, &opts).map(|r| {
            for &k in &cfg.estimators {
                println!(
                    "{:<12} macro {:.3}  worst {:.3}",
                    k.name(),
                    r.mean_of(k, |m| m.macro_mse * 100.0),
                    r.mean_of(k, |m| m.worst_mse * 100.0)
                );
            }
        }),
        Command::Explore => explore::explore(&cfg, &opts).map(|runs| {
            for r in runs {
                println!(
                    "seed {} {:<22} final macro {:.3}",
                    r.seed,
                    r.label(),
                    r.final_macro_mse() * 100.0
                );
            }
        }),
        Command::Calibrate => calibrate::calibrate(&cfg, &opts).map(|r| {
            for row in &r.rows {
                println!("seed {} {:<5} nll {:.4}", row.seed, row.mode, row.test_nll);
            }
        }),
        Command::Report => report::report(&cfg).map(|rows| {
            for r in rows {
                println!(
                    "{:<8} {:<22} macro {:.3}  worst {:.3}",
                    r.source, r.method, r.macro_mse_x100, r.worst_mse_x100
                );
            }
        }),
        Command::ShowConfig => cfg.to_json().map(|s| println!("{s}")),
    };
    if let Err(CliError::Numerical { cell, source }) = &result {
        write_diagnostics(&cfg, cell, &source.to_string());
    }
    result
}

fn write_diagnostics(cfg: &ExperimentConfig, cell: &str, message: &str) {
    let body = serde_json::json!({ "cell": cell, "error": message });
    let path = cfg.output_dir.join("diagnostics.json");
    let written = std::fs::create_dir_all(&cfg.output_dir).and_then(|_| {
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&body).unwrap_or_default(),
        )
    });
    if let Err(e) = written {
        eprintln!("could not write {}: {e}", path.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

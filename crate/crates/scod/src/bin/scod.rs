use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scod::cli::{self, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "scod",
    version,
    about = "Weak-segmentation labels and adaptive IoU loss tooling"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-layer area ranges derived from the anchor sizes.
    Ranges,
    /// Write weak-segmentation label rasters (PGM) for every image and layer.
    Labels {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample box pairs and write IoU / AIoU loss rows as CSV.
    Fig4 {
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        #[arg(long, default_value = "1.0,0.9,0.8,0.7,0.6")]
        betas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Negative control: flip the sign of the analytic box gradient.
        #[arg(long, hide = true)]
        flip_sign: bool,
    },
    /// Single-box regression trials per squeeze ratio, as CSV.
    BetaSweep {
        #[arg(long, default_value = "1.0,0.9,0.8,0.7,0.6")]
        betas: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy detector on a synthetic scene and write the loss trajectory.
    TrainToy {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn positive(flag: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        return Err(CliError::Usage(format!("{flag} must be >= 1")));
    }
    Ok(v)
}

fn non_negative_lr(lr: f64) -> CliResult<f64> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(CliError::Usage(format!("--lr must be a finite value >= 0, got {lr}")));
    }
    Ok(lr)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Ranges => print!("{}", cli::cmd_ranges(&cfg)?),
        Command::Labels { annotations, out } => {
            let images = cli::parse_annotations(&annotations)?;
            let written = cli::cmd_labels(&cfg, &images, &out)?;
            println!("wrote {} raster(s) to {}", written.len(), out.display());
        }
        Command::Fig4 { pairs, betas, out } => {
            let betas = cli::parse_betas(&betas)?;
            let rows = cli::cmd_fig4(&cfg, pairs, &betas, &out)?;
            println!("wrote {} row(s) to {}", rows.len(), out.display());
        }
        Command::Gradcheck { samples, flip_sign } => {
            let report = cli::cmd_gradcheck(&cfg, samples, flip_sign)?;
            print!("{}", report.render());
            if !report.passed() {
                return Err(CliError::CheckFailed);
            }
        }
        Command::BetaSweep {
            betas,
            steps,
            lr,
            trials,
            out,
        } => {
            let betas = cli::parse_betas(&betas)?;
            if let Some(steps) = steps {
                cfg.toy.fit_steps = steps;
            }
            if let Some(lr) = lr {
                cfg.toy.fit_lr = non_negative_lr(lr)?;
            }
            if let Some(trials) = trials {
                cfg.toy.trials = positive("--trials", trials)?;
            }
            let rows = cli::cmd_beta_sweep(&cfg, &betas, &out)?;
            print!("{}", cli::sweep_to_csv(&rows));
        }
        Command::TrainToy { steps, lr, out } => {
            if let Some(steps) = steps {
                cfg.toy.steps = positive("--steps", steps)?;
            }
            if let Some(lr) = lr {
                cfg.toy.lr = non_negative_lr(lr)?;
            }
            let (report, no_matches) = cli::cmd_train_toy(&cfg, &out)?;
            if no_matches {
                eprintln!("warning: no anchor matched a ground truth; the box term is 0");
            }
            let last = report.len() - 1;
            println!(
                "steps={} loss {:.6} -> {:.6}, mean IoU {:.4} -> {:.4}; wrote {}",
                report.len(),
                report.total[0],
                report.total[last],
                report.mean_iou[0],
                report.mean_iou[last],
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

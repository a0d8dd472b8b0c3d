use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ldfnet_core::data::{generate_dataset, read_sample, Dataset, Split};
use ldfnet_core::metrics::MatchMethod;
use ldfnet_core::train::{self, ablate, evaluate, median_mae_by_value, write_sweep_csv, EvalSplit, SweepAxis, CONFIG_FILE, METRICS_HEADER};
use ldfnet_core::{selftest, Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "ldfnet", version, about = "Crowd counting with masked feature prediction and pixel contrast")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[command(flatten)]
        common: Overrides,
    },
    /// Train on a dataset and keep the best validation checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Overrides,
    },
    /// Count and localization metrics of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, val or all
        #[arg(long, default_value = "val")]
        split: String,
        /// Metrics CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Overrides,
    },
    /// Sweep one axis over a shared seed set.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// mask_ratio, mask_strategy, encoder_layers, clm_variant, dilation, alpha, beta or components
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Overrides,
    },
    /// Gradient checks and oracle comparisons.
    Selftest,
}

/// Config file plus per-key overrides.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    mask_strategy: Option<String>,
    #[arg(long)]
    clm_variant: Option<String>,
    #[arg(long)]
    dilation: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Matching radius in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Greedy nearest-first matching instead of the optimal assignment.
    #[arg(long)]
    greedy: bool,
}

impl Overrides {
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match self.config.as_deref().or(fallback.filter(|p| p.exists())) {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.optim.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.optim.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.optim.batch_size = v;
        }
        if let Some(v) = self.mask_ratio {
            cfg.mask.ratio = v;
        }
        if let Some(v) = &self.mask_strategy {
            cfg.mask.strategy = v.parse()?;
        }
        if let Some(v) = &self.clm_variant {
            cfg.clm.variant = v.parse()?;
        }
        if let Some(v) = &self.dilation {
            cfg.clm.dilation = v.parse()?;
        }
        if let Some(v) = self.alpha {
            cfg.loss.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.loss.beta = v;
        }
        if let Some(v) = self.sigma {
            cfg.eval.sigma = v;
        }
        if self.greedy {
            cfg.eval.matching = MatchMethod::Greedy;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `Ok(false)` when the command ran but reported failures.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { out, n_train, n_val, common } => {
            let cfg = common.resolve(None)?;
            let (n_train, n_val) = (n_train.unwrap_or(cfg.dataset.n_train), n_val.unwrap_or(cfg.dataset.n_val));
            let ds = generate_dataset(&out, &cfg.scene, n_train, n_val, cfg.seed)?;
            println!("wrote {} images to {}", ds.entries.len(), out.display());
        }
        Command::Train { data, out, common } => {
            let cfg = common.resolve(None)?;
            let outcome = train::train(&cfg, &data, &out)?;
            match (outcome.initial_val, outcome.best_val_mae) {
                (Some((mae0, _)), Some(best)) => {
                    println!("val MAE {mae0:.4} -> {best:.4} (best epoch {})", outcome.best_epoch)
                }
                _ => println!("trained {} epochs", outcome.rows.len()),
            }
        }
        Command::Eval { checkpoint, data, split, out, common } => {
            let cfg = common.resolve(Some(&checkpoint.join(CONFIG_FILE)))?;
            let split: EvalSplit = split.parse()?;
            let report = evaluate(&cfg, &checkpoint, &data, split)?;
            match out {
                Some(path) => {
                    report.write_csv(&path)?;
                    println!(
                        "MAE {:.4} RMSE {:.4} P {:.4} R {:.4} F1 {:.4}",
                        report.mae, report.rmse, report.precision, report.recall, report.f1
                    );
                }
                None => {
                    println!("{}", METRICS_HEADER.join(","));
                    for row in report.csv_rows() {
                        println!("{}", row.join(","));
                    }
                }
            }
        }
        Command::Ablate { data, out, axis, values, seeds, common } => {
            let cfg = common.resolve(None)?;
            let axis: SweepAxis = axis.parse()?;
            let ds = Dataset::open(&data)?;
            let train_set = ds.load(Split::Train)?;
            let val: Vec<(String, _)> = ds
                .ids(Split::Val)
                .into_iter()
                .map(|id| Ok((id.to_string(), read_sample(&ds.root, id)?)))
                .collect::<Result<_>>()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let rows = ablate(&cfg, axis, &values, &seeds, &train_set, &val, Some(&out))?;
            let path = out.join(format!("sweep_{axis}.csv"));
            write_sweep_csv(&path, &rows)?;
            for (value, mae) in median_mae_by_value(&rows) {
                println!("{axis}={value}: median val MAE {mae:.4}");
            }
            println!("wrote {}", path.display());
        }
        Command::Selftest => {
            let checks = selftest::run_all()?;
            print!("{}", selftest::format_table(&checks));
            let failed = checks.iter().filter(|c| !c.passed()).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

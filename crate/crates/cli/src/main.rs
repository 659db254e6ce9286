//! `gmsparse`: data generation, model fitting and benchmark runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gmsparse_core::datasets::{Dataset, DatasetSpec, Scale};
use gmsparse_core::harness::{reproduce_table, run_experiment, ExperimentConfig, Method, Problem};
use gmsparse_core::io::{read_signals, save_model, write_json, write_loss_history};
use gmsparse_core::supervised::{train, TrainConfig};
use gmsparse_core::unsupervised::{fit_unsupervised, ClusteringConfig, Preprocessing};
use gmsparse_core::{ForwardOperator, NoiseModel, SeededRng};

#[derive(Parser)]
#[command(
    name = "gmsparse",
    version,
    about = "Gaussian-mixture Bayes estimators versus sparse-recovery baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Mini,
    Full,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Mini => Scale::Mini,
            ScaleArg::Full => Scale::Full,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mini")]
    scale: ScaleArg,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Training signals CSV (one signal per row).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    clusters: usize,
    /// Noise level as a percent of the largest training amplitude.
    #[arg(long, default_value_t = 10.0)]
    noise_percent: f64,
    /// Absolute noise level; overrides `--noise-percent`.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Gaussian blur width; denoising when absent.
    #[arg(long)]
    blur: Option<f64>,
    /// Cluster finite differences instead of raw signals.
    #[arg(long)]
    finite_difference: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test CSVs and metadata for a dataset.
    GenData {
        #[arg(long, default_value_t = 1)]
        dataset: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Cluster a training set and save the fitted mixture.
    FitUnsupervised {
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Train the estimator on noisy copies of a training set.
    TrainSupervised {
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one method on a preset dataset.
    RunBaseline {
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 1)]
        dataset: u8,
        /// Gaussian blur width; denoising when absent.
        #[arg(long)]
        blur: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment from a config file or a preset.
    RunExperiment {
        #[arg(long, default_value_t = 1)]
        dataset: u8,
        /// Comma-separated method codes; all of A–J when absent.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        blur: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Rerun table 1, 2 or 3 on all three datasets.
    ReproduceTable {
        table: u8,
        #[command(flatten)]
        common: Common,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn experiment_config(common: &Common, dataset: u8) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::preset(dataset, common.scale.into(), common.seed)?,
    };
    cfg.output = Some(common.out.clone());
    Ok(cfg)
}

fn problem(blur: Option<f64>) -> Problem {
    blur.map_or(Problem::Denoising, |sigma_b| Problem::Deblurring {
        sigma_b,
    })
}

fn summarize(cfg: &ExperimentConfig) -> Result<bool> {
    let exp = run_experiment(cfg)?;
    for r in &exp.report.methods {
        match &r.error {
            None => println!(
                "{:<7} {:<32} {:.4e} %",
                r.method.code(),
                r.name,
                r.mean_relative_mse
            ),
            Some(e) => println!("{:<7} {:<32} failed: {e}", r.method.code(), r.name),
        }
    }
    Ok(exp.report.all_ok())
}

/// Noise model, operator and clustering setup shared by the fit commands.
fn setup(
    fit: &FitArgs,
    seed: u64,
) -> Result<(
    nalgebra::DMatrix<f64>,
    ForwardOperator,
    NoiseModel,
    ClusteringConfig,
)> {
    let (x, _) = read_signals(&fit.data)?;
    let sigma = match fit.noise_sigma {
        Some(s) => s,
        None => gmsparse_core::harness::noise_sigma(&x, fit.noise_percent / 100.0)?,
    };
    let op = match fit.blur {
        Some(b) => ForwardOperator::gaussian_blur(x.ncols(), b)?,
        None => ForwardOperator::identity(x.ncols()),
    };
    let cc = ClusteringConfig {
        preprocessing: if fit.finite_difference {
            Preprocessing::FiniteDifference
        } else {
            Preprocessing::Identity
        },
        ..ClusteringConfig::with_clusters(fit.clusters, seed)
    };
    Ok((x, op, NoiseModel::iso(sigma)?, cc))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { dataset, common } => {
            let spec: DatasetSpec = match &common.config {
                Some(path) => read_json(path)?,
                None => DatasetSpec::preset(dataset, common.scale.into(), common.seed)?,
            };
            Dataset::generate(&spec)?.write_csv(&common.out)?;
            println!(
                "wrote {}/train.csv and {}/test.csv",
                common.out.display(),
                common.out.display()
            );
            Ok(true)
        }
        Command::FitUnsupervised { fit, common } => {
            let (x, op, noise, mut cc) = setup(&fit, common.seed)?;
            if let Some(path) = &common.config {
                cc = read_json(path)?;
            }
            let result = fit_unsupervised(&x, &op, &noise, &cc)?;
            std::fs::create_dir_all(&common.out)?;
            save_model(common.out.join("model.gmm"), result.estimator.model())?;
            write_json(common.out.join("labels.json"), &result.labels)?;
            println!(
                "fitted {} components{}",
                result.stats.effective_clusters(),
                if result.fallback {
                    " (k-means fallback)"
                } else {
                    ""
                }
            );
            Ok(true)
        }
        Command::TrainSupervised {
            fit,
            epochs,
            learning_rate,
            common,
        } => {
            let (x, op, noise, _) = setup(&fit, common.seed)?;
            let mut tc: TrainConfig = match &common.config {
                Some(path) => read_json(path)?,
                None => TrainConfig {
                    components: fit.clusters,
                    seed: common.seed,
                    ..TrainConfig::default()
                },
            };
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(lr) = learning_rate {
                tc.learning_rate = lr;
            }
            let mut rng = SeededRng::with_stream(common.seed, 0x71);
            let mut y = x.clone();
            for (j, mut row) in y.row_iter_mut().enumerate() {
                let clean = op.apply(&x.row(j).transpose())?;
                let e = noise.draw(clean.len(), &mut rng)?;
                row.copy_from(&(clean + e).transpose());
            }
            let outcome = train(&x, &y, &op, &noise, &tc, None)?;
            std::fs::create_dir_all(&common.out)?;
            save_model(common.out.join("model.gmm"), &outcome.model)?;
            write_loss_history(common.out.join("loss.csv"), &outcome.history)?;
            if let Some(last) = outcome.history.last() {
                println!("epoch {} train risk {:.6e}", last.epoch, last.train_risk);
            }
            Ok(true)
        }
        Command::RunBaseline {
            method,
            dataset,
            blur,
            common,
        } => {
            let mut cfg = experiment_config(&common, dataset)?;
            cfg.methods = vec![method];
            if blur.is_some() {
                cfg.problem = problem(blur);
            }
            summarize(&cfg)
        }
        Command::RunExperiment {
            dataset,
            methods,
            blur,
            common,
        } => {
            let mut cfg = experiment_config(&common, dataset)?;
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            if blur.is_some() {
                cfg.problem = problem(blur);
            }
            summarize(&cfg)
        }
        Command::ReproduceTable { table, common } => {
            if !(1..=3).contains(&table) {
                bail!("table must be 1, 2 or 3");
            }
            let report =
                reproduce_table(table, common.scale.into(), common.seed, Some(&common.out))?;
            print!("{}", report.to_csv()?);
            Ok(report.all_ok())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some methods failed; see the results file");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{ClusterSource, ExperimentConfig, Method, Problem};
use super::methods::{observe, Context, TEST_NOISE, TUNE_NOISE};
use super::metrics::{
    noise_sigma, relative_mse_rows, MethodReport, MetricsReport, Timings, SCHEMA_VERSION,
};
use super::report;
use crate::baselines::SolverConfig;
use crate::datasets::Dataset;
use crate::error::Result;
use crate::io::write_json;
use crate::model::{ForwardOperator, NoiseModel};
use crate::rng::SeededRng;
use crate::unsupervised::{
    clustering_accuracy, preprocess, subspace_cluster, ClusteringConfig, Preprocessing,
};

const RANDOM_LABELS: u64 = 0x72;

/// Outcome of [`run_experiment`]: the reproducible report, wall times, and
/// the test reconstructions of every completed method (signals as rows).
pub struct Experiment {
    pub report: MetricsReport,
    pub timings: Timings,
    pub reconstructions: Vec<(Method, DMatrix<f64>)>,
    pub dataset: Dataset,
    pub test_observations: DMatrix<f64>,
}

fn cluster_labels(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<usize>> {
    let l = cfg.dataset.variant.components();
    match cfg.clusters {
        ClusterSource::Exact => Ok(data.train.labels.clone()),
        ClusterSource::Random => {
            let mut rng = SeededRng::with_stream(cfg.seed, RANDOM_LABELS).derive(cfg.repeat);
            Ok((0..data.train.signals.nrows())
                .map(|_| rng.index(l))
                .collect())
        }
        ClusterSource::Learned => {
            let preprocessing = if cfg.dataset.variant.is_piecewise_smooth() {
                Preprocessing::FiniteDifference
            } else {
                Preprocessing::Identity
            };
            let cc = ClusteringConfig {
                preprocessing,
                ..ClusteringConfig::with_clusters(l, cfg.seed)
            };
            let features = preprocess(&data.train.signals, preprocessing)?;
            Ok(subspace_cluster(&features, &cc)?.labels)
        }
    }
}

/// Generates the data, calibrates the noise, runs every requested method
/// and, if an output directory is configured, writes the artifacts.
///
/// A failing method is recorded in the report; the others still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let mut clock = Instant::now();
    let mut lap = |timings: &mut Timings, name: &str| {
        timings
            .stages
            .insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let data = Dataset::generate(&cfg.dataset)?;
    let n = cfg.dataset.variant.n();
    let sigma = match cfg.noise_sigma {
        Some(s) => s,
        None => noise_sigma(&data.train.signals, cfg.noise_percent / 100.0)?,
    };
    let operator = match cfg.problem {
        Problem::Denoising => ForwardOperator::identity(n),
        Problem::Deblurring { sigma_b } => ForwardOperator::gaussian_blur(n, sigma_b)?,
    };
    let a = operator.matrix();
    let noise = NoiseModel::iso(sigma)?;
    let test_y = observe(
        &data.test.signals,
        &a,
        sigma,
        &mut SeededRng::with_stream(cfg.seed, TEST_NOISE),
    );
    let k = cfg.tuning.signals.min(data.train.signals.nrows());
    let tune_x = data.train.signals.rows(0, k).into_owned();
    let tune_y = observe(
        &tune_x,
        &a,
        sigma,
        &mut SeededRng::with_stream(cfg.seed, TUNE_NOISE),
    );
    lap(&mut timings, "data");

    let needs_clusters = cfg.methods.iter().any(|m| m.uses_clustering());
    let labels = needs_clusters.then(|| cluster_labels(cfg, &data).map_err(|e| e.to_string()));
    let accuracy = match &labels {
        Some(Ok(l)) => Some(clustering_accuracy(&data.train.labels, l)),
        _ => None,
    };
    if needs_clusters {
        lap(&mut timings, "clustering");
    }

    let ctx = Context {
        cfg,
        data: &data,
        operator,
        a,
        noise,
        sigma,
        test_y,
        tune_x,
        tune_y,
        labels,
        solver: SolverConfig {
            step: None,
            max_iters: cfg.budget.solver_iters,
            tol: cfg.budget.solver_tol,
            accelerated: false,
        },
    };

    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut reconstructions = Vec::new();
    for &m in &cfg.methods {
        let outcome = ctx
            .run(m)
            .and_then(|run| Ok((relative_mse_rows(&data.test.signals, &run.estimate)?, run)));
        let entry = match outcome {
            Ok((errors, run)) => {
                let mut r = MethodReport::completed(m, errors);
                r.hyperparameters = run.hyperparameters;
                r.tuning_curve = run.curve;
                r.solver = run.solver;
                r.notes = run.notes;
                reconstructions.push((m, run.estimate));
                r
            }
            Err(e) => MethodReport::failed(m, &e),
        };
        methods.push(entry);
        lap(&mut timings, m.code());
    }

    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        sigma,
        clustering_accuracy: accuracy,
        methods,
    };
    let experiment = Experiment {
        report,
        timings,
        reconstructions,
        test_observations: ctx.test_y,
        dataset: data,
    };
    if let Some(dir) = &cfg.output {
        write_artifacts(&experiment, dir)?;
    }
    Ok(experiment)
}

/// `results.json`, `timings.json`, `results.csv`, `mse.svg` and
/// `reconstructions.svg`.
pub fn write_artifacts(exp: &Experiment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(dir.join("results.json"), &exp.report)?;
    write_json(dir.join("timings.json"), &exp.timings)?;
    std::fs::write(dir.join("results.csv"), report::methods_csv(&exp.report)?)?;
    let bars: Vec<(String, f64)> = exp
        .report
        .methods
        .iter()
        .filter(|r| r.ok())
        .map(|r| (r.method.code().to_string(), r.mean_relative_mse))
        .collect();
    std::fs::write(
        dir.join("mse.svg"),
        report::bar_chart_svg(
            &format!(
                "Mean relative MSE (%) on {}",
                exp.report.config.dataset.id()
            ),
            &bars,
        ),
    )?;
    if exp.dataset.test.signals.nrows() > 0 {
        let original: Vec<f64> = exp.dataset.test.signals.row(0).iter().copied().collect();
        let observed: Vec<f64> = exp.test_observations.row(0).iter().copied().collect();
        let panels: Vec<(String, Vec<f64>)> = exp
            .reconstructions
            .iter()
            .map(|(m, x)| {
                (
                    format!("{} ({})", m.name(), m.code()),
                    x.row(0).iter().copied().collect(),
                )
            })
            .collect();
        std::fs::write(
            dir.join("reconstructions.svg"),
            report::signal_panels_svg(&original, &observed, &panels),
        )?;
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetSpec, Scale};
use crate::error::{Error, Result};

/// Reconstruction methods; `Oracle` uses the generating mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::A,
        Method::B,
        Method::C,
        Method::D,
        Method::E,
        Method::F,
        Method::G,
        Method::H,
        Method::I,
        Method::J,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::A => "Supervised",
            Method::B => "Unsupervised",
            Method::C => "Dictionary learning",
            Method::D => "Group dictionary learning",
            Method::E => "IHT with SVD basis",
            Method::F => "IHT with SVD bases of groups",
            Method::G => "IHT with known basis",
            Method::H => "LASSO with SVD basis",
            Method::I => "Group LASSO with SVD bases",
            Method::J => "LASSO with known basis",
            Method::Oracle => "True-parameter estimator",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Method::A => "A",
            Method::B => "B",
            Method::C => "C",
            Method::D => "D",
            Method::E => "E",
            Method::F => "F",
            Method::G => "G",
            Method::H => "H",
            Method::I => "I",
            Method::J => "J",
            Method::Oracle => "Oracle",
        }
    }

    /// Whether the method needs the clustering of the training set.
    pub fn uses_clustering(self) -> bool {
        matches!(self, Method::B | Method::D | Method::F | Method::I)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.to_ascii_uppercase().as_str() {
            "A" => Method::A,
            "B" => Method::B,
            "C" => Method::C,
            "D" => Method::D,
            "E" => Method::E,
            "F" => Method::F,
            "G" => Method::G,
            "H" => Method::H,
            "I" => Method::I,
            "J" => Method::J,
            "ORACLE" => Method::Oracle,
            _ => return Err(Error::Config(format!("unknown method {s:?}"))),
        };
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Denoising,
    /// Gaussian blur of width `sigma_b` samples.
    Deblurring {
        sigma_b: f64,
    },
}

/// Where the cluster labels used by B, D, F and I come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSource {
    /// Subspace clustering of the training set.
    #[default]
    Learned,
    /// Generating labels.
    Exact,
    /// Uniformly random labels.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningGrids {
    /// Coarse λ grid, refined once around the best point.
    pub lambdas: Vec<f64>,
    /// Multiplicative refinement offsets in decades.
    pub refine_decades: Vec<f64>,
    pub sparsity: Vec<usize>,
    /// Training signals used for tuning.
    pub signals: usize,
}

impl Default for TuningGrids {
    fn default() -> Self {
        Self {
            lambdas: (-5..=1).map(|k| 10f64.powi(k)).collect(),
            refine_decades: vec![-0.5, -0.25, 0.25, 0.5],
            sparsity: vec![1, 2, 5, 10, 20, 50],
            signals: 200,
        }
    }
}

/// Iteration and epoch budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub solver_iters: usize,
    pub solver_tol: f64,
    pub train_epochs: usize,
    pub train_batch: usize,
    pub train_lr: f64,
    /// Factor rank cap of the supervised model.
    pub train_rank: usize,
    pub dict_epochs: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self::for_scale(Scale::Mini)
    }
}

impl Budget {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Mini => Self {
                solver_iters: 300,
                solver_tol: 1e-5,
                train_epochs: 15,
                train_batch: 64,
                train_lr: 1e-2,
                train_rank: 8,
                dict_epochs: 10,
            },
            Scale::Full => Self {
                solver_iters: 1000,
                solver_tol: 1e-6,
                train_epochs: 50,
                train_batch: 64,
                train_lr: 5e-3,
                train_rank: 32,
                dict_epochs: 20,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub problem: Problem,
    /// Noise level in percent of the largest training amplitude.
    #[serde(default = "default_noise_percent")]
    pub noise_percent: f64,
    /// Absolute noise level; overrides `noise_percent` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub clusters: ClusterSource,
    /// Repeat index of the random-label stream.
    #[serde(default)]
    pub repeat: u64,
    #[serde(default)]
    pub tuning: TuningGrids,
    #[serde(default)]
    pub budget: Budget,
    pub seed: u64,
    /// Artifact directory; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Fixed hyperparameters by method code, skipping the tuning.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
}

fn default_noise_percent() -> f64 {
    10.0
}

impl ExperimentConfig {
    /// Denoising on a preset dataset with every method A–J.
    pub fn preset(dataset: u8, scale: Scale, seed: u64) -> Result<Self> {
        let mut tuning = TuningGrids::default();
        if scale == Scale::Mini {
            tuning.signals = 100;
        }
        Ok(Self {
            dataset: DatasetSpec::preset(dataset, scale, seed)?,
            problem: Problem::Denoising,
            noise_percent: default_noise_percent(),
            // Gaussian coefficients have unit spread, which the range rule
            // would overstate by a factor of several.
            noise_sigma: (dataset == 1).then_some(0.1),
            methods: Method::ALL.to_vec(),
            clusters: ClusterSource::Learned,
            repeat: 0,
            tuning,
            budget: Budget::for_scale(scale),
            seed,
            output: None,
            fixed: BTreeMap::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.tuning.lambdas.is_empty()
            || self.tuning.sparsity.is_empty()
            || self.tuning.signals == 0
        {
            return Err(Error::Config(
                "tuning grids and tuning set must be nonempty".into(),
            ));
        }
        if self
            .tuning
            .lambdas
            .iter()
            .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::Config(
                "λ grid values must be finite and >= 0".into(),
            ));
        }
        if !(self.noise_percent > 0.0) {
            return Err(Error::Config(format!(
                "noise percent must be positive, got {}",
                self.noise_percent
            )));
        }
        if let Some(s) = self.noise_sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!(
                    "noise sigma must be positive, got {s}"
                )));
            }
        }
        if let Problem::Deblurring { sigma_b } = self.problem {
            if !(sigma_b > 0.0) {
                return Err(Error::Config(format!(
                    "blur width must be positive, got {sigma_b}"
                )));
            }
        }
        let b = &self.budget;
        if b.solver_iters == 0
            || b.train_epochs == 0
            || b.train_batch == 0
            || b.train_rank == 0
            || b.dict_epochs == 0
        {
            return Err(Error::Config("budget entries must be positive".into()));
        }
        Ok(())
    }
}

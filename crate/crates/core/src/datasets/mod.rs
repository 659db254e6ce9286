//! Benchmark datasets and the wavelet machinery used by the known-basis
//! baselines.

mod generators;
mod wavelet;

pub use generators::{
    fourier_configurations, fourier_signal, gen_dataset1, gen_dataset2, gen_dataset3, gmm_supports,
    jump_locations, sinusoid_signal, time_grid, FourierParams, LabeledSignals, SinusoidParams,
};
pub use wavelet::{known_basis_split, WaveletBasis, DB6_LOWPASS, DEFAULT_LEVELS};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_signals, SignalMetadata};
use crate::model::MixtureModel;
use crate::rng::{SeededRng, RNG_ALGORITHM};

const DATASET_STREAM: u64 = 0xda;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetVariant {
    /// Uniform mixture of standard Gaussians on `components` random
    /// `s`-sparse coordinate supports.
    Gmm {
        n: usize,
        s: usize,
        components: usize,
    },
    /// Sinusoid plus one jump at one of `jumps` locations.
    Sinusoid { n: usize, jumps: usize },
    /// Truncated Fourier series with one or two of `jumps` locations.
    Fourier { n: usize, jumps: usize },
}

impl DatasetVariant {
    pub fn n(&self) -> usize {
        match *self {
            Self::Gmm { n, .. } | Self::Sinusoid { n, .. } | Self::Fourier { n, .. } => n,
        }
    }

    /// Number of mixture components (subspaces).
    pub fn components(&self) -> usize {
        match *self {
            Self::Gmm { components, .. } => components,
            Self::Sinusoid { jumps, .. } => jumps,
            Self::Fourier { jumps, .. } => jumps * (jumps + 1) / 2,
        }
    }

    /// 1, 2 or 3.
    pub fn number(&self) -> u8 {
        match self {
            Self::Gmm { .. } => 1,
            Self::Sinusoid { .. } => 2,
            Self::Fourier { .. } => 3,
        }
    }

    /// Piecewise-smooth families, which are sparse in a wavelet basis.
    pub fn is_piecewise_smooth(&self) -> bool {
        !matches!(self, Self::Gmm { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Mini,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini" => Ok(Self::Mini),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!(
                "unknown scale {other:?} (mini or full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub variant: DatasetVariant,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Preset for dataset 1, 2 or 3.
    pub fn preset(number: u8, scale: Scale, seed: u64) -> Result<Self> {
        let (variant, train, test) = match (number, scale) {
            (1, Scale::Full) => (
                DatasetVariant::Gmm {
                    n: 1000,
                    s: 20,
                    components: 10,
                },
                2000,
                2000,
            ),
            (1, Scale::Mini) => (
                DatasetVariant::Gmm {
                    n: 50,
                    s: 5,
                    components: 5,
                },
                2000,
                1000,
            ),
            (2, Scale::Full) => (DatasetVariant::Sinusoid { n: 1000, jumps: 10 }, 2000, 2000),
            (2, Scale::Mini) => (DatasetVariant::Sinusoid { n: 128, jumps: 10 }, 1000, 300),
            (3, Scale::Full) => (DatasetVariant::Fourier { n: 1000, jumps: 10 }, 2000, 2000),
            (3, Scale::Mini) => (DatasetVariant::Fourier { n: 128, jumps: 6 }, 1000, 300),
            (other, _) => {
                return Err(Error::Config(format!(
                    "no dataset {other} (expected 1, 2 or 3)"
                )))
            }
        };
        Ok(Self {
            variant,
            train,
            test,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.variant {
            DatasetVariant::Gmm { n, s, components } => n > 0 && s > 0 && s <= n && components > 0,
            DatasetVariant::Sinusoid { n, jumps } | DatasetVariant::Fourier { n, jumps } => {
                n > 1 && jumps > 0
            }
        };
        if !ok {
            return Err(Error::Config(format!(
                "invalid dataset parameters {:?}",
                self.variant
            )));
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::Config(
                "train and test counts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("dataset{}", self.variant.number())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: LabeledSignals,
    pub test: LabeledSignals,
    /// Coordinate supports of the generating mixture (dataset 1 only).
    pub supports: Option<Vec<Vec<usize>>>,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let root = SeededRng::with_stream(spec.seed, DATASET_STREAM);
        let (train_rng, test_rng) = (root.derive(1), root.derive(2));
        let (train, test, supports) = match spec.variant {
            DatasetVariant::Gmm { n, s, components } => {
                let supports = gmm_supports(n, s, components, &mut root.derive(0))?;
                (
                    gen_dataset1(n, &supports, spec.train, &train_rng)?,
                    gen_dataset1(n, &supports, spec.test, &test_rng)?,
                    Some(supports),
                )
            }
            DatasetVariant::Sinusoid { n, jumps } => (
                gen_dataset2(n, jumps, spec.train, &train_rng)?,
                gen_dataset2(n, jumps, spec.test, &test_rng)?,
                None,
            ),
            DatasetVariant::Fourier { n, jumps } => (
                gen_dataset3(n, jumps, spec.train, &train_rng)?,
                gen_dataset3(n, jumps, spec.test, &test_rng)?,
                None,
            ),
        };
        Ok(Self {
            spec: spec.clone(),
            train,
            test,
            supports,
        })
    }

    /// The generating mixture, when it is exactly a Gaussian mixture.
    pub fn true_model(&self) -> Option<Result<MixtureModel>> {
        match (&self.spec.variant, &self.supports) {
            (DatasetVariant::Gmm { n, s, .. }, Some(supports)) => {
                Some(MixtureModel::from_coordinate_supports(*n, *s, supports))
            }
            _ => None,
        }
    }

    /// Writes `train.csv`, `test.csv` and their metadata into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let extra = serde_json::json!({
            "variant": self.spec.variant,
            "rng": RNG_ALGORITHM,
            "wavelet": WaveletBasis::default(),
            "supports": self.supports,
        });
        for (name, part) in [("train", &self.train), ("test", &self.test)] {
            let meta = SignalMetadata {
                n: self.spec.variant.n(),
                count: part.signals.nrows(),
                dataset_id: self.spec.id(),
                seed: self.spec.seed,
                labels: Some(part.labels.clone()),
                extra: Some(extra.clone()),
            };
            write_signals(dir.join(format!("{name}.csv")), &part.signals, &meta)?;
        }
        Ok(())
    }
}

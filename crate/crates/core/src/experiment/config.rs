use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::error::{invalid, Error, Result};
use crate::exec::Parallelism;
use crate::graph::LaplacianKind;
use crate::lookahead::FprimeAt;
use crate::posterior::{ModelKind, NewtonConfig, NoiseFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Checkerboard,
    Mnist,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// Refit the posterior from scratch after every label.
    Retrain,
    /// Rank-one update: NA for probit, exact conditioning for GR and HF.
    #[default]
    Na,
}

macro_rules! lowercase_enum_text {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok(<$ty>::$variant),)+
                    _ => Err(invalid(format!(concat!("unknown ", stringify!($ty), " '{}'"), s))),
                }
            }
        }
    };
}

lowercase_enum_text!(DatasetKind { Checkerboard => "checkerboard", Mnist => "mnist" });
lowercase_enum_text!(UpdateMode { Retrain => "retrain", Na => "na" });

/// Everything that determines an experiment's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub model: ModelKind,
    pub acquisition: AcquisitionKind,
    pub n_queries: usize,
    pub n_trials: usize,
    pub update_mode: UpdateMode,
    /// Neighbours per node; `None` builds the full kernel graph.
    pub knn: Option<usize>,
    pub length_scale: f64,
    pub laplacian: LaplacianKind,
    pub tau: f64,
    pub gamma: f64,
    pub noise_family: NoiseFamily,
    pub newton: NewtonConfig,
    /// Seeds the dataset; trial `t` derives its own seed from it.
    pub seed: u64,
    /// Initial labels drawn from each class.
    pub per_class: usize,
    /// In NA mode, refit from scratch every this many queries (0 = never).
    pub refresh_every: usize,
    pub fprime_at: FprimeAt,
    /// Diagonal shift added to the harmonic system.
    pub hf_jitter: f64,
    pub checkerboard_points: usize,
    pub checkerboard_grid: usize,
    pub mnist_per_digit: usize,
    pub mnist_images: PathBuf,
    pub mnist_labels: PathBuf,
    pub dense_cap: usize,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

pub const DEFAULT_MNIST_IMAGES: &str = "data/mnist/mnist5k-images-idx3-ubyte.gz";
pub const DEFAULT_MNIST_LABELS: &str = "data/mnist/mnist5k-labels-idx1-ubyte.gz";

impl ExperimentConfig {
    /// Protocol defaults for a dataset.
    pub fn defaults_for(dataset: DatasetKind) -> Self {
        let (knn, length_scale, laplacian, n_queries) = match dataset {
            DatasetKind::Checkerboard => (None, 0.03, LaplacianKind::Unnormalized, 200),
            DatasetKind::Mnist => (Some(15), 380.0, LaplacianKind::Normalized, 100),
        };
        ExperimentConfig {
            dataset,
            model: ModelKind::Probit,
            acquisition: AcquisitionKind::Mc,
            n_queries,
            n_trials: 5,
            update_mode: UpdateMode::Na,
            knn,
            length_scale,
            laplacian,
            tau: 0.1,
            gamma: 0.1,
            noise_family: NoiseFamily::GaussianCdf,
            newton: NewtonConfig::default(),
            seed: 0,
            per_class: 5,
            refresh_every: 0,
            fprime_at: FprimeAt::Updated,
            hf_jitter: 0.0,
            checkerboard_points: 2000,
            checkerboard_grid: 4,
            mnist_per_digit: 400,
            mnist_images: DEFAULT_MNIST_IMAGES.into(),
            mnist_labels: DEFAULT_MNIST_LABELS.into(),
            dense_cap: crate::graph::DEFAULT_DENSE_CAP,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with(mut self, model: ModelKind, acquisition: AcquisitionKind) -> Self {
        self.model = model;
        self.acquisition = acquisition;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(invalid("n_trials must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(invalid(format!("length_scale must be positive, got {}", self.length_scale)));
        }
        if self.model != ModelKind::Hf && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.knn == Some(0) {
            return Err(invalid("knn must be at least 1"));
        }
        if self.per_class == 0 {
            return Err(invalid("per_class must be at least 1"));
        }
        if !self.acquisition.supports(self.model) {
            return Err(Error::Unsupported(format!(
                "{} acquisition is not available for the {} model",
                self.acquisition,
                self.model.name()
            )));
        }
        if !(self.hf_jitter >= 0.0) {
            return Err(invalid("hf_jitter must be nonnegative"));
        }
        self.newton.validate()
    }

    /// Seed of trial `t`, decorrelated from the dataset seed.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        splitmix(self.seed ^ splitmix(trial as u64 + 1))
    }

    /// A short identifier such as `probit-mbr-na`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.model.name(), self.acquisition, self.update_mode)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

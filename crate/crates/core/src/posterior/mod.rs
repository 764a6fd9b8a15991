//! Posterior models over node values: Gaussian regression (GR), harmonic
//! functions (HF) and the Laplace-approximated probit model.

mod gaussian;
mod labels;
mod loss;
mod probit;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use gaussian::{gr_posterior, hf_posterior, hf_posterior_with_jitter};
pub use labels::{Label, LabeledSet};
pub use loss::{probit_f, probit_fprime, Loss, NoiseFamily, NoiseModel, ProbitLoss, QuadraticLoss};
pub use probit::{
    laplace_with_loss, objective, objective_gradient, probit_laplace, probit_map, probit_map_with_loss,
    NewtonReport,
};

use crate::error::{invalid, Result};
use crate::graph::{Laplacian, PriorPrecision};
use crate::normal;

/// Probabilities reported for labeled nodes and the clip range of harmonic
/// means.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gr,
    Hf,
    Probit,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gr => "gr",
            ModelKind::Hf => "hf",
            ModelKind::Probit => "probit",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gr" => Ok(ModelKind::Gr),
            "hf" => Ok(ModelKind::Hf),
            "probit" => Ok(ModelKind::Probit),
            _ => Err(invalid(format!("unknown model '{s}' (expected gr, hf or probit)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Damped Newton controls for the probit MAP problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 100,
            grad_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

impl NewtonConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("Newton max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(invalid("Newton grad_tol must be positive"));
        }
        Ok(())
    }
}

/// Gaussian posterior (exact or Laplace) over node values.
///
/// For GR and probit the mean and covariance cover all N nodes. For HF they
/// cover only the unlabeled nodes listed in `index_map` (ascending).
#[derive(Clone, Debug)]
pub struct Posterior {
    kind: ModelKind,
    n_nodes: usize,
    mean: Array1<f64>,
    covariance: Array2<f64>,
    labeled: LabeledSet,
    index_map: Option<Vec<usize>>,
    noise: NoiseModel,
}

impl Posterior {
    pub(crate) fn new(
        kind: ModelKind,
        n_nodes: usize,
        mean: Array1<f64>,
        covariance: Array2<f64>,
        labeled: LabeledSet,
        index_map: Option<Vec<usize>>,
        noise: NoiseModel,
    ) -> Self {
        debug_assert_eq!(mean.len(), covariance.nrows());
        debug_assert_eq!(covariance.nrows(), covariance.ncols());
        Posterior {
            kind,
            n_nodes,
            mean,
            covariance,
            labeled,
            index_map,
            noise,
        }
    }

    /// Rebuilds a posterior from stored parts (used by persistence layers).
    pub fn from_parts(
        kind: ModelKind,
        n_nodes: usize,
        mean: Array1<f64>,
        covariance: Array2<f64>,
        labeled: LabeledSet,
        index_map: Option<Vec<usize>>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let dim = index_map.as_ref().map_or(n_nodes, Vec::len);
        if mean.len() != dim || covariance.dim() != (dim, dim) {
            return Err(invalid("posterior mean/covariance shape mismatch"));
        }
        labeled.check_bounds(n_nodes)?;
        Ok(Self::new(kind, n_nodes, mean, covariance, labeled, index_map, noise))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn labeled(&self) -> &LabeledSet {
        &self.labeled
    }

    pub fn index_map(&self) -> Option<&[usize]> {
        self.index_map.as_deref()
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Row/column of `node` in the mean and covariance, if it has one.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        match &self.index_map {
            Some(map) => map.binary_search(&node).ok(),
            None => (node < self.n_nodes).then_some(node),
        }
    }

    pub fn global_index(&self, local: usize) -> usize {
        match &self.index_map {
            Some(map) => map[local],
            None => local,
        }
    }

    /// Unlabeled nodes, ascending.
    pub fn candidates(&self) -> Vec<usize> {
        match &self.index_map {
            Some(map) => map.clone(),
            None => self.labeled.unlabeled(self.n_nodes),
        }
    }

    /// Covariance column of a local index (a contiguous row by symmetry).
    pub fn covariance_column(&self, local: usize) -> ArrayView1<'_, f64> {
        self.covariance.row(local)
    }

    /// Node values over all N nodes. HF labeled nodes carry their `{0,1}`
    /// label.
    pub fn node_values(&self) -> Array1<f64> {
        match &self.index_map {
            None => self.mean.clone(),
            Some(map) => {
                let mut out = Array1::zeros(self.n_nodes);
                for (i, y) in self.labeled.iter() {
                    out[i] = y.binary();
                }
                for (local, &node) in map.iter().enumerate() {
                    out[node] = self.mean[local];
                }
                out
            }
        }
    }

    /// Probability that an unlabeled node at local index `local` is positive,
    /// given a (possibly look-ahead) value `value` there.
    pub(crate) fn probability_at(&self, local: usize, value: f64) -> f64 {
        probability(self.kind, &self.noise, value, self.covariance[[local, local]])
    }
}

/// Class probability `P(y = +1)` of an unlabeled node under each model's rule.
pub(crate) fn probability(kind: ModelKind, noise: &NoiseModel, value: f64, variance: f64) -> f64 {
    match kind {
        ModelKind::Gr => normal::cdf(value / (variance + noise.gamma * noise.gamma).sqrt()),
        ModelKind::Probit => noise.cdf(value),
        ModelKind::Hf => value.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR),
    }
}

pub(crate) fn decide(kind: ModelKind, value: f64) -> Label {
    match kind {
        ModelKind::Hf => {
            if value >= 0.5 {
                Label::Positive
            } else {
                Label::Negative
            }
        }
        _ => Label::from_sign(value),
    }
}

/// Predicted labels and `P(y = +1)` for every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<Label>,
    pub prob_positive: Vec<f64>,
}

impl Prediction {
    pub fn accuracy(&self, truth: &[Label]) -> f64 {
        let hits = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / truth.len() as f64
    }
}

pub fn predict(post: &Posterior) -> Prediction {
    let n = post.n_nodes;
    let mut labels = vec![Label::Positive; n];
    let mut prob = vec![0.5; n];
    for local in 0..post.mean.len() {
        let node = post.global_index(local);
        let value = post.mean[local];
        labels[node] = decide(post.kind, value);
        prob[node] = post.probability_at(local, value);
    }
    for (i, y) in post.labeled.iter() {
        labels[i] = y;
        prob[i] = match y {
            Label::Positive => 1.0 - PROB_FLOOR,
            Label::Negative => PROB_FLOOR,
        };
    }
    Prediction {
        labels,
        prob_positive: prob,
    }
}

/// A configured model ready to be fit to a labeled set.
#[derive(Clone, Debug)]
pub enum Model {
    Gr {
        precision: Arc<PriorPrecision>,
        noise: NoiseModel,
    },
    Probit {
        precision: Arc<PriorPrecision>,
        noise: NoiseModel,
        newton: NewtonConfig,
    },
    Hf {
        laplacian: Arc<Laplacian>,
        jitter: f64,
    },
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Gr { .. } => ModelKind::Gr,
            Model::Probit { .. } => ModelKind::Probit,
            Model::Hf { .. } => ModelKind::Hf,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Model::Gr { precision, .. } | Model::Probit { precision, .. } => precision.n_nodes(),
            Model::Hf { laplacian, .. } => laplacian.n_nodes(),
        }
    }

    pub fn fit(&self, labeled: &LabeledSet) -> Result<Posterior> {
        match self {
            Model::Gr { precision, noise } => gr_posterior(precision, labeled, noise),
            Model::Probit {
                precision,
                noise,
                newton,
            } => probit_laplace(precision, labeled, noise, newton),
            Model::Hf { laplacian, jitter } => hf_posterior_with_jitter(laplacian, labeled, *jitter),
        }
    }

    /// The posterior before any label: mean 0 and covariance `L_τ⁻¹`. The
    /// harmonic model has no such state.
    pub fn prior(&self) -> Result<Posterior> {
        match self {
            Model::Gr { precision, noise } | Model::Probit { precision, noise, .. } => {
                let n = precision.n_nodes();
                let cov = precision.covariance().as_ref().clone();
                Ok(Posterior::new(self.kind(), n, Array1::zeros(n), cov, LabeledSet::new(), None, *noise))
            }
            Model::Hf { .. } => Err(invalid("the harmonic model needs at least one label")),
        }
    }

    /// Fits `labeled`, or returns the prior when it is empty.
    pub fn fit_or_prior(&self, labeled: &LabeledSet) -> Result<Posterior> {
        if labeled.is_empty() {
            self.prior()
        } else {
            self.fit(labeled)
        }
    }
}

/// `K - K[:, idx] S K[idx, :]` for symmetric `K` and small symmetric `S`,
/// symmetrized.
pub(crate) fn low_rank_downdate(k: &Array2<f64>, k_rows: &Array2<f64>, s: &Array2<f64>) -> Array2<f64> {
    let t = s.dot(k_rows);
    let mut c = k.clone();
    ndarray::linalg::general_mat_mul(-1.0, &k_rows.t(), &t, 1.0, &mut c);
    symmetrize(&mut c);
    c
}

pub(crate) fn symmetrize(c: &mut Array2<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
}

//! One labeling session: dataset, model and the query/label state machine.
//! Nothing here knows about HTTP; handlers in `api` wrap it.

use std::path::PathBuf;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use graphal_core::acquisition::{choose, AcquisitionKind};
use graphal_core::datasets::{initial_labels, read_feature_csv, Dataset};
use graphal_core::experiment::{build_dataset, prepare_with, DatasetKind, ExperimentConfig, Prepared, UpdateMode};
use graphal_core::graph::LaplacianKind;
use graphal_core::lookahead::absorb_label;
use graphal_core::posterior::{predict, Label, LabeledSet, ModelKind, Posterior, Prediction};

use crate::error::ApiError;

/// Scores returned alongside a query.
pub const TOP_SCORES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Checkerboard {
        #[serde(default)]
        points: Option<usize>,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Mnist {
        #[serde(default)]
        per_digit: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A CSV feature table with a header row.
    Upload {
        csv: String,
        #[serde(default)]
        name: Option<String>,
    },
}

/// Overrides of the dataset's graph and model defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Neighbours per node; 0 builds the full kernel graph.
    #[serde(default)]
    pub knn: Option<usize>,
    #[serde(default)]
    pub length_scale: Option<f64>,
    #[serde(default)]
    pub laplacian: Option<LaplacianKind>,
    /// In NA mode, refit from scratch every this many labels.
    #[serde(default)]
    pub refresh_every: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLabel {
    pub index: usize,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub dataset: DatasetSpec,
    pub model: ModelKind,
    pub acquisition: AcquisitionKind,
    #[serde(default)]
    pub update_mode: UpdateMode,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed_labels: Vec<SeedLabel>,
    /// Draw this many labels per class from the ground truth at start.
    #[serde(default)]
    pub initial_per_class: Option<usize>,
    /// Accept labels for any unlabeled node, not only the pending query.
    #[serde(default)]
    pub free_labeling: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Server-side limits and file locations used when building datasets.
#[derive(Clone, Debug)]
pub struct Environment {
    pub mnist_images: PathBuf,
    pub mnist_labels: PathBuf,
    pub dense_cap: usize,
}

impl Default for Environment {
    fn default() -> Self {
        let cfg = ExperimentConfig::defaults_for(DatasetKind::Mnist);
        Environment {
            mnist_images: cfg.mnist_images,
            mnist_labels: cfg.mnist_labels,
            dense_cap: cfg.dense_cap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Waiting for a query request.
    Ready,
    /// A query was issued and awaits its label.
    Pending,
    /// Every node is labeled.
    Completed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub index: usize,
    pub label: Label,
    pub timestamp_ms: u64,
    /// Whether the label answered the pending query.
    pub queried: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n_nodes: usize,
    pub has_ground_truth: bool,
    pub has_images: bool,
    pub coords: Vec<[f64; 2]>,
}

/// Read-only view of a session, published after every change.
#[derive(Clone, Debug, Serialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub status: Status,
    pub created_ms: u64,
    pub dataset: DatasetSummary,
    pub model: ModelKind,
    pub acquisition: AcquisitionKind,
    pub update_mode: UpdateMode,
    pub free_labeling: bool,
    pub seed_labels: Vec<SeedLabel>,
    pub history: Vec<HistoryEntry>,
    pub pending: Option<usize>,
    pub n_labeled: usize,
    pub predictions: Vec<Label>,
    pub prob_positive: Vec<f64>,
    /// Accuracy over all nodes; absent without ground truth.
    pub accuracy: Option<f64>,
    /// Accuracy after the seed labels and after every later label.
    pub accuracy_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImagePayload {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit greyscale, base64.
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryProposal {
    pub step: usize,
    pub index: usize,
    pub coords: [f64; 2],
    pub method: AcquisitionKind,
    pub top_scores: Vec<ScoreEntry>,
    pub predicted: Label,
    pub prob_positive: f64,
    pub image: Option<ImagePayload>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum QueryOutcome {
    Pending(QueryProposal),
    Completed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelOutcome {
    pub step: usize,
    pub index: usize,
    pub label: Label,
    /// Nodes whose predicted class changed with this label.
    pub changed: usize,
    pub accuracy: Option<f64>,
    pub status: Status,
}

pub struct Session {
    id: String,
    created_ms: u64,
    request: CreateSession,
    config: ExperimentConfig,
    prepared: Prepared,
    truth: Option<Vec<Label>>,
    seed_labels: Vec<SeedLabel>,
    posterior: Option<Posterior>,
    labeled: LabeledSet,
    history: Vec<HistoryEntry>,
    pending: Option<usize>,
    prediction: Prediction,
    accuracy_curve: Vec<f64>,
}

fn bad_request(code: &'static str, message: impl Into<String>) -> ApiError {
    ApiError::bad_request(code, message)
}

fn config_for(req: &CreateSession, env: &Environment) -> ExperimentConfig {
    let mut cfg = match &req.dataset {
        DatasetSpec::Checkerboard { points, grid, seed } => {
            let mut cfg = ExperimentConfig::defaults_for(DatasetKind::Checkerboard);
            cfg.checkerboard_points = points.unwrap_or(cfg.checkerboard_points);
            cfg.checkerboard_grid = grid.unwrap_or(cfg.checkerboard_grid);
            cfg.seed = seed.unwrap_or(req.seed);
            cfg
        }
        DatasetSpec::Mnist { per_digit, seed } => {
            let mut cfg = ExperimentConfig::defaults_for(DatasetKind::Mnist);
            cfg.mnist_per_digit = per_digit.unwrap_or(cfg.mnist_per_digit);
            cfg.seed = seed.unwrap_or(req.seed);
            cfg
        }
        DatasetSpec::Upload { .. } => {
            let mut cfg = ExperimentConfig::defaults_for(DatasetKind::Checkerboard);
            cfg.knn = Some(15);
            cfg.laplacian = LaplacianKind::Normalized;
            cfg.length_scale = 1.0;
            cfg.seed = req.seed;
            cfg
        }
    };
    cfg.mnist_images = env.mnist_images.clone();
    cfg.mnist_labels = env.mnist_labels.clone();
    cfg.dense_cap = env.dense_cap;
    cfg.model = req.model;
    cfg.acquisition = req.acquisition;
    cfg.update_mode = req.update_mode;
    let p = &req.params;
    cfg.tau = p.tau.unwrap_or(cfg.tau);
    cfg.gamma = p.gamma.unwrap_or(cfg.gamma);
    if let Some(k) = p.knn {
        cfg.knn = (k > 0).then_some(k);
    }
    cfg.length_scale = p.length_scale.unwrap_or(cfg.length_scale);
    cfg.laplacian = p.laplacian.unwrap_or(cfg.laplacian);
    cfg.refresh_every = p.refresh_every.unwrap_or(0);
    if let Some(c) = req.initial_per_class {
        cfg.per_class = c;
    }
    cfg
}

fn load_dataset(req: &CreateSession, cfg: &ExperimentConfig) -> Result<Dataset, ApiError> {
    match &req.dataset {
        DatasetSpec::Upload { csv, name } => {
            let mut ds = read_feature_csv(csv.as_bytes(), name.as_deref().unwrap_or("upload"))
                .map_err(|e| bad_request("malformed_upload", e.to_string()))?;
            if ds.n_points() == 0 {
                return Err(bad_request("malformed_upload", "upload has no rows"));
            }
            // Uploaded labels are not treated as an oracle.
            ds.ground_truth = None;
            Ok(ds)
        }
        _ => Ok(build_dataset(cfg)?),
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Session {
    /// Builds the dataset, graph and prior, then applies the seed labels.
    pub fn create(id: String, request: CreateSession, env: &Environment) -> Result<Session, ApiError> {
        Self::create_at(id, request, env, now_ms())
    }

    pub fn create_at(id: String, request: CreateSession, env: &Environment, created_ms: u64) -> Result<Session, ApiError> {
        let mut config = config_for(&request, env);
        config.validate()?;
        let dataset = load_dataset(&request, &config)?;
        if matches!(request.dataset, DatasetSpec::Upload { .. }) && request.params.knn.is_none() {
            // Small uploads cannot support the default neighbour count.
            config.knn = config.knn.map(|k| k.min(dataset.n_points().saturating_sub(1).max(1)));
        }
        let prepared = prepare_with(Arc::new(dataset), &config)?;
        let n = prepared.dataset.n_points();
        let truth = prepared.dataset.ground_truth.clone();

        let mut labeled = LabeledSet::new();
        let mut seed_labels = Vec::new();
        if let Some(per_class) = request.initial_per_class {
            let truth = truth.as_deref().ok_or_else(|| {
                bad_request("invalid_parameter", "initial_per_class needs a dataset with ground truth")
            })?;
            if per_class == 0 {
                return Err(bad_request("invalid_parameter", "initial_per_class must be at least 1"));
            }
            for (index, label) in initial_labels(truth, per_class, config.trial_seed(0))?.iter() {
                labeled.insert(index, label)?;
                seed_labels.push(SeedLabel { index, label });
            }
        }
        for s in &request.seed_labels {
            if s.index >= n {
                return Err(bad_request(
                    "invalid_parameter",
                    format!("seed label index {} out of range for {n} nodes", s.index),
                ));
            }
            labeled
                .insert(s.index, s.label)
                .map_err(|e| bad_request("invalid_parameter", e.to_string()))?;
            seed_labels.push(*s);
        }
        if labeled.is_empty() && config.model == ModelKind::Hf {
            return Err(bad_request(
                "invalid_parameter",
                "the harmonic model needs seed labels or initial_per_class",
            ));
        }

        let posterior = if labeled.len() == n {
            None
        } else {
            Some(prepared.model.fit_or_prior(&labeled)?)
        };
        let mut session = Session {
            id,
            created_ms,
            request,
            config,
            prepared,
            truth,
            seed_labels,
            posterior,
            labeled,
            history: Vec::new(),
            pending: None,
            prediction: Prediction {
                labels: Vec::new(),
                prob_positive: Vec::new(),
            },
            accuracy_curve: Vec::new(),
        };
        session.refresh_prediction();
        if let Some(a) = session.accuracy() {
            session.accuracy_curve.push(a);
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn created_ms(&self) -> u64 {
        self.created_ms
    }

    pub fn request(&self) -> &CreateSession {
        &self.request
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.prepared.dataset
    }

    /// `None` once every node is labeled.
    pub fn posterior(&self) -> Option<&Posterior> {
        self.posterior.as_ref()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn status(&self) -> Status {
        if self.posterior.is_none() {
            Status::Completed
        } else if self.pending.is_some() {
            Status::Pending
        } else {
            Status::Ready
        }
    }

    /// Latent value per node; labeled nodes carry their label sign under
    /// the harmonic model.
    pub fn node_values(&self) -> Option<Vec<f64>> {
        self.posterior.as_ref().map(|p| p.node_values().to_vec())
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.truth.as_deref().map(|t| self.prediction.accuracy(t))
    }

    fn refresh_prediction(&mut self) {
        self.prediction = match &self.posterior {
            Some(p) => predict(p),
            None => {
                let n = self.prepared.dataset.n_points();
                let mut labels = vec![Label::Positive; n];
                let mut prob = vec![0.5; n];
                for (i, y) in self.labeled.iter() {
                    labels[i] = y;
                    prob[i] = if y == Label::Positive { 1.0 } else { 0.0 };
                }
                Prediction {
                    labels,
                    prob_positive: prob,
                }
            }
        };
    }

    fn next_step(&self) -> usize {
        self.history.len() + 1
    }

    /// Random acquisition draws from a generator keyed on the session seed
    /// and step, so replaying a log reproduces every choice.
    fn step_rng(&self, step: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.request.seed ^ splitmix(step as u64))
    }

    /// Scores the unlabeled pool and marks the best node as pending.
    pub fn next_query(&mut self) -> Result<QueryOutcome, ApiError> {
        if let Some(k) = self.pending {
            return Err(ApiError::conflict(
                "pending_exists",
                format!("node {k} is awaiting a label"),
            ));
        }
        let Some(post) = &self.posterior else {
            return Ok(QueryOutcome::Completed);
        };
        let step = self.next_step();
        let mut rng = self.step_rng(step);
        let (k, scores) = choose(self.config.acquisition, post, self.config.parallelism, &mut rng)?;
        self.pending = Some(k);
        Ok(QueryOutcome::Pending(self.proposal(
            k,
            step,
            scores.top(TOP_SCORES).into_iter().map(|(index, score)| ScoreEntry { index, score }).collect(),
        )))
    }

    fn proposal(&self, k: usize, step: usize, top_scores: Vec<ScoreEntry>) -> QueryProposal {
        let (x, y) = self.prepared.dataset.display(k);
        let image = self.prepared.dataset.images.as_ref().map(|im| ImagePayload {
            width: im.cols,
            height: im.rows,
            data: BASE64.encode(im.image(k)),
        });
        QueryProposal {
            step,
            index: k,
            coords: [x, y],
            method: self.config.acquisition,
            top_scores,
            predicted: self.prediction.labels[k],
            prob_positive: self.prediction.prob_positive[k],
            image,
        }
    }

    /// Marks `index` as pending without scoring; used when replaying a log.
    pub fn restore_pending(&mut self, index: usize) -> Result<(), ApiError> {
        if self.pending.is_some() || self.posterior.is_none() || self.labeled.contains(index) {
            return Err(ApiError::internal(format!("cannot restore pending query {index}")));
        }
        self.pending = Some(index);
        Ok(())
    }

    /// Records the oracle's answer. Without free labeling, `index` must be
    /// the pending query.
    pub fn submit_label(&mut self, index: usize, label: i64, timestamp_ms: u64) -> Result<LabelOutcome, ApiError> {
        let label = Label::from_int(label).map_err(|e| bad_request("invalid_label", e.to_string()))?;
        let n = self.prepared.dataset.n_points();
        if index >= n {
            return Err(bad_request("invalid_index", format!("node {index} out of range for {n} nodes")));
        }
        let queried = self.pending == Some(index);
        if !queried {
            if !self.request.free_labeling {
                return Err(match self.pending {
                    None => ApiError::conflict("no_pending_query", "request a query before submitting a label"),
                    Some(k) => ApiError::conflict(
                        "index_mismatch",
                        format!("label is for node {index} but node {k} is pending"),
                    ),
                });
            }
            if self.labeled.contains(index) {
                return Err(ApiError::conflict("already_labeled", format!("node {index} is already labeled")));
            }
        }
        let post = self
            .posterior
            .as_ref()
            .ok_or_else(|| ApiError::conflict("completed", "every node is labeled"))?;

        let step = self.next_step();
        let mut labeled = self.labeled.clone();
        labeled.insert(index, label)?;
        let refresh = self.config.update_mode == UpdateMode::Retrain
            || (self.config.refresh_every > 0 && step % self.config.refresh_every == 0);
        let next = if labeled.len() == n {
            None
        } else if refresh {
            Some(self.prepared.model.fit(&labeled)?)
        } else {
            Some(absorb_label(post, index, label, self.config.fprime_at)?)
        };

        let before = std::mem::take(&mut self.prediction.labels);
        self.posterior = next;
        self.labeled = labeled;
        if queried {
            self.pending = None;
        }
        self.refresh_prediction();
        let changed = before.iter().zip(&self.prediction.labels).filter(|(a, b)| a != b).count();
        let accuracy = self.accuracy();
        if let Some(a) = accuracy {
            self.accuracy_curve.push(a);
        }
        self.history.push(HistoryEntry {
            step,
            index,
            label,
            timestamp_ms,
            queried,
        });
        Ok(LabelOutcome {
            step,
            index,
            label,
            changed,
            accuracy,
            status: self.status(),
        })
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let ds = &self.prepared.dataset;
        SessionSnapshot {
            id: self.id.clone(),
            status: self.status(),
            created_ms: self.created_ms,
            dataset: DatasetSummary {
                name: ds.name.clone(),
                n_nodes: ds.n_points(),
                has_ground_truth: self.truth.is_some(),
                has_images: ds.images.is_some(),
                coords: (0..ds.n_points()).map(|i| ds.display(i).into()).collect(),
            },
            model: self.config.model,
            acquisition: self.config.acquisition,
            update_mode: self.config.update_mode,
            free_labeling: self.request.free_labeling,
            seed_labels: self.seed_labels.clone(),
            history: self.history.clone(),
            pending: self.pending,
            n_labeled: self.labeled.len(),
            predictions: self.prediction.labels.clone(),
            prob_positive: self.prediction.prob_positive.clone(),
            accuracy: self.accuracy(),
            accuracy_curve: self.accuracy_curve.clone(),
        }
    }
}

impl SessionSnapshot {
    /// `index,x,y,label,source,step,predicted,prob_positive`, one row per
    /// node. `source` is `seed`, `query`, `free` or empty.
    pub fn export_csv(&self) -> Result<String, ApiError> {
        let n = self.dataset.n_nodes;
        let mut source: Vec<(&str, String, String)> = vec![("", String::new(), String::new()); n];
        for s in &self.seed_labels {
            source[s.index] = ("seed", s.label.to_string(), "0".into());
        }
        for h in &self.history {
            let kind = if h.queried { "query" } else { "free" };
            source[h.index] = (kind, h.label.to_string(), h.step.to_string());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "x", "y", "label", "source", "step", "predicted", "prob_positive"])
            .map_err(|e| ApiError::internal(e.to_string()))?;
        for (i, (kind, label, step)) in source.iter().enumerate() {
            let [x, y] = self.dataset.coords[i];
            w.write_record([
                i.to_string(),
                x.to_string(),
                y.to_string(),
                label.clone(),
                kind.to_string(),
                step.clone(),
                self.predictions[i].to_string(),
                self.prob_positive[i].to_string(),
            ])
            .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ApiError::internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ApiError::internal(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_request(model: ModelKind, acquisition: AcquisitionKind) -> CreateSession {
        CreateSession {
            dataset: DatasetSpec::Checkerboard {
                points: Some(120),
                grid: None,
                seed: Some(3),
            },
            model,
            acquisition,
            update_mode: UpdateMode::Na,
            params: ModelParams {
                length_scale: Some(0.1),
                ..ModelParams::default()
            },
            seed_labels: Vec::new(),
            initial_per_class: Some(2),
            free_labeling: false,
            seed: 11,
        }
    }

    fn create(req: CreateSession) -> Session {
        Session::create("s".into(), req, &Environment::default()).unwrap()
    }

    #[test]
    fn query_then_label_cycle() {
        let mut s = create(small_request(ModelKind::Probit, AcquisitionKind::Vopt));
        assert_eq!(s.status(), Status::Ready);
        assert_eq!(s.n_labeled(), 4);
        let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
            panic!("expected a query")
        };
        assert_eq!(s.status(), Status::Pending);
        assert!(q.top_scores.len() <= TOP_SCORES && q.top_scores[0].index == q.index);
        let err = s.next_query().unwrap_err();
        assert_eq!(err.code, "pending_exists");
        let out = s.submit_label(q.index, 1, 5).unwrap();
        assert_eq!((out.step, out.status), (1, Status::Ready));
        assert_eq!(s.history()[0].timestamp_ms, 5);
        assert_eq!(s.snapshot().accuracy_curve.len(), 2);
    }

    #[test]
    fn label_rules() {
        let mut s = create(small_request(ModelKind::Gr, AcquisitionKind::Mc));
        assert_eq!(s.submit_label(0, 1, 0).unwrap_err().code, "no_pending_query");
        let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
            panic!()
        };
        let other = (q.index + 1) % 120;
        assert_eq!(s.submit_label(other, 1, 0).unwrap_err().code, "index_mismatch");
        assert_eq!(s.submit_label(q.index, 0, 0).unwrap_err().code, "invalid_label");
        assert_eq!(s.submit_label(q.index, 2, 0).unwrap_err().code, "invalid_label");
        assert_eq!(s.status(), Status::Pending);
        s.submit_label(q.index, -1, 0).unwrap();
    }

    #[test]
    fn free_labeling_keeps_other_pending_query() {
        let mut req = small_request(ModelKind::Gr, AcquisitionKind::Sigmaopt);
        req.free_labeling = true;
        let mut s = create(req);
        let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
            panic!()
        };
        let other = (0..120).find(|&i| i != q.index && !s.labeled.contains(i)).unwrap();
        let out = s.submit_label(other, 1, 0).unwrap();
        assert_eq!(out.status, Status::Pending);
        assert!(!s.history()[0].queried);
        assert_eq!(s.submit_label(other, 1, 0).unwrap_err().code, "already_labeled");
    }

    #[test]
    fn prior_start_without_labels() {
        let mut req = small_request(ModelKind::Probit, AcquisitionKind::Unc);
        req.initial_per_class = None;
        let mut s = create(req);
        assert_eq!(s.n_labeled(), 0);
        let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
            panic!()
        };
        s.submit_label(q.index, 1, 0).unwrap();
        assert_eq!(s.posterior().unwrap().labeled().len(), 1);

        let mut req = small_request(ModelKind::Hf, AcquisitionKind::Vopt);
        req.initial_per_class = None;
        let err = Session::create("h".into(), req, &Environment::default()).err().unwrap();
        assert_eq!(err.code, "invalid_parameter");
    }

    #[test]
    fn labeling_everything_completes() {
        let mut req = small_request(ModelKind::Hf, AcquisitionKind::Vopt);
        req.dataset = DatasetSpec::Upload {
            csv: "x,y\n0,0\n0.1,0\n1,1\n1.1,1\n".into(),
            name: None,
        };
        req.initial_per_class = None;
        req.seed_labels = vec![
            SeedLabel { index: 0, label: Label::Negative },
            SeedLabel { index: 2, label: Label::Positive },
        ];
        req.params.knn = Some(2);
        let mut s = create(req);
        assert_eq!(s.accuracy(), None);
        for _ in 0..2 {
            let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
                panic!()
            };
            s.submit_label(q.index, 1, 0).unwrap();
        }
        assert_eq!(s.status(), Status::Completed);
        assert_eq!(s.next_query().unwrap(), QueryOutcome::Completed);
        let csv = s.snapshot().export_csv().unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,0,-1,seed,0,-1,"));
    }

    #[test]
    fn random_acquisition_is_reproducible() {
        let picks = |seed| {
            let mut req = small_request(ModelKind::Gr, AcquisitionKind::Random);
            req.seed = seed;
            let mut s = create(req);
            (0..5)
                .map(|_| {
                    let QueryOutcome::Pending(q) = s.next_query().unwrap() else {
                        panic!()
                    };
                    s.submit_label(q.index, 1, 0).unwrap();
                    q.index
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(picks(1), picks(1));
        assert_ne!(picks(1), picks(2));
    }
}

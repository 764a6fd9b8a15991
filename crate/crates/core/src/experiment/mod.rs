//! Active-learning trials: build the dataset and prior once, then alternate
//! between scoring candidates, revealing the chosen label and updating the
//! posterior. Results are written as CSV curves plus a JSON manifest.

mod config;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{DatasetKind, ExperimentConfig, UpdateMode, DEFAULT_MNIST_IMAGES, DEFAULT_MNIST_LABELS};

use crate::acquisition::{choose, AcquisitionKind};
use crate::datasets::{checkerboard, initial_labels, mnist_load, mnist_subset, Dataset};
use crate::error::{invalid, Error, Result};
use crate::graph::{
    build_full_graph_with_cap, build_knn_graph, laplacian, regularized_precision_with_cap, Laplacian,
};
use crate::instrument;
use crate::lookahead::{absorb_label, na_mean_update};
use crate::posterior::{predict, Label, LabeledSet, Model, ModelKind, NoiseModel, Posterior};

/// Dataset, graph and prior shared by every trial of an experiment.
pub struct Prepared {
    pub dataset: Arc<Dataset>,
    pub laplacian: Arc<Laplacian>,
    pub model: Model,
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.dataset {
        DatasetKind::Checkerboard => checkerboard(cfg.checkerboard_points, cfg.checkerboard_grid, cfg.seed),
        DatasetKind::Mnist => {
            let raw = mnist_load(&cfg.mnist_images, &cfg.mnist_labels)?;
            mnist_subset(&raw, cfg.mnist_per_digit, cfg.seed)
        }
    }
}

/// Builds the graph, Laplacian and (for GR and probit) the prior for a
/// dataset.
pub fn prepare_with(dataset: Arc<Dataset>, cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let n = dataset.n_points();
    if n > cfg.dense_cap {
        return Err(Error::ResourceLimit {
            what: "dataset",
            size: n,
            cap: cfg.dense_cap,
        });
    }
    let graph = match cfg.knn {
        Some(k) => build_knn_graph(&dataset.features, k, cfg.length_scale, cfg.parallelism)?,
        None => build_full_graph_with_cap(&dataset.features, cfg.length_scale, cfg.dense_cap, cfg.parallelism)?,
    };
    let lap = Arc::new(laplacian(&graph, cfg.laplacian));
    let noise = NoiseModel::new(cfg.gamma, cfg.noise_family)?;
    let model = match cfg.model {
        ModelKind::Hf => Model::Hf {
            laplacian: lap.clone(),
            jitter: cfg.hf_jitter,
        },
        ModelKind::Gr | ModelKind::Probit => {
            let precision = Arc::new(regularized_precision_with_cap(&lap, cfg.tau, cfg.dense_cap)?);
            if cfg.model == ModelKind::Gr {
                Model::Gr { precision, noise }
            } else {
                Model::Probit {
                    precision,
                    noise,
                    newton: cfg.newton,
                }
            }
        }
    };
    Ok(Prepared {
        dataset,
        laplacian: lap,
        model,
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    prepare_with(Arc::new(build_dataset(cfg)?), cfg)
}

impl Prepared {
    /// Same dataset and graph under a different model configuration.
    pub fn with_model(&self, cfg: &ExperimentConfig) -> Result<Prepared> {
        cfg.validate()?;
        let noise = NoiseModel::new(cfg.gamma, cfg.noise_family)?;
        let precision = match &self.model {
            Model::Gr { precision, .. } | Model::Probit { precision, .. } if precision.tau() == cfg.tau => {
                Some(precision.clone())
            }
            _ => None,
        };
        let precision = || -> Result<_> {
            match &precision {
                Some(p) => Ok(p.clone()),
                None => Ok(Arc::new(regularized_precision_with_cap(&self.laplacian, cfg.tau, cfg.dense_cap)?)),
            }
        };
        let model = match cfg.model {
            ModelKind::Hf => Model::Hf {
                laplacian: self.laplacian.clone(),
                jitter: cfg.hf_jitter,
            },
            ModelKind::Gr => Model::Gr {
                precision: precision()?,
                noise,
            },
            ModelKind::Probit => Model::Probit {
                precision: precision()?,
                noise,
                newton: cfg.newton,
            },
        };
        Ok(Prepared {
            dataset: self.dataset.clone(),
            laplacian: self.laplacian.clone(),
            model,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrialStats {
    /// Posteriors computed from scratch, including the initial fit.
    pub full_fits: usize,
    pub newton_solves: usize,
    pub factorizations: usize,
    pub covariance_updates: usize,
    pub mean_updates: usize,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Accuracy before the first query and after each query.
    pub accuracy: Vec<f64>,
    pub queries: Vec<(usize, Label)>,
    pub initial: LabeledSet,
    pub stats: TrialStats,
    /// Probit retrain mode only: `‖û_new - ũ‖ / ‖û_new‖` per query, where
    /// `ũ` is the NA mean for the chosen query.
    pub na_gap: Vec<f64>,
    pub elapsed: Duration,
}

pub fn accuracy(post: &Posterior, truth: &[Label]) -> Result<f64> {
    let pred = predict(post);
    for (i, y) in post.labeled().iter() {
        if pred.labels[i] != y {
            return Err(Error::Internal(format!("labeled node {i} predicted as {}", pred.labels[i])));
        }
    }
    Ok(pred.accuracy(truth))
}

fn relative_gap(exact: &ndarray::Array1<f64>, approx: &ndarray::Array1<f64>) -> f64 {
    let diff = exact - approx;
    diff.dot(&diff).sqrt() / exact.dot(exact).sqrt().max(f64::MIN_POSITIVE)
}

/// Runs one trial. Operation counts are taken on the calling thread.
pub fn run_trial(prep: &Prepared, cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    let started = Instant::now();
    let before = instrument::snapshot();
    let seed = cfg.trial_seed(trial);
    let truth = prep.dataset.truth()?;
    let method = cfg.label();
    let wrap = |step: usize| {
        let method = method.clone();
        move |e: Error| Error::Trial {
            trial,
            step,
            method,
            source: Box::new(e),
        }
    };

    let mut lab = initial_labels(truth, cfg.per_class, seed).map_err(wrap(0))?;
    let initial = lab.clone();
    let mut post = prep.model.fit(&lab).map_err(wrap(0))?;
    let mut full_fits = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_AC0E);
    let mut acc = vec![accuracy(&post, truth).map_err(wrap(0))?];
    let mut queries = Vec::with_capacity(cfg.n_queries);
    let mut na_gap = Vec::new();

    for step in 1..=cfg.n_queries {
        let (k, _) = choose(cfg.acquisition, &post, cfg.parallelism, &mut rng).map_err(wrap(step))?;
        let y = truth[k];
        let refresh = cfg.update_mode == UpdateMode::Retrain
            || (cfg.refresh_every > 0 && step % cfg.refresh_every == 0);
        let next = if refresh {
            lab.insert(k, y).map_err(wrap(step))?;
            full_fits += 1;
            let fitted = prep.model.fit(&lab).map_err(wrap(step))?;
            if cfg.update_mode == UpdateMode::Retrain && post.kind() == ModelKind::Probit {
                let approx = na_mean_update(&post, k, y).map_err(wrap(step))?;
                na_gap.push(relative_gap(fitted.mean(), &approx));
            }
            fitted
        } else {
            let updated = absorb_label(&post, k, y, cfg.fprime_at).map_err(wrap(step))?;
            lab.insert(k, y).map_err(wrap(step))?;
            updated
        };
        post = next;
        if post.labeled() != &lab {
            return Err(wrap(step)(Error::Internal("posterior labeled set diverged".into())));
        }
        acc.push(accuracy(&post, truth).map_err(wrap(step))?);
        queries.push((k, y));
        debug!("{method} trial {trial} step {step}: node {k} label {y} accuracy {:.4}", acc[step]);
    }

    let c = instrument::snapshot().since(before);
    Ok(TrialResult {
        trial,
        seed,
        accuracy: acc,
        queries,
        initial,
        stats: TrialStats {
            full_fits,
            newton_solves: c.newton_solves,
            factorizations: c.factorizations,
            covariance_updates: c.covariance_updates,
            mean_updates: c.mean_updates,
        },
        na_gap,
        elapsed: started.elapsed(),
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ExperimentResult {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("curve has the initial point")
    }
}

fn summarize(trials: &[TrialResult]) -> (Vec<f64>, Vec<f64>) {
    let len = trials[0].accuracy.len();
    let k = trials.len() as f64;
    let mean: Vec<f64> = (0..len).map(|s| trials.iter().map(|t| t.accuracy[s]).sum::<f64>() / k).collect();
    let std = (0..len)
        .map(|s| {
            let var = trials.iter().map(|t| (t.accuracy[s] - mean[s]).powi(2)).sum::<f64>() / k;
            var.sqrt()
        })
        .collect();
    (mean, std)
}

/// Runs every trial on a prepared context. A failing trial aborts the run.
pub fn run_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut trials = Vec::with_capacity(cfg.n_trials);
    for t in 0..cfg.n_trials {
        let res = run_trial(prep, cfg, t)?;
        info!(
            "{} trial {t}: final accuracy {:.4} in {:.1?}",
            cfg.label(),
            res.accuracy.last().unwrap(),
            res.elapsed
        );
        trials.push(res);
    }
    let (mean, std) = summarize(&trials);
    Ok(ExperimentResult {
        config: cfg.clone(),
        trials,
        mean,
        std,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_prepared(&prepare(cfg)?, cfg)
}

/// Writes `curve_mean.csv`, `curve_trial_<i>.csv`, `choices_trial_<i>.csv`,
/// `na_gap_trial_<i>.csv` (probit retrain runs) and `meta.json`.
pub fn write_outputs(res: &ExperimentResult, dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("curve_mean.csv"))?;
    w.write_record(["step", "accuracy", "std"])?;
    for (s, (m, sd)) in res.mean.iter().zip(&res.std).enumerate() {
        w.write_record([s.to_string(), m.to_string(), sd.to_string()])?;
    }
    w.flush()?;

    for t in &res.trials {
        let mut w = csv::Writer::from_path(dir.join(format!("curve_trial_{}.csv", t.trial)))?;
        w.write_record(["step", "accuracy"])?;
        for (s, a) in t.accuracy.iter().enumerate() {
            w.write_record([s.to_string(), a.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(format!("choices_trial_{}.csv", t.trial)))?;
        w.write_record(["step", "node_index", "x", "y", "label"])?;
        let initial = t.initial.iter().map(|q| (0, q));
        let chosen = t.queries.iter().enumerate().map(|(s, &q)| (s + 1, q));
        for (step, (node, label)) in initial.chain(chosen) {
            let (x, y) = dataset.display(node);
            w.write_record([
                step.to_string(),
                node.to_string(),
                x.to_string(),
                y.to_string(),
                label.to_string(),
            ])?;
        }
        w.flush()?;

        if !t.na_gap.is_empty() {
            let mut w = csv::Writer::from_path(dir.join(format!("na_gap_trial_{}.csv", t.trial)))?;
            w.write_record(["step", "relative_gap"])?;
            for (s, g) in t.na_gap.iter().enumerate() {
                w.write_record([(s + 1).to_string(), g.to_string()])?;
            }
            w.flush()?;
        }
    }

    let meta = Manifest {
        config: &res.config,
        n_nodes: dataset.n_points(),
        accuracy: "fraction of all nodes whose predicted label matches the ground truth; labeled nodes count as correct",
        choices: "step 0 rows are the initial labeled set",
        trial_seeds: res.trials.iter().map(|t| t.seed).collect(),
        final_accuracy: res.trials.iter().map(|t| *t.accuracy.last().unwrap()).collect(),
        final_mean: res.final_mean(),
        stats: res.trials.iter().map(|t| t.stats).collect(),
    };
    let mut f = fs::File::create(dir.join("meta.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    n_nodes: usize,
    accuracy: &'static str,
    choices: &'static str,
    trial_seeds: Vec<u64>,
    final_accuracy: Vec<f64>,
    final_mean: f64,
    stats: Vec<TrialStats>,
}

/// Matched-seed runs of the same probit experiment under two update modes.
#[derive(Clone, Debug)]
pub struct NaComparison {
    pub first: ExperimentResult,
    pub second: ExperimentResult,
    /// `|mean_first(s) - mean_second(s)|` per step.
    pub abs_diff: Vec<f64>,
}

impl NaComparison {
    pub fn mean_abs_diff(&self) -> f64 {
        self.abs_diff.iter().sum::<f64>() / self.abs_diff.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let a = self.first.config.update_mode.name();
        let b = self.second.config.update_mode.name();
        w.write_record(["step", a, b, "abs_diff"])?;
        for (s, d) in self.abs_diff.iter().enumerate() {
            w.write_record([
                s.to_string(),
                self.first.mean[s].to_string(),
                self.second.mean[s].to_string(),
                d.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_paired(prep: &Prepared, cfg: &ExperimentConfig, modes: [UpdateMode; 2]) -> Result<NaComparison> {
    if cfg.model != ModelKind::Probit {
        return Err(invalid("the NA comparison runs the probit model"));
    }
    if !matches!(
        cfg.acquisition,
        AcquisitionKind::Mc | AcquisitionKind::Mbr | AcquisitionKind::Unc | AcquisitionKind::Vopt
    ) {
        return Err(invalid(format!("NA comparison is not defined for {}", cfg.acquisition)));
    }
    let run = |mode| {
        let mut c = cfg.clone();
        c.update_mode = mode;
        run_prepared(prep, &c)
    };
    let first = run(modes[0])?;
    let second = run(modes[1])?;
    let abs_diff = first.mean.iter().zip(&second.mean).map(|(a, b)| (a - b).abs()).collect();
    Ok(NaComparison {
        first,
        second,
        abs_diff,
    })
}

/// Retrain versus NA updates for a probit configuration.
pub fn run_na_comparison(cfg: &ExperimentConfig) -> Result<NaComparison> {
    run_paired(&prepare(cfg)?, cfg, [UpdateMode::Retrain, UpdateMode::Na])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ModelKind, acq: AcquisitionKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults_for(DatasetKind::Checkerboard).with(model, acq);
        cfg.checkerboard_points = 150;
        cfg.n_queries = 8;
        cfg.n_trials = 2;
        cfg.length_scale = 0.2;
        cfg
    }

    #[test]
    fn zero_queries_gives_initial_accuracy_only() {
        let mut cfg = small(ModelKind::Gr, AcquisitionKind::Vopt);
        cfg.n_queries = 0;
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.mean.len(), 1);
        assert!(res.trials.iter().all(|t| t.accuracy.len() == 1));
    }

    #[test]
    fn trials_record_distinct_queries() {
        for (model, acq) in [
            (ModelKind::Probit, AcquisitionKind::Mbr),
            (ModelKind::Hf, AcquisitionKind::Vopt),
            (ModelKind::Gr, AcquisitionKind::Random),
        ] {
            let res = run_experiment(&small(model, acq)).unwrap();
            for t in &res.trials {
                let mut nodes: Vec<_> = t.queries.iter().map(|q| q.0).collect();
                nodes.extend(t.initial.indices());
                let n = nodes.len();
                nodes.sort_unstable();
                nodes.dedup();
                assert_eq!(nodes.len(), n);
                assert!(t.accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
            }
        }
    }

    #[test]
    fn na_mode_fits_once() {
        let cfg = small(ModelKind::Probit, AcquisitionKind::Mc);
        let prep = prepare(&cfg).unwrap();
        let t = run_trial(&prep, &cfg, 0).unwrap();
        assert_eq!(t.stats.full_fits, 1);
        assert_eq!(t.stats.newton_solves, 1);

        let mut refresh = cfg.clone();
        refresh.refresh_every = 4;
        let t = run_trial(&prep, &refresh, 0).unwrap();
        assert_eq!(t.stats.full_fits, 3);
    }

    #[test]
    fn control_pair_is_identical() {
        let cfg = small(ModelKind::Probit, AcquisitionKind::Unc);
        let prep = prepare(&cfg).unwrap();
        let cmp = run_paired(&prep, &cfg, [UpdateMode::Retrain, UpdateMode::Retrain]).unwrap();
        assert!(cmp.abs_diff.iter().all(|&d| d == 0.0));
        assert!(run_paired(&prep, &cfg.clone().with(ModelKind::Probit, AcquisitionKind::Random), [
            UpdateMode::Retrain,
            UpdateMode::Na
        ])
        .is_err());
    }
}

//! One-query look-ahead: the posterior after hypothetically adding `(k, y)`
//! to the labeled set, computed by a rank-one update of the current
//! posterior instead of refitting.
//!
//! Every update has the shape `m' = m - c · C_{:,k}` and
//! `C' = C - w/(1 + C_kk w) · C_{:,k} C_{:,k}ᵀ`. For GR and HF this is exact
//! Gaussian conditioning; for the probit Laplace posterior it is one Newton
//! step on the look-ahead objective (the NA update).

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument;
use crate::posterior::{Label, Loss, Model, ModelKind, Posterior, ProbitLoss};

/// Where `F′` is evaluated in the NA covariance update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FprimeAt {
    /// At the NA-updated mean entry `ũ_k`.
    #[default]
    Updated,
    /// At the current MAP entry `û_k` (cheaper ablation).
    Current,
}

#[derive(Clone, Debug)]
pub struct LookaheadResult {
    pub k: usize,
    pub y: Label,
    pub mean: Array1<f64>,
    pub covariance: Option<Array2<f64>>,
    /// HF only: global node of each remaining row.
    pub index_map: Option<Vec<usize>>,
}

/// Local index of an unlabeled query node.
pub(crate) fn query_position(post: &Posterior, k: usize) -> Result<usize> {
    if k >= post.n_nodes() {
        return Err(Error::InvalidQuery {
            index: k,
            reason: format!("out of range for {} nodes", post.n_nodes()),
        });
    }
    if post.labeled().contains(k) {
        return Err(Error::InvalidQuery {
            index: k,
            reason: "node is already labeled".into(),
        });
    }
    post.local_index(k).ok_or_else(|| Error::InvalidQuery {
        index: k,
        reason: "node has no posterior row".into(),
    })
}

fn require_kind(post: &Posterior, kind: ModelKind) -> Result<()> {
    if post.kind() == kind {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{} update applied to a {} posterior",
            kind.name(),
            post.kind().name()
        )))
    }
}

/// Newton step size along `C_{:,k}`: `F(x, y) / (1 + C_kk F′(x, y))`.
pub(crate) fn newton_coefficient<L: Loss>(loss: &L, x: f64, y: Label, ckk: f64) -> f64 {
    loss.first(x, y) / (1.0 + ckk * loss.second(x, y))
}

/// Coefficient `c` of the look-ahead mean `m - c · C_{:,k}` for the
/// posterior's own model, at local index `local`.
pub(crate) fn mean_coefficient(post: &Posterior, local: usize, y: Label) -> f64 {
    let m = post.mean()[local];
    let ckk = post.covariance()[[local, local]];
    let gamma = post.noise().gamma;
    match post.kind() {
        ModelKind::Probit => newton_coefficient(&ProbitLoss(*post.noise()), m, y, ckk),
        ModelKind::Gr => (m - y.sign()) / (gamma * gamma + ckk),
        ModelKind::Hf => (m - y.binary()) / ckk,
    }
}

fn shifted_mean(mean: ArrayView1<f64>, column: ArrayView1<f64>, coef: f64) -> Array1<f64> {
    instrument::mean_update();
    let mut out = mean.to_owned();
    out.scaled_add(-coef, &column);
    out
}

/// `C - s · C_{:,k} C_{:,k}ᵀ` with row and column `k` removed.
fn downdate_without(cov: &Array2<f64>, local: usize, s: f64) -> Array2<f64> {
    instrument::covariance_update();
    let n = cov.nrows();
    let col = cov.row(local).to_owned();
    let mut out = Array2::zeros((n - 1, n - 1));
    for (a, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let i = a + usize::from(a >= local);
        let src = cov.row(i);
        let ci = col[i];
        for (b, v) in row.iter_mut().enumerate() {
            let j = b + usize::from(b >= local);
            *v = src[j] - s * (ci * col[j]);
        }
    }
    out
}

/// `C - s · C_{:,k} C_{:,k}ᵀ`, exactly symmetric.
fn rank_one_downdate(cov: &Array2<f64>, local: usize, s: f64) -> Array2<f64> {
    instrument::covariance_update();
    let col = cov.row(local).to_owned();
    let mut out = cov.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let ci = col[i];
        for (j, v) in row.iter_mut().enumerate() {
            *v -= s * (ci * col[j]);
        }
    }
    out
}

/// NA mean update `ũ = û - F(û_k, y)/(1 + Ĉ_kk F′(û_k, y)) · Ĉ_{:,k}`.
/// O(N) given the stored covariance.
pub fn na_mean_update(post: &Posterior, k: usize, y: Label) -> Result<Array1<f64>> {
    require_kind(post, ModelKind::Probit)?;
    let local = query_position(post, k)?;
    let coef = mean_coefficient(post, local, y);
    Ok(shifted_mean(post.mean().view(), post.covariance_column(local), coef))
}

/// NA covariance update
/// `C̃ = Ĉ - F′(x, y)/(1 + Ĉ_kk F′(x, y)) · Ĉ_{:,k} Ĉ_{:,k}ᵀ`, with `x = ũ_k`
/// (default) or `x = û_k`.
pub fn na_cov_update(
    post: &Posterior,
    k: usize,
    y: Label,
    na_mean: ArrayView1<f64>,
    at: FprimeAt,
) -> Result<Array2<f64>> {
    require_kind(post, ModelKind::Probit)?;
    let local = query_position(post, k)?;
    let x = match at {
        FprimeAt::Updated => na_mean[local],
        FprimeAt::Current => post.mean()[local],
    };
    let w = ProbitLoss(*post.noise()).second(x, y);
    let ckk = post.covariance()[[local, local]];
    Ok(rank_one_downdate(post.covariance(), local, w / (1.0 + ckk * w)))
}

/// Exact GR look-ahead: `m' = m - (m_k - y)/(γ² + C_kk) · C_{:,k}`,
/// `C' = C - C_{:,k}C_{:,k}ᵀ/(γ² + C_kk)`.
pub fn gr_lookahead(post: &Posterior, k: usize, y: Label, with_covariance: bool) -> Result<LookaheadResult> {
    require_kind(post, ModelKind::Gr)?;
    post.noise().require_positive()?;
    let local = query_position(post, k)?;
    let coef = mean_coefficient(post, local, y);
    let mean = shifted_mean(post.mean().view(), post.covariance_column(local), coef);
    let covariance = with_covariance.then(|| {
        let g2 = post.noise().gamma.powi(2);
        rank_one_downdate(post.covariance(), local, 1.0 / (g2 + post.covariance()[[local, local]]))
    });
    Ok(LookaheadResult {
        k,
        y,
        mean,
        covariance,
        index_map: None,
    })
}

/// Exact HF look-ahead (γ = 0 conditioning on the unlabeled block); the
/// row and column of `k` are removed afterwards since `k` becomes labeled.
pub fn hf_lookahead(post: &Posterior, k: usize, y: Label, with_covariance: bool) -> Result<LookaheadResult> {
    require_kind(post, ModelKind::Hf)?;
    let local = query_position(post, k)?;
    let ckk = post.covariance()[[local, local]];
    if !(ckk > 0.0) {
        return Err(Error::Internal(format!("non-positive conditional variance {ckk} at node {k}")));
    }
    let coef = mean_coefficient(post, local, y);
    let full_mean = shifted_mean(post.mean().view(), post.covariance_column(local), coef);
    let dim = full_mean.len();
    let keep: Vec<usize> = (0..dim).filter(|&i| i != local).collect();
    let mean = full_mean.select(Axis(0), &keep);
    let covariance = with_covariance.then(|| downdate_without(post.covariance(), local, 1.0 / ckk));
    let map = post.index_map().expect("HF posterior has an index map");
    let index_map = keep.iter().map(|&i| map[i]).collect();
    Ok(LookaheadResult {
        k,
        y,
        mean,
        covariance,
        index_map: Some(index_map),
    })
}

/// Refits the model from scratch with `(k, y)` appended. If `k` is already
/// labeled the observation is repeated.
pub fn retrain_lookahead(
    model: &Model,
    lab: &crate::posterior::LabeledSet,
    k: usize,
    y: Label,
) -> Result<Posterior> {
    model.fit(&lab.with_repeat(k, y))
}

/// Conditions the posterior on an actual label by the rank-one update of its
/// model (NA for probit, exact for GR and HF).
pub fn absorb_label(post: &Posterior, k: usize, y: Label, at: FprimeAt) -> Result<Posterior> {
    let mut labeled = post.labeled().clone();
    match post.kind() {
        ModelKind::Probit => {
            let mean = na_mean_update(post, k, y)?;
            let cov = na_cov_update(post, k, y, mean.view(), at)?;
            labeled.insert(k, y)?;
            Posterior::from_parts(ModelKind::Probit, post.n_nodes(), mean, cov, labeled, None, *post.noise())
        }
        ModelKind::Gr => {
            let res = gr_lookahead(post, k, y, true)?;
            labeled.insert(k, y)?;
            Posterior::from_parts(
                ModelKind::Gr,
                post.n_nodes(),
                res.mean,
                res.covariance.unwrap(),
                labeled,
                None,
                *post.noise(),
            )
        }
        ModelKind::Hf => {
            let res = hf_lookahead(post, k, y, true)?;
            labeled.insert(k, y)?;
            Posterior::from_parts(
                ModelKind::Hf,
                post.n_nodes(),
                res.mean,
                res.covariance.unwrap(),
                labeled,
                res.index_map,
                *post.noise(),
            )
        }
    }
}

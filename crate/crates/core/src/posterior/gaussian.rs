use ndarray::{Array1, Array2, Axis};

use super::{low_rank_downdate, LabeledSet, ModelKind, NoiseModel, Posterior};
use crate::error::{invalid, Error, Result};
use crate::graph::{Laplacian, PriorPrecision};
use crate::linalg::Cholesky;

/// Exact Gaussian-regression posterior
/// `C = (L_τ + PᵀP/γ²)⁻¹`, `m = C Pᵀy/γ²`.
///
/// Evaluated in covariance form through the cached prior covariance
/// `K = L_τ⁻¹`: `C = K - K_{:,L}(γ²I + K_{LL})⁻¹K_{L,:}` and
/// `m = K_{:,L}(γ²I + K_{LL})⁻¹y`, which costs O(N²|L|) instead of a fresh
/// N×N factorization.
pub fn gr_posterior(lt: &PriorPrecision, lab: &LabeledSet, noise: &NoiseModel) -> Result<Posterior> {
    noise.require_positive()?;
    if lab.is_empty() {
        return Err(invalid("GR posterior needs at least one label"));
    }
    let n = lt.n_nodes();
    lab.check_bounds(n)?;
    let k = lt.covariance();
    let idx = lab.indices();
    let y: Array1<f64> = lab.iter().map(|(_, l)| l.sign()).collect();
    let k_rows = k.select(Axis(0), &idx);
    let mut gram = k_rows.select(Axis(1), &idx);
    let g2 = noise.gamma * noise.gamma;
    gram.diag_mut().mapv_inplace(|v| v + g2);
    let chol = Cholesky::factor(gram.view())
        .map_err(|e| Error::Internal(format!("GR observation system is singular: {e}")))?;
    let alpha = chol.solve(y.view());
    let mean = k_rows.t().dot(&alpha);
    let cov = low_rank_downdate(&k, &k_rows, &chol.inverse());
    Ok(Posterior::new(ModelKind::Gr, n, mean, cov, lab.clone(), None, *noise))
}

pub fn hf_posterior(l: &Laplacian, lab: &LabeledSet) -> Result<Posterior> {
    hf_posterior_with_jitter(l, lab, 0.0)
}

/// Harmonic-function posterior on the unlabeled block:
/// `m_U = -L_UU⁻¹ L_UL y` with `y ∈ {0,1}`, `C = L_UU⁻¹`. A positive `jitter`
/// adds `jitter·I` to `L_UU`.
pub fn hf_posterior_with_jitter(l: &Laplacian, lab: &LabeledSet, jitter: f64) -> Result<Posterior> {
    if lab.is_empty() {
        return Err(invalid("HF posterior needs at least one label"));
    }
    if !(jitter >= 0.0) {
        return Err(invalid(format!("HF jitter must be nonnegative, got {jitter}")));
    }
    let n = l.n_nodes();
    lab.check_bounds(n)?;
    // Repeated observations carry no extra information at γ = 0.
    let mut distinct = LabeledSet::new();
    for (i, y) in lab.iter() {
        match distinct.label_of(i) {
            None => distinct.insert(i, y)?,
            Some(prev) if prev != y => {
                return Err(invalid(format!("node {i} observed with conflicting labels")));
            }
            Some(_) => {}
        }
    }
    let unlabeled = distinct.unlabeled(n);
    let noise = NoiseModel::gaussian(0.0);
    if unlabeled.is_empty() {
        return Ok(Posterior::new(
            ModelKind::Hf,
            n,
            Array1::zeros(0),
            Array2::zeros((0, 0)),
            distinct,
            Some(unlabeled),
            noise,
        ));
    }

    let mut luu = l.matrix().dense_submatrix(&unlabeled);
    if jitter > 0.0 {
        luu.diag_mut().mapv_inplace(|v| v + jitter);
    }
    let chol = match Cholesky::factor(luu.view()) {
        Ok(c) => c,
        Err(e) => return Err(unlabeled_component(l, &distinct).unwrap_or(e)),
    };

    let mut position = vec![usize::MAX; n];
    for (p, &u) in unlabeled.iter().enumerate() {
        position[u] = p;
    }
    let mut rhs = Array1::<f64>::zeros(unlabeled.len());
    for (j, y) in distinct.iter() {
        let yj = y.binary();
        if yj == 0.0 {
            continue;
        }
        // L is symmetric, so row j lists the entries L[u, j].
        for (u, v) in l.matrix().row(j) {
            let p = position[u];
            if p != usize::MAX {
                rhs[p] -= v * yj;
            }
        }
    }
    let mean = chol.solve(rhs.view());
    let cov = chol.inverse();
    Ok(Posterior::new(ModelKind::Hf, n, mean, cov, distinct, Some(unlabeled), noise))
}

fn unlabeled_component(l: &Laplacian, lab: &LabeledSet) -> Option<Error> {
    let comps = l.components();
    let n_comp = comps.iter().copied().max().map_or(0, |m| m + 1);
    let mut has_label = vec![false; n_comp];
    for (i, _) in lab.iter() {
        has_label[comps[i]] = true;
    }
    let bad = (0..n_comp).find(|&c| !has_label[c])?;
    let members: Vec<usize> = (0..comps.len()).filter(|&i| comps[i] == bad).collect();
    Some(Error::ComponentWithoutLabel {
        representative: members[0],
        size: members.len(),
    })
}

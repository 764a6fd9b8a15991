//! MAP estimation of `J(u) = ½⟨u, L_τ u⟩ + Σ_j ℓ(u_j, y_j)` by damped
//! Newton, and the Laplace covariance `(∇²J(û))⁻¹`.
//!
//! The Hessian `L_τ + PᵀWP` (W = diag F′) differs from the prior precision
//! only on labeled rows, so every solve goes through the cached prior
//! covariance `K = L_τ⁻¹` and a |L|×|L| system
//! `B = I + W^½ K_LL W^½` (Woodbury).

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::{low_rank_downdate, LabeledSet, Loss, ModelKind, NewtonConfig, NoiseModel, Posterior, ProbitLoss};
use crate::error::{invalid, Error, Result};
use crate::graph::PriorPrecision;
use crate::instrument;
use crate::linalg::Cholesky;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    /// Newton steps taken.
    pub iterations: usize,
    /// ∞-norm of the gradient at the returned point.
    pub grad_norm: f64,
    /// Objective at every accepted iterate, starting from u = 0.
    pub objectives: Vec<f64>,
}

pub fn objective<L: Loss>(lt: &PriorPrecision, lab: &LabeledSet, loss: &L, u: ArrayView1<f64>) -> f64 {
    0.5 * lt.matrix().quadratic_form(u) + lab.iter().map(|(j, y)| loss.value(u[j], y)).sum::<f64>()
}

pub fn objective_gradient<L: Loss>(
    lt: &PriorPrecision,
    lab: &LabeledSet,
    loss: &L,
    u: ArrayView1<f64>,
) -> Array1<f64> {
    let mut g = lt.matrix().matvec(u);
    for (j, y) in lab.iter() {
        g[j] += loss.first(u[j], y);
    }
    g
}

/// Labeled-block quantities reused by every Newton step.
struct ObservationBlock {
    /// Rows of K at the labeled indices, |L|×N.
    k_rows: Array2<f64>,
    k_ll: Array2<f64>,
}

impl ObservationBlock {
    fn new(k: &Array2<f64>, idx: &[usize]) -> Self {
        let k_rows = k.select(Axis(0), idx);
        let k_ll = k_rows.select(Axis(1), idx);
        ObservationBlock { k_rows, k_ll }
    }

    /// Cholesky of `B = I + W^½ K_LL W^½`.
    fn factor_b(&self, sqrt_w: &Array1<f64>) -> Result<Cholesky> {
        let m = sqrt_w.len();
        let mut b = Array2::<f64>::eye(m);
        for r in 0..m {
            for c in 0..m {
                b[[r, c]] += sqrt_w[r] * self.k_ll[[r, c]] * sqrt_w[c];
            }
        }
        Cholesky::factor(b.view()).map_err(|e| Error::Internal(format!("Newton system: {e}")))
    }
}

pub fn probit_map(
    lt: &PriorPrecision,
    lab: &LabeledSet,
    noise: &NoiseModel,
    cfg: &NewtonConfig,
) -> Result<Array1<f64>> {
    noise.require_positive()?;
    probit_map_with_loss(lt, lab, &ProbitLoss(*noise), cfg).map(|(u, _)| u)
}

/// Damped Newton from `u = 0`; full steps, halved while the objective
/// increases.
pub fn probit_map_with_loss<L: Loss>(
    lt: &PriorPrecision,
    lab: &LabeledSet,
    loss: &L,
    cfg: &NewtonConfig,
) -> Result<(Array1<f64>, NewtonReport)> {
    cfg.validate()?;
    if lab.is_empty() {
        return Err(invalid("probit posterior needs at least one label"));
    }
    let n = lt.n_nodes();
    lab.check_bounds(n)?;
    instrument::newton_solve();

    let k = lt.covariance();
    let idx = lab.indices();
    let obs: Vec<_> = lab.iter().collect();
    let block = ObservationBlock::new(&k, &idx);

    let mut u = Array1::<f64>::zeros(n);
    let mut current = objective(lt, lab, loss, u.view());
    let mut report = NewtonReport {
        objectives: vec![current],
        ..Default::default()
    };

    for iteration in 0..=cfg.max_iters {
        let grad = objective_gradient(lt, lab, loss, u.view());
        let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.grad_norm = grad_norm;
        if grad_norm <= cfg.grad_tol {
            report.iterations = iteration;
            return Ok((u, report));
        }
        if iteration == cfg.max_iters {
            break;
        }

        let f: Array1<f64> = obs.iter().map(|&(j, y)| loss.first(u[j], y)).collect();
        let sqrt_w: Array1<f64> = obs.iter().map(|&(j, y)| loss.second(u[j], y).max(0.0).sqrt()).collect();
        // K g = K L_τ u + K Pᵀ F = u + K_{:,L} F.
        let kg = &u + &block.k_rows.t().dot(&f);
        let kg_l: Array1<f64> = idx.iter().map(|&j| kg[j]).collect();
        let s = block.factor_b(&sqrt_w)?.solve((&sqrt_w * &kg_l).view());
        let direction = &kg - &block.k_rows.t().dot(&(&sqrt_w * &s));

        let slack = 1e-12 * current.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = &u - &(&direction * step);
            let value = objective(lt, lab, loss, trial.view());
            if value <= current + slack {
                accepted = Some((trial, value));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, value)) => {
                u = trial;
                current = value;
                report.objectives.push(value);
            }
            None => {
                return Err(Error::Convergence {
                    iterations: iteration + 1,
                    grad_norm,
                })
            }
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iters,
        grad_norm: report.grad_norm,
    })
}

/// Laplace approximation around the MAP: mean `û`, covariance
/// `(L_τ + Σ_j F′(û_j, y_j) e_j e_jᵀ)⁻¹`.
pub fn probit_laplace(
    lt: &PriorPrecision,
    lab: &LabeledSet,
    noise: &NoiseModel,
    cfg: &NewtonConfig,
) -> Result<Posterior> {
    noise.require_positive()?;
    let (mean, cov, _) = laplace_with_loss(lt, lab, &ProbitLoss(*noise), cfg)?;
    Ok(Posterior::new(ModelKind::Probit, lt.n_nodes(), mean, cov, lab.clone(), None, *noise))
}

pub fn laplace_with_loss<L: Loss>(
    lt: &PriorPrecision,
    lab: &LabeledSet,
    loss: &L,
    cfg: &NewtonConfig,
) -> Result<(Array1<f64>, Array2<f64>, NewtonReport)> {
    let (u, report) = probit_map_with_loss(lt, lab, loss, cfg)?;
    let k = lt.covariance();
    let idx = lab.indices();
    let block = ObservationBlock::new(&k, &idx);
    let sqrt_w: Array1<f64> = lab.iter().map(|(j, y)| loss.second(u[j], y).max(0.0).sqrt()).collect();
    let b_inv = block.factor_b(&sqrt_w)?.inverse();
    // H⁻¹ = K - K_{:,L} W^½ B⁻¹ W^½ K_{L,:}
    let m = sqrt_w.len();
    let s = Array2::from_shape_fn((m, m), |(r, c)| sqrt_w[r] * b_inv[[r, c]] * sqrt_w[c]);
    let cov = low_rank_downdate(&k, &block.k_rows, &s);
    Ok((u, cov, report))
}

//! Acquisition functions. Every scorer returns one finite score per
//! unlabeled node, oriented so that the query is the argmax.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, Parallelism};
use crate::instrument;
use crate::lookahead::mean_coefficient;
use crate::posterior::{probability, Label, ModelKind, Posterior, PROB_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    /// Model change: smallest NA update norm over both labels.
    Mc,
    Vopt,
    Sigmaopt,
    /// Minimum expected classification risk after the look-ahead.
    Mbr,
    /// Minimum margin.
    Unc,
    Random,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 6] = [
        AcquisitionKind::Mc,
        AcquisitionKind::Vopt,
        AcquisitionKind::Sigmaopt,
        AcquisitionKind::Mbr,
        AcquisitionKind::Unc,
        AcquisitionKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::Mc => "mc",
            AcquisitionKind::Vopt => "vopt",
            AcquisitionKind::Sigmaopt => "sigmaopt",
            AcquisitionKind::Mbr => "mbr",
            AcquisitionKind::Unc => "unc",
            AcquisitionKind::Random => "random",
        }
    }

    /// Whether the method is defined for the given model.
    pub fn supports(self, model: ModelKind) -> bool {
        !(self == AcquisitionKind::Mc && model == ModelKind::Hf)
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        AcquisitionKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .or(match lower.as_str() {
                "uncertainty" => Some(AcquisitionKind::Unc),
                "σopt" | "sigma-opt" => Some(AcquisitionKind::Sigmaopt),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown acquisition function '{s}'")))
    }
}

/// Scores over the unlabeled nodes, ascending by node index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcquisitionScores {
    pub method: AcquisitionKind,
    pub nodes: Vec<usize>,
    pub scores: Vec<f64>,
}

impl AcquisitionScores {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().copied().zip(self.scores.iter().copied())
    }

    pub fn get(&self, node: usize) -> Option<f64> {
        self.nodes.binary_search(&node).ok().map(|p| self.scores[p])
    }

    /// The `n` best `(node, score)` pairs, best first, ties by node index.
    pub fn top(&self, n: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<_> = self.iter().collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(n);
        all
    }
}

/// Argmax of the scores; ties go to the smallest node index.
pub fn select_query(s: &AcquisitionScores) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (node, score) in s.iter() {
        if !score.is_finite() {
            return Err(Error::Internal(format!("{} score at node {node} is {score}", s.method)));
        }
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((node, score)),
        }
    }
    best.map(|(node, _)| node).ok_or(Error::EmptyPool)
}

/// Local indices of the unlabeled nodes, paired with the node ids.
fn candidates(post: &Posterior) -> (Vec<usize>, Vec<usize>) {
    let nodes = post.candidates();
    let locals = nodes
        .iter()
        .map(|&n| post.local_index(n).expect("unlabeled node has a posterior row"))
        .collect();
    (nodes, locals)
}

fn scored(method: AcquisitionKind, nodes: Vec<usize>, scores: Vec<f64>) -> AcquisitionScores {
    AcquisitionScores { method, nodes, scores }
}

/// `‖C_{:,k}‖² / (γ² + C_kk)`.
pub fn vopt_scores(post: &Posterior, par: Parallelism) -> AcquisitionScores {
    let (nodes, locals) = candidates(post);
    let c = post.covariance();
    let g2 = post.noise().gamma.powi(2);
    let scores = map_slice(par, &locals, |&k| {
        let col = c.row(k);
        col.dot(&col) / (g2 + c[[k, k]])
    });
    scored(AcquisitionKind::Vopt, nodes, scores)
}

/// `⟨1, C_{:,k}⟩ / (γ² + C_kk)`.
pub fn sigmaopt_scores(post: &Posterior) -> AcquisitionScores {
    let (nodes, locals) = candidates(post);
    let c = post.covariance();
    let g2 = post.noise().gamma.powi(2);
    let sums = c.sum_axis(Axis(1));
    let scores = locals.iter().map(|&k| sums[k] / (g2 + c[[k, k]])).collect();
    scored(AcquisitionKind::Sigmaopt, nodes, scores)
}

/// Negative distance of the mean to the decision threshold.
pub fn uncertainty_scores(post: &Posterior) -> AcquisitionScores {
    let (nodes, locals) = candidates(post);
    let threshold = if post.kind() == ModelKind::Hf { 0.5 } else { 0.0 };
    let m = post.mean();
    let scores = locals.iter().map(|&k| -(m[k] - threshold).abs()).collect();
    scored(AcquisitionKind::Unc, nodes, scores)
}

/// `min_y |F(m_k, y)| / (1 + C_kk F′(m_k, y)) · ‖C_{:,k}‖`, the norm of the
/// smaller of the two look-ahead mean steps. GR uses the quadratic loss.
pub fn mc_scores(post: &Posterior, par: Parallelism) -> Result<AcquisitionScores> {
    if post.kind() == ModelKind::Hf {
        return Err(Error::Unsupported("model change is not defined for the harmonic model".into()));
    }
    if post.kind() == ModelKind::Gr {
        post.noise().require_positive()?;
    }
    let (nodes, locals) = candidates(post);
    let c = post.covariance();
    let scores = map_slice(par, &locals, |&k| {
        let col = c.row(k);
        let step = Label::BOTH
            .iter()
            .map(|&y| mean_coefficient(post, k, y).abs())
            .fold(f64::INFINITY, f64::min);
        step * col.dot(&col).sqrt()
    });
    Ok(scored(AcquisitionKind::Mc, nodes, scores))
}

/// Negative expected risk `E_{y_k}[Σ_i min(p_i, 1 - p_i)]` of the look-ahead
/// classifier, using mean-only look-ahead and the current `P(y_k = +1)`.
/// Probabilities follow the prediction rule of the posterior's model, with
/// the current marginal variances; labeled nodes (including `k` after the
/// look-ahead) contribute the probability floor.
pub fn mbr_scores(post: &Posterior, par: Parallelism) -> Result<AcquisitionScores> {
    if post.kind() == ModelKind::Gr {
        post.noise().require_positive()?;
    }
    let (nodes, locals) = candidates(post);
    let kind = post.kind();
    let noise = *post.noise();
    let c = post.covariance();
    let m = post.mean();
    let diag: Vec<f64> = c.diag().to_vec();
    let labeled_risk = (post.labeled().len() + 1) as f64 * PROB_FLOOR;

    let scores = map_slice(par, &locals, |&k| {
        let col = c.row(k);
        let risk_after = |y: Label| {
            instrument::mean_update();
            let coef = mean_coefficient(post, k, y);
            let mut risk = labeled_risk;
            for &i in &locals {
                if i == k {
                    continue;
                }
                let p = probability(kind, &noise, m[i] - coef * col[i], diag[i]);
                risk += p.min(1.0 - p);
            }
            risk
        };
        let q = post.probability_at(k, m[k]);
        let expected = q * risk_after(Label::Positive) + (1.0 - q) * risk_after(Label::Negative);
        -expected
    });
    Ok(scored(AcquisitionKind::Mbr, nodes, scores))
}

/// I.i.d. uniform scores, drawn in ascending node order.
pub fn random_scores<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> Result<AcquisitionScores> {
    let nodes = post.candidates();
    if nodes.is_empty() {
        return Err(Error::EmptyPool);
    }
    let scores = nodes.iter().map(|_| rng.random::<f64>()).collect();
    Ok(scored(AcquisitionKind::Random, nodes, scores))
}

pub fn score<R: Rng + ?Sized>(
    kind: AcquisitionKind,
    post: &Posterior,
    par: Parallelism,
    rng: &mut R,
) -> Result<AcquisitionScores> {
    match kind {
        AcquisitionKind::Mc => mc_scores(post, par),
        AcquisitionKind::Vopt => Ok(vopt_scores(post, par)),
        AcquisitionKind::Sigmaopt => Ok(sigmaopt_scores(post)),
        AcquisitionKind::Mbr => mbr_scores(post, par),
        AcquisitionKind::Unc => Ok(uncertainty_scores(post)),
        AcquisitionKind::Random => random_scores(post, rng),
    }
}

/// Scores and selects in one call.
pub fn choose<R: Rng + ?Sized>(
    kind: AcquisitionKind,
    post: &Posterior,
    par: Parallelism,
    rng: &mut R,
) -> Result<(usize, AcquisitionScores)> {
    let s = score(kind, post, par, rng)?;
    Ok((select_query(&s)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{LabeledSet, NoiseModel};
    use ndarray::{array, Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(kind: ModelKind, mean: Array1<f64>, cov: Array2<f64>, gamma: f64) -> Posterior {
        let n = mean.len();
        Posterior::from_parts(kind, n, mean, cov, LabeledSet::new(), None, NoiseModel::gaussian(gamma)).unwrap()
    }

    #[test]
    fn vopt_and_sigmaopt_on_two_by_two() {
        let post = gaussian(ModelKind::Gr, Array1::zeros(2), array![[2.0, 1.0], [1.0, 2.0]], 1.0);
        let v = vopt_scores(&post, Parallelism::Sequential);
        assert!((v.scores[0] - 5.0 / 3.0).abs() < 1e-15 && (v.scores[1] - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(select_query(&v).unwrap(), 0);
        let s = sigmaopt_scores(&post);
        assert_eq!(s.scores, vec![1.0, 1.0]);
    }

    #[test]
    fn isotropic_covariance_ties() {
        let post = gaussian(ModelKind::Gr, Array1::zeros(3), Array2::eye(3) * 4.0, 1.0);
        let v = vopt_scores(&post, Parallelism::Sequential);
        assert!(v.scores.iter().all(|&s| (s - 16.0 / 5.0).abs() < 1e-15));
        assert_eq!(select_query(&v).unwrap(), 0);
        let post = gaussian(ModelKind::Gr, Array1::zeros(3), Array2::eye(3), 1.0);
        assert!(sigmaopt_scores(&post).scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn uncertainty_picks_boundary() {
        let post = gaussian(ModelKind::Probit, array![0.9, -0.1, 2.0], Array2::eye(3), 1.0);
        assert_eq!(select_query(&uncertainty_scores(&post)).unwrap(), 1);
        let hf = Posterior::from_parts(
            ModelKind::Hf,
            5,
            array![0.2, 0.5, 0.8],
            Array2::eye(3),
            LabeledSet::from_pairs([(0, Label::Negative), (4, Label::Positive)]).unwrap(),
            Some(vec![1, 2, 3]),
            NoiseModel::gaussian(0.0),
        )
        .unwrap();
        assert_eq!(select_query(&uncertainty_scores(&hf)).unwrap(), 2);
    }

    #[test]
    fn mc_zero_at_perfect_fit() {
        let post = gaussian(ModelKind::Gr, array![1.0, 0.3], array![[1.0, 0.2], [0.2, 1.0]], 0.5);
        let s = mc_scores(&post, Parallelism::Sequential).unwrap();
        assert_eq!(s.scores[0], 0.0);
        assert!(s.scores[1] > 0.0);
    }

    #[test]
    fn mc_rejects_harmonic() {
        let hf = Posterior::from_parts(
            ModelKind::Hf,
            3,
            array![0.5],
            Array2::eye(1),
            LabeledSet::from_pairs([(0, Label::Negative), (2, Label::Positive)]).unwrap(),
            Some(vec![1]),
            NoiseModel::gaussian(0.0),
        )
        .unwrap();
        assert!(matches!(mc_scores(&hf, Parallelism::Sequential), Err(Error::Unsupported(_))));
    }

    #[test]
    fn select_query_tie_rule_and_errors() {
        let s = scored(AcquisitionKind::Vopt, vec![3, 7], vec![0.5, 0.5]);
        assert_eq!(select_query(&s).unwrap(), 3);
        let s = scored(AcquisitionKind::Vopt, vec![2, 5], vec![1.0, 0.9]);
        assert_eq!(select_query(&s).unwrap(), 2);
        let s = scored(AcquisitionKind::Vopt, vec![9], vec![-4.0]);
        assert_eq!(select_query(&s).unwrap(), 9);
        let s = scored(AcquisitionKind::Vopt, vec![], vec![]);
        assert!(matches!(select_query(&s), Err(Error::EmptyPool)));
        let s = scored(AcquisitionKind::Vopt, vec![1], vec![f64::NAN]);
        assert!(select_query(&s).is_err());
    }

    #[test]
    fn random_is_uniform_and_reproducible() {
        let post = gaussian(ModelKind::Gr, Array1::zeros(10), Array2::eye(10), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[select_query(&random_scores(&post, &mut rng).unwrap()).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (850..=1150).contains(&c)), "{counts:?}");

        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| select_query(&random_scores(&post, &mut rng).unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn parse_names() {
        for k in AcquisitionKind::ALL {
            assert_eq!(k.name().parse::<AcquisitionKind>().unwrap(), k);
        }
        assert_eq!("Uncertainty".parse::<AcquisitionKind>().unwrap(), AcquisitionKind::Unc);
        assert!("eer".parse::<AcquisitionKind>().is_err());
    }
}

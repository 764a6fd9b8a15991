#![allow(dead_code)]

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphal_core::graph::{laplacian, regularized_precision, Laplacian, LaplacianKind, PriorPrecision, SimilarityGraph};
use graphal_core::linalg::CsrMatrix;
use graphal_core::posterior::{Label, LabeledSet};

/// A random connected weighted graph with its prior and a labeled subset.
pub struct Instance {
    pub n: usize,
    pub laplacian: Arc<Laplacian>,
    pub precision: Arc<PriorPrecision>,
    pub labeled: LabeledSet,
    pub tau: f64,
    pub gamma: f64,
    pub rng: ChaCha8Rng,
}

impl Instance {
    pub fn new(n: usize, seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Random spanning tree plus extra edges keeps every instance connected.
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = Vec::new();
        for i in 1..n {
            let parent = order[rng.random_range(0..i)];
            edges.push((order[i], parent, rng.random_range(0.1..2.0)));
        }
        for _ in 0..n {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.push((a, b, rng.random_range(0.1..2.0)));
            }
        }
        let trip = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]);
        let g = SimilarityGraph::from_weights(CsrMatrix::from_triplets(n, n, trip)).unwrap();
        let kind = if rng.random_bool(0.5) {
            LaplacianKind::Unnormalized
        } else {
            LaplacianKind::Normalized
        };
        let lap = Arc::new(laplacian(&g, kind));
        let tau = rng.random_range(0.3..2.0);
        let gamma = rng.random_range(0.1..1.0);
        let precision = Arc::new(regularized_precision(&lap, tau).unwrap());
        let n_labels = rng.random_range(1..=(n - 1).min(12));
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut rng);
        let labeled = LabeledSet::from_pairs(nodes[..n_labels].iter().map(|&i| (i, random_label(&mut rng)))).unwrap();
        Instance {
            n,
            laplacian: lap,
            precision,
            labeled,
            tau,
            gamma,
            rng,
        }
    }

    /// A uniformly chosen unlabeled node.
    pub fn unlabeled_node(&mut self) -> usize {
        let pool = self.labeled.unlabeled(self.n);
        pool[self.rng.random_range(0..pool.len())]
    }

    pub fn label(&mut self) -> Label {
        random_label(&mut self.rng)
    }
}

pub fn random_label(rng: &mut impl Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Inverse by Gauss–Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| m[i][n + j])
}

/// `max |a - b| / max |b|`.
pub fn rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale
}

pub fn rel_diff_vec(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale
}

/// `φ(z)/Φ(z)` for large negative `z` from the asymptotic series
/// `Φ(z) ≈ φ(z)/|z| · (1 − 1/z² + 3/z⁴ − 15/z⁶ + 105/z⁸ − 945/z¹⁰)`.
/// Returns the ratio and `ratio + z`.
pub fn mills_asymptote(z: f64) -> (f64, f64) {
    let t = 1.0 / (z * z);
    let tail = t * (1.0 - t * (3.0 - t * (15.0 - t * (105.0 - 945.0 * t))));
    let series = 1.0 - tail;
    let r = -z / series;
    (r, -z * tail / series)
}

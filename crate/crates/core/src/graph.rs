//! Similarity graphs over feature vectors, their Laplacians, and the
//! regularized prior precision `L_τ = τ⁻²(L + τ²I)`.

use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

use log::warn;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indices, Parallelism};
use crate::linalg::{Cholesky, CsrMatrix};

/// Largest node count for which dense N×N work (full kernel graphs,
/// covariances) is attempted.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// N feature vectors of dimension d, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(invalid(format!("need at least 2 feature vectors, got {n}")));
        }
        if d < 1 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(FeatureMatrix {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    fn row_slice(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.row_slice(i)
            .iter()
            .zip(self.row_slice(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Undirected weighted graph: symmetric, nonnegative weights, no self loops.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    weights: CsrMatrix,
}

impl SimilarityGraph {
    pub fn from_weights(weights: CsrMatrix) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(invalid("weight matrix must be square"));
        }
        for (i, j, w) in weights.iter() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("weight W[{i},{j}] = {w} is not a finite nonnegative number")));
            }
            if i == j && w != 0.0 {
                return Err(invalid(format!("self loop at node {i}")));
            }
        }
        if !weights.is_symmetric() {
            return Err(invalid("weight matrix is not symmetric"));
        }
        Ok(SimilarityGraph { weights })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_sums()
    }

    /// Component id per node, counting only edges of positive weight.
    /// Ids are assigned in order of each component's smallest node.
    pub fn connected_components(&self) -> Vec<usize> {
        let n = self.n_nodes();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for (j, w) in self.weights.row(i) {
                    if w > 0.0 && comp[j] == usize::MAX {
                        comp[j] = next;
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

fn gaussian_kernel(sq_dist: f64, length_scale: f64) -> f64 {
    (-sq_dist / (length_scale * length_scale)).exp()
}

fn check_scale(length_scale: f64) -> Result<()> {
    if length_scale > 0.0 && length_scale.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("length scale must be positive, got {length_scale}")))
    }
}

/// Connects every node to its `k` nearest neighbours (exact Euclidean
/// distance, ties broken by index) with weight `exp(-‖xᵢ-xⱼ‖²/ℓ²)`, then
/// symmetrizes by the elementwise maximum.
pub fn build_knn_graph(
    x: &FeatureMatrix,
    k: usize,
    length_scale: f64,
    par: Parallelism,
) -> Result<SimilarityGraph> {
    let n = x.n_points();
    if k == 0 || k >= n {
        return Err(invalid(format!("k must satisfy 1 <= k < N = {n}, got {k}")));
    }
    check_scale(length_scale)?;

    let neighbours: Vec<Vec<(usize, f64)>> = map_indices(par, n, |i| {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (x.squared_distance(i, j), j))
            .collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
        cand.sort_unstable_by(by_dist);
        cand.into_iter()
            .map(|(d2, j)| (j, gaussian_kernel(d2, length_scale)))
            .collect()
    });

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, w) in list {
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
    }
    // Each directed edge may appear twice (once per endpoint's list); keep the
    // maximum, which equals the shared kernel value.
    let rows = rows
        .into_iter()
        .map(|mut row| {
            row.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            row.dedup_by_key(|e| e.0);
            row
        })
        .collect();
    SimilarityGraph::from_weights(CsrMatrix::from_rows(n, rows))
}

/// Dense Gaussian-kernel graph on all pairs.
pub fn build_full_graph(x: &FeatureMatrix, length_scale: f64) -> Result<SimilarityGraph> {
    build_full_graph_with_cap(x, length_scale, DEFAULT_DENSE_CAP, Parallelism::default())
}

pub fn build_full_graph_with_cap(
    x: &FeatureMatrix,
    length_scale: f64,
    cap: usize,
    par: Parallelism,
) -> Result<SimilarityGraph> {
    let n = x.n_points();
    if n > cap {
        return Err(Error::ResourceLimit {
            what: "full similarity graph",
            size: n,
            cap,
        });
    }
    check_scale(length_scale)?;
    let rows = map_indices(par, n, |i| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, gaussian_kernel(x.squared_distance(i, j), length_scale)))
            .collect::<Vec<_>>()
    });
    SimilarityGraph::from_weights(CsrMatrix::from_rows(n, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaplacianKind {
    #[serde(rename = "u", alias = "unnormalized")]
    Unnormalized,
    #[serde(rename = "n", alias = "normalized")]
    Normalized,
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" | "unnormalized" => Ok(LaplacianKind::Unnormalized),
            "n" | "normalized" => Ok(LaplacianKind::Normalized),
            _ => Err(invalid(format!("unknown Laplacian kind '{s}' (expected u or n)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Laplacian {
    kind: LaplacianKind,
    matrix: CsrMatrix,
    degrees: Vec<f64>,
    isolated: Vec<usize>,
    components: Vec<usize>,
}

impl Laplacian {
    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Nodes of zero degree.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Connected-component id per node of the underlying graph.
    pub fn components(&self) -> &[usize] {
        &self.components
    }
}

/// `L_u = D - W`, or `L_n = D^{-1/2}(D - W)D^{-1/2}` with isolated nodes'
/// rows and columns left at zero.
pub fn laplacian(g: &SimilarityGraph, kind: LaplacianKind) -> Laplacian {
    let n = g.n_nodes();
    let degrees = g.degrees();
    let isolated: Vec<usize> = (0..n).filter(|&i| degrees[i] == 0.0).collect();
    let scale: Vec<f64> = match kind {
        LaplacianKind::Unnormalized => vec![1.0; n],
        LaplacianKind::Normalized => {
            if !isolated.is_empty() {
                warn!(
                    "{} isolated node(s) (first: {}); their normalized Laplacian rows are zero",
                    isolated.len(),
                    isolated[0]
                );
            }
            degrees
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect()
        }
    };
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = g
                .weights()
                .row(i)
                .map(|(j, w)| (j, -w * scale[i] * scale[j]))
                .collect();
            row.push((i, degrees[i] * scale[i] * scale[i]));
            row
        })
        .collect();
    Laplacian {
        kind,
        matrix: CsrMatrix::from_rows(n, rows),
        degrees,
        isolated,
        components: g.connected_components(),
    }
}

/// Positive-definite prior precision with a cached Cholesky factor and a
/// lazily materialized dense inverse (the prior covariance).
pub struct PriorPrecision {
    matrix: CsrMatrix,
    tau: f64,
    cholesky: Cholesky,
    covariance: OnceLock<Arc<Array2<f64>>>,
}

impl std::fmt::Debug for PriorPrecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PriorPrecision")
            .field("n", &self.matrix.nrows())
            .field("tau", &self.tau)
            .finish()
    }
}

impl PriorPrecision {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.cholesky
    }

    /// `L_τ⁻¹`, computed once and shared.
    pub fn covariance(&self) -> Arc<Array2<f64>> {
        self.covariance
            .get_or_init(|| Arc::new(self.cholesky.inverse()))
            .clone()
    }
}

pub fn regularized_precision(l: &Laplacian, tau: f64) -> Result<PriorPrecision> {
    regularized_precision_with_cap(l, tau, DEFAULT_DENSE_CAP)
}

pub fn regularized_precision_with_cap(l: &Laplacian, tau: f64, cap: usize) -> Result<PriorPrecision> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let n = l.n_nodes();
    if n > cap {
        return Err(Error::ResourceLimit {
            what: "prior precision",
            size: n,
            cap,
        });
    }
    let inv_tau2 = 1.0 / (tau * tau);
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = l.matrix().row(i).map(|(j, v)| (j, v * inv_tau2)).collect();
            row.push((i, 1.0));
            row
        })
        .collect();
    let matrix = CsrMatrix::from_rows(n, rows);
    let cholesky = Cholesky::factor(matrix.to_dense().view())?;
    Ok(PriorPrecision {
        matrix,
        tau,
        cholesky,
        covariance: OnceLock::new(),
    })
}

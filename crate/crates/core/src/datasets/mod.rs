//! Built-in datasets (Checkerboard, MNIST even/odd), uploaded feature
//! tables, and the initial labeled sets drawn from them.

mod idx;

use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use idx::{
    mnist_load, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages, MnistRaw,
    IMAGES_MAGIC, LABELS_MAGIC,
};

use crate::error::{invalid, Error, Result};
use crate::graph::FeatureMatrix;
use crate::linalg::symmetric_eigen;
use crate::posterior::{Label, LabeledSet};

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub features: FeatureMatrix,
    /// `None` for uploaded data without an oracle.
    pub ground_truth: Option<Vec<Label>>,
    /// N×2 coordinates for display.
    pub display_coords: Array2<f64>,
    /// Source images, for datasets built from them.
    pub images: Option<IdxImages>,
}

impl Dataset {
    pub fn n_points(&self) -> usize {
        self.features.n_points()
    }

    pub fn truth(&self) -> Result<&[Label]> {
        self.ground_truth
            .as_deref()
            .ok_or_else(|| invalid(format!("dataset '{}' has no ground truth", self.name)))
    }

    pub fn display(&self, i: usize) -> (f64, f64) {
        (self.display_coords[[i, 0]], self.display_coords[[i, 1]])
    }

    /// Writes `index,label,<columns>`; two-dimensional features are written
    /// as `x,y`, anything else as `f0,f1,...`. The label column is empty
    /// without ground truth.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.features.dim();
        let mut header = vec!["index".to_string(), "label".to_string()];
        if d == 2 {
            header.extend(["x".to_string(), "y".to_string()]);
        } else {
            header.extend((0..d).map(|j| format!("f{j}")));
        }
        out.write_record(&header)?;
        for i in 0..self.n_points() {
            let mut rec = vec![i.to_string()];
            rec.push(self.ground_truth.as_ref().map_or(String::new(), |t| t[i].to_string()));
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Cell of `(x, y)` in a `grid × grid` partition of the unit square;
/// coordinates equal to 1 fall in the last cell.
pub fn checkerboard_cell(x: f64, y: f64, grid: usize) -> (usize, usize) {
    let cell = |v: f64| ((grid as f64 * v).floor().max(0.0) as usize).min(grid - 1);
    (cell(x), cell(y))
}

/// `+1` on cells whose index sum is even.
pub fn checkerboard_label(x: f64, y: f64, grid: usize) -> Label {
    let (cx, cy) = checkerboard_cell(x, y, grid);
    if (cx + cy) % 2 == 0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

pub fn checkerboard(n: usize, grid: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid(format!("checkerboard needs at least 2 points, got {n}")));
    }
    if grid == 0 {
        return Err(invalid("checkerboard grid must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
    let truth = pts
        .axis_iter(Axis(0))
        .map(|p| checkerboard_label(p[0], p[1], grid))
        .collect();
    Ok(Dataset {
        name: "checkerboard".into(),
        features: FeatureMatrix::new(pts.clone())?,
        ground_truth: Some(truth),
        display_coords: pts,
        images: None,
    })
}

/// Even digits are `+1`, odd digits `-1`.
pub fn digit_parity(digit: u8) -> Label {
    if digit % 2 == 0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// `per_digit` images of every digit drawn uniformly without replacement,
/// kept in their original file order.
pub fn mnist_subset(raw: &MnistRaw, per_digit: usize, seed: u64) -> Result<Dataset> {
    if per_digit == 0 {
        return Err(invalid("per_digit must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(10 * per_digit);
    for digit in 0..10u8 {
        let pool: Vec<usize> = (0..raw.digits.len()).filter(|&i| raw.digits[i] == digit).collect();
        if pool.len() < per_digit {
            return Err(invalid(format!(
                "digit {digit} has {} images, fewer than the {per_digit} requested",
                pool.len()
            )));
        }
        chosen.extend(sample(&mut rng, pool.len(), per_digit).into_iter().map(|p| pool[p]));
    }
    chosen.sort_unstable();

    let d = raw.images.rows * raw.images.cols;
    let mut x = Array2::<f64>::zeros((chosen.len(), d));
    let mut pixels = Vec::with_capacity(chosen.len() * d);
    for (r, &i) in chosen.iter().enumerate() {
        let img = raw.images.image(i);
        pixels.extend_from_slice(img);
        for (v, &p) in x.row_mut(r).iter_mut().zip(img) {
            *v = p as f64 / 255.0;
        }
    }
    let truth = chosen.iter().map(|&i| digit_parity(raw.digits[i])).collect();
    let display_coords = principal_projection(&x)?;
    Ok(Dataset {
        name: "mnist".into(),
        features: FeatureMatrix::new(x)?,
        ground_truth: Some(truth),
        display_coords,
        images: Some(IdxImages {
            count: chosen.len(),
            rows: raw.images.rows,
            cols: raw.images.cols,
            pixels,
        }),
    })
}

/// Coordinates along the first two principal directions. Each direction's
/// sign is fixed so that its largest-magnitude component is positive.
pub fn principal_projection(x: &Array2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    let mean = x.mean_axis(Axis(0)).expect("nonempty feature matrix");
    let centered = x - &mean;
    if x.ncols() == 1 {
        let mut out = Array2::zeros((n, 2));
        out.column_mut(0).assign(&centered.column(0));
        return Ok(out);
    }
    let cov = centered.t().dot(&centered);
    let (_, vecs) = symmetric_eigen(cov.view())?;
    let d = vecs.ncols();
    let mut basis = Array2::<f64>::zeros((x.ncols(), 2));
    for (slot, col) in [d - 1, d - 2].into_iter().enumerate() {
        let mut v = vecs.column(col).to_owned();
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.mapv_inplace(|e| -e);
        }
        basis.column_mut(slot).assign(&v);
    }
    Ok(centered.dot(&basis))
}

/// `per_class` nodes drawn uniformly without replacement from each class,
/// positives first, with their true labels.
pub fn initial_labels(truth: &[Label], per_class: usize, seed: u64) -> Result<LabeledSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LabeledSet::new();
    for class in [Label::Positive, Label::Negative] {
        let pool: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        if pool.len() < per_class {
            return Err(invalid(format!(
                "class {class} has {} nodes, fewer than the {per_class} requested",
                pool.len()
            )));
        }
        for p in sample(&mut rng, pool.len(), per_class) {
            set.insert(pool[p], class)?;
        }
    }
    Ok(set)
}

/// Reads a feature table with a header row. Every column must be numeric;
/// an `index` column is ignored and a `label` column holding ±1 becomes the
/// ground truth.
pub fn read_feature_csv<R: Read>(r: R, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    let label_col = header.iter().position(|h| h.trim() == "label");
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != label_col && header[c].trim() != "index")
        .collect();
    if feature_cols.is_empty() {
        return Err(invalid("feature table has no feature columns"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        for &c in &feature_cols {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                invalid(format!("line {line}, column '{}': '{cell}' is not a number", &header[c]))
            })?;
            values.push(v);
        }
        if let Some(c) = label_col {
            let cell = rec.get(c).unwrap_or("").trim();
            let y = cell
                .parse::<i64>()
                .map_err(|_| invalid(format!("line {line}: label '{cell}' is not ±1")))
                .and_then(Label::from_int)?;
            labels.push(y);
        }
    }
    let n = values.len() / feature_cols.len();
    let x = Array2::from_shape_vec((n, feature_cols.len()), values).map_err(|e| Error::Internal(e.to_string()))?;
    let features = FeatureMatrix::new(x)?;
    let display_coords = if features.dim() == 2 {
        features.as_array().clone()
    } else {
        principal_projection(features.as_array())?
    };
    Ok(Dataset {
        name: name.into(),
        features,
        ground_truth: label_col.map(|_| labels),
        display_coords,
        images: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_convention() {
        assert_eq!(checkerboard_label(0.1, 0.1, 4), Label::Positive);
        assert_eq!(checkerboard_label(0.3, 0.1, 4), Label::Negative);
        assert_eq!(checkerboard_cell(1.0, 1.0, 4), (3, 3));
        assert_eq!(checkerboard_label(1.0, 0.0, 4), Label::Negative);
    }

    #[test]
    fn checkerboard_relabels_from_coordinates() {
        let ds = checkerboard(500, 4, 3).unwrap();
        let truth = ds.truth().unwrap();
        for i in 0..500 {
            let r = ds.features.row(i);
            assert!((0.0..1.0).contains(&r[0]) && (0.0..1.0).contains(&r[1]));
            assert_eq!(checkerboard_label(r[0], r[1], 4), truth[i]);
        }
        let again = checkerboard(500, 4, 3).unwrap();
        assert_eq!(again.features.as_array(), ds.features.as_array());
        assert!(checkerboard(1, 4, 0).is_err());
        assert!(checkerboard(10, 0, 0).is_err());
    }

    #[test]
    fn initial_labels_balanced_and_seeded() {
        let ds = checkerboard(200, 4, 1).unwrap();
        let t = ds.truth().unwrap();
        let a = initial_labels(t, 5, 9).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.iter().filter(|e| e.1 == Label::Positive).count(), 5);
        assert!(a.iter().all(|(i, y)| t[i] == y));
        assert_eq!(a, initial_labels(t, 5, 9).unwrap());
        assert!(initial_labels(t, 0, 9).unwrap().is_empty());
        assert!(initial_labels(t, 150, 9).is_err());
    }

    fn synthetic_mnist(per_digit: usize) -> MnistRaw {
        let count = per_digit * 10;
        let digits: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        let pixels = (0..count * 16).map(|i| ((i * 37) % 256) as u8).collect();
        MnistRaw {
            images: IdxImages {
                count,
                rows: 4,
                cols: 4,
                pixels,
            },
            digits,
        }
    }

    #[test]
    fn mnist_subset_balanced_and_scaled() {
        let raw = synthetic_mnist(6);
        let ds = mnist_subset(&raw, 4, 2).unwrap();
        assert_eq!(ds.n_points(), 40);
        let t = ds.truth().unwrap();
        assert_eq!(t.iter().filter(|&&y| y == Label::Positive).count(), 20);
        assert!(ds.features.as_array().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(ds.images.as_ref().unwrap().count, 40);
        assert_eq!(ds.display_coords.dim(), (40, 2));
        let again = mnist_subset(&raw, 4, 2).unwrap();
        assert_eq!(again.features.as_array(), ds.features.as_array());
        assert_eq!(again.display_coords, ds.display_coords);
        assert!(mnist_subset(&raw, 7, 2).is_err());
        assert_eq!(digit_parity(0), Label::Positive);
        assert_eq!(digit_parity(7), Label::Negative);
    }

    #[test]
    fn principal_projection_recovers_dominant_axis() {
        // Points on a line along (1, 1, 0) with small spread in z.
        let x = Array2::from_shape_fn((20, 3), |(i, j)| match j {
            0 | 1 => i as f64,
            _ => 0.01 * ((i % 3) as f64),
        });
        let p = principal_projection(&x).unwrap();
        let spread0 = p.column(0).mapv(f64::abs).sum();
        let spread1 = p.column(1).mapv(f64::abs).sum();
        assert!(spread0 > 100.0 * spread1);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let ds = checkerboard(5, 2, 0).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,label,x,y\n"));
        let back = read_feature_csv(&buf[..], "upload").unwrap();
        assert_eq!(back.features.as_array(), ds.features.as_array());
        assert_eq!(back.ground_truth, ds.ground_truth);

        let bad = "a,b\n1,2\n3,x\n";
        assert!(read_feature_csv(bad.as_bytes(), "u").is_err());
        let unlabeled = read_feature_csv("a,b,c\n1,2,3\n3,4,5\n0,0,1\n".as_bytes(), "u").unwrap();
        assert!(unlabeled.ground_truth.is_none());
        assert_eq!(unlabeled.display_coords.dim(), (3, 2));
    }
}

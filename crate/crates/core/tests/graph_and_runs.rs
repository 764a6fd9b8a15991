use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use graphal_core::acquisition::AcquisitionKind;
use graphal_core::datasets::{read_feature_csv, read_idx_images, write_idx_images, IdxImages};
use graphal_core::experiment::{prepare, run_prepared, write_outputs, DatasetKind, ExperimentConfig};
use graphal_core::graph::{build_knn_graph, laplacian, regularized_precision, FeatureMatrix, LaplacianKind};
use graphal_core::posterior::ModelKind;
use graphal_core::Parallelism;

fn points(n: usize, d: usize, raw: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new(Array2::from_shape_vec((n, d), raw[..n * d].to_vec()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn knn_graph_invariants(
        n in 3usize..60,
        k in 1usize..8,
        raw in prop::collection::vec(-3.0f64..3.0, 180),
        u in prop::collection::vec(-1.0f64..1.0, 60),
        tau in 0.05f64..3.0,
    ) {
        let k = k.min(n - 1);
        let x = points(n, 3, &raw);
        let g = build_knn_graph(&x, k, 1.0, Parallelism::Sequential).unwrap();
        let w = g.weights().to_dense();
        prop_assert_eq!(&w, &w.t().to_owned());
        prop_assert!(w.diag().iter().all(|&v| v == 0.0));

        let lu = laplacian(&g, LaplacianKind::Unnormalized);
        let ones = Array1::<f64>::ones(n);
        let max_d = g.degrees().iter().copied().fold(0.0, f64::max);
        prop_assert!(lu.matrix().matvec(ones.view()).iter().all(|v| v.abs() <= 1e-10 * max_d));

        let u = Array1::from(u[..n].to_vec());
        let quad = lu.matrix().quadratic_form(u.view());
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                pairs += 0.5 * w[[i, j]] * (u[i] - u[j]).powi(2);
            }
        }
        prop_assert!((quad - pairs).abs() <= 1e-10 * pairs.abs().max(1e-300));

        for kind in [LaplacianKind::Unnormalized, LaplacianKind::Normalized] {
            // Construction factorizes the precision, so success means PD.
            regularized_precision(&laplacian(&g, kind), tau).unwrap();
        }
    }
}

fn small_config(model: ModelKind, acq: AcquisitionKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults_for(DatasetKind::Checkerboard).with(model, acq);
    cfg.checkerboard_points = 200;
    cfg.length_scale = 0.1;
    cfg.n_queries = 15;
    cfg.n_trials = 2;
    cfg.per_class = 2;
    cfg.seed = 17;
    cfg
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn fixed_seeds_reproduce_queries_and_outputs() {
    for (model, acq) in [
        (ModelKind::Probit, AcquisitionKind::Mc),
        (ModelKind::Gr, AcquisitionKind::Random),
        (ModelKind::Hf, AcquisitionKind::Mbr),
    ] {
        let cfg = small_config(model, acq);
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut runs = Vec::new();
        for (i, dir) in dirs.iter().enumerate() {
            let mut cfg = cfg.clone();
            cfg.parallelism = if i == 0 {
                Parallelism::Sequential
            } else {
                Parallelism::Parallel
            };
            let prep = prepare(&cfg).unwrap();
            let res = run_prepared(&prep, &cfg).unwrap();
            write_outputs(&res, &prep.dataset, dir.path()).unwrap();
            runs.push(res);
        }
        for (a, b) in runs[0].trials.iter().zip(&runs[1].trials) {
            assert_eq!(a.queries, b.queries, "{}", cfg.label());
            assert_eq!(a.accuracy, b.accuracy);
        }
        let (a, b) = (read_dir_sorted(dirs[0].path()), read_dir_sorted(dirs[1].path()));
        let names: Vec<_> = a.iter().map(|f| f.0.as_str()).collect();
        assert!(names.contains(&"curve_mean.csv") && names.contains(&"choices_trial_1.csv"));
        for (fa, fb) in a.iter().zip(&b) {
            if fa.0 == "meta.json" {
                // Operation counts depend on which threads ran the sweep.
                continue;
            }
            assert_eq!(fa, fb, "{} differs", fa.0);
        }
    }
}

#[test]
fn different_trials_use_different_seeds() {
    let cfg = small_config(ModelKind::Gr, AcquisitionKind::Random);
    let prep = prepare(&cfg).unwrap();
    let res = run_prepared(&prep, &cfg).unwrap();
    assert_ne!(res.trials[0].queries, res.trials[1].queries);
    assert_ne!(res.trials[0].initial, res.trials[1].initial);
}

#[test]
fn exported_dataset_reads_back() {
    let cfg = small_config(ModelKind::Gr, AcquisitionKind::Vopt);
    let prep = prepare(&cfg).unwrap();
    let mut bytes = Vec::new();
    prep.dataset.write_csv(&mut bytes).unwrap();
    let back = read_feature_csv(&bytes[..], "back").unwrap();
    assert_eq!(back.features.as_array(), prep.dataset.features.as_array());
    assert_eq!(back.ground_truth, prep.dataset.ground_truth);
}

#[test]
fn idx_gzip_round_trip() {
    use flate2::write::GzEncoder;
    use flate2::Compression;
    let dir = tempfile::tempdir().unwrap();
    let images = IdxImages {
        count: 5,
        rows: 28,
        cols: 28,
        pixels: (0..5 * 784).map(|i| (i % 251) as u8).collect(),
    };
    let path = dir.path().join("img.gz");
    let mut enc = GzEncoder::new(fs::File::create(&path).unwrap(), Compression::fast());
    write_idx_images(&mut enc, &images).unwrap();
    enc.finish().unwrap();
    assert_eq!(read_idx_images(&path).unwrap(), images);
}

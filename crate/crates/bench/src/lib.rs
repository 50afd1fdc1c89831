//! Shared fixtures for the benchmarks.

use macest::dataset::{gen_blobs, gen_uniform_noise, split_four};
use macest::predictor::fit_classifier;
use macest::{Backend, Embedding, EmbeddingKind, MacestConfig, MacestModel};
use ndarray::Array2;

/// Uniform points in `[-1, 1]^dim`.
pub fn points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    gen_uniform_noise(n, dim, -1.0, 1.0, seed).expect("valid noise parameters")
}

/// A model fitted on three 10-D blobs with `n_per_class` rows each, plus
/// queries drawn from the same distribution and their point predictions.
pub fn fitted_model(n_per_class: usize, backend: Backend) -> (MacestModel, Array2<f64>, Vec<usize>) {
    let d = gen_blobs(n_per_class, 3, 10, 2.5, 1).expect("valid blob parameters");
    let s = split_four(&d, [0.4, 0.3, 0.2, 0.1], 2).expect("valid split");
    let clf = fit_classifier(&s.predictor_train, 10).expect("classifier");
    let gp = clf.predict_labelled(&s.graph).expect("graph predictions");
    let cp = clf.predict_labelled(&s.calibration).expect("calibration predictions");
    let emb = Embedding::fit(EmbeddingKind::Std, s.graph.features()).expect("embedding");
    let cfg = MacestConfig {
        backend,
        ..MacestConfig::default()
    };
    let model = macest::macest::fit(&s.graph, &gp, &s.calibration, &cp, emb, &cfg).expect("fit");
    let queries = s.test.features().to_owned();
    let preds = clf.predict(queries.view()).expect("test predictions").predicted;
    (model, queries, preds)
}

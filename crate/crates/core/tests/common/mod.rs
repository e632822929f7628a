//! Independent reference computations for the integration and acceptance
//! tests. Nothing here calls into the solver paths it is used to check.
#![allow(dead_code)]

use lbse::data::{synth_clusters, to_label_matrix, Dataset, LabelMatrix};
use lbse::LbseConfig;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_signs(rng: &mut ChaCha8Rng, l: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(l, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

pub fn label_matrix(labels: &[usize], c: usize) -> LabelMatrix {
    let d = Dataset::new(DMatrix::zeros(1, labels.len()), labels.to_vec(), c).unwrap();
    to_label_matrix(&d)
}

/// `S` written out entry by entry.
pub fn dense_similarity(labels: &[usize]) -> DMatrix<f64> {
    let n = labels.len();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = if labels[i] == labels[j] { 1.0 } else { -1.0 };
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
pub fn dense_h_target(
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    x: &DMatrix<f64>,
    labels: &[usize],
    cfg: &LbseConfig,
) -> DMatrix<f64> {
    b * dense_similarity(labels) + cfg.alpha * w.transpose() * y + cfg.beta * b + cfg.gamma * p.transpose() * x
}

/// Exhaustive argmax of `Tr(Hᵀ G)` over all sign matrices. Ties keep the
/// first candidate in mask order, i.e. favour -1.
pub fn enumerate_best_signs(g: &DMatrix<f64>) -> DMatrix<f64> {
    let (l, n) = g.shape();
    let cells = l * n;
    assert!(cells <= 20, "enumeration limited to 2^20 candidates");
    let mut best = f64::NEG_INFINITY;
    let mut best_mask = 0u32;
    for mask in 0..(1u32 << cells) {
        let mut tr = 0.0;
        for k in 0..cells {
            let v = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
            tr += v * g[(k % l, k / l)];
        }
        if tr > best {
            best = tr;
            best_mask = mask;
        }
    }
    DMatrix::from_fn(l, n, |r, c| if best_mask >> (c * l + r) & 1 == 1 { 1.0 } else { -1.0 })
}

/// Random `rows x cols` matrix with orthonormal rows (`rows <= cols`).
pub fn random_row_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    gaussian(rng, cols, rows).qr().q().transpose()
}

/// Random `B` with `B 1 = 0` and `B Bᵀ = N I`: `sqrt(N) R Kᵀ` with `R`
/// orthogonal and `K` orthonormal columns orthogonal to `1`.
pub fn random_feasible_b(rng: &mut ChaCha8Rng, l: usize, n: usize) -> DMatrix<f64> {
    let r = gaussian(rng, l, l).qr().q();
    let mut k = gaussian(rng, n, l);
    for mut col in k.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let k = k.qr().q();
    (n as f64).sqrt() * r * k.transpose()
}

/// Row-centered copy `Q J`.
pub fn centered(q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut qc = q.clone();
    let n = q.ncols() as f64;
    for mut row in qc.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    qc
}

/// Sum of singular values of `Q J`, i.e. `Tr(Ω^{1/2})` for `Ω` the nonzero
/// eigenvalues of `Q J Qᵀ`.
pub fn nuclear_norm_centered(q: &DMatrix<f64>) -> f64 {
    centered(q).singular_values().sum()
}

pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // Tr(Aᵀ B)
    a.component_mul(b).sum()
}

pub fn ridge_objective(h: &DMatrix<f64>, p: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> f64 {
    (h - p.transpose() * x).norm_squared() + lambda * p.norm_squared()
}

/// Central-difference gradient of [`ridge_objective`] in `P`.
pub fn finite_difference_gradient(h: &DMatrix<f64>, p: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64, step: f64) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(p.nrows(), p.ncols());
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let mut plus = p.clone();
            plus[(i, j)] += step;
            let mut minus = p.clone();
            minus[(i, j)] -= step;
            grad[(i, j)] = (ridge_objective(h, &plus, x, lambda) - ridge_objective(h, &minus, x, lambda)) / (2.0 * step);
        }
    }
    grad
}

/// Average precision straight from the definition: for every rank `r` in
/// the window holding a relevant item, count relevant items in the top `r`.
pub fn literal_average_precision(relevance: &[bool], depth: usize) -> f64 {
    let window = depth.min(relevance.len());
    let relevant_in_depth = (0..window).filter(|&r| relevance[r]).count();
    if relevant_in_depth == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for r in 1..=window {
        if relevance[r - 1] {
            let hits = (0..r).filter(|&i| relevance[i]).count();
            total += hits as f64 / r as f64;
        }
    }
    total / relevant_in_depth as f64
}

pub fn literal_precision_at_k(relevance: &[bool], k: usize) -> f64 {
    let shown = k.min(relevance.len());
    if shown == 0 {
        return 0.0;
    }
    let mut hits = 0;
    for item in relevance.iter().take(shown) {
        if *item {
            hits += 1;
        }
    }
    hits as f64 / shown as f64
}

/// Accuracy of 1-NN in Euclidean feature space.
pub fn one_nn_accuracy(db: &Dataset, q: &Dataset) -> f64 {
    let mut correct = 0;
    for (qi, qc) in q.features().column_iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (i, c) in db.features().column_iter().enumerate() {
            let d = (c - qc).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        if db.labels()[best.1] == q.labels()[qi] {
            correct += 1;
        }
    }
    correct as f64 / q.len() as f64
}

/// Gaussian clusters with an exact per-class train/query split: the first
/// `train_per_class` samples of every class go to the database.
pub fn stratified_clusters(
    train_per_class: usize,
    query_per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> (Dataset, Dataset) {
    let per = train_per_class + query_per_class;
    let all = synth_clusters(per, classes, dim, spread, seed).unwrap();
    let mut db = Vec::new();
    let mut q = Vec::new();
    for c in 0..classes {
        db.extend(c * per..c * per + train_per_class);
        q.extend(c * per + train_per_class..(c + 1) * per);
    }
    (all.subset(&db).unwrap(), all.subset(&q).unwrap())
}

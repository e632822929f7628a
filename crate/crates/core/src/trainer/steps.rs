//! Closed-form updates for each block of variables, plus the joint objective.
//!
//! Shapes: `H`, `B` are `L x N`; `W` is `C x L`; `P` is `D x L`; `X` is
//! `D x N`; `Y` is `C x N`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabelMatrix;
use crate::linalg::{self, sign_matrix};
use crate::similarity::SimilarityOracle;
use crate::{LbseError, Result};

use super::LbseConfig;

/// Eigenvalues of `Q J Qᵀ` at or below this fraction of the largest one are
/// treated as zero.
pub const EIGEN_CUTOFF: f64 = 1e-10;

const SVD_EPS: f64 = f64::EPSILON;
const SVD_MAX_ITERS: usize = 10_000;
const COMPLEMENT_RETRIES: usize = 8;

fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LbseError::DimensionMismatch(format!("{what} contains non-finite entries")))
    }
}

/// Label projection update.
///
/// With `H Yᵀ = U Σ Vᵀ` (thin, `U` is `L x C`), returns `W = V Uᵀ`, the
/// row-orthonormal `C x L` matrix maximizing `Tr(W H Yᵀ)`.
pub fn solve_w(h: &DMatrix<f64>, y: &LabelMatrix) -> Result<DMatrix<f64>> {
    let y = y.matrix();
    if h.ncols() != y.ncols() {
        return Err(LbseError::DimensionMismatch(format!(
            "H has {} samples, Y has {}",
            h.ncols(),
            y.ncols()
        )));
    }
    let (l, c) = (h.nrows(), y.nrows());
    if l < c {
        return Err(LbseError::InvalidConfig(format!(
            "code length {l} is smaller than class count {c}"
        )));
    }
    let hy = h * y.transpose();
    if !hy.iter().all(|v| v.is_finite()) {
        return Err(LbseError::SvdFailed);
    }
    let svd = SVD::try_new(hy, true, true, SVD_EPS, SVD_MAX_ITERS).ok_or(LbseError::SvdFailed)?;
    let u = svd.u.ok_or(LbseError::SvdFailed)?;
    let v_t = svd.v_t.ok_or(LbseError::SvdFailed)?;

    // Zero singular values leave the matching columns of U unconstrained; make
    // sure they are still an orthonormal set.
    let u = if (u.tr_mul(&u) - DMatrix::identity(c, c)).amax() > 1e-12 {
        let cols = linalg::complete_orthonormal(linalg::columns(&u), &[])
            .ok_or(LbseError::SvdFailed)?;
        linalg::from_columns(l, &cols)
    } else {
        u
    };
    Ok(v_t.tr_mul(&u.transpose()))
}

/// Right-hand side of the balanced/decorrelated update: `Q = H S + beta H`.
pub fn b_step_target(h: &DMatrix<f64>, sim: &SimilarityOracle, beta: f64, block: usize) -> Result<DMatrix<f64>> {
    let mut q = sim.right_multiply(h, block)?;
    q += beta * h;
    Ok(q)
}

/// Auxiliary code update under `B 1 = 0` and `B Bᵀ = N I`.
///
/// Maximizes `Tr(Bᵀ Q)` with `Q = H S + beta H`. The spectral part comes from
/// the eigenpairs of `Q J Qᵀ` (`J` the centering matrix); directions with zero
/// eigenvalue are filled by an orthonormal complement on the left and a
/// seeded random orthonormal block, orthogonal to `1` and to `M`, on the
/// right.
pub fn solve_b(
    h: &DMatrix<f64>,
    sim: &SimilarityOracle,
    beta: f64,
    seed: u64,
    block: usize,
) -> Result<DMatrix<f64>> {
    let q = b_step_target(h, sim, beta, block)?;
    solve_b_from_target(&q, seed)
}

/// [`solve_b`] for an explicit `Q`.
pub fn solve_b_from_target(q: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let (l, n) = q.shape();
    if n <= l {
        return Err(LbseError::InvalidConfig(format!(
            "balanced codes need more samples than bits (N={n}, L={l})"
        )));
    }
    ensure_finite(q, "B-step target")?;
    let spectral = spectral_parts(q);
    let nf = n as f64;
    let ones = DVector::from_element(n, 1.0 / nf.sqrt());

    let mut right_fixed = vec![ones];
    right_fixed.extend(spectral.m.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = l - spectral.z.len();
    let m_tilde = linalg::random_orthonormal(&mut rng, n, missing, &right_fixed, COMPLEMENT_RETRIES)
        .ok_or_else(|| LbseError::RankDegenerate("could not draw a random orthonormal complement".into()))?;

    let mut left = spectral.z.clone();
    left.extend(spectral.z_tilde);
    let mut right = spectral.m;
    right.extend(m_tilde);

    let left = linalg::from_columns(l, &left);
    let right = linalg::from_columns(n, &right);
    Ok(nf.sqrt() * left * right.transpose())
}

struct Spectral {
    /// Eigenvectors with positive eigenvalue (columns of `Z`).
    z: Vec<DVector<f64>>,
    /// Orthonormal complement of `Z` in `R^L`.
    z_tilde: Vec<DVector<f64>>,
    /// Columns of `M = J Qᵀ Z Ω^{-1/2}`.
    m: Vec<DVector<f64>>,
    eigenvalues: Vec<f64>,
}

fn spectral_parts(q: &DMatrix<f64>) -> Spectral {
    let (l, n) = q.shape();
    // Q J: subtract each row's mean
    let mut qc = q.clone();
    for mut row in qc.row_iter_mut() {
        let mean = row.sum() / n as f64;
        row.add_scalar_mut(-mean);
    }
    let k = &qc * qc.transpose();
    let sym = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut z = Vec::new();
    let mut rest = Vec::new();
    let mut eigenvalues = Vec::new();
    for &i in &order {
        let lambda = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i).into_owned();
        if top > 0.0 && lambda > EIGEN_CUTOFF * top {
            z.push(v);
            eigenvalues.push(lambda);
        } else {
            rest.push(v);
        }
    }

    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let qct = qc.transpose();
    let mut m: Vec<DVector<f64>> = Vec::with_capacity(z.len());
    let mut basis = vec![ones];
    for (zi, &lambda) in z.iter().zip(&eigenvalues) {
        let raw = (&qct * zi) / lambda.sqrt();
        // Theoretically already orthonormal and orthogonal to 1; this pass
        // only removes round-off.
        let col = linalg::orthonormalize_against(raw.clone(), &basis)
            .unwrap_or_else(|| raw.normalize());
        basis.push(col.clone());
        m.push(col);
    }

    let z_tilde = linalg::complete_orthonormal(rest, &z).unwrap_or_default();
    Spectral {
        z,
        z_tilde,
        m,
        eigenvalues,
    }
}

/// Positive eigenvalues of `Q J Qᵀ` (descending) as used by the B-step.
pub fn b_step_spectrum(q: &DMatrix<f64>) -> Vec<f64> {
    spectral_parts(q).eigenvalues
}

/// `G = B S + alpha Wᵀ Y + beta B + gamma Pᵀ X`, the matrix whose sign is the
/// optimal code update.
#[allow(clippy::too_many_arguments)]
pub fn h_step_target(
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &LabelMatrix,
    p: &DMatrix<f64>,
    x: &DMatrix<f64>,
    sim: &SimilarityOracle,
    cfg: &LbseConfig,
) -> Result<DMatrix<f64>> {
    let (l, n) = b.shape();
    let y = y.matrix();
    if w.shape() != (y.nrows(), l) || y.ncols() != n || p.shape() != (x.nrows(), l) || x.ncols() != n {
        return Err(LbseError::DimensionMismatch(format!(
            "B {:?}, W {:?}, Y {:?}, P {:?}, X {:?}",
            b.shape(),
            w.shape(),
            y.shape(),
            p.shape(),
            x.shape()
        )));
    }
    let mut g = sim.right_multiply(b, cfg.block)?;
    g += cfg.beta * b;
    if cfg.alpha != 0.0 {
        g += cfg.alpha * w.tr_mul(y);
    }
    if cfg.gamma != 0.0 {
        g += cfg.gamma * p.tr_mul(x);
    }
    Ok(g)
}

/// Discrete code update: `H = sgn(G)` with `sgn(0) = -1`.
#[allow(clippy::too_many_arguments)]
pub fn solve_h(
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &LabelMatrix,
    p: &DMatrix<f64>,
    x: &DMatrix<f64>,
    sim: &SimilarityOracle,
    cfg: &LbseConfig,
) -> Result<DMatrix<f64>> {
    Ok(sign_matrix(&h_step_target(b, w, y, p, x, sim, cfg)?))
}

/// Ridge regression from features to codes: `P = (X Xᵀ + lambda I)⁻¹ X Hᵀ`.
pub fn solve_p(x: &DMatrix<f64>, h: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != h.ncols() {
        return Err(LbseError::DimensionMismatch(format!(
            "X has {} samples, H has {}",
            x.ncols(),
            h.ncols()
        )));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(LbseError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = x.nrows();
    let mut a = x * x.transpose();
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    let rhs = x * h.transpose();

    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| LbseError::Singular("X Xᵀ + lambda I is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo * lo <= (d as f64) * f64::EPSILON * hi * hi {
        return Err(LbseError::Singular(
            "X Xᵀ + lambda I is numerically rank-deficient; use lambda > 0".into(),
        ));
    }
    let mut p = chol.solve(&rhs);
    // one round of iterative refinement
    let residual = &rhs - &a * &p;
    p += chol.solve(&residual);
    Ok(p)
}

/// The four weighted terms of the joint objective, plus the ridge penalty.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveTerms {
    pub similarity: f64,
    pub label: f64,
    pub quantization: f64,
    pub feature: f64,
    pub ridge: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.similarity + self.label + self.quantization + self.feature + self.ridge
    }
}

/// Already-weighted terms of
/// `||Hᵀ B - L S||² + α||H - Wᵀ Y||² + β||H - B||² + γ||H - Pᵀ X||² + λ||P||²`.
#[allow(clippy::too_many_arguments)]
pub fn objective_terms(
    h: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    p: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &LabelMatrix,
    sim: &SimilarityOracle,
    cfg: &LbseConfig,
) -> Result<ObjectiveTerms> {
    let l = h.nrows();
    let ym = y.matrix();
    if b.shape() != h.shape()
        || w.shape() != (ym.nrows(), l)
        || ym.ncols() != h.ncols()
        || p.shape() != (x.nrows(), l)
        || x.ncols() != h.ncols()
    {
        return Err(LbseError::DimensionMismatch(format!(
            "H {:?}, B {:?}, W {:?}, Y {:?}, P {:?}, X {:?}",
            h.shape(),
            b.shape(),
            w.shape(),
            ym.shape(),
            p.shape(),
            x.shape()
        )));
    }
    Ok(ObjectiveTerms {
        similarity: sim.asymmetric_residual_sq(h, b, l as f64, cfg.block)?,
        label: cfg.alpha * label_fit(h, w, y),
        quantization: cfg.beta * (h - b).norm_squared(),
        feature: cfg.gamma * (h - p.tr_mul(x)).norm_squared(),
        ridge: cfg.lambda * p.norm_squared(),
    })
}

/// `||H - Wᵀ Y||²`, the label-regression sub-objective.
pub fn label_fit(h: &DMatrix<f64>, w: &DMatrix<f64>, y: &LabelMatrix) -> f64 {
    (h - w.tr_mul(y.matrix())).norm_squared()
}

/// `||H - Pᵀ X||² + lambda ||P||²`, the ridge sub-objective.
pub fn ridge_fit(h: &DMatrix<f64>, p: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64) -> f64 {
    (h - p.tr_mul(x)).norm_squared() + lambda * p.norm_squared()
}

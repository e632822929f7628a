//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// `sgn` with `sgn(0) = -1`.
#[inline]
pub fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_matrix(g: &DMatrix<f64>) -> DMatrix<f64> {
    g.map(sign)
}

/// Largest absolute entry of `A Aᵀ - scale * I`.
pub fn gram_deviation(a: &DMatrix<f64>, scale: f64) -> f64 {
    let gram = a * a.transpose();
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { scale } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest absolute row sum, i.e. `||A 1||_inf`.
pub fn row_sum_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
}

/// Removes from `v` its components along each (unit) vector in `basis`,
/// twice, which is enough to restore orthogonality to working precision.
fn project_out(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Orthonormalizes `candidate` against `basis`. Returns `None` when the
/// candidate is (numerically) inside the span.
pub fn orthonormalize_against(
    mut candidate: DVector<f64>,
    basis: &[DVector<f64>],
) -> Option<DVector<f64>> {
    let original = candidate.norm();
    if original == 0.0 {
        return None;
    }
    project_out(&mut candidate, basis);
    let norm = candidate.norm();
    if norm <= 1e-8 * original {
        return None;
    }
    candidate /= norm;
    Some(candidate)
}

/// Gram-Schmidt over `cols` in order, on top of the fixed orthonormal
/// `basis`. Columns that collapse are replaced with the first coordinate
/// vectors not yet spanned, so the output always has `cols.len()` columns as
/// long as the ambient dimension allows it.
pub fn complete_orthonormal(
    cols: impl IntoIterator<Item = DVector<f64>>,
    basis: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let mut all: Vec<DVector<f64>> = basis.to_vec();
    let fixed = all.len();
    let mut pending = 0usize;
    for c in cols {
        match orthonormalize_against(c, &all) {
            Some(q) => all.push(q),
            None => pending += 1,
        }
    }
    let dim = all.first().map(|v| v.len());
    if pending > 0 {
        let dim = dim?;
        for k in 0..dim {
            if pending == 0 {
                break;
            }
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            if let Some(q) = orthonormalize_against(e, &all) {
                all.push(q);
                pending -= 1;
            }
        }
        if pending > 0 {
            return None;
        }
    }
    Some(all.split_off(fixed))
}

/// Draws `count` Gaussian vectors of length `dim` and orthonormalizes them
/// against `basis` and each other. Retries a collapsed draw up to
/// `max_retries` times.
pub fn random_orthonormal<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
    basis: &[DVector<f64>],
    max_retries: usize,
) -> Option<Vec<DVector<f64>>> {
    let mut all: Vec<DVector<f64>> = basis.to_vec();
    let fixed = all.len();
    while all.len() < fixed + count {
        let mut accepted = false;
        for _ in 0..=max_retries {
            let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Some(q) = orthonormalize_against(v, &all) {
                all.push(q);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return None;
        }
    }
    Some(all.split_off(fixed))
}

pub fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

pub fn from_columns(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

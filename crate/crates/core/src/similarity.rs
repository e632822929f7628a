//! Pairwise label similarity `S` with `S[i][j] = +1` for same-class pairs and
//! `-1` otherwise.
//!
//! `S` is `N x N` and never stored for large `N`. Products against it use the
//! single-label factorization
//!
//! ```text
//! (M S)[:, j] = 2 * sum_{i : y_i = y_j} M[:, i] - M 1
//! ```
//!
//! so one pass over `M` collects per-class column sums and a second pass
//! broadcasts them. Both passes run over column blocks; partial sums are
//! reduced in block order so the result does not depend on thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{LbseError, Result};

pub const DEFAULT_BLOCK: usize = 512;
pub const DEFAULT_DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone)]
pub struct SimilarityOracle {
    labels: Vec<usize>,
    num_classes: usize,
    dense_limit: usize,
}

impl SimilarityOracle {
    pub fn new(labels: &[usize], num_classes: usize) -> Result<Self> {
        if let Some((sample, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(LbseError::LabelOutOfRange {
                sample,
                label,
                num_classes,
            });
        }
        Ok(SimilarityOracle {
            labels: labels.to_vec(),
            num_classes,
            dense_limit: DEFAULT_DENSE_LIMIT,
        })
    }

    pub fn from_dataset(d: &crate::Dataset) -> Self {
        SimilarityOracle {
            labels: d.labels().to_vec(),
            num_classes: d.num_classes(),
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }

    pub fn with_dense_limit(mut self, limit: usize) -> Self {
        self.dense_limit = limit;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.labels.len();
        if i >= n || j >= n {
            return Err(LbseError::IndexOutOfRange { i, j, n });
        }
        Ok(self.entry_unchecked(i, j))
    }

    #[inline]
    fn entry_unchecked(&self, i: usize, j: usize) -> f64 {
        if self.labels[i] == self.labels[j] {
            1.0
        } else {
            -1.0
        }
    }

    /// Materializes `S`. Refused above the dense limit.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let n = self.labels.len();
        if n > self.dense_limit {
            return Err(LbseError::InvalidConfig(format!(
                "refusing to materialize a {n}x{n} similarity matrix (limit {})",
                self.dense_limit
            )));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.entry_unchecked(i, j)))
    }

    /// `M S` for an `L x N` matrix `M`, computed in column blocks of width
    /// `block`.
    pub fn right_multiply(&self, m: &DMatrix<f64>, block: usize) -> Result<DMatrix<f64>> {
        let (rows, n) = m.shape();
        if n != self.labels.len() {
            return Err(LbseError::DimensionMismatch(format!(
                "matrix has {n} columns, similarity covers {} samples",
                self.labels.len()
            )));
        }
        let block = block.max(1);
        let c = self.num_classes;
        if rows == 0 || n == 0 {
            return Ok(DMatrix::zeros(rows, n));
        }

        let data = m.as_slice();
        let partials: Vec<Vec<f64>> = data
            .par_chunks(rows * block)
            .enumerate()
            .map(|(b, chunk)| {
                let mut sums = vec![0.0; rows * c];
                for (k, col) in chunk.chunks_exact(rows).enumerate() {
                    let class = self.labels[b * block + k];
                    let dst = &mut sums[class * rows..(class + 1) * rows];
                    for (d, v) in dst.iter_mut().zip(col) {
                        *d += v;
                    }
                }
                sums
            })
            .collect();

        let mut class_sums = vec![0.0; rows * c];
        for p in &partials {
            for (d, v) in class_sums.iter_mut().zip(p) {
                *d += v;
            }
        }
        let mut total = vec![0.0; rows];
        for class in class_sums.chunks_exact(rows) {
            for (t, v) in total.iter_mut().zip(class) {
                *t += v;
            }
        }

        let mut out = DMatrix::zeros(rows, n);
        out.as_mut_slice()
            .par_chunks_mut(rows * block)
            .enumerate()
            .for_each(|(b, chunk)| {
                for (k, col) in chunk.chunks_exact_mut(rows).enumerate() {
                    let class = self.labels[b * block + k];
                    let sums = &class_sums[class * rows..(class + 1) * rows];
                    for ((o, s), t) in col.iter_mut().zip(sums).zip(&total) {
                        *o = 2.0 * s - t;
                    }
                }
            });
        Ok(out)
    }

    /// `|| Hᵀ B - scale * S ||_F²`, accumulated over column blocks of `B`
    /// without forming the `N x N` product.
    pub fn asymmetric_residual_sq(
        &self,
        h: &DMatrix<f64>,
        b: &DMatrix<f64>,
        scale: f64,
        block: usize,
    ) -> Result<f64> {
        let n = self.labels.len();
        if h.shape() != b.shape() || h.ncols() != n {
            return Err(LbseError::DimensionMismatch(format!(
                "H is {:?}, B is {:?}, similarity covers {n} samples",
                h.shape(),
                b.shape()
            )));
        }
        let block = block.max(1);
        let starts: Vec<usize> = (0..n).step_by(block).collect();
        let partials: Vec<f64> = starts
            .par_iter()
            .map(|&j0| {
                let w = block.min(n - j0);
                let g = h.tr_mul(&b.columns(j0, w));
                let mut acc = 0.0;
                for jj in 0..w {
                    for i in 0..n {
                        let r = g[(i, jj)] - scale * self.entry_unchecked(i, j0 + jj);
                        acc += r * r;
                    }
                }
                acc
            })
            .collect();
        Ok(partials.iter().sum())
    }
}

/// Free-function form of [`SimilarityOracle::entry`].
pub fn sim_entry(o: &SimilarityOracle, i: usize, j: usize) -> Result<f64> {
    o.entry(i, j)
}

/// Free-function form of [`SimilarityOracle::right_multiply`].
pub fn right_multiply_s(o: &SimilarityOracle, m: &DMatrix<f64>, block: usize) -> Result<DMatrix<f64>> {
    o.right_multiply(m, block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn entries() {
        let o = SimilarityOracle::new(&[0, 0, 1], 2).unwrap();
        assert_eq!(sim_entry(&o, 0, 1).unwrap(), 1.0);
        assert_eq!(sim_entry(&o, 0, 2).unwrap(), -1.0);
        for i in 0..3 {
            assert_eq!(o.entry(i, i).unwrap(), 1.0);
        }
        assert!(matches!(o.entry(3, 0), Err(LbseError::IndexOutOfRange { .. })));
    }

    #[test]
    fn dense_is_symmetric_with_unit_diagonal() {
        let o = SimilarityOracle::new(&[2, 0, 1, 0, 2], 3).unwrap();
        let s = o.dense().unwrap();
        assert_eq!(s, s.transpose());
        assert!(s.diagonal().iter().all(|&v| v == 1.0));
        assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn dense_refused_above_limit() {
        let o = SimilarityOracle::new(&[0, 1, 0], 2).unwrap().with_dense_limit(2);
        assert!(o.dense().is_err());
    }

    #[test]
    fn hand_example() {
        // [1 2 3] * [[1,1,-1],[1,1,-1],[-1,-1,1]] = [0, 0, 0]
        let o = SimilarityOracle::new(&[0, 0, 1], 2).unwrap();
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(o.right_multiply(&m, 2).unwrap(), DMatrix::zeros(1, 3));
    }

    #[test]
    fn zero_in_zero_out() {
        let o = SimilarityOracle::new(&[0, 1, 2, 1], 3).unwrap();
        let m = DMatrix::zeros(5, 4);
        assert_eq!(o.right_multiply(&m, 3).unwrap(), m);
    }

    #[test]
    fn random_n20_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
        let o = SimilarityOracle::new(&labels, 3).unwrap();
        let m = DMatrix::from_fn(4, 20, |_, _| rng.random_range(-1.0..1.0));
        let dense = &m * o.dense().unwrap();
        assert!(max_abs_diff(&o.right_multiply(&m, 7).unwrap(), &dense) <= 1e-10);
    }

    #[test]
    fn column_count_checked() {
        let o = SimilarityOracle::new(&[0, 1], 2).unwrap();
        assert!(o.right_multiply(&DMatrix::zeros(2, 3), 4).is_err());
    }

    #[test]
    fn residual_matches_dense_and_trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let o = SimilarityOracle::new(&labels, 4).unwrap();
        let h = DMatrix::from_fn(6, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let b = DMatrix::from_fn(6, n, |_, _| rng.random_range(-2.0..2.0));
        let s = o.dense().unwrap();
        let dense = (h.transpose() * &b - 6.0 * &s).norm_squared();
        let blocked = o.asymmetric_residual_sq(&h, &b, 6.0, 8).unwrap();
        assert!((dense - blocked).abs() <= 1e-9 * dense.max(1.0));

        // ||HᵀB||² - 2 L Tr(Bᵀ H S) + L² N², with HS through the factorization
        let hs = o.right_multiply(&h, 8).unwrap();
        let identity = (&h * h.transpose()).component_mul(&(&b * b.transpose())).sum()
            - 12.0 * b.component_mul(&hs).sum()
            + 36.0 * (n * n) as f64;
        assert!((identity - blocked).abs() <= 1e-9 * dense.max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn blockwise_matches_dense(
            n in 1usize..=64, rows in 1usize..6, c in 2usize..6, block in 1usize..70, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let o = SimilarityOracle::new(&labels, c).unwrap();
            let m = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-10.0..10.0));
            let s = o.dense().unwrap();
            let fast = o.right_multiply(&m, block).unwrap();
            prop_assert!(max_abs_diff(&fast, &(&m * &s)) <= 1e-10);
            // (M S)ᵀ = S Mᵀ
            prop_assert!(max_abs_diff(&fast.transpose(), &(&s * m.transpose())) <= 1e-10);
        }

        #[test]
        fn result_independent_of_block_width(n in 1usize..=64, b1 in 1usize..70, b2 in 1usize..70, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let o = SimilarityOracle::new(&labels, 3).unwrap();
            let m = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
            let a = o.right_multiply(&m, b1).unwrap();
            let b = o.right_multiply(&m, b2).unwrap();
            prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
        }
    }
}

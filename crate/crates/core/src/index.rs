//! Exact Hamming retrieval by linear scan, and kNN voting on top of it.
//!
//! Distances are bounded by the code length, so ranking is a counting sort
//! over distance buckets: `O(N * ceil(L/64) + L)` per query, and ids within a
//! bucket come out in ascending order, which is the tie-break.

use crate::encoder::{hamming_distance, CodeMatrix};
use crate::{LbseError, Result};

/// Default retrieval depth.
pub const DEFAULT_DEPTH: usize = 99;
/// Default number of voting neighbors for classification.
pub const DEFAULT_K_VOTE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Neighbors {
    pub ids: Vec<usize>,
    pub distances: Vec<u32>,
}

impl Neighbors {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HammingIndex {
    codes: CodeMatrix,
    labels: Vec<usize>,
}

impl HammingIndex {
    pub fn new(codes: CodeMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != codes.len() {
            return Err(LbseError::LengthMismatch(format!(
                "{} labels for {} codes",
                labels.len(),
                codes.len()
            )));
        }
        Ok(HammingIndex { codes, labels })
    }

    pub fn codes(&self) -> &CodeMatrix {
        &self.codes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check_query(&self, query: &[u64]) -> Result<()> {
        if query.len() != self.codes.words_per_code() {
            return Err(LbseError::LengthMismatch(format!(
                "query has {} words, index codes have {}",
                query.len(),
                self.codes.words_per_code()
            )));
        }
        let spare = self.codes.words_per_code() * 64 - self.codes.code_length();
        if spare > 0 && query[query.len() - 1] >> (64 - spare) != 0 {
            return Err(LbseError::LengthMismatch(format!(
                "query has bits set beyond code length {}",
                self.codes.code_length()
            )));
        }
        Ok(())
    }

    /// The `min(k, N)` nearest codes, ordered by (distance, id).
    pub fn search(&self, query: &[u64], k: usize) -> Result<Neighbors> {
        self.search_excluding(query, k, None)
    }

    /// Like [`search`](Self::search) but never returns database id `skip`.
    pub fn search_excluding(&self, query: &[u64], k: usize, skip: Option<usize>) -> Result<Neighbors> {
        self.check_query(query)?;
        if k == 0 {
            return Err(LbseError::InvalidConfig("k must be >= 1".into()));
        }
        let l = self.codes.code_length();
        let dist: Vec<u32> = self.codes.iter().map(|c| hamming_distance(query, c)).collect();

        let mut counts = vec![0usize; l + 2];
        for (i, &d) in dist.iter().enumerate() {
            if Some(i) != skip {
                counts[d as usize + 1] += 1;
            }
        }
        for b in 1..counts.len() {
            counts[b] += counts[b - 1];
        }
        let total = counts[l + 1];
        let mut ordered = vec![0usize; total];
        for (i, &d) in dist.iter().enumerate() {
            if Some(i) != skip {
                let slot = &mut counts[d as usize];
                ordered[*slot] = i;
                *slot += 1;
            }
        }
        ordered.truncate(k.min(total));
        let distances = ordered.iter().map(|&i| dist[i]).collect();
        Ok(Neighbors {
            ids: ordered,
            distances,
        })
    }

    /// Majority vote among the `k_vote` nearest codes. Ties go to the class
    /// with the smaller summed distance, then to the smaller class id.
    pub fn knn_classify(&self, query: &[u64], k_vote: usize) -> Result<usize> {
        self.knn_classify_excluding(query, k_vote, None)
    }

    pub fn knn_classify_excluding(&self, query: &[u64], k_vote: usize, skip: Option<usize>) -> Result<usize> {
        if self.is_empty() {
            return Err(LbseError::EmptyIndex);
        }
        let nn = self.search_excluding(query, k_vote, skip)?;
        if nn.is_empty() {
            return Err(LbseError::EmptyIndex);
        }
        Ok(vote(nn.ids.iter().map(|&i| self.labels[i]).zip(nn.distances.iter().copied())))
    }
}

/// Resolves a vote over `(label, distance)` pairs.
pub fn vote(neighbors: impl IntoIterator<Item = (usize, u32)>) -> usize {
    let mut tally: Vec<(usize, u64)> = Vec::new();
    for (label, d) in neighbors {
        if tally.len() <= label {
            tally.resize(label + 1, (0, 0));
        }
        tally[label].0 += 1;
        tally[label].1 += u64::from(d);
    }
    tally
        .iter()
        .enumerate()
        .filter(|(_, t)| t.0 > 0)
        // more votes, then smaller distance sum, then smaller class id
        .max_by(|(ca, a), (cb, b)| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(cb.cmp(ca)))
        .map(|(c, _)| c)
        .unwrap_or(0)
}

/// Free-function form of [`HammingIndex::search`].
pub fn search(idx: &HammingIndex, query: &[u64], k: usize) -> Result<Neighbors> {
    idx.search(query, k)
}

/// Free-function form of [`HammingIndex::knn_classify`].
pub fn knn_classify(idx: &HammingIndex, query: &[u64], k_vote: usize) -> Result<usize> {
    idx.knn_classify(query, k_vote)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index_from_words(l: usize, words: Vec<u64>, labels: Vec<usize>) -> HammingIndex {
        HammingIndex::new(CodeMatrix::from_words(l, words).unwrap(), labels).unwrap()
    }

    #[test]
    fn popcount_by_hand() {
        let idx = index_from_words(4, vec![0b0001, 0b0011], vec![0, 1]);
        let nn = idx.search(&[0b0000], 5).unwrap();
        assert_eq!(nn.ids, vec![0, 1]);
        assert_eq!(nn.distances, vec![1, 2]);
    }

    #[test]
    fn exact_match_first() {
        let words: Vec<u64> = (0..10).map(|i| i * 3 + 1).collect();
        let idx = index_from_words(8, words.clone(), vec![0; 10]);
        let nn = idx.search(&[words[5]], 3).unwrap();
        assert_eq!((nn.ids[0], nn.distances[0]), (5, 0));
    }

    #[test]
    fn ties_by_ascending_id_and_exclusion() {
        let idx = index_from_words(4, vec![0b1, 0b10, 0b100, 0], vec![0, 0, 1, 1]);
        let nn = idx.search(&[0], 4).unwrap();
        assert_eq!(nn.ids, vec![3, 0, 1, 2]);
        let nn = idx.search_excluding(&[0], 4, Some(3)).unwrap();
        assert_eq!(nn.ids, vec![0, 1, 2]);
    }

    #[test]
    fn query_validation() {
        let idx = index_from_words(4, vec![1, 2], vec![0, 1]);
        assert!(matches!(idx.search(&[0, 0], 1), Err(LbseError::LengthMismatch(_))));
        assert!(matches!(idx.search(&[1 << 4], 1), Err(LbseError::LengthMismatch(_))));
        assert!(idx.search(&[0], 0).is_err());
    }

    #[test]
    fn voting_rules() {
        assert_eq!(vote([(1, 0), (1, 1), (0, 1)]), 1);
        assert_eq!(vote([(0, 0), (1, 3)]), 0);
        assert_eq!(vote([(1, 0), (0, 3)]), 1);
        assert_eq!(vote([(0, 2), (1, 2)]), 0);
        assert_eq!(vote([(1, 2), (0, 2)]), 0);
    }

    #[test]
    fn knn_on_index() {
        let idx = index_from_words(4, vec![0b0000, 0b0001, 0b1111, 0b0011], vec![2, 2, 1, 1]);
        assert_eq!(idx.knn_classify(&[0], 3).unwrap(), 2);
        assert_eq!(idx.knn_classify(&[0b1111], 1).unwrap(), 1);
    }

    #[test]
    fn empty_index() {
        let idx = HammingIndex::new(CodeMatrix::from_words(8, vec![]).unwrap(), vec![]).unwrap();
        assert!(matches!(idx.knn_classify(&[0], 3), Err(LbseError::EmptyIndex)));
    }

    // Naive oracle: unpacked ±1 vectors, squared distance / 4, full stable sort.
    fn naive_ranking(db: &DMatrix<f64>, q: &DMatrix<f64>) -> Vec<(u32, usize)> {
        let mut all: Vec<(u32, usize)> = db
            .column_iter()
            .enumerate()
            .map(|(i, c)| (((c - q.column(0)).norm_squared() / 4.0) as u32, i))
            .collect();
        all.sort();
        all
    }

    #[test]
    fn random_n200_l32_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let db = DMatrix::from_fn(32, 200, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let idx = HammingIndex::new(CodeMatrix::pack(&db), vec![0; 200]).unwrap();
        for _ in 0..20 {
            let q = DMatrix::from_fn(32, 1, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let packed = CodeMatrix::pack(&q);
            let nn = idx.search(packed.code(0), 99).unwrap();
            let oracle = naive_ranking(&db, &q);
            let expect: Vec<(u32, usize)> = oracle.into_iter().take(99).collect();
            let got: Vec<(u32, usize)> = nn.distances.into_iter().zip(nn.ids).collect();
            assert_eq!(got, expect);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn search_is_prefix_of_stable_sort(
            n in 1usize..=500, l in 1usize..130, k in 1usize..600, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // few distinct bits so ties are common
            let db = DMatrix::from_fn(l, n, |r, _| if r < 6 && rng.random::<bool>() { 1.0 } else { -1.0 });
            let q = DMatrix::from_fn(l, 1, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let idx = HammingIndex::new(CodeMatrix::pack(&db), vec![0; n]).unwrap();
            let nn = idx.search(CodeMatrix::pack(&q).code(0), k).unwrap();
            prop_assert_eq!(nn.len(), k.min(n));
            prop_assert!(nn.distances.windows(2).all(|w| w[0] <= w[1]));
            let oracle = naive_ranking(&db, &q);
            let got: Vec<(u32, usize)> = nn.distances.into_iter().zip(nn.ids).collect();
            prop_assert_eq!(&got[..], &oracle[..got.len()]);
        }
    }
}

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Track-by-detection scores; `None` marks a gated-out pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl ScoreMatrix {
    pub fn gated(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![None; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::gated(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged score matrix");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = Some(value);
    }

    pub fn gate(&mut self, row: usize, col: usize) {
        self.data[row * self.cols + col] = None;
    }
}

/// Result of one association round. Track entries are row indices until the
/// tracker relabels them with track ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

impl Matching {
    fn from_assignment(rows: usize, cols: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            pairs: pairs.into_iter().map(|(r, c)| (r as u64, c)).collect(),
            unmatched_tracks: (0..rows).filter(|&r| !row_used[r]).map(|r| r as u64).collect(),
            unmatched_detections: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    /// Replaces row indices by the given track ids.
    pub fn relabel(self, ids: &[u64]) -> Self {
        Self {
            pairs: self.pairs.into_iter().map(|(r, c)| (ids[r as usize], c)).collect(),
            unmatched_tracks: self.unmatched_tracks.into_iter().map(|r| ids[r as usize]).collect(),
            unmatched_detections: self.unmatched_detections,
        }
    }

    pub fn detection_of(&self, track: u64) -> Option<usize> {
        self.pairs.iter().find(|(t, _)| *t == track).map(|&(_, d)| d)
    }

    pub fn track_of(&self, detection: usize) -> Option<u64> {
        self.pairs.iter().find(|(_, d)| *d == detection).map(|&(t, _)| t)
    }

    /// Sum of the scores of the matched pairs.
    pub fn total(&self, m: &ScoreMatrix) -> f64 {
        self.pairs.iter().filter_map(|&(r, c)| m.get(r as usize, c)).sum()
    }
}

/// Repeatedly takes the best remaining ungated entry. Ties go to the lower
/// row, then the lower column.
pub fn match_greedy(m: &ScoreMatrix, maximize: bool) -> Matching {
    let mut entries: Vec<(f64, usize, usize)> = (0..m.rows())
        .flat_map(|r| (0..m.cols()).filter_map(move |c| m.get(r, c).map(|v| (v, r, c))))
        .collect();
    entries.sort_by(|a, b| {
        let by_score = if maximize { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
        by_score.then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut row_used = vec![false; m.rows()];
    let mut col_used = vec![false; m.cols()];
    let mut pairs = Vec::new();
    for (_, r, c) in entries {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            pairs.push((r, c));
        }
    }
    Matching::from_assignment(m.rows(), m.cols(), pairs)
}

/// Optimal assignment on the ungated pairs. The matrix is padded to square
/// with a sentinel cost larger than any achievable total, so the solver
/// first maximizes the number of real pairs and then optimizes their cost.
pub fn match_hungarian(m: &ScoreMatrix, maximize: bool) -> Matching {
    let n = m.rows().max(m.cols());
    if m.rows() == 0 || m.cols() == 0 {
        return Matching::from_assignment(m.rows(), m.cols(), Vec::new());
    }
    let sign = if maximize { -1.0 } else { 1.0 };
    let worst = (0..m.rows())
        .flat_map(|r| (0..m.cols()).filter_map(move |c| m.get(r, c)))
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let sentinel = (2.0 * worst + 1.0) * (n as f64 + 1.0);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    if r < m.rows() && c < m.cols() {
                        m.get(r, c).map_or(sentinel, |v| sign * v)
                    } else {
                        sentinel
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian_min_cost(&cost);
    let pairs = assignment
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < m.rows() && c < m.cols() && m.get(r, c).is_some())
        .collect();
    Matching::from_assignment(m.rows(), m.cols(), pairs)
}

/// Kuhn–Munkres with potentials on a square matrix, O(n³). Returns the
/// column assigned to each row.
pub fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials; index 0 is a virtual column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j].partial_cmp(&delta) == Some(Ordering::Less) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(m: &Matching) -> Vec<(u64, usize)> {
        m.pairs.clone()
    }

    #[test]
    fn greedy_examples() {
        let one = ScoreMatrix::from_rows(&[vec![0.3]]);
        assert_eq!(pairs(&match_greedy(&one, true)), vec![(0, 0)]);

        let m = ScoreMatrix::from_rows(&[vec![0.9, 0.8], vec![0.85, 0.7]]);
        assert_eq!(pairs(&match_greedy(&m, true)), vec![(0, 0), (1, 1)]);

        let gated = ScoreMatrix::gated(2, 3);
        let g = match_greedy(&gated, true);
        assert!(g.pairs.is_empty());
        assert_eq!(g.unmatched_tracks, vec![0, 1]);
        assert_eq!(g.unmatched_detections, vec![0, 1, 2]);
    }

    #[test]
    fn greedy_ties_prefer_lower_indices() {
        let m = ScoreMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(pairs(&match_greedy(&m, false)), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn hungarian_examples() {
        let m = ScoreMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let h = match_hungarian(&m, false);
        assert_eq!(pairs(&h), vec![(0, 0), (1, 1)]);
        assert_eq!(h.total(&m), 2.0);

        // 1 + 1.9 = 2.9 beats 2 + 1.5 = 3.5
        let m = ScoreMatrix::from_rows(&[vec![1.0, 2.0], vec![1.5, 1.9]]);
        assert_eq!(pairs(&match_hungarian(&m, false)), vec![(0, 0), (1, 1)]);

        let m = ScoreMatrix::from_rows(&[vec![3.0, 0.5, 2.0]]);
        let h = match_hungarian(&m, false);
        assert_eq!(pairs(&h), vec![(0, 1)]);
        assert_eq!(h.unmatched_detections, vec![0, 2]);
    }

    #[test]
    fn hungarian_skips_gated_cells() {
        let mut m = ScoreMatrix::from_rows(&[vec![0.1, 5.0], vec![0.2, 9.0]]);
        m.gate(0, 1);
        m.gate(1, 1);
        let h = match_hungarian(&m, false);
        assert_eq!(pairs(&h), vec![(0, 0)]);
        assert_eq!(h.unmatched_tracks, vec![1]);
        assert_eq!(h.unmatched_detections, vec![1]);
    }

    #[test]
    fn hungarian_maximize() {
        let m = ScoreMatrix::from_rows(&[vec![0.9, 0.8], vec![0.85, 0.1]]);
        // greedy takes (0,0) then (1,1) = 1.0; optimum is (0,1)+(1,0) = 1.65
        assert_eq!(pairs(&match_hungarian(&m, true)), vec![(0, 1), (1, 0)]);
        assert_eq!(pairs(&match_greedy(&m, true)), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn relabel_maps_rows_to_ids() {
        let m = ScoreMatrix::from_rows(&[vec![1.0, 9.0], vec![9.0, 9.0], vec![9.0, 1.0]]);
        let h = match_hungarian(&m, false).relabel(&[10, 11, 12]);
        assert_eq!(h.pairs, vec![(10, 0), (12, 1)]);
        assert_eq!(h.unmatched_tracks, vec![11]);
        assert_eq!(h.track_of(1), Some(12));
        assert_eq!(h.detection_of(10), Some(0));
    }

    fn arb_matrix() -> impl Strategy<Value = (ScoreMatrix, Vec<Vec<bool>>)> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            (
                proptest::collection::vec(proptest::collection::vec(0.0..10.0f64, c), r),
                proptest::collection::vec(proptest::collection::vec(proptest::bool::weighted(0.3), c), r),
            )
                .prop_map(|(vals, gates)| {
                    let mut m = ScoreMatrix::from_rows(&vals);
                    for (i, row) in gates.iter().enumerate() {
                        for (j, &g) in row.iter().enumerate() {
                            if g {
                                m.gate(i, j);
                            }
                        }
                    }
                    (m, gates)
                })
        })
    }

    fn check_partition(m: &ScoreMatrix, out: &Matching) -> Result<(), TestCaseError> {
        let mut rows: Vec<u64> = out.pairs.iter().map(|p| p.0).chain(out.unmatched_tracks.iter().copied()).collect();
        let mut cols: Vec<usize> = out.pairs.iter().map(|p| p.1).chain(out.unmatched_detections.iter().copied()).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        prop_assert_eq!(rows, (0..m.rows() as u64).collect::<Vec<_>>());
        prop_assert_eq!(cols, (0..m.cols()).collect::<Vec<_>>());
        Ok(())
    }

    proptest! {
        #[test]
        fn gated_pairs_never_matched((m, gates) in arb_matrix(), maximize in any::<bool>()) {
            for out in [match_greedy(&m, maximize), match_hungarian(&m, maximize)] {
                for &(r, c) in &out.pairs {
                    prop_assert!(!gates[r as usize][c]);
                }
                check_partition(&m, &out)?;
            }
        }

        #[test]
        fn hungarian_never_worse_than_greedy(vals in (1usize..7).prop_flat_map(|n|
            proptest::collection::vec(proptest::collection::vec(0.0..10.0f64, n), n))) {
            let m = ScoreMatrix::from_rows(&vals);
            let h = match_hungarian(&m, false);
            let g = match_greedy(&m, false);
            prop_assert_eq!(h.pairs.len(), g.pairs.len());
            prop_assert!(h.total(&m) <= g.total(&m) + 1e-9);
        }
    }
}

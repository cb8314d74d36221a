//! Minimum-cost bipartite assignment (Kuhn-Munkres) with infeasible entries.
//!
//! The matrix is padded to square. Infeasible and padding entries carry a
//! unit penalty that dominates every real cost, so the solver first maximizes
//! the number of feasible pairs and then minimizes their total cost. A third,
//! positional component breaks remaining ties towards the lexicographically
//! smallest column sequence (lowest row first, then lowest column).

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest padded size for which the positional tie-break fits in `i128`.
const TIE_BREAK_MAX_N: usize = 24;

/// Dense cost matrix; `None` marks a pair that may not be matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Option<f64>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "cost matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("feasible cost entries must be finite"));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    /// All-feasible matrix from rows of costs.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged cost matrix"));
        }
        let data = rows.iter().flatten().map(|&c| Some(c)).collect();
        CostMatrix::new(rows.len(), cols, data)
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
}

/// Partial row-to-column matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Matched `(row, col)` pairs in increasing row order.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    /// Sum of matched entries, accumulated in row order.
    pub total_cost: f64,
}

impl Assignment {
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|(r, _)| *r == row).map(|&(_, c)| c)
    }
}

/// Lexicographic weight `(penalty, cost, tie)`. Forms an ordered group under
/// componentwise addition, which is all the potential updates need.
#[derive(Debug, Clone, Copy, Default)]
struct Weight {
    penalty: i64,
    cost: f64,
    tie: i128,
}

impl Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.penalty
            .cmp(&other.penalty)
            .then(self.cost.total_cmp(&other.cost))
            .then(self.tie.cmp(&other.tie))
    }

    fn lt(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Less
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, o: Weight) -> Weight {
        Weight {
            penalty: self.penalty + o.penalty,
            cost: self.cost + o.cost,
            tie: self.tie + o.tie,
        }
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, o: Weight) -> Weight {
        Weight {
            penalty: self.penalty - o.penalty,
            cost: self.cost - o.cost,
            tie: self.tie - o.tie,
        }
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, o: Weight) {
        *self = *self + o;
    }
}

impl SubAssign for Weight {
    fn sub_assign(&mut self, o: Weight) {
        *self = *self - o;
    }
}

/// Solves the assignment problem on `cost`.
///
/// Returns the matching with the most feasible pairs and, among those, the
/// minimum total cost. An empty or all-infeasible matrix yields an empty
/// matching.
pub fn hungarian_assign(cost: &CostMatrix) -> Assignment {
    let n = cost.rows.max(cost.cols);
    let mut matched_row_of_col = vec![None; cost.cols];
    if n > 0 {
        // place value of row i in the positional tie-break: n^(n-1-i)
        let place: Vec<i128> = if n <= TIE_BREAK_MAX_N {
            (0..n)
                .map(|i| (n as i128).pow((n - 1 - i) as u32))
                .collect()
        } else {
            vec![0; n]
        };
        let weight = |i: usize, j: usize| -> Weight {
            let tie = j as i128 * place[i];
            match (i < cost.rows && j < cost.cols)
                .then(|| cost.get(i, j))
                .flatten()
            {
                Some(c) => Weight {
                    penalty: 0,
                    cost: c,
                    tie,
                },
                None => Weight {
                    penalty: 1,
                    cost: 0.0,
                    tie,
                },
            }
        };

        // Shortest augmenting path formulation with row/column potentials,
        // 1-based with index 0 as the virtual source column.
        let mut u = vec![Weight::default(); n + 1];
        let mut v = vec![Weight::default(); n + 1];
        let mut row_of = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        for i in 1..=n {
            row_of[0] = i;
            let mut j0 = 0usize;
            let mut minv: Vec<Option<Weight>> = vec![None; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = row_of[j0];
                let mut delta: Option<Weight> = None;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if used[j] {
                        continue;
                    }
                    let cur = weight(i0 - 1, j - 1) - u[i0] - v[j];
                    if minv[j].is_none_or(|m| cur.lt(&m)) {
                        minv[j] = Some(cur);
                        way[j] = j0;
                    }
                    let m = minv[j].expect("set above");
                    if delta.is_none_or(|d| m.lt(&d)) {
                        delta = Some(m);
                        j1 = j;
                    }
                }
                let delta = delta.expect("an unused column remains while augmenting");
                for j in 0..=n {
                    if used[j] {
                        u[row_of[j]] += delta;
                        v[j] -= delta;
                    } else if let Some(m) = minv[j].as_mut() {
                        *m -= delta;
                    }
                }
                j0 = j1;
                if row_of[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                row_of[j0] = row_of[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        for j in 1..=n {
            let (r, c) = (row_of[j] - 1, j - 1);
            if r < cost.rows && c < cost.cols && cost.get(r, c).is_some() {
                matched_row_of_col[c] = Some(r);
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = matched_row_of_col
        .iter()
        .enumerate()
        .filter_map(|(c, r)| r.map(|r| (r, c)))
        .collect();
    pairs.sort_unstable();
    let mut row_matched = vec![false; cost.rows];
    let mut total_cost = 0.0;
    for &(r, c) in &pairs {
        row_matched[r] = true;
        total_cost += cost.get(r, c).expect("feasible pair");
    }
    Assignment {
        unmatched_rows: (0..cost.rows).filter(|&r| !row_matched[r]).collect(),
        unmatched_cols: (0..cost.cols)
            .filter(|&c| matched_row_of_col[c].is_none())
            .collect(),
        pairs,
        total_cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive search over partial matchings: most feasible pairs first,
    /// then lowest cost (summed in row order), then lexicographically
    /// smallest column sequence.
    fn brute_force(cost: &CostMatrix) -> (usize, f64, Vec<Option<usize>>) {
        fn rec(
            cost: &CostMatrix,
            row: usize,
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<usize>>,
            best: &mut Option<(usize, f64, Vec<Option<usize>>)>,
        ) {
            if row == cost.rows() {
                let n = cur.iter().flatten().count();
                let c: f64 = cur
                    .iter()
                    .enumerate()
                    .filter_map(|(r, c)| c.map(|c| cost.get(r, c).unwrap()))
                    .sum();
                let better = match best {
                    None => true,
                    Some((bn, bc, _)) => n > *bn || (n == *bn && c < *bc),
                };
                if better {
                    *best = Some((n, c, cur.clone()));
                }
                return;
            }
            for col in 0..cost.cols() {
                if !used[col] && cost.get(row, col).is_some() {
                    used[col] = true;
                    cur.push(Some(col));
                    rec(cost, row + 1, used, cur, best);
                    cur.pop();
                    used[col] = false;
                }
            }
            cur.push(None);
            rec(cost, row + 1, used, cur, best);
            cur.pop();
        }
        let mut best = None;
        rec(cost, 0, &mut vec![false; cost.cols()], &mut Vec::new(), &mut best);
        best.unwrap()
    }

    #[test]
    fn two_by_two_picks_oracle_minimum() {
        let m = CostMatrix::from_rows(&[vec![2.0, 1.0], vec![4.0, 2.0]]).unwrap();
        // {0->1,1->0} costs 5, {0->0,1->1} costs 4
        let (_, best, _) = brute_force(&m);
        assert_eq!(best, 4.0);
        let a = hungarian_assign(&m);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 4.0);
    }

    #[test]
    fn single_and_empty() {
        let m = CostMatrix::from_rows(&[vec![-0.9]]).unwrap();
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 0)]);
        let m = CostMatrix::new(0, 0, vec![]).unwrap();
        assert!(hungarian_assign(&m).pairs.is_empty());
        let m = CostMatrix::new(0, 3, vec![]).unwrap();
        assert_eq!(hungarian_assign(&m).unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn all_infeasible_is_empty() {
        let m = CostMatrix::new(2, 3, vec![None; 6]).unwrap();
        let a = hungarian_assign(&m);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1]);
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn infeasible_entries_are_never_used() {
        // forcing 0->0 would be cheap, but it is not allowed
        let m = CostMatrix::new(2, 2, vec![None, Some(-0.5), Some(-0.4), None]).unwrap();
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 1), (1, 0)]);
        let m = CostMatrix::new(2, 2, vec![Some(-0.9), None, None, None]).unwrap();
        let a = hungarian_assign(&m);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_rows, vec![1]);
    }

    #[test]
    fn ties_resolve_to_lowest_columns() {
        let m = CostMatrix::from_rows(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 0), (1, 1), (2, 2)]);
        let m = CostMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(hungarian_assign(&m).pairs, vec![(0, 0)]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(CostMatrix::new(1, 1, vec![Some(f64::NAN)]).is_err());
        assert!(CostMatrix::new(1, 2, vec![Some(1.0)]).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = CostMatrix> {
        (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::option::weighted(0.7, (-8i32..8).prop_map(f64::from)), r * c)
                .prop_map(move |d| CostMatrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn matches_brute_force_on_partial_matrices(m in arb_matrix()) {
            let a = hungarian_assign(&m);
            let (n, c, _) = brute_force(&m);
            prop_assert_eq!(a.pairs.len(), n);
            prop_assert_eq!(a.total_cost, c);
            let used_rows: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
            for r in &a.unmatched_rows {
                prop_assert!(!used_rows.contains(r));
            }
            prop_assert_eq!(a.pairs.len() + a.unmatched_rows.len(), m.rows());
            prop_assert_eq!(a.pairs.len() + a.unmatched_cols.len(), m.cols());
        }

        #[test]
        fn square_ties_match_first_optimal_permutation(
            n in 1usize..=5,
            vals in prop::collection::vec(0i32..3, 25),
        ) {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|r| (0..n).map(|c| f64::from(vals[r * 5 + c])).collect())
                .collect();
            let m = CostMatrix::from_rows(&rows).unwrap();
            // brute force visits permutations in lexicographic order and keeps
            // the first strict minimum
            let (_, c, cols) = brute_force(&m);
            let a = hungarian_assign(&m);
            prop_assert_eq!(a.total_cost, c);
            let got: Vec<Option<usize>> = (0..n).map(|r| a.col_for_row(r)).collect();
            prop_assert_eq!(got, cols);
        }
    }
}

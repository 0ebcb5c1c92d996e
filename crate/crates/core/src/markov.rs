//! Row-stochastic matrices and their stationary distributions.

use serde::{Deserialize, Serialize};

/// Added to zero entries before iterating so every chain is irreducible.
pub const SMOOTHING_EPSILON: f64 = 1e-9;
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;
/// Plain power iteration is abandoned for the lazy chain `(I + P) / 2` after
/// this many steps, which breaks periodicity without moving the fixed point.
const LAZY_AFTER: usize = 1_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("row {row} is not stochastic (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("entry ({row},{col}) = {value} is negative or non-finite")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovMatrix {
    n: usize,
    data: Vec<f64>,
}

impl MarkovMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let n = rows.len();
        if n == 0 {
            return Err(MarkovError::Empty);
        }
        let mut data = Vec::with_capacity(n * n);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(MarkovError::NotSquare {
                    row: r,
                    len: row.len(),
                    expected: n,
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(MarkovError::BadEntry { row: r, col: c, value: v });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MarkovError::NotStochastic { row: r, sum });
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    /// A chain whose next state is independent of the current one.
    pub fn identical_rows(row: &[f64]) -> Result<Self, MarkovError> {
        Self::new(vec![row.to_vec(); row.len()])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn is_rank_one(&self) -> bool {
        let first = self.row(0);
        (1..self.n).all(|i| self.row(i) == first)
    }

    /// `x P`.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += xi * p;
            }
        }
        out
    }

    /// `‖x P − x‖∞`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.left_multiply(x)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn smoothed(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.n) {
            let mut changed = false;
            for v in row.iter_mut() {
                if *v == 0.0 {
                    *v = SMOOTHING_EPSILON;
                    changed = true;
                }
            }
            if changed {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        Self { n: self.n, data }
    }
}

/// Long-run share of time spent in each state.
///
/// Rank-1 chains return their common row unchanged. Otherwise zero entries are
/// smoothed and the chain is power-iterated from the uniform vector until the
/// residual drops below [`RESIDUAL_TOLERANCE`].
pub fn stationary_distribution(matrix: &MarkovMatrix) -> Result<Vec<f64>, MarkovError> {
    let n = matrix.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if matrix.is_rank_one() {
        return Ok(matrix.row(0).to_vec());
    }
    let p = matrix.smoothed();
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        let mut next = p.left_multiply(&x);
        if it >= LAZY_AFTER {
            for (nx, ox) in next.iter_mut().zip(&x) {
                *nx = 0.5 * (*nx + ox);
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        x = next;
        residual = p.residual(&x);
        if residual < RESIDUAL_TOLERANCE {
            return Ok(x);
        }
    }
    Err(MarkovError::NotConverged {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct solve of π(P − I) = 0 with Σπ = 1 by Gaussian elimination.
    #[allow(clippy::needless_range_loop)]
    fn solve_oracle(m: &MarkovMatrix) -> Vec<f64> {
        let n = m.len();
        // Rows of A are equations: column j of (P^T - I), last one replaced by Σπ = 1.
        let mut a = vec![vec![0.0; n + 1]; n];
        for j in 0..n {
            for i in 0..n {
                a[j][i] = m.get(i, j) - if i == j { 1.0 } else { 0.0 };
            }
        }
        a[n - 1] = vec![1.0; n + 1];
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }

    #[test]
    fn two_state_analytic() {
        let m = MarkovMatrix::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-9);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn rank_one_returns_row() {
        let q = [0.1, 0.2, 0.3, 0.4];
        let m = MarkovMatrix::identical_rows(&q).unwrap();
        assert_eq!(stationary_distribution(&m).unwrap(), q);
    }

    #[test]
    fn single_state() {
        let m = MarkovMatrix::new(vec![vec![1.0]]).unwrap();
        assert_eq!(stationary_distribution(&m).unwrap(), [1.0]);
    }

    #[test]
    fn periodic_chain_converges() {
        let m = MarkovMatrix::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        for v in pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(matches!(
            MarkovMatrix::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]),
            Err(MarkovError::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            MarkovMatrix::new(vec![vec![1.0, 0.0]]),
            Err(MarkovError::NotSquare { .. })
        ));
    }

    fn stochastic(n: usize) -> impl Strategy<Value = MarkovMatrix> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
            let rows = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|v| v / s).collect()
                })
                .collect();
            MarkovMatrix::new(rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn matches_linear_solve(m in (1usize..8).prop_flat_map(stochastic)) {
            let pi = stationary_distribution(&m).unwrap();
            let oracle = solve_oracle(&m);
            for (a, b) in pi.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-8, "{pi:?} vs {oracle:?}");
            }
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

//! Dense tableau simplex for the max-min time-sharing LP.
//!
//! `max_{x in simplex} min_k (Q x)_k` with `Q >= 0` is solved through its
//! game-theoretic dual `max 1^T y  s.t.  Q^T y <= 1, y >= 0`, whose slack
//! basis is feasible at `y = 0`, so no phase one is needed. The time shares
//! are the shadow prices of the dual's rows, renormalized onto the simplex.

const PIVOT_TOL: f64 = 1e-12;

pub(crate) struct GameSolution {
    /// Point on the probability simplex.
    pub shares: Vec<f64>,
    /// `min_k (Q x)_k` at `shares`.
    pub value: f64,
    /// Upper bound on the optimum from the dual weights.
    pub upper_bound: f64,
    pub pivots: usize,
    pub converged: bool,
}

/// `q` is `K x N` row-major by ER. Bland's rule makes the pivot sequence,
/// and hence the returned vertex, a deterministic function of the input.
pub(crate) fn solve_max_min_game(q: &[Vec<f64>], max_pivots: usize) -> GameSolution {
    let k = q.len();
    let n = q[0].len();
    let scale = q.iter().flatten().copied().fold(0.0, f64::max);
    let uniform = || vec![1.0 / n as f64; n];
    if scale <= 0.0 || q.iter().any(|row| row.iter().all(|&v| v <= 0.0)) {
        let shares = uniform();
        let value = min_payoff(q, &shares);
        return GameSolution { shares, value, upper_bound: 0.0, pivots: 0, converged: true };
    }

    // Rows: one per slot n. Columns: y_0..y_{K-1}, slack_0..slack_{N-1}, rhs.
    let cols = k + n;
    let mut tab = vec![vec![0.0; cols + 1]; n];
    for (r, row) in tab.iter_mut().enumerate() {
        for kk in 0..k {
            row[kk] = q[kk][r] / scale;
        }
        row[k + r] = 1.0;
        row[cols] = 1.0;
    }
    // Reduced costs for maximizing sum(y).
    let mut cost = vec![0.0; cols + 1];
    cost[..k].iter_mut().for_each(|c| *c = 1.0);
    let mut basis: Vec<usize> = (k..k + n).collect();

    let mut pivots = 0;
    let mut converged = false;
    while pivots < max_pivots {
        let Some(enter) = (0..cols).find(|&j| cost[j] > PIVOT_TOL) else {
            converged = true;
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..n {
            let a = tab[r][enter];
            if a > PIVOT_TOL {
                let ratio = tab[r][cols] / a;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[r] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        // Unbounded cannot happen once every ER has a positive entry.
        let Some(lr) = leave else { break };
        let piv = tab[lr][enter];
        tab[lr].iter_mut().for_each(|v| *v /= piv);
        let pivot_row = tab[lr].clone();
        for (r, row) in tab.iter_mut().enumerate() {
            if r != lr {
                let f = row[enter];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        let f = cost[enter];
        cost.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
        basis[lr] = enter;
        pivots += 1;
    }

    // Shadow prices of the slot rows are minus the slack reduced costs.
    let prices: Vec<f64> = (0..n).map(|r| (-cost[k + r]).max(0.0)).collect();
    let total: f64 = prices.iter().sum();
    let shares = if total > 0.0 { prices.iter().map(|p| p / total).collect() } else { uniform() };
    let value = min_payoff(q, &shares);

    let mut y = vec![0.0; k];
    for (r, &b) in basis.iter().enumerate() {
        if b < k {
            y[b] = tab[r][cols].max(0.0);
        }
    }
    let ysum: f64 = y.iter().sum();
    let upper_bound = if ysum > 0.0 {
        (0..n).map(|j| (0..k).map(|kk| y[kk] * q[kk][j]).sum::<f64>() / ysum).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    GameSolution { shares, value, upper_bound, pivots, converged }
}

fn min_payoff(q: &[Vec<f64>], x: &[f64]) -> f64 {
    q.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let q = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        let s = solve_max_min_game(&q, 100);
        assert!(s.converged);
        assert!((s.shares[0] - 0.5).abs() < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.upper_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_gives_uniform() {
        let q = vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]];
        let s = solve_max_min_game(&q, 100);
        assert_eq!(s.shares, vec![1.0 / 3.0; 3]);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn single_row_picks_best_column() {
        let q = vec![vec![0.3, 0.9, 0.1]];
        let s = solve_max_min_game(&q, 100);
        assert_eq!(s.shares, vec![0.0, 1.0, 0.0]);
        assert!((s.value - 0.9).abs() < 1e-15);
    }

    #[test]
    fn dominated_column_unused() {
        let q = vec![vec![3.0, 1.0, 0.5], vec![1.0, 3.0, 0.5]];
        let s = solve_max_min_game(&q, 100);
        assert!(s.shares[2].abs() < 1e-12);
        assert!((s.value - 2.0).abs() < 1e-12);
    }
}

//! Dense tableau primal simplex with Bland's anti-cycling rule.
//!
//! Solves `maximize c·x  s.t.  A x <= b, x >= 0` with `b >= 0`, so the
//! slack basis is primal feasible and no phase-one is needed. Bland's rule
//! (smallest eligible index for both the entering and the leaving variable)
//! guarantees termination; the pivot budget is a hard safety stop.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("pivot limit of {0} exceeded")]
    IterLimit(usize),
    #[error("unbounded objective (entering column {0} has no blocking row)")]
    Unbounded(usize),
    #[error("negative right-hand side {0} at row {1}; slack basis infeasible")]
    NegativeRhs(f64, usize),
}

#[derive(Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// `rows` are `(coefficients, rhs)` pairs of length `n` each.
pub fn maximize(
    objective: &[f64],
    rows: &[(Vec<f64>, f64)],
    max_pivots: usize,
) -> Result<Solution, SimplexError> {
    let n = objective.len();
    let m = rows.len();
    for (r, (coeffs, b)) in rows.iter().enumerate() {
        assert_eq!(coeffs.len(), n, "row {r} has wrong width");
        if *b < 0.0 {
            return Err(SimplexError::NegativeRhs(*b, r));
        }
    }

    // Tableau layout: columns 0..n structural, n..n+m slack, last column rhs.
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for (r, (coeffs, b)) in rows.iter().enumerate() {
        let mut row = vec![0.0; width];
        row[..n].copy_from_slice(coeffs);
        row[n + r] = 1.0;
        row[width - 1] = *b;
        tab.push(row);
    }
    // Objective row holds reduced costs; entering columns have positive entries.
    let mut zrow = vec![0.0; width];
    zrow[..n].copy_from_slice(objective);
    tab.push(zrow);

    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut pivots = 0usize;

    loop {
        // Bland: smallest column index with positive reduced cost.
        let entering = (0..n + m).find(|&j| tab[m][j] > PIVOT_TOL);
        let Some(col) = entering else { break };

        // Ratio test; ties resolved by the smallest basic variable index.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tab[r][col];
            if a > PIVOT_TOL {
                let ratio = tab[r][width - 1] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - PIVOT_TOL
                            || ((ratio - lratio).abs() <= PIVOT_TOL && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(SimplexError::Unbounded(col));
        };

        pivots += 1;
        if pivots > max_pivots {
            return Err(SimplexError::IterLimit(max_pivots));
        }

        let pivot = tab[row][col];
        for v in tab[row].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = tab[row].clone();
        for (r, target) in tab.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = target[col];
            if factor != 0.0 {
                for (t, p) in target.iter_mut().zip(pivot_row.iter()) {
                    *t -= factor * p;
                }
                target[col] = 0.0;
            }
        }
        basis[row] = col;
    }

    let mut x = vec![0.0; n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[r][width - 1].max(0.0);
        }
    }
    // The z-row accumulates -objective during pivoting.
    let objective_value = -tab[m][width - 1];
    Ok(Solution { x, objective: objective_value, pivots })
}

//! A dense two-phase simplex solver for small linear programs.
//!
//! This backs the witness-space formulation of the restricted adversarial
//! objective, where the variables are potential values over a universe of a
//! few dozen points and the constraints are pairwise Lipschitz bounds. Sizes
//! stay tiny, so the implementation favors transparency over speed: a dense
//! tableau, Bland's rule throughout (which cannot cycle), and explicit
//! infeasibility/unboundedness reporting.
//!
//! Problems are stated as `maximize c·x` subject to `A·x ≤ b`, with
//! variables either all free (internally split into positive parts) or all
//! nonnegative.

use crate::error::{Error, Result};

/// A linear program: maximize `objective · x` subject to every
/// `(row, rhs)` in `constraints` meaning `row · x ≤ rhs`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<(Vec<f64>, f64)>,
    /// When false, variables are free (split internally); when true, they
    /// must be nonnegative.
    pub nonneg: bool,
}

/// An optimal vertex of a linear program.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

const EPS: f64 = 1e-9;

/// Solve to optimality with the two-phase dense simplex method.
/// Errors: an empty objective or ragged rows report invalid input; an
/// infeasible program or an unbounded objective report a numeric failure.
pub fn maximize(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "linear program has no variables".into(),
        ));
    }
    for (row, _) in &lp.constraints {
        if row.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: row.len(),
            });
        }
    }

    // Columns: original variables (split in two when free), then slacks,
    // then phase-one artificials for rows with negative right-hand sides.
    let width = if lp.nonneg { n } else { 2 * n };
    let m = lp.constraints.len();
    let expand = |row: &[f64]| -> Vec<f64> {
        if lp.nonneg {
            row.to_vec()
        } else {
            let mut out = Vec::with_capacity(2 * n);
            out.extend_from_slice(row);
            out.extend(row.iter().map(|v| -v));
            out
        }
    };

    let mut needs_artificial = Vec::new();
    for (i, (_, b)) in lp.constraints.iter().enumerate() {
        if *b < 0.0 {
            needs_artificial.push(i);
        }
    }
    let num_cols = width + m + needs_artificial.len();

    // Tableau rows: [variables | slacks | artificials | rhs], scaled so every
    // right-hand side is nonnegative; `basis[i]` is the basic column of row i.
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut art_cursor = 0usize;
    for (i, (row, b)) in lp.constraints.iter().enumerate() {
        let mut r = vec![0.0; num_cols + 1];
        let ex = expand(row);
        let flip = *b < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for (j, v) in ex.iter().enumerate() {
            r[j] = sign * v;
        }
        r[width + i] = sign; // slack
        r[num_cols] = sign * b;
        if flip {
            let art_col = width + m + art_cursor;
            art_cursor += 1;
            r[art_col] = 1.0;
            basis.push(art_col);
        } else {
            basis.push(width + i);
        }
        tab.push(r);
    }

    // Phase one: minimize the artificial sum when any artificials exist.
    if !needs_artificial.is_empty() {
        let mut cost = vec![0.0; num_cols];
        for a in 0..needs_artificial.len() {
            cost[width + m + a] = 1.0;
        }
        let opt = run_simplex(&mut tab, &mut basis, &cost, num_cols)?;
        if opt > EPS {
            return Err(Error::NumericFailure(format!(
                "linear program is infeasible (phase-one residual {opt:e})"
            )));
        }
        // Pivot any artificial still basic onto a real column in its row, or
        // drop the row as redundant.
        let mut drop_rows = Vec::new();
        for i in 0..tab.len() {
            if basis[i] >= width + m {
                let pivot_col = (0..width + m).find(|&j| tab[i][j].abs() > EPS);
                match pivot_col {
                    Some(j) => pivot(&mut tab, &mut basis, i, j),
                    None => drop_rows.push(i),
                }
            }
        }
        for &i in drop_rows.iter().rev() {
            tab.remove(i);
            basis.remove(i);
        }
        // Artificial columns are dead from here on; keep [vars|slacks|rhs].
        for row in tab.iter_mut() {
            let rhs = row[num_cols];
            row.truncate(width + m);
            row.push(rhs);
        }
    }
    let num_cols = width + m;

    // Phase two: minimize the negated objective.
    let mut cost = vec![0.0; num_cols];
    let ex = expand(&lp.objective);
    for (j, v) in ex.iter().enumerate() {
        cost[j] = -v;
    }
    let neg_value = run_simplex(&mut tab, &mut basis, &cost, num_cols)?;

    // Read out the vertex.
    let mut raw = vec![0.0; num_cols];
    for (i, &b) in basis.iter().enumerate() {
        raw[b] = tab[i][num_cols];
    }
    let x = if lp.nonneg {
        raw[..n].to_vec()
    } else {
        (0..n).map(|j| raw[j] - raw[n + j]).collect()
    };
    Ok(LpSolution {
        value: -neg_value,
        x,
    })
}

/// Minimize `cost · x` over the current tableau with Bland's rule; returns
/// the optimal cost value. The tableau and basis are updated in place.
fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    num_cols: usize,
) -> Result<f64> {
    let m = tab.len();
    // Reduced costs under the current basis.
    let reduced = |tab: &[Vec<f64>], basis: &[usize], j: usize| -> f64 {
        let mut r = cost[j];
        for i in 0..m {
            r -= cost[basis[i]] * tab[i][j];
        }
        r
    };
    let max_iters = 20_000 + 50 * (num_cols + m) * (num_cols + m);
    for _ in 0..max_iters {
        // Bland: lowest-index column with negative reduced cost.
        let entering =
            (0..num_cols).find(|&j| !basis.contains(&j) && reduced(tab, basis, j) < -EPS);
        let Some(j) = entering else {
            let mut v = 0.0;
            for i in 0..m {
                v += cost[basis[i]] * tab[i][num_cols];
            }
            return Ok(v);
        };
        // Ratio test; lowest row index breaks ties.
        let mut leave = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if tab[i][j] > EPS {
                let ratio = tab[i][num_cols] / tab[i][j];
                if ratio < best - EPS
                    || (ratio < best + EPS && (leave == usize::MAX || basis[i] < basis[leave]))
                {
                    best = ratio;
                    leave = i;
                }
            }
        }
        if leave == usize::MAX {
            return Err(Error::NumericFailure("linear program is unbounded".into()));
        }
        pivot_mut(tab, basis, leave, j, num_cols);
    }
    Err(Error::NonConvergence {
        what: "dense simplex iteration budget",
        iters: max_iters,
        residual: f64::NAN,
    })
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let num_cols = tab[0].len() - 1;
    pivot_mut(tab, basis, row, col, num_cols);
}

fn pivot_mut(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize, num_cols: usize) {
    let piv = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= piv;
    }
    for i in 0..tab.len() {
        if i != row && tab[i][col].abs() > 0.0 {
            let factor = tab[i][col];
            for j in 0..=num_cols {
                let delta = factor * tab[row][j];
                tab[i][j] -= delta;
            }
        }
    }
    basis[row] = col;
}

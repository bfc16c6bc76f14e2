//! Dense tableau simplex for small linear programs in canonical form
//!
//! ```text
//! maximize    c . x
//! subject to  A x <= b,   x >= 0,   b >= 0
//! ```
//!
//! `b >= 0` makes the all-slack basis feasible, so no phase one is needed.
//! Pivoting follows Bland's rule (lowest entering index, lowest leaving basic
//! index among ratio ties), which rules out cycling on degenerate vertices and
//! makes the result a deterministic function of the input.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("constraint matrix is {rows}x{cols} but expected {expected_rows}x{expected_cols}")]
    Shape { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("right-hand side must be nonnegative and finite")]
    InfeasibleOrigin,
    #[error("objective is unbounded")]
    Unbounded,
    #[error("pivot limit of {0} exceeded")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<F> {
    pub x: Vec<F>,
    pub value: F,
    pub pivots: usize,
}

/// Solves the canonical-form program; `a` is row-major with one row per constraint.
pub fn maximize<F: Scalar>(c: &[F], a: &[Vec<F>], b: &[F]) -> Result<LpSolution<F>, LpError> {
    let n = c.len();
    let m = b.len();
    if a.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(LpError::Shape {
            rows: a.len(),
            cols: a.first().map_or(0, Vec::len),
            expected_rows: m,
            expected_cols: n,
        });
    }
    if b.iter().any(|&v| !(v.is_finite() && v >= F::zero())) {
        return Err(LpError::InfeasibleOrigin);
    }

    let tol = F::solver_tol();
    let width = n + m + 1;
    // Rows 0..m are constraints, row m holds reduced costs (negated objective).
    let mut tab = vec![F::zero(); (m + 1) * width];
    for i in 0..m {
        let row = &mut tab[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&a[i]);
        row[n + i] = F::one();
        row[width - 1] = b[i];
    }
    for j in 0..n {
        tab[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 100 * (n + m + 1);
    let mut pivots = 0;
    loop {
        let obj = &tab[m * width..(m + 1) * width];
        let Some(enter) = (0..n + m).find(|&j| obj[j] < -tol) else {
            break;
        };

        let mut leave: Option<(usize, F)> = None;
        for i in 0..m {
            let coef = tab[i * width + enter];
            if coef > tol {
                let ratio = tab[i * width + width - 1] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - tol || ((ratio - lr).abs() <= tol && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Err(LpError::Unbounded);
        };

        pivot(&mut tab, width, m, pivot_row, enter);
        basis[pivot_row] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(LpError::PivotLimit(max_pivots));
        }
    }

    let mut x = vec![F::zero(); n];
    for (i, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = tab[i * width + width - 1];
        }
    }
    let value = tab[m * width + width - 1];
    Ok(LpSolution { x, value, pivots })
}

fn pivot<F: Scalar>(tab: &mut [F], width: usize, m: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for j in 0..width {
        tab[row * width + j] = tab[row * width + j] / p;
    }
    tab[row * width + col] = F::one();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let factor = tab[i * width + col];
        if factor == F::zero() {
            continue;
        }
        for j in 0..width {
            let v = tab[row * width + j];
            tab[i * width + j] = tab[i * width + j] - factor * v;
        }
        tab[i * width + col] = F::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y; x <= 4; 2y <= 12; 3x + 2y <= 18  ->  (2, 6), 36
        let sol = maximize::<f64>(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((sol.value - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_detected() {
        let err = maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap_err();
        assert_eq!(err, LpError::Unbounded);
    }

    #[test]
    fn negative_rhs_rejected() {
        assert_eq!(
            maximize(&[1.0], &[vec![1.0]], &[-1.0]).unwrap_err(),
            LpError::InfeasibleOrigin
        );
    }

    #[test]
    fn shape_checked() {
        assert!(matches!(
            maximize(&[1.0, 1.0], &[vec![1.0]], &[1.0]),
            Err(LpError::Shape { .. })
        ));
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Beale's classic cycling example under the largest-coefficient rule.
        let c = [0.75, -150.0, 0.02, -6.0];
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0],
            vec![0.5, -90.0, -0.02, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let sol = maximize::<f64>(&c, &a, &[0.0, 0.0, 1.0]).unwrap();
        assert!((sol.value - 0.05).abs() < 1e-9, "{}", sol.value);
    }

    #[test]
    fn f32_solves() {
        let sol = maximize::<f32>(&[1.0, 1.0], &[vec![1.0, 2.0], vec![2.0, 1.0]], &[3.0, 3.0]).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-5);
    }
}

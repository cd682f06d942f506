//! Dense linear solves for the feasibility systems.
//!
//! Both feasibility paths reduce to solving small dense systems: `B x B`
//! for the per-base-station aggregates and `M_A x M_A` for the classic
//! per-user formulation. A partial-pivot LU factorization is ample at
//! these sizes; there is no sparse or incremental machinery here.
//!
//! Singularity is a domain signal, not a program fault: an assignment
//! whose matrix is singular sits exactly on the feasibility boundary
//! (the single-cell analogue is a load sum hitting 1), and callers map
//! [`SolveError::Singular`] to "infeasible".

use thiserror::Error;

/// Residual tolerance for `solve`: `||Ax - b||_inf <= SOLVE_TOL * (1 + ||b||_inf)`
/// on well-scaled systems (asserted for diagonally dominant inputs in tests).
pub const SOLVE_TOL: f64 = 1e-9;

/// A pivot candidate below `PIVOT_TOL * max|A_ij|` declares the matrix singular.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("matrix is singular to working precision")]
    Singular,
}

/// Square dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "matrix dimension must be positive");
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Largest absolute entry; the scale against which pivots are judged.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
    }

    /// LU factorization with partial pivoting (`PA = LU`).
    pub fn factorize(&self) -> Result<LuFactors, SolveError> {
        let n = self.n;
        let scale = self.max_abs();
        if !scale.is_finite() || scale == 0.0 {
            return Err(SolveError::Singular);
        }
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu[col * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[row * n + col].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = row;
                }
            }
            if pivot_val < PIVOT_TOL * scale {
                return Err(SolveError::Singular);
            }
            if pivot_row != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * n + col];
            for row in (col + 1)..n {
                let factor = lu[row * n + col] / pivot;
                lu[row * n + col] = factor;
                for j in (col + 1)..n {
                    lu[row * n + j] -= factor * lu[col * n + j];
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }
}

/// LU factors of a matrix; one factorization serves any number of
/// right-hand sides, transpose solves, and inverse rows.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        // forward substitution on Pb
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.lu[i * n + j] * x[j];
            }
            x[i] = sum;
        }
        // back substitution
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..n {
                sum -= self.lu[i * n + j] * x[j];
            }
            x[i] = sum / self.lu[i * n + i];
        }
        x
    }

    /// Solve `A^T y = b` using the same factors: `A^T = U^T L^T P`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut y = b.to_vec();
        // U^T z = b (forward, lower-triangular with diagonal from U)
        for i in 0..n {
            let mut sum = y[i];
            for j in 0..i {
                sum -= self.lu[j * n + i] * y[j];
            }
            y[i] = sum / self.lu[i * n + i];
        }
        // L^T w = z (backward, unit diagonal)
        for i in (0..n).rev() {
            let mut sum = y[i];
            for j in (i + 1)..n {
                sum -= self.lu[j * n + i] * y[j];
            }
            y[i] = sum;
        }
        // undo the row permutation: x = P^T w
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Row `row` of `A^{-1}`, obtained as the solution of `A^T y = e_row`.
    pub fn inverse_row(&self, row: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.n];
        e[row] = 1.0;
        self.solve_transpose(&e)
    }
}

/// Solve `A x = b`; `Singular` marks a feasibility-boundary system.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    Ok(a.factorize()?.solve(b))
}

/// Row `row` of `A^{-1}`.
pub fn invert_row(a: &DenseMatrix, row: usize) -> Result<Vec<f64>, SolveError> {
    assert!(row < a.n(), "row index out of range");
    Ok(a.factorize()?.inverse_row(row))
}

/// `||Ax - b||_inf`, for residual checks.
pub fn residual_inf_norm(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let n = a.n();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut r = -b[i];
        for j in 0..n {
            r += a.get(i, j) * x[j];
        }
        worst = worst.max(r.abs());
    }
    worst
}

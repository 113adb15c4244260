//! Dense matrices and LU factorisation with partial pivoting.
//!
//! Circuits at desk scale stay well under a thousand unknowns, so a dense
//! factorisation is the right baseline. The factorisation reports the
//! column of a failing pivot so callers can name the offending unknown.

/// Row-major dense square-capable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = self * x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// C = self * other
    pub fn mul_mat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Maximum row sum (induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Error from a failed factorisation: the elimination column whose pivot
/// was zero to working precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot {
    pub column: usize,
}

/// LU factors of a square matrix, P*A = L*U, stored in place.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

/// Factorise a square matrix with partial pivoting.
///
/// A pivot is treated as singular when its magnitude falls below
/// `n * eps * max_abs(A)`, which catches both exact zeros and
/// numerically meaningless pivots.
pub fn lu_factor(a: &Matrix) -> Result<LuFactors, SingularPivot> {
    assert_eq!(a.rows(), a.cols(), "lu_factor requires a square matrix");
    let n = a.rows();
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    let max_abs = lu.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tiny = (n as f64) * f64::EPSILON * max_abs.max(f64::MIN_POSITIVE);

    for k in 0..n {
        // pick pivot row
        let mut p = k;
        let mut pmax = lu[k * n + k].abs();
        for i in (k + 1)..n {
            let v = lu[i * n + k].abs();
            if v > pmax {
                pmax = v;
                p = i;
            }
        }
        if !(pmax > tiny) || !pmax.is_finite() {
            return Err(SingularPivot { column: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / pivot;
            lu[i * n + k] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
    }
    Ok(LuFactors { n, lu, perm })
}

impl LuFactors {
    /// Solve A x = b for one right-hand side.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // forward: L y = P b
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Solve J * delta = rhs directly (factor plus one solve).
pub fn solve_dense(j: &Matrix, rhs: &[f64]) -> Result<Vec<f64>, SingularPivot> {
    Ok(lu_factor(j)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn identity_solve_negates_nothing() {
        let j = Matrix::identity(3);
        let x = solve_dense(&j, &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn diagonal_2x2() {
        let j = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = solve_dense(&j, &[-2.0, -4.0]).unwrap();
        assert_close(x[0], -1.0, 1e-15);
        assert_close(x[1], -1.0, 1e-15);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let j = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = solve_dense(&j, &[3.0, 7.0]).unwrap();
        assert_close(x[0], 7.0, 1e-15);
        assert_close(x[1], 3.0, 1e-15);
    }

    #[test]
    fn singular_reports_column() {
        let j = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let err = lu_factor(&j).unwrap_err();
        assert_eq!(err.column, 1);
    }

    #[test]
    fn random_roundtrip() {
        // deterministic pseudo-random fill
        let n = 12;
        let mut seed = 0x2545f4914f6cdd1d_u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = next();
            }
            a[(i, i)] += 4.0; // keep it comfortably nonsingular
        }
        let x_true: Vec<f64> = (0..n).map(|_| next()).collect();
        let b = a.mul_vec(&x_true);
        let x = solve_dense(&a, &b).unwrap();
        for i in 0..n {
            assert_close(x[i], x_true[i], 1e-10);
        }
    }
}

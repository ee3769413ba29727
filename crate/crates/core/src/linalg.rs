//! Small dense linear algebra: the matrices in this crate are at most a few
//! dozen rows, so everything is row-major `Vec` storage with direct loops.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self { rows: r, cols: c, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// `v vᵀ`.
    pub fn outer(v: &[T]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j];
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matmul");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        self.sub(rhs).max_abs()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// `‖MᵀM − I‖_∞` (max-abs entry).
    pub fn orthogonality_defect(&self) -> T {
        self.transpose().matmul(self).max_abs_diff(&Self::identity(self.cols))
    }

    /// Symmetric eigen-decomposition by cyclic Jacobi rotations.
    ///
    /// Eigenvalues come back in descending order; column `i` of the returned
    /// matrix is the eigenvector of the `i`-th eigenvalue.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Matrix<T>) {
        assert!(self.is_square(), "eigen-decomposition of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        // symmetrize against round-off in the input
        for i in 0..n {
            for j in 0..i {
                let m = (a[(i, j)] + a[(j, i)]) * T::lit(0.5);
                a[(i, j)] = m;
                a[(j, i)] = m;
            }
        }
        let mut v = Self::identity(n);
        let scale = a.max_abs();
        if scale == T::zero() {
            return (vec![T::zero(); n], v);
        }
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off.sqrt() <= T::epsilon() * scale * T::lit(1e-2) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps the result deterministic for repeated eigenvalues
        order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vecs = Self::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vecs[(k, new)] = v[(k, old)];
            }
        }
        (values, vecs)
    }

    /// Smallest eigenvalue of a symmetric matrix.
    pub fn min_eigenvalue(&self) -> T {
        let (vals, _) = self.symmetric_eigen();
        vals.last().copied().unwrap_or(T::zero())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `tol · max|a|`.
pub fn solve_square<T: Real>(a: &Matrix<T>, b: &[T], tol: T) -> Option<Vec<T>> {
    let n = a.rows();
    assert!(a.is_square() && b.len() == n);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.max_abs().max(T::min_positive_value());
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[(r, col)].abs() > m[(piv, col)].abs() {
                piv = r;
            }
        }
        if m[(piv, col)].abs() <= tol * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            rhs.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                m[(r, j)] = m[(r, j)] - f * m[(col, j)];
            }
            rhs[r] = rhs[r] - f * rhs[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = ((i + 1)..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Some(x)
}

/// Least-squares solution of `a x ≈ b` via Householder QR. Requires full
/// column rank (`None` otherwise).
pub fn least_squares<T: Real>(a: &Matrix<T>, b: &[T], tol: T) -> Option<Vec<T>> {
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(b.len(), m);
    if n > m {
        return None;
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let scale = r.max_abs().max(T::min_positive_value());
    for k in 0..n {
        let norm: T = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<T>().sqrt();
        if norm <= tol * scale {
            return None;
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..n {
            let dot: T = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = T::lit(2.0) * dot / vnorm2;
            for i in k..m {
                r[(i, j)] = r[(i, j)] - f * v[i - k];
            }
        }
        let dot: T = (k..m).map(|i| v[i - k] * qtb[i]).sum();
        let f = T::lit(2.0) * dot / vnorm2;
        for i in k..m {
            qtb[i] = qtb[i] - f * v[i - k];
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = ((i + 1)..n).map(|j| r[(i, j)] * x[j]).sum();
        if r[(i, i)].abs() <= tol * scale {
            return None;
        }
        x[i] = (qtb[i] - s) / r[(i, i)];
    }
    Some(x)
}

/// A nonzero vector `c` with `a c = 0`, for a matrix with more columns than
/// rank. Elimination pivots on the largest entry of each column in turn and
/// the kernel direction is taken from the lowest-index free column.
pub fn kernel_vector<T: Real>(a: &Matrix<T>, tol: T) -> Option<Vec<T>> {
    let (rows, cols) = (a.rows(), a.cols());
    let mut m = a.clone();
    let scale = m.max_abs().max(T::min_positive_value());
    let mut pivot_cols = Vec::new();
    let mut free_col = None;
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            free_col.get_or_insert(col);
            break;
        }
        let mut piv = row;
        for r in (row + 1)..rows {
            if m[(r, col)].abs() > m[(piv, col)].abs() {
                piv = r;
            }
        }
        if m[(piv, col)].abs() <= tol * scale {
            free_col.get_or_insert(col);
            if free_col.is_some() {
                break;
            }
            continue;
        }
        for j in 0..cols {
            let tmp = m[(row, j)];
            m[(row, j)] = m[(piv, j)];
            m[(piv, j)] = tmp;
        }
        let p = m[(row, col)];
        for j in 0..cols {
            m[(row, j)] = m[(row, j)] / p;
        }
        for r in 0..rows {
            if r != row {
                let f = m[(r, col)];
                if f != T::zero() {
                    for j in 0..cols {
                        m[(r, j)] = m[(r, j)] - f * m[(row, j)];
                    }
                }
            }
        }
        pivot_cols.push((row, col));
        row += 1;
    }
    let free = free_col?;
    let mut c = vec![T::zero(); cols];
    c[free] = T::one();
    for &(r, pc) in &pivot_cols {
        if pc < free {
            c[pc] = -m[(r, free)];
        }
    }
    Some(c)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reconstructs_symmetric_matrix() {
        let b = Matrix::from_rows(&[vec![2.0, 0.5, 0.1], vec![0.5, 1.0, -0.3], vec![0.1, -0.3, 0.7]]);
        let (vals, q) = b.symmetric_eigen();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = q.matmul(&Matrix::from_diag(&vals)).matmul(&q.transpose());
        assert!(rebuilt.max_abs_diff(&b) < 1e-12);
        assert!(q.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn kernel_vector_annihilates() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0, 1.0, 1.0], vec![-1.0, 0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0, 4.0]]);
        let c = kernel_vector(&a, 1e-12).unwrap();
        assert!(norm_inf(&a.mul_vec(&c)) < 1e-12);
        assert!(norm_inf(&c) > 0.5);
    }

    #[test]
    fn kernel_vector_with_dependent_columns() {
        // second column duplicates the first
        let a = Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 3.0]]);
        let c = kernel_vector(&a, 1e-12).unwrap();
        assert!(norm_inf(&a.mul_vec(&c)) < 1e-12);
    }

    #[test]
    fn least_squares_matches_exact_solution() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let x: Vec<f64> = least_squares(&a, &[1.0, 0.25, 0.25], 1e-12).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-14 && (x[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn solve_square_detects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(solve_square(&a, &[1.0, 2.0], 1e-12).is_none());
    }
}

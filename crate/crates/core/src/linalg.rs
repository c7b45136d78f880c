//! Dense and sparse linear-algebra helpers shared by the solver modules.
//!
//! Everything here works on `nalgebra` types. Sparse factorizations go through
//! `nalgebra-sparse`; the small dense eigen- and singular-value problems that
//! appear in the observability and posterior computations are at most a few
//! dozen rows wide.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use nalgebra_sparse::factorization::{CscCholesky, CscSymbolicCholesky};
use nalgebra_sparse::ops::serial::spsolve_csc_lower_triangular;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};

/// Sparse Cholesky factorization `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    factor: CscCholesky<f64>,
}

impl SparseCholesky {
    pub fn factor(matrix: &CscMatrix<f64>, what: &str) -> Result<Self> {
        CscCholesky::factor(matrix)
            .map(|factor| Self { factor })
            .map_err(|_| Error::NotPositiveDefinite(what.to_string()))
    }

    /// Numeric factorization reusing a symbolic analysis of the same pattern.
    pub fn factor_with(
        symbolic: &CscSymbolicCholesky,
        values: &[f64],
        what: &str,
    ) -> Result<Self> {
        CscCholesky::factor_numerical(symbolic.clone(), values)
            .map(|factor| Self { factor })
            .map_err(|_| Error::NotPositiveDefinite(what.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.factor.l().nrows()
    }

    pub fn l(&self) -> &CscMatrix<f64> {
        self.factor.l()
    }

    pub fn solve_in_place(&self, rhs: &mut DMatrix<f64>) {
        self.factor.solve_mut(rhs);
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        self.solve_in_place(&mut x);
        DVector::from_column_slice(x.as_slice())
    }

    /// Overwrites `rhs` with `L⁻¹ rhs`.
    pub fn forward_in_place(&self, rhs: &mut DMatrix<f64>) {
        spsolve_csc_lower_triangular(Op::NoOp(self.factor.l()), rhs)
            .expect("cholesky factor has a nonzero diagonal");
    }

    pub fn forward(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        self.forward_in_place(&mut x);
        x
    }

    /// `Lᵀ x` for every column of `x`.
    pub fn lt_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.factor.l();
        let mut out = DMatrix::zeros(l.ncols(), x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            for (k, col) in l.col_iter().enumerate() {
                let mut acc = 0.0;
                for (&i, &v) in col.row_indices().iter().zip(col.values()) {
                    acc += v * xc[i];
                }
                out[(k, c)] = acc;
            }
        }
        out
    }
}

/// `y = A x` for a CSC matrix.
pub fn csc_matvec(a: &CscMatrix<f64>, x: &[f64]) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
    y
}

/// `xᵀ A y` for a CSC matrix.
pub fn csc_bilinear(a: &CscMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (j, col) in a.col_iter().enumerate() {
        let yj = y[j];
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            acc += x[i] * v * yj;
        }
    }
    acc
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending order.
pub fn sym_eig_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(a)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Solves `A x = λ B x` for symmetric `A` and SPD `B`.
///
/// Eigenvalues come back ascending; eigenvectors are `B`-orthonormal.
pub fn sym_gen_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let chol = cholesky(b, "generalized eigenproblem mass matrix")?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::NotPositiveDefinite("generalized eigenproblem".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("generalized eigenproblem".into()))?;
    let (values, y) = sym_eig_sorted(&c);
    let x = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::NotPositiveDefinite("generalized eigenproblem".into()))?;
    Ok((values, x))
}

/// Singular values (descending) and the full set of right singular vectors of `e`.
///
/// Wide matrices are padded with zero rows so the null space is always spanned
/// by the trailing columns of the returned `V`.
pub fn right_singular(e: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let cols = e.ncols();
    if cols == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let padded;
    let work = if e.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (e.nrows(), cols)).copy_from(e);
        padded = p;
        &padded
    } else {
        e
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = DVector::from_iterator(cols, order.iter().map(|&i| svd.singular_values[i]));
    let mut v = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_t.row(src).transpose());
    }
    (values, v)
}

/// Selects `rows` of a dense matrix in the given order.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.set_row(dst, &a.row(src));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generalized_eigenvectors_are_b_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.5, 0.1, 0.0, 0.1, 1.0]);
        let (vals, vecs) = sym_gen_eig(&a, &b).unwrap();
        let gram = vecs.transpose() * &b * &vecs;
        assert_relative_eq!(gram, DMatrix::identity(3, 3), epsilon = 1e-12);
        for i in 0..3 {
            let r = &a * vecs.column(i) - &b * vecs.column(i) * vals[i];
            assert!(r.norm() < 1e-12);
        }
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
    }

    #[test]
    fn right_singular_handles_wide_input() {
        let e = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]);
        let (s, v) = right_singular(&e);
        assert_relative_eq!(s[0], 3.0, epsilon = 1e-14);
        assert!(s[1].abs() < 1e-14 && s[2].abs() < 1e-14);
        let null = &e * v.columns(1, 2);
        assert!(null.norm() < 1e-14);
    }

    #[test]
    fn sparse_cholesky_forward_and_transpose() {
        let dense = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let csc = CscMatrix::from(&dense);
        let f = SparseCholesky::factor(&csc, "test").unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        // ‖Lᵀx‖² = xᵀAx
        let ltx = f.lt_mul(&x);
        let quad = (x.transpose() * &dense * &x)[(0, 0)];
        assert_relative_eq!(ltx.norm_squared(), quad, epsilon = 1e-12);
        // ‖L⁻¹b‖² = bᵀA⁻¹b
        let w = f.forward(&x);
        let ainv_b = f.solve(&x);
        assert_relative_eq!(w.norm_squared(), (x.transpose() * ainv_b)[(0, 0)], epsilon = 1e-12);
    }
}

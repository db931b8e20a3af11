//! Dense validation oracle, enabled for small parameter counts: builds the
//! operator's matrix column by column, then uses a direct symmetric
//! eigensolver and direct shifted solves to check the matrix-free paths.

use nalgebra::{DMatrix, DVector};

use super::{CurvatureError, LinearOp};

pub const DENSE_LIMIT: usize = 2000;

/// Materializes A by applying it to the basis vectors.
pub fn build_dense(op: &impl LinearOp) -> Result<DMatrix<f64>, CurvatureError> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(CurvatureError::TooLargeForDense { dim: n, limit: DENSE_LIMIT });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col)?;
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

/// Eigenvalues and eigenvectors of a symmetric matrix, |λ| descending.
pub fn dense_eigen_by_magnitude(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    // symmetrize to scrub accumulation noise from the column builds
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].abs().partial_cmp(&eig.eigenvalues[a].abs()).unwrap()
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Direct solve of (A + εI) z = rhs.
pub fn dense_solve_shifted(m: &DMatrix<f64>, eps: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.nrows();
    let shifted = m + DMatrix::identity(n, n) * eps;
    let lu = shifted.lu();
    lu.solve(&DVector::from_column_slice(rhs)).map(|v| v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::DiagOp;
    use super::*;

    #[test]
    fn dense_build_recovers_the_matrix() {
        let op = DiagOp(vec![3.0, -1.0, 0.5]);
        let m = build_dense(&op).unwrap();
        assert_eq!(m[(0, 0)], 3.0);
        assert_eq!(m[(1, 1)], -1.0);
        assert_eq!(m[(2, 2)], 0.5);
        assert_eq!(m[(0, 1)], 0.0);
        let (vals, _) = dense_eigen_by_magnitude(&m);
        assert_eq!(vals[0], 3.0);
        assert_eq!(vals[1], -1.0);
    }

    #[test]
    fn shifted_solve_matches_algebra() {
        let op = DiagOp(vec![3.0]);
        let m = build_dense(&op).unwrap();
        let z = dense_solve_shifted(&m, 1.0, &[8.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
    }
}

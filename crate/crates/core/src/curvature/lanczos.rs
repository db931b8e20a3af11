//! Lanczos iteration with full reorthogonalization for the top-k eigenpairs
//! (by absolute magnitude) of a symmetric operator.
//!
//! Full reorthogonalization is cheap at these dimensions and removes ghost
//! eigenvalues outright. Breakdown (β → 0) is handled by continuing from a
//! fresh random direction orthogonal to the current basis, which leaves the
//! projected matrix block-tridiagonal and the Ritz pairs valid.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CurvatureError, LinearOp};
use crate::linalg::{axpy, dot, norm2, scale};

#[derive(Clone, Copy, Debug)]
pub struct LanczosConfig {
    /// Number of eigenpairs to return.
    pub k: usize,
    /// Krylov basis budget.
    pub max_iters: usize,
    /// Relative residual target: converged means ‖Hq − λq‖ ≤ tol·|λ|.
    pub tol: f64,
}

/// Ritz approximations to the extremal eigenpairs, |λ| descending.
#[derive(Clone, Debug)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    /// False when the iteration budget ran out first (partial result).
    pub converged: bool,
    pub iterations: usize,
}

impl EigenSpectrum {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Signed sum of the leading `k` Ritz values.
    pub fn value_sum(&self, k: usize) -> f64 {
        self.values.iter().take(k).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.first().map(|v| v.abs()).unwrap_or(0.0)
    }
}

const BREAKDOWN_TOL: f64 = 1e-13;

pub fn lanczos_topk<R: Rng>(
    op: &impl LinearOp,
    cfg: &LanczosConfig,
    rng: &mut R,
) -> Result<EigenSpectrum, CurvatureError> {
    let n = op.dim();
    let k = cfg.k.min(n);
    let m_max = cfg.max_iters.clamp(k, n);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alphas: Vec<f64> = Vec::with_capacity(m_max);
    let mut betas: Vec<f64> = Vec::with_capacity(m_max);

    let mut v = random_unit(n, rng);
    let mut w = vec![0.0; n];
    let mut exhausted = false;
    let check_interval = k.max(8);

    loop {
        basis.push(v.clone());
        op.apply(&v, &mut w)?;
        let alpha = dot(&v, &w);
        alphas.push(alpha);
        // two-pass reorthogonalization against the whole basis
        for _ in 0..2 {
            for u in &basis {
                let c = dot(u, &w);
                axpy(-c, u, &mut w);
            }
        }
        let beta = norm2(&w);
        let scale_ref = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
        if beta > BREAKDOWN_TOL * scale_ref {
            betas.push(beta);
            v = w.clone();
            scale(1.0 / beta, &mut v);
        } else {
            // invariant subspace found: restart from a fresh direction
            betas.push(0.0);
            match fresh_direction(n, &basis, rng) {
                Some(fresh) => v = fresh,
                None => exhausted = true,
            }
        }

        let m = basis.len();
        let budget_done = m >= m_max || exhausted;
        if budget_done || m % check_interval == 0 {
            if converged_by_bound(&alphas, &betas, k, cfg.tol) || budget_done {
                let mut spectrum = assemble(op, &basis, &alphas, &betas, k)?;
                spectrum.iterations = m;
                let tiny = spectrum.max_abs().max(1.0) * 1e-12;
                spectrum.converged = spectrum
                    .values
                    .iter()
                    .zip(&spectrum.residual_norms)
                    .all(|(val, res)| *res <= cfg.tol * val.abs().max(tiny));
                if spectrum.converged || budget_done {
                    return Ok(spectrum);
                }
            }
        }
    }
}

fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> =
        (0..n).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect();
    let nrm = norm2(&v);
    scale(1.0 / nrm, &mut v);
    v
}

fn fresh_direction<R: Rng>(n: usize, basis: &[Vec<f64>], rng: &mut R) -> Option<Vec<f64>> {
    if basis.len() >= n {
        return None;
    }
    for _ in 0..8 {
        let mut v = random_unit(n, rng);
        for _ in 0..2 {
            for u in basis {
                let c = dot(u, &v);
                axpy(-c, u, &mut v);
            }
        }
        let nrm = norm2(&v);
        if nrm > 1e-8 {
            scale(1.0 / nrm, &mut v);
            return Some(v);
        }
    }
    None
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else if i == j + 1 {
            betas[j]
        } else {
            0.0
        }
    })
}

/// Cheap convergence test from the classic residual bound
/// ‖Hq_j − θ_j q_j‖ = |β_m · y_{m,j}|.
fn converged_by_bound(alphas: &[f64], betas: &[f64], k: usize, tol: f64) -> bool {
    let m = alphas.len();
    if m < k {
        return false;
    }
    let eig = SymmetricEigen::new(tridiagonal(alphas, betas));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].abs().partial_cmp(&eig.eigenvalues[a].abs()).unwrap()
    });
    let beta_last = betas[m - 1];
    let tiny = order.first().map(|&i| eig.eigenvalues[i].abs()).unwrap_or(0.0).max(1.0) * 1e-12;
    order.iter().take(k).all(|&j| {
        let theta = eig.eigenvalues[j];
        let bound = (beta_last * eig.eigenvectors[(m - 1, j)]).abs();
        bound <= tol * theta.abs().max(tiny)
    })
}

fn assemble(
    op: &impl LinearOp,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    k: usize,
) -> Result<EigenSpectrum, CurvatureError> {
    let n = basis[0].len();
    let m = basis.len();
    let eig = SymmetricEigen::new(tridiagonal(alphas, betas));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].abs().partial_cmp(&eig.eigenvalues[a].abs()).unwrap()
    });
    let k = k.min(m);
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut residual_norms = Vec::with_capacity(k);
    let mut hq = vec![0.0; n];
    for &j in order.iter().take(k) {
        let theta = eig.eigenvalues[j];
        let mut q = vec![0.0; n];
        for (i, u) in basis.iter().enumerate() {
            axpy(eig.eigenvectors[(i, j)], u, &mut q);
        }
        let qn = norm2(&q);
        scale(1.0 / qn, &mut q);
        op.apply(&q, &mut hq)?;
        axpy(-theta, &q, &mut hq);
        values.push(theta);
        residual_norms.push(norm2(&hq));
        vectors.push(q);
    }
    Ok(EigenSpectrum { values, vectors, residual_norms, converged: false, iterations: m })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::DiagOp;
    use super::*;
    use crate::seeds::{rng_for, Stream};
    use approx::assert_relative_eq;

    fn cfg(k: usize) -> LanczosConfig {
        LanczosConfig { k, max_iters: 200, tol: 1e-10 }
    }

    #[test]
    fn diagonal_operator_top2() {
        let op = DiagOp(vec![10.0, 5.0, 1.0, 0.5, 0.1]);
        let mut rng = rng_for(1, Stream::Analysis);
        let spec = lanczos_topk(&op, &cfg(2), &mut rng).unwrap();
        assert!(spec.converged);
        assert_relative_eq!(spec.values[0], 10.0, max_relative = 1e-9);
        assert_relative_eq!(spec.values[1], 5.0, max_relative = 1e-9);
        // eigenvectors are coordinate axes
        assert_relative_eq!(spec.vectors[0][0].abs(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(spec.vectors[1][1].abs(), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn magnitude_ordering_sees_negative_eigenvalues() {
        let op = DiagOp(vec![-8.0, 3.0, 2.0, -1.0]);
        let mut rng = rng_for(2, Stream::Analysis);
        let spec = lanczos_topk(&op, &cfg(2), &mut rng).unwrap();
        assert_relative_eq!(spec.values[0], -8.0, max_relative = 1e-9);
        assert_relative_eq!(spec.values[1], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn scaled_identity_yields_repeated_ritz_values() {
        let op = DiagOp(vec![2.5; 6]);
        let mut rng = rng_for(3, Stream::Analysis);
        let spec = lanczos_topk(&op, &cfg(3), &mut rng).unwrap();
        assert_eq!(spec.k(), 3);
        for v in &spec.values {
            assert_relative_eq!(*v, 2.5, max_relative = 1e-10);
        }
        for r in &spec.residual_norms {
            assert!(*r < 1e-9);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let op = DiagOp((1..=30).map(|i| i as f64 / 3.0).collect());
        let mut rng = rng_for(4, Stream::Analysis);
        let spec = lanczos_topk(&op, &cfg(6), &mut rng).unwrap();
        for i in 0..spec.k() {
            assert!((norm2(&spec.vectors[i]) - 1.0).abs() < 1e-10);
            for j in 0..i {
                assert!(dot(&spec.vectors[i], &spec.vectors[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ritz_values_are_start_invariant() {
        let op = DiagOp(vec![9.0, 7.5, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1]);
        let a = lanczos_topk(&op, &cfg(4), &mut rng_for(10, Stream::Analysis)).unwrap();
        let b = lanczos_topk(&op, &cfg(4), &mut rng_for(11, Stream::Analysis)).unwrap();
        for i in 0..4 {
            assert_relative_eq!(a.values[i], b.values[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn partial_result_is_flagged_when_budget_is_tiny() {
        // 2 iterations cannot resolve 4 pairs of a 40-dim spread spectrum.
        let op = DiagOp((1..=40).map(|i| (i as f64).powi(2)).collect());
        let mut rng = rng_for(12, Stream::Analysis);
        let spec =
            lanczos_topk(&op, &LanczosConfig { k: 4, max_iters: 5, tol: 1e-12 }, &mut rng)
                .unwrap();
        assert!(!spec.converged);
        assert_eq!(spec.iterations, 5);
    }
}

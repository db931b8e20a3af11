//! Conjugate gradients on the Tikhonov-shifted operator (H + εI).

use super::{CurvatureError, LinearOp};
use crate::linalg::{axpy, dot, norm2};

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves (H + εI)z = rhs to ‖(H+εI)z − rhs‖ ≤ tol·‖rhs‖, verified by a
/// direct multiplication before returning. A non-positive pᵀAp aborts with
/// [`CurvatureError::Indefinite`].
pub fn cg_solve(
    op: &impl LinearOp,
    eps: f64,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome, CurvatureError> {
    let n = op.dim();
    debug_assert_eq!(rhs.len(), n);
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(CgOutcome { z: vec![0.0; n], iterations: 0, rel_residual: 0.0 });
    }
    let shifted = |op: &dyn LinearOp, v: &[f64], out: &mut [f64]| -> Result<(), CurvatureError> {
        op.apply(v, out)?;
        axpy(eps, v, out);
        Ok(())
    };

    let mut z = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = tol * b_norm;

    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        shifted(op, &p, &mut ap)?;
        let p_ap = dot(&p, &ap);
        if p_ap <= 0.0 {
            return Err(CurvatureError::Indefinite { p_ap });
        }
        let alpha = rr / p_ap;
        axpy(alpha, &p, &mut z);
        if iterations % 50 == 0 {
            // refresh the residual from scratch to cap recurrence drift
            shifted(op, &z, &mut ap)?;
            for i in 0..n {
                r[i] = rhs[i] - ap[i];
            }
        } else {
            axpy(-alpha, &ap, &mut r);
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            // verify the contract with a true residual
            shifted(op, &z, &mut ap)?;
            let mut true_r2 = 0.0;
            for i in 0..n {
                let d = rhs[i] - ap[i];
                true_r2 += d * d;
            }
            let true_norm = true_r2.sqrt();
            if true_norm <= target {
                return Ok(CgOutcome { z, iterations, rel_residual: true_norm / b_norm });
            }
            for i in 0..n {
                r[i] = rhs[i] - ap[i];
            }
            let rr_true = dot(&r, &r);
            let beta = rr_true / rr;
            rr = rr_true;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            continue;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    shifted(op, &z, &mut ap)?;
    let mut true_r2 = 0.0;
    for i in 0..n {
        let d = rhs[i] - ap[i];
        true_r2 += d * d;
    }
    let rel = true_r2.sqrt() / b_norm;
    if rel <= tol {
        return Ok(CgOutcome { z, iterations, rel_residual: rel });
    }
    Err(CurvatureError::CgNotConverged { iterations, rel_residual: rel })
}

//! Adaptive Dormand–Prince RK45 with cubic-Hermite dense output, for the
//! two-dimensional first-order systems used here.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(
        "step size underflow at t={t:.6e} (h={h:.3e}); the problem is too stiff for an \
         explicit method at this tolerance — shorten the span or relax the controls"
    )]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted after {0} steps")]
    TooManySteps(usize),
}

/// Accepted steps (t, y, f) with cubic Hermite interpolation in between.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    ts: Vec<f64>,
    ys: Vec<[f64; 2]>,
    fs: Vec<[f64; 2]>,
}

impl DenseSolution {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.ts.len() - 1
    }

    /// Interpolated state at `t` (clamped to the integration span).
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let t = t.clamp(self.ts[0], *self.ts.last().unwrap());
        let idx = match self.ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.ys[i],
            Err(i) => i.clamp(1, self.ts.len() - 1) - 1,
        };
        let h = self.ts[idx + 1] - self.ts[idx];
        let s = (t - self.ts[idx]) / h;
        let (y0, y1) = (self.ys[idx], self.ys[idx + 1]);
        let (f0, f1) = (self.fs[idx], self.fs[idx + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
        }
        out
    }
}

const MAX_STEPS: usize = 4_000_000;

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order weights equal the last A row (FSAL); these are the embedded
// 4th-order weights for the error estimate.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate y' = f(t, y) over [t0, t1] with per-step local error below
/// atol + rtol·|y|.
pub fn integrate<F: Fn(f64, &[f64; 2]) -> [f64; 2]>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; 2],
    rtol: f64,
    atol: f64,
) -> Result<DenseSolution, OdeError> {
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = (span * 1e-4).min(span);
    let mut out = DenseSolution { ts: vec![t0], ys: vec![y0], fs: vec![k1] };

    let mut steps = 0;
    while t < t1 {
        if steps >= MAX_STEPS {
            return Err(OdeError::TooManySteps(steps));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }
        if h <= f64::EPSILON * 16.0 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }

        let mut k = [[0.0; 2]; 7];
        k[0] = k1;
        for s in 0..6 {
            let mut ys = y;
            for j in 0..=s {
                for i in 0..2 {
                    ys[i] += h * A[s][j] * k[j][i];
                }
            }
            k[s + 1] = f(t + C[s] * h, &ys);
        }
        // 5th-order solution (A row 6 doubles as b) and embedded error.
        let mut y5 = y;
        for j in 0..6 {
            for i in 0..2 {
                y5[i] += h * A[5][j] * k[j][i];
            }
        }
        let mut err = [0.0; 2];
        for i in 0..2 {
            let mut e5 = y[i];
            for j in 0..7 {
                e5 += h * B4[j] * k[j][i];
            }
            err[i] = y5[i] - e5;
        }
        let mut err_norm = 0.0;
        for i in 0..2 {
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            let e = err[i] / sc;
            err_norm += e * e;
        }
        err_norm = (err_norm / 2.0).sqrt();

        // Error-per-unit-step acceptance: the accumulated error then scales
        // with tol·span instead of tol·steps.
        let ratio = err_norm / h;
        if ratio <= 1.0 {
            t += h;
            y = y5;
            k1 = k[6]; // FSAL: k7 = f(t+h, y5)
            out.ts.push(t);
            out.ys.push(y);
            out.fs.push(k1);
        }
        let fac = if ratio == 0.0 { 5.0 } else { 0.9 * ratio.powf(-0.25) };
        h *= fac.clamp(0.2, 5.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_harmonic_oscillator_exactly_enough() {
        // y'' = -y, y(0)=2, y'(0)=0 → y = 2cos(t)
        let sol =
            integrate(|_, y| [y[1], -y[0]], 0.0, 7.0, [2.0, 0.0], 1e-12, 1e-12).unwrap();
        for i in 0..=70 {
            let t = i as f64 * 0.1;
            let y = sol.eval(t);
            assert_relative_eq!(y[0], 2.0 * t.cos(), epsilon = 1e-8);
            assert_relative_eq!(y[1], -2.0 * t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn dense_output_hits_stored_nodes_exactly() {
        let sol =
            integrate(|_, y| [y[1], -y[0]], 0.0, 3.0, [1.0, 0.0], 1e-9, 1e-9).unwrap();
        for i in 0..sol.ts.len() {
            assert_eq!(sol.eval(sol.ts[i]), sol.ys[i]);
        }
    }

    #[test]
    fn underflow_is_reported_for_absurd_tolerance() {
        // An extremely stiff system at an extreme tolerance drives h below
        // the representable floor.
        let res = integrate(
            |_, y| [y[1], -1e18 * y[0] - 1e18 * y[1]],
            0.0,
            1.0,
            [1.0, 1.0],
            1e-14,
            1e-14,
        );
        assert!(matches!(
            res,
            Err(OdeError::StepSizeUnderflow { .. }) | Err(OdeError::TooManySteps(_))
        ));
    }
}

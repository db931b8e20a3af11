//! The four constraint-hierarchy diagnostics — spectral contribution,
//! alignment score, variance attribution, condition-number ratio — and
//! their aggregation into one equal-weighted rank per constraint, plus the
//! freeze → spectra → gradients → metrics pipeline that produces them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintSet};
use crate::curvature::{
    cg_solve, estimate_max_abs_eig, estimate_min_abs_eig, jacobian_output,
    lanczos_topk, make_constraint_operator, CurvatureError, EigenSpectrum, KappaEstimate,
    LanczosConfig, LinearOp, OpTarget, OperatorKind,
};
use crate::linalg::{dot, norm2};
use crate::seeds::{rng_for, Stream};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("degenerate total hessian: top-k eigenvalue sum is zero")]
    ZeroDenominator,
    #[error("spectrum has {got} pairs, need {want}")]
    NotEnoughPairs { got: usize, want: usize },
    #[error("variance attribution failed at grid point {x:.6} (index {index}): {source}")]
    Va { x: f64, index: usize, source: CurvatureError },
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error("aggregation needs all four physical constraints, got {0}")]
    IncompleteTable(usize),
}

/// How top-k eigenvalues are summed in SC when the exact Hessian is
/// indefinite: signed (default) or by absolute value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralSumMode {
    Signed,
    Absolute,
}

/// SC_c = Σ_{j≤k} λ_j^(c) / Σ_{j≤k} λ_j, top-k by |λ| on the λ-unweighted
/// constraint spectrum and the total spectrum.
pub fn spectral_contribution(
    spec_c: &EigenSpectrum,
    spec_tot: &EigenSpectrum,
    k: usize,
    mode: SpectralSumMode,
) -> Result<f64, MetricsError> {
    for s in [spec_c, spec_tot] {
        if s.k() < k {
            return Err(MetricsError::NotEnoughPairs { got: s.k(), want: k });
        }
    }
    let sum = |s: &EigenSpectrum| -> f64 {
        match mode {
            SpectralSumMode::Signed => s.values.iter().take(k).sum(),
            SpectralSumMode::Absolute => s.values.iter().take(k).map(|v| v.abs()).sum(),
        }
    };
    let den = sum(spec_tot);
    if den == 0.0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(sum(spec_c) / den)
}

/// AS_c = Σ_j w_j |⟨g_c, q_j⟩| / (‖g_c‖‖q_j‖) with w_j = λ_j / Σ_i λ_i over
/// the total Hessian's top-k pairs. A zero gradient (fully converged
/// constraint) is defined as 0 and flagged.
pub fn alignment_score(g: &[f64], spec_tot: &EigenSpectrum, k: usize) -> (f64, bool) {
    let g_norm = norm2(g);
    if g_norm == 0.0 {
        return (0.0, true);
    }
    let k = k.min(spec_tot.k());
    let lambda_sum: f64 = spec_tot.values.iter().take(k).sum();
    let mut score = 0.0;
    for j in 0..k {
        let q = &spec_tot.vectors[j];
        let w = spec_tot.values[j] / lambda_sum;
        let cos = dot(g, q).abs() / (g_norm * norm2(q));
        score += w * cos;
    }
    (score, false)
}

/// VA_c = (1/|X|) Σ_x J_xᵀ (H_c + εI)⁻¹ J_x with one CG solve per grid
/// point. Solves are independent and run in parallel; the mean is reduced
/// in grid order.
pub fn variance_attribution(
    op: &impl LinearOp,
    eps: f64,
    jac_rows: &[Vec<f64>],
    grid_times: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<f64, MetricsError> {
    let quads: Result<Vec<f64>, MetricsError> = jac_rows
        .par_iter()
        .enumerate()
        .map(|(i, j)| {
            let sol = cg_solve(op, eps, j, tol, max_iters).map_err(|source| MetricsError::Va {
                x: grid_times.get(i).copied().unwrap_or(f64::NAN),
                index: i,
                source,
            })?;
            Ok(dot(j, &sol.z))
        })
        .collect();
    let quads = quads?;
    Ok(quads.iter().sum::<f64>() / quads.len() as f64)
}

/// CNR_c = κ̂(H_c) / κ̂(H_tot) with the shared flooring convention.
pub fn condition_number_ratio(kappa_c: &KappaEstimate, kappa_tot: &KappaEstimate) -> f64 {
    kappa_c.kappa_hat() / kappa_tot.kappa_hat()
}

/// One constraint's diagnostics.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct MetricsRow {
    pub constraint: Constraint,
    pub sc: f64,
    #[serde(rename = "as")]
    pub as_score: f64,
    pub va: f64,
    pub cnr: f64,
    pub rank: f64,
    pub grad_norm: f64,
    /// Set when ‖g_c‖ = 0 and AS was defined as 0.
    pub zero_gradient: bool,
}

/// Per metric, min–max normalize across the four constraints (VA inverted:
/// low VA = high precision = high influence); a metric that is constant
/// across constraints contributes 0.5 to every rank. rank = mean of the
/// four normalized scores.
pub fn aggregate_rank(rows: &mut [MetricsRow]) -> Result<(), MetricsError> {
    if rows.len() != 4 {
        return Err(MetricsError::IncompleteTable(rows.len()));
    }
    let norm = |xs: [f64; 4], invert: bool| -> [f64; 4] {
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return [0.5; 4];
        }
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] =
                if invert { (max - xs[i]) / (max - min) } else { (xs[i] - min) / (max - min) };
        }
        out
    };
    let sc = norm([rows[0].sc, rows[1].sc, rows[2].sc, rows[3].sc], false);
    let asn = norm(
        [rows[0].as_score, rows[1].as_score, rows[2].as_score, rows[3].as_score],
        false,
    );
    let va = norm([rows[0].va, rows[1].va, rows[2].va, rows[3].va], true);
    let cnr = norm([rows[0].cnr, rows[1].cnr, rows[2].cnr, rows[3].cnr], false);
    for i in 0..4 {
        rows[i].rank = (sc[i] + asn[i] + va[i] + cnr[i]) / 4.0;
    }
    Ok(())
}

/// Analysis knobs; all recorded in the output metadata.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AnalysisOptions {
    pub k: usize,
    /// Absolute Tikhonov shift; None uses 1e-6·|λ|_max per operator.
    pub eps: Option<f64>,
    /// Evaluation grid size for variance attribution.
    pub grid_n: usize,
    pub operator_kind: OperatorKind,
    pub lanczos_max_iters: usize,
    pub lanczos_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub sc_mode: SpectralSumMode,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            k: 20,
            eps: None,
            grid_n: 500,
            operator_kind: OperatorKind::ExactHessian,
            lanczos_max_iters: 200,
            lanczos_tol: 1e-8,
            cg_tol: 1e-8,
            cg_max_iters: 5000,
            sc_mode: SpectralSumMode::Signed,
            seed: 0,
        }
    }
}

const EPS_RELATIVE: f64 = 1e-6;
const MIN_EIG_LANCZOS_ITERS: usize = 16;

/// Spectrum, shift, and condition estimate for one operator.
#[derive(Clone, Debug)]
pub struct OperatorSummary {
    pub target: String,
    pub spectrum: EigenSpectrum,
    pub eps: f64,
    pub kappa: KappaEstimate,
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    /// data, pde, ic, bc, prior, total — in that order.
    pub operators: Vec<OperatorSummary>,
    pub rows: Vec<MetricsRow>,
    pub meta: AnalysisMeta,
    /// Per-constraint failures that did not abort the rest.
    pub errors: Vec<(Constraint, String)>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AnalysisMeta {
    pub k: usize,
    pub grid_n: usize,
    pub operator_kind: OperatorKind,
    pub sc_mode: SpectralSumMode,
    pub eps: BTreeMap<String, f64>,
    pub seed: u64,
}

impl AnalysisResult {
    pub fn spectrum(&self, target: &str) -> Option<&OperatorSummary> {
        self.operators.iter().find(|o| o.target == target)
    }

    pub fn row(&self, c: Constraint) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.constraint == c)
    }
}

/// Runs the full constraint-hierarchy analysis at the frozen parameters:
/// per-operator Lanczos spectra, per-constraint gradients, SC/AS/CNR, VA
/// via shifted CG on the analysis grid, and rank aggregation. Individual
/// constraint failures are collected without aborting the others.
pub fn analyze(
    set: &ConstraintSet,
    theta: &[f64],
    opts: &AnalysisOptions,
) -> Result<AnalysisResult, MetricsError> {
    let mut rng = rng_for(opts.seed, Stream::Analysis);
    let lcfg =
        LanczosConfig { k: opts.k, max_iters: opts.lanczos_max_iters, tol: opts.lanczos_tol };

    let targets: Vec<OpTarget> = Constraint::ALL
        .iter()
        .map(|&c| OpTarget::Constraint(c))
        .chain(std::iter::once(OpTarget::Total))
        .collect();

    // Spectra and condition estimates per operator (total last).
    let mut summaries = Vec::with_capacity(targets.len());
    for &target in &targets {
        let op = make_constraint_operator(set, theta, target, opts.operator_kind, 0.0)?;
        let spectrum = lanczos_topk(&op, &lcfg, &mut rng)?;
        let max_abs = if spectrum.k() > 0 {
            spectrum.max_abs()
        } else {
            estimate_max_abs_eig(&op, MIN_EIG_LANCZOS_ITERS, &mut rng)?
        };
        let eps = opts.eps.unwrap_or((EPS_RELATIVE * max_abs).max(1e-12));
        let min_est = estimate_min_abs_eig(
            &op,
            eps,
            opts.cg_tol.max(1e-10),
            opts.cg_max_iters,
            MIN_EIG_LANCZOS_ITERS,
            &mut rng,
        )?;
        summaries.push(OperatorSummary {
            target: target.to_string(),
            spectrum,
            eps,
            kappa: KappaEstimate { max_abs, min_abs_est: min_est, eps },
        });
    }

    let total = summaries.last().expect("total summary").clone();

    // Jacobian rows of the output on the analysis grid.
    let grid_times: Vec<f64> = (0..opts.grid_n)
        .map(|i| {
            set.problem.t_span.0
                + (set.problem.t_span.1 - set.problem.t_span.0) * i as f64
                    / (opts.grid_n - 1).max(1) as f64
        })
        .collect();
    let jac_rows: Result<Vec<Vec<f64>>, CurvatureError> =
        grid_times.par_iter().map(|&x| jacobian_output(set, theta, x)).collect();
    let jac_rows = jac_rows?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (ci, &c) in Constraint::PHYSICAL.iter().enumerate() {
        let summary = &summaries[ci];
        let computed = (|| -> Result<MetricsRow, MetricsError> {
            let sc =
                spectral_contribution(&summary.spectrum, &total.spectrum, opts.k, opts.sc_mode)?;
            let (_, grad) = set.grad(c, theta).map_err(CurvatureError::from)?;
            let grad_norm = norm2(&grad);
            let (as_score, zero_gradient) = alignment_score(&grad, &total.spectrum, opts.k);
            let op = make_constraint_operator(set, theta, OpTarget::Constraint(c),
                opts.operator_kind, summary.eps)?;
            let va = variance_attribution(
                &op,
                summary.eps,
                &jac_rows,
                &grid_times,
                opts.cg_tol,
                opts.cg_max_iters,
            )?;
            let cnr = condition_number_ratio(&summary.kappa, &total.kappa);
            Ok(MetricsRow {
                constraint: c,
                sc,
                as_score,
                va,
                cnr,
                rank: f64::NAN,
                grad_norm,
                zero_gradient,
            })
        })();
        match computed {
            Ok(row) => rows.push(row),
            Err(e) => errors.push((c, e.to_string())),
        }
    }

    if rows.len() == 4 {
        aggregate_rank(&mut rows)?;
    }

    let mut eps_map = BTreeMap::new();
    for s in &summaries {
        eps_map.insert(s.target.clone(), s.eps);
    }
    Ok(AnalysisResult {
        operators: summaries,
        rows,
        meta: AnalysisMeta {
            k: opts.k,
            grid_n: opts.grid_n,
            operator_kind: opts.operator_kind,
            sc_mode: opts.sc_mode,
            eps: eps_map,
            seed: opts.seed,
        },
        errors,
    })
}

/// `constraint,sc,as,va,cnr,rank` rows for the four physical constraints.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("constraint,sc,as,va,cnr,rank\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.constraint, r.sc, r.as_score, r.va, r.cnr, r.rank
        ));
    }
    s
}

/// `constraint,rank_index,eigenvalue,residual_norm` long-format spectra,
/// rank_index 1-based from the largest |λ|.
pub fn spectra_csv(operators: &[OperatorSummary]) -> String {
    let mut s = String::from("constraint,rank_index,eigenvalue,residual_norm\n");
    for o in operators {
        for (i, (v, r)) in o.spectrum.values.iter().zip(&o.spectrum.residual_norms).enumerate() {
            s.push_str(&format!("{},{},{},{}\n", o.target, i + 1, v, r));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic_spectrum(values: Vec<f64>, dim: usize) -> EigenSpectrum {
        // coordinate-axis eigenvectors
        let vectors = (0..values.len())
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                v
            })
            .collect();
        let residual_norms = vec![0.0; values.len()];
        EigenSpectrum { values, vectors, residual_norms, converged: true, iterations: dim }
    }

    #[test]
    fn sc_of_identical_spectra_is_one() {
        let a = synthetic_spectrum(vec![5.0, 2.0, 1.0], 6);
        assert_relative_eq!(
            spectral_contribution(&a, &a, 3, SpectralSumMode::Signed).unwrap(),
            1.0
        );
    }

    #[test]
    fn sc_of_zero_operator_is_zero() {
        let z = synthetic_spectrum(vec![0.0, 0.0], 4);
        let tot = synthetic_spectrum(vec![3.0, 1.0], 4);
        assert_eq!(spectral_contribution(&z, &tot, 2, SpectralSumMode::Signed).unwrap(), 0.0);
    }

    #[test]
    fn sc_rejects_zero_denominator() {
        let z = synthetic_spectrum(vec![0.0], 2);
        assert!(matches!(
            spectral_contribution(&z, &z, 1, SpectralSumMode::Signed),
            Err(MetricsError::ZeroDenominator)
        ));
    }

    #[test]
    fn alignment_is_one_for_parallel_gradient() {
        let spec = synthetic_spectrum(vec![4.0], 3);
        let g = vec![2.5, 0.0, 0.0];
        let (a, flag) = alignment_score(&g, &spec, 1);
        assert_relative_eq!(a, 1.0, max_relative = 1e-14);
        assert!(!flag);
    }

    #[test]
    fn alignment_is_zero_for_orthogonal_gradient() {
        let spec = synthetic_spectrum(vec![4.0, 2.0], 4);
        let g = vec![0.0, 0.0, 1.0, -2.0];
        let (a, _) = alignment_score(&g, &spec, 2);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn alignment_flags_zero_gradient() {
        let spec = synthetic_spectrum(vec![4.0], 2);
        let (a, flag) = alignment_score(&[0.0, 0.0], &spec, 1);
        assert_eq!(a, 0.0);
        assert!(flag);
    }

    #[test]
    fn alignment_matches_direct_formula() {
        // independent straight-loop evaluation of the same definition
        use rand::Rng;
        let mut rng = rng_for(15, Stream::Analysis);
        let dim = 10;
        let vals = vec![5.0, 3.0, 1.5, 0.5];
        // random orthonormal-ish basis via Gram-Schmidt on random vectors
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for _ in 0..4 {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            for u in &vectors {
                let c = dot(u, &v);
                for i in 0..dim {
                    v[i] -= c * u[i];
                }
            }
            let n = norm2(&v);
            v.iter_mut().for_each(|x| *x /= n);
            vectors.push(v);
        }
        let spec = EigenSpectrum {
            values: vals.clone(),
            vectors: vectors.clone(),
            residual_norms: vec![0.0; 4],
            converged: true,
            iterations: dim,
        };
        let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, _) = alignment_score(&g, &spec, 4);

        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wsum: f64 = vals.iter().sum();
        let mut direct = 0.0;
        for j in 0..4 {
            let mut ip = 0.0;
            let mut qn = 0.0;
            for i in 0..dim {
                ip += g[i] * vectors[j][i];
                qn += vectors[j][i] * vectors[j][i];
            }
            direct += (vals[j] / wsum) * ip.abs() / (gnorm * qn.sqrt());
        }
        assert_relative_eq!(a, direct, epsilon = 1e-12);
    }

    #[test]
    fn alignment_is_invariant_under_gradient_rescaling() {
        let spec = synthetic_spectrum(vec![4.0, 1.0], 5);
        let g = vec![0.3, -0.7, 0.1, 0.0, 0.9];
        let (a1, _) = alignment_score(&g, &spec, 2);
        let scaled: Vec<f64> = g.iter().map(|x| 137.5 * x).collect();
        let (a2, _) = alignment_score(&scaled, &spec, 2);
        assert_relative_eq!(a1, a2, epsilon = 1e-12);
    }

    #[test]
    fn va_reduces_to_mean_jacobian_norm_for_trivial_operators() {
        use crate::curvature::test_support::DiagOp;
        let rows = vec![vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0]];
        let times = vec![0.0, 1.0];
        let mean_sq =
            rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / 2.0;
        // H = 0, eps = 1
        let zero = DiagOp(vec![0.0; 3]);
        let va = variance_attribution(&zero, 1.0, &rows, &times, 1e-12, 100).unwrap();
        assert_relative_eq!(va, mean_sq, max_relative = 1e-10);
        // H = I, eps = 0
        let ident = DiagOp(vec![1.0; 3]);
        let va = variance_attribution(&ident, 0.0, &rows, &times, 1e-12, 100).unwrap();
        assert_relative_eq!(va, mean_sq, max_relative = 1e-10);
    }

    #[test]
    fn va_shrinks_as_eps_grows_on_psd_operators() {
        use crate::curvature::test_support::DiagOp;
        let op = DiagOp(vec![2.0, 0.5, 0.0, 1.0]);
        let rows = vec![vec![0.5, -1.0, 0.3, 0.8], vec![1.0, 0.2, -0.4, 0.0]];
        let times = vec![0.0, 1.0];
        let va1 = variance_attribution(&op, 1e-3, &rows, &times, 1e-12, 200).unwrap();
        let va2 = variance_attribution(&op, 1e-1, &rows, &times, 1e-12, 200).unwrap();
        assert!(va2 <= va1, "va({:.3e}) ≤ va({:.3e}) violated: {va2} vs {va1}", 1e-1, 1e-3);
    }

    #[test]
    fn cnr_compares_condition_numbers() {
        // identical estimates → 1
        let a = KappaEstimate { max_abs: 8.0, min_abs_est: 0.5, eps: 1e-6 };
        assert_relative_eq!(condition_number_ratio(&a, &a), 1.0);
        // κ̂ = 1 vs κ̂ = 100 → 0.01
        let id = KappaEstimate { max_abs: 1.0, min_abs_est: 1.0, eps: 1e-6 };
        let tot = KappaEstimate { max_abs: 100.0, min_abs_est: 1.0, eps: 1e-6 };
        assert_relative_eq!(condition_number_ratio(&id, &tot), 0.01);
    }

    fn row(c: Constraint, sc: f64, as_score: f64, va: f64, cnr: f64) -> MetricsRow {
        MetricsRow {
            constraint: c,
            sc,
            as_score,
            va,
            cnr,
            rank: f64::NAN,
            grad_norm: 1.0,
            zero_gradient: false,
        }
    }

    #[test]
    fn dominant_constraint_ranks_one() {
        let mut rows = [
            row(Constraint::Data, 0.9, 0.8, 0.1, 10.0),
            row(Constraint::Pde, 0.2, 0.3, 0.5, 2.0),
            row(Constraint::Ic, 0.1, 0.2, 0.9, 1.0),
            row(Constraint::Bc, 0.3, 0.4, 0.4, 3.0),
        ];
        aggregate_rank(&mut rows).unwrap();
        assert_relative_eq!(rows[0].rank, 1.0);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.rank));
        }
    }

    #[test]
    fn identical_constraints_tie() {
        let mut rows = [
            row(Constraint::Data, 0.5, 0.5, 0.2, 4.0),
            row(Constraint::Pde, 0.5, 0.5, 0.2, 4.0),
            row(Constraint::Ic, 0.1, 0.9, 0.8, 1.0),
            row(Constraint::Bc, 0.9, 0.1, 0.1, 9.0),
        ];
        aggregate_rank(&mut rows).unwrap();
        assert_eq!(rows[0].rank, rows[1].rank);
    }

    #[test]
    fn constant_metric_contributes_half() {
        let mut rows = [
            row(Constraint::Data, 0.5, 0.8, 3.0, 7.0),
            row(Constraint::Pde, 0.5, 0.6, 2.0, 5.0),
            row(Constraint::Ic, 0.5, 0.4, 1.0, 3.0),
            row(Constraint::Bc, 0.5, 0.2, 0.5, 1.0),
        ];
        aggregate_rank(&mut rows).unwrap();
        // data is max in as/cnr (→1,1), min in va after inversion (→0), sc constant (→0.5)
        assert_relative_eq!(rows[0].rank, (0.5 + 1.0 + 0.0 + 1.0) / 4.0);
    }

    #[test]
    fn aggregation_matches_hand_normalized_table() {
        // normalized by hand: sc (0,1/3,2/3,1), as (1,2/3,1/3,0),
        // va inverted (1,2/3,1/3,0), cnr (0,1/3,2/3,1)
        let mut rows = [
            row(Constraint::Data, 0.1, 0.9, 1.0, 1.0),
            row(Constraint::Pde, 0.2, 0.8, 2.0, 2.0),
            row(Constraint::Ic, 0.3, 0.7, 3.0, 3.0),
            row(Constraint::Bc, 0.4, 0.6, 4.0, 4.0),
        ];
        aggregate_rank(&mut rows).unwrap();
        let expect = [
            (0.0 + 1.0 + 1.0 + 0.0) / 4.0,
            (1.0 / 3.0 + 2.0 / 3.0 + 2.0 / 3.0 + 1.0 / 3.0) / 4.0,
            (2.0 / 3.0 + 1.0 / 3.0 + 1.0 / 3.0 + 2.0 / 3.0) / 4.0,
            (1.0 + 0.0 + 0.0 + 1.0) / 4.0,
        ];
        for i in 0..4 {
            assert_relative_eq!(rows[i].rank, expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn aggregation_is_permutation_equivariant() {
        let base = [
            row(Constraint::Data, 0.1, 0.9, 1.0, 4.0),
            row(Constraint::Pde, 0.7, 0.2, 3.0, 2.0),
            row(Constraint::Ic, 0.4, 0.5, 2.0, 8.0),
            row(Constraint::Bc, 0.2, 0.8, 0.5, 1.0),
        ];
        let mut a = base;
        aggregate_rank(&mut a).unwrap();
        let mut b = [base[2], base[0], base[3], base[1]];
        aggregate_rank(&mut b).unwrap();
        assert_eq!(a[0].rank, b[1].rank);
        assert_eq!(a[2].rank, b[0].rank);
        assert_eq!(a[3].rank, b[2].rank);
        assert_eq!(a[1].rank, b[3].rank);
    }
}

//! Van der Pol problem definition: the physical loss terms, the reference
//! solution, and training-data generation.

pub mod ode;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use ode::{DenseSolution, OdeError};

use crate::diffengine::{Ctx, Raw};
use crate::model::{net_jet, net_value, Architecture, InputNorm};

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// u'' − μ(1−u²)u' + u = 0 on t ∈ [0, 7] with u(0)=2, u'(0)=0, plus the
/// endpoint anchor used by the BC loss term.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VdpProblem {
    pub mu: f64,
    pub t_span: (f64, f64),
    pub u0: f64,
    pub du0: f64,
    pub bc_time: f64,
    pub bc_value: f64,
}

impl VdpProblem {
    pub fn new(mu: f64) -> Self {
        VdpProblem { mu, t_span: (0.0, 7.0), u0: 2.0, du0: 0.0, bc_time: 7.0, bc_value: 1.6978 }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.mu > 0.0) {
            return Err(PhysicsError::Invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.t_span.0 < self.t_span.1) {
            return Err(PhysicsError::Invalid("t_span must be ordered".into()));
        }
        Ok(())
    }

    pub fn rhs(&self, _t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.mu * (1.0 - y[0] * y[0]) * y[1] - y[0]]
    }
}

/// Adaptive RK45 integration of the first-order system with dense output.
pub fn solve_reference(problem: &VdpProblem, tol: f64) -> Result<DenseSolution, PhysicsError> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(PhysicsError::Invalid("tolerance must be positive".into()));
    }
    // atol two decades under rtol keeps the accumulated global error well
    // inside the per-step tolerance on this oscillatory problem.
    Ok(ode::integrate(
        |t, y| problem.rhs(t, y),
        problem.t_span.0,
        problem.t_span.1,
        [problem.u0, problem.du0],
        tol,
        tol * 1e-2,
    )?)
}

/// Observation set (t, u) with the noise level that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<(f64, f64)>,
    pub noise_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Uniform,
    LatinHypercube,
}

/// n−1 sample times in [t0, t_end) plus the endpoint itself, with Gaussian
/// observation noise on every u value (endpoint included). The u values
/// come from the supplied reference solution.
pub fn generate_dataset<R: Rng>(
    problem: &VdpProblem,
    reference: &DenseSolution,
    n_points: usize,
    noise_sigma: f64,
    placement: Placement,
    rng: &mut R,
) -> Result<Dataset, PhysicsError> {
    if n_points < 2 {
        return Err(PhysicsError::Invalid("need at least 2 data points".into()));
    }
    let (t0, t_end) = problem.t_span;
    let m = n_points - 1;
    let width = (t_end - t0) / m as f64;
    let mut times = Vec::with_capacity(n_points);
    match placement {
        Placement::Uniform => {
            for i in 0..m {
                times.push(t0 + i as f64 * width);
            }
        }
        Placement::LatinHypercube => {
            for i in 0..m {
                let u: f64 = rng.random();
                times.push(t0 + (i as f64 + u) * width);
            }
        }
    }
    times.push(t_end);
    let mut points = Vec::with_capacity(n_points);
    for &t in &times {
        let u = reference.eval(t)[0];
        let noise: f64 = if noise_sigma > 0.0 {
            noise_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        } else {
            0.0
        };
        points.push((t, u + noise));
    }
    Ok(Dataset { points, noise_sigma })
}

impl Dataset {
    pub fn to_csv(&self, path: &Path) -> Result<(), PhysicsError> {
        let mut s = String::from("t,u\n");
        for &(t, u) in &self.points {
            writeln!(s, "{t},{u}").expect("string write");
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn from_csv(path: &Path, noise_sigma: f64) -> Result<Dataset, PhysicsError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,u" => {}
            other => {
                return Err(PhysicsError::Csv(format!("expected header 't,u', got {other:?}")))
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |c: Option<&str>| -> Result<f64, PhysicsError> {
                c.ok_or_else(|| PhysicsError::Csv(format!("line {}: missing column", i + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| PhysicsError::Csv(format!("line {}: {e}", i + 2)))
            };
            let t = parse(cols.next())?;
            let u = parse(cols.next())?;
            points.push((t, u));
        }
        if points.is_empty() {
            return Err(PhysicsError::Empty("dataset"));
        }
        Ok(Dataset { points, noise_sigma })
    }
}

/// Reference solution export on a uniform grid: `t,u,dudt`.
pub fn reference_to_csv(
    reference: &DenseSolution,
    t_span: (f64, f64),
    n: usize,
    path: &Path,
) -> Result<(), PhysicsError> {
    let mut s = String::from("t,u,dudt\n");
    for i in 0..n {
        let t = t_span.0 + (t_span.1 - t_span.0) * i as f64 / (n - 1) as f64;
        let y = reference.eval(t);
        writeln!(s, "{t},{},{}", y[0], y[1]).expect("string write");
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Residual evaluation points, sorted, endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationGrid {
    pub times: Vec<f64>,
}

impl CollocationGrid {
    pub fn uniform(t_span: (f64, f64), n: usize) -> Self {
        let times = (0..n)
            .map(|i| t_span.0 + (t_span.1 - t_span.0) * i as f64 / (n - 1) as f64)
            .collect();
        CollocationGrid { times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// ODE residual u'' − μ(1−u²)u' + u of the network at `t`, under any
/// evaluation context (second-order differentiable w.r.t. parameters).
pub fn residual_ctx<C: Ctx>(
    arch: &Architecture,
    norm: &InputNorm,
    ctx: &mut C,
    params: &[C::V],
    t: f64,
    mu: f64,
) -> C::V {
    let u = net_jet(arch, norm, ctx, params, t);
    let usq = ctx.square(u.v);
    let one = ctx.constant(1.0);
    let om = ctx.sub(one, usq);
    let muc = ctx.constant(mu);
    let damp = ctx.mul(muc, om);
    let damp_du = ctx.mul(damp, u.d1);
    let lhs = ctx.sub(u.d2, damp_du);
    ctx.add(lhs, u.v)
}

/// Plain residual value at a point.
pub fn residual(
    arch: &Architecture,
    norm: &InputNorm,
    params: &[f64],
    t: f64,
    mu: f64,
) -> f64 {
    residual_ctx(arch, norm, &mut Raw, params, t, mu)
}

/// Mean squared data misfit over the dataset.
pub fn loss_data(
    arch: &Architecture,
    norm: &InputNorm,
    params: &[f64],
    dataset: &Dataset,
) -> Result<f64, PhysicsError> {
    if dataset.points.is_empty() {
        return Err(PhysicsError::Empty("dataset"));
    }
    let n = dataset.points.len() as f64;
    Ok(dataset
        .points
        .iter()
        .map(|&(t, u)| {
            let d = net_value(arch, norm, &mut Raw, params, t) - u;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Mean squared ODE residual over the collocation grid.
pub fn loss_pde(
    arch: &Architecture,
    norm: &InputNorm,
    params: &[f64],
    grid: &CollocationGrid,
    mu: f64,
) -> Result<f64, PhysicsError> {
    if grid.is_empty() {
        return Err(PhysicsError::Empty("collocation grid"));
    }
    let n = grid.len() as f64;
    Ok(grid
        .times
        .iter()
        .map(|&t| {
            let r = residual(arch, norm, params, t, mu);
            r * r
        })
        .sum::<f64>()
        / n)
}

/// (u(t₀)−u₀)² + (u'(t₀)−u'₀)², unweighted sum of the two IC residuals.
pub fn loss_ic(
    arch: &Architecture,
    norm: &InputNorm,
    params: &[f64],
    problem: &VdpProblem,
) -> f64 {
    let jet = net_jet(arch, norm, &mut Raw, params, problem.t_span.0);
    let du = jet.v - problem.u0;
    let dv = jet.d1 - problem.du0;
    du * du + dv * dv
}

/// Squared endpoint-anchor misfit (u(t_bc) − u_bc)².
pub fn loss_bc(
    arch: &Architecture,
    norm: &InputNorm,
    params: &[f64],
    problem: &VdpProblem,
) -> f64 {
    let d = net_value(arch, norm, &mut Raw, params, problem.bc_time) - problem.bc_value;
    d * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{rng_for, Stream};
    use approx::assert_relative_eq;

    fn constant_net(c: f64) -> (Architecture, InputNorm, Vec<f64>) {
        let arch = Architecture { hidden_layers: 1, hidden_width: 2 };
        let norm = InputNorm::for_span(7.0);
        let mut params = vec![0.0; arch.param_count()];
        let p = params.len();
        params[p - 1] = c;
        (arch, norm, params)
    }

    #[test]
    fn residual_of_constant_two_is_two() {
        let (arch, norm, params) = constant_net(2.0);
        for &mu in &[0.5, 1.0, 10.0] {
            assert_relative_eq!(residual(&arch, &norm, &params, 3.0, mu), 2.0);
        }
    }

    #[test]
    fn residual_of_zero_net_is_zero() {
        let (arch, norm, params) = constant_net(0.0);
        assert_eq!(residual(&arch, &norm, &params, 1.0, 1.0), 0.0);
    }

    #[test]
    fn residual_of_identity_net_is_algebraic() {
        // u(t)=t, μ=1: r = t² + t − 1; at t=2 → 5
        let arch = Architecture { hidden_layers: 0, hidden_width: 1 };
        let norm = InputNorm::disabled();
        let params = vec![1.0, 0.0];
        assert_relative_eq!(residual(&arch, &norm, &params, 2.0, 1.0), 5.0, epsilon = 1e-13);
    }

    #[test]
    fn residual_is_odd_under_output_sign_flip() {
        // The Van der Pol form is odd in u; negating the output layer
        // negates the residual.
        let arch = Architecture { hidden_layers: 2, hidden_width: 5 };
        let norm = InputNorm::for_span(7.0);
        let mut rng = rng_for(4, Stream::Init);
        let vp = crate::model::VariationalParams::init(&arch, 0.05, &mut rng);
        let theta = crate::model::sample_params(&vp, &mut rng);
        let mut flipped = theta.clone();
        let p = theta.len();
        let w = arch.hidden_width;
        for x in flipped[p - 1 - w..].iter_mut() {
            *x = -*x;
        }
        for &t in &[0.3, 2.0, 5.5] {
            let r = residual(&arch, &norm, &theta, t, 1.0);
            let rf = residual(&arch, &norm, &flipped, t, 1.0);
            assert_relative_eq!(rf, -r, max_relative = 1e-12);
        }
    }

    #[test]
    fn interpolating_net_has_zero_data_loss() {
        let (arch, norm, params) = constant_net(1.5);
        let dataset =
            Dataset { points: vec![(0.0, 1.5), (1.0, 1.5), (2.0, 1.5)], noise_sigma: 0.0 };
        assert_eq!(loss_data(&arch, &norm, &params, &dataset).unwrap(), 0.0);
    }

    #[test]
    fn constant_two_net_satisfies_ic() {
        let (arch, norm, params) = constant_net(2.0);
        assert_eq!(loss_ic(&arch, &norm, &params, &VdpProblem::new(1.0)), 0.0);
    }

    #[test]
    fn zero_net_losses_are_algebraic() {
        let (arch, norm, params) = constant_net(0.0);
        let problem = VdpProblem::new(3.0);
        let grid = CollocationGrid::uniform(problem.t_span, 40);
        assert_eq!(loss_pde(&arch, &norm, &params, &grid, problem.mu).unwrap(), 0.0);
        let bc = loss_bc(&arch, &norm, &params, &problem);
        assert_relative_eq!(bc, 1.6978 * 1.6978, epsilon = 1e-12);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let (arch, norm, params) = constant_net(0.0);
        let empty = Dataset { points: vec![], noise_sigma: 0.0 };
        assert!(loss_data(&arch, &norm, &params, &empty).is_err());
        let grid = CollocationGrid { times: vec![] };
        assert!(loss_pde(&arch, &norm, &params, &grid, 1.0).is_err());
    }

    #[test]
    fn reference_solution_matches_independent_integrator() {
        // Frozen from an independent high-order integrator (DOP853 at
        // rtol 1e-13): u(7) = 1.9201524173698548 for μ=1.
        let sol = solve_reference(&VdpProblem::new(1.0), 1e-10).unwrap();
        assert_relative_eq!(sol.eval(7.0)[0], 1.9201524173698548, epsilon = 1e-7);
        assert_relative_eq!(sol.eval(7.0)[1], -0.43583853312539383, epsilon = 1e-7);
    }

    #[test]
    fn reference_solution_is_self_convergent() {
        let a = solve_reference(&VdpProblem::new(1.0), 1e-8).unwrap();
        let b = solve_reference(&VdpProblem::new(1.0), 1e-10).unwrap();
        let mut sup = 0.0_f64;
        for i in 0..=1000 {
            let t = 7.0 * i as f64 / 1000.0;
            sup = sup.max((a.eval(t)[0] - b.eval(t)[0]).abs());
        }
        assert!(sup < 1e-6, "sup-norm {sup}");
    }

    #[test]
    fn vanishing_mu_recovers_the_harmonic_oscillator() {
        // u(t) → 2cos(t); u(π) = −2 and u² + u'² stays at 4.
        let mut problem = VdpProblem::new(1e-12);
        problem.t_span = (0.0, 7.0);
        let sol = solve_reference(&problem, 1e-12).unwrap();
        assert_relative_eq!(sol.eval(std::f64::consts::PI)[0], -2.0, epsilon = 1e-9);
        for i in 0..=700 {
            let t = 7.0 * i as f64 / 700.0;
            let y = sol.eval(t);
            let energy = y[0] * y[0] + y[1] * y[1];
            assert!((energy - 4.0).abs() < 1e-6, "energy {energy} at t={t}");
        }
    }

    #[test]
    fn noiseless_dataset_lies_on_the_reference() {
        let problem = VdpProblem::new(1.0);
        let reference = solve_reference(&problem, 1e-10).unwrap();
        let mut rng = rng_for(8, Stream::DataNoise);
        let ds =
            generate_dataset(&problem, &reference, 20, 0.0, Placement::Uniform, &mut rng)
                .unwrap();
        assert_eq!(ds.points.len(), 20);
        assert_eq!(ds.points.last().unwrap().0, 7.0);
        for &(t, u) in &ds.points {
            assert_eq!(u, reference.eval(t)[0]);
        }
        // uniform spacing of the first 19 points
        for (i, &(t, _)) in ds.points.iter().take(19).enumerate() {
            assert_relative_eq!(t, 7.0 * i as f64 / 19.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dataset_generation_is_deterministic_under_seed() {
        let problem = VdpProblem::new(1.0);
        let reference = solve_reference(&problem, 1e-9).unwrap();
        let a = generate_dataset(
            &problem,
            &reference,
            20,
            0.05,
            Placement::LatinHypercube,
            &mut rng_for(13, Stream::DataNoise),
        )
        .unwrap();
        let b = generate_dataset(
            &problem,
            &reference,
            20,
            0.05,
            Placement::LatinHypercube,
            &mut rng_for(13, Stream::DataNoise),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_level_matches_requested_sigma() {
        // Sample std of (u_i − u_ref(t_i)) over many regenerations ≈ σ ± 5%.
        let problem = VdpProblem::new(1.0);
        let reference = solve_reference(&problem, 1e-9).unwrap();
        let sigma = 0.05;
        let mut rng = rng_for(5, Stream::DataNoise);
        let mut devs = Vec::new();
        for _ in 0..500 {
            let ds =
                generate_dataset(&problem, &reference, 20, sigma, Placement::Uniform, &mut rng)
                    .unwrap();
            for &(t, u) in &ds.points {
                devs.push(u - reference.eval(t)[0]);
            }
        }
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let var = devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((std - sigma).abs() < 0.05 * sigma, "std {std}");
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let ds = Dataset {
            points: vec![(0.0, 2.0), (3.5, -1.25), (7.0, 1.6978)],
            noise_sigma: 0.05,
        };
        let dir = std::env::temp_dir().join(format!("bpinn-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.csv");
        ds.to_csv(&path).unwrap();
        let back = Dataset::from_csv(&path, 0.05).unwrap();
        assert_eq!(ds, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}

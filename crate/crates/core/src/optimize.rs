//! Projected gradient descent over the coefficient fields under the
//! box/ellipticity constraints, with multi-sample training drivers.
//!
//! The projection is pointwise: advection vectors are rescaled radially into
//! the ball of radius A, diffusion matrices are clamped through a symmetric
//! eigendecomposition into [b, B], and the scalar fields are clamped into
//! their intervals. Line search is backtracking Armijo on the projection
//! arc, so the loss history is non-increasing by construction.

use crate::adjoint::{
    assemble_gradients, directional_derivative, solve_adjoint, GradientFields,
};
use crate::error::{Error, Result};
use crate::grid::{Dim, Grid, WeightFn};
use crate::parabolic::{
    solve_forward, terminal_loss, CoefficientFields, ParabolicProblem, Sigma,
};
use crate::scalar::{cast, Scalar};
use rand::Rng;
use rayon::prelude::*;

/// Bounds of the admissible set: |alpha| <= A, b I <= beta <= B I,
/// |gamma| <= C, |theta| <= D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintBox<S> {
    pub alpha_max: S,
    pub beta_min: S,
    pub beta_max: S,
    pub gamma_max: S,
    pub theta_max: S,
}

impl<S: Scalar> ConstraintBox<S> {
    pub fn new(alpha_max: S, beta_min: S, beta_max: S, gamma_max: S, theta_max: S) -> Result<Self> {
        let pos = alpha_max > S::zero()
            && beta_min > S::zero()
            && beta_max > S::zero()
            && gamma_max > S::zero()
            && theta_max > S::zero();
        if !pos || beta_min > beta_max {
            return Err(Error::invalid(
                "constraint box requires positive bounds with beta_min <= beta_max",
            ));
        }
        Ok(ConstraintBox { alpha_max, beta_min, beta_max, gamma_max, theta_max })
    }
}

#[inline]
fn clamp<S: Scalar>(x: S, lo: S, hi: S) -> S {
    x.max(lo).min(hi)
}

/// Eigenvalue clamp of a symmetric 2x2 matrix [[a, c], [c, b]] into
/// [lo, hi], returned in the same packed order (a, c, b).
fn clamp_sym_2x2<S: Scalar>(a: S, c: S, b: S, lo: S, hi: S) -> (S, S, S) {
    let half = cast::<S>(0.5);
    let mean = (a + b) * half;
    let diff = (a - b) * half;
    let radius = (diff * diff + c * c).sqrt();
    let l1 = mean + radius;
    let l2 = mean - radius;
    let l1c = clamp(l1, lo, hi);
    let l2c = clamp(l2, lo, hi);
    if radius == S::zero() {
        return (l1c, S::zero(), l1c);
    }
    // eigenvector for l1
    let (vx, vy) = {
        let ex = l1 - b;
        let ey = c;
        let n = (ex * ex + ey * ey).sqrt();
        if n == S::zero() {
            (S::zero(), S::one())
        } else {
            (ex / n, ey / n)
        }
    };
    let (wx, wy) = (-vy, vx);
    let a_new = l1c * vx * vx + l2c * wx * wx;
    let c_new = l1c * vx * vy + l2c * wx * wy;
    let b_new = l1c * vy * vy + l2c * wy * wy;
    (a_new, c_new, b_new)
}

/// Pointwise projection of the coefficient fields onto the admissible set.
/// Idempotent and nonexpansive in the pointwise Euclidean/Frobenius metrics.
pub fn project<S: Scalar>(
    coeffs: &CoefficientFields<S>,
    boxc: &ConstraintBox<S>,
    grid: &Grid<S>,
) -> CoefficientFields<S> {
    let n = grid.n_total();
    let mut out = coeffs.clone();
    for level in &mut out.levels {
        match grid.dim() {
            Dim::One => {
                for i in 0..n {
                    let a = level.lin.alpha[i];
                    level.lin.alpha[i] = clamp(a, -boxc.alpha_max, boxc.alpha_max);
                    level.lin.beta[i] = clamp(level.lin.beta[i], boxc.beta_min, boxc.beta_max);
                }
            }
            Dim::Two => {
                for i in 0..n {
                    let a1 = level.lin.alpha[i];
                    let a2 = level.lin.alpha[n + i];
                    let norm = (a1 * a1 + a2 * a2).sqrt();
                    if norm > boxc.alpha_max {
                        let s = boxc.alpha_max / norm;
                        level.lin.alpha[i] = a1 * s;
                        level.lin.alpha[n + i] = a2 * s;
                    }
                    let (b11, b12, b22) = clamp_sym_2x2(
                        level.lin.beta[i],
                        level.lin.beta[n + i],
                        level.lin.beta[2 * n + i],
                        boxc.beta_min,
                        boxc.beta_max,
                    );
                    level.lin.beta[i] = b11;
                    level.lin.beta[n + i] = b12;
                    level.lin.beta[2 * n + i] = b22;
                }
            }
        }
        for g in level.gamma.iter_mut() {
            *g = clamp(*g, -boxc.gamma_max, boxc.gamma_max);
        }
        for t in level.lin.theta.iter_mut() {
            *t = clamp(*t, -boxc.theta_max, boxc.theta_max);
        }
    }
    out
}

/// Interior feasible starting point: beta = (b+B)/2 I, alpha = 0,
/// gamma = min(C, 1), theta = 0.
pub fn default_initialization<S: Scalar>(
    grid: &Grid<S>,
    nt: usize,
    boxc: &ConstraintBox<S>,
) -> CoefficientFields<S> {
    let half = cast::<S>(0.5);
    let beta_mid = (boxc.beta_min + boxc.beta_max) * half;
    let d = grid.dim().as_usize();
    let alpha = vec![S::zero(); d];
    let beta = match grid.dim() {
        Dim::One => vec![beta_mid],
        Dim::Two => vec![beta_mid, S::zero(), beta_mid],
    };
    CoefficientFields::constant(grid, nt, &alpha, &beta, boxc.gamma_max.min(S::one()), S::zero())
}

/// Which fields the optimizer is allowed to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizeFlags {
    pub alpha: bool,
    pub beta: bool,
    pub gamma: bool,
    pub theta: bool,
}

impl Default for OptimizeFlags {
    fn default() -> Self {
        OptimizeFlags { alpha: true, beta: true, gamma: true, theta: true }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig<S> {
    pub max_iters: usize,
    pub step_init: S,
    pub backtrack_factor: S,
    pub loss_tol: S,
    pub grad_tol: S,
    pub armijo_c: S,
    pub flags: OptimizeFlags,
    /// Collapse each field to one value per time level (averaged gradient).
    pub spatially_constant: bool,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            max_iters: 200,
            step_init: cast(1.0),
            backtrack_factor: cast(0.5),
            loss_tol: cast(1e-12),
            grad_tol: cast(1e-9),
            armijo_c: cast(1e-4),
            flags: OptimizeFlags::default(),
            spatially_constant: false,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_init > S::zero()) {
            return Err(Error::invalid("step_init must be positive"));
        }
        if !(self.backtrack_factor > S::zero() && self.backtrack_factor < S::one()) {
            return Err(Error::invalid("backtrack_factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Shared discretization for all samples of a training run.
#[derive(Debug, Clone)]
pub struct TrainSetup<S> {
    pub grid: Grid<S>,
    pub t_final: S,
    pub nt: usize,
    pub sigma: Sigma<S>,
    pub weight: WeightFn<S>,
}

/// One supervised pair.
#[derive(Debug, Clone)]
pub struct TrainSample<S> {
    pub m0: Vec<S>,
    pub m_target: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct IterRecord<S> {
    pub iter: usize,
    pub loss: S,
    pub step: S,
    pub grad_norm: S,
}

#[derive(Debug, Clone)]
pub struct TrainResult<S> {
    pub coeffs: CoefficientFields<S>,
    pub history: Vec<IterRecord<S>>,
    /// Projected-gradient norm at the last iterate.
    pub final_grad_norm: S,
    pub converged: bool,
}

fn problem_for<S: Scalar>(
    setup: &TrainSetup<S>,
    coeffs: &CoefficientFields<S>,
    sample: &TrainSample<S>,
) -> ParabolicProblem<S> {
    ParabolicProblem {
        grid: setup.grid.clone(),
        t_final: setup.t_final,
        nt: setup.nt,
        coeffs: coeffs.clone(),
        sigma: setup.sigma,
        m0: sample.m0.clone(),
        weight: setup.weight,
    }
}

/// Total loss over samples.
pub fn total_loss<S: Scalar>(
    setup: &TrainSetup<S>,
    coeffs: &CoefficientFields<S>,
    samples: &[TrainSample<S>],
) -> Result<S> {
    let losses: Vec<Result<S>> = samples
        .par_iter()
        .map(|s| {
            let p = problem_for(setup, coeffs, s);
            let traj = solve_forward(&p)?;
            terminal_loss(&traj, &s.m_target, &setup.grid)
        })
        .collect();
    let mut acc = S::zero();
    for l in losses {
        acc += l?;
    }
    Ok(acc)
}

/// Summed loss and gradient over samples, masked by the optimizer flags.
pub fn total_gradient<S: Scalar>(
    setup: &TrainSetup<S>,
    coeffs: &CoefficientFields<S>,
    samples: &[TrainSample<S>],
    cfg: &TrainConfig<S>,
) -> Result<(S, GradientFields<S>)> {
    let parts: Vec<Result<(S, GradientFields<S>)>> = samples
        .par_iter()
        .map(|s| {
            let p = problem_for(setup, coeffs, s);
            let traj = solve_forward(&p)?;
            let loss = terminal_loss(&traj, &s.m_target, &setup.grid)?;
            let adj = solve_adjoint(&traj, &p, &s.m_target)?;
            let g = assemble_gradients(&traj, &adj, &p)?;
            Ok((loss, g))
        })
        .collect();
    let mut loss = S::zero();
    let mut grads = GradientFields::zeros(&setup.grid, setup.nt);
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_scaled(&g, S::one());
    }
    mask_gradient(&mut grads, cfg, &setup.grid);
    Ok((loss, grads))
}

fn mask_gradient<S: Scalar>(g: &mut GradientFields<S>, cfg: &TrainConfig<S>, grid: &Grid<S>) {
    let n = grid.n_total();
    for level in &mut g.levels {
        if !cfg.flags.alpha {
            level.alpha.iter_mut().for_each(|v| *v = S::zero());
        }
        if !cfg.flags.beta {
            level.beta.iter_mut().for_each(|v| *v = S::zero());
        }
        if !cfg.flags.gamma {
            level.gamma.iter_mut().for_each(|v| *v = S::zero());
        }
        if !cfg.flags.theta {
            level.theta.iter_mut().for_each(|v| *v = S::zero());
        }
        if cfg.spatially_constant {
            let avg_blocks = |buf: &mut [S]| {
                for chunk in buf.chunks_mut(n) {
                    let mean =
                        chunk.iter().fold(S::zero(), |a, &b| a + b) / cast::<S>(n as f64);
                    chunk.iter_mut().for_each(|v| *v = mean);
                }
            };
            avg_blocks(&mut level.alpha);
            avg_blocks(&mut level.beta);
            avg_blocks(&mut level.gamma);
            avg_blocks(&mut level.theta);
        }
    }
}

fn descend<S: Scalar>(
    coeffs: &CoefficientFields<S>,
    grads: &GradientFields<S>,
    step: S,
) -> CoefficientFields<S> {
    let mut out = coeffs.clone();
    for (level, g) in out.levels.iter_mut().zip(grads.levels.iter()) {
        for (x, d) in level.lin.alpha.iter_mut().zip(&g.alpha) {
            *x -= step * *d;
        }
        for (x, d) in level.lin.beta.iter_mut().zip(&g.beta) {
            *x -= step * *d;
        }
        for (x, d) in level.lin.theta.iter_mut().zip(&g.theta) {
            *x -= step * *d;
        }
        for (x, d) in level.gamma.iter_mut().zip(&g.gamma) {
            *x -= step * *d;
        }
    }
    out
}

/// Difference (a - b) expressed as gradient-shaped fields.
fn coeff_difference<S: Scalar>(
    a: &CoefficientFields<S>,
    b: &CoefficientFields<S>,
    grid: &Grid<S>,
) -> GradientFields<S> {
    let mut out = GradientFields::zeros(grid, a.levels.len());
    for ((la, lb), g) in a.levels.iter().zip(b.levels.iter()).zip(out.levels.iter_mut()) {
        for ((x, y), o) in la.lin.alpha.iter().zip(&lb.lin.alpha).zip(g.alpha.iter_mut()) {
            *o = *x - *y;
        }
        for ((x, y), o) in la.lin.beta.iter().zip(&lb.lin.beta).zip(g.beta.iter_mut()) {
            *o = *x - *y;
        }
        for ((x, y), o) in la.lin.theta.iter().zip(&lb.lin.theta).zip(g.theta.iter_mut()) {
            *o = *x - *y;
        }
        for ((x, y), o) in la.gamma.iter().zip(&lb.gamma).zip(g.gamma.iter_mut()) {
            *o = *x - *y;
        }
    }
    out
}

/// Norm of the projected-gradient map (c - P(c - s g))/s in the discrete
/// dt x cell-volume metric.
pub fn projected_gradient_norm<S: Scalar>(
    setup: &TrainSetup<S>,
    coeffs: &CoefficientFields<S>,
    grads: &GradientFields<S>,
    boxc: &ConstraintBox<S>,
    probe_step: S,
) -> S {
    let trial = project(&descend(coeffs, grads, probe_step), boxc, &setup.grid);
    let diff = coeff_difference(coeffs, &trial, &setup.grid);
    let dt = setup.t_final / cast::<S>(setup.nt as f64);
    (directional_derivative(&diff, &diff, &setup.grid, dt)).sqrt() / probe_step
}

/// Projected gradient descent with Armijo backtracking on the projection
/// arc. Every iterate is feasible; the loss history never increases.
pub fn train<S: Scalar>(
    setup: &TrainSetup<S>,
    samples: &[TrainSample<S>],
    init: &CoefficientFields<S>,
    boxc: &ConstraintBox<S>,
    cfg: &TrainConfig<S>,
) -> Result<TrainResult<S>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("train needs at least one sample"));
    }
    for s in samples {
        if s.m0.len() != setup.grid.n_total() || s.m_target.len() != setup.grid.n_total() {
            return Err(Error::invalid("sample field length mismatch"));
        }
    }
    let dt = setup.t_final / cast::<S>(setup.nt as f64);
    let mut coeffs = project(init, boxc, &setup.grid);
    let (mut loss, mut grads) = total_gradient(setup, &coeffs, samples, cfg)?;
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut step = cfg.step_init;
    let mut converged = false;
    let mut grad_norm = projected_gradient_norm(setup, &coeffs, &grads, boxc, cfg.step_init);
    history.push(IterRecord { iter: 0, loss, step: S::zero(), grad_norm });

    let min_step = cfg.step_init * cast::<S>(1e-14);
    let max_step = cfg.step_init * cast::<S>(1e4);
    for iter in 1..=cfg.max_iters {
        if loss <= cfg.loss_tol || grad_norm <= cfg.grad_tol {
            converged = true;
            break;
        }
        // backtracking on the projection arc
        let mut accepted = false;
        let mut trial_step = step;
        while trial_step >= min_step {
            let trial = project(&descend(&coeffs, &grads, trial_step), boxc, &setup.grid);
            let trial_loss = total_loss(setup, &trial, samples)?;
            let decrease = directional_derivative(
                &grads,
                &coeff_difference(&coeffs, &trial, &setup.grid),
                &setup.grid,
                dt,
            );
            if trial_loss <= loss - cfg.armijo_c * decrease && trial_loss <= loss {
                coeffs = trial;
                accepted = true;
                break;
            }
            trial_step = trial_step * cfg.backtrack_factor;
        }
        if !accepted {
            converged = true;
            break;
        }
        // warm-start the next search slightly above the accepted step
        step = (trial_step / cfg.backtrack_factor).min(max_step);
        let (l2, g2) = total_gradient(setup, &coeffs, samples, cfg)?;
        loss = l2;
        grads = g2;
        grad_norm = projected_gradient_norm(setup, &coeffs, &grads, boxc, cfg.step_init);
        history.push(IterRecord { iter, loss, step: trial_step, grad_norm });
    }
    Ok(TrainResult { coeffs, history, final_grad_norm: grad_norm, converged })
}

/// Random feasible coefficient fields (a free draw pushed through the
/// projection).
pub fn random_feasible<S: Scalar, R: Rng>(
    grid: &Grid<S>,
    nt: usize,
    boxc: &ConstraintBox<S>,
    rng: &mut R,
) -> CoefficientFields<S> {
    let mut coeffs = default_initialization(grid, nt, boxc);
    let a = boxc.alpha_max.to_f64().unwrap_or(1.0);
    let bmax = boxc.beta_max.to_f64().unwrap_or(1.0);
    let c = boxc.gamma_max.to_f64().unwrap_or(1.0);
    let d = boxc.theta_max.to_f64().unwrap_or(1.0);
    for level in &mut coeffs.levels {
        for v in level.lin.alpha.iter_mut() {
            *v = cast::<S>(rng.random_range(-a..a));
        }
        for v in level.lin.beta.iter_mut() {
            *v = cast::<S>(rng.random_range(0.0..bmax));
        }
        for v in level.gamma.iter_mut() {
            *v = cast::<S>(rng.random_range(-c..c));
        }
        for v in level.lin.theta.iter_mut() {
            *v = cast::<S>(rng.random_range(-d..d));
        }
    }
    project(&coeffs, boxc, grid)
}

#[derive(Debug, Clone)]
pub struct SweepRun<S> {
    pub final_loss: S,
    pub iterations: usize,
    pub monotone: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport<S> {
    pub runs: Vec<SweepRun<S>>,
    pub best_loss: S,
    pub worst_loss: S,
}

/// Train from several random feasible initializations and report the spread
/// of reached losses (minimizers need not be unique).
pub fn existence_sweep<S: Scalar, R: Rng>(
    setup: &TrainSetup<S>,
    samples: &[TrainSample<S>],
    n_draws: usize,
    boxc: &ConstraintBox<S>,
    cfg: &TrainConfig<S>,
    rng: &mut R,
) -> Result<SweepReport<S>> {
    if n_draws < 2 {
        return Err(Error::invalid("existence_sweep needs at least 2 draws"));
    }
    let mut runs = Vec::with_capacity(n_draws);
    let mut best = S::infinity();
    let mut worst = S::zero();
    for _ in 0..n_draws {
        let init = random_feasible(&setup.grid, setup.nt, boxc, rng);
        let result = train(setup, samples, &init, boxc, cfg)?;
        let monotone = result
            .history
            .windows(2)
            .all(|w| w[1].loss <= w[0].loss + S::epsilon());
        let final_loss = result.history.last().map(|r| r.loss).unwrap_or(S::infinity());
        best = best.min(final_loss);
        worst = worst.max(final_loss);
        runs.push(SweepRun { final_loss, iterations: result.history.len() - 1, monotone });
    }
    Ok(SweepReport { runs, best_loss: best, worst_loss: worst })
}

/// Pointwise first-order residual for the theta box: zero gradient in the
/// interior, correctly signed gradient at active bounds.
pub fn kkt_residual_theta<S: Scalar>(
    coeffs: &CoefficientFields<S>,
    grads: &GradientFields<S>,
    boxc: &ConstraintBox<S>,
) -> S {
    let margin = cast::<S>(1e-9);
    let mut worst = S::zero();
    for (level, g) in coeffs.levels.iter().zip(grads.levels.iter()) {
        for (&t, &gt) in level.lin.theta.iter().zip(&g.theta) {
            let at_hi = t >= boxc.theta_max - margin;
            let at_lo = t <= -boxc.theta_max + margin;
            let violation = if at_hi {
                gt.max(S::zero())
            } else if at_lo {
                (-gt).max(S::zero())
            } else {
                gt.abs()
            };
            worst = worst.max(violation);
        }
    }
    worst
}

/// Minimum directional derivative toward random admissible targets; at a
/// constrained minimizer this is bounded below by -tolerance.
pub fn variational_inequality_min<S: Scalar, R: Rng>(
    setup: &TrainSetup<S>,
    coeffs: &CoefficientFields<S>,
    grads: &GradientFields<S>,
    boxc: &ConstraintBox<S>,
    n_probes: usize,
    rng: &mut R,
) -> S {
    let dt = setup.t_final / cast::<S>(setup.nt as f64);
    let mut min_dd = S::infinity();
    for _ in 0..n_probes {
        let other = random_feasible(&setup.grid, setup.nt, boxc, rng);
        let dir = coeff_difference(&other, coeffs, &setup.grid);
        let dd = directional_derivative(grads, &dir, &setup.grid, dt);
        min_dd = min_dd.min(dd);
    }
    min_dd
}

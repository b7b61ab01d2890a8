//! Backward adjoint sweep and coefficient gradients.
//!
//! Discretize-then-optimize: each forward step
//! `m_{k+1} = A_k^{-1} (m_k + dt sigma(gamma_k m_k + delta_k))`,
//! `A_k = I - dt L_k`, is linearized and transposed exactly, so the
//! directional derivatives reported here agree with finite differences of
//! the discrete loss to solver precision. The reported gradient is that of
//! the full squared loss (factor two included).
//!
//! With `v_k := A_k^{-T} u_{k+1}` the recursion reads
//!
//! ```text
//! u_nt = m(T) - m_T
//! u_k  = (I + dt diag(sigma'(gamma_k m_k + delta_k) gamma_k)) v_k
//! ```
//!
//! and the per-level gradient densities (per unit of dt * cell volume) are
//! the discrete counterparts of `-2 grad u (x) grad m`, `-2 u grad m`,
//! `-2 u m` and `2 u sigma' m`.

use crate::error::{Error, Result};
use crate::grid::{Dim, Grid};
use crate::parabolic::{solve_forward, ImplicitStep, ParabolicProblem, Trajectory};
use crate::scalar::{cast, Scalar};
use crate::stencil::CoefficientSlice;
use rand::Rng;

/// Backward multipliers. `snapshots[k]` is u(., t_k) for k = 0..nt; the
/// terminal snapshot equals m(T) - m_T exactly.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory<S> {
    pub snapshots: Vec<Vec<S>>,
    /// v_k = A_k^{-T} u_{k+1}, one per step; the quantity every coefficient
    /// gradient pairs against.
    pub intermediates: Vec<Vec<S>>,
}

/// Per-level gradient fields, shapes matching the coefficient fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientLevel<S> {
    pub alpha: Vec<S>,
    pub beta: Vec<S>,
    pub gamma: Vec<S>,
    pub theta: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFields<S> {
    pub levels: Vec<GradientLevel<S>>,
}

impl<S: Scalar> GradientFields<S> {
    pub fn zeros(grid: &Grid<S>, nt: usize) -> Self {
        let n = grid.n_total();
        let d = grid.dim().as_usize();
        let nb = CoefficientSlice::<S>::beta_components(grid.dim());
        let level = GradientLevel {
            alpha: vec![S::zero(); d * n],
            beta: vec![S::zero(); nb * n],
            gamma: vec![S::zero(); n],
            theta: vec![S::zero(); n],
        };
        GradientFields { levels: vec![level; nt] }
    }

    /// Sum of squares over all entries (unscaled Euclidean).
    pub fn norm_sq(&self) -> S {
        let mut acc = S::zero();
        for l in &self.levels {
            for v in l.alpha.iter().chain(&l.beta).chain(&l.gamma).chain(&l.theta) {
                acc += *v * *v;
            }
        }
        acc
    }

    pub fn scale(&mut self, s: S) {
        for l in &mut self.levels {
            for v in l
                .alpha
                .iter_mut()
                .chain(l.beta.iter_mut())
                .chain(l.gamma.iter_mut())
                .chain(l.theta.iter_mut())
            {
                *v *= s;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &GradientFields<S>, s: S) {
        assert_eq!(self.levels.len(), other.levels.len());
        for (a, b) in self.levels.iter_mut().zip(other.levels.iter()) {
            for (x, y) in a.alpha.iter_mut().zip(&b.alpha) {
                *x += s * *y;
            }
            for (x, y) in a.beta.iter_mut().zip(&b.beta) {
                *x += s * *y;
            }
            for (x, y) in a.gamma.iter_mut().zip(&b.gamma) {
                *x += s * *y;
            }
            for (x, y) in a.theta.iter_mut().zip(&b.theta) {
                *x += s * *y;
            }
        }
    }
}

/// Pairing of gradient densities with a coefficient direction under the
/// discrete measure dt * cell volume: this is the directional derivative of
/// the loss in that direction.
pub fn directional_derivative<S: Scalar>(
    grads: &GradientFields<S>,
    direction: &GradientFields<S>,
    grid: &Grid<S>,
    dt: S,
) -> S {
    let vol = grid.cell_volume();
    let mut acc = S::zero();
    for (g, d) in grads.levels.iter().zip(direction.levels.iter()) {
        let mut level_acc = S::zero();
        for (x, y) in g.alpha.iter().zip(&d.alpha) {
            level_acc += *x * *y;
        }
        for (x, y) in g.beta.iter().zip(&d.beta) {
            level_acc += *x * *y;
        }
        for (x, y) in g.gamma.iter().zip(&d.gamma) {
            level_acc += *x * *y;
        }
        for (x, y) in g.theta.iter().zip(&d.theta) {
            level_acc += *x * *y;
        }
        acc += level_acc;
    }
    acc * dt * vol
}

/// Backward sweep: exact transpose of the forward linearization.
pub fn solve_adjoint<S: Scalar>(
    traj: &Trajectory<S>,
    p: &ParabolicProblem<S>,
    m_target: &[S],
) -> Result<AdjointTrajectory<S>> {
    if traj.snapshots.len() != p.nt + 1 {
        return Err(Error::invalid("solve_adjoint: trajectory/problem mismatch"));
    }
    if m_target.len() != p.grid.n_total() {
        return Err(Error::invalid("solve_adjoint: target length mismatch"));
    }
    let dt = p.dt();
    let nt = p.nt;
    let mut snapshots = vec![Vec::new(); nt + 1];
    let mut intermediates = vec![Vec::new(); nt];
    snapshots[nt] = traj
        .terminal()
        .iter()
        .zip(m_target.iter())
        .map(|(&m, &t)| m - t)
        .collect::<Vec<S>>();
    for k in (0..nt).rev() {
        let level = &p.coeffs.levels[k];
        let step = ImplicitStep::new(level, &p.grid, dt)?;
        let v = step.solve_transpose(&snapshots[k + 1])?;
        let m_k = &traj.snapshots[k];
        let u: Vec<S> = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let sp = p.sigma.deriv(level.gamma[i] * m_k[i] + level.delta[i]);
                vi + dt * sp * level.gamma[i] * vi
            })
            .collect();
        snapshots[k] = u;
        intermediates[k] = v;
    }
    Ok(AdjointTrajectory { snapshots, intermediates })
}

/// Ghost-zero centered difference in axis direction `comp`, mirroring the
/// advection stencil of the assembled operator exactly (missing neighbors
/// contribute zero, the divisor is always 2h).
fn stencil_gradient<S: Scalar>(grid: &Grid<S>, f: &[S], comp: usize) -> Vec<S> {
    let h = grid.spacing();
    let two_h = h + h;
    let n_side = grid.points_per_side();
    let n = grid.n_total();
    let mut out = vec![S::zero(); n];
    match grid.dim() {
        Dim::One => {
            for i in 0..n {
                let plus = if i + 1 < n { f[i + 1] } else { S::zero() };
                let minus = if i > 0 { f[i - 1] } else { S::zero() };
                out[i] = (plus - minus) / two_h;
            }
        }
        Dim::Two => {
            for row in 0..n_side {
                for col in 0..n_side {
                    let i = grid.flat_2d(col, row);
                    let (plus, minus) = if comp == 0 {
                        (
                            if col + 1 < n_side { f[grid.flat_2d(col + 1, row)] } else { S::zero() },
                            if col > 0 { f[grid.flat_2d(col - 1, row)] } else { S::zero() },
                        )
                    } else {
                        // x2 ascends as the row index decreases
                        (
                            if row > 0 { f[grid.flat_2d(col, row - 1)] } else { S::zero() },
                            if row + 1 < n_side { f[grid.flat_2d(col, row + 1)] } else { S::zero() },
                        )
                    };
                    out[i] = (plus - minus) / two_h;
                }
            }
        }
    }
    out
}

/// Four-corner mixed difference, ghost values zero.
fn corner_stencil<S: Scalar>(grid: &Grid<S>, f: &[S]) -> Vec<S> {
    debug_assert_eq!(grid.dim(), Dim::Two);
    let h = grid.spacing();
    let four_h2 = cast::<S>(4.0) * h * h;
    let n_side = grid.points_per_side();
    let mut out = vec![S::zero(); grid.n_total()];
    let get = |col: isize, row: isize| -> S {
        if col < 0 || row < 0 || col >= n_side as isize || row >= n_side as isize {
            S::zero()
        } else {
            f[row as usize * n_side + col as usize]
        }
    };
    for row in 0..n_side as isize {
        for col in 0..n_side as isize {
            let i = row as usize * n_side + col as usize;
            // (+x1,+x2) is (col+1, row-1)
            out[i] = (get(col + 1, row - 1) - get(col + 1, row + 1) - get(col - 1, row - 1)
                + get(col - 1, row + 1))
                / four_h2;
        }
    }
    out
}

/// Accumulate the beta gradient for the 1D divergence-form flux stencil.
fn beta_gradient_1d<S: Scalar>(grid: &Grid<S>, v: &[S], m_next: &[S], out: &mut [S], factor: S) {
    let n = grid.n_total();
    let h = grid.spacing();
    let h2 = h * h;
    let half = cast::<S>(0.5);
    for i in 0..n {
        // right face
        if i + 1 < n {
            let flux = (m_next[i + 1] - m_next[i]) / h2;
            // face beta = (beta_i + beta_{i+1})/2
            out[i] += factor * v[i] * flux * half;
            out[i + 1] += factor * v[i] * flux * half;
        } else {
            let flux = (S::zero() - m_next[i]) / h2;
            out[i] += factor * v[i] * flux;
        }
        // left face
        if i > 0 {
            let flux = (m_next[i - 1] - m_next[i]) / h2;
            out[i] += factor * v[i] * flux * half;
            out[i - 1] += factor * v[i] * flux * half;
        } else {
            let flux = (S::zero() - m_next[i]) / h2;
            out[i] += factor * v[i] * flux;
        }
    }
}

/// Same for one axis family of the 2D flux stencil; `comp_offset` selects
/// which beta component (b11 over x1 faces, b22 over x2 faces) receives the
/// contribution.
fn beta_gradient_2d_axis<S: Scalar>(
    grid: &Grid<S>,
    v: &[S],
    m_next: &[S],
    out: &mut [S],
    axis: usize,
    comp_offset: usize,
    factor: S,
) {
    let n = grid.n_total();
    let n_side = grid.points_per_side();
    let h = grid.spacing();
    let h2 = h * h;
    let half = cast::<S>(0.5);
    let nb = |col: usize, row: usize, dfwd: isize| -> Option<usize> {
        // axis 0: +-x1 means col +- 1; axis 1: +x2 means row -+ 1
        let (dc, dr) = if axis == 0 { (dfwd, 0) } else { (0, -dfwd) };
        let c2 = col as isize + dc;
        let r2 = row as isize + dr;
        if c2 < 0 || r2 < 0 || c2 >= n_side as isize || r2 >= n_side as isize {
            None
        } else {
            Some(r2 as usize * n_side + c2 as usize)
        }
    };
    for row in 0..n_side {
        for col in 0..n_side {
            let i = grid.flat_2d(col, row);
            for dfwd in [1isize, -1] {
                match nb(col, row, dfwd) {
                    Some(j) => {
                        let flux = (m_next[j] - m_next[i]) / h2;
                        out[comp_offset * n + i] += factor * v[i] * flux * half;
                        out[comp_offset * n + j] += factor * v[i] * flux * half;
                    }
                    None => {
                        let flux = (S::zero() - m_next[i]) / h2;
                        out[comp_offset * n + i] += factor * v[i] * flux;
                    }
                }
            }
        }
    }
}

/// Assemble gradient densities from the paired forward/adjoint sweeps.
pub fn assemble_gradients<S: Scalar>(
    traj: &Trajectory<S>,
    adj: &AdjointTrajectory<S>,
    p: &ParabolicProblem<S>,
) -> Result<GradientFields<S>> {
    if traj.snapshots.len() != p.nt + 1 || adj.intermediates.len() != p.nt {
        return Err(Error::invalid("assemble_gradients: sweep/problem mismatch"));
    }
    let grid = &p.grid;
    let n = grid.n_total();
    let d = grid.dim().as_usize();
    let two = cast::<S>(2.0);
    let mut out = GradientFields::zeros(grid, p.nt);
    for k in 0..p.nt {
        let level = &p.coeffs.levels[k];
        let v = &adj.intermediates[k];
        let m_k = &traj.snapshots[k];
        let m_next = &traj.snapshots[k + 1];
        let g = &mut out.levels[k];

        // theta: dL/dtheta_i = -m_i at row i
        for i in 0..n {
            g.theta[i] = -two * v[i] * m_next[i];
        }
        // gamma: explicit source dt sigma(gamma m_k + delta)
        for i in 0..n {
            let sp = p.sigma.deriv(level.gamma[i] * m_k[i] + level.delta[i]);
            g.gamma[i] = two * v[i] * sp * m_k[i];
        }
        // alpha: dL/dalpha_c,i = -(D_c m)_i at row i
        for c in 0..d {
            let dm = stencil_gradient(grid, m_next, c);
            for i in 0..n {
                g.alpha[c * n + i] = -two * v[i] * dm[i];
            }
        }
        // beta: chain through the flux faces (axis terms) and the corner
        // stencil (mixed term)
        match grid.dim() {
            Dim::One => {
                beta_gradient_1d(grid, v, m_next, &mut g.beta, two);
            }
            Dim::Two => {
                beta_gradient_2d_axis(grid, v, m_next, &mut g.beta, 0, 0, two);
                beta_gradient_2d_axis(grid, v, m_next, &mut g.beta, 1, 2, two);
                let corner = corner_stencil(grid, m_next);
                for i in 0..n {
                    // the mixed entry carries weight 2 in the operator
                    g.beta[n + i] = two * two * v[i] * corner[i];
                }
            }
        }
    }
    Ok(out)
}

/// One probe of the finite-difference audit.
#[derive(Debug, Clone)]
pub struct GradcheckProbe<S> {
    pub adjoint_derivative: S,
    pub fd_derivative: S,
    pub rel_err: S,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport<S> {
    pub probes: Vec<GradcheckProbe<S>>,
    pub max_rel_err: S,
}

/// Apply `p + scale * direction` to the coefficient fields (delta stays
/// fixed; it is not an optimization variable).
pub fn perturb_problem<S: Scalar>(
    p: &ParabolicProblem<S>,
    direction: &GradientFields<S>,
    scale: S,
) -> ParabolicProblem<S> {
    let mut out = p.clone();
    for (level, dir) in out.coeffs.levels.iter_mut().zip(direction.levels.iter()) {
        for (x, y) in level.lin.alpha.iter_mut().zip(&dir.alpha) {
            *x += scale * *y;
        }
        for (x, y) in level.lin.beta.iter_mut().zip(&dir.beta) {
            *x += scale * *y;
        }
        for (x, y) in level.lin.theta.iter_mut().zip(&dir.theta) {
            *x += scale * *y;
        }
        for (x, y) in level.gamma.iter_mut().zip(&dir.gamma) {
            *x += scale * *y;
        }
    }
    out
}

/// Random direction with entries in [-1, 1] over all optimized fields.
pub fn random_direction<S: Scalar, R: Rng>(
    grid: &Grid<S>,
    nt: usize,
    rng: &mut R,
) -> GradientFields<S> {
    let mut dir = GradientFields::zeros(grid, nt);
    for level in &mut dir.levels {
        for v in level
            .alpha
            .iter_mut()
            .chain(level.beta.iter_mut())
            .chain(level.gamma.iter_mut())
            .chain(level.theta.iter_mut())
        {
            *v = cast::<S>(rng.random_range(-1.0..1.0));
        }
    }
    dir
}

/// Compare adjoint directional derivatives against central finite
/// differences of the loss along random directions.
pub fn gradcheck<S: Scalar, R: Rng>(
    p: &ParabolicProblem<S>,
    m_target: &[S],
    n_probes: usize,
    fd_step: S,
    rng: &mut R,
) -> Result<GradcheckReport<S>> {
    if n_probes == 0 {
        return Err(Error::invalid("gradcheck needs at least one probe"));
    }
    use crate::parabolic::terminal_loss;
    let traj = solve_forward(p)?;
    let adj = solve_adjoint(&traj, p, m_target)?;
    let grads = assemble_gradients(&traj, &adj, p)?;
    let dt = p.dt();
    let grad_scale = directional_derivative(&grads, &grads, &p.grid, dt).sqrt();
    let mut probes = Vec::with_capacity(n_probes);
    let mut max_rel_err = S::zero();
    for _ in 0..n_probes {
        let dir = random_direction(&p.grid, p.nt, rng);
        let adjoint_derivative = directional_derivative(&grads, &dir, &p.grid, dt);
        let plus = terminal_loss(
            &solve_forward(&perturb_problem(p, &dir, fd_step))?,
            m_target,
            &p.grid,
        )?;
        let minus = terminal_loss(
            &solve_forward(&perturb_problem(p, &dir, -fd_step))?,
            m_target,
            &p.grid,
        )?;
        let fd_derivative = (plus - minus) / (fd_step + fd_step);
        // directions nearly orthogonal to the gradient make the raw ratio a
        // noise amplifier; floor the denominator at the Cauchy-Schwarz
        // bound on the attainable derivative
        let dir_scale = directional_derivative(&dir, &dir, &p.grid, dt).sqrt();
        let denom = adjoint_derivative
            .abs()
            .max(fd_derivative.abs())
            .max(grad_scale * dir_scale)
            .max(cast::<S>(1e-300));
        let rel_err = (adjoint_derivative - fd_derivative).abs() / denom;
        max_rel_err = max_rel_err.max(rel_err);
        probes.push(GradcheckProbe { adjoint_derivative, fd_derivative, rel_err });
    }
    Ok(GradcheckReport { probes, max_rel_err })
}

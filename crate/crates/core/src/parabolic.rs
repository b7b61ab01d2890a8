//! Time integration of the controlled semilinear parabolic equation
//!
//! ```text
//! dm/dt - div(beta grad m) + alpha . grad m + theta m = sigma(gamma m + delta)
//! ```
//!
//! on the truncated grid with zero ghost values, using a first-order IMEX
//! scheme: the linear part is implicit, the nonlinearity explicit,
//!
//! ```text
//! (I - dt L_k) m_{k+1} = m_k + dt sigma(gamma_k m_k + delta_k),
//! L = div(beta grad .) - alpha . grad - theta
//! ```
//!
//! with one coefficient slice per step (piecewise constant in time). The
//! linear solve is a direct tridiagonal factorization in 1D and conjugate
//! gradient on the normal equations in 2D.
//!
//! The unweighted terminal loss and every pairing the adjoint relies on use
//! the uniform cell-volume rule `h^d` per grid point, so the discrete adjoint
//! is the exact transpose of this scheme.

use crate::error::{Error, Result};
use crate::grid::{Dim, Grid, WeightFn};
use crate::linalg::solve_cgnr;
use crate::linalg::tridiag_solve;
use crate::scalar::{cast, Scalar};
use crate::stencil::{assemble_kdelta, CoefficientSlice, OperatorForm, OperatorMatrix};

/// Pointwise nonlinearity with its derivative. All variants are Lipschitz
/// with sigma(0) = 0, and C1 so no subgradient choices ever arise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma<S> {
    Zero,
    Identity,
    Tanh,
    /// `(x + sqrt(x^2 + eps^2) - eps) / 2`: a C-infinity ramp that tends to
    /// ReLU as eps -> 0.
    SmoothRelu { eps: S },
}

impl<S: Scalar> Sigma<S> {
    pub fn eval(&self, x: S) -> S {
        match self {
            Sigma::Zero => S::zero(),
            Sigma::Identity => x,
            Sigma::Tanh => x.tanh(),
            Sigma::SmoothRelu { eps } => {
                let half = cast::<S>(0.5);
                (x + (x * x + *eps * *eps).sqrt() - *eps) * half
            }
        }
    }

    pub fn deriv(&self, x: S) -> S {
        match self {
            Sigma::Zero => S::zero(),
            Sigma::Identity => S::one(),
            Sigma::Tanh => {
                let t = x.tanh();
                S::one() - t * t
            }
            Sigma::SmoothRelu { eps } => {
                let half = cast::<S>(0.5);
                (S::one() + x / (x * x + *eps * *eps).sqrt()) * half
            }
        }
    }

    /// `sigma(x)/x` with its continuous extension `sigma'(0)` at the
    /// origin (the two choices agree almost everywhere; the extension keeps
    /// the absorbed control continuous along trajectories that cross zero).
    /// `sigma_bar(x) * x == sigma(x)` pointwise either way.
    pub fn bar(&self, x: S) -> S {
        if x == S::zero() {
            self.deriv(S::zero())
        } else {
            self.eval(x) / x
        }
    }
}

/// All control fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCoefficients<S> {
    pub lin: CoefficientSlice<S>,
    pub gamma: Vec<S>,
    pub delta: Vec<S>,
}

impl<S: Scalar> LevelCoefficients<S> {
    pub fn validate(&self, grid: &Grid<S>) -> Result<()> {
        self.lin.validate(grid)?;
        let n = grid.n_total();
        if self.gamma.len() != n || self.delta.len() != n {
            return Err(Error::invalid("gamma/delta length mismatch"));
        }
        if !self.gamma.iter().chain(self.delta.iter()).all(|x| x.is_finite()) {
            return Err(Error::invalid("gamma/delta contain non-finite values"));
        }
        Ok(())
    }
}

/// Time-indexed coefficient fields: one slice per IMEX step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields<S> {
    pub levels: Vec<LevelCoefficients<S>>,
}

impl<S: Scalar> CoefficientFields<S> {
    /// Spatially and temporally constant initialization.
    pub fn constant(
        grid: &Grid<S>,
        nt: usize,
        alpha: &[S],
        beta: &[S],
        gamma: S,
        theta: S,
    ) -> Self {
        let n = grid.n_total();
        let level = LevelCoefficients {
            lin: CoefficientSlice::constant(grid, alpha, beta, theta),
            gamma: vec![gamma; n],
            delta: vec![S::zero(); n],
        };
        CoefficientFields { levels: vec![level; nt] }
    }

    pub fn validate(&self, grid: &Grid<S>, nt: usize) -> Result<()> {
        if self.levels.len() != nt {
            return Err(Error::invalid(format!(
                "expected {nt} coefficient levels, got {}",
                self.levels.len()
            )));
        }
        for level in &self.levels {
            level.validate(grid)?;
        }
        Ok(())
    }
}

/// Forward problem description.
#[derive(Debug, Clone)]
pub struct ParabolicProblem<S> {
    pub grid: Grid<S>,
    pub t_final: S,
    pub nt: usize,
    pub coeffs: CoefficientFields<S>,
    pub sigma: Sigma<S>,
    pub m0: Vec<S>,
    pub weight: WeightFn<S>,
}

impl<S: Scalar> ParabolicProblem<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > S::zero()) || self.nt == 0 {
            return Err(Error::invalid("t_final must be positive and nt >= 1"));
        }
        if self.m0.len() != self.grid.n_total() {
            return Err(Error::invalid("initial field length mismatch"));
        }
        if !self.m0.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("initial field contains non-finite values"));
        }
        self.coeffs.validate(&self.grid, self.nt)
    }

    pub fn dt(&self) -> S {
        self.t_final / cast::<S>(self.nt as f64)
    }
}

/// State snapshots m(., t_k), k = 0..nt.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub snapshots: Vec<Vec<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn terminal(&self) -> &[S] {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }
}

/// The implicit system (I - dt L) with solve paths for itself and its
/// transpose. Built once per level and reused by forward and adjoint sweeps.
pub struct ImplicitStep<S> {
    pub op: OperatorMatrix<S>,
    dt: S,
    n: usize,
    dim: Dim,
    rel_tol: S,
    max_iter: usize,
}

pub const LINEAR_SOLVE_REL_TOL: f64 = 1e-10;

impl<S: Scalar> ImplicitStep<S> {
    /// Assemble the step operator from the problem fields:
    /// L = div(beta grad .) - alpha . grad - theta, so the assembled slice
    /// carries negated advection and reaction.
    pub fn new(level: &LevelCoefficients<S>, grid: &Grid<S>, dt: S) -> Result<Self> {
        let negated = CoefficientSlice {
            alpha: level.lin.alpha.iter().map(|&a| -a).collect(),
            beta: level.lin.beta.clone(),
            theta: level.lin.theta.iter().map(|&t| -t).collect(),
        };
        let op = assemble_kdelta(&negated, grid, OperatorForm::Divergence)?;
        let n = grid.n_total();
        Ok(ImplicitStep {
            op,
            dt,
            n,
            dim: grid.dim(),
            rel_tol: cast::<S>(LINEAR_SOLVE_REL_TOL),
            max_iter: 40 * n,
        })
    }

    /// y = (I - dt L) x.
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        let lx = self.op.apply(x);
        x.iter().zip(lx.iter()).map(|(&xi, &li)| xi - self.dt * li).collect()
    }

    /// y = (I - dt L)^T x.
    pub fn apply_transpose(&self, x: &[S]) -> Vec<S> {
        let lx = self.op.apply_transpose(x);
        x.iter().zip(lx.iter()).map(|(&xi, &li)| xi - self.dt * li).collect()
    }

    fn tridiags(&self, transpose: bool) -> (Vec<S>, Vec<S>, Vec<S>) {
        let n = self.n;
        let mut lower = vec![S::zero(); n];
        let mut diag = vec![S::zero(); n];
        let mut upper = vec![S::zero(); n];
        for i in 0..n {
            for k in self.op.row_ptr[i]..self.op.row_ptr[i + 1] {
                let j = self.op.col_idx[k];
                let v = -self.dt * self.op.vals[k];
                let (r, c) = if transpose { (j, i) } else { (i, j) };
                if r == c {
                    diag[r] += v;
                } else if c + 1 == r {
                    lower[r] += v;
                } else {
                    upper[r] += v;
                }
            }
            diag[i] += S::one();
        }
        (lower, diag, upper)
    }

    fn solve_inner(&self, rhs: &[S], transpose: bool) -> Result<Vec<S>> {
        match self.dim {
            Dim::One => {
                let (lower, diag, upper) = self.tridiags(transpose);
                tridiag_solve(&lower, &diag, &upper, rhs)
            }
            Dim::Two => {
                let apply = |v: &[S]| if transpose { self.apply_transpose(v) } else { self.apply(v) };
                let apply_t = |v: &[S]| if transpose { self.apply(v) } else { self.apply_transpose(v) };
                solve_cgnr(&apply, &apply_t, rhs, &vec![S::zero(); self.n], self.rel_tol, self.max_iter)
                    .map_err(|e| match e {
                        Error::NumericalFailure { residual, .. } => Error::NumericalFailure {
                            context: "implicit step solve (2D CGNR)".into(),
                            residual,
                        },
                        other => other,
                    })
            }
        }
    }

    pub fn solve(&self, rhs: &[S]) -> Result<Vec<S>> {
        self.solve_inner(rhs, false)
    }

    pub fn solve_transpose(&self, rhs: &[S]) -> Result<Vec<S>> {
        self.solve_inner(rhs, true)
    }
}

/// One IMEX step: solves (I - dt L_k) m_{k+1} = m_k + dt sigma(gamma_k m_k + delta_k).
pub fn step_imex<S: Scalar>(
    m_k: &[S],
    level: &LevelCoefficients<S>,
    grid: &Grid<S>,
    sigma: &Sigma<S>,
    dt: S,
) -> Result<Vec<S>> {
    if !(dt > S::zero()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if m_k.len() != grid.n_total() {
        return Err(Error::invalid("step_imex: field length mismatch"));
    }
    level.validate(grid)?;
    let step = ImplicitStep::new(level, grid, dt)?;
    let rhs: Vec<S> = m_k
        .iter()
        .enumerate()
        .map(|(i, &m)| m + dt * sigma.eval(level.gamma[i] * m + level.delta[i]))
        .collect();
    step.solve(&rhs)
}

/// Run the full forward sweep.
pub fn solve_forward<S: Scalar>(p: &ParabolicProblem<S>) -> Result<Trajectory<S>> {
    p.validate()?;
    let dt = p.dt();
    let mut snapshots = Vec::with_capacity(p.nt + 1);
    let mut times = Vec::with_capacity(p.nt + 1);
    snapshots.push(p.m0.clone());
    times.push(S::zero());
    let mut current = p.m0.clone();
    for k in 0..p.nt {
        current = step_imex(&current, &p.coeffs.levels[k], &p.grid, &p.sigma, dt)?;
        if !current.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericalFailure {
                context: format!("forward solve blew up at step {k}"),
                residual: f64::INFINITY,
            });
        }
        times.push(dt * cast::<S>((k + 1) as f64));
        snapshots.push(current.clone());
    }
    Ok(Trajectory { times, snapshots })
}

/// Unweighted squared L2 terminal mismatch, cell-volume quadrature.
pub fn terminal_loss<S: Scalar>(
    traj: &Trajectory<S>,
    m_target: &[S],
    grid: &Grid<S>,
) -> Result<S> {
    let m_end = traj.terminal();
    if m_end.len() != m_target.len() || m_end.len() != grid.n_total() {
        return Err(Error::invalid("terminal_loss: shape mismatch"));
    }
    let vol = grid.cell_volume();
    let mut acc = S::zero();
    for (a, b) in m_end.iter().zip(m_target.iter()) {
        let d = *a - *b;
        acc += d * d;
    }
    Ok(acc * vol)
}

/// Report of the weighted-energy stability diagnostic.
#[derive(Debug, Clone)]
pub struct EnergyReport<S> {
    /// sup over time of the squared weighted H1 norm.
    pub sup_h1_sq: S,
    /// sum of dt * || (m_k - m_{k-1}) / dt ||^2_{L2w}.
    pub time_derivative_sq: S,
    /// Squared weighted H1 norm of the initial field.
    pub initial_h1_sq: S,
    /// (sup_h1_sq + time_derivative_sq) / initial_h1_sq, or zero when the
    /// initial data vanishes.
    pub ratio: S,
    /// True when the initial field is identically zero (0/0 case).
    pub degenerate: bool,
}

/// Checks the discrete analogue of the parameter-independent energy bound:
/// the returned ratio should stay bounded across admissible coefficient
/// draws and stable under time refinement.
pub fn energy_diagnostic<S: Scalar>(
    traj: &Trajectory<S>,
    p: &ParabolicProblem<S>,
) -> Result<EnergyReport<S>> {
    use crate::grid::{weighted_inner, weighted_norms};
    if traj.snapshots.len() != p.nt + 1 {
        return Err(Error::invalid("energy_diagnostic: trajectory/problem mismatch"));
    }
    let dt = p.dt();
    let (_, h1_0) = weighted_norms(&p.m0, &p.weight, &p.grid)?;
    let initial_h1_sq = h1_0 * h1_0;
    let mut sup_h1_sq = S::zero();
    for snap in &traj.snapshots {
        let (_, h1) = weighted_norms(snap, &p.weight, &p.grid)?;
        sup_h1_sq = sup_h1_sq.max(h1 * h1);
    }
    let mut time_derivative_sq = S::zero();
    for k in 1..traj.snapshots.len() {
        let diff: Vec<S> = traj.snapshots[k]
            .iter()
            .zip(traj.snapshots[k - 1].iter())
            .map(|(&a, &b)| (a - b) / dt)
            .collect();
        time_derivative_sq += dt * weighted_inner(&diff, &diff, &p.weight, &p.grid)?;
    }
    let degenerate = initial_h1_sq == S::zero();
    let ratio = if degenerate {
        S::zero()
    } else {
        (sup_h1_sq + time_derivative_sq) / initial_h1_sq
    };
    Ok(EnergyReport { sup_h1_sq, time_derivative_sq, initial_h1_sq, ratio, degenerate })
}

//! Galerkin propagation of the bilinear wave system in the truncated
//! eigenbasis.
//!
//! With `A(theta) = diag(rho) + Mult(theta)` (symmetric), the first-order
//! system on a constant control piece is
//!
//! ```text
//! da/dt = b,   db/dt = -A a
//! ```
//!
//! whose exponential is evaluated exactly through the symmetric
//! eigendecomposition of `A`: each eigencoordinate is a scalar oscillator
//! (trigonometric for positive eigenvalues, hyperbolic for negative ones,
//! linear drift at zero). The nonlinear term `(0, sigma(m))` is applied
//! pseudo-spectrally inside an adaptive fourth-order Runge-Kutta loop.

use crate::bilinear::{ControlBasis, ControlLaw, TrigPoly};
use crate::error::{Error, Result};
use crate::hermite::{eigenvalue, free_evolution, HermiteBasis, HermiteState};
use crate::linalg::{sym_eigen, DenseMat, SymEigen};
use crate::parabolic::Sigma;
use crate::scalar::{cast, Scalar};

/// Shared context: basis, eigenvalues, and the control functions sampled at
/// the tensor quadrature nodes.
#[derive(Debug, Clone)]
pub struct WaveContext<S> {
    pub basis: HermiteBasis<S>,
    pub control: ControlBasis,
    rho: Vec<S>,
    control_nodes: Vec<Vec<S>>,
}

/// Spatial payload of a pulse: a trigonometric polynomial in the saturated
/// basis, or raw samples at the quadrature nodes.
#[derive(Debug, Clone)]
pub enum PulseShape<S> {
    Trig(TrigPoly<S>),
    Samples(Vec<S>),
}

impl<S: Scalar> WaveContext<S> {
    pub fn new(basis: HermiteBasis<S>) -> Self {
        let control = ControlBasis::new(basis.dim());
        let rho: Vec<S> = basis.indices().iter().map(|&i| eigenvalue::<S>(i)).collect();
        let mut control_nodes = Vec::with_capacity(control.len());
        for j in 0..control.len() {
            control_nodes
                .push((0..basis.node_count()).map(|q| control.eval(j, basis.node(q))).collect());
        }
        WaveContext { basis, control, rho, control_nodes }
    }

    pub fn mode_count(&self) -> usize {
        self.basis.mode_count()
    }

    pub fn rho(&self) -> &[S] {
        &self.rho
    }

    /// Galerkin multiplication operator M_{mn} = <f psi_n, psi_m> from node
    /// samples of f. Symmetric by construction; `f == 1` gives the identity
    /// up to quadrature exactness.
    pub fn multiplication_matrix(&self, f_nodes: &[S]) -> Result<DenseMat<S>> {
        if f_nodes.len() != self.basis.node_count() {
            return Err(Error::invalid(format!(
                "multiplication_matrix expects {} node samples, got {}",
                self.basis.node_count(),
                f_nodes.len()
            )));
        }
        let n = self.mode_count();
        let mut m = DenseMat::zeros(n, n);
        for q in 0..self.basis.node_count() {
            let wf = self.basis.node_weight(q) * f_nodes[q];
            if wf == S::zero() {
                continue;
            }
            // rank-1 accumulation with the mode values at this node
            let vals: Vec<S> = (0..n).map(|k| self.basis.mode_at_node(k, q)).collect();
            for i in 0..n {
                let wi = wf * vals[i];
                for j in 0..=i {
                    m[(i, j)] += wi * vals[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(m)
    }

    /// Node samples of a trig polynomial (in the Phi angles).
    pub fn trig_nodes(&self, p: &TrigPoly<S>) -> Vec<S> {
        (0..self.basis.node_count()).map(|q| p.eval(self.basis.node(q))).collect()
    }

    /// Node samples of theta for one control piece.
    pub fn control_nodes(&self, p: &[S]) -> Result<Vec<S>> {
        if p.len() != self.control.len() {
            return Err(Error::invalid("control value width mismatch"));
        }
        let mut out = vec![S::zero(); self.basis.node_count()];
        for (j, &pj) in p.iter().enumerate() {
            if pj != S::zero() {
                for (o, &bj) in out.iter_mut().zip(&self.control_nodes[j]) {
                    *o += pj * bj;
                }
            }
        }
        Ok(out)
    }

    /// Assemble and factor the piece operator for given theta samples.
    pub fn piece_operator(&self, theta_nodes: &[S]) -> Result<PieceOperator<S>> {
        let mut a = self.multiplication_matrix(theta_nodes)?;
        for (i, &r) in self.rho.iter().enumerate() {
            a[(i, i)] += r;
        }
        let eig = sym_eigen(&a)?;
        Ok(PieceOperator { matrix: a, eig })
    }

    /// Free-flow piece (theta = 0): closed form, no factorization.
    pub fn free(&self, state: &HermiteState<S>, t: S) -> HermiteState<S> {
        free_evolution(state, &self.basis, t)
    }

    /// Instantaneous velocity kick (a, b) -> (a, b + Mult(f) a). This is the
    /// exact limit operator the short pulses approximate.
    pub fn kick_exact(&self, state: &HermiteState<S>, f_nodes: &[S]) -> Result<HermiteState<S>> {
        let m = self.multiplication_matrix(f_nodes)?;
        let ma = m.matvec(&state.a);
        let bdot = state.bdot.iter().zip(&ma).map(|(&b, &x)| b + x).collect();
        HermiteState::new(state.a.clone(), bdot)
    }
}

/// Factored constant-coefficient piece.
#[derive(Debug, Clone)]
pub struct PieceOperator<S> {
    pub matrix: DenseMat<S>,
    pub eig: SymEigen<S>,
}

/// Oscillator pair (c, s): a(t) = c a0 + s b0, b(t) = -lambda s a0 + c b0.
/// Series fallback keeps the formulas smooth through lambda = 0.
fn oscillator<S: Scalar>(lambda: S, t: S) -> (S, S) {
    let z = lambda * t * t;
    if z.abs() < cast::<S>(1e-8) {
        let half = cast::<S>(0.5);
        let c = S::one() - z * half + z * z / cast::<S>(24.0);
        let s = t * (S::one() - z / cast::<S>(6.0) + z * z / cast::<S>(120.0));
        (c, s)
    } else if lambda > S::zero() {
        let w = lambda.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let w = (-lambda).sqrt();
        ((w * t).cosh(), (w * t).sinh() / w)
    }
}

impl<S: Scalar> PieceOperator<S> {
    /// Exact exponential of the piece over time t.
    pub fn evolve(&self, state: &HermiteState<S>, t: S) -> HermiteState<S> {
        let n = self.eig.values.len();
        let q = &self.eig.vectors;
        // hat = Q^T x
        let mut a_hat = vec![S::zero(); n];
        let mut b_hat = vec![S::zero(); n];
        for k in 0..n {
            let mut sa = S::zero();
            let mut sb = S::zero();
            for i in 0..n {
                sa += q[(i, k)] * state.a[i];
                sb += q[(i, k)] * state.bdot[i];
            }
            a_hat[k] = sa;
            b_hat[k] = sb;
        }
        for k in 0..n {
            let lam = self.eig.values[k];
            let (c, s) = oscillator(lam, t);
            let (a0, b0) = (a_hat[k], b_hat[k]);
            a_hat[k] = c * a0 + s * b0;
            b_hat[k] = -lam * s * a0 + c * b0;
        }
        let mut a = vec![S::zero(); n];
        let mut b = vec![S::zero(); n];
        for i in 0..n {
            let mut sa = S::zero();
            let mut sb = S::zero();
            for k in 0..n {
                sa += q[(i, k)] * a_hat[k];
                sb += q[(i, k)] * b_hat[k];
            }
            a[i] = sa;
            b[i] = sb;
        }
        HermiteState { a, bdot: b }
    }
}

/// Tolerances of the adaptive nonlinear integrator.
const RK_LOCAL_TOL: f64 = 1e-10;
const RK_MIN_STEP_FRACTION: f64 = 1e-9;

fn rk4_rhs<S: Scalar>(
    ctx: &WaveContext<S>,
    a_op: &DenseMat<S>,
    sigma: &Sigma<S>,
    state: &HermiteState<S>,
) -> Result<HermiteState<S>> {
    let minus_aa = {
        let mut v = a_op.matvec(&state.a);
        v.iter_mut().for_each(|x| *x = -*x);
        v
    };
    let m_nodes = ctx.basis.synthesize_at_nodes(&state.a)?;
    let sig_nodes: Vec<S> = m_nodes.iter().map(|&m| sigma.eval(m)).collect();
    let sig_coeffs = ctx.basis.analyze(&sig_nodes)?;
    let bdot: Vec<S> = minus_aa.iter().zip(&sig_coeffs).map(|(&x, &y)| x + y).collect();
    Ok(HermiteState { a: state.bdot.clone(), bdot })
}

fn rk4_step<S: Scalar>(
    ctx: &WaveContext<S>,
    a_op: &DenseMat<S>,
    sigma: &Sigma<S>,
    state: &HermiteState<S>,
    dt: S,
) -> Result<HermiteState<S>> {
    let half = cast::<S>(0.5);
    let sixth = S::one() / cast::<S>(6.0);
    let two = cast::<S>(2.0);
    let k1 = rk4_rhs(ctx, a_op, sigma, state)?;
    let mid1 = lin_comb(state, &k1, dt * half);
    let k2 = rk4_rhs(ctx, a_op, sigma, &mid1)?;
    let mid2 = lin_comb(state, &k2, dt * half);
    let k3 = rk4_rhs(ctx, a_op, sigma, &mid2)?;
    let end = lin_comb(state, &k3, dt);
    let k4 = rk4_rhs(ctx, a_op, sigma, &end)?;
    let mut a = state.a.clone();
    let mut b = state.bdot.clone();
    for i in 0..a.len() {
        a[i] += dt * sixth * (k1.a[i] + two * k2.a[i] + two * k3.a[i] + k4.a[i]);
        b[i] += dt * sixth * (k1.bdot[i] + two * k2.bdot[i] + two * k3.bdot[i] + k4.bdot[i]);
    }
    Ok(HermiteState { a, bdot: b })
}

fn lin_comb<S: Scalar>(s: &HermiteState<S>, d: &HermiteState<S>, c: S) -> HermiteState<S> {
    HermiteState {
        a: s.a.iter().zip(&d.a).map(|(&x, &y)| x + c * y).collect(),
        bdot: s.bdot.iter().zip(&d.bdot).map(|(&x, &y)| x + c * y).collect(),
    }
}

fn state_diff_norm<S: Scalar>(x: &HermiteState<S>, y: &HermiteState<S>) -> S {
    let mut acc = S::zero();
    for (a, b) in x.a.iter().zip(&y.a) {
        let d = *a - *b;
        acc += d * d;
    }
    for (a, b) in x.bdot.iter().zip(&y.bdot) {
        let d = *a - *b;
        acc += d * d;
    }
    acc.sqrt()
}

/// Integrate one constant-theta piece of the nonlinear system with
/// step-doubling error control.
fn nonlinear_piece<S: Scalar>(
    ctx: &WaveContext<S>,
    a_op: &DenseMat<S>,
    sigma: &Sigma<S>,
    state: &HermiteState<S>,
    duration: S,
    piece_index: usize,
) -> Result<HermiteState<S>> {
    let tol = cast::<S>(RK_LOCAL_TOL);
    let min_dt = duration * cast::<S>(RK_MIN_STEP_FRACTION);
    let mut t = S::zero();
    let mut dt = duration / cast::<S>(16.0);
    let mut current = state.clone();
    let safety = cast::<S>(0.9);
    while t < duration {
        if dt > duration - t {
            dt = duration - t;
        }
        let full = rk4_step(ctx, a_op, sigma, &current, dt)?;
        let half_dt = dt * cast::<S>(0.5);
        let half1 = rk4_step(ctx, a_op, sigma, &current, half_dt)?;
        let half2 = rk4_step(ctx, a_op, sigma, &half1, half_dt)?;
        let err = state_diff_norm(&full, &half2) / cast::<S>(15.0);
        if err <= tol {
            current = half2;
            t += dt;
            if err < tol * cast::<S>(0.01) {
                dt = dt + dt;
            }
        } else {
            dt = dt * safety * (tol / err).powf(cast::<S>(0.2));
            if dt < min_dt {
                return Err(Error::NumericalFailure {
                    context: format!("nonlinear step control failed on piece {piece_index}"),
                    residual: err.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(current)
}

/// Propagate a state under a piecewise-constant control law; `sigma = None`
/// is the linear equation (exact piecewise exponentials), otherwise the
/// nonlinearity is integrated pseudo-spectrally.
pub fn propagate<S: Scalar>(
    ctx: &WaveContext<S>,
    state: &HermiteState<S>,
    law: &ControlLaw<S>,
    sigma: Option<&Sigma<S>>,
) -> Result<HermiteState<S>> {
    let mut current = state.clone();
    for (idx, (duration, values)) in law.pieces().enumerate() {
        let zero_piece = values.iter().all(|&v| v == S::zero());
        match sigma {
            None => {
                if zero_piece {
                    current = ctx.free(&current, duration);
                } else {
                    let theta = ctx.control_nodes(values)?;
                    let op = ctx.piece_operator(&theta)?;
                    current = op.evolve(&current, duration);
                }
            }
            Some(sig) => {
                let theta = ctx.control_nodes(values)?;
                let mut a_op = ctx.multiplication_matrix(&theta)?;
                for (i, &r) in ctx.rho.iter().enumerate() {
                    a_op[(i, i)] += r;
                }
                current = nonlinear_piece(ctx, &a_op, sig, &current, duration, idx)?;
            }
        }
    }
    Ok(current)
}

/// Short control burst approximating the velocity kick
/// (m, mdot) -> (m, mdot + zeta m): propagates for `tau` under the constant
/// control realizing theta = -zeta / tau. Converges as tau -> 0.
pub fn pulse<S: Scalar>(
    ctx: &WaveContext<S>,
    state: &HermiteState<S>,
    zeta: &PulseShape<S>,
    tau: S,
) -> Result<HermiteState<S>> {
    if !(tau > S::zero()) {
        return Err(Error::invalid("pulse duration must be positive"));
    }
    let nodes = match zeta {
        PulseShape::Trig(p) => ctx.trig_nodes(p),
        PulseShape::Samples(s) => {
            if s.len() != ctx.basis.node_count() {
                return Err(Error::invalid("pulse samples length mismatch"));
            }
            s.clone()
        }
    };
    // theta = -zeta/tau: A = diag(rho) - Mult(zeta)/tau
    let scaled: Vec<S> = nodes.iter().map(|&z| -z / tau).collect();
    let op = ctx.piece_operator(&scaled)?;
    Ok(op.evolve(state, tau))
}

/// The conjugated short segment
/// `exp(-tau^{-1/2} f Y) exp(tau X) exp(tau^{-1/2} f Y)` with exact
/// multiplicative kicks: converges to (m, mdot - f^2 m) as tau -> 0 with an
/// O(sqrt(tau)) remainder.
pub fn conjugated_pulse<S: Scalar>(
    ctx: &WaveContext<S>,
    state: &HermiteState<S>,
    f_nodes: &[S],
    tau: S,
) -> Result<HermiteState<S>> {
    if !(tau > S::zero()) {
        return Err(Error::invalid("conjugated pulse duration must be positive"));
    }
    let c = tau.sqrt().recip();
    let plus: Vec<S> = f_nodes.iter().map(|&f| c * f).collect();
    let minus: Vec<S> = f_nodes.iter().map(|&f| -c * f).collect();
    let s1 = ctx.kick_exact(state, &plus)?;
    let s2 = ctx.free(&s1, tau);
    ctx.kick_exact(&s2, &minus)
}

//! Displacement, velocity and endpoint steering plans, plus the nonlinear
//! absorption construction.
//!
//! Displacement steering is closed form: with zero control the free flow
//! rotates each mode independently, so a target displacement is hit exactly
//! (in the truncated basis) by choosing the initial velocity mode by mode.
//! Velocity steering fits a trig-polynomial kick against the realized
//! plan-limit operators and synthesizes it into pulses. Full steering
//! composes velocity moves and free segments, routing through the
//! stationary state `(1, 0)` so an exact total duration can be padded with
//! free time.

use crate::bilinear::propagator::{PieceOperator, WaveContext};
use crate::bilinear::synthesis::{
    fit_kick_operator, saturate_plan_to_target, Segment, SynthesisPlan,
};
use crate::bilinear::ControlLaw;
use crate::error::{Error, Result};
use crate::hermite::{eigenvalue, free_evolution, HermiteState};
use crate::parabolic::Sigma;
use crate::scalar::{cast, Scalar};

/// Closed-form displacement steering: returns `(tau, v0)` such that the
/// free flow from `(m0, v0)` reaches displacement `m_target` at time `tau`
/// exactly in the truncated basis. `tau` is chosen inside
/// `(0, min(t_max, pi / max sqrt(rho)))` so every active mode has a
/// nonvanishing sine.
pub fn steer_displacement<S: Scalar>(
    ctx: &WaveContext<S>,
    m0: &[S],
    m_target: &[S],
    t_max: S,
) -> Result<(S, Vec<S>)> {
    let n = ctx.mode_count();
    if m0.len() != n || m_target.len() != n {
        return Err(Error::invalid("steer_displacement: coefficient length mismatch"));
    }
    if !(t_max > S::zero()) {
        return Err(Error::invalid("steer_displacement: time budget must be positive"));
    }
    let indices = ctx.basis.indices();
    let active: Vec<usize> = (1..n)
        .filter(|&k| m0[k] != S::zero() || m_target[k] != S::zero())
        .collect();
    let bound = if active.is_empty() {
        t_max
    } else {
        let omega_max = active
            .iter()
            .map(|&k| eigenvalue::<S>(indices[k]).sqrt())
            .fold(S::zero(), |a, b| a.max(b));
        t_max.min(S::PI() / omega_max)
    };
    // scan for the tau with the healthiest sines
    let mut tau = bound * cast::<S>(0.5);
    if !active.is_empty() {
        let mut best = S::zero();
        for step in 1..=64 {
            let candidate = bound * cast::<S>(step as f64 / 65.0);
            let mut worst = S::infinity();
            for &k in &active {
                let omega = eigenvalue::<S>(indices[k]).sqrt();
                worst = worst.min((omega * candidate).sin().abs());
            }
            if worst > best {
                best = worst;
                tau = candidate;
            }
        }
        if best == S::zero() {
            return Err(Error::NumericalFailure {
                context: "steer_displacement: no usable tau".into(),
                residual: f64::NAN,
            });
        }
    }
    let mut v0 = vec![S::zero(); n];
    v0[0] = (m_target[0] - m0[0]) / tau;
    for &k in &active {
        let omega = eigenvalue::<S>(indices[k]).sqrt();
        let s = (omega * tau).sin();
        let c = (omega * tau).cos();
        v0[k] = (m_target[k] - m0[k] * c) * omega / s;
    }
    Ok((tau, v0))
}

/// Knobs of the velocity-steering fit and synthesis.
#[derive(Debug, Clone, Copy)]
pub struct SteerConfig<S> {
    /// Largest |v|_inf in the trig-polynomial projection.
    pub freq_range: i64,
    /// Ridge-enforced bound on the fitted coefficients.
    pub amplitude_cap: S,
    /// Fraction of the tolerance the projection residual may consume.
    pub projection_fraction: S,
}

impl<S: Scalar> Default for SteerConfig<S> {
    fn default() -> Self {
        SteerConfig {
            freq_range: 4,
            amplitude_cap: cast(8.0),
            projection_fraction: cast(0.75),
        }
    }
}

/// Result of a steering construction.
#[derive(Debug, Clone)]
pub struct SteerOutcome<S> {
    pub plan: SynthesisPlan<S>,
    /// Residual of the kick projection (zero for closed-form moves).
    pub projection_residual: S,
    /// Measured distance of the executed plan from the requested target.
    pub executed_error: S,
}

/// Steer `(m0, mdot0)` to `(m0, v_target)`: fit the multiplicative kick
/// `(v_target - mdot0) ~ psi m0` over the configured frequency range and
/// synthesize it into a pulse plan.
pub fn steer_velocity<S: Scalar>(
    ctx: &WaveContext<S>,
    s0: &HermiteState<S>,
    v_target: &[S],
    tolerance: S,
    t_budget: S,
    cfg: &SteerConfig<S>,
) -> Result<SteerOutcome<S>> {
    let n = ctx.mode_count();
    if s0.a.len() != n || v_target.len() != n {
        return Err(Error::invalid("steer_velocity: coefficient length mismatch"));
    }
    if s0.a.iter().all(|&x| x == S::zero()) {
        return Err(Error::invalid(
            "steer_velocity requires a nonzero displacement (kicks act multiplicatively)",
        ));
    }
    let kick_target: Vec<S> =
        v_target.iter().zip(&s0.bdot).map(|(&v, &b)| v - b).collect();
    let fit = fit_kick_operator(ctx, &s0.a, &kick_target, cfg.freq_range, cfg.amplitude_cap)?;
    let budget = tolerance * cfg.projection_fraction;
    if fit.residual > budget {
        return Err(Error::ResolutionExceeded {
            residual: fit.residual.to_f64().unwrap_or(f64::NAN),
            budget: budget.to_f64().unwrap_or(f64::NAN),
        });
    }
    let true_target = HermiteState::new(s0.a.clone(), v_target.to_vec())?;
    if fit.poly.is_zero() {
        // already there (or nothing fittable was needed)
        return Ok(SteerOutcome {
            plan: SynthesisPlan::empty(),
            projection_residual: fit.residual,
            executed_error: s0.distance(&true_target, &ctx.basis),
        });
    }
    let realized_target = HermiteState::new(
        s0.a.clone(),
        s0.bdot.iter().zip(&fit.predicted_kick).map(|(&b, &k)| b + k).collect(),
    )?;
    let plan_tol = (tolerance - fit.residual) * cast::<S>(0.9);
    let plan = saturate_plan_to_target(ctx, &fit.poly, plan_tol, t_budget, s0, &realized_target)?;
    let executed = plan.execute(ctx, s0)?;
    let executed_error = executed.distance(&true_target, &ctx.basis);
    Ok(SteerOutcome { plan, projection_residual: fit.residual, executed_error })
}

fn is_stationary<S: Scalar>(s: &HermiteState<S>) -> bool {
    s.bdot.iter().all(|&b| b == S::zero())
        && s.a.iter().skip(1).all(|&a| a == S::zero())
}

/// Short-time steering (no padding): velocity move to the displacement-
/// steering velocity, free flight, velocity fix. The segments are built
/// from the ideal intermediate states; execution measures the real error.
fn steer_short<S: Scalar>(
    ctx: &WaveContext<S>,
    s0: &HermiteState<S>,
    s_target: &HermiteState<S>,
    tolerance: S,
    t_budget: S,
    cfg: &SteerConfig<S>,
) -> Result<SynthesisPlan<S>> {
    let third = t_budget / cast::<S>(3.0);
    let (tau, v0) = steer_displacement(ctx, &s0.a, &s_target.a, third)?;
    let leg_tol = tolerance * cast::<S>(0.45);
    let move1 = steer_velocity(ctx, s0, &v0, leg_tol, third, cfg)?;
    // ideal state after the free segment
    let ideal_mid = HermiteState::new(s0.a.clone(), v0)?;
    let arrived = free_evolution(&ideal_mid, &ctx.basis, tau);
    let mid_state = HermiteState::new(s_target.a.clone(), arrived.bdot.clone())?;
    let move2 = steer_velocity(ctx, &mid_state, &s_target.bdot, leg_tol, third, cfg)?;
    let mut plan = move1.plan;
    plan.push_free(tau);
    Ok(plan.concat(move2.plan))
}

/// Endpoint steering with an exact total duration: route through the
/// stationary state `(1, 0)`, pad with free time, and continue to the
/// target. Initial states with zero displacement get a short free prefix
/// first (the velocity then produces a nonzero displacement).
pub fn steer_full<S: Scalar>(
    ctx: &WaveContext<S>,
    s0: &HermiteState<S>,
    s_target: &HermiteState<S>,
    tolerance: S,
    total_time: S,
    cfg: &SteerConfig<S>,
) -> Result<SteerOutcome<S>> {
    let n = ctx.mode_count();
    if s0.a.len() != n || s_target.a.len() != n {
        return Err(Error::invalid("steer_full: coefficient length mismatch"));
    }
    if !(total_time > S::zero()) {
        return Err(Error::invalid("steer_full: total time must be positive"));
    }
    let zero_displacement = s0.a.iter().all(|&x| x == S::zero());
    if zero_displacement && s0.bdot.iter().all(|&x| x == S::zero()) {
        return Err(Error::invalid(
            "steer_full: the zero state is a fixed point of every control",
        ));
    }
    // stationary target equal to the start: pure free padding, error zero
    if s0 == s_target && is_stationary(s0) {
        let mut plan = SynthesisPlan::empty();
        plan.push_free(total_time);
        return Ok(SteerOutcome {
            plan,
            projection_residual: S::zero(),
            executed_error: S::zero(),
        });
    }

    let mut prefix = SynthesisPlan::empty();
    let mut current = s0.clone();
    if zero_displacement {
        // free prefix: displacement becomes t * (zero-mode of the velocity)
        // plus rotating contributions, nonzero for small t
        let t0 = (total_time * cast::<S>(0.05)).min(cast::<S>(0.1));
        prefix.push_free(t0);
        current = free_evolution(&current, &ctx.basis, t0);
        if current.a.iter().all(|&x| x == S::zero()) {
            return Err(Error::NumericalFailure {
                context: "steer_full: free prefix left the displacement zero".into(),
                residual: f64::NAN,
            });
        }
    }

    let one_state =
        HermiteState::new(ctx.basis.constant_one(), vec![S::zero(); n])?;
    let seg_budget = (total_time - prefix.duration()) / cast::<S>(4.0);
    // the padding amplifies zero-mode velocity errors linearly in time, so
    // the first leg gets a tolerance shrunk by the horizon
    let leg_a_tol = tolerance / (cast::<S>(4.0) * (S::one() + total_time));
    let leg_a = steer_short(ctx, &current, &one_state, leg_a_tol, seg_budget, cfg)?;
    let leg_c = steer_short(ctx, &one_state, s_target, tolerance * cast::<S>(0.5), seg_budget, cfg)?;
    let used = prefix.duration() + leg_a.duration() + leg_c.duration();
    if used > total_time {
        return Err(Error::BudgetExceeded {
            achieved: used.to_f64().unwrap_or(f64::NAN),
            requested: total_time.to_f64().unwrap_or(f64::NAN),
        });
    }
    let pad = total_time - used;
    let mut plan = prefix.concat(leg_a);
    plan.push_free(pad);
    let plan = plan.concat(leg_c);

    let executed = plan.execute(ctx, s0)?;
    let executed_error = executed.distance(s_target, &ctx.basis);
    Ok(SteerOutcome { plan, projection_residual: S::zero(), executed_error })
}

/// A linear run that can be evaluated exactly at any time: per-piece
/// factored operators plus the closed-form free flow.
pub struct LinearRun<S> {
    initial: HermiteState<S>,
    law: ControlLaw<S>,
    pieces: Vec<(Option<PieceOperator<S>>, S)>,
}

impl<S: Scalar> LinearRun<S> {
    pub fn new(ctx: &WaveContext<S>, initial: HermiteState<S>, law: ControlLaw<S>) -> Result<Self> {
        let mut pieces = Vec::with_capacity(law.n_pieces());
        for (duration, values) in law.pieces() {
            if values.iter().all(|&v| v == S::zero()) {
                pieces.push((None, duration));
            } else {
                let theta = ctx.control_nodes(values)?;
                pieces.push((Some(ctx.piece_operator(&theta)?), duration));
            }
        }
        Ok(LinearRun { initial, law, pieces })
    }

    pub fn duration(&self) -> S {
        self.law.duration()
    }

    pub fn law(&self) -> &ControlLaw<S> {
        &self.law
    }

    /// Exact state at any time in [0, duration]. Times within a relative
    /// rounding margin of the endpoints are clamped (integrator stage times
    /// accumulate roundoff).
    pub fn state_at(&self, ctx: &WaveContext<S>, t: S) -> Result<HermiteState<S>> {
        let duration = self.duration();
        let margin = duration * cast::<S>(1e-9);
        if t < -margin || t > duration + margin {
            return Err(Error::invalid("state_at: time outside the run"));
        }
        let t = t.max(S::zero()).min(duration);
        let mut state = self.initial.clone();
        let mut remaining = t;
        for (op, duration) in &self.pieces {
            let step = remaining.min(*duration);
            if step > S::zero() {
                state = match op {
                    None => free_evolution(&state, &ctx.basis, step),
                    Some(p) => p.evolve(&state, step),
                };
            }
            remaining -= step;
            if remaining <= S::zero() {
                break;
            }
        }
        Ok(state)
    }
}

/// The absorbed control `theta(x,t) = theta*(x,t) + sigma(m*(x,t))/m*(x,t)`:
/// re-simulating the nonlinear equation under it reproduces the linear
/// trajectory.
pub struct AbsorbedControl<'a, S> {
    pub run: &'a LinearRun<S>,
    pub sigma: Sigma<S>,
}

impl<'a, S: Scalar> AbsorbedControl<'a, S> {
    /// theta at the quadrature nodes at time t (clamped to the run,
    /// right-continuous at the breakpoints).
    pub fn theta_nodes(&self, ctx: &WaveContext<S>, t: S) -> Result<Vec<S>> {
        let t = t.max(S::zero()).min(self.run.duration());
        let piece = self.run.law().piece_at(t)?;
        self.theta_nodes_in_piece(ctx, piece, t)
    }

    /// Same, but with the control piece pinned by the caller: integrator
    /// stages that land exactly on a breakpoint must keep the piece they
    /// are stepping through, not the right-continuous successor.
    pub fn theta_nodes_in_piece(
        &self,
        ctx: &WaveContext<S>,
        piece: usize,
        t: S,
    ) -> Result<Vec<S>> {
        let t = t.max(S::zero()).min(self.run.duration());
        let values: Vec<S> = self
            .run
            .law()
            .pieces()
            .nth(piece)
            .ok_or_else(|| Error::invalid("piece index out of range"))?
            .1
            .to_vec();
        let mut theta = ctx.control_nodes(&values)?;
        let state = self.run.state_at(ctx, t)?;
        let m_nodes = ctx.basis.synthesize_at_nodes(&state.a)?;
        for (th, &m) in theta.iter_mut().zip(&m_nodes) {
            *th += self.sigma.bar(m);
        }
        Ok(theta)
    }
}

/// Report of the nonlinear re-simulation audit.
#[derive(Debug, Clone)]
pub struct AbsorptionReport<S> {
    /// Output times of the comparison.
    pub times: Vec<S>,
    /// sup over output times of the max-abs displacement gap at the nodes.
    pub max_sup_error: S,
}

fn absorbed_rhs<S: Scalar>(
    ctx: &WaveContext<S>,
    absorbed: &AbsorbedControl<'_, S>,
    piece: usize,
    t: S,
    state: &HermiteState<S>,
) -> Result<HermiteState<S>> {
    let theta = absorbed.theta_nodes_in_piece(ctx, piece, t)?;
    let m_nodes = ctx.basis.synthesize_at_nodes(&state.a)?;
    let mut forcing = vec![S::zero(); m_nodes.len()];
    for i in 0..m_nodes.len() {
        forcing[i] = absorbed.sigma.eval(m_nodes[i]) - theta[i] * m_nodes[i];
    }
    let f_coeffs = ctx.basis.analyze(&forcing)?;
    let mut bdot = vec![S::zero(); state.a.len()];
    for (i, &r) in ctx.rho().iter().enumerate() {
        bdot[i] = -r * state.a[i] + f_coeffs[i];
    }
    Ok(HermiteState { a: state.bdot.clone(), bdot })
}

fn absorbed_rk4_step<S: Scalar>(
    ctx: &WaveContext<S>,
    absorbed: &AbsorbedControl<'_, S>,
    piece: usize,
    t: S,
    state: &HermiteState<S>,
    dt: S,
) -> Result<HermiteState<S>> {
    let half = cast::<S>(0.5);
    let two = cast::<S>(2.0);
    let sixth = S::one() / cast::<S>(6.0);
    let comb = |s: &HermiteState<S>, d: &HermiteState<S>, c: S| HermiteState {
        a: s.a.iter().zip(&d.a).map(|(&x, &y)| x + c * y).collect(),
        bdot: s.bdot.iter().zip(&d.bdot).map(|(&x, &y)| x + c * y).collect(),
    };
    let k1 = absorbed_rhs(ctx, absorbed, piece, t, state)?;
    let k2 = absorbed_rhs(ctx, absorbed, piece, t + dt * half, &comb(state, &k1, dt * half))?;
    let k3 = absorbed_rhs(ctx, absorbed, piece, t + dt * half, &comb(state, &k2, dt * half))?;
    let k4 = absorbed_rhs(ctx, absorbed, piece, t + dt, &comb(state, &k3, dt))?;
    let mut a = state.a.clone();
    let mut b = state.bdot.clone();
    for i in 0..a.len() {
        a[i] += dt * sixth * (k1.a[i] + two * k2.a[i] + two * k3.a[i] + k4.a[i]);
        b[i] += dt * sixth * (k1.bdot[i] + two * k2.bdot[i] + two * k3.bdot[i] + k4.bdot[i]);
    }
    Ok(HermiteState { a, bdot: b })
}

/// Re-simulate the nonlinear equation under the absorbed control and
/// compare against the linear trajectory at matched times.
///
/// Integration steps are aligned with the control-law pieces (the
/// right-hand side is discontinuous at the breakpoints) with
/// `outputs_per_piece * steps_per_output` Runge-Kutta steps per piece. The
/// reported error is the Gaussian-weighted sup over the quadrature nodes,
/// `max |m_sim - m*| exp(-|x|^2/2)`, the natural pointwise metric in which
/// the basis functions are uniformly bounded.
pub fn absorb_nonlinearity<S: Scalar>(
    ctx: &WaveContext<S>,
    run: &LinearRun<S>,
    sigma: Sigma<S>,
    outputs_per_piece: usize,
    steps_per_output: usize,
) -> Result<AbsorptionReport<S>> {
    if outputs_per_piece == 0 || steps_per_output == 0 {
        return Err(Error::invalid("absorb_nonlinearity needs output points and steps"));
    }
    let absorbed = AbsorbedControl { run, sigma };
    let half = cast::<S>(0.5);
    let sqrt_weight: Vec<S> = (0..ctx.basis.node_count())
        .map(|q| {
            let x = ctx.basis.node(q);
            (-(x[0] * x[0] + x[1] * x[1]) * half).exp()
        })
        .collect();
    let mut state = run.state_at(ctx, S::zero())?;
    let mut t = S::zero();
    let mut times = Vec::new();
    let mut max_sup = S::zero();
    for (piece, (piece_duration, _)) in run.law().pieces().enumerate() {
        let out_dt = piece_duration / cast::<S>(outputs_per_piece as f64);
        let dt = out_dt / cast::<S>(steps_per_output as f64);
        for _ in 0..outputs_per_piece {
            for _ in 0..steps_per_output {
                state = absorbed_rk4_step(ctx, &absorbed, piece, t, &state, dt)?;
                t += dt;
            }
            let reference = run.state_at(ctx, t)?;
            let sim_nodes = ctx.basis.synthesize_at_nodes(&state.a)?;
            let ref_nodes = ctx.basis.synthesize_at_nodes(&reference.a)?;
            let mut sup = S::zero();
            for ((s, r), w) in sim_nodes.iter().zip(&ref_nodes).zip(&sqrt_weight) {
                sup = sup.max((*s - *r).abs() * *w);
            }
            max_sup = max_sup.max(sup);
            times.push(t);
        }
    }
    Ok(AbsorptionReport { times, max_sup_error: max_sup })
}

/// Plan serialization rows for reports: kind, duration, payload summary.
pub fn plan_rows<S: Scalar>(plan: &SynthesisPlan<S>) -> Vec<(String, S, String)> {
    plan.segments
        .iter()
        .map(|seg| match seg {
            Segment::Free { duration } => ("free".to_string(), *duration, String::new()),
            Segment::Pulse { zeta, duration } => {
                let mut payload = format!("const={}", zeta.constant);
                for (v, (c, s)) in &zeta.terms {
                    payload.push_str(&format!(";v=({},{}) cos={} sin={}", v[0], v[1], c, s));
                }
                ("pulse".to_string(), *duration, payload)
            }
        })
        .collect()
}

//! Constructive synthesis of velocity kicks from executable control pulses.
//!
//! A kick by a trig polynomial `psi` sends (m, mdot) to (m, mdot + psi m).
//! Only the base span {1, cos(phi(x_k)), sin(phi(x_k))} is directly
//! realizable as a single short pulse; higher frequencies are reached
//! through differences of squares,
//!
//! ```text
//! +-cos((vi + vj).y) = 1 - 1/2 (cos(vi.y) -+ cos(vj.y))^2
//!                        - 1/2 (sin(vi.y) +- sin(vj.y))^2
//! +-sin((vi + vj).y) = 1 - 1/2 (sin(vi.y) -+ cos(vj.y))^2
//!                        - 1/2 (cos(vi.y) -+ sin(vj.y))^2
//! ```
//!
//! where each squared kick is realized by a conjugated triple
//! kick(+c q), free(tau), kick(-c q) with c = tau^{-1/2}, and the inner
//! kicks recurse with a binary split of the frequency vector until the base
//! span is reached. Smaller segment durations sharpen every limit, so the
//! plan builder calibrates a single sharpness parameter against an executed
//! probe until the requested tolerance is met.

use crate::bilinear::propagator::{propagate, WaveContext};
use crate::bilinear::{ControlLaw, TrigPoly};
use crate::error::{Error, Result};
use crate::hermite::HermiteState;
use crate::linalg::DenseMat;
use crate::scalar::{cast, Scalar};

/// One executable plan segment, in time order.
#[derive(Debug, Clone)]
pub enum Segment<S> {
    /// Short burst realizing the kick by `zeta` (a base-span trig poly):
    /// control value -zeta/duration over `duration`.
    Pulse { zeta: TrigPoly<S>, duration: S },
    /// Zero control.
    Free { duration: S },
}

impl<S: Scalar> Segment<S> {
    pub fn duration(&self) -> S {
        match self {
            Segment::Pulse { duration, .. } | Segment::Free { duration } => *duration,
        }
    }
}

/// Ordered list of primitive segments; executing them left to right
/// approximates a velocity kick.
#[derive(Debug, Clone)]
pub struct SynthesisPlan<S> {
    pub segments: Vec<Segment<S>>,
}

impl<S: Scalar> SynthesisPlan<S> {
    pub fn empty() -> Self {
        SynthesisPlan { segments: Vec::new() }
    }

    pub fn duration(&self) -> S {
        self.segments.iter().map(|s| s.duration()).fold(S::zero(), |a, b| a + b)
    }

    pub fn n_pulses(&self) -> usize {
        self.segments.iter().filter(|s| matches!(s, Segment::Pulse { .. })).count()
    }

    pub fn concat(mut self, other: SynthesisPlan<S>) -> Self {
        self.segments.extend(other.segments);
        self
    }

    pub fn push_free(&mut self, duration: S) {
        if duration > S::zero() {
            self.segments.push(Segment::Free { duration });
        }
    }

    /// Render as a piecewise-constant control law (every pulse payload must
    /// lie in the base span).
    pub fn to_control_law(&self, ctx: &WaveContext<S>) -> Result<ControlLaw<S>> {
        let channels = ctx.control.len();
        let mut durations = Vec::with_capacity(self.segments.len());
        let mut values = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            match seg {
                Segment::Free { duration } => {
                    durations.push(*duration);
                    values.push(vec![S::zero(); channels]);
                }
                Segment::Pulse { zeta, duration } => {
                    let p = zeta.to_control_values(&ctx.control).ok_or_else(|| {
                        Error::invalid("pulse payload outside the control basis span")
                    })?;
                    durations.push(*duration);
                    values.push(p.iter().map(|&c| -c / *duration).collect());
                }
            }
        }
        ControlLaw::from_pieces(durations, values)
    }

    /// Execute on a state through the exact piecewise propagator.
    pub fn execute(&self, ctx: &WaveContext<S>, state: &HermiteState<S>) -> Result<HermiteState<S>> {
        let law = self.to_control_law(ctx)?;
        if law.n_pieces() == 0 {
            return Ok(state.clone());
        }
        propagate(ctx, state, &law, None)
    }
}

/// The two squared factors of the sum identity for one signed term.
/// Returns (q1, q2) with `sign * kind((vi+vj).y) = 1 - q1^2/|.| ...` after
/// the sqrt(|coef|/2) scaling is applied by the caller.
fn identity_factors<S: Scalar>(
    vi: [i64; 2],
    vj: [i64; 2],
    kind_cos: bool,
    positive: bool,
) -> (TrigPoly<S>, TrigPoly<S>) {
    let one = S::one();
    let m_one = -S::one();
    let (q1, q2) = if kind_cos {
        if positive {
            // cos: (cos vi - cos vj), (sin vi + sin vj)
            (
                TrigPoly::term(vi, one, S::zero()).plus(&TrigPoly::term(vj, m_one, S::zero())),
                TrigPoly::term(vi, S::zero(), one).plus(&TrigPoly::term(vj, S::zero(), one)),
            )
        } else {
            // -cos: (cos vi + cos vj), (sin vi - sin vj)
            (
                TrigPoly::term(vi, one, S::zero()).plus(&TrigPoly::term(vj, one, S::zero())),
                TrigPoly::term(vi, S::zero(), one).plus(&TrigPoly::term(vj, S::zero(), m_one)),
            )
        }
    } else if positive {
        // sin: (sin vi - cos vj), (cos vi - sin vj)
        (
            TrigPoly::term(vi, S::zero(), one).plus(&TrigPoly::term(vj, m_one, S::zero())),
            TrigPoly::term(vi, one, S::zero()).plus(&TrigPoly::term(vj, S::zero(), m_one)),
        )
    } else {
        // -sin: (sin vi + cos vj), (cos vi + sin vj)
        (
            TrigPoly::term(vi, S::zero(), one).plus(&TrigPoly::term(vj, one, S::zero())),
            TrigPoly::term(vi, one, S::zero()).plus(&TrigPoly::term(vj, S::zero(), one)),
        )
    };
    (q1, q2)
}

/// Binary split v = vi + vj with strictly smaller l1 norms on both parts
/// (requires |v|_1 >= 2). Componentwise halving can collapse to zero for
/// vectors of +-1 entries; fall back to peeling one unit step then.
fn split_frequency(v: [i64; 2]) -> ([i64; 2], [i64; 2]) {
    let vj = [v[0] / 2, v[1] / 2];
    if vj != [0, 0] {
        return ([v[0] - vj[0], v[1] - vj[1]], vj);
    }
    let axis = if v[0] != 0 { 0 } else { 1 };
    let mut unit = [0i64; 2];
    unit[axis] = v[axis].signum();
    ([v[0] - unit[0], v[1] - unit[1]], unit)
}

/// Timing knobs of the recursive construction.
///
/// Deeper segments must shrink much faster than the top level: a kick error
/// made inside a conjugation is amplified by the conjugation amplitude
/// `conj_tau^{-1/2}`, so uniform scaling would leave the amplified
/// contribution constant. The schedule below gives level `l`
///
/// ```text
/// conj_tau(l)  = conj_base  * s^(1 + 2 l)
/// pulse_tau(l) = pulse_base * s^(2.5 + 2 l) / (1 + amplitude)^2
/// ```
///
/// which makes every amplified error term vanish like a positive power of
/// the calibration scale `s`.
#[derive(Debug, Clone, Copy)]
pub struct PlanTuning<S> {
    /// Conjugation free-flow base duration.
    pub conj_base: S,
    /// Pulse base duration.
    pub pulse_base: S,
    /// Calibration: shrink applied to `s` between attempts.
    pub attempt_shrink: S,
    /// Maximum calibration attempts.
    pub max_attempts: usize,
    /// Kicks are split into repetitions of at most this amplitude: the
    /// conjugation error constants grow quickly with the payload size,
    /// while kicks compose additively, so many small kicks beat one big
    /// one.
    pub subkick_amplitude: S,
}

impl<S: Scalar> Default for PlanTuning<S> {
    fn default() -> Self {
        PlanTuning {
            conj_base: cast(1e-3),
            pulse_base: cast(1e-3),
            attempt_shrink: cast(0.25),
            max_attempts: 8,
            subkick_amplitude: cast(0.5),
        }
    }
}

impl<S: Scalar> PlanTuning<S> {
    fn conj_tau(&self, s: S, level: usize) -> S {
        self.conj_base * s.powf(cast::<S>(1.0 + 2.0 * level as f64))
    }

    fn pulse_tau(&self, s: S, level: usize, amplitude: S) -> S {
        // single pulses approximate kicks with error linear in the payload
        // amplitude, so dividing by (1 + amplitude) keeps the error at the
        // duration scale itself
        let denom = S::one() + amplitude;
        self.pulse_base * s.powf(cast::<S>(2.0 + 2.0 * level as f64)) / denom
    }
}

/// Full kick plan for `psi`: subdivide into small-amplitude repetitions and
/// emit the recursive segments for each.
pub fn kick_plan<S: Scalar>(psi: &TrigPoly<S>, tuning: &PlanTuning<S>, scale: S) -> SynthesisPlan<S> {
    let mut segments = Vec::new();
    kick_segments(psi, 0, tuning, scale, &mut segments);
    SynthesisPlan { segments }
}

/// Emit segments for the kick by `psi` at the given recursion level.
///
/// Base polynomials become one pulse (any amplitude: the pulse error is
/// linear in the payload, compensated by its duration). Composite terms are
/// first subdivided into repetitions of at most `subkick_amplitude` (the
/// conjugation error constants grow fast with the squared-factor size, and
/// kicks compose additively), and each repetition becomes a conjugated
/// triple whose inner kicks recurse at the next level. The conjugation sign
/// alternates between repetitions so the odd-order remainders cancel
/// pairwise.
fn kick_segments<S: Scalar>(
    psi: &TrigPoly<S>,
    level: usize,
    tuning: &PlanTuning<S>,
    scale: S,
    out: &mut Vec<Segment<S>>,
) {
    let mut base = TrigPoly::<S>::constant_fn(psi.constant);
    for (&v, &(ccos, csin)) in &psi.terms {
        if v[0].abs() + v[1].abs() <= 1 {
            base.add_term(v, ccos, csin);
            continue;
        }
        let (vi, vj) = split_frequency(v);
        for (coef, kind_cos) in [(ccos, true), (csin, false)] {
            if coef == S::zero() {
                continue;
            }
            let positive = coef > S::zero();
            let magnitude = coef.abs();
            base.constant += magnitude;
            let reps = (magnitude / tuning.subkick_amplitude)
                .ceil()
                .to_f64()
                .unwrap_or(1.0)
                .max(1.0) as usize;
            let rep_amp = (magnitude / cast::<S>(reps as f64) * cast::<S>(0.5)).sqrt();
            let (q1, q2) = identity_factors::<S>(vi, vj, kind_cos, positive);
            for rep in 0..reps {
                for q in [&q1, &q2] {
                    let q = q.scaled(rep_amp);
                    if q.is_zero() {
                        continue;
                    }
                    let conj_tau = tuning.conj_tau(scale, level);
                    let mut c = conj_tau.sqrt().recip();
                    if rep % 2 == 1 {
                        c = -c;
                    }
                    kick_segments(&q.scaled(c), level + 1, tuning, scale, out);
                    out.push(Segment::Free { duration: conj_tau });
                    kick_segments(&q.scaled(-c), level + 1, tuning, scale, out);
                }
            }
        }
    }
    let base = base.pruned(S::zero());
    if !base.is_zero() {
        let tau = tuning.pulse_tau(scale, level, base.amplitude_bound());
        out.push(Segment::Pulse { zeta: base, duration: tau });
    }
}

/// Plan-limit kick operator: what the plan realizes as all durations tend to
/// zero, computed in the truncated model. Base terms act as multiplication
/// matrices; squared factors act as squared truncated matrices.
pub fn realized_kick_operator<S: Scalar>(
    ctx: &WaveContext<S>,
    psi: &TrigPoly<S>,
) -> Result<DenseMat<S>> {
    let n = ctx.mode_count();
    let mut k = DenseMat::zeros(n, n);
    let mut base = TrigPoly::<S>::constant_fn(psi.constant);
    for (&v, &(ccos, csin)) in &psi.terms {
        if v[0].abs() + v[1].abs() <= 1 {
            base.add_term(v, ccos, csin);
            continue;
        }
        let (vi, vj) = split_frequency(v);
        for (coef, kind_cos) in [(ccos, true), (csin, false)] {
            if coef == S::zero() {
                continue;
            }
            let positive = coef > S::zero();
            let magnitude = coef.abs();
            base.constant += magnitude;
            let amp = (magnitude * cast::<S>(0.5)).sqrt();
            let (q1, q2) = identity_factors::<S>(vi, vj, kind_cos, positive);
            for q in [q1, q2] {
                let q = q.scaled(amp);
                if q.is_zero() {
                    continue;
                }
                let kq = realized_kick_operator(ctx, &q)?;
                let mut sq = kq.matmul(&kq);
                sq.scale(-S::one());
                k.add_assign(&sq);
            }
        }
    }
    let base = base.pruned(S::zero());
    if !base.is_zero() {
        let m = ctx.multiplication_matrix(&ctx.trig_nodes(&base))?;
        k.add_assign(&m);
    }
    Ok(k)
}

/// Least-squares fit of a kick over the configured frequency range.
#[derive(Debug, Clone)]
pub struct KickFit<S> {
    pub poly: TrigPoly<S>,
    /// Residual of the fit in the truncated coefficient norm.
    pub residual: S,
    /// Predicted velocity increment of the realized plan limit.
    pub predicted_kick: Vec<S>,
}

/// Fit `sum_j c_j K(t_j) m0 ~ target` over the trig functions with
/// frequencies |v|_inf <= freq_range, using the realized plan-limit
/// operators K(t_j) as columns and a ridge penalty that grows until the
/// coefficient amplitudes fall below `amplitude_cap`.
pub fn fit_kick_operator<S: Scalar>(
    ctx: &WaveContext<S>,
    m0: &[S],
    target: &[S],
    freq_range: i64,
    amplitude_cap: S,
) -> Result<KickFit<S>> {
    if m0.len() != ctx.mode_count() || target.len() != ctx.mode_count() {
        return Err(Error::invalid("fit_kick_operator: coefficient length mismatch"));
    }
    let dim = ctx.basis.dim().as_usize();
    let mut freqs: Vec<[i64; 2]> = Vec::new();
    if dim == 1 {
        for k in 1..=freq_range {
            freqs.push([k, 0]);
        }
    } else {
        for k1 in -freq_range..=freq_range {
            for k2 in 0..=freq_range {
                let v = [k1, k2];
                if v == [0, 0] || (k2 == 0 && k1 < 0) {
                    continue;
                }
                freqs.push(v);
            }
        }
    }
    // columns: constant, then (cos, sin) per frequency
    let mut polys: Vec<TrigPoly<S>> = vec![TrigPoly::constant_fn(S::one())];
    for &v in &freqs {
        polys.push(TrigPoly::term(v, S::one(), S::zero()));
        polys.push(TrigPoly::term(v, S::zero(), S::one()));
    }
    let n = ctx.mode_count();
    let ncols = polys.len();
    // ridge weights mirror execution cost: base frequencies are single
    // exact pulses (nearly free at any amplitude), frequency 2 needs one
    // conjugation level, and anything above needs depth-2 conjugations
    // whose amplified error terms converge too slowly to be worth
    // non-negligible coefficients
    let ridge_weight: Vec<S> = polys
        .iter()
        .map(|p| {
            let l1 = p.max_l1();
            if l1 <= 1 {
                cast::<S>(1e-6)
            } else if l1 == 2 {
                S::one()
            } else {
                cast::<S>(1e12)
            }
        })
        .collect();

    // normalize the target so the ridge acts on order-one numbers; the
    // realized operator is positively homogeneous, so coefficients scale
    // back afterwards
    let mut target_norm_sq = S::zero();
    for t in target {
        target_norm_sq += *t * *t;
    }
    let target_norm = target_norm_sq.sqrt();
    if target_norm == S::zero() {
        return Ok(KickFit {
            poly: TrigPoly::zero(),
            residual: S::zero(),
            predicted_kick: vec![S::zero(); n],
        });
    }
    let target_unit: Vec<S> = target.iter().map(|&t| t / target_norm).collect();

    // the realized operator is homogeneous in the coefficient magnitude but
    // depends on its sign (the +- identities square different factors), so
    // iterate the sign pattern until it stabilizes
    let mut signs = vec![S::one(); ncols];
    let mut coeffs = vec![S::zero(); ncols];
    for _pass in 0..3 {
        let mut a = DenseMat::zeros(n, ncols);
        for (j, p) in polys.iter().enumerate() {
            let col = realized_kick_operator(ctx, &p.scaled(signs[j]))?.matvec(m0);
            for i in 0..n {
                a[(i, j)] = col[i] / signs[j];
            }
        }
        let at = a.transpose();
        let ata = at.matmul(&a);
        let atb = at.matvec(&target_unit);
        let mut lam = cast::<S>(1e-10) * (ata.max_abs() + S::one());
        for _ in 0..60 {
            let mut reg = ata.clone();
            for i in 0..ncols {
                reg[(i, i)] += lam * ridge_weight[i];
            }
            coeffs = crate::linalg::lu_solve(&reg, &atb)?;
            // the cap protects the conjugation synthesis; base-span kicks
            // (frequencies <= 1) are exact single pulses at any amplitude
            let max_c = coeffs
                .iter()
                .zip(&polys)
                .filter(|(_, p)| p.max_l1() >= 2)
                .fold(S::zero(), |m, (&c, _)| m.max(c.abs()));
            if max_c <= amplitude_cap {
                break;
            }
            lam = lam * cast::<S>(3.0);
        }
        let mut changed = false;
        for (j, &c) in coeffs.iter().enumerate() {
            if c.abs() > cast::<S>(1e-10) {
                let s = if c >= S::zero() { S::one() } else { -S::one() };
                if s != signs[j] {
                    signs[j] = s;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for c in coeffs.iter_mut() {
        *c *= target_norm;
    }
    let mut poly = TrigPoly::constant_fn(coeffs[0]);
    for (idx, &v) in freqs.iter().enumerate() {
        poly.add_term(v, coeffs[1 + 2 * idx], coeffs[2 + 2 * idx]);
    }
    // coefficients far below the residual scale or the dominant
    // coefficient are fit noise (ridge spreading), and stray crumbs on
    // composite frequencies would force pointless conjugation segments
    let mut prune = cast::<S>(1e-12);
    prune = prune.max(poly.amplitude_bound() * cast::<S>(1e-9));
    {
        let mut res_sq = S::zero();
        let provisional = realized_kick_operator(ctx, &poly)?.matvec(m0);
        for (p, t) in provisional.iter().zip(target.iter()) {
            let d = *p - *t;
            res_sq += d * d;
        }
        prune = prune.max(res_sq.sqrt() * cast::<S>(1e-2));
    }
    let poly = poly.pruned(prune);
    let predicted_kick = realized_kick_operator(ctx, &poly)?.matvec(m0);
    let mut res_sq = S::zero();
    for (p, t) in predicted_kick.iter().zip(target.iter()) {
        let d = *p - *t;
        res_sq += d * d;
    }
    Ok(KickFit { poly, residual: res_sq.sqrt(), predicted_kick })
}

/// Build a pulse plan approximating the kick by `psi`, calibrated on the
/// probe state: durations shrink until the executed state lands within
/// `tolerance` of (m0, mdot0 + Mult(psi) m0), while the total duration stays
/// within `t_budget`.
pub fn saturate_plan<S: Scalar>(
    ctx: &WaveContext<S>,
    psi: &TrigPoly<S>,
    tolerance: S,
    t_budget: S,
    probe: &HermiteState<S>,
) -> Result<SynthesisPlan<S>> {
    if !(tolerance > S::zero()) {
        return Err(Error::invalid("saturate_plan tolerance must be positive"));
    }
    let mult = ctx.multiplication_matrix(&ctx.trig_nodes(psi))?;
    let kick = mult.matvec(&probe.a);
    let target = HermiteState::new(
        probe.a.clone(),
        probe.bdot.iter().zip(&kick).map(|(&b, &k)| b + k).collect(),
    )?;
    saturate_plan_to_target(ctx, psi, tolerance, t_budget, probe, &target)
}

/// Same construction, but calibrated against an explicit target state (used
/// by the steering layer, whose fits already account for the realized
/// operators).
pub fn saturate_plan_to_target<S: Scalar>(
    ctx: &WaveContext<S>,
    psi: &TrigPoly<S>,
    tolerance: S,
    t_budget: S,
    probe: &HermiteState<S>,
    target: &HermiteState<S>,
) -> Result<SynthesisPlan<S>> {
    let tuning = PlanTuning::<S>::default();
    let mut scale = S::one();
    // shrink the initial scale until the duration fits the budget
    let mut best: Option<(S, SynthesisPlan<S>)> = None;
    for _attempt in 0..tuning.max_attempts {
        let plan = kick_plan(psi, &tuning, scale);
        if plan.duration() > t_budget {
            scale = scale * tuning.attempt_shrink;
            continue;
        }
        let executed = plan.execute(ctx, probe)?;
        let err = executed.distance(target, &ctx.basis);
        if err <= tolerance {
            return Ok(plan);
        }
        match &best {
            Some((e, _)) if *e <= err => {}
            _ => best = Some((err, plan)),
        }
        scale = scale * tuning.attempt_shrink;
    }
    let achieved = best.map(|(e, _)| e).unwrap_or(S::infinity());
    Err(Error::BudgetExceeded {
        achieved: achieved.to_f64().unwrap_or(f64::NAN),
        requested: tolerance.to_f64().unwrap_or(f64::NAN),
    })
}

//! Bilinear control of the wave equation
//!
//! ```text
//! d2m/dt2 - Laplacian m + 2 x . grad m + theta(x, t) m = sigma(m)
//! ```
//!
//! in the truncated Hermite eigenbasis. The control enters multiplicatively
//! through `theta(x,t) = sum_j p_j(t) theta_j(x)` with the `2d + 1` spatial
//! basis functions `(1, cos(phi(x_1)), sin(phi(x_1)), ...)`,
//! `phi(x) = pi erf(x)`, and piecewise constant `p`.
//!
//! Submodules: [`propagator`] (Galerkin multiplication operators, exact
//! piecewise exponentials, pulses), [`synthesis`] (trigonometric
//! saturating-space decomposition into executable pulse plans) and
//! [`steering`] (displacement/velocity/full steering and the nonlinear
//! absorption construction).

pub mod propagator;
pub mod steering;
pub mod synthesis;

pub use propagator::{conjugated_pulse, propagate, pulse, PieceOperator, PulseShape, WaveContext};
pub use steering::{
    absorb_nonlinearity, plan_rows, steer_displacement, steer_full, steer_velocity,
    AbsorbedControl, LinearRun, SteerConfig, SteerOutcome,
};
pub use synthesis::{
    fit_kick_operator, saturate_plan, KickFit, PlanTuning, Segment, SynthesisPlan,
};
pub use synthesis::kick_plan;

use crate::error::{Error, Result};
use crate::grid::Dim;
use crate::scalar::{cast, Scalar};
use std::collections::BTreeMap;

/// `phi(x) = 2 sqrt(pi) int_0^x exp(-s^2) ds = pi erf(x)`: odd, strictly
/// increasing, maps the line into (-pi, pi).
pub fn phi_map<S: Scalar>(x: S) -> S {
    S::PI() * x.erf()
}

/// The `2d + 1` spatial control functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlBasis {
    dim: Dim,
}

impl ControlBasis {
    pub fn new(dim: Dim) -> Self {
        ControlBasis { dim }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Number of control channels, `2d + 1`.
    pub fn len(&self) -> usize {
        2 * self.dim.as_usize() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// theta_j at the point x: index 0 is the constant, then per axis k the
    /// pair (cos(phi(x_k)), sin(phi(x_k))).
    pub fn eval<S: Scalar>(&self, j: usize, x: [S; 2]) -> S {
        assert!(j < self.len());
        if j == 0 {
            return S::one();
        }
        let axis = (j - 1) / 2;
        let y = phi_map(x[axis]);
        if (j - 1) % 2 == 0 {
            y.cos()
        } else {
            y.sin()
        }
    }
}

/// Piecewise constant control law `p : [0, duration] -> R^{2d+1}`.
/// Right-continuous: piece i covers [t_i, t_{i+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw<S> {
    /// Piece durations (all positive).
    durations: Vec<S>,
    /// One value vector of length 2d+1 per piece.
    values: Vec<Vec<S>>,
}

impl<S: Scalar> ControlLaw<S> {
    pub fn empty() -> Self {
        ControlLaw { durations: Vec::new(), values: Vec::new() }
    }

    pub fn from_pieces(durations: Vec<S>, values: Vec<Vec<S>>) -> Result<Self> {
        if durations.len() != values.len() {
            return Err(Error::invalid("control law: piece count mismatch"));
        }
        if durations.iter().any(|&d| !(d > S::zero())) {
            return Err(Error::invalid("control law: piece durations must be positive"));
        }
        let width = values.first().map(|v| v.len());
        if let Some(w) = width {
            if values.iter().any(|v| v.len() != w) {
                return Err(Error::invalid("control law: ragged value vectors"));
            }
        }
        Ok(ControlLaw { durations, values })
    }

    /// Single constant piece.
    pub fn constant(value: Vec<S>, duration: S) -> Result<Self> {
        Self::from_pieces(vec![duration], vec![value])
    }

    /// Zero control over the given duration (free evolution).
    pub fn free(channels: usize, duration: S) -> Result<Self> {
        Self::constant(vec![S::zero(); channels], duration)
    }

    pub fn duration(&self) -> S {
        self.durations.iter().fold(S::zero(), |a, &b| a + b)
    }

    pub fn pieces(&self) -> impl Iterator<Item = (S, &[S])> {
        self.durations.iter().copied().zip(self.values.iter().map(|v| v.as_slice()))
    }

    pub fn n_pieces(&self) -> usize {
        self.durations.len()
    }

    pub fn breakpoints(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.durations.len() + 1);
        let mut t = S::zero();
        out.push(t);
        for &d in &self.durations {
            t += d;
            out.push(t);
        }
        out
    }

    /// Piece index containing `t` (right-continuous; `t == duration` maps to
    /// the last piece).
    pub fn piece_at(&self, t: S) -> Result<usize> {
        if t < S::zero() || t > self.duration() || self.durations.is_empty() {
            return Err(Error::invalid("time outside the control law duration"));
        }
        let mut acc = S::zero();
        for (i, &d) in self.durations.iter().enumerate() {
            acc += d;
            if t < acc {
                return Ok(i);
            }
        }
        Ok(self.durations.len() - 1)
    }

    pub fn value_at(&self, t: S) -> Result<&[S]> {
        Ok(&self.values[self.piece_at(t)?])
    }

    /// Time-wise splice: `self` acts first, then `other` shifted by
    /// `self.duration()`.
    pub fn concatenate(&self, other: &ControlLaw<S>) -> ControlLaw<S> {
        let mut durations = self.durations.clone();
        durations.extend_from_slice(&other.durations);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        ControlLaw { durations, values }
    }
}

/// theta(x, t) for a law and basis at given points.
pub fn control_field<S: Scalar>(
    law: &ControlLaw<S>,
    basis: &ControlBasis,
    t: S,
    points: &[[S; 2]],
) -> Result<Vec<S>> {
    let p = law.value_at(t)?;
    if p.len() != basis.len() {
        return Err(Error::invalid("control law width does not match basis"));
    }
    Ok(points
        .iter()
        .map(|&x| {
            let mut acc = S::zero();
            for (j, &pj) in p.iter().enumerate() {
                if pj != S::zero() {
                    acc += pj * basis.eval(j, x);
                }
            }
            acc
        })
        .collect())
}

/// Canonical frequency vector: the first nonzero component is positive;
/// flipping the sign of v negates the sine coefficient.
fn canonical(v: [i64; 2]) -> ([i64; 2], bool) {
    let first = if v[0] != 0 { v[0] } else { v[1] };
    if first < 0 {
        ([-v[0], -v[1]], true)
    } else {
        (v, false)
    }
}

/// Finite combination `c0 + sum_v ccos cos(v . Phi(x)) + csin sin(v . Phi(x))`
/// with integer frequency vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly<S> {
    pub constant: S,
    /// canonical frequency -> (cos coefficient, sin coefficient)
    pub terms: BTreeMap<[i64; 2], (S, S)>,
}

impl<S: Scalar> TrigPoly<S> {
    pub fn zero() -> Self {
        TrigPoly { constant: S::zero(), terms: BTreeMap::new() }
    }

    pub fn constant_fn(c: S) -> Self {
        TrigPoly { constant: c, terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, v: [i64; 2], ccos: S, csin: S) {
        if v == [0, 0] {
            self.constant += ccos;
            return;
        }
        let (cv, flip) = canonical(v);
        let csin = if flip { -csin } else { csin };
        let entry = self.terms.entry(cv).or_insert((S::zero(), S::zero()));
        entry.0 += ccos;
        entry.1 += csin;
    }

    pub fn term(v: [i64; 2], ccos: S, csin: S) -> Self {
        let mut p = Self::zero();
        p.add_term(v, ccos, csin);
        p
    }

    pub fn scaled(&self, s: S) -> Self {
        let mut out = self.clone();
        out.constant *= s;
        for (_, (c, d)) in out.terms.iter_mut() {
            *c *= s;
            *d *= s;
        }
        out
    }

    pub fn plus(&self, other: &TrigPoly<S>) -> Self {
        let mut out = self.clone();
        out.constant += other.constant;
        for (&v, &(c, d)) in &other.terms {
            out.add_term(v, c, d);
        }
        out
    }

    /// Drop terms with negligible coefficients.
    pub fn pruned(&self, tol: S) -> Self {
        let mut out = TrigPoly {
            constant: if self.constant.abs() <= tol { S::zero() } else { self.constant },
            terms: BTreeMap::new(),
        };
        for (&v, &(c, d)) in &self.terms {
            let c = if c.abs() <= tol { S::zero() } else { c };
            let d = if d.abs() <= tol { S::zero() } else { d };
            if c != S::zero() || d != S::zero() {
                out.terms.insert(v, (c, d));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.constant == S::zero() && self.terms.is_empty()
    }

    /// Largest l1 norm of the frequency vectors.
    pub fn max_l1(&self) -> i64 {
        self.terms.keys().map(|v| v[0].abs() + v[1].abs()).max().unwrap_or(0)
    }

    /// Sum of absolute coefficients: a cheap sup-norm bound.
    pub fn amplitude_bound(&self) -> S {
        let mut acc = self.constant.abs();
        for &(c, d) in self.terms.values() {
            acc += c.abs() + d.abs();
        }
        acc
    }

    /// Evaluate at y = Phi(x) (per-axis angles).
    pub fn eval_at_angles(&self, y: [S; 2]) -> S {
        let mut acc = self.constant;
        for (&v, &(c, d)) in &self.terms {
            let arg = cast::<S>(v[0] as f64) * y[0] + cast::<S>(v[1] as f64) * y[1];
            if c != S::zero() {
                acc += c * arg.cos();
            }
            if d != S::zero() {
                acc += d * arg.sin();
            }
        }
        acc
    }

    /// Evaluate at a spatial point.
    pub fn eval(&self, x: [S; 2]) -> S {
        self.eval_at_angles([phi_map(x[0]), phi_map(x[1])])
    }

    /// True when every frequency lies in the control span
    /// {0, +-e_1, ..., +-e_d}.
    pub fn is_base(&self) -> bool {
        self.terms.keys().all(|v| v[0].abs() + v[1].abs() <= 1)
    }

    /// Control values p (length 2d+1) when the poly is in the base span.
    pub fn to_control_values(&self, basis: &ControlBasis) -> Option<Vec<S>> {
        if !self.is_base() {
            return None;
        }
        let mut p = vec![S::zero(); basis.len()];
        p[0] = self.constant;
        for (&v, &(c, d)) in &self.terms {
            let axis = if v[0] != 0 { 0 } else { 1 };
            if axis >= basis.dim().as_usize() {
                return None;
            }
            p[1 + 2 * axis] += c;
            p[2 + 2 * axis] += d;
        }
        Some(p)
    }

    /// Inverse of [`TrigPoly::to_control_values`].
    pub fn from_control_values(p: &[S], basis: &ControlBasis) -> Result<Self> {
        if p.len() != basis.len() {
            return Err(Error::invalid("control value width mismatch"));
        }
        let mut out = Self::constant_fn(p[0]);
        for axis in 0..basis.dim().as_usize() {
            let mut v = [0i64; 2];
            v[axis] = 1;
            out.add_term(v, p[1 + 2 * axis], p[2 + 2 * axis]);
        }
        Ok(out.pruned(S::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dim;

    #[test]
    fn phi_is_odd_increasing_and_bounded() {
        assert_eq!(phi_map::<f64>(0.0), 0.0);
        for &x in &[0.1, 0.5, 1.0, 3.0] {
            let y = phi_map::<f64>(x);
            assert!(y > 0.0 && y < std::f64::consts::PI);
            assert_eq!(phi_map::<f64>(-x), -y);
        }
        // saturation: phi(10) is within 1e-20 of pi (in f64 arithmetic the
        // two are indistinguishable)
        let y10 = phi_map::<f64>(10.0);
        assert!(y10 <= std::f64::consts::PI);
        assert!(std::f64::consts::PI - y10 < 1e-20);
        // strictly increasing on a sample
        let mut prev = -4.0f64;
        let mut last = phi_map::<f64>(prev);
        while prev < 4.0 {
            prev += 0.25;
            let cur = phi_map::<f64>(prev);
            assert!(cur > last);
            last = cur;
        }
    }

    #[test]
    fn control_basis_values() {
        let basis = ControlBasis::new(Dim::One);
        assert_eq!(basis.len(), 3);
        assert_eq!(basis.eval::<f64>(0, [0.7, 0.0]), 1.0);
        // phi(0) = 0: cos -> 1, sin -> 0
        assert_eq!(basis.eval::<f64>(1, [0.0, 0.0]), 1.0);
        assert_eq!(basis.eval::<f64>(2, [0.0, 0.0]), 0.0);
        let basis2 = ControlBasis::new(Dim::Two);
        assert_eq!(basis2.len(), 5);
        let x = [0.3, -0.8];
        assert!((basis2.eval::<f64>(3, x) - phi_map::<f64>(-0.8).cos()).abs() < 1e-15);
        assert!((basis2.eval::<f64>(4, x) - phi_map::<f64>(-0.8).sin()).abs() < 1e-15);
    }

    #[test]
    fn law_concatenation_shifts_pieces() {
        let p = ControlLaw::<f64>::constant(vec![1.0, 0.0, 0.0], 1.0).unwrap();
        let q = ControlLaw::<f64>::constant(vec![0.0, 2.0, 0.0], 2.0).unwrap();
        let pq = p.concatenate(&q);
        assert_eq!(pq.duration(), 3.0);
        assert_eq!(pq.breakpoints(), vec![0.0, 1.0, 3.0]);
        // left operand acts first in time
        assert_eq!(pq.value_at(0.5).unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(pq.value_at(1.0).unwrap(), &[0.0, 2.0, 0.0]);
        assert_eq!(pq.value_at(3.0).unwrap(), &[0.0, 2.0, 0.0]);
        // empty <> q = q
        let e = ControlLaw::<f64>::empty();
        assert_eq!(e.concatenate(&q), q);
        assert!(pq.value_at(3.1).is_err());
        assert!(pq.value_at(-0.1).is_err());
    }

    #[test]
    fn control_field_examples() {
        let basis = ControlBasis::new(Dim::One);
        let law = ControlLaw::<f64>::constant(vec![0.0, 0.0, 0.0], 1.0).unwrap();
        let pts = [[0.0, 0.0], [1.3, 0.0]];
        assert_eq!(control_field(&law, &basis, 0.5, &pts).unwrap(), vec![0.0, 0.0]);
        let law = ControlLaw::<f64>::constant(vec![1.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(control_field(&law, &basis, 0.0, &pts).unwrap(), vec![1.0, 1.0]);
        // coefficient on cos(phi(x1)) evaluated at the origin gives 1
        let law = ControlLaw::<f64>::constant(vec![0.0, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(control_field(&law, &basis, 0.0, &[[0.0, 0.0]]).unwrap(), vec![1.0]);
    }

    #[test]
    fn trig_poly_canonicalization_and_eval() {
        let mut p = TrigPoly::<f64>::zero();
        p.add_term([2, 0], 0.5, -0.25);
        p.add_term([-2, 0], 0.1, 0.1); // folds onto [2,0] with sin negated
        p.constant += 0.3;
        assert_eq!(p.terms.len(), 1);
        let (c, s) = p.terms[&[2, 0]];
        assert!((c - 0.6).abs() < 1e-15);
        assert!((s + 0.35).abs() < 1e-15);
        let y = [0.7, 0.0];
        let want = 0.3 + 0.6 * (2.0f64 * 0.7).cos() - 0.35 * (2.0f64 * 0.7).sin();
        assert!((p.eval_at_angles(y) - want).abs() < 1e-15);
        assert_eq!(p.max_l1(), 2);
        assert!(!p.is_base());
    }

    #[test]
    fn trig_poly_control_value_roundtrip() {
        let basis = ControlBasis::new(Dim::One);
        let p = TrigPoly::<f64>::from_control_values(&[0.5, -1.0, 0.25], &basis).unwrap();
        assert!(p.is_base());
        let vals = p.to_control_values(&basis).unwrap();
        assert_eq!(vals, vec![0.5, -1.0, 0.25]);
        // evaluation agrees with the basis expansion at random points
        for &x in &[-1.1, 0.0, 0.4, 2.0] {
            let want = 0.5 - phi_map::<f64>(x).cos() + 0.25 * phi_map::<f64>(x).sin();
            assert!((p.eval([x, 0.0]) - want).abs() < 1e-14);
        }
    }
}

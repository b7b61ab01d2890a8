//! Hermite spectral machinery for the operator `-(Laplacian - 2 x . grad)`,
//! which is self-adjoint in the Gaussian-weighted L2 space and diagonal in
//! the (normalized) Hermite basis with eigenvalues `2 |n|`.
//!
//! The raw physicists' polynomials satisfy `int H_n H_m e^{-x^2} =
//! 2^n n! sqrt(pi) delta_nm`; everything here works with the normalized
//! functions `psi_n = H_n / sqrt(2^n n! sqrt(pi))` so that inner products
//! are literally Kronecker deltas. Transforms between node samples and
//! coefficients go through Gauss-Hermite quadrature, which integrates the
//! occurring products exactly once the order exceeds the cutoff.

use crate::error::{Error, Result};
use crate::grid::{gauss_hermite, Dim, QuadratureRule};
use crate::scalar::{cast, Scalar};

/// Physicists' Hermite polynomial H_n by the three-term recurrence
/// `H_{n+1} = 2 x H_n - 2 n H_{n-1}` (exact integer coefficients for
/// small n).
pub fn hermite_eval<S: Scalar>(n: usize, x: S) -> S {
    let two = cast::<S>(2.0);
    let mut h_prev = S::one();
    if n == 0 {
        return h_prev;
    }
    let mut h = two * x;
    for k in 1..n {
        let h_next = two * x * h - two * cast::<S>(k as f64) * h_prev;
        h_prev = h;
        h = h_next;
    }
    h
}

/// Normalized value psi_n(x) = H_n(x) / sqrt(2^n n! sqrt(pi)), by the
/// stable normalized recurrence.
pub fn hermite_normalized<S: Scalar>(n: usize, x: S) -> S {
    let mut h_prev = S::zero();
    let mut h = S::PI().powf(cast::<S>(-0.25));
    for k in 0..n {
        let kf = cast::<S>(k as f64);
        let a = (cast::<S>(2.0) / (kf + S::one())).sqrt();
        let b = (kf / (kf + S::one())).sqrt();
        let h_next = a * x * h - b * h_prev;
        h_prev = h;
        h = h_next;
    }
    h
}

/// Multi-index of one basis mode; the second entry is zero in 1D.
pub type ModeIndex = [usize; 2];

/// Eigenvalue of `-(Laplacian - 2 x . grad)` on the mode: `2 |n|`.
pub fn eigenvalue<S: Scalar>(index: ModeIndex) -> S {
    cast::<S>(2.0 * (index[0] + index[1]) as f64)
}

/// Truncated orthonormal basis with per-axis cutoff `n_max` and a tensor
/// Gauss-Hermite rule for all transforms.
#[derive(Debug, Clone)]
pub struct HermiteBasis<S> {
    dim: Dim,
    n_max: usize,
    indices: Vec<ModeIndex>,
    quad: QuadratureRule<S>,
    /// axis_values[k][q] = psi_k(node_q), k = 0..=n_max
    axis_values: Vec<Vec<S>>,
}

impl<S: Scalar> HermiteBasis<S> {
    /// Requires `quad_order > n_max` so that mode products integrate
    /// exactly; synthesis/analysis of function products may need more (see
    /// [`HermiteBasis::with_default_order`]).
    pub fn new(dim: Dim, n_max: usize, quad_order: usize) -> Result<Self> {
        if quad_order < n_max + 1 {
            return Err(Error::invalid(format!(
                "quadrature order {quad_order} insufficient for cutoff {n_max}"
            )));
        }
        let quad = gauss_hermite::<S>(quad_order)?;
        let mut axis_values = Vec::with_capacity(n_max + 1);
        for k in 0..=n_max {
            axis_values.push(quad.nodes.iter().map(|&x| hermite_normalized(k, x)).collect());
        }
        let indices: Vec<ModeIndex> = match dim {
            Dim::One => (0..=n_max).map(|k| [k, 0]).collect(),
            Dim::Two => {
                let mut v = Vec::with_capacity((n_max + 1) * (n_max + 1));
                for n2 in 0..=n_max {
                    for n1 in 0..=n_max {
                        v.push([n1, n2]);
                    }
                }
                v
            }
        };
        Ok(HermiteBasis { dim, n_max, indices, quad, axis_values })
    }

    /// Default quadrature order `2 n_max + 8`: exact for all retained-mode
    /// products with headroom for smooth non-polynomial factors.
    pub fn with_default_order(dim: Dim, n_max: usize) -> Result<Self> {
        Self::new(dim, n_max, 2 * n_max + 8)
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mode_count(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[ModeIndex] {
        &self.indices
    }

    pub fn quadrature(&self) -> &QuadratureRule<S> {
        &self.quad
    }

    /// Number of tensor quadrature nodes.
    pub fn node_count(&self) -> usize {
        match self.dim {
            Dim::One => self.quad.order(),
            Dim::Two => self.quad.order() * self.quad.order(),
        }
    }

    /// Physical coordinates of tensor node `q` (flat, axis-0 fastest).
    pub fn node(&self, q: usize) -> [S; 2] {
        match self.dim {
            Dim::One => [self.quad.nodes[q], S::zero()],
            Dim::Two => {
                let m = self.quad.order();
                [self.quad.nodes[q % m], self.quad.nodes[q / m]]
            }
        }
    }

    /// Tensor quadrature weight of node `q`.
    pub fn node_weight(&self, q: usize) -> S {
        match self.dim {
            Dim::One => self.quad.weights[q],
            Dim::Two => {
                let m = self.quad.order();
                self.quad.weights[q % m] * self.quad.weights[q / m]
            }
        }
    }

    /// psi_n at tensor node q, from the cached axis values.
    #[inline]
    pub fn mode_at_node(&self, mode: usize, q: usize) -> S {
        let idx = self.indices[mode];
        match self.dim {
            Dim::One => self.axis_values[idx[0]][q],
            Dim::Two => {
                let m = self.quad.order();
                self.axis_values[idx[0]][q % m] * self.axis_values[idx[1]][q / m]
            }
        }
    }

    /// psi_n at an arbitrary point.
    pub fn mode_at(&self, mode: usize, x: [S; 2]) -> S {
        let idx = self.indices[mode];
        match self.dim {
            Dim::One => hermite_normalized(idx[0], x[0]),
            Dim::Two => hermite_normalized(idx[0], x[0]) * hermite_normalized(idx[1], x[1]),
        }
    }

    /// Coefficients of `f` given as samples at the tensor quadrature nodes.
    pub fn analyze(&self, samples: &[S]) -> Result<Vec<S>> {
        if samples.len() != self.node_count() {
            return Err(Error::invalid(format!(
                "analyze expects {} node samples, got {}",
                self.node_count(),
                samples.len()
            )));
        }
        let mut coeffs = vec![S::zero(); self.mode_count()];
        for (n, c) in coeffs.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (q, &f) in samples.iter().enumerate() {
                acc += self.node_weight(q) * f * self.mode_at_node(n, q);
            }
            *c = acc;
        }
        Ok(coeffs)
    }

    /// Values of `sum c_n psi_n` at the tensor quadrature nodes.
    pub fn synthesize_at_nodes(&self, coeffs: &[S]) -> Result<Vec<S>> {
        if coeffs.len() != self.mode_count() {
            return Err(Error::invalid("synthesize: coefficient length mismatch"));
        }
        let mut out = vec![S::zero(); self.node_count()];
        for (n, &c) in coeffs.iter().enumerate() {
            if c == S::zero() {
                continue;
            }
            for (q, o) in out.iter_mut().enumerate() {
                *o += c * self.mode_at_node(n, q);
            }
        }
        Ok(out)
    }

    /// Values of `sum c_n psi_n` at arbitrary points.
    pub fn synthesize(&self, coeffs: &[S], points: &[[S; 2]]) -> Result<Vec<S>> {
        if coeffs.len() != self.mode_count() {
            return Err(Error::invalid("synthesize: coefficient length mismatch"));
        }
        Ok(points
            .iter()
            .map(|&x| {
                let mut acc = S::zero();
                for (n, &c) in coeffs.iter().enumerate() {
                    if c != S::zero() {
                        acc += c * self.mode_at(n, x);
                    }
                }
                acc
            })
            .collect())
    }

    /// Coefficient vector with a single unit mode.
    pub fn unit_mode(&self, index: ModeIndex) -> Result<Vec<S>> {
        let pos = self
            .indices
            .iter()
            .position(|&i| i == index)
            .ok_or_else(|| Error::invalid(format!("mode {index:?} beyond cutoff")))?;
        let mut c = vec![S::zero(); self.mode_count()];
        c[pos] = S::one();
        Ok(c)
    }

    /// Coefficients of the constant function 1 (the zero mode up to
    /// normalization: 1 = pi^{d/4} psi_0).
    pub fn constant_one(&self) -> Vec<S> {
        let mut c = vec![S::zero(); self.mode_count()];
        let quarter = cast::<S>(0.25);
        let power = match self.dim {
            Dim::One => quarter,
            Dim::Two => quarter + quarter,
        };
        c[0] = S::PI().powf(power);
        c
    }
}

/// Truncated pair (m, dm/dt) in the orthonormal eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteState<S> {
    pub a: Vec<S>,
    pub bdot: Vec<S>,
}

impl<S: Scalar> HermiteState<S> {
    pub fn new(a: Vec<S>, bdot: Vec<S>) -> Result<Self> {
        if a.len() != bdot.len() {
            return Err(Error::invalid("state components must have equal length"));
        }
        if !a.iter().chain(bdot.iter()).all(|x| x.is_finite()) {
            return Err(Error::invalid("state contains non-finite entries"));
        }
        Ok(HermiteState { a, bdot })
    }

    pub fn zero(basis: &HermiteBasis<S>) -> Self {
        HermiteState {
            a: vec![S::zero(); basis.mode_count()],
            bdot: vec![S::zero(); basis.mode_count()],
        }
    }

    /// Squared norm in H1w x L2w: `sum (1 + rho_n) a_n^2 + sum b_n^2`
    /// (the H1w seminorm of psi_n is exactly rho_n by self-adjointness).
    pub fn norm_sq(&self, basis: &HermiteBasis<S>) -> S {
        let mut acc = S::zero();
        for (n, (&a, &b)) in self.a.iter().zip(&self.bdot).enumerate() {
            let rho = eigenvalue::<S>(basis.indices()[n]);
            acc += (S::one() + rho) * a * a + b * b;
        }
        acc
    }

    pub fn distance(&self, other: &HermiteState<S>, basis: &HermiteBasis<S>) -> S {
        let diff = HermiteState {
            a: self.a.iter().zip(&other.a).map(|(&x, &y)| x - y).collect(),
            bdot: self.bdot.iter().zip(&other.bdot).map(|(&x, &y)| x - y).collect(),
        };
        diff.norm_sq(basis).sqrt()
    }
}

/// Closed-form free flow: the zero mode drifts linearly, every other mode
/// rotates with angular frequency sqrt(rho_n). Exact per mode, a
/// one-parameter group.
pub fn free_evolution<S: Scalar>(
    state: &HermiteState<S>,
    basis: &HermiteBasis<S>,
    t: S,
) -> HermiteState<S> {
    let mut a = state.a.clone();
    let mut bdot = state.bdot.clone();
    for n in 0..basis.mode_count() {
        let rho = eigenvalue::<S>(basis.indices()[n]);
        if rho == S::zero() {
            a[n] = state.a[n] + state.bdot[n] * t;
            // velocity unchanged
        } else {
            let omega = rho.sqrt();
            let (s, c) = (omega * t).sin_cos();
            let (a0, b0) = (state.a[n], state.bdot[n]);
            a[n] = a0 * c + b0 * s / omega;
            bdot[n] = -omega * a0 * s + b0 * c;
        }
    }
    HermiteState { a, bdot }
}

/// Conserved quadratic functional of the free flow:
/// `E = sum rho_n a_n^2 + bdot_n^2`.
pub fn wave_energy<S: Scalar>(state: &HermiteState<S>, basis: &HermiteBasis<S>) -> S {
    let mut acc = S::zero();
    for (n, (&a, &b)) in state.a.iter().zip(&state.bdot).enumerate() {
        let rho = eigenvalue::<S>(basis.indices()[n]);
        acc += rho * a * a + b * b;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_hermite_small_orders() {
        // H_0 = 1, H_1 = 2x (from the Rodrigues formula by hand)
        assert_eq!(hermite_eval::<f64>(0, 0.7), 1.0);
        assert_eq!(hermite_eval::<f64>(1, 0.7), 1.4);
        // H_2(1) = 4 - 2 = 2
        assert_eq!(hermite_eval::<f64>(2, 1.0), 2.0);
        // H_3 = 8x^3 - 12x
        assert_eq!(hermite_eval::<f64>(3, 2.0), 8.0 * 8.0 - 24.0);
    }

    #[test]
    fn hermite_parity() {
        for n in 0..=10usize {
            for &x in &[0.3, 1.1, 2.7] {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let lhs = hermite_eval::<f64>(n, -x);
                let rhs = sign * hermite_eval::<f64>(n, x);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "n={n}");
            }
        }
    }

    #[test]
    fn normalized_matches_raw_scaling() {
        for n in 0..12usize {
            let norm = (2.0f64.powi(n as i32)
                * (1..=n).product::<usize>() as f64
                * std::f64::consts::PI.sqrt())
            .sqrt();
            for &x in &[0.0, 0.9, -1.7] {
                let a = hermite_normalized::<f64>(n, x);
                let b = hermite_eval::<f64>(n, x) / norm;
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn eigenvalue_formula() {
        assert_eq!(eigenvalue::<f64>([0, 0]), 0.0);
        assert_eq!(eigenvalue::<f64>([1, 0]), 2.0);
        assert_eq!(eigenvalue::<f64>([2, 3]), 10.0);
    }

    #[test]
    fn orthonormality_1d_to_machine_level() {
        let n_max = 16;
        // order n_max + 1 is the minimal exact rule for retained products
        for order in [n_max + 1, 2 * n_max + 8] {
            let basis = HermiteBasis::<f64>::new(Dim::One, n_max, order).unwrap();
            for i in 0..basis.mode_count() {
                for j in 0..basis.mode_count() {
                    let mut acc = 0.0;
                    for q in 0..basis.node_count() {
                        acc += basis.node_weight(q)
                            * basis.mode_at_node(i, q)
                            * basis.mode_at_node(j, q);
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (acc - want).abs() <= 1e-12,
                        "order {order}: <{i},{j}> = {acc}"
                    );
                }
            }
        }
    }

    #[test]
    fn orthonormality_2d() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::Two, 3).unwrap();
        for i in 0..basis.mode_count() {
            for j in 0..basis.mode_count() {
                let mut acc = 0.0;
                for q in 0..basis.node_count() {
                    acc += basis.node_weight(q)
                        * basis.mode_at_node(i, q)
                        * basis.mode_at_node(j, q);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spectral_eigen_residual() {
        // apply -(d2/dx2 - 2x d/dx) through the exact derivative recurrences
        // psi_n' = sqrt(2n) psi_{n-1} and check the residual against
        // 2n psi_n in the weighted norm.
        let n_max = 16;
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, n_max).unwrap();
        for n in 0..=n_max {
            let mut resid_sq = 0.0;
            for q in 0..basis.node_count() {
                let x = basis.node(q)[0];
                let p1 = if n >= 1 {
                    ((2 * n) as f64).sqrt() * hermite_normalized::<f64>(n - 1, x)
                } else {
                    0.0
                };
                let p2 = if n >= 2 {
                    ((2 * n) as f64 * (2 * (n - 1)) as f64).sqrt()
                        * hermite_normalized::<f64>(n - 2, x)
                } else {
                    0.0
                };
                let op = -(p2 - 2.0 * x * p1);
                let want = (2 * n) as f64 * hermite_normalized::<f64>(n, x);
                let r = op - want;
                resid_sq += basis.node_weight(q) * r * r;
            }
            assert!(resid_sq.sqrt() <= 1e-10, "mode {n}: residual {}", resid_sq.sqrt());
        }
    }

    #[test]
    fn analyze_synthesize_roundtrip() {
        let n_max = 8;
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, n_max).unwrap();
        // unit mode comes back as a unit vector
        let c2 = basis.unit_mode([2, 0]).unwrap();
        let samples = basis.synthesize_at_nodes(&c2).unwrap();
        let back = basis.analyze(&samples).unwrap();
        for (i, (&x, &y)) in back.iter().zip(&c2).enumerate() {
            assert!((x - y).abs() <= 1e-12, "mode {i}");
        }
        // cubic polynomial is inside the span: exact round trip
        let nodes: Vec<f64> = (0..basis.node_count()).map(|q| basis.node(q)[0]).collect();
        let poly: Vec<f64> = nodes.iter().map(|&x| 1.0 - 0.5 * x + 0.25 * x * x * x).collect();
        let coeffs = basis.analyze(&poly).unwrap();
        let again = basis.synthesize_at_nodes(&coeffs).unwrap();
        for (a, b) in poly.iter().zip(&again) {
            assert!((a - b).abs() <= 1e-10);
        }
        // a mode beyond the cutoff is orthogonal to everything retained
        let beyond: Vec<f64> =
            nodes.iter().map(|&x| hermite_normalized::<f64>(n_max + 1, x)).collect();
        let cb = basis.analyze(&beyond).unwrap();
        // quadrature of degree 2*n_max+8 integrates psi_{n_max+1} psi_k
        // exactly for all retained k
        assert!(cb.iter().all(|&c| c.abs() <= 1e-12), "{cb:?}");
    }

    #[test]
    fn analyze_rejects_wrong_length() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, 4).unwrap();
        assert!(basis.analyze(&[0.0; 3]).is_err());
        assert!(HermiteBasis::<f64>::new(Dim::One, 8, 8).is_err());
    }

    #[test]
    fn free_evolution_zero_mode_and_period() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, 6).unwrap();
        // (psi_0, 0) is stationary
        let s = HermiteState::new(basis.unit_mode([0, 0]).unwrap(), vec![0.0; 7]).unwrap();
        let evolved = free_evolution(&s, &basis, 3.7);
        assert_eq!(evolved, s);
        // (0, psi_0): the displacement grows linearly in t
        let s = HermiteState::new(vec![0.0; 7], basis.unit_mode([0, 0]).unwrap()).unwrap();
        let evolved = free_evolution(&s, &basis, 1.25);
        assert_eq!(evolved.a[0], 1.25);
        assert_eq!(evolved.bdot[0], 1.0);
        // (psi_n, 0) returns exactly after 2 pi / sqrt(rho_n)
        let s = HermiteState::new(basis.unit_mode([3, 0]).unwrap(), vec![0.0; 7]).unwrap();
        let period = 2.0 * std::f64::consts::PI / 6.0f64.sqrt();
        let evolved = free_evolution(&s, &basis, period);
        assert!(s.distance(&evolved, &basis) <= 1e-12);
    }

    #[test]
    fn free_evolution_is_a_group() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, 5).unwrap();
        let s = HermiteState::new(
            vec![0.3, -0.2, 0.5, 0.0, 0.1, -0.4],
            vec![0.0, 0.7, -0.1, 0.2, 0.0, 0.3],
        )
        .unwrap();
        let (t1, t2) = (0.37, 1.91);
        let one = free_evolution(&free_evolution(&s, &basis, t1), &basis, t2);
        let two = free_evolution(&s, &basis, t1 + t2);
        assert!(one.distance(&two, &basis) <= 1e-12);
    }

    #[test]
    fn wave_energy_conserved() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::One, 16).unwrap();
        let n = basis.mode_count();
        let a: Vec<f64> = (0..n).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let b: Vec<f64> = (0..n).map(|k| ((k * 3 % 7) as f64 - 3.0) * 0.05).collect();
        let s = HermiteState::new(a, b).unwrap();
        let e0 = wave_energy(&s, &basis);
        assert!(e0 > 0.0);
        let mut t = 0.0;
        while t <= 10.0 {
            let e = wave_energy(&free_evolution(&s, &basis, t), &basis);
            assert!((e - e0).abs() <= 1e-12 * e0, "t = {t}: drift {}", (e - e0).abs());
            t += 0.25;
        }
        // zero state has zero energy; (psi_n, 0) has energy rho_n
        assert_eq!(wave_energy(&HermiteState::zero(&basis), &basis), 0.0);
        let s = HermiteState::new(basis.unit_mode([4, 0]).unwrap(), vec![0.0; n]).unwrap();
        assert_eq!(wave_energy(&s, &basis), 8.0);
    }

    #[test]
    fn two_dimensional_modes_and_flow() {
        let basis = HermiteBasis::<f64>::with_default_order(Dim::Two, 3).unwrap();
        assert_eq!(basis.mode_count(), 16);
        let s = HermiteState::new(basis.unit_mode([2, 3]).unwrap(), vec![0.0; 16]).unwrap();
        // rho = 10: full period
        let period = 2.0 * std::f64::consts::PI / 10.0f64.sqrt();
        let evolved = free_evolution(&s, &basis, period);
        assert!(s.distance(&evolved, &basis) <= 1e-12);
        let e = wave_energy(&s, &basis);
        assert_eq!(e, 10.0);
    }
}

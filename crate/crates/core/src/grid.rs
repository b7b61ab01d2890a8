//! Uniform tensor grids on `[-L, L]^d` (d = 1 or 2), weight functions,
//! weighted inner products/norms, and Gauss–Hermite quadrature.
//!
//! Layout conventions (shared by every module downstream):
//! * 1D: point `i` sits at `z_i = -L + i h`, `i = 0..2N'`, so index 0 is `-L`
//!   and index `2N'` is `+L`.
//! * 2D: the flattened index sweeps the first coordinate fastest, ascending
//!   from `-L`, while the second coordinate descends row by row from `+L`.
//!   Flat index 0 therefore maps to `(-L, +L)`.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, DenseMat};
use crate::scalar::{cast, Scalar};

pub const MAX_QUADRATURE_ORDER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            _ => Err(Error::invalid(format!("dimension must be 1 or 2, got {d}"))),
        }
    }
}

/// Uniform grid on `[-L, L]^d` with an odd number of points per side.
#[derive(Debug, Clone)]
pub struct Grid<S> {
    dim: Dim,
    half_extent: S,
    n_half: usize,
    spacing: S,
}

impl<S: Scalar> Grid<S> {
    /// `n_half` is N': the grid has `2 N' + 1` points per side and spacing
    /// `h = L / N'`.
    pub fn new(dim: Dim, half_extent: S, n_half: usize) -> Result<Self> {
        if !(half_extent > S::zero()) {
            return Err(Error::invalid("grid half extent must be positive"));
        }
        if n_half < 1 {
            return Err(Error::invalid("grid needs at least one point off center"));
        }
        let spacing = half_extent / cast::<S>(n_half as f64);
        Ok(Grid { dim, half_extent, n_half, spacing })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn half_extent(&self) -> S {
        self.half_extent
    }

    pub fn spacing(&self) -> S {
        self.spacing
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    /// Points per side, always odd.
    pub fn points_per_side(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn n_total(&self) -> usize {
        match self.dim {
            Dim::One => self.points_per_side(),
            Dim::Two => self.points_per_side() * self.points_per_side(),
        }
    }

    /// 1D coordinate of axis index `i` in `0..points_per_side()`.
    pub fn axis_coord(&self, i: usize) -> S {
        let off = cast::<S>(i as f64) - cast::<S>(self.n_half as f64);
        off * self.spacing
    }

    /// Physical coordinates of a flattened index. The second component is
    /// zero in 1D.
    pub fn coords(&self, flat: usize) -> [S; 2] {
        match self.dim {
            Dim::One => [self.axis_coord(flat), S::zero()],
            Dim::Two => {
                let n = self.points_per_side();
                let col = flat % n;
                let row = flat / n;
                let x1 = self.axis_coord(col);
                let x2 = self.half_extent - cast::<S>(row as f64) * self.spacing;
                [x1, x2]
            }
        }
    }

    /// Flat index from (column, row) in 2D; `col` ascends with x1 and `row`
    /// descends with x2.
    pub fn flat_2d(&self, col: usize, row: usize) -> usize {
        debug_assert_eq!(self.dim, Dim::Two);
        row * self.points_per_side() + col
    }

    /// Trapezoid quadrature weight of a flat index (product form in 2D).
    pub fn trapezoid_weight(&self, flat: usize) -> S {
        let half = cast::<S>(0.5);
        let n = self.points_per_side();
        let axis_w = |i: usize| {
            if i == 0 || i == n - 1 {
                self.spacing * half
            } else {
                self.spacing
            }
        };
        match self.dim {
            Dim::One => axis_w(flat),
            Dim::Two => axis_w(flat % n) * axis_w(flat / n),
        }
    }

    /// Uniform cell volume `h^d`, the quadrature used for the unweighted
    /// training loss (keeps the discrete adjoint an exact transpose).
    pub fn cell_volume(&self) -> S {
        match self.dim {
            Dim::One => self.spacing,
            Dim::Two => self.spacing * self.spacing,
        }
    }

    /// Gradient of a grid field, centered in the interior and first-order
    /// one-sided at the boundary. Returns `d` component fields.
    pub fn gradient(&self, f: &[S]) -> Result<Vec<Vec<S>>> {
        if f.len() != self.n_total() {
            return Err(Error::invalid("gradient: field length mismatch"));
        }
        let n = self.points_per_side();
        let h = self.spacing;
        let two_h = h + h;
        match self.dim {
            Dim::One => {
                let mut g = vec![S::zero(); n];
                for i in 0..n {
                    g[i] = if i == 0 {
                        (f[1] - f[0]) / h
                    } else if i == n - 1 {
                        (f[n - 1] - f[n - 2]) / h
                    } else {
                        (f[i + 1] - f[i - 1]) / two_h
                    };
                }
                Ok(vec![g])
            }
            Dim::Two => {
                let mut g1 = vec![S::zero(); f.len()];
                let mut g2 = vec![S::zero(); f.len()];
                for row in 0..n {
                    for col in 0..n {
                        let id = self.flat_2d(col, row);
                        g1[id] = if col == 0 {
                            (f[self.flat_2d(1, row)] - f[id]) / h
                        } else if col == n - 1 {
                            (f[id] - f[self.flat_2d(n - 2, row)]) / h
                        } else {
                            (f[self.flat_2d(col + 1, row)] - f[self.flat_2d(col - 1, row)]) / two_h
                        };
                        // x2 ascends as the row index decreases
                        g2[id] = if row == 0 {
                            (f[id] - f[self.flat_2d(col, 1)]) / h
                        } else if row == n - 1 {
                            (f[self.flat_2d(col, n - 2)] - f[id]) / h
                        } else {
                            (f[self.flat_2d(col, row - 1)] - f[self.flat_2d(col, row + 1)]) / two_h
                        };
                    }
                }
                Ok(vec![g1, g2])
            }
        }
    }

    /// Evaluate a closure over all grid points into a field vector.
    pub fn field_from_fn(&self, f: impl Fn([S; 2]) -> S) -> Vec<S> {
        (0..self.n_total()).map(|i| f(self.coords(i))).collect()
    }
}

/// Spatial weight for the weighted L2/H1 norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFn<S> {
    /// `(1 + |x|^2)^lambda`, requires `lambda > 1`.
    Polynomial { lambda: S },
    /// `exp(-|x|^2)`.
    Gaussian,
}

impl<S: Scalar> WeightFn<S> {
    pub fn polynomial(lambda: S) -> Result<Self> {
        if !(lambda > S::one()) {
            return Err(Error::invalid("polynomial weight requires lambda > 1"));
        }
        Ok(WeightFn::Polynomial { lambda })
    }

    pub fn eval(&self, x: [S; 2]) -> S {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self {
            WeightFn::Polynomial { lambda } => (S::one() + r2).powf(*lambda),
            WeightFn::Gaussian => (-r2).exp(),
        }
    }
}

/// Trapezoidal approximation of the weighted inner product
/// `\int f g w dx` over `[-L, L]^d`.
pub fn weighted_inner<S: Scalar>(
    f: &[S],
    g: &[S],
    w: &WeightFn<S>,
    grid: &Grid<S>,
) -> Result<S> {
    let n = grid.n_total();
    if f.len() != n || g.len() != n {
        return Err(Error::invalid("weighted_inner: field length mismatch"));
    }
    let mut acc = S::zero();
    for i in 0..n {
        acc += f[i] * g[i] * w.eval(grid.coords(i)) * grid.trapezoid_weight(i);
    }
    Ok(acc)
}

/// Weighted L2 and H1 norms of a grid field. The H1 seminorm uses the
/// centered/one-sided gradient of [`Grid::gradient`].
pub fn weighted_norms<S: Scalar>(
    f: &[S],
    w: &WeightFn<S>,
    grid: &Grid<S>,
) -> Result<(S, S)> {
    let l2_sq = weighted_inner(f, f, w, grid)?;
    let mut h1_sq = l2_sq;
    for comp in grid.gradient(f)? {
        h1_sq += weighted_inner(&comp, &comp, w, grid)?;
    }
    Ok((l2_sq.sqrt(), h1_sq.sqrt()))
}

/// Gauss–Hermite rule: integrates `p(x) exp(-x^2)` exactly for polynomials
/// of degree up to `2 order - 1`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<S> {
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
}

impl<S> QuadratureRule<S> {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Orthonormal Hermite values (h_n(x), h_{n-1}(x)) under the weight
/// `exp(-x^2)`, by the stable normalized three-term recurrence.
fn hermite_orthonormal_pair<S: Scalar>(n: usize, x: S) -> (S, S) {
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
    (h, h_prev)
}

/// Golub–Welsch construction from the Jacobi matrix of the Hermite
/// recurrence (zero diagonal, off-diagonal `sqrt(k/2)`), with Newton
/// polishing of the nodes so polynomial exactness holds to machine level
/// even at high degrees.
pub fn gauss_hermite<S: Scalar>(order: usize) -> Result<QuadratureRule<S>> {
    if order < 1 {
        return Err(Error::invalid("quadrature order must be at least 1"));
    }
    if order > MAX_QUADRATURE_ORDER {
        return Err(Error::unsupported(format!(
            "quadrature order {order} above cap {MAX_QUADRATURE_ORDER}"
        )));
    }
    let sqrt_pi = S::PI().sqrt();
    if order == 1 {
        return Ok(QuadratureRule { nodes: vec![S::zero()], weights: vec![sqrt_pi] });
    }
    let mut j = DenseMat::zeros(order, order);
    let half = cast::<S>(0.5);
    for k in 1..order {
        let b = (cast::<S>(k as f64) * half).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = sym_eigen(&j)?;
    let mut nodes = eig.values;

    // Newton refinement: x <- x - h_n(x) / (sqrt(2n) h_{n-1}(x)), using
    // H_n' = 2n H_{n-1}.
    let deriv_factor = (cast::<S>(2.0) * cast::<S>(order as f64)).sqrt();
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (hn, hn1) = hermite_orthonormal_pair(order, *x);
            let dx = hn / (deriv_factor * hn1);
            *x = *x - dx;
        }
    }
    // Symmetrize: nodes come in +- pairs; force exact symmetry and zero the
    // middle node for odd orders so parity arguments hold bit-exactly.
    for k in 0..order / 2 {
        let m = order - 1 - k;
        let mag = (nodes[m] - nodes[k]) * half;
        nodes[k] = -mag;
        nodes[m] = mag;
    }
    if order % 2 == 1 {
        nodes[order / 2] = S::zero();
    }
    // w_i = 1 / (n h_{n-1}(x_i)^2) in the orthonormal normalization.
    let nf = cast::<S>(order as f64);
    let weights: Vec<S> = nodes
        .iter()
        .map(|&x| {
            let (_, hn1) = hermite_orthonormal_pair(order, x);
            S::one() / (nf * hn1 * hn1)
        })
        .collect();
    Ok(QuadratureRule { nodes, weights })
}

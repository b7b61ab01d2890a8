//! Assembly of the discrete second-order operator from coefficient fields.
//!
//! The operator acts on grid fields with zero ghost values outside the
//! domain: in 1D
//!
//! ```text
//! (K y)_i = theta_i y_i + alpha_i (y_{i+1} - y_{i-1}) / 2h
//!         + beta_i (y_{i-1} - 2 y_i + y_{i+1}) / h^2          (non-divergence)
//! ```
//!
//! and the 2D version adds the mixed term `2 beta_12` discretized with the
//! four-corner stencil `/(4 h^2)`. The divergence form replaces the second
//! derivative by flux differencing with face values of beta obtained by
//! arithmetic averaging; both forms agree for spatially constant beta.

use crate::error::{Error, Result};
use crate::grid::{Dim, Grid};
use crate::linalg::lstsq;
use crate::linalg::DenseMat;
use crate::scalar::{cast, Scalar};

/// Coefficients of the linear part at one time level.
///
/// `alpha` stores d components per point (component-major: all of alpha_1,
/// then alpha_2). `beta` stores the distinct entries of the symmetric matrix
/// per point: `[b11]` in 1D, `[b11, b12, b22]` component-major in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSlice<S> {
    pub alpha: Vec<S>,
    pub beta: Vec<S>,
    pub theta: Vec<S>,
}

impl<S: Scalar> CoefficientSlice<S> {
    pub fn constant(grid: &Grid<S>, alpha: &[S], beta: &[S], theta: S) -> Self {
        let n = grid.n_total();
        let d = grid.dim().as_usize();
        let nb = Self::beta_components(grid.dim());
        assert_eq!(alpha.len(), d);
        assert_eq!(beta.len(), nb);
        let mut a = Vec::with_capacity(d * n);
        for k in 0..d {
            a.extend(std::iter::repeat(alpha[k]).take(n));
        }
        let mut b = Vec::with_capacity(nb * n);
        for k in 0..nb {
            b.extend(std::iter::repeat(beta[k]).take(n));
        }
        CoefficientSlice { alpha: a, beta: b, theta: vec![theta; n] }
    }

    pub fn zeros(grid: &Grid<S>) -> Self {
        let d = grid.dim().as_usize();
        let z = vec![S::zero(); d];
        let b = vec![S::zero(); Self::beta_components(grid.dim())];
        Self::constant(grid, &z, &b, S::zero())
    }

    pub fn beta_components(dim: Dim) -> usize {
        match dim {
            Dim::One => 1,
            Dim::Two => 3,
        }
    }

    pub fn validate(&self, grid: &Grid<S>) -> Result<()> {
        let n = grid.n_total();
        let d = grid.dim().as_usize();
        if self.alpha.len() != d * n
            || self.beta.len() != Self::beta_components(grid.dim()) * n
            || self.theta.len() != n
        {
            return Err(Error::invalid("coefficient slice shape mismatch"));
        }
        let finite = |v: &[S]| v.iter().all(|x| x.is_finite());
        if !finite(&self.alpha) || !finite(&self.beta) || !finite(&self.theta) {
            return Err(Error::invalid("coefficient slice contains non-finite values"));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha_at(&self, comp: usize, i: usize, n: usize) -> S {
        self.alpha[comp * n + i]
    }

    #[inline]
    pub fn beta_at(&self, comp: usize, i: usize, n: usize) -> S {
        self.beta[comp * n + i]
    }
}

/// Which discretization of the second-order term to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorForm {
    /// `beta : D^2 y` with pointwise beta.
    NonDivergence,
    /// `div(beta grad y)` with arithmetic face averages of beta.
    Divergence,
}

/// Compressed sparse rows; bandwidth is at most 3 (1D) or 9 (2D).
#[derive(Debug, Clone)]
pub struct OperatorMatrix<S> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<S>,
}

impl<S: Scalar> OperatorMatrix<S> {
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![S::zero(); self.n];
        for i in 0..self.n {
            let mut acc = S::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x without forming the transpose.
    pub fn apply_transpose(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![S::zero(); self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.vals[k] * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMat<S> {
        let mut m = DenseMat::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] += self.vals[k];
            }
        }
        m
    }
}

struct CsrBuilder<S> {
    n: usize,
    rows: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> CsrBuilder<S> {
    fn new(n: usize) -> Self {
        CsrBuilder { n, rows: vec![Vec::new(); n] }
    }

    fn add(&mut self, i: usize, j: usize, v: S) {
        if v != S::zero() {
            self.rows[i].push((j, v));
        }
    }

    fn finish(mut self) -> OperatorMatrix<S> {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &mut self.rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, S)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == j {
                        last.1 += v;
                        continue;
                    }
                }
                merged.push((j, v));
            }
            for (j, v) in merged {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        OperatorMatrix { n: self.n, row_ptr, col_idx, vals }
    }
}

/// 1D assembly. Ghost values beyond the endpoints are zero, so boundary rows
/// simply drop the out-of-range neighbor contributions.
pub fn assemble_kdelta_1d<S: Scalar>(
    c: &CoefficientSlice<S>,
    grid: &Grid<S>,
    form: OperatorForm,
) -> Result<OperatorMatrix<S>> {
    if grid.dim() != Dim::One {
        return Err(Error::invalid("assemble_kdelta_1d requires a 1D grid"));
    }
    c.validate(grid)?;
    let n = grid.n_total();
    let h = grid.spacing();
    let h2 = h * h;
    let two_h = h + h;
    let half = cast::<S>(0.5);
    let mut b = CsrBuilder::new(n);
    for i in 0..n {
        let bi = c.beta[i];
        let ai = c.alpha[i];
        b.add(i, i, c.theta[i]);
        if i > 0 {
            b.add(i, i - 1, -ai / two_h);
        }
        if i + 1 < n {
            b.add(i, i + 1, ai / two_h);
        }
        match form {
            OperatorForm::NonDivergence => {
                b.add(i, i, -(bi + bi) / h2);
                if i > 0 {
                    b.add(i, i - 1, bi / h2);
                }
                if i + 1 < n {
                    b.add(i, i + 1, bi / h2);
                }
            }
            OperatorForm::Divergence => {
                // face values: ghost beta extends by replication
                let b_left = if i > 0 { (bi + c.beta[i - 1]) * half } else { bi };
                let b_right = if i + 1 < n { (bi + c.beta[i + 1]) * half } else { bi };
                b.add(i, i, -(b_left + b_right) / h2);
                if i > 0 {
                    b.add(i, i - 1, b_left / h2);
                }
                if i + 1 < n {
                    b.add(i, i + 1, b_right / h2);
                }
            }
        }
    }
    Ok(b.finish())
}

/// 2D assembly with all six terms: reaction, two advection components, the
/// mixed `2 beta_12` corner stencil, and both axis second derivatives.
pub fn assemble_kdelta_2d<S: Scalar>(
    c: &CoefficientSlice<S>,
    grid: &Grid<S>,
    form: OperatorForm,
) -> Result<OperatorMatrix<S>> {
    if grid.dim() != Dim::Two {
        return Err(Error::invalid("assemble_kdelta_2d requires a 2D grid"));
    }
    c.validate(grid)?;
    let n_side = grid.points_per_side();
    let n = grid.n_total();
    let h = grid.spacing();
    let h2 = h * h;
    let two_h = h + h;
    let four_h2 = cast::<S>(4.0) * h2;
    let half = cast::<S>(0.5);
    let two = cast::<S>(2.0);
    let mut b = CsrBuilder::new(n);

    // neighbor flat indices in the +x1/-x1 and +x2/-x2 directions; None
    // means the ghost region (value zero).
    let nb = |col: usize, row: usize, dc: isize, dr: isize| -> Option<usize> {
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
            let a1 = c.alpha_at(0, i, n);
            let a2 = c.alpha_at(1, i, n);
            let b11 = c.beta_at(0, i, n);
            let b12 = c.beta_at(1, i, n);
            let b22 = c.beta_at(2, i, n);
            b.add(i, i, c.theta[i]);

            // advection: x1 ascends with col, x2 descends with row
            if let Some(j) = nb(col, row, 1, 0) {
                b.add(i, j, a1 / two_h);
            }
            if let Some(j) = nb(col, row, -1, 0) {
                b.add(i, j, -a1 / two_h);
            }
            if let Some(j) = nb(col, row, 0, -1) {
                b.add(i, j, a2 / two_h);
            }
            if let Some(j) = nb(col, row, 0, 1) {
                b.add(i, j, -a2 / two_h);
            }

            // mixed term 2 b12 * dx1 dx2 via the corner stencil
            let cross = two * b12 / four_h2;
            if let Some(j) = nb(col, row, 1, -1) {
                b.add(i, j, cross);
            }
            if let Some(j) = nb(col, row, -1, 1) {
                b.add(i, j, cross);
            }
            if let Some(j) = nb(col, row, 1, 1) {
                b.add(i, j, -cross);
            }
            if let Some(j) = nb(col, row, -1, -1) {
                b.add(i, j, -cross);
            }

            match form {
                OperatorForm::NonDivergence => {
                    b.add(i, i, -(b11 + b11 + b22 + b22) / h2);
                    if let Some(j) = nb(col, row, 1, 0) {
                        b.add(i, j, b11 / h2);
                    }
                    if let Some(j) = nb(col, row, -1, 0) {
                        b.add(i, j, b11 / h2);
                    }
                    if let Some(j) = nb(col, row, 0, -1) {
                        b.add(i, j, b22 / h2);
                    }
                    if let Some(j) = nb(col, row, 0, 1) {
                        b.add(i, j, b22 / h2);
                    }
                }
                OperatorForm::Divergence => {
                    let face = |other: Option<usize>, comp: usize| -> S {
                        let own = c.beta_at(comp, i, n);
                        match other {
                            Some(j) => (own + c.beta_at(comp, j, n)) * half,
                            None => own,
                        }
                    };
                    let bxp = face(nb(col, row, 1, 0), 0);
                    let bxm = face(nb(col, row, -1, 0), 0);
                    let byp = face(nb(col, row, 0, -1), 2);
                    let bym = face(nb(col, row, 0, 1), 2);
                    b.add(i, i, -(bxp + bxm + byp + bym) / h2);
                    if let Some(j) = nb(col, row, 1, 0) {
                        b.add(i, j, bxp / h2);
                    }
                    if let Some(j) = nb(col, row, -1, 0) {
                        b.add(i, j, bxm / h2);
                    }
                    if let Some(j) = nb(col, row, 0, -1) {
                        b.add(i, j, byp / h2);
                    }
                    if let Some(j) = nb(col, row, 0, 1) {
                        b.add(i, j, bym / h2);
                    }
                }
            }
        }
    }
    Ok(b.finish())
}

/// Dimension dispatching convenience.
pub fn assemble_kdelta<S: Scalar>(
    c: &CoefficientSlice<S>,
    grid: &Grid<S>,
    form: OperatorForm,
) -> Result<OperatorMatrix<S>> {
    match grid.dim() {
        Dim::One => assemble_kdelta_1d(c, grid, form),
        Dim::Two => assemble_kdelta_2d(c, grid, form),
    }
}

/// Outcome of a mesh-refinement consistency study.
#[derive(Debug, Clone)]
pub enum ConsistencyReport<S> {
    /// Errors at machine scale at every resolution (exactness class).
    Exact { max_error: S },
    /// Least-squares slope of log(error) against log(h).
    Order { slope: S, errors: Vec<(S, S)> },
}

/// Measure the convergence order of an operator discretization against an
/// analytic reference, over interior points only.
///
/// `builder` maps a grid to the assembled operator plus the test field;
/// `reference` is the analytic operator value at a point.
pub fn consistency_order<S: Scalar>(
    grids: &[Grid<S>],
    builder: &dyn Fn(&Grid<S>) -> Result<(OperatorMatrix<S>, Vec<S>)>,
    reference: &dyn Fn([S; 2]) -> S,
) -> Result<ConsistencyReport<S>> {
    if grids.len() < 3 {
        return Err(Error::invalid("consistency_order needs at least 3 resolutions"));
    }
    let mut pts = Vec::new();
    for g in grids {
        let (op, field) = builder(g)?;
        let applied = op.apply(&field);
        let n_side = g.points_per_side();
        let mut max_err = S::zero();
        let interior = |i: usize| -> bool {
            match g.dim() {
                Dim::One => i > 0 && i + 1 < n_side,
                Dim::Two => {
                    let col = i % n_side;
                    let row = i / n_side;
                    col > 0 && col + 1 < n_side && row > 0 && row + 1 < n_side
                }
            }
        };
        for i in 0..g.n_total() {
            if interior(i) {
                let err = (applied[i] - reference(g.coords(i))).abs();
                max_err = max_err.max(err);
            }
        }
        pts.push((g.spacing(), max_err));
    }
    let machine_floor = cast::<S>(1e-12);
    if pts.iter().all(|&(_, e)| e <= machine_floor) {
        let max_error = pts.iter().fold(S::zero(), |m, &(_, e)| m.max(e));
        return Ok(ConsistencyReport::Exact { max_error });
    }
    // least-squares slope of ln e vs ln h
    let logs: Vec<(S, S)> = pts.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = cast::<S>(logs.len() as f64);
    let sx: S = logs.iter().map(|p| p.0).sum();
    let sy: S = logs.iter().map(|p| p.1).sum();
    let sxx: S = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: S = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(ConsistencyReport::Order { slope, errors: pts })
}

/// Helper used by tests and the CLI: dyadically refined grids.
pub fn dyadic_grids<S: Scalar>(
    dim: Dim,
    half_extent: S,
    base_n_half: usize,
    levels: usize,
) -> Result<Vec<Grid<S>>> {
    (0..levels)
        .map(|k| Grid::new(dim, half_extent, base_n_half << k))
        .collect()
}

/// Fit c0 + c1 h^p through measured errors — used nowhere critical, but kept
/// for the CLI convergence table.
pub fn richardson_order<S: Scalar>(errors: &[(S, S)]) -> Result<S> {
    if errors.len() < 3 {
        return Err(Error::invalid("need at least 3 points"));
    }
    let rows: Vec<Vec<S>> = errors.iter().map(|&(h, _)| vec![S::one(), h.ln()]).collect();
    let rhs: Vec<S> = errors.iter().map(|&(_, e)| e.ln()).collect();
    let a = DenseMat::from_rows(rows);
    let c = lstsq(&a, &rhs)?;
    Ok(c[1])
}

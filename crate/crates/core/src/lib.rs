//! Numerical toolkit for two coupled problems on truncated/weighted domains:
//!
//! 1. Supervised training of the coefficient fields of a semilinear parabolic
//!    equation: forward IMEX integration ([`parabolic`]), exact discrete
//!    adjoint gradients ([`adjoint`]) and projected gradient descent under
//!    box/ellipticity constraints ([`optimize`]).
//! 2. Constructive approximate control of a bilinear wave equation in the
//!    Ornstein–Uhlenbeck eigenbasis: Hermite spectral machinery ([`hermite`])
//!    and piecewise-constant control synthesis ([`bilinear`]).
//!
//! All core math is generic over the scalar type through [`scalar::Scalar`];
//! concrete `f64` aliases for the main entry types live at the crate root.

pub mod adjoint;
pub mod bilinear;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod linalg;
pub mod optimize;
pub mod parabolic;
pub mod scalar;
pub mod stencil;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision for the CLI and the test suites.
pub type Real = f64;

pub type Grid64 = grid::Grid<f64>;
pub type QuadratureRule64 = grid::QuadratureRule<f64>;
pub type CoefficientSlice64 = stencil::CoefficientSlice<f64>;
pub type OperatorMatrix64 = stencil::OperatorMatrix<f64>;
pub type ParabolicProblem64 = parabolic::ParabolicProblem<f64>;
pub type Trajectory64 = parabolic::Trajectory<f64>;
pub type CoefficientFields64 = parabolic::CoefficientFields<f64>;
pub type ConstraintBox64 = optimize::ConstraintBox<f64>;
pub type HermiteBasis64 = hermite::HermiteBasis<f64>;
pub type HermiteState64 = hermite::HermiteState<f64>;
pub type ControlLaw64 = bilinear::ControlLaw<f64>;
pub type TrigPoly64 = bilinear::TrigPoly<f64>;
pub type SynthesisPlan64 = bilinear::SynthesisPlan<f64>;

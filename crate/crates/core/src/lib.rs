//! Boundary traces of the two-dimensional wave equation and their explicit
//! back-projection inversion.
//!
//! The crate simulates Dirichlet, Neumann and mixed boundary traces of
//!
//! ```text
//! (∂_t² − Δ) u = 0,   u(·,0) = f,   ∂_t u(·,0) = 0
//! ```
//!
//! on circular, elliptical and general smooth convex detector curves, and
//! recovers the initial pressure `f` by back-projecting the Abel-filtered
//! traces:
//!
//! ```text
//! f(x) = (1/π) ∫_{∂Ω} ∫_{‖x−y‖}^∞ ∂_ν u(y,t) / √(t² − ‖x−y‖²) dt dσ(y)  (+ K_Ω f(x))
//! ```
//!
//! The smoothing error term `K_Ω` vanishes for circles and ellipses; the
//! [`kernel`] module evaluates it numerically for general convex domains.
//!
//! Module map:
//!
//! - [`geometry`]: domains, chord lengths, detector arrays
//! - [`field`]: sampled 2D scalar fields on square grids
//! - [`transforms`]: spherical means, chord profiles, Hilbert transform, s-derivatives
//! - [`forward`]: boundary traces via spherical means or a spectral propagator
//! - [`inversion`]: product-integration Abel filter and back-projection formulas
//! - [`kernel`]: the error operator `K_Ω` and bilinear identity checks
//! - [`phantoms`]: smooth compactly supported test phantoms
//! - [`pipeline`]: run configuration, file formats, metrics and experiment drivers

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod inversion;
pub mod kernel;
pub mod phantoms;
pub mod pipeline;
pub mod point;
pub mod transforms;

pub use error::{Error, Result};
pub use field::{GridSpec, ScalarField2D};
pub use forward::{TraceKind, TraceMatrix};
pub use geometry::{ConvexDomain, DetectorArray, WeightRule};
pub use point::Point;

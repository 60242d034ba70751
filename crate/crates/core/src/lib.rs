//! Sparse 3D object reconstruction from the complex object field recorded at
//! a single hologram plane.
//!
//! The forward model sums Fresnel-propagated object slices at the detector
//! ([`propagation`]). Holographic replay is its Hermitian adjoint, which only
//! approximates the object; [`solver::fista`] recovers a sparse volume that is
//! near zero away from the true object support.

pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod propagation;
pub mod regularizers;
pub mod solver;

pub use error::{Error, Result};
pub use field::{
    frobenius_norm, inner_product_2d, inner_product_3d, ComplexField, Grid2D, OpticalSetup,
    Volume,
};
pub use propagation::{PlanOptions, PropagatorPlan, TransferKind};

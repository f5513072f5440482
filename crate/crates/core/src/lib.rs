//! Inverse problems for transport and wave equations on Minkowski
//! spacetime: light ray transforms, spectral inversion and Boltzmann
//! forward models on a periodic lattice.

pub mod cli;
pub mod error;
pub mod fft;
pub mod field;
pub mod interp;
pub mod io;
pub mod lattice;
pub mod lightray;
pub mod norm;
pub mod quadrature;
pub mod reconstruct;
pub mod scalar;
pub mod spectral;
pub mod transport;
pub mod waves;

pub use error::{Error, Result};
pub use field::{CauchyData, KineticField, RayData, RaySlice, ScalarField};
pub use lattice::{Lattice, TimeAxis};
pub use norm::{l2_inner, rel_l2, sobolev_norm, L2Inner};
pub use quadrature::{build_direction_quadrature, DirectionQuadrature};
pub use scalar::{Scalar, C64};

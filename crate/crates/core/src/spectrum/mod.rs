//! Grids, finite-difference assembly and the truncated eigenbasis.

mod assembly;
mod basis;
mod eigen;
mod grid;
mod spec;

pub use assembly::{assemble_operator, energy_inner_product, DiscreteOperator, SymBand};
pub use basis::{compute_spectrum, SpectralBasis, BASIS_VERSION, CLUSTER_TOL};
pub use grid::{build_grid, l2_inner_product, unit_ball_volume, Grid, LaplacianStencil, MIN_RESOLUTION};
pub use spec::{BoundaryCondition, Domain, OperatorSpec, MAX_DIM};

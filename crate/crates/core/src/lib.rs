//! Oriented bond percolation on the rotated square lattice with vertical
//! enhancement bonds.

pub mod coupling;
pub mod error;
pub mod estimators;
pub mod front;
pub mod lattice;
pub mod oracle;
pub mod renorm;

pub use error::{Error, Result};
pub use front::{BoundaryMode, FrontState, RowOccupancy, SurvivalSemantics, Trajectory};
pub use lattice::{Bond, BondKind, Params, RandomField, Site};

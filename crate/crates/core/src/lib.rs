//! Hydration-site prediction cast as a quadratic unconstrained binary
//! optimization problem.
//!
//! The pipeline ingests a water-density grid and crystallographic waters,
//! builds a reduced lattice of candidate sites, fits an equal-variance
//! Gaussian mixture to the density by selecting a subset of sites (the QUBO),
//! solves it, and scores the decoded water positions.

pub mod density;
pub mod error;
pub mod evaluation;
pub mod geom;
pub mod pipeline;
pub mod placement;
pub mod qubo;
pub mod resources;
pub mod seed;
pub mod sitegrid;
pub mod solvers;
pub mod structure;

pub use density::DensityGrid;
pub use error::{Error, Result};
pub use evaluation::MetricsReport;
pub use geom::Vec3;
pub use placement::{PcaProjection, WaterPlacement};
pub use qubo::{IsingModel, QuboModel};
pub use sitegrid::SiteGrid;
pub use solvers::{Bitstring, SolveResult};
pub use structure::{CrystalWaters, PocketBox};

//! Linearized Poisson-Boltzmann electrostatics with an implicit boundary
//! integral method on level set molecular surfaces.
//!
//! The numerical core is generic over the floating point type through
//! [`Real`]; the `*64` / `*32` aliases below fix the precision.

pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod molecule;
pub mod narrowband;
pub mod pipeline;
pub mod scalar;
pub mod solver;
pub mod summation;
pub mod surface;
pub mod vec3;

pub use config::{Padding, RunConfig};
pub use energy::{BenchmarkErrors, EnergyReport, Kirkwood};
pub use error::{Error, Result};
pub use grid::{Grid, GridField};
pub use kernels::{BlockKernels, Dielectrics};
pub use molecule::{bounding_box, parse_pqr, read_pqr, Atom, Cube, Molecule};
pub use narrowband::Narrowband;
pub use pipeline::{bench_ion, run_full, RunOutput, RunReport};
pub use solver::{BiSystem, GmresParams, SolveResult};
pub use summation::{PointCloudOperator, SummationConfig, SummationKind, TreeParams};
pub use surface::{SignedDistanceField, SurfaceConfig};
pub use scalar::Real;
pub use vec3::Vec3;

pub type Vec3f64 = Vec3<f64>;
pub type Molecule64 = Molecule<f64>;
pub type Grid64 = Grid<f64>;
pub type GridField64 = GridField<f64>;
pub type Dielectrics64 = Dielectrics<f64>;
pub type Narrowband64 = Narrowband<f64>;
pub type BiSystem64 = BiSystem<f64>;
pub type Kirkwood64 = Kirkwood<f64>;

pub type Vec3f32 = Vec3<f32>;
pub type Molecule32 = Molecule<f32>;
pub type Grid32 = Grid<f32>;
pub type GridField32 = GridField<f32>;
pub type Dielectrics32 = Dielectrics<f32>;
pub type Narrowband32 = Narrowband<f32>;
pub type BiSystem32 = BiSystem<f32>;
pub type Kirkwood32 = Kirkwood<f32>;

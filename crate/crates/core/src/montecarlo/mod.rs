//! Reproducible path simulation: per-path random streams, ensembles with
//! streaming per-step statistics, and coarse/fine coupling for strong errors.

pub mod ensemble;
pub mod lattice;
pub mod rng;
pub mod strong;

pub use ensemble::{
    simulate_coupled_pair, simulate_ensemble, CoupledConfig, CoupledReport, EnsembleConfig,
    Functional, FunctionalTrace, InitialState, PathEnsemble, StepStats,
};
pub use lattice::BrownianLattice;
pub use rng::RngSpec;
pub use strong::{couple_strong_error, LevelError, Reference, StrongErrorConfig, StrongErrorResult};

/// Paths per work unit. Fixed so that results do not depend on the number of
/// worker threads.
pub const CHUNK: usize = 64;

/// States beyond this norm count as diverged for unprojected schemes.
pub const DIVERGENCE_CAP: f64 = 1e12;

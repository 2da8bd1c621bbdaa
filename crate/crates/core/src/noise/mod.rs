//! The Markov driver `m`, its Poisson solves, and the objects of the limit
//! equation derived from it.

mod chain;
mod model;
mod path;
mod stats;

pub use chain::{solve_poisson, stationary_law, validate_generator, PoissonSolver};
pub use model::NoiseModel;
pub use path::{sample_path, sample_path_seeded, NoisePath};
pub use stats::{NoiseStatistics, EIGEN_CLIP, PSD_TOLERANCE, RETAIN_RATIO};

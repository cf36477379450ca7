//! File formats: instances, solutions, trajectories and model weights.

pub mod generate;
pub mod solution;
pub mod trajectory;
pub mod vrp;
pub mod weights;

pub use generate::{generate, generate_instance, Generated, GeneratorConfig};
pub use solution::{read_solution, write_solution};
pub use trajectory::{read_trajectory, write_trajectory, Trajectory, TrajectoryMeta, TrajectoryPoint, TrajectoryRecord};
pub use vrp::{parse_vrp, write_vrp};
pub use weights::{load_weights, save_weights};

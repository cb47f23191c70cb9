//! Noise distributions with exact CDFs and noise-domain partitions.

mod distribution;
mod partition;

pub use distribution::{NoiseComponent, NoiseModel};
pub use partition::{
    optimal_partition_affine, optimal_partition_multiplicative, uniform_noise_grid, NoiseCell,
    PartitionPair, MAX_CELLS_PER_COMPONENT,
};

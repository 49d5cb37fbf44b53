//! DEM grids, raster I/O, synthetic terrain, and the data protocol that turns
//! a full-resolution surface into training, prior, and evaluation grids.

pub mod dataset;
pub mod dem;
pub mod prior;
pub mod protocol;
pub mod scene;
pub mod synth;

pub use dataset::{grid_to_dataset, Dataset, NormStats};
pub use dem::{read_asc, write_asc, DemGrid};
pub use prior::{bilinear_prior, BilinearPrior};
pub use protocol::{downsample, inject_noise};
pub use scene::{build_scene, split_noise_params, NoiseMode, Scene};
pub use synth::{hillshade, place_crater, shadow_uncertainty, synth_terrain, Crater, SynthParams};

//! Stream encoders: shared residual trunk machinery, the visual backbone
//! plus temporal network, and the audio encoder.

pub mod audio;
pub mod block;
pub mod visual;

pub use audio::AudioEncoder;
pub use block::ResidualBlock;
pub use visual::{TemporalNet, VisualBackbone, VisualBackboneOutput};

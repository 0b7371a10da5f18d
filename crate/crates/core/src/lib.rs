//! Photon-number statistics toolkit.
//!
//! Closed-form models for thermal, coherent and Fock light under splitting,
//! loss, noisy photon-number-resolving detection and conditioning, each paired
//! with a seeded Monte Carlo sampler that can check it independently.
//!
//! - [`states`]: canonical distributions, moments, g², convolution, visibility.
//! - [`mc_oracle`]: reproducible sampling of sources through splitters and detectors.
//! - [`plasmon_scatter`]: hybrid photonic/plasmonic field statistics versus polarization.
//! - [`wavepacket`]: thermal-splitter correlations, far-field double-slit models,
//!   the classical envelope quadrature and vacuum pre-selection.
//! - [`sensing`]: plasmon-subtracted statistics and conditional phase sensing.
//! - [`imaging`]: single-pixel photocounting model and TV compressive reconstruction.

pub mod error;
pub mod imaging;
pub mod io;
pub mod mc_oracle;
pub mod plasmon_scatter;
pub mod sensing;
pub mod special;
pub mod states;
pub mod wavepacket;

pub use error::{Error, Result};
pub use states::{PhotonNumberDistribution, SourceSpec};

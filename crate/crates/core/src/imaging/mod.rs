//! Single-pixel quantum imaging with photon-number-resolving detection.
//!
//! Each binary pattern `Q_t` projects the scene onto a thermal beam of mean
//! `n_t = Q_t . s0`, which a fiber coupler of angle `theta` splits between two
//! noisy detectors. Measurements can be reduced to mean intensities,
//! post-selected `N`-photon frequencies or photon-subtracted conditional
//! intensities, then inverted with total-variation compressive sensing.

mod cs;
mod model;
mod scene;

pub use cs::{cs_reconstruct, total_variation, CsConfig, ReconstructionResult};
pub use model::{
    acquire, acquire_exact, conditional_g2_a, conditional_mean_a, conditional_mean_a_mixture, joint_pmf_noisy,
    marginal_a, marginal_b, snr_post, snr_sub, AcquisitionMode, TwoArmDetection,
};
pub use scene::{image_snr, phantom, SensingMatrix, SensingScene};

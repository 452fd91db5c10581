//! Ring keys in the Fourier domain of one channel, injected into the noisy
//! latent at the embedding step and detected after DDIM inversion.

mod detect;
mod inject;
mod key;

pub use detect::{detect, detection_statistic, identify, DetectionScore, Identification};
pub use inject::{channel_average, embed, embed_multi, make_delta, make_delta_multi, Embedding, Scenario};
pub use key::{
    calibration_batch, generate_key, generate_sector_keys, ring_rms, KeyGeometry, Mask, MaskedBin,
    MultiKeySet, Sector, WatermarkKey, KEY_FORMAT_VERSION,
};

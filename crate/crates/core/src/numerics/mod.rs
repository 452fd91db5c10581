//! Deterministic numerical substrate shared by the rest of the crate.

mod fourier;
mod rank;
mod sphere;

pub use fourier::{dft2, idft2, InverseDft, Spectrum, IMAGINARY_RESIDUAL_LIMIT};
pub use rank::{numerical_rank, RankEstimate, DEFAULT_RANK_THRESHOLD};
pub use sphere::sample_unit_sphere;

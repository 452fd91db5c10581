//! Watermarking for diffusion models by perturbing the noisy sample at an
//! intermediate timestep, where the denoiser's Jacobian is low rank.
//!
//! The denoiser is the exact posterior mean of a mixture of low-rank
//! Gaussians, so every quantity the method depends on (posterior mean,
//! Jacobian, DDIM trajectories) is available in closed form.
//!
//! Layout:
//! - [`numerics`]: 2-D DFT, unit-sphere sampling, numerical rank.
//! - [`diffusion`]: noise schedule, analytic denoiser, DDIM sampling and inversion.
//! - [`watermark`]: ring keys, injection, the masked-spectrum detection statistic.
//! - [`attacks`]: distortion, purification and averaging attacks.
//! - [`metrics`]: PSNR, SSIM, ROC.
//! - [`theory`]: Monte-Carlo checks of the consistency and detectability bounds.

pub mod attacks;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod tensor;
pub mod theory;
pub mod watermark;

pub use error::{Error, Result};
pub use tensor::{ImageTensor, Shape};

//! VP diffusion with an analytic posterior-mean denoiser.

mod ddim;
mod instrument;
mod prior;
mod schedule;

pub use ddim::{ddim_run, ddim_step, ddim_step_between, ddim_traverse, Direction};
pub use instrument::{rank_ratio_curve, RankRatioPoint};
pub use prior::{
    forward_noise, DenoiserEval, GaussianComponent, GaussianMixturePrior, JacobianMode,
    RandomPriorSpec,
};
pub use schedule::NoiseSchedule;

/// Anything that predicts the clean sample and the noise from `x_t`.
///
/// Implementations must satisfy `x = √α·mean + √(1−α)·noise`.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;

    fn predict(&self, x: &[f64], alpha: f64) -> crate::Result<Prediction>;
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Posterior mean estimate of x₀.
    pub mean: Vec<f64>,
    /// Implied noise ε.
    pub noise: Vec<f64>,
}

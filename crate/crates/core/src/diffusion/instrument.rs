use rand::Rng;

use super::{forward_noise, GaussianMixturePrior, JacobianMode, NoiseSchedule};
use crate::numerics::numerical_rank;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RankRatioPoint {
    pub t: usize,
    pub mean_rank_ratio: f64,
    pub mean_sigma_max: f64,
}

/// Average numerical rank ratio and spectral norm of the posterior-mean
/// Jacobian at each grid step, over the given clean samples noised to that step.
pub fn rank_ratio_curve<R: Rng + ?Sized>(
    prior: &GaussianMixturePrior,
    schedule: &NoiseSchedule,
    clean_samples: &[Vec<f64>],
    t_grid: &[usize],
    rel_threshold: f64,
    rng: &mut R,
) -> Result<Vec<RankRatioPoint>> {
    if clean_samples.is_empty() && !t_grid.is_empty() {
        return Err(crate::Error::Empty("clean_samples"));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        schedule.check_step(t)?;
        let alpha = schedule.alpha(t);
        let (mut ratio, mut sigma) = (0.0, 0.0);
        for x0 in clean_samples {
            let xt = forward_noise(x0, alpha, rng);
            let jac = prior.jacobian(&xt, alpha, JacobianMode::Analytic)?;
            let est = numerical_rank(&jac, rel_threshold)?;
            ratio += est.ratio;
            sigma += est.sigma_max;
        }
        let n = clean_samples.len() as f64;
        out.push(RankRatioPoint {
            t,
            mean_rank_ratio: ratio / n,
            mean_sigma_max: sigma / n,
        });
    }
    Ok(out)
}

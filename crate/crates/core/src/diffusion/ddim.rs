use super::{Denoiser, NoiseSchedule};
use crate::{Error, ImageTensor, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Sampling: t → t − 1.
    Denoise,
    /// Inversion: t → t + 1.
    Invert,
}

/// x_dst = √α_dst·f(x) + √(1−α_dst)·ε(x), with the denoiser evaluated at
/// the source level. Sampling and inversion are both this recurrence.
pub fn ddim_step_between<D: Denoiser + ?Sized>(
    denoiser: &D,
    x: &[f64],
    alpha_src: f64,
    alpha_dst: f64,
) -> Result<Vec<f64>> {
    let pred = denoiser.predict(x, alpha_src)?;
    let (sa, sn) = (alpha_dst.sqrt(), (1.0 - alpha_dst).sqrt());
    Ok(pred
        .mean
        .iter()
        .zip(&pred.noise)
        .map(|(f, e)| sa * f + sn * e)
        .collect())
}

/// One DDIM step from `t`; [`Direction::Denoise`] needs 1 ≤ t ≤ T and
/// [`Direction::Invert`] needs t ≤ T − 1.
pub fn ddim_step<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x: &ImageTensor,
    t: usize,
    direction: Direction,
) -> Result<ImageTensor> {
    schedule.check_step(t)?;
    let target = match direction {
        Direction::Denoise if t >= 1 => t - 1,
        Direction::Invert if t < schedule.steps() => t + 1,
        _ => {
            return Err(Error::StepOutOfRange {
                step: t,
                max: schedule.steps(),
            })
        }
    };
    let next = ddim_step_between(
        denoiser,
        x.as_slice(),
        schedule.alpha(t),
        schedule.alpha(target),
    )?;
    ImageTensor::new(x.shape(), next)
}

/// Composition of DDIM steps from `from_t` to `to_t`; the direction follows
/// from the order of the two steps.
pub fn ddim_run<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x: &ImageTensor,
    from_t: usize,
    to_t: usize,
) -> Result<ImageTensor> {
    if from_t == to_t {
        return Err(Error::param("to_t", format!("must differ from from_t ({from_t})")));
    }
    ddim_traverse(denoiser, schedule, x, from_t, to_t)
}

/// Like [`ddim_run`] but returns the input unchanged when `from_t == to_t`.
pub fn ddim_traverse<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x: &ImageTensor,
    from_t: usize,
    to_t: usize,
) -> Result<ImageTensor> {
    schedule.check_step(from_t)?;
    schedule.check_step(to_t)?;
    let mut cur = x.as_slice().to_vec();
    let mut t = from_t;
    while t != to_t {
        let next = if to_t < t { t - 1 } else { t + 1 };
        cur = ddim_step_between(denoiser, &cur, schedule.alpha(t), schedule.alpha(next))?;
        t = next;
    }
    ImageTensor::new(x.shape(), cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{GaussianMixturePrior, Prediction};
    use crate::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Predicts zero noise, so the posterior mean is x/√α.
    struct Noiseless;

    impl Denoiser for Noiseless {
        fn dim(&self) -> usize {
            0
        }

        fn predict(&self, x: &[f64], alpha: f64) -> Result<Prediction> {
            Ok(Prediction {
                mean: x.iter().map(|v| v / alpha.sqrt()).collect(),
                noise: vec![0.0; x.len()],
            })
        }
    }

    fn tensor(values: Vec<f64>) -> ImageTensor {
        let n = values.len();
        ImageTensor::new(Shape::new(1, 2, n / 2).unwrap(), values).unwrap()
    }

    #[test]
    fn noiseless_denoiser_rescales() {
        let sched = NoiseSchedule::probe(vec![1.0, 0.8, 0.3]).unwrap();
        let x = tensor(vec![1.0, -2.0, 0.5, 4.0]);
        let out = ddim_step(&Noiseless, &sched, &x, 2, Direction::Denoise).unwrap();
        let k = (0.8f64 / 0.3).sqrt();
        for (o, v) in out.as_slice().iter().zip(x.as_slice()) {
            assert!((o - k * v).abs() < 1e-14);
        }
    }

    #[test]
    fn equal_levels_is_identity() {
        let prior = GaussianMixturePrior::isotropic(vec![0.3, -0.1, 0.0, 2.0], 0.7).unwrap();
        let sched = NoiseSchedule::probe(vec![1.0, 0.5, 0.5]).unwrap();
        let x = tensor(vec![0.2, 1.0, -3.0, 0.4]);
        let out = ddim_step(&prior, &sched, &x, 2, Direction::Denoise).unwrap();
        for (o, v) in out.as_slice().iter().zip(x.as_slice()) {
            assert!((o - v).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_evaluated_step() {
        // f = √0.5·x and ε = √0.5·x, so x_{t-1} = (√0.75·√0.5 + √0.25·√0.5)·x
        let prior = GaussianMixturePrior::isotropic(vec![0.0; 4], 1.0).unwrap();
        let sched = NoiseSchedule::probe(vec![1.0, 0.75, 0.5]).unwrap();
        let x = tensor(vec![1.0, 0.0, 0.0, 0.0]);
        let out = ddim_step(&prior, &sched, &x, 2, Direction::Denoise).unwrap();
        let expected = (0.75f64.sqrt() + 0.25f64.sqrt()) * 0.5f64.sqrt();
        assert!((out.as_slice()[0] - expected).abs() < 1e-14);
        assert!(out.as_slice()[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_range_checks() {
        let prior = GaussianMixturePrior::isotropic(vec![0.0; 4], 1.0).unwrap();
        let sched = NoiseSchedule::probe(vec![1.0, 0.75, 0.5]).unwrap();
        let x = tensor(vec![0.0; 4]);
        assert!(ddim_step(&prior, &sched, &x, 0, Direction::Denoise).is_err());
        assert!(ddim_step(&prior, &sched, &x, 2, Direction::Invert).is_err());
        assert!(ddim_step(&prior, &sched, &x, 3, Direction::Denoise).is_err());
        assert!(ddim_run(&prior, &sched, &x, 1, 1).is_err());
        assert!(ddim_run(&prior, &sched, &x, 0, 5).is_err());
    }

    #[test]
    fn one_step_run_equals_step() {
        let prior = GaussianMixturePrior::isotropic(vec![0.1, 0.2, 0.3, 0.4], 2.0).unwrap();
        let sched = NoiseSchedule::linear_beta(200, 5e-4, 0.1).unwrap();
        let x = tensor(vec![0.5, -0.5, 1.5, 0.0]);
        let a = ddim_run(&prior, &sched, &x, 10, 9).unwrap();
        let b = ddim_step(&prior, &sched, &x, 10, Direction::Denoise).unwrap();
        assert_eq!(a, b);
        let a = ddim_run(&prior, &sched, &x, 10, 11).unwrap();
        let b = ddim_step(&prior, &sched, &x, 10, Direction::Invert).unwrap();
        assert_eq!(a, b);
    }

    fn round_trip_error(steps: usize, beta_scale: f64) -> f64 {
        // smooth prior: data variance well above the unit noise level
        let d = 16;
        let prior = GaussianMixturePrior::isotropic(vec![0.0; d], 100.0).unwrap();
        let sched = NoiseSchedule::linear_beta(steps, 5e-4 * beta_scale, 0.1 * beta_scale).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x0 = tensor(prior.sample(&mut rng));
        let t_star = sched.step_at_fraction(0.3);
        let xt = ddim_run(&prior, &sched, &x0, 0, t_star).unwrap();
        let back = ddim_run(&prior, &sched, &xt, t_star, 0).unwrap();
        back.sub(&x0).unwrap().norm() / x0.norm()
    }

    #[test]
    fn inversion_round_trip() {
        let coarse = round_trip_error(200, 1.0);
        assert!(coarse <= 1e-3, "round trip error {coarse}");
        // halving the step size (same α curve) shrinks the discretization error
        let fine = round_trip_error(400, 0.5);
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn deterministic() {
        let prior = GaussianMixturePrior::isotropic(vec![0.0; 4], 1.0).unwrap();
        let sched = NoiseSchedule::linear_beta(50, 2e-3, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = tensor((0..4).map(|_| StandardNormal.sample(&mut rng)).collect());
        assert_eq!(
            ddim_run(&prior, &sched, &x, 50, 0).unwrap(),
            ddim_run(&prior, &sched, &x, 50, 0).unwrap()
        );
    }
}

//! Image-space distortions, diffusion purification and black-box averaging.

mod jpeg;
mod spatial;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{ddim_traverse, Denoiser, NoiseSchedule};
use crate::{Error, ImageTensor, Result};

pub use jpeg::jpeg_like;
pub use spatial::{gaussian_blur, median_blur, resize_restore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttackSpec {
    /// No distortion; the clean column of a robustness table.
    #[serde(rename = "none")]
    Clean,
    JpegLike { quality: u32 },
    GaussianBlur { kernel: usize },
    GaussianNoise { sigma: f64 },
    ColorJitter { low: f64, high: f64 },
    ResizeRestore { factor: f64 },
    RandomDrop { fraction: f64 },
    MedianBlur { kernel: usize },
    Diffpure { strength: f64 },
    /// `set_size` watermarked images feed the estimate subtracted from the target.
    Averaging { strength: f64, set_size: usize },
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::Clean => "none",
            AttackSpec::JpegLike { .. } => "jpeg_like",
            AttackSpec::GaussianBlur { .. } => "gaussian_blur",
            AttackSpec::GaussianNoise { .. } => "gaussian_noise",
            AttackSpec::ColorJitter { .. } => "color_jitter",
            AttackSpec::ResizeRestore { .. } => "resize_restore",
            AttackSpec::RandomDrop { .. } => "random_drop",
            AttackSpec::MedianBlur { .. } => "median_blur",
            AttackSpec::Diffpure { .. } => "diffpure",
            AttackSpec::Averaging { .. } => "averaging",
        }
    }

    /// Clean plus every attack at its default strength.
    pub fn default_suite() -> Vec<AttackSpec> {
        vec![
            AttackSpec::Clean,
            AttackSpec::JpegLike { quality: 25 },
            AttackSpec::GaussianBlur { kernel: 8 },
            AttackSpec::GaussianNoise { sigma: 0.1 },
            AttackSpec::ColorJitter { low: 0.0, high: 6.0 },
            AttackSpec::ResizeRestore { factor: 0.5 },
            AttackSpec::RandomDrop { fraction: 0.4 },
            AttackSpec::MedianBlur { kernel: 7 },
            AttackSpec::Diffpure { strength: 0.3 },
            AttackSpec::Averaging {
                strength: 1.0,
                set_size: 64,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::param(name, reason.to_string()));
        match *self {
            AttackSpec::JpegLike { quality } if !(1..=100).contains(&quality) => bad("quality", "must lie in 1..=100"),
            AttackSpec::GaussianBlur { kernel } | AttackSpec::MedianBlur { kernel } if kernel == 0 => {
                bad("kernel", "must be positive")
            }
            AttackSpec::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad("sigma", "must be finite and non-negative")
            }
            AttackSpec::ColorJitter { low, high } if !(0.0 <= low && low <= high && high.is_finite()) => {
                bad("color_jitter", "needs 0 ≤ low ≤ high")
            }
            AttackSpec::ResizeRestore { factor } if !(factor > 0.0 && factor <= 1.0) => {
                bad("factor", "must lie in (0, 1]")
            }
            AttackSpec::RandomDrop { fraction } if !(0.0..=1.0).contains(&fraction) => {
                bad("fraction", "must lie in [0, 1]")
            }
            AttackSpec::Diffpure { strength } if !(strength > 0.0 && strength < 1.0) => {
                bad("strength", "must lie in (0, 1)")
            }
            AttackSpec::Averaging { strength, set_size } if !strength.is_finite() || set_size < 2 => {
                bad("averaging", "needs finite strength and at least 2 images")
            }
            _ => Ok(()),
        }
    }
}

/// Inputs some attacks need beyond the image: the diffusion model for
/// purification and a precomputed watermark estimate for averaging.
#[derive(Clone, Copy, Default)]
pub struct AttackContext<'a> {
    pub denoiser: Option<&'a dyn Denoiser>,
    pub schedule: Option<&'a NoiseSchedule>,
    pub averaging_estimate: Option<&'a ImageTensor>,
}

pub fn apply_attack<R: Rng + ?Sized>(
    image: &ImageTensor,
    spec: &AttackSpec,
    ctx: &AttackContext<'_>,
    rng: &mut R,
) -> Result<ImageTensor> {
    image.ensure_finite()?;
    spec.validate()?;
    match *spec {
        AttackSpec::Clean => Ok(image.clone()),
        AttackSpec::JpegLike { quality } => Ok(jpeg_like(image, quality)),
        AttackSpec::GaussianBlur { kernel } => Ok(gaussian_blur(image, kernel)),
        AttackSpec::GaussianNoise { sigma } => Ok(gaussian_noise(image, sigma, rng)),
        AttackSpec::ColorJitter { low, high } => {
            let factor = if low == high { low } else { rng.random_range(low..high) };
            Ok(image.scaled(factor))
        }
        AttackSpec::ResizeRestore { factor } => Ok(resize_restore(image, factor)),
        AttackSpec::RandomDrop { fraction } => Ok(random_drop(image, fraction, rng)),
        AttackSpec::MedianBlur { kernel } => Ok(median_blur(image, kernel)),
        AttackSpec::Diffpure { strength } => {
            let (den, schedule) = ctx
                .denoiser
                .zip(ctx.schedule)
                .ok_or_else(|| Error::param("diffpure", "needs a denoiser and schedule"))?;
            diffpure(image, den, schedule, strength)
        }
        AttackSpec::Averaging { strength, .. } => {
            let estimate = ctx
                .averaging_estimate
                .ok_or_else(|| Error::param("averaging", "needs a watermark estimate"))?;
            image.sub(&estimate.scaled(strength))
        }
    }
}

pub fn gaussian_noise<R: Rng + ?Sized>(image: &ImageTensor, sigma: f64, rng: &mut R) -> ImageTensor {
    let mut out = image.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for v in out.as_mut_slice() {
        *v += normal.sample(rng);
    }
    out
}

/// Zeroes one uniformly placed square, across all channels, whose side is
/// round(√(fraction·H·W)) clamped to the grid.
pub fn random_drop<R: Rng + ?Sized>(image: &ImageTensor, fraction: f64, rng: &mut R) -> ImageTensor {
    let shape = image.shape();
    let (h, w) = (shape.height, shape.width);
    let side = ((fraction * (h * w) as f64).sqrt().round() as usize).min(h).min(w);
    let mut out = image.clone();
    if side == 0 {
        return out;
    }
    let top = rng.random_range(0..=h - side);
    let left = rng.random_range(0..=w - side);
    for c in 0..shape.channels {
        let plane = out.channel_mut(c);
        for i in top..top + side {
            plane[i * w + left..i * w + left + side].fill(0.0);
        }
    }
    out
}

/// DDIM-Inv to ⌊strength·T⌋ (at least 1) and DDIM back to step 0.
pub fn diffpure<D: Denoiser + ?Sized>(
    image: &ImageTensor,
    denoiser: &D,
    schedule: &NoiseSchedule,
    strength: f64,
) -> Result<ImageTensor> {
    if !(strength > 0.0 && strength < 1.0) {
        return Err(Error::param("strength", format!("must lie in (0, 1), got {strength}")));
    }
    let t = schedule.step_at_fraction(strength);
    let noisy = ddim_traverse(denoiser, schedule, image, 0, t)?;
    ddim_traverse(denoiser, schedule, &noisy, t, 0)
}

/// mean(watermarked_set) − mean(clean_reference): the shared additive
/// component an attacker can estimate from many watermarked images.
pub fn averaging_estimate(watermarked_set: &[ImageTensor], clean_reference: &[ImageTensor]) -> Result<ImageTensor> {
    if watermarked_set.len() < 2 {
        return Err(Error::Empty("averaging set needs at least 2 images"));
    }
    let wm = mean(watermarked_set)?;
    let clean = mean(clean_reference)?;
    wm.sub(&clean)
}

/// target − strength·estimate.
pub fn averaging_attack(
    watermarked_set: &[ImageTensor],
    target: &ImageTensor,
    strength: f64,
    clean_reference: &[ImageTensor],
) -> Result<ImageTensor> {
    let estimate = averaging_estimate(watermarked_set, clean_reference)?;
    target.sub(&estimate.scaled(strength))
}

fn mean(set: &[ImageTensor]) -> Result<ImageTensor> {
    let first = set.first().ok_or(Error::Empty("image set"))?;
    let mut acc = ImageTensor::zeros(first.shape());
    for x in set {
        acc = acc.add(x)?;
    }
    Ok(acc.scaled(1.0 / set.len() as f64))
}

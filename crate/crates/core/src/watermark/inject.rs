use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::key::{MultiKeySet, WatermarkKey};
use crate::diffusion::{ddim_traverse, Denoiser, NoiseSchedule};
use crate::numerics::{dft2, idft2};
use crate::{Error, ImageTensor, Result};

/// Server: the input is the initial noise x_T. User: the input is a finished x₀.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Server,
    User,
}

#[derive(Debug, Clone)]
pub struct Embedding {
    /// x₀^W = DDIM(x_t*^W, 0).
    pub watermarked: ImageTensor,
    /// Unwatermarked latent x_t*.
    pub latent: ImageTensor,
    /// x_t*^W = x_t* + Δx.
    pub watermarked_latent: ImageTensor,
}

/// Δx = DFT⁻¹(DFT(x)⊙(1−M) + W⊙M) − x on the key channel, zero elsewhere.
pub fn make_delta(x: &ImageTensor, key: &WatermarkKey) -> Result<ImageTensor> {
    make_delta_multi(x, &[key])
}

/// Δx for several keys written in one pass; masks must be disjoint.
pub fn make_delta_multi(x: &ImageTensor, keys: &[&WatermarkKey]) -> Result<ImageTensor> {
    let first = keys.first().ok_or(Error::Empty("key set"))?;
    let g = first.geometry;
    if x.shape() != g.shape {
        return Err(Error::ShapeMismatch {
            expected: g.shape.to_string(),
            actual: x.shape().to_string(),
        });
    }
    let (h, w) = (g.shape.height, g.shape.width);
    let channel = x.channel(g.channel);
    let mut spec = dft2(channel, h, w, g.centered);
    let mut written = vec![false; h * w];
    for key in keys {
        let k = key.geometry;
        if k.shape != g.shape || k.channel != g.channel || k.centered != g.centered {
            return Err(Error::param("keys", "all keys must share shape, channel and centering"));
        }
        for b in key.mask().bins() {
            if std::mem::replace(&mut written[b.row * w + b.col], true) {
                return Err(Error::MaskOverlap { row: b.row, col: b.col });
            }
            spec.set(b.row, b.col, Complex64::new(key.value_for_ring(b.ring), 0.0));
        }
    }
    let inverse = idft2(&spec)?;
    let mut delta = ImageTensor::zeros(g.shape);
    for ((d, v), x) in delta.channel_mut(g.channel).iter_mut().zip(&inverse.values).zip(channel) {
        *d = v - x;
    }
    Ok(delta)
}

/// Algorithm for both scenarios: reach x_t*, add Δx, sample back to step 0.
pub fn embed<D: Denoiser + ?Sized>(
    input: &ImageTensor,
    key: &WatermarkKey,
    scenario: Scenario,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Embedding> {
    embed_keys(input, &[key], scenario, denoiser, schedule)
}

/// One latent visit; every key of the set writes its own sector.
pub fn embed_multi<D: Denoiser + ?Sized>(
    input: &ImageTensor,
    keys: &MultiKeySet,
    scenario: Scenario,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Embedding> {
    let refs: Vec<&WatermarkKey> = keys.keys().iter().collect();
    embed_keys(input, &refs, scenario, denoiser, schedule)
}

fn embed_keys<D: Denoiser + ?Sized>(
    input: &ImageTensor,
    keys: &[&WatermarkKey],
    scenario: Scenario,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Embedding> {
    let first = keys.first().ok_or(Error::Empty("key set"))?;
    let t_star = first.geometry.t_star;
    if keys.iter().any(|k| k.geometry.t_star != t_star) {
        return Err(Error::param("keys", "all keys must share t_star"));
    }
    first.geometry.check_schedule(schedule)?;
    let start = match scenario {
        Scenario::Server => schedule.steps(),
        Scenario::User => 0,
    };
    let latent = ddim_traverse(denoiser, schedule, input, start, t_star)?;
    let delta = make_delta_multi(&latent, keys)?;
    let watermarked_latent = latent.add(&delta)?;
    let watermarked = ddim_traverse(denoiser, schedule, &watermarked_latent, t_star, 0)?;
    Ok(Embedding {
        watermarked,
        latent,
        watermarked_latent,
    })
}

/// Channel `channel` from x₀^W; every other channel (1−γ)·x₀^W + γ·x₀*.
pub fn channel_average(
    watermarked: &ImageTensor,
    clean: &ImageTensor,
    gamma: f64,
    channel: usize,
) -> Result<ImageTensor> {
    watermarked.ensure_same_shape(clean)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("must lie in [0, 1], got {gamma}")));
    }
    let shape = watermarked.shape();
    if channel >= shape.channels {
        return Err(Error::param("channel", format!("{channel} is out of range")));
    }
    let mut out = watermarked.clone();
    for c in (0..shape.channels).filter(|&c| c != channel) {
        let src = clean.channel(c);
        for (o, b) in out.channel_mut(c).iter_mut().zip(src) {
            // γ = 1 must reproduce x₀* bit-exactly.
            *o = if gamma == 1.0 { *b } else { (1.0 - gamma) * *o + gamma * b };
        }
    }
    Ok(out)
}

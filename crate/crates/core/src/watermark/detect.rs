use std::collections::HashMap;

use serde::Serialize;

use super::key::WatermarkKey;
use crate::diffusion::{ddim_traverse, Denoiser, NoiseSchedule};
use crate::numerics::dft2;
use crate::{Error, ImageTensor, Result};

/// η = sum(M)·‖M⊙W − M⊙DFT(x)‖² / ‖M⊙DFT(x)‖². Zero masked energy yields
/// η = +∞ with `degenerate` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionScore {
    pub eta: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub best_index: usize,
    pub scores: Vec<DetectionScore>,
}

/// Statistic on a latent that is already at the key's embedding step.
pub fn detection_statistic(latent: &ImageTensor, key: &WatermarkKey) -> Result<DetectionScore> {
    let g = key.geometry;
    if latent.shape() != g.shape {
        return Err(Error::ShapeMismatch {
            expected: g.shape.to_string(),
            actual: latent.shape().to_string(),
        });
    }
    let spec = dft2(latent.channel(g.channel), g.shape.height, g.shape.width, g.centered);
    let mask = key.mask();
    let (mut num, mut den) = (0.0, 0.0);
    for b in mask.bins() {
        let z = spec.get(b.row, b.col);
        let diff = z - key.value_for_ring(b.ring);
        num += diff.norm_sqr();
        den += z.norm_sqr();
    }
    if den == 0.0 {
        return Ok(DetectionScore {
            eta: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(DetectionScore {
        eta: mask.count() as f64 * num / den,
        degenerate: false,
    })
}

/// DDIM-Inv of `image` to t*, then the statistic.
pub fn detect<D: Denoiser + ?Sized>(
    image: &ImageTensor,
    key: &WatermarkKey,
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<DetectionScore> {
    key.geometry.check_schedule(schedule)?;
    let latent = ddim_traverse(denoiser, schedule, image, 0, key.geometry.t_star)?;
    detection_statistic(&latent, key)
}

/// argmin η over `keys`, ties to the lowest index. One inversion per
/// distinct t*.
pub fn identify<D: Denoiser + ?Sized>(
    image: &ImageTensor,
    keys: &[WatermarkKey],
    denoiser: &D,
    schedule: &NoiseSchedule,
) -> Result<Identification> {
    let first = keys.first().ok_or(Error::Empty("key set"))?;
    let mut latents: HashMap<usize, ImageTensor> = HashMap::new();
    let mut scores = Vec::with_capacity(keys.len());
    for key in keys {
        if key.geometry.shape != first.geometry.shape {
            return Err(Error::param("keys", "all keys must share one shape"));
        }
        let t = key.geometry.t_star;
        if !latents.contains_key(&t) {
            key.geometry.check_schedule(schedule)?;
            latents.insert(t, ddim_traverse(denoiser, schedule, image, 0, t)?);
        }
        scores.push(detection_statistic(&latents[&t], key)?);
    }
    Ok(Identification {
        best_index: argmin(&scores),
        scores,
    })
}

fn argmin(scores: &[DetectionScore]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.eta < scores[best].eta {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GaussianMixturePrior;
    use crate::numerics::idft2;
    use crate::watermark::{generate_key, generate_sector_keys, make_delta, KeyGeometry};
    use crate::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Shape, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        ImageTensor::new(shape, data).unwrap()
    }

    fn geometry(radius: usize) -> KeyGeometry {
        KeyGeometry::new(Shape::new(2, 16, 16).unwrap(), 1, radius, false, 5).unwrap()
    }

    #[test]
    fn watermarked_latent_scores_zero() {
        let key = generate_key(geometry(6), &[2.0; 6], 4).unwrap();
        let x = random_tensor(key.geometry.shape, 8);
        let xw = x.add(&make_delta(&x, &key).unwrap()).unwrap();
        let s = detection_statistic(&xw, &key).unwrap();
        assert!(s.eta <= 1e-8 && !s.degenerate);
        assert!(detection_statistic(&x, &key).unwrap().eta > 1.0);
    }

    #[test]
    fn doubled_spectrum_key_scores_mask_count() {
        // Ring-constant latent spectrum D, key W = 2D.
        let g = geometry(4);
        let d = [0.7, -1.3, 2.1, 0.4];
        let tensor = spectrum_tensor(&g, &d);
        let key = WatermarkKey::new(g, d.iter().map(|v| 2.0 * v).collect(), 0, None).unwrap();
        let s = detection_statistic(&tensor, &key).unwrap();
        assert!((s.eta - key.mask().count() as f64).abs() <= 1e-9);
    }

    fn spectrum_tensor(g: &KeyGeometry, rings: &[f64]) -> ImageTensor {
        let (h, w) = (g.shape.height, g.shape.width);
        let mut spec = dft2(&vec![0.0; h * w], h, w, g.centered);
        let key = WatermarkKey::new(*g, rings.to_vec(), 0, None).unwrap();
        for b in key.mask().bins() {
            spec.set(b.row, b.col, rings[b.ring].into());
        }
        let mut t = ImageTensor::zeros(g.shape);
        t.channel_mut(g.channel).copy_from_slice(&idft2(&spec).unwrap().values);
        t
    }

    #[test]
    fn zero_masked_energy_is_degenerate() {
        let key = generate_key(geometry(3), &[1.0; 3], 1).unwrap();
        let s = detection_statistic(&ImageTensor::zeros(key.geometry.shape), &key).unwrap();
        assert!(s.degenerate && s.eta == f64::INFINITY);
    }

    #[test]
    fn unmasked_edits_leave_eta_unchanged() {
        let g = geometry(5);
        let key = generate_key(g, &[1.0; 5], 2).unwrap();
        let x = random_tensor(g.shape, 6);
        let base = detection_statistic(&x, &key).unwrap().eta;
        // Low-frequency bins sit far from the centered disk.
        let mut spec = dft2(x.channel(1), 16, 16, false);
        spec.set(0, 0, spec.get(0, 0) + 3.0);
        spec.set(0, 1, spec.get(0, 1) + rustfft::num_complex::Complex64::new(1.0, 0.5));
        spec.set(0, 15, spec.get(0, 15) + rustfft::num_complex::Complex64::new(1.0, -0.5));
        let mut y = x.clone();
        y.channel_mut(1).copy_from_slice(&idft2(&spec).unwrap().values);
        y.channel_mut(0)[7] += 10.0;
        assert!((detection_statistic(&y, &key).unwrap().eta - base).abs() <= 1e-10);
    }

    #[test]
    fn identify_picks_embedded_sector_key() {
        let g = geometry(8);
        let set = generate_sector_keys(g, 8, &[1.0; 8], 5).unwrap();
        let x = random_tensor(g.shape, 1);
        let xw = x.add(&make_delta(&x, &set.keys()[3]).unwrap()).unwrap();
        let prior = GaussianMixturePrior::isotropic(vec![0.0; g.shape.dim()], 1.0).unwrap();
        let schedule = NoiseSchedule::probe(vec![1.0; 6]).unwrap();
        // α ≡ 1 makes every DDIM step the identity, so detection sees xw itself.
        let id = identify(&xw, set.keys(), &prior, &schedule).unwrap();
        assert_eq!(id.best_index, 3);
        assert!(id.scores[3].eta <= 1e-8);
    }

    #[test]
    fn identify_ties_go_to_first() {
        let key = generate_key(geometry(4), &[1.0; 4], 9).unwrap();
        let keys = vec![generate_key(geometry(4), &[1.0; 4], 10).unwrap(), key.clone(), key];
        let prior = GaussianMixturePrior::isotropic(vec![0.0; 512], 1.0).unwrap();
        let schedule = NoiseSchedule::probe(vec![1.0; 6]).unwrap();
        let x = random_tensor(keys[0].geometry.shape, 3);
        let xw = x.add(&make_delta(&x, &keys[1]).unwrap()).unwrap();
        let id = identify(&xw, &keys, &prior, &schedule).unwrap();
        assert_eq!(id.best_index, 1);
        assert!(identify(&xw, &[], &prior, &schedule).is_err());
    }
}

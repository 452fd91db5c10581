use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::sample_rng;
use crate::numerics::sample_unit_sphere;
use crate::{Error, Result};

/// Samples per independent stream.
const CHUNK: usize = 4096;

/// Pass iff `lower ≤ observed ≤ upper`.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub lemma: u8,
    pub observed: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    pub pass: bool,
}

impl LemmaReport {
    fn new(lemma: u8, observed: f64, expected: f64, lower: f64, upper: f64, samples: usize) -> Self {
        LemmaReport {
            lemma,
            observed,
            expected,
            lower,
            upper,
            samples,
            pass: lower <= observed && observed <= upper,
        }
    }
}

/// Runs `per_sample` over `samples` draws in fixed chunks; results come back
/// in sample order.
fn monte_carlo<F>(samples: usize, base: u64, per_sample: F) -> Result<Vec<f64>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync,
{
    if samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let chunks = samples.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sample_rng(base, c);
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n).map(|_| per_sample(&mut rng)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// E[(vᵀε)²/‖ε‖²] = 1/d for a fixed unit v and ε ~ N(0, I_d); accepted
/// within ±`tolerance`.
pub fn verify_lemma1<R: Rng + ?Sized>(d: usize, samples: usize, tolerance: f64, rng: &mut R) -> Result<LemmaReport> {
    let v = sample_unit_sphere(d, rng)?;
    let values = monte_carlo(samples, rng.next_u64(), |rng| {
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let dot: f64 = v.iter().zip(&eps).map(|(a, b)| a * b).sum();
        Ok(dot * dot / eps.iter().map(|e| e * e).sum::<f64>())
    })?;
    let expected = 1.0 / d as f64;
    Ok(LemmaReport::new(1, mean(&values), expected, expected - tolerance, expected + tolerance, samples))
}

/// E‖Ju‖² = ‖J‖_F²/d for u uniform on the sphere; accepted within a
/// relative `tolerance`.
pub fn verify_lemma2<R: Rng + ?Sized>(
    jac: &DMatrix<f64>,
    samples: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<LemmaReport> {
    let d = square_dim(jac)?;
    let values = monte_carlo(samples, rng.next_u64(), |rng| {
        let u = DVector::from_vec(sample_unit_sphere(d, rng)?);
        Ok((jac * u).norm_squared())
    })?;
    let expected = jac.norm_squared() / d as f64;
    Ok(LemmaReport::new(
        2,
        mean(&values),
        expected,
        expected * (1.0 - tolerance),
        expected * (1.0 + tolerance),
        samples,
    ))
}

/// sup over the sphere of ‖∇‖Jx‖²‖ = ‖2JᵀJx‖ equals 2‖J‖₂². The sampled
/// supremum must not exceed it (up to 1e−6 relative) and must reach
/// `lower_fraction` of it.
pub fn verify_lemma3<R: Rng + ?Sized>(
    jac: &DMatrix<f64>,
    samples: usize,
    lower_fraction: f64,
    rng: &mut R,
) -> Result<LemmaReport> {
    let d = square_dim(jac)?;
    let gram = jac.transpose() * jac;
    let values = monte_carlo(samples, rng.next_u64(), |rng| {
        let u = DVector::from_vec(sample_unit_sphere(d, rng)?);
        Ok(2.0 * (&gram * u).norm())
    })?;
    let sup = values.iter().copied().fold(0.0, f64::max);
    let sigma = jac.singular_values().max();
    let expected = 2.0 * sigma * sigma;
    Ok(LemmaReport::new(
        3,
        sup,
        expected,
        lower_fraction * expected,
        expected * (1.0 + 1e-6),
        samples,
    ))
}

fn square_dim(jac: &DMatrix<f64>) -> Result<usize> {
    if jac.nrows() != jac.ncols() || jac.nrows() < 2 {
        return Err(Error::param("jacobian", format!("expected a square matrix of size ≥ 2, got {}x{}", jac.nrows(), jac.ncols())));
    }
    Ok(jac.nrows())
}

/// d×d matrix of rank `rank` built from Gaussian outer products.
pub fn random_low_rank_matrix<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(rank, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    a * b
}

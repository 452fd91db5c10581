use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Uniform draw from the unit sphere S^{d-1}: a standard Gaussian vector
/// normalized to length one.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim < 2 {
        return Err(Error::param("dim", format!("sphere dimension must be >= 2, got {dim}")));
    }
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a zero-norm Gaussian draw has probability zero but is not impossible in floating point
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_small_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_unit_sphere(1, &mut rng).is_err());
        assert!(sample_unit_sphere(0, &mut rng).is_err());
    }

    #[test]
    fn unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 3, 64, 1000] {
            let v = sample_unit_sphere(d, &mut rng).unwrap();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coordinate_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (d, n) = (64, 100_000);
        let mut mean = vec![0.0; d];
        let mut first_sq = 0.0;
        for _ in 0..n {
            let v = sample_unit_sphere(d, &mut rng).unwrap();
            for (m, x) in mean.iter_mut().zip(&v) {
                *m += x;
            }
            first_sq += v[0] * v[0];
        }
        let tol = 4.0 / (n as f64).sqrt();
        assert!(mean.iter().all(|m| (m / n as f64).abs() <= tol));
        assert!((first_sq / n as f64 - 1.0 / d as f64).abs() <= 5e-3);
    }
}

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEstimate {
    /// Singular values at or above `threshold · sigma_max`.
    pub rank: usize,
    /// `rank / d`.
    pub ratio: f64,
    /// Spectral norm.
    pub sigma_max: f64,
}

/// Numerical rank of a square matrix relative to its largest singular value.
pub fn numerical_rank(matrix: &DMatrix<f64>, rel_threshold: f64) -> Result<RankEstimate> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::param(
            "rel_threshold",
            format!("must lie in (0, 1), got {rel_threshold}"),
        ));
    }
    let (rows, cols) = matrix.shape();
    if rows != cols || rows == 0 {
        return Err(Error::param(
            "matrix",
            format!("expected a non-empty square matrix, got {rows}x{cols}"),
        ));
    }
    if let Some(index) = matrix.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let singular = matrix.clone().singular_values();
    let sigma_max = singular.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(RankEstimate {
            rank: 0,
            ratio: 0.0,
            sigma_max: 0.0,
        });
    }
    let cutoff = rel_threshold * sigma_max;
    let rank = singular.iter().filter(|&&s| s >= cutoff).count();
    Ok(RankEstimate {
        rank,
        ratio: rank as f64 / rows as f64,
        sigma_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn identity_is_full_rank() {
        let est = numerical_rank(&DMatrix::identity(8, 8), 1e-2).unwrap();
        assert_eq!(est.rank, 8);
        assert_eq!(est.ratio, 1.0);
        assert!((est.sigma_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_of_three_outer_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = DMatrix::zeros(16, 16);
        for _ in 0..3 {
            let u: DVector<f64> = gaussian(&mut rng, 16, 1).column(0).into();
            let v: DVector<f64> = gaussian(&mut rng, 16, 1).column(0).into();
            m += &u * v.transpose();
        }
        assert_eq!(numerical_rank(&m, 1e-6).unwrap().rank, 3);
    }

    #[test]
    fn zero_matrix() {
        let est = numerical_rank(&DMatrix::zeros(5, 5), 1e-2).unwrap();
        assert_eq!((est.rank, est.ratio, est.sigma_max), (0, 0.0, 0.0));
    }

    #[test]
    fn rejects_bad_threshold_and_shape() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(numerical_rank(&m, 0.0).is_err());
        assert!(numerical_rank(&m, 1.0).is_err());
        assert!(numerical_rank(&DMatrix::zeros(2, 3), 0.1).is_err());
    }

    #[test]
    fn invariant_under_orthogonal_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 12;
        // singular values 10, 5, 1, 1e-4, ... with a wide gap around the 1e-2 cutoff
        let mut diag = DMatrix::zeros(d, d);
        for (k, s) in [10.0, 5.0, 1.0, 0.5].iter().enumerate() {
            diag[(k, k)] = *s;
        }
        for k in 4..d {
            diag[(k, k)] = 1e-4;
        }
        let q = gaussian(&mut rng, d, d).qr().q();
        let conj = &q * &diag * q.transpose();
        let a = numerical_rank(&diag, 1e-2).unwrap();
        let b = numerical_rank(&conj, 1e-2).unwrap();
        assert_eq!(a.rank, 4);
        assert_eq!(a.rank, b.rank);
    }
}

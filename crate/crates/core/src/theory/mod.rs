//! Closed-form bound functions and Monte-Carlo checks of the consistency and
//! detectability guarantees and their supporting lemmas.

mod bounds;
mod lemmas;

pub use bounds::{verify_consistency, verify_detectability, BoundParams};
pub use lemmas::{random_low_rank_matrix, verify_lemma1, verify_lemma2, verify_lemma3, LemmaReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

/// h(r, d) = √( r/d + √(18π³/(d−2) · log 2r) ).
pub fn h_bound(r: usize, d: usize) -> Result<f64> {
    if r < 1 {
        return Err(Error::param("r", "rank must be at least 1"));
    }
    if d <= 2 {
        return Err(Error::param("d", format!("dimension must exceed 2, got {d}")));
    }
    let (r, d) = (r as f64, d as f64);
    let pi3 = std::f64::consts::PI.powi(3);
    Ok((r / d + (18.0 * pi3 / (d - 2.0) * (2.0 * r).ln()).sqrt()).sqrt())
}

/// g(x, y) = (√(1−y)√x − √(1−x)√y) / √(1−x) on the open unit square.
pub fn g_fn(x: f64, y: f64) -> Result<f64> {
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !open(x) || !open(y) {
        return Err(Error::param("g", format!("arguments must lie in (0, 1), got ({x}, {y})")));
    }
    Ok(((1.0 - y).sqrt() * x.sqrt() - (1.0 - x).sqrt() * y.sqrt()) / (1.0 - x).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// r ≤ 2 makes the nominal guarantee vacuous.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: &'static str,
    pub t: usize,
    pub lambda: f64,
    /// Right-hand side; for detectability this is the recoverability gap.
    pub bound: f64,
    pub observed_mean: f64,
    pub observed_max: f64,
    pub violation_rate: f64,
    pub nominal_failure: f64,
    pub samples: usize,
    pub lipschitz: f64,
    pub ranks: Vec<usize>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawError>,
}

/// Round-trip error before the clean part is subtracted.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RawError {
    pub mean: f64,
    pub max: f64,
    pub violation_rate: f64,
}

/// Pass iff rate ≤ p + 3·√(p(1−p)/n), with p clamped to [0, 1].
pub fn binomial_pass(rate: f64, nominal: f64, samples: usize) -> bool {
    let p = nominal.clamp(0.0, 1.0);
    rate <= p + 3.0 * (p * (1.0 - p) / samples as f64).sqrt()
}

/// Independent stream per Monte-Carlo sample so parallel evaluation is
/// order-free.
pub(crate) fn sample_rng(base: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_reference_value() {
        // r = 1, d = 4096, evaluated with 50-digit arithmetic.
        let expect = 0.5546542313078978;
        assert!((h_bound(1, 4096).unwrap() - expect).abs() <= 1e-12);
    }

    #[test]
    fn h_increasing_in_rank_and_vanishing_in_dimension() {
        let hs: Vec<f64> = (1..=64).map(|r| h_bound(r, 4096).unwrap()).collect();
        assert!(hs.windows(2).all(|w| w[1] > w[0]));
        // h decays like d^(−1/4): still about 0.063 at d = 10⁸.
        assert!((h_bound(8, 100_000_000).unwrap() - 0.0627200379034574).abs() < 1e-12);
        assert!(h_bound(8, 1_000_000_000_000).unwrap() < 1e-2);
        assert!(h_bound(0, 10).is_err());
        assert!(h_bound(1, 2).is_err());
    }

    #[test]
    fn g_values() {
        for x in [0.01, 0.3, 0.99] {
            assert_eq!(g_fn(x, x).unwrap(), 0.0);
        }
        let expect = (0.25f64.sqrt() * 0.5f64.sqrt() - 0.5f64.sqrt() * 0.75f64.sqrt()) / 0.5f64.sqrt();
        assert!((g_fn(0.5, 0.75).unwrap() - expect).abs() <= 1e-15);
        assert!((g_fn(0.5, 0.75).unwrap() + 0.3660254037844386).abs() <= 1e-12);
        assert!(g_fn(0.0, 0.5).is_err() && g_fn(0.5, 1.0).is_err());
    }

    #[test]
    fn g_signs_along_default_schedule() {
        let schedule = crate::diffusion::NoiseSchedule::linear_beta(200, 5e-4, 0.1).unwrap();
        for t in 2..=200 {
            let (at, am) = (schedule.alpha(t), schedule.alpha(t - 1));
            assert!(g_fn(at, am).unwrap() < 0.0, "t = {t}");
            assert!(g_fn(am, at).unwrap() > 0.0, "t = {t}");
        }
    }

    #[test]
    fn binomial_rule() {
        assert!(binomial_pass(0.0, 0.0, 10));
        assert!(!binomial_pass(0.01, 0.0, 10));
        assert!(binomial_pass(0.14, 0.125, 2000));
        assert!(!binomial_pass(0.2, 0.125, 2000));
    }
}

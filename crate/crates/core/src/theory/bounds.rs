use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial_pass, g_fn, h_bound, sample_rng, BoundReport, RawError, Status};
use crate::diffusion::{ddim_step_between, forward_noise, GaussianMixturePrior, JacobianMode, NoiseSchedule};
use crate::numerics::{numerical_rank, sample_unit_sphere, DEFAULT_RANK_THRESHOLD};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub t: usize,
    pub lambda: f64,
    pub samples: usize,
    /// Forward-noised prior draws used to estimate L and r_t.
    pub probes: usize,
    pub rank_threshold: f64,
}

impl BoundParams {
    pub fn new(t: usize, lambda: f64, samples: usize) -> Self {
        BoundParams {
            t,
            lambda,
            samples,
            probes: 256,
            rank_threshold: DEFAULT_RANK_THRESHOLD,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("samples", "must be positive"));
        }
        if self.probes == 0 {
            return Err(Error::param("probes", "must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be finite and non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

// Absolute slack for comparisons against a bound that may be exactly zero.
const ROUNDING_SLACK: f64 = 1e-12;

struct Probe {
    lipschitz: f64,
    rank: usize,
}

/// L = max spectral norm of the analytic Jacobian over the probes; r = median
/// numerical rank.
fn probe(prior: &GaussianMixturePrior, alpha: f64, params: &BoundParams, base: u64) -> Result<Probe> {
    let estimates = (0..params.probes)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(base, i);
            let x0 = prior.sample(&mut rng);
            let xt = forward_noise(&x0, alpha, &mut rng);
            let jac = prior.jacobian(&xt, alpha, JacobianMode::Analytic)?;
            numerical_rank(&jac, params.rank_threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    let lipschitz = estimates.iter().map(|e| e.sigma_max).fold(0.0, f64::max);
    let mut ranks: Vec<usize> = estimates.iter().map(|e| e.rank).collect();
    ranks.sort_unstable();
    Ok(Probe {
        lipschitz,
        rank: ranks[ranks.len() / 2],
    })
}

fn summarize(
    name: &'static str,
    params: &BoundParams,
    bound: f64,
    lhs: &[f64],
    violations: usize,
    nominal: f64,
    lipschitz: f64,
    ranks: Vec<usize>,
) -> BoundReport {
    let n = lhs.len();
    let rate = violations as f64 / n as f64;
    let status = if ranks.iter().any(|&r| r <= 2) {
        Status::Inconclusive
    } else if binomial_pass(rate, nominal, n) {
        Status::Pass
    } else {
        Status::Fail
    };
    BoundReport {
        name,
        t: params.t,
        lambda: params.lambda,
        bound,
        observed_mean: lhs.iter().sum::<f64>() / n as f64,
        observed_max: lhs.iter().copied().fold(0.0, f64::max),
        violation_rate: rate,
        nominal_failure: nominal,
        samples: n,
        lipschitz,
        ranks,
        status,
        raw: None,
    }
}

/// ‖f(x_t + λΔx) − f(x_t)‖ ≤ λ·L·h(r_t) for Δx uniform on the sphere and
/// x_t a forward-noised prior draw; nominal failure 1/r_t.
pub fn verify_consistency<R: Rng + ?Sized>(
    prior: &GaussianMixturePrior,
    schedule: &NoiseSchedule,
    params: &BoundParams,
    rng: &mut R,
) -> Result<BoundReport> {
    params.validate()?;
    schedule.check_step(params.t)?;
    if params.t == 0 {
        return Err(Error::param("t", "must be at least 1"));
    }
    let alpha = schedule.alpha(params.t);
    let d = prior.dim();
    let (probe_seed, sample_seed) = (rng.next_u64(), rng.next_u64());
    let Probe { lipschitz, rank } = probe(prior, alpha, params, probe_seed)?;
    let bound = match rank {
        0 => f64::NAN,
        r => params.lambda * lipschitz * h_bound(r, d)?,
    };
    let lhs = (0..params.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(sample_seed, i);
            let x0 = prior.sample(&mut rng);
            let xt = forward_noise(&x0, alpha, &mut rng);
            let u = sample_unit_sphere(d, &mut rng)?;
            let moved: Vec<f64> = xt.iter().zip(&u).map(|(x, v)| x + params.lambda * v).collect();
            let a = prior.posterior_mean(&moved, alpha)?.mean;
            let b = prior.posterior_mean(&xt, alpha)?.mean;
            Ok(a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let violations = lhs.iter().filter(|&&v| !(v <= bound + ROUNDING_SLACK)).count();
    let nominal = if rank == 0 { 1.0 } else { 1.0 / rank as f64 };
    Ok(summarize("consistency", params, bound, &lhs, violations, nominal, lipschitz, vec![rank]))
}

/// One DDIM step t → t−1 from x_t^W = x_t + λΔx followed by one inversion
/// step back. The watermark-induced round-trip error
/// ‖(x̄_t^W − x_t^W) − (x̄_t − x_t)‖ is compared with
/// λL·(−g(α_t, α_{t−1}) + g(α_{t−1}, α_t)(1 − L·g(α_t, α_{t−1})))·h(max(r_{t−1}, r_t)).
/// Nominal failure 1/r_t + 1/r_{t−1}. The raw error ‖x̄_t^W − x_t^W‖, which
/// also carries the clean round-trip error, is reported alongside.
pub fn verify_detectability<R: Rng + ?Sized>(
    prior: &GaussianMixturePrior,
    schedule: &NoiseSchedule,
    params: &BoundParams,
    rng: &mut R,
) -> Result<BoundReport> {
    params.validate()?;
    schedule.check_step(params.t)?;
    if params.t < 2 {
        return Err(Error::param("t", "must be at least 2"));
    }
    let (at, am) = (schedule.alpha(params.t), schedule.alpha(params.t - 1));
    let d = prior.dim();
    let (probe_t, probe_m, sample_seed) = (rng.next_u64(), rng.next_u64(), rng.next_u64());
    let pt = probe(prior, at, params, probe_t)?;
    let pm = probe(prior, am, params, probe_m)?;
    let lipschitz = pt.lipschitz.max(pm.lipschitz);
    let (g_tm, g_mt) = (g_fn(at, am)?, g_fn(am, at)?);
    let r = pt.rank.max(pm.rank);
    let bound = match (pt.rank, pm.rank) {
        (0, _) | (_, 0) => f64::NAN,
        _ => params.lambda * lipschitz * (-g_tm + g_mt * (1.0 - lipschitz * g_tm)) * h_bound(r, d)?,
    };
    let round_trip = |x: &[f64]| -> Result<Vec<f64>> {
        let down = ddim_step_between(prior, x, at, am)?;
        let back = ddim_step_between(prior, &down, am, at)?;
        Ok(back.iter().zip(x).map(|(b, x)| b - x).collect())
    };
    let pairs = (0..params.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(sample_seed, i);
            let x0 = prior.sample(&mut rng);
            let xt = forward_noise(&x0, at, &mut rng);
            let u = sample_unit_sphere(d, &mut rng)?;
            let xw: Vec<f64> = xt.iter().zip(&u).map(|(x, v)| x + params.lambda * v).collect();
            let err_w = round_trip(&xw)?;
            let err_c = round_trip(&xt)?;
            let induced = err_w.iter().zip(&err_c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let raw = err_w.iter().map(|e| e * e).sum::<f64>().sqrt();
            Ok((induced, raw))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (lhs, raw): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let violations = lhs.iter().filter(|&&v| !(v <= bound + ROUNDING_SLACK)).count();
    let raw_violations = raw.iter().filter(|&&v| !(v <= bound + ROUNDING_SLACK)).count();
    let nominal = if pt.rank == 0 || pm.rank == 0 {
        1.0
    } else {
        1.0 / pt.rank as f64 + 1.0 / pm.rank as f64
    };
    let mut report = summarize(
        "detectability",
        params,
        bound,
        &lhs,
        violations,
        nominal,
        lipschitz,
        vec![pt.rank, pm.rank],
    );
    report.raw = Some(RawError {
        mean: raw.iter().sum::<f64>() / raw.len() as f64,
        max: raw.iter().copied().fold(0.0, f64::max),
        violation_rate: raw_violations as f64 / raw.len() as f64,
    });
    Ok(report)
}

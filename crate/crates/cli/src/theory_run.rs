use anyhow::{bail, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use shallowmark::diffusion::{GaussianMixturePrior, NoiseSchedule};
use shallowmark::theory::{
    random_low_rank_matrix, verify_consistency, verify_detectability, verify_lemma1, verify_lemma2, verify_lemma3,
    BoundParams, BoundReport, LemmaReport, Status,
};

use crate::config::TheoryConfig;
use crate::experiment::role_rng;

/// Acceptance windows for the lemma checks.
pub const LEMMA1_ABS_TOL: f64 = 5e-3;
pub const LEMMA2_REL_TOL: f64 = 0.02;
pub const LEMMA3_LOWER_FRACTION: f64 = 0.95;

const STREAM_THEORY_PRIOR: u64 = 101;
const STREAM_CONSISTENCY: u64 = 102;
const STREAM_DETECTABILITY: u64 = 103;
const STREAM_LEMMA: u64 = 104;

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub consistency: Vec<BoundReport>,
    pub detectability: Vec<BoundReport>,
    pub lemmas: Vec<LemmaReport>,
}

impl TheoryReport {
    pub fn bounds(&self) -> impl Iterator<Item = &BoundReport> {
        self.consistency.iter().chain(&self.detectability)
    }

    /// True iff a conclusive bound check or a lemma check failed.
    pub fn failed(&self) -> bool {
        self.bounds().any(|b| b.status == Status::Fail) || self.lemmas.iter().any(|l| !l.pass)
    }

    pub fn inconclusive(&self) -> usize {
        self.bounds().filter(|b| b.status == Status::Inconclusive).count()
    }
}

pub fn theory_prior(cfg: &TheoryConfig, seed: u64) -> Result<GaussianMixturePrior> {
    Ok(GaussianMixturePrior::random_low_rank(
        cfg.dim,
        &cfg.prior,
        &mut role_rng(seed, STREAM_THEORY_PRIOR),
    )?)
}

pub fn bound_params(cfg: &TheoryConfig, schedule: &NoiseSchedule, lambda: f64) -> BoundParams {
    BoundParams {
        probes: cfg.probes,
        ..BoundParams::new(schedule.step_at_fraction(cfg.t_fraction), lambda, cfg.samples)
    }
}

pub fn run_bounds(cfg: &TheoryConfig, schedule: &NoiseSchedule, seed: u64) -> Result<(Vec<BoundReport>, Vec<BoundReport>)> {
    if cfg.samples == 0 {
        bail!("theory.samples must be at least 1");
    }
    let prior = theory_prior(cfg, seed)?;
    let mut rng = role_rng(seed, STREAM_CONSISTENCY);
    let consistency = cfg
        .lambdas
        .iter()
        .map(|&l| Ok(verify_consistency(&prior, schedule, &bound_params(cfg, schedule, l), &mut rng)?))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = role_rng(seed, STREAM_DETECTABILITY);
    let detectability = cfg
        .lambdas
        .iter()
        .map(|&l| Ok(verify_detectability(&prior, schedule, &bound_params(cfg, schedule, l), &mut rng)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((consistency, detectability))
}

pub fn run_lemmas(cfg: &TheoryConfig, seed: u64) -> Result<Vec<LemmaReport>> {
    let mut rng = role_rng(seed, STREAM_LEMMA);
    let l1 = verify_lemma1(cfg.lemma1_dim, cfg.lemma1_samples, LEMMA1_ABS_TOL, &mut rng)?;
    let j2 = random_low_rank_matrix(cfg.lemma2_dim, cfg.lemma2_rank, &mut rng);
    let l2 = verify_lemma2(&j2, cfg.lemma2_samples, LEMMA2_REL_TOL, &mut rng)?;
    let d3 = cfg.lemma3_dim;
    let j3 = DMatrix::from_fn(d3, d3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l3 = verify_lemma3(&j3, cfg.lemma3_samples, LEMMA3_LOWER_FRACTION, &mut rng)?;
    Ok(vec![l1, l2, l3])
}

pub fn run_theory(cfg: &TheoryConfig, schedule: &NoiseSchedule, seed: u64) -> Result<TheoryReport> {
    let (consistency, detectability) = run_bounds(cfg, schedule, seed)?;
    Ok(TheoryReport {
        consistency,
        detectability,
        lemmas: run_lemmas(cfg, seed)?,
    })
}

//! Seeded Monte-Carlo pipelines: generate, embed, attack, detect, score.

use anyhow::{bail, Context, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use shallowmark::attacks::{apply_attack, averaging_estimate, AttackContext, AttackSpec};
use shallowmark::diffusion::{ddim_traverse, GaussianMixturePrior, NoiseSchedule};
use shallowmark::metrics::{normalize_joint, psnr, roc, ssim};
use shallowmark::watermark::{
    calibration_batch, channel_average, detect, detection_statistic, embed, embed_multi, generate_key,
    generate_sector_keys, identify, ring_rms, KeyGeometry, MultiKeySet, Scenario, WatermarkKey,
};
use shallowmark::{ImageTensor, Shape};

use crate::config::ExperimentConfig;

// Stream ids separating the roles of one seed.
const STREAM_PRIOR: u64 = 1;
const STREAM_CALIBRATION: u64 = 2;
const STREAM_KEY: u64 = 3;
const STREAM_DATA: u64 = 4;
const STREAM_ATTACK: u64 = 16;
/// Trial indices at and above this offset feed the averaging-attack pool.
const POOL_OFFSET: u64 = 1 << 40;

pub fn role_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-trial seed: master XOR trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

/// Everything derived from the config that trials share.
pub struct Setup {
    pub config: ExperimentConfig,
    pub shape: Shape,
    pub schedule: NoiseSchedule,
    pub prior: GaussianMixturePrior,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let shape = config.shape()?;
        let schedule = config.schedule()?;
        let prior = GaussianMixturePrior::random_low_rank(
            shape.dim(),
            &config.prior,
            &mut role_rng(config.seed, STREAM_PRIOR),
        )
        .context("building the prior")?;
        Ok(Setup {
            config: config.clone(),
            shape,
            schedule,
            prior,
        })
    }

    pub fn t_star(&self) -> usize {
        self.config.t_star(&self.schedule)
    }

    pub fn geometry(&self, radius: usize, t_star: usize) -> Result<KeyGeometry> {
        let k = &self.config.key;
        Ok(KeyGeometry::new(self.shape, k.channel, radius, k.centered, t_star)?)
    }

    /// Per-ring RMS of |DFT(x_t*)| over the calibration batch.
    pub fn ring_scale(&self, geometry: &KeyGeometry) -> Result<Vec<f64>> {
        let mut rng = role_rng(self.config.seed, STREAM_CALIBRATION);
        let batch = calibration_batch(&self.prior, &self.schedule, geometry, self.config.key.calibration, &mut rng)?;
        Ok(ring_rms(geometry, &batch)?)
    }

    fn key_seed(&self, index: u64) -> u64 {
        let mut rng = role_rng(self.config.seed, STREAM_KEY);
        (0..index).for_each(|_| {
            rng.next_u64();
        });
        rng.next_u64()
    }

    pub fn key(&self, radius: usize, t_star: usize) -> Result<WatermarkKey> {
        self.key_indexed(radius, t_star, 0)
    }

    /// `index` selects an independent key seed for the same geometry.
    pub fn key_indexed(&self, radius: usize, t_star: usize, index: u64) -> Result<WatermarkKey> {
        let geometry = self.geometry(radius, t_star)?;
        let scale = self.ring_scale(&geometry)?;
        Ok(generate_key(geometry, &scale, self.key_seed(index))?)
    }

    pub fn sector_keys(&self, count: usize) -> Result<MultiKeySet> {
        let geometry = self.geometry(self.config.key.radius, self.t_star())?;
        let scale = self.ring_scale(&geometry)?;
        Ok(generate_sector_keys(geometry, count, &scale, self.key_seed(0))?)
    }

    /// The scenario's input: x_T ~ N(0, I) for the server, a prior draw x₀
    /// for the user.
    pub fn draw_input(&self, seed: u64) -> Result<ImageTensor> {
        let mut rng = role_rng(seed, STREAM_DATA);
        let data = match self.config.scenario {
            Scenario::Server => (0..self.shape.dim()).map(|_| rng.sample(StandardNormal)).collect(),
            Scenario::User => self.prior.sample(&mut rng),
        };
        Ok(ImageTensor::new(self.shape, data)?)
    }

    /// Watermarked output and its unwatermarked counterpart. The counterpart
    /// is the clean generation DDIM(x_t*, 0) for the server and the input x₀
    /// for the user.
    pub fn sample(&self, keys: Keys<'_>, seed: u64) -> Result<Pair> {
        let input = self.draw_input(seed)?;
        let out = match keys {
            Keys::Single(key) => embed(&input, key, self.config.scenario, &self.prior, &self.schedule)?,
            Keys::Multi(set) => embed_multi(&input, set, self.config.scenario, &self.prior, &self.schedule)?,
        };
        let t_star = keys.t_star();
        let regenerated = ddim_traverse(&self.prior, &self.schedule, &out.latent, t_star, 0)?;
        let watermarked = channel_average(&out.watermarked, &regenerated, self.config.key.gamma, keys.channel())?;
        let clean = match self.config.scenario {
            Scenario::Server => regenerated,
            Scenario::User => input,
        };
        Ok(Pair { watermarked, clean })
    }
}

#[derive(Clone, Copy)]
pub enum Keys<'a> {
    Single(&'a WatermarkKey),
    Multi(&'a MultiKeySet),
}

impl Keys<'_> {
    fn first(&self) -> &WatermarkKey {
        match self {
            Keys::Single(k) => k,
            Keys::Multi(s) => &s.keys()[0],
        }
    }

    fn t_star(&self) -> usize {
        self.first().geometry.t_star
    }

    fn channel(&self) -> usize {
        self.first().geometry.channel
    }
}

pub struct Pair {
    pub watermarked: ImageTensor,
    pub clean: ImageTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub attack: String,
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub n: usize,
}

/// One trial under one attack. PSNR/SSIM compare the attacked watermarked
/// image with the unattacked clean counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialScores {
    pub eta_wm: f64,
    pub eta_clean: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// PSNR and SSIM after mapping the pair jointly onto [0, 1].
pub fn consistency(a: &ImageTensor, b: &ImageTensor) -> Result<(f64, f64)> {
    let (na, nb) = normalize_joint(a, b)?;
    let s = a.shape();
    let window = 8.min(s.height).min(s.width);
    Ok((psnr(&na, &nb, 1.0)?, ssim(&na, &nb, window, 1.0)?))
}

/// Watermark estimates for every averaging attack in `attacks`, built from
/// a pool of images disjoint from the trials.
fn averaging_estimates(setup: &Setup, key: &WatermarkKey, attacks: &[AttackSpec]) -> Result<Vec<Option<ImageTensor>>> {
    attacks
        .iter()
        .map(|spec| match *spec {
            AttackSpec::Averaging { set_size, .. } => {
                let pool = (0..set_size as u64)
                    .into_par_iter()
                    .map(|j| setup.sample(Keys::Single(key), trial_seed(setup.config.seed, POOL_OFFSET + j)))
                    .collect::<Result<Vec<Pair>>>()?;
                let (wm, clean): (Vec<_>, Vec<_>) = pool.into_iter().map(|p| (p.watermarked, p.clean)).unzip();
                Ok(Some(averaging_estimate(&wm, &clean)?))
            }
            _ => Ok(None),
        })
        .collect()
}

/// Scores indexed `[trial][attack]`; watermarked and clean images pass
/// through the same attack.
pub fn trial_scores(
    setup: &Setup,
    key: &WatermarkKey,
    attacks: &[AttackSpec],
    trials: usize,
) -> Result<Vec<Vec<TrialScores>>> {
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let estimates = averaging_estimates(setup, key, attacks)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<TrialScores>> {
            let seed = trial_seed(setup.config.seed, i);
            let pair = setup.sample(Keys::Single(key), seed).with_context(|| format!("trial {i}"))?;
            attacks
                .iter()
                .zip(&estimates)
                .enumerate()
                .map(|(a, (spec, estimate))| {
                    let ctx = AttackContext {
                        denoiser: Some(&setup.prior),
                        schedule: Some(&setup.schedule),
                        averaging_estimate: estimate.as_ref(),
                    };
                    let stream = STREAM_ATTACK + 2 * a as u64;
                    let wm = apply_attack(&pair.watermarked, spec, &ctx, &mut role_rng(seed, stream))?;
                    let clean = apply_attack(&pair.clean, spec, &ctx, &mut role_rng(seed, stream + 1))?;
                    let (p, s) = consistency(&wm, &pair.clean)?;
                    Ok(TrialScores {
                        eta_wm: detect(&wm, key, &setup.prior, &setup.schedule)?.eta,
                        eta_clean: detect(&clean, key, &setup.prior, &setup.schedule)?.eta,
                        psnr: p,
                        ssim: s,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("trial {i}"))
        })
        .collect()
}

/// One row per attack: ROC over the η of watermarked vs clean images.
pub fn evaluate(setup: &Setup, key: &WatermarkKey, attacks: &[AttackSpec], trials: usize) -> Result<Vec<AttackRow>> {
    let per_trial = trial_scores(setup, key, attacks, trials)?;
    attacks
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let scores: Vec<&TrialScores> = per_trial.iter().map(|t| &t[a]).collect();
            let wm: Vec<f64> = scores.iter().map(|s| s.eta_wm).collect();
            let clean: Vec<f64> = scores.iter().map(|s| s.eta_clean).collect();
            let curve = roc(&wm, &clean)?;
            let n = scores.len() as f64;
            Ok(AttackRow {
                attack: spec.name().to_string(),
                auc: curve.auc,
                tpr_at_1pct_fpr: curve.tpr_at_1pct_fpr,
                psnr_mean: scores.iter().map(|s| s.psnr).sum::<f64>() / n,
                ssim_mean: scores.iter().map(|s| s.ssim).sum::<f64>() / n,
                n: scores.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub t_star: usize,
    pub radius: usize,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub n: usize,
}

fn sweep_row(setup: &Setup, key: &WatermarkKey, label: String, trials: usize) -> Result<SweepRow> {
    let attacks = [AttackSpec::Clean, setup.config.sweeps.attack];
    let rows = evaluate(setup, key, &attacks, trials)?;
    Ok(SweepRow {
        label,
        t_star: key.geometry.t_star,
        radius: key.geometry.radius,
        psnr_mean: rows[0].psnr_mean,
        ssim_mean: rows[0].ssim_mean,
        auc: rows[1].auc,
        tpr_at_1pct_fpr: rows[1].tpr_at_1pct_fpr,
        n: trials,
    })
}

/// Consistency without attack and robustness under the sweep attack, per
/// embedding-step fraction. Fraction 1 embeds directly into x_T.
pub fn sweep_timestep(setup: &Setup, fractions: &[f64], trials: usize) -> Result<Vec<SweepRow>> {
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                bail!("timestep fraction must lie in (0, 1], got {f}");
            }
            let key = setup.key(setup.config.key.radius, setup.schedule.step_at_fraction(f))?;
            sweep_row(setup, &key, format!("{f}"), trials)
        })
        .collect()
}

/// Same measurements per mask radius; repeated radii are dropped.
pub fn sweep_radius(setup: &Setup, radii: &[usize], trials: usize) -> Result<Vec<SweepRow>> {
    let mut seen = Vec::new();
    for &r in radii {
        if seen.contains(&r) {
            log::warn!("radius {r} listed more than once; evaluating it once");
        } else {
            seen.push(r);
        }
    }
    seen.into_iter()
        .map(|r| {
            let key = setup.key(r, setup.t_star())?;
            sweep_row(setup, &key, r.to_string(), trials)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyCountRow {
    pub keys: usize,
    pub mean_auc: f64,
    pub mean_tpr_at_1pct_fpr: f64,
    pub n: usize,
}

/// Every watermarked image carries all `count` sector keys; each key is
/// scored on its own ROC (positives: watermarked, negatives: clean, both
/// under the sweep attack) and the per-key values are averaged.
pub fn sweep_key_count(setup: &Setup, counts: &[usize], trials: usize) -> Result<Vec<KeyCountRow>> {
    let attack = setup.config.sweeps.attack;
    counts
        .iter()
        .map(|&count| {
            let set = setup.sector_keys(count)?;
            let t_star = set.keys()[0].geometry.t_star;
            let per_trial = (0..trials as u64)
                .into_par_iter()
                .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
                    let seed = trial_seed(setup.config.seed, i);
                    let pair = setup.sample(Keys::Multi(&set), seed)?;
                    let ctx = AttackContext {
                        denoiser: Some(&setup.prior),
                        schedule: Some(&setup.schedule),
                        averaging_estimate: None,
                    };
                    let wm = apply_attack(&pair.watermarked, &attack, &ctx, &mut role_rng(seed, STREAM_ATTACK))?;
                    let clean = apply_attack(&pair.clean, &attack, &ctx, &mut role_rng(seed, STREAM_ATTACK + 1))?;
                    let lw = ddim_traverse(&setup.prior, &setup.schedule, &wm, 0, t_star)?;
                    let lc = ddim_traverse(&setup.prior, &setup.schedule, &clean, 0, t_star)?;
                    let score = |latent: &ImageTensor| -> Result<Vec<f64>> {
                        set.keys()
                            .iter()
                            .map(|k| Ok(detection_statistic(latent, k)?.eta))
                            .collect()
                    };
                    Ok((score(&lw)?, score(&lc)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (mut auc, mut tpr) = (0.0, 0.0);
            for k in 0..count {
                let wm: Vec<f64> = per_trial.iter().map(|t| t.0[k]).collect();
                let clean: Vec<f64> = per_trial.iter().map(|t| t.1[k]).collect();
                let curve = roc(&wm, &clean)?;
                auc += curve.auc;
                tpr += curve.tpr_at_1pct_fpr;
            }
            Ok(KeyCountRow {
                keys: count,
                mean_auc: auc / count as f64,
                mean_tpr_at_1pct_fpr: tpr / count as f64,
                n: trials,
            })
        })
        .collect()
}

/// Fraction of trials where `identify` recovers the embedded key among
/// `count` independent full-disk keys; trial i embeds key i mod count.
pub fn identification_accuracy(setup: &Setup, count: usize, trials: usize) -> Result<f64> {
    if count == 0 || trials == 0 {
        bail!("identification needs at least one key and one trial");
    }
    let keys = (0..count as u64)
        .map(|i| setup.key_indexed(setup.config.key.radius, setup.t_star(), i))
        .collect::<Result<Vec<_>>>()?;
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let target = (i % count as u64) as usize;
            let pair = setup.sample(Keys::Single(&keys[target]), trial_seed(setup.config.seed, i))?;
            Ok(identify(&pair.watermarked, &keys, &setup.prior, &setup.schedule)?.best_index == target)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / trials as f64)
}

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cumulative signal levels α_0..α_T of a variance-preserving forward process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
}

/// α_T may not exceed this for a schedule to count as reaching pure noise.
const TERMINAL_ALPHA_MAX: f64 = 1e-4;

impl NoiseSchedule {
    /// Linear-β schedule: β_1..β_T evenly spaced, α_t = ∏_{s≤t}(1 − β_s).
    pub fn linear_beta(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::InvalidSchedule("need at least one step".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "beta range must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let mut alphas = Vec::with_capacity(steps + 1);
        alphas.push(1.0);
        let mut acc = 1.0;
        for s in 0..steps {
            let frac = if steps == 1 {
                0.0
            } else {
                s as f64 / (steps - 1) as f64
            };
            let beta = beta_start + (beta_end - beta_start) * frac;
            acc *= 1.0 - beta;
            alphas.push(acc);
        }
        Self::from_alphas(alphas)
    }

    /// Validates α_0 = 1, strictly decreasing values in (0, 1], α_T ≤ 1e−4.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        let schedule = Self::probe(alphas)?;
        let a = &schedule.alphas;
        if let Some(t) = (1..a.len()).find(|&t| a[t] >= a[t - 1]) {
            return Err(Error::InvalidSchedule(format!(
                "alphas must be strictly decreasing (alpha_{t} = {} >= alpha_{} = {})",
                a[t],
                t - 1,
                a[t - 1]
            )));
        }
        let last = *a.last().unwrap();
        if last > TERMINAL_ALPHA_MAX {
            return Err(Error::InvalidSchedule(format!(
                "alpha_T = {last:e} exceeds {TERMINAL_ALPHA_MAX:e}; the process does not reach noise"
            )));
        }
        Ok(schedule)
    }

    /// Loose constructor for probing individual steps: only requires α_0 = 1,
    /// values in (0, 1] and a non-increasing sequence.
    pub fn probe(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidSchedule("need alpha_0 and at least one more level".into()));
        }
        if alphas[0] != 1.0 {
            return Err(Error::InvalidSchedule(format!("alpha_0 must be 1, got {}", alphas[0])));
        }
        if let Some(t) = alphas.iter().position(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{t} = {} is outside (0, 1]",
                alphas[t]
            )));
        }
        if let Some(t) = (1..alphas.len()).find(|&t| alphas[t] > alphas[t - 1]) {
            return Err(Error::InvalidSchedule(format!("alpha increases at step {t}")));
        }
        Ok(NoiseSchedule { alphas })
    }

    /// Number of steps T.
    pub fn steps(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// ⌊fraction · T⌋, clamped to at least 1.
    pub fn step_at_fraction(&self, fraction: f64) -> usize {
        ((fraction * self.steps() as f64 + 1e-9).floor() as usize).clamp(1, self.steps())
    }
}

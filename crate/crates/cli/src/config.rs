use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use shallowmark::attacks::AttackSpec;
use shallowmark::diffusion::{NoiseSchedule, RandomPriorSpec};
use shallowmark::watermark::Scenario;
use shallowmark::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub out: PathBuf,
    pub shape: ShapeConfig,
    pub schedule: ScheduleConfig,
    pub prior: RandomPriorSpec,
    pub key: KeyConfig,
    pub scenario: Scenario,
    pub attacks: Vec<AttackSpec>,
    pub sweeps: SweepConfig,
    pub theory: TheoryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyConfig {
    pub radius: usize,
    pub channel: usize,
    /// t* = ⌊fraction·T⌋, at least 1.
    pub t_star_fraction: f64,
    pub centered: bool,
    /// Latents used to calibrate per-ring key amplitudes.
    pub calibration: usize,
    /// Channel-averaging weight for the non-watermarked channels.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub timestep_fractions: Vec<f64>,
    pub radii: Vec<usize>,
    pub key_counts: Vec<usize>,
    /// Attack applied to both populations in the sweeps.
    pub attack: AttackSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub dim: usize,
    pub prior: RandomPriorSpec,
    pub t_fraction: f64,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub probes: usize,
    pub lemma1_dim: usize,
    pub lemma1_samples: usize,
    pub lemma2_dim: usize,
    pub lemma2_rank: usize,
    pub lemma2_samples: usize,
    pub lemma3_dim: usize,
    pub lemma3_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 200,
            out: PathBuf::from("out"),
            shape: ShapeConfig {
                channels: 4,
                height: 16,
                width: 16,
            },
            schedule: ScheduleConfig {
                steps: 200,
                beta_start: 5e-4,
                beta_end: 0.1,
            },
            prior: RandomPriorSpec {
                components: 1,
                rank: 8,
                scale: 32f64.sqrt(),
                mean_scale: 0.0,
                floor: 0.01,
            },
            key: KeyConfig::default(),
            scenario: Scenario::Server,
            attacks: AttackSpec::default_suite(),
            sweeps: SweepConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl Default for KeyConfig {
    fn default() -> Self {
        KeyConfig {
            radius: 8,
            channel: 3,
            t_star_fraction: 0.3,
            centered: false,
            calibration: 64,
            gamma: 1.0,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            timestep_fractions: vec![0.1, 0.2, 0.3, 0.5, 0.7, 1.0],
            radii: vec![2, 4, 8],
            key_counts: vec![2, 8, 32],
            attack: AttackSpec::GaussianNoise { sigma: 0.1 },
        }
    }
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            dim: 256,
            prior: RandomPriorSpec {
                components: 2,
                rank: 8,
                scale: 4.0,
                mean_scale: 1.0,
                floor: 1e-6,
            },
            t_fraction: 0.3,
            lambdas: vec![0.1, 1.0],
            samples: 2000,
            probes: 256,
            lemma1_dim: 64,
            lemma1_samples: 100_000,
            lemma2_dim: 32,
            lemma2_rank: 3,
            lemma2_samples: 50_000,
            lemma3_dim: 8,
            lemma3_samples: 200_000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `dotted.path=value` overrides. Values parse as JSON and fall
    /// back to plain strings.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut tree = serde_json::to_value(&self)?;
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .with_context(|| format!("override '{item}' is not of the form path=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in path.split('.') {
                node = match node {
                    Value::Object(map) => map
                        .get_mut(part)
                        .with_context(|| format!("unknown config field '{part}' in '{path}'"))?,
                    Value::Array(items) => {
                        let idx: usize = part.parse().with_context(|| format!("'{part}' is not an index in '{path}'"))?;
                        let len = items.len();
                        items
                            .get_mut(idx)
                            .with_context(|| format!("index {idx} out of range ({len}) in '{path}'"))?
                    }
                    _ => bail!("'{path}' descends into a scalar"),
                };
            }
            *node = value;
        }
        serde_json::from_value(tree).context("applying overrides")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        self.shape()?;
        self.schedule()?;
        let f = self.key.t_star_fraction;
        if !(f > 0.0 && f <= 1.0) {
            bail!("key.t_star_fraction must lie in (0, 1], got {f}");
        }
        if !(0.0..=1.0).contains(&self.key.gamma) {
            bail!("key.gamma must lie in [0, 1], got {}", self.key.gamma);
        }
        if self.key.calibration == 0 {
            bail!("key.calibration must be at least 1");
        }
        shallowmark::watermark::KeyGeometry::new(self.shape()?, self.key.channel, self.key.radius, self.key.centered, 1)?;
        for attack in &self.attacks {
            attack.validate().with_context(|| format!("attack {}", attack.name()))?;
        }
        self.sweeps.attack.validate()?;
        Ok(())
    }

    pub fn shape(&self) -> Result<Shape> {
        Ok(Shape::new(self.shape.channels, self.shape.height, self.shape.width)?)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let s = self.schedule;
        Ok(NoiseSchedule::linear_beta(s.steps, s.beta_start, s.beta_end)?)
    }

    pub fn t_star(&self, schedule: &NoiseSchedule) -> usize {
        schedule.step_at_fraction(self.key.t_star_fraction)
    }
}

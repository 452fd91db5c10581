use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use shallowmark::diffusion::ddim_traverse;
use shallowmark::watermark::{channel_average, detect, embed, WatermarkKey};

use crate::config::ExperimentConfig;
use crate::experiment::{
    evaluate, sweep_key_count, sweep_radius, sweep_timestep, AttackRow, KeyCountRow, Setup, SweepRow,
};
use crate::imageio::{read_tensor, write_tensor};
use crate::report::{line_plot, write_csv, write_json, Series};
use crate::theory_run::{run_theory, TheoryReport};

/// First 8 hex digits of the SHA-256 of the key file contents.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..8].to_string()
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

/// Writes the key for the configured geometry and returns its fingerprint.
pub fn keygen(cfg: &ExperimentConfig, path: &Path) -> Result<String> {
    let setup = Setup::new(cfg)?;
    let key = setup.key(cfg.key.radius, setup.t_star())?;
    let text = key.to_json();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, &text).with_context(|| format!("writing key {}", path.display()))?;
    Ok(fingerprint(text.as_bytes()))
}

pub fn load_key(path: &Path) -> Result<WatermarkKey> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading key {}", path.display()))?;
    WatermarkKey::from_json(&text).with_context(|| format!("parsing key {}", path.display()))
}

/// Embeds into `input` (or a seeded draw for the configured scenario) and
/// writes `watermarked.json` and `reference.json` with their PNGs.
pub fn embed_cmd(cfg: &ExperimentConfig, key_path: &Path, input: Option<&Path>) -> Result<Vec<PathBuf>> {
    let setup = Setup::new(cfg)?;
    let key = load_key(key_path)?;
    if key.geometry.shape != setup.shape {
        bail!("key shape {} does not match config shape {}", key.geometry.shape, setup.shape);
    }
    let input = match input {
        Some(p) => read_tensor(p)?,
        None => setup.draw_input(cfg.seed)?,
    };
    let out = embed(&input, &key, cfg.scenario, &setup.prior, &setup.schedule)?;
    let regenerated = ddim_traverse(&setup.prior, &setup.schedule, &out.latent, key.geometry.t_star, 0)?;
    let watermarked = channel_average(&out.watermarked, &regenerated, cfg.key.gamma, key.geometry.channel)?;
    let dir = out_dir(cfg)?;
    let paths = vec![dir.join("watermarked.json"), dir.join("reference.json")];
    write_tensor(&paths[0], &watermarked)?;
    write_tensor(&paths[1], &regenerated)?;
    Ok(paths)
}

#[derive(Debug, Serialize)]
pub struct Detection {
    pub eta: f64,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub watermarked: Option<bool>,
}

pub fn detect_cmd(cfg: &ExperimentConfig, key_path: &Path, image: &Path, threshold: Option<f64>) -> Result<Detection> {
    let setup = Setup::new(cfg)?;
    let key = load_key(key_path)?;
    let tensor = read_tensor(image)?;
    let score = detect(&tensor, &key, &setup.prior, &setup.schedule)?;
    Ok(Detection {
        eta: score.eta,
        degenerate: score.degenerate,
        watermarked: threshold.map(|t| score.eta < t),
    })
}

pub fn eval_cmd(cfg: &ExperimentConfig) -> Result<Vec<AttackRow>> {
    let setup = Setup::new(cfg)?;
    let key = setup.key(cfg.key.radius, setup.t_star())?;
    let rows = evaluate(&setup, &key, &cfg.attacks, cfg.trials)?;
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("eval.csv"), &rows)?;
    write_json(&dir.join("eval.json"), &rows)?;
    Ok(rows)
}

fn plot_sweep(path: &Path, title: &str, x_label: &str, rows: &[SweepRow], x: impl Fn(&SweepRow) -> f64) -> Result<()> {
    let series = [
        Series {
            name: "PSNR (dB) / 40",
            points: rows.iter().map(|r| (x(r), r.psnr_mean / 40.0)).collect(),
        },
        Series {
            name: "TPR@1%FPR",
            points: rows.iter().map(|r| (x(r), r.tpr_at_1pct_fpr)).collect(),
        },
    ];
    std::fs::write(path, line_plot(title, x_label, "value", &series))?;
    Ok(())
}

pub fn sweep_timestep_cmd(cfg: &ExperimentConfig, plots: bool) -> Result<Vec<SweepRow>> {
    let setup = Setup::new(cfg)?;
    let rows = sweep_timestep(&setup, &cfg.sweeps.timestep_fractions, cfg.trials)?;
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("sweep_timestep.csv"), &rows)?;
    write_json(&dir.join("sweep_timestep.json"), &rows)?;
    if plots {
        let t = setup.schedule.steps() as f64;
        plot_sweep(&dir.join("sweep_timestep.svg"), "Embedding step", "t*/T", &rows, |r| r.t_star as f64 / t)?;
    }
    Ok(rows)
}

pub fn sweep_radius_cmd(cfg: &ExperimentConfig, plots: bool) -> Result<Vec<SweepRow>> {
    let setup = Setup::new(cfg)?;
    let rows = sweep_radius(&setup, &cfg.sweeps.radii, cfg.trials)?;
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("sweep_radius.csv"), &rows)?;
    write_json(&dir.join("sweep_radius.json"), &rows)?;
    if plots {
        plot_sweep(&dir.join("sweep_radius.svg"), "Mask radius", "radius", &rows, |r| r.radius as f64)?;
    }
    Ok(rows)
}

pub fn sweep_keys_cmd(cfg: &ExperimentConfig, plots: bool) -> Result<Vec<KeyCountRow>> {
    let setup = Setup::new(cfg)?;
    let rows = sweep_key_count(&setup, &cfg.sweeps.key_counts, cfg.trials)?;
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("sweep_keys.csv"), &rows)?;
    write_json(&dir.join("sweep_keys.json"), &rows)?;
    if plots {
        let series = [Series {
            name: "mean TPR@1%FPR",
            points: rows.iter().map(|r| (r.keys as f64, r.mean_tpr_at_1pct_fpr)).collect(),
        }];
        std::fs::write(dir.join("sweep_keys.svg"), line_plot("Key count", "keys", "TPR", &series))?;
    }
    Ok(rows)
}

pub fn verify_theory_cmd(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    let schedule = cfg.schedule()?;
    let report = run_theory(&cfg.theory, &schedule, cfg.seed)?;
    write_json(&out_dir(cfg)?.join("theory.json"), &report)?;
    Ok(report)
}

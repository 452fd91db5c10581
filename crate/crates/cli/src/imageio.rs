//! Tensors as one 16-bit grayscale PNG per channel plus a JSON sidecar
//! holding the per-channel affine map back to latent values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use shallowmark::{ImageTensor, Shape};

const LEVELS: f64 = 65535.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub shape: Shape,
    /// value = offset + scale·level/65535, per channel.
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub files: Vec<String>,
}

fn channel_path(sidecar: &Path, c: usize) -> PathBuf {
    let stem = sidecar.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    sidecar.with_file_name(format!("{stem}_c{c}.png"))
}

/// Writes `<stem>_c<k>.png` for every channel next to the sidecar `path`.
pub fn write_tensor(path: &Path, tensor: &ImageTensor) -> Result<()> {
    let shape = tensor.shape();
    let (mut offset, mut scale, mut files) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..shape.channels {
        let plane = tensor.channel(c);
        let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let levels: Vec<u16> = plane.iter().map(|v| ((v - lo) / span * LEVELS).round() as u16).collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(shape.width as u32, shape.height as u32, levels).context("building PNG buffer")?;
        let file = channel_path(path, c);
        img.save(&file).with_context(|| format!("writing {}", file.display()))?;
        offset.push(lo);
        scale.push(span);
        files.push(file.file_name().unwrap().to_string_lossy().into_owned());
    }
    let sidecar = Sidecar {
        shape,
        offset,
        scale,
        files,
    };
    std::fs::write(path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_tensor(path: &Path) -> Result<ImageTensor> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sidecar: Sidecar = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let shape = Shape::new(sidecar.shape.channels, sidecar.shape.height, sidecar.shape.width)?;
    if sidecar.files.len() != shape.channels || sidecar.offset.len() != shape.channels || sidecar.scale.len() != shape.channels {
        bail!("sidecar {} lists a wrong number of channels", path.display());
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut data = Vec::with_capacity(shape.dim());
    for c in 0..shape.channels {
        let file = dir.join(&sidecar.files[c]);
        let img = image::open(&file)
            .with_context(|| format!("reading {}", file.display()))?
            .into_luma16();
        if img.width() as usize != shape.width || img.height() as usize != shape.height {
            bail!("{} is {}x{}, expected {}x{}", file.display(), img.height(), img.width(), shape.height, shape.width);
        }
        data.extend(img.pixels().map(|p| sidecar.offset[c] + sidecar.scale[c] * p.0[0] as f64 / LEVELS));
    }
    Ok(ImageTensor::new(shape, data)?)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_noise, GaussianMixturePrior, NoiseSchedule};
use crate::numerics::dft2;
use crate::{Error, ImageTensor, Result, Shape};

pub const KEY_FORMAT_VERSION: u32 = 1;

/// Where a key lives: grid, channel, disk radius, DFT centering and the
/// embedding step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyGeometry {
    pub shape: Shape,
    pub channel: usize,
    pub radius: usize,
    /// `false` places the disk on the highest frequencies.
    pub centered: bool,
    pub t_star: usize,
}

impl KeyGeometry {
    pub fn new(shape: Shape, channel: usize, radius: usize, centered: bool, t_star: usize) -> Result<Self> {
        if channel >= shape.channels {
            return Err(Error::param(
                "channel",
                format!("{channel} is out of range for {} channels", shape.channels),
            ));
        }
        let nyquist = shape.height.min(shape.width) / 2;
        if radius < 1 || radius > nyquist {
            return Err(Error::param(
                "radius",
                format!("must lie in 1..={nyquist} for a {}x{} grid, got {radius}", shape.height, shape.width),
            ));
        }
        if t_star == 0 {
            return Err(Error::param("t_star", "embedding step must be positive"));
        }
        Ok(KeyGeometry {
            shape,
            channel,
            radius,
            centered,
            t_star,
        })
    }

    pub fn check_schedule(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.t_star > schedule.steps() {
            return Err(Error::StepOutOfRange {
                step: self.t_star,
                max: schedule.steps(),
            });
        }
        Ok(())
    }

    /// Full disk of integer rings around the array center.
    pub fn mask(&self) -> Mask {
        Mask::disk(self.shape.height, self.shape.width, self.radius, None)
    }
}

/// Angular slice `index` of `count` equal slices of the half plane, taken
/// together with its point reflection so every slice is Hermitian-closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    pub index: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedBin {
    pub row: usize,
    pub col: usize,
    pub ring: usize,
}

/// Binary spectral mask with the ring index of each selected bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    bins: Vec<MaskedBin>,
}

impl Mask {
    fn disk(height: usize, width: usize, radius: usize, sector: Option<Sector>) -> Mask {
        let (ci, cj) = ((height / 2) as i64, (width / 2) as i64);
        let r2 = (radius * radius) as u64;
        let mut bins = Vec::new();
        for row in 0..height {
            for col in 0..width {
                let (di, dj) = (row as i64 - ci, col as i64 - cj);
                let dist2 = (di * di + dj * dj) as u64;
                if dist2 >= r2 {
                    continue;
                }
                if let Some(s) = sector {
                    if sector_of(di, dj, s.count) != s.index {
                        continue;
                    }
                }
                bins.push(MaskedBin {
                    row,
                    col,
                    ring: dist2.isqrt() as usize,
                });
            }
        }
        Mask { height, width, bins }
    }

    /// sum(M).
    pub fn count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[MaskedBin] {
        &self.bins
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.bins.iter().any(|b| b.row == row && b.col == col)
    }
}

// Canonicalize (di, dj) and its reflection (−di, −dj) to the same
// half-plane representative, then bin the angle in [0, π).
fn sector_of(di: i64, dj: i64, count: usize) -> usize {
    let (a, b) = if dj < 0 || (dj == 0 && di < 0) {
        (-di, -dj)
    } else {
        (di, dj)
    };
    let angle = (b as f64).atan2(a as f64);
    ((angle / std::f64::consts::PI * count as f64).floor() as usize).min(count - 1)
}

/// Ring-constant real key W on a disk (or disk sector) of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkKey {
    pub geometry: KeyGeometry,
    /// One value per integer ring, ring 0 at the center.
    pub ring_values: Vec<f64>,
    pub seed: u64,
    pub sector: Option<Sector>,
}

impl WatermarkKey {
    pub fn new(geometry: KeyGeometry, ring_values: Vec<f64>, seed: u64, sector: Option<Sector>) -> Result<Self> {
        if ring_values.len() != geometry.radius {
            return Err(Error::param(
                "ring_values",
                format!("expected {} values, got {}", geometry.radius, ring_values.len()),
            ));
        }
        if ring_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("ring_values", "values must be finite"));
        }
        if let Some(s) = sector {
            if s.count == 0 || s.index >= s.count {
                return Err(Error::param("sector", format!("index {} of {}", s.index, s.count)));
            }
        }
        Ok(WatermarkKey {
            geometry,
            ring_values,
            seed,
            sector,
        })
    }

    pub fn mask(&self) -> Mask {
        let g = &self.geometry;
        Mask::disk(g.shape.height, g.shape.width, g.radius, self.sector)
    }

    pub fn value_for_ring(&self, ring: usize) -> f64 {
        self.ring_values[ring]
    }

    /// Serializes to the version-1 key format. Ring values carry 17
    /// significant digits so the file round-trips bit-exactly.
    pub fn to_json(&self) -> String {
        let g = &self.geometry;
        let values: Vec<String> = self.ring_values.iter().map(|v| format!("{v:.16e}")).collect();
        let mut out = String::from("{\n");
        out += &format!("  \"version\": {KEY_FORMAT_VERSION},\n");
        out += &format!("  \"C\": {},\n", g.shape.channels);
        out += &format!("  \"H\": {},\n", g.shape.height);
        out += &format!("  \"W\": {},\n", g.shape.width);
        out += &format!("  \"channel\": {},\n", g.channel);
        out += &format!("  \"radius\": {},\n", g.radius);
        out += &format!("  \"centered\": {},\n", g.centered);
        out += &format!("  \"t_star\": {},\n", g.t_star);
        out += &format!("  \"seed\": {},\n", self.seed);
        if let Some(s) = self.sector {
            out += &format!("  \"sector\": {{\"index\": {}, \"count\": {}}},\n", s.index, s.count);
        }
        out += &format!("  \"ring_values\": [{}]\n}}\n", values.join(", "));
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: KeyFile = serde_json::from_str(text)
            .map_err(|e| Error::param("key file", e.to_string()))?;
        if file.version != KEY_FORMAT_VERSION {
            return Err(Error::param(
                "key file",
                format!("unsupported version {}", file.version),
            ));
        }
        let shape = Shape::new(file.c, file.h, file.w)?;
        let geometry = KeyGeometry::new(shape, file.channel, file.radius, file.centered, file.t_star)?;
        WatermarkKey::new(geometry, file.ring_values, file.seed, file.sector)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    version: u32,
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: usize,
    channel: usize,
    radius: usize,
    centered: bool,
    t_star: usize,
    seed: u64,
    #[serde(default)]
    sector: Option<Sector>,
    ring_values: Vec<f64>,
}

/// Keys sharing one geometry whose sectors partition the disk.
#[derive(Debug, Clone)]
pub struct MultiKeySet {
    keys: Vec<WatermarkKey>,
}

impl MultiKeySet {
    pub fn new(keys: Vec<WatermarkKey>) -> Result<Self> {
        let first = keys.first().ok_or(Error::Empty("key set"))?;
        let g = first.geometry;
        let (h, w) = (g.shape.height, g.shape.width);
        let mut owner = vec![false; h * w];
        for key in &keys {
            let k = key.geometry;
            if k.shape != g.shape || k.channel != g.channel || k.t_star != g.t_star || k.centered != g.centered {
                return Err(Error::param("keys", "all keys must share shape, channel, centering and t_star"));
            }
            for b in key.mask().bins() {
                let slot = &mut owner[b.row * w + b.col];
                if *slot {
                    return Err(Error::MaskOverlap { row: b.row, col: b.col });
                }
                *slot = true;
            }
        }
        Ok(MultiKeySet { keys })
    }

    pub fn keys(&self) -> &[WatermarkKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Per-ring RMS magnitude of the masked spectrum over a batch of latents.
pub fn ring_rms(geometry: &KeyGeometry, batch: &[ImageTensor]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("calibration batch"));
    }
    let mask = geometry.mask();
    let mut energy = vec![0.0; geometry.radius];
    let mut counts = vec![0usize; geometry.radius];
    for x in batch {
        if x.shape() != geometry.shape {
            return Err(Error::ShapeMismatch {
                expected: geometry.shape.to_string(),
                actual: x.shape().to_string(),
            });
        }
        let spec = dft2(x.channel(geometry.channel), geometry.shape.height, geometry.shape.width, geometry.centered);
        for b in mask.bins() {
            energy[b.ring] += spec.get(b.row, b.col).norm_sqr();
            counts[b.ring] += 1;
        }
    }
    Ok(energy
        .iter()
        .zip(&counts)
        .map(|(e, &n)| (e / n as f64).sqrt())
        .collect())
}

/// `size` clean prior draws forward-noised to the key's embedding step.
pub fn calibration_batch<R: Rng + ?Sized>(
    prior: &GaussianMixturePrior,
    schedule: &NoiseSchedule,
    geometry: &KeyGeometry,
    size: usize,
    rng: &mut R,
) -> Result<Vec<ImageTensor>> {
    geometry.check_schedule(schedule)?;
    if prior.dim() != geometry.shape.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("prior of dimension {}", geometry.shape.dim()),
            actual: format!("dimension {}", prior.dim()),
        });
    }
    let alpha = schedule.alpha(geometry.t_star);
    (0..size)
        .map(|_| {
            let x0 = prior.sample(rng);
            ImageTensor::new(geometry.shape, forward_noise(&x0, alpha, rng))
        })
        .collect()
}

/// Ring values are i.i.d. N(0, 1) scaled per ring by `ring_scale`.
pub fn generate_key(geometry: KeyGeometry, ring_scale: &[f64], seed: u64) -> Result<WatermarkKey> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = draw_rings(&geometry, ring_scale, &mut rng)?;
    WatermarkKey::new(geometry, values, seed, None)
}

/// `count` keys, each owning one Hermitian-closed angular sector of the disk.
pub fn generate_sector_keys(
    geometry: KeyGeometry,
    count: usize,
    ring_scale: &[f64],
    seed: u64,
) -> Result<MultiKeySet> {
    if count == 0 {
        return Err(Error::Empty("key count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = (0..count)
        .map(|index| {
            let values = draw_rings(&geometry, ring_scale, &mut rng)?;
            WatermarkKey::new(geometry, values, seed, Some(Sector { index, count }))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiKeySet::new(keys)
}

fn draw_rings(geometry: &KeyGeometry, ring_scale: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if ring_scale.len() != geometry.radius {
        return Err(Error::param(
            "ring_scale",
            format!("expected {} values, got {}", geometry.radius, ring_scale.len()),
        ));
    }
    Ok(ring_scale
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(h: usize, w: usize, radius: usize) -> KeyGeometry {
        KeyGeometry::new(Shape::new(4, h, w).unwrap(), 3, radius, false, 60).unwrap()
    }

    #[test]
    fn radius_eight_has_eight_rings() {
        let key = generate_key(geometry(64, 64, 8), &[1.0; 8], 42).unwrap();
        assert_eq!(key.ring_values.len(), 8);
        assert!(key.mask().bins().iter().all(|b| b.ring < 8));
    }

    #[test]
    fn masked_count_matches_lattice_count() {
        let mask = geometry(64, 64, 8).mask();
        let mut lattice = 0;
        for i in 0..64i32 {
            for j in 0..64i32 {
                let d = (((i - 32).pow(2) + (j - 32).pow(2)) as f64).sqrt();
                if d < 8.0 {
                    lattice += 1;
                }
            }
        }
        assert_eq!(mask.count(), lattice);
    }

    #[test]
    fn same_seed_same_key() {
        let g = geometry(16, 16, 5);
        let scale = [0.5, 1.0, 1.5, 2.0, 2.5];
        let a = generate_key(g, &scale, 7).unwrap();
        let b = generate_key(g, &scale, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, generate_key(g, &scale, 8).unwrap());
    }

    #[test]
    fn rejects_radius_beyond_nyquist_disk() {
        let shape = Shape::new(1, 16, 12).unwrap();
        assert!(KeyGeometry::new(shape, 0, 7, false, 1).is_err());
        assert!(KeyGeometry::new(shape, 0, 0, false, 1).is_err());
        assert!(KeyGeometry::new(shape, 1, 3, false, 1).is_err());
        assert!(KeyGeometry::new(shape, 0, 6, false, 1).is_ok());
    }

    #[test]
    fn mask_is_point_symmetric() {
        for (h, w, r) in [(16, 16, 8), (8, 12, 4), (10, 6, 3)] {
            let mask = geometry(h, w, r).mask();
            for b in mask.bins() {
                let (mi, mj) = ((h - b.row) % h, (w - b.col) % w);
                assert!(mask.contains(mi, mj), "({}, {}) without mirror", b.row, b.col);
                let ring = mask.bins().iter().find(|m| m.row == mi && m.col == mj).unwrap().ring;
                assert_eq!(ring, b.ring);
            }
        }
    }

    #[test]
    fn sectors_partition_the_disk() {
        let g = geometry(16, 16, 8);
        for count in [1, 2, 3, 8, 32] {
            let set = generate_sector_keys(g, count, &[1.0; 8], 3).unwrap();
            let total: usize = set.keys().iter().map(|k| k.mask().count()).sum();
            assert_eq!(total, g.mask().count());
            for key in set.keys() {
                let m = key.mask();
                for b in m.bins() {
                    assert!(m.contains((16 - b.row) % 16, (16 - b.col) % 16));
                }
            }
        }
    }

    #[test]
    fn overlapping_keys_rejected() {
        let g = geometry(16, 16, 4);
        let a = generate_key(g, &[1.0; 4], 1).unwrap();
        let b = generate_key(g, &[1.0; 4], 2).unwrap();
        assert!(matches!(MultiKeySet::new(vec![a, b]), Err(Error::MaskOverlap { .. })));
    }

    #[test]
    fn larger_radius_masks_more_bins() {
        let counts: Vec<usize> = (1..=8).map(|r| geometry(16, 16, r).mask().count()).collect();
        assert!(counts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let key = WatermarkKey::new(
            geometry(16, 16, 3),
            vec![0.1 + 0.2, -1.0 / 3.0, 6.02214076e23],
            u64::MAX,
            Some(Sector { index: 1, count: 4 }),
        )
        .unwrap();
        let text = key.to_json();
        let back = WatermarkKey::from_json(&text).unwrap();
        assert_eq!(back, key);
        assert!(text.contains("3.0000000000000004e-1"));
        let plain = generate_key(geometry(16, 16, 2), &[1.0, 1.0], 5).unwrap();
        assert!(!plain.to_json().contains("sector"));
        assert_eq!(WatermarkKey::from_json(&plain.to_json()).unwrap(), plain);
    }

    #[test]
    fn json_rejects_bad_files() {
        let key = generate_key(geometry(16, 16, 2), &[1.0, 1.0], 5).unwrap();
        let text = key.to_json();
        assert!(WatermarkKey::from_json(&text.replace("\"version\": 1", "\"version\": 2")).is_err());
        assert!(WatermarkKey::from_json(&text.replace("\"radius\": 2", "\"radius\": 3")).is_err());
        assert!(WatermarkKey::from_json("{}").is_err());
    }
}

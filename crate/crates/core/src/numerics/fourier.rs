use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::{Error, Result};

/// Largest imaginary part [`idft2`] tolerates before declaring the
/// spectrum non-Hermitian.
pub const IMAGINARY_RESIDUAL_LIMIT: f64 = 1e-6;

/// Orthonormal 2-D spectrum of one H×W channel.
///
/// With `centered == false` the zero-frequency bin sits at index (0, 0) and
/// the array center (H/2, W/2) holds the highest frequencies. With
/// `centered == true` the array is cyclically shifted so zero frequency is
/// at (H/2, W/2).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub centered: bool,
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.bins[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.bins[i * self.width + j] = value;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.bins.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Real part of an inverse transform plus the largest discarded imaginary part.
#[derive(Debug, Clone)]
pub struct InverseDft {
    pub values: Vec<f64>,
    pub max_imaginary: f64,
}

/// Forward orthonormal DFT (1/√(HW) scaling) of a real H×W channel.
pub fn dft2(channel: &[f64], height: usize, width: usize, centered: bool) -> Spectrum {
    assert_eq!(channel.len(), height * width, "channel length does not match grid");
    let mut bins: Vec<Complex64> = channel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut bins, height, width, FftDirection::Forward);
    if centered {
        bins = shift_half(&bins, height, width);
    }
    Spectrum {
        height,
        width,
        centered,
        bins,
    }
}

/// Inverse of [`dft2`] honouring the spectrum's centering flag.
pub fn idft2(spectrum: &Spectrum) -> Result<InverseDft> {
    let (h, w) = (spectrum.height, spectrum.width);
    if let Some(index) = spectrum
        .bins
        .iter()
        .position(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::NonFinite { index });
    }
    let mut bins = if spectrum.centered {
        shift_half(&spectrum.bins, h, w)
    } else {
        spectrum.bins.clone()
    };
    transform(&mut bins, h, w, FftDirection::Inverse);
    let max_imaginary = bins.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if max_imaginary > IMAGINARY_RESIDUAL_LIMIT {
        return Err(Error::ImaginaryResidualExceeded {
            residual: max_imaginary,
            limit: IMAGINARY_RESIDUAL_LIMIT,
        });
    }
    Ok(InverseDft {
        values: bins.iter().map(|z| z.re).collect(),
        max_imaginary,
    })
}

fn transform(bins: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(width, direction);
    let col_fft = planner.plan_fft(height, direction);

    row_fft.process(bins);

    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for j in 0..width {
        for i in 0..height {
            column[i] = bins[i * width + j];
        }
        col_fft.process(&mut column);
        for i in 0..height {
            bins[i * width + j] = column[i];
        }
    }

    let scale = 1.0 / ((height * width) as f64).sqrt();
    for z in bins.iter_mut() {
        *z *= scale;
    }
}

// For even sides the half shift is its own inverse.
fn shift_half(bins: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); bins.len()];
    for i in 0..height {
        let si = (i + height / 2) % height;
        for j in 0..width {
            let sj = (j + width / 2) % width;
            out[si * width + sj] = bins[i * width + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Direct O(N²) orthonormal DFT, independent of rustfft.
    fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        acc += x[i * w + j] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * w + v] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constant_image_is_dc_only() {
        let (h, w) = (6, 4);
        let a = 0.75;
        for centered in [false, true] {
            let s = dft2(&vec![a; h * w], h, w, centered);
            let (di, dj) = if centered { (h / 2, w / 2) } else { (0, 0) };
            for i in 0..h {
                for j in 0..w {
                    let z = s.get(i, j);
                    if (i, j) == (di, dj) {
                        assert!((z.re - a * ((h * w) as f64).sqrt()).abs() < 1e-12);
                        assert!(z.im.abs() < 1e-12);
                    } else {
                        assert!(z.norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn impulse_matches_naive_dft() {
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        let s = dft2(&x, 4, 4, false);
        let oracle = naive_dft(&x, 4, 4);
        for (z, o) in s.bins.iter().zip(&oracle) {
            assert!((z - o).norm() < 1e-12);
            assert!((z.norm() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn random_grid_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (h, w) = (6, 8);
        let x = random_grid(&mut rng, h * w);
        let s = dft2(&x, h, w, false);
        for (z, o) in s.bins.iter().zip(naive_dft(&x, h, w)) {
            assert!((z - o).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_inverts_to_impulse() {
        let s = Spectrum {
            height: 4,
            width: 4,
            centered: false,
            bins: vec![Complex64::new(0.25, 0.0); 16],
        };
        let inv = idft2(&s).unwrap();
        assert!((inv.values[0] - 1.0).abs() < 1e-12);
        assert!(inv.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn round_trip_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_grid(&mut rng, 64);
        for centered in [false, true] {
            let back = idft2(&dft2(&x, 8, 8, centered)).unwrap();
            for (a, b) in x.iter().zip(&back.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_symmetrized_spectrum_is_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (8, 6);
        let raw: Vec<Complex64> = (0..h * w)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut bins = vec![Complex64::new(0.0, 0.0); h * w];
        for i in 0..h {
            for j in 0..w {
                let (mi, mj) = ((h - i) % h, (w - j) % w);
                bins[i * w + j] = (raw[i * w + j] + raw[mi * w + mj].conj()) * 0.5;
            }
        }
        let s = Spectrum {
            height: h,
            width: w,
            centered: false,
            bins,
        };
        assert!(idft2(&s).unwrap().max_imaginary < 1e-12);
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let mut bins = vec![Complex64::new(0.0, 0.0); 16];
        bins[1] = Complex64::new(1.0, 0.0);
        let s = Spectrum {
            height: 4,
            width: 4,
            centered: false,
            bins,
        };
        assert!(matches!(
            idft2(&s),
            Err(Error::ImaginaryResidualExceeded { .. })
        ));
    }

    #[test]
    fn centered_is_half_shift_of_uncentered() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w) = (8, 10);
        let x = random_grid(&mut rng, h * w);
        let plain = dft2(&x, h, w, false);
        let centered = dft2(&x, h, w, true);
        for i in 0..h {
            for j in 0..w {
                let z = centered.get((i + h / 2) % h, (j + w / 2) % w);
                assert_eq!(z, plain.get(i, j));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn parseval(seed in 0u64..10_000, hh in 1usize..6, ww in 1usize..6) {
            let (h, w) = (2 * hh, 2 * ww);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_grid(&mut rng, h * w);
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let s = dft2(&x, h, w, seed % 2 == 0);
            proptest::prop_assert!((energy.sqrt() - s.norm_sqr().sqrt()).abs() < 1e-10);
        }
    }
}

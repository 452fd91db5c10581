//! Consistency (PSNR, SSIM) and robustness (ROC) metrics.

mod roc;

pub use roc::{roc, RocCurve};

use crate::{Error, ImageTensor, Result};

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.as_slice().len() as f64;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// 10·log₁₀(peak²/MSE), capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::param("peak", format!("must be positive, got {peak}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP_DB))
}

/// Mean single-scale SSIM over every `window`×`window` patch of every
/// channel, with population moments and c1 = (0.01·peak)², c2 = (0.03·peak)².
pub fn ssim(a: &ImageTensor, b: &ImageTensor, window: usize, peak: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let shape = a.shape();
    let (h, w) = (shape.height, shape.width);
    if window == 0 || window > h || window > w {
        return Err(Error::param("window", format!("{window} does not fit a {h}x{w} grid")));
    }
    if !(peak > 0.0) {
        return Err(Error::param("peak", format!("must be positive, got {peak}")));
    }
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let n = (window * window) as f64;
    let (oh, ow) = (h - window + 1, w - window + 1);
    let mut total = 0.0;
    for c in 0..shape.channels {
        let (x, y) = (a.channel(c), b.channel(c));
        let sx = SummedArea::new(x.iter().copied(), h, w);
        let sy = SummedArea::new(y.iter().copied(), h, w);
        let sxx = SummedArea::new(x.iter().map(|v| v * v), h, w);
        let syy = SummedArea::new(y.iter().map(|v| v * v), h, w);
        let sxy = SummedArea::new(x.iter().zip(y).map(|(p, q)| p * q), h, w);
        for i in 0..oh {
            for j in 0..ow {
                let mx = sx.window(i, j, window) / n;
                let my = sy.window(i, j, window) / n;
                let vx = sxx.window(i, j, window) / n - mx * mx;
                let vy = syy.window(i, j, window) / n - my * my;
                let cov = sxy.window(i, j, window) / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    Ok(total / (shape.channels * oh * ow) as f64)
}

/// Maps both images with one affine map sending their joint range onto [0, 1].
pub fn normalize_joint(a: &ImageTensor, b: &ImageTensor) -> Result<(ImageTensor, ImageTensor)> {
    a.ensure_same_shape(b)?;
    let (alo, ahi) = a.min_max();
    let (blo, bhi) = b.min_max();
    let (lo, hi) = (alo.min(blo), ahi.max(bhi));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let map = |x: &ImageTensor| {
        let data = x.as_slice().iter().map(|v| (v - lo) / span).collect();
        ImageTensor::new(x.shape(), data)
    };
    Ok((map(a)?, map(b)?))
}

struct SummedArea {
    width: usize,
    table: Vec<f64>,
}

impl SummedArea {
    fn new(values: impl Iterator<Item = f64>, h: usize, w: usize) -> Self {
        let stride = w + 1;
        let mut table = vec![0.0; (h + 1) * stride];
        for (k, v) in values.enumerate() {
            let (i, j) = (k / w + 1, k % w + 1);
            table[i * stride + j] = v + table[(i - 1) * stride + j] + table[i * stride + j - 1]
                - table[(i - 1) * stride + j - 1];
        }
        SummedArea { width: stride, table }
    }

    fn window(&self, i: usize, j: usize, k: usize) -> f64 {
        let s = self.width;
        self.table[(i + k) * s + j + k] - self.table[i * s + j + k] - self.table[(i + k) * s + j]
            + self.table[i * s + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    fn pattern(seed: f64) -> ImageTensor {
        let shape = Shape::new(2, 16, 16).unwrap();
        let data = (0..512)
            .map(|k| {
                let (i, j) = ((k % 256) / 16, k % 16);
                0.5 + 0.4 * ((i as f64 * 0.7 + seed).sin() * (j as f64 * 1.3 - seed).cos())
            })
            .collect();
        ImageTensor::new(shape, data).unwrap()
    }

    fn ssim_oracle(a: &ImageTensor, b: &ImageTensor, window: usize, peak: f64) -> f64 {
        let shape = a.shape();
        let (h, w) = (shape.height, shape.width);
        let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
        let mut values = Vec::new();
        for c in 0..shape.channels {
            for i in 0..=h - window {
                for j in 0..=w - window {
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for u in 0..window {
                        for v in 0..window {
                            xs.push(a.get(c, i + u, j + v));
                            ys.push(b.get(c, i + u, j + v));
                        }
                    }
                    let n = xs.len() as f64;
                    let mx = xs.iter().sum::<f64>() / n;
                    let my = ys.iter().sum::<f64>() / n;
                    let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
                    let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
                    let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
                    values.push(
                        ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)),
                    );
                }
            }
        }
        values.iter().sum::<f64>() / values.len() as f64
    }

    #[test]
    fn psnr_values() {
        let shape = Shape::new(1, 4, 4).unwrap();
        let a = ImageTensor::zeros(shape);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        let b = ImageTensor::filled(shape, 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = ImageTensor::filled(shape, 0.5);
        assert!((psnr(&a, &c, 1.0).unwrap() - 6.020599913279624).abs() < 1e-9);
        assert_eq!(psnr(&a, &c, 1.0).unwrap(), psnr(&c, &a, 1.0).unwrap());
        assert!(psnr(&a, &c, 0.0).is_err());
        assert!(psnr(&a, &ImageTensor::zeros(Shape::new(1, 4, 6).unwrap()), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_antiphase() {
        let a = pattern(0.3);
        assert!((ssim(&a, &a, 8, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let shape = Shape::new(1, 8, 8).unwrap();
        let p = ImageTensor::filled(shape, 0.5);
        let q = ImageTensor::filled(shape, -0.5);
        assert!(ssim(&p, &q, 8, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_matches_direct_oracle() {
        let (a, b) = (pattern(0.3), pattern(1.1));
        let fast = ssim(&a, &b, 8, 1.0).unwrap();
        assert!((fast - ssim_oracle(&a, &b, 8, 1.0)).abs() <= 1e-10);
        assert!((fast - ssim(&b, &a, 8, 1.0).unwrap()).abs() <= 1e-14);
        assert!(ssim(&a, &b, 17, 1.0).is_err());
    }

    #[test]
    fn joint_normalization_range() {
        let shape = Shape::new(1, 2, 2).unwrap();
        let a = ImageTensor::new(shape, vec![-1.0, 0.0, 1.0, 2.0]).unwrap();
        let b = ImageTensor::new(shape, vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        let (na, nb) = normalize_joint(&a, &b).unwrap();
        assert_eq!(na.as_slice(), &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(nb.as_slice(), &[1.0, 0.25, 0.25, 0.25]);
    }
}

use crate::ImageTensor;

/// Mirror index without edge repetition (…, 2, 1, 0, 1, 2, …).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Kernel offsets −⌊k/2⌋ .. k−1−⌊k/2⌋, so an even kernel extends one tap
/// further up/left.
fn offsets(kernel: usize) -> std::ops::Range<isize> {
    let lo = -((kernel / 2) as isize);
    lo..lo + kernel as isize
}

/// Separable k×k Gaussian with σ = k/3, normalized taps, reflect padding.
pub fn gaussian_blur(image: &ImageTensor, kernel: usize) -> ImageTensor {
    let sigma = kernel as f64 / 3.0;
    let taps: Vec<(isize, f64)> = offsets(kernel)
        .map(|o| (o, (-(o * o) as f64 / (2.0 * sigma * sigma)).exp()))
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    let taps: Vec<(isize, f64)> = taps.into_iter().map(|(o, w)| (o, w / total)).collect();
    let shape = image.shape();
    let (h, w) = (shape.height, shape.width);
    let mut out = image.clone();
    for c in 0..shape.channels {
        let src = image.channel(c);
        let mut rows = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                rows[i * w + j] = taps
                    .iter()
                    .map(|&(o, wt)| wt * src[i * w + reflect(j as isize + o, w)])
                    .sum();
            }
        }
        let dst = out.channel_mut(c);
        for i in 0..h {
            for j in 0..w {
                dst[i * w + j] = taps
                    .iter()
                    .map(|&(o, wt)| wt * rows[reflect(i as isize + o, h) * w + j])
                    .sum();
            }
        }
    }
    out
}

/// k×k median with reflect padding; even windows take the lower middle.
pub fn median_blur(image: &ImageTensor, kernel: usize) -> ImageTensor {
    let shape = image.shape();
    let (h, w) = (shape.height, shape.width);
    let mut out = image.clone();
    let mut window = Vec::with_capacity(kernel * kernel);
    for c in 0..shape.channels {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for i in 0..h {
            for j in 0..w {
                window.clear();
                for di in offsets(kernel) {
                    let r = reflect(i as isize + di, h);
                    for dj in offsets(kernel) {
                        window.push(src[r * w + reflect(j as isize + dj, w)]);
                    }
                }
                let mid = (window.len() - 1) / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
                dst[i * w + j] = *m;
            }
        }
    }
    out
}

/// Bilinear down to ⌈H·f⌉×⌈W·f⌉ and back, half-pixel centers, edge clamped.
pub fn resize_restore(image: &ImageTensor, factor: f64) -> ImageTensor {
    let shape = image.shape();
    let (h, w) = (shape.height, shape.width);
    let (sh, sw) = (
        ((h as f64 * factor).ceil() as usize).max(1),
        ((w as f64 * factor).ceil() as usize).max(1),
    );
    let mut out = image.clone();
    for c in 0..shape.channels {
        let small = bilinear(image.channel(c), h, w, sh, sw);
        let back = bilinear(&small, sh, sw, h, w);
        out.channel_mut(c).copy_from_slice(&back);
    }
    out
}

fn bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let sample = |coord: f64, n: usize| -> (usize, usize, f64) {
        let p = coord.clamp(0.0, (n - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, p - lo as f64)
    };
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        let (i0, i1, fi) = sample((i as f64 + 0.5) * h as f64 / oh as f64 - 0.5, h);
        for j in 0..ow {
            let (j0, j1, fj) = sample((j as f64 + 0.5) * w as f64 / ow as f64 - 0.5, w);
            let top = src[i0 * w + j0] * (1.0 - fj) + src[i0 * w + j1] * fj;
            let bottom = src[i1 * w + j0] * (1.0 - fj) + src[i1 * w + j1] * fj;
            out[i * ow + j] = top * (1.0 - fi) + bottom * fi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..9).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![4, 3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1, 0]);
        assert_eq!(reflect(-7, 2), 1);
    }

    #[test]
    fn median_of_constant_is_constant() {
        let x = ImageTensor::filled(Shape::new(2, 8, 8).unwrap(), 0.37);
        assert_eq!(median_blur(&x, 7), x);
    }

    #[test]
    fn median_removes_isolated_spike() {
        let mut x = ImageTensor::zeros(Shape::new(1, 8, 8).unwrap());
        x.as_mut_slice()[27] = 100.0;
        assert!(median_blur(&x, 7).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blur_preserves_constants_and_mean_of_impulse() {
        let x = ImageTensor::filled(Shape::new(1, 16, 16).unwrap(), 2.5);
        assert!(gaussian_blur(&x, 8).as_slice().iter().all(|v| (v - 2.5).abs() < 1e-12));
        let mut y = ImageTensor::zeros(Shape::new(1, 16, 16).unwrap());
        y.as_mut_slice()[8 * 16 + 8] = 1.0;
        let b = gaussian_blur(&y, 8);
        assert!((b.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Taps at offset o land at 8 − o; offsets run −4..=3.
        assert!(b.get(0, 8, 12) > 0.0 && b.get(0, 8, 4) == 0.0);
        assert!(b.get(0, 8, 5) > 0.0);
    }

    #[test]
    fn resize_restore_keeps_linear_ramps_in_interior() {
        let shape = Shape::new(1, 16, 16).unwrap();
        let data = (0..256).map(|k| (k % 16) as f64).collect();
        let x = ImageTensor::new(shape, data).unwrap();
        let y = resize_restore(&x, 0.5);
        for i in 0..16 {
            for j in 2..14 {
                assert!((y.get(0, i, j) - j as f64).abs() < 1e-12);
            }
        }
    }
}

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::spatial::reflect;
use crate::ImageTensor;

const LUMINANCE: [u32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled to `quality` with the usual libjpeg rule.
pub(crate) fn quant_table(quality: u32) -> [f64; 64] {
    let q = quality.clamp(1, 100);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    LUMINANCE.map(|t| ((t * scale + 50) / 100).clamp(1, 255) as f64)
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (k, row) in m.iter_mut().enumerate() {
            let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = a * (PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        m
    })
}

/// Block-DCT quantization surrogate for JPEG. The whole image is mapped
/// affinely onto 0..255, each channel is cut into 8×8 blocks (reflect padded
/// at ragged edges), coefficients are rounded to multiples of the scaled
/// table, and the result is mapped back. Quality 100 is the identity.
pub fn jpeg_like(image: &ImageTensor, quality: u32) -> ImageTensor {
    let (lo, hi) = image.min_max();
    if quality >= 100 || hi <= lo {
        return image.clone();
    }
    let table = quant_table(quality);
    let scale = 255.0 / (hi - lo);
    let shape = image.shape();
    let (h, w) = (shape.height, shape.width);
    let m = dct_matrix();
    let mut out = image.clone();
    for c in 0..shape.channels {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for bi in (0..h).step_by(8) {
            for bj in (0..w).step_by(8) {
                let mut block = [[0.0; 8]; 8];
                for (u, row) in block.iter_mut().enumerate() {
                    for (v, b) in row.iter_mut().enumerate() {
                        let i = reflect((bi + u) as isize, h);
                        let j = reflect((bj + v) as isize, w);
                        *b = (src[i * w + j] - lo) * scale - 128.0;
                    }
                }
                let mut coef = transform(m, &block, false);
                for (k, row) in coef.iter_mut().enumerate() {
                    for (l, v) in row.iter_mut().enumerate() {
                        let q = table[k * 8 + l];
                        *v = (*v / q).round() * q;
                    }
                }
                let back = transform(m, &coef, true);
                for u in 0..8.min(h - bi) {
                    for v in 0..8.min(w - bj) {
                        dst[(bi + u) * w + bj + v] = (back[u][v] + 128.0) / scale + lo;
                    }
                }
            }
        }
    }
    out
}

// Forward: M·X·Mᵀ. Inverse: Mᵀ·X·M.
fn transform(m: &[[f64; 8]; 8], x: &[[f64; 8]; 8], inverse: bool) -> [[f64; 8]; 8] {
    let at = |a: usize, b: usize| if inverse { m[b][a] } else { m[a][b] };
    let mut tmp = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            tmp[i][j] = (0..8).map(|k| at(i, k) * x[k][j]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            out[i][j] = (0..8).map(|k| tmp[i][k] * at(j, k)).sum();
        }
    }
    out
}

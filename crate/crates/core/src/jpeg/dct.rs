//! Exact 8x8 type-II DCT with orthonormal scaling, plus the quantization
//! round trip used by the codec.
//!
//! The transform is computed separably in double precision. Rounding is
//! half-away-from-zero everywhere (both quantization and reconstruction) so
//! that coefficient fixtures are reproducible.

use crate::jpeg::QuantTable;

/// basis[k][n] = c(k) * 0.5 * cos((2n+1) k pi / 16), c(0) = 1/sqrt(2).
fn basis() -> &'static [[f64; 8]; 8] {
    use std::sync::OnceLock;
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0f64; 8]; 8];
        for (k, row) in m.iter_mut().enumerate() {
            let ck = if k == 0 { 1.0 / 2.0f64.sqrt() } else { 1.0 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = ck * 0.5 * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        m
    })
}

/// Forward 2-D DCT of an 8x8 block, orthonormal scaling.
pub fn dct_2d(block: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    // Rows: tmp[y][u] = sum_x block[y][x] m[u][x]
    let mut tmp = [0.0f64; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += block[y * 8 + x] * m[u][x];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    // Columns: out[v][u] = sum_y tmp[y][u] m[v][y]
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += tmp[y * 8 + u] * m[v][y];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// Inverse 2-D DCT, orthonormal scaling.
pub fn idct_2d(coeffs: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    // Columns first: tmp[y][u] = sum_v coeffs[v][u] m[v][y]
    let mut tmp = [0.0f64; 64];
    for u in 0..8 {
        for y in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += coeffs[v * 8 + u] * m[v][y];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += tmp[y * 8 + u] * m[u][x];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}

/// DCT of a level-shifted sample block followed by quantization.
/// Each output is `round(coefficient / step)`, half away from zero.
pub fn forward_dct_and_quantize(samples: &[i16; 64], qt: &QuantTable) -> [i32; 64] {
    let mut block = [0.0f64; 64];
    for (b, &s) in block.iter_mut().zip(samples.iter()) {
        *b = s as f64;
    }
    let freq = dct_2d(&block);
    let mut out = [0i32; 64];
    for i in 0..64 {
        out[i] = (freq[i] / qt.0[i] as f64).round() as i32;
    }
    out
}

/// Dequantization and inverse DCT back to clamped [0, 255] samples.
/// The level shift of +128 is applied after rounding.
pub fn dequantize_and_idct(coeffs: &[i32; 64], qt: &QuantTable) -> [u8; 64] {
    let mut freq = [0.0f64; 64];
    for i in 0..64 {
        freq[i] = coeffs[i] as f64 * qt.0[i] as f64;
    }
    let spatial = idct_2d(&freq);
    let mut out = [0u8; 64];
    for i in 0..64 {
        out[i] = (spatial[i].round() + 128.0).clamp(0.0, 255.0) as u8;
    }
    out
}

//! Seeded synthetic corpus: textured RGB images built from oriented
//! sinusoid mixtures, smooth gradients, and band-limited noise, so the
//! whole pipeline can run without any external image set.

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::Result;
use crate::ppm::{write_ppm_file, RasterImage};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorpusSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

/// One synthetic image. Deterministic in (spec.seed, index).
pub fn synth_image(spec: &CorpusSpec, index: usize) -> RasterImage {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(0x53594e54 ^ index as u64); // corpus stream, distinct per image

    // A shared luminance structure plus per-channel detail keeps channels
    // correlated the way photographs are.
    let make_waves = |rng: &mut ChaCha20Rng, n: usize, f_lo: f64, f_hi: f64| -> Vec<Wave> {
        (0..n)
            .map(|_| {
                let freq = rng.gen_range(f_lo..f_hi);
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                Wave {
                    fx: freq * theta.cos(),
                    fy: freq * theta.sin(),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    amp: rng.gen_range(8.0..40.0),
                }
            })
            .collect()
    };
    let base_waves = make_waves(&mut rng, 6, 0.01, 0.35);
    let channel_waves: Vec<Vec<Wave>> =
        (0..3).map(|_| make_waves(&mut rng, 3, 0.05, 0.6)).collect();

    let grad = (
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(60.0..190.0),
    );
    let offsets = [0.0, rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0)];
    let noise_amp = rng.gen_range(2.0..10.0);

    let mut img = RasterImage::filled(spec.width, spec.height, [0, 0, 0]);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (xf, yf) = (x as f64, y as f64);
            let mut base = grad.2 + grad.0 * xf + grad.1 * yf;
            for w in &base_waves {
                base += w.amp * (w.fx * xf + w.fy * yf + w.phase).sin();
            }
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let mut v = base + offsets[ch];
                for w in &channel_waves[ch] {
                    v += w.amp * 0.5 * (w.fx * xf + w.fy * yf + w.phase).sin();
                }
                v += rng.gen_range(-noise_amp..noise_amp);
                px[ch] = v.round().clamp(0.0, 255.0) as u8;
            }
            img.set_pixel(x, y, px);
        }
    }
    img
}

/// Write `spec.count` images as `img_00000.ppm`, ... and return their
/// paths.
pub fn gen_corpus(out_dir: &Path, spec: &CorpusSpec) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let img = synth_image(spec, i);
        let path = out_dir.join(format!("img_{:05}.ppm", i));
        write_ppm_file(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

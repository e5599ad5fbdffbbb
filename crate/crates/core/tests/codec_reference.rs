//! Codec checks against frozen references produced by an independent
//! decoder (libjpeg; see tools/refdump.c and tests/fixtures/README.md).

use jcl_core::jpeg::{self, inspect};
use jcl_core::ppm;
use jcl_core::Error;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> Vec<u8> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {}", path.display(), e))
}

fn dump(planes: &jcl_core::jpeg::QuantizedDctPlanes) -> String {
    let mut buf = Vec::new();
    inspect::dump_coefficients(planes, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn decodes_libjpeg_file_to_identical_coefficients() {
    let planes = jpeg::decode_coefficients(&fixture("libjpeg_q80.jpg")).unwrap();
    let expected = String::from_utf8(fixture("libjpeg_q80.coeffs.txt")).unwrap();
    assert_eq!(dump(&planes), expected);
}

#[test]
fn libjpeg_encoder_used_same_quality_scaling() {
    let planes = jpeg::decode_coefficients(&fixture("libjpeg_q80.jpg")).unwrap();
    let (luma, chroma) = jpeg::quality_to_qtables(80).unwrap();
    assert_eq!(planes.qtables[0], luma);
    assert_eq!(planes.qtables[1], chroma);
    assert_eq!(planes.qtables[2], chroma);
}

#[test]
fn our_bitstream_decodes_identically_in_libjpeg() {
    // ours_q75.coeffs.txt is libjpeg's reading of our encoder's output.
    let planes = jpeg::decode_coefficients(&fixture("ours_q75.jpg")).unwrap();
    let expected = String::from_utf8(fixture("ours_q75.coeffs.txt")).unwrap();
    assert_eq!(dump(&planes), expected);
}

#[test]
fn our_encoder_reproduces_the_frozen_fixture() {
    let src = ppm::read_ppm(&fixture("source_64x48.ppm")).unwrap();
    let bytes = jpeg::encode(&src, 75).unwrap();
    assert_eq!(bytes, fixture("ours_q75.jpg"));
}

#[test]
fn decompress_within_one_of_reference_decoder() {
    let ours = jpeg::decompress(&fixture("libjpeg_q80.jpg")).unwrap();
    let reference = ppm::read_ppm(&fixture("libjpeg_q80.pixels.ppm")).unwrap();
    assert_eq!((ours.width, ours.height), (reference.width, reference.height));
    let mut worst = 0i32;
    for (a, b) in ours.data.iter().zip(reference.data.iter()) {
        worst = worst.max((*a as i32 - *b as i32).abs());
    }
    assert!(worst <= 1, "max per-sample difference {} exceeds 1", worst);
}

#[test]
fn rejects_progressive_fixture_by_marker_name() {
    let err = jpeg::decode_coefficients(&fixture("progressive.jpg")).unwrap_err();
    match err {
        Error::UnsupportedFormat(msg) => {
            assert!(msg.contains("SOF2"), "message should name SOF2: {}", msg)
        }
        other => panic!("expected UnsupportedFormat, got {:?}", other),
    }
}

#[test]
fn rejects_subsampled_fixture_naming_sampling() {
    let err = jpeg::decode_coefficients(&fixture("subsampled_420.jpg")).unwrap_err();
    match err {
        Error::UnsupportedFormat(msg) => {
            assert!(msg.contains("2x2"), "message should name the sampling: {}", msg)
        }
        other => panic!("expected UnsupportedFormat, got {:?}", other),
    }
}

#[test]
fn inspect_still_reports_unsupported_files() {
    let report = inspect::inspect(&fixture("progressive.jpg")).unwrap();
    assert_eq!(report.frame_type, "SOF2 (progressive)");
    assert!(report.channel_stats.is_none());
    assert_eq!((report.width, report.height), (64, 48));
}

#[test]
fn recompress_reaches_a_fixed_point() {
    let mut cur = fixture("ours_q75.jpg");
    let mut converged = false;
    for _ in 0..50 {
        let next = jpeg::recompress(&cur, 75).unwrap();
        if jpeg::decode_coefficients(&next).unwrap().planes
            == jpeg::decode_coefficients(&cur).unwrap().planes
        {
            converged = true;
            // A fixed point stays fixed.
            let again = jpeg::recompress(&next, 75).unwrap();
            assert_eq!(
                jpeg::decode_coefficients(&again).unwrap().planes,
                jpeg::decode_coefficients(&next).unwrap().planes
            );
            break;
        }
        cur = next;
    }
    assert!(converged, "no fixed point within 50 recompressions");
}

fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ppm::RasterImage {
    // Smooth fields compress realistically; pure noise would also work but
    // stresses only the worst case.
    let (fx, fy, fz) = (
        rng.gen_range(0.02..0.3),
        rng.gen_range(0.02..0.3),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let mut img = ppm::RasterImage::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let base = 128.0
                + 90.0 * (fx * x as f64 + fz).sin()
                + 60.0 * (fy * y as f64).cos();
            let px = |o: f64, n: f64| (base + o + n).clamp(0.0, 255.0) as u8;
            img.set_pixel(
                x,
                y,
                [
                    px(0.0, rng.gen_range(-12.0..12.0)),
                    px(-20.0, rng.gen_range(-12.0..12.0)),
                    px(17.0, rng.gen_range(-12.0..12.0)),
                ],
            );
        }
    }
    img
}

#[test]
fn entropy_layer_is_lossless_for_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..50 {
        let w = rng.gen_range(8..80);
        let h = rng.gen_range(8..80);
        let q = rng.gen_range(1..=100);
        let img = random_image(&mut rng, w, h);
        let planes = jpeg::compress_to_planes(&img, q).unwrap();
        let decoded = jpeg::decode_coefficients(&jpeg::encode_from_planes(&planes)).unwrap();
        assert_eq!(planes, decoded, "case {} ({}x{} q{})", i, w, h, q);
    }
}

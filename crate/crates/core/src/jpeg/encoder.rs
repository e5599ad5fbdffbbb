//! Baseline JFIF encoder: 4:4:4, default Annex K Huffman tables, one
//! interleaved scan, no restart markers.

use crate::error::{Error, Result};
use crate::jpeg::color::rgb_to_ycbcr;
use crate::jpeg::dct::forward_dct_and_quantize;
use crate::jpeg::huffman::{magnitude_bits, magnitude_category, BitWriter, HuffEncoder};
use crate::jpeg::tables::{
    quality_to_qtables, AC_CHROMA_SPEC, AC_LUMA_SPEC, DC_CHROMA_SPEC, DC_LUMA_SPEC, ZIGZAG,
};
use crate::jpeg::{CoeffPlane, QuantizedDctPlanes};
use crate::ppm::RasterImage;

const MAX_DIMENSION: usize = 65535;

/// One padded channel of level-shifted samples.
struct Channel {
    w: usize, // multiple of 8
    h: usize,
    samples: Vec<i16>,
}

impl Channel {
    fn block(&self, bx: usize, by: usize) -> [i16; 64] {
        let mut out = [0i16; 64];
        for row in 0..8 {
            let at = (by * 8 + row) * self.w + bx * 8;
            out[row * 8..row * 8 + 8].copy_from_slice(&self.samples[at..at + 8]);
        }
        out
    }
}

/// Convert to YCbCr, pad to block multiples by edge replication, and level
/// shift by -128.
fn to_padded_channels(img: &RasterImage) -> [Channel; 3] {
    let pw = img.width.div_ceil(8) * 8;
    let ph = img.height.div_ceil(8) * 8;
    let mut channels = [(); 3].map(|_| Channel { w: pw, h: ph, samples: vec![0i16; pw * ph] });
    for y in 0..ph {
        let sy = y.min(img.height - 1);
        for x in 0..pw {
            let sx = x.min(img.width - 1);
            let [r, g, b] = img.pixel(sx, sy);
            let (cy, cb, cr) = rgb_to_ycbcr(r, g, b);
            let at = y * pw + x;
            channels[0].samples[at] = cy as i16 - 128;
            channels[1].samples[at] = cb as i16 - 128;
            channels[2].samples[at] = cr as i16 - 128;
        }
    }
    channels
}

/// Run the lossy half of the encoder: color conversion, padding, DCT and
/// quantization. The returned planes are exactly what
/// [`encode_from_planes`] serializes and what the decoder recovers.
pub fn compress_to_planes(img: &RasterImage, quality: u8) -> Result<QuantizedDctPlanes> {
    if img.width < 8 || img.height < 8 {
        return Err(Error::ImageTooSmall { width: img.width, height: img.height });
    }
    if img.width > MAX_DIMENSION || img.height > MAX_DIMENSION {
        return Err(Error::Format {
            what: "raster image",
            message: format!("{}x{} exceeds the 65535 dimension limit", img.width, img.height),
        });
    }
    let (luma_qt, chroma_qt) = quality_to_qtables(quality)?;
    let channels = to_padded_channels(img);
    let blocks_w = channels[0].w / 8;
    let blocks_h = channels[0].h / 8;
    let mut planes = [(); 3].map(|_| CoeffPlane::zeroed(blocks_w, blocks_h));
    for (ch, channel) in channels.iter().enumerate() {
        let qt = if ch == 0 { &luma_qt } else { &chroma_qt };
        for by in 0..blocks_h {
            for bx in 0..blocks_w {
                let samples = channel.block(bx, by);
                *planes[ch].block_mut(bx, by) = forward_dct_and_quantize(&samples, qt);
            }
        }
    }
    Ok(QuantizedDctPlanes {
        width: img.width,
        height: img.height,
        planes,
        qtables: [luma_qt, chroma_qt.clone(), chroma_qt],
    })
}

/// Serialize coefficient planes to a complete JFIF file.
pub fn encode_from_planes(planes: &QuantizedDctPlanes) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&[0xff, 0xd8]); // SOI

    // APP0 / JFIF 1.01, square pixels, no thumbnail.
    push_segment(
        &mut out,
        0xe0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );

    let mut dqt = Vec::with_capacity(130);
    for (id, qt) in [(0u8, &planes.qtables[0]), (1u8, &planes.qtables[1])] {
        dqt.push(id); // Pq = 0 in the high nibble
        for &nat in ZIGZAG.iter() {
            dqt.push(qt.0[nat] as u8);
        }
    }
    push_segment(&mut out, 0xdb, &dqt);

    // SOF0: 8-bit, three components, all 1x1 sampling.
    let mut sof = vec![8u8];
    sof.extend_from_slice(&(planes.height as u16).to_be_bytes());
    sof.extend_from_slice(&(planes.width as u16).to_be_bytes());
    sof.push(3);
    for (id, tq) in [(1u8, 0u8), (2, 1), (3, 1)] {
        sof.extend_from_slice(&[id, 0x11, tq]);
    }
    push_segment(&mut out, 0xc0, &sof);

    let mut dht = Vec::new();
    for (class_id, spec) in [
        (0x00u8, &DC_LUMA_SPEC),
        (0x10, &AC_LUMA_SPEC),
        (0x01, &DC_CHROMA_SPEC),
        (0x11, &AC_CHROMA_SPEC),
    ] {
        dht.push(class_id);
        dht.extend_from_slice(&spec.bits);
        dht.extend_from_slice(spec.vals);
    }
    push_segment(&mut out, 0xc4, &dht);

    // SOS: Y -> tables 0, Cb/Cr -> tables 1.
    push_segment(&mut out, 0xda, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    out.extend_from_slice(&entropy_encode(planes));
    out.extend_from_slice(&[0xff, 0xd9]); // EOI
    out
}

/// Compress an image to JFIF bytes at the given IJG quality.
pub fn encode(img: &RasterImage, quality: u8) -> Result<Vec<u8>> {
    Ok(encode_from_planes(&compress_to_planes(img, quality)?))
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn entropy_encode(planes: &QuantizedDctPlanes) -> Vec<u8> {
    let dc_luma = HuffEncoder::new(&DC_LUMA_SPEC);
    let ac_luma = HuffEncoder::new(&AC_LUMA_SPEC);
    let dc_chroma = HuffEncoder::new(&DC_CHROMA_SPEC);
    let ac_chroma = HuffEncoder::new(&AC_CHROMA_SPEC);
    let mut writer = BitWriter::new();
    let mut pred = [0i32; 3];
    let blocks_w = planes.planes[0].blocks_w;
    let blocks_h = planes.planes[0].blocks_h;
    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            for ch in 0..3 {
                let (dc, ac) =
                    if ch == 0 { (&dc_luma, &ac_luma) } else { (&dc_chroma, &ac_chroma) };
                encode_block(planes.planes[ch].block(bx, by), &mut pred[ch], dc, ac, &mut writer);
            }
        }
    }
    writer.finish()
}

pub(crate) fn encode_block(
    coeffs: &[i32; 64],
    pred: &mut i32,
    dc: &HuffEncoder,
    ac: &HuffEncoder,
    w: &mut BitWriter,
) {
    let diff = coeffs[0] - *pred;
    *pred = coeffs[0];
    let size = magnitude_category(diff);
    dc.emit(size, w);
    if size > 0 {
        w.put_bits(magnitude_bits(diff, size), size as u32);
    }

    let mut run = 0u32;
    for &nat in ZIGZAG[1..].iter() {
        let v = coeffs[nat];
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            ac.emit(0xf0, w); // ZRL
            run -= 16;
        }
        let size = magnitude_category(v);
        ac.emit(((run as u8) << 4) | size, w);
        w.put_bits(magnitude_bits(v, size), size as u32);
        run = 0;
    }
    if run > 0 {
        ac.emit(0x00, w); // EOB
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_images() {
        let img = RasterImage::filled(4, 12, [10, 20, 30]);
        match encode(&img, 80) {
            Err(Error::ImageTooSmall { width: 4, height: 12 }) => {}
            other => panic!("expected size error, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn rejects_bad_quality() {
        let img = RasterImage::filled(8, 8, [0, 0, 0]);
        assert!(matches!(encode(&img, 0), Err(Error::InvalidQuality(0))));
    }

    #[test]
    fn grey_image_has_dc_only_planes() {
        let img = RasterImage::filled(16, 16, [128, 128, 128]);
        let planes = compress_to_planes(&img, 50).unwrap();
        for plane in &planes.planes {
            for block in plane.blocks() {
                assert!(block[1..].iter().all(|&c| c == 0));
            }
        }
        // (128,128,128) maps to YCbCr (128,128,128); level shift gives 0.
        assert_eq!(planes.planes[0].coeff(0, 0, 0, 0), 0);
    }

    #[test]
    fn output_is_wrapped_in_soi_eoi() {
        let img = RasterImage::filled(8, 8, [200, 100, 50]);
        let bytes = encode(&img, 90).unwrap();
        assert_eq!(&bytes[..2], &[0xff, 0xd8]);
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xd9]);
        // JFIF APP0 right after SOI.
        assert_eq!(&bytes[2..4], &[0xff, 0xe0]);
        assert_eq!(&bytes[6..11], b"JFIF\0");
    }

    #[test]
    fn padding_replicates_edges() {
        // 9x9 image: the padded 16x16 luma must repeat the last row/col.
        let mut img = RasterImage::filled(9, 9, [0, 0, 0]);
        for y in 0..9 {
            img.set_pixel(8, y, [255, 255, 255]);
        }
        let ch = to_padded_channels(&img);
        assert_eq!(ch[0].w, 16);
        for y in 0..16 {
            for x in 9..16 {
                assert_eq!(ch[0].samples[y * 16 + x], ch[0].samples[y * 16 + 8]);
            }
        }
    }
}

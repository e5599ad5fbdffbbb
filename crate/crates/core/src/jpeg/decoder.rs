//! Baseline JPEG decoder: marker parsing into a [`JpegFileModel`], entropy
//! decoding back to quantized coefficient planes, and full decompression
//! to RGB.
//!
//! Files outside the supported profile (progressive, arithmetic coding,
//! subsampled chroma, not exactly three components) are rejected with an
//! error naming the marker or field responsible.

use crate::error::{Error, Result};
use crate::jpeg::color::ycbcr_to_rgb;
use crate::jpeg::dct::dequantize_and_idct;
use crate::jpeg::huffman::{extend_magnitude, BitReader, HuffDecoder};
use crate::jpeg::tables::ZIGZAG;
use crate::jpeg::{
    CoeffPlane, FrameComponent, HuffTableDef, JpegFileModel, QuantTable, QuantizedDctPlanes,
    ScanComponent, SegmentInfo,
};
use crate::ppm::RasterImage;

pub fn marker_name(marker: u8) -> String {
    match marker {
        0xc0 => "SOF0 (baseline)".into(),
        0xc1 => "SOF1 (extended sequential)".into(),
        0xc2 => "SOF2 (progressive)".into(),
        0xc3 => "SOF3 (lossless)".into(),
        0xc5 => "SOF5 (differential sequential)".into(),
        0xc6 => "SOF6 (differential progressive)".into(),
        0xc7 => "SOF7 (differential lossless)".into(),
        0xc9 => "SOF9 (arithmetic sequential)".into(),
        0xca => "SOF10 (arithmetic progressive)".into(),
        0xcb => "SOF11 (arithmetic lossless)".into(),
        0xcd => "SOF13 (differential arithmetic sequential)".into(),
        0xce => "SOF14 (differential arithmetic progressive)".into(),
        0xcf => "SOF15 (differential arithmetic lossless)".into(),
        0xc4 => "DHT".into(),
        0xc8 => "JPG".into(),
        0xcc => "DAC (arithmetic conditioning)".into(),
        0xd8 => "SOI".into(),
        0xd9 => "EOI".into(),
        0xda => "SOS".into(),
        0xdb => "DQT".into(),
        0xdc => "DNL".into(),
        0xdd => "DRI".into(),
        0xfe => "COM".into(),
        0xd0..=0xd7 => format!("RST{}", marker - 0xd0),
        0xe0..=0xef => format!("APP{}", marker - 0xe0),
        other => format!("0xFF{:02X}", other),
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8> {
        let v = *self.data.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(v)
    }

    fn u16(&mut self) -> Result<u16> {
        let hi = self.u8()? as u16;
        let lo = self.u8()? as u16;
        Ok((hi << 8) | lo)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.truncated());
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn truncated(&self) -> Error {
        Error::Parse { offset: self.data.len(), message: "file ends mid-segment".into() }
    }

    fn parse_err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }
}

/// Parse the marker structure of a JPEG file. This accepts any frame type
/// (so unsupported files can still be described); profile checks happen in
/// [`decode_coefficients`].
pub fn parse_file_model(bytes: &[u8]) -> Result<JpegFileModel> {
    let mut c = Cursor { data: bytes, pos: 0 };
    if c.u8()? != 0xff || c.u8()? != 0xd8 {
        return Err(Error::Parse { offset: 0, message: "missing SOI marker".into() });
    }
    let mut model = JpegFileModel {
        width: 0,
        height: 0,
        sof_marker: 0,
        components: Vec::new(),
        quant_tables: [None, None, None, None],
        dc_tables: [None, None, None, None],
        ac_tables: [None, None, None, None],
        scan_components: Vec::new(),
        scan_count: 0,
        restart_interval: 0,
        entropy_span: (0, 0),
        has_arith_conditioning: false,
        segments: vec![SegmentInfo { marker: 0xd8, offset: 0, payload_len: 0 }],
    };

    loop {
        let marker_offset = c.pos;
        let ff = c.u8()?;
        if ff != 0xff {
            return Err(Error::Parse {
                offset: marker_offset,
                message: format!("expected a marker, found byte {:#04x}", ff),
            });
        }
        let mut marker = c.u8()?;
        // Arbitrarily many fill bytes are allowed before a marker.
        while marker == 0xff {
            marker = c.u8()?;
        }
        match marker {
            0xd9 => {
                model.segments.push(SegmentInfo { marker, offset: marker_offset, payload_len: 0 });
                break;
            }
            0xd8 => {
                return Err(Error::Parse {
                    offset: marker_offset,
                    message: "unexpected second SOI marker".into(),
                });
            }
            0xd0..=0xd7 => {
                return Err(Error::Parse {
                    offset: marker_offset,
                    message: format!("{} outside entropy-coded data", marker_name(marker)),
                });
            }
            0x01 => {
                // TEM: standalone, no payload.
                model.segments.push(SegmentInfo { marker, offset: marker_offset, payload_len: 0 });
            }
            _ => {
                let len = c.u16()? as usize;
                if len < 2 {
                    return Err(c.parse_err(format!(
                        "segment {} has impossible length {}",
                        marker_name(marker),
                        len
                    )));
                }
                let payload = c.take(len - 2)?;
                model.segments.push(SegmentInfo {
                    marker,
                    offset: marker_offset,
                    payload_len: payload.len(),
                });
                match marker {
                    0xdb => parse_dqt(payload, marker_offset, &mut model)?,
                    0xc4 => parse_dht(payload, marker_offset, &mut model)?,
                    0xcc => model.has_arith_conditioning = true,
                    0xdd => {
                        if payload.len() != 2 {
                            return Err(c.parse_err("DRI payload must be 2 bytes"));
                        }
                        model.restart_interval =
                            u16::from_be_bytes([payload[0], payload[1]]) as usize;
                    }
                    0xc0 | 0xc1 | 0xc2 | 0xc3 | 0xc5 | 0xc6 | 0xc7 | 0xc9 | 0xca | 0xcb | 0xcd
                    | 0xce | 0xcf => {
                        if model.sof_marker != 0 {
                            return Err(c.parse_err("multiple frame headers"));
                        }
                        parse_sof(payload, marker, marker_offset, &mut model)?;
                    }
                    0xda => {
                        parse_sos(payload, marker_offset, &mut model)?;
                        model.scan_count += 1;
                        // Skip entropy-coded bytes up to the next marker
                        // (restart markers belong to the scan).
                        let start = c.pos;
                        loop {
                            if c.pos >= c.data.len() {
                                return Err(Error::Parse {
                                    offset: c.data.len(),
                                    message: "entropy-coded data ends without a marker".into(),
                                });
                            }
                            if c.data[c.pos] == 0xff {
                                match c.data.get(c.pos + 1) {
                                    Some(0x00) => c.pos += 2,
                                    Some(m) if (0xd0..=0xd7).contains(m) => c.pos += 2,
                                    Some(_) => break,
                                    None => {
                                        return Err(Error::Parse {
                                            offset: c.data.len(),
                                            message: "entropy-coded data ends without a marker"
                                                .into(),
                                        })
                                    }
                                }
                            } else {
                                c.pos += 1;
                            }
                        }
                        if model.scan_count == 1 {
                            model.entropy_span = (start, c.pos);
                        }
                    }
                    _ => {} // APPn, COM, DNL and friends: recorded, not interpreted
                }
            }
        }
    }
    if model.sof_marker == 0 {
        return Err(Error::Parse { offset: bytes.len(), message: "no frame header found".into() });
    }
    if model.scan_count == 0 {
        return Err(Error::Parse { offset: bytes.len(), message: "no scan found".into() });
    }
    Ok(model)
}

fn parse_dqt(payload: &[u8], offset: usize, model: &mut JpegFileModel) -> Result<()> {
    let mut c = Cursor { data: payload, pos: 0 };
    while c.pos < payload.len() {
        let pq_tq = c.u8()?;
        let (pq, tq) = (pq_tq >> 4, (pq_tq & 0x0f) as usize);
        if pq == 1 {
            return Err(Error::UnsupportedFormat(
                "DQT declares a 16-bit quantization table (Pq=1); only 8-bit tables are supported"
                    .into(),
            ));
        }
        if pq > 1 || tq > 3 {
            return Err(Error::Parse {
                offset: offset + c.pos,
                message: format!("bad DQT precision/id byte {:#04x}", pq_tq),
            });
        }
        let zz = c.take(64)?;
        let mut natural = [0u16; 64];
        for (scan, &nat) in ZIGZAG.iter().enumerate() {
            natural[nat] = zz[scan] as u16;
        }
        if natural.iter().any(|&v| v == 0) {
            return Err(Error::Parse {
                offset: offset + c.pos,
                message: format!("quantization table {} contains a zero entry", tq),
            });
        }
        model.quant_tables[tq] = Some(QuantTable(natural));
    }
    Ok(())
}

fn parse_dht(payload: &[u8], offset: usize, model: &mut JpegFileModel) -> Result<()> {
    let mut c = Cursor { data: payload, pos: 0 };
    while c.pos < payload.len() {
        let tc_th = c.u8()?;
        let (tc, th) = (tc_th >> 4, (tc_th & 0x0f) as usize);
        if tc > 1 || th > 3 {
            return Err(Error::Parse {
                offset: offset + c.pos,
                message: format!("bad DHT class/id byte {:#04x}", tc_th),
            });
        }
        let mut bits = [0u8; 16];
        bits.copy_from_slice(c.take(16)?);
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total > 256 {
            return Err(Error::Parse {
                offset: offset + c.pos,
                message: format!("DHT table declares {} symbols", total),
            });
        }
        let vals = c.take(total)?.to_vec();
        let def = HuffTableDef { bits, vals };
        if tc == 0 {
            model.dc_tables[th] = Some(def);
        } else {
            model.ac_tables[th] = Some(def);
        }
    }
    Ok(())
}

fn parse_sof(payload: &[u8], marker: u8, offset: usize, model: &mut JpegFileModel) -> Result<()> {
    let mut c = Cursor { data: payload, pos: 0 };
    let precision = c.u8()?;
    let height = c.u16()? as usize;
    let width = c.u16()? as usize;
    let ncomp = c.u8()? as usize;
    if precision != 8 {
        return Err(Error::UnsupportedFormat(format!(
            "{} declares {}-bit precision; only 8-bit is supported",
            marker_name(marker),
            precision
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: offset + 1,
            message: "frame header declares zero width or height".into(),
        });
    }
    for _ in 0..ncomp {
        let id = c.u8()?;
        let hv = c.u8()?;
        let tq = c.u8()? & 0x0f;
        model.components.push(FrameComponent { id, h: hv >> 4, v: hv & 0x0f, tq });
    }
    model.sof_marker = marker;
    model.width = width;
    model.height = height;
    Ok(())
}

fn parse_sos(payload: &[u8], offset: usize, model: &mut JpegFileModel) -> Result<()> {
    let mut c = Cursor { data: payload, pos: 0 };
    let ncomp = c.u8()? as usize;
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let id = c.u8()?;
        let tables = c.u8()?;
        comps.push(ScanComponent { id, dc_table: tables >> 4, ac_table: tables & 0x0f });
    }
    // Spectral selection / successive approximation bytes; baseline fixes
    // them but they carry no information here.
    let _ = c.take(3).map_err(|_| Error::Parse {
        offset: offset + c.pos,
        message: "SOS header too short".into(),
    })?;
    if model.scan_count == 0 {
        model.scan_components = comps;
    }
    Ok(())
}

/// Reject everything outside the supported baseline 4:4:4 profile, naming
/// the marker or field at fault.
fn check_baseline(model: &JpegFileModel) -> Result<()> {
    if model.sof_marker != 0xc0 {
        return Err(Error::UnsupportedFormat(format!(
            "frame type {} is not supported; only SOF0 (baseline) is",
            marker_name(model.sof_marker)
        )));
    }
    if model.has_arith_conditioning {
        return Err(Error::UnsupportedFormat(
            "DAC (arithmetic conditioning) present; only Huffman coding is supported".into(),
        ));
    }
    if model.components.len() != 3 {
        return Err(Error::UnsupportedFormat(format!(
            "SOF0 declares {} component(s); only 3-component YCbCr is supported",
            model.components.len()
        )));
    }
    for comp in &model.components {
        if comp.h != 1 || comp.v != 1 {
            return Err(Error::UnsupportedFormat(format!(
                "component {} has {}x{} sampling; only 4:4:4 (all 1x1) is supported",
                comp.id, comp.h, comp.v
            )));
        }
    }
    if model.scan_count != 1 || model.scan_components.len() != 3 {
        return Err(Error::UnsupportedFormat(
            "only a single interleaved 3-component scan is supported".into(),
        ));
    }
    Ok(())
}

struct ComponentTables<'a> {
    dc: HuffDecoder,
    ac: HuffDecoder,
    qt: &'a QuantTable,
}

fn component_tables<'a>(model: &'a JpegFileModel) -> Result<Vec<ComponentTables<'a>>> {
    let mut out = Vec::with_capacity(3);
    for (i, frame_comp) in model.components.iter().enumerate() {
        let scan_comp = model
            .scan_components
            .iter()
            .find(|s| s.id == frame_comp.id)
            .ok_or_else(|| Error::Format {
                what: "scan header",
                message: format!("component {} missing from scan", frame_comp.id),
            })?;
        let dc_def = model.dc_tables[scan_comp.dc_table as usize].as_ref().ok_or_else(|| {
            Error::Format {
                what: "scan header",
                message: format!("DC table {} was never defined", scan_comp.dc_table),
            }
        })?;
        let ac_def = model.ac_tables[scan_comp.ac_table as usize].as_ref().ok_or_else(|| {
            Error::Format {
                what: "scan header",
                message: format!("AC table {} was never defined", scan_comp.ac_table),
            }
        })?;
        let qt = model.quant_tables[frame_comp.tq as usize].as_ref().ok_or_else(|| {
            Error::Format {
                what: "frame header",
                message: format!("quantization table {} was never defined", frame_comp.tq),
            }
        })?;
        let _ = i;
        out.push(ComponentTables {
            dc: HuffDecoder::new(&dc_def.bits, &dc_def.vals)?,
            ac: HuffDecoder::new(&ac_def.bits, &ac_def.vals)?,
            qt,
        });
    }
    Ok(out)
}

/// Decode a baseline 4:4:4 JPEG down to its quantized coefficient planes
/// without dequantizing.
pub fn decode_coefficients(bytes: &[u8]) -> Result<QuantizedDctPlanes> {
    let model = parse_file_model(bytes)?;
    check_baseline(&model)?;
    let tables = component_tables(&model)?;

    let blocks_w = model.width.div_ceil(8);
    let blocks_h = model.height.div_ceil(8);
    let mut planes = [(); 3].map(|_| CoeffPlane::zeroed(blocks_w, blocks_h));

    let (start, end) = model.entropy_span;
    let mut reader = BitReader::new(&bytes[start..end], start);
    let mut pred = [0i32; 3];
    let mut mcus_since_restart = 0usize;
    let mut expected_rst = 0u8;

    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            if model.restart_interval > 0 && mcus_since_restart == model.restart_interval {
                consume_restart(&mut reader, &mut expected_rst)?;
                pred = [0; 3];
                mcus_since_restart = 0;
            }
            for (ch, t) in tables.iter().enumerate() {
                decode_block(&mut reader, t, &mut pred[ch], planes[ch].block_mut(bx, by))?;
            }
            mcus_since_restart += 1;
        }
    }

    let qtables = [tables[0].qt.clone(), tables[1].qt.clone(), tables[2].qt.clone()];
    let planes = QuantizedDctPlanes {
        width: model.width,
        height: model.height,
        planes,
        qtables,
    };
    planes.check_coefficient_range()?;
    Ok(planes)
}

fn consume_restart(reader: &mut BitReader, expected: &mut u8) -> Result<()> {
    reader.align_to_byte();
    match reader.peek_marker() {
        Some(m) if (0xd0..=0xd7).contains(&m) => {
            if m - 0xd0 != *expected {
                return Err(Error::Parse {
                    offset: reader.offset(),
                    message: format!(
                        "expected RST{}, found {}",
                        expected,
                        marker_name(m)
                    ),
                });
            }
            reader.consume_marker();
            *expected = (*expected + 1) % 8;
            Ok(())
        }
        Some(m) => Err(Error::Parse {
            offset: reader.offset(),
            message: format!("expected a restart marker, found {}", marker_name(m)),
        }),
        None => Err(Error::Parse {
            offset: reader.offset(),
            message: "expected a restart marker".into(),
        }),
    }
}

fn decode_block(
    reader: &mut BitReader,
    tables: &ComponentTables,
    pred: &mut i32,
    out: &mut [i32; 64],
) -> Result<()> {
    let size = tables.dc.decode(reader)?;
    if size > 11 {
        return Err(Error::Parse {
            offset: reader.offset(),
            message: format!("DC magnitude category {} out of range", size),
        });
    }
    let diff = extend_magnitude(reader.next_bits(size)?, size);
    *pred += diff;
    out[0] = *pred;

    let mut k = 1usize;
    while k < 64 {
        let rs = tables.ac.decode(reader)?;
        let (run, size) = ((rs >> 4) as usize, rs & 0x0f);
        if size == 0 {
            if rs == 0x00 {
                break; // EOB
            }
            if rs == 0xf0 {
                k += 16; // ZRL
                continue;
            }
            return Err(Error::Parse {
                offset: reader.offset(),
                message: format!("invalid AC run/size symbol {:#04x}", rs),
            });
        }
        k += run;
        if k >= 64 {
            return Err(Error::Parse {
                offset: reader.offset(),
                message: "AC run overflows the block".into(),
            });
        }
        out[ZIGZAG[k]] = extend_magnitude(reader.next_bits(size)?, size);
        k += 1;
    }
    Ok(())
}

/// Full decode to RGB: coefficients, dequantize + IDCT per block, crop the
/// padding, convert to RGB.
pub fn decompress(bytes: &[u8]) -> Result<RasterImage> {
    let planes = decode_coefficients(bytes)?;
    Ok(planes_to_image(&planes))
}

/// Reconstruct pixels from coefficient planes (the lossy inverse of
/// [`crate::jpeg::compress_to_planes`]).
pub fn planes_to_image(planes: &QuantizedDctPlanes) -> RasterImage {
    let bw = planes.planes[0].blocks_w;
    let bh = planes.planes[0].blocks_h;
    let (pw, ph) = (bw * 8, bh * 8);
    let mut channels = vec![vec![0u8; pw * ph]; 3];
    for ch in 0..3 {
        for by in 0..bh {
            for bx in 0..bw {
                let samples =
                    dequantize_and_idct(planes.planes[ch].block(bx, by), &planes.qtables[ch]);
                for row in 0..8 {
                    let at = (by * 8 + row) * pw + bx * 8;
                    channels[ch][at..at + 8].copy_from_slice(&samples[row * 8..row * 8 + 8]);
                }
            }
        }
    }
    let mut data = Vec::with_capacity(planes.width * planes.height * 3);
    for y in 0..planes.height {
        for x in 0..planes.width {
            let at = y * pw + x;
            let (r, g, b) = ycbcr_to_rgb(channels[0][at], channels[1][at], channels[2][at]);
            data.extend_from_slice(&[r, g, b]);
        }
    }
    RasterImage { width: planes.width, height: planes.height, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::encoder::encode;

    fn gradient(w: usize, h: usize) -> RasterImage {
        let mut img = RasterImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(
                    x,
                    y,
                    [
                        ((x * 255) / w.max(1)) as u8,
                        ((y * 255) / h.max(1)) as u8,
                        ((x + y) % 256) as u8,
                    ],
                );
            }
        }
        img
    }

    #[test]
    fn rejects_missing_soi() {
        let err = parse_file_model(&[0x00, 0x01]).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn rejects_truncation_mid_segment() {
        let img = gradient(16, 16);
        let bytes = encode(&img, 75).unwrap();
        // Cut inside the DQT segment.
        let err = parse_file_model(&bytes[..30]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{:?}", err);
    }

    #[test]
    fn rejects_truncated_entropy_data() {
        let img = gradient(64, 64);
        let bytes = encode(&img, 75).unwrap();
        let err = decode_coefficients(&bytes[..bytes.len() - 40]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{:?}", err);
    }

    #[test]
    fn rejects_progressive_frames() {
        let img = gradient(16, 16);
        let mut bytes = encode(&img, 75).unwrap();
        // Rewrite SOF0 to SOF2 in place.
        let at = find_marker(&bytes, 0xc0);
        bytes[at + 1] = 0xc2;
        let err = decode_coefficients(&bytes).unwrap_err();
        match err {
            Error::UnsupportedFormat(msg) => assert!(msg.contains("SOF2"), "{}", msg),
            other => panic!("wrong error: {:?}", other),
        }
    }

    #[test]
    fn rejects_subsampled_chroma() {
        let img = gradient(16, 16);
        let mut bytes = encode(&img, 75).unwrap();
        let at = find_marker(&bytes, 0xc0);
        // Component 0 sampling byte lives at SOF payload offset 6+1.
        bytes[at + 4 + 6 + 1] = 0x22;
        let err = decode_coefficients(&bytes).unwrap_err();
        match err {
            Error::UnsupportedFormat(msg) => assert!(msg.contains("2x2"), "{}", msg),
            other => panic!("wrong error: {:?}", other),
        }
    }

    #[test]
    fn tolerates_fill_bytes_before_markers() {
        let img = gradient(16, 16);
        let bytes = encode(&img, 75).unwrap();
        // Insert an extra 0xFF fill byte before the EOI marker.
        let mut padded = bytes.clone();
        padded.insert(padded.len() - 2, 0xff);
        let a = decode_coefficients(&bytes).unwrap();
        let b = decode_coefficients(&padded).unwrap();
        assert_eq!(a, b);
    }

    fn find_marker(bytes: &[u8], marker: u8) -> usize {
        (0..bytes.len() - 1)
            .find(|&i| bytes[i] == 0xff && bytes[i + 1] == marker)
            .expect("marker present")
    }

    #[test]
    fn encode_decode_planes_round_trip() {
        for (w, h) in [(8, 8), (16, 16), (24, 16), (17, 9), (33, 41)] {
            let img = gradient(w, h);
            for q in [35, 60, 80, 95, 100] {
                let planes = crate::jpeg::compress_to_planes(&img, q).unwrap();
                let bytes = crate::jpeg::encode_from_planes(&planes);
                let decoded = decode_coefficients(&bytes).unwrap();
                assert_eq!(planes, decoded, "{}x{} q={}", w, h, q);
            }
        }
    }

    #[test]
    fn reports_true_dimensions_not_padded() {
        let img = gradient(17, 9);
        let bytes = encode(&img, 85).unwrap();
        let planes = decode_coefficients(&bytes).unwrap();
        assert_eq!((planes.width, planes.height), (17, 9));
        assert_eq!((planes.planes[0].blocks_w, planes.planes[0].blocks_h), (3, 2));
        let out = decompress(&bytes).unwrap();
        assert_eq!((out.width, out.height), (17, 9));
    }

    #[test]
    fn decompress_of_grey_is_exact() {
        let img = RasterImage::filled(16, 16, [128, 128, 128]);
        let bytes = encode(&img, 50).unwrap();
        let out = decompress(&bytes).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn high_quality_round_trip_is_close() {
        let img = gradient(32, 32);
        let bytes = encode(&img, 100).unwrap();
        let out = decompress(&bytes).unwrap();
        for (a, b) in img.data.iter().zip(out.data.iter()) {
            assert!((*a as i32 - *b as i32).abs() <= 6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn restart_markers_are_honored() {
        // Build a stream with DRI + restart markers by hand: encode each
        // MCU row separately and join with RSTn.
        let img = gradient(24, 24);
        let planes = crate::jpeg::compress_to_planes(&img, 80).unwrap();
        let plain = crate::jpeg::encode_from_planes(&planes);

        // Re-encode entropy data with a restart every 3 MCUs (one row).
        use crate::jpeg::huffman::{BitWriter, HuffEncoder};
        use crate::jpeg::tables::*;
        let dc_l = HuffEncoder::new(&DC_LUMA_SPEC);
        let ac_l = HuffEncoder::new(&AC_LUMA_SPEC);
        let dc_c = HuffEncoder::new(&DC_CHROMA_SPEC);
        let ac_c = HuffEncoder::new(&AC_CHROMA_SPEC);
        let mut data = Vec::new();
        for by in 0..3 {
            let mut w = BitWriter::new();
            let mut pred = [0i32; 3];
            for bx in 0..3 {
                for ch in 0..3 {
                    let (dc, ac) = if ch == 0 { (&dc_l, &ac_l) } else { (&dc_c, &ac_c) };
                    crate::jpeg::encoder::encode_block(
                        planes.planes[ch].block(bx, by),
                        &mut pred[ch],
                        dc,
                        ac,
                        &mut w,
                    );
                }
            }
            data.extend_from_slice(&w.finish());
            if by < 2 {
                data.extend_from_slice(&[0xff, 0xd0 + by as u8]);
            }
        }

        // Splice: everything up to SOS payload end, a DRI segment before
        // SOS, new entropy data, EOI.
        let sos_at = find_marker(&plain, 0xda);
        let sos_end = sos_at + 2 + 2 + 10; // marker + length field + payload
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&plain[..sos_at]);
        bytes.extend_from_slice(&[0xff, 0xdd, 0x00, 0x04, 0x00, 0x03]);
        bytes.extend_from_slice(&plain[sos_at..sos_end]);
        bytes.extend_from_slice(&data);
        bytes.extend_from_slice(&[0xff, 0xd9]);

        let decoded = decode_coefficients(&bytes).unwrap();
        assert_eq!(decoded.planes, planes.planes);
    }
}

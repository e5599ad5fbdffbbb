//! Baseline sequential JFIF codec with direct access to the quantized DCT
//! domain.
//!
//! Scope is deliberately narrow: 8-bit, three components, 4:4:4 sampling,
//! Huffman coding, single interleaved scan. Everything else is rejected
//! with an error naming the offending marker. What this buys is exact,
//! reproducible coefficient planes: `decode_coefficients(encode(img))`
//! returns bit-identical planes to the ones the encoder quantized.

pub mod color;
pub mod dct;
pub mod decoder;
pub mod encoder;
pub mod huffman;
pub mod inspect;
pub mod tables;

pub use dct::{dct_2d, dequantize_and_idct, forward_dct_and_quantize, idct_2d};
pub use decoder::{decode_coefficients, decompress, parse_file_model};
pub use encoder::{compress_to_planes, encode, encode_from_planes};
pub use tables::{quality_to_qtables, ZIGZAG};

use crate::error::{Error, Result};

/// An 8x8 quantization table in natural (row-major) order. Entries are in
/// `[1, 255]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable(pub [u16; 64]);

/// Quantized DCT coefficients for one channel, stored per block in natural
/// order. Block `(bx, by)` covers pixels `[8bx, 8bx+8) x [8by, 8by+8)` of
/// the edge-padded image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffPlane {
    pub blocks_w: usize,
    pub blocks_h: usize,
    coeffs: Vec<i32>,
}

impl CoeffPlane {
    pub fn zeroed(blocks_w: usize, blocks_h: usize) -> Self {
        CoeffPlane { blocks_w, blocks_h, coeffs: vec![0; blocks_w * blocks_h * 64] }
    }

    #[inline]
    pub fn block(&self, bx: usize, by: usize) -> &[i32; 64] {
        let at = (by * self.blocks_w + bx) * 64;
        self.coeffs[at..at + 64].try_into().unwrap()
    }

    #[inline]
    pub fn block_mut(&mut self, bx: usize, by: usize) -> &mut [i32; 64] {
        let at = (by * self.blocks_w + bx) * 64;
        (&mut self.coeffs[at..at + 64]).try_into().unwrap()
    }

    /// One coefficient of one block; `(row, col)` index the 8x8 grid.
    #[inline]
    pub fn coeff(&self, bx: usize, by: usize, row: usize, col: usize) -> i32 {
        self.coeffs[(by * self.blocks_w + bx) * 64 + row * 8 + col]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[i32]> {
        self.coeffs.chunks_exact(64)
    }
}

/// The luma and chroma channels of a decoded (or to-be-encoded) JPEG in the
/// quantized DCT domain, together with the tables that produced them and
/// the true pixel dimensions before padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedDctPlanes {
    pub width: usize,
    pub height: usize,
    /// Y, Cb, Cr.
    pub planes: [CoeffPlane; 3],
    /// Quantization table per channel (Cb and Cr share values).
    pub qtables: [QuantTable; 3],
}

impl QuantizedDctPlanes {
    /// Every coefficient must fit in a signed 12-bit field; this is an
    /// internal invariant of the baseline profile.
    pub fn check_coefficient_range(&self) -> Result<()> {
        for (ch, plane) in self.planes.iter().enumerate() {
            for block in plane.blocks() {
                for &c in block {
                    if !(-2048..=2047).contains(&c) {
                        return Err(Error::Format {
                            what: "coefficient plane",
                            message: format!("channel {} has out-of-range coefficient {}", ch, c),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A parsed Huffman table definition as it appeared in a DHT segment.
#[derive(Debug, Clone)]
pub struct HuffTableDef {
    pub bits: [u8; 16],
    pub vals: Vec<u8>,
}

/// One component entry from the frame header.
#[derive(Debug, Clone, Copy)]
pub struct FrameComponent {
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub tq: u8,
}

/// One component entry from the scan header.
#[derive(Debug, Clone, Copy)]
pub struct ScanComponent {
    pub id: u8,
    pub dc_table: u8,
    pub ac_table: u8,
}

/// Marker-level record of a segment, for structural dumps.
#[derive(Debug, Clone, Copy)]
pub struct SegmentInfo {
    pub marker: u8,
    pub offset: usize,
    /// Payload length excluding the marker and length fields.
    pub payload_len: usize,
}

/// Marker-level description of a JPEG file: every table and header needed
/// to drive entropy decoding, plus the byte span of the scan data.
#[derive(Debug, Clone)]
pub struct JpegFileModel {
    pub width: usize,
    pub height: usize,
    /// The SOFn marker byte actually present (0xC0 for baseline).
    pub sof_marker: u8,
    pub components: Vec<FrameComponent>,
    pub quant_tables: [Option<QuantTable>; 4],
    pub dc_tables: [Option<HuffTableDef>; 4],
    pub ac_tables: [Option<HuffTableDef>; 4],
    pub scan_components: Vec<ScanComponent>,
    pub scan_count: usize,
    pub restart_interval: usize,
    /// Byte range of the entropy-coded data of the first scan.
    pub entropy_span: (usize, usize),
    pub has_arith_conditioning: bool,
    pub segments: Vec<SegmentInfo>,
}

/// `recompress(bytes, q)` = decode to pixels, then encode at quality `q`.
/// Repeated application at a fixed quality reaches a fixed point once the
/// pixel image stops changing.
pub fn recompress(bytes: &[u8], quality: u8) -> Result<Vec<u8>> {
    let img = decompress(bytes)?;
    encode(&img, quality)
}

//! Huffman entropy coding for baseline scans: canonical code construction
//! from (bits, vals) definitions, a stuffing-aware bit writer, and a bit
//! reader that stops at markers.

use crate::error::{Error, Result};
use crate::jpeg::tables::HuffSpec;

/// Encoder-side table: code and length per symbol.
pub struct HuffEncoder {
    code: [u16; 256],
    size: [u8; 256],
}

impl HuffEncoder {
    pub fn new(spec: &HuffSpec) -> Self {
        let mut enc = HuffEncoder { code: [0; 256], size: [0; 256] };
        let mut code = 0u16;
        let mut k = 0usize;
        for len in 1..=16u8 {
            for _ in 0..spec.bits[len as usize - 1] {
                let sym = spec.vals[k] as usize;
                enc.code[sym] = code;
                enc.size[sym] = len;
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        enc
    }

    pub fn emit(&self, sym: u8, out: &mut BitWriter) {
        let size = self.size[sym as usize];
        debug_assert!(size > 0, "symbol {:#x} not in table", sym);
        out.put_bits(self.code[sym as usize] as u32, size as u32);
    }
}

/// Decoder-side table following the MINCODE/MAXCODE/VALPTR scheme.
pub struct HuffDecoder {
    min_code: [i32; 17],
    max_code: [i32; 17], // -1 where no codes of that length exist
    val_ptr: [usize; 17],
    vals: Vec<u8>,
}

impl HuffDecoder {
    pub fn new(bits: &[u8; 16], vals: &[u8]) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != vals.len() || total > 256 {
            return Err(Error::Format {
                what: "huffman table",
                message: format!("code count {} does not match {} symbols", total, vals.len()),
            });
        }
        let mut dec = HuffDecoder {
            min_code: [0; 17],
            max_code: [-1; 17],
            val_ptr: [0; 17],
            vals: vals.to_vec(),
        };
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16usize {
            let n = bits[len - 1] as usize;
            if n > 0 {
                dec.val_ptr[len] = k;
                dec.min_code[len] = code;
                code += n as i32;
                dec.max_code[len] = code - 1;
                k += n;
            }
            code <<= 1;
        }
        Ok(dec)
    }

    pub fn from_spec(spec: &HuffSpec) -> Self {
        Self::new(&spec.bits, spec.vals).expect("built-in table is well formed")
    }

    /// Read one symbol from the stream.
    pub fn decode(&self, reader: &mut BitReader) -> Result<u8> {
        let mut code = reader.next_bit()? as i32;
        for len in 1..=16usize {
            if self.max_code[len] >= 0 && code <= self.max_code[len] {
                let idx = self.val_ptr[len] + (code - self.min_code[len]) as usize;
                return Ok(self.vals[idx]);
            }
            if len == 16 {
                break;
            }
            code = (code << 1) | reader.next_bit()? as i32;
        }
        Err(Error::Parse {
            offset: reader.offset(),
            message: "invalid huffman code in entropy-coded segment".into(),
        })
    }
}

/// Number of magnitude bits needed for a coefficient difference (the SSSS
/// category): 0 for 0, otherwise bit length of |v|.
pub fn magnitude_category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// Low `size` bits appended after a symbol: the value itself if positive,
/// else its one's-complement representation.
pub fn magnitude_bits(v: i32, size: u8) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v + (1 << size) - 1) as u32
    }
}

/// Inverse of [`magnitude_bits`] (the EXTEND procedure).
pub fn extend_magnitude(bits: u32, size: u8) -> i32 {
    if size == 0 {
        return 0;
    }
    let half = 1u32 << (size - 1);
    if bits < half {
        bits as i32 - (1i32 << size) + 1
    } else {
        bits as i32
    }
}

/// MSB-first bit writer that inserts a 0x00 stuff byte after every 0xFF.
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter { out: Vec::new(), acc: 0, nbits: 0 }
    }

    pub fn put_bits(&mut self, bits: u32, count: u32) {
        debug_assert!(count <= 24 && (bits >> count) == 0);
        self.acc = (self.acc << count) | bits;
        self.nbits += count;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xff {
                self.out.push(0x00);
            }
            self.nbits -= 8;
            self.acc &= (1 << self.nbits) - 1;
        }
    }

    /// Pad the final partial byte with 1-bits and return the stream.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put_bits((1 << pad) - 1, pad);
        }
        self.out
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

/// MSB-first bit reader over entropy-coded data. Skips stuff bytes and stops
/// cleanly at any marker (0xFF followed by non-zero).
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    base_offset: usize,
    acc: u32,
    nbits: u32,
    at_marker: bool,
}

impl<'a> BitReader<'a> {
    /// `base_offset` is the position of `data` within the whole file, used
    /// only for error reporting.
    pub fn new(data: &'a [u8], base_offset: usize) -> Self {
        BitReader { data, pos: 0, base_offset, acc: 0, nbits: 0, at_marker: false }
    }

    /// Absolute file offset of the next unread byte.
    pub fn offset(&self) -> usize {
        self.base_offset + self.pos
    }

    pub fn next_bit(&mut self) -> Result<u8> {
        if self.nbits == 0 {
            self.refill()?;
        }
        self.nbits -= 1;
        Ok(((self.acc >> self.nbits) & 1) as u8)
    }

    pub fn next_bits(&mut self, count: u8) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..count {
            v = (v << 1) | self.next_bit()? as u32;
        }
        Ok(v)
    }

    fn refill(&mut self) -> Result<()> {
        if self.at_marker || self.pos >= self.data.len() {
            return Err(Error::Parse {
                offset: self.offset(),
                message: "entropy-coded data ended before scan was complete".into(),
            });
        }
        let byte = self.data[self.pos];
        if byte == 0xff {
            match self.data.get(self.pos + 1) {
                Some(0x00) => {
                    self.pos += 2; // stuffed 0xFF data byte
                }
                _ => {
                    // A real marker: stop producing bits.
                    self.at_marker = true;
                    return Err(Error::Parse {
                        offset: self.offset(),
                        message: "marker encountered inside entropy-coded segment".into(),
                    });
                }
            }
        } else {
            self.pos += 1;
        }
        self.acc = byte as u32;
        self.nbits = 8;
        Ok(())
    }

    /// Drop buffered bits and align to the next byte boundary (used at
    /// restart markers).
    pub fn align_to_byte(&mut self) {
        self.acc = 0;
        self.nbits = 0;
    }

    /// If the next bytes are a marker, return it without consuming.
    pub fn peek_marker(&self) -> Option<u8> {
        if self.pos + 1 < self.data.len() && self.data[self.pos] == 0xff {
            let m = self.data[self.pos + 1];
            if m != 0x00 {
                return Some(m);
            }
        }
        None
    }

    /// Consume a marker previously seen by [`Self::peek_marker`].
    pub fn consume_marker(&mut self) {
        debug_assert!(self.peek_marker().is_some());
        self.pos += 2;
        self.at_marker = false;
    }

    /// Bytes consumed from the slice so far.
    pub fn consumed(&self) -> usize {
        self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::tables::{AC_LUMA_SPEC, DC_LUMA_SPEC};

    #[test]
    fn magnitude_category_table() {
        assert_eq!(magnitude_category(0), 0);
        assert_eq!(magnitude_category(1), 1);
        assert_eq!(magnitude_category(-1), 1);
        assert_eq!(magnitude_category(2), 2);
        assert_eq!(magnitude_category(-3), 2);
        assert_eq!(magnitude_category(255), 8);
        assert_eq!(magnitude_category(-256), 9);
        assert_eq!(magnitude_category(1023), 10);
        assert_eq!(magnitude_category(-2047), 11);
    }

    #[test]
    fn magnitude_bits_round_trip() {
        for v in -2047i32..=2047 {
            let size = magnitude_category(v);
            if size == 0 {
                assert_eq!(v, 0);
                continue;
            }
            let bits = magnitude_bits(v, size);
            assert!(bits < (1 << size));
            assert_eq!(extend_magnitude(bits, size), v);
        }
    }

    #[test]
    fn writer_stuffs_after_ff() {
        let mut w = BitWriter::new();
        w.put_bits(0xff, 8);
        w.put_bits(0xab, 8);
        assert_eq!(w.finish(), vec![0xff, 0x00, 0xab]);
    }

    #[test]
    fn writer_pads_with_ones() {
        let mut w = BitWriter::new();
        w.put_bits(0b101, 3);
        assert_eq!(w.finish(), vec![0b1011_1111]);
    }

    #[test]
    fn reader_unstuffs_and_stops_at_marker() {
        let data = [0xffu8, 0x00, 0x80, 0xff, 0xd9];
        let mut r = BitReader::new(&data, 0);
        assert_eq!(r.next_bits(8).unwrap(), 0xff);
        assert_eq!(r.next_bits(8).unwrap(), 0x80);
        assert!(r.next_bit().is_err());
        assert_eq!(r.peek_marker(), Some(0xd9));
    }

    #[test]
    fn encode_decode_symbols_round_trip() {
        let enc = HuffEncoder::new(&AC_LUMA_SPEC);
        let dec = HuffDecoder::from_spec(&AC_LUMA_SPEC);
        let symbols: Vec<u8> = AC_LUMA_SPEC.vals.to_vec();
        let mut w = BitWriter::new();
        for &s in &symbols {
            enc.emit(s, &mut w);
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes, 0);
        for &s in &symbols {
            assert_eq!(dec.decode(&mut r).unwrap(), s);
        }
    }

    #[test]
    fn dc_codes_are_canonical() {
        // First code of the shortest length is all zero bits.
        let enc = HuffEncoder::new(&DC_LUMA_SPEC);
        let dec = HuffDecoder::from_spec(&DC_LUMA_SPEC);
        let mut w = BitWriter::new();
        enc.emit(0, &mut w);
        enc.emit(11, &mut w);
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes, 0);
        assert_eq!(dec.decode(&mut r).unwrap(), 0);
        assert_eq!(dec.decode(&mut r).unwrap(), 11);
    }
}

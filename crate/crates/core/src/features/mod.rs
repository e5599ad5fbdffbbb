//! Sub-band histogram features over quantized DCT coefficients.
//!
//! Each 128x128 patch yields one feature vector: for every selected DCT
//! sub-band, a histogram of absolute coefficient values (1 up to the
//! band's bin count; zeros excluded, overflows dropped), normalized per
//! band, concatenated in Y, Cb, Cr order with bands in zig-zag order.

pub mod store;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::{QuantizedDctPlanes, ZIGZAG};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Luma,
    Chroma,
}

/// Bin counts per diagonal (s = k1 + k2 in 2..=9), the inclusion
/// threshold, and the patch size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSchedule {
    /// Luminance bins for s = 2..=9.
    pub luma_bins: [u32; 8],
    /// Chrominance bins for s = 2..=9 (shared by Cb and Cr).
    pub chroma_bins: [u32; 8],
    /// A sub-band is used only if its bin count is at least this.
    pub threshold: u32,
    /// Patch edge in pixels; must be a positive multiple of 8.
    pub patch_size: usize,
}

impl Default for BinSchedule {
    fn default() -> Self {
        BinSchedule {
            luma_bins: [170, 160, 110, 90, 70, 50, 45, 25],
            chroma_bins: [100, 50, 30, 20, 10, 10, 10, 10],
            threshold: 50,
            patch_size: 128,
        }
    }
}

impl BinSchedule {
    /// The low-threshold variant that admits all 36 bands per channel.
    pub fn all_bands() -> Self {
        BinSchedule { threshold: 1, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size % 8 != 0 {
            return Err(Error::InvalidConfig(format!(
                "patch size {} must be a positive multiple of 8",
                self.patch_size
            )));
        }
        if self.threshold == 0 {
            return Err(Error::InvalidConfig("bin threshold must be at least 1".into()));
        }
        for bins in [&self.luma_bins, &self.chroma_bins] {
            if bins.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidConfig(
                    "bin counts must be non-increasing along the diagonals".into(),
                ));
            }
        }
        Ok(())
    }

    /// FNV-1a over the schedule and the fixed channel order, so features
    /// and models carrying different layouts can never be mixed.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"subband-v1:Y,Cb,Cr:");
        for v in self.luma_bins.iter().chain(self.chroma_bins.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&self.threshold.to_le_bytes());
        bytes.extend_from_slice(&(self.patch_size as u64).to_le_bytes());
        fnv1a64(&bytes)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Bins for sub-band (k1, k2), 1-based; 0 when the diagonal is beyond the
/// schedule (k1 + k2 > 9).
pub fn bin_count(channel: ChannelKind, k1: usize, k2: usize, schedule: &BinSchedule) -> u32 {
    debug_assert!((1..=8).contains(&k1) && (1..=8).contains(&k2));
    let s = k1 + k2;
    if s > 9 {
        return 0;
    }
    match channel {
        ChannelKind::Luma => schedule.luma_bins[s - 2],
        ChannelKind::Chroma => schedule.chroma_bins[s - 2],
    }
}

/// All 64 sub-band positions of one channel in zig-zag order, as 1-based
/// (k1, k2).
fn zigzag_subbands() -> impl Iterator<Item = (usize, usize)> {
    ZIGZAG.iter().map(|&nat| (nat / 8 + 1, nat % 8 + 1))
}

/// The sub-bands a feature vector is built from: per channel (Y, then Cb,
/// then Cr), zig-zag order, keeping bands whose bin count clears the
/// threshold. Channel index is 0=Y, 1=Cb, 2=Cr.
pub fn selected_subbands(schedule: &BinSchedule) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for ch in 0..3 {
        let kind = if ch == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
        for (k1, k2) in zigzag_subbands() {
            if k1 + k2 <= 9 && bin_count(kind, k1, k2, schedule) >= schedule.threshold {
                out.push((ch, k1, k2));
            }
        }
    }
    out
}

/// Total feature length: the sum of bin counts over the selected bands.
pub fn feature_dimension(schedule: &BinSchedule) -> usize {
    selected_subbands(schedule)
        .iter()
        .map(|&(ch, k1, k2)| {
            let kind = if ch == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
            bin_count(kind, k1, k2, schedule) as usize
        })
        .sum()
}

/// A patch's worth of coefficient blocks: a `(patch_size/8)`-square block
/// window into each channel of a decoded image.
#[derive(Debug, Clone, Copy)]
pub struct PatchCoefficients<'a> {
    planes: &'a QuantizedDctPlanes,
    /// First block of the window.
    bx0: usize,
    by0: usize,
    /// Window edge in blocks.
    nb: usize,
    pub patch_index: usize,
}

impl<'a> PatchCoefficients<'a> {
    /// Coefficients of one sub-band across all blocks of the patch.
    /// `(k1, k2)` are 1-based.
    pub fn subband(&self, channel: usize, k1: usize, k2: usize) -> impl Iterator<Item = i32> + '_ {
        let plane = &self.planes.planes[channel];
        let (bx0, by0, nb) = (self.bx0, self.by0, self.nb);
        (0..nb * nb).map(move |i| {
            let (by, bx) = (by0 + i / nb, bx0 + i % nb);
            plane.coeff(bx, by, k1 - 1, k2 - 1)
        })
    }

    pub fn blocks_per_channel(&self) -> usize {
        self.nb * self.nb
    }
}

/// Split an image's planes into non-overlapping `patch_size` patches,
/// row-major; partial patches at the right/bottom edges are discarded.
pub fn extract_patches(
    planes: &QuantizedDctPlanes,
    patch_size: usize,
) -> Vec<PatchCoefficients<'_>> {
    assert!(patch_size > 0 && patch_size % 8 == 0, "patch size must be a multiple of 8");
    let nb = patch_size / 8;
    let grid_w = planes.width / patch_size;
    let grid_h = planes.height / patch_size;
    let mut out = Vec::with_capacity(grid_w * grid_h);
    for py in 0..grid_h {
        for px in 0..grid_w {
            out.push(PatchCoefficients {
                planes,
                bx0: px * nb,
                by0: py * nb,
                nb,
                patch_index: py * grid_w + px,
            });
        }
    }
    out
}

/// Histogram of absolute values 1..=n_bins of one sub-band, normalized by
/// the in-range count. Zeros are excluded; values above `n_bins` are
/// dropped. An empty band yields an all-zero histogram.
pub fn subband_histogram(
    patch: &PatchCoefficients,
    channel: usize,
    k1: usize,
    k2: usize,
    n_bins: u32,
) -> Vec<f64> {
    assert!(n_bins >= 1);
    let mut counts = vec![0u32; n_bins as usize];
    let mut total = 0u64;
    for c in patch.subband(channel, k1, k2) {
        let mag = c.unsigned_abs();
        if mag >= 1 && mag <= n_bins {
            counts[(mag - 1) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return vec![0.0; n_bins as usize];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// One extracted feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub fingerprint: u64,
    /// 1-based class when known.
    pub label: Option<u8>,
}

/// Concatenated normalized histograms over the selected sub-bands.
pub fn extract_feature(patch: &PatchCoefficients, schedule: &BinSchedule) -> FeatureVector {
    let mut values = Vec::with_capacity(feature_dimension(schedule));
    for (ch, k1, k2) in selected_subbands(schedule) {
        let kind = if ch == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
        let n_bins = bin_count(kind, k1, k2, schedule);
        values.extend(subband_histogram(patch, ch, k1, k2, n_bins));
    }
    FeatureVector { values, fingerprint: schedule.fingerprint(), label: None }
}

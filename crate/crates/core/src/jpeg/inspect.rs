//! Human- and machine-readable descriptions of a JPEG file: a JSON summary
//! of the marker structure, and a plain-text dump of every quantized
//! coefficient block for byte-exact comparison against other decoders.

use serde::Serialize;

use crate::error::Result;
use crate::features::{bin_count, selected_subbands, BinSchedule, ChannelKind};
use crate::jpeg::decoder::{decode_coefficients, marker_name, parse_file_model};
use crate::jpeg::QuantizedDctPlanes;

#[derive(Debug, Serialize)]
pub struct SegmentReport {
    pub marker: String,
    pub offset: usize,
    pub payload_len: usize,
}

#[derive(Debug, Serialize)]
pub struct ComponentReport {
    pub id: u8,
    pub sampling: String,
    pub quant_table: u8,
}

#[derive(Debug, Serialize)]
pub struct QuantTableReport {
    pub id: usize,
    /// Natural (row-major) order.
    pub entries: Vec<u16>,
}

#[derive(Debug, Serialize)]
pub struct ChannelStats {
    pub blocks: usize,
    pub dc_min: i32,
    pub dc_max: i32,
    pub nonzero_ac: usize,
    pub zero_ac: usize,
}

/// Whole-image tally of one sub-band's |coefficient| values, sized by the
/// band's standard bin count.
#[derive(Debug, Serialize)]
pub struct SubbandHistogramReport {
    /// 0=Y, 1=Cb, 2=Cr.
    pub channel: usize,
    pub k1: usize,
    pub k2: usize,
    pub zeros: u64,
    /// `counts[v - 1]` tallies coefficients with |c| = v.
    pub counts: Vec<u64>,
    pub above_range: u64,
}

#[derive(Debug, Serialize)]
pub struct InspectReport {
    pub width: usize,
    pub height: usize,
    pub frame_type: String,
    pub components: Vec<ComponentReport>,
    pub segments: Vec<SegmentReport>,
    pub quant_tables: Vec<QuantTableReport>,
    pub restart_interval: usize,
    pub entropy_bytes: usize,
    /// Present when the file is inside the supported baseline profile.
    pub channel_stats: Option<Vec<ChannelStats>>,
    /// Per-sub-band histograms over the whole image; same availability.
    pub subband_histograms: Option<Vec<SubbandHistogramReport>>,
}

/// Describe a JPEG file. Structure is reported even for files the decoder
/// rejects (progressive, subsampled, ...); coefficient statistics only for
/// supported ones.
pub fn inspect(bytes: &[u8]) -> Result<InspectReport> {
    let model = parse_file_model(bytes)?;
    let planes = decode_coefficients(bytes).ok();
    let subband_histograms = planes.as_ref().map(whole_image_histograms);
    let channel_stats = planes.map(|planes| {
        planes
            .planes
            .iter()
            .map(|p| {
                let mut stats = ChannelStats {
                    blocks: p.blocks_w * p.blocks_h,
                    dc_min: i32::MAX,
                    dc_max: i32::MIN,
                    nonzero_ac: 0,
                    zero_ac: 0,
                };
                for block in p.blocks() {
                    stats.dc_min = stats.dc_min.min(block[0]);
                    stats.dc_max = stats.dc_max.max(block[0]);
                    for &c in &block[1..] {
                        if c == 0 {
                            stats.zero_ac += 1;
                        } else {
                            stats.nonzero_ac += 1;
                        }
                    }
                }
                stats
            })
            .collect()
    });
    Ok(InspectReport {
        width: model.width,
        height: model.height,
        frame_type: marker_name(model.sof_marker),
        components: model
            .components
            .iter()
            .map(|c| ComponentReport {
                id: c.id,
                sampling: format!("{}x{}", c.h, c.v),
                quant_table: c.tq,
            })
            .collect(),
        segments: model
            .segments
            .iter()
            .map(|s| SegmentReport {
                marker: marker_name(s.marker),
                offset: s.offset,
                payload_len: s.payload_len,
            })
            .collect(),
        quant_tables: model
            .quant_tables
            .iter()
            .enumerate()
            .filter_map(|(id, t)| {
                t.as_ref().map(|t| QuantTableReport { id, entries: t.0.to_vec() })
            })
            .collect(),
        restart_interval: model.restart_interval,
        entropy_bytes: model.entropy_span.1 - model.entropy_span.0,
        channel_stats,
        subband_histograms,
    })
}

/// Raw |c| tallies for every candidate sub-band (diagonals s = 2..=9, all
/// three channels), each sized by its standard bin count.
fn whole_image_histograms(planes: &QuantizedDctPlanes) -> Vec<SubbandHistogramReport> {
    let schedule = BinSchedule::all_bands();
    selected_subbands(&schedule)
        .iter()
        .map(|&(channel, k1, k2)| {
            let kind = if channel == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
            let bins = bin_count(kind, k1, k2, &schedule) as usize;
            let mut counts = vec![0u64; bins];
            let mut zeros = 0;
            let mut above_range = 0;
            let index = (k1 - 1) * 8 + (k2 - 1);
            for block in planes.planes[channel].blocks() {
                match block[index].unsigned_abs() as usize {
                    0 => zeros += 1,
                    v if v <= bins => counts[v - 1] += 1,
                    _ => above_range += 1,
                }
            }
            SubbandHistogramReport { channel, k1, k2, zeros, counts, above_range }
        })
        .collect()
}

/// Write every block as one line: `channel bx by` followed by the 64
/// coefficients in natural (row-major) order. Channels in Y, Cb, Cr order;
/// blocks ordered by row then column. DC is the actual quantized value,
/// not the DPCM difference.
pub fn dump_coefficients(planes: &QuantizedDctPlanes, out: &mut impl std::io::Write) -> Result<()> {
    for (ch, plane) in planes.planes.iter().enumerate() {
        for by in 0..plane.blocks_h {
            for bx in 0..plane.blocks_w {
                let mut line = String::with_capacity(300);
                line.push_str(&format!("{} {} {}", ch, bx, by));
                for &c in plane.block(bx, by).iter() {
                    line.push(' ');
                    line.push_str(&c.to_string());
                }
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::encode;
    use crate::ppm::RasterImage;

    #[test]
    fn report_covers_structure() {
        let img = RasterImage::filled(16, 24, [90, 140, 200]);
        let bytes = encode(&img, 70).unwrap();
        let report = inspect(&bytes).unwrap();
        assert_eq!((report.width, report.height), (16, 24));
        assert_eq!(report.frame_type, "SOF0 (baseline)");
        assert_eq!(report.quant_tables.len(), 2);
        assert_eq!(report.components.len(), 3);
        assert!(report.components.iter().all(|c| c.sampling == "1x1"));
        let stats = report.channel_stats.as_ref().unwrap();
        assert_eq!(stats[0].blocks, 2 * 3);
        let markers: Vec<&str> = report.segments.iter().map(|s| s.marker.as_str()).collect();
        assert_eq!(markers, ["SOI", "APP0", "DQT", "SOF0 (baseline)", "DHT", "SOS", "EOI"]);
    }

    #[test]
    fn histograms_cover_every_candidate_band() {
        let img = RasterImage::filled(16, 24, [90, 140, 200]);
        let bytes = encode(&img, 70).unwrap();
        let report = inspect(&bytes).unwrap();
        let hists = report.subband_histograms.as_ref().unwrap();
        // 36 bands (s = 2..=9) per channel.
        assert_eq!(hists.len(), 108);
        assert_eq!((hists[0].channel, hists[0].k1, hists[0].k2), (0, 1, 1));
        for h in hists {
            let total: u64 = h.counts.iter().sum::<u64>() + h.zeros + h.above_range;
            assert_eq!(total, 6, "every block tallies once in band {:?}", (h.k1, h.k2));
        }
        // A flat image quantizes to all-zero AC everywhere.
        assert!(hists.iter().filter(|h| (h.k1, h.k2) != (1, 1)).all(|h| h.zeros == 6));
    }

    #[test]
    fn dump_format_is_stable() {
        let img = RasterImage::filled(8, 8, [128, 128, 128]);
        let bytes = encode(&img, 50).unwrap();
        let planes = crate::jpeg::decode_coefficients(&bytes).unwrap();
        let mut buf = Vec::new();
        dump_coefficients(&planes, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("0 0 0 "));
        assert_eq!(lines[0].split_whitespace().count(), 67);
        // Grey image: all coefficients zero.
        assert!(lines[0].split_whitespace().skip(3).all(|t| t == "0"));
    }
}

//! Binary feature store.
//!
//! Layout (all integers little-endian):
//!   magic "JCLF" | version u16 | d u32 | schedule fingerprint u64 |
//!   row count u64 | rows
//! Each row: class label u8 | image id u32 | patch index u16 | d * f32.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::chains::DatasetManifest;
use crate::error::{Error, Result};
use crate::features::{extract_feature, extract_patches, BinSchedule};
use crate::jpeg;

const MAGIC: &[u8; 4] = b"JCLF";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// 1-based class (compression count).
    pub label: u8,
    pub image_id: u32,
    pub patch_index: u16,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreHeader {
    pub dimension: usize,
    pub fingerprint: u64,
    pub rows: usize,
}

pub fn write_store(path: &Path, dimension: usize, fingerprint: u64, rows: &[FeatureRow]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dimension as u32).to_le_bytes())?;
    w.write_all(&fingerprint.to_le_bytes())?;
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    for row in rows {
        if row.values.len() != dimension {
            return Err(Error::ShapeMismatch(format!(
                "feature row has {} values, store dimension is {}",
                row.values.len(),
                dimension
            )));
        }
        w.write_all(&[row.label])?;
        w.write_all(&row.image_id.to_le_bytes())?;
        w.write_all(&row.patch_index.to_le_bytes())?;
        for v in &row.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<(StoreHeader, Vec<FeatureRow>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let bad = |message: String| Error::Format { what: "feature store", message };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {:?}", magic)));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {}", version)));
    }
    let dimension = read_u32(&mut r)? as usize;
    let fingerprint = read_u64(&mut r)?;
    let n_rows = read_u64(&mut r)? as usize;

    let mut rows = Vec::with_capacity(n_rows);
    let mut buf = vec![0u8; dimension * 4];
    for _ in 0..n_rows {
        let mut head = [0u8; 7];
        r.read_exact(&mut head)?;
        r.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        rows.push(FeatureRow {
            label: head[0],
            image_id: u32::from_le_bytes([head[1], head[2], head[3], head[4]]),
            patch_index: u16::from_le_bytes([head[5], head[6]]),
            values,
        });
    }
    // Trailing garbage means the file was not written by us.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(bad("trailing bytes after the last row".into()));
    }
    Ok((StoreHeader { dimension, fingerprint, rows: n_rows }, rows))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Extract features for every manifest row (duplicate rows extract
/// duplicate features by design: class-1 entries appear `r` times). Rows
/// come back in manifest order, patches in row-major order within each
/// image.
pub fn extract_manifest_features(
    manifest_dir: &Path,
    manifest: &DatasetManifest,
    schedule: &BinSchedule,
) -> Result<Vec<FeatureRow>> {
    schedule.validate()?;
    let per_row: Vec<Vec<FeatureRow>> = manifest
        .rows
        .par_iter()
        .map(|row| -> Result<Vec<FeatureRow>> {
            let bytes = std::fs::read(manifest_dir.join(&row.path))?;
            let planes = jpeg::decode_coefficients(&bytes)?;
            let patches = extract_patches(&planes, schedule.patch_size);
            Ok(patches
                .iter()
                .map(|patch| {
                    let feature = extract_feature(patch, schedule);
                    FeatureRow {
                        label: row.class_label,
                        image_id: row.image_id,
                        patch_index: patch.patch_index as u16,
                        values: feature.values.iter().map(|&v| v as f32).collect(),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_row.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<FeatureRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| FeatureRow {
                label: rng.gen_range(1..=4),
                image_id: i as u32,
                patch_index: rng.gen_range(0..12),
                values: (0..d).map(|_| rng.gen_range(0.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jclf");
        let rows = random_rows(17, 23, 1);
        write_store(&path, 23, 0xdeadbeef, &rows).unwrap();
        let (header, back) = read_store(&path).unwrap();
        assert_eq!(header, StoreHeader { dimension: 23, fingerprint: 0xdeadbeef, rows: 17 });
        assert_eq!(back, rows);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jclf");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(read_store(&path).is_err());
    }

    #[test]
    fn truncated_store_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jclf");
        write_store(&path, 23, 7, &random_rows(5, 23, 2)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(read_store(&path).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jclf");
        let rows = random_rows(3, 23, 3);
        assert!(matches!(
            write_store(&path, 24, 7, &rows),
            Err(crate::Error::ShapeMismatch(_))
        ));
    }
}

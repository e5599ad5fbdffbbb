//! Model checkpoints.
//!
//! File layout: magic `JCLM`, version (u16 LE), header length (u32 LE), a
//! JSON header carrying the architecture, training provenance, and the
//! tensor directory, then every tensor's data as little-endian `f32` in
//! directory order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::model::{softmax, Model};
use super::spec::ModelSpec;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"JCLM";
const VERSION: u16 = 1;

/// Batch width used when scoring many rows; inference is batch-composition
/// invariant, so this only affects memory.
const PREDICT_CHUNK: usize = 32;

#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    /// 1-based epoch the snapshot was taken after.
    pub epoch: usize,
    pub val_accuracy: f64,
    /// Fingerprint of the feature schedule the model was trained on.
    pub feature_fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    epoch: usize,
    val_accuracy: f64,
    feature_fingerprint: u64,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, Debug)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn classes(&self) -> usize {
        self.model.spec().classes
    }

    pub fn input_dim(&self) -> usize {
        self.model.spec().input_dim
    }

    /// Class probabilities for one feature vector.
    pub fn predict(&self, features: &[f32]) -> Result<Vec<f32>> {
        if features.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "feature vector has {} values, model expects {}",
                features.len(),
                self.input_dim()
            )));
        }
        let logits = self.model.infer(Batch::from_rows(&[features]))?;
        Ok(softmax(logits.sample(0)))
    }

    /// Class probabilities for many feature vectors, scored in fixed-size
    /// chunks.
    pub fn predict_batch(&self, rows: &[&[f32]]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(PREDICT_CHUNK) {
            for row in chunk {
                if row.len() != self.input_dim() {
                    return Err(Error::ShapeMismatch(format!(
                        "feature vector has {} values, model expects {}",
                        row.len(),
                        self.input_dim()
                    )));
                }
            }
            let logits = self.model.infer(Batch::from_rows(chunk))?;
            for i in 0..chunk.len() {
                out.push(softmax(logits.sample(i)));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        self.model.for_each_tensor(&mut |name, shape, data| {
            tensors.push(TensorInfo { name: name.to_owned(), shape: shape.to_vec() });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        });
        let header = Header {
            spec: self.model.spec().clone(),
            epoch: self.epoch,
            val_accuracy: self.val_accuracy,
            feature_fingerprint: self.feature_fingerprint,
            tensors,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut bytes = Vec::with_capacity(4 + 2 + 4 + header_bytes.len() + payload.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_bytes);
        bytes.extend_from_slice(&payload);
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path)?;
        let fail = |message: String| Error::Format { what: "checkpoint", message };
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(fail("missing JCLM magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let payload_at = 10 + header_len;
        if bytes.len() < payload_at {
            return Err(fail("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[10..payload_at])?;

        let mut model = Model::<f32>::from_spec(&header.spec)?;
        let mut expected = Vec::new();
        model.for_each_tensor(&mut |name, shape, _| {
            expected.push(TensorInfo { name: name.to_owned(), shape: shape.to_vec() });
        });
        if expected != header.tensors {
            return Err(fail("tensor directory does not match the architecture".into()));
        }

        let mut offset = payload_at;
        let mut short = false;
        model.for_each_tensor_mut(&mut |_, _, data| {
            let need = data.len() * 4;
            if bytes.len() < offset + need {
                short = true;
                return;
            }
            for (v, raw) in data.iter_mut().zip(bytes[offset..offset + need].chunks_exact(4)) {
                *v = f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
            }
            offset += need;
        });
        if short {
            return Err(fail("truncated tensor data".into()));
        }
        if offset != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(Checkpoint {
            model,
            epoch: header.epoch,
            val_accuracy: header.val_accuracy,
            feature_fingerprint: header.feature_fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn small_checkpoint() -> Checkpoint {
        let spec = ModelSpec::cnn(2, 4, 8, 0.1, 32, 3);
        let mut model = Model::<f32>::from_spec(&spec).unwrap();
        model.init_weights(&mut ChaCha20Rng::seed_from_u64(77));
        Checkpoint { model, epoch: 9, val_accuracy: 0.875, feature_fingerprint: 0xdead_beef }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.jclm");
        let second = dir.path().join("b.jclm");
        let ckpt = small_checkpoint();
        ckpt.save(&first).unwrap();
        let loaded = Checkpoint::load(&first).unwrap();
        assert_eq!(loaded.epoch, 9);
        assert_eq!(loaded.val_accuracy, 0.875);
        assert_eq!(loaded.feature_fingerprint, 0xdead_beef);
        loaded.save(&second).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jclm");
        small_checkpoint().save(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn predictions_are_probabilities() {
        let ckpt = small_checkpoint();
        let features: Vec<f32> = (0..32).map(|i| (i as f32 / 31.0) - 0.5).collect();
        let p = ckpt.predict(&features).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(ckpt.predict(&features[..10]).is_err());
    }

    #[test]
    fn batched_prediction_equals_single_prediction() {
        let ckpt = small_checkpoint();
        let rows: Vec<Vec<f32>> = (0..70)
            .map(|r| (0..32).map(|i| ((r * 31 + i * 7) % 97) as f32 / 97.0 - 0.5).collect())
            .collect();
        let views: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let batched = ckpt.predict_batch(&views).unwrap();
        for (row, want) in views.iter().zip(&batched) {
            assert_eq!(&ckpt.predict(row).unwrap(), want);
        }
    }
}

//! Constrained recompression chains and class-balanced dataset
//! construction.
//!
//! A chain `[QF_1, ..., QF_k]` records the quality factor of every
//! compression stage. Working backwards from the fixed final quality, each
//! earlier stage must differ from its successor by at least `dq_min` and
//! at most `dq_max` while staying inside `[q_min, q_max]` — large enough a
//! step to leave traces, small enough to stay in a realistic range.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg;
use crate::ppm;

/// Retries per chain before a dead-end configuration is reported.
const CHAIN_RETRIES: usize = 1000;
/// Draws allowed while collecting distinct chains (only reachable when the
/// distinct-chain count is extremely close to `r`).
const UNIQUE_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GenerationConfig {
    pub q_min: u8,
    pub q_max: u8,
    pub dq_min: u8,
    pub dq_max: u8,
    /// Chains per class.
    pub r: usize,
    /// Source images per class.
    pub p: usize,
    /// Number of classes = maximum compression count.
    pub n_classes: usize,
    /// Quality factor of the final compression stage, shared by every
    /// class with k >= 2 stages (and the sole stage of class 1).
    pub qf_last: u8,
    pub rng_seed: u64,
}

impl GenerationConfig {
    /// The conventional operating point: qualities in [60, 95], steps of
    /// 6..=12, ten chains per class.
    pub fn new(p: usize, n_classes: usize, qf_last: u8, rng_seed: u64) -> Self {
        GenerationConfig {
            q_min: 60,
            q_max: 95,
            dq_min: 6,
            dq_max: 12,
            r: 10,
            p,
            n_classes,
            qf_last,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.q_min == 0 || self.q_max > 100 || self.q_min >= self.q_max {
            return fail(format!(
                "quality range [{}, {}] must satisfy 1 <= q_min < q_max <= 100",
                self.q_min, self.q_max
            ));
        }
        if self.dq_min == 0 || self.dq_min > self.dq_max {
            return fail(format!(
                "quality steps [{}, {}] must satisfy 0 < dq_min <= dq_max",
                self.dq_min, self.dq_max
            ));
        }
        if self.r == 0 {
            return fail("r (chains per class) must be at least 1".into());
        }
        if self.p == 0 {
            return fail("p (source images) must be at least 1".into());
        }
        if self.n_classes == 0 {
            return fail("n_classes must be at least 1".into());
        }
        if self.qf_last < self.q_min || self.qf_last > self.q_max {
            return fail(format!(
                "qf_last {} outside quality range [{}, {}]",
                self.qf_last, self.q_min, self.q_max
            ));
        }
        Ok(())
    }
}

/// Quality factors of each stage, first compression first.
pub type CompressionChain = Vec<u8>;

/// Qualities a stage may use given its successor's quality: the two
/// windows `[qf_next - dq_max, qf_next - dq_min]` and
/// `[qf_next + dq_min, qf_next + dq_max]`, clipped to the legal range.
/// Ascending; may be empty.
pub fn admissible_prev_qfs(qf_next: u8, cfg: &GenerationConfig) -> Vec<u8> {
    let (lo, hi) = (cfg.q_min as i32, cfg.q_max as i32);
    let q = qf_next as i32;
    let mut out = Vec::new();
    for cand in (q - cfg.dq_max as i32)..=(q - cfg.dq_min as i32) {
        if (lo..=hi).contains(&cand) {
            out.push(cand as u8);
        }
    }
    for cand in (q + cfg.dq_min as i32)..=(q + cfg.dq_max as i32) {
        if (lo..=hi).contains(&cand) {
            out.push(cand as u8);
        }
    }
    out
}

/// Number of distinct chains of the given length ending at `qf_last`,
/// saturating at `u128::MAX`.
pub fn count_chains(length: usize, cfg: &GenerationConfig) -> u128 {
    if length == 0 {
        return 0;
    }
    // counts[q - q_min] = number of distinct suffix-trees of the current
    // depth rooted at quality q.
    let span = (cfg.q_max - cfg.q_min + 1) as usize;
    let mut counts = vec![1u128; span];
    for _ in 1..length {
        let mut next = vec![0u128; span];
        for q in cfg.q_min..=cfg.q_max {
            let mut total = 0u128;
            for prev in admissible_prev_qfs(q, cfg) {
                total = total.saturating_add(counts[(prev - cfg.q_min) as usize]);
            }
            next[(q - cfg.q_min) as usize] = total;
        }
        counts = next;
    }
    counts[(cfg.qf_last - cfg.q_min) as usize]
}

/// Sample one chain of the given length, back to front, each stage drawn
/// uniformly from the admissible set of its successor. Dead ends restart
/// the chain, up to a bounded retry count.
pub fn sample_chain(length: usize, cfg: &GenerationConfig, rng: &mut impl Rng) -> Result<CompressionChain> {
    if length == 0 {
        return Err(Error::InvalidConfig("chain length must be at least 1".into()));
    }
    'attempt: for _ in 0..CHAIN_RETRIES {
        let mut chain = vec![0u8; length];
        chain[length - 1] = cfg.qf_last;
        for i in (0..length - 1).rev() {
            let candidates = admissible_prev_qfs(chain[i + 1], cfg);
            if candidates.is_empty() {
                continue 'attempt;
            }
            chain[i] = candidates[rng.gen_range(0..candidates.len())];
        }
        return Ok(chain);
    }
    Err(Error::ChainDeadEnd { length, attempts: CHAIN_RETRIES })
}

/// Sample `cfg.r` pairwise-distinct chains. Distinctness is over the whole
/// quality tuple. Fails up front if fewer than `r` distinct chains exist.
pub fn sample_unique_chains(
    length: usize,
    cfg: &GenerationConfig,
    rng: &mut impl Rng,
) -> Result<Vec<CompressionChain>> {
    let achievable = count_chains(length, cfg);
    if achievable < cfg.r as u128 {
        return Err(Error::InfeasibleChains { requested: cfg.r, length, achievable });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.r);
    for _ in 0..UNIQUE_DRAWS {
        if out.len() == cfg.r {
            return Ok(out);
        }
        let chain = sample_chain(length, cfg, rng)?;
        if seen.insert(chain.clone()) {
            out.push(chain);
        }
    }
    // Enough chains exist but the sampler keeps colliding; only reachable
    // when achievable barely exceeds r.
    Err(Error::ChainDeadEnd { length, attempts: UNIQUE_DRAWS })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestRow {
    /// Index of the source image within the (sorted) corpus listing.
    pub image_id: u32,
    /// Corpus file the row was generated from.
    pub source: String,
    /// 1-based: class k means "compressed k times".
    pub class_label: u8,
    pub chain: CompressionChain,
    /// JPEG path relative to the manifest's directory.
    pub path: String,
    pub split: SplitTag,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetManifest {
    pub config: GenerationConfig,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Deterministic per-class RNG: same seed and class index give the same
/// chains no matter how many images are processed.
fn class_rng(seed: u64, class: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(class as u64);
    rng
}

/// The chains used for each class: class 1 gets the single-stage chain
/// repeated `r` times, class k >= 2 gets `r` distinct k-stage chains.
pub fn chains_per_class(cfg: &GenerationConfig) -> Result<Vec<Vec<CompressionChain>>> {
    let mut all = Vec::with_capacity(cfg.n_classes);
    for k in 1..=cfg.n_classes {
        if k == 1 {
            all.push(vec![vec![cfg.qf_last]; cfg.r]);
        } else {
            let mut rng = class_rng(cfg.rng_seed, k);
            all.push(sample_unique_chains(k, cfg, &mut rng)?);
        }
    }
    Ok(all)
}

/// List the corpus: `.ppm` files in lexicographic order.
pub fn list_corpus(corpus_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "ppm").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}

/// Compress `img` through every stage of `chain`.
pub fn apply_chain(img: &ppm::RasterImage, chain: &[u8]) -> Result<Vec<u8>> {
    let mut bytes = jpeg::encode(img, chain[0])?;
    for &qf in &chain[1..] {
        bytes = jpeg::recompress(&bytes, qf)?;
    }
    Ok(bytes)
}

/// Build the dataset on disk: every class gets `p * r` manifest rows. For
/// class 1 each source image is compressed once and listed `r` times (one
/// physical file); for class k >= 2 each of the `r` chains is applied to
/// each image. Writes `manifest.json` into `out_dir` and returns the
/// manifest.
pub fn build_dataset(
    corpus_dir: &Path,
    out_dir: &Path,
    cfg: &GenerationConfig,
    split: SplitTag,
) -> Result<DatasetManifest> {
    build_dataset_from_sources(&list_corpus(corpus_dir)?, out_dir, cfg, split)
}

/// [`build_dataset`] over an explicit source list, so callers can carve a
/// corpus into disjoint slices (train vs test sources). Uses the first
/// `cfg.p` entries.
pub fn build_dataset_from_sources(
    sources: &[PathBuf],
    out_dir: &Path,
    cfg: &GenerationConfig,
    split: SplitTag,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if sources.len() < cfg.p {
        return Err(Error::CorpusTooSmall { found: sources.len(), needed: cfg.p });
    }
    let corpus = &sources[..cfg.p];
    let class_chains = chains_per_class(cfg)?;

    std::fs::create_dir_all(out_dir)?;
    for k in 1..=cfg.n_classes {
        std::fs::create_dir_all(out_dir.join(format!("c{}", k)))?;
    }

    // Work items: (class k, image id, chain index) -> one output file.
    // Class 1 writes one file per image and reuses it across the r rows.
    struct Item {
        class: usize,
        image_id: u32,
        chain_idx: usize,
        rel_path: String,
    }
    let mut items = Vec::new();
    for (k, chains) in class_chains.iter().enumerate().map(|(i, c)| (i + 1, c)) {
        for (image_id, _) in corpus.iter().enumerate() {
            let n_files = if k == 1 { 1 } else { chains.len() };
            for chain_idx in 0..n_files {
                items.push(Item {
                    class: k,
                    image_id: image_id as u32,
                    chain_idx,
                    rel_path: format!("c{}/img{:05}_{:02}.jpg", k, image_id, chain_idx),
                });
            }
        }
    }

    items.par_iter().try_for_each(|item| -> Result<()> {
        let img = ppm::read_ppm_file(&corpus[item.image_id as usize])?;
        let chain = &class_chains[item.class - 1][item.chain_idx];
        let bytes = apply_chain(&img, chain)?;
        std::fs::write(out_dir.join(&item.rel_path), bytes)?;
        Ok(())
    })?;

    let mut rows = Vec::with_capacity(cfg.n_classes * cfg.p * cfg.r);
    for (k, chains) in class_chains.iter().enumerate().map(|(i, c)| (i + 1, c)) {
        for (image_id, source) in corpus.iter().enumerate() {
            for (chain_idx, chain) in chains.iter().enumerate() {
                let file_idx = if k == 1 { 0 } else { chain_idx };
                rows.push(ManifestRow {
                    image_id: image_id as u32,
                    source: source.display().to_string(),
                    class_label: k as u8,
                    chain: chain.clone(),
                    path: format!("c{}/img{:05}_{:02}.jpg", k, image_id, file_idx),
                    split,
                });
            }
        }
    }

    let manifest = DatasetManifest { config: cfg.clone(), rows };
    manifest.write_json(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

//! Balanced sampling between original and rewritten captions.
//!
//! Each training caption draws `r` uniformly and uses its accepted rewrite
//! when `r <= beta`, otherwise the original. The draw is a keyed hash of
//! `(seed, epoch, text_id)`, so manifests are reproducible without storing
//! RNG state and independent of processing order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CaptionRecord, Split};
use crate::faithfulness::AugmentationOutcome;
use crate::stable_hash::hash_u64;

pub const DEFAULT_BETA: f64 = 0.2;

const DRAW_DOMAIN: &[u8] = b"llmda.bss.v1";

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("beta must lie in [0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("no augmentation outcome for: {}", .0.join(", "))]
    MissingOutcomes(Vec<String>),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Original,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssChoice {
    pub text_id: String,
    pub epoch: u32,
    pub r: f64,
    pub beta: f64,
    pub selected: TextSource,
}

/// Whether draws change between epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawPolicy {
    #[default]
    PerEpoch,
    /// Every epoch reuses the epoch-0 draw.
    FrozenAtEpochZero,
}

impl DrawPolicy {
    fn draw_epoch(self, epoch: u32) -> u32 {
        match self {
            DrawPolicy::PerEpoch => epoch,
            DrawPolicy::FrozenAtEpochZero => 0,
        }
    }
}

/// The uniform draw for one caption in one epoch, strictly inside `(0, 1)`.
pub fn bss_draw(seed: u64, epoch: u32, text_id: &str) -> f64 {
    let h = hash_u64(&[DRAW_DOMAIN, &seed.to_le_bytes(), &epoch.to_le_bytes(), text_id.as_bytes()]);
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Panics if `beta` is outside `[0, 1]`.
pub fn bss_select(text_id: &str, epoch: u32, beta: f64, seed: u64, has_augmentation: bool) -> BssChoice {
    assert!((0.0..=1.0).contains(&beta), "beta must lie in [0, 1], got {beta}");
    let r = bss_draw(seed, epoch, text_id);
    let selected = if has_augmentation && r <= beta {
        TextSource::Augmented
    } else {
        TextSource::Original
    };
    BssChoice {
        text_id: text_id.to_string(),
        epoch,
        r,
        beta,
        selected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub text_id: String,
    pub image_id: String,
    pub identity_id: String,
    pub chosen_text: String,
    pub source: TextSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    epoch: u32,
    seed: u64,
    beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochManifest {
    pub epoch: u32,
    pub seed: u64,
    pub beta: f64,
    pub rows: Vec<ManifestRow>,
}

impl EpochManifest {
    /// Header line `{"epoch","seed","beta"}` followed by one row per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = ManifestHeader {
            epoch: self.epoch,
            seed: self.seed,
            beta: self.beta,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, SamplerError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let parse_err = |line: usize, e: serde_json::Error| SamplerError::Parse {
            line: line + 1,
            message: e.to_string(),
        };
        let (n, first) = lines.next().ok_or(SamplerError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: ManifestHeader = serde_json::from_str(&first?).map_err(|e| parse_err(n, e))?;
        let mut rows = Vec::new();
        for (n, line) in lines {
            rows.push(serde_json::from_str(&line?).map_err(|e| parse_err(n, e))?);
        }
        Ok(EpochManifest {
            epoch: header.epoch,
            seed: header.seed,
            beta: header.beta,
            rows,
        })
    }
}

pub fn materialize_epoch(
    corpus: &[CaptionRecord],
    outcomes: &HashMap<String, AugmentationOutcome>,
    epoch: u32,
    beta: f64,
    seed: u64,
) -> Result<EpochManifest, SamplerError> {
    materialize_epoch_with(corpus, outcomes, epoch, beta, seed, DrawPolicy::PerEpoch)
}

/// One row per train-split record, in corpus order.
pub fn materialize_epoch_with(
    corpus: &[CaptionRecord],
    outcomes: &HashMap<String, AugmentationOutcome>,
    epoch: u32,
    beta: f64,
    seed: u64,
    policy: DrawPolicy,
) -> Result<EpochManifest, SamplerError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(SamplerError::InvalidBeta(beta));
    }
    let train = corpus.iter().filter(|r| r.split == Split::Train);
    let missing: Vec<String> = train
        .clone()
        .filter(|r| !outcomes.contains_key(&r.text_id))
        .map(|r| r.text_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(SamplerError::MissingOutcomes(missing));
    }

    let draw_epoch = policy.draw_epoch(epoch);
    let rows = train
        .map(|r| {
            let augmented = outcomes[&r.text_id].augmented_text();
            let choice = bss_select(&r.text_id, draw_epoch, beta, seed, augmented.is_some());
            let (chosen_text, source) = match (choice.selected, augmented) {
                (TextSource::Augmented, Some(text)) => (text.to_string(), TextSource::Augmented),
                _ => (r.text.clone(), TextSource::Original),
            };
            ManifestRow {
                text_id: r.text_id.clone(),
                image_id: r.image_id.clone(),
                identity_id: r.identity_id.clone(),
                chosen_text,
                source,
            }
        })
        .collect();
    Ok(EpochManifest {
        epoch,
        seed,
        beta,
        rows,
    })
}

/// Realized share of augmented rows.
pub fn empirical_rate(manifest: &EpochManifest) -> Result<f64, SamplerError> {
    if manifest.rows.is_empty() {
        return Err(SamplerError::EmptyManifest);
    }
    let augmented = manifest.rows.iter().filter(|r| r.source == TextSource::Augmented).count();
    Ok(augmented as f64 / manifest.rows.len() as f64)
}

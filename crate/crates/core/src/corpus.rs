//! Annotation corpora: CUHK-PEDES-style ingest, validation, and the
//! canonical JSONL manifest every other stage reads.
//!
//! The ingest shape is a JSON array of image objects, each carrying one or
//! more captions:
//!
//! ```json
//! [{"file_path": "CUHK01/0363004.png", "id": 1, "split": "train",
//!   "captions": ["A man in a red shirt.", "He wears a red top."]}]
//! ```
//!
//! Every caption becomes one [`CaptionRecord`] whose `text_id` is
//! `<image_id>#<k>`. The canonical form is one JSON object per line with the
//! keys `text_id, image_id, identity_id, image_path, split, text` in that
//! order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Token count above which a caption is flagged. Flagged captions are kept intact.
pub const MAX_CAPTION_TOKENS: usize = 77;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte {offset}")]
    Utf8 { offset: usize },
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("record {index}: missing or invalid field `{field}`")]
    Field { index: usize, field: String },
    #[error("record {index}: unknown split label `{label}`")]
    UnknownSplit { index: usize, label: String },
    #[error("record {index} is invalid: {reason}")]
    InvalidRecord { index: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(other.to_string()),
        }
    }
}

/// One caption of one image. Field order is the canonical key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub text_id: String,
    pub image_id: String,
    pub identity_id: String,
    pub image_path: String,
    pub split: Split,
    pub text: String,
}

impl CaptionRecord {
    /// Builds a record with a normalized caption.
    pub fn new(
        text_id: impl Into<String>,
        image_id: impl Into<String>,
        identity_id: impl Into<String>,
        image_path: impl Into<String>,
        split: Split,
        text: &str,
    ) -> Self {
        CaptionRecord {
            text_id: text_id.into(),
            image_id: image_id.into(),
            identity_id: identity_id.into(),
            image_path: image_path.into(),
            split,
            text: normalize_caption(text),
        }
    }

    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Trims and collapses internal whitespace runs to one space. Case and
/// punctuation are untouched.
pub fn normalize_caption(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    CuhkPedesJson,
    CanonicalJsonl,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cuhk_pedes_json" | "cuhk" => Ok(CorpusFormat::CuhkPedesJson),
            "canonical_jsonl" | "jsonl" => Ok(CorpusFormat::CanonicalJsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

/// Field names of the array-of-images ingest shape. ICFG-PEDES uses the
/// CUHK-PEDES names; RSTPReid names the path `img_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub file_path: String,
    pub identity: String,
    pub split: String,
    pub captions: String,
}

impl FieldMap {
    pub fn cuhk_pedes() -> Self {
        FieldMap {
            file_path: "file_path".into(),
            identity: "id".into(),
            split: "split".into(),
            captions: "captions".into(),
        }
    }

    pub fn icfg_pedes() -> Self {
        Self::cuhk_pedes()
    }

    pub fn rstp_reid() -> Self {
        FieldMap {
            file_path: "img_path".into(),
            ..Self::cuhk_pedes()
        }
    }
}

impl Default for FieldMap {
    fn default() -> Self {
        Self::cuhk_pedes()
    }
}

pub fn parse_annotations(raw: &[u8], format: CorpusFormat) -> Result<Vec<CaptionRecord>, CorpusError> {
    parse_annotations_with(raw, format, &FieldMap::default())
}

/// Like [`parse_annotations`], with custom ingest field names. The field
/// map is ignored for canonical JSONL.
pub fn parse_annotations_with(
    raw: &[u8],
    format: CorpusFormat,
    fields: &FieldMap,
) -> Result<Vec<CaptionRecord>, CorpusError> {
    let text = std::str::from_utf8(raw).map_err(|e| CorpusError::Utf8 {
        offset: e.valid_up_to(),
    })?;
    match format {
        CorpusFormat::CuhkPedesJson => parse_cuhk(text, fields),
        CorpusFormat::CanonicalJsonl => parse_canonical(text),
    }
}

fn parse_cuhk(text: &str, fields: &FieldMap) -> Result<Vec<CaptionRecord>, CorpusError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let root: Value = serde_json::from_str(text).map_err(|e| syntax_error(text, 0, &e))?;
    let items = root.as_array().ok_or_else(|| CorpusError::Syntax {
        offset: text.len() - text.trim_start().len(),
        message: "expected a JSON array of image records".into(),
    })?;

    let mut out = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| CorpusError::Field {
            index,
            field: "<object>".into(),
        })?;
        let field_err = |field: &str| CorpusError::Field {
            index,
            field: field.to_string(),
        };
        let path = obj
            .get(&fields.file_path)
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(&fields.file_path))?;
        let identity = match obj.get(&fields.identity) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(field_err(&fields.identity)),
        };
        let split = parse_split(obj.get(&fields.split), index, &fields.split)?;
        let captions = obj
            .get(&fields.captions)
            .and_then(Value::as_array)
            .ok_or_else(|| field_err(&fields.captions))?;
        for (k, caption) in captions.iter().enumerate() {
            let caption = caption.as_str().ok_or_else(|| field_err(&fields.captions))?;
            out.push(CaptionRecord::new(
                format!("{path}#{k}"),
                path,
                identity.clone(),
                path,
                split,
                caption,
            ));
        }
    }
    Ok(out)
}

fn parse_canonical(text: &str) -> Result<Vec<CaptionRecord>, CorpusError> {
    let mut out = Vec::new();
    let mut line_start = 0usize;
    for line in text.split_inclusive('\n') {
        let start = line_start;
        line_start += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        let index = out.len();
        let value: Value = serde_json::from_str(body).map_err(|e| syntax_error(body, start, &e))?;
        let obj = value.as_object().ok_or_else(|| CorpusError::Syntax {
            offset: start,
            message: "expected a JSON object".into(),
        })?;
        let get = |field: &str| -> Result<&str, CorpusError> {
            obj.get(field).and_then(Value::as_str).ok_or(CorpusError::Field {
                index,
                field: field.to_string(),
            })
        };
        let split = parse_split(obj.get("split"), index, "split")?;
        out.push(CaptionRecord::new(
            get("text_id")?,
            get("image_id")?,
            get("identity_id")?,
            get("image_path")?,
            split,
            get("text")?,
        ));
    }
    Ok(out)
}

fn parse_split(value: Option<&Value>, index: usize, field: &str) -> Result<Split, CorpusError> {
    let label = value.and_then(Value::as_str).ok_or_else(|| CorpusError::Field {
        index,
        field: field.to_string(),
    })?;
    label.parse().map_err(|label| CorpusError::UnknownSplit { index, label })
}

/// Converts serde_json's 1-based line/column into an absolute byte offset.
fn syntax_error(text: &str, base: usize, err: &serde_json::Error) -> CorpusError {
    let line_offset: usize = text
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    CorpusError::Syntax {
        offset: base + line_offset + err.column().saturating_sub(1),
        message: err.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub record_count: usize,
    /// Each duplicated text id once, in order of first repetition.
    pub duplicate_text_ids: Vec<String>,
    /// Indices of records whose caption is empty after trimming.
    pub empty_captions: Vec<usize>,
    /// Indices of records repeating an earlier `(image_id, text)` pair.
    pub duplicate_pairs: Vec<usize>,
    /// Indices of captions longer than [`MAX_CAPTION_TOKENS`]. Not an error.
    pub overlong_captions: Vec<usize>,
    pub split_counts: BTreeMap<Split, usize>,
}

impl CorpusReport {
    pub fn is_clean(&self) -> bool {
        self.duplicate_text_ids.is_empty() && self.empty_captions.is_empty() && self.duplicate_pairs.is_empty()
    }
}

pub fn validate_corpus(records: &[CaptionRecord]) -> CorpusReport {
    let mut split_counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|s| (*s, 0)).collect();
    let mut seen_ids: HashMap<&str, usize> = HashMap::new();
    let mut seen_pairs: HashSet<(&str, &str)> = HashSet::new();
    let mut report = CorpusReport {
        record_count: records.len(),
        duplicate_text_ids: Vec::new(),
        empty_captions: Vec::new(),
        duplicate_pairs: Vec::new(),
        overlong_captions: Vec::new(),
        split_counts: BTreeMap::new(),
    };

    for (i, r) in records.iter().enumerate() {
        *split_counts.entry(r.split).or_default() += 1;
        let n = seen_ids.entry(r.text_id.as_str()).or_default();
        *n += 1;
        if *n == 2 {
            report.duplicate_text_ids.push(r.text_id.clone());
        }
        if r.text.trim().is_empty() {
            report.empty_captions.push(i);
        }
        if !seen_pairs.insert((r.image_id.as_str(), r.text.as_str())) {
            report.duplicate_pairs.push(i);
        }
        if r.token_count() > MAX_CAPTION_TOKENS {
            report.overlong_captions.push(i);
        }
    }
    report.split_counts = split_counts;
    report
}

/// Serializes records as canonical JSONL. Refuses the first record that
/// would make the corpus invalid.
pub fn write_manifest(records: &[CaptionRecord]) -> Result<Vec<u8>, CorpusError> {
    let mut seen_ids = HashSet::new();
    let mut seen_pairs = HashSet::new();
    let mut out = Vec::new();
    for (index, r) in records.iter().enumerate() {
        let invalid = |reason: &str| CorpusError::InvalidRecord {
            index,
            reason: reason.to_string(),
        };
        if r.text.trim().is_empty() {
            return Err(invalid("empty caption"));
        }
        if !seen_ids.insert(r.text_id.as_str()) {
            return Err(invalid("duplicate text_id"));
        }
        if !seen_pairs.insert((r.image_id.as_str(), r.text.as_str())) {
            return Err(invalid("duplicate (image_id, text) pair"));
        }
        serde_json::to_writer(&mut out, r).map_err(|e| invalid(&e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

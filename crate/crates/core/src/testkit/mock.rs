use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::embed_gateway::EmbedBackend;
use crate::llm_gateway::{CallContext, ChatBackend, ChatRequest};
use crate::stable_hash::{hash_u64, unit_interval};
use crate::transport::TransportError;

use super::{MockProfile, ParaphraseQuality};

/// Dimension of [`mock_embed`] vectors. Changing it or the hashing scheme
/// requires bumping [`MOCK_EMBED_VERSION`] and re-measuring frozen
/// thresholds.
pub const MOCK_EMBED_DIM: usize = 256;
pub const MOCK_EMBED_VERSION: u32 = 1;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "in", "on", "of", "and", "with", "is", "are", "was", "his", "her", "he", "she", "this", "that",
    "to", "at", "it", "has", "its", "their", "they", "who", "by", "for", "as", "be",
];

const GARBAGE: &[&str] = &[
    "ТЕКСТ 乱码 ### ???",
    "文字化け ### 😶 ###",
    "Автомобиль 乱码乱码 *** 12",
    "### ☐☐☐ ### 0 0 0",
    "�� ～～ ## 漢字 ##",
];

/// Content-word synonyms; single tokens only, so the structure of the
/// caption is unchanged.
const SYNONYMS: &[(&str, &str)] = &[
    ("shirt", "top"),
    ("t-shirt", "tee"),
    ("pants", "trousers"),
    ("jacket", "coat"),
    ("bag", "purse"),
    ("backpack", "rucksack"),
    ("shoes", "footwear"),
    ("sneakers", "trainers"),
    ("woman", "lady"),
    ("dark", "black"),
    ("walking", "strolling"),
    ("holding", "gripping"),
];

const NOISE_WORDS: &[&str] = &[
    "bicycle", "umbrella", "hat", "scarf", "dog", "car", "tree", "phone", "bench", "camera", "skirt", "glasses",
];

fn domain(tag: &str) -> Vec<u8> {
    format!("llmda.mock.v{MOCK_EMBED_VERSION}.{tag}").into_bytes()
}

fn draw(profile: &MockProfile, tag: &str, parts: &[&[u8]]) -> f64 {
    let d = domain(tag);
    let seed = profile.seed.to_le_bytes();
    let mut all: Vec<&[u8]> = vec![&d, &seed];
    all.extend_from_slice(parts);
    unit_interval(&all)
}

/// Whether transport try `transport_try` of `attempt` for `text` fails.
pub fn mock_transport_fault(text: &str, attempt: u32, transport_try: u32, profile: &MockProfile) -> bool {
    profile.failure_rate > 0.0
        && draw(
            profile,
            "fault",
            &[text.as_bytes(), &attempt.to_le_bytes(), &transport_try.to_le_bytes()],
        ) < profile.failure_rate
}

fn is_garbage(text: &str, attempt: u32, profile: &MockProfile) -> bool {
    match profile.paraphrase_quality {
        ParaphraseQuality::Garbage => true,
        _ if profile.garbage_rate <= 0.0 => false,
        _ if profile.sticky_garbage => draw(profile, "garbage", &[text.as_bytes()]) < profile.garbage_rate,
        _ => draw(profile, "garbage", &[text.as_bytes(), &attempt.to_le_bytes()]) < profile.garbage_rate,
    }
}

fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn upper_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Splits a word into its lowercase alphanumeric core and surrounding
/// punctuation.
fn split_word(word: &str) -> (&str, &str, &str) {
    let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(word.len());
    let end = word.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
    (&word[..start], &word[start..end], &word[end..])
}

/// Deterministic completion for `(profile.seed, text, attempt)`.
pub fn mock_rewrite(text: &str, attempt: u32, profile: &MockProfile) -> String {
    let key = [text.as_bytes(), &attempt.to_le_bytes()];
    if is_garbage(text, attempt, profile) {
        let pick = (draw(profile, "garbage-text", &key) * GARBAGE.len() as f64) as usize;
        return GARBAGE[pick.min(GARBAGE.len() - 1)].to_string();
    }

    let words: Vec<&str> = text.split_whitespace().collect();
    let content_total = words
        .iter()
        .filter(|w| {
            let core = split_word(w).1.to_lowercase();
            !core.is_empty() && !is_stopword(&core)
        })
        .count();

    let mut out: Vec<String> = Vec::with_capacity(words.len() + 4);
    let mut swaps_left = match profile.paraphrase_quality {
        ParaphraseQuality::Faithful => content_total / 6,
        _ => usize::MAX,
    };
    for (i, w) in words.iter().enumerate() {
        let (pre, core, post) = split_word(w);
        let lower = core.to_lowercase();
        let idx = (i as u32).to_le_bytes();
        match profile.paraphrase_quality {
            ParaphraseQuality::Noisy if !core.is_empty() && !is_stopword(&lower) => {
                let roll = draw(profile, "noisy", &[key[0], key[1], &idx]);
                if roll < 0.35 {
                    continue;
                }
                if roll < 0.5 {
                    let pick = (draw(profile, "noise-word", &[key[0], key[1], &idx]) * NOISE_WORDS.len() as f64) as usize;
                    out.push(format!("{pre}{}{post}", NOISE_WORDS[pick.min(NOISE_WORDS.len() - 1)]));
                    continue;
                }
            }
            _ => {}
        }
        let synonym = SYNONYMS.iter().find(|(from, _)| *from == lower).map(|(_, to)| *to);
        if let (Some(to), true) = (synonym, swaps_left > 0) {
            if draw(profile, "swap", &[key[0], key[1], &idx]) < 0.5 {
                swaps_left -= 1;
                out.push(format!("{pre}{to}{post}"));
                continue;
            }
        }
        out.push(w.to_string());
    }

    let body = out.join(" ");
    let body = body.trim_end_matches('.').to_string();
    let style = (draw(profile, "style", &key) * 4.0) as usize;
    let sentence = match style {
        0 => format!("The image shows {}.", lower_first(&body)),
        1 => format!("In this picture, {}.", lower_first(&body)),
        2 => match body.split_once(", ") {
            Some((head, tail)) => format!("{}, {}.", upper_first(tail.trim_end_matches(',')), lower_first(head)),
            None => format!("Pictured is {}.", lower_first(&body)),
        },
        _ => format!("{}.", upper_first(&body)),
    };
    if draw(profile, "quote", &key) < 0.2 {
        format!("Rewritten caption: \"{sentence}\"")
    } else {
        sentence
    }
}

/// Lowercase alphanumeric tokens with stopwords removed.
fn content_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-').to_lowercase())
        .filter(|t| !t.is_empty() && !is_stopword(t))
        .collect()
}

/// Hashed bag-of-words embedding, L2-normalized, [`MOCK_EMBED_DIM`] wide.
pub fn mock_embed(text: &str) -> Vec<f64> {
    let d = domain("embed");
    let mut v = vec![0.0; MOCK_EMBED_DIM];
    let tokens = content_tokens(text);
    if tokens.is_empty() {
        let bucket = hash_u64(&[&d, text.as_bytes()]) as usize % MOCK_EMBED_DIM;
        v[bucket] = 1.0;
        return v;
    }
    for t in &tokens {
        v[hash_u64(&[&d, t.as_bytes()]) as usize % MOCK_EMBED_DIM] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// In-process chat backend driven by a [`MockProfile`].
#[derive(Debug)]
pub struct MockChatBackend {
    profile: MockProfile,
    calls: AtomicU64,
    log: Mutex<Vec<(String, u32, u32)>>,
}

impl MockChatBackend {
    pub fn new(profile: MockProfile) -> Self {
        MockChatBackend {
            profile,
            calls: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every `(text_id, attempt, transport_try)` seen, in arrival order.
    pub fn call_log(&self) -> Vec<(String, u32, u32)> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatBackend for MockChatBackend {
    fn complete(&self, _request: &ChatRequest, ctx: &CallContext<'_>) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((ctx.text_id.to_string(), ctx.attempt, ctx.transport_try));
        if let Some(d) = self.profile.delay(&[ctx.source_text.as_bytes(), &ctx.attempt.to_le_bytes()]) {
            thread::sleep(d);
        }
        if mock_transport_fault(ctx.source_text, ctx.attempt, ctx.transport_try, &self.profile) {
            return Err(TransportError::Status {
                code: 503,
                body: "injected fault".into(),
            });
        }
        Ok(mock_rewrite(ctx.source_text, ctx.attempt, &self.profile))
    }
}

#[derive(Debug, Default)]
pub struct MockEmbedBackend {
    calls: AtomicU64,
    batch_sizes: Mutex<Vec<usize>>,
}

impl MockEmbedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batch_sizes.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl EmbedBackend for MockEmbedBackend {
    fn embed_batch(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.batch_sizes
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(texts.len());
        Ok(texts.iter().map(|t| mock_embed(t)).collect())
    }
}

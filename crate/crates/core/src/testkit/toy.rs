//! Synthetic pedestrian-description corpora.

use serde_json::{json, Value};

use crate::corpus::{CaptionRecord, Split};
use crate::stable_hash::hash_u64;

const PEOPLE: &[&str] = &["man", "woman", "young man", "young woman", "girl", "boy", "person", "older man"];
const COLORS: &[&str] = &["red", "blue", "black", "white", "green", "grey", "yellow", "pink", "brown", "purple"];
const TOPS: &[&str] = &["shirt", "jacket", "t-shirt", "sweater", "hoodie", "coat", "blouse", "vest"];
const BOTTOMS: &[&str] = &["pants", "jeans", "shorts", "skirt", "leggings", "trousers"];
const SHOES: &[&str] = &["shoes", "sneakers", "boots", "sandals", "slippers"];
const CARRY: &[&str] = &["bag", "backpack", "umbrella", "phone", "handbag", "suitcase", "bottle"];
const ACTIONS: &[&str] = &["walking", "standing", "waiting", "sitting"];
const HAIR: &[&str] = &["short", "long", "curly", "straight", "dark", "blond"];

fn pick<'a>(options: &[&'a str], seed: u64, key: &str, slot: &str) -> &'a str {
    options[(hash_u64(&[b"llmda.toy", &seed.to_le_bytes(), key.as_bytes(), slot.as_bytes()]) % options.len() as u64) as usize]
}

fn caption(seed: u64, key: &str) -> String {
    let p = |options: &[&'static str], slot: &str| pick(options, seed, key, slot);
    let person = p(PEOPLE, "person");
    let article = if person.starts_with(['a', 'e', 'i', 'o', 'u']) { "An" } else { "A" };
    let variant = hash_u64(&[b"llmda.toy.variant", &seed.to_le_bytes(), key.as_bytes()]) % 3;
    match variant {
        0 => format!(
            "{article} {person} wearing a {} {} and {} {}, carrying a {} {} and {} {}.",
            p(COLORS, "c1"),
            p(TOPS, "top"),
            p(COLORS, "c2"),
            p(BOTTOMS, "bottom"),
            p(COLORS, "c3"),
            p(CARRY, "carry"),
            p(COLORS, "c4"),
            p(SHOES, "shoes"),
        ),
        1 => format!(
            "The {person} has {} hair and wears a {} {} with {} {}. The {person} is {} with a {} {}.",
            p(HAIR, "hair"),
            p(COLORS, "c1"),
            p(TOPS, "top"),
            p(COLORS, "c2"),
            p(BOTTOMS, "bottom"),
            p(ACTIONS, "action"),
            p(COLORS, "c3"),
            p(CARRY, "carry"),
        ),
        _ => format!(
            "{article} {person} in a {} {}, {} {} and {} {}, {} and holding a {} {}.",
            p(COLORS, "c1"),
            p(TOPS, "top"),
            p(COLORS, "c2"),
            p(BOTTOMS, "bottom"),
            p(COLORS, "c3"),
            p(SHOES, "shoes"),
            p(ACTIONS, "action"),
            p(COLORS, "c4"),
            p(CARRY, "carry"),
        ),
    }
}

/// CUHK-PEDES-shaped JSON: `images` entries with two captions each, two
/// images per identity, every tenth image in `test`.
pub fn toy_corpus_value(images: usize, seed: u64) -> Value {
    let items: Vec<Value> = (0..images)
        .map(|i| {
            let identity = i / 2 + 1;
            let path = format!("toy/{identity:04}_{}.jpg", i % 2);
            let split = if i % 10 == 9 { "test" } else { "train" };
            json!({
                "file_path": path,
                "id": identity,
                "split": split,
                "captions": [caption(seed, &format!("{path}#0")), caption(seed, &format!("{path}#1"))],
            })
        })
        .collect();
    Value::Array(items)
}

pub fn toy_corpus_json(images: usize, seed: u64) -> String {
    serde_json::to_string_pretty(&toy_corpus_value(images, seed)).expect("json")
}

/// `captions` train-split caption records with distinct texts.
pub fn toy_corpus(captions: usize, seed: u64) -> Vec<CaptionRecord> {
    let mut out = Vec::with_capacity(captions);
    let mut seen = std::collections::HashSet::new();
    let mut i = 0usize;
    while out.len() < captions {
        let identity = i / 4 + 1;
        let image = format!("toy/{identity:04}_{}.jpg", (i / 2) % 2);
        let text_id = format!("{image}#{}", i % 2);
        let text = caption(seed, &text_id);
        i += 1;
        if !seen.insert((image.clone(), text.clone())) {
            continue;
        }
        out.push(CaptionRecord::new(text_id, image.clone(), identity.to_string(), image, Split::Train, &text));
    }
    out
}

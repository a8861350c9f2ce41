//! Shipped prompt assets and single-pass placeholder substitution.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

macro_rules! assets {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../assets/", $path)))),*]
    };
}

/// Every prompt asset shipped with the crate, keyed by its path under `assets/`.
pub static ASSETS: &[(&str, &str)] = assets![
    "classifier/classifier.txt",
    "sampling/system_general.txt",
    "sampling/system_task_anchored.txt",
    "sampling/regeneration_general.txt",
    "sampling/regeneration_task_anchored.txt",
    "sampling/system/A.txt",
    "sampling/system/B.txt",
    "sampling/system/C.txt",
    "sampling/system/D.txt",
    "sampling/system/E.txt",
    "sampling/system/F.txt",
    "sampling/system/G.txt",
    "sampling/system/H.txt",
    "sampling/regeneration/A.txt",
    "sampling/regeneration/B.txt",
    "sampling/regeneration/C.txt",
    "sampling/regeneration/D.txt",
    "sampling/regeneration/E.txt",
    "sampling/regeneration/F.txt",
    "sampling/regeneration/G.txt",
    "sampling/regeneration/H.txt",
    "judge/functional_equivalence.txt",
    "judge/definition/A.txt",
    "judge/definition/B.txt",
    "judge/definition/C.txt",
    "judge/definition/D.txt",
    "judge/definition/E.txt",
    "judge/definition/F.txt",
    "judge/definition/G.txt",
    "judge/definition/H.txt",
    "judge/options/A.txt",
    "judge/options/B.txt",
    "judge/options/C.txt",
    "judge/options/D.txt",
    "judge/options/E.txt",
    "judge/options/F.txt",
    "judge/options/G.txt",
    "judge/options/H.txt",
    "quality/checklist_creation.txt",
    "quality/checklist_grading.txt",
    "quality/accuracy.txt",
];

/// Asset text with the file's trailing newline removed.
pub fn asset(path: &str) -> Option<&'static str> {
    ASSETS
        .iter()
        .find(|(p, _)| *p == path)
        .map(|(_, text)| text.strip_suffix('\n').unwrap_or(text))
}

pub(crate) fn required_asset(path: &str) -> Result<&'static str> {
    asset(path).ok_or_else(|| Error::Config(format!("missing prompt asset {path}")))
}

/// SHA-256 of every asset's shipped bytes.
pub fn asset_digests() -> BTreeMap<String, String> {
    ASSETS
        .iter()
        .map(|(path, text)| (path.to_string(), hex::encode(Sha256::digest(text.as_bytes()))))
        .collect()
}

/// Placeholder names appearing in `template`, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    segments(template)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Slot(name) => Some(name),
            Segment::Text(_) => None,
        })
        .collect()
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_slot_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == ' ')
}

fn segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    let mut pending = 0usize;
    while let Some(open) = rest[pending..].find('{').map(|i| i + pending) {
        match rest[open + 1..].find('}') {
            Some(len) if is_slot_name(&rest[open + 1..open + 1 + len]) => {
                if open > 0 {
                    out.push(Segment::Text(&rest[..open]));
                }
                out.push(Segment::Slot(&rest[open + 1..open + 1 + len]));
                rest = &rest[open + len + 2..];
                pending = 0;
            }
            _ => pending = open + 1,
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    out
}

/// Substitutes `{name}` slots in one pass; substituted values are never
/// rescanned, so braces inside values survive literally.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    for segment in segments(template) {
        match segment {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => {
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Config(format!("no value for placeholder {{{name}}}")))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

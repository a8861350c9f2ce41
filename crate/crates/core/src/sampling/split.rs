use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // "# Response 3:", "## Response 3:", "**Response 3:**", "# **Response 3**:",
        // "**# Response 3:**". Either a heading hash or bold markup must be present.
        Regex::new(
            r"(?i)(?:#{1,6}[ \t]*(?:\*\*|__)?|(?:\*\*|__)[ \t]*(?:#{1,6}[ \t]*)?)response[ \t]+(\d{1,3})[ \t]*(?:\*\*|__)?[ \t]*:[ \t]*(?:\*\*|__)?",
        )
        .expect("marker regex compiles")
    })
}

/// Renders responses in the delimiter format the system-prompt templates ask for.
pub fn join_numbered_responses<S: AsRef<str>>(responses: &[S]) -> String {
    responses
        .iter()
        .enumerate()
        .map(|(i, r)| format!("# Response {}:\n{}", i + 1, r.as_ref()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Splits one generation into `k` responses on `# Response X:` markers.
///
/// Markers must appear as 1, 2, ..., k. Once k markers are accepted, any
/// later marker-like text stays inside the k-th response. Text before the
/// first marker is dropped. Segments are trimmed at both ends only.
pub fn split_numbered_responses(raw: &str, k: usize) -> Result<Vec<String>> {
    if raw.trim().is_empty() {
        return Err(Error::precondition("generation is empty"));
    }
    if k == 0 {
        return Err(Error::precondition("k must be positive"));
    }
    let malformed = |reason: String, found: Vec<usize>| Error::MalformedGeneration {
        reason,
        found,
        raw: raw.to_string(),
    };

    let matches: Vec<(usize, usize, usize)> = marker()
        .captures_iter(raw)
        .filter_map(|c| {
            let m = c.get(0)?;
            let idx = c[1].parse().ok()?;
            Some((m.start(), m.end(), idx))
        })
        .collect();

    let mut accepted: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut found = Vec::new();
    for &(start, end, idx) in &matches {
        if accepted.len() == k {
            break;
        }
        found.push(idx);
        let expected = accepted.len() + 1;
        if idx == expected {
            accepted.push((start, end));
        } else if idx < expected {
            return Err(malformed(format!("duplicate response index {idx}"), found));
        } else {
            return Err(malformed(format!("response index {expected} missing"), found));
        }
    }
    if accepted.len() < k {
        return Err(malformed(
            format!("response index {} missing", accepted.len() + 1),
            found,
        ));
    }

    let mut out = Vec::with_capacity(k);
    for (i, &(_, body_start)) in accepted.iter().enumerate() {
        let body_end = accepted.get(i + 1).map_or(raw.len(), |next| next.0);
        let text = raw[body_start..body_end].trim();
        if text.is_empty() {
            return Err(malformed(format!("response {} is empty", i + 1), found));
        }
        out.push(text.to_string());
    }
    Ok(out)
}

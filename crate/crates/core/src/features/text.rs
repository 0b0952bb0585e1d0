use crate::error::{Error, Result};

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StringFeatures {
    /// Levenshtein distance divided by the longer length, in `[0, 1]`.
    pub edit: f64,
    /// equal, mention in title, title in mention, title starts with mention,
    /// title ends with mention, mention starts with title.
    pub flags: [f64; 6],
}

pub fn string_features(surface: &str, title: &str) -> Result<StringFeatures> {
    if surface.is_empty() || title.is_empty() {
        return Err(Error::Degenerate("string features need non-empty strings".into()));
    }
    let longest = surface.chars().count().max(title.chars().count());
    let edit = levenshtein(surface, title) as f64 / longest as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(StringFeatures {
        edit,
        flags: [
            flag(surface == title),
            flag(title.contains(surface)),
            flag(surface.contains(title)),
            flag(title.starts_with(surface)),
            flag(title.ends_with(surface)),
            flag(surface.starts_with(title)),
        ],
    })
}

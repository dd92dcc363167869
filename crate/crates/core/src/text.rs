//! Text normalization shared by answer matching and label synthesis.

use alloc::string::String;

/// Lower-cases and collapses every whitespace run to a single space, with
/// leading and trailing whitespace removed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

/// Whether `needle` occurs in `haystack` after normalizing both.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    !needle.is_empty() && normalize(haystack).contains(&needle)
}

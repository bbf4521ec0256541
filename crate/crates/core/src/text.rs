//! Text normalization and tokenization shared by the corpus and vocabulary code.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalize a string.
pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// A whitespace token with leading/trailing punctuation removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text. May be empty when the raw token was all punctuation.
    pub norm: String,
    /// Byte range of the stripped token within the source text.
    pub start: usize,
    pub end: usize,
}

fn is_strippable(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Split on Unicode whitespace and strip surrounding punctuation. No stemming.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut offset = 0;
    for raw in text.split(char::is_whitespace) {
        let raw_start = offset;
        offset += raw.len() + next_ws_len(text, raw_start + raw.len());
        if raw.is_empty() {
            continue;
        }
        let trimmed_front = raw.trim_start_matches(is_strippable);
        let lead = raw.len() - trimmed_front.len();
        let core = trimmed_front.trim_end_matches(is_strippable);
        let start = raw_start + lead;
        tokens.push(Token {
            norm: core.to_lowercase(),
            start,
            end: start + core.len(),
        });
    }
    tokens
}

fn next_ws_len(text: &str, at: usize) -> usize {
    text[at..].chars().next().map_or(0, char::len_utf8)
}

/// Uppercase the first character, leaving the rest untouched.
pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation_and_keeps_offsets() {
        let text = "Two dogs, (running)!";
        let toks = tokenize(text);
        let norms: Vec<_> = toks.iter().map(|t| t.norm.as_str()).collect();
        assert_eq!(norms, ["two", "dogs", "running"]);
        assert_eq!(&text[toks[1].start..toks[1].end], "dogs");
        assert_eq!(&text[toks[2].start..toks[2].end], "running");
    }

    #[test]
    fn tokenize_handles_multiple_spaces_and_unicode_whitespace() {
        let text = "a\u{00a0}b  c\tÜber";
        let norms: Vec<_> = tokenize(text).into_iter().map(|t| t.norm).collect();
        assert_eq!(norms, ["a", "b", "c", "über"]);
    }

    #[test]
    fn all_punctuation_token_is_empty() {
        let toks = tokenize("a - b");
        assert_eq!(toks.len(), 3);
        assert!(toks[1].norm.is_empty());
    }

    #[test]
    fn nfc_composes_umlauts() {
        assert_eq!(nfc("u\u{0308}ber"), "über");
    }
}

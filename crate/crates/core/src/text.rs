//! Tokenization shared by the lexicon scorer and the hashing embedder.

/// Splits `text` on every non-alphanumeric character and lowercases each
/// token. Empty tokens are skipped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

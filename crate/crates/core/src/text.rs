//! Tokenization shared by the metrics, the agreement proxy and the fallback
//! embedder.

/// Case-folds and splits on anything that is not alphanumeric.
///
/// Whitespace and punctuation are both separators and empty tokens are
/// dropped, so `"Doctor's fever-free!"` becomes `["doctor", "s", "fever", "free"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Case-insensitive substring test used by the injection check.
pub fn contains_folded(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_folds_case() {
        assert_eq!(
            tokenize("Doctor's  fever-free!"),
            vec!["doctor", "s", "fever", "free"]
        );
        assert!(tokenize(" ,.;! ").is_empty());
    }

    #[test]
    fn folded_containment() {
        assert!(contains_folded("Take Amoxicillin daily", "amoxicillin"));
        assert!(!contains_folded("Take rest", "amoxicillin"));
    }
}

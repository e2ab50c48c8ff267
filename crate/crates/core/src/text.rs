//! Label normalization and tokenization shared by linking and the question
//! encoder.

use unicode_normalization::UnicodeNormalization;

/// Lowercase, NFC, punctuation to spaces, whitespace collapsed and trimmed.
pub fn normalize_label(s: &str) -> String {
    let mapped: String = s
        .nfc()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(s: &str) -> Vec<String> {
    normalize_label(s)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_label("New  York "), "new york");
        assert_eq!(normalize_label("I.B.M."), "i b m");
        assert_eq!(normalize_label(""), "");
        assert_eq!(normalize_label("Amazon.com"), "amazon com");
        // decomposed e + combining acute composes under NFC
        assert_eq!(normalize_label("Caf\u{0065}\u{0301}"), "caf\u{e9}");
        assert_eq!(tokenize("Who wrote 'Hamlet'?"), ["who", "wrote", "hamlet"]);
        assert!(tokenize(" ?! ").is_empty());
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = normalize_label(&s);
            prop_assert_eq!(normalize_label(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
            prop_assert!(!once.contains("  "));
        }
    }
}

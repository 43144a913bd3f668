//! Tokenized item text.

/// An ordered list of lowercase tokens. Empty only for items that carry
/// no text at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenText {
    pub tokens: Vec<String>,
}

impl TokenText {
    /// Lowercase and split on whitespace and punctuation. Returns `None`
    /// when nothing tokenizable remains, so callers can treat the item as
    /// text-absent.
    pub fn tokenize(raw: &str) -> Option<TokenText> {
        let tokens: Vec<String> = raw
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            None
        } else {
            Some(TokenText { tokens })
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        let t = TokenText::tokenize("Red Phone Case").unwrap();
        assert_eq!(t.tokens, vec!["red", "phone", "case"]);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        let t = TokenText::tokenize("USB-C cable, 2m!").unwrap();
        assert_eq!(t.tokens, vec!["usb", "c", "cable", "2m"]);
    }

    #[test]
    fn tokenizer_returns_none_for_empty_text() {
        assert!(TokenText::tokenize("").is_none());
        assert!(TokenText::tokenize(" ... !!! ").is_none());
    }
}

//! Tokenization shared by the mock backends and the keyword matcher.
//!
//! A token is a maximal run of word characters after casefolding. Word
//! characters are Unicode alphanumerics plus the whole Bengali block and the
//! general combining marks, so Bengali vowel signs and the virama stay
//! inside their word.

use std::ops::Range;

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
        || ('\u{0980}'..='\u{09FF}').contains(&c)
        || ('\u{0300}'..='\u{036F}').contains(&c)
        || c == '\u{200C}'
        || c == '\u{200D}'
}

pub fn casefold(s: &str) -> String {
    s.to_lowercase()
}

/// Casefolded tokens of `s`.
pub fn tokens(s: &str) -> Vec<String> {
    token_spans(s).into_iter().map(|r| casefold(&s[r])).collect()
}

/// Byte ranges of the word-character runs in `s` (no casefolding).
pub fn token_spans(s: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                spans.push(st..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        spans.push(st..s.len());
    }
    spans
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_token_seq(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for",
    "from", "how", "i", "in", "is", "it", "its", "my", "of", "on", "or", "should", "that",
    "the", "their", "this", "to", "what", "when", "which", "who", "why", "will", "with",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Casefolded tokens of `s` minus English stopwords.
pub fn content_tokens(s: &str) -> Vec<String> {
    tokens(s).into_iter().filter(|t| !is_stopword(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bengali_words_stay_whole() {
        assert_eq!(tokens("ধানের ব্লাস্ট, রোগ!"), vec!["ধানের", "ব্লাস্ট", "রোগ"]);
    }

    #[test]
    fn latin_casefold_and_punctuation() {
        assert_eq!(tokens("Rice-Blast (P. oryzae)"), vec!["rice", "blast", "p", "oryzae"]);
        assert!(tokens("  ..  ").is_empty());
    }

    #[test]
    fn token_sequence_match() {
        let hay = tokens("symptoms of rice blast");
        assert!(contains_token_seq(&hay, &tokens("Rice Blast")));
        assert!(!contains_token_seq(&hay, &tokens("blast rice")));
        assert!(!contains_token_seq(&tokens("blasted"), &tokens("blast")));
    }
}

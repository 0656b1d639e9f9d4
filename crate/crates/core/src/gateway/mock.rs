//! Deterministic in-process backends.
//!
//! * [`mock_embed`]: signed feature hashing of casefolded tokens.
//! * [`MockTranslator`]: longest-match-first phrase lookup in a bilingual lexicon.
//! * [`MockGenerator`]: extractive answers built only from context sentences.

use std::collections::{HashMap, HashSet};

use async_trait::async_trait;
use serde::Deserialize;

use super::{require_text, Direction, Embedder, EmbeddingVector, GatewayError, GenerationRequest, Generator, Translation, Translator};
use crate::scalar::Scalar;
use crate::text;
use crate::{Embedding, UNAVAILABLE_MARKER};

pub const MIN_MOCK_DIM: usize = 8;
pub const DEFAULT_MOCK_DIM: usize = 64;
pub const DEFAULT_MOCK_SEED: u64 = 42;

/// Line label opening the context block in a grounded prompt.
pub const CONTEXT_LABEL: &str = "Context:";
/// Line label introducing the question in a grounded prompt.
pub const QUESTION_LABEL: &str = "Question:";
/// Optional line label closing the question.
pub const ANSWER_LABEL: &str = "Answer:";

/// Seeded 64-bit token hash: FNV-1a over the UTF-8 bytes with a
/// seed-dependent offset basis, followed by the splitmix64 finalizer.
pub fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Bucket and sign a token lands on.
pub fn token_slot(token: &str, dim: usize, seed: u64) -> (usize, bool) {
    let h = token_hash(token, seed);
    ((h % dim as u64) as usize, h >> 63 == 1)
}

/// Hashing embedder: each token adds ±1 at its hashed bucket, then the
/// accumulator is L2-normalized.
pub fn mock_embed<F: Scalar>(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector<F>, GatewayError> {
    if dim < MIN_MOCK_DIM {
        return Err(GatewayError::Input(format!("mock embedding dim {dim} < {MIN_MOCK_DIM}")));
    }
    let mut acc = vec![F::zero(); dim];
    for token in text::tokens(text) {
        let (i, negative) = token_slot(&token, dim, seed);
        acc[i] = if negative { acc[i] - F::one() } else { acc[i] + F::one() };
    }
    EmbeddingVector::normalized(acc)
        .map_err(|_| GatewayError::Input(format!("text {text:?} has no tokens to embed")))
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, GatewayError> {
        if dim < MIN_MOCK_DIM {
            return Err(GatewayError::Input(format!("mock embedding dim {dim} < {MIN_MOCK_DIM}")));
        }
        Ok(Self { dim, seed })
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_MOCK_DIM,
            seed: DEFAULT_MOCK_SEED,
        }
    }
}

#[async_trait]
impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<Embedding, GatewayError> {
        require_text(text, "embedding")?;
        mock_embed(text, self.dim, self.seed)
    }
}

#[derive(Debug, Deserialize)]
struct LexiconEntry {
    bn: String,
    en: String,
}

/// Bijective Bengali/English phrase table.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    bn_to_en: PhraseTable,
    en_to_bn: PhraseTable,
}

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.json");

impl Lexicon {
    /// Builds a lexicon, rejecting phrases that map ambiguously in either direction.
    pub fn new<I, S>(pairs: I) -> Result<Self, GatewayError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut lex = Self::default();
        for (bn, en) in pairs {
            let (bn, en) = (bn.into(), en.into());
            lex.bn_to_en.insert(&bn, &en)?;
            lex.en_to_bn.insert(&en, &bn)?;
        }
        Ok(lex)
    }

    /// Parses a JSON array of `{"bn": ..., "en": ...}` objects.
    pub fn from_json(raw: &str) -> Result<Self, GatewayError> {
        let entries: Vec<LexiconEntry> =
            serde_json::from_str(raw).map_err(|e| GatewayError::Input(format!("lexicon: {e}")))?;
        Self::new(entries.into_iter().map(|e| (e.bn, e.en)))
    }

    /// The test lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.bn_to_en.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(bn, en)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.bn_to_en.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn table(&self, direction: Direction) -> &PhraseTable {
        match direction {
            Direction::BnToEn => &self.bn_to_en,
            Direction::EnToBn => &self.en_to_bn,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct PhraseTable {
    entries: Vec<(String, String)>,
    by_tokens: HashMap<Vec<String>, usize>,
    longest: usize,
}

impl PhraseTable {
    fn insert(&mut self, key: &str, value: &str) -> Result<(), GatewayError> {
        let tokens = text::tokens(key);
        if tokens.is_empty() || value.trim().is_empty() {
            return Err(GatewayError::Input(format!("lexicon entry {key:?} -> {value:?} is empty")));
        }
        if self.by_tokens.contains_key(&tokens) {
            return Err(GatewayError::Input(format!("lexicon phrase {key:?} is listed twice")));
        }
        self.longest = self.longest.max(tokens.len());
        self.by_tokens.insert(tokens, self.entries.len());
        self.entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    /// Replaces the longest known phrase starting at each token; everything
    /// between tokens is copied verbatim.
    fn apply(&self, input: &str) -> Translation {
        let spans = text::token_spans(input);
        let folded: Vec<String> = spans.iter().map(|r| text::casefold(&input[r.clone()])).collect();
        let mut out = String::with_capacity(input.len());
        let mut passthrough = false;
        let mut cursor = 0;
        let mut i = 0;
        while i < spans.len() {
            let max_n = self.longest.min(spans.len() - i);
            let hit = (1..=max_n)
                .rev()
                .find_map(|n| self.by_tokens.get(&folded[i..i + n]).map(|&idx| (n, idx)));
            out.push_str(&input[cursor..spans[i].start]);
            match hit {
                Some((n, idx)) => {
                    out.push_str(&self.entries[idx].1);
                    cursor = spans[i + n - 1].end;
                    i += n;
                }
                None => {
                    out.push_str(&input[spans[i].clone()]);
                    passthrough = true;
                    cursor = spans[i].end;
                    i += 1;
                }
            }
        }
        out.push_str(&input[cursor..]);
        Translation { text: out, passthrough }
    }
}

/// Dictionary translator; unknown words pass through unchanged and set
/// [`Translation::passthrough`].
#[derive(Debug, Clone)]
pub struct MockTranslator {
    lexicon: Lexicon,
}

impl MockTranslator {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn translate_sync(&self, text: &str, direction: Direction) -> Translation {
        self.lexicon.table(direction).apply(text)
    }
}

#[async_trait]
impl Translator for MockTranslator {
    async fn translate(&self, text: &str, direction: Direction) -> Result<Translation, GatewayError> {
        require_text(text, "translation")?;
        Ok(self.translate_sync(text, direction))
    }
}

/// Extractive generator.
///
/// Reads the lines between a `Context:` line and the last `Question:` line
/// as context (stripping leading `[...]` source tags), and the text after
/// `Question:` (up to an optional `Answer:` line) as the question. Returns
/// up to `max_sentences` context sentences sharing the most content tokens
/// with the question, verbatim, one per line, in context order. Returns
/// [`UNAVAILABLE_MARKER`] when no sentence shares a content token.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub max_sentences: usize,
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self { max_sentences: 3 }
    }
}

impl MockGenerator {
    pub fn answer(&self, prompt: &str) -> String {
        let (context, question) = split_prompt(prompt);
        let wanted: HashSet<String> = text::content_tokens(&question).into_iter().collect();

        let mut seen = HashSet::new();
        let sentences: Vec<&str> = context
            .iter()
            .flat_map(|line| split_sentences(line))
            .filter(|s| seen.insert(*s))
            .collect();

        let mut scored: Vec<(usize, usize)> = sentences
            .iter()
            .enumerate()
            .filter_map(|(pos, s)| {
                let own: HashSet<String> = text::tokens(s).into_iter().collect();
                let overlap = wanted.intersection(&own).count();
                (overlap > 0).then_some((overlap, pos))
            })
            .collect();
        if scored.is_empty() {
            return UNAVAILABLE_MARKER.to_string();
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(self.max_sentences.max(1));
        scored.sort_by_key(|&(_, pos)| pos);
        scored
            .into_iter()
            .map(|(_, pos)| sentences[pos])
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[async_trait]
impl Generator for MockGenerator {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        require_text(&request.prompt, "generation")?;
        Ok(self.answer(&request.prompt))
    }
}

fn split_prompt(prompt: &str) -> (Vec<&str>, String) {
    let lines: Vec<&str> = prompt.lines().collect();
    let q_at = lines.iter().rposition(|l| l.trim_start().starts_with(QUESTION_LABEL));
    let ctx_at = lines[..q_at.unwrap_or(lines.len())]
        .iter()
        .position(|l| l.trim() == CONTEXT_LABEL);

    let context = match ctx_at {
        Some(c) => lines[c + 1..q_at.unwrap_or(lines.len())]
            .iter()
            .map(|l| strip_source_tag(l))
            .collect(),
        None => Vec::new(),
    };
    let question = match q_at {
        Some(q) => {
            let mut parts = vec![lines[q].trim_start()[QUESTION_LABEL.len()..].trim()];
            parts.extend(
                lines[q + 1..]
                    .iter()
                    .take_while(|l| !l.trim_start().starts_with(ANSWER_LABEL))
                    .map(|l| l.trim()),
            );
            parts.join(" ")
        }
        None => String::new(),
    };
    (context, question)
}

fn strip_source_tag(line: &str) -> &str {
    if line.starts_with('[') {
        if let Some(end) = line.find("] ") {
            return &line[end + 2..];
        }
    }
    line
}

/// Splits on `.`, `!`, `?` followed by whitespace or end of line, keeping the
/// punctuation. Every returned sentence is a trimmed substring of `line`.
pub fn split_sentences(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_break = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
            if at_break {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &line[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &line[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

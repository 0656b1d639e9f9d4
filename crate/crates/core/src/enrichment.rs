//! Colloquial-to-scientific keyword injection.
//!
//! A rule matches when one of its variants occurs, as a casefolded run of
//! whole tokens, in either the original Bengali query or its English
//! translation. Matched rules append their scientific terms to the English
//! query, skipping terms the query already contains.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

const BUNDLED_RULES: &str = include_str!("../data/rules.json");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rulebook {path}: {message}")]
    Read { path: String, message: String },
    #[error("rule #{index} ({rule_id}): {message}")]
    Invalid {
        index: usize,
        rule_id: String,
        message: String,
    },
    #[error("duplicate rule_id {rule_id} at positions {first} and {second}")]
    Duplicate {
        rule_id: String,
        first: usize,
        second: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub rule_id: String,
    pub variants: Vec<String>,
    pub inject: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: KeywordRule,
    variants: Vec<Vec<String>>,
    inject: Vec<Vec<String>>,
}

/// Validated, ordered set of rules.
#[derive(Debug, Clone, Default)]
pub struct Rulebook {
    rules: Vec<CompiledRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub enriched_query: String,
    pub matched_rules: Vec<String>,
    pub injected_terms: Vec<String>,
}

impl Rulebook {
    pub fn new(rules: Vec<KeywordRule>) -> Result<Self, RuleError> {
        let mut seen = std::collections::HashMap::new();
        let mut compiled = Vec::with_capacity(rules.len());
        for (index, rule) in rules.into_iter().enumerate() {
            if let Some(&first) = seen.get(&rule.rule_id) {
                return Err(RuleError::Duplicate {
                    rule_id: rule.rule_id,
                    first,
                    second: index,
                });
            }
            let invalid = |message: &str| RuleError::Invalid {
                index,
                rule_id: rule.rule_id.clone(),
                message: message.to_string(),
            };
            if rule.rule_id.trim().is_empty() {
                return Err(invalid("empty rule_id"));
            }
            if rule.variants.is_empty() {
                return Err(invalid("no variants"));
            }
            if rule.inject.is_empty() {
                return Err(invalid("no inject terms"));
            }
            let variants = compile_terms(&rule.variants).ok_or_else(|| invalid("blank variant"))?;
            let inject = compile_terms(&rule.inject).ok_or_else(|| invalid("blank inject term"))?;
            seen.insert(rule.rule_id.clone(), index);
            compiled.push(CompiledRule {
                rule,
                variants,
                inject,
            });
        }
        Ok(Self { rules: compiled })
    }

    pub fn from_json(raw: &str) -> Result<Self, RuleError> {
        let rules: Vec<KeywordRule> = serde_json::from_str(raw).map_err(|e| RuleError::Read {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        Self::new(rules)
    }

    /// Illustrative rice pest and fertilizer rulebook shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_RULES).expect("bundled rulebook is valid")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = &KeywordRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    /// Copy of this rulebook without the rule `rule_id`.
    pub fn without(&self, rule_id: &str) -> Self {
        Self {
            rules: self.rules.iter().filter(|c| c.rule.rule_id != rule_id).cloned().collect(),
        }
    }
}

/// Reads and validates a rulebook file (JSON array of rules).
pub fn load_rules(path: &Path) -> Result<Rulebook, RuleError> {
    let read_err = |message: String| RuleError::Read {
        path: path.display().to_string(),
        message,
    };
    let raw = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
    let rules: Vec<KeywordRule> = serde_json::from_str(&raw).map_err(|e| read_err(e.to_string()))?;
    Rulebook::new(rules)
}

fn compile_terms(terms: &[String]) -> Option<Vec<Vec<String>>> {
    terms
        .iter()
        .map(|t| {
            let toks = text::tokens(t);
            (!t.trim().is_empty() && !toks.is_empty()).then_some(toks)
        })
        .collect()
}

/// Appends the inject terms of every matching rule to `query_en`.
pub fn enrich(query_bn: &str, query_en: &str, rulebook: &Rulebook) -> EnrichmentResult {
    let bn_tokens = text::tokens(query_bn);
    let en_tokens = text::tokens(query_en);

    let mut matched_rules = Vec::new();
    let mut injected_terms: Vec<String> = Vec::new();
    let mut injected_folded: HashSet<String> = HashSet::new();

    for c in &rulebook.rules {
        let hit = c
            .variants
            .iter()
            .any(|v| text::contains_token_seq(&bn_tokens, v) || text::contains_token_seq(&en_tokens, v));
        if !hit {
            continue;
        }
        matched_rules.push(c.rule.rule_id.clone());
        for (term, term_tokens) in c.rule.inject.iter().zip(&c.inject) {
            if text::contains_token_seq(&en_tokens, term_tokens) {
                continue;
            }
            if injected_folded.insert(term_tokens.join(" ")) {
                injected_terms.push(term.trim().to_string());
            }
        }
    }

    let enriched_query = if injected_terms.is_empty() {
        query_en.to_string()
    } else {
        format!("{query_en} {}", injected_terms.join(" "))
    };
    EnrichmentResult {
        enriched_query,
        matched_rules,
        injected_terms,
    }
}

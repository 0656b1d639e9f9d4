use krishi::enrichment::{enrich, load_rules, KeywordRule, RuleError, Rulebook};
use krishi::text;
use proptest::prelude::*;

#[test]
fn rules_load_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rules.json");
    std::fs::write(
        &path,
        r#"[{"rule_id": "magra", "variants": ["মাজরা"], "inject": ["stem borer"], "note": "Bengali name"},
            {"rule_id": "urea", "variants": ["ইউরিয়া", "urea"], "inject": ["nitrogen"]}]"#,
    )
    .unwrap();
    let book = load_rules(&path).unwrap();
    assert_eq!(book.len(), 2);
    let r = enrich("মাজরা আর ইউরিয়া", "majra and urea", &book);
    assert_eq!(r.matched_rules, ["magra", "urea"]);
    assert_eq!(r.enriched_query, "majra and urea stem borer nitrogen");
}

#[test]
fn file_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "[{").unwrap();
    let err = load_rules(&path).unwrap_err();
    assert!(matches!(err, RuleError::Read { .. }));
    assert!(err.to_string().contains("broken.json"));
    assert!(matches!(
        load_rules(&dir.path().join("missing.json")),
        Err(RuleError::Read { .. })
    ));
}

#[test]
fn colloquial_neck_blast_maps_to_scientific_terms() {
    let r = enrich("ধানের গলা পচা হলে কী করব?", "paddy throat rot what to do?", &Rulebook::bundled());
    assert!(r.matched_rules.contains(&"neck_blast_colloquial".to_string()));
    assert!(r.injected_terms.iter().any(|t| t == "Pyricularia oryzae"));
}

fn bundled_variant() -> impl Strategy<Value = String> {
    let variants: Vec<String> = Rulebook::bundled().rules().flat_map(|r| r.variants.clone()).collect();
    prop::sample::select(variants)
}

fn query() -> impl Strategy<Value = (String, String)> {
    (
        prop::collection::vec(prop_oneof![bundled_variant(), "[a-zধান ]{0,12}".prop_map(String::from)], 0..4),
        prop::collection::vec(prop_oneof![bundled_variant(), "[a-z ]{0,12}".prop_map(String::from)], 0..4),
    )
        .prop_map(|(bn, en)| (bn.join(" "), en.join(" ")))
}

proptest! {
    #[test]
    fn enrichment_is_idempotent((bn, en) in query()) {
        let book = Rulebook::bundled();
        let once = enrich(&bn, &en, &book);
        let twice = enrich(&bn, &once.enriched_query, &book);
        prop_assert_eq!(&twice.enriched_query, &once.enriched_query);
        prop_assert!(twice.injected_terms.is_empty());
    }

    #[test]
    fn original_query_is_a_prefix((bn, en) in query()) {
        let r = enrich(&bn, &en, &Rulebook::bundled());
        prop_assert!(r.enriched_query.starts_with(&en));
        for term in &r.injected_terms {
            prop_assert!(text::contains_token_seq(&text::tokens(&r.enriched_query), &text::tokens(term)));
        }
    }

    #[test]
    fn adding_rules_never_removes_matches((bn, en) in query(), drop in 0usize..22) {
        let full = Rulebook::bundled();
        let id = full.rules().nth(drop % full.len()).unwrap().rule_id.clone();
        let fewer = full.without(&id);
        let big = enrich(&bn, &en, &full);
        let small = enrich(&bn, &en, &fewer);
        for m in &small.matched_rules {
            prop_assert!(big.matched_rules.contains(m));
        }
        let big_tokens = text::tokens(&big.enriched_query);
        for t in &small.injected_terms {
            prop_assert!(text::contains_token_seq(&big_tokens, &text::tokens(t)));
        }
    }

    #[test]
    fn injected_terms_are_unique_casefolded((bn, en) in query()) {
        let r = enrich(&bn, &en, &Rulebook::bundled());
        let mut seen = std::collections::HashSet::new();
        for t in &r.injected_terms {
            prop_assert!(seen.insert(text::tokens(t).join(" ")));
        }
    }
}

#[test]
fn rule_serde_round_trip() {
    let rule = KeywordRule {
        rule_id: "x".into(),
        variants: vec!["a".into()],
        inject: vec!["b".into()],
        note: None,
    };
    let json = serde_json::to_string(&rule).unwrap();
    assert!(!json.contains("note"));
    assert_eq!(serde_json::from_str::<KeywordRule>(&json).unwrap(), rule);
}

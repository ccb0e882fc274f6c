use fineforge_backends::roles::{
    describe_document, embed_texts, genericize_query, instantiate, judge, DimensionGuard,
};
use fineforge_backends::{
    BackendError, InstantiationStatus, MockBackend, MockOptions, RoleError, ScriptedBackend,
};
use fineforge_core::{expand_excerpts, parse_excerpt_markup, InstructionTemplate, SourceDocument};

fn doc() -> SourceDocument {
    SourceDocument::new(
        "d1",
        "Volcanoes form where magma rises through the crust. Lava flows can travel for many \
         kilometres before cooling. Ash clouds disrupt air travel across whole continents. \
         Scientists monitor gas emissions to forecast eruptions. Some volcanoes have been \
         dormant for thousands of years. Others erupt almost every year with little warning.",
    )
}

fn tpl(id: &str, text: &str) -> InstructionTemplate {
    InstructionTemplate::new(id, "test", text, "a document about a topic").unwrap()
}

#[test]
fn genericize_echo_rule() {
    let m = MockBackend::default();
    let g = genericize_query(&m, "summarize the history of Rome").unwrap();
    assert_eq!(g.template_text, "summarize <fi>topic</fi>");
    assert!(!g.compatible_doc_description.is_empty());
    assert!(matches!(genericize_query(&m, "  "), Err(RoleError::Precondition(_))));
}

#[test]
fn genericize_rejects_unbalanced_template() {
    let s = ScriptedBackend::new([Ok(r#"{"template":"explain <fi>x","description":"d"}"#.into())]);
    assert!(matches!(genericize_query(&s, "explain x"), Err(RoleError::MalformedOutput(_))));
}

#[test]
fn describe_first_sentence_and_empty_reply() {
    let m = MockBackend::default();
    assert_eq!(
        describe_document(&m, &doc(), 10_000).unwrap(),
        "Volcanoes form where magma rises through the crust."
    );
    let s = ScriptedBackend::new([Ok("   ".into())]);
    assert!(matches!(describe_document(&s, &doc(), 100), Err(RoleError::MalformedOutput(_))));
}

#[test]
fn describe_truncates_input() {
    struct Echo;
    impl fineforge_backends::ModelBackend for Echo {
        fn describe(&self, d: &str) -> Result<String, BackendError> {
            Ok(d.to_string())
        }
    }
    let long = SourceDocument::new("x", "\u{e9}".repeat(500));
    let got = describe_document(&Echo, &long, 123).unwrap();
    assert_eq!(got.chars().count(), 123);
}

#[test]
fn embeddings_arity_determinism_and_drift() {
    let m = MockBackend::default();
    let guard = DimensionGuard::new();
    let texts: Vec<String> = ["a b c", "lava flows", "a b c"].map(String::from).to_vec();
    let v = embed_texts(&m, &texts, &guard).unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|x| x.len() == 64));
    assert_eq!(v[0], v[2]);
    assert!(matches!(embed_texts(&m, &[], &guard), Err(RoleError::Precondition(_))));

    let other = MockBackend::new(MockOptions { dim: 32, ..MockOptions::default() });
    let err = embed_texts(&other, &texts, &guard).unwrap_err();
    assert_eq!(err, RoleError::DimensionDrift { expected: 64, got: 32 });
    assert!(err.is_fatal());
}

#[test]
fn instantiation_expands_with_full_ratio() {
    let m = MockBackend::new(MockOptions { incompatible_rate: 0.0, ..MockOptions::default() });
    let t = tpl("t1", "Tell me about <fi>subject</fi> and <fi>other subject</fi>.");
    let d = doc();
    for k in 0..=5 {
        let r = instantiate(&m, &t, &d, k).unwrap();
        assert_eq!(r.status, InstantiationStatus::Instantiated);
        assert_eq!((r.template_id.as_str(), r.document_id.as_str(), r.chunk_index), ("t1", "d1", k));
        let markup = r.answer_markup.unwrap();
        let expanded = expand_excerpts(&parse_excerpt_markup(&markup).unwrap(), &d.text).unwrap();
        assert!(expanded.excerpt_ratio() >= 0.99, "chunk {k}: {}", expanded.excerpt_ratio());
        assert!(expanded.answer_text().chars().count() * 3 >= d.text.chars().count());
        let instruction = r.instruction.unwrap();
        assert!(!instruction.contains("<fi>"));
        let score = judge(&m, &instruction, expanded.answer_text()).unwrap();
        assert_eq!(score.score, 5, "{instruction} / {}", expanded.answer_text());
    }
}

#[test]
fn arity_mismatch_is_malformed() {
    let s = ScriptedBackend::new([Ok(r#"{"fills":["only one"],"answer":"<excerpt>Lava flows</excerpt>"}"#.into())]);
    let t = tpl("t", "compare <fi>a</fi> with <fi>b</fi>");
    let err = instantiate(&s, &t, &doc(), 0).unwrap_err();
    assert!(matches!(err, RoleError::MalformedOutput(ref m) if m.contains("2 slots")), "{err}");
}

#[test]
fn null_reply_is_incompatible() {
    let s = ScriptedBackend::new([Ok(" null\n".into())]);
    let r = instantiate(&s, &tpl("t", "explain <fi>x</fi>"), &doc(), 2).unwrap();
    assert_eq!(r.status, InstantiationStatus::Incompatible);
    assert!(r.instruction.is_none() && r.answer_markup.is_none());
}

#[test]
fn incompatible_rate_over_ten_thousand() {
    let m = MockBackend::new(MockOptions { seed: 7, ..MockOptions::default() });
    let d = SourceDocument::new("d", "One sentence here. Another sentence there.");
    let t = tpl("t", "explain <fi>x</fi>");
    let mut incompatible = 0;
    for i in 0..10_000 {
        let doc = SourceDocument::new(format!("doc-{i}"), d.text.clone());
        let r = instantiate(&m, &t, &doc, i % 6).unwrap();
        incompatible += usize::from(r.status == InstantiationStatus::Incompatible);
    }
    let rate = incompatible as f64 / 10_000.0;
    assert!((0.035..=0.065).contains(&rate), "rate {rate}");
}

#[test]
fn judge_replies() {
    let s = ScriptedBackend::new([Ok("4 \u{2014} relevant".into()), Ok("great".into())]);
    assert_eq!(judge(&s, "q", "a").unwrap().score, 4);
    assert!(matches!(judge(&s, "q", "a"), Err(RoleError::UnparseableScore(_))));
    assert!(matches!(judge(&s, "", "a"), Err(RoleError::Precondition(_))));
}

#[test]
fn mock_is_pure() {
    let a = MockBackend::new(MockOptions { seed: 3, ..MockOptions::default() });
    let b = MockBackend::new(MockOptions { seed: 3, ..MockOptions::default() });
    let t = tpl("t", "explain <fi>x</fi>");
    for k in 0..6 {
        assert_eq!(instantiate(&a, &t, &doc(), k), instantiate(&b, &t, &doc(), k));
    }
}

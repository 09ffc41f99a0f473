mod common;

use csl::model::Severity;
use csl::{parse, render, validate_model};
use proptest::prelude::*;

#[test]
fn corpus_round_trips() {
    for name in common::corpus() {
        let src = common::fixture_source(&name);
        let model = parse(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let text = render(&model);
        let again = parse(&text).unwrap_or_else(|e| panic!("{name} rendered: {e}\n{text}"));
        assert_eq!(model, again, "{name}");
        assert_eq!(text, render(&again), "{name}: render is not a fixpoint");
    }
}

#[test]
fn generated_models_are_valid() {
    for seed in 0..1000 {
        let m = common::random_model(seed);
        let errors: Vec<_> = validate_model(&m).into_iter().filter(|d| d.severity == Severity::Error).collect();
        assert!(errors.is_empty(), "seed {seed}: {errors:?}\n{}", render(&m));
    }
}

#[test]
fn generated_models_round_trip() {
    for seed in 0..1000 {
        let m = common::random_model(seed);
        let text = render(&m);
        let back = parse(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(m, back, "seed {seed}\n{text}");
    }
}

#[test]
fn generator_is_seeded() {
    assert_eq!(common::random_model(7), common::random_model(7));
    assert_ne!(render(&common::random_model(7)), render(&common::random_model(8)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parser_never_panics(src in "[a-z0-9_ :;{}\\[\\]()<>=!+\\-*|,.\"\n]{0,200}") {
        let _ = parse(&src);
    }

    #[test]
    fn truncated_fixture_errors_cleanly(cut in 0usize..2000) {
        let src = common::fixture_source("realestate.csl");
        let cut = cut.min(src.len());
        if let Err(e) = parse(&src[..cut]) {
            prop_assert!(e.to_string().contains(':'));
        }
    }
}

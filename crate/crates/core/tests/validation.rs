mod common;

use csl::injector::{inject, Mutation};
use csl::model::Severity;
use csl::validate_model;

#[test]
fn corpus_has_no_errors() {
    for name in common::corpus() {
        let diags = validate_model(&common::fixture(&name));
        assert!(diags.iter().all(|d| d.severity != Severity::Error), "{name}: {diags:?}");
    }
}

#[test]
fn mutated_models_stay_checkable() {
    let base = common::fixture("realestate_coordinated.csl");
    for row in common::matrix().rows {
        let m = inject(&base, &Mutation::parse(&row.mutation).unwrap()).unwrap();
        let errors: Vec<_> = validate_model(&m).into_iter().filter(|d| d.severity == Severity::Error).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", row.mutation);
    }
}

#[test]
fn lost_transfer_is_flagged_statically() {
    let base = common::fixture("realestate_coordinated.csl");
    let m = inject(&base, &Mutation::parse("LostInTransfer").unwrap()).unwrap();
    let diags = validate_model(&m);
    assert!(diags.iter().any(|d| d.rule.starts_with("transfer to")), "{diags:?}");
}

#[test]
fn diagnostics_are_stable() {
    for seed in 0..100 {
        let m = common::random_model(seed);
        assert_eq!(format!("{:?}", validate_model(&m)), format!("{:?}", validate_model(&m.clone())));
    }
}

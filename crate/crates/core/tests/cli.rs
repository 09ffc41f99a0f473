mod common;

use common::csl;
use jsonschema::JSONSchema;
use serde_json::Value;

fn schema() -> JSONSchema {
    let text = std::fs::read_to_string(common::repo_root().join("docs/report.schema.json")).unwrap();
    JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(schema: &JSONSchema, json: &str) {
    let doc: Value = serde_json::from_str(json).unwrap();
    if let Err(errors) = schema.validate(&doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}");
    };
}

#[test]
fn exit_codes() {
    let table: &[(&[&str], i32)] = &[
        (&["check", "fixtures/realestate.csl"], 1),
        (&["check", "fixtures/realestate_coordinated.csl"], 0),
        (&["check", "fixtures/single_party.csl"], 0),
        (&["check", "fixtures/missing.csl"], 2),
        (&["check", "fixtures/manifest.json"], 2),
        (&["explore", "fixtures/realestate.csl", "--stats"], 0),
        (&["inject", "fixtures/realestate.csl", "--mutation", "Bogus", "-o", "/tmp/x.csl"], 2),
        (&["frobnicate"], 2),
    ];
    for (args, code) in table {
        let (got, _, err) = csl(args);
        assert_eq!(got, *code, "{args:?}: {err}");
    }
}

#[test]
fn skipped_checks_warn_on_stderr() {
    let (code, out, err) = csl(&["check", "fixtures/single_party.csl"]);
    assert_eq!(code, 0);
    assert!(err.contains("skipped"), "{err}");
    assert!(out.contains("SKIPPED"));
}

#[test]
fn parse_errors_name_the_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csl");
    std::fs::write(&bad, "contract X\nparty ???\n").unwrap();
    let (code, out, err) = csl(&["check", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("bad.csl:2:"), "{err}");
}

#[test]
fn json_reports_follow_the_schema() {
    let schema = schema();
    for name in common::corpus() {
        let (_, out, _) = csl(&["check", &format!("fixtures/{name}"), "--json"]);
        assert_valid(&schema, &out);
    }
    let dir = tempfile::tempdir().unwrap();
    for row in common::matrix().rows {
        let out_path = dir.path().join("m.csl");
        let (code, _, err) = csl(&[
            "inject",
            "fixtures/realestate_coordinated.csl",
            "--mutation",
            &row.mutation,
            "-o",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        let (code, json, _) = csl(&["check", out_path.to_str().unwrap(), "--json"]);
        assert_eq!(code, 1, "{} should fail a check", row.mutation);
        assert_valid(&schema, &json);
        let doc: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["mutations"].as_array().unwrap().len(), 1);
        for v in doc["verdicts"].as_array().unwrap() {
            let kind = v["checker"].as_str().unwrap();
            assert_eq!(v["verdict"].as_str().unwrap(), row.verdicts[kind], "{} {kind}", row.mutation);
        }
    }
}

#[test]
fn text_and_json_agree() {
    for name in common::corpus() {
        let file = format!("fixtures/{name}");
        let (_, json, _) = csl(&["check", &file, "--json"]);
        let (_, text, _) = csl(&["check", &file, "--text"]);
        let doc: Value = serde_json::from_str(&json).unwrap();
        for v in doc["verdicts"].as_array().unwrap() {
            let kind = v["checker"].as_str().unwrap();
            let line = text.lines().find(|l| l.split_whitespace().next() == Some(kind)).unwrap();
            assert_eq!(line.split_whitespace().nth(1), v["verdict"].as_str(), "{name}: {line}");
        }
        assert_eq!(text.matches("\n  1. ").count(), doc["violations"].as_array().unwrap().len(), "{name}");
    }
}

#[test]
fn json_output_is_deterministic() {
    for name in ["realestate.csl", "realestate_coordinated.csl"] {
        let file = format!("fixtures/{name}");
        let (_, first, _) = csl(&["check", &file, "--json"]);
        for args in [["--workers", "1"], ["--workers", "4"], ["--workers", "0"]] {
            let (_, again, _) = csl(&["check", &file, "--json", args[0], args[1]]);
            assert_eq!(first, again, "{name} {args:?}");
        }
    }
}

#[test]
fn conflict_trace_is_five_steps() {
    let (code, json, _) = csl(&["check", "fixtures/realestate.csl", "--json"]);
    assert_eq!(code, 1);
    let doc: Value = serde_json::from_str(&json).unwrap();
    let v = &doc["violations"].as_array().unwrap()[0];
    assert_eq!(v["kind"], "ContractInconsistency");
    let acts: Vec<String> = v["trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| format!("{}.{}", s["party"].as_str().unwrap(), s["activity"].as_str().unwrap()))
        .collect();
    assert_eq!(acts, ["buyer.join", "buyer.abort", "seller.join", "pm.prepare_sign", "seller.sign"]);
}

#[test]
fn emit_tla_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("realestate.tla");
    let (code, _, err) = csl(&["emit-tla", "fixtures/realestate.csl", "-o", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let golden = common::fixture_path("golden");
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(golden.join("realestate.tla")).unwrap());
    assert_eq!(
        std::fs::read(out.with_extension("cfg")).unwrap(),
        std::fs::read(golden.join("realestate.cfg")).unwrap()
    );
}

#[test]
fn emit_tla_failures_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let invalid = dir.path().join("invalid.csl");
    let src = common::fixture_source("single_party.csl").replace("machine ", "machine_typo ");
    std::fs::write(&invalid, src).unwrap();
    let out = dir.path().join("out.tla");
    let (code, _, _) = csl(&["emit-tla", invalid.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!out.exists() && !out.with_extension("cfg").exists());

    let nowhere = dir.path().join("no/such/dir/out.tla");
    let (code, _, err) = csl(&["emit-tla", "fixtures/realestate.csl", "-o", nowhere.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("cannot write"), "{err}");
    assert!(!nowhere.exists());
}

#[test]
fn inject_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lit.csl");
    let (code, _, err) = csl(&[
        "inject",
        "fixtures/realestate_coordinated.csl",
        "--mutation",
        "LostInTransfer",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let written = std::fs::read_to_string(&out).unwrap();
    assert!(written.contains("LostInTransfer@sign"), "{written}");
    let (code, text, _) = csl(&["check", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(text.contains("mutation LostInTransfer@sign"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("LostInTransfer") && l.contains("FAIL")));
}

#[test]
fn inapplicable_mutation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csl");
    let (code, _, err) =
        csl(&["inject", "fixtures/single_party.csl", "--mutation", "LostInTransfer", "-o", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
    assert!(!out.exists());
    let (code, _, err) =
        csl(&["inject", "fixtures/realestate.csl", "--mutation", "TrapDoor@nope", "-o", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("nope"), "{err}");
}

#[test]
fn explore_stats_match_the_manifest() {
    for exp in common::manifest().fixtures {
        let (code, out, _) = csl(&["explore", &format!("fixtures/{}", exp.file), "--stats"]);
        assert_eq!(code, 0);
        assert!(out.contains(&format!("nodes: {}\n", exp.nodes)), "{out}");
        assert!(out.contains(&format!("edges: {}\n", exp.edges)));
        assert!(out.contains("truncated: false"));
    }
}

#[test]
fn bounded_check_reports_truncation() {
    let (code, out, _) = csl(&["check", "fixtures/realestate_coordinated.csl", "--depth", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("(truncated)"), "{out}");
    assert!(out.contains("exploration was truncated"));
}

#[test]
fn oracle_subcommand_prints_the_manifest_entry() {
    let (code, out, _) = csl(&["oracle", "fixtures/realestate.csl"]);
    assert_eq!(code, 0);
    let got: csl::fixtures::FixtureExpectation = serde_json::from_str(&out).unwrap();
    assert_eq!(got, common::manifest().fixtures[0]);
}

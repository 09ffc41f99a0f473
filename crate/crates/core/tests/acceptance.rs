//! One PASS/FAIL line per acceptance criterion. Runs without the test harness
//! so the lines always reach stdout; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use csl::checkers::{conserved_sum, run_all, Verdict, ViolationKind};
use csl::fixtures::{oracle_enumerate, ORACLE_LIMIT};
use csl::injector::{inject, Mutation};
use csl::{parse, render};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ac1_oracle_equivalence() -> Outcome {
    let mut sizes = Vec::new();
    for name in common::corpus() {
        let m = common::fixture(&name);
        let t = Instant::now();
        let oracle = oracle_enumerate(&m).map_err(|e| format!("{name}: {e}"))?;
        let spent = t.elapsed();
        ensure(spent < Duration::from_secs(1), || format!("{name}: oracle took {spent:?}"))?;
        ensure(oracle.nodes.len() < ORACLE_LIMIT, || format!("{name}: {} states", oracle.nodes.len()))?;
        let g = common::explore_all(&m, 0);
        ensure(!g.truncated, || format!("{name}: exploration truncated"))?;
        let explored = common::node_set(&g);
        ensure(explored == oracle.nodes, || {
            format!(
                "{name}: {} explorer-only, {} oracle-only states",
                explored.difference(&oracle.nodes).count(),
                oracle.nodes.difference(&explored).count()
            )
        })?;
        sizes.push(format!("{name}={}", oracle.nodes.len()));
    }
    Ok(sizes.join(" "))
}

fn ac2_detection_matrix() -> Outcome {
    let mx = common::matrix();
    let base = common::fixture(&mx.base);
    ensure(mx.rows.len() == 8, || format!("matrix has {} rows", mx.rows.len()))?;
    let mut traces = 0;
    for row in &mx.rows {
        let mutation = Mutation::parse(&row.mutation).ok_or("bad mutation in matrix")?;
        let m = inject(&base, &mutation).map_err(|e| e.to_string())?;
        let oracle = oracle_enumerate(&m).map_err(|e| e.to_string())?;
        let oracle_verdicts: BTreeMap<String, String> =
            oracle.verdicts.iter().map(|(k, v)| (k.name().to_string(), v.to_string())).collect();
        ensure(oracle_verdicts == row.verdicts, || format!("{}: checked-in row differs from oracle", row.mutation))?;
        let report = run_all(&m, &common::explore_all(&m, 0));
        let got = common::verdict_map(&report);
        ensure(got == row.verdicts, || format!("{}: verdicts {got:?}", row.mutation))?;
        let kind = ViolationKind::parse(mutation.kind.name()).ok_or("mutation kind has no checker")?;
        ensure(*report.verdict(kind) == Verdict::Fail, || format!("{}: {kind} did not fail", row.mutation))?;
        let own: Vec<_> = report.violations_of(kind).collect();
        ensure(!own.is_empty(), || format!("{}: no {kind} trace", row.mutation))?;
        for v in &report.violations {
            v.trace.replay(&m).map_err(|e| format!("{} {}: {e}", row.mutation, v.kind))?;
            traces += 1;
        }
    }
    Ok(format!("8x11 matrix matches, {traces} traces replayed"))
}

fn ac3_clean_specificity() -> Outcome {
    let m = common::fixture("realestate_coordinated.csl");
    let report = run_all(&m, &common::explore_all(&m, 0));
    let bad: Vec<String> = report
        .verdicts
        .iter()
        .filter(|(_, v)| *v != Verdict::Pass)
        .map(|(k, v)| format!("{k}={}", v.label()))
        .collect();
    ensure(report.verdicts.len() == 11 && bad.is_empty(), || bad.join(", "))?;
    Ok("11/11 PASS".into())
}

fn ac4_conflict_trace() -> Outcome {
    let m = common::fixture("realestate.csl");
    let oracle = oracle_enumerate(&m).map_err(|e| e.to_string())?;
    let depth = *oracle.shortest.get(&ViolationKind::ContractInconsistency).ok_or("oracle finds no conflict")?;
    let report = run_all(&m, &common::explore_all(&m, 0));
    let v = report.violations_of(ViolationKind::ContractInconsistency).next().ok_or("checker finds no conflict")?;
    ensure(v.trace.len() == depth, || format!("trace {} vs oracle depth {depth}", v.trace.len()))?;
    ensure(depth == 5, || format!("oracle depth {depth}, expected 5"))?;
    v.trace.replay(&m)?;
    let last = v.trace.last_state();
    let states: BTreeSet<&str> = ["buyer", "seller"].iter().map(|p| last.local[*p].as_str()).collect();
    ensure(states == BTreeSet::from(["Aborted", "Signed"]), || format!("final states {states:?}"))?;
    let mut acts: Vec<&str> = v.trace.steps.iter().map(|s| s.label.activity.as_str()).collect();
    acts.sort();
    ensure(acts == ["abort", "join", "join", "prepare_sign", "sign"], || format!("steps {acts:?}"))?;
    let shown: Vec<String> = v.trace.steps.iter().map(|s| format!("{}.{}", s.label.party, s.label.activity)).collect();
    Ok(shown.join(" "))
}

fn ac5_conservation() -> Outcome {
    let m = common::fixture("realestate_coordinated.csl");
    let decl = m.conserves.first().ok_or("no conserve clause")?;
    let g = common::explore_all(&m, 0);
    let sums: BTreeSet<i64> = g.nodes.iter().map(|n| conserved_sum(&n.state, decl)).collect();
    ensure(sums == BTreeSet::from([28]), || format!("clean sums {sums:?}"))?;
    let clean_states = g.nodes.len();
    let oracle = oracle_enumerate(&m).map_err(|e| e.to_string())?;
    ensure(oracle.conserved.values().all(|s| *s == BTreeSet::from([28])), || "oracle disagrees".into())?;

    let mutation = Mutation::parse("LostInTransfer").unwrap();
    let bad = inject(&m, &mutation).map_err(|e| e.to_string())?;
    let target = bad.mutations[0].target.clone().ok_or("mutation has no resolved target")?;
    let g = common::explore_all(&bad, 0);
    let mut breaking = 0;
    for e in &g.edges {
        let before = conserved_sum(g.state(e.source), decl);
        let after = conserved_sum(g.state(e.target), decl);
        let is_target = e.label.activity == target;
        ensure((before != after) == is_target, || format!("edge {} changes sum {before} -> {after}", e.label))?;
        breaking += usize::from(is_target);
    }
    ensure(breaking > 0, || "injected edge never fires".into())?;
    let report = run_all(&bad, &g);
    let v = report.violations_of(ViolationKind::LostInTransfer).next().ok_or("LostInTransfer not reported")?;
    let last = &v.trace.steps.last().ok_or("empty trace")?.label;
    ensure(last.activity == target, || format!("trace ends at {last}"))?;
    Ok(format!("sum 28 on {} states; breaks only on {breaking} '{target}' edges", clean_states))
}

fn ac6_frame_honesty() -> Outcome {
    let mut steps = 0;
    for seed in 0..1000 {
        let m = common::random_model(seed);
        let g = common::explore_small(&m);
        for e in &g.edges {
            let reported: BTreeSet<String> = e.frame.iter().map(|f| f.to_string()).collect();
            let naive = common::naive_diff(&m, g.state(e.source), g.state(e.target));
            ensure(reported == naive, || format!("seed {seed} step {}: {reported:?} vs {naive:?}", e.label))?;
            steps += 1;
        }
    }
    Ok(format!("1000 models, {steps} steps"))
}

fn ac7_determinism() -> Outcome {
    for name in common::corpus() {
        let file = format!("fixtures/{name}");
        let mut outputs = Vec::new();
        for _ in 0..3 {
            outputs.push(common::csl(&["check", &file, "--json"]).1);
        }
        for w in ["1", "4"] {
            outputs.push(common::csl(&["check", &file, "--json", "--workers", w]).1);
        }
        ensure(!outputs[0].is_empty(), || format!("{name}: empty output"))?;
        ensure(outputs.iter().all(|o| *o == outputs[0]), || format!("{name}: outputs differ"))?;
    }
    Ok("3 runs and workers 1/4 byte-identical".into())
}

fn ac8_emitter() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("realestate.tla");
    let (code, _, err) = common::csl(&["emit-tla", "fixtures/realestate.csl", "-o", out.to_str().unwrap()]);
    ensure(code == 0, || err)?;
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let golden = std::fs::read_to_string(common::fixture_path("golden/realestate.tla")).map_err(|e| e.to_string())?;
    ensure(text == golden, || "tla differs from golden".into())?;
    let cfg = std::fs::read_to_string(out.with_extension("cfg")).map_err(|e| e.to_string())?;
    let golden_cfg =
        std::fs::read_to_string(common::fixture_path("golden/realestate.cfg")).map_err(|e| e.to_string())?;
    ensure(cfg == golden_cfg, || "cfg differs from golden".into())?;

    for inv in ["TypeOK", "checkExtraStateVul", "ContractConsistentCheck", "ConservationCheck"] {
        ensure(text.contains(&format!("\n{inv} ==")), || format!("{inv} not defined"))?;
        ensure(cfg.contains(&format!("INVARIANT {inv}\n")), || format!("{inv} not checked"))?;
    }
    let m = common::fixture("realestate.csl");
    let next = text.split("\nNext ==\n").nth(1).ok_or("no Next")?;
    let next: Vec<&str> = next.lines().take_while(|l| l.starts_with("    \\/ ")).collect();
    ensure(next.len() == m.obligations.len(), || format!("Next has {} disjuncts", next.len()))?;
    for o in &m.obligations {
        let def = format!("\n{}_Term_condition ==\n", o.id);
        ensure(text.matches(&def).count() == 1, || format!("{} Term_condition", o.id))?;
        let body = text.split(&def).nth(1).unwrap().lines().next().unwrap_or("");
        for part in ["obligation", "right", "post_status"] {
            ensure(body.contains(&format!("{}_{part}", o.id)), || format!("{} conjunction lacks {part}", o.id))?;
        }
        ensure(next.iter().any(|l| l.trim_start_matches("    \\/ ") == format!("{}_Term_condition", o.id)), || {
            format!("{} not in Next", o.id)
        })?;
    }
    Ok(format!("golden bytes match, {} Term_condition conjunctions", m.obligations.len()))
}

fn ac9_round_trip() -> Outcome {
    let corpus = common::corpus();
    for name in &corpus {
        let m = parse(&common::fixture_source(name)).map_err(|e| e.to_string())?;
        let back = parse(&render(&m)).map_err(|e| format!("{name}: {e}"))?;
        ensure(back == m, || format!("{name} changes on round trip"))?;
    }
    for seed in 0..1000 {
        let m = common::random_model(seed);
        let back = parse(&render(&m)).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back == m, || format!("seed {seed} changes on round trip"))?;
    }
    Ok(format!("{} fixtures, 1000 generated models", corpus.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1", "oracle equivalence", ac1_oracle_equivalence),
        ("AC2", "detection matrix", ac2_detection_matrix),
        ("AC3", "clean specificity", ac3_clean_specificity),
        ("AC4", "conflict trace", ac4_conflict_trace),
        ("AC5", "conservation", ac5_conservation),
        ("AC6", "frame honesty", ac6_frame_honesty),
        ("AC7", "determinism", ac7_determinism),
        ("AC8", "emitter golden fidelity", ac8_emitter),
        ("AC9", "DSL round-trip", ac9_round_trip),
    ];
    let mut failed = 0;
    for (id, what, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("{id} PASS {what} ({detail}) [{ms} ms]"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL {what}: {why} [{ms} ms]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

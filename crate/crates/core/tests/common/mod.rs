#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use csl::model::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_path(name: &str) -> PathBuf {
    repo_root().join("fixtures").join(name)
}

pub fn fixture_source(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn fixture(name: &str) -> ContractModel {
    csl::parse(&fixture_source(name)).unwrap()
}

/// Every `.csl` file in the fixture corpus, sorted.
pub fn corpus() -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(repo_root().join("fixtures"))
        .unwrap()
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.ends_with(".csl").then_some(name)
        })
        .collect();
    out.sort();
    out
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).unwrap()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A small, valid, randomly shaped model. Same seed, same model.
pub fn random_model(seed: u64) -> ContractModel {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut m = ContractModel::default();
    m.spec.name = format!("Gen{seed}");
    if rng.gen_bool(0.3) {
        m.spec.description = "says \"hi\" \\ twice\nthen stops".into();
    }
    if rng.gen_bool(0.3) {
        m.spec.legality.push("lawful".into());
        m.spec.acceptance.push("both sign".into());
    }

    let participants = names("p", rng.gen_range(1..=3));
    let manager = rng.gen_bool(0.5).then(|| "mgr".to_string());
    let parties: Vec<String> = participants.iter().cloned().chain(manager.clone()).collect();
    for p in &participants {
        m.parties.push(Party {
            name: p.clone(),
            role: Role::Participant,
            machine: "m0".into(),
            span: SourceSpan::default(),
        });
    }
    if let Some(g) = &manager {
        m.parties.push(Party {
            name: g.clone(),
            role: Role::Manager,
            machine: "m1".into(),
            span: SourceSpan::default(),
        });
    }

    let has_x = rng.gen_bool(0.6);
    let has_bal = rng.gen_bool(0.6);
    let has_seen = rng.gen_bool(0.4);
    if has_x {
        m.shared.push(SharedVar {
            name: "x".into(),
            kind: VarKind::Int { lo: -3, hi: 3, init: rng.gen_range(-1..=1) },
            span: SourceSpan::default(),
        });
    }
    if has_bal {
        let init: BTreeMap<String, i64> = parties.iter().map(|p| (p.clone(), rng.gen_range(0..=4))).collect();
        m.shared.push(SharedVar {
            name: "bal".into(),
            kind: VarKind::PartyInt { lo: -8, hi: 8, init },
            span: SourceSpan::default(),
        });
    }
    if has_seen {
        m.shared.push(SharedVar {
            name: "seen".into(),
            kind: VarKind::PartySet { init: BTreeSet::new() },
            span: SourceSpan::default(),
        });
    }
    m.shared.push(SharedVar { name: "q".into(), kind: VarKind::MsgPool, span: SourceSpan::default() });
    let events = names("e", rng.gen_range(1..=2));
    for e in &events {
        m.events.push(EventType { name: e.clone(), carries_sender: rng.gen_bool(0.7), span: SourceSpan::default() });
    }

    let mut machines = vec![("m0", names("s", rng.gen_range(2..=4)))];
    if manager.is_some() {
        machines.push(("m1", names("t", rng.gen_range(2..=3))));
    }
    for (mi, (mname, states)) in machines.iter().enumerate() {
        let mut acts: Vec<Activity> = Vec::new();
        for k in 0..rng.gen_range(1..=4) {
            let mut a = Activity::new(&format!("a{mi}_{k}"), pick(rng, states), pick(rng, states));
            if !acts.is_empty() && rng.gen_bool(0.2) {
                // same name from a second source
                let prev = acts.last().unwrap().clone();
                let used = |s: &String| acts.iter().any(|x| x.name == prev.name && x.source == *s);
                if let Some(src) = states.iter().find(|s| !used(s)) {
                    a = Activity { source: src.clone(), ..prev };
                    acts.push(a);
                    continue;
                }
            }
            if has_x && rng.gen_bool(0.4) {
                let op = *pick(rng, &CmpOp::ALL);
                a.guard.atoms.push(Atom::Cmp {
                    lhs: Operand::Var(IntRef::scalar("x")),
                    op,
                    rhs: Operand::Lit(rng.gen_range(-2..=2)),
                });
            }
            if has_bal && rng.gen_bool(0.3) {
                a.guard.atoms.push(Atom::Cmp {
                    lhs: Operand::Var(IntRef::indexed("bal", PartyRef::SelfParty)),
                    op: CmpOp::Ge,
                    rhs: Operand::Lit(rng.gen_range(0..=2)),
                });
            }
            if has_seen && rng.gen_bool(0.3) {
                a.guard.atoms.push(Atom::Member {
                    party: PartyRef::SelfParty,
                    set: "seen".into(),
                    negated: rng.gen_bool(0.5),
                });
            }
            if has_x && rng.gen_bool(0.4) {
                let value = match rng.gen_range(0..3) {
                    0 => Expr::Lit(rng.gen_range(-1..=2)),
                    1 => Expr::Bin(Box::new(Expr::Var(IntRef::scalar("x"))), BinOp::Sub, Box::new(Expr::Lit(1))),
                    _ => Expr::Lit(1),
                };
                let op = *pick(rng, &[AssignOp::Set, AssignOp::Add, AssignOp::Sub]);
                a.effects.push(Effect::Assign { target: IntRef::scalar("x"), op, value });
            }
            if has_bal && rng.gen_bool(0.4) {
                let to = if rng.gen_bool(0.15) {
                    TransferTarget::Orphan("0xdead".into())
                } else {
                    TransferTarget::Party(PartyRef::Named(pick(rng, &parties).clone()))
                };
                a.effects.push(Effect::Transfer {
                    var: "bal".into(),
                    amount: Expr::Lit(rng.gen_range(1..=2)),
                    from: PartyRef::SelfParty,
                    to,
                });
            }
            if has_seen && rng.gen_bool(0.3) {
                a.effects.push(Effect::Insert { party: PartyRef::SelfParty, set: "seen".into() });
            }
            if rng.gen_bool(0.1) {
                a.trigger = Some(pick(rng, &events).clone());
            }
            if rng.gen_bool(0.1) {
                a.spontaneous = true;
            }
            acts.push(a);
        }
        m.machines.push(StateMachine {
            name: mname.to_string(),
            initial: states[0].clone(),
            states: states.clone(),
            activities: acts,
            span: SourceSpan::default(),
        });
    }

    let vars: Vec<String> = m.shared.iter().filter(|v| v.kind != VarKind::MsgPool).map(|v| v.name.clone()).collect();
    let mut n = 0;
    for p in &parties {
        let mach = m
            .machines
            .iter()
            .find(|x| Some(x.name.as_str()) == m.party(p).map(|q| q.machine.as_str()))
            .unwrap()
            .clone();
        let mut caps: Vec<&str> = mach.activities.iter().map(|a| a.name.as_str()).collect();
        caps.dedup();
        let caps: Vec<&str> = caps.into_iter().filter(|_| rng.gen_bool(0.7)).collect();
        for cap in caps {
            let a = mach.activities_named(cap).next().unwrap();
            let enabling = rng.gen_bool(0.4).then(|| {
                let event = pick(rng, &events).clone();
                let from = match rng.gen_range(0..4) {
                    _ if !m.event(&event).unwrap().carries_sender => None,
                    0 => None,
                    1 => Some(SenderPattern::Party(pick(rng, &parties).clone())),
                    2 => Some(SenderPattern::AnyParticipant),
                    _ => Some(SenderPattern::AllParticipants),
                };
                EnablingEvent { event, from }
            });
            let right = rng.gen_bool(0.5).then(|| Right {
                event: pick(rng, &events).clone(),
                recipients: match rng.gen_range(0..4) {
                    0 => vec![Recipient::Participants],
                    1 => vec![Recipient::SelfParty],
                    2 => vec![
                        Recipient::Party(pick(rng, &parties).clone()),
                        Recipient::Party(pick(rng, &parties).clone()),
                    ],
                    _ => vec![Recipient::Party(pick(rng, &parties).clone())],
                },
            });
            let mut frame: Vec<FrameItem> =
                vars.iter().filter(|_| rng.gen_bool(0.3)).map(|v| FrameItem::Var(v.clone())).collect();
            if rng.gen_bool(0.2) {
                frame.push(FrameItem::LocalState(pick(rng, &parties).clone()));
            }
            let current: Vec<String> = mach.activities_named(cap).map(|x| x.source.clone()).collect();
            m.obligations.push(Obligation {
                id: format!("o{n}"),
                party: p.clone(),
                enabling,
                current,
                condition: if rng.gen_bool(0.5) { a.guard.clone() } else { Guard::truth() },
                capability: cap.to_string(),
                next: a.target.clone(),
                right,
                frame,
                span: SourceSpan::default(),
            });
            n += 1;
        }
    }

    if has_bal && rng.gen_bool(0.5) {
        let upon = m.machines[0].activities[0].name.clone();
        m.considerations.push(ConsiderationDecl {
            party: participants[0].clone(),
            target: IntRef::indexed("bal", PartyRef::SelfParty),
            op: *pick(rng, &[AssignOp::Add, AssignOp::Sub]),
            amount: Expr::Lit(1),
            upon,
            span: SourceSpan::default(),
        });
    }
    if rng.gen_bool(0.5) {
        let s = &m.machines[0].states;
        m.forbids.push(ForbidDecl { first: s[0].clone(), second: s[s.len() - 1].clone(), span: SourceSpan::default() });
    }
    if has_bal && rng.gen_bool(0.5) {
        m.conserves.push(ConserveDecl { vars: vec!["bal".into()], span: SourceSpan::default() });
    }
    m
}

pub fn explore_all(model: &ContractModel, workers: usize) -> csl::explorer::StateGraph {
    let opts = csl::explorer::ExploreOptions { workers, ..Default::default() };
    csl::explorer::explore(model, &opts)
}

/// Canonical forms of every explored state, comparable with oracle output.
pub fn node_set(graph: &csl::explorer::StateGraph) -> BTreeSet<String> {
    graph.nodes.iter().map(|n| n.state.canonical()).collect()
}

pub fn verdict_map(report: &csl::checkers::CheckReport) -> BTreeMap<String, String> {
    report.verdicts.iter().map(|(k, v)| (k.name().to_string(), v.label().to_string())).collect()
}

pub fn manifest() -> csl::fixtures::FixtureManifest {
    serde_json::from_str(&std::fs::read_to_string(fixture_path("manifest.json")).unwrap()).unwrap()
}

pub fn matrix() -> csl::fixtures::MutationMatrix {
    serde_json::from_str(&std::fs::read_to_string(fixture_path("mutation_matrix.json")).unwrap()).unwrap()
}

/// Runs the `csl` binary; returns (exit code, stdout, stderr).
pub fn csl(args: &[&str]) -> (i32, String, String) {
    let out =
        std::process::Command::new(env!("CARGO_BIN_EXE_csl")).args(args).current_dir(repo_root()).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

/// Everything that differs, named the way frame reports print it.
pub fn naive_diff(
    model: &ContractModel,
    a: &csl::kernel::GlobalState,
    b: &csl::kernel::GlobalState,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for p in &model.parties {
        if a.local.get(&p.name) != b.local.get(&p.name) {
            out.insert(format!("state[{}]", p.name));
        }
    }
    let slots: BTreeSet<_> = a.ints.keys().chain(b.ints.keys()).collect();
    for s in slots {
        if a.ints.get(s) != b.ints.get(s) {
            out.insert(match &s.party {
                Some(p) => format!("{}[{p}]", s.var),
                None => s.var.clone(),
            });
        }
    }
    for v in &model.shared {
        let sa = a.sets.get(&v.name).cloned().unwrap_or_default();
        let sb = b.sets.get(&v.name).cloned().unwrap_or_default();
        if sa != sb {
            out.insert(v.name.clone());
        }
    }
    if a.pool != b.pool {
        out.insert(model.pool_var().unwrap_or("pool").to_string());
    }
    out
}

/// Small exploration budget for generated models.
pub fn explore_small(model: &ContractModel) -> csl::explorer::StateGraph {
    let bounds = csl::explorer::Bounds { max_states: 2_000, max_depth: 30 };
    csl::explorer::explore(model, &csl::explorer::ExploreOptions { bounds, workers: 1 })
}

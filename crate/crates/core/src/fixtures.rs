//! Brute-force reference enumeration and the checked-in expectation files.
//!
//! The oracle shares only the one-step semantics with the rest of the crate.
//! Reachability, distances, frames and every verdict predicate are computed
//! here again, naively: depth-first search over canonical strings, distance
//! by fixpoint relaxation, and direct scans instead of the checker code.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkers::ViolationKind;
use crate::kernel::{Address, GlobalState, Kernel, StepLabel};
use crate::model::*;

/// The oracle refuses closures larger than this.
pub const ORACLE_LIMIT: usize = 100_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("closure exceeds {ORACLE_LIMIT} states")]
    TooLarge,
    #[error("{0}")]
    Parse(#[from] crate::ParseError),
    #[error("cannot read {0}")]
    Io(String),
}

struct Transition {
    src: usize,
    label: StepLabel,
    dst: usize,
    consumed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Canonical forms of every reachable state.
    pub nodes: BTreeSet<String>,
    pub edges: usize,
    pub max_depth: usize,
    pub failed_steps: usize,
    pub verdicts: BTreeMap<ViolationKind, &'static str>,
    /// Length of the shortest trace exhibiting each failing kind.
    pub shortest: BTreeMap<ViolationKind, usize>,
    /// Every value each conserved sum takes, keyed by its display form.
    pub conserved: BTreeMap<String, BTreeSet<i64>>,
}

impl OracleResult {
    /// FNV-1a over the sorted node set; identifies an oracle run.
    pub fn run_id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for n in &self.nodes {
            for b in n.bytes().chain(*b"\n") {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

pub fn oracle_enumerate_file(path: &Path) -> Result<OracleResult, OracleError> {
    let src = std::fs::read_to_string(path).map_err(|_| OracleError::Io(path.display().to_string()))?;
    oracle_enumerate(&crate::parse(&src)?)
}

pub fn oracle_enumerate(model: &ContractModel) -> Result<OracleResult, OracleError> {
    let k = Kernel::new(model);
    let mut states: Vec<GlobalState> = Vec::new();
    let mut visited: BTreeMap<String, usize> = BTreeMap::new();
    let mut transitions = Vec::new();
    let mut failed_steps = 0;

    let init = k.initial_state();
    visited.insert(init.canonical(), 0);
    states.push(init);
    let mut stack = vec![0usize];
    while let Some(src) = stack.pop() {
        let here = states[src].clone();
        for label in k.enabled(&here) {
            let Ok(out) = k.step(&here, &label) else {
                failed_steps += 1;
                continue;
            };
            let key = out.state.canonical();
            let dst = match visited.get(&key) {
                Some(&d) => d,
                None => {
                    if states.len() >= ORACLE_LIMIT {
                        return Err(OracleError::TooLarge);
                    }
                    visited.insert(key, states.len());
                    states.push(out.state);
                    stack.push(states.len() - 1);
                    states.len() - 1
                }
            };
            transitions.push(Transition { src, label, dst, consumed: out.consumed });
        }
    }

    let mut dist = vec![usize::MAX; states.len()];
    dist[0] = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for t in &transitions {
            if dist[t.src] != usize::MAX && dist[t.src] + 1 < dist[t.dst] {
                dist[t.dst] = dist[t.src] + 1;
                changed = true;
            }
        }
    }

    let mut shortest: BTreeMap<ViolationKind, usize> = BTreeMap::new();
    let mut hit = |kind: ViolationKind, depth: usize| {
        let e = shortest.entry(kind).or_insert(depth);
        *e = (*e).min(depth);
    };
    for (s, g) in states.iter().enumerate() {
        for kind in state_violations(model, &states[0], g) {
            hit(kind, dist[s]);
        }
    }
    for t in &transitions {
        for kind in transition_violations(&k, model, &states[t.src], t, &states[t.dst]) {
            hit(kind, dist[t.src] + 1);
        }
    }

    let mut verdicts = BTreeMap::new();
    for kind in ViolationKind::ALL {
        let v = if shortest.contains_key(&kind) {
            "FAIL"
        } else if (kind == ViolationKind::ContractInconsistency && model.forbids.is_empty())
            || (matches!(kind, ViolationKind::PaymentInconsistency | ViolationKind::ConsiderationMismatch)
                && model.considerations.is_empty())
        {
            "SKIPPED"
        } else {
            "PASS"
        };
        verdicts.insert(kind, v);
    }

    let conserved = model
        .conserves
        .iter()
        .map(|c| {
            let sums = states
                .iter()
                .map(|g| g.ints.iter().filter(|(slot, _)| c.vars.contains(&slot.var)).map(|(_, v)| v).sum())
                .collect();
            (c.to_string(), sums)
        })
        .collect();

    Ok(OracleResult {
        nodes: visited.into_keys().collect(),
        edges: transitions.len(),
        max_depth: dist.iter().copied().max().unwrap_or(0),
        failed_steps,
        verdicts,
        shortest,
        conserved,
    })
}

fn state_violations(model: &ContractModel, init: &GlobalState, g: &GlobalState) -> Vec<ViolationKind> {
    let mut out = Vec::new();
    let participants = model.participants();

    let undeclared = g.local.iter().any(|(p, s)| {
        let m = model
            .parties
            .iter()
            .find(|x| x.name == *p)
            .and_then(|x| model.machines.iter().find(|m| m.name == x.machine));
        m.is_some_and(|m| !m.states.contains(s))
    });
    if undeclared {
        out.push(ViolationKind::ExtraState);
    }

    for o in &model.obligations {
        let fired = g.fired.get(&o.id).copied().unwrap_or(0) as u32;
        let mut allowed = u32::MAX;
        if let Some(en) = &o.enabling {
            let to_me: Vec<(&Option<String>, u32)> = g
                .event_counts
                .iter()
                .filter(|(i, _)| i.event == en.event && i.recipient == Address::Party(o.party.clone()))
                .map(|(i, n)| (&i.sender, *n as u32))
                .collect();
            let from = |p: &str| to_me.iter().filter(|(s, _)| s.as_deref() == Some(p)).map(|(_, n)| n).sum::<u32>();
            allowed = match &en.from {
                None => to_me.iter().map(|(_, n)| n).sum(),
                Some(SenderPattern::Party(q)) => from(q),
                Some(SenderPattern::AnyParticipant) => participants.iter().map(|p| from(p)).sum(),
                Some(SenderPattern::AllParticipants) => participants.iter().map(|p| from(p)).min().unwrap_or(0),
            };
        }
        let once = !o.current.contains(&o.next);
        if fired > allowed || (once && fired >= 2) {
            out.push(ViolationKind::Reentrancy);
        }
    }

    for inst in &g.pool {
        let declared = model.events.iter().any(|e| e.name == inst.event);
        let consumer = match &inst.recipient {
            Address::Orphan(_) => false,
            Address::Party(r) => {
                model
                    .obligations
                    .iter()
                    .any(|o| o.party == *r && o.enabling.as_ref().is_some_and(|e| e.event == inst.event))
                    || model.parties.iter().filter(|p| p.name == *r).any(|p| {
                        model
                            .machines
                            .iter()
                            .filter(|m| m.name == p.machine)
                            .any(|m| m.activities.iter().any(|a| a.trigger.as_ref() == Some(&inst.event)))
                    })
            }
        };
        if !declared || !consumer {
            out.push(ViolationKind::GaslessSend);
        }
    }

    for c in &model.conserves {
        let sum =
            |s: &GlobalState| -> i64 { s.ints.iter().filter(|(k, _)| c.vars.contains(&k.var)).map(|(_, v)| v).sum() };
        if sum(g) != sum(init) {
            out.push(ViolationKind::LostInTransfer);
        }
    }

    for f in &model.forbids {
        let conflict = participants.iter().any(|a| {
            participants.iter().any(|b| {
                a != b
                    && g.local.get(*a).is_some_and(|s| *s == f.first)
                    && g.local.get(*b).is_some_and(|s| *s == f.second)
            })
        });
        if conflict {
            out.push(ViolationKind::ContractInconsistency);
        }
    }
    out
}

/// Names of the variables that differ, as frames spell them.
fn changed_names(pre: &GlobalState, post: &GlobalState, pool: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for p in pre.local.keys().chain(post.local.keys()) {
        if pre.local.get(p) != post.local.get(p) {
            out.insert(format!("state[{p}]"));
        }
    }
    for s in pre.ints.keys().chain(post.ints.keys()) {
        if pre.ints.get(s) != post.ints.get(s) {
            out.insert(s.var.clone());
        }
    }
    for s in pre.sets.keys().chain(post.sets.keys()) {
        let none = BTreeSet::new();
        if pre.sets.get(s).unwrap_or(&none) != post.sets.get(s).unwrap_or(&none) {
            out.insert(s.clone());
        }
    }
    if pre.pool != post.pool {
        out.insert(pool.to_string());
    }
    out
}

fn transition_violations(
    k: &Kernel<'_>,
    model: &ContractModel,
    pre: &GlobalState,
    t: &Transition,
    post: &GlobalState,
) -> Vec<ViolationKind> {
    let mut out = Vec::new();
    let party = t.label.party.as_str();
    let ob = t.label.obligation.as_ref().and_then(|id| model.obligations.iter().find(|o| o.id == *id));
    let from = pre.local.get(party).cloned().unwrap_or_default();
    let to = post.local.get(party).cloned().unwrap_or_default();

    if let Some(o) = ob {
        let declared_pair = o.current.contains(&from) && o.next == to;
        if !declared_pair || !k.guard_holds(pre, &o.condition, party, t.label.sender.as_deref()) {
            out.push(ViolationKind::SneakPath);
        }
    }

    let others_moved = pre.local.iter().any(|(p, s)| p != party && post.local.get(p) != Some(s));
    let wrong_event = ob.is_some_and(|o| t.consumed.as_ref() != o.enabling.as_ref().map(|e| &e.event));
    if others_moved || wrong_event {
        out.push(ViolationKind::TrapDoor);
    }

    if !model.obligations.iter().any(|o| o.party == party && o.capability == t.label.activity) {
        out.push(ViolationKind::HiddenActivity);
    }

    let machine = model
        .parties
        .iter()
        .find(|p| p.name == party)
        .and_then(|p| model.machines.iter().find(|m| m.name == p.machine));
    let act = machine.and_then(|m| m.activities.iter().find(|a| a.name == t.label.activity && a.source == from));
    let leaks = act.is_some_and(|a| {
        a.effects.iter().any(|e| match e {
            Effect::Transfer { to: TransferTarget::Orphan(_), .. } => true,
            Effect::Transfer { to: TransferTarget::Party(PartyRef::Named(p)), .. } => {
                !model.parties.iter().any(|x| x.name == *p)
            }
            _ => false,
        })
    });
    if leaks {
        out.push(ViolationKind::LostInTransfer);
    }

    if let Some(o) = ob {
        let changed = changed_names(pre, post, model.pool_var().unwrap_or("pool"));
        if o.frame.iter().any(|f| changed.contains(&f.to_string())) {
            out.push(ViolationKind::CallToUnknown);
        }
    }

    // value promised by a consideration, evaluated from the declaring party's view
    let holds = |d: &ConsiderationDecl| -> Option<bool> {
        let slot = k.int_slot(&d.target, &d.party)?;
        let amount = k.eval_expr(pre, &d.amount, &d.party)?;
        let before = pre.int(&slot)?;
        let want = match d.op {
            AssignOp::Add => before + amount,
            AssignOp::Sub => before - amount,
            AssignOp::Set => amount,
        };
        Some(post.int(&slot) == Some(want))
    };
    let upon_here: Vec<&ConsiderationDecl> =
        model.considerations.iter().filter(|d| d.upon == t.label.activity).collect();
    if upon_here.iter().any(|d| holds(d) == Some(false)) {
        out.push(ViolationKind::PaymentInconsistency);
    }
    let own_broken = upon_here.iter().any(|d| d.party == party && holds(d) == Some(false));
    let off_upon_change = model
        .considerations
        .iter()
        .filter(|d| d.upon != t.label.activity)
        .any(|d| k.int_slot(&d.target, &d.party).is_some_and(|s| pre.int(&s) != post.int(&s)));
    if own_broken || off_upon_change {
        out.push(ViolationKind::ConsiderationMismatch);
    }
    out
}

/// Expected values for one corpus file, as produced by the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureExpectation {
    pub file: String,
    /// Oracle run id the values came from.
    pub provenance: String,
    pub nodes: usize,
    pub edges: usize,
    pub max_depth: usize,
    pub verdicts: BTreeMap<String, String>,
    pub shortest: BTreeMap<String, usize>,
    pub conserved: BTreeMap<String, Vec<i64>>,
}

impl FixtureExpectation {
    pub fn from_oracle(file: &str, r: &OracleResult) -> Self {
        Self {
            file: file.to_string(),
            provenance: format!("oracle run {}", r.run_id()),
            nodes: r.nodes.len(),
            edges: r.edges,
            max_depth: r.max_depth,
            verdicts: r.verdicts.iter().map(|(k, v)| (k.name().to_string(), v.to_string())).collect(),
            shortest: r.shortest.iter().map(|(k, d)| (k.name().to_string(), *d)).collect(),
            conserved: r.conserved.iter().map(|(k, v)| (k.clone(), v.iter().copied().collect())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub fixtures: Vec<FixtureExpectation>,
}

/// Oracle verdicts for one injected mutation of the base fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub mutation: String,
    pub provenance: String,
    pub verdicts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationMatrix {
    pub base: String,
    pub rows: Vec<MatrixRow>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_party_has_one_node() {
        let m = crate::parse(include_str!("../../../fixtures/single_party.csl")).unwrap();
        let r = oracle_enumerate(&m).unwrap();
        assert_eq!(r.nodes.len(), 1);
        assert_eq!(r.edges, 0);
        assert!(r.verdicts.values().all(|v| *v != "FAIL"));
    }

    #[test]
    fn fixture_facts() {
        let m = crate::parse(include_str!("../../../fixtures/realestate.csl")).unwrap();
        let r = oracle_enumerate(&m).unwrap();
        assert_eq!(r.conserved["sum(balance)"], BTreeSet::from([28]));
        assert_eq!(r.shortest.get(&ViolationKind::ContractInconsistency), Some(&5));
        let fails: Vec<_> = r.verdicts.iter().filter(|(_, v)| **v == "FAIL").map(|(k, _)| *k).collect();
        assert_eq!(fails, vec![ViolationKind::ContractInconsistency]);
    }

    #[test]
    fn coordination_removes_the_conflict() {
        let m = crate::parse(include_str!("../../../fixtures/realestate_coordinated.csl")).unwrap();
        let r = oracle_enumerate(&m).unwrap();
        assert!(r.verdicts.values().all(|v| *v == "PASS"), "{:?}", r.verdicts);
    }
}

//! Security checkers over an explored state graph.
//!
//! Each checker scans nodes or edges in BFS order and keeps the first
//! witness per subject, which is therefore a shortest one.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::explorer::{StateGraph, Trace};
use crate::kernel::{Address, EventInstance, FrameVar, GlobalState, Kernel, StepLabel};
use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ViolationKind {
    ExtraState,
    SneakPath,
    TrapDoor,
    HiddenActivity,
    Reentrancy,
    GaslessSend,
    LostInTransfer,
    CallToUnknown,
    ContractInconsistency,
    PaymentInconsistency,
    ConsiderationMismatch,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 11] = [
        ViolationKind::ExtraState,
        ViolationKind::SneakPath,
        ViolationKind::TrapDoor,
        ViolationKind::HiddenActivity,
        ViolationKind::Reentrancy,
        ViolationKind::GaslessSend,
        ViolationKind::LostInTransfer,
        ViolationKind::CallToUnknown,
        ViolationKind::ContractInconsistency,
        ViolationKind::PaymentInconsistency,
        ViolationKind::ConsiderationMismatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::ExtraState => "ExtraState",
            ViolationKind::SneakPath => "SneakPath",
            ViolationKind::TrapDoor => "TrapDoor",
            ViolationKind::HiddenActivity => "HiddenActivity",
            ViolationKind::Reentrancy => "Reentrancy",
            ViolationKind::GaslessSend => "GaslessSend",
            ViolationKind::LostInTransfer => "LostInTransfer",
            ViolationKind::CallToUnknown => "CallToUnknown",
            ViolationKind::ContractInconsistency => "ContractInconsistency",
            ViolationKind::PaymentInconsistency => "PaymentInconsistency",
            ViolationKind::ConsiderationMismatch => "ConsiderationMismatch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub message: String,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped(String),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped(_) => "SKIPPED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub max_depth: usize,
    pub truncated: bool,
    pub bound_errors: usize,
}

impl GraphStats {
    pub fn of(graph: &StateGraph) -> Self {
        Self {
            nodes: graph.nodes.len(),
            edges: graph.edges.len(),
            max_depth: graph.max_depth(),
            truncated: graph.truncated,
            bound_errors: graph.bound_errors.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub model: String,
    pub stats: GraphStats,
    /// Ordered by kind, then trace length, then subject.
    pub violations: Vec<Violation>,
    /// One entry per kind, in `ViolationKind::ALL` order.
    pub verdicts: Vec<(ViolationKind, Verdict)>,
    pub warnings: Vec<String>,
}

impl CheckReport {
    pub fn verdict(&self, kind: ViolationKind) -> &Verdict {
        &self.verdicts.iter().find(|(k, _)| *k == kind).expect("every kind has a verdict").1
    }

    pub fn has_failure(&self) -> bool {
        self.verdicts.iter().any(|(_, v)| *v == Verdict::Fail)
    }

    pub fn violations_of(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }
}

struct Collector<'g> {
    kind: ViolationKind,
    graph: &'g StateGraph,
    seen: BTreeSet<String>,
    out: Vec<Violation>,
}

impl<'g> Collector<'g> {
    fn new(kind: ViolationKind, graph: &'g StateGraph) -> Self {
        Self { kind, graph, seen: BTreeSet::new(), out: Vec::new() }
    }

    fn at_node(&mut self, node: usize, subject: String, message: impl FnOnce() -> String) {
        if self.seen.insert(subject.clone()) {
            let trace = self.graph.trace_to(node);
            self.out.push(Violation { kind: self.kind, subject, message: message(), trace });
        }
    }

    fn at_edge(&mut self, edge: usize, subject: String, message: impl FnOnce() -> String) {
        if self.seen.insert(subject.clone()) {
            let trace = self.graph.trace_through(edge);
            self.out.push(Violation { kind: self.kind, subject, message: message(), trace });
        }
    }
}

/// The activity instance an edge executed.
fn executed<'m>(model: &'m ContractModel, pre: &GlobalState, label: &StepLabel) -> Option<&'m Activity> {
    model.machine_of(&label.party)?.activity(&label.activity, pre.local.get(&label.party)?)
}

pub fn check_extra_state(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::ExtraState, graph);
    for (id, n) in graph.nodes.iter().enumerate() {
        for (p, s) in &n.state.local {
            if model.machine_of(p).is_some_and(|m| !m.has_state(s)) {
                c.at_node(id, s.clone(), || format!("{p} reached undeclared state {s}"));
            }
        }
    }
    c.out
}

pub fn check_sneak_path(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let k = Kernel::new(model);
    let mut c = Collector::new(ViolationKind::SneakPath, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        let Some(o) = e.label.obligation.as_deref().and_then(|id| model.obligation(id)) else { continue };
        let (pre, post) = (graph.state(e.source), graph.state(e.target));
        let from = pre.local.get(&e.label.party).map_or("", String::as_str);
        let to = post.local.get(&e.label.party).map_or("", String::as_str);
        if !o.current.iter().any(|s| s == from) || o.next != to {
            c.at_edge(i, o.id.clone(), || format!("undeclared source/target pair {from} -> {to} for {}", o.id));
        } else if !k.guard_holds(pre, &o.condition, &o.party, e.label.sender.as_deref()) {
            c.at_edge(i, o.id.clone(), || format!("{} fired while `{}` was false", o.id, o.condition));
        }
    }
    c.out
}

pub fn check_trap_door(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::TrapDoor, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        for f in &e.frame {
            if let FrameVar::Local(p) = f {
                if *p != e.label.party {
                    c.at_edge(i, p.clone(), || {
                        format!("{} moved {p} as a side effect of {}", e.label.party, e.label.activity)
                    });
                }
            }
        }
        let Some(o) = e.label.obligation.as_deref().and_then(|id| model.obligation(id)) else { continue };
        if e.consumed.as_deref() != o.enabling_event() {
            let ev = e.consumed.as_deref().unwrap_or("-");
            c.at_edge(i, o.id.clone(), || format!("{} consumed undeclared enabling event {ev}", o.id));
        }
    }
    c.out
}

pub fn check_hidden_activity(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::HiddenActivity, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        if !model.next_closure(&e.label.party).contains(e.label.activity.as_str()) {
            c.at_edge(i, e.label.activity.clone(), || {
                format!("{} performed {}, which no obligation allows", e.label.party, e.label.activity)
            });
        }
    }
    c.out
}

/// How many firings of `o` the events received in `g` account for.
pub fn justified_firings(model: &ContractModel, o: &Obligation, g: &GlobalState) -> Option<u32> {
    let en = o.enabling.as_ref()?;
    let me = Address::Party(o.party.clone());
    let count = |s: &str| {
        g.event_count(&EventInstance { event: en.event.clone(), sender: Some(s.to_string()), recipient: me.clone() })
            as u32
    };
    let participants = model.participants();
    Some(match &en.from {
        Some(SenderPattern::Party(q)) => count(q),
        Some(SenderPattern::AnyParticipant) => participants.iter().map(|p| count(p)).sum(),
        Some(SenderPattern::AllParticipants) => participants.iter().map(|p| count(p)).min().unwrap_or(0),
        None => g
            .event_counts
            .iter()
            .filter(|(i, _)| i.event == en.event && i.recipient == me)
            .map(|(_, n)| *n as u32)
            .sum(),
    })
}

pub fn check_reentrancy(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::Reentrancy, graph);
    for (id, n) in graph.nodes.iter().enumerate() {
        for o in &model.obligations {
            let fired = n.state.fired(&o.id) as u32;
            if fired == 0 {
                continue;
            }
            if let Some(j) = justified_firings(model, o, &n.state).filter(|j| fired > *j) {
                c.at_node(id, o.id.clone(), || format!("{} fired {fired} times on {j} enabling events", o.id));
            } else if o.is_once_only() && fired >= 2 {
                c.at_node(id, o.id.clone(), || format!("once-only {} fired twice", o.id));
            }
        }
    }
    c.out
}

/// Whether `recipient` has any way to consume `event`.
pub fn consumes(model: &ContractModel, recipient: &Address, event: &str) -> bool {
    let Address::Party(r) = recipient else { return false };
    model.obligations.iter().any(|o| o.party == *r && o.enabling_event() == Some(event))
        || model.machine_of(r).is_some_and(|m| m.activities.iter().any(|a| a.trigger.as_deref() == Some(event)))
}

pub fn check_gasless_send(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::GaslessSend, graph);
    for (id, n) in graph.nodes.iter().enumerate() {
        for inst in &n.state.pool {
            if model.event(&inst.event).is_none() {
                c.at_node(id, inst.event.clone(), || format!("undeclared event {} was sent", inst.event));
            } else if !consumes(model, &inst.recipient, &inst.event) {
                let subject = format!("{}->{}", inst.event, inst.recipient);
                c.at_node(id, subject, || {
                    format!("{} sent to {}, which never consumes it", inst.event, inst.recipient)
                });
            }
        }
    }
    c.out
}

pub fn conserved_sum(g: &GlobalState, decl: &ConserveDecl) -> i64 {
    g.ints.iter().filter(|(s, _)| decl.vars.contains(&s.var)).map(|(_, v)| *v).sum()
}

pub fn check_lost_in_transfer(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::LostInTransfer, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        let Some(a) = executed(model, graph.state(e.source), &e.label) else { continue };
        for eff in &a.effects {
            let Effect::Transfer { var, to, .. } = eff else { continue };
            let lost = match to {
                TransferTarget::Orphan(addr) => Some(format!("\"{addr}\"")),
                TransferTarget::Party(PartyRef::Named(p)) if model.party(p).is_none() => Some(p.clone()),
                TransferTarget::Party(_) => None,
            };
            if let Some(dest) = lost {
                c.at_edge(i, a.name.clone(), || format!("{} transfers {var} to {dest}, outside the contract", a.name));
            }
        }
    }
    if let Some(init) = graph.nodes.first() {
        for decl in &model.conserves {
            let expected = conserved_sum(&init.state, decl);
            for (id, n) in graph.nodes.iter().enumerate() {
                let got = conserved_sum(&n.state, decl);
                if got != expected {
                    c.at_node(id, decl.to_string(), || format!("{decl} is {got}, expected {expected}"));
                }
            }
        }
    }
    c.out
}

pub fn check_call_to_unknown(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::CallToUnknown, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        let Some(o) = e.label.obligation.as_deref().and_then(|id| model.obligation(id)) else { continue };
        for f in &e.frame {
            if let Some(item) = o.frame.iter().find(|item| f.covered_by(item)) {
                c.at_edge(i, format!("{}:{item}", o.id), || {
                    format!("{} changed {f}, which its frame keeps unchanged", o.id)
                });
            }
        }
    }
    c.out
}

pub fn check_contract_consistency(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let mut c = Collector::new(ViolationKind::ContractInconsistency, graph);
    let participants = model.participants();
    for (id, n) in graph.nodes.iter().enumerate() {
        for f in &model.forbids {
            let at = |s: &str| {
                participants
                    .iter()
                    .filter(|p| n.state.local.get(**p).map(String::as_str) == Some(s))
                    .copied()
                    .collect::<Vec<_>>()
            };
            let (firsts, seconds) = (at(&f.first), at(&f.second));
            let pair = firsts.iter().flat_map(|a| seconds.iter().map(move |b| (*a, *b))).find(|(a, b)| a != b);
            if let Some((a, b)) = pair {
                let subject = format!("({}, {})", f.first, f.second);
                c.at_node(id, subject, || format!("{a} is {} while {b} is {}", f.first, f.second));
            }
        }
    }
    c.out
}

/// The value `decl` promises after `upon` fires in `pre`, and the slot it constrains.
fn promised(k: &Kernel<'_>, pre: &GlobalState, decl: &ConsiderationDecl) -> Option<(crate::kernel::IntSlot, i64)> {
    let slot = k.int_slot(&decl.target, &decl.party)?;
    let before = pre.int(&slot)?;
    let amount = k.eval_expr(pre, &decl.amount, &decl.party)?;
    let after = match decl.op {
        AssignOp::Sub => before - amount,
        AssignOp::Add => before + amount,
        AssignOp::Set => amount,
    };
    Some((slot, after))
}

pub fn check_payment_consistency(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let k = Kernel::new(model);
    let mut c = Collector::new(ViolationKind::PaymentInconsistency, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        let (pre, post) = (graph.state(e.source), graph.state(e.target));
        for d in model.considerations.iter().filter(|d| d.upon == e.label.activity) {
            let Some((slot, want)) = promised(&k, pre, d) else { continue };
            let got = post.int(&slot).unwrap_or_default();
            if got != want {
                c.at_edge(i, d.upon.clone(), || {
                    format!("after {} by {}, {slot} is {got}, expected {want}", d.upon, e.label.party)
                });
            }
        }
    }
    c.out
}

pub fn check_consideration(model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    let k = Kernel::new(model);
    let mut c = Collector::new(ViolationKind::ConsiderationMismatch, graph);
    for (i, e) in graph.edges.iter().enumerate() {
        let (pre, post) = (graph.state(e.source), graph.state(e.target));
        for d in &model.considerations {
            if d.upon == e.label.activity {
                if d.party != e.label.party {
                    continue;
                }
                let Some((slot, want)) = promised(&k, pre, d) else { continue };
                let got = post.int(&slot).unwrap_or_default();
                if got != want {
                    c.at_edge(i, d.party.clone(), || {
                        format!("{} gained {slot} = {got} on {}, expected {want}", d.party, d.upon)
                    });
                }
            } else if let Some(slot) = k.int_slot(&d.target, &d.party) {
                if pre.int(&slot) != post.int(&slot) {
                    c.at_edge(i, d.party.clone(), || {
                        format!("{slot} changed on {} outside its consideration {}", e.label.activity, d.upon)
                    });
                }
            }
        }
    }
    c.out
}

pub fn check(kind: ViolationKind, model: &ContractModel, graph: &StateGraph) -> Vec<Violation> {
    match kind {
        ViolationKind::ExtraState => check_extra_state(model, graph),
        ViolationKind::SneakPath => check_sneak_path(model, graph),
        ViolationKind::TrapDoor => check_trap_door(model, graph),
        ViolationKind::HiddenActivity => check_hidden_activity(model, graph),
        ViolationKind::Reentrancy => check_reentrancy(model, graph),
        ViolationKind::GaslessSend => check_gasless_send(model, graph),
        ViolationKind::LostInTransfer => check_lost_in_transfer(model, graph),
        ViolationKind::CallToUnknown => check_call_to_unknown(model, graph),
        ViolationKind::ContractInconsistency => check_contract_consistency(model, graph),
        ViolationKind::PaymentInconsistency => check_payment_consistency(model, graph),
        ViolationKind::ConsiderationMismatch => check_consideration(model, graph),
    }
}

/// Verdict for `kind` given whether it found anything.
pub fn verdict_for(kind: ViolationKind, model: &ContractModel, truncated: bool, found: bool) -> Verdict {
    if found {
        return Verdict::Fail;
    }
    match kind {
        ViolationKind::ContractInconsistency if model.forbids.is_empty() => {
            Verdict::Skipped("no forbid clause declared".into())
        }
        ViolationKind::PaymentInconsistency | ViolationKind::ConsiderationMismatch
            if model.considerations.is_empty() =>
        {
            Verdict::Skipped("no consideration declared".into())
        }
        _ if truncated => Verdict::Skipped("exploration was truncated".into()),
        _ => Verdict::Pass,
    }
}

pub fn run_all(model: &ContractModel, graph: &StateGraph) -> CheckReport {
    let mut violations = Vec::new();
    let mut verdicts = Vec::new();
    for kind in ViolationKind::ALL {
        let mut found = check(kind, model, graph);
        found.sort_by(|a, b| (a.trace.len(), &a.subject).cmp(&(b.trace.len(), &b.subject)));
        verdicts.push((kind, verdict_for(kind, model, graph.truncated, !found.is_empty())));
        violations.extend(found);
    }

    let mut warnings: Vec<String> = crate::model::validate_model(model)
        .into_iter()
        .filter(|d| d.severity == crate::model::Severity::Warning)
        .map(|d| format!("{}: {}", d.rule, d.message))
        .collect();
    for d in &model.considerations {
        if !graph.edges.iter().any(|e| e.label.activity == d.upon) {
            warnings.push(format!("consideration unexercised: {} upon {} never fires", d.party, d.upon));
        }
    }
    for b in &graph.bound_errors {
        warnings.push(format!("bound error: {} from node {}: {}", b.label, b.source, b.error));
    }

    CheckReport { model: model.name().to_string(), stats: GraphStats::of(graph), violations, verdicts, warnings }
}

//! Static well-formedness checks.
//!
//! Diagnostics come in two severities. Errors make the model unusable for
//! exploration (dangling references, ill-typed guards, out-of-range initials).
//! Warnings flag constructs that are executable but that a secure model should
//! not contain; injected mutations typically produce warnings, and the
//! checkers then report the concrete consequences.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StaticDiagnostic {
    pub severity: Severity,
    /// Name of the offending element.
    pub subject: String,
    /// Short name of the violated rule.
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for StaticDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {} [{}]: {}", self.subject, self.rule, self.message)
    }
}

struct Diags(Vec<StaticDiagnostic>);

impl Diags {
    fn error(&mut self, subject: &str, rule: &'static str, message: String) {
        self.push(Severity::Error, subject, rule, message);
    }

    fn warn(&mut self, subject: &str, rule: &'static str, message: String) {
        self.push(Severity::Warning, subject, rule, message);
    }

    fn push(&mut self, severity: Severity, subject: &str, rule: &'static str, message: String) {
        self.0.push(StaticDiagnostic { severity, subject: subject.to_string(), rule, message });
    }
}

/// Checks every structural invariant of `model`. Empty result means the model
/// is well-formed. Pure and deterministic: the order follows declaration order.
pub fn validate_model(model: &ContractModel) -> Vec<StaticDiagnostic> {
    let mut d = Diags(Vec::new());
    let name = model.spec.name.as_str();
    if name.is_empty() {
        d.error("<contract>", "empty contract name", "contract name is empty".into());
    }

    check_parties(model, &mut d);
    check_machines(model, &mut d);
    check_shared(model, &mut d);

    let mut seen = HashSet::new();
    for e in &model.events {
        if !seen.insert(e.name.as_str()) {
            d.error(&e.name, "duplicate event", format!("event '{}' declared twice", e.name));
        }
    }

    check_obligations(model, &mut d);
    check_declarations(model, &mut d);
    d.0
}

fn check_parties(model: &ContractModel, d: &mut Diags) {
    let mut seen = HashSet::new();
    for p in &model.parties {
        if !seen.insert(p.name.as_str()) {
            d.error(&p.name, "duplicate party", format!("party '{}' declared twice", p.name));
        }
        if model.machine(&p.machine).is_none() {
            d.error(
                &p.name,
                "unknown machine",
                format!("party '{}' is bound to undeclared machine '{}'", p.name, p.machine),
            );
        }
    }
    if model.participants().is_empty() {
        d.error(model.name(), "no participant", "at least one party must have role participant".into());
    }
}

fn check_machines(model: &ContractModel, d: &mut Diags) {
    let mut seen = HashSet::new();
    let referenced: BTreeSet<(&str, &str)> = model
        .obligations
        .iter()
        .filter_map(|o| model.party(&o.party).map(|p| (p.machine.as_str(), o.capability.as_str())))
        .collect();
    let event_names: HashSet<&str> = model.events.iter().map(|e| e.name.as_str()).collect();

    for m in &model.machines {
        if !seen.insert(m.name.as_str()) {
            d.error(&m.name, "duplicate machine", format!("machine '{}' declared twice", m.name));
        }
        let mut states = HashSet::new();
        for s in &m.states {
            if !states.insert(s.as_str()) {
                d.error(&m.name, "duplicate state", format!("state '{s}' listed twice in machine '{}'", m.name));
            }
        }
        if !m.has_state(&m.initial) {
            d.error(
                &m.name,
                "initial state undeclared",
                format!("initial state '{}' of machine '{}' is not in its state set", m.initial, m.name),
            );
        }
        let mut keys = HashSet::new();
        for a in &m.activities {
            let subject = format!("{}.{}", m.name, a.name);
            if !keys.insert((a.name.as_str(), a.source.as_str())) {
                d.error(
                    &subject,
                    "duplicate activity",
                    format!("activity '{}' from '{}' declared twice", a.name, a.source),
                );
            }
            if !m.has_state(&a.source) {
                d.error(
                    &subject,
                    "undeclared source state",
                    format!("activity '{}' leaves undeclared state '{}'", a.name, a.source),
                );
            }
            if !m.has_state(&a.target) {
                d.warn(
                    &subject,
                    "undeclared target state",
                    format!("activity '{}' enters state '{}' outside the whitelist", a.name, a.target),
                );
            }
            check_guard(model, &a.guard, &subject, d);
            for e in &a.effects {
                check_effect(model, e, &subject, d);
            }
            check_frame(model, &a.frame, &subject, d);
            for item in &a.frame {
                if let FrameItem::Var(v) = item {
                    if a.effects.iter().any(|e| e.written_vars().contains(&v.as_str())) {
                        d.error(
                            &subject,
                            "effect writes framed variable",
                            format!("activity '{}' writes '{v}' but declares it unchanged", a.name),
                        );
                    }
                }
            }
            if let Some(t) = &a.trigger {
                if !event_names.contains(t.as_str()) {
                    d.error(
                        &subject,
                        "trigger event undeclared",
                        format!("activity '{}' reacts to undeclared event '{t}'", a.name),
                    );
                }
                let mismatched = model.obligations.iter().any(|o| {
                    o.capability == a.name
                        && model.party(&o.party).is_some_and(|p| p.machine == m.name)
                        && o.enabling_event() != Some(t.as_str())
                });
                if mismatched {
                    d.warn(
                        &subject,
                        "trigger differs from enabling event",
                        format!("activity '{}' accepts '{t}', which its obligation does not declare", a.name),
                    );
                }
            }
            if !a.spontaneous && !referenced.contains(&(m.name.as_str(), a.name.as_str())) {
                d.warn(
                    &subject,
                    "unreachable capability",
                    format!("activity '{}' is referenced by no obligation", a.name),
                );
            }
        }
    }
}

fn check_shared(model: &ContractModel, d: &mut Diags) {
    let mut seen = HashSet::new();
    let mut pools = 0;
    for v in &model.shared {
        if !seen.insert(v.name.as_str()) {
            d.error(&v.name, "duplicate variable", format!("shared variable '{}' declared twice", v.name));
        }
        match &v.kind {
            VarKind::Int { lo, hi, init } => {
                if lo > hi {
                    d.error(&v.name, "empty range", format!("range {lo}..{hi} is empty"));
                } else if init < lo || init > hi {
                    d.error(&v.name, "initial out of bounds", format!("initial {init} outside {lo}..{hi}"));
                }
            }
            VarKind::PartyInt { lo, hi, init } => {
                if lo > hi {
                    d.error(&v.name, "empty range", format!("range {lo}..{hi} is empty"));
                }
                for (p, val) in init {
                    if model.party(p).is_none() {
                        d.error(&v.name, "unknown party", format!("initial value given for undeclared party '{p}'"));
                    }
                    if lo <= hi && (val < lo || val > hi) {
                        d.error(
                            &v.name,
                            "initial out of bounds",
                            format!("initial {val} for '{p}' outside {lo}..{hi}"),
                        );
                    }
                }
                for p in &model.parties {
                    if !init.contains_key(&p.name) {
                        d.error(&v.name, "initial missing party", format!("no initial value for party '{}'", p.name));
                    }
                }
            }
            VarKind::PartySet { init } => {
                for p in init {
                    if model.party(p).is_none() {
                        d.error(&v.name, "unknown party", format!("set contains undeclared party '{p}'"));
                    }
                }
            }
            VarKind::MsgPool => pools += 1,
        }
    }
    if pools != 1 {
        d.error(model.name(), "message pool count", format!("exactly one msgpool variable required, found {pools}"));
    }
}

fn check_obligations(model: &ContractModel, d: &mut Diags) {
    let mut seen = HashSet::new();
    for o in &model.obligations {
        let s = o.id.as_str();
        if !seen.insert(s) {
            d.error(s, "duplicate obligation", format!("obligation '{s}' declared twice"));
        }
        let machine = match model.party(&o.party) {
            None => {
                d.error(s, "unknown party", format!("obligation for undeclared party '{}'", o.party));
                None
            }
            Some(p) => model.machine(&p.machine),
        };
        if let Some(m) = machine {
            let acts: Vec<&Activity> = m.activities_named(&o.capability).collect();
            if acts.is_empty() {
                d.error(
                    s,
                    "unknown capability",
                    format!("'{}' is not an activity of machine '{}'", o.capability, m.name),
                );
            } else {
                let sources: BTreeSet<&str> = acts.iter().map(|a| a.source.as_str()).collect();
                let current: BTreeSet<&str> = o.current.iter().map(String::as_str).collect();
                if sources != current || acts.iter().any(|a| a.target != o.next) {
                    d.warn(
                        s,
                        "obligation does not match capability",
                        format!(
                            "obligation declares {} -> {} but '{}' implements different transitions",
                            o.current.join("|"),
                            o.next,
                            o.capability
                        ),
                    );
                }
            }
            for c in &o.current {
                if !m.has_state(c) {
                    d.error(s, "undeclared current state", format!("state '{c}' not in machine '{}'", m.name));
                }
            }
            if !m.has_state(&o.next) {
                d.warn(
                    s,
                    "undeclared next state",
                    format!("next state '{}' outside the whitelist of '{}'", o.next, m.name),
                );
            }
        }
        if let Some(en) = &o.enabling {
            match model.event(&en.event) {
                None => d.error(
                    s,
                    "enabling event undeclared",
                    format!("obligation '{s}' is enabled by '{}', which is not in the events universe", en.event),
                ),
                Some(ev) => {
                    if en.from.is_some() && !ev.carries_sender {
                        d.error(
                            s,
                            "sender pattern on senderless event",
                            format!("event '{}' records no sender", ev.name),
                        );
                    }
                }
            }
            if let Some(SenderPattern::Party(p)) = &en.from {
                if model.party(p).is_none() {
                    d.error(s, "unknown party", format!("sender pattern names undeclared party '{p}'"));
                }
            }
        }
        check_guard(model, &o.condition, s, d);
        if let Some(r) = &o.right {
            if model.event(&r.event).is_none() {
                d.warn(
                    s,
                    "requesting event undeclared",
                    format!("emits '{}', which is not in the events universe", r.event),
                );
            }
            for rc in &r.recipients {
                match rc {
                    Recipient::Party(p) if model.party(p).is_none() => {
                        d.error(s, "unknown party", format!("recipient '{p}' is not a declared party"))
                    }
                    Recipient::Orphan(a) => d.warn(s, "orphan recipient", format!("emits to orphan address \"{a}\"")),
                    Recipient::Sender if o.enabling.is_none() => {
                        d.error(s, "sender without enabling event", "recipient 'sender' needs an enabling event".into())
                    }
                    _ => {}
                }
            }
        }
        check_frame(model, &o.frame, s, d);
    }
}

fn check_declarations(model: &ContractModel, d: &mut Diags) {
    for c in &model.considerations {
        let subject = format!("consideration {}", c.party);
        match model.machine_of(&c.party) {
            None => d.error(&subject, "unknown party", format!("'{}' is not a declared party", c.party)),
            Some(m) => {
                if m.activities_named(&c.upon).next().is_none() {
                    d.error(
                        &subject,
                        "unknown capability",
                        format!("'{}' is not an activity of machine '{}'", c.upon, m.name),
                    );
                }
            }
        }
        check_int_ref(model, &c.target, &subject, d);
        check_expr(model, &c.amount, &subject, d);
        if c.op == AssignOp::Set {
            d.error(&subject, "consideration is a delta", "consideration must use += or -=".into());
        }
    }
    let participant_states: HashSet<&str> = model
        .participants()
        .iter()
        .filter_map(|p| model.machine_of(p))
        .flat_map(|m| m.states.iter().map(String::as_str))
        .collect();
    for f in &model.forbids {
        for s in [&f.first, &f.second] {
            if !participant_states.contains(s.as_str()) {
                d.error(
                    &format!("forbid ({}, {})", f.first, f.second),
                    "undeclared forbidden state",
                    format!("'{s}' is not a participant state"),
                );
            }
        }
    }
    for c in &model.conserves {
        for v in &c.vars {
            if !model.shared_var(v).is_some_and(|x| x.kind.is_integer()) {
                d.error(&c.to_string(), "conserved variable not integer", format!("'{v}' is not an integer variable"));
            }
        }
    }
}

fn check_party_ref(model: &ContractModel, p: &PartyRef, subject: &str, d: &mut Diags) {
    if let PartyRef::Named(n) = p {
        if model.party(n).is_none() {
            d.error(subject, "unknown party", format!("'{n}' is not a declared party"));
        }
    }
}

fn check_int_ref(model: &ContractModel, r: &IntRef, subject: &str, d: &mut Diags) {
    match model.shared_var(&r.var).map(|v| &v.kind) {
        None => d.error(subject, "unknown variable", format!("'{}' is not a shared variable", r.var)),
        Some(VarKind::Int { .. }) => {
            if r.index.is_some() {
                d.error(subject, "ill-typed reference", format!("'{}' is not party-indexed", r.var));
            }
        }
        Some(VarKind::PartyInt { .. }) => match &r.index {
            None => d.error(subject, "ill-typed reference", format!("'{}' needs a party index", r.var)),
            Some(p) => check_party_ref(model, p, subject, d),
        },
        Some(_) => d.error(subject, "ill-typed reference", format!("'{}' is not an integer variable", r.var)),
    }
}

fn check_expr(model: &ContractModel, e: &Expr, subject: &str, d: &mut Diags) {
    for r in e.refs() {
        check_int_ref(model, r, subject, d);
    }
}

fn check_set_var(model: &ContractModel, set: &str, subject: &str, d: &mut Diags) {
    if !matches!(model.shared_var(set).map(|v| &v.kind), Some(VarKind::PartySet { .. })) {
        d.error(subject, "ill-typed reference", format!("'{set}' is not a partyset variable"));
    }
}

fn check_guard(model: &ContractModel, g: &Guard, subject: &str, d: &mut Diags) {
    for atom in &g.atoms {
        match atom {
            Atom::Cmp { lhs, rhs, .. } => {
                for o in [lhs, rhs] {
                    if let Operand::Var(r) = o {
                        check_int_ref(model, r, subject, d);
                    }
                }
            }
            Atom::Member { party, set, .. } => {
                check_party_ref(model, party, subject, d);
                check_set_var(model, set, subject, d);
            }
            Atom::AllParticipants { set } => check_set_var(model, set, subject, d),
        }
    }
}

fn check_effect(model: &ContractModel, e: &Effect, subject: &str, d: &mut Diags) {
    match e {
        Effect::Assign { target, value, .. } => {
            check_int_ref(model, target, subject, d);
            check_expr(model, value, subject, d);
        }
        Effect::Transfer { var, amount, from, to } => {
            if !matches!(model.shared_var(var).map(|v| &v.kind), Some(VarKind::PartyInt { .. })) {
                d.error(subject, "ill-typed reference", format!("'{var}' is not a party-indexed integer"));
            }
            check_expr(model, amount, subject, d);
            check_party_ref(model, from, subject, d);
            match to {
                TransferTarget::Party(PartyRef::Named(p)) if model.party(p).is_none() => d.warn(
                    subject,
                    "transfer to undeclared party",
                    format!("value sent to '{p}', which is not a party"),
                ),
                TransferTarget::Orphan(a) => {
                    d.warn(subject, "transfer to orphan address", format!("value sent to orphan address \"{a}\""))
                }
                _ => {}
            }
        }
        Effect::Insert { party, set } => {
            check_party_ref(model, party, subject, d);
            check_set_var(model, set, subject, d);
        }
        Effect::Move { party, state } => match model.machine_of(party) {
            None => d.error(subject, "unknown party", format!("'{party}' is not a declared party")),
            Some(m) => {
                if !m.has_state(state) {
                    d.warn(
                        subject,
                        "undeclared target state",
                        format!("moves '{party}' into undeclared state '{state}'"),
                    );
                }
            }
        },
    }
}

fn check_frame(model: &ContractModel, frame: &[FrameItem], subject: &str, d: &mut Diags) {
    for item in frame {
        match item {
            FrameItem::Var(v) if model.shared_var(v).is_none() => {
                d.error(subject, "unknown variable", format!("frame names undeclared variable '{v}'"))
            }
            FrameItem::LocalState(p) if model.party(p).is_none() => {
                d.error(subject, "unknown party", format!("frame names undeclared party '{p}'"))
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../../../fixtures/realestate.csl");

    fn rules(src: &str) -> Vec<(Severity, &'static str)> {
        let m = crate::parse(src).unwrap();
        validate_model(&m).into_iter().map(|d| (d.severity, d.rule)).collect()
    }

    fn errors(src: &str) -> Vec<&'static str> {
        rules(src).into_iter().filter(|(s, _)| *s == Severity::Error).map(|(_, r)| r).collect()
    }

    #[test]
    fn fixture_is_clean() {
        assert!(errors(FIXTURE).is_empty());
    }

    #[test]
    fn undeclared_names() {
        let src = FIXTURE.replace("activity join: Waiting -> Joined", "activity join: Limbo -> Joined");
        assert!(errors(&src).contains(&"undeclared source state"));
        let src = FIXTURE.replace("then emit sign_msg to buyer, seller", "then emit sold_msg to buyer, seller");
        assert!(rules(&src).contains(&(Severity::Warning, "requesting event undeclared")));
        let src = FIXTURE.replace("party pm role manager machine manager_m", "party pm role manager machine nope_m");
        assert!(errors(&src).contains(&"unknown machine"));
    }

    #[test]
    fn bounds_and_types() {
        let src = FIXTURE.replace("buyer: 25", "buyer: 250");
        assert_eq!(errors(&src), ["initial out of bounds"]);
        let src = FIXTURE.replace("conserve sum(balance)", "conserve sum(joined_set)");
        assert_eq!(errors(&src), ["conserved variable not integer"]);
        let src = FIXTURE.replace("int[0..100] = 10", "int[5..1] = 3");
        assert!(errors(&src).contains(&"empty range"));
    }

    #[test]
    fn obligations_must_match_their_capability() {
        let src =
            FIXTURE.replace("require state Init do prepare_sign -> Done", "require state Init do prepare_sign -> Init");
        assert!(errors(&src).is_empty());
        assert!(rules(&src).contains(&(Severity::Warning, "obligation does not match capability")));
        let src = FIXTURE.replace("do prepare_sign -> Done", "do publish -> Done");
        assert_eq!(errors(&src), ["unknown capability"]);
        // an obligation frame breach is a runtime finding, not a static one
        let src = FIXTURE.replace("frame unchanged balance\n", "frame unchanged joined_set\n");
        assert!(errors(&src).is_empty());
    }

    #[test]
    fn extra_states_only_warn() {
        let src = FIXTURE.replace("activity join: Waiting -> Joined", "activity join: Waiting -> Limbo");
        assert!(errors(&src).is_empty());
        assert!(rules(&src).contains(&(Severity::Warning, "undeclared target state")));
    }

    #[test]
    fn orphan_transfers_only_warn() {
        let src = FIXTURE.replace("from buyer to seller", "from buyer to \"0xdead\"");
        let r = rules(&src);
        assert!(r.contains(&(Severity::Warning, "transfer to orphan address")), "{r:?}");
        assert!(errors(&src).is_empty());
    }

    #[test]
    fn order_is_stable() {
        let src = FIXTURE.replace("join: Waiting", "join: Nowhere").replace("buyer: 25", "buyer: 250");
        let m = crate::parse(&src).unwrap();
        assert_eq!(validate_model(&m), validate_model(&m));
        assert!(errors(&src).len() >= 2);
    }
}

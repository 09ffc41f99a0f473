//! Operational semantics of a contract model.
//!
//! The kernel executes the *implementation* layer: party machines perform
//! their activities when the obligation's enabling event is in the message
//! pool and the activity's guard holds. The contract-level whitelist
//! (declared states, obligation conditions, frames) is never enforced here;
//! the checkers compare what the kernel does against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::*;

/// Firing and emission counters saturate here ("zero, one, many").
pub const COUNT_CAP: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IntSlot {
    pub var: String,
    pub party: Option<String>,
}

impl fmt::Display for IntSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.party {
            Some(p) => write!(f, "{}[{p}]", self.var),
            None => f.write_str(&self.var),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Address {
    Party(String),
    Orphan(String),
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Party(p) => f.write_str(p),
            Address::Orphan(a) => write!(f, "\"{a}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EventInstance {
    pub event: String,
    pub sender: Option<String>,
    pub recipient: Address,
}

impl fmt::Display for EventInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sender {
            Some(s) => write!(f, "{}({s}->{})", self.event, self.recipient),
            None => write!(f, "{}(->{})", self.event, self.recipient),
        }
    }
}

/// One node of the composed system. Zero counters are absent from the maps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GlobalState {
    pub local: BTreeMap<String, String>,
    pub ints: BTreeMap<IntSlot, i64>,
    pub sets: BTreeMap<String, BTreeSet<String>>,
    pub pool: BTreeSet<EventInstance>,
    pub fired: BTreeMap<String, u8>,
    pub event_counts: BTreeMap<EventInstance, u8>,
}

fn lp(out: &mut String, s: &str) {
    out.push_str(&s.len().to_string());
    out.push(':');
    out.push_str(s);
}

impl GlobalState {
    pub fn int(&self, slot: &IntSlot) -> Option<i64> {
        self.ints.get(slot).copied()
    }

    pub fn fired(&self, obligation: &str) -> u8 {
        self.fired.get(obligation).copied().unwrap_or(0)
    }

    pub fn event_count(&self, inst: &EventInstance) -> u8 {
        self.event_counts.get(inst).copied().unwrap_or(0)
    }

    /// Sorted, length-prefixed serialization. Two states are equal iff their
    /// canonical forms are equal.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        out.push_str("L{");
        for (p, s) in &self.local {
            lp(&mut out, p);
            lp(&mut out, s);
        }
        out.push_str("}I{");
        for (slot, v) in &self.ints {
            lp(&mut out, &slot.to_string());
            lp(&mut out, &v.to_string());
        }
        out.push_str("}S{");
        for (name, members) in &self.sets {
            lp(&mut out, name);
            out.push_str(&members.len().to_string());
            for m in members {
                lp(&mut out, m);
            }
        }
        out.push_str("}P{");
        for inst in &self.pool {
            lp(&mut out, &inst.to_string());
        }
        out.push_str("}F{");
        for (o, n) in &self.fired {
            lp(&mut out, o);
            out.push_str(&n.to_string());
        }
        out.push_str("}E{");
        for (inst, n) in &self.event_counts {
            lp(&mut out, &inst.to_string());
            out.push_str(&n.to_string());
        }
        out.push('}');
        out
    }
}

impl fmt::Display for GlobalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let local: Vec<String> = self.local.iter().map(|(p, s)| format!("{p}={s}")).collect();
        write!(f, "[{}]", local.join(", "))?;
        for (slot, v) in &self.ints {
            write!(f, " {slot}={v}")?;
        }
        for (name, members) in &self.sets {
            let m: Vec<&str> = members.iter().map(String::as_str).collect();
            write!(f, " {name}={{{}}}", m.join(","))?;
        }
        if !self.pool.is_empty() {
            let p: Vec<String> = self.pool.iter().map(ToString::to_string).collect();
            write!(f, " pool={{{}}}", p.join(","))?;
        }
        Ok(())
    }
}

/// Identifies one step: which party performs which activity, on behalf of
/// which obligation, triggered by an event from which sender.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StepLabel {
    pub party: String,
    pub obligation: Option<String>,
    pub activity: String,
    pub sender: Option<String>,
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.party, self.obligation.as_deref().unwrap_or("-"), self.activity)?;
        if let Some(s) = &self.sender {
            write!(f, "({s})")?;
        }
        Ok(())
    }
}

/// A variable of the global state, at the granularity frames are reported.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameVar {
    Local(String),
    Int(IntSlot),
    Set(String),
    Pool(String),
}

impl FrameVar {
    pub fn covered_by(&self, item: &FrameItem) -> bool {
        match (self, item) {
            (FrameVar::Local(p), FrameItem::LocalState(q)) => p == q,
            (FrameVar::Int(slot), FrameItem::Var(v)) => slot.var == *v,
            (FrameVar::Set(s) | FrameVar::Pool(s), FrameItem::Var(v)) => s == v,
            _ => false,
        }
    }
}

impl fmt::Display for FrameVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameVar::Local(p) => write!(f, "state[{p}]"),
            FrameVar::Int(slot) => write!(f, "{slot}"),
            FrameVar::Set(s) | FrameVar::Pool(s) => f.write_str(s),
        }
    }
}

/// Every variable whose value differs before and after a step.
pub type FrameReport = BTreeSet<FrameVar>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: GlobalState,
    pub frame: FrameReport,
    /// Event type the step reacted to, if any.
    pub consumed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("step {0} is not enabled")]
    IllegalStep(StepLabel),
    #[error("{slot} would become {value}, outside {lo}..{hi}")]
    BoundsViolation { slot: String, value: i64, lo: i64, hi: i64 },
    #[error("evaluation failed: {0}")]
    Eval(String),
}

#[derive(Clone, Copy)]
struct Ctx<'a> {
    party: &'a str,
    sender: Option<&'a str>,
}

/// Semantics of one validated model.
pub struct Kernel<'m> {
    model: &'m ContractModel,
    participants: Vec<String>,
    pool_name: String,
}

impl<'m> Kernel<'m> {
    pub fn new(model: &'m ContractModel) -> Self {
        Self {
            model,
            participants: model.participants().into_iter().map(String::from).collect(),
            pool_name: model.pool_var().unwrap_or("pool").to_string(),
        }
    }

    pub fn model(&self) -> &'m ContractModel {
        self.model
    }

    pub fn initial_state(&self) -> GlobalState {
        let mut g = GlobalState::default();
        for p in &self.model.parties {
            if let Some(m) = self.model.machine(&p.machine) {
                g.local.insert(p.name.clone(), m.initial.clone());
            }
        }
        for v in &self.model.shared {
            match &v.kind {
                VarKind::Int { init, .. } => {
                    g.ints.insert(IntSlot { var: v.name.clone(), party: None }, *init);
                }
                VarKind::PartyInt { init, .. } => {
                    for (p, val) in init {
                        g.ints.insert(IntSlot { var: v.name.clone(), party: Some(p.clone()) }, *val);
                    }
                }
                VarKind::PartySet { init } => {
                    g.sets.insert(v.name.clone(), init.clone());
                }
                VarKind::MsgPool => {}
            }
        }
        g
    }

    /// Enabled steps in canonical order (party, obligation, activity, sender).
    pub fn enabled(&self, g: &GlobalState) -> Vec<StepLabel> {
        let mut out = Vec::new();
        for party in &self.model.parties {
            let p = party.name.as_str();
            let (Some(m), Some(local)) = (self.model.machine(&party.machine), g.local.get(p)) else {
                continue;
            };
            for o in self.model.obligations.iter().filter(|o| o.party == p) {
                let Some(a) = m.activity(&o.capability, local) else { continue };
                for sender in self.trigger_senders(g, p, o, a) {
                    if self.can_fire(g, a, Ctx { party: p, sender: sender.as_deref() }) {
                        out.push(StepLabel {
                            party: p.to_string(),
                            obligation: Some(o.id.clone()),
                            activity: a.name.clone(),
                            sender,
                        });
                    }
                }
            }
            for a in m.activities.iter().filter(|a| a.spontaneous && a.source == *local) {
                if self.can_fire(g, a, Ctx { party: p, sender: None }) {
                    out.push(StepLabel {
                        party: p.to_string(),
                        obligation: None,
                        activity: a.name.clone(),
                        sender: None,
                    });
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Senders for which the obligation's trigger is satisfied. `[None]` means
    /// satisfied without a distinguished sender; empty means not satisfied.
    fn trigger_senders(&self, g: &GlobalState, p: &str, o: &Obligation, a: &Activity) -> Vec<Option<String>> {
        let distinct = |it: &mut dyn Iterator<Item = &EventInstance>| -> Vec<Option<String>> {
            let set: BTreeSet<Option<String>> = it.map(|i| i.sender.clone()).collect();
            set.into_iter().collect()
        };
        if let Some(t) = &a.trigger {
            return distinct(&mut g.pool.iter().filter(|i| i.event == *t));
        }
        let Some(en) = &o.enabling else { return vec![None] };
        let me = Address::Party(p.to_string());
        let mut addressed = g.pool.iter().filter(|i| i.event == en.event && i.recipient == me);
        match &en.from {
            None => distinct(&mut addressed),
            Some(SenderPattern::Party(q)) => {
                if addressed.any(|i| i.sender.as_deref() == Some(q.as_str())) {
                    vec![Some(q.clone())]
                } else {
                    vec![]
                }
            }
            Some(SenderPattern::AnyParticipant) => {
                distinct(&mut addressed.filter(|i| i.sender.as_ref().is_some_and(|s| self.participants.contains(s))))
            }
            Some(SenderPattern::AllParticipants) => {
                let senders: BTreeSet<&str> = addressed.filter_map(|i| i.sender.as_deref()).collect();
                if self.participants.iter().all(|s| senders.contains(s.as_str())) {
                    vec![None]
                } else {
                    vec![]
                }
            }
        }
    }

    fn can_fire(&self, g: &GlobalState, a: &Activity, ctx: Ctx<'_>) -> bool {
        if ctx.sender.is_none() && activity_mentions_sender(a) {
            return false;
        }
        self.eval_guard(g, &a.guard, ctx).unwrap_or(false)
    }

    /// Performs `label`, which must be enabled in `g`.
    pub fn step(&self, g: &GlobalState, label: &StepLabel) -> Result<StepOutcome, StepError> {
        if !self.enabled(g).contains(label) {
            return Err(StepError::IllegalStep(label.clone()));
        }
        self.apply(g, label)
    }

    /// Every enabled step together with its outcome.
    pub fn successors(&self, g: &GlobalState) -> Vec<(StepLabel, Result<StepOutcome, StepError>)> {
        self.enabled(g)
            .into_iter()
            .map(|l| {
                let r = self.apply(g, &l);
                (l, r)
            })
            .collect()
    }

    fn apply(&self, g: &GlobalState, label: &StepLabel) -> Result<StepOutcome, StepError> {
        let illegal = || StepError::IllegalStep(label.clone());
        let p = label.party.as_str();
        let m = self.model.machine_of(p).ok_or_else(illegal)?;
        let local = g.local.get(p).ok_or_else(illegal)?;
        let a = m.activity(&label.activity, local).ok_or_else(illegal)?;
        let o = match &label.obligation {
            Some(id) => Some(self.model.obligation(id).ok_or_else(illegal)?),
            None => None,
        };
        let ctx = Ctx { party: p, sender: label.sender.as_deref() };

        let mut next = g.clone();
        next.local.insert(p.to_string(), a.target.clone());
        for e in &a.effects {
            self.apply_effect(&mut next, e, ctx)?;
        }
        if let Some(o) = o {
            if let Some(r) = &o.right {
                self.emit(&mut next, r, ctx);
            }
            let n = next.fired.entry(o.id.clone()).or_insert(0);
            *n = (*n + 1).min(COUNT_CAP);
        }
        let consumed = a.trigger.clone().or_else(|| o.and_then(|o| o.enabling_event().map(String::from)));
        let frame = self.frame_diff(g, &next);
        Ok(StepOutcome { state: next, frame, consumed })
    }

    fn emit(&self, next: &mut GlobalState, r: &Right, ctx: Ctx<'_>) {
        let sender = self.model.event(&r.event).filter(|e| e.carries_sender).map(|_| ctx.party.to_string());
        let mut to = Vec::new();
        for rc in &r.recipients {
            match rc {
                Recipient::Party(n) => to.push(Address::Party(n.clone())),
                Recipient::Participants => to.extend(self.participants.iter().cloned().map(Address::Party)),
                Recipient::SelfParty => to.push(Address::Party(ctx.party.to_string())),
                Recipient::Sender => to.extend(ctx.sender.map(|s| Address::Party(s.to_string()))),
                Recipient::Orphan(a) => to.push(Address::Orphan(a.clone())),
            }
        }
        for recipient in to {
            let inst = EventInstance { event: r.event.clone(), sender: sender.clone(), recipient };
            next.pool.insert(inst.clone());
            let n = next.event_counts.entry(inst).or_insert(0);
            *n = (*n + 1).min(COUNT_CAP);
        }
    }

    fn apply_effect(&self, next: &mut GlobalState, e: &Effect, ctx: Ctx<'_>) -> Result<(), StepError> {
        match e {
            Effect::Assign { target, op, value } => {
                let slot = self.slot(target, ctx)?;
                let v = self.eval(next, value, ctx)?;
                let cur = self.read(next, &slot)?;
                let new = match op {
                    AssignOp::Set => Some(v),
                    AssignOp::Add => cur.checked_add(v),
                    AssignOp::Sub => cur.checked_sub(v),
                }
                .ok_or_else(|| StepError::Eval(format!("arithmetic overflow on {slot}")))?;
                self.write(next, slot, new)
            }
            Effect::Transfer { var, amount, from, to } => {
                let amt = self.eval(next, amount, ctx)?;
                let from = resolve(from, ctx).ok_or_else(|| StepError::Eval("unresolved transfer source".into()))?;
                let from_slot = IntSlot { var: var.clone(), party: Some(from) };
                let cur = self.read(next, &from_slot)?;
                self.write(next, from_slot, cur - amt)?;
                if let TransferTarget::Party(r) = to {
                    let dest = resolve(r, ctx).ok_or_else(|| StepError::Eval("unresolved transfer target".into()))?;
                    // value sent to a non-party is gone
                    if self.model.party(&dest).is_some() {
                        let to_slot = IntSlot { var: var.clone(), party: Some(dest) };
                        let cur = self.read(next, &to_slot)?;
                        self.write(next, to_slot, cur + amt)?;
                    }
                }
                Ok(())
            }
            Effect::Insert { party, set } => {
                let who = resolve(party, ctx).ok_or_else(|| StepError::Eval("unresolved party".into()))?;
                next.sets.entry(set.clone()).or_default().insert(who);
                Ok(())
            }
            Effect::Move { party, state } => {
                next.local.insert(party.clone(), state.clone());
                Ok(())
            }
        }
    }

    fn slot(&self, r: &IntRef, ctx: Ctx<'_>) -> Result<IntSlot, StepError> {
        let party = match &r.index {
            None => None,
            Some(p) => Some(resolve(p, ctx).ok_or_else(|| StepError::Eval(format!("cannot resolve index of {r}")))?),
        };
        Ok(IntSlot { var: r.var.clone(), party })
    }

    fn read(&self, g: &GlobalState, slot: &IntSlot) -> Result<i64, StepError> {
        g.int(slot).ok_or_else(|| StepError::Eval(format!("no value for {slot}")))
    }

    fn write(&self, next: &mut GlobalState, slot: IntSlot, value: i64) -> Result<(), StepError> {
        if let Some((lo, hi)) = self.model.shared_var(&slot.var).and_then(|v| v.kind.bounds()) {
            if value < lo || value > hi {
                return Err(StepError::BoundsViolation { slot: slot.to_string(), value, lo, hi });
            }
        }
        next.ints.insert(slot, value);
        Ok(())
    }

    fn eval(&self, g: &GlobalState, e: &Expr, ctx: Ctx<'_>) -> Result<i64, StepError> {
        let overflow = || StepError::Eval("arithmetic overflow".into());
        match e {
            Expr::Lit(n) => Ok(*n),
            Expr::Var(r) => self.read(g, &self.slot(r, ctx)?),
            Expr::Neg(x) => self.eval(g, x, ctx)?.checked_neg().ok_or_else(overflow),
            Expr::Bin(a, op, b) => {
                let (x, y) = (self.eval(g, a, ctx)?, self.eval(g, b, ctx)?);
                match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    BinOp::Mul => x.checked_mul(y),
                }
                .ok_or_else(overflow)
            }
        }
    }

    fn operand(&self, g: &GlobalState, o: &Operand, ctx: Ctx<'_>) -> Result<i64, StepError> {
        match o {
            Operand::Lit(n) => Ok(*n),
            Operand::Var(r) => self.read(g, &self.slot(r, ctx)?),
        }
    }

    fn eval_guard(&self, g: &GlobalState, guard: &Guard, ctx: Ctx<'_>) -> Result<bool, StepError> {
        for atom in &guard.atoms {
            let holds = match atom {
                Atom::Cmp { lhs, op, rhs } => op.holds(self.operand(g, lhs, ctx)?, self.operand(g, rhs, ctx)?),
                Atom::Member { party, set, negated } => {
                    let who = resolve(party, ctx).ok_or_else(|| StepError::Eval("unresolved party".into()))?;
                    let member = g.sets.get(set).is_some_and(|s| s.contains(&who));
                    member != *negated
                }
                Atom::AllParticipants { set } => {
                    let members = g.sets.get(set).cloned().unwrap_or_default();
                    members.len() == self.participants.len() && self.participants.iter().all(|p| members.contains(p))
                }
            };
            if !holds {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Evaluates a guard at `g` for `party`, e.g. an obligation's condition.
    pub fn guard_holds(&self, g: &GlobalState, guard: &Guard, party: &str, sender: Option<&str>) -> bool {
        self.eval_guard(g, guard, Ctx { party, sender }).unwrap_or(false)
    }

    /// Evaluates an integer expression at `g` for `party`.
    pub fn eval_expr(&self, g: &GlobalState, e: &Expr, party: &str) -> Option<i64> {
        self.eval(g, e, Ctx { party, sender: None }).ok()
    }

    /// Resolves an integer reference for `party`.
    pub fn int_slot(&self, r: &IntRef, party: &str) -> Option<IntSlot> {
        self.slot(r, Ctx { party, sender: None }).ok()
    }

    fn frame_diff(&self, before: &GlobalState, after: &GlobalState) -> FrameReport {
        let mut out = FrameReport::new();
        let keys: BTreeSet<&String> = before.local.keys().chain(after.local.keys()).collect();
        for k in keys {
            if before.local.get(k) != after.local.get(k) {
                out.insert(FrameVar::Local(k.clone()));
            }
        }
        let slots: BTreeSet<&IntSlot> = before.ints.keys().chain(after.ints.keys()).collect();
        for s in slots {
            if before.ints.get(s) != after.ints.get(s) {
                out.insert(FrameVar::Int(s.clone()));
            }
        }
        let sets: BTreeSet<&String> = before.sets.keys().chain(after.sets.keys()).collect();
        for s in sets {
            let empty = BTreeSet::new();
            if before.sets.get(s).unwrap_or(&empty) != after.sets.get(s).unwrap_or(&empty) {
                out.insert(FrameVar::Set(s.clone()));
            }
        }
        if before.pool != after.pool {
            out.insert(FrameVar::Pool(self.pool_name.clone()));
        }
        out
    }
}

fn resolve(p: &PartyRef, ctx: Ctx<'_>) -> Option<String> {
    match p {
        PartyRef::SelfParty => Some(ctx.party.to_string()),
        PartyRef::Sender => ctx.sender.map(String::from),
        PartyRef::Named(n) => Some(n.clone()),
    }
}

pub(crate) fn activity_mentions_sender(a: &Activity) -> bool {
    let is_sender = |p: &PartyRef| *p == PartyRef::Sender;
    let ref_sender = |r: &IntRef| r.index.as_ref().is_some_and(is_sender);
    let expr_sender = |e: &Expr| e.refs().into_iter().any(ref_sender);
    a.guard.atoms.iter().any(|atom| match atom {
        Atom::Cmp { lhs, rhs, .. } => [lhs, rhs].iter().any(|o| matches!(o, Operand::Var(r) if ref_sender(r))),
        Atom::Member { party, .. } => is_sender(party),
        Atom::AllParticipants { .. } => false,
    }) || a.effects.iter().any(|e| match e {
        Effect::Assign { target, value, .. } => ref_sender(target) || expr_sender(value),
        Effect::Transfer { amount, from, to, .. } => {
            expr_sender(amount) || is_sender(from) || matches!(to, TransferTarget::Party(p) if is_sender(p))
        }
        Effect::Insert { party, .. } => is_sender(party),
        Effect::Move { .. } => false,
    })
}

pub fn initial_state(model: &ContractModel) -> GlobalState {
    Kernel::new(model).initial_state()
}

pub fn enabled(model: &ContractModel, g: &GlobalState) -> Vec<StepLabel> {
    Kernel::new(model).enabled(g)
}

pub fn step(model: &ContractModel, g: &GlobalState, label: &StepLabel) -> Result<StepOutcome, StepError> {
    Kernel::new(model).step(g, label)
}

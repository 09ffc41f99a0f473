//! Planting one known flaw into a clean model.

use std::fmt;

use thiserror::Error;

use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MutationKind {
    ExtraState,
    SneakPath,
    TrapDoor,
    HiddenActivity,
    Reentrancy,
    GaslessSend,
    LostInTransfer,
    CallToUnknown,
}

impl MutationKind {
    pub const ALL: [MutationKind; 8] = [
        MutationKind::ExtraState,
        MutationKind::SneakPath,
        MutationKind::TrapDoor,
        MutationKind::HiddenActivity,
        MutationKind::Reentrancy,
        MutationKind::GaslessSend,
        MutationKind::LostInTransfer,
        MutationKind::CallToUnknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationKind::ExtraState => "ExtraState",
            MutationKind::SneakPath => "SneakPath",
            MutationKind::TrapDoor => "TrapDoor",
            MutationKind::HiddenActivity => "HiddenActivity",
            MutationKind::Reentrancy => "Reentrancy",
            MutationKind::GaslessSend => "GaslessSend",
            MutationKind::LostInTransfer => "LostInTransfer",
            MutationKind::CallToUnknown => "CallToUnknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub kind: MutationKind,
    pub target: Option<String>,
    pub param: Option<String>,
}

impl Mutation {
    pub fn new(kind: MutationKind) -> Self {
        Self { kind, target: None, param: None }
    }

    pub fn at(mut self, target: &str) -> Self {
        self.target = Some(target.to_string());
        self
    }

    pub fn with(mut self, param: &str) -> Self {
        self.param = Some(param.to_string());
        self
    }

    /// Reads `Kind[@target][=param]`.
    pub fn parse(s: &str) -> Option<Self> {
        let (head, param) = match s.split_once('=') {
            Some((h, p)) => (h, Some(p.to_string())),
            None => (s, None),
        };
        let (kind, target) = match head.split_once('@') {
            Some((k, t)) => (k, Some(t.to_string())),
            None => (head, None),
        };
        let kind = MutationKind::parse(kind)?;
        if target.as_deref() == Some("") || param.as_deref() == Some("") {
            return None;
        }
        Some(Self { kind, target, param })
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(t) = &self.target {
            write!(f, "@{t}")?;
        }
        if let Some(p) = &self.param {
            write!(f, "={p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("unknown target '{target}' for {kind}; applicable targets: {}", list(.applicable))]
    UnknownTarget { kind: MutationKind, target: String, applicable: Vec<String> },
    #[error("{kind} is not applicable: {reason}; applicable targets: {}", list(.applicable))]
    Inapplicable { kind: MutationKind, reason: String, applicable: Vec<String> },
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(", ")
    }
}

/// Returns a copy of `model` with the flaw described by `m` planted and
/// recorded in `mutations`. Initial values are adjusted where the flaw would
/// otherwise be unreachable.
pub fn inject(model: &ContractModel, m: &Mutation) -> Result<ContractModel, InjectError> {
    let applicable = applicable_targets(model, m);
    let inapplicable =
        |reason: String| InjectError::Inapplicable { kind: m.kind, reason, applicable: applicable.clone() };
    if model.mutations.iter().any(|x| x.kind == m.kind) {
        return Err(inapplicable(format!("model already carries a {} mutation", m.kind)));
    }
    let target = match &m.target {
        Some(t) if applicable.contains(t) => t.clone(),
        Some(t) => return Err(InjectError::UnknownTarget { kind: m.kind, target: t.clone(), applicable }),
        None => default_target(model, m.kind, &applicable).ok_or_else(|| inapplicable("no suitable target".into()))?,
    };

    let mut out = model.clone();
    match m.kind {
        MutationKind::ExtraState => {
            let state = m.param.clone().unwrap_or_else(|| "Limbo".into());
            let mach = out.machine(&target).expect("applicable target");
            if mach.has_state(&state) {
                return Err(inapplicable(format!("{target} already declares {state}")));
            }
            let from = exit_state(mach).expect("applicable target").to_string();
            let party = out.parties.iter().find(|p| p.machine == target).map(|p| p.name.clone()).expect("bound party");
            add_activity(&mut out, &target, Activity::new("stray", &from, &state), &inapplicable)?;
            add_obligation(&mut out, &party, "stray", vec![from], &state, &inapplicable)?;
        }
        MutationKind::SneakPath => {
            let mach = machine_with(&out, &target).expect("applicable target");
            if let Some(src) = &m.param {
                let orig = out.machine(&mach).unwrap().activities_named(&target).next().unwrap().clone();
                if !out.machine(&mach).unwrap().has_state(src) {
                    return Err(inapplicable(format!("{mach} has no state {src}")));
                }
                add_activity(&mut out, &mach, Activity { source: src.clone(), ..orig }, &inapplicable)?;
            } else {
                let guard = out.machine(&mach).unwrap().activities_named(&target).next().unwrap().guard.clone();
                for a in out.machine_mut(&mach).unwrap().activities.iter_mut().filter(|a| a.name == target) {
                    a.guard = Guard::truth();
                }
                lower_guarded_value(&mut out, &target, &guard);
            }
        }
        MutationKind::TrapDoor => {
            let o = out.obligation(&target).cloned().expect("applicable target");
            let mach = out.party(&o.party).map(|p| p.machine.clone()).expect("bound party");
            if let Some(ev) = &m.param {
                for a in out.machine_mut(&mach).unwrap().activities.iter_mut().filter(|a| a.name == o.capability) {
                    a.trigger = Some(ev.clone());
                }
            } else {
                let victim = out
                    .participants()
                    .into_iter()
                    .filter(|p| *p != o.party)
                    .max()
                    .map(String::from)
                    .ok_or_else(|| inapplicable("no other participant to move".into()))?;
                let state = out
                    .obligations
                    .iter()
                    .find(|x| x.party == victim && x.enabling.is_some())
                    .map(|x| x.next.clone())
                    .ok_or_else(|| inapplicable(format!("{victim} has no event-triggered obligation")))?;
                for a in out.machine_mut(&mach).unwrap().activities.iter_mut().filter(|a| a.name == o.capability) {
                    a.effects.push(Effect::Move { party: victim.clone(), state: state.clone() });
                }
            }
        }
        MutationKind::HiddenActivity => {
            let name = m.param.clone().unwrap_or_else(|| "backdoor_refund".into());
            let mach = out.machine(&target).expect("applicable target");
            let at = exit_state(mach).expect("applicable target").to_string();
            add_activity(
                &mut out,
                &target,
                Activity { spontaneous: true, ..Activity::new(&name, &at, &at) },
                &inapplicable,
            )?;
        }
        MutationKind::Reentrancy => {
            let o = out.obligations.iter_mut().find(|o| o.id == target).expect("applicable target");
            let back = o.current[0].clone();
            o.next = back.clone();
            let (party, cap, cur) = (o.party.clone(), o.capability.clone(), o.current.clone());
            let mach = out.party(&party).map(|p| p.machine.clone()).expect("bound party");
            for a in out.machine_mut(&mach).unwrap().activities.iter_mut() {
                if a.name == cap && cur.contains(&a.source) {
                    a.target = a.source.clone();
                }
            }
        }
        MutationKind::GaslessSend => {
            let o = out.obligations.iter_mut().find(|o| o.id == target).expect("applicable target");
            let right = o.right.as_mut().expect("applicable target");
            match &m.param {
                Some(party) => right.recipients = vec![Recipient::Party(party.clone())],
                None => right.event = "bonus_msg".into(),
            }
        }
        MutationKind::LostInTransfer => {
            let addr = m.param.clone().unwrap_or_else(|| "0xdead".into());
            let mach = machine_with(&out, &target).expect("applicable target");
            for a in out.machine_mut(&mach).unwrap().activities.iter_mut().filter(|a| a.name == target) {
                if let Some(Effect::Transfer { to, .. }) =
                    a.effects.iter_mut().find(|e| matches!(e, Effect::Transfer { .. }))
                {
                    *to = TransferTarget::Orphan(addr.clone());
                }
            }
        }
        MutationKind::CallToUnknown => {
            let o = out.obligation(&target).cloned().expect("applicable target");
            let var = framed_int(&out, &o).expect("applicable target").to_string();
            let index = match out.shared_var(&var).map(|v| &v.kind) {
                Some(VarKind::PartyInt { .. }) => {
                    let first = out
                        .participants()
                        .first()
                        .map(|p| p.to_string())
                        .ok_or_else(|| inapplicable("no participants".into()))?;
                    Some(PartyRef::Named(first))
                }
                _ => None,
            };
            let effect = Effect::Assign { target: IntRef { var, index }, op: AssignOp::Sub, value: Expr::Lit(1) };
            let mach = out.party(&o.party).map(|p| p.machine.clone()).expect("bound party");
            for a in out.machine_mut(&mach).unwrap().activities.iter_mut().filter(|a| a.name == o.capability) {
                a.effects.push(effect.clone());
            }
        }
    }
    out.mutations.push(Mutation { kind: m.kind, target: Some(target), param: m.param.clone() });
    Ok(out)
}

/// First non-initial state with an outgoing activity.
fn exit_state(m: &StateMachine) -> Option<&str> {
    m.states.iter().find(|s| **s != m.initial && m.activities.iter().any(|a| a.source == **s)).map(String::as_str)
}

fn machine_with(model: &ContractModel, activity: &str) -> Option<String> {
    model.machines.iter().find(|m| m.activities.iter().any(|a| a.name == activity)).map(|m| m.name.clone())
}

fn framed_int<'m>(model: &'m ContractModel, o: &'m Obligation) -> Option<&'m str> {
    o.frame.iter().find_map(|f| match f {
        FrameItem::Var(v) if model.shared_var(v).is_some_and(|s| s.kind.is_integer()) => Some(v.as_str()),
        _ => None,
    })
}

fn add_activity(
    model: &mut ContractModel,
    machine: &str,
    a: Activity,
    inapplicable: &dyn Fn(String) -> InjectError,
) -> Result<(), InjectError> {
    let m = model.machine_mut(machine).expect("machine exists");
    if m.activity(&a.name, &a.source).is_some() {
        return Err(inapplicable(format!("{machine} already has {} from {}", a.name, a.source)));
    }
    m.activities.push(a);
    Ok(())
}

fn add_obligation(
    model: &mut ContractModel,
    party: &str,
    capability: &str,
    current: Vec<String>,
    next: &str,
    inapplicable: &dyn Fn(String) -> InjectError,
) -> Result<(), InjectError> {
    let id = format!("ob_{capability}");
    if model.obligation(&id).is_some() {
        return Err(inapplicable(format!("obligation {id} already exists")));
    }
    model.obligations.push(Obligation {
        id,
        party: party.to_string(),
        enabling: None,
        current,
        condition: Guard::truth(),
        capability: capability.to_string(),
        next: next.to_string(),
        right: None,
        frame: Vec::new(),
        span: SourceSpan::default(),
    });
    Ok(())
}

/// For a guard atom `v[x] >= rhs` (or `>`), halve the guarded party's initial
/// value relative to `rhs` so the weakened guard admits a step it used to block.
fn lower_guarded_value(model: &mut ContractModel, activity: &str, guard: &Guard) {
    let first_obligated = model.obligations.iter().find(|o| o.capability == activity).map(|o| o.party.clone());
    for atom in &guard.atoms {
        let Atom::Cmp { lhs: Operand::Var(r), op: CmpOp::Ge | CmpOp::Gt, rhs } = atom else { continue };
        let party = match &r.index {
            Some(PartyRef::Named(p)) => Some(p.clone()),
            Some(PartyRef::SelfParty) => first_obligated.clone(),
            Some(PartyRef::Sender) => continue,
            None => None,
        };
        let Some(bound) = initial_value(model, rhs) else { continue };
        let Some(var) = model.shared.iter_mut().find(|v| v.name == r.var) else { continue };
        match (&mut var.kind, party) {
            (VarKind::PartyInt { init, .. }, Some(p)) => {
                if init.get(&p).is_some_and(|v| *v >= bound) {
                    init.insert(p, bound / 2);
                }
            }
            (VarKind::Int { init, .. }, None) if *init >= bound => *init = bound / 2,
            _ => {}
        }
        return;
    }
}

fn initial_value(model: &ContractModel, o: &Operand) -> Option<i64> {
    match o {
        Operand::Lit(n) => Some(*n),
        Operand::Var(r) => match (&model.shared_var(&r.var)?.kind, &r.index) {
            (VarKind::Int { init, .. }, None) => Some(*init),
            (VarKind::PartyInt { init, .. }, Some(PartyRef::Named(p))) => init.get(p).copied(),
            _ => None,
        },
    }
}

/// Names `m` may target, in model order.
pub fn applicable_targets(model: &ContractModel, m: &Mutation) -> Vec<String> {
    let activities = || {
        let mut seen = Vec::new();
        for mach in &model.machines {
            for a in &mach.activities {
                if !seen.contains(&a.name) {
                    seen.push(a.name.clone());
                }
            }
        }
        seen
    };
    let obligations = |keep: &dyn Fn(&Obligation) -> bool| -> Vec<String> {
        model.obligations.iter().filter(|o| keep(o)).map(|o| o.id.clone()).collect()
    };
    match m.kind {
        MutationKind::ExtraState | MutationKind::HiddenActivity => model
            .machines
            .iter()
            .filter(|mach| exit_state(mach).is_some() && model.parties.iter().any(|p| p.machine == mach.name))
            .map(|mach| mach.name.clone())
            .collect(),
        MutationKind::SneakPath if m.param.is_some() => activities(),
        MutationKind::SneakPath => activities()
            .into_iter()
            .filter(|n| model.machines.iter().flat_map(|x| x.activities_named(n)).any(|a| !a.guard.is_true()))
            .collect(),
        MutationKind::TrapDoor if m.param.is_some() => obligations(&|_| true),
        MutationKind::TrapDoor | MutationKind::GaslessSend => obligations(&|o| o.right.is_some()),
        MutationKind::Reentrancy => obligations(&|o| o.is_once_only()),
        MutationKind::LostInTransfer => activities()
            .into_iter()
            .filter(|n| {
                model
                    .machines
                    .iter()
                    .flat_map(|x| x.activities_named(n))
                    .any(|a| a.effects.iter().any(|e| matches!(e, Effect::Transfer { .. })))
            })
            .collect(),
        MutationKind::CallToUnknown => obligations(&|o| framed_int(model, o).is_some()),
    }
}

fn default_target(model: &ContractModel, kind: MutationKind, applicable: &[String]) -> Option<String> {
    match kind {
        MutationKind::ExtraState | MutationKind::HiddenActivity => {
            let preferred = model.participants().first().and_then(|p| model.party(p)).map(|p| p.machine.clone());
            preferred.filter(|m| applicable.contains(m)).or_else(|| applicable.first().cloned())
        }
        MutationKind::Reentrancy => {
            // prefer an obligation that emits, so the repeat is observable downstream
            let emitting = applicable.iter().rev().find(|id| model.obligation(id).is_some_and(|o| o.right.is_some()));
            emitting.or(applicable.last()).cloned()
        }
        MutationKind::SneakPath => {
            // a value threshold makes the weakening observable through lower_guarded_value
            let threshold = applicable.iter().find(|n| {
                model.machines.iter().flat_map(|m| m.activities_named(n)).any(|a| {
                    a.guard
                        .atoms
                        .iter()
                        .any(|x| matches!(x, Atom::Cmp { lhs: Operand::Var(_), op: CmpOp::Ge | CmpOp::Gt, .. }))
                })
            });
            threshold.or(applicable.first()).cloned()
        }
        MutationKind::TrapDoor | MutationKind::GaslessSend | MutationKind::CallToUnknown => applicable.last().cloned(),
        MutationKind::LostInTransfer => applicable.first().cloned(),
    }
}

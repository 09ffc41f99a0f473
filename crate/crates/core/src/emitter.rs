//! TLA+ rendering of a contract model.
//!
//! Layout: constants and variables, `Init`, the state whitelist
//! (`checkExtraStateVul`) and `TypeOK`, one operator per activity, one
//! obligation/right/post_status/Term_condition group per obligation, `Next`,
//! then the consistency, conservation and payment checks. Output is plain
//! ASCII and depends only on the model.
//!
//! Effects are rendered as simultaneous updates over the unprimed state;
//! function variables use chained `EXCEPT` clauses, which keeps sequential
//! updates of the same slot exact.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::kernel::activity_mentions_sender;
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlaModule {
    pub name: String,
    pub text: String,
    /// Companion TLC configuration.
    pub cfg: String,
}

/// Sanitizes a contract name into a TLA+ module identifier.
pub fn module_name(contract: &str) -> String {
    let mut s: String = contract.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "M_");
    }
    s
}

fn q(s: &str) -> String {
    format!("\"{s}\"")
}

fn qset<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    let v: Vec<String> = items.into_iter().map(|s| q(s)).collect();
    format!("{{{}}}", v.join(", "))
}

/// How a machine's state variable is indexed.
enum Domain {
    Participants,
    Single(String),
    Set(Vec<String>),
}

/// Names that `self` and `sender` render as in the current formula.
#[derive(Clone, Copy)]
struct Ctx<'a> {
    me: &'a str,
    sender: &'a str,
}

struct Emitter<'m> {
    model: &'m ContractModel,
    participants: Vec<String>,
    domains: BTreeMap<String, Domain>,
    /// Machine variables followed by shared variables, in declaration order.
    vars: Vec<String>,
    pool: Option<String>,
    op_names: BTreeMap<(String, String), String>,
}

pub fn emit_tla(model: &ContractModel) -> TlaModule {
    let e = Emitter::new(model);
    let name = module_name(model.name());
    TlaModule { text: e.module(&name), cfg: e.cfg(), name }
}

impl<'m> Emitter<'m> {
    fn new(model: &'m ContractModel) -> Self {
        let participants: Vec<String> = model.participants().into_iter().map(String::from).collect();
        let mut domains = BTreeMap::new();
        let mut vars = Vec::new();
        for m in &model.machines {
            let bound: Vec<String> =
                model.parties.iter().filter(|p| p.machine == m.name).map(|p| p.name.clone()).collect();
            let d = match bound.as_slice() {
                [] => continue,
                _ if !participants.is_empty() && bound == participants => Domain::Participants,
                [one] => Domain::Single(one.clone()),
                _ => Domain::Set(bound),
            };
            domains.insert(m.name.clone(), d);
            vars.push(format!("{}_state", m.name));
        }
        vars.extend(model.shared.iter().map(|v| v.name.clone()));

        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for m in &model.machines {
            let mut names: Vec<&str> = m.activities.iter().map(|a| a.name.as_str()).collect();
            names.dedup();
            for n in names {
                *count.entry(n).or_default() += 1;
            }
        }
        let mut op_names = BTreeMap::new();
        for m in &model.machines {
            for a in &m.activities {
                let op = if count[a.name.as_str()] > 1 { format!("{}_{}", m.name, a.name) } else { a.name.clone() };
                op_names.insert((m.name.clone(), a.name.clone()), op);
            }
        }
        Self { model, participants, domains, vars, pool: model.pool_var().map(String::from), op_names }
    }

    fn state_var(machine: &str) -> String {
        format!("{machine}_state")
    }

    fn domain_expr(&self, machine: &str) -> Option<String> {
        match self.domains.get(machine)? {
            Domain::Participants => Some("Participants".into()),
            Domain::Single(p) => Some(qset([p])),
            Domain::Set(ps) => Some(qset(ps)),
        }
    }

    /// State of `party` (already rendered) on `machine`.
    fn local(&self, machine: &str, party: &str, primed: bool) -> String {
        let v = Self::state_var(machine);
        let tick = if primed { "'" } else { "" };
        match self.domains.get(machine) {
            Some(Domain::Single(_)) => format!("{v}{tick}"),
            _ => format!("{v}{tick}[{party}]"),
        }
    }

    fn party(&self, p: &PartyRef, ctx: Ctx<'_>) -> String {
        match p {
            PartyRef::SelfParty => ctx.me.to_string(),
            PartyRef::Sender => ctx.sender.to_string(),
            PartyRef::Named(n) => q(n),
        }
    }

    fn int_ref(&self, r: &IntRef, ctx: Ctx<'_>) -> String {
        match &r.index {
            Some(p) => format!("{}[{}]", r.var, self.party(p, ctx)),
            None => r.var.clone(),
        }
    }

    fn expr(&self, e: &Expr, ctx: Ctx<'_>) -> String {
        match e {
            Expr::Lit(n) => n.to_string(),
            Expr::Var(r) => self.int_ref(r, ctx),
            Expr::Neg(x) => format!("-({})", self.expr(x, ctx)),
            Expr::Bin(a, op, b) => {
                let side = |x: &Expr| match x {
                    Expr::Bin(..) => format!("({})", self.expr(x, ctx)),
                    _ => self.expr(x, ctx),
                };
                format!("{} {} {}", side(a), op.symbol(), side(b))
            }
        }
    }

    fn operand(&self, o: &Operand, ctx: Ctx<'_>) -> String {
        match o {
            Operand::Lit(n) => n.to_string(),
            Operand::Var(r) => self.int_ref(r, ctx),
        }
    }

    fn guard(&self, g: &Guard, ctx: Ctx<'_>) -> Vec<String> {
        g.atoms
            .iter()
            .map(|a| match a {
                Atom::Cmp { lhs, op, rhs } => {
                    format!("{} {} {}", self.operand(lhs, ctx), op.tla(), self.operand(rhs, ctx))
                }
                Atom::Member { party, set, negated } => {
                    format!("{} {} {set}", self.party(party, ctx), if *negated { "\\notin" } else { "\\in" })
                }
                Atom::AllParticipants { set } => format!("Participants \\subseteq {set}"),
            })
            .collect()
    }

    fn record(&self, event: &str, sender: &str, recipient: &str) -> String {
        format!("[type |-> {}, sender |-> {sender}, recipient |-> {recipient}]", q(event))
    }

    fn module(&self, name: &str) -> String {
        let m = self.model;
        let mut out = String::new();
        let _ = writeln!(out, "---- MODULE {name} ----");
        out.push_str("EXTENDS Integers, FiniteSets\n\n");
        out.push_str("CONSTANT Participants\n\n");
        let others: Vec<&String> = m.parties.iter().filter(|p| p.role != Role::Participant).map(|p| &p.name).collect();
        if others.is_empty() {
            out.push_str("Parties == Participants\n\n");
        } else {
            let _ = writeln!(out, "Parties == Participants \\cup {}\n", qset(others));
        }
        let _ = writeln!(out, "VARIABLES {}\n", self.vars.join(", "));
        let _ = writeln!(out, "vars == <<{}>>\n", self.vars.join(", "));

        let names: Vec<&String> = m.events.iter().map(|e| &e.name).collect();
        if !names.is_empty() {
            let _ = writeln!(
                out,
                "Events == [type : {}, sender : Parties \\cup {{\"none\"}}, recipient : Parties]\n",
                qset(names)
            );
        }

        self.init(&mut out);
        self.whitelist(&mut out);
        self.type_ok(&mut out);
        for mach in &m.machines {
            if !self.domains.contains_key(&mach.name) {
                continue;
            }
            let mut seen: Vec<&str> = Vec::new();
            for a in &mach.activities {
                if !seen.contains(&a.name.as_str()) {
                    seen.push(&a.name);
                    self.activity(&mut out, mach, &a.name);
                }
            }
        }
        for o in &m.obligations {
            self.obligation(&mut out, o);
        }
        self.next(&mut out);
        self.consistency(&mut out);
        self.conservation(&mut out);
        self.payment(&mut out);
        out.push_str("Spec == Init /\\ [][Next]_vars\n\n");
        out.push_str("====\n");
        out
    }

    fn conj(out: &mut String, lines: &[String], indent: usize) {
        let pad = " ".repeat(indent);
        for l in lines {
            let _ = writeln!(out, "{pad}/\\ {l}");
        }
    }

    fn init(&self, out: &mut String) {
        let m = self.model;
        let mut lines = Vec::new();
        for mach in &m.machines {
            let Some(d) = self.domains.get(&mach.name) else { continue };
            let v = Self::state_var(&mach.name);
            lines.push(match d {
                Domain::Single(_) => format!("{v} = {}", q(&mach.initial)),
                _ => format!("{v} = [p \\in {} |-> {}]", self.domain_expr(&mach.name).unwrap(), q(&mach.initial)),
            });
        }
        for v in &m.shared {
            lines.push(match &v.kind {
                VarKind::Int { init, .. } => format!("{} = {init}", v.name),
                VarKind::PartyInt { init, .. } => {
                    let mut arms: Vec<String> = m
                        .parties
                        .iter()
                        .filter_map(|p| init.get(&p.name).map(|x| format!("p = {} -> {x}", q(&p.name))))
                        .collect();
                    if arms.len() < m.parties.len() || arms.is_empty() {
                        arms.push("OTHER -> 0".into());
                    }
                    format!("{} = [p \\in Parties |-> CASE {}]", v.name, arms.join(" [] "))
                }
                VarKind::PartySet { init } => format!("{} = {}", v.name, qset(init)),
                VarKind::MsgPool => format!("{} = {{}}", v.name),
            });
        }
        out.push_str("Init ==\n");
        Self::conj(out, &lines, 4);
        out.push('\n');
    }

    fn whitelist(&self, out: &mut String) {
        let mut lines = Vec::new();
        for mach in &self.model.machines {
            let Some(d) = self.domains.get(&mach.name) else { continue };
            let v = Self::state_var(&mach.name);
            let states = qset(&mach.states);
            lines.push(match d {
                Domain::Single(_) => format!("{v} \\in {states}"),
                _ => format!("{v} \\in [{} -> {states}]", self.domain_expr(&mach.name).unwrap()),
            });
        }
        out.push_str("checkExtraStateVul ==\n");
        if lines.is_empty() {
            out.push_str("    TRUE\n");
        }
        Self::conj(out, &lines, 4);
        out.push('\n');
    }

    fn type_ok(&self, out: &mut String) {
        let mut lines = vec!["checkExtraStateVul".to_string()];
        for v in &self.model.shared {
            lines.push(match &v.kind {
                VarKind::Int { lo, hi, .. } => format!("{} \\in {lo}..{hi}", v.name),
                VarKind::PartyInt { lo, hi, .. } => format!("{} \\in [Parties -> {lo}..{hi}]", v.name),
                VarKind::PartySet { .. } => format!("{} \\subseteq Parties", v.name),
                VarKind::MsgPool if self.model.events.is_empty() => format!("{} = {{}}", v.name),
                VarKind::MsgPool => format!("{} \\subseteq Events", v.name),
            });
        }
        out.push_str("TypeOK ==\n");
        Self::conj(out, &lines, 4);
        out.push('\n');
    }

    fn takes_sender(&self, mach: &StateMachine, name: &str) -> bool {
        mach.activities_named(name).any(activity_mentions_sender)
    }

    /// Constraints (a) source state and trigger, (b) guard, (c) updates,
    /// (d) everything else unchanged. The pool is left to the obligation.
    fn branch(&self, mach: &StateMachine, a: &Activity, ctx: Ctx<'_>) -> Vec<String> {
        let mut lines = vec![format!("{} = {}", self.local(&mach.name, ctx.me, false), q(&a.source))];
        if let Some(t) = &a.trigger {
            if let Some(pool) = &self.pool {
                lines.push(format!("\\E e \\in {pool} : e.type = {}", q(t)));
            }
        }
        lines.extend(self.guard(&a.guard, ctx));

        // per variable: EXCEPT clauses for functions, a rewritten expression for scalars
        let mut excepts: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut scalars: BTreeMap<String, String> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        let touch = |v: &str, order: &mut Vec<String>| {
            if !order.iter().any(|x| x == v) {
                order.push(v.to_string());
            }
        };

        let sv = Self::state_var(&mach.name);
        touch(&sv, &mut order);
        match self.domains.get(&mach.name) {
            Some(Domain::Single(_)) => {
                scalars.insert(sv.clone(), q(&a.target));
            }
            _ => excepts.entry(sv.clone()).or_default().push(format!("![{}] = {}", ctx.me, q(&a.target))),
        }

        for e in &a.effects {
            match e {
                Effect::Assign { target, op, value } => {
                    let val = self.expr(value, ctx);
                    touch(&target.var, &mut order);
                    match &target.index {
                        Some(p) => {
                            let rhs = match op {
                                AssignOp::Set => val,
                                AssignOp::Add => format!("@ + {val}"),
                                AssignOp::Sub => format!("@ - {val}"),
                            };
                            excepts
                                .entry(target.var.clone())
                                .or_default()
                                .push(format!("![{}] = {rhs}", self.party(p, ctx)));
                        }
                        None => {
                            let cur = scalars.get(&target.var).cloned().unwrap_or_else(|| target.var.clone());
                            let new = match op {
                                AssignOp::Set => val,
                                AssignOp::Add => format!("{cur} + {val}"),
                                AssignOp::Sub => format!("{cur} - {val}"),
                            };
                            scalars.insert(target.var.clone(), new);
                        }
                    }
                }
                Effect::Transfer { var, amount, from, to } => {
                    let amt = self.expr(amount, ctx);
                    touch(var, &mut order);
                    let list = excepts.entry(var.clone()).or_default();
                    list.push(format!("![{}] = @ - {amt}", self.party(from, ctx)));
                    if let TransferTarget::Party(p) = to {
                        if !matches!(p, PartyRef::Named(n) if self.model.party(n).is_none()) {
                            list.push(format!("![{}] = @ + {amt}", self.party(p, ctx)));
                        }
                    }
                }
                Effect::Insert { party, set } => {
                    touch(set, &mut order);
                    let cur = scalars.get(set).cloned().unwrap_or_else(|| set.clone());
                    scalars.insert(set.clone(), format!("{cur} \\cup {{{}}}", self.party(party, ctx)));
                }
                Effect::Move { party, state } => {
                    let Some(pm) = self.model.party(party).map(|p| p.machine.clone()) else { continue };
                    let v = Self::state_var(&pm);
                    touch(&v, &mut order);
                    match self.domains.get(&pm) {
                        Some(Domain::Single(_)) => {
                            scalars.insert(v, q(state));
                        }
                        _ => excepts.entry(v).or_default().push(format!("![{}] = {}", q(party), q(state))),
                    }
                }
            }
        }

        for v in &order {
            if let Some(s) = scalars.get(v) {
                lines.push(format!("{v}' = {s}"));
            } else if let Some(list) = excepts.get(v) {
                lines.push(format!("{v}' = [{v} EXCEPT {}]", list.join(", ")));
            }
        }
        let untouched: Vec<&String> =
            self.vars.iter().filter(|v| !order.contains(v) && Some(*v) != self.pool.as_ref()).collect();
        if !untouched.is_empty() {
            let names: Vec<&str> = untouched.iter().map(|s| s.as_str()).collect();
            lines.push(format!("UNCHANGED <<{}>>", names.join(", ")));
        }
        lines
    }

    fn activity(&self, out: &mut String, mach: &StateMachine, name: &str) {
        let op = &self.op_names[&(mach.name.clone(), name.to_string())];
        let with_sender = self.takes_sender(mach, name);
        let ctx = Ctx { me: "self", sender: "sender" };
        if with_sender {
            let _ = writeln!(out, "{op}(self, sender) ==");
        } else {
            let _ = writeln!(out, "{op}(self) ==");
        }
        let branches: Vec<Vec<String>> = mach.activities_named(name).map(|a| self.branch(mach, a, ctx)).collect();
        if let [only] = branches.as_slice() {
            Self::conj(out, only, 4);
        } else {
            for b in &branches {
                for (i, l) in b.iter().enumerate() {
                    let lead = if i == 0 { "    \\/ /\\ " } else { "       /\\ " };
                    let _ = writeln!(out, "{lead}{l}");
                }
            }
        }
        out.push('\n');
    }

    /// Set over which an obligation's sender is bound, if it binds one.
    fn sender_binding(&self, o: &Obligation) -> Option<&'static str> {
        let en = o.enabling.as_ref()?;
        match en.from {
            Some(SenderPattern::AnyParticipant) => Some("Participants"),
            None => Some("Parties"),
            _ => None,
        }
    }

    fn obligation(&self, out: &mut String, o: &Obligation) {
        let Some(party) = self.model.party(&o.party) else { return };
        let Some(mach) = self.model.machine(&party.machine) else { return };
        let me = q(&o.party);
        let bound = self.sender_binding(o);
        let fixed;
        let sender = match (&o.enabling, bound) {
            (_, Some(_)) => "s",
            (Some(EnablingEvent { from: Some(SenderPattern::Party(p)), .. }), None) => {
                fixed = q(p);
                fixed.as_str()
            }
            _ => "\"none\"",
        };
        let ctx = Ctx { me: &me, sender };
        let (params, args) = if bound.is_some() { ("(s)", "(s)") } else { ("", "") };
        let id = &o.id;

        let mut lines = Vec::new();
        if let (Some(en), Some(pool)) = (&o.enabling, &self.pool) {
            match &en.from {
                Some(SenderPattern::AllParticipants) => {
                    lines.push(format!("\\A p \\in Participants : {} \\in {pool}", self.record(&en.event, "p", &me)));
                }
                Some(SenderPattern::Party(_)) | Some(SenderPattern::AnyParticipant) | None => {
                    lines.push(format!("{} \\in {pool}", self.record(&en.event, sender, &me)));
                }
            }
        }
        let current: Vec<&String> = o.current.iter().collect();
        lines.push(format!("{} \\in {}", self.local(&mach.name, &me, false), qset(current)));
        lines.extend(self.guard(&o.condition, ctx));
        if mach.activities_named(&o.capability).next().is_some() {
            let op = &self.op_names[&(mach.name.clone(), o.capability.clone())];
            if self.takes_sender(mach, &o.capability) {
                lines.push(format!("{op}({me}, {sender})"));
            } else {
                lines.push(format!("{op}({me})"));
            }
        } else {
            lines.push("FALSE".into());
        }
        lines.push(format!("{} = {}", self.local(&mach.name, &me, true), q(&o.next)));
        let _ = writeln!(out, "{id}_obligation{params} ==");
        Self::conj(out, &lines, 4);
        out.push('\n');

        let _ = write!(out, "{id}_right{params} ==\n    ");
        match (&o.right, &self.pool) {
            (Some(r), Some(pool)) => {
                let from =
                    if self.model.event(&r.event).is_some_and(|e| e.carries_sender) { me.clone() } else { q("none") };
                let mut literal: Vec<String> = Vec::new();
                let mut sets: Vec<String> = Vec::new();
                for rc in &r.recipients {
                    match rc {
                        Recipient::Party(n) | Recipient::Orphan(n) => literal.push(q(n)),
                        Recipient::SelfParty => literal.push(me.clone()),
                        Recipient::Sender => literal.push(sender.to_string()),
                        Recipient::Participants => sets.push("Participants".into()),
                    }
                }
                if sets.is_empty() && literal.len() == 1 {
                    let _ = writeln!(out, "{pool}' = {pool} \\cup {{{}}}", self.record(&r.event, &from, &literal[0]));
                } else {
                    if !literal.is_empty() {
                        sets.insert(0, format!("{{{}}}", literal.join(", ")));
                    }
                    let _ = writeln!(
                        out,
                        "{pool}' = {pool} \\cup {{{} : r \\in {}}}",
                        self.record(&r.event, &from, "r"),
                        sets.join(" \\cup ")
                    );
                }
            }
            (None, Some(pool)) => {
                let _ = writeln!(out, "UNCHANGED {pool}");
            }
            (_, None) => out.push_str("TRUE\n"),
        }
        out.push('\n');

        let _ = write!(out, "{id}_post_status ==\n    ");
        let mut plain: Vec<&str> = Vec::new();
        let mut locals: Vec<String> = Vec::new();
        for f in &o.frame {
            match f {
                FrameItem::Var(v) => plain.push(v),
                FrameItem::LocalState(p) => {
                    if let Some(pm) = self.model.party(p).map(|x| x.machine.as_str()) {
                        locals.push(format!("{} = {}", self.local(pm, &q(p), true), self.local(pm, &q(p), false)));
                    }
                }
            }
        }
        let mut parts = Vec::new();
        if !plain.is_empty() {
            parts.push(format!("UNCHANGED <<{}>>", plain.join(", ")));
        }
        parts.extend(locals);
        if parts.is_empty() {
            out.push_str("TRUE\n\n");
        } else {
            let _ = writeln!(out, "{}\n", parts.join(" /\\ "));
        }

        let body = format!("{id}_obligation{args} /\\ {id}_right{args} /\\ {id}_post_status");
        match bound {
            Some(set) => {
                let _ = writeln!(out, "{id}_Term_condition ==\n    \\E s \\in {set} : {body}\n");
            }
            None => {
                let _ = writeln!(out, "{id}_Term_condition ==\n    {body}\n");
            }
        }
    }

    fn next(&self, out: &mut String) {
        let mut disj: Vec<String> = self.model.obligations.iter().map(|o| format!("{}_Term_condition", o.id)).collect();
        for mach in &self.model.machines {
            let Some(dom) = self.domain_expr(&mach.name) else { continue };
            let mut seen: Vec<&str> = Vec::new();
            for a in mach.activities.iter().filter(|a| a.spontaneous) {
                if seen.contains(&a.name.as_str()) {
                    continue;
                }
                seen.push(&a.name);
                let op = &self.op_names[&(mach.name.clone(), a.name.clone())];
                let keep = self.pool.as_ref().map(|p| format!(" /\\ UNCHANGED {p}")).unwrap_or_default();
                disj.push(format!("\\E p \\in {dom} : {op}(p){keep}"));
            }
        }
        out.push_str("Next ==\n");
        if disj.is_empty() {
            out.push_str("    FALSE\n");
        }
        for d in disj {
            let _ = writeln!(out, "    \\/ {d}");
        }
        out.push('\n');
    }

    fn consistency(&self, out: &mut String) {
        if self.model.forbids.is_empty() {
            return;
        }
        let machines: Vec<&str> = {
            let mut v: Vec<&str> =
                self.participants.iter().filter_map(|p| self.model.party(p).map(|x| x.machine.as_str())).collect();
            v.dedup();
            v
        };
        let state_of = |p: &str| -> String {
            match machines.as_slice() {
                [one] => self.local(one, p, false),
                _ => format!("PartyState({p})"),
            }
        };
        if machines.len() > 1 {
            let arms: Vec<String> = self
                .participants
                .iter()
                .filter_map(|p| {
                    let m = &self.model.party(p)?.machine;
                    Some(format!("p = {} -> {}", q(p), self.local(m, &q(p), false)))
                })
                .collect();
            let _ = writeln!(out, "PartyState(p) ==\n    CASE {}\n", arms.join("\n      [] "));
        }
        out.push_str("ContractConsistentCheck ==\n");
        let lines: Vec<String> = self
            .model
            .forbids
            .iter()
            .map(|f| {
                format!(
                    "\\A p1, p2 \\in Participants : ~({} = {} /\\ {} = {})",
                    state_of("p1"),
                    q(&f.first),
                    state_of("p2"),
                    q(&f.second)
                )
            })
            .collect();
        Self::conj(out, &lines, 4);
        out.push('\n');
    }

    fn conservation(&self, out: &mut String) {
        if self.model.conserves.is_empty() {
            return;
        }
        out.push_str("RECURSIVE SumFn(_, _)\n");
        out.push_str("SumFn(f, S) ==\n    IF S = {} THEN 0 ELSE LET x == CHOOSE y \\in S : TRUE IN f[x] + SumFn(f, S \\ {x})\n\n");
        let init = crate::kernel::initial_state(self.model);
        let mut lines = Vec::new();
        for c in &self.model.conserves {
            let terms: Vec<String> = c
                .vars
                .iter()
                .map(|v| match self.model.shared_var(v).map(|s| &s.kind) {
                    Some(VarKind::PartyInt { .. }) => format!("SumFn({v}, Parties)"),
                    _ => v.clone(),
                })
                .collect();
            lines.push(format!("{} = {}", terms.join(" + "), crate::checkers::conserved_sum(&init, c)));
        }
        out.push_str("ConservationCheck ==\n");
        Self::conj(out, &lines, 4);
        out.push('\n');
    }

    fn payment(&self, out: &mut String) {
        let m = self.model;
        if m.considerations.is_empty() {
            return;
        }
        let mut upons: Vec<&str> = m.considerations.iter().map(|c| c.upon.as_str()).collect();
        upons.sort();
        upons.dedup();
        let mut implications = Vec::new();
        for u in upons {
            let mut steps = Vec::new();
            for mach in &m.machines {
                let Some(dom) = self.domain_expr(&mach.name) else { continue };
                for a in mach.activities_named(u) {
                    steps.push(format!(
                        "\\E p \\in {dom} : {} = {} /\\ {} = {}",
                        self.local(&mach.name, "p", false),
                        q(&a.source),
                        self.local(&mach.name, "p", true),
                        q(&a.target)
                    ));
                }
            }
            if steps.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{u}_occurs ==");
            for s in &steps {
                let _ = writeln!(out, "    \\/ {s}");
            }
            out.push('\n');

            let deltas: Vec<String> = m
                .considerations
                .iter()
                .filter(|c| c.upon == u)
                .map(|c| {
                    let ctx = Ctx { me: &q(&c.party), sender: "\"none\"" };
                    let slot = self.int_ref(&c.target, ctx);
                    let amount = self.expr(&c.amount, ctx);
                    let primed = match &c.target.index {
                        Some(p) => format!("{}'[{}]", c.target.var, self.party(p, ctx)),
                        None => format!("{}'", c.target.var),
                    };
                    match c.op {
                        AssignOp::Add => format!("{primed} = {slot} + {amount}"),
                        AssignOp::Sub => format!("{primed} = {slot} - {amount}"),
                        AssignOp::Set => format!("{primed} = {amount}"),
                    }
                })
                .collect();
            let _ = writeln!(out, "{u}_considerCheck ==");
            Self::conj(out, &deltas, 4);
            out.push('\n');
            implications.push(format!("({u}_occurs => {u}_considerCheck)"));
        }
        if implications.is_empty() {
            return;
        }
        let _ = writeln!(out, "ContractPaymentConsistentCheck ==\n    [][{}]_vars\n", implications.join(" /\\ "));
    }

    fn cfg(&self) -> String {
        let mut out = format!("CONSTANT Participants = {}\n", qset(&self.participants));
        out.push_str("INIT Init\nNEXT Next\nINVARIANT TypeOK\nINVARIANT checkExtraStateVul\n");
        if !self.model.forbids.is_empty() {
            out.push_str("INVARIANT ContractConsistentCheck\n");
        }
        if !self.model.conserves.is_empty() {
            out.push_str("INVARIANT ConservationCheck\n");
        }
        if !self.model.considerations.is_empty() {
            out.push_str("PROPERTY ContractPaymentConsistentCheck\n");
        }
        out
    }
}

/// Structural checks on emitted text: header and footer, balanced brackets
/// outside string literals, and no operator defined twice.
pub fn lint_tla(text: &str) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    match lines.first() {
        Some(l) if l.starts_with("---- MODULE ") && l.ends_with(" ----") => {}
        _ => problems.push("missing module header".to_string()),
    }
    if lines.last().map(|l| l.trim()) != Some("====") {
        problems.push("missing module footer".to_string());
    }

    let mut stack: Vec<(char, usize)> = Vec::new();
    for (n, line) in lines.iter().enumerate() {
        let mut in_str = false;
        for c in line.chars() {
            match c {
                '"' => in_str = !in_str,
                _ if in_str => {}
                '(' | '[' | '{' => stack.push((c, n + 1)),
                ')' | ']' | '}' => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => problems.push(format!("line {}: unbalanced '{c}'", n + 1)),
                    }
                }
                _ => {}
            }
        }
        if in_str {
            problems.push(format!("line {}: unterminated string", n + 1));
        }
        if line.matches("<<").count() != line.matches(">>").count() {
            problems.push(format!("line {}: unbalanced tuple brackets", n + 1));
        }
    }
    for (c, n) in stack {
        problems.push(format!("line {n}: unclosed '{c}'"));
    }

    let mut defined = BTreeMap::new();
    for (n, line) in lines.iter().enumerate() {
        if line.starts_with(' ') {
            continue;
        }
        if let Some((lhs, _)) = line.split_once(" ==") {
            let name = lhs.split('(').next().unwrap_or(lhs).trim().to_string();
            if let Some(prev) = defined.insert(name.clone(), n + 1) {
                problems.push(format!("line {}: {name} already defined on line {prev}", n + 1));
            }
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

use std::fmt::Write;

use super::{is_identifier, quote};
use crate::model::*;

/// Canonical text for `model`: fixed section order, two-space indent,
/// one blank line between sections.
pub fn render(model: &ContractModel) -> String {
    let mut sections: Vec<String> = Vec::new();

    let mut head = format!("contract {}\n", model.spec.name);
    let spec = &model.spec;
    for (kw, text) in [("description", &spec.description), ("offer", &spec.offer)] {
        if !text.is_empty() {
            let _ = writeln!(head, "{kw} {}", quote(text));
        }
    }
    for (kw, list) in [("legality", &spec.legality), ("acceptance", &spec.acceptance), ("rejection", &spec.rejection)] {
        for text in list {
            let _ = writeln!(head, "{kw} {}", quote(text));
        }
    }
    sections.push(head);

    push_lines(
        &mut sections,
        model.parties.iter().map(|p| format!("party {} role {} machine {}", p.name, p.role, p.machine)),
    );

    for m in &model.machines {
        sections.push(render_machine(m));
    }

    push_lines(&mut sections, model.shared.iter().map(|v| render_shared(model, v)));
    push_lines(
        &mut sections,
        model.events.iter().map(|e| {
            if e.carries_sender {
                format!("event {}(from party)", e.name)
            } else {
                format!("event {}", e.name)
            }
        }),
    );

    for o in &model.obligations {
        sections.push(render_obligation(o));
    }

    push_lines(
        &mut sections,
        model
            .considerations
            .iter()
            .map(|c| format!("consideration {}: {} {} {} upon {}", c.party, c.target, c.op.symbol(), c.amount, c.upon)),
    );
    push_lines(
        &mut sections,
        model
            .forbids
            .iter()
            .map(|f| format!("forbid ({}, {}) over participants", f.first, f.second))
            .chain(model.conserves.iter().map(|c| format!("conserve {c}"))),
    );
    push_lines(
        &mut sections,
        model.mutations.iter().map(|m| {
            let mut line = format!("mutation {}", m.kind);
            if let Some(t) = &m.target {
                let _ = write!(line, "@{t}");
            }
            if let Some(p) = &m.param {
                if is_identifier(p) {
                    let _ = write!(line, "={p}");
                } else {
                    let _ = write!(line, "={}", quote(p));
                }
            }
            line
        }),
    );

    sections.join("\n")
}

fn push_lines(sections: &mut Vec<String>, lines: impl Iterator<Item = String>) {
    let mut block = String::new();
    for l in lines {
        block.push_str(&l);
        block.push('\n');
    }
    if !block.is_empty() {
        sections.push(block);
    }
}

fn render_machine(m: &StateMachine) -> String {
    let mut out = format!("machine {} {{\n  states", m.name);
    for s in &m.states {
        out.push(' ');
        out.push_str(s);
    }
    let _ = writeln!(out, "\n  init {}", m.initial);
    for a in &m.activities {
        let _ = write!(out, "  activity {}: {} -> {}", a.name, a.source, a.target);
        if let Some(t) = &a.trigger {
            let _ = write!(out, " on {t}");
        }
        if !a.guard.is_true() {
            let _ = write!(out, " when {}", a.guard);
        }
        if !a.effects.is_empty() {
            let effects: Vec<String> = a.effects.iter().map(ToString::to_string).collect();
            let _ = write!(out, " do {}", effects.join(", "));
        }
        if !a.frame.is_empty() {
            let _ = write!(out, " unchanged {}", join_frame(&a.frame));
        }
        if a.spontaneous {
            out.push_str(" spontaneous");
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

fn render_shared(model: &ContractModel, v: &SharedVar) -> String {
    match &v.kind {
        VarKind::Int { lo, hi, init } => format!("shared {}: int[{lo}..{hi}] = {init}", v.name),
        VarKind::PartyInt { lo, hi, init } => {
            // declared parties first, in declaration order
            let mut keys: Vec<&String> =
                model.parties.iter().map(|p| &p.name).filter(|n| init.contains_key(*n)).collect();
            keys.extend(init.keys().filter(|k| model.party(k).is_none()));
            let entries: Vec<String> = keys.iter().map(|k| format!("{k}: {}", init[*k])).collect();
            if entries.is_empty() {
                format!("shared {}[party]: int[{lo}..{hi}] = {{}}", v.name)
            } else {
                format!("shared {}[party]: int[{lo}..{hi}] = {{ {} }}", v.name, entries.join(", "))
            }
        }
        VarKind::PartySet { init } => {
            if init.is_empty() {
                format!("shared {}: partyset = {{}}", v.name)
            } else {
                let members: Vec<&str> = init.iter().map(String::as_str).collect();
                format!("shared {}: partyset = {{ {} }}", v.name, members.join(", "))
            }
        }
        VarKind::MsgPool => format!("shared {}: msgpool", v.name),
    }
}

fn render_obligation(o: &Obligation) -> String {
    let mut out = format!("obligation {} for {}:\n", o.id, o.party);
    if let Some(en) = &o.enabling {
        let _ = write!(out, "  when received {}", en.event);
        if let Some(from) = &en.from {
            let _ = write!(out, " from {from}");
        }
        out.push('\n');
    }
    let _ = write!(out, "  require state {}", o.current.join("|"));
    if !o.condition.is_true() {
        let _ = write!(out, " when {}", o.condition);
    }
    let _ = writeln!(out, " do {} -> {}", o.capability, o.next);
    if let Some(r) = &o.right {
        let recips: Vec<String> = r.recipients.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "  then emit {} to {}", r.event, recips.join(", "));
    }
    if !o.frame.is_empty() {
        let _ = writeln!(out, "  frame unchanged {}", join_frame(&o.frame));
    }
    out
}

fn join_frame(items: &[FrameItem]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

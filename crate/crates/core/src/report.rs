//! Serialized check reports: a JSON document and a text rendering of the
//! same content. `docs/report.schema.json` describes the JSON form.

use std::fmt::Write;

use serde::Serialize;

use crate::checkers::{CheckReport, GraphStats, Verdict};
use crate::model::ContractModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub model: String,
    pub mutations: Vec<String>,
    pub graph: GraphStats,
    pub verdicts: Vec<VerdictEntry>,
    pub violations: Vec<ViolationEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct VerdictEntry {
    pub checker: String,
    pub verdict: String,
    pub reason: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ViolationEntry {
    pub kind: String,
    pub subject: String,
    pub message: String,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Serialize)]
pub struct TraceEntry {
    pub party: String,
    pub obligation: Option<String>,
    pub activity: String,
    pub sender: Option<String>,
    pub changed: Vec<String>,
}

impl ReportDocument {
    pub fn new(model: &ContractModel, report: &CheckReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: report.model.clone(),
            mutations: model.mutations.iter().map(ToString::to_string).collect(),
            graph: report.stats.clone(),
            verdicts: report
                .verdicts
                .iter()
                .map(|(k, v)| VerdictEntry {
                    checker: k.name().to_string(),
                    verdict: v.label().to_string(),
                    reason: match v {
                        Verdict::Skipped(r) => Some(r.clone()),
                        _ => None,
                    },
                })
                .collect(),
            violations: report
                .violations
                .iter()
                .map(|v| ViolationEntry {
                    kind: v.kind.name().to_string(),
                    subject: v.subject.clone(),
                    message: v.message.clone(),
                    trace: v
                        .trace
                        .steps
                        .iter()
                        .map(|s| TraceEntry {
                            party: s.label.party.clone(),
                            obligation: s.label.obligation.clone(),
                            activity: s.label.activity.clone(),
                            sender: s.label.sender.clone(),
                            changed: s.frame.iter().map(ToString::to_string).collect(),
                        })
                        .collect(),
                })
                .collect(),
            warnings: report.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let g = &self.graph;
        let mut out = format!("model {}: {} states, {} edges, depth {}", self.model, g.nodes, g.edges, g.max_depth);
        if g.truncated {
            out.push_str(" (truncated)");
        }
        out.push('\n');
        for m in &self.mutations {
            let _ = writeln!(out, "mutation {m}");
        }
        out.push('\n');
        let width = self.verdicts.iter().map(|v| v.checker.len()).max().unwrap_or(0);
        for v in &self.verdicts {
            match &v.reason {
                Some(r) => {
                    let _ = writeln!(out, "{:width$}  {} ({r})", v.checker, v.verdict);
                }
                None => {
                    let _ = writeln!(out, "{:width$}  {}", v.checker, v.verdict);
                }
            }
        }
        for v in &self.violations {
            let _ = writeln!(out, "\n{} {}: {}", v.kind, v.subject, v.message);
            for (i, s) in v.trace.iter().enumerate() {
                let ob = s.obligation.as_deref().unwrap_or("-");
                let from = s.sender.as_ref().map(|x| format!(" from {x}")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "  {}. {} {} ({ob}){from}  changed: {}",
                    i + 1,
                    s.party,
                    s.activity,
                    s.changed.join(", ")
                );
            }
        }
        if !self.warnings.is_empty() {
            out.push('\n');
            for w in &self.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        out
    }
}

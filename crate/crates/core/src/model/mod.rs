//! Domain types for contracts: parties, their state machines, shared
//! attributes, the closed events universe, obligations with rights, and
//! consideration / mutual-consistency declarations.
//!
//! A [`ContractModel`] is plain data. It is built by the parser (or by hand in
//! tests), checked by [`validate_model`], and never mutated afterwards.

mod expr;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use expr::{AssignOp, Atom, BinOp, CmpOp, Effect, Expr, Guard, IntRef, Operand, PartyRef, TransferTarget};
pub use validate::{validate_model, Severity, StaticDiagnostic};

use crate::injector::Mutation;

/// Position of an element in its source file.
///
/// Spans never take part in structural equality: two models that differ only
/// in where their elements were written compare equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
}

impl SourceSpan {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl PartialEq for SourceSpan {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for SourceSpan {}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Contractual use-case metadata. Carried verbatim, never interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContractSpec {
    pub name: String,
    pub description: String,
    pub offer: String,
    pub legality: Vec<String>,
    pub acceptance: Vec<String>,
    pub rejection: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Participant,
    Manager,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Participant => "participant",
            Role::Manager => "manager",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Party {
    pub name: String,
    pub role: Role,
    pub machine: String,
    pub span: SourceSpan,
}

/// A capability of a party's machine: `source -> target` under `guard`.
///
/// Alternation sources in the surface syntax are expanded, so each activity
/// has exactly one source state; `(name, source)` is unique per machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activity {
    pub name: String,
    pub source: String,
    pub target: String,
    /// Event the implementation reacts to, when it differs from the
    /// obligation's enabling event.
    pub trigger: Option<String>,
    pub guard: Guard,
    pub effects: Vec<Effect>,
    /// Variables this activity declares it leaves untouched.
    pub frame: Vec<FrameItem>,
    /// Performed without any obligation requesting it.
    pub spontaneous: bool,
    pub span: SourceSpan,
}

impl Activity {
    pub fn new(name: &str, source: &str, target: &str) -> Self {
        Self {
            name: name.to_string(),
            source: source.to_string(),
            target: target.to_string(),
            trigger: None,
            guard: Guard::truth(),
            effects: Vec::new(),
            frame: Vec::new(),
            spontaneous: false,
            span: SourceSpan::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMachine {
    pub name: String,
    pub states: Vec<String>,
    pub initial: String,
    pub activities: Vec<Activity>,
    pub span: SourceSpan,
}

impl StateMachine {
    pub fn has_state(&self, s: &str) -> bool {
        self.states.iter().any(|x| x == s)
    }

    pub fn activity(&self, name: &str, source: &str) -> Option<&Activity> {
        self.activities.iter().find(|a| a.name == name && a.source == source)
    }

    pub fn activities_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Activity> + 'a {
        self.activities.iter().filter(move |a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarKind {
    Int { lo: i64, hi: i64, init: i64 },
    PartyInt { lo: i64, hi: i64, init: BTreeMap<String, i64> },
    PartySet { init: BTreeSet<String> },
    MsgPool,
}

impl VarKind {
    pub fn is_integer(&self) -> bool {
        matches!(self, VarKind::Int { .. } | VarKind::PartyInt { .. })
    }

    pub fn bounds(&self) -> Option<(i64, i64)> {
        match self {
            VarKind::Int { lo, hi, .. } | VarKind::PartyInt { lo, hi, .. } => Some((*lo, *hi)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedVar {
    pub name: String,
    pub kind: VarKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventType {
    pub name: String,
    /// Instances record which party sent them.
    pub carries_sender: bool,
    pub span: SourceSpan,
}

/// Who must have sent the enabling event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SenderPattern {
    Party(String),
    AnyParticipant,
    AllParticipants,
}

impl fmt::Display for SenderPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenderPattern::Party(p) => f.write_str(p),
            SenderPattern::AnyParticipant => f.write_str("any participant"),
            SenderPattern::AllParticipants => f.write_str("all participants"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnablingEvent {
    pub event: String,
    pub from: Option<SenderPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Recipient {
    Party(String),
    Participants,
    SelfParty,
    Sender,
    Orphan(String),
}

impl fmt::Display for Recipient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipient::Party(p) => f.write_str(p),
            Recipient::Participants => f.write_str("participants"),
            Recipient::SelfParty => f.write_str("self"),
            Recipient::Sender => f.write_str("sender"),
            Recipient::Orphan(a) => f.write_str(&crate::dsl::quote(a)),
        }
    }
}

/// The requesting event a party emits after performing an obligation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Right {
    pub event: String,
    pub recipients: Vec<Recipient>,
}

/// An entry of an UNCHANGED list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameItem {
    /// A shared variable (all of its entries).
    Var(String),
    /// The local state of one party.
    LocalState(String),
}

impl fmt::Display for FrameItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameItem::Var(v) => f.write_str(v),
            FrameItem::LocalState(p) => write!(f, "state[{p}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obligation {
    pub id: String,
    pub party: String,
    pub enabling: Option<EnablingEvent>,
    /// Allowed current states (alternation is kept, not expanded).
    pub current: Vec<String>,
    /// Contract-level condition on the step, checked against the implementation.
    pub condition: Guard,
    pub capability: String,
    pub next: String,
    pub right: Option<Right>,
    /// post_status: variables the step promises not to change.
    pub frame: Vec<FrameItem>,
    pub span: SourceSpan,
}

impl Obligation {
    pub fn enabling_event(&self) -> Option<&str> {
        self.enabling.as_ref().map(|e| e.event.as_str())
    }

    /// A state-changing obligation may fire at most once per visit.
    pub fn is_once_only(&self) -> bool {
        self.current.iter().all(|s| *s != self.next)
    }
}

/// The value a party gains on `upon`: `target op amount`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsiderationDecl {
    pub party: String,
    pub target: IntRef,
    /// `Add` or `Sub`.
    pub op: AssignOp,
    pub amount: Expr,
    pub upon: String,
    pub span: SourceSpan,
}

/// No two participants may sit in `first` and `second` at the same time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForbidDecl {
    pub first: String,
    pub second: String,
    pub span: SourceSpan,
}

/// The sum over all entries of these integer variables is invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConserveDecl {
    pub vars: Vec<String>,
    pub span: SourceSpan,
}

impl fmt::Display for ConserveDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sum({})", self.vars.join(", "))
    }
}

/// A complete parsed contract.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContractModel {
    pub spec: ContractSpec,
    pub parties: Vec<Party>,
    pub machines: Vec<StateMachine>,
    pub shared: Vec<SharedVar>,
    pub events: Vec<EventType>,
    pub obligations: Vec<Obligation>,
    pub considerations: Vec<ConsiderationDecl>,
    pub forbids: Vec<ForbidDecl>,
    pub conserves: Vec<ConserveDecl>,
    /// Flaws deliberately planted by the injector.
    pub mutations: Vec<Mutation>,
}

impl ContractModel {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn party(&self, name: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.name == name)
    }

    pub fn machine(&self, name: &str) -> Option<&StateMachine> {
        self.machines.iter().find(|m| m.name == name)
    }

    pub fn machine_mut(&mut self, name: &str) -> Option<&mut StateMachine> {
        self.machines.iter_mut().find(|m| m.name == name)
    }

    pub fn machine_of(&self, party: &str) -> Option<&StateMachine> {
        self.party(party).and_then(|p| self.machine(&p.machine))
    }

    pub fn shared_var(&self, name: &str) -> Option<&SharedVar> {
        self.shared.iter().find(|v| v.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&EventType> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn obligation(&self, id: &str) -> Option<&Obligation> {
        self.obligations.iter().find(|o| o.id == id)
    }

    /// Participant names in declaration order.
    pub fn participants(&self) -> Vec<&str> {
        self.parties.iter().filter(|p| p.role == Role::Participant).map(|p| p.name.as_str()).collect()
    }

    pub fn is_participant(&self, name: &str) -> bool {
        self.party(name).is_some_and(|p| p.role == Role::Participant)
    }

    /// The message-pool variable, if exactly one is declared.
    pub fn pool_var(&self) -> Option<&str> {
        let mut pools = self.shared.iter().filter(|v| v.kind == VarKind::MsgPool);
        let first = pools.next()?;
        pools.next().is_none().then_some(first.name.as_str())
    }

    /// Activity names referenced by some obligation of `party` (its Next closure).
    pub fn next_closure(&self, party: &str) -> BTreeSet<&str> {
        self.obligations.iter().filter(|o| o.party == party).map(|o| o.capability.as_str()).collect()
    }
}

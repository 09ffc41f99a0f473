//! Guards, integer expressions and effects attached to activities.

use std::fmt;

/// Reference to a party from inside an activity body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyRef {
    /// The party performing the step.
    SelfParty,
    /// The sender of the event instance that enabled the step.
    Sender,
    Named(String),
}

impl fmt::Display for PartyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyRef::SelfParty => f.write_str("self"),
            PartyRef::Sender => f.write_str("sender"),
            PartyRef::Named(n) => f.write_str(n),
        }
    }
}

/// An integer variable, optionally indexed by a party (`balance[self]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntRef {
    pub var: String,
    pub index: Option<PartyRef>,
}

impl IntRef {
    pub fn scalar(var: impl Into<String>) -> Self {
        Self { var: var.into(), index: None }
    }

    pub fn indexed(var: impl Into<String>, index: PartyRef) -> Self {
        Self { var: var.into(), index: Some(index) }
    }
}

impl fmt::Display for IntRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            Some(i) => write!(f, "{}[{}]", self.var, i),
            None => f.write_str(&self.var),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
        }
    }
}

/// Small integer expression language: literals, variables, `+ - *`, negation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(IntRef),
    Neg(Box<Expr>),
    Bin(Box<Expr>, BinOp, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(_, BinOp::Add | BinOp::Sub, _) => 1,
            Expr::Bin(_, BinOp::Mul, _) => 2,
            Expr::Neg(_) => 3,
            Expr::Lit(n) if *n < 0 => 3,
            Expr::Lit(_) | Expr::Var(_) => 4,
        }
    }

    /// Every integer reference mentioned by the expression.
    pub fn refs(&self) -> Vec<&IntRef> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a IntRef>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(r) => out.push(r),
            Expr::Neg(e) => e.collect_refs(out),
            Expr::Bin(a, _, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Var(r) => write!(f, "{r}"),
            Expr::Neg(e) => {
                if e.precedence() < 4 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin(a, op, b) => {
                let p = self.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // left-associative: equal precedence on the right needs parens
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn tla(self) -> &'static str {
        match self {
            CmpOp::Ne => "#",
            other => other.symbol(),
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Lit(i64),
    Var(IntRef),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Lit(n) => write!(f, "{n}"),
            Operand::Var(r) => write!(f, "{r}"),
        }
    }
}

/// One conjunct of a guard.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    Cmp {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    /// `party in set` / `party not in set`
    Member {
        party: PartyRef,
        set: String,
        negated: bool,
    },
    /// `set = participants`
    AllParticipants {
        set: String,
    },
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Atom::Member { party, set, negated } => {
                if *negated {
                    write!(f, "{party} not in {set}")
                } else {
                    write!(f, "{party} in {set}")
                }
            }
            Atom::AllParticipants { set } => write!(f, "{set} = participants"),
        }
    }
}

/// A pure conjunction of atoms. The empty conjunction is `true`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Guard {
    pub atoms: Vec<Atom>,
}

impl Guard {
    pub fn truth() -> Self {
        Self::default()
    }

    pub fn is_true(&self) -> bool {
        self.atoms.is_empty()
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("true");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => ":=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
        }
    }
}

/// Destination of a transfer: a party or an address that belongs to nobody.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransferTarget {
    Party(PartyRef),
    Orphan(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Effect {
    Assign {
        target: IntRef,
        op: AssignOp,
        value: Expr,
    },
    /// Moves `amount` of the party-indexed variable `var` between parties.
    Transfer {
        var: String,
        amount: Expr,
        from: PartyRef,
        to: TransferTarget,
    },
    Insert {
        party: PartyRef,
        set: String,
    },
    /// Forces another party's local state. Never legitimate in a secure model.
    Move {
        party: String,
        state: String,
    },
}

impl Effect {
    /// Variable names written by this effect (not counting local states).
    pub fn written_vars(&self) -> Vec<&str> {
        match self {
            Effect::Assign { target, .. } => vec![target.var.as_str()],
            Effect::Transfer { var, .. } => vec![var.as_str()],
            Effect::Insert { set, .. } => vec![set.as_str()],
            Effect::Move { .. } => vec![],
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Assign { target, op, value } => write!(f, "{target} {} {value}", op.symbol()),
            Effect::Transfer { var, amount, from, to } => {
                write!(f, "transfer {var} {amount} from {from} to ")?;
                match to {
                    TransferTarget::Party(p) => write!(f, "{p}"),
                    TransferTarget::Orphan(a) => write!(f, "{}", crate::dsl::quote(a)),
                }
            }
            Effect::Insert { party, set } => write!(f, "insert {party} into {set}"),
            Effect::Move { party, state } => write!(f, "move {party} -> {state}"),
        }
    }
}

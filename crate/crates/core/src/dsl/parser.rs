use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::lexer::{tokenize, Tok, Token};
use super::{is_keyword, ParseError};
use crate::injector::{Mutation, MutationKind};
use crate::model::*;

pub fn parse(src: &str) -> Result<ContractModel, ParseError> {
    let toks = tokenize(src)?;
    Parser { toks, pos: 0, seen: HashSet::new() }.file()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// (namespace, name) pairs already declared.
    seen: HashSet<(&'static str, String)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        ParseError::expected(self.span(), expected.iter().map(|s| s.to_string()).collect(), self.peek().describe())
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("'{kw}'")]))
        }
    }

    fn sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("'{sym}'")]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if is_keyword(&s) => {
                Err(ParseError::at(self.span(), format!("reserved keyword '{s}' cannot be used as a name"))
                    .with_expected(vec!["identifier".into()]))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn at_plain_ident(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if !is_keyword(s))
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["string literal"])),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    fn declare(&mut self, ns: &'static str, name: &str, span: SourceSpan) -> PResult<()> {
        if self.seen.insert((ns, name.to_string())) {
            Ok(())
        } else {
            Err(ParseError::at(span, format!("duplicate {ns} '{name}'")))
        }
    }

    fn file(mut self) -> PResult<ContractModel> {
        if !self.at_kw("contract") {
            return Err(ParseError::expected(self.span(), vec!["'contract'".into()], self.peek().describe())
                .with_message("expected 'contract' header".into()));
        }
        self.bump();
        let mut model = ContractModel::default();
        model.spec.name = self.ident()?;

        loop {
            let span = self.span();
            let word = match self.peek().clone() {
                Tok::Eof => break,
                Tok::Sym(";") => {
                    self.bump();
                    continue;
                }
                Tok::Ident(w) => w,
                _ => return Err(self.unexpected(&["declaration keyword"])),
            };
            self.bump();
            match word.as_str() {
                "description" => model.spec.description = self.string()?,
                "offer" => model.spec.offer = self.string()?,
                "legality" => model.spec.legality.push(self.string()?),
                "acceptance" => model.spec.acceptance.push(self.string()?),
                "rejection" => model.spec.rejection.push(self.string()?),
                "party" => {
                    let p = self.party(span)?;
                    model.parties.push(p);
                }
                "machine" => {
                    let m = self.machine(span)?;
                    model.machines.push(m);
                }
                "shared" => {
                    let v = self.shared(span)?;
                    model.shared.push(v);
                }
                "event" => {
                    let e = self.event(span)?;
                    model.events.push(e);
                }
                "obligation" => {
                    let o = self.obligation(span)?;
                    model.obligations.push(o);
                }
                "consideration" => {
                    let c = self.consideration(span)?;
                    model.considerations.push(c);
                }
                "forbid" => {
                    self.sym("(")?;
                    let first = self.ident()?;
                    self.sym(",")?;
                    let second = self.ident()?;
                    self.sym(")")?;
                    self.kw("over")?;
                    self.kw("participants")?;
                    model.forbids.push(ForbidDecl { first, second, span });
                }
                "conserve" => {
                    self.kw("sum")?;
                    self.sym("(")?;
                    let mut vars = vec![self.ident()?];
                    while self.eat_sym(",") {
                        vars.push(self.ident()?);
                    }
                    self.sym(")")?;
                    model.conserves.push(ConserveDecl { vars, span });
                }
                "mutation" => {
                    let m = self.mutation(span)?;
                    model.mutations.push(m);
                }
                other => return Err(ParseError::at(span, format!("unknown keyword '{other}'"))),
            }
        }
        Ok(model)
    }

    fn party(&mut self, span: SourceSpan) -> PResult<Party> {
        let name = self.ident()?;
        self.declare("party", &name, span)?;
        self.kw("role")?;
        let role = if self.eat_kw("participant") {
            Role::Participant
        } else if self.eat_kw("manager") {
            Role::Manager
        } else {
            return Err(self.unexpected(&["'participant'", "'manager'"]));
        };
        self.kw("machine")?;
        let machine = self.ident()?;
        Ok(Party { name, role, machine, span })
    }

    fn machine(&mut self, span: SourceSpan) -> PResult<StateMachine> {
        let name = self.ident()?;
        self.declare("machine", &name, span)?;
        self.sym("{")?;
        let mut states = Vec::new();
        let mut initial = None;
        let mut activities = Vec::new();
        loop {
            let at = self.span();
            if self.eat_sym("}") {
                break;
            } else if self.eat_sym(";") {
            } else if self.eat_kw("states") {
                while self.at_plain_ident() {
                    states.push(self.ident()?);
                }
            } else if self.eat_kw("init") {
                initial = Some(self.ident()?);
            } else if self.eat_kw("activity") {
                activities.extend(self.activity(at)?);
            } else {
                return Err(self.unexpected(&["'states'", "'init'", "'activity'", "'}'"]));
            }
        }
        let initial = initial.ok_or_else(|| ParseError::at(span, format!("machine '{name}' has no 'init' state")))?;
        Ok(StateMachine { name, states, initial, activities, span })
    }

    /// One surface activity; alternation sources expand to several.
    fn activity(&mut self, span: SourceSpan) -> PResult<Vec<Activity>> {
        let name = self.ident()?;
        self.sym(":")?;
        let sources = self.alternation()?;
        self.sym("->")?;
        let target = self.ident()?;
        let mut proto = Activity::new(&name, "", &target);
        proto.span = span;
        loop {
            if self.eat_kw("on") {
                proto.trigger = Some(self.ident()?);
            } else if self.eat_kw("when") {
                proto.guard = self.guard()?;
            } else if self.eat_kw("do") {
                proto.effects.push(self.effect()?);
                while self.eat_sym(",") {
                    proto.effects.push(self.effect()?);
                }
            } else if self.eat_kw("unchanged") {
                proto.frame = self.frame_items()?;
            } else if self.eat_kw("spontaneous") {
                proto.spontaneous = true;
            } else {
                break;
            }
        }
        Ok(sources.into_iter().map(|s| Activity { source: s, ..proto.clone() }).collect())
    }

    fn alternation(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.ident()?];
        while self.eat_sym("|") {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn party_ref(&mut self) -> PResult<PartyRef> {
        if self.eat_kw("self") {
            Ok(PartyRef::SelfParty)
        } else if self.eat_kw("sender") {
            Ok(PartyRef::Sender)
        } else {
            Ok(PartyRef::Named(self.ident()?))
        }
    }

    fn int_ref(&mut self) -> PResult<IntRef> {
        let var = self.ident()?;
        if self.eat_sym("[") {
            let idx = self.party_ref()?;
            self.sym("]")?;
            Ok(IntRef::indexed(var, idx))
        } else {
            Ok(IntRef::scalar(var))
        }
    }

    fn guard(&mut self) -> PResult<Guard> {
        if self.eat_kw("true") {
            return Ok(Guard::truth());
        }
        let mut atoms = vec![self.atom()?];
        while self.eat_kw("and") {
            atoms.push(self.atom()?);
        }
        Ok(Guard { atoms })
    }

    fn atom(&mut self) -> PResult<Atom> {
        let membership_next = matches!(self.peek_at(1), Tok::Ident(s) if s == "in" || s == "not");
        if self.at_kw("self") || self.at_kw("sender") || (self.at_plain_ident() && membership_next) {
            let party = self.party_ref()?;
            let negated = self.eat_kw("not");
            self.kw("in")?;
            let set = self.ident()?;
            return Ok(Atom::Member { party, set, negated });
        }
        if self.at_plain_ident()
            && matches!(self.peek_at(1), Tok::Sym("="))
            && matches!(self.peek_at(2), Tok::Ident(s) if s == "participants")
        {
            let set = self.ident()?;
            self.bump();
            self.bump();
            return Ok(Atom::AllParticipants { set });
        }
        let lhs = self.operand()?;
        let op = self.cmp_op()?;
        let rhs = self.operand()?;
        Ok(Atom::Cmp { lhs, op, rhs })
    }

    fn operand(&mut self) -> PResult<Operand> {
        if self.at_plain_ident() {
            Ok(Operand::Var(self.int_ref()?))
        } else if matches!(self.peek(), Tok::Int(_) | Tok::Sym("-")) {
            Ok(Operand::Lit(self.signed_int()?))
        } else {
            Err(self.unexpected(&["variable", "integer", "'self'", "'sender'", "'true'"]))
        }
    }

    fn cmp_op(&mut self) -> PResult<CmpOp> {
        for op in CmpOp::ALL {
            if self.eat_sym(op.symbol()) {
                return Ok(op);
            }
        }
        Err(self.unexpected(&["'='", "'!='", "'<'", "'<='", "'>'", "'>='"]))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        while self.eat_sym("*") {
            let rhs = self.factor()?;
            lhs = Expr::Bin(Box::new(lhs), BinOp::Mul, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Lit(n))
            }
            Tok::Sym("-") => {
                self.bump();
                match self.factor()? {
                    Expr::Lit(n) => Ok(Expr::Lit(-n)),
                    e => Ok(Expr::Neg(Box::new(e))),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) if self.at_plain_ident() => Ok(Expr::Var(self.int_ref()?)),
            _ => Err(self.unexpected(&["integer", "variable", "'('", "'-'"])),
        }
    }

    fn effect(&mut self) -> PResult<Effect> {
        if self.eat_kw("transfer") {
            let var = self.ident()?;
            let amount = self.expr()?;
            self.kw("from")?;
            let from = self.party_ref()?;
            self.kw("to")?;
            let to = if let Tok::Str(_) = self.peek() {
                TransferTarget::Orphan(self.string()?)
            } else {
                TransferTarget::Party(self.party_ref()?)
            };
            return Ok(Effect::Transfer { var, amount, from, to });
        }
        if self.eat_kw("insert") {
            let party = self.party_ref()?;
            self.kw("into")?;
            let set = self.ident()?;
            return Ok(Effect::Insert { party, set });
        }
        if self.eat_kw("move") {
            let party = self.ident()?;
            self.sym("->")?;
            let state = self.ident()?;
            return Ok(Effect::Move { party, state });
        }
        let target = self.int_ref()?;
        let op = if self.eat_sym(":=") {
            AssignOp::Set
        } else if self.eat_sym("+=") {
            AssignOp::Add
        } else if self.eat_sym("-=") {
            AssignOp::Sub
        } else {
            return Err(self.unexpected(&["':='", "'+='", "'-='"]));
        };
        let value = self.expr()?;
        Ok(Effect::Assign { target, op, value })
    }

    fn frame_items(&mut self) -> PResult<Vec<FrameItem>> {
        let mut out = vec![self.frame_item()?];
        while self.eat_sym(",") {
            out.push(self.frame_item()?);
        }
        Ok(out)
    }

    fn frame_item(&mut self) -> PResult<FrameItem> {
        if self.eat_kw("state") {
            self.sym("[")?;
            let p = self.ident()?;
            self.sym("]")?;
            Ok(FrameItem::LocalState(p))
        } else {
            Ok(FrameItem::Var(self.ident()?))
        }
    }

    fn shared(&mut self, span: SourceSpan) -> PResult<SharedVar> {
        let name = self.ident()?;
        self.declare("shared variable", &name, span)?;
        let indexed = if self.eat_sym("[") {
            self.kw("party")?;
            self.sym("]")?;
            true
        } else {
            false
        };
        self.sym(":")?;
        let kind = if self.eat_kw("int") {
            self.sym("[")?;
            let lo = self.signed_int()?;
            self.sym("..")?;
            let hi = self.signed_int()?;
            self.sym("]")?;
            self.sym("=")?;
            if indexed {
                self.sym("{")?;
                let mut init = BTreeMap::new();
                if !self.at_sym("}") {
                    loop {
                        let at = self.span();
                        let p = self.ident()?;
                        self.sym(":")?;
                        let v = self.signed_int()?;
                        if init.insert(p.clone(), v).is_some() {
                            return Err(ParseError::at(at, format!("duplicate initial value for '{p}'")));
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.sym("}")?;
                VarKind::PartyInt { lo, hi, init }
            } else {
                VarKind::Int { lo, hi, init: self.signed_int()? }
            }
        } else if !indexed && self.eat_kw("partyset") {
            self.sym("=")?;
            self.sym("{")?;
            let mut init = BTreeSet::new();
            if !self.at_sym("}") {
                init.insert(self.ident()?);
                while self.eat_sym(",") {
                    init.insert(self.ident()?);
                }
            }
            self.sym("}")?;
            VarKind::PartySet { init }
        } else if !indexed && self.eat_kw("msgpool") {
            VarKind::MsgPool
        } else if indexed {
            return Err(self.unexpected(&["'int'"]));
        } else {
            return Err(self.unexpected(&["'int'", "'partyset'", "'msgpool'"]));
        };
        Ok(SharedVar { name, kind, span })
    }

    fn event(&mut self, span: SourceSpan) -> PResult<EventType> {
        let name = self.ident()?;
        self.declare("event", &name, span)?;
        let carries_sender = if self.eat_sym("(") {
            self.kw("from")?;
            self.kw("party")?;
            self.sym(")")?;
            true
        } else {
            false
        };
        Ok(EventType { name, carries_sender, span })
    }

    fn obligation(&mut self, span: SourceSpan) -> PResult<Obligation> {
        let id = self.ident()?;
        self.declare("obligation", &id, span)?;
        self.kw("for")?;
        let party = self.ident()?;
        self.sym(":")?;
        let enabling = if self.eat_kw("when") {
            self.kw("received")?;
            let event = self.ident()?;
            let from = if self.eat_kw("from") {
                Some(if self.eat_kw("any") {
                    self.kw("participant")?;
                    SenderPattern::AnyParticipant
                } else if self.eat_kw("all") {
                    self.kw("participants")?;
                    SenderPattern::AllParticipants
                } else {
                    SenderPattern::Party(self.ident()?)
                })
            } else {
                None
            };
            Some(EnablingEvent { event, from })
        } else {
            None
        };
        self.kw("require")?;
        self.kw("state")?;
        let current = self.alternation()?;
        let condition = if self.eat_kw("when") { self.guard()? } else { Guard::truth() };
        self.kw("do")?;
        let capability = self.ident()?;
        self.sym("->")?;
        let next = self.ident()?;
        let right = if self.eat_kw("then") {
            self.kw("emit")?;
            let event = self.ident()?;
            self.kw("to")?;
            let mut recipients = vec![self.recipient()?];
            while self.eat_sym(",") {
                recipients.push(self.recipient()?);
            }
            Some(Right { event, recipients })
        } else {
            None
        };
        let frame = if self.eat_kw("frame") {
            self.kw("unchanged")?;
            self.frame_items()?
        } else {
            Vec::new()
        };
        Ok(Obligation { id, party, enabling, current, condition, capability, next, right, frame, span })
    }

    fn recipient(&mut self) -> PResult<Recipient> {
        if self.eat_kw("participants") {
            Ok(Recipient::Participants)
        } else if self.eat_kw("self") {
            Ok(Recipient::SelfParty)
        } else if self.eat_kw("sender") {
            Ok(Recipient::Sender)
        } else if let Tok::Str(_) = self.peek() {
            Ok(Recipient::Orphan(self.string()?))
        } else {
            Ok(Recipient::Party(self.ident()?))
        }
    }

    fn consideration(&mut self, span: SourceSpan) -> PResult<ConsiderationDecl> {
        let party = self.ident()?;
        self.sym(":")?;
        let target = self.int_ref()?;
        let op = if self.eat_sym("+=") {
            AssignOp::Add
        } else if self.eat_sym("-=") {
            AssignOp::Sub
        } else {
            return Err(self.unexpected(&["'+='", "'-='"]));
        };
        let amount = self.expr()?;
        self.kw("upon")?;
        let upon = self.ident()?;
        Ok(ConsiderationDecl { party, target, op, amount, upon, span })
    }

    fn mutation(&mut self, span: SourceSpan) -> PResult<Mutation> {
        let kind_name = self.ident()?;
        let kind = MutationKind::parse(&kind_name)
            .ok_or_else(|| ParseError::at(span, format!("unknown mutation kind '{kind_name}'")))?;
        let target = if self.eat_sym("@") { Some(self.ident()?) } else { None };
        let param = if self.eat_sym("=") {
            match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    Some(s)
                }
                _ => Some(self.ident()?),
            }
        } else {
            None
        };
        Ok(Mutation { kind, target, param })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KITCHEN_SINK: &str = r#"contract Sink
offer "one \"quoted\" thing"
rejection "nobody signs"

party a role participant machine pm
party b role participant machine pm
party hub role manager machine hm

machine pm {
  states S0 S1
  init S0
  activity go: S0 -> S1 when x >= -3 and a in seen and sender not in seen do x := -(x * 2 - 1), bal[sender] += 2 unchanged seen, state[b]
  activity back: S1 -> S0 on ping spontaneous
}

machine hm {
  states H
  init H
  activity nudge: H -> H when seen = participants do move a -> S1, transfer bal 1 from self to "0xbeef"
}

shared x: int[-5..5] = -2
shared bal[party]: int[0..9] = { a: 1, b: 2, hub: 3 }
shared seen: partyset = { a }
shared q: msgpool

event ping(from party)
event pong

obligation o1 for a:
  when received ping from b
  require state S0 when x >= 0 do go -> S1
  then emit pong to sender, "0xfeed", participants
  frame unchanged x, state[b]

obligation o2 for hub:
  when received ping from all participants
  require state H do nudge -> H

conserve sum(bal, x)
mutation SneakPath@go="x >= 0"
"#;

    #[test]
    fn every_construct_parses() {
        let m = parse(KITCHEN_SINK).unwrap();
        let go = m.machines[0].activity("go", "S0").unwrap();
        assert_eq!(go.guard.atoms.len(), 3);
        assert_eq!(go.effects.len(), 2);
        assert_eq!(go.frame, vec![FrameItem::Var("seen".into()), FrameItem::LocalState("b".into())]);
        let back = m.machines[0].activity("back", "S1").unwrap();
        assert!(back.spontaneous);
        assert_eq!(back.trigger.as_deref(), Some("ping"));
        assert!(matches!(m.machines[1].activities[0].guard.atoms[0], Atom::AllParticipants { .. }));
        assert_eq!(m.obligation("o1").unwrap().right.as_ref().unwrap().recipients.len(), 3);
        assert_eq!(m.obligation("o2").unwrap().enabling.as_ref().unwrap().from, Some(SenderPattern::AllParticipants));
        assert_eq!(m.mutations[0].param.as_deref(), Some("x >= 0"));
        assert!(!m.events[1].carries_sender);
    }

    #[test]
    fn every_construct_round_trips() {
        let m = parse(KITCHEN_SINK).unwrap();
        let text = crate::render(&m);
        assert_eq!(parse(&text).unwrap(), m, "{text}");
    }

    #[test]
    fn negative_literals_fold() {
        let m = parse(&KITCHEN_SINK.replace("x := -(x * 2 - 1)", "x := -4")).unwrap();
        let go = m.machines[0].activity("go", "S0").unwrap();
        assert!(matches!(&go.effects[0], Effect::Assign { value: Expr::Lit(-4), .. }));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("contract C\nparty a role boss machine m\n").unwrap_err();
        assert!(e.to_string().starts_with("2:"), "{e}");
        let e = parse("contract C\nshared x: int[0..3] = \n").unwrap_err();
        assert!(e.to_string().contains("expected"), "{e}");
    }
}

use std::collections::{BTreeSet, HashMap, HashSet};

use super::lexer::{tokenize, Tok, Token};
use super::structure::LocalStructure;
use super::{ModelError, ModelErrorKind, PepaModel, Pos, Rate, RateValue, SeqExpr, SystemExpr};

/// Source positions gathered while parsing, used only for diagnostics.
#[derive(Default)]
struct Spans {
    definitions: Vec<(String, Pos)>,
    const_refs: Vec<(String, Pos)>,
    rate_refs: Vec<(String, Pos)>,
    groups: Vec<(String, Pos)>,
    coop_actions: HashMap<String, Pos>,
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    spans: Spans,
}

type PResult<T> = Result<T, ModelError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.at + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ModelError {
        ModelError::at(
            self.pos(),
            ModelErrorKind::Syntax(format!("expected {wanted}, found {}", self.peek().describe())),
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let p = self.bump().pos;
                Ok((s, p))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn positive(&self, value: f64, pos: Pos) -> PResult<f64> {
        if value > 0.0 {
            Ok(value)
        } else {
            Err(ModelError::at(pos, ModelErrorKind::NonPositiveRate(format!("{value}"))))
        }
    }

    fn rate(&mut self) -> PResult<Rate> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Rate::Literal(self.positive(v, pos)?))
            }
            Tok::Infty => {
                self.bump();
                Ok(Rate::Passive)
            }
            Tok::Ident(name) => {
                self.bump();
                self.spans.rate_refs.push((name.clone(), pos));
                Ok(Rate::Named(name))
            }
            _ => Err(self.unexpected("a rate")),
        }
    }

    // seq := term ('+' term)*
    fn seq(&mut self) -> PResult<SeqExpr> {
        let mut lhs = self.term()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            let rhs = self.term()?;
            lhs = SeqExpr::Choice(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := '(' action ',' rate ')' '.' term | '(' seq ')' | Ident
    fn term(&mut self) -> PResult<SeqExpr> {
        match self.peek().clone() {
            Tok::LParen => {
                let is_prefix =
                    matches!(self.peek_at(1), Tok::Ident(_)) && *self.peek_at(2) == Tok::Comma;
                self.bump();
                if is_prefix {
                    let (action, _) = self.ident("an action type")?;
                    self.expect(Tok::Comma)?;
                    let rate = self.rate()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Dot)?;
                    let then = self.term()?;
                    Ok(SeqExpr::Prefix { action, rate, then: Box::new(then) })
                } else {
                    let inner = self.seq()?;
                    self.expect(Tok::RParen)?;
                    Ok(inner)
                }
            }
            Tok::Ident(name) => {
                let pos = self.bump().pos;
                self.spans.const_refs.push((name.clone(), pos));
                Ok(SeqExpr::Const(name))
            }
            _ => Err(self.unexpected("a prefix, constant or `(`")),
        }
    }

    fn action_set(&mut self, close: Tok) -> PResult<BTreeSet<String>> {
        let mut set = BTreeSet::new();
        if *self.peek() == close {
            self.bump();
            return Ok(set);
        }
        loop {
            let (a, p) = self.ident("an action type")?;
            self.spans.coop_actions.entry(a.clone()).or_insert(p);
            set.insert(a);
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            self.expect(close)?;
            return Ok(set);
        }
    }

    // sys := hide (('<' set '>' | '||') hide)*
    fn system(&mut self) -> PResult<SystemExpr> {
        let mut lhs = self.hide()?;
        loop {
            let set = match self.peek() {
                Tok::Lt => {
                    self.bump();
                    self.action_set(Tok::Gt)?
                }
                Tok::Par => {
                    self.bump();
                    BTreeSet::new()
                }
                _ => break,
            };
            let rhs = self.hide()?;
            lhs = SystemExpr::Coop { left: Box::new(lhs), set, right: Box::new(rhs) };
        }
        Ok(lhs)
    }

    // hide := atom ('/' '{' set '}')*
    fn hide(&mut self) -> PResult<SystemExpr> {
        let mut inner = self.atom()?;
        while *self.peek() == Tok::Slash {
            self.bump();
            self.expect(Tok::LBrace)?;
            let set = self.action_set(Tok::RBrace)?;
            inner = SystemExpr::Hide { inner: Box::new(inner), set };
        }
        Ok(inner)
    }

    // atom := Ident ('[' count ']')? | '(' sys ')'
    fn atom(&mut self) -> PResult<SystemExpr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.system()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(component) => {
                let pos = self.bump().pos;
                let mut count = 1u64;
                if *self.peek() == Tok::LBracket {
                    self.bump();
                    let cpos = self.pos();
                    match *self.peek() {
                        Tok::Number(v) if v.fract() == 0.0 && v < 1e15 => {
                            self.bump();
                            count = v as u64;
                        }
                        _ => return Err(self.unexpected("an integer population")),
                    }
                    if count == 0 {
                        return Err(ModelError::at(
                            cpos,
                            ModelErrorKind::ZeroPopulation(component),
                        ));
                    }
                    self.expect(Tok::RBracket)?;
                }
                self.spans.groups.push((component.clone(), pos));
                Ok(SystemExpr::Group { component, count })
            }
            _ => Err(self.unexpected("a component or `(`")),
        }
    }
}

/// Parses and validates PEPA model text.
pub fn parse_model(text: &str) -> Result<PepaModel, ModelError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0, spans: Spans::default() };
    let mut rate_bindings = Vec::new();
    let mut definitions = Vec::new();
    let mut system: Option<SystemExpr> = None;

    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::System => {
                let pos = p.bump().pos;
                if system.is_some() {
                    return Err(ModelError::at(
                        pos,
                        ModelErrorKind::Syntax("duplicate system equation".into()),
                    ));
                }
                system = Some(p.system()?);
                p.expect(Tok::Semi)?;
            }
            Tok::Ident(_) => {
                let (name, pos) = p.ident("a definition name")?;
                p.expect(Tok::Eq)?;
                p.spans.definitions.push((name.clone(), pos));
                match *p.peek() {
                    Tok::Number(v) => {
                        let vpos = p.bump().pos;
                        let v = p.positive(v, vpos)?;
                        rate_bindings.push((name, RateValue::Finite(v)));
                    }
                    Tok::Infty => {
                        p.bump();
                        rate_bindings.push((name, RateValue::Passive));
                    }
                    _ => {
                        let body = p.seq()?;
                        definitions.push((name, body));
                    }
                }
                p.expect(Tok::Semi)?;
            }
            _ => return Err(p.unexpected("a definition or `system`")),
        }
    }

    let system = system.ok_or_else(|| ModelError::new(ModelErrorKind::MissingSystem))?;
    let model = PepaModel { rate_bindings, definitions, system };
    validate(&model, &p.spans)?;
    Ok(model)
}

fn validate(model: &PepaModel, spans: &Spans) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for (name, pos) in &spans.definitions {
        if !seen.insert(name.as_str()) {
            return Err(ModelError::at(*pos, ModelErrorKind::DuplicateDefinition(name.clone())));
        }
    }

    let processes: HashSet<&str> = model.definitions.iter().map(|(n, _)| n.as_str()).collect();
    let rates: HashSet<&str> = model.rate_bindings.iter().map(|(n, _)| n.as_str()).collect();

    for (name, pos) in &spans.const_refs {
        if !processes.contains(name.as_str()) {
            return Err(ModelError::at(*pos, ModelErrorKind::UndefinedConstant(name.clone())));
        }
    }
    for (name, pos) in &spans.rate_refs {
        if !rates.contains(name.as_str()) {
            return Err(ModelError::at(*pos, ModelErrorKind::UndefinedRate(name.clone())));
        }
    }

    let mut in_system = HashSet::new();
    for (component, pos) in &spans.groups {
        if !processes.contains(component.as_str()) {
            return Err(ModelError::at(*pos, ModelErrorKind::UndefinedConstant(component.clone())));
        }
        if !in_system.insert(component.as_str()) {
            return Err(ModelError::at(*pos, ModelErrorKind::DuplicateComponent(component.clone())));
        }
    }

    check_hiding(&model.system, spans)?;

    LocalStructure::build(model).map(|_| ()).map_err(|mut e| {
        if e.pos.is_none() {
            let culprit = match &e.kind {
                ModelErrorKind::UnguardedRecursion(c) => spans.definitions.iter().find(|(n, _)| n == c),
                ModelErrorKind::OverlappingComponents { second, .. } => {
                    spans.groups.iter().find(|(n, _)| n == second)
                }
                _ => None,
            };
            e.pos = culprit.map(|(_, p)| *p);
        }
        e
    })
}

/// Returns the actions hidden anywhere inside `expr`.
fn hidden_within(expr: &SystemExpr, out: &mut BTreeSet<String>) {
    match expr {
        SystemExpr::Group { .. } => {}
        SystemExpr::Coop { left, right, .. } => {
            hidden_within(left, out);
            hidden_within(right, out);
        }
        SystemExpr::Hide { inner, set } => {
            out.extend(set.iter().cloned());
            hidden_within(inner, out);
        }
    }
}

fn check_hiding(expr: &SystemExpr, spans: &Spans) -> Result<(), ModelError> {
    match expr {
        SystemExpr::Group { .. } => Ok(()),
        SystemExpr::Hide { inner, .. } => check_hiding(inner, spans),
        SystemExpr::Coop { left, set, right } => {
            let mut hidden = BTreeSet::new();
            hidden_within(left, &mut hidden);
            hidden_within(right, &mut hidden);
            if let Some(a) = set.intersection(&hidden).next() {
                let kind = ModelErrorKind::HiddenInCooperation(a.clone());
                return Err(match spans.coop_actions.get(a) {
                    Some(p) => ModelError::at(*p, kind),
                    None => ModelError::new(kind),
                });
            }
            check_hiding(left, spans)?;
            check_hiding(right, spans)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL1: &str = "
        a = 1.0; b = 1.0; d = 1.0;
        User1 = (task1, a).User2;
        User2 = (task2, b).User1;
        Sever1 = (task1, a).Sever2;
        Sever2 = (reset, d).Sever1;
        system User1[2] <task1> Sever1[2];
    ";

    fn kind(text: &str) -> ModelErrorKind {
        parse_model(text).unwrap_err().kind
    }

    #[test]
    fn model1_structure() {
        let m = parse_model(MODEL1).unwrap();
        assert_eq!(m.definitions.len(), 4);
        assert_eq!(m.rate_bindings.len(), 3);
        match &m.system {
            SystemExpr::Coop { left, set, right } => {
                assert_eq!(set.iter().collect::<Vec<_>>(), vec!["task1"]);
                assert_eq!(**left, SystemExpr::Group { component: "User1".into(), count: 2 });
                assert_eq!(**right, SystemExpr::Group { component: "Sever1".into(), count: 2 });
            }
            other => panic!("unexpected system {other:?}"),
        }
    }

    #[test]
    fn minimal_self_loop() {
        let m = parse_model("P = (a,1.0).P; system P[3];").unwrap();
        assert_eq!(m.system.groups(), vec![("P", 3)]);
    }

    #[test]
    fn undefined_constant() {
        let err = parse_model("P = (a,1.0).Q; system P[1];").unwrap_err();
        assert_eq!(err.kind, ModelErrorKind::UndefinedConstant("Q".into()));
        assert_eq!(err.to_string(), "1:13: undefined constant Q");
    }

    #[test]
    fn undefined_rate() {
        assert_eq!(kind("P = (a,r).P; system P;"), ModelErrorKind::UndefinedRate("r".into()));
    }

    #[test]
    fn nonpositive_rates() {
        assert!(matches!(kind("P = (a,0).P; system P;"), ModelErrorKind::NonPositiveRate(_)));
        assert!(matches!(kind("r = 0.0; P = (a,r).P; system P;"), ModelErrorKind::NonPositiveRate(_)));
        assert!(matches!(kind("P = (a,-1).P; system P;"), ModelErrorKind::Syntax(_)));
    }

    #[test]
    fn duplicate_component() {
        assert_eq!(
            kind("P = (a,1).P; system P[1] || P[2];"),
            ModelErrorKind::DuplicateComponent("P".into())
        );
    }

    #[test]
    fn duplicate_definition() {
        assert_eq!(
            kind("P = (a,1).P; P = (b,1).P; system P;"),
            ModelErrorKind::DuplicateDefinition("P".into())
        );
    }

    #[test]
    fn hidden_action_in_cooperation() {
        let err = parse_model("P = (a,1).P; Q = (a,1).Q; system (P / {a}) <a> Q;").unwrap_err();
        assert_eq!(err.kind, ModelErrorKind::HiddenInCooperation("a".into()));
        assert!(err.pos.is_some());
        // hiding above a cooperation is fine
        parse_model("P = (a,1).P; Q = (a,1).Q; system (P <a> Q) / {a};").unwrap();
    }

    #[test]
    fn missing_and_empty_system() {
        assert_eq!(kind("P = (a,1).P;"), ModelErrorKind::MissingSystem);
        assert!(matches!(kind("P = (a,1).P; system ;"), ModelErrorKind::Syntax(_)));
    }

    #[test]
    fn zero_population() {
        assert_eq!(kind("P = (a,1).P; system P[0];"), ModelErrorKind::ZeroPopulation("P".into()));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_model("P = (a,1).P\nsystem P;").unwrap_err();
        assert_eq!(err.pos, Some(Pos { line: 2, col: 1 }));
        assert!(err.to_string().starts_with("2:1: expected `;`"));
    }

    #[test]
    fn par_sugar_is_empty_cooperation() {
        let a = parse_model("P = (a,1).P; Q = (b,1).Q; system P || Q;").unwrap();
        let b = parse_model("P = (a,1).P; Q = (b,1).Q; system P[1] <> Q[1];").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn choice_is_left_associative() {
        let m = parse_model("P = (a,1).P + (b,2).P + (c,3).P; system P;").unwrap();
        match m.definition("P").unwrap() {
            SeqExpr::Choice(l, r) => {
                assert!(matches!(**l, SeqExpr::Choice(..)));
                assert!(matches!(**r, SeqExpr::Prefix { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn print_round_trip_on_model1() {
        let m = parse_model(MODEL1).unwrap();
        let again = parse_model(&m.to_string()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn nested_print_round_trip() {
        let text = "r = infty; P = (a, r).((b, 2).P + (c, 3).(d, 1.5).P) + P2; P2 = (e, 1).P;
                    Q = (a, 2).Q; R = (x, 1).R;
                    system (P[2] <a> (Q[3] || R[1])) / {x, b};";
        let m = parse_model(text).unwrap();
        let printed = m.to_string();
        assert_eq!(parse_model(&printed).unwrap(), m, "{printed}");
    }
}

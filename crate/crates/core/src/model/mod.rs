//! PEPA models: abstract syntax, parsing, local-derivative structure and a
//! direct operational-semantics interpreter.
//!
//! Concrete syntax accepted by [`parse_model`]:
//!
//! ```text
//! # rate bindings
//! a = 1.0;
//! # sequential components
//! User1 = (task1, a).User2;
//! User2 = (task2, 2.5).User1 + (idle, infty).User2;
//! # system equation
//! system (User1[3] <task1> Server[2]) / {task2};
//! ```
//!
//! `P || Q` abbreviates `P <> Q`, `P` abbreviates `P[1]`.

mod lexer;
mod parser;
mod semantics;
mod structure;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use parser::parse_model;
pub use semantics::{semantic_transitions, SemanticTransition};
pub use structure::{local_derivatives, ComponentType, LocalDerivative, LocalMove, LocalStructure};

/// Prefix shown in front of the names of hidden actions.
pub const TAU_PREFIX: &str = "tau.";

/// 1-based line and column in the model text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelErrorKind {
    Syntax(String),
    UndefinedConstant(String),
    UndefinedRate(String),
    NonPositiveRate(String),
    DuplicateDefinition(String),
    DuplicateComponent(String),
    HiddenInCooperation(String),
    ZeroPopulation(String),
    UnguardedRecursion(String),
    OverlappingComponents { first: String, second: String, derivative: String },
    MissingSystem,
    Unsupported(String),
}

impl fmt::Display for ModelErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelErrorKind::Syntax(m) => f.write_str(m),
            ModelErrorKind::UndefinedConstant(c) => write!(f, "undefined constant {c}"),
            ModelErrorKind::UndefinedRate(r) => write!(f, "undefined rate {r}"),
            ModelErrorKind::NonPositiveRate(r) => write!(f, "nonpositive rate {r}"),
            ModelErrorKind::DuplicateDefinition(n) => write!(f, "duplicate definition of {n}"),
            ModelErrorKind::DuplicateComponent(c) => {
                write!(f, "duplicate component {c} in system equation")
            }
            ModelErrorKind::HiddenInCooperation(a) => {
                write!(f, "hidden action {a} appears in a cooperation set")
            }
            ModelErrorKind::ZeroPopulation(c) => write!(f, "nonpositive population for {c}"),
            ModelErrorKind::UnguardedRecursion(c) => {
                write!(f, "unguarded recursion through constant {c}")
            }
            ModelErrorKind::OverlappingComponents { first, second, derivative } => write!(
                f,
                "components {first} and {second} share local derivative {derivative}"
            ),
            ModelErrorKind::MissingSystem => f.write_str("missing system equation"),
            ModelErrorKind::Unsupported(m) => f.write_str(m),
        }
    }
}

/// Diagnostic produced while parsing or validating a model. Displays as
/// `line:col: message` when a position is known.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ModelError {
    pub pos: Option<Pos>,
    pub kind: ModelErrorKind,
}

impl ModelError {
    pub(crate) fn at(pos: Pos, kind: ModelErrorKind) -> Self {
        ModelError { pos: Some(pos), kind }
    }

    pub(crate) fn new(kind: ModelErrorKind) -> Self {
        ModelError { pos: None, kind }
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{}:{}: {}", p.line, p.col, self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// An action type; `hidden` is set once hiding has renamed it to τ.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionType {
    pub name: String,
    pub hidden: bool,
}

impl ActionType {
    pub fn visible(name: impl Into<String>) -> Self {
        ActionType { name: name.into(), hidden: false }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hidden {
            write!(f, "{TAU_PREFIX}{}", self.name)
        } else {
            f.write_str(&self.name)
        }
    }
}

/// A resolved activity rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    /// The unspecified rate ∞.
    Passive,
}

impl fmt::Display for RateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateValue::Finite(v) => write!(f, "{v}"),
            RateValue::Passive => f.write_str("infty"),
        }
    }
}

/// A rate as written in a prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum Rate {
    Literal(f64),
    Named(String),
    Passive,
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Literal(v) => write!(f, "{v}"),
            Rate::Named(n) => f.write_str(n),
            Rate::Passive => f.write_str("infty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeqExpr {
    Prefix { action: String, rate: Rate, then: Box<SeqExpr> },
    Choice(Box<SeqExpr>, Box<SeqExpr>),
    Const(String),
}

impl SeqExpr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, in_choice_rhs: bool) -> fmt::Result {
        match self {
            SeqExpr::Const(c) => f.write_str(c),
            SeqExpr::Prefix { action, rate, then } => {
                write!(f, "({action}, {rate}).")?;
                match then.as_ref() {
                    SeqExpr::Choice(..) => {
                        f.write_str("(")?;
                        then.fmt_prec(f, false)?;
                        f.write_str(")")
                    }
                    other => other.fmt_prec(f, false),
                }
            }
            SeqExpr::Choice(l, r) => {
                if in_choice_rhs {
                    f.write_str("(")?;
                }
                l.fmt_prec(f, false)?;
                f.write_str(" + ")?;
                r.fmt_prec(f, true)?;
                if in_choice_rhs {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for SeqExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemExpr {
    Group { component: String, count: u64 },
    Coop { left: Box<SystemExpr>, set: BTreeSet<String>, right: Box<SystemExpr> },
    Hide { inner: Box<SystemExpr>, set: BTreeSet<String> },
}

fn fmt_set(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(", ")
}

impl SystemExpr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, atom: bool) -> fmt::Result {
        match self {
            SystemExpr::Group { component, count } => write!(f, "{component}[{count}]"),
            SystemExpr::Hide { inner, set } => {
                inner.fmt_prec(f, true)?;
                write!(f, " / {{{}}}", fmt_set(set))
            }
            SystemExpr::Coop { left, set, right } => {
                if atom {
                    f.write_str("(")?;
                }
                left.fmt_prec(f, false)?;
                if set.is_empty() {
                    f.write_str(" || ")?;
                } else {
                    write!(f, " <{}> ", fmt_set(set))?;
                }
                right.fmt_prec(f, true)?;
                if atom {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }

    /// Groups in left-to-right order.
    pub fn groups(&self) -> Vec<(&str, u64)> {
        let mut out = Vec::new();
        self.collect_groups(&mut out);
        out
    }

    fn collect_groups<'a>(&'a self, out: &mut Vec<(&'a str, u64)>) {
        match self {
            SystemExpr::Group { component, count } => out.push((component, *count)),
            SystemExpr::Coop { left, right, .. } => {
                left.collect_groups(out);
                right.collect_groups(out);
            }
            SystemExpr::Hide { inner, .. } => inner.collect_groups(out),
        }
    }

    fn scale(&mut self, n: u64) {
        match self {
            SystemExpr::Group { count, .. } => *count *= n,
            SystemExpr::Coop { left, right, .. } => {
                left.scale(n);
                right.scale(n);
            }
            SystemExpr::Hide { inner, .. } => inner.scale(n),
        }
    }
}

impl fmt::Display for SystemExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

/// A validated PEPA model. Definitions and bindings keep source order.
#[derive(Debug, Clone, PartialEq)]
pub struct PepaModel {
    pub rate_bindings: Vec<(String, RateValue)>,
    pub definitions: Vec<(String, SeqExpr)>,
    pub system: SystemExpr,
}

impl PepaModel {
    pub fn definition(&self, name: &str) -> Option<&SeqExpr> {
        self.definitions.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn definition_index(&self, name: &str) -> Option<usize> {
        self.definitions.iter().position(|(n, _)| n == name)
    }

    pub fn rate_binding(&self, name: &str) -> Option<RateValue> {
        self.rate_bindings.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Resolves a prefix rate through the bindings. Only fails on models
    /// that were not produced by [`parse_model`].
    pub fn resolve_rate(&self, rate: &Rate) -> Option<RateValue> {
        match rate {
            Rate::Literal(v) => Some(RateValue::Finite(*v)),
            Rate::Passive => Some(RateValue::Passive),
            Rate::Named(n) => self.rate_binding(n),
        }
    }

    /// Copy with every group population multiplied by `n`.
    pub fn scaled(&self, n: u64) -> PepaModel {
        let mut m = self.clone();
        m.system.scale(n);
        m
    }

    /// Copy with the named rate bindings replaced. Unknown names are an error.
    pub fn with_rates(&self, overrides: &[(String, RateValue)]) -> Result<PepaModel, ModelError> {
        let mut m = self.clone();
        for (name, value) in overrides {
            if let RateValue::Finite(v) = value {
                if !(*v > 0.0) || !v.is_finite() {
                    return Err(ModelError::new(ModelErrorKind::NonPositiveRate(format!(
                        "{name} = {v}"
                    ))));
                }
            }
            match m.rate_bindings.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = *value,
                None => {
                    return Err(ModelError::new(ModelErrorKind::UndefinedRate(name.clone())))
                }
            }
        }
        Ok(m)
    }
}

impl fmt::Display for PepaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in &self.rate_bindings {
            writeln!(f, "{name} = {value};")?;
        }
        for (name, body) in &self.definitions {
            writeln!(f, "{name} = {body};")?;
        }
        writeln!(f, "system {};", self.system)
    }
}

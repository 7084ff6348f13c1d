use serde::Serialize;

use crate::csv_field;

use super::{ActivityKind, ActivityMatrices, RateSpec, RateTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    C,
    Pre,
    Post,
}

/// CSV with one row per local derivative and one column per labelled
/// activity. Labels contain commas and are quoted.
pub fn matrix_csv(m: &ActivityMatrices, kind: MatrixKind) -> String {
    let data = match kind {
        MatrixKind::C => &m.c,
        MatrixKind::Pre => &m.c_pre,
        MatrixKind::Post => &m.c_post,
    };
    let mut out = String::from("derivative");
    for a in &m.activities {
        out.push(',');
        out.push_str(&csv_field(&a.display_name));
    }
    out.push('\n');
    for (d, row) in m.derivatives.iter().zip(data) {
        out.push_str(&csv_field(&d.name));
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct ParticipantJson<'a> {
    pre: &'a str,
    post: &'a str,
    branch: serde_json::Value,
    total: serde_json::Value,
}

/// Finite rates as numbers, passive ones as `"infty"`.
fn rate_value(t: RateTerm) -> serde_json::Value {
    match t {
        RateTerm::Finite(v) => v.into(),
        RateTerm::Passive(_) => "infty".into(),
    }
}

#[derive(Serialize)]
struct ActivityJson<'a> {
    label: &'a str,
    action: String,
    kind: &'static str,
    probability: f64,
    participants: Vec<ParticipantJson<'a>>,
    formula: String,
}

fn formula(m: &ActivityMatrices, spec: &RateSpec, j: usize) -> String {
    let a = &spec.activities[j];
    let term = |pre: usize, t: RateTerm| match t {
        RateTerm::Finite(r) => format!("{r}*x[{}]", m.derivatives[pre].name),
        RateTerm::Passive(_) => format!("infty*x[{}]", m.derivatives[pre].name),
    };
    if let [p] = a.participants.as_slice() {
        return term(p.pre, p.branch);
    }
    let parts: Vec<String> = a.participants.iter().map(|p| term(p.pre, p.total)).collect();
    format!("{}*min({})", a.probability(), parts.join(", "))
}

/// Rate functions as pretty-printed JSON, one entry per column.
pub fn rate_spec_json(m: &ActivityMatrices, spec: &RateSpec) -> String {
    let entries: Vec<ActivityJson> = m
        .activities
        .iter()
        .enumerate()
        .map(|(j, a)| ActivityJson {
            label: &a.display_name,
            action: a.action.to_string(),
            kind: match a.kind {
                ActivityKind::Individual => "individual",
                ActivityKind::Shared => "shared",
            },
            probability: spec.activities[j].probability(),
            participants: spec.activities[j]
                .participants
                .iter()
                .map(|p| ParticipantJson {
                    pre: &m.derivatives[p.pre].name,
                    post: &m.derivatives[p.post].name,
                    branch: rate_value(p.branch),
                    total: rate_value(p.total),
                })
                .collect(),
            formula: formula(m, spec, j),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("serialisable");
    s.push('\n');
    s
}

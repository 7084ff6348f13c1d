//! Direct interpretation of the PEPA cooperation rules over aggregated
//! states. It walks the system equation and applies the apparent-rate rule
//! at every cooperation node, without going through activity matrices, so
//! it can serve as an independent reference for the matrix-driven route.

use std::collections::BTreeMap;

use super::structure::LocalStructure;
use super::{ActionType, ModelError, ModelErrorKind, PepaModel, RateValue, SystemExpr};

/// One aggregated one-step successor of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTransition {
    pub action: ActionType,
    /// `(pre, post)` derivative pairs, one per participating component
    /// type, ordered by derivative index.
    pub moves: Vec<(usize, usize)>,
    pub rate: f64,
    pub target: Vec<i64>,
}

impl SemanticTransition {
    /// Canonical label, `action{U1->V1,U2->V2}`.
    pub fn label(&self, structure: &LocalStructure) -> String {
        let pairs: Vec<String> = self
            .moves
            .iter()
            .map(|&(u, v)| format!("{}->{}", structure.derivatives[u].name, structure.derivatives[v].name))
            .collect();
        format!("{}{{{}}}", self.action, pairs.join(","))
    }
}

#[derive(Debug, Clone, Copy)]
enum Weight {
    Active(f64),
    /// Multiple of the unspecified rate.
    Passive(f64),
}

impl Weight {
    fn value(self) -> f64 {
        match self {
            Weight::Active(v) | Weight::Passive(v) => v,
        }
    }

    fn scale(self, k: f64) -> Weight {
        match self {
            Weight::Active(v) => Weight::Active(v * k),
            Weight::Passive(v) => Weight::Passive(v * k),
        }
    }

    fn min(self, other: Weight) -> Weight {
        match (self, other) {
            (Weight::Active(a), Weight::Active(b)) => Weight::Active(a.min(b)),
            (Weight::Active(a), Weight::Passive(_)) | (Weight::Passive(_), Weight::Active(a)) => Weight::Active(a),
            (Weight::Passive(a), Weight::Passive(b)) => Weight::Passive(a.min(b)),
        }
    }
}

#[derive(Debug, Clone)]
struct Partial {
    action: ActionType,
    moves: Vec<(usize, usize)>,
    rate: Weight,
}

fn unsupported(msg: String) -> ModelError {
    ModelError::new(ModelErrorKind::Unsupported(msg))
}

fn apparent(ts: &[&Partial], action: &ActionType) -> Result<Weight, ModelError> {
    let mut acc: Option<Weight> = None;
    for t in ts {
        acc = Some(match (acc, t.rate) {
            (None, w) => w,
            (Some(Weight::Active(a)), Weight::Active(b)) => Weight::Active(a + b),
            (Some(Weight::Passive(a)), Weight::Passive(b)) => Weight::Passive(a + b),
            _ => {
                return Err(unsupported(format!(
                    "action {action} mixes active and passive rates on one side of a cooperation"
                )))
            }
        });
    }
    Ok(acc.unwrap_or(Weight::Active(0.0)))
}

fn eval(
    expr: &SystemExpr,
    structure: &LocalStructure,
    groups: &BTreeMap<String, usize>,
    x: &[i64],
) -> Result<Vec<Partial>, ModelError> {
    match expr {
        SystemExpr::Group { component, .. } => {
            let ty = groups[component.as_str()];
            let mut out = Vec::new();
            for u in structure.types[ty].derivatives.clone() {
                if x[u] <= 0 {
                    continue;
                }
                let n = x[u] as f64;
                for m in &structure.moves[u] {
                    let rate = match m.rate {
                        RateValue::Finite(r) => Weight::Active(n * r),
                        RateValue::Passive => Weight::Passive(n),
                    };
                    out.push(Partial { action: ActionType::visible(&m.action), moves: vec![(u, m.target)], rate });
                }
            }
            Ok(out)
        }
        SystemExpr::Hide { inner, set } => {
            let mut ts = eval(inner, structure, groups, x)?;
            for t in &mut ts {
                if !t.action.hidden && set.contains(&t.action.name) {
                    t.action.hidden = true;
                }
            }
            Ok(ts)
        }
        SystemExpr::Coop { left, set, right } => {
            let lt = eval(left, structure, groups, x)?;
            let rt = eval(right, structure, groups, x)?;
            let synced = |t: &Partial| !t.action.hidden && set.contains(&t.action.name);

            let mut out: Vec<Partial> =
                lt.iter().chain(rt.iter()).filter(|t| !synced(t)).cloned().collect();

            for name in set {
                let action = ActionType::visible(name);
                let ls: Vec<&Partial> = lt.iter().filter(|t| synced(t) && t.action.name == *name).collect();
                let rs: Vec<&Partial> = rt.iter().filter(|t| synced(t) && t.action.name == *name).collect();
                if ls.is_empty() || rs.is_empty() {
                    continue;
                }
                let app_l = apparent(&ls, &action)?;
                let app_r = apparent(&rs, &action)?;
                let joint = app_l.min(app_r);
                for a in &ls {
                    for b in &rs {
                        let p = (a.rate.value() / app_l.value()) * (b.rate.value() / app_r.value());
                        let mut moves = a.moves.clone();
                        moves.extend_from_slice(&b.moves);
                        moves.sort_unstable();
                        out.push(Partial { action: action.clone(), moves, rate: joint.scale(p) });
                    }
                }
            }
            Ok(out)
        }
    }
}

/// All one-step successors of `state`, with duplicate derivations of the
/// same transition merged and their rates summed.
pub fn semantic_transitions(model: &PepaModel, state: &[i64]) -> Result<Vec<SemanticTransition>, ModelError> {
    let structure = LocalStructure::build(model)?;
    semantic_transitions_in(model, &structure, state)
}

pub(crate) fn semantic_transitions_in(
    model: &PepaModel,
    structure: &LocalStructure,
    state: &[i64],
) -> Result<Vec<SemanticTransition>, ModelError> {
    if state.len() != structure.dimension() {
        return Err(unsupported(format!(
            "state has {} entries, model has {} local derivatives",
            state.len(),
            structure.dimension()
        )));
    }
    let groups: BTreeMap<String, usize> =
        structure.types.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
    let partials = eval(&model.system, structure, &groups, state)?;

    let mut merged: BTreeMap<(ActionType, Vec<(usize, usize)>), f64> = BTreeMap::new();
    for p in partials {
        let rate = match p.rate {
            Weight::Active(r) => r,
            Weight::Passive(_) => {
                return Err(unsupported(format!(
                    "action {} has an unspecified rate with no active partner",
                    p.action
                )))
            }
        };
        *merged.entry((p.action, p.moves)).or_insert(0.0) += rate;
    }

    Ok(merged
        .into_iter()
        .filter(|(_, rate)| *rate > 0.0)
        .map(|((action, moves), rate)| {
            let mut target = state.to_vec();
            for &(u, v) in &moves {
                target[u] -= 1;
                target[v] += 1;
            }
            SemanticTransition { action, moves, rate, target }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const MODEL1: &str = "a=1; b=1; d=1;
        User1 = (task1, a).User2; User2 = (task2, b).User1;
        Sever1 = (task1, a).Sever2; Sever2 = (reset, d).Sever1;
        system User1[2] <task1> Sever1[2];";

    const MODEL2: &str = "ra1 = 1; ra2 = 3; ra = 2; rb1 = 1; rb2 = 2; rg = 2; rg2 = 1.5;
        P1 = (alpha, ra1).P2 + (alpha, ra2).P3; P2 = (beta, rb1).P1 + (beta, rb2).P3;
        P3 = (gamma, rg).P1; Q1 = (alpha, ra).Q2; Q2 = (gamma, rg2).Q1;
        system P1[1] <alpha> Q1[1];";

    #[test]
    fn model1_task1_from_initial_state() {
        let m = parse_model(MODEL1).unwrap();
        let ts = semantic_transitions(&m, &[2, 0, 2, 0]).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].action.name, "task1");
        assert_eq!(ts[0].target, vec![1, 1, 1, 1]);
        assert_eq!(ts[0].rate, 2.0);
    }

    #[test]
    fn deadlocked_state_has_no_successors() {
        let m = parse_model("P = (a,1).Q; Q = (b,1).P; R = (a,1).R; system P <a> R;").unwrap();
        // P block: (P, Q); R block: (R). Q can do b, but zero Q's and zero R's
        assert!(semantic_transitions(&m, &[1, 0, 0]).unwrap().is_empty());
    }

    #[test]
    fn model2_alpha_split() {
        let m = parse_model(MODEL2).unwrap();
        let s = LocalStructure::build(&m).unwrap();
        let ts = semantic_transitions(&m, &[1, 0, 0, 1, 0]).unwrap();
        let alpha: Vec<_> = ts.iter().filter(|t| t.action.name == "alpha").collect();
        assert_eq!(alpha.len(), 2);
        assert_eq!(alpha[0].label(&s), "alpha{P1->P2,Q1->Q2}");
        assert!((alpha[0].rate - 0.5).abs() < 1e-12);
        assert_eq!(alpha[1].label(&s), "alpha{P1->P3,Q1->Q2}");
        assert!((alpha[1].rate - 1.5).abs() < 1e-12);
    }

    #[test]
    fn passive_partner_takes_active_rate() {
        let m = parse_model("P = (a, infty).P; Q = (a, 3).Q; system P[2] <a> Q[1];").unwrap();
        let ts = semantic_transitions(&m, &[2, 1]).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].rate, 3.0);
        assert!(semantic_transitions(&m, &[0, 1]).unwrap().is_empty());
    }

    #[test]
    fn unsynchronised_passive_is_rejected() {
        let m = parse_model("P = (a, infty).P; system P;").unwrap();
        assert!(semantic_transitions(&m, &[1]).is_err());
    }

    #[test]
    fn hiding_renames_action() {
        let m = parse_model("P = (a, 1).P; system P / {a};").unwrap();
        let ts = semantic_transitions(&m, &[1]).unwrap();
        assert!(ts[0].action.hidden);
    }

    #[test]
    fn duplicate_derivations_are_summed() {
        let m = parse_model("P = (a, 1).Q + (a, 2).Q; Q = (b, 1).P; system P[2];").unwrap();
        let ts = semantic_transitions(&m, &[2, 0]).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].rate, 6.0);
    }
}

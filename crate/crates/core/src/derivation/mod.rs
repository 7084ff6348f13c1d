//! Labelled activities, activity matrices and transition rate functions.
//!
//! Every activity is split into one labelled activity per possible outcome:
//! an individual activity `l` enabled in `U` becomes `l{U->V}` for each
//! `V ∈ post(U, l)`, and a shared activity becomes one labelled activity per
//! element of `post(U_1, l) × … × post(U_k, l)`. Each labelled activity is a
//! column of `C = C^Post − C^Pre` and owns one rate function.

mod export;
mod rate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{ActionType, ComponentType, LocalDerivative, LocalStructure, ModelError, PepaModel, RateValue, SystemExpr};

pub use export::{matrix_csv, rate_spec_json, MatrixKind};
pub use rate::{min_passive, passive_times, ActivityRate, Participant, RateSpec, RateTerm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeriveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("action {action}: several independent components enable it on one side of a cooperation")]
    AmbiguousSynchronisation { action: String },
    #[error("shared action {action} is enabled by more than one derivative of {component}: {derivatives}")]
    SameTypeClash { action: String, component: String, derivatives: String },
    #[error("derivative {derivative} mixes finite and passive rates for action {action}")]
    MixedPassive { action: String, derivative: String },
    #[error("passive rate on unsynchronised activity {action} in {derivative}")]
    PassiveIndividual { action: String, derivative: String },
    #[error("unspecified synchronisation rate: every participant of {label} is passive")]
    AllPassive { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActivityKind {
    Individual,
    Shared,
}

/// An activity together with the outcome it leads to: one `(pre, post)`
/// derivative pair per participating component type, in type order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledActivity {
    pub action: ActionType,
    pub kind: ActivityKind,
    pub label: Vec<(usize, usize)>,
    pub display_name: String,
}

impl fmt::Display for LabelledActivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name)
    }
}

/// Canonical label string `action{U1->V1,U2->V2}`.
pub fn label_string(action: &ActionType, pairs: &[(usize, usize)], derivatives: &[LocalDerivative]) -> String {
    let inner: Vec<String> = pairs
        .iter()
        .map(|&(u, v)| format!("{}->{}", derivatives[u].name, derivatives[v].name))
        .collect();
    format!("{action}{{{}}}", inner.join(","))
}

/// Pre set of an action and its post sets per pre derivative.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PrePost {
    pub pre: Vec<usize>,
    pub post: BTreeMap<usize, Vec<usize>>,
}

/// A set of component types that perform an action together. A single type
/// means the action is individual for that type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SyncUnit {
    pub action: ActionType,
    pub types: Vec<usize>,
}

type UnitMap = BTreeMap<ActionType, Vec<BTreeSet<usize>>>;

fn unit_map(expr: &SystemExpr, structure: &LocalStructure) -> Result<UnitMap, DeriveError> {
    match expr {
        SystemExpr::Group { component, .. } => {
            let ty = structure.types.iter().position(|t| &t.name == component).expect("group has a type");
            let mut map = UnitMap::new();
            for d in structure.types[ty].derivatives.clone() {
                for m in &structure.moves[d] {
                    map.entry(ActionType::visible(&m.action)).or_insert_with(|| vec![BTreeSet::from([ty])]);
                }
            }
            Ok(map)
        }
        SystemExpr::Hide { inner, set } => {
            let mut out = UnitMap::new();
            for (mut action, units) in unit_map(inner, structure)? {
                if set.contains(&action.name) {
                    action.hidden = true;
                }
                out.entry(action).or_default().extend(units);
            }
            Ok(out)
        }
        SystemExpr::Coop { left, set, right } => {
            let mut l = unit_map(left, structure)?;
            let mut r = unit_map(right, structure)?;
            let mut out = UnitMap::new();
            for name in set {
                let key = ActionType::visible(name);
                match (l.remove(&key), r.remove(&key)) {
                    (Some(lu), Some(ru)) => {
                        if lu.len() > 1 || ru.len() > 1 {
                            return Err(DeriveError::AmbiguousSynchronisation { action: name.clone() });
                        }
                        let merged: BTreeSet<usize> = lu[0].union(&ru[0]).copied().collect();
                        out.insert(key, vec![merged]);
                    }
                    // an action in the cooperation set that only one side can
                    // perform is blocked for good
                    _ => {}
                }
            }
            for (action, units) in l.into_iter().chain(r) {
                out.entry(action).or_default().extend(units);
            }
            Ok(out)
        }
    }
}

pub(crate) fn sync_units(model: &PepaModel, structure: &LocalStructure) -> Result<Vec<SyncUnit>, DeriveError> {
    let map = unit_map(&model.system, structure)?;
    Ok(map
        .into_iter()
        .flat_map(|(action, units)| {
            units.into_iter().map(move |u| SyncUnit { action: action.clone(), types: u.into_iter().collect() })
        })
        .collect())
}

/// Branches `pre -> (post, summed rate)` of `action` out of the derivatives of `ty`.
fn branches(structure: &LocalStructure, ty: usize, action: &ActionType) -> Result<BTreeMap<usize, BTreeMap<usize, RateTerm>>, DeriveError> {
    let mut out: BTreeMap<usize, BTreeMap<usize, RateTerm>> = BTreeMap::new();
    for u in structure.types[ty].derivatives.clone() {
        for m in &structure.moves[u] {
            if m.action != action.name {
                continue;
            }
            let term = match m.rate {
                RateValue::Finite(r) => RateTerm::Finite(r),
                RateValue::Passive => RateTerm::Passive(1.0),
            };
            let slot = out.entry(u).or_default();
            let mixed = || DeriveError::MixedPassive {
                action: action.to_string(),
                derivative: structure.derivatives[u].name.clone(),
            };
            if slot.values().any(|t| t.is_passive() != term.is_passive()) {
                return Err(mixed());
            }
            // passive branches are weighted uniformly over post(U, l), so a
            // repeated passive derivation does not add weight
            let summed = match slot.get(&m.target) {
                Some(prev) if term.is_passive() => *prev,
                Some(prev) => (*prev + term).ok_or_else(mixed)?,
                None => term,
            };
            slot.insert(m.target, summed);
        }
    }
    Ok(out)
}

fn total(rates: &BTreeMap<usize, RateTerm>) -> RateTerm {
    rates.values().copied().reduce(|a, b| (a + b).expect("homogeneous branches")).expect("nonempty post set")
}

/// The pre and post sets of every action, keyed by action type.
pub fn pre_post_sets(model: &PepaModel) -> Result<BTreeMap<ActionType, PrePost>, DeriveError> {
    let structure = LocalStructure::build(model)?;
    let mut out: BTreeMap<ActionType, PrePost> = BTreeMap::new();
    for unit in sync_units(model, &structure)? {
        let entry = out.entry(unit.action.clone()).or_default();
        for &ty in &unit.types {
            for (u, posts) in branches(&structure, ty, &unit.action)? {
                entry.pre.push(u);
                entry.post.insert(u, posts.keys().copied().collect());
            }
        }
        entry.pre.sort_unstable();
    }
    Ok(out)
}

/// Labelled activities with their rate data, in column order.
fn label_with_rates(model: &PepaModel, structure: &LocalStructure) -> Result<Vec<(LabelledActivity, ActivityRate)>, DeriveError> {
    let mut out = Vec::new();
    for unit in sync_units(model, structure)? {
        let action = &unit.action;
        if let [ty] = unit.types[..] {
            for (u, posts) in branches(structure, ty, action)? {
                let tot = total(&posts);
                if tot.is_passive() {
                    return Err(DeriveError::PassiveIndividual {
                        action: action.to_string(),
                        derivative: structure.derivatives[u].name.clone(),
                    });
                }
                for (v, branch) in posts {
                    let label = vec![(u, v)];
                    let display_name = label_string(action, &label, &structure.derivatives);
                    out.push((
                        LabelledActivity { action: action.clone(), kind: ActivityKind::Individual, label, display_name },
                        ActivityRate::new(vec![Participant { pre: u, post: v, branch, total: tot }]),
                    ));
                }
            }
            continue;
        }

        // shared: exactly one pre derivative per participating type
        let mut sides = Vec::with_capacity(unit.types.len());
        for &ty in &unit.types {
            let b = branches(structure, ty, action)?;
            if b.len() != 1 {
                let names: Vec<&str> = b.keys().map(|&u| structure.derivatives[u].name.as_str()).collect();
                return Err(DeriveError::SameTypeClash {
                    action: action.to_string(),
                    component: structure.types[ty].name.clone(),
                    derivatives: names.join(", "),
                });
            }
            let (u, posts) = b.into_iter().next().expect("one entry");
            let tot = total(&posts);
            sides.push((u, posts, tot));
        }

        let mut combos: Vec<Vec<Participant>> = vec![Vec::new()];
        for (u, posts, tot) in &sides {
            let mut next = Vec::with_capacity(combos.len() * posts.len());
            for prefix in &combos {
                for (&v, &branch) in posts {
                    let mut p = prefix.clone();
                    p.push(Participant { pre: *u, post: v, branch, total: *tot });
                    next.push(p);
                }
            }
            combos = next;
        }
        for participants in combos {
            let label: Vec<(usize, usize)> = participants.iter().map(|p| (p.pre, p.post)).collect();
            let display_name = label_string(action, &label, &structure.derivatives);
            if participants.iter().all(|p| p.total.is_passive()) {
                return Err(DeriveError::AllPassive { label: display_name });
            }
            out.push((
                LabelledActivity { action: action.clone(), kind: ActivityKind::Shared, label, display_name },
                ActivityRate::new(participants),
            ));
        }
    }
    out.sort_by(|(a, _), (b, _)| {
        (a.action.to_string(), &a.display_name).cmp(&(b.action.to_string(), &b.display_name))
    });
    Ok(out)
}

/// All labelled activities of the model, in column order (action name, then
/// label string).
pub fn label_activities(model: &PepaModel) -> Result<Vec<LabelledActivity>, DeriveError> {
    let structure = LocalStructure::build(model)?;
    Ok(label_with_rates(model, &structure)?.into_iter().map(|(a, _)| a).collect())
}

/// Activity matrices over (local derivative × labelled activity), stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrices {
    pub types: Vec<ComponentType>,
    pub derivatives: Vec<LocalDerivative>,
    pub activities: Vec<LabelledActivity>,
    pub c: Vec<Vec<i32>>,
    pub c_pre: Vec<Vec<i32>>,
    pub c_post: Vec<Vec<i32>>,
}

impl ActivityMatrices {
    fn from_activities(structure: &LocalStructure, activities: Vec<LabelledActivity>) -> Self {
        let (rows, cols) = (structure.dimension(), activities.len());
        let mut c_pre = vec![vec![0; cols]; rows];
        let mut c_post = vec![vec![0; cols]; rows];
        for (j, a) in activities.iter().enumerate() {
            for &(u, v) in &a.label {
                c_pre[u][j] = 1;
                c_post[v][j] = 1;
            }
        }
        let c = c_post
            .iter()
            .zip(&c_pre)
            .map(|(post, pre)| post.iter().zip(pre).map(|(a, b)| a - b).collect())
            .collect();
        ActivityMatrices {
            types: structure.types.clone(),
            derivatives: structure.derivatives.clone(),
            activities,
            c,
            c_pre,
            c_post,
        }
    }

    pub fn rows(&self) -> usize {
        self.derivatives.len()
    }

    pub fn cols(&self) -> usize {
        self.activities.len()
    }

    pub fn column(&self, j: usize) -> Vec<i32> {
        self.c.iter().map(|row| row[j]).collect()
    }

    pub fn find(&self, display_name: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.display_name == display_name)
    }

    pub fn derivative_index(&self, name: &str) -> Option<usize> {
        self.derivatives.iter().position(|d| d.name == name)
    }

    /// Initial state: every population on its type's first derivative.
    pub fn initial_counts(&self) -> Vec<i64> {
        let mut x = vec![0; self.rows()];
        for t in &self.types {
            x[t.derivatives.start] = t.population as i64;
        }
        x
    }
}

/// Builds `C`, `C^Pre` and `C^Post`.
pub fn build_matrices(model: &PepaModel) -> Result<ActivityMatrices, DeriveError> {
    Ok(derive_all(model)?.0)
}

/// Transition rate function `f(x, l)` of column `l`.
pub fn rate_function(matrices: &ActivityMatrices, spec: &RateSpec, x: &[f64], l: usize) -> f64 {
    debug_assert_eq!(x.len(), matrices.rows());
    spec.rate(x, l)
}

/// Derives labelled activities, activity matrices and rate functions in one
/// pass.
pub fn derive_all(model: &PepaModel) -> Result<(ActivityMatrices, RateSpec), DeriveError> {
    let structure = LocalStructure::build(model)?;
    let labelled = label_with_rates(model, &structure)?;
    let (activities, rates): (Vec<_>, Vec<_>) = labelled.into_iter().unzip();
    Ok((ActivityMatrices::from_activities(&structure, activities), RateSpec { activities: rates }))
}

/// Matrices and rate functions of a model, kept together for the analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub matrices: ActivityMatrices,
    pub rates: RateSpec,
}

impl Derivation {
    pub fn new(model: &PepaModel) -> Result<Self, DeriveError> {
        let (matrices, rates) = derive_all(model)?;
        Ok(Derivation { matrices, rates })
    }

    pub fn dimension(&self) -> usize {
        self.matrices.rows()
    }

    pub fn activity_count(&self) -> usize {
        self.matrices.cols()
    }

    pub fn rate(&self, x: &[f64], l: usize) -> f64 {
        self.rates.rate(x, l)
    }

    pub fn initial_counts(&self) -> Vec<i64> {
        self.matrices.initial_counts()
    }

    /// Applies column `l` to an integer state.
    pub fn fire(&self, x: &mut [i64], l: usize) {
        for &(u, v) in &self.matrices.activities[l].label {
            x[u] -= 1;
            x[v] += 1;
        }
    }
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

    fn idx(m: &ActivityMatrices, name: &str) -> usize {
        m.derivative_index(name).unwrap()
    }

    #[test]
    fn model2_pre_post_sets() {
        let m = parse_model(MODEL2).unwrap();
        let sets = pre_post_sets(&m).unwrap();
        let (ms, _) = derive_all(&m).unwrap();
        let alpha = &sets[&ActionType::visible("alpha")];
        assert_eq!(alpha.pre, vec![idx(&ms, "P1"), idx(&ms, "Q1")]);
        assert_eq!(alpha.post[&idx(&ms, "P1")], vec![idx(&ms, "P2"), idx(&ms, "P3")]);
        let beta = &sets[&ActionType::visible("beta")];
        assert_eq!(beta.pre, vec![idx(&ms, "P2")]);
        let gamma = &sets[&ActionType::visible("gamma")];
        assert_eq!(gamma.pre, vec![idx(&ms, "P3"), idx(&ms, "Q2")]);
    }

    #[test]
    fn model2_labels_and_columns() {
        let m = parse_model(MODEL2).unwrap();
        let names: Vec<String> = label_activities(&m).unwrap().into_iter().map(|a| a.display_name).collect();
        assert_eq!(
            names,
            vec![
                "alpha{P1->P2,Q1->Q2}",
                "alpha{P1->P3,Q1->Q2}",
                "beta{P2->P1}",
                "beta{P2->P3}",
                "gamma{P3->P1}",
                "gamma{Q2->Q1}",
            ]
        );
    }

    #[test]
    fn model1_three_activities() {
        let m = parse_model(MODEL1).unwrap();
        let acts = label_activities(&m).unwrap();
        let kinds: Vec<_> = acts.iter().map(|a| (a.action.name.as_str(), a.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                ("reset", ActivityKind::Individual),
                ("task1", ActivityKind::Shared),
                ("task2", ActivityKind::Individual)
            ]
        );
    }

    #[test]
    fn self_loop_activity() {
        let m = parse_model("P=(a,1).P; system P[1];").unwrap();
        let (ms, _) = derive_all(&m).unwrap();
        assert_eq!(ms.activities.len(), 1);
        assert_eq!(ms.activities[0].display_name, "a{P->P}");
        assert_eq!(ms.c, vec![vec![0]]);
        assert_eq!(ms.c_pre, vec![vec![1]]);
        assert_eq!(ms.c_post, vec![vec![1]]);
    }

    #[test]
    fn model1_task1_column() {
        let (ms, _) = derive_all(&parse_model(MODEL1).unwrap()).unwrap();
        let j = ms.find("task1{User1->User2,Sever1->Sever2}").unwrap();
        assert_eq!(ms.column(j), vec![-1, 1, -1, 1]);
    }

    #[test]
    fn model2_gamma_column() {
        let (ms, _) = derive_all(&parse_model(MODEL2).unwrap()).unwrap();
        let j = ms.find("gamma{Q2->Q1}").unwrap();
        assert_eq!(ms.column(j), vec![0, 0, 0, 1, -1]);
    }

    #[test]
    fn model2_rate_functions() {
        let (ms, spec) = derive_all(&parse_model(MODEL2).unwrap()).unwrap();
        let g = ms.find("gamma{P3->P1}").unwrap();
        assert_eq!(rate_function(&ms, &spec, &[0.0, 0.0, 3.0, 0.0, 0.0], g), 6.0);
        let a = ms.find("alpha{P1->P2,Q1->Q2}").unwrap();
        let f = rate_function(&ms, &spec, &[2.0, 0.0, 0.0, 1.0, 0.0], a);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn passive_partner_with_empty_pool_is_zero() {
        let m = parse_model("P = (a, 2).P; Q = (a, infty).Q2; Q2 = (b, 1).Q; system P[4] <a> Q[1];").unwrap();
        let (ms, spec) = derive_all(&m).unwrap();
        let j = ms.find("a{P->P,Q->Q2}").unwrap();
        // columns: P, Q, Q2
        assert_eq!(spec.rate(&[4.0, 1.0, 0.0], j), 8.0);
        assert_eq!(spec.rate(&[4.0, 0.0, 1.0], j), 0.0);
        assert_eq!(spec.rate(&[400.0, 0.0, 0.0], j), 0.0);
    }

    #[test]
    fn all_passive_synchronisation_rejected() {
        let m = parse_model("P = (a, infty).P; Q = (a, infty).Q; system P <a> Q;").unwrap();
        assert!(matches!(derive_all(&m), Err(DeriveError::AllPassive { .. })));
    }

    #[test]
    fn passive_individual_rejected() {
        let m = parse_model("P = (a, infty).P; system P;").unwrap();
        assert!(matches!(derive_all(&m), Err(DeriveError::PassiveIndividual { .. })));
    }

    #[test]
    fn mixed_passive_branches_rejected() {
        let m = parse_model("P = (a, infty).P + (a, 1).P2; P2 = (b,1).P; Q = (a, 1).Q; system P <a> Q;").unwrap();
        assert!(matches!(derive_all(&m), Err(DeriveError::MixedPassive { .. })));
    }

    #[test]
    fn same_type_clash_rejected() {
        let m = parse_model("P1 = (a, 1).P2; P2 = (a, 1).P1; Q = (a, 1).Q; system P1 <a> Q;").unwrap();
        assert!(matches!(derive_all(&m), Err(DeriveError::SameTypeClash { .. })));
    }

    #[test]
    fn ambiguous_synchronisation_rejected() {
        let m = parse_model("P = (a, 1).P; Q = (a, 1).Q; R = (a, 1).R; system (P || Q) <a> R;").unwrap();
        assert!(matches!(derive_all(&m), Err(DeriveError::AmbiguousSynchronisation { .. })));
    }

    #[test]
    fn blocked_action_has_no_columns() {
        let m = parse_model("P = (a, 1).P + (b, 1).P; Q = (c, 1).Q; system P <a> Q;").unwrap();
        let names: Vec<_> = label_activities(&m).unwrap().into_iter().map(|a| a.display_name).collect();
        assert_eq!(names, vec!["b{P->P}", "c{Q->Q}"]);
    }

    #[test]
    fn three_way_synchronisation() {
        let m = parse_model(
            "P = (a, 1).P2; P2 = (b, 1).P; Q = (a, 2).Q2 + (a, 2).Q; Q2 = (b, 1).Q;
             R = (a, 5).R; system (P <a> Q) <a> R;",
        )
        .unwrap();
        let (ms, spec) = derive_all(&m).unwrap();
        let names: Vec<_> = ms.activities.iter().map(|a| a.display_name.as_str()).collect();
        assert!(names.contains(&"a{P->P2,Q->Q,R->R}"));
        assert!(names.contains(&"a{P->P2,Q->Q2,R->R}"));
        let j = ms.find("a{P->P2,Q->Q2,R->R}").unwrap();
        // 1/2 · min(1·1, 4·1, 5·1)
        assert_eq!(spec.rate(&[1.0, 0.0, 1.0, 0.0, 1.0], j), 0.5);
    }

    #[test]
    fn duplicate_derivations_sum() {
        let m = parse_model("P = (a, 1).Q + (a, 2).Q; Q = (b, 1).P; system P[2];").unwrap();
        let (ms, spec) = derive_all(&m).unwrap();
        let j = ms.find("a{P->Q}").unwrap();
        assert_eq!(spec.rate(&[2.0, 0.0], j), 6.0);
    }

    #[test]
    fn passive_branches_are_uniform() {
        let m = parse_model(
            "P = (a, 1).P; Q = (a, infty).Q2 + (a, infty).Q2 + (a, infty).Q3; Q2 = (b, 1).Q; Q3 = (b, 1).Q;
             system P <a> Q;",
        )
        .unwrap();
        let (ms, spec) = derive_all(&m).unwrap();
        let j = ms.find("a{P->P,Q->Q2}").unwrap();
        assert_eq!(spec.activities[j].probability(), 0.5);
    }

    #[test]
    fn hidden_action_label() {
        let m = parse_model("P = (a, 1).P; system P / {a};").unwrap();
        let (ms, _) = derive_all(&m).unwrap();
        assert_eq!(ms.activities[0].display_name, "tau.a{P->P}");
        assert!(ms.activities[0].action.hidden);
    }
}

//! Aggregated state space in numerical vector form and the CTMC it induces.

mod export;
mod solve;

use std::collections::{HashMap, VecDeque};

use num_bigint::BigUint;
use thiserror::Error;

use crate::derivation::{DeriveError, Derivation};
use crate::model::{LocalStructure, ModelError, PepaModel};

pub use export::{edges_csv, pi_csv, states_csv, transient_csv};
pub use solve::{steady_state, steady_state_residual, transient, DENSE_LIMIT};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateSpaceError {
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error("state space exceeds the cap of {cap} states")]
    CapExceeded { cap: usize },
    #[error("chain is reducible: {components} strongly connected components, closed ones: {closed}")]
    Reducible { components: usize, closed: String },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("initial distribution has {got} entries, chain has {expected} states")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("power iteration did not converge after {0} sweeps")]
    NotConverged(usize),
    #[error("non-finite probability encountered")]
    NonFinite,
}

impl From<ModelError> for StateSpaceError {
    fn from(e: ModelError) -> Self {
        StateSpaceError::Derive(e.into())
    }
}

/// Initial counts: each population on its type's initial derivative.
pub fn initial_state(model: &PepaModel) -> Result<Vec<i64>, ModelError> {
    Ok(LocalStructure::build(model)?.initial_counts())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    /// Column of the labelled activity.
    pub activity: usize,
    pub rate: f64,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSystem {
    /// States in BFS discovery order; index 0 is the initial state.
    pub states: Vec<Vec<i64>>,
    pub edges: Vec<Edge>,
    pub initial: usize,
}

impl TransitionSystem {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.states.iter().position(|s| s == x)
    }

    /// States with no outgoing edge.
    pub fn deadlocks(&self) -> Vec<usize> {
        let mut has_out = vec![false; self.states.len()];
        for e in &self.edges {
            has_out[e.src] = true;
        }
        (0..self.states.len()).filter(|&i| !has_out[i]).collect()
    }
}

fn as_f64(x: &[i64]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// Breadth-first exploration from the initial state. A column fires at `x`
/// iff its rate function is positive there.
pub fn reachable(d: &Derivation, cap: usize) -> Result<TransitionSystem, StateSpaceError> {
    let c = &d.matrices.c;
    let cols = d.activity_count();
    let x0 = d.initial_counts();
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut states = vec![x0.clone()];
    index.insert(x0, 0);
    let mut queue = VecDeque::from([0usize]);
    let mut edges = Vec::new();
    let mut rates = vec![0.0; cols];

    while let Some(i) = queue.pop_front() {
        let x = states[i].clone();
        d.rates.rates_into(&as_f64(&x), &mut rates);
        for (l, &rate) in rates.iter().enumerate() {
            if !(rate > 0.0) {
                continue;
            }
            let y: Vec<i64> = x.iter().zip(c).map(|(v, row)| v + row[l] as i64).collect();
            let j = match index.get(&y) {
                Some(&j) => j,
                None => {
                    if states.len() >= cap {
                        return Err(StateSpaceError::CapExceeded { cap });
                    }
                    let j = states.len();
                    index.insert(y.clone(), j);
                    states.push(y);
                    queue.push_back(j);
                    j
                }
            };
            edges.push(Edge { src: i, activity: l, rate, dst: j });
        }
    }
    Ok(TransitionSystem { states, edges, initial: 0 })
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// One factor `C(M_i + d_i − 1, d_i − 1)` of the state-space bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundFactor {
    pub component: String,
    pub population: u64,
    pub derivatives: u64,
    pub value: BigUint,
}

pub fn bound_factors(model: &PepaModel) -> Result<Vec<BoundFactor>, ModelError> {
    let s = LocalStructure::build(model)?;
    Ok(s.types
        .iter()
        .map(|t| {
            let d = t.derivatives.len() as u64;
            BoundFactor {
                component: t.name.clone(),
                population: t.population,
                derivatives: d,
                value: binomial(t.population + d - 1, d - 1),
            }
        })
        .collect())
}

/// Upper bound `Π_i C(M_i + d_i − 1, d_i − 1)` on the number of states.
pub fn state_space_bound(model: &PepaModel) -> Result<BigUint, ModelError> {
    Ok(bound_factors(model)?.into_iter().map(|f| f.value).product())
}

/// Sparse infinitesimal generator, row-major. Self-loops are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// Off-diagonal entries of each row, sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    /// `π Q` for a row vector `π`.
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.diag).map(|(p, d)| p * d).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, q) in row {
                out[j] += pi[i] * q;
            }
        }
        out
    }
}

pub fn build_generator(ts: &TransitionSystem) -> Generator {
    let n = ts.len();
    let mut acc: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for e in ts.edges.iter().filter(|e| e.src != e.dst) {
        *acc[e.src].entry(e.dst).or_insert(0.0) += e.rate;
    }
    let rows: Vec<Vec<(usize, f64)>> = acc.into_iter().map(|m| m.into_iter().collect()).collect();
    let diag = rows.iter().map(|r| -r.iter().map(|(_, q)| q).sum::<f64>()).collect();
    Generator { rows, diag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn model1(m: u64, n: u64) -> PepaModel {
        parse_model(&format!(
            "a=1; b=1; d=1;
             User1 = (task1, a).User2; User2 = (task2, b).User1;
             Sever1 = (task1, a).Sever2; Sever2 = (reset, d).Sever1;
             system User1[{m}] <task1> Sever1[{n}];"
        ))
        .unwrap()
    }

    #[test]
    fn model1_nine_states() {
        let m = model1(2, 2);
        assert_eq!(initial_state(&m).unwrap(), vec![2, 0, 2, 0]);
        let ts = reachable(&Derivation::new(&m).unwrap(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(ts.len(), 9);
        assert!(ts.index_of(&[1, 1, 1, 1]).is_some());
        assert_eq!(state_space_bound(&m).unwrap(), BigUint::from(9u32));
    }

    #[test]
    fn bound_model2() {
        let m = parse_model(
            "P1 = (alpha, 1).P2 + (alpha, 3).P3; P2 = (beta, 1).P1 + (beta, 2).P3;
             P3 = (gamma, 2).P1; Q1 = (alpha, 2).Q2; Q2 = (gamma, 1.5).Q1;
             system P1[2] <alpha> Q1[2];",
        )
        .unwrap();
        assert_eq!(state_space_bound(&m).unwrap(), BigUint::from(18u32));
        let ts = reachable(&Derivation::new(&m).unwrap(), DEFAULT_STATE_CAP).unwrap();
        assert!(ts.len() <= 18);
    }

    #[test]
    fn bound_large_population_is_exact() {
        let m = parse_model("P = (a,1).Q; Q = (b,1).R; R = (c,1).P; system P[100000];").unwrap();
        // C(100002, 2)
        assert_eq!(state_space_bound(&m).unwrap(), BigUint::from(5_000_150_001u64));
    }

    #[test]
    fn cap_is_enforced() {
        let m = model1(2, 2);
        let err = reachable(&Derivation::new(&m).unwrap(), 5).unwrap_err();
        assert_eq!(err, StateSpaceError::CapExceeded { cap: 5 });
    }

    #[test]
    fn self_loop_single_state() {
        let m = parse_model("P = (a, 1.0).P; system P[3];").unwrap();
        let ts = reachable(&Derivation::new(&m).unwrap(), 10).unwrap();
        assert_eq!(ts.states, vec![vec![3]]);
        assert_eq!(ts.edges.len(), 1);
        let q = build_generator(&ts);
        assert_eq!(q.diag, vec![0.0]);
        assert!(q.rows[0].is_empty());
    }

    #[test]
    fn ping_pong_generator() {
        let m = parse_model("A = (go, 2).B; B = (back, 5).A; system A;").unwrap();
        let ts = reachable(&Derivation::new(&m).unwrap(), 10).unwrap();
        let q = build_generator(&ts);
        assert_eq!((q.get(0, 0), q.get(0, 1), q.get(1, 0), q.get(1, 1)), (-2.0, 2.0, 5.0, -5.0));
    }

    #[test]
    fn deadlock_row_is_zero() {
        // each side waits for the other to move first
        let m = parse_model("P1 = (a, 1).P2; P2 = (b, 1).P1; Q1 = (b, 1).Q2; Q2 = (a, 1).Q1; system P1 <a, b> Q1;").unwrap();
        let ts = reachable(&Derivation::new(&m).unwrap(), 10).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.deadlocks(), vec![0]);
        let q = build_generator(&ts);
        assert_eq!(q.diag, vec![0.0]);
    }
}

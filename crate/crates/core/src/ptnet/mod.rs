//! The Place/Transition system underlying a model and its P-invariants.
//!
//! Places are local derivatives, transitions are labelled activities,
//! `Pre = C^Pre`, `Post = C^Post` and the initial marking is the initial
//! state.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::derivation::Derivation;
use crate::statespace::TransitionSystem;

/// Largest intermediate row set the elimination may build.
pub const MAX_FARKAS_ROWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PtNetError {
    #[error("invariant computation exceeded {0} intermediate rows")]
    TooManyRows(usize),
    #[error("integer overflow during invariant computation")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtSystem {
    pub places: Vec<String>,
    pub transitions: Vec<String>,
    pub pre: Vec<Vec<u32>>,
    pub post: Vec<Vec<u32>>,
    pub m0: Vec<i64>,
}

pub fn to_ptnet(d: &Derivation) -> PtSystem {
    let m = &d.matrices;
    let cast = |rows: &Vec<Vec<i32>>| rows.iter().map(|r| r.iter().map(|&v| v as u32).collect()).collect();
    PtSystem {
        places: m.derivatives.iter().map(|d| d.name.clone()).collect(),
        transitions: m.activities.iter().map(|a| a.display_name.clone()).collect(),
        pre: cast(&m.c_pre),
        post: cast(&m.c_post),
        m0: d.initial_counts(),
    }
}

impl PtSystem {
    /// Incidence matrix `Post − Pre`.
    pub fn incidence(&self) -> Vec<Vec<i64>> {
        self.pre
            .iter()
            .zip(&self.post)
            .map(|(pre, post)| pre.iter().zip(post).map(|(&a, &b)| b as i64 - a as i64).collect())
            .collect()
    }

    /// `m ≥ Pre[:, t]`.
    pub fn enabled(&self, m: &[i64], t: usize) -> bool {
        self.pre.iter().zip(m).all(|(row, &v)| v >= row[t] as i64)
    }

    pub fn fire(&self, m: &[i64], t: usize) -> Vec<i64> {
        m.iter()
            .enumerate()
            .map(|(p, &v)| v - self.pre[p][t] as i64 + self.post[p][t] as i64)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }
}

/// Nonnegative integer `y` with `y^T C = 0`, in canonical form (entries
/// coprime), and its conserved value `y^T m0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PInvariant {
    pub y: Vec<u64>,
    pub value: i64,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn normalise(row: &mut [i128]) {
    let g = row.iter().fold(0, |g, &v| gcd(g, v));
    if g > 1 {
        row.iter_mut().for_each(|v| *v /= g);
    }
}

fn support(row: &[i128], from: usize) -> Vec<usize> {
    (from..row.len()).filter(|&i| row[i] != 0).collect()
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| b.binary_search(i).is_ok())
}

/// Minimal-support generating set of the nonnegative P-invariants, by
/// Farkas elimination over the rows `[C | I]`. Sorted in decreasing
/// lexicographic order of `y`.
pub fn p_invariants(net: &PtSystem) -> Result<Vec<PInvariant>, PtNetError> {
    let c = net.incidence();
    let places = net.places.len();
    let cols = net.transitions.len();
    let mut rows: Vec<Vec<i128>> = (0..places)
        .map(|p| {
            let mut r: Vec<i128> = c[p].iter().map(|&v| v as i128).collect();
            r.extend((0..places).map(|q| (p == q) as i128));
            r
        })
        .collect();

    for j in 0..cols {
        let (mut keep, mut pos, mut neg) = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            match r[j].signum() {
                0 => keep.push(r),
                1 => pos.push(r),
                _ => neg.push(r),
            }
        }
        for p in &pos {
            for n in &neg {
                let (a, b) = (-n[j], p[j]);
                let mut r = Vec::with_capacity(p.len());
                for (x, y) in p.iter().zip(n) {
                    let v = x
                        .checked_mul(a)
                        .zip(y.checked_mul(b))
                        .and_then(|(s, t)| s.checked_add(t))
                        .ok_or(PtNetError::Overflow)?;
                    r.push(v);
                }
                normalise(&mut r);
                keep.push(r);
                if keep.len() > MAX_FARKAS_ROWS {
                    return Err(PtNetError::TooManyRows(MAX_FARKAS_ROWS));
                }
            }
        }
        rows = minimal(keep, cols);
    }

    let mut out: Vec<PInvariant> = rows
        .into_iter()
        .map(|r| {
            let y: Vec<u64> = r[cols..].iter().map(|&v| v as u64).collect();
            let value = y.iter().zip(&net.m0).map(|(&a, &b)| a as i64 * b).sum();
            PInvariant { y, value }
        })
        .collect();
    out.sort_by(|a, b| b.y.cmp(&a.y));
    out.dedup();
    Ok(out)
}

/// Drops duplicates and rows whose identity-part support strictly contains
/// another row's.
fn minimal(rows: Vec<Vec<i128>>, from: usize) -> Vec<Vec<i128>> {
    let mut rows = rows;
    rows.sort();
    rows.dedup();
    let supports: Vec<Vec<usize>> = rows.iter().map(|r| support(r, from)).collect();
    rows.into_iter()
        .enumerate()
        .filter(|(i, _)| {
            !supports
                .iter()
                .enumerate()
                .any(|(k, s)| k != *i && s.len() < supports[*i].len() && is_subset(s, &supports[*i]))
        })
        .map(|(_, r)| r)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantReport {
    pub states_checked: usize,
    /// `(invariant index, state index, value found)`.
    pub violations: Vec<(usize, usize, i64)>,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `y^T m = y^T m0` at every state.
pub fn check_invariants(ts: &TransitionSystem, invs: &[PInvariant]) -> InvariantReport {
    let mut violations = Vec::new();
    for (k, inv) in invs.iter().enumerate() {
        for (i, m) in ts.states.iter().enumerate() {
            let v: i64 = inv.y.iter().zip(m).map(|(&a, &b)| a as i64 * b).sum();
            if v != inv.value {
                violations.push((k, i, v));
            }
        }
    }
    InvariantReport { states_checked: ts.states.len(), violations }
}

/// One column per place, then `value`.
pub fn invariants_csv(net: &PtSystem, invs: &[PInvariant]) -> String {
    let mut out = String::new();
    for p in &net.places {
        out.push_str(&crate::csv_field(p));
        out.push(',');
    }
    out.push_str("value\n");
    for inv in invs {
        for v in &inv.y {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{}", inv.value).unwrap();
    }
    out
}

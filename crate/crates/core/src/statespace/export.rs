use std::fmt::Write;

use super::TransitionSystem;
use crate::csv_field;
use crate::derivation::ActivityMatrices;

/// `index` then one count column per derivative.
pub fn states_csv(ts: &TransitionSystem, m: &ActivityMatrices) -> String {
    let mut out = String::from("index");
    for d in &m.derivatives {
        out.push(',');
        out.push_str(&csv_field(&d.name));
    }
    out.push('\n');
    for (i, x) in ts.states.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in x {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn edges_csv(ts: &TransitionSystem, m: &ActivityMatrices) -> String {
    let mut out = String::from("src,label,rate,dst\n");
    for e in &ts.edges {
        writeln!(out, "{},{},{},{}", e.src, csv_field(&m.activities[e.activity].display_name), e.rate, e.dst).unwrap();
    }
    out
}

pub fn pi_csv(pi: &[f64]) -> String {
    let mut out = String::from("state,probability\n");
    for (i, p) in pi.iter().enumerate() {
        writeln!(out, "{i},{p}").unwrap();
    }
    out
}

/// `t` then one probability column `s<i>` per state.
pub fn transient_csv(traj: &[(f64, Vec<f64>)]) -> String {
    let n = traj.first().map_or(0, |(_, p)| p.len());
    let mut out = String::from("t");
    for i in 0..n {
        write!(out, ",s{i}").unwrap();
    }
    out.push('\n');
    for (t, pi) in traj {
        write!(out, "{t}").unwrap();
        for p in pi {
            write!(out, ",{p}").unwrap();
        }
        out.push('\n');
    }
    out
}

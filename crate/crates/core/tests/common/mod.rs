#![allow(dead_code)]

use pepakit::derivation::Derivation;
use pepakit::model::{parse_model, PepaModel};

pub const MODEL1: &str = include_str!("../../../../models/model1.pepa");
pub const MODEL1_UNIT: &str = include_str!("../../../../models/model1_unit.pepa");
pub const MODEL2: &str = include_str!("../../../../models/model2.pepa");

/// Passive server pool: clients fix the rate of `serve`.
pub const PASSIVE: &str = "c = 2.0;
    Client = (serve, c).Think; Think = (think, 0.5).Client;
    Server = (serve, infty).Busy; Busy = (done, 3.0).Server;
    system Client[3] <serve> Server[2];";

/// Three-way synchronisation with a choice and a hidden action.
pub const THREE_WAY: &str = "P = (a, 1.0).P2; P2 = (b, 1.0).P;
    Q = (a, 2.0).Q2 + (a, 2.0).Q; Q2 = (b, 4.0).Q;
    R = (a, 5.0).R2; R2 = (c, 1.0).R;
    system ((P[2] <a> Q[2]) <a> R[1]) / {c};";

pub fn model1(m: u64, n: u64) -> PepaModel {
    parse_model(&MODEL1.replace("User1[2] <task1> Sever1[2]", &format!("User1[{m}] <task1> Sever1[{n}]"))).unwrap()
}

pub fn model2(a: u64, b: u64) -> PepaModel {
    parse_model(&MODEL2.replace("P1[1] <alpha> Q1[1]", &format!("P1[{a}] <alpha> Q1[{b}]"))).unwrap()
}

pub fn derive(src: &str) -> Derivation {
    Derivation::new(&parse_model(src).unwrap()).unwrap()
}

/// Sums of each component-type block of `x`.
pub fn block_sums(d: &Derivation, x: &[i64]) -> Vec<i64> {
    d.matrices.types.iter().map(|t| x[t.derivatives.clone()].iter().sum()).collect()
}

mod common;

use common::*;
use pepakit::derivation::{ActivityKind, Derivation};
use pepakit::fluid::vector_field;
use pepakit::model::parse_model;
use proptest::prelude::*;

fn fixtures() -> Vec<Derivation> {
    vec![derive(MODEL1), derive(MODEL2), derive(PASSIVE), derive(THREE_WAY)]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn state(dim: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..50, dim)
}

proptest! {
    #[test]
    fn homogeneity(k in 0usize..4, seed in prop::collection::vec(0i64..50, 8), h in 0.01f64..100.0) {
        let d = &fixtures()[k];
        let x: Vec<f64> = seed[..d.dimension()].iter().map(|&v| v as f64).collect();
        let xs: Vec<f64> = x.iter().map(|v| v / h).collect();
        for l in 0..d.activity_count() {
            prop_assert!(close(h * d.rate(&xs, l), d.rate(&x, l)));
        }
    }

    #[test]
    fn enabling_without_passive(k in 0usize..2, seed in prop::collection::vec(0i64..4, 5)) {
        let d = &fixtures()[k];
        let x: Vec<f64> = seed[..d.dimension()].iter().map(|&v| v as f64).collect();
        for (l, a) in d.matrices.activities.iter().enumerate() {
            let enabled = a.label.iter().all(|&(u, _)| x[u] > 0.0);
            prop_assert_eq!(d.rate(&x, l) > 0.0, enabled);
        }
    }

    #[test]
    fn individual_branches_sum_to_apparent_rate(x in state(5)) {
        let d = derive(MODEL2);
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        // beta out of P2: rb1 + rb2 = 3
        let p2 = d.matrices.derivative_index("P2").unwrap();
        let sum: f64 = d.matrices.activities.iter().enumerate()
            .filter(|(_, a)| a.kind == ActivityKind::Individual && a.action.name == "beta")
            .map(|(l, _)| d.rate(&xf, l))
            .sum();
        prop_assert!(close(sum, xf[p2] * 3.0) || sum == 0.0 && x[p2] == 0);
    }

    #[test]
    fn vector_field_scales(k in 0usize..4, seed in prop::collection::vec(0.0f64..20.0, 8), h in 0.01f64..100.0) {
        let d = &fixtures()[k];
        let vf = vector_field(d);
        let x = &seed[..d.dimension()];
        let hx: Vec<f64> = x.iter().map(|v| v * h).collect();
        let lhs = vf.eval(&hx);
        let rhs = vf.eval(x);
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())) * h;
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - h * b).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn vector_field_block_sums_vanish(k in 0usize..4, seed in prop::collection::vec(0.0f64..20.0, 8)) {
        let d = &fixtures()[k];
        let dx = vector_field(d).eval(&seed[..d.dimension()]);
        for t in &d.matrices.types {
            let s: f64 = dx[t.derivatives.clone()].iter().sum();
            let m = dx[t.derivatives.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(s.abs() <= 1e-12 * m.max(1.0));
        }
    }
}

#[test]
fn columns_conserve_each_block() {
    for d in fixtures() {
        let m = &d.matrices;
        for j in 0..m.cols() {
            for t in &m.types {
                let s: i32 = t.derivatives.clone().map(|u| m.c[u][j]).sum();
                assert_eq!(s, 0);
            }
            for u in 0..m.rows() {
                assert_eq!(m.c[u][j], m.c_post[u][j] - m.c_pre[u][j]);
            }
        }
    }
}

#[test]
fn pre_column_has_one_entry_per_participant() {
    for d in fixtures() {
        let m = &d.matrices;
        for (j, a) in m.activities.iter().enumerate() {
            let ones: i32 = (0..m.rows()).map(|u| m.c_pre[u][j]).sum();
            assert_eq!(ones as usize, a.label.len());
            match a.kind {
                ActivityKind::Individual => assert_eq!(a.label.len(), 1),
                ActivityKind::Shared => assert!(a.label.len() >= 2),
            }
        }
    }
}

#[test]
fn labelled_activity_counts() {
    // individual: Σ #post(U, l); shared: Π #post(U_i, l)
    let d = derive(MODEL2);
    assert_eq!(d.activity_count(), 6);
    let d = derive(MODEL1);
    assert_eq!(d.activity_count(), 3);
    let d = derive(THREE_WAY);
    let shared = d.matrices.activities.iter().filter(|a| a.kind == ActivityKind::Shared).count();
    assert_eq!(shared, 2);
}

#[test]
fn local_derivatives_are_closed() {
    for src in [MODEL1, MODEL2, PASSIVE, THREE_WAY] {
        let m = parse_model(src).unwrap();
        let ds = pepakit::model::local_derivatives(&m).unwrap();
        let s = pepakit::model::LocalStructure::build(&m).unwrap();
        for u in 0..ds.len() {
            for mv in &s.moves[u] {
                assert!(mv.target < ds.len());
                assert_eq!(s.type_of(mv.target), s.type_of(u));
            }
        }
    }
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use pepakit::derivation::{matrix_csv, rate_spec_json, Derivation, MatrixKind};
use pepakit::model::parse_model;
use pepakit::ptnet::{check_invariants, p_invariants, to_ptnet};
use pepakit::statespace::reachable;

// Parse, derive, explore a bounded state space and check P-invariants.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = parse_model(text) else { return };
    let Ok(d) = Derivation::new(&model) else { return };
    let _ = matrix_csv(&d.matrices, MatrixKind::C);
    let _ = rate_spec_json(&d.matrices, &d.rates);
    let Ok(ts) = reachable(&d, 2_000) else { return };
    let net = to_ptnet(&d);
    if let Ok(invs) = p_invariants(&net) {
        assert!(check_invariants(&ts, &invs).holds());
    }
});

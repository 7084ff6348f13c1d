#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use pepakit::derivation::Derivation;
use pepakit::model::parse_model;
use pepakit::simulate::parse_reward;

fn derivation() -> &'static Derivation {
    static D: OnceLock<Derivation> = OnceLock::new();
    D.get_or_init(|| {
        let m = parse_model(
            "User1 = (task1, 1).User2; User2 = (task2, 1).User1;
             Sever1 = (task1, 1).Sever2; Sever2 = (reset, 1).Sever1;
             system User1[2] <task1> Sever1[2];",
        )
        .unwrap();
        Derivation::new(&m).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_reward(text, &derivation().matrices);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pepakit::model::parse_model;

// Whatever parses must print to text that parses back to the same model.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = parse_model(text) else { return };
    let printed = model.to_string();
    let again = parse_model(&printed).expect("printed model parses");
    assert_eq!(printed, again.to_string());
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use mobscope::smm::MovementModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = MovementModel::from_json(text) {
        // an accepted model must survive a round trip
        let again = MovementModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(again.patterns().len(), model.patterns().len());
    }
});

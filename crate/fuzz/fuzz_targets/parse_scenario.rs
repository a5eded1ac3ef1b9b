#![no_main]

use libfuzzer_sys::fuzz_target;
use secest::io::{parse_scenario, scenario_to_json};
use secest::threat::support_at;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sc) = parse_scenario(text) {
            assert_eq!(parse_scenario(&scenario_to_json(&sc)).ok().as_ref(), Some(&sc));
            if sc.validate(64).is_ok() {
                for k in 0..8 {
                    let _ = support_at(&sc, k, 64);
                }
            }
        }
    }
});

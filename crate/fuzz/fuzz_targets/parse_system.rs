#![no_main]

use libfuzzer_sys::fuzz_target;
use secest::io::load_system;
use secest::Tolerances;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // a loaded system must also survive analysis
        if let Ok(sys) = load_system(text, Tolerances::default()) {
            let _ = secest::io::analyze(&sys.model);
        }
    }
});

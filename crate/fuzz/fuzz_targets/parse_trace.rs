#![no_main]

use libfuzzer_sys::fuzz_target;
use secest::sim::{metrics, parse_trace_csv, write_trace_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(trace) = parse_trace_csv(text) {
            let _ = metrics(&trace);
            let mut out = Vec::new();
            write_trace_csv(&trace, &mut out).expect("parsed traces can be written");
        }
    }
});

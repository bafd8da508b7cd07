//! Binary field decoder: never panics, and the encoding is canonical, so
//! any accepted input re-encodes to exactly the same bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;
use odg::field_io::{read_odgf, write_odgf};

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = read_odgf(data) {
        assert_eq!(write_odgf(&field), data, "decoder accepted a non-canonical encoding");
    }
});

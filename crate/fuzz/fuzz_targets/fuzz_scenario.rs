//! Scenario config parser: never panics, and any accepted config survives
//! a serialize/re-parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use odg::scenario::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ScenarioConfig::from_json_bytes(data) {
        let bytes = serde_json::to_vec(&cfg).expect("accepted config must serialize");
        ScenarioConfig::from_json_bytes(&bytes).expect("round trip must stay valid");
    }
});

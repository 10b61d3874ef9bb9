#![no_main]

use libfuzzer_sys::fuzz_target;
use rcmdp::AugPolicy;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(policy) = AugPolicy::from_json(text) {
        let again = AugPolicy::from_json(&policy.to_json()).expect("round trip of an accepted policy");
        assert_eq!(again.to_json(), policy.to_json());
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use rcmdp::TabularCmdp;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mdp) = TabularCmdp::from_json(text) {
        // Anything accepted must survive its own serialization.
        let again = TabularCmdp::from_json(&mdp.to_json()).expect("round trip of an accepted model");
        assert_eq!(again.to_json(), mdp.to_json());
        // Range checks are reported, never panicked on.
        let _ = mdp.validate();
    }
});

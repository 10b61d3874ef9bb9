#![no_main]

use libfuzzer_sys::fuzz_target;
use rcmdp::bench::{ConfigLayer, ExperimentConfig, PRESETS};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut layer) = ConfigLayer::from_toml(text) else { return };
    // Model-file environments would make the fuzzer read arbitrary paths.
    if layer.env.as_deref().is_some_and(|e| !PRESETS.contains(&e)) {
        layer.env = None;
    }
    if let Ok(config) = ExperimentConfig::resolve(Some(&layer), &ConfigLayer::default()) {
        assert_eq!(config.hash(), config.clone().hash());
        let _ = config.to_toml();
    }
});

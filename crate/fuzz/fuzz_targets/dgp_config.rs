#![no_main]

use libfuzzer_sys::fuzz_target;
use strata_bounds::simulation::DgpConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<DgpConfig>(data) {
        let _ = cfg.validate();
        let text = serde_json::to_string(&cfg).expect("serialize parsed config");
        let back: DgpConfig = serde_json::from_str(&text).expect("re-parse serialized config");
        assert_eq!(back.n, cfg.n);
        assert_eq!(back.reps, cfg.reps);
    }
});

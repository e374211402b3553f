#![no_main]

use libfuzzer_sys::fuzz_target;
use strata_bounds::io::read_nuisances;
use strata_bounds::nuisance::Floors;

// First byte picks the expected row count; the rest is the CSV.
fuzz_target!(|data: &[u8]| {
    let Some((&n, csv)) = data.split_first() else {
        return;
    };
    let n = usize::from(n % 32);
    if let Ok(bundle) = read_nuisances(csv, n, Floors::default()) {
        assert_eq!(bundle.n(), n);
        for i in 0..n {
            let p0 = bundle.p0(i);
            assert!(p0.is_finite() && p0 > 0.0);
        }
    }
});

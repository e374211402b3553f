#![no_main]

use libfuzzer_sys::fuzz_target;
use strata_bounds::Stratum;
use strata_bounds_cli::estimate::Rho;
use strata_bounds_cli::nuisance::parse_cells;

// Free-text flag values: cell specs, `--rho` and `--stratum`.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cols) = parse_cells(text, 8) {
        assert!(cols.iter().all(|c| c.column < 8));
    }
    let _ = text.parse::<Rho>();
    let _ = text.parse::<Stratum>();
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use strata_bounds::io::{read_observations, write_observations, ObservationOptions};
use strata_bounds::validate;

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = read_observations(data, &ObservationOptions::default()) else {
        return;
    };
    let table = parsed.table;
    if !validate(&table).passed() {
        return;
    }
    // Anything accepted must survive a write and re-read unchanged.
    let mut buf = Vec::new();
    write_observations(&mut buf, &table).expect("write accepted table");
    let back = read_observations(buf.as_slice(), &ObservationOptions::default())
        .expect("re-read written table")
        .table;
    assert_eq!(back.n(), table.n());
    assert_eq!(back.p(), table.p());
    for i in 0..table.n() {
        assert_eq!(back.sy(i).to_bits(), table.sy(i).to_bits());
        assert_eq!(back.weight(i).to_bits(), table.weight(i).to_bits());
    }
});

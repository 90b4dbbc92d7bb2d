#![no_main]

use libfuzzer_sys::fuzz_target;
use mobscope::io::{ingest_csv_reader, CsvSchema};

fuzz_target!(|data: &[u8]| {
    // first byte picks the time column flavor
    let Some((&flag, rest)) = data.split_first() else { return };
    let schema = CsvSchema { epoch: flag & 1 == 1, day_start_hour: f64::from(flag >> 1) % 24.0 };
    if let Ok(got) = ingest_csv_reader(rest, schema) {
        for day in got.dataset.days() {
            assert!(day.len() >= 2);
            assert!(day.times().windows(2).all(|w| w[0] < w[1]));
            assert!(day.times().iter().all(|t| *t > 0.0 && *t < 1.0));
        }
    }
});

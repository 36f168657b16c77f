//! Runs the built-in tracking scenario and prints its summary.
//!
//! `cargo run --release --example tracking -- [seed] [iterations]`

use gridsim::fixtures::{tracking, TRACKING_GOAL};
use gridsim::report::format_summary;
use gridsim::{compute_stats, run_simulation};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1953);
    let start = std::time::Instant::now();
    let records = run_simulation(&tracking(seed, iterations), iterations);
    let summary = compute_stats(&records, Some(TRACKING_GOAL)).expect("non-empty run");
    print!("{}", format_summary(&summary));
    let rounds: u32 = records.iter().map(|r| r.feedback_rounds).sum();
    let stuck = records.iter().filter(|r| !r.consensus).count();
    println!("feedback rounds: {rounds}, without consensus: {stuck}");
    println!("elapsed: {:.2?}", start.elapsed());
}

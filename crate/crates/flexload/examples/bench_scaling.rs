//! Measure how compile time grows with the horizon. The recursion fills a
//! (T+1) x (T+1) table with constant-cost entries, so the fitted log-log
//! slope should sit near 2.

use flexload::bench;

fn main() {
    let report = bench::run(800, 100, 3).expect("bench");
    println!("{:>6} | {:>12} | {:>5}", "T", "median (s)", "reps");
    for p in &report.points {
        println!("{:>6} | {:>12.6} | {:>5}", p.horizon, p.seconds, p.reps);
    }
    println!("\nfitted growth exponent: {:.3}", report.exponent);
}

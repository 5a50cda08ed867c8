//! Timing of the independent compiler across horizons, for checking the
//! quadratic growth of the threshold recursion empirically.

use std::time::Instant;

use crate::numeric::loglog_slope;
use crate::price::{Innovation, PriceModel, StageDistribution};
use crate::thresholds::{compile_independent, LoadSpec};
use crate::{Error, Result};

/// One measured horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPoint {
    pub horizon: usize,
    pub seconds: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Fitted log-log growth exponent of compile time against horizon.
    pub exponent: f64,
}

/// Synthetic gaussian stage: the closed-form G evaluation costs the same for
/// every table entry, so the timing isolates the Theta(T^2) entry count.
fn bench_stage(t: usize) -> StageDistribution {
    StageDistribution::Independent {
        energy: Innovation::Gaussian {
            mean: 25.0 + 15.0 * ((t * 31) % 97) as f64 / 97.0,
            std_dev: 4.0,
        },
        reserve: Innovation::PointMass { value: 5.0 },
    }
}

/// Time `compile_independent` for `T in {step, 2*step, ..., max_horizon}`.
/// Each size is timed as the median of repeated single compiles (repeating
/// until a small time floor is reached), which keeps transient machine noise
/// out of the fitted exponent.
pub fn run(max_horizon: usize, step: usize, min_reps: usize) -> Result<BenchReport> {
    if step == 0 || max_horizon < 2 * step {
        return Err(Error::invalid("bench needs max_horizon >= 2 * step and step > 0"));
    }
    const TIME_FLOOR: f64 = 0.08;
    const MAX_REPS: usize = 400;

    let mut points = Vec::new();
    let mut horizon = step;
    while horizon <= max_horizon {
        let spec = LoadSpec { demand: 1.0, capacity: 1.0, horizon, shortfall_penalty: 60.0 };
        let model = PriceModel::independent((0..horizon).map(bench_stage).collect());
        // warm-up, also keeps the table from being optimized away
        let warm = compile_independent(&spec, &model)?;
        std::hint::black_box(&warm);

        let mut samples = Vec::new();
        let start = Instant::now();
        loop {
            let one = Instant::now();
            let table = compile_independent(&spec, &model)?;
            std::hint::black_box(&table);
            samples.push(one.elapsed().as_secs_f64());
            if samples.len() >= MAX_REPS
                || (samples.len() >= min_reps && start.elapsed().as_secs_f64() >= TIME_FLOOR)
            {
                break;
            }
        }
        samples.sort_by(f64::total_cmp);
        let seconds = samples[samples.len() / 2];
        points.push(BenchPoint { horizon, seconds, reps: samples.len() });
        horizon *= 2;
    }
    let fit: Vec<(f64, f64)> =
        points.iter().map(|p| (p.horizon as f64, p.seconds.max(1e-12))).collect();
    Ok(BenchReport { exponent: loglog_slope(&fit), points })
}

pub fn to_csv(report: &BenchReport) -> String {
    let mut out = String::from("T,seconds\n");
    for p in &report.points {
        out.push_str(&format!("{},{:.9}\n", p.horizon, p.seconds));
    }
    out
}

//! Differential check: the threshold compiler and policy against exhaustive
//! dynamic programming on small discrete instances. The oracle searches the
//! full action lattice, so agreement is evidence, not tautology.

use flexload::oracle;
use flexload::thresholds::compile_independent;
use rand_chacha::rand_core::SeedableRng;

fn main() {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
    let instances = 50;
    let mut worst_value = 0.0f64;
    let mut total_checks = 0usize;
    let mut total_misses = 0usize;
    for k in 0..instances {
        let inst = oracle::random_instance(&mut rng, 6);
        let solution = oracle::solve_dp(&inst).expect("solve");
        let table =
            compile_independent(&inst.spec, &oracle::instance_model(&inst)).expect("compile");
        let report = oracle::compare(&solution, &table).expect("compare");
        worst_value = worst_value.max(report.max_value_dev);
        total_checks += report.action_checks;
        total_misses += report.action_misses;
        if k < 5 {
            println!(
                "instance {k:>2}: T={}, d0={:.2}, max value dev {:.2e}, {} decision points",
                inst.spec.horizon, inst.spec.demand, report.max_value_dev, report.action_checks
            );
        }
    }
    println!("...");
    println!(
        "{instances} instances: worst |value - DP| = {worst_value:.2e}, \
         {total_misses}/{total_checks} policy actions outside the DP minimizing set"
    );
}

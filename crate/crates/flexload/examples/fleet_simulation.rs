//! Fleet study at desk scale: simulate a population of flexible loads
//! arriving over a day under the built-in synthetic diurnal config and
//! compare charging policies on common price realizations.

use flexload::fleet::{self, SimConfig};

fn main() {
    let mut config = SimConfig::synthetic_default();
    config.n_scenarios = 200;
    config.fleet_size = 50;
    config.seed = 7;

    let result = fleet::run(&config).expect("simulate");

    println!(
        "{} scenarios x {} loads = {} sessions\n",
        result.n_scenarios, result.fleet_size, result.sessions
    );
    println!(
        "{:>22} | {:>10} | {:>10} | {:>6} | {:>9}",
        "policy", "mean cost", "normalized", "PAR", "AS/scen"
    );
    for s in &result.stats {
        println!(
            "{:>22} | {:>10.3} | {:>10} | {:>6} | {:>9.1}",
            s.policy.label(),
            s.mean_cost,
            s.normalized.map_or("n/a".into(), |v| format!("{v:.4}")),
            s.par.map_or("n/a".into(), |v| format!("{v:.3}")),
            s.mean_as_capacity,
        );
    }
    println!(
        "\ndominance violations: {} (with-reserve optimal never costs more than the no-reserve optimal on a shared path)",
        result.dominance_violations
    );

    // hourly profile of the with-reserve optimal policy
    let opt = result.stats_for(fleet::PolicyChoice::Optimal).expect("optimal stats");
    let peak = opt.diurnal.iter().cloned().fold(0.0f64, f64::max);
    println!("\nmean diurnal load, with-reserve optimal:");
    for (slot, load) in opt.diurnal.iter().enumerate() {
        let bar = "#".repeat((load / peak * 50.0).round() as usize);
        println!("  {slot:>2}h {load:>7.2} {bar}");
    }
}

//! Smallest end-to-end walk: two decision slots, known prices, one load.
//!
//! Energy/reserve prices are (5, 1) in the first slot and (7, 0) in the
//! second, unmet demand costs 10 per unit, and the charger moves at most one
//! unit per slot. The compiled thresholds, the value function and a realized
//! rollout all agree with each other.

use flexload::price::{Innovation, PriceModel, StageDistribution};
use flexload::thresholds::{compile_independent, value_function, LoadSpec};
use flexload::{policy, PricePair};

fn point_mass_stage(energy: f64, reserve: f64) -> StageDistribution {
    StageDistribution::Independent {
        energy: Innovation::PointMass { value: energy },
        reserve: Innovation::PointMass { value: reserve },
    }
}

fn main() {
    let spec = LoadSpec { demand: 1.5, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 };
    let model =
        PriceModel::independent(vec![point_mass_stage(5.0, 1.0), point_mass_stage(7.0, 0.0)]);

    let table = compile_independent(&spec, &model).expect("compile");
    println!("threshold table (piece i = 1..=T per stage):");
    for t in 0..=spec.horizon {
        println!("  t={t}: {:?}", table.row(t));
    }

    let d0 = spec.demand;
    println!("\nexpected optimal cost J({d0}) = {}", value_function(&table, d0));

    let path = vec![PricePair::new(5.0, 1.0), PricePair::new(7.0, 0.0)];
    let rollout = policy::rollout_optimal(&table, d0, &path).expect("rollout");
    println!("\nrealized rollout:");
    println!("  t | pi_e pi_r |    d |    e |    r | stage cost");
    for s in &rollout.steps {
        println!(
            "  {} | {:>4} {:>4} | {:>4} | {:>4} | {:>4} | {:>6}",
            s.stage,
            s.prices.energy,
            s.prices.reserve,
            s.demand_before,
            s.decision.consume,
            s.decision.reserve_offer,
            s.stage_cost
        );
    }
    println!("  total realized cost {} (shortfall {})", rollout.total_cost, rollout.shortfall);
}

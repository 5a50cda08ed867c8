//! Roll the optimal policy over sampled price paths and compare the realized
//! average against the compiled expected cost.

use flexload::price::{Innovation, PriceModel, StageDistribution};
use flexload::thresholds::{compile_independent, LoadSpec};
use flexload::{policy, PricePair};
use rand_chacha::rand_core::SeedableRng;

fn main() {
    let stages: Vec<StageDistribution> = [34.0, 30.0, 29.0, 31.0, 38.0, 47.0]
        .iter()
        .map(|&m| StageDistribution::Independent {
            energy: Innovation::Gaussian { mean: m, std_dev: 6.0 },
            reserve: Innovation::PointMass { value: 9.0 },
        })
        .collect();
    let model = PriceModel::independent(stages);
    let spec = LoadSpec { demand: 3.0, capacity: 1.0, horizon: 6, shortfall_penalty: 150.0 };
    let table = compile_independent(&spec, &model).expect("compile");

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
    let one_path: Vec<PricePair> = model.sample_path(&mut rng);
    let rollout = policy::rollout_optimal(&table, spec.demand, &one_path).expect("rollout");
    println!("one sampled path:");
    println!("  t |   pi_e |  pi_r | effective |     e |     r");
    for s in &rollout.steps {
        println!(
            "  {} | {:>6.2} | {:>5.2} | {:>9.2} | {:>5.2} | {:>5.2}",
            s.stage,
            s.prices.energy,
            s.prices.reserve,
            s.prices.effective(),
            s.decision.consume,
            s.decision.reserve_offer
        );
    }
    println!("  realized cost {:.3}\n", rollout.total_cost);

    let n = 20_000;
    let mut total = 0.0;
    for _ in 0..n {
        let path = model.sample_path(&mut rng);
        total += policy::rollout_optimal(&table, spec.demand, &path).expect("rollout").total_cost;
    }
    println!("mean realized cost over {n} paths: {:.3}", total / n as f64);
    println!("compiled expected cost J(d0):      {:.3}", table.value_at(spec.demand));
}

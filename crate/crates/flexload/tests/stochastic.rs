//! Monte Carlo consistency: the compiled expected cost must match the mean
//! realized cost of executing the policy on sampled paths, for both the
//! independent and the correlated engines. This exercises the closed-form
//! and quadrature integration paths end to end, not just on discrete atoms.

use flexload::numeric::mean_and_halfwidth;
use flexload::price::{
    Innovation, LinearMap, PriceModel, PricePair, SeasonalMap, StageDistribution, WeightedSample,
};
use flexload::thresholds::{compile_correlated, compile_independent, GridConfig, LoadSpec};
use flexload::{policy, value_function};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn realized_costs(
    model: &PriceModel,
    table: &flexload::ThresholdTable,
    demand: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let path = model.sample_path(&mut rng);
            policy::rollout_optimal(table, demand, &path).expect("rollout").total_cost
        })
        .collect()
}

#[test]
fn independent_gaussian_value_matches_monte_carlo() {
    let stages: Vec<StageDistribution> = [36.0, 30.0, 28.0, 33.0, 44.0]
        .iter()
        .map(|&m| StageDistribution::Independent {
            energy: Innovation::Gaussian { mean: m, std_dev: 5.0 },
            reserve: Innovation::PointMass { value: 7.0 },
        })
        .collect();
    let model = PriceModel::independent(stages);
    let spec = LoadSpec { demand: 2.5, capacity: 1.0, horizon: 5, shortfall_penalty: 90.0 };
    let table = compile_independent(&spec, &model).expect("compile");

    let costs = realized_costs(&model, &table, spec.demand, 200_000, 31);
    let (mean, hw) = mean_and_halfwidth(&costs);
    let value = value_function(&table, spec.demand);
    assert!(
        (mean - value).abs() < 1.5 * hw.max(0.05),
        "MC mean {mean:.4} +/- {hw:.4} vs compiled value {value:.4}"
    );
}

#[test]
fn correlated_value_matches_monte_carlo() {
    // persistence 0.5 toward a mean of 36 on the energy price, known reserve
    let horizon = 4;
    let innovations = Innovation::Empirical {
        samples: vec![
            WeightedSample { value: -5.0, weight: 1.0 },
            WeightedSample { value: 0.0, weight: 2.0 },
            WeightedSample { value: 5.0, weight: 1.0 },
        ],
    };
    let model = PriceModel {
        stages: vec![
            StageDistribution::Independent {
                energy: innovations,
                reserve: Innovation::PointMass { value: 0.0 },
            };
            horizon
        ],
        seasonality: Some(vec![
            SeasonalMap {
                energy: LinearMap { intercept: 18.0 + 6.0, slope: 0.5 },
                reserve: LinearMap { intercept: 6.0, slope: 0.0 },
            };
            horizon
        ]),
        initial_state: PricePair::new(40.0, 6.0),
    };
    let spec = LoadSpec { demand: 2.0, capacity: 1.0, horizon, shortfall_penalty: 70.0 };
    let grid = GridConfig { lo: 0.0, hi: 80.0, delta: 2e-3 };
    let compiled = compile_correlated(&spec, &model, &grid).expect("compile");

    let psi0 = model.initial_state.effective();
    let value = compiled.coefficients.value_at(psi0, spec.demand);
    let costs = realized_costs(&model, &compiled.thresholds, spec.demand, 200_000, 67);
    let (mean, hw) = mean_and_halfwidth(&costs);
    assert!(
        (mean - value).abs() < 1.5 * hw.max(0.05),
        "MC mean {mean:.4} +/- {hw:.4} vs grid value {value:.4}"
    );
}

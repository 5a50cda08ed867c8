//! Monte Carlo fleet simulation: a population of flexible loads arriving over
//! a market day, each running one or more charging policies against common
//! sampled price paths. Aggregates per-session costs, the diurnal load shape,
//! peak-to-average ratio and offered reserve capacity.
//!
//! Scenarios are independent work units on counter-split RNG streams, so the
//! result is bit-identical for any worker count. Threshold tables are shared
//! through a deadline/capacity-keyed cache; a table is immutable once
//! published and a longer-dwelling session extends the cached table instead
//! of recompiling it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::mean_and_halfwidth;
use crate::policy::{
    baseline_decision, optimal_decision, rollout, BaselineAux, BaselineKind, LoadState,
};
use crate::price::{Innovation, PriceModel, StageDistribution};
use crate::thresholds::{augment_horizon, compile_independent, LoadSpec, ThresholdTable};
use crate::{Error, Result};

const MINUTES_PER_DAY: u32 = 24 * 60;

/// Tolerances for the per-session bookkeeping checks.
const COST_TOL: f64 = 1e-9;

/// One charging session: arrival slot, dwell length, energy demand and rate
/// limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub arrival: usize,
    pub dwell: usize,
    pub demand: f64,
    pub capacity: f64,
}

impl SessionSpec {
    pub fn deadline(&self) -> usize {
        self.arrival + self.dwell
    }
}

/// Distributional description of the session population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionModel {
    /// Relative arrival mass per slot; entries too close to the end of the
    /// day to fit the minimum dwell are ignored.
    pub arrival_weights: Vec<f64>,
    pub min_dwell: usize,
    pub max_dwell: usize,
    /// Relative mass over dwell lengths `min_dwell..=max_dwell`.
    pub dwell_weights: Vec<f64>,
    /// Demand is lognormal with these log-space parameters, clipped to
    /// `[capacity, dwell * capacity]`.
    pub demand_log_mean: f64,
    pub demand_log_std: f64,
    pub capacity: f64,
    pub shortfall_penalty: f64,
}

/// Policies the simulator can run side by side on common price realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    /// Threshold-optimal joint energy and reserve policy.
    Optimal,
    /// Threshold-optimal policy of a load without reserve participation.
    NoAsOptimal,
    /// Mean-price deterministic plan applied to realized prices.
    CertaintyEquivalent,
    /// Charge at full rate on arrival.
    Immediate,
    /// Spread the demand evenly over the dwell.
    UniformRate,
}

impl PolicyChoice {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyChoice::Optimal => "optimal",
            PolicyChoice::NoAsOptimal => "no_as_optimal",
            PolicyChoice::CertaintyEquivalent => "certainty_equivalent",
            PolicyChoice::Immediate => "immediate",
            PolicyChoice::UniformRate => "uniform_rate",
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_scenarios: usize,
    pub fleet_size: usize,
    pub slot_minutes: u32,
    pub seed: u64,
    pub price_model: PriceModel,
    pub sessions: SessionModel,
    pub policies: Vec<PolicyChoice>,
}

impl SimConfig {
    pub fn slots(&self) -> usize {
        (MINUTES_PER_DAY / self.slot_minutes) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scenarios < 1 || self.fleet_size < 1 {
            return Err(Error::invalid("need at least one scenario and one load"));
        }
        if self.slot_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(self.slot_minutes) {
            return Err(Error::invalid("slot length must divide 24 hours"));
        }
        self.price_model.validate()?;
        if !self.price_model.is_independent() {
            return Err(Error::invalid("fleet simulation uses independent price models"));
        }
        let slots = self.slots();
        if self.price_model.horizon() != slots {
            return Err(Error::invalid(format!(
                "price model has {} stages but the day has {slots} slots",
                self.price_model.horizon()
            )));
        }
        let s = &self.sessions;
        if s.arrival_weights.len() != slots {
            return Err(Error::invalid("arrival weights must cover every slot"));
        }
        if s.min_dwell < 1 || s.max_dwell < s.min_dwell || s.max_dwell > slots {
            return Err(Error::invalid(
                "dwell bounds must satisfy 1 <= min <= max <= one day of slots",
            ));
        }
        if s.dwell_weights.len() != s.max_dwell - s.min_dwell + 1 {
            return Err(Error::invalid("dwell weights must cover min_dwell..=max_dwell"));
        }
        if s.arrival_weights.iter().chain(&s.dwell_weights).any(|&w| !(w >= 0.0) || !w.is_finite())
        {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if !s.arrival_weights[..=slots - s.min_dwell].iter().any(|&w| w > 0.0) {
            return Err(Error::invalid("no arrival slot leaves room for the minimum dwell"));
        }
        if !s.dwell_weights.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid("dwell weights are all zero"));
        }
        if !(s.capacity > 0.0) || !s.shortfall_penalty.is_finite() {
            return Err(Error::invalid("sessions need positive capacity and finite penalty"));
        }
        if !s.demand_log_mean.is_finite() || !(s.demand_log_std > 0.0) {
            return Err(Error::invalid("demand distribution parameters must be finite"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("at least one policy to simulate"));
        }
        let mut seen = self.policies.clone();
        seen.sort_by_key(|p| p.label());
        seen.dedup();
        if seen.len() != self.policies.len() {
            return Err(Error::invalid("duplicate policies in config"));
        }
        Ok(())
    }

    /// The documented synthetic default: a 24-slot day with a two-peak
    /// diurnal energy price mean, gaussian price noise, a known flat positive
    /// reserve price, bimodal arrivals and lognormal demands. Stands in for
    /// the unpublished dataset behind the original fleet experiment.
    pub fn synthetic_default() -> Self {
        let mean_energy = [
            32.0, 30.0, 29.0, 28.0, 28.0, 29.0, 33.0, 42.0, 50.0, 46.0, 42.0, 40.0, 39.0, 40.0,
            42.0, 46.0, 52.0, 60.0, 64.0, 62.0, 55.0, 46.0, 40.0, 35.0,
        ];
        let sigma = 6.0;
        let reserve = 12.0;
        let stages = mean_energy
            .iter()
            .map(|&m| StageDistribution::Independent {
                energy: Innovation::Gaussian { mean: m, std_dev: sigma },
                reserve: Innovation::PointMass { value: reserve },
            })
            .collect();

        // bimodal arrivals: morning and evening clusters
        let arrival_weights: Vec<f64> = (0..24)
            .map(|h| {
                let g = |mu: f64, sd: f64| {
                    let z = (h as f64 - mu) / sd;
                    (-0.5 * z * z).exp()
                };
                0.8 * g(8.0, 2.0) + g(18.0, 2.5) + 0.02
            })
            .collect();
        let dwell_weights: Vec<f64> = (3..=14)
            .map(|k| ((k as f64 - 9.0) / 3.0).powi(2).mul_add(-1.0, 4.0).max(0.5))
            .collect();

        SimConfig {
            n_scenarios: 500,
            fleet_size: 100,
            slot_minutes: 60,
            seed: 1234,
            price_model: PriceModel::independent(stages),
            sessions: SessionModel {
                arrival_weights,
                min_dwell: 3,
                max_dwell: 14,
                dwell_weights,
                demand_log_mean: 4.0f64.ln(),
                demand_log_std: 0.5,
                capacity: 1.0,
                shortfall_penalty: 120.0,
            },
            policies: vec![
                PolicyChoice::Optimal,
                PolicyChoice::NoAsOptimal,
                PolicyChoice::CertaintyEquivalent,
                PolicyChoice::Immediate,
                PolicyChoice::UniformRate,
            ],
        }
    }
}

/// Peak-to-average ratio of a load profile.
pub fn par(load: &[f64]) -> Result<f64> {
    if load.is_empty() || load.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("load profile must be nonnegative"));
    }
    let peak = load.iter().cloned().fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Err(Error::invalid("peak-to-average ratio of an all-zero load"));
    }
    let mean = load.iter().sum::<f64>() / load.len() as f64;
    Ok(peak / mean)
}

/// Aggregated statistics for one simulated policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStats {
    pub policy: PolicyChoice,
    /// Mean realized cost per session.
    pub mean_cost: f64,
    /// 95% confidence halfwidth from scenario-level means.
    pub ci_halfwidth: f64,
    /// Mean cost divided by the no-reserve optimal mean cost.
    pub normalized: Option<f64>,
    /// Peak-to-average ratio of the mean diurnal profile.
    pub par: Option<f64>,
    /// Mean total reserve capacity offered per scenario.
    pub mean_as_capacity: f64,
    /// Mean aggregate load per slot.
    pub diurnal: Vec<f64>,
    /// Scenario-level mean cost per session (the CI sample).
    #[serde(skip)]
    pub scenario_mean_costs: Vec<f64>,
}

/// Simulation output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub seed: u64,
    pub n_scenarios: usize,
    pub fleet_size: usize,
    pub slots: usize,
    pub sessions: usize,
    pub stats: Vec<PolicyStats>,
    /// Sessions where the with-reserve optimal realized cost exceeded the
    /// no-reserve optimal cost despite almost-surely nonnegative reserve
    /// prices (checked only when both policies run).
    pub dominance_violations: usize,
    /// Sessions where consumption plus terminal shortfall failed to add back
    /// to the initial demand.
    pub conservation_violations: usize,
}

impl SimResult {
    pub fn stats_for(&self, policy: PolicyChoice) -> Option<&PolicyStats> {
        self.stats.iter().find(|s| s.policy == policy)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum TableVariant {
    WithAs,
    NoAs,
    CertEquiv,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    deadline: usize,
    variant: TableVariant,
    capacity_bits: u64,
    penalty_bits: u64,
}

/// Deadline-keyed cache of compiled tables. The stored table always covers
/// the longest dwell seen for its key; shorter sessions read a row-offset
/// view, longer ones extend the table in place.
struct TableCache {
    map: Mutex<HashMap<CacheKey, Arc<ThresholdTable>>>,
    enabled: bool,
}

impl TableCache {
    fn new(enabled: bool) -> Self {
        Self { map: Mutex::new(HashMap::new()), enabled }
    }

    fn variant_model(model: &PriceModel, variant: TableVariant) -> PriceModel {
        match variant {
            TableVariant::WithAs => model.clone(),
            TableVariant::NoAs => model.with_zero_reserve(),
            TableVariant::CertEquiv => model.certainty_equivalent(),
        }
    }

    /// Table rows covering the session window, plus the row offset mapping
    /// session stages onto the cached table.
    fn fetch(
        &self,
        base: &PriceModel,
        session: &SessionSpec,
        penalty: f64,
        variant: TableVariant,
    ) -> Result<(Arc<ThresholdTable>, usize)> {
        let window_spec = |dwell: usize| LoadSpec {
            demand: session.demand,
            capacity: session.capacity,
            horizon: dwell,
            shortfall_penalty: penalty,
        };
        if !self.enabled {
            let model =
                Self::variant_model(&base.window(session.arrival, session.deadline())?, variant);
            let table = compile_independent(&window_spec(session.dwell), &model)?;
            return Ok((Arc::new(table), 0));
        }
        let key = CacheKey {
            deadline: session.deadline(),
            variant,
            capacity_bits: session.capacity.to_bits(),
            penalty_bits: penalty.to_bits(),
        };
        let mut map = self.map.lock().expect("table cache poisoned");
        match map.get(&key) {
            Some(table) if table.horizon() >= session.dwell => {
                Ok((Arc::clone(table), table.horizon() - session.dwell))
            }
            existing => {
                let model = Self::variant_model(
                    &base.window(session.deadline() - session.dwell, session.deadline())?,
                    variant,
                );
                let table = match existing {
                    Some(short) => augment_horizon(short, &window_spec(session.dwell), &model)?,
                    None => compile_independent(&window_spec(session.dwell), &model)?,
                };
                let table = Arc::new(table);
                map.insert(key, Arc::clone(&table));
                Ok((table, 0))
            }
        }
    }
}

struct ScenarioAccumulator {
    cost_total: Vec<f64>,
    load: Vec<Vec<f64>>,
    as_capacity: Vec<f64>,
    sessions: usize,
    dominance_violations: usize,
    conservation_violations: usize,
}

fn sample_sessions<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<SessionSpec>> {
    let slots = cfg.slots();
    let s = &cfg.sessions;
    let mut weights = s.arrival_weights.clone();
    for (slot, w) in weights.iter_mut().enumerate() {
        if slot + s.min_dwell > slots {
            *w = 0.0;
        }
    }
    let arrival_dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid(format!("arrival weights: {e}")))?;
    let dwell_dist = WeightedIndex::new(&s.dwell_weights)
        .map_err(|e| Error::invalid(format!("dwell weights: {e}")))?;
    let demand_dist = rand_distr::LogNormal::new(s.demand_log_mean, s.demand_log_std)
        .map_err(|e| Error::invalid(format!("demand distribution: {e}")))?;

    Ok((0..cfg.fleet_size)
        .map(|_| {
            let arrival = arrival_dist.sample(rng);
            let dwell = (s.min_dwell + dwell_dist.sample(rng)).min(slots - arrival);
            let raw_demand: f64 = demand_dist.sample(rng);
            let demand = raw_demand.clamp(s.capacity, dwell as f64 * s.capacity);
            SessionSpec { arrival, dwell, demand, capacity: s.capacity }
        })
        .collect())
}

fn run_scenario(
    cfg: &SimConfig,
    cache: &TableCache,
    scenario: usize,
) -> Result<ScenarioAccumulator> {
    let slots = cfg.slots();
    let n_policies = cfg.policies.len();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(scenario as u64 + 1);

    let path = cfg.price_model.sample_path(&mut rng);
    let sessions = sample_sessions(cfg, &mut rng)?;

    let mut acc = ScenarioAccumulator {
        cost_total: vec![0.0; n_policies],
        load: vec![vec![0.0; slots]; n_policies],
        as_capacity: vec![0.0; n_policies],
        sessions: sessions.len(),
        dominance_violations: 0,
        conservation_violations: 0,
    };

    let check_dominance = cfg.policies.contains(&PolicyChoice::Optimal)
        && cfg.policies.contains(&PolicyChoice::NoAsOptimal)
        && cfg.price_model.reserve_nonnegative();

    for session in &sessions {
        let window = &path[session.arrival..session.deadline()];
        let penalty = cfg.sessions.shortfall_penalty;
        let mut session_costs = vec![0.0; n_policies];

        for (pi, policy) in cfg.policies.iter().enumerate() {
            let result = match policy {
                PolicyChoice::Optimal => {
                    let (table, offset) =
                        cache.fetch(&cfg.price_model, session, penalty, TableVariant::WithAs)?;
                    rollout(session.demand, session.capacity, penalty, window, |state, p| {
                        let shifted = LoadState {
                            remaining_demand: state.remaining_demand,
                            stage: state.stage + offset,
                        };
                        optimal_decision(&table, &shifted, p)
                    })?
                }
                PolicyChoice::NoAsOptimal | PolicyChoice::CertaintyEquivalent => {
                    let variant = if *policy == PolicyChoice::NoAsOptimal {
                        TableVariant::NoAs
                    } else {
                        TableVariant::CertEquiv
                    };
                    let kind = if *policy == PolicyChoice::NoAsOptimal {
                        BaselineKind::NoAsOptimal
                    } else {
                        BaselineKind::CertaintyEquivalent
                    };
                    let (table, offset) =
                        cache.fetch(&cfg.price_model, session, penalty, variant)?;
                    let aux = BaselineAux {
                        initial_demand: session.demand,
                        horizon: session.dwell,
                        ce_table: Some(&table),
                        no_as_table: Some(&table),
                    };
                    rollout(session.demand, session.capacity, penalty, window, |state, p| {
                        let shifted = LoadState {
                            remaining_demand: state.remaining_demand,
                            stage: state.stage + offset,
                        };
                        baseline_decision(kind, &shifted, p, session.capacity, &aux)
                    })?
                }
                PolicyChoice::Immediate | PolicyChoice::UniformRate => {
                    let kind = if *policy == PolicyChoice::Immediate {
                        BaselineKind::Immediate
                    } else {
                        BaselineKind::UniformRate
                    };
                    let aux = BaselineAux {
                        initial_demand: session.demand,
                        horizon: session.dwell,
                        ce_table: None,
                        no_as_table: None,
                    };
                    rollout(session.demand, session.capacity, penalty, window, |state, p| {
                        baseline_decision(kind, state, p, session.capacity, &aux)
                    })?
                }
            };

            let consumed: f64 = result.steps.iter().map(|s| s.decision.consume).sum();
            if (consumed + result.shortfall - session.demand).abs()
                > COST_TOL * session.demand.max(1.0)
            {
                acc.conservation_violations += 1;
            }
            for step in &result.steps {
                acc.load[pi][session.arrival + step.stage] += step.decision.consume;
                acc.as_capacity[pi] += step.decision.reserve_offer;
            }
            acc.cost_total[pi] += result.total_cost;
            session_costs[pi] = result.total_cost;
        }

        if check_dominance {
            let opt = cfg.policies.iter().position(|p| *p == PolicyChoice::Optimal).unwrap();
            let noas = cfg.policies.iter().position(|p| *p == PolicyChoice::NoAsOptimal).unwrap();
            if session_costs[opt] > session_costs[noas] + COST_TOL {
                acc.dominance_violations += 1;
            }
        }
    }
    Ok(acc)
}

/// Run the simulation. Deterministic in the seed and independent of the
/// worker count; scenario results are reduced in index order.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    run_with_cache(config, true)
}

/// As `run`, but recompiling every table per session; exists to verify the
/// cache is behavior-neutral.
pub fn run_uncached(config: &SimConfig) -> Result<SimResult> {
    run_with_cache(config, false)
}

fn run_with_cache(config: &SimConfig, cache_enabled: bool) -> Result<SimResult> {
    config.validate()?;
    let cache = TableCache::new(cache_enabled);
    let slots = config.slots();
    let n_policies = config.policies.len();

    let scenarios: Vec<Result<ScenarioAccumulator>> =
        (0..config.n_scenarios).into_par_iter().map(|s| run_scenario(config, &cache, s)).collect();

    let mut scenario_means = vec![Vec::with_capacity(config.n_scenarios); n_policies];
    let mut load_sum = vec![vec![0.0; slots]; n_policies];
    let mut as_sum = vec![0.0; n_policies];
    let mut cost_sum = vec![0.0; n_policies];
    let mut sessions = 0usize;
    let mut dominance_violations = 0usize;
    let mut conservation_violations = 0usize;

    for acc in scenarios {
        let acc = acc?;
        sessions += acc.sessions;
        dominance_violations += acc.dominance_violations;
        conservation_violations += acc.conservation_violations;
        for pi in 0..n_policies {
            cost_sum[pi] += acc.cost_total[pi];
            scenario_means[pi].push(acc.cost_total[pi] / acc.sessions as f64);
            as_sum[pi] += acc.as_capacity[pi];
            for (slot, v) in acc.load[pi].iter().enumerate() {
                load_sum[pi][slot] += v;
            }
        }
    }

    let baseline_mean = config
        .policies
        .iter()
        .position(|p| *p == PolicyChoice::NoAsOptimal)
        .map(|i| cost_sum[i] / sessions as f64);

    let stats = config
        .policies
        .iter()
        .enumerate()
        .map(|(pi, policy)| {
            let mean_cost = cost_sum[pi] / sessions as f64;
            let (_, ci) = mean_and_halfwidth(&scenario_means[pi]);
            let diurnal: Vec<f64> =
                load_sum[pi].iter().map(|v| v / config.n_scenarios as f64).collect();
            PolicyStats {
                policy: *policy,
                mean_cost,
                ci_halfwidth: ci,
                normalized: baseline_mean.map(|b| mean_cost / b),
                par: par(&diurnal).ok(),
                mean_as_capacity: as_sum[pi] / config.n_scenarios as f64,
                diurnal,
                scenario_mean_costs: scenario_means[pi].clone(),
            }
        })
        .collect();

    Ok(SimResult {
        seed: config.seed,
        n_scenarios: config.n_scenarios,
        fleet_size: config.fleet_size,
        slots,
        sessions,
        stats,
        dominance_violations,
        conservation_violations,
    })
}

//! Decision rules: the optimal multi-threshold policy and the baseline
//! policies it is compared against.
//!
//! At stage `t` the policy compares the realized effective price against the
//! continuation thresholds — table row `t + 1`, the slopes of the next
//! stage's cost-to-go. Every demand piece whose expected marginal cost-to-go
//! beats the effective price is consumed now. Same-stage thresholds would
//! not do: row `t` already folds the current price distribution into the
//! slopes, so comparing the realized price against it double-counts today's
//! information and misses the Bellman minimum whenever the price lands
//! between a threshold and its next-stage value.

use serde::{Deserialize, Serialize};

use crate::price::PricePair;
use crate::thresholds::ThresholdTable;
use crate::{Error, Result};

/// One slot's action: energy consumed and reserve capacity offered.
/// Feasibility: `0 <= reserve_offer <= consume <= min(demand, capacity)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub consume: f64,
    pub reserve_offer: f64,
}

impl Decision {
    pub fn zero() -> Self {
        Self { consume: 0.0, reserve_offer: 0.0 }
    }

    pub fn feasible(&self, demand: f64, capacity: f64) -> bool {
        0.0 <= self.reserve_offer
            && self.reserve_offer <= self.consume
            && self.consume <= demand.min(capacity) + 1e-12
    }
}

/// Remaining demand and current stage of one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadState {
    pub remaining_demand: f64,
    pub stage: usize,
}

/// Reserve offer rule: offer the whole consumption whenever the reserve
/// price is nonnegative, nothing otherwise.
pub fn reserve_rule(consume: f64, reserve_price: f64) -> f64 {
    if reserve_price >= 0.0 {
        consume
    } else {
        0.0
    }
}

/// Largest piece index whose continuation threshold lies strictly below the
/// effective price (the `-inf` sentinel always qualifies, so 0 is the floor).
fn cutoff_index(row: &[f64], effective: f64) -> usize {
    row.partition_point(|&m| m < effective)
}

/// Consumption prescribed by a threshold row for remaining demand `d`:
/// consume down to the cutoff piece, capped by the slot capacity. A cutoff
/// past the last piece means the price also beats the terminal penalty
/// (the top continuation threshold equals it), so demand beyond the pieces
/// is abandoned rather than served.
fn threshold_consumption(row: &[f64], d: f64, capacity: f64, effective: f64) -> f64 {
    let i_star = cutoff_index(row, effective);
    if i_star == row.len() {
        return 0.0;
    }
    (d - i_star as f64 * capacity).max(0.0).min(capacity)
}

/// The optimal joint consumption and reserve decision at `state` under
/// realized `prices`.
pub fn optimal_decision(
    table: &ThresholdTable,
    state: &LoadState,
    prices: &PricePair,
) -> Result<Decision> {
    if state.stage >= table.horizon() {
        return Err(Error::invalid(format!(
            "stage {} out of range for horizon {}",
            state.stage,
            table.horizon()
        )));
    }
    let d = state.remaining_demand;
    if d <= 0.0 {
        return Ok(Decision::zero());
    }
    let consume =
        threshold_consumption(table.row(state.stage + 1), d, table.capacity(), prices.effective());
    Ok(Decision { consume, reserve_offer: reserve_rule(consume, prices.reserve) })
}

/// Baseline decision rules used in the fleet comparison. None of them offer
/// reserve capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Charge as fast as possible.
    Immediate,
    /// Spread the initial demand evenly over the dwell.
    UniformRate,
    /// Threshold policy compiled from the deterministic mean-price
    /// equivalent, applied to realized energy prices. With independent
    /// prices, using row `t` of the mean-price table is exactly the
    /// receding-horizon re-plan (the backward recursion only reads stages
    /// `>= t`).
    CertaintyEquivalent,
    /// Optimal policy of the load that cannot sell reserves (effective price
    /// = energy price).
    NoAsOptimal,
}

/// Side inputs the baselines need: the initial demand for the uniform rate
/// and the pre-compiled tables for the threshold-based baselines.
pub struct BaselineAux<'a> {
    pub initial_demand: f64,
    pub horizon: usize,
    pub ce_table: Option<&'a ThresholdTable>,
    pub no_as_table: Option<&'a ThresholdTable>,
}

pub fn baseline_decision(
    kind: BaselineKind,
    state: &LoadState,
    prices: &PricePair,
    capacity: f64,
    aux: &BaselineAux<'_>,
) -> Result<Decision> {
    let d = state.remaining_demand;
    if d <= 0.0 {
        return Ok(Decision::zero());
    }
    let consume = match kind {
        BaselineKind::Immediate => d.min(capacity),
        BaselineKind::UniformRate => {
            let rate = aux.initial_demand / aux.horizon as f64;
            d.min(rate).min(capacity)
        }
        BaselineKind::CertaintyEquivalent => {
            let table = aux
                .ce_table
                .ok_or_else(|| Error::invalid("certainty-equivalent baseline needs its table"))?;
            if state.stage >= table.horizon() {
                return Err(Error::invalid("stage out of range for baseline table"));
            }
            // no reserve participation: compare the raw energy price
            threshold_consumption(table.row(state.stage + 1), d, table.capacity(), prices.energy)
        }
        BaselineKind::NoAsOptimal => {
            let table = aux
                .no_as_table
                .ok_or_else(|| Error::invalid("no-reserve baseline needs its table"))?;
            if state.stage >= table.horizon() {
                return Err(Error::invalid("stage out of range for baseline table"));
            }
            threshold_consumption(table.row(state.stage + 1), d, table.capacity(), prices.energy)
        }
    };
    Ok(Decision { consume, reserve_offer: 0.0 })
}

/// One executed slot of a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStep {
    pub stage: usize,
    pub prices: PricePair,
    pub demand_before: f64,
    pub decision: Decision,
    pub stage_cost: f64,
}

/// A full policy execution over a price path.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub shortfall: f64,
    pub total_cost: f64,
}

/// Execute a decision rule over a realized price path, accumulating the
/// stage costs `pi_e * e - pi_r * r` and the terminal shortfall penalty.
pub fn rollout<F>(
    initial_demand: f64,
    capacity: f64,
    shortfall_penalty: f64,
    path: &[PricePair],
    mut decide: F,
) -> Result<Rollout>
where
    F: FnMut(&LoadState, &PricePair) -> Result<Decision>,
{
    let mut demand = initial_demand;
    let mut steps = Vec::with_capacity(path.len());
    let mut total = 0.0;
    for (stage, prices) in path.iter().enumerate() {
        let state = LoadState { remaining_demand: demand, stage };
        let decision = decide(&state, prices)?;
        if !decision.feasible(demand, capacity) {
            return Err(Error::numerical(format!(
                "infeasible decision at stage {stage}: e={}, r={}, d={demand}",
                decision.consume, decision.reserve_offer
            )));
        }
        let stage_cost = prices.energy * decision.consume - prices.reserve * decision.reserve_offer;
        total += stage_cost;
        steps.push(RolloutStep {
            stage,
            prices: *prices,
            demand_before: demand,
            decision,
            stage_cost,
        });
        demand -= decision.consume;
        if demand < 0.0 {
            demand = 0.0;
        }
    }
    total += shortfall_penalty * demand;
    Ok(Rollout { steps, shortfall: demand, total_cost: total })
}

/// Rollout of the optimal policy from a compiled table.
pub fn rollout_optimal(
    table: &ThresholdTable,
    initial_demand: f64,
    path: &[PricePair],
) -> Result<Rollout> {
    if path.len() != table.horizon() {
        return Err(Error::invalid(format!(
            "price path length {} does not match horizon {}",
            path.len(),
            table.horizon()
        )));
    }
    rollout(initial_demand, table.capacity(), table.terminal_penalty(), path, |state, prices| {
        optimal_decision(table, state, prices)
    })
}

//! Threshold compilation: backward recursions that turn a load description
//! and a price model into the multi-threshold policy table.
//!
//! The value of serving remaining demand `d` at stage `t` is continuous,
//! piecewise linear and convex in `d`, with pieces of length `capacity`. The
//! slope of piece `i` (demand segment `[(i-1)*cap, i*cap]`) is the threshold
//! `m[t][i]`; the index `i = 0` is a symbolic `-inf` sentinel so the policy's
//! argmax is always well defined. Row `T` is the terminal shortfall penalty.
//!
//! Independent prices reduce the recursion to
//! `m[t][i] = m[t+1][i] - G_t(m[t+1][i-1], m[t+1][i])` with
//! `G_t(z, z') = integral of the effective-price CDF over [z, z']`.
//! Correlated prices carry the previous effective price as a scalar Markov
//! state; the stage coefficients are tabulated on a state grid and the
//! thresholds are the fixed points `m(psi) = psi`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{self, QUAD_TOL};
use crate::price::{EffectiveDist, Lower, PriceModel};
use crate::{Error, Result};

/// Parallelize the per-stage piece loop only when it is wide enough to pay
/// for the dispatch. Per-entry work is independent, so the output is
/// identical either way.
const PAR_THRESHOLD: usize = 1024;

/// One deferrable-load instance: total demand due by the deadline, per-slot
/// capacity, number of decision slots, and the marginal cost of unmet demand
/// at the deadline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub demand: f64,
    pub capacity: f64,
    pub horizon: usize,
    pub shortfall_penalty: f64,
}

impl LoadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.demand >= 0.0) || !self.demand.is_finite() {
            return Err(Error::invalid("demand must be finite and nonnegative"));
        }
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(Error::invalid("capacity must be finite and positive"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be at least one slot"));
        }
        if !self.shortfall_penalty.is_finite() {
            return Err(Error::invalid("shortfall penalty must be finite"));
        }
        Ok(())
    }
}

/// Compiled multi-threshold policy: the `(T+1) x (T+1)` matrix of thresholds
/// `m[t][i]` for `t in 0..=T`, `i in 0..=T`. The `i = 0` column is the
/// symbolic `-inf` sentinel and is not stored; `rows[t][i-1]` holds the
/// finite thresholds `i in 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    horizon: usize,
    capacity: f64,
    terminal_penalty: f64,
    rows: Vec<Vec<f64>>,
}

impl ThresholdTable {
    pub fn from_rows(capacity: f64, terminal_penalty: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let horizon = rows.len().checked_sub(1).ok_or_else(|| Error::invalid("empty table"))?;
        if horizon == 0 {
            return Err(Error::invalid("table needs at least one decision stage"));
        }
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::invalid("each table row must hold T thresholds"));
        }
        Ok(Self { horizon, capacity, terminal_penalty, rows })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn terminal_penalty(&self) -> f64 {
        self.terminal_penalty
    }

    /// Finite thresholds `i = 1..=T` of row `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    /// Threshold `m[t][i]`, with the `i = 0` sentinel carried symbolically.
    pub fn threshold(&self, t: usize, i: usize) -> Lower {
        if i == 0 {
            Lower::NegInf
        } else {
            Lower::At(self.rows[t][i - 1])
        }
    }

    /// Value function at stage `t` as an explicit piecewise-linear object.
    pub fn piecewise_value(&self, t: usize) -> PiecewiseLinear {
        PiecewiseLinear {
            capacity: self.capacity,
            slopes: self.rows[t].clone(),
            tail_slope: self.terminal_penalty,
        }
    }

    /// Expected optimal cost of serving demand `d` from stage 0.
    pub fn value_at(&self, d: f64) -> f64 {
        self.piecewise_value(0).eval(d)
    }

    /// Structural checks shared by all compiled tables: terminal row pinned
    /// to the shortfall penalty and thresholds nondecreasing in the piece
    /// index (convexity). `tol` absorbs quadrature noise.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let t_row = &self.rows[self.horizon];
        if t_row.iter().any(|&m| (m - self.terminal_penalty).abs() > tol) {
            return Err(Error::invalid("terminal row must equal the shortfall penalty"));
        }
        for (t, row) in self.rows.iter().enumerate() {
            for i in 1..row.len() {
                if row[i] < row[i - 1] - tol {
                    return Err(Error::invalid(format!(
                        "thresholds must be nondecreasing in the piece index at t={t}, i={}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Independent-model invariant: each threshold sits between its own
    /// next-stage value and the next-stage value of the piece below,
    /// `m[t+1][i-1] <= m[t][i] <= m[t+1][i]`.
    pub fn validate_sandwich(&self, tol: f64) -> Result<()> {
        for t in 0..self.horizon {
            for i in 1..=self.horizon {
                let cur = self.rows[t][i - 1];
                let next = self.rows[t + 1][i - 1];
                if cur > next + tol {
                    return Err(Error::invalid(format!(
                        "threshold exceeds its next-stage value at t={t}, i={i}"
                    )));
                }
                if i >= 2 && cur < self.rows[t + 1][i - 2] - tol {
                    return Err(Error::invalid(format!(
                        "threshold undercuts the next-stage lower piece at t={t}, i={i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Convex piecewise-linear cost of remaining demand: `T` pieces of length
/// `capacity` with nondecreasing slopes, then a terminal ray.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub capacity: f64,
    pub slopes: Vec<f64>,
    pub tail_slope: f64,
}

impl PiecewiseLinear {
    pub fn eval(&self, d: f64) -> f64 {
        let cap = self.capacity;
        let mut acc = 0.0;
        for (j, &s) in self.slopes.iter().enumerate() {
            let seg = (d - j as f64 * cap).max(0.0).min(cap);
            if seg <= 0.0 {
                return acc;
            }
            acc += s * seg;
        }
        acc + self.tail_slope * (d - self.slopes.len() as f64 * cap).max(0.0)
    }

    /// Convexity holds when the slopes (including the tail) are nondecreasing.
    pub fn is_convex(&self, tol: f64) -> bool {
        let mut prev = f64::NEG_INFINITY;
        for &s in self.slopes.iter().chain(std::iter::once(&self.tail_slope)) {
            if s < prev - tol {
                return false;
            }
            prev = s;
        }
        true
    }
}

/// Expected optimal cost of serving demand `d` with the compiled table,
/// evaluated from the stage-0 coefficients.
pub fn value_function(table: &ThresholdTable, d: f64) -> f64 {
    table.value_at(d)
}

/// `G(z, z') = integral of the effective-price CDF over [z, z']`, the
/// one-stage threshold decrement. `z` may be the symbolic lower sentinel;
/// errors if a finite `z` exceeds `z'`.
pub fn g_integral(dist: &EffectiveDist, z: Lower, z_prime: f64) -> Result<f64> {
    if let Lower::At(v) = z {
        if v > z_prime {
            return Err(Error::invalid(format!(
                "g_integral needs z <= z', got z={v}, z'={z_prime}"
            )));
        }
    }
    Ok(dist.integrated_cdf(z, z_prime))
}

fn run_maybe_parallel<F>(horizon: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if horizon >= PAR_THRESHOLD {
        (1..=horizon).into_par_iter().map(f).collect()
    } else {
        (1..=horizon).map(f).collect()
    }
}

/// Compile the threshold table for an independent price model by the
/// `m[t][i] = m[t+1][i] - G_t(m[t+1][i-1], m[t+1][i])` recursion, initialized
/// from the terminal penalty row. `Theta(T^2)` evaluations of `G`; the pieces
/// of each stage are independent and may run in parallel.
pub fn compile_independent(spec: &LoadSpec, model: &PriceModel) -> Result<ThresholdTable> {
    spec.validate()?;
    model.validate()?;
    if !model.is_independent() {
        return Err(Error::invalid("compile_independent requires a model without seasonality"));
    }
    if model.horizon() != spec.horizon {
        return Err(Error::invalid(format!(
            "model horizon {} does not match load horizon {}",
            model.horizon(),
            spec.horizon
        )));
    }
    let horizon = spec.horizon;
    let dists: Vec<EffectiveDist> =
        (0..horizon).map(|t| model.effective_dist(t)).collect::<Result<_>>()?;

    let mut rows = vec![Vec::new(); horizon + 1];
    rows[horizon] = vec![spec.shortfall_penalty; horizon];
    for t in (0..horizon).rev() {
        let next: &[f64] = &rows[t + 1];
        let dist = &dists[t];
        let row = run_maybe_parallel(horizon, |i| {
            let upper = next[i - 1];
            let lower = if i == 1 { Lower::NegInf } else { Lower::At(next[i - 2]) };
            upper - dist.integrated_cdf(lower, upper)
        });
        rows[t] = row;
    }
    ThresholdTable::from_rows(spec.capacity, spec.shortfall_penalty, rows)
}

/// Extend a compiled table with earlier stages. The existing table must be a
/// stage suffix of the extended model (same deadline, capacity and terminal
/// penalty); only the added rows are computed, existing entries are reused
/// bit-identically.
pub fn augment_horizon(
    table: &ThresholdTable,
    spec: &LoadSpec,
    model: &PriceModel,
) -> Result<ThresholdTable> {
    spec.validate()?;
    model.validate()?;
    if !model.is_independent() {
        return Err(Error::invalid("augment_horizon requires an independent model"));
    }
    if spec.capacity != table.capacity {
        return Err(Error::invalid("capacity mismatch between table and extension"));
    }
    if spec.shortfall_penalty != table.terminal_penalty {
        return Err(Error::invalid("terminal-penalty mismatch between table and extension"));
    }
    if spec.horizon < table.horizon || model.horizon() != spec.horizon {
        return Err(Error::invalid(
            "extended horizon must cover the existing table and match the model",
        ));
    }
    let new_t = spec.horizon;
    let old_t = table.horizon;
    let added = new_t - old_t;
    if added == 0 {
        return Ok(table.clone());
    }

    // Existing rows shift by `added`; pieces beyond the old width can never
    // be served within the old suffix, so their thresholds equal the
    // terminal penalty.
    let mut rows = vec![Vec::new(); new_t + 1];
    for t_old in 0..=old_t {
        let mut row = Vec::with_capacity(new_t);
        row.extend_from_slice(&table.rows[t_old]);
        row.resize(new_t, table.terminal_penalty);
        rows[t_old + added] = row;
    }
    for t in (0..added).rev() {
        let dist = model.effective_dist(t)?;
        let next: &[f64] = &rows[t + 1];
        let row = run_maybe_parallel(new_t, |i| {
            let upper = next[i - 1];
            let lower = if i == 1 { Lower::NegInf } else { Lower::At(next[i - 2]) };
            upper - dist.integrated_cdf(lower, upper)
        });
        rows[t] = row;
    }
    ThresholdTable::from_rows(spec.capacity, spec.shortfall_penalty, rows)
}

/// State grid for the correlated engine: the scalar Markov state is the
/// previous stage's effective price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo >= self.hi {
            return Err(Error::invalid("grid bounds must be finite with lo < hi"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid("grid resolution must be positive"));
        }
        Ok(())
    }

    fn nodes(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.delta).ceil() as usize;
        let mut xs: Vec<f64> = (0..=n).map(|k| self.lo + k as f64 * self.delta).collect();
        if let Some(last) = xs.last_mut() {
            *last = self.hi;
        }
        xs
    }
}

/// Tabulated stage coefficients `m[t][i](psi)` of the correlated engine,
/// linearly interpolated between grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    psi: Vec<f64>,
    /// `coeff[t][i-1][k]` = `m[t][i](psi_k)` for `i in 1..=T`.
    coeff: Vec<Vec<Vec<f64>>>,
    capacity: f64,
    terminal_penalty: f64,
}

impl CoefficientGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.psi
    }

    pub fn horizon(&self) -> usize {
        self.coeff.len() - 1
    }

    /// `m[t][i](psi)`; constant extrapolation outside the grid.
    pub fn eval(&self, t: usize, i: usize, psi: f64) -> f64 {
        numeric::interp_clamped(&self.psi, &self.coeff[t][i - 1], psi)
    }

    /// Stage-`t` value function at state `psi` as a piecewise-linear object.
    pub fn piecewise_value(&self, t: usize, psi: f64) -> PiecewiseLinear {
        let horizon = self.horizon();
        PiecewiseLinear {
            capacity: self.capacity,
            slopes: (1..=horizon).map(|i| self.eval(t, i, psi)).collect(),
            tail_slope: self.terminal_penalty,
        }
    }

    /// Expected optimal cost of serving demand `d` from stage 0 at initial
    /// state `psi`.
    pub fn value_at(&self, psi: f64, d: f64) -> f64 {
        self.piecewise_value(0, psi).eval(d)
    }
}

/// Output of the correlated engine: the tabulated coefficients plus the
/// extracted fixed-point thresholds that drive the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedPolicy {
    pub coefficients: CoefficientGrid,
    pub thresholds: ThresholdTable,
}

/// Compile the correlated engine on a state grid. For each stage and piece
/// the coefficient function is the expectation of the three-branch
/// continuation conditional (continue above the upper threshold, the realized
/// effective price between the thresholds, the lower piece below), and the
/// threshold is the fixed point `m[t][i](psi) = psi` found by bisection on
/// the grid.
pub fn compile_correlated(
    spec: &LoadSpec,
    model: &PriceModel,
    grid: &GridConfig,
) -> Result<CorrelatedPolicy> {
    spec.validate()?;
    model.validate()?;
    grid.validate()?;
    if model.horizon() != spec.horizon {
        return Err(Error::invalid(format!(
            "model horizon {} does not match load horizon {}",
            model.horizon(),
            spec.horizon
        )));
    }
    let horizon = spec.horizon;
    let penalty = spec.shortfall_penalty;
    let psi = grid.nodes();
    let n = psi.len();

    let mut coeff = vec![vec![vec![0.0; n]; horizon]; horizon + 1];
    let mut rows = vec![vec![penalty; horizon]; horizon + 1];
    for i in 0..horizon {
        coeff[horizon][i] = vec![penalty; n];
    }

    for t in (0..horizon).rev() {
        let map = model.seasonal_map(t);
        let stage = &model.stages[t];
        let next_coeff = &coeff[t + 1];
        let next_row: &[f64] = &rows[t + 1];
        let psi_ref = &psi;

        let compute_piece = |i: usize| -> Result<(Vec<f64>, f64)> {
            let upper_hat = next_row[i - 1];
            let lower_hat = if i == 1 { Lower::NegInf } else { Lower::At(next_row[i - 2]) };
            let values: Vec<f64> = psi_ref
                .iter()
                .map(|&state| {
                    stage.expect_pair(
                        |ee, er| {
                            let mean = map.mean_pair(state);
                            let realized =
                                crate::price::PricePair::new(mean.energy + ee, mean.reserve + er);
                            let next_state = realized.effective();
                            if next_state >= upper_hat {
                                numeric::interp_clamped(psi_ref, &next_coeff[i - 1], next_state)
                            } else {
                                match lower_hat {
                                    Lower::At(lo) if next_state < lo => numeric::interp_clamped(
                                        psi_ref,
                                        &next_coeff[i - 2],
                                        next_state,
                                    ),
                                    _ => next_state,
                                }
                            }
                        },
                        QUAD_TOL,
                    )
                })
                .collect();

            // The coefficient function inherits monotonicity from the
            // monotone seasonality map; a violation means the model broke
            // its assumption.
            for k in 1..values.len() {
                if values[k] < values[k - 1] - 1e-9 {
                    return Err(Error::numerical(format!(
                        "coefficient function not monotone at t={t}, i={i}"
                    )));
                }
            }
            let fixed = solve_fixed_point(psi_ref, &values, t, i)?;
            Ok((values, fixed))
        };

        let pieces: Vec<Result<(Vec<f64>, f64)>> = if horizon >= PAR_THRESHOLD {
            (1..=horizon).into_par_iter().map(compute_piece).collect()
        } else {
            (1..=horizon).map(compute_piece).collect()
        };
        let mut row = Vec::with_capacity(horizon);
        for (idx, piece) in pieces.into_iter().enumerate() {
            let (values, fixed) = piece?;
            coeff[t][idx] = values;
            row.push(fixed);
        }
        // convexity: coefficients and fixed points are nondecreasing in the
        // piece index at every state
        for i in 1..horizon {
            if row[i] < row[i - 1] - 1e-9 {
                return Err(Error::numerical(format!(
                    "thresholds not nondecreasing in the piece index at t={t}, i={}",
                    i + 1
                )));
            }
            for k in 0..n {
                if coeff[t][i][k] < coeff[t][i - 1][k] - 1e-9 {
                    return Err(Error::numerical(format!(
                        "coefficients not nondecreasing in the piece index at t={t}, i={}",
                        i + 1
                    )));
                }
            }
        }
        rows[t] = row;
    }

    let thresholds = ThresholdTable::from_rows(spec.capacity, penalty, rows)?;
    let coefficients =
        CoefficientGrid { psi, coeff, capacity: spec.capacity, terminal_penalty: penalty };
    Ok(CorrelatedPolicy { coefficients, thresholds })
}

/// Fixed point of `m(psi) = psi` on the tabulated grid: locate the sign
/// change of `m(psi) - psi` and bisect the interpolated function to 1e-9.
fn solve_fixed_point(psi: &[f64], values: &[f64], t: usize, i: usize) -> Result<f64> {
    let h = |k: usize| values[k] - psi[k];
    let n = psi.len();
    if h(0) < 0.0 || h(n - 1) > 0.0 {
        return Err(Error::numerical(format!(
            "fixed point outside grid support at t={t}, i={i} (widen the state grid)"
        )));
    }
    let mut k = 0;
    while k + 1 < n && h(k + 1) >= 0.0 {
        k += 1;
    }
    if k == n - 1 {
        return Ok(psi[n - 1]);
    }
    if h(k) == 0.0 {
        return Ok(psi[k]);
    }
    numeric::bisect(|x| numeric::interp_clamped(psi, values, x) - x, psi[k], psi[k + 1], 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price::{
        Innovation, LinearMap, PricePair, SeasonalMap, StageDistribution, WeightedSample,
    };
    use approx::assert_abs_diff_eq;

    fn pm(v: f64) -> Innovation {
        Innovation::PointMass { value: v }
    }

    fn pm_stage(e: f64, r: f64) -> StageDistribution {
        StageDistribution::Independent { energy: pm(e), reserve: pm(r) }
    }

    fn worked_instance() -> (LoadSpec, PriceModel) {
        // Two stages, effective prices 4 then 7, terminal penalty 10.
        let spec = LoadSpec { demand: 1.5, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 };
        let model = PriceModel::independent(vec![pm_stage(5.0, 1.0), pm_stage(7.0, 0.0)]);
        (spec, model)
    }

    #[test]
    fn worked_instance_rows() {
        let (spec, model) = worked_instance();
        let table = compile_independent(&spec, &model).unwrap();
        assert_eq!(table.row(2), &[10.0, 10.0]);
        assert_eq!(table.row(1), &[7.0, 10.0]);
        assert_eq!(table.row(0), &[4.0, 7.0]);
        table.validate(0.0).unwrap();
        table.validate_sandwich(0.0).unwrap();
    }

    #[test]
    fn worked_instance_value() {
        let (spec, model) = worked_instance();
        let table = compile_independent(&spec, &model).unwrap();
        assert_eq!(value_function(&table, 1.5), 7.5);
        assert_eq!(value_function(&table, 0.0), 0.0);
    }

    #[test]
    fn value_all_penalty_when_prices_too_high() {
        // Prices above the penalty at every stage: never worth consuming.
        let spec = LoadSpec { demand: 3.0, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 };
        let model = PriceModel::independent(vec![pm_stage(50.0, 0.0), pm_stage(60.0, 0.0)]);
        let table = compile_independent(&spec, &model).unwrap();
        let d = 3.0; // (T+1) * capacity
        assert_abs_diff_eq!(value_function(&table, d), d * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn terminal_row_is_penalty() {
        let (spec, model) = worked_instance();
        let table = compile_independent(&spec, &model).unwrap();
        assert!(table.row(spec.horizon).iter().all(|&m| m == 10.0));
    }

    #[test]
    fn table_constant_when_cdf_zero_below_thresholds() {
        // Prices always above every threshold: G vanishes and rows repeat.
        let spec = LoadSpec { demand: 1.0, capacity: 1.0, horizon: 3, shortfall_penalty: 5.0 };
        let model = PriceModel::independent(vec![pm_stage(9.0, 0.0); 3]);
        let table = compile_independent(&spec, &model).unwrap();
        for t in 0..3 {
            assert_eq!(table.row(t), table.row(3));
        }
    }

    #[test]
    fn rejects_seasonal_model() {
        let (spec, mut model) = worked_instance();
        model.seasonality = Some(vec![
            SeasonalMap {
                energy: LinearMap { intercept: 0.0, slope: 1.0 },
                reserve: LinearMap { intercept: 0.0, slope: 0.0 },
            };
            2
        ]);
        assert!(compile_independent(&spec, &model).is_err());
    }

    #[test]
    fn rejects_nonfinite_penalty() {
        let (mut spec, model) = worked_instance();
        spec.shortfall_penalty = f64::INFINITY;
        assert!(compile_independent(&spec, &model).is_err());
    }

    #[test]
    fn g_integral_point_mass_closed_form() {
        let dist = pm_stage(2.0, 0.0).effective_dist();
        assert_eq!(g_integral(&dist, Lower::At(1.0), 3.0).unwrap(), 1.0);
        assert_eq!(g_integral(&dist, Lower::At(3.0), 3.0).unwrap(), 0.0);
        assert_eq!(g_integral(&dist, Lower::NegInf, 5.0).unwrap(), 3.0);
    }

    #[test]
    fn g_integral_rejects_inverted_interval() {
        let dist = pm_stage(2.0, 0.0).effective_dist();
        assert!(g_integral(&dist, Lower::At(4.0), 3.0).is_err());
    }

    #[test]
    fn g_integral_empirical_step_area() {
        // atoms {1, 3} with equal weight: integral of F over [0, 4] is
        // 0*1 + 0.5*2 + 1*1 = 2
        let stage = StageDistribution::Independent {
            energy: Innovation::Empirical {
                samples: vec![
                    WeightedSample { value: 1.0, weight: 1.0 },
                    WeightedSample { value: 3.0, weight: 1.0 },
                ],
            },
            reserve: pm(0.0),
        };
        let dist = stage.effective_dist();
        assert_eq!(g_integral(&dist, Lower::At(0.0), 4.0).unwrap(), 2.0);
        let quad = numeric::integrate(|x| dist.cdf(x), 0.0, 4.0, 1e-11);
        assert_abs_diff_eq!(2.0, quad, epsilon = 1e-9);
    }

    #[test]
    fn g_integral_bounds() {
        let dist = StageDistribution::Independent {
            energy: Innovation::Gaussian { mean: 5.0, std_dev: 2.0 },
            reserve: pm(1.0),
        }
        .effective_dist();
        for (z, zp) in [(0.0, 1.0), (3.0, 8.0), (-10.0, 30.0)] {
            let g = g_integral(&dist, Lower::At(z), zp).unwrap();
            assert!(g >= 0.0 && g <= zp - z);
        }
    }

    proptest::proptest! {
        #[test]
        fn g_integral_bounded_and_monotone(
            values in proptest::collection::vec(-10.0f64..30.0, 1..6),
            z in -12.0f64..32.0,
            width in 0.0f64..20.0,
            shift in -3.0f64..5.0,
        ) {
            let stage = StageDistribution::Independent {
                energy: Innovation::Empirical {
                    samples: values
                        .iter()
                        .map(|&v| WeightedSample { value: v, weight: 1.0 })
                        .collect(),
                },
                reserve: pm(shift),
            };
            let dist = stage.effective_dist();
            let zp = z + width;
            let g = g_integral(&dist, Lower::At(z), zp).unwrap();
            proptest::prop_assert!(g >= 0.0 && g <= zp - z);
            // widening the interval on the right never shrinks the integral
            let g2 = g_integral(&dist, Lower::At(z), zp + 1.0).unwrap();
            proptest::prop_assert!(g2 >= g);
            // the unbounded-below integral dominates any finite lower bound
            let g3 = g_integral(&dist, Lower::NegInf, zp).unwrap();
            proptest::prop_assert!(g3 >= g - 1e-12);
        }
    }

    #[test]
    fn integration_by_parts_identity() {
        // The expectation route m'= m*P(above) + E[x; between] + lower*P(below)
        // must agree with the G-integral route.
        let stage = StageDistribution::Independent {
            energy: Innovation::Empirical {
                samples: vec![
                    WeightedSample { value: 2.0, weight: 1.0 },
                    WeightedSample { value: 5.0, weight: 2.0 },
                    WeightedSample { value: 9.0, weight: 1.0 },
                ],
            },
            reserve: pm(1.5),
        };
        let dist = stage.effective_dist();
        let (lo_hat, hi_hat) = (3.0, 7.0);
        let via_g = hi_hat - g_integral(&dist, Lower::At(lo_hat), hi_hat).unwrap();
        let atoms = stage.joint_atoms().unwrap();
        let mut direct = 0.0;
        for (e, r, p) in atoms {
            let a = e - r.max(0.0);
            direct += p * if a >= hi_hat {
                hi_hat
            } else if a >= lo_hat {
                a
            } else {
                lo_hat
            };
        }
        assert_abs_diff_eq!(via_g, direct, epsilon = 1e-12);
    }

    #[test]
    fn augment_matches_recompute() {
        let spec3 = LoadSpec { demand: 2.0, capacity: 1.0, horizon: 3, shortfall_penalty: 10.0 };
        let model3 = PriceModel::independent(vec![
            pm_stage(3.0, 0.5),
            pm_stage(5.0, 1.0),
            pm_stage(7.0, 0.0),
        ]);
        let spec2 = LoadSpec { horizon: 2, ..spec3 };
        let model2 = model3.window(1, 3).unwrap();

        let short = compile_independent(&spec2, &model2).unwrap();
        let full = compile_independent(&spec3, &model3).unwrap();
        let extended = augment_horizon(&short, &spec3, &model3).unwrap();

        assert_eq!(extended, full);
        // reused rows are bit-identical to the short table
        for t_old in 0..=2 {
            assert_eq!(&extended.row(t_old + 1)[..2], short.row(t_old));
        }
    }

    #[test]
    fn augment_matches_recompute_on_random_models() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..30 {
            let full_t = rng.gen_range(2..=8);
            let keep = rng.gen_range(1..full_t);
            let penalty = rng.gen_range(0..60) as f64 * 0.25;
            let stages: Vec<StageDistribution> = (0..full_t)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        pm_stage(rng.gen_range(-2.0..15.0), rng.gen_range(-2.0..4.0))
                    } else {
                        StageDistribution::Independent {
                            energy: Innovation::Empirical {
                                samples: (0..rng.gen_range(2..=4))
                                    .map(|_| WeightedSample {
                                        value: rng.gen_range(-2.0..15.0),
                                        weight: rng.gen_range(1..=4) as f64,
                                    })
                                    .collect(),
                            },
                            reserve: pm(rng.gen_range(-1.0..3.0)),
                        }
                    }
                })
                .collect();
            let full_model = PriceModel::independent(stages);
            let full_spec = LoadSpec {
                demand: 1.0,
                capacity: 1.0,
                horizon: full_t,
                shortfall_penalty: penalty,
            };
            let short_spec = LoadSpec { horizon: keep, ..full_spec };
            let short_model = full_model.window(full_t - keep, full_t).unwrap();
            let short = compile_independent(&short_spec, &short_model).unwrap();
            let extended = augment_horizon(&short, &full_spec, &full_model).unwrap();
            let scratch = compile_independent(&full_spec, &full_model).unwrap();
            assert_eq!(extended, scratch);
        }
    }

    #[test]
    fn augment_zero_extension_is_identity() {
        let (spec, model) = worked_instance();
        let table = compile_independent(&spec, &model).unwrap();
        let same = augment_horizon(&table, &spec, &model).unwrap();
        assert_eq!(same, table);
    }

    #[test]
    fn augment_rejects_capacity_mismatch() {
        let (spec, model) = worked_instance();
        let table = compile_independent(&spec, &model).unwrap();
        let bad = LoadSpec { capacity: 2.0, ..spec };
        assert!(augment_horizon(&table, &bad, &model).is_err());
    }

    #[test]
    fn correlated_degenerates_to_independent() {
        let spec = LoadSpec { demand: 2.0, capacity: 1.0, horizon: 3, shortfall_penalty: 12.0 };
        let model = PriceModel::independent(vec![
            StageDistribution::Independent {
                energy: Innovation::Empirical {
                    samples: vec![
                        WeightedSample { value: 2.0, weight: 1.0 },
                        WeightedSample { value: 6.0, weight: 1.0 },
                    ],
                },
                reserve: pm(1.0),
            },
            pm_stage(4.0, 0.0),
            pm_stage(8.0, 2.0),
        ]);
        let indep = compile_independent(&spec, &model).unwrap();
        let grid = GridConfig { lo: -5.0, hi: 20.0, delta: 1e-2 };
        let corr = compile_correlated(&spec, &model, &grid).unwrap();
        for t in 0..=3 {
            for i in 0..3 {
                assert_abs_diff_eq!(corr.thresholds.row(t)[i], indep.row(t)[i], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn correlated_terminal_row() {
        let spec = LoadSpec { demand: 1.0, capacity: 1.0, horizon: 2, shortfall_penalty: 9.0 };
        let model = PriceModel {
            stages: vec![pm_stage(0.0, 0.0); 2],
            seasonality: Some(vec![
                SeasonalMap {
                    energy: LinearMap { intercept: 0.0, slope: 1.0 },
                    reserve: LinearMap { intercept: 0.0, slope: 0.0 },
                };
                2
            ]),
            initial_state: PricePair::new(5.0, 0.0),
        };
        let grid = GridConfig { lo: 0.0, hi: 15.0, delta: 0.1 };
        let corr = compile_correlated(&spec, &model, &grid).unwrap();
        assert!(corr.thresholds.row(2).iter().all(|&m| m == 9.0));
        for &psi in corr.coefficients.nodes().iter().take(5) {
            assert_eq!(corr.coefficients.eval(2, 1, psi), 9.0);
        }
    }

    #[test]
    fn persistent_prices_coefficients() {
        // Identity seasonality with zero innovations: the coefficient of a
        // piece that can still be served is min(psi, penalty).
        let penalty = 10.0;
        let spec = LoadSpec { demand: 2.0, capacity: 1.0, horizon: 2, shortfall_penalty: penalty };
        let model = PriceModel {
            stages: vec![pm_stage(0.0, 0.0); 2],
            seasonality: Some(vec![
                SeasonalMap {
                    energy: LinearMap { intercept: 0.0, slope: 1.0 },
                    reserve: LinearMap { intercept: 0.0, slope: 0.0 },
                };
                2
            ]),
            initial_state: PricePair::new(4.0, 0.0),
        };
        let grid = GridConfig { lo: 0.0, hi: 15.0, delta: 0.05 };
        let corr = compile_correlated(&spec, &model, &grid).unwrap();
        for &psi in corr.coefficients.nodes() {
            // piece 1 can be served at either remaining stage
            assert_abs_diff_eq!(
                corr.coefficients.eval(0, 1, psi),
                psi.min(penalty),
                epsilon = 1e-9
            );
            // piece 2 needs both stages from t=0, only one from t=1
            assert_abs_diff_eq!(
                corr.coefficients.eval(0, 2, psi),
                psi.min(penalty),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(corr.coefficients.eval(1, 2, psi), penalty, epsilon = 1e-9);
        }
    }

    #[test]
    fn fixed_point_outside_grid_is_signaled() {
        let spec = LoadSpec { demand: 1.0, capacity: 1.0, horizon: 1, shortfall_penalty: 50.0 };
        let model = PriceModel::independent(vec![pm_stage(4.0, 0.0)]);
        // Grid that does not cover the threshold values.
        let grid = GridConfig { lo: 100.0, hi: 110.0, delta: 0.5 };
        let err = compile_correlated(&spec, &model, &grid).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn parallel_piece_loop_matches_serial_recursion() {
        // horizon past the dispatch threshold, checked bit for bit against a
        // straight serial evaluation of the same recursion
        let horizon = PAR_THRESHOLD + 50;
        let spec = LoadSpec { demand: 1.0, capacity: 1.0, horizon, shortfall_penalty: 70.0 };
        let stages: Vec<StageDistribution> =
            (0..horizon).map(|t| pm_stage(10.0 + (t % 37) as f64, (t % 5) as f64)).collect();
        let model = PriceModel::independent(stages);
        let table = compile_independent(&spec, &model).unwrap();

        let mut rows = vec![vec![70.0; horizon]; horizon + 1];
        for t in (0..horizon).rev() {
            let dist = model.effective_dist(t).unwrap();
            for i in 1..=horizon {
                let upper = rows[t + 1][i - 1];
                let lower = if i == 1 { Lower::NegInf } else { Lower::At(rows[t + 1][i - 2]) };
                rows[t][i - 1] = upper - dist.integrated_cdf(lower, upper);
            }
        }
        for t in 0..=horizon {
            assert_eq!(table.row(t), &rows[t][..]);
        }
    }

    #[test]
    fn value_function_convex_on_random_tables() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let horizon = rng.gen_range(1..=6);
            let spec = LoadSpec {
                demand: 1.0,
                capacity: 1.0,
                horizon,
                shortfall_penalty: rng.gen_range(5.0..20.0),
            };
            let stages = (0..horizon)
                .map(|_| pm_stage(rng.gen_range(-2.0..15.0), rng.gen_range(-2.0..4.0)))
                .collect();
            let model = PriceModel::independent(stages);
            let table = compile_independent(&spec, &model).unwrap();
            let pl = table.piecewise_value(0);
            assert!(pl.is_convex(1e-12));
            // midpoint convexity on random triples
            for _ in 0..20 {
                let a = rng.gen_range(0.0..(horizon as f64 + 1.0));
                let b = rng.gen_range(0.0..(horizon as f64 + 1.0));
                let mid = 0.5 * (a + b);
                assert!(pl.eval(mid) <= 0.5 * (pl.eval(a) + pl.eval(b)) + 1e-9);
            }
        }
    }
}

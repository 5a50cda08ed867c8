//! Brute-force finite-horizon DP over discretized demand/action lattices.
//! The ground truth for equivalence testing: it evaluates the same objective
//! by exhaustive expectation and full action search, independent of the
//! threshold recursion it validates. The true optimum always lies in
//! `{0, d - i*cap, cap}`, but the oracle deliberately searches the whole
//! action lattice so it cannot inherit a structural bug from the policy it
//! checks.

use rand::Rng;

use crate::policy::{optimal_decision, LoadState};
use crate::price::PricePair;
use crate::thresholds::{LoadSpec, ThresholdTable};
use crate::{Error, Result};

/// Q-value tie tolerance for membership in the minimizing set.
pub const TIE_TOL: f64 = 1e-9;

/// A fully discrete instance: per-stage price atoms and lattice resolutions
/// expressed as fractions of the slot capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub spec: LoadSpec,
    /// `atoms[t]` lists `(prices, probability)` for stage `t`.
    pub atoms: Vec<Vec<(PricePair, f64)>>,
    /// Demand lattice step as a fraction of capacity.
    pub demand_step_frac: f64,
    /// Action lattice step as a fraction of capacity; must be a multiple of
    /// the demand step so the dynamics stay on-lattice.
    pub action_step_frac: f64,
    /// Cap on enumerated `(t, d, atom, e, r)` tuples.
    pub budget: usize,
}

impl DiscreteInstance {
    pub const DEFAULT_BUDGET: usize = 10_000_000;

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.atoms.len() != self.spec.horizon {
            return Err(Error::invalid("one atom list per stage required"));
        }
        for stage in &self.atoms {
            if stage.is_empty() {
                return Err(Error::invalid("every stage needs at least one price atom"));
            }
            let total: f64 = stage.iter().map(|a| a.1).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "stage probabilities must sum to 1 (got {total})"
                )));
            }
            if stage.iter().any(|a| !a.0.is_finite() || a.1 < 0.0) {
                return Err(Error::invalid("atoms need finite prices and nonnegative mass"));
            }
        }
        if !(self.demand_step_frac > 0.0) || !(self.action_step_frac > 0.0) {
            return Err(Error::invalid("lattice steps must be positive"));
        }
        let ratio = self.action_step_frac / self.demand_step_frac;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::invalid(
                "action step must be an integer multiple of the demand step",
            ));
        }
        let per_cap = 1.0 / self.demand_step_frac;
        if (per_cap - per_cap.round()).abs() > 1e-9 {
            return Err(Error::invalid("capacity must sit on the demand lattice"));
        }
        Ok(())
    }

    fn demand_step(&self) -> f64 {
        self.demand_step_frac * self.spec.capacity
    }

    /// Number of demand lattice points `0..=n`.
    fn demand_points(&self) -> usize {
        (self.spec.demand / self.demand_step()).round() as usize + 1
    }

    fn action_ratio(&self) -> usize {
        (self.action_step_frac / self.demand_step_frac).round() as usize
    }

    /// Lattice indices of feasible consumption actions at demand index `di`.
    fn action_indices(&self, di: usize) -> impl Iterator<Item = usize> + '_ {
        let steps_per_cap = (1.0 / self.demand_step_frac).round() as usize;
        let max_e = di.min(steps_per_cap);
        let ratio = self.action_ratio();
        (0..=max_e).filter(move |e| e % ratio == 0)
    }

    fn tuple_count(&self) -> usize {
        let nd = self.demand_points();
        let per_stage: usize = self
            .atoms
            .iter()
            .map(|stage| {
                stage.len()
                    * (0..nd)
                        .map(|di| {
                            let ne = self.action_indices(di).count();
                            // r search over the same lattice within [0, e]
                            ne * (ne + 1) / 2
                        })
                        .sum::<usize>()
            })
            .sum();
        per_stage
    }
}

/// Solved instance: exact expected values on the lattice plus, per
/// `(t, d, atom)`, the Q-minimizing action set with ties kept.
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub instance: DiscreteInstance,
    /// `values[t][di]` for `t in 0..=T`.
    pub values: Vec<Vec<f64>>,
    /// `minimizers[t][di][atom]` lists `(e, r)` pairs attaining the minimum.
    pub minimizers: Vec<Vec<Vec<Vec<(f64, f64)>>>>,
}

/// Exhaustive backward induction over the demand lattice.
pub fn solve_dp(inst: &DiscreteInstance) -> Result<DpSolution> {
    inst.validate()?;
    if inst.tuple_count() > inst.budget {
        return Err(Error::invalid(format!(
            "instance exceeds the enumeration budget ({} > {})",
            inst.tuple_count(),
            inst.budget
        )));
    }
    let horizon = inst.spec.horizon;
    let nd = inst.demand_points();
    let step = inst.demand_step();

    let mut values = vec![vec![0.0; nd]; horizon + 1];
    for di in 0..nd {
        values[horizon][di] = inst.spec.shortfall_penalty * (di as f64 * step);
    }
    let mut minimizers = vec![vec![Vec::new(); nd]; horizon + 1];

    for t in (0..horizon).rev() {
        for di in 0..nd {
            let mut expected = 0.0;
            let mut atom_mins = Vec::with_capacity(inst.atoms[t].len());
            for &(prices, prob) in &inst.atoms[t] {
                let mut best = f64::INFINITY;
                let mut best_actions: Vec<(f64, f64)> = Vec::new();
                for ei in inst.action_indices(di) {
                    let e = ei as f64 * step;
                    let next = values[t + 1][di - ei];
                    for ri in inst.action_indices(ei.min(di)).filter(|&ri| ri <= ei) {
                        let r = ri as f64 * step;
                        let q = prices.energy * e - prices.reserve * r + next;
                        if q < best - TIE_TOL {
                            best = q;
                            best_actions.clear();
                            best_actions.push((e, r));
                        } else if q <= best + TIE_TOL {
                            if q < best {
                                best = q;
                            }
                            best_actions.push((e, r));
                        }
                    }
                }
                expected += prob * best;
                atom_mins.push(best_actions);
            }
            values[t][di] = expected;
            minimizers[t][di] = atom_mins;
        }
    }
    Ok(DpSolution { instance: inst.clone(), values, minimizers })
}

impl DpSolution {
    pub fn demand_step(&self) -> f64 {
        self.instance.demand_step()
    }

    /// Bellman Q-value of an arbitrary (not necessarily lattice) action.
    pub fn q_value(&self, t: usize, d: f64, prices: &PricePair, e: f64, r: f64) -> f64 {
        let step = self.demand_step();
        let next_di = ((d - e) / step).round() as usize;
        prices.energy * e - prices.reserve * r + self.values[t + 1][next_di]
    }

    /// Minimum Q-value at `(t, d, prices-atom)`.
    pub fn min_q(&self, t: usize, di: usize, atom: usize) -> f64 {
        let d = di as f64 * self.demand_step();
        let prices = self.instance.atoms[t][atom].0;
        let (e, r) = self.minimizers[t][di][atom][0];
        self.q_value(t, d, &prices, e, r)
    }
}

/// Outcome of checking a compiled table against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Max deviation between the table's value function and the DP value over
    /// the demand lattice.
    pub max_value_dev: f64,
    /// Number of `(t, d, atom)` decision points checked.
    pub action_checks: usize,
    /// Decision points where the policy action missed the minimizing set.
    pub action_misses: usize,
}

impl CompareReport {
    pub fn passes(&self, value_tol: f64) -> bool {
        self.max_value_dev < value_tol && self.action_misses == 0
    }
}

/// Compare a compiled threshold table against the oracle: value agreement on
/// the demand lattice and membership of every policy action in the DP
/// minimizing set (Q-value within `TIE_TOL` of the minimum).
pub fn compare(solution: &DpSolution, table: &ThresholdTable) -> Result<CompareReport> {
    let inst = &solution.instance;
    let nd = inst.demand_points();
    let step = solution.demand_step();

    let mut max_dev = 0.0f64;
    for di in 0..nd {
        let d = di as f64 * step;
        let dev = (solution.values[0][di] - table.value_at(d)).abs();
        max_dev = max_dev.max(dev);
    }

    let mut checks = 0;
    let mut misses = 0;
    for t in 0..inst.spec.horizon {
        for di in 0..nd {
            let d = di as f64 * step;
            for (k, &(prices, _)) in inst.atoms[t].iter().enumerate() {
                let state = LoadState { remaining_demand: d, stage: t };
                let dec = optimal_decision(table, &state, &prices)?;
                let q = solution.q_value(t, d, &prices, dec.consume, dec.reserve_offer);
                checks += 1;
                if q > solution.min_q(t, di, k) + TIE_TOL {
                    misses += 1;
                }
            }
        }
    }
    Ok(CompareReport { max_value_dev: max_dev, action_checks: checks, action_misses: misses })
}

/// Random discrete instance on a dyadic lattice: up to `max_horizon` stages,
/// at most 5 atoms per stage, demand on the quarter-capacity grid. Prices mix
/// positive, zero and negative reserve values.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_horizon: usize) -> DiscreteInstance {
    let horizon = rng.gen_range(1..=max_horizon.max(1));
    let capacity = 1.0;
    let lattice = |rng: &mut R, lo: i32, hi: i32| rng.gen_range(lo..=hi) as f64 * 0.25;
    let atoms = (0..horizon)
        .map(|_| {
            let n = rng.gen_range(1..=5);
            let weights: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=8)).collect();
            let total: u32 = weights.iter().sum();
            weights
                .iter()
                .map(|&w| {
                    let energy = lattice(rng, -8, 60);
                    let reserve = lattice(rng, -8, 16);
                    (PricePair::new(energy, reserve), w as f64 / total as f64)
                })
                .collect()
        })
        .collect();
    let demand = rng.gen_range(0..=(4 * (horizon + 1))) as f64 * 0.25 * capacity;
    DiscreteInstance {
        spec: LoadSpec { demand, capacity, horizon, shortfall_penalty: lattice(rng, 0, 80) },
        atoms,
        demand_step_frac: 0.25,
        action_step_frac: 0.25,
        budget: DiscreteInstance::DEFAULT_BUDGET,
    }
}

/// Build the price model whose effective-price distribution matches the
/// instance atoms, for compiling the table under test.
pub fn instance_model(inst: &DiscreteInstance) -> crate::price::PriceModel {
    use crate::price::{JointSample, StageDistribution};
    let stages = inst
        .atoms
        .iter()
        .map(|stage| StageDistribution::JointEmpirical {
            joint: stage
                .iter()
                .map(|&(p, w)| JointSample { eps_e: p.energy, eps_r: p.reserve, weight: w })
                .collect(),
        })
        .collect();
    crate::price::PriceModel::independent(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholds::compile_independent;
    use approx::assert_abs_diff_eq;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pm_atoms(pairs: &[(f64, f64)]) -> Vec<Vec<(PricePair, f64)>> {
        pairs.iter().map(|&(e, r)| vec![(PricePair::new(e, r), 1.0)]).collect()
    }

    fn worked_instance() -> DiscreteInstance {
        DiscreteInstance {
            spec: LoadSpec { demand: 1.5, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 },
            atoms: pm_atoms(&[(5.0, 1.0), (7.0, 0.0)]),
            demand_step_frac: 0.25,
            action_step_frac: 0.25,
            budget: DiscreteInstance::DEFAULT_BUDGET,
        }
    }

    #[test]
    fn worked_instance_value() {
        let sol = solve_dp(&worked_instance()).unwrap();
        let di = (1.5 / sol.demand_step()).round() as usize;
        assert_abs_diff_eq!(sol.values[0][di], 7.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_demand_is_free() {
        let sol = solve_dp(&worked_instance()).unwrap();
        for t in 0..=2 {
            assert_eq!(sol.values[t][0], 0.0);
        }
    }

    #[test]
    fn single_stage_two_action_comparison() {
        // one stage, point-mass effective price below the penalty
        let inst = DiscreteInstance {
            spec: LoadSpec { demand: 0.75, capacity: 1.0, horizon: 1, shortfall_penalty: 10.0 },
            atoms: pm_atoms(&[(4.0, 1.0)]),
            demand_step_frac: 0.25,
            action_step_frac: 0.25,
            budget: DiscreteInstance::DEFAULT_BUDGET,
        };
        let sol = solve_dp(&inst).unwrap();
        let di = 3;
        // effective price 3 < 10, so V = 3 * 0.75
        assert_abs_diff_eq!(sol.values[0][di], 3.0 * 0.75, epsilon = 1e-12);
        // and in general V = min(effective, penalty) * d for d <= capacity
        let expensive = DiscreteInstance { atoms: pm_atoms(&[(40.0, 10.0)]), ..inst.clone() };
        let sol2 = solve_dp(&expensive).unwrap();
        assert_abs_diff_eq!(sol2.values[0][di], 10.0 * 0.75, epsilon = 1e-12);
    }

    #[test]
    fn compare_worked_instance_is_exact() {
        let inst = worked_instance();
        let sol = solve_dp(&inst).unwrap();
        let spec = inst.spec;
        let table = compile_independent(&spec, &instance_model(&inst)).unwrap();
        let report = compare(&sol, &table).unwrap();
        assert_eq!(report.max_value_dev, 0.0);
        assert_eq!(report.action_misses, 0);
    }

    #[test]
    fn tie_price_action_is_among_minimizers() {
        // stage price exactly equal to the continuation threshold
        let inst = DiscreteInstance {
            spec: LoadSpec { demand: 1.0, capacity: 1.0, horizon: 2, shortfall_penalty: 10.0 },
            atoms: pm_atoms(&[(7.0, 0.0), (7.0, 0.0)]),
            demand_step_frac: 0.25,
            action_step_frac: 0.25,
            budget: DiscreteInstance::DEFAULT_BUDGET,
        };
        let sol = solve_dp(&inst).unwrap();
        let table = compile_independent(&inst.spec, &instance_model(&inst)).unwrap();
        // at t=0 the effective price 7 ties the continuation threshold 7
        assert_eq!(table.row(1)[0], 7.0);
        let report = compare(&sol, &table).unwrap();
        assert_eq!(report.action_misses, 0);
    }

    #[test]
    fn oracle_values_convex_and_piecewise_linear() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut inst = random_instance(&mut rng, 4);
            inst.spec.demand = (inst.spec.horizon as f64 + 1.0) * inst.spec.capacity;
            let sol = solve_dp(&inst).unwrap();
            let step = sol.demand_step();
            let per_cap = (inst.spec.capacity / step).round() as usize;
            for t in 0..=inst.spec.horizon {
                let v = &sol.values[t];
                for di in 1..v.len() - 1 {
                    let second = v[di + 1] - 2.0 * v[di] + v[di - 1];
                    assert!(second >= -1e-9, "convexity violated at t={t}, di={di}");
                    // interior of a piece: second difference vanishes
                    if di % per_cap != 0 {
                        assert!(
                            second.abs() < 1e-9,
                            "slope changed off the capacity lattice at t={t}, di={di}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn extra_stage_never_hurts() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 4);
            let sol = solve_dp(&inst).unwrap();
            let mut extended = inst.clone();
            extended.spec.horizon += 1;
            let extra = random_instance(&mut rng, 1).atoms.pop().unwrap();
            extended.atoms.insert(0, extra);
            let sol_ext = solve_dp(&extended).unwrap();
            for di in 0..sol.values[0].len() {
                assert!(sol_ext.values[0][di] <= sol.values[0][di] + 1e-9);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut inst = worked_instance();
        inst.budget = 3;
        assert!(solve_dp(&inst).is_err());
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let mut inst = worked_instance();
        inst.atoms[0][0].1 = 0.5;
        assert!(solve_dp(&inst).is_err());
    }
}

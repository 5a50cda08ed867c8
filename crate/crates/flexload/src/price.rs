//! Stochastic price process: per-stage innovation distributions for energy and
//! reserve prices, optional seasonality/correlation state, path sampling, and
//! the derived distribution of the effective price `pi_e - max(pi_r, 0)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::numeric::{self, QUAD_TOL};
use crate::{Error, Result};

/// Energy price and reserve (capacity) price for one market interval.
/// Reserve prices may be negative; the policy only ever sees `max(reserve, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    pub energy: f64,
    pub reserve: f64,
}

impl PricePair {
    pub fn new(energy: f64, reserve: f64) -> Self {
        Self { energy, reserve }
    }

    /// Effective price: energy price minus the positive part of the reserve
    /// price. The single scalar the threshold policy compares against.
    pub fn effective(&self) -> f64 {
        self.energy - self.reserve.max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.energy.is_finite() && self.reserve.is_finite()
    }
}

/// Effective price of a pair.
pub fn effective_price(p: PricePair) -> f64 {
    p.effective()
}

/// A weighted sample of an empirical distribution. Weights need not sum to
/// one; they are normalized internally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub value: f64,
    pub weight: f64,
}

/// A breakpoint of a tabulated CDF: `P[X <= x] = p`, linearly interpolated
/// between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub p: f64,
}

/// Marginal distribution of one price-innovation coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    /// Deterministic value.
    PointMass { value: f64 },
    /// Normal with the given mean and standard deviation.
    Gaussian { mean: f64, std_dev: f64 },
    /// Finite weighted sample list.
    Empirical { samples: Vec<WeightedSample> },
    /// Continuous distribution given by CDF breakpoints, linear in between.
    /// The first breakpoint must have `p = 0` and the last `p = 1`.
    TabulatedCdf { points: Vec<CdfPoint> },
}

impl Innovation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Innovation::PointMass { value } => {
                if !value.is_finite() {
                    return Err(Error::invalid("point-mass value must be finite"));
                }
            }
            Innovation::Gaussian { mean, std_dev } => {
                if !mean.is_finite() || !std_dev.is_finite() || *std_dev <= 0.0 {
                    return Err(Error::invalid(
                        "gaussian innovation needs finite mean and std_dev > 0",
                    ));
                }
            }
            Innovation::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(Error::invalid("empirical innovation needs samples"));
                }
                for s in samples {
                    if !s.value.is_finite() || !s.weight.is_finite() || s.weight <= 0.0 {
                        return Err(Error::invalid(
                            "empirical samples need finite values and positive weights",
                        ));
                    }
                }
            }
            Innovation::TabulatedCdf { points } => {
                if points.len() < 2 {
                    return Err(Error::invalid("tabulated CDF needs at least two points"));
                }
                if points[0].p != 0.0 || points[points.len() - 1].p != 1.0 {
                    return Err(Error::invalid("tabulated CDF must start at p=0 and end at p=1"));
                }
                for w in points.windows(2) {
                    if !(w[1].x > w[0].x) || w[1].p < w[0].p {
                        return Err(Error::invalid(
                            "tabulated CDF breakpoints must be strictly increasing in x and nondecreasing in p",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// CDF `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Innovation::PointMass { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Innovation::Gaussian { mean, std_dev } => numeric::normal_cdf((x - mean) / std_dev),
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                samples.iter().filter(|s| s.value <= x).map(|s| s.weight).sum::<f64>() / total
            }
            Innovation::TabulatedCdf { points } => {
                if x <= points[0].x {
                    return 0.0;
                }
                if x >= points[points.len() - 1].x {
                    return 1.0;
                }
                let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
                let ps: Vec<f64> = points.iter().map(|p| p.p).collect();
                numeric::interp_clamped(&xs, &ps, x)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Innovation::PointMass { value } => *value,
            Innovation::Gaussian { mean, .. } => *mean,
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                samples.iter().map(|s| s.weight * s.value).sum::<f64>() / total
            }
            // Piecewise-linear CDF: each segment carries mass `dp` uniformly,
            // contributing its midpoint to the mean.
            Innovation::TabulatedCdf { points } => {
                points.windows(2).map(|w| (w[1].p - w[0].p) * 0.5 * (w[0].x + w[1].x)).sum()
            }
        }
    }

    /// `E[(a - X)^+]`, the integrated CDF up to `a`. Closed form per kind.
    pub fn ramp(&self, a: f64) -> f64 {
        match self {
            Innovation::PointMass { value } => (a - value).max(0.0),
            Innovation::Gaussian { mean, std_dev } => {
                let z = (a - mean) / std_dev;
                (a - mean) * numeric::normal_cdf(z) + std_dev * numeric::normal_pdf(z)
            }
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                samples.iter().map(|s| s.weight * (a - s.value).max(0.0)).sum::<f64>() / total
            }
            Innovation::TabulatedCdf { points } => {
                // integral of the piecewise-linear CDF from the left support end
                let mut acc = 0.0;
                for w in points.windows(2) {
                    if a <= w[0].x {
                        break;
                    }
                    let hi = a.min(w[1].x);
                    let f_hi = if hi >= w[1].x {
                        w[1].p
                    } else {
                        w[0].p + (w[1].p - w[0].p) * (hi - w[0].x) / (w[1].x - w[0].x)
                    };
                    acc += 0.5 * (w[0].p + f_hi) * (hi - w[0].x);
                }
                let last = points[points.len() - 1].x;
                if a > last {
                    acc += a - last;
                }
                acc
            }
        }
    }

    /// Finite interval outside which the distribution carries (numerically)
    /// no mass. Used for quadrature ranges and grid suggestions.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Innovation::PointMass { value } => (*value, *value),
            Innovation::Gaussian { mean, std_dev } => {
                (mean - 10.0 * std_dev, mean + 10.0 * std_dev)
            }
            Innovation::Empirical { samples } => {
                let lo = samples.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
                let hi = samples.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Innovation::TabulatedCdf { points } => (points[0].x, points[points.len() - 1].x),
        }
    }

    /// Atom list `(value, probability)` for discrete kinds.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Innovation::PointMass { value } => Some(vec![(*value, 1.0)]),
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                Some(samples.iter().map(|s| (s.value, s.weight / total)).collect())
            }
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Innovation::PointMass { .. } | Innovation::Empirical { .. })
    }

    /// `E[f(X)]`: exact summation for discrete kinds, adaptive quadrature
    /// against the density otherwise.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        match self {
            Innovation::PointMass { value } => f(*value),
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                samples.iter().map(|s| s.weight * f(s.value)).sum::<f64>() / total
            }
            Innovation::Gaussian { mean, std_dev } => {
                let (lo, hi) = self.support();
                numeric::integrate(
                    |x| f(x) * numeric::normal_pdf((x - mean) / std_dev) / std_dev,
                    lo,
                    hi,
                    tol,
                )
            }
            Innovation::TabulatedCdf { points } => {
                let segs = points.len() - 1;
                let mut acc = 0.0;
                for w in points.windows(2) {
                    let density = (w[1].p - w[0].p) / (w[1].x - w[0].x);
                    if density > 0.0 {
                        acc += numeric::integrate(
                            |x| f(x) * density,
                            w[0].x,
                            w[1].x,
                            tol / segs as f64,
                        );
                    }
                }
                acc
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Innovation::PointMass { value } => *value,
            Innovation::Gaussian { mean, std_dev } => {
                rand_distr::Normal::new(*mean, *std_dev).unwrap().sample(rng)
            }
            Innovation::Empirical { samples } => {
                let total: f64 = samples.iter().map(|s| s.weight).sum();
                let mut u = rng.gen::<f64>() * total;
                for s in samples {
                    u -= s.weight;
                    if u <= 0.0 {
                        return s.value;
                    }
                }
                samples[samples.len() - 1].value
            }
            Innovation::TabulatedCdf { points } => {
                // inverse-CDF sampling on the piecewise-linear table
                let u = rng.gen::<f64>();
                let hi = points.partition_point(|p| p.p < u).min(points.len() - 1).max(1);
                let lo = hi - 1;
                let dp = points[hi].p - points[lo].p;
                if dp <= 0.0 {
                    points[hi].x
                } else {
                    points[lo].x + (points[hi].x - points[lo].x) * (u - points[lo].p) / dp
                }
            }
        }
    }
}

/// One joint sample of the per-stage innovation pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub eps_e: f64,
    pub eps_r: f64,
    pub weight: f64,
}

/// Joint distribution of the innovation pair `(eps_e, eps_r)` for one stage.
/// The default is independent coordinates; a joint sample list allows
/// arbitrary within-stage correlation between energy and reserve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageDistribution {
    Independent { energy: Innovation, reserve: Innovation },
    JointEmpirical { joint: Vec<JointSample> },
}

impl StageDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            StageDistribution::Independent { energy, reserve } => {
                energy.validate()?;
                reserve.validate()
            }
            StageDistribution::JointEmpirical { joint } => {
                if joint.is_empty() {
                    return Err(Error::invalid("joint empirical stage needs samples"));
                }
                for s in joint {
                    if !s.eps_e.is_finite() || !s.eps_r.is_finite() || !(s.weight > 0.0) {
                        return Err(Error::invalid(
                            "joint samples need finite values and positive weights",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Mean of `(eps_e, eps_r)`.
    pub fn mean_pair(&self) -> (f64, f64) {
        match self {
            StageDistribution::Independent { energy, reserve } => (energy.mean(), reserve.mean()),
            StageDistribution::JointEmpirical { joint } => {
                let total: f64 = joint.iter().map(|s| s.weight).sum();
                let me = joint.iter().map(|s| s.weight * s.eps_e).sum::<f64>() / total;
                let mr = joint.iter().map(|s| s.weight * s.eps_r).sum::<f64>() / total;
                (me, mr)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            StageDistribution::Independent { energy, reserve } => {
                (energy.sample(rng), reserve.sample(rng))
            }
            StageDistribution::JointEmpirical { joint } => {
                let total: f64 = joint.iter().map(|s| s.weight).sum();
                let mut u = rng.gen::<f64>() * total;
                for s in joint {
                    u -= s.weight;
                    if u <= 0.0 {
                        return (s.eps_e, s.eps_r);
                    }
                }
                let last = &joint[joint.len() - 1];
                (last.eps_e, last.eps_r)
            }
        }
    }

    /// Joint atom list `(eps_e, eps_r, probability)` when fully discrete.
    pub fn joint_atoms(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            StageDistribution::Independent { energy, reserve } => {
                let ea = energy.atoms()?;
                let ra = reserve.atoms()?;
                let mut out = Vec::with_capacity(ea.len() * ra.len());
                for &(ev, ep) in &ea {
                    for &(rv, rp) in &ra {
                        out.push((ev, rv, ep * rp));
                    }
                }
                Some(out)
            }
            StageDistribution::JointEmpirical { joint } => {
                let total: f64 = joint.iter().map(|s| s.weight).sum();
                Some(joint.iter().map(|s| (s.eps_e, s.eps_r, s.weight / total)).collect())
            }
        }
    }

    /// `E[f(eps_e, eps_r)]`; exact for discrete coordinates, quadrature for
    /// continuous ones (nested when both coordinates are continuous).
    pub fn expect_pair<F: Fn(f64, f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        if let Some(atoms) = self.joint_atoms() {
            return atoms.iter().map(|&(e, r, p)| p * f(e, r)).sum();
        }
        match self {
            StageDistribution::Independent { energy, reserve } => {
                if let Some(ra) = reserve.atoms() {
                    ra.iter().map(|&(rv, rp)| rp * energy.expect(|e| f(e, rv), tol)).sum()
                } else if let Some(ea) = energy.atoms() {
                    ea.iter().map(|&(ev, ep)| ep * reserve.expect(|r| f(ev, r), tol)).sum()
                } else {
                    reserve.expect(|r| energy.expect(|e| f(e, r), tol), tol)
                }
            }
            StageDistribution::JointEmpirical { .. } => unreachable!("joint stages are discrete"),
        }
    }

    /// Distribution of the effective innovation `eps_e - max(eps_r, 0)`,
    /// always derived from the joint rule.
    pub fn effective_dist(&self) -> EffectiveDist {
        match self {
            StageDistribution::Independent { energy, reserve } => {
                if let Some(ra) = reserve.atoms() {
                    if let Some(ea) = energy.atoms() {
                        let mut atoms = Vec::with_capacity(ea.len() * ra.len());
                        for &(ev, ep) in &ea {
                            for &(rv, rp) in &ra {
                                atoms.push((ev - rv.max(0.0), ep * rp));
                            }
                        }
                        EffectiveDist::from_atoms(atoms)
                    } else {
                        let shifts = ra.iter().map(|&(rv, rp)| (rv.max(0.0), rp)).collect();
                        EffectiveDist::Mixture { energy: energy.clone(), shifts }
                    }
                } else {
                    EffectiveDist::ReserveSmooth {
                        energy: energy.clone(),
                        reserve: reserve.clone(),
                    }
                }
            }
            StageDistribution::JointEmpirical { joint } => {
                let total: f64 = joint.iter().map(|s| s.weight).sum();
                EffectiveDist::from_atoms(
                    joint.iter().map(|s| (s.eps_e - s.eps_r.max(0.0), s.weight / total)).collect(),
                )
            }
        }
    }

    /// True if the reserve innovation is nonnegative almost surely.
    pub fn reserve_nonnegative(&self) -> bool {
        match self {
            StageDistribution::Independent { reserve, .. } => reserve.support().0 >= 0.0,
            StageDistribution::JointEmpirical { joint } => joint.iter().all(|s| s.eps_r >= 0.0),
        }
    }
}

/// Lower endpoint of an integration or comparison range; the `-inf` sentinel
/// threshold is carried symbolically, never as a float in arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lower {
    NegInf,
    At(f64),
}

/// Sorted weighted atoms with cumulative tables for O(log n) CDF and ramp
/// queries.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDist {
    values: Vec<f64>,
    probs: Vec<f64>,
    cum_prob: Vec<f64>,
    cum_weighted: Vec<f64>,
}

impl AtomDist {
    fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let values: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let probs: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let mut cum_prob = Vec::with_capacity(values.len());
        let mut cum_weighted = Vec::with_capacity(values.len());
        let (mut cp, mut cw) = (0.0, 0.0);
        for (v, p) in values.iter().zip(&probs) {
            cp += p;
            cw += p * v;
            cum_prob.push(cp);
            cum_weighted.push(cw);
        }
        Self { values, probs, cum_prob, cum_weighted }
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.cum_prob[k - 1]
        }
    }

    /// `E[(a - X)^+]` via the cumulative tables.
    pub fn ramp(&self, a: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= a);
        if k == 0 {
            0.0
        } else {
            self.cum_prob[k - 1] * a - self.cum_weighted[k - 1]
        }
    }

    /// Integral of the step CDF over `[z, zp]`: the sum of rectangles between
    /// consecutive atoms intersected with the interval.
    fn step_area(&self, z: Lower, zp: f64) -> f64 {
        let start = match z {
            // The CDF is 0 below the smallest atom, so nothing accumulates
            // below the support.
            Lower::NegInf => self.values[0],
            Lower::At(v) => v,
        };
        if zp <= start {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut pos = start;
        let mut k = self.values.partition_point(|&v| v <= pos);
        while k < self.values.len() && self.values[k] < zp {
            let f = if k == 0 { 0.0 } else { self.cum_prob[k - 1] };
            acc += f * (self.values[k] - pos);
            pos = self.values[k];
            k += 1;
        }
        let f = if k == 0 { 0.0 } else { self.cum_prob[k - 1] };
        acc + f * (zp - pos)
    }
}

/// Distribution of the effective price `eps_e - max(eps_r, 0)`, in whichever
/// representation keeps its CDF and integrated CDF exact or cheaply
/// computable.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectiveDist {
    /// Fully discrete: exact step CDF.
    Atoms(AtomDist),
    /// Continuous energy innovation shifted by the discrete reserve's clipped
    /// atoms: `F(x) = sum_j w_j F_e(x + s_j)`.
    Mixture { energy: Innovation, shifts: Vec<(f64, f64)> },
    /// Continuous reserve marginal: CDF and integrals are expectations over
    /// the reserve, evaluated by adaptive quadrature.
    ReserveSmooth { energy: Innovation, reserve: Innovation },
}

impl EffectiveDist {
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Self {
        EffectiveDist::Atoms(AtomDist::new(atoms))
    }

    /// CDF of the effective price.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            EffectiveDist::Atoms(a) => a.cdf(x),
            EffectiveDist::Mixture { energy, shifts } => {
                shifts.iter().map(|&(s, w)| w * energy.cdf(x + s)).sum::<f64>().clamp(0.0, 1.0)
            }
            EffectiveDist::ReserveSmooth { energy, reserve } => {
                reserve.expect(|r| energy.cdf(x + r.max(0.0)), QUAD_TOL).clamp(0.0, 1.0)
            }
        }
    }

    /// `E[(a - X)^+]` of the effective price.
    pub fn ramp(&self, a: f64) -> f64 {
        match self {
            EffectiveDist::Atoms(at) => at.ramp(a),
            EffectiveDist::Mixture { energy, shifts } => {
                shifts.iter().map(|&(s, w)| w * energy.ramp(a + s)).sum()
            }
            EffectiveDist::ReserveSmooth { energy, reserve } => {
                reserve.expect(|r| energy.ramp(a + r.max(0.0)), QUAD_TOL)
            }
        }
    }

    /// Integral of the CDF over `[z, zp]`. For a point mass this is the
    /// closed form `(zp - max(z, atom))^+`; for general atoms it is the exact
    /// step-CDF area; continuous representations difference the integrated
    /// CDF (exact closed forms shifted by discrete reserve atoms, or
    /// quadrature over a continuous reserve marginal).
    pub fn integrated_cdf(&self, z: Lower, zp: f64) -> f64 {
        let upper = match z {
            Lower::NegInf => f64::INFINITY,
            Lower::At(v) => zp - v,
        };
        let raw = match self {
            EffectiveDist::Atoms(a) if a.values.len() == 1 => {
                let atom = a.values[0];
                match z {
                    Lower::NegInf => (zp - atom).max(0.0),
                    Lower::At(v) => (zp - v.max(atom)).max(0.0),
                }
            }
            EffectiveDist::Atoms(a) => a.step_area(z, zp),
            _ => match z {
                Lower::NegInf => self.ramp(zp),
                Lower::At(v) => self.ramp(zp) - self.ramp(v),
            },
        };
        raw.clamp(0.0, upper.max(0.0))
    }

    pub fn mean(&self) -> f64 {
        match self {
            EffectiveDist::Atoms(a) => a.atoms().map(|(v, p)| v * p).sum(),
            EffectiveDist::Mixture { energy, shifts } => {
                energy.mean() - shifts.iter().map(|&(s, w)| w * s).sum::<f64>()
            }
            EffectiveDist::ReserveSmooth { energy, reserve } => {
                energy.mean() - reserve.expect(|r| r.max(0.0), QUAD_TOL)
            }
        }
    }

    /// Finite interval carrying (numerically) all the mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            EffectiveDist::Atoms(a) => (a.values[0], a.values[a.values.len() - 1]),
            EffectiveDist::Mixture { energy, shifts } => {
                let (elo, ehi) = energy.support();
                let smin = shifts.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
                let smax = shifts.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
                (elo - smax, ehi - smin)
            }
            EffectiveDist::ReserveSmooth { energy, reserve } => {
                let (elo, ehi) = energy.support();
                let (_, rhi) = reserve.support();
                (elo - rhi.max(0.0), ehi)
            }
        }
    }
}

/// Affine map `psi -> intercept + slope * psi` with nonnegative slope, one
/// coordinate of the seasonality map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearMap {
    pub fn eval(&self, psi: f64) -> f64 {
        self.intercept + self.slope * psi
    }
}

/// Per-stage seasonality: maps the correlation state (previous effective
/// price) to the mean price pair. Must be monotone nondecreasing in each
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalMap {
    pub energy: LinearMap,
    pub reserve: LinearMap,
}

impl SeasonalMap {
    pub fn mean_pair(&self, psi: f64) -> PricePair {
        PricePair::new(self.energy.eval(psi), self.reserve.eval(psi))
    }
}

/// The full price process: per-stage innovation distributions, optional
/// seasonality (absent means independent prices), and the initial state.
/// Immutable after construction; sampling takes an explicit RNG or seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub stages: Vec<StageDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seasonality: Option<Vec<SeasonalMap>>,
    pub initial_state: PricePair,
}

impl PriceModel {
    /// Independent model (no seasonality) from per-stage distributions.
    pub fn independent(stages: Vec<StageDistribution>) -> Self {
        Self { stages, seasonality: None, initial_state: PricePair::new(0.0, 0.0) }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn is_independent(&self) -> bool {
        self.seasonality.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("price model needs at least one stage"));
        }
        for s in &self.stages {
            s.validate()?;
        }
        if let Some(maps) = &self.seasonality {
            if maps.len() != self.stages.len() {
                return Err(Error::invalid("seasonality must cover every stage"));
            }
            for m in maps {
                if m.energy.slope < 0.0 || m.reserve.slope < 0.0 {
                    return Err(Error::invalid("seasonality maps must be monotone nondecreasing"));
                }
                if !m.energy.intercept.is_finite()
                    || !m.energy.slope.is_finite()
                    || !m.reserve.intercept.is_finite()
                    || !m.reserve.slope.is_finite()
                {
                    return Err(Error::invalid("seasonality maps must be finite"));
                }
            }
        }
        if !self.initial_state.is_finite() {
            return Err(Error::invalid("initial price state must be finite"));
        }
        Ok(())
    }

    /// Distribution of the effective price at stage `t`. Only defined for
    /// independent models; correlated models go through the grid engine.
    pub fn effective_dist(&self, t: usize) -> Result<EffectiveDist> {
        if !self.is_independent() {
            return Err(Error::invalid(
                "effective-price distribution is only defined for independent models",
            ));
        }
        let stage =
            self.stages.get(t).ok_or_else(|| Error::invalid(format!("stage {t} out of range")))?;
        Ok(stage.effective_dist())
    }

    /// `F^a_t(x)`: CDF of the effective price at stage `t` of an independent
    /// model.
    pub fn effective_cdf(&self, t: usize, x: f64) -> Result<f64> {
        Ok(self.effective_dist(t)?.cdf(x))
    }

    /// Seasonality map at stage `t`; the zero map when absent.
    pub fn seasonal_map(&self, t: usize) -> SeasonalMap {
        match &self.seasonality {
            Some(maps) => maps[t],
            None => SeasonalMap {
                energy: LinearMap { intercept: 0.0, slope: 0.0 },
                reserve: LinearMap { intercept: 0.0, slope: 0.0 },
            },
        }
    }

    /// Sample one price path. The correlation state is the previous stage's
    /// effective price, seeded from `initial_state`.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PricePair> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut psi = self.initial_state.effective();
        for (t, stage) in self.stages.iter().enumerate() {
            let mean = self.seasonal_map(t).mean_pair(psi);
            let (ee, er) = stage.sample(rng);
            let pair = PricePair::new(mean.energy + ee, mean.reserve + er);
            psi = pair.effective();
            out.push(pair);
        }
        out
    }

    /// Deterministic path sampling from a seed.
    pub fn sample_path_seeded(&self, seed: u64) -> Vec<PricePair> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        self.sample_path(&mut rng)
    }

    /// Per-stage mean price pairs of an independent model.
    pub fn mean_pairs(&self) -> Vec<PricePair> {
        self.stages
            .iter()
            .map(|s| {
                let (e, r) = s.mean_pair();
                PricePair::new(e, r)
            })
            .collect()
    }

    /// Restriction to the stage window `[start, end)`, for sessions dwelling
    /// inside a longer market day. Independent models only.
    pub fn window(&self, start: usize, end: usize) -> Result<PriceModel> {
        if !self.is_independent() {
            return Err(Error::invalid("window extraction requires an independent model"));
        }
        if start > end || end > self.stages.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {end}) out of range for horizon {}",
                self.stages.len()
            )));
        }
        Ok(PriceModel::independent(self.stages[start..end].to_vec()))
    }

    /// Variant with the reserve price pinned to zero: the no-reserve-market
    /// model whose effective price equals the energy price.
    pub fn with_zero_reserve(&self) -> PriceModel {
        let stages = self
            .stages
            .iter()
            .map(|s| match s {
                StageDistribution::Independent { energy, .. } => StageDistribution::Independent {
                    energy: energy.clone(),
                    reserve: Innovation::PointMass { value: 0.0 },
                },
                StageDistribution::JointEmpirical { joint } => StageDistribution::JointEmpirical {
                    joint: joint
                        .iter()
                        .map(|j| JointSample { eps_e: j.eps_e, eps_r: 0.0, weight: j.weight })
                        .collect(),
                },
            })
            .collect();
        PriceModel {
            stages,
            seasonality: self.seasonality.clone(),
            initial_state: self.initial_state,
        }
    }

    /// Point-mass model at the per-stage mean energy prices with zero
    /// reserve: the deterministic equivalent used by the certainty-equivalent
    /// baseline.
    pub fn certainty_equivalent(&self) -> PriceModel {
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let (me, _) = s.mean_pair();
                StageDistribution::Independent {
                    energy: Innovation::PointMass { value: me },
                    reserve: Innovation::PointMass { value: 0.0 },
                }
            })
            .collect();
        PriceModel::independent(stages)
    }

    /// True if reserve prices are nonnegative almost surely (no seasonality
    /// pushing them negative and nonnegative innovation support).
    pub fn reserve_nonnegative(&self) -> bool {
        let seasonal_ok = match &self.seasonality {
            None => true,
            Some(maps) => maps.iter().all(|m| m.reserve.intercept >= 0.0 && m.reserve.slope == 0.0),
        };
        seasonal_ok && self.stages.iter().all(|s| s.reserve_nonnegative())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pm(v: f64) -> Innovation {
        Innovation::PointMass { value: v }
    }

    fn stage(e: Innovation, r: Innovation) -> StageDistribution {
        StageDistribution::Independent { energy: e, reserve: r }
    }

    #[test]
    fn effective_price_formula() {
        assert_eq!(PricePair::new(5.0, 1.0).effective(), 4.0);
        assert_eq!(PricePair::new(7.0, 0.0).effective(), 7.0);
        // negative reserve price is clipped by the positive part
        assert_eq!(PricePair::new(3.0, -2.0).effective(), 3.0);
    }

    #[test]
    fn effective_price_never_exceeds_energy() {
        for (e, r) in [(5.0, 1.0), (5.0, 0.0), (5.0, -3.0), (-2.0, 4.0)] {
            let p = PricePair::new(e, r);
            assert!(p.effective() <= p.energy);
            assert_eq!(p.effective() == p.energy, r <= 0.0);
        }
    }

    #[test]
    fn point_mass_effective_cdf() {
        let model = PriceModel::independent(vec![stage(pm(2.0), pm(0.0))]);
        assert_eq!(model.effective_cdf(0, 1.0).unwrap(), 0.0);
        // right-continuity at the atom
        assert_eq!(model.effective_cdf(0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn empirical_effective_cdf_is_weighted_fraction() {
        let e = Innovation::Empirical {
            samples: vec![
                WeightedSample { value: 1.0, weight: 1.0 },
                WeightedSample { value: 3.0, weight: 1.0 },
            ],
        };
        let model = PriceModel::independent(vec![stage(e, pm(0.0))]);
        assert_eq!(model.effective_cdf(0, 2.0).unwrap(), 0.5);
        assert_eq!(model.effective_cdf(0, 0.5).unwrap(), 0.0);
        assert_eq!(model.effective_cdf(0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn effective_cdf_rejects_correlated_models() {
        let mut model = PriceModel::independent(vec![stage(pm(2.0), pm(0.0))]);
        model.seasonality = Some(vec![SeasonalMap {
            energy: LinearMap { intercept: 0.0, slope: 1.0 },
            reserve: LinearMap { intercept: 0.0, slope: 0.0 },
        }]);
        assert!(model.effective_cdf(0, 1.0).is_err());
    }

    #[test]
    fn sample_path_point_mass_is_exact() {
        let model = PriceModel::independent(vec![stage(pm(5.0), pm(1.0)), stage(pm(7.0), pm(0.0))]);
        let path = model.sample_path_seeded(1);
        assert_eq!(path, vec![PricePair::new(5.0, 1.0), PricePair::new(7.0, 0.0)]);
    }

    #[test]
    fn sample_path_same_seed_identical() {
        let model = PriceModel::independent(vec![
            stage(Innovation::Gaussian { mean: 30.0, std_dev: 5.0 }, pm(8.0)),
            stage(Innovation::Gaussian { mean: 40.0, std_dev: 5.0 }, pm(8.0)),
        ]);
        assert_eq!(model.sample_path_seeded(42), model.sample_path_seeded(42));
    }

    #[test]
    fn sample_path_gaussian_mean_within_three_sigma() {
        let (mean, sd) = (30.0, 5.0);
        let model = PriceModel::independent(vec![stage(
            Innovation::Gaussian { mean, std_dev: sd },
            pm(0.0),
        )]);
        let n = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += model.sample_path(&mut rng)[0].energy;
        }
        let sample_mean = sum / n as f64;
        assert!((sample_mean - mean).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn correlated_sampling_follows_state() {
        // Fully persistent prices: identity seasonality on energy with zero
        // innovations keeps the effective price constant along the path.
        let maps = vec![
            SeasonalMap {
                energy: LinearMap { intercept: 0.0, slope: 1.0 },
                reserve: LinearMap { intercept: 0.0, slope: 0.0 },
            };
            3
        ];
        let model = PriceModel {
            stages: vec![stage(pm(0.0), pm(0.0)); 3],
            seasonality: Some(maps),
            initial_state: PricePair::new(6.5, 0.0),
        };
        let path = model.sample_path_seeded(0);
        for p in path {
            assert_eq!(p.effective(), 6.5);
        }
    }

    #[test]
    fn gaussian_ramp_matches_quadrature() {
        let g = Innovation::Gaussian { mean: 2.0, std_dev: 3.0 };
        for a in [-4.0, 0.0, 2.0, 5.5, 14.0] {
            let quad = crate::numeric::integrate(|x| g.cdf(x), -40.0, a, 1e-11);
            assert_abs_diff_eq!(g.ramp(a), quad, epsilon = 1e-8);
        }
    }

    #[test]
    fn tabulated_cdf_mean_and_ramp() {
        // Uniform on [0, 2]: mean 1, E[(2 - X)^+] = 1.
        let t = Innovation::TabulatedCdf {
            points: vec![CdfPoint { x: 0.0, p: 0.0 }, CdfPoint { x: 2.0, p: 1.0 }],
        };
        t.validate().unwrap();
        assert_abs_diff_eq!(t.mean(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.ramp(2.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.cdf(0.5), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn mixture_effective_dist_cdf() {
        // Gaussian energy, reserve atom at 2 (clipped shift 2) with prob 1.
        let stage = stage(Innovation::Gaussian { mean: 10.0, std_dev: 1.0 }, pm(2.0));
        let d = stage.effective_dist();
        // effective = energy - 2, so its CDF at 8 is the energy CDF at 10
        assert_abs_diff_eq!(d.cdf(8.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reserve_smooth_matches_discretized_reserve() {
        // Continuous reserve via quadrature against a fine empirical proxy.
        let energy = Innovation::Gaussian { mean: 10.0, std_dev: 2.0 };
        let reserve = Innovation::Gaussian { mean: 1.0, std_dev: 1.0 };
        let smooth = stage(energy.clone(), reserve.clone()).effective_dist();

        let n = 20_000;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let samples: Vec<WeightedSample> = (0..n)
            .map(|_| WeightedSample { value: reserve.sample(&mut rng), weight: 1.0 })
            .collect();
        let proxy = stage(energy, Innovation::Empirical { samples }).effective_dist();
        for x in [6.0, 8.0, 9.0, 10.0, 12.0] {
            assert_abs_diff_eq!(smooth.cdf(x), proxy.cdf(x), epsilon = 0.01);
        }
    }

    #[test]
    fn reserve_nonnegativity_gate() {
        let mk = |r: Innovation| PriceModel::independent(vec![stage(pm(5.0), r)]);
        assert!(mk(pm(0.0)).reserve_nonnegative());
        assert!(mk(pm(3.0)).reserve_nonnegative());
        assert!(!mk(pm(-0.5)).reserve_nonnegative());
        assert!(!mk(Innovation::Gaussian { mean: 5.0, std_dev: 1.0 }).reserve_nonnegative());
        assert!(mk(Innovation::Empirical {
            samples: vec![
                WeightedSample { value: 0.0, weight: 1.0 },
                WeightedSample { value: 2.0, weight: 1.0 },
            ],
        })
        .reserve_nonnegative());
    }

    #[test]
    fn effective_cdf_monotone_with_limits() {
        let kinds = vec![
            stage(pm(3.0), pm(1.0)),
            stage(
                Innovation::Empirical {
                    samples: vec![
                        WeightedSample { value: 1.0, weight: 2.0 },
                        WeightedSample { value: 4.0, weight: 1.0 },
                    ],
                },
                pm(-1.0),
            ),
            stage(
                Innovation::Gaussian { mean: 5.0, std_dev: 2.0 },
                Innovation::Gaussian { mean: 0.5, std_dev: 0.5 },
            ),
            stage(
                Innovation::TabulatedCdf {
                    points: vec![CdfPoint { x: -1.0, p: 0.0 }, CdfPoint { x: 1.0, p: 1.0 }],
                },
                Innovation::Empirical {
                    samples: vec![
                        WeightedSample { value: 0.0, weight: 1.0 },
                        WeightedSample { value: 2.0, weight: 1.0 },
                    ],
                },
            ),
        ];
        for s in kinds {
            let d = s.effective_dist();
            let (lo, hi) = d.support();
            let span = (hi - lo).max(1.0);
            let mut prev = -1e-9;
            for k in 0..=100 {
                let x = lo - 0.1 * span + (1.2 * span) * k as f64 / 100.0;
                let f = d.cdf(x);
                assert!(f >= prev - 1e-9, "CDF must be nondecreasing");
                assert!((-1e-12..=1.0 + 1e-12).contains(&f));
                prev = f;
            }
            assert!(d.cdf(lo - span) < 1e-9);
            assert!(d.cdf(hi + span) > 1.0 - 1e-9);
        }
    }
}

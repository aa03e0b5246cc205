//! Constructive checks around the set `E_N = {x : ‖T_n x‖ < a_n ‖T_n‖ for all n ≥ N}`:
//! porosity ball witnesses, the line-measure bound behind Haar-nullness and
//! a Monte Carlo probe of the residual set.
//!
//! All comparisons `‖T_n z‖ ≥ a_n ‖T_n‖` are made on normalized members
//! `T_n/‖T_n‖`, so families whose norms underflow are handled unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::operators::OperatorSpec;
use crate::powernorms::{Certainty, NormalizedPower};
use crate::spaces::SpaceSpec;

/// Threshold sequences `(a_n)`, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `a_n = 1/n`
    Harmonic,
    /// `a_n = 1/n²`
    InverseSquare,
    /// `a_n = c·r^n`
    Geometric {
        c: f64,
        r: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

impl ThresholdRule {
    pub fn values(&self, horizon: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            ThresholdRule::Harmonic => (1..=horizon).map(|n| 1.0 / n as f64).collect(),
            ThresholdRule::InverseSquare => (1..=horizon).map(|n| 1.0 / (n * n) as f64).collect(),
            ThresholdRule::Geometric { c, r } => (1..=horizon).map(|n| c * r.powi(n as i32)).collect(),
            ThresholdRule::Constant { value } => vec![*value; horizon],
            ThresholdRule::Explicit { values } => {
                if values.len() < horizon {
                    return Err(OrbitError::InvalidArgument(format!(
                        "explicit thresholds have {} entries, horizon is {horizon}",
                        values.len()
                    )));
                }
                values[..horizon].to_vec()
            }
        };
        if v.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(OrbitError::InvalidArgument("thresholds must be finite and nonnegative".into()));
        }
        Ok(v)
    }

    /// Non-increasing check used when thresholds come from configuration.
    pub fn check_non_increasing(&self, horizon: usize) -> Result<()> {
        let v = self.values(horizon)?;
        if let Some(i) = v.windows(2).position(|w| w[1] > w[0]) {
            return Err(OrbitError::InvalidArgument(format!("thresholds increase at n = {}", i + 2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Members {
    /// `T_n = T^n`.
    Powers(OperatorSpec),
    /// `T_n` is the `n`-th entry (1-based).
    Explicit(Vec<OperatorSpec>),
}

/// A family `(T_n)` with thresholds `(a_n)` for `n = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub members: Members,
    thresholds: Vec<f64>,
    normalized: Vec<NormalizedPower>,
}

impl OperatorFamily {
    pub fn powers(t: OperatorSpec, thresholds: Vec<f64>) -> Result<Self> {
        Self::build(Members::Powers(t), thresholds, false)
    }

    pub fn explicit(ops: Vec<OperatorSpec>, thresholds: Vec<f64>) -> Result<Self> {
        Self::build(Members::Explicit(ops), thresholds, false)
    }

    /// As [`OperatorFamily::powers`] or [`OperatorFamily::explicit`], with
    /// `allow_zero` permitting members that vanish identically.
    pub fn build(members: Members, thresholds: Vec<f64>, allow_zero: bool) -> Result<Self> {
        let horizon = thresholds.len();
        if horizon == 0 {
            return Err(OrbitError::InvalidArgument("family needs at least one member".into()));
        }
        if thresholds.iter().any(|a| !(*a >= 0.0)) {
            return Err(OrbitError::InvalidArgument("thresholds must be nonnegative".into()));
        }
        let normalized: Vec<NormalizedPower> = match &members {
            Members::Powers(t) => {
                if let Some(h) = t.safe_horizon() {
                    if horizon > h {
                        return Err(OrbitError::HorizonExceeded { requested: horizon, horizon: h });
                    }
                }
                (1..=horizon).map(|n| NormalizedPower::new(t, n)).collect::<Result<_>>()?
            }
            Members::Explicit(ops) => {
                if ops.len() != horizon {
                    return Err(OrbitError::DimensionMismatch { expected: horizon, got: ops.len() });
                }
                let d = ops[0].dim();
                if let Some(bad) = ops.iter().find(|o| o.dim() != d || o.space.kind != ops[0].space.kind) {
                    return Err(OrbitError::DimensionMismatch { expected: d, got: bad.dim() });
                }
                ops.iter().map(|o| NormalizedPower::new(o, 1)).collect::<Result<_>>()?
            }
        };
        if !allow_zero {
            if let Some(i) = normalized.iter().position(|m| m.is_zero()) {
                return Err(OrbitError::DegeneratePower { n: i + 1 });
            }
        }
        Ok(OperatorFamily { members, thresholds, normalized })
    }

    pub fn horizon(&self) -> usize {
        self.thresholds.len()
    }

    pub fn space(&self) -> SpaceSpec {
        self.normalized[0].space
    }

    /// `a_n`, 1-based.
    pub fn threshold(&self, n: usize) -> f64 {
        self.thresholds[n - 1]
    }

    /// `T_n / ‖T_n‖`, 1-based.
    pub fn member(&self, n: usize) -> &NormalizedPower {
        &self.normalized[n - 1]
    }

    /// `‖T_n‖`, 1-based.
    pub fn norm(&self, n: usize) -> f64 {
        self.normalized[n - 1].norm.value
    }

    /// `‖T_n z‖ / ‖T_n‖` (zero for a vanishing member).
    pub fn ratio(&self, n: usize, z: &[f64]) -> f64 {
        self.normalized[n - 1].image_norm(z)
    }

    /// Whether `‖T_n z‖ ≥ a_n ‖T_n‖`.
    pub fn hits(&self, n: usize, z: &[f64]) -> bool {
        !self.normalized[n - 1].is_zero() && self.ratio(n, z) >= self.threshold(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorosityWitness {
    pub x: Vec<f64>,
    pub y0: Vec<f64>,
    /// Member index, 1-based.
    pub n: usize,
    pub epsilon: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub sign: f64,
    pub threshold: f64,
    /// `‖T_n y₀‖ / ‖T_n‖`.
    pub y0_ratio: f64,
    /// `‖T_n y‖ / ‖T_n‖`.
    pub center_ratio: f64,
    pub certainty: Certainty,
}

impl PorosityWitness {
    /// Re-checks `‖y−x‖ = ε/2`, `a_n ≤ ε/8`, `‖T_n y₀‖ ≥ ‖T_n‖/2` and
    /// `‖T_n y‖ ≥ (ε/4)‖T_n‖` against the family.
    pub fn check(&self, family: &OperatorFamily) -> Result<()> {
        let space = family.space();
        let fail = |m: String| Err(OrbitError::ClaimFailed(m));
        let diff: Vec<f64> = self.center.iter().zip(&self.x).map(|(a, b)| a - b).collect();
        let dist = space.norm(&diff);
        if (dist - self.epsilon / 2.0).abs() > 1e-12 * self.epsilon.max(1.0) {
            return fail(format!("‖y−x‖ = {dist}, expected {}", self.epsilon / 2.0));
        }
        if family.threshold(self.n) > self.epsilon / 8.0 {
            return fail(format!("a_n = {} exceeds ε/8", family.threshold(self.n)));
        }
        let r0 = family.ratio(self.n, &self.y0);
        if r0 < 0.5 {
            return fail(format!("‖T_n y₀‖/‖T_n‖ = {r0} < 1/2"));
        }
        let ry = family.ratio(self.n, &self.center);
        if ry < self.epsilon / 4.0 {
            return fail(format!("‖T_n y‖/‖T_n‖ = {ry} < ε/4"));
        }
        Ok(())
    }
}

/// Ball `B(y, ε/8)` missing `E_N` near `x`, following the porosity argument
/// with constant `1/4`.
pub fn porosity_witness(family: &OperatorFamily, x: &[f64], epsilon: f64, start: usize) -> Result<PorosityWitness> {
    let space = family.space();
    space.check(x)?;
    if !(epsilon > 0.0) {
        return Err(OrbitError::InvalidArgument("epsilon must be positive".into()));
    }
    let bound = epsilon / 8.0;
    let n = (start.max(1)..=family.horizon())
        .find(|&n| family.threshold(n) <= bound)
        .ok_or(OrbitError::NoEligibleIndex { start, bound })?;
    let member = family.member(n);
    if member.is_zero() {
        return Err(OrbitError::DegeneratePower { n });
    }
    let y0 = member.maximizer()?;
    let y0_ratio = member.image_norm(&y0);
    if y0_ratio < 0.5 {
        return Err(OrbitError::NormingFailure { n, achieved: y0_ratio, required: 0.5 });
    }
    // one of x ± (ε/2)y₀ has image at least (ε/4)‖T_n‖ since their images differ by ε‖T_n y₀‖
    let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&y0).map(|(a, b)| a + s * 0.5 * epsilon * b).collect() };
    let plus = shifted(1.0);
    let plus_ratio = member.image_norm(&plus);
    let (sign, center, center_ratio) = if plus_ratio >= epsilon / 4.0 {
        (1.0, plus, plus_ratio)
    } else {
        let minus = shifted(-1.0);
        let r = member.image_norm(&minus);
        (-1.0, minus, r)
    };
    let w = PorosityWitness {
        x: x.to_vec(),
        y0,
        n,
        epsilon,
        center,
        radius: bound,
        sign,
        threshold: family.threshold(n),
        y0_ratio,
        center_ratio,
        certainty: member.certainty,
    };
    w.check(family)?;
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    /// Fraction of samples `z` with `‖T_n z‖ ≥ a_n ‖T_n‖`.
    pub fraction: f64,
    pub samples: usize,
    pub radius: f64,
    pub warning: Option<String>,
}

/// Samples the open ball `B(y, ε/8)` and reports the fraction outside `E_N`
/// at the witness index.
pub fn verify_ball_exclusion(
    w: &PorosityWitness,
    family: &OperatorFamily,
    samples: usize,
    seed: u64,
) -> ExclusionReport {
    verify_ball_exclusion_scaled(w, family, samples, seed, 1.0)
}

/// Diagnostic variant sampling `B(y, inflate · ε/8)`.
pub fn verify_ball_exclusion_scaled(
    w: &PorosityWitness,
    family: &OperatorFamily,
    samples: usize,
    seed: u64,
    inflate: f64,
) -> ExclusionReport {
    let radius = w.radius * inflate;
    if samples == 0 {
        return ExclusionReport {
            fraction: 1.0,
            samples,
            radius,
            warning: Some("no samples drawn; fraction is vacuous".into()),
        };
    }
    const CHUNK: usize = 1024;
    let space = family.space();
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .filter(|_| {
                    let z = space.sample_in_ball(&w.center, radius, &mut rng);
                    family.hits(w.n, &z)
                })
                .count()
        })
        .sum();
    ExclusionReport { fraction: hits as f64 / samples as f64, samples, radius, warning: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarBound {
    /// `4 · min a_n ‖T_n‖ / ‖T_n u‖` over eligible `n ≥ N`.
    pub bound: f64,
    /// Minimizing index.
    pub n_star: usize,
    /// Indices with `‖T_n u‖ ≥ √a_n ‖T_n‖` and `T_n u ≠ 0`.
    pub eligible: Vec<usize>,
}

/// Upper bound for the length of `{λ : x + λu ∈ E_N}`. The bound does not
/// depend on `x`, which is only checked for shape.
pub fn haar_interval_bound(family: &OperatorFamily, u: &[f64], x: &[f64], start: usize) -> Result<HaarBound> {
    let space = family.space();
    space.check(u)?;
    space.check(x)?;
    let mut best: Option<(f64, usize)> = None;
    let mut eligible = Vec::new();
    for n in start.max(1)..=family.horizon() {
        let r = family.ratio(n, u);
        let a = family.threshold(n);
        if r > 0.0 && r >= a.sqrt() {
            eligible.push(n);
            let v = a / r;
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, n));
            }
        }
    }
    let (v, n_star) = best.ok_or(OrbitError::NoGoodDirection { start })?;
    Ok(HaarBound { bound: 4.0 * v, n_star, eligible })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub checkpoint: usize,
    pub fraction: f64,
}

/// For random unit `x`, the fraction with some `n ∈ [c, horizon]` such that
/// `‖T_n x‖ ≥ a_n ‖T_n‖`, per checkpoint `c`.
pub fn residual_probe(family: &OperatorFamily, samples: usize, checkpoints: &[usize], seed: u64) -> Vec<ProbePoint> {
    let space = family.space();
    let h = family.horizon();
    // last[i] = largest hitting index of sample i (0 if none)
    let last: Vec<usize> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let x = space.random_unit_with(&mut rng);
            (1..=h).rev().find(|&n| family.hits(n, &x)).unwrap_or(0)
        })
        .collect();
    checkpoints
        .iter()
        .map(|&c| {
            let count = last.iter().filter(|&&l| l >= c.max(1)).count();
            let fraction = if samples == 0 { 1.0 } else { count as f64 / samples as f64 };
            ProbePoint { checkpoint: c, fraction }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Operator;

    fn shift_family(d: usize, rule: ThresholdRule, horizon: usize) -> OperatorFamily {
        let sp = SpaceSpec::lp(1.0, d).unwrap();
        let b = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap();
        OperatorFamily::powers(b, rule.values(horizon).unwrap()).unwrap()
    }

    #[test]
    fn shift_witness_at_origin() {
        let f = shift_family(64, ThresholdRule::Harmonic, 63);
        let w = porosity_witness(&f, &vec![0.0; 64], 1.0, 1).unwrap();
        assert_eq!(w.n, 8);
        let mut e9 = vec![0.0; 64];
        e9[8] = 1.0;
        assert_eq!(w.y0, e9);
        assert_eq!(w.center[8].abs(), 0.5);
        assert_eq!(w.radius, 0.125);
        let rep = verify_ball_exclusion(&w, &f, 10_000, 1);
        assert_eq!(rep.fraction, 1.0);
    }

    #[test]
    fn witness_when_x_already_large() {
        let f = shift_family(32, ThresholdRule::Harmonic, 31);
        let sp = f.space();
        let mut x = vec![0.0; 32];
        x[20] = 1.0;
        let w = porosity_witness(&f, &x, 0.5, 4).unwrap();
        assert!(w.check(&f).is_ok());
        assert_eq!(w.n, 16);
        assert!(sp.norm(&w.x) <= 1.0);
    }

    #[test]
    fn witness_errors() {
        let f = shift_family(16, ThresholdRule::Constant { value: 1.0 }, 15);
        assert!(matches!(porosity_witness(&f, &[0.0; 16], 1.0, 1), Err(OrbitError::NoEligibleIndex { .. })));
    }

    #[test]
    fn dense_family_witness_uses_power_method() {
        let sp = SpaceSpec::lp(3.0, 6).unwrap();
        let m = nalgebra::DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4);
        let t = OperatorSpec::new(Operator::Dense(m), sp).unwrap();
        let f = OperatorFamily::powers(t, ThresholdRule::Harmonic.values(12).unwrap()).unwrap();
        let w = porosity_witness(&f, &sp.random_unit(2), 1.0, 1).unwrap();
        assert!(w.check(&f).is_ok());
        assert!(w.y0_ratio >= 0.99);
    }

    #[test]
    fn inflated_ball_may_leak_and_zero_samples_warn() {
        let f = shift_family(64, ThresholdRule::Harmonic, 63);
        let w = porosity_witness(&f, &vec![0.0; 64], 1.0, 1).unwrap();
        let rep = verify_ball_exclusion_scaled(&w, &f, 2000, 3, 4.0);
        assert!(rep.fraction <= 1.0);
        let rep = verify_ball_exclusion(&w, &f, 0, 3);
        assert_eq!(rep.fraction, 1.0);
        assert!(rep.warning.is_some());
    }

    #[test]
    fn ball_sampling_is_deterministic() {
        let f = shift_family(64, ThresholdRule::Harmonic, 63);
        let w = porosity_witness(&f, &f.space().random_unit(4), 0.5, 1).unwrap();
        let a = verify_ball_exclusion_scaled(&w, &f, 3000, 8, 6.0);
        let b = verify_ball_exclusion_scaled(&w, &f, 3000, 8, 6.0);
        assert_eq!(a, b);
    }

    #[test]
    fn haar_bound_examples() {
        for n in [16, 32] {
            let f = shift_family(2 * n, ThresholdRule::InverseSquare, n);
            let mut u = vec![0.0; 2 * n];
            u[n] = 1.0;
            let hb = haar_interval_bound(&f, &u, &vec![0.0; 2 * n], n).unwrap();
            assert_eq!(hb.bound, 4.0 / (n * n) as f64);
        }
        let f = shift_family(32, ThresholdRule::Constant { value: 0.0 }, 16);
        let u = f.space().basis(20);
        assert_eq!(haar_interval_bound(&f, &u, &u, 4).unwrap().bound, 0.0);
        let e0 = f.space().basis(0);
        assert!(matches!(haar_interval_bound(&f, &e0, &e0, 1), Err(OrbitError::NoGoodDirection { .. })));
    }

    #[test]
    fn haar_bound_shrinks_with_horizon() {
        let d = 200;
        let sp = SpaceSpec::lp(1.0, d).unwrap();
        let u: Vec<f64> = sp.normalize(&(0..d).map(|k| 1.0 / (k + 1) as f64).collect::<Vec<_>>()).unwrap();
        let mut prev = f64::INFINITY;
        for h in [20, 40, 80, 160] {
            let f = shift_family(d, ThresholdRule::InverseSquare, h);
            let b = haar_interval_bound(&f, &u, &u, 10).unwrap().bound;
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn residual_probe_examples() {
        let sp = SpaceSpec::lp(2.0, 8).unwrap();
        let id = OperatorSpec::identity(sp);
        let f = OperatorFamily::powers(id, ThresholdRule::Harmonic.values(10).unwrap()).unwrap();
        assert!(residual_probe(&f, 50, &[1, 5, 10], 1).iter().all(|p| p.fraction == 1.0));

        let f = shift_family(64, ThresholdRule::Constant { value: 2.0 }, 63);
        assert!(residual_probe(&f, 50, &[1, 8], 1).iter().all(|p| p.fraction == 0.0));

        let f = shift_family(256, ThresholdRule::Harmonic, 255);
        let probe = residual_probe(&f, 1000, &[1, 16, 64], 7);
        assert!(probe.iter().all(|p| p.fraction >= 0.99), "{probe:?}");
    }

    #[test]
    fn family_validation() {
        let sp = SpaceSpec::lp(1.0, 8).unwrap();
        let b = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap();
        assert!(matches!(OperatorFamily::powers(b.clone(), vec![0.1; 8]), Err(OrbitError::HorizonExceeded { .. })));
        let zero = OperatorSpec::new(Operator::Diagonal { entries: vec![0.0; 8] }, sp).unwrap();
        assert!(OperatorFamily::explicit(vec![zero.clone()], vec![0.1]).is_err());
        assert!(OperatorFamily::build(Members::Explicit(vec![zero]), vec![0.1], true).is_ok());
        assert!(ThresholdRule::Explicit { values: vec![0.5, 0.6] }.check_non_increasing(2).is_err());
    }
}

//! Moduli of asymptotic uniform smoothness `ρ̄_X` and the classical modulus
//! of smoothness `ρ_X`: closed forms, Milman-type bounds and sampled
//! estimates on truncated sequence spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::spaces::{SpaceKind, SpaceSpec};

/// Spaces with a known closed form or two-sided bound for `ρ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusKind {
    /// Sequence space `ℓ^p`.
    SeqLp {
        p: f64,
    },
    C0,
    Hilbert,
    /// Function space `L^p(0,1)`; `c_p` is the unknown constant of the
    /// upper bound for `p > 2`.
    FunctionLp {
        p: f64,
        #[serde(default)]
        c_p: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModulusValue {
    Point {
        value: f64,
    },
    /// `hi = None` when the upper constant is unknown.
    Interval {
        lo: f64,
        hi: Option<f64>,
    },
}

impl ModulusValue {
    pub fn lo(&self) -> f64 {
        match *self {
            ModulusValue::Point { value } => value,
            ModulusValue::Interval { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> Option<f64> {
        match *self {
            ModulusValue::Point { value } => Some(value),
            ModulusValue::Interval { hi, .. } => hi,
        }
    }

    pub fn point(&self) -> Option<f64> {
        match *self {
            ModulusValue::Point { value } => Some(value),
            ModulusValue::Interval { .. } => None,
        }
    }

    /// Upper end, or `UnknownConstant` for an interval open above.
    pub fn upper(&self, p: f64) -> Result<f64> {
        self.hi().ok_or(OrbitError::UnknownConstant { p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Empirical,
    IntervalBounds,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Empirical => "empirical",
            Provenance::IntervalBounds => "interval_bounds",
        }
    }
}

/// A closed-form value together with a flag for values outside the range
/// where the formula is established.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedValue {
    pub value: ModulusValue,
    pub extrapolated: bool,
}

/// `(1+t^p)^{1/p} - 1`, accurate for small `t`.
pub fn lp_rho_bar(p: f64, t: f64) -> f64 {
    (t.powf(p).ln_1p() / p).exp_m1()
}

pub fn rho_bar_closed(kind: ModulusKind, t: f64) -> Result<ClosedValue> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(OrbitError::InvalidArgument(format!("t must be finite and nonnegative, got {t}")));
    }
    let point = |value| ClosedValue { value: ModulusValue::Point { value }, extrapolated: false };
    Ok(match kind {
        ModulusKind::SeqLp { p } => {
            check_p(p)?;
            point(lp_rho_bar(p, t))
        }
        ModulusKind::Hilbert => point(lp_rho_bar(2.0, t)),
        ModulusKind::C0 => {
            // beyond t = 1 we use ‖x+ty‖ ≤ max(1, t) for disjoint tails
            ClosedValue { value: ModulusValue::Point { value: (t - 1.0).max(0.0) }, extrapolated: t > 1.0 }
        }
        ModulusKind::FunctionLp { p, c_p } => {
            check_p(p)?;
            if p == 1.0 {
                point(t)
            } else if p == 2.0 {
                point(lp_rho_bar(2.0, t))
            } else if p < 2.0 {
                let tp = t.powf(p);
                ClosedValue {
                    value: ModulusValue::Interval { lo: tp / p, hi: Some(2.0 * tp / p) },
                    extrapolated: false,
                }
            } else {
                let t2 = t * t;
                ClosedValue {
                    value: ModulusValue::Interval { lo: (p - 1.0) * t2, hi: c_p.map(|c| c * t2) },
                    extrapolated: false,
                }
            }
        }
    })
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(OrbitError::InvalidArgument(format!("exponent p must be finite and >= 1, got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusCurve {
    pub grid: Vec<f64>,
    pub values: Vec<ModulusValue>,
    pub provenance: Provenance,
    /// Grid points where a closed form was extended past its stated range.
    #[serde(default)]
    pub extrapolated: Vec<bool>,
}

impl ModulusCurve {
    pub fn closed(kind: ModulusKind, grid: &[f64]) -> Result<Self> {
        let vals: Vec<ClosedValue> = grid.iter().map(|&t| rho_bar_closed(kind, t)).collect::<Result<_>>()?;
        let provenance = if vals.iter().any(|v| v.value.point().is_none()) {
            Provenance::IntervalBounds
        } else {
            Provenance::ClosedForm
        };
        Ok(ModulusCurve {
            grid: grid.to_vec(),
            values: vals.iter().map(|v| v.value).collect(),
            extrapolated: vals.iter().map(|v| v.extrapolated).collect(),
            provenance,
        })
    }

    pub fn from_points(grid: Vec<f64>, values: Vec<f64>, provenance: Provenance) -> Self {
        let n = grid.len();
        ModulusCurve {
            grid,
            values: values.into_iter().map(|value| ModulusValue::Point { value }).collect(),
            provenance,
            extrapolated: vec![false; n],
        }
    }

    /// Violations of nonnegativity, monotonicity, `ρ̄(t) ≤ t`, `ρ̄(0) = 0`
    /// and the 1-Lipschitz bound. Only point values are checked against
    /// the last three; interval endpoints are asymptotic bounds.
    pub fn invariant_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut order: Vec<usize> = (0..self.grid.len()).collect();
        order.sort_by(|&a, &b| self.grid[a].total_cmp(&self.grid[b]));
        for &i in &order {
            let (t, v) = (self.grid[i], self.values[i]);
            if v.lo() < -tol {
                out.push(format!("negative value {} at t = {t}", v.lo()));
            }
            if let Some(pv) = v.point() {
                if pv > t + tol {
                    out.push(format!("value {pv} exceeds t = {t}"));
                }
                if t == 0.0 && pv.abs() > tol {
                    out.push(format!("value {pv} at t = 0"));
                }
            }
        }
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ta, tb) = (self.grid[a], self.grid[b]);
            let (va, vb) = (self.values[a], self.values[b]);
            if vb.lo() < va.lo() - tol {
                out.push(format!("decreasing between t = {ta} and t = {tb}"));
            }
            if let (Some(pa), Some(pb)) = (va.point(), vb.point()) {
                if (pb - pa).abs() > (tb - ta) + tol {
                    out.push(format!("Lipschitz bound fails between t = {ta} and t = {tb}"));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,lo,hi,provenance\n");
        for (t, v) in self.grid.iter().zip(&self.values) {
            let hi = v.hi().map(|h| format!("{h:e}")).unwrap_or_default();
            s.push_str(&format!("{t:e},{:e},{hi},{}\n", v.lo(), self.provenance.as_str()));
        }
        s
    }

    /// Two-column `t ρ̄(t)` data (lower ends for intervals).
    pub fn to_dat(&self) -> String {
        let mut s = format!("# t rho_bar ({})\n", self.provenance.as_str());
        for (t, v) in self.grid.iter().zip(&self.values) {
            s.push_str(&format!("{t:e} {:e}\n", v.lo()));
        }
        s
    }
}

/// Sampled `ρ̄` on a truncated space.
///
/// Unit vectors `x` are drawn on the head coordinates `[0, r_min)` where
/// `r_min` is the smallest tail depth. The infimum over finite-codimension
/// subspaces runs over `Y_r = span{e_r, …, e_{d-1}}`, and the inner supremum
/// over signed coordinate vectors of `Y_r` plus random unit vectors of `Y_r`.
/// Restricting the infimum biases the estimate up; sampling the suprema
/// biases it down.
pub fn rho_bar_empirical(
    space: SpaceSpec,
    t_grid: &[f64],
    sphere_samples: usize,
    tail_depths: &[usize],
    seed: u64,
) -> Result<ModulusCurve> {
    let d = space.dim;
    let r_min =
        *tail_depths.iter().min().ok_or_else(|| OrbitError::InvalidArgument("tail_depths must be nonempty".into()))?;
    if tail_depths.iter().any(|&r| r >= d) || r_min == 0 {
        return Err(OrbitError::InvalidArgument("tail depths must lie in 1..dim".into()));
    }
    let head = space.with_dim(r_min)?;
    let xs: Vec<Vec<f64>> = (0..sphere_samples.max(1))
        .map(|s| {
            let h = head.random_unit(seed ^ (s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut x = vec![0.0; d];
            x[..r_min].copy_from_slice(&h);
            x
        })
        .collect();
    const INNER: usize = 16;
    let values: Vec<f64> = t_grid
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                return 0.0;
            }
            let mut outer = 0.0_f64;
            for (sx, x) in xs.iter().enumerate() {
                let mut inf = f64::INFINITY;
                for &r in tail_depths {
                    let tail = space.with_dim(d - r).expect("positive tail");
                    let mut sup = f64::NEG_INFINITY;
                    let mut eval = |y: &[f64]| {
                        let z: Vec<f64> =
                            x.iter().enumerate().map(|(i, v)| if i >= r { v + t * y[i - r] } else { *v }).collect();
                        sup = sup.max(space.norm(&z) - 1.0);
                    };
                    for j in 0..d - r {
                        for s in [1.0, -1.0] {
                            let mut y = vec![0.0; d - r];
                            y[j] = s;
                            eval(&y);
                        }
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((sx as u64) << 32) ^ r as u64);
                    for _ in 0..INNER {
                        eval(&tail.random_unit_with(&mut rng));
                    }
                    inf = inf.min(sup);
                }
                outer = outer.max(inf);
            }
            outer.max(0.0)
        })
        .collect();
    Ok(ModulusCurve::from_points(t_grid.to_vec(), values, Provenance::Empirical))
}

/// Sampled `ρ_X(t) = ½ sup_{‖x‖=‖y‖=1} (‖x+ty‖ + ‖x−ty‖ − 2)`.
///
/// The pairs `(e_0, e_1)` and `((e_0+e_1)/‖·‖, (e_0−e_1)/‖·‖)` are always
/// included, so disjoint-support extremals are found exactly.
pub fn rho_lindenstrauss(space: SpaceSpec, t: f64, sphere_samples: usize, seed: u64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(OrbitError::InvalidArgument(format!("t must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let gap = |x: &[f64], y: &[f64]| {
        let plus: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + t * b).collect();
        let minus: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - t * b).collect();
        0.5 * (space.norm(&plus) + space.norm(&minus) - 2.0)
    };
    let mut best = 0.0_f64;
    if space.dim >= 2 {
        let (e0, e1) = (space.basis(0), space.basis(1));
        best = best.max(gap(&e0, &e1));
        let s: Vec<f64> = e0.iter().zip(&e1).map(|(a, b)| a + b).collect();
        let dlt: Vec<f64> = e0.iter().zip(&e1).map(|(a, b)| a - b).collect();
        best = best.max(gap(&space.normalize(&s)?, &space.normalize(&dlt)?));
    }
    let sampled = (0..sphere_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let x = space.random_unit_with(&mut rng);
            let y = if rng.random_bool(0.5) {
                space.random_unit_with(&mut rng)
            } else {
                // near-orthogonal partner: random direction with x's component removed
                let mut y = space.random_unit_with(&mut rng);
                let proj: f64 =
                    x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
                y.iter_mut().zip(&x).for_each(|(v, a)| *v -= proj * a);
                space.normalize(&y).unwrap_or(y)
            };
            gap(&x, &y)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best.max(sampled))
}

/// `max value(2t)/value(t)` over grid pairs `(t, 2t)` with `value(t) > 0`.
pub fn doubling_check(curve: &ModulusCurve) -> Result<f64> {
    let mut best: Option<f64> = None;
    for (i, &t) in curve.grid.iter().enumerate() {
        let v = curve.values[i].lo();
        if !(v > 0.0) {
            continue;
        }
        let twice = curve.grid.iter().position(|&u| (u - 2.0 * t).abs() <= 1e-12 * u.abs().max(1e-300));
        if let Some(j) = twice {
            let r = curve.values[j].lo() / v;
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or(OrbitError::NoMatchedPairs)
}

/// Geometric grid `t_0, 2t_0, 4t_0, …` up to `t_max`, so every point but
/// the last has its double on the grid.
pub fn doubling_grid(t_min: f64, t_max: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut t = t_min;
    while t <= t_max * (1.0 + 1e-12) {
        g.push(t);
        t *= 2.0;
    }
    g
}

/// Closed form matching a truncated space, used for cross-checks.
pub fn closed_kind_for(space: &SpaceSpec) -> ModulusKind {
    match space.kind {
        SpaceKind::Lp { p } => ModulusKind::SeqLp { p },
        SpaceKind::Sup => ModulusKind::C0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_examples() {
        let v = rho_bar_closed(ModulusKind::SeqLp { p: 2.0 }, 1.0).unwrap();
        assert_relative_eq!(v.value.point().unwrap(), 2f64.sqrt() - 1.0, max_relative = 1e-15);
        assert_eq!(rho_bar_closed(ModulusKind::C0, 0.5).unwrap().value.point(), Some(0.0));
        let c0 = rho_bar_closed(ModulusKind::C0, 1.5).unwrap();
        assert!(c0.extrapolated);
        assert_eq!(c0.value.point(), Some(0.5));

        let i = rho_bar_closed(ModulusKind::FunctionLp { p: 1.5, c_p: None }, 0.1).unwrap().value;
        let tp = 0.1f64.powf(1.5);
        assert_relative_eq!(i.lo(), tp / 1.5);
        assert_relative_eq!(i.hi().unwrap(), 2.0 * tp / 1.5);
        assert_eq!(
            rho_bar_closed(ModulusKind::FunctionLp { p: 1.0, c_p: None }, 0.3).unwrap().value.point(),
            Some(0.3)
        );
    }

    #[test]
    fn unknown_upper_constant() {
        let v = rho_bar_closed(ModulusKind::FunctionLp { p: 4.0, c_p: None }, 0.1).unwrap().value;
        assert_relative_eq!(v.lo(), 3.0 * 0.01);
        assert_eq!(v.upper(4.0), Err(OrbitError::UnknownConstant { p: 4.0 }));
        let v = rho_bar_closed(ModulusKind::FunctionLp { p: 4.0, c_p: Some(7.0) }, 0.1).unwrap().value;
        assert_relative_eq!(v.upper(4.0).unwrap(), 0.07);
    }

    #[test]
    fn small_t_is_accurate() {
        // Taylor oracle t^p/p - (p-1)... leading term only at t = 1e-6
        let t = 1e-6;
        assert_relative_eq!(lp_rho_bar(2.0, t), t * t / 2.0, max_relative = 1e-10);
        assert_relative_eq!(lp_rho_bar(1.5, t), t.powf(1.5) / 1.5, max_relative = 1e-8);
    }

    #[test]
    fn closed_curves_satisfy_invariants() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        for kind in
            [ModulusKind::SeqLp { p: 1.0 }, ModulusKind::SeqLp { p: 3.0 }, ModulusKind::Hilbert, ModulusKind::C0]
        {
            let c = ModulusCurve::closed(kind, &grid).unwrap();
            assert!(c.invariant_violations(1e-12).is_empty(), "{kind:?}");
        }
    }

    #[test]
    fn empirical_l2_matches_closed_form() {
        let sp = SpaceSpec::lp(2.0, 64).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let c = rho_bar_empirical(sp, &grid, 8, &[16, 32, 48], 3).unwrap();
        for (t, v) in grid.iter().zip(&c.values) {
            assert!((v.lo() - lp_rho_bar(2.0, *t)).abs() < 1e-6, "t={t}");
        }
        assert_eq!(c.values[0].lo(), 0.0);
        assert!(c.invariant_violations(1e-9).is_empty());
    }

    #[test]
    fn empirical_sup_is_zero_up_to_one() {
        let sp = SpaceSpec::sup(32).unwrap();
        let grid = [0.0, 0.25, 0.5, 1.0];
        let c = rho_bar_empirical(sp, &grid, 8, &[8, 16], 9).unwrap();
        assert!(c.values.iter().all(|v| v.lo() == 0.0));
    }

    #[test]
    fn lindenstrauss_examples() {
        let l2 = SpaceSpec::lp(2.0, 8).unwrap();
        let r = rho_lindenstrauss(l2, 1.0, 10_000, 1).unwrap();
        assert!((r - (2f64.sqrt() - 1.0)).abs() < 1e-4);
        assert_eq!(rho_lindenstrauss(l2, 0.0, 100, 1).unwrap(), 0.0);
        let l1 = SpaceSpec::lp(1.0, 8).unwrap();
        assert!((rho_lindenstrauss(l1, 0.5, 100, 1).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn doubling_examples() {
        let grid = doubling_grid(1e-4, 1e-1);
        let c = ModulusCurve::closed(ModulusKind::SeqLp { p: 2.0 }, &grid).unwrap();
        let r = doubling_check(&c).unwrap();
        assert!(r <= 4.0 + 1e-9 && r > 3.9, "{r}");

        let c0 = ModulusCurve::closed(ModulusKind::C0, &doubling_grid(1.0 / 64.0, 1.0)).unwrap();
        assert_eq!(doubling_check(&c0), Err(OrbitError::NoMatchedPairs));

        let lin = ModulusCurve::from_points(vec![0.1, 0.2, 0.4], vec![0.1, 0.2, 0.4], Provenance::Empirical);
        assert_relative_eq!(doubling_check(&lin).unwrap(), 2.0);
    }

    #[test]
    fn csv_columns() {
        let c = ModulusCurve::closed(ModulusKind::FunctionLp { p: 3.0, c_p: None }, &[0.5]).unwrap();
        assert_eq!(c.provenance, Provenance::IntervalBounds);
        assert_eq!(c.to_csv(), "t,lo,hi,provenance\n5e-1,5e-1,,interval_bounds\n");
    }
}

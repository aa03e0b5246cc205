//! Counterexample operators with closed-form power norms and predicted
//! orbit behavior, checked against the generic machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::operators::{block_dim, block_offset, Operator, OperatorSpec};
use crate::powernorms::{matrix_norm, NormMethod, NormalizedPower};
use crate::spaces::SpaceSpec;

pub const UNWEIGHTED_SHIFT_L1: &str = "unweighted_shift_l1";
pub const WEIGHTED_SHIFT_LP: &str = "weighted_shift_lp";
pub const C0_FIXED: &str = "c0_fixed";
pub const BLOCK_SHIFT_S: &str = "block_shift_S";
pub const COMPACT_DIAGONAL: &str = "compact_diagonal";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub default_p: Option<f64>,
    /// Closed form of `‖T^n‖`.
    pub norm_formula: &'static str,
    pub claims: Vec<&'static str>,
    /// Whether the `2T` variant is part of the entry.
    pub doubled_variant: bool,
}

pub fn gallery() -> Vec<GalleryEntry> {
    vec![
        GalleryEntry {
            name: UNWEIGHTED_SHIFT_L1,
            default_p: Some(1.0),
            norm_formula: "1",
            claims: vec!["r_n(x) = Σ_{k>n} |x_k|", "r_n non-increasing to 0", "‖T^n‖ non-decreasing"],
            doubled_variant: true,
        },
        GalleryEntry {
            name: WEIGHTED_SHIFT_LP,
            default_p: Some(2.0),
            norm_formula: "∏_{k=2}^{n+1} w_k",
            claims: vec!["r_n(x)^p ≤ Σ_{k>n} |x_k|^p"],
            doubled_variant: false,
        },
        GalleryEntry {
            name: C0_FIXED,
            default_p: None,
            norm_formula: "Σ_{k=0}^{n} W_k, W_k = w_0⋯w_k",
            claims: vec!["‖T^n‖ non-decreasing", "max_{N/2 ≤ n ≤ N} r_n(x) ≤ 1 − δ(x)"],
            doubled_variant: true,
        },
        GalleryEntry {
            name: BLOCK_SHIFT_S,
            default_p: Some(2.0),
            norm_formula: "2^{-n²}",
            claims: vec!["Σ_n r_n(x)^p ≤ 2‖x‖^p", "‖S^n x‖^p = Σ_k ‖S^n x_k‖^p"],
            doubled_variant: false,
        },
        GalleryEntry {
            name: COMPACT_DIAGONAL,
            default_p: Some(2.0),
            norm_formula: "1",
            claims: vec!["0 ≤ r_n(x)^p − |x_1|^p ≤ 2^{-np}‖x‖^p", "r_n(e_1) = 1"],
            doubled_variant: false,
        },
    ]
}

pub fn entry(name: &str) -> Result<GalleryEntry> {
    gallery()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| OrbitError::InvalidArgument(format!("unknown gallery entry `{name}`")))
}

/// Overrides for a gallery entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleParams {
    /// Exponent of `ℓ^p`; ignored by `c0_fixed`.
    pub p: Option<f64>,
    /// 1-based weights `w_1, w_2, …` (block scales `c_1, c_2, …`, diagonal
    /// entries `λ_1, λ_2, …`). Defaults to `2^{-k}`, or `1/k` on the diagonal.
    pub weights: Option<Vec<f64>>,
    /// Random vectors per behavior claim.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams { p: None, weights: None, samples: 20, seed: 0 }
    }
}

fn weight_seq(params: &ExampleParams, count: usize, default: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    match &params.weights {
        None => Ok((1..=count).map(default).collect()),
        Some(w) => {
            if w.len() < count {
                return Err(OrbitError::InvalidArgument(format!("need {count} weights, got {}", w.len())));
            }
            if w.iter().any(|v| !(*v > 0.0)) || w.windows(2).any(|p| p[1] > p[0]) {
                return Err(OrbitError::InvalidArgument("weights must be positive and non-increasing".into()));
            }
            Ok(w[..count].to_vec())
        }
    }
}

fn dyadic(k: usize) -> f64 {
    0.5f64.powi(k as i32)
}

/// Number of whole blocks that fit in dimension `d`.
pub fn blocks_for_dim(d: usize) -> usize {
    (0..).take_while(|k| block_dim(k + 1) <= d).count()
}

/// The entry's operator in dimension `d`. The block operator uses the
/// largest `K` with `K(K+3)/2 ≤ d`, so its dimension may be smaller.
pub fn build(name: &str, d: usize, params: &ExampleParams) -> Result<OperatorSpec> {
    let e = entry(name)?;
    if d < 2 {
        return Err(OrbitError::InvalidArgument("gallery operators need d ≥ 2".into()));
    }
    let p = params.p.or(e.default_p);
    let lp = |dim| SpaceSpec::lp(p.expect("lp entry has an exponent"), dim);
    match e.name {
        UNWEIGHTED_SHIFT_L1 => OperatorSpec::new(Operator::UnweightedBackwardShift, lp(d)?),
        WEIGHTED_SHIFT_LP => {
            // (Tx)_i = w_{i+2} x_{i+1}
            let w = weight_seq(params, d + 1, dyadic)?;
            OperatorSpec::new(Operator::WeightedBackwardShift { weights: w[1..d].to_vec() }, lp(d)?)
        }
        C0_FIXED => {
            let w = weight_seq(params, d - 1, dyadic)?;
            OperatorSpec::new(Operator::C0FixedShift { weights: w }, SpaceSpec::sup(d)?)
        }
        BLOCK_SHIFT_S => {
            let k = blocks_for_dim(d);
            let scales = weight_seq(params, k, dyadic)?;
            OperatorSpec::new(Operator::BlockBackwardShift { scales }, lp(block_dim(k))?)
        }
        COMPACT_DIAGONAL => {
            let entries = weight_seq(params, d, |k| 1.0 / k as f64)?;
            OperatorSpec::new(Operator::Diagonal { entries }, lp(d)?)
        }
        _ => unreachable!("entry names are fixed"),
    }
}

/// `‖T^n‖` from the entry's closed form.
pub fn predicted_norm(name: &str, d: usize, params: &ExampleParams, n: usize) -> Result<f64> {
    let e = entry(name)?;
    Ok(match e.name {
        UNWEIGHTED_SHIFT_L1 | COMPACT_DIAGONAL => 1.0,
        WEIGHTED_SHIFT_LP => {
            let w = weight_seq(params, d + 1, dyadic)?;
            (2..=n + 1).map(|k| w[k - 1]).product()
        }
        C0_FIXED => {
            let w = weight_seq(params, d - 1, dyadic)?;
            let mut big_w = 1.0;
            let mut sum = 1.0;
            for k in 1..=n {
                big_w *= w[k - 1];
                sum += big_w;
            }
            sum
        }
        BLOCK_SHIFT_S => {
            let c = weight_seq(params, blocks_for_dim(d), dyadic)?;
            c[n - 1..].iter().map(|c| c.powi(n as i32)).fold(0.0, f64::max)
        }
        _ => unreachable!("entry names are fixed"),
    })
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    pub predicted: f64,
    pub computed: f64,
    /// Positive when the claim holds; relative slack for equalities.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub name: String,
    pub dim: usize,
    pub horizon: usize,
    pub tol: f64,
    pub formula_checks: Vec<ClaimCheck>,
    pub behavior_checks: Vec<ClaimCheck>,
    pub pass: bool,
}

impl ExampleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,claim,predicted,computed,margin,pass\n");
        let rows = self
            .formula_checks
            .iter()
            .map(|c| ("formula", c))
            .chain(self.behavior_checks.iter().map(|c| ("behavior", c)));
        for (kind, c) in rows {
            s += &format!(
                "{kind},\"{}\",{:e},{:e},{:e},{}\n",
                c.claim.replace('"', "'"),
                c.predicted,
                c.computed,
                c.margin,
                c.pass
            );
        }
        s
    }

    pub fn failures(&self) -> Vec<&ClaimCheck> {
        self.formula_checks.iter().chain(&self.behavior_checks).filter(|c| !c.pass).collect()
    }
}

fn equality(claim: String, predicted: f64, computed: f64, tol: f64) -> ClaimCheck {
    let rel = if predicted == 0.0 { computed.abs() } else { ((computed - predicted) / predicted).abs() };
    ClaimCheck { claim, predicted, computed, margin: tol - rel, pass: rel <= tol }
}

/// `computed ≤ predicted + tol`.
fn upper(claim: String, predicted: f64, computed: f64, tol: f64) -> ClaimCheck {
    ClaimCheck { claim, predicted, computed, margin: predicted - computed, pass: computed <= predicted + tol }
}

fn random_vectors(space: &SpaceSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| space.random_unit_with(&mut rng)).collect()
}

/// `r_n(x)` for `n = 1..=N`.
fn ratios(t: &OperatorSpec, x: &[f64], horizon: usize) -> Result<Vec<f64>> {
    (1..=horizon).map(|n| Ok(NormalizedPower::new(t, n)?.image_norm(x))).collect()
}

/// Unit vector in `c0` whose coordinates after index `k` are at most `½`
/// in modulus, with `K(x) ≤ k`.
pub fn c0_decaying_unit<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> =
        (0..d).map(|i| if i <= k { rng.random_range(-1.0..=1.0) } else { rng.random_range(-0.5..=0.5) }).collect();
    let top = rng.random_range(0..=k.min(d - 1));
    x[top] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    x
}

/// Last index with `|x_k| > ½` (0 when there is none).
pub fn c0_decay_index(x: &[f64]) -> usize {
    x.iter().rposition(|v| v.abs() > 0.5).unwrap_or(0)
}

/// `δ(x) = ½ Σ_{k>K(x)} W_k / Σ_k W_k` over the truncation.
pub fn c0_delta(weights: &[f64], x: &[f64]) -> f64 {
    let k = c0_decay_index(x);
    let mut big_w = vec![1.0];
    for w in weights {
        big_w.push(big_w.last().unwrap() * w);
    }
    let total: f64 = big_w.iter().sum();
    0.5 * big_w[k + 1..].iter().sum::<f64>() / total
}

/// Recomputes `‖T^n‖` from dense powers for `n ≤ N` and evaluates the
/// entry's behavior claims on seeded vectors.
pub fn verify_example(name: &str, d: usize, horizon: usize, tol: f64) -> Result<ExampleReport> {
    verify_example_with(name, d, horizon, tol, &ExampleParams::default())
}

pub fn verify_example_with(
    name: &str,
    d: usize,
    horizon: usize,
    tol: f64,
    params: &ExampleParams,
) -> Result<ExampleReport> {
    let e = entry(name)?;
    let t = build(name, d, params)?;
    let space = t.space;
    let dim = space.dim;
    if horizon == 0 {
        return Err(OrbitError::InvalidArgument("horizon must be positive".into()));
    }
    if let Some(h) = t.safe_horizon() {
        if horizon > h {
            return Err(OrbitError::HorizonExceeded { requested: horizon, horizon: h });
        }
    }
    let mut formula = Vec::with_capacity(horizon);
    let mut norms = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let generic = matrix_norm(&t.power_matrix(n), space, NormMethod::Auto).value;
        let predicted = predicted_norm(name, d, params, n)?;
        formula.push(equality(format!("‖T^{n}‖ = {}", e.norm_formula), predicted, generic, tol));
        norms.push(generic);
    }

    let mut behavior = Vec::new();
    let xs = random_vectors(&space, params.samples, params.seed);
    match e.name {
        UNWEIGHTED_SHIFT_L1 => {
            for (s, x) in xs.iter().enumerate() {
                let r = ratios(&t, x, horizon)?;
                let worst = (1..=horizon)
                    .map(|n| {
                        let tail: f64 = x[n..].iter().map(|v| v.abs()).sum();
                        (n, tail, r[n - 1])
                    })
                    .max_by(|a, b| (a.1 - a.2).abs().total_cmp(&(b.1 - b.2).abs()))
                    .unwrap();
                behavior.push(equality(format!("x#{s}: r_{} = tail mass", worst.0), worst.1, worst.2, tol));
                let rise = r.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                behavior.push(upper(format!("x#{s}: r_n non-increasing"), 0.0, rise, tol));
            }
            behavior.push(monotone_norms(&norms, tol));
        }
        WEIGHTED_SHIFT_LP => {
            let p = space.exponent().expect("lp space");
            for (s, x) in xs.iter().enumerate() {
                let r = ratios(&t, x, horizon)?;
                let (n, bound, got) = (1..=horizon)
                    .map(|n| (n, x[n..].iter().map(|v| v.abs().powf(p)).sum::<f64>(), r[n - 1].powf(p)))
                    .min_by(|a, b| (a.1 - a.2).total_cmp(&(b.1 - b.2)))
                    .unwrap();
                behavior.push(upper(format!("x#{s}: r_{n}^p ≤ tail mass"), bound, got, tol));
            }
        }
        C0_FIXED => {
            behavior.push(monotone_norms(&norms, tol));
            let w = weight_seq(params, d - 1, dyadic)?;
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let lo = horizon.div_ceil(2).max(1);
            let k = (lo - 1).min(8);
            for s in 0..params.samples {
                let x = c0_decaying_unit(d, k, &mut rng);
                let r = ratios(&t, &x, horizon)?;
                let top = r[lo - 1..].iter().copied().fold(0.0, f64::max);
                let bound = 1.0 - c0_delta(&w, &x);
                behavior.push(upper(
                    format!("x#{s}: max r_n ≤ 1 − δ(x), K(x) = {}", c0_decay_index(&x)),
                    bound,
                    top,
                    0.0,
                ));
            }
        }
        BLOCK_SHIFT_S => {
            let p = space.exponent().expect("lp space");
            let k = blocks_for_dim(d);
            for (s, x) in xs.iter().enumerate() {
                let r = ratios(&t, x, horizon)?;
                let sum: f64 = r.iter().map(|v| v.powf(p)).sum();
                behavior.push(upper(format!("x#{s}: Σ r_n^p ≤ 2‖x‖^p"), 2.0 * space.norm(x).powf(p), sum, tol));
                let n = (s % horizon) + 1;
                let img = t.apply_power(n, x)?;
                let whole = space.norm(&img).powf(p);
                let blocks: f64 = (1..=k)
                    .map(|b| {
                        let (o, len) = (block_offset(b), b + 1);
                        img[o..o + len].iter().map(|v| v.abs().powf(p)).sum::<f64>()
                    })
                    .sum();
                behavior.push(equality(format!("x#{s}: block identity at n = {n}"), blocks, whole, tol));
            }
        }
        COMPACT_DIAGONAL => {
            let p = space.exponent().expect("lp space");
            for (s, x) in xs.iter().enumerate() {
                let r = ratios(&t, x, horizon)?;
                let gap = r[horizon - 1].powf(p) - x[0].abs().powf(p);
                let bound = 0.5f64.powf(horizon as f64 * p) * space.norm(x).powf(p);
                behavior.push(upper(format!("x#{s}: r_N^p − |x_1|^p ≤ 2^(-Np)‖x‖^p"), bound, gap, tol));
                behavior.push(upper(format!("x#{s}: r_N^p ≥ |x_1|^p"), 0.0, -gap, tol));
            }
            let r = ratios(&t, &space.basis(0), horizon)?;
            behavior.push(equality("r_N(e_1) = 1".into(), 1.0, r[horizon - 1], tol));
        }
        _ => unreachable!("entry names are fixed"),
    }
    if e.doubled_variant {
        behavior.extend(doubled_checks(&t, &norms, &xs, horizon)?);
    }
    let pass = formula.iter().chain(&behavior).all(|c| c.pass);
    Ok(ExampleReport { name: name.into(), dim, horizon, tol, formula_checks: formula, behavior_checks: behavior, pass })
}

fn monotone_norms(norms: &[f64], tol: f64) -> ClaimCheck {
    let drop = norms.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    upper("‖T^n‖ non-decreasing".into(), 0.0, drop, tol * norms.iter().fold(0.0, |m: f64, v| m.max(*v)))
}

/// `2T`: norms strictly increase and every ratio equals the one for `T`.
fn doubled_checks(t: &OperatorSpec, norms: &[f64], xs: &[Vec<f64>], horizon: usize) -> Result<Vec<ClaimCheck>> {
    let two = t.scaled(2.0)?;
    let mut out = Vec::new();
    let doubled: Vec<f64> = norms.iter().enumerate().map(|(i, v)| v * 2f64.powi(i as i32 + 1)).collect();
    let rise = doubled.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    out.push(ClaimCheck {
        claim: "‖(2T)^n‖ strictly increasing".into(),
        predicted: 1.0,
        computed: rise,
        margin: rise - 1.0,
        pass: horizon == 1 || rise > 1.0,
    });
    let mut worst: f64 = 0.0;
    for x in xs {
        let a = ratios(t, x, horizon)?;
        let b = ratios(&two, x, horizon)?;
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    out.push(ClaimCheck {
        claim: "r_n(2T, x) = r_n(T, x)".into(),
        predicted: 0.0,
        computed: worst,
        margin: -worst,
        pass: worst == 0.0,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_entries() {
        let names: Vec<_> = gallery().iter().map(|e| e.name).collect();
        assert_eq!(names, vec![UNWEIGHTED_SHIFT_L1, WEIGHTED_SHIFT_LP, C0_FIXED, BLOCK_SHIFT_S, COMPACT_DIAGONAL]);
        assert!(entry("nope").is_err());
    }

    #[test]
    fn weighted_shift_p2() {
        let rep = verify_example(WEIGHTED_SHIFT_LP, 64, 12, 1e-9).unwrap();
        assert!(rep.pass, "{:?}", rep.failures());
        // oracle: ∏_{k=2}^{n+1} 2^{-k} = 2^{-(n+1)(n+2)/2 + 1}
        for (i, c) in rep.formula_checks.iter().enumerate() {
            let n = i as i32 + 1;
            assert_eq!(c.predicted, 2f64.powi(1 - (n + 1) * (n + 2) / 2));
        }
    }

    #[test]
    fn weighted_shift_p15() {
        let params = ExampleParams { p: Some(1.5), ..ExampleParams::default() };
        let rep = verify_example_with(WEIGHTED_SHIFT_LP, 32, 8, 1e-6, &params).unwrap();
        assert!(rep.pass, "{:?}", rep.failures());
    }

    #[test]
    fn unweighted_shift() {
        let rep = verify_example(UNWEIGHTED_SHIFT_L1, 40, 20, 1e-9).unwrap();
        assert!(rep.pass, "{:?}", rep.failures());
        assert!(rep.behavior_checks.iter().any(|c| c.claim.contains("2T")));
    }

    #[test]
    fn c0_example() {
        let rep = verify_example(C0_FIXED, 16, 12, 1e-15).unwrap();
        assert!(rep.pass, "{:?}", rep.failures());
        let x = [1.0, 0.0, 0.0];
        let w = [0.5, 0.25];
        // W_k = 1, 1/2, 1/8 and K = 0
        assert!((c0_delta(&w, &x) - 0.5 * 0.625 / 1.625).abs() < 1e-15);
    }

    #[test]
    fn block_shift() {
        for p in [1.0, 1.5, 2.0] {
            let params = ExampleParams { p: Some(p), ..ExampleParams::default() };
            let rep = verify_example_with(BLOCK_SHIFT_S, 65, 10, 1e-6, &params).unwrap();
            assert_eq!(rep.dim, 65);
            assert!(rep.pass, "p = {p}: {:?}", rep.failures());
            for (i, c) in rep.formula_checks.iter().enumerate() {
                assert_eq!(c.predicted, 2f64.powi(-((i as i32 + 1).pow(2))));
            }
        }
        assert_eq!(blocks_for_dim(64), 9);
        assert!(matches!(verify_example(BLOCK_SHIFT_S, 65, 11, 1e-9), Err(OrbitError::HorizonExceeded { .. })));
    }

    #[test]
    fn compact_diagonal() {
        let rep = verify_example(COMPACT_DIAGONAL, 20, 10, 1e-9).unwrap();
        assert!(rep.pass, "{:?}", rep.failures());
    }

    #[test]
    fn weights_are_validated() {
        let params = ExampleParams { weights: Some(vec![0.5, 0.6, 0.1]), ..ExampleParams::default() };
        assert!(build(COMPACT_DIAGONAL, 3, &params).is_err());
        let params = ExampleParams { weights: Some(vec![0.5]), ..ExampleParams::default() };
        assert!(build(COMPACT_DIAGONAL, 3, &params).is_err());
    }

    #[test]
    fn report_formats() {
        let rep = verify_example(COMPACT_DIAGONAL, 6, 3, 1e-9).unwrap();
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + rep.formula_checks.len() + rep.behavior_checks.len());
        let back: ExampleReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }
}

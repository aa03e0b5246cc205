//! Large-orbit vectors built by induction: the scale sequence `(α_i)`, the
//! block plan `(m_k)` and the step-by-step construction of
//! `x = Σ α_i u_i`, plus partial-sum diagnostics for `Σ r_n^q`.

mod build;
mod scan;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::moduli::{closed_kind_for, rho_bar_closed, ModulusKind, ModulusValue};
use crate::spaces::SpaceSpec;

pub use build::{
    construct_vector, construct_vector_with, verify_construction, ConstructOptions, ConstructionState, SparseVec,
    StepCase, StepRecord, VerifyReport,
};
pub use scan::{exponent_scan, exponent_scan_with, orbit_ratios, ExponentScan, QRow, XSource, DEFAULT_GROWTH_FRACTION};

/// A named nonnegative function on `[0, ∞)`.
#[derive(Clone)]
pub struct Gauge {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gauge({})", self.name)
    }
}

impl Gauge {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Gauge { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `t ↦ t^q`.
    pub fn power(q: f64) -> Self {
        Gauge::new(format!("t^{q}"), move |t| t.powf(q))
    }

    /// Upper closed form of `ρ̄` for the given kind. Intervals use their
    /// upper end, which must be known.
    pub fn rho_bar(kind: ModulusKind) -> Result<Self> {
        let probe = rho_bar_closed(kind, 0.5)?.value;
        if let ModulusValue::Interval { hi: None, .. } = probe {
            let p = match kind {
                ModulusKind::FunctionLp { p, .. } => p,
                _ => f64::NAN,
            };
            return Err(OrbitError::UnknownConstant { p });
        }
        Ok(Gauge::new(format!("rho_bar[{kind:?}]"), move |t| {
            rho_bar_closed(kind, t).ok().and_then(|v| v.value.hi()).unwrap_or(f64::INFINITY)
        }))
    }

    /// `ρ̄` of a truncated sequence space.
    pub fn rho_bar_for(space: &SpaceSpec) -> Self {
        Gauge::rho_bar(closed_kind_for(space)).expect("sequence spaces have closed forms")
    }
}

/// Geometric grid with 64 points per decade strictly inside `(1e-8, 1)`,
/// largest first.
pub fn scale_grid() -> Vec<f64> {
    (1..512).rev().map(|m| 10f64.powf(-8.0 + m as f64 / 64.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaBranch {
    /// `g` stays bounded below on the grid.
    BoundedBelow,
    /// `g` tends to zero.
    Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaBlock {
    pub scale: f64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSequence {
    pub branch: LemmaBranch,
    /// `α` is `scale` repeated `len` times, block after block.
    pub blocks: Vec<LemmaBlock>,
    pub sum_f: f64,
    pub block_g: Vec<f64>,
}

impl LemmaSequence {
    pub fn alpha(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| std::iter::repeat_n(b.scale, b.len)).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_g(&self) -> f64 {
        self.block_g.iter().sum()
    }
}

/// `g` values at or above this level at the bottom of the grid select the
/// bounded-below branch.
pub const BRANCH_THRESHOLD: f64 = 1e-3;

/// Scales `α_i → 0` with `Σ f(α_i)` small and `Σ g(α_i)` large: block `i`
/// repeats a scale `x_i < 1/i` about `1/g(x_i)` times, chosen with
/// `f(x_i)·len ≤ ε_i`, so every block adds at least `½` to `Σ g` and at most
/// `ε_i` to `Σ f`.
pub fn lemma_sequence(f: &Gauge, g: &Gauge, eps: &[f64], blocks: usize) -> Result<LemmaSequence> {
    if eps.len() < blocks {
        return Err(OrbitError::InvalidArgument(format!("need {blocks} tolerances, got {}", eps.len())));
    }
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(OrbitError::InvalidArgument("tolerances must be positive".into()));
    }
    let grid = scale_grid();
    let bottom = *grid.last().expect("nonempty grid");
    let branch = if g.eval(bottom) >= BRANCH_THRESHOLD { LemmaBranch::BoundedBelow } else { LemmaBranch::Vanishing };
    let mut out = Vec::with_capacity(blocks);
    let mut block_g = Vec::with_capacity(blocks);
    let mut sum_f = 0.0;
    for i in 1..=blocks {
        let e = eps[i - 1];
        let pick = grid.iter().copied().filter(|&t| t < 1.0 / i as f64).find_map(|t| {
            let (ft, gt) = (f.eval(t), g.eval(t));
            if !(gt > 0.0) {
                return None;
            }
            match branch {
                LemmaBranch::Vanishing => (ft <= e * gt && gt <= 0.5).then(|| (t, (1.0 / gt).floor() as usize, ft, gt)),
                LemmaBranch::BoundedBelow => {
                    let len = (1.0 / gt).ceil().max(1.0) as usize;
                    (ft * len as f64 <= e).then_some((t, len, ft, gt))
                }
            }
        });
        let (t, len, ft, gt) = pick.ok_or(OrbitError::SearchFailure { block: i })?;
        sum_f += ft * len as f64;
        block_g.push(gt * len as f64);
        out.push(LemmaBlock { scale: t, len });
    }
    let eps_sum: f64 = eps[..blocks].iter().sum();
    if sum_f > eps_sum * (1.0 + 1e-12) {
        return Err(OrbitError::ClaimFailed(format!("Σf = {sum_f} exceeds Σε = {eps_sum}")));
    }
    if let Some(i) = block_g.iter().position(|s| *s < 0.5) {
        return Err(OrbitError::ClaimFailed(format!("block {} has Σg = {} < 1/2", i + 1, block_g[i])));
    }
    Ok(LemmaSequence { branch, blocks: out, sum_f, block_g })
}

/// How `α` continues past its last entry when bounding block products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TailModel {
    /// The sequence stops at `L`.
    Finite,
    /// `α_{L+j} = α_L q^j` with `q = α_L/α_{L−1}` read off the data.
    GeometricFromData,
    Geometric {
        ratio: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub tail: TailModel,
    /// `β_i = beta_ratio^i`.
    pub beta_ratio: f64,
    pub min_blocks: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { tail: TailModel::GeometricFromData, beta_ratio: 0.5, min_blocks: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStart {
    /// Block index `k`; may be zero or negative when `α_1 > 1/2`.
    pub k: i32,
    /// First step of the block, 1-based.
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct SequencePlan {
    /// Non-increasing scales `α_1..α_L`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub blocks: Vec<BlockStart>,
    pub rho_bar: Gauge,
    pub rho: Gauge,
    /// Whether the input had to be sorted.
    pub sorted: bool,
    pub options: PlanOptions,
}

impl SequencePlan {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Block containing step `i` (1-based).
    pub fn block_of(&self, i: usize) -> BlockStart {
        *self.blocks.iter().rev().find(|b| b.m <= i).expect("first block starts at 1")
    }

    /// `ln(2^{1−k} ∏_{i=m_k}^{l} (1+β_i)(1+ρ̄(2^k α_i)))`: the logarithm of
    /// the block-sum bound at step `l`.
    pub fn ln_block_bound(&self, l: usize) -> f64 {
        let b = self.block_of(l);
        let scale = 2f64.powi(b.k);
        let mut s = (1 - b.k) as f64 * std::f64::consts::LN_2;
        for i in b.m..=l {
            s += self.beta[i - 1].ln_1p() + self.rho_bar.eval(scale * self.alpha[i - 1]).ln_1p();
        }
        s
    }

    /// Re-checks `α_i ≤ 2^{-k}` and `Σ_{i ≥ m_k} ln(1+ρ̄(2^k α_i)) ≤ ln 2`
    /// (tail included) for every block.
    pub fn check(&self) -> Result<()> {
        for b in &self.blocks {
            if !block_condition(&self.alpha, &self.rho_bar, self.options.tail, b.k, b.m) {
                return Err(OrbitError::PlanInfeasible(format!("block k = {} starting at {} fails", b.k, b.m)));
            }
        }
        Ok(())
    }
}

fn tail_ratio(alpha: &[f64], tail: TailModel) -> Option<f64> {
    match tail {
        TailModel::Finite => None,
        TailModel::Geometric { ratio } => Some(ratio),
        TailModel::GeometricFromData => {
            let l = alpha.len();
            Some(if l >= 2 { alpha[l - 1] / alpha[l - 2] } else { 1.0 })
        }
    }
}

/// Upper bound `Σ_{j ≥ 1} ρ̄(t q^j)` for `Σ_{j ≥ 1} ln(1+ρ̄(t q^j))`.
/// Convexity of `ρ̄` with `ρ̄(0) = 0` gives
/// `ρ̄(λs) ≤ λρ̄(s)`, so the remainder after the last summed term is at most
/// that term times `q/(1−q)`.
fn tail_sum(rho_bar: &Gauge, t: f64, q: f64) -> f64 {
    if rho_bar.eval(t) == 0.0 {
        return 0.0;
    }
    if !(q < 1.0) {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    let mut s = t;
    for _ in 0..200_000 {
        s *= q;
        let term = rho_bar.eval(s);
        sum += term;
        if term <= 1e-17 * sum.max(1e-300) {
            return sum + term * q / (1.0 - q);
        }
    }
    sum + rho_bar.eval(s) * q / (1.0 - q)
}

fn block_condition(alpha: &[f64], rho_bar: &Gauge, tail: TailModel, k: i32, m: usize) -> bool {
    let scale = 2f64.powi(k);
    if alpha[m - 1] > 1.0 / scale {
        return false;
    }
    let head: f64 = alpha[m - 1..].iter().map(|a| rho_bar.eval(scale * a).ln_1p()).sum();
    let tail = tail_ratio(alpha, tail).map_or(0.0, |q| tail_sum(rho_bar, scale * alpha[alpha.len() - 1], q));
    head + tail <= std::f64::consts::LN_2
}

/// Block starts `m_k`: each the smallest index after the previous start
/// with `α_i ≤ 2^{-k}` for `i ≥ m_k` and `∏_{i ≥ m_k}(1+ρ̄(2^k α_i)) ≤ 2`.
///
/// The first block starts at step 1 with the largest `k ≤ 1` meeting both
/// conditions from there.
pub fn plan_blocks(alpha: &[f64], rho_bar: &Gauge, rho: &Gauge, options: PlanOptions) -> Result<SequencePlan> {
    if alpha.is_empty() {
        return Err(OrbitError::PlanInfeasible("empty scale sequence".into()));
    }
    if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(OrbitError::InvalidArgument("scales must be positive and finite".into()));
    }
    let mut sorted_alpha = alpha.to_vec();
    sorted_alpha.sort_by(|a, b| b.total_cmp(a));
    let sorted = sorted_alpha != alpha;
    let alpha = sorted_alpha;
    let tail = options.tail;

    let k_start = (-64..=1)
        .rev()
        .find(|&k| block_condition(&alpha, rho_bar, tail, k, 1))
        .ok_or_else(|| OrbitError::PlanInfeasible("no starting block meets the product bound".into()))?;
    let mut blocks = vec![BlockStart { k: k_start, m: 1 }];
    let mut k = k_start + 1;
    loop {
        let prev = blocks.last().unwrap().m;
        match (prev + 1..=alpha.len()).find(|&m| block_condition(&alpha, rho_bar, tail, k, m)) {
            Some(m) => blocks.push(BlockStart { k, m }),
            None => break,
        }
        k += 1;
    }
    if blocks.len() < options.min_blocks {
        return Err(OrbitError::PlanInfeasible(format!(
            "only {} blocks fit, {} required",
            blocks.len(),
            options.min_blocks
        )));
    }
    let beta = (1..=alpha.len()).map(|i| options.beta_ratio.powi(i as i32)).collect();
    Ok(SequencePlan { alpha, beta, blocks, rho_bar: rho_bar.clone(), rho: rho.clone(), sorted, options })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyadic(n: usize) -> Vec<f64> {
        (1..=n).map(|i| 0.5f64.powi(i as i32)).collect()
    }

    #[test]
    fn lemma_quadratic_over_linear() {
        let f = Gauge::power(2.0);
        let g = Gauge::power(1.0);
        let seq = lemma_sequence(&f, &g, &dyadic(8), 8).unwrap();
        assert_eq!(seq.branch, LemmaBranch::Vanishing);
        assert!(seq.sum_f <= 1.0 + 1e-9);
        for (i, b) in seq.blocks.iter().enumerate() {
            let bound = 0.5f64.powi(i as i32 + 1);
            // largest grid point at or below 2^{-i}
            assert!(b.scale <= bound && b.scale > bound * 10f64.powf(-1.0 / 64.0));
            assert!(b.len >= 1 << (i + 1));
            assert!((0.5..=1.0).contains(&seq.block_g[i]));
        }
        assert!(seq.total_g() >= 4.0);
        let direct: f64 = seq.alpha().iter().map(|a| a * a).sum();
        assert!((direct - seq.sum_f).abs() < 1e-12);
    }

    #[test]
    fn lemma_rejects_equal_gauges() {
        let f = Gauge::power(1.0);
        assert_eq!(lemma_sequence(&f, &f, &dyadic(3), 3), Err(OrbitError::SearchFailure { block: 1 }));
    }

    #[test]
    fn lemma_with_l2_modulus() {
        let f = Gauge::rho_bar(ModulusKind::SeqLp { p: 2.0 }).unwrap();
        let g = Gauge::power(1.5);
        let seq = lemma_sequence(&f, &g, &dyadic(5), 5).unwrap();
        assert!(seq.sum_f <= 1.0);
        assert!(seq.total_g() >= 2.5);
    }

    #[test]
    fn lemma_bounded_below_branch() {
        let f = Gauge::power(2.0);
        let g = Gauge::new("one", |_| 1.0);
        let seq = lemma_sequence(&f, &g, &dyadic(4), 4).unwrap();
        assert_eq!(seq.branch, LemmaBranch::BoundedBelow);
        assert!(seq.sum_f <= 1.0);
        assert!(seq.block_g.iter().all(|s| *s >= 1.0));
    }

    #[test]
    fn plan_for_doubled_dyadic_scales() {
        let alpha: Vec<f64> = (1..=20).map(|i| 2.0 * 0.5f64.powi(i)).collect();
        let rb = Gauge::rho_bar(ModulusKind::SeqLp { p: 2.0 }).unwrap();
        let plan = plan_blocks(&alpha, &rb, &Gauge::power(1.0), PlanOptions::default()).unwrap();
        assert!(!plan.sorted);
        assert_eq!(plan.blocks[0], BlockStart { k: 0, m: 1 });
        // oracle: with 2^k α_i = 2^{k+1-i}, the product over i ≥ m is bounded
        // by a fixed geometric series once 2^k α_m ≤ 1
        for (j, b) in plan.blocks.iter().enumerate().skip(1) {
            assert_eq!(b.k, j as i32);
            assert_eq!(b.m, j + 1);
        }
        plan.check().unwrap();
        for l in 1..=20 {
            let b = plan.block_of(l);
            assert!(plan.alpha[l - 1] <= 2f64.powi(-b.k));
        }
    }

    #[test]
    fn plan_with_zero_modulus() {
        let alpha: Vec<f64> = (1..=12).map(|i| 1.0 / i as f64).collect();
        let zero = Gauge::rho_bar(ModulusKind::C0).unwrap();
        let plan = plan_blocks(&alpha, &zero, &Gauge::power(1.0), PlanOptions::default()).unwrap();
        for b in plan.blocks.iter().skip(1) {
            let first = (1..=12).find(|&i| alpha[i - 1] <= 2f64.powi(-b.k)).unwrap();
            assert_eq!(b.m, first.max(2));
        }
    }

    #[test]
    fn constant_scales_are_infeasible() {
        let rb = Gauge::rho_bar(ModulusKind::SeqLp { p: 2.0 }).unwrap();
        let r = plan_blocks(&[0.1; 50], &rb, &Gauge::power(1.0), PlanOptions::default());
        assert!(matches!(r, Err(OrbitError::PlanInfeasible(_))));
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let rb = Gauge::rho_bar(ModulusKind::SeqLp { p: 2.0 }).unwrap();
        let opts = PlanOptions { tail: TailModel::Finite, ..PlanOptions::default() };
        let plan = plan_blocks(&[0.01, 0.2, 0.05], &rb, &Gauge::power(1.0), opts).unwrap();
        assert!(plan.sorted);
        assert_eq!(plan.alpha, vec![0.2, 0.05, 0.01]);
    }

    #[test]
    fn tail_sum_matches_closed_geometric_series() {
        // ρ(t) = t²: Σ_{j≥1} ln(1 + (t q^j)²) ≈ Σ t² q^{2j} for small t
        let g = Gauge::power(2.0);
        let (t, q) = (1e-3, 0.9);
        let exact = t * t * q * q / (1.0 - q * q);
        assert!((tail_sum(&g, t, q) - exact).abs() <= 1e-6 * exact);
        assert_eq!(tail_sum(&g, t, 1.0), f64::INFINITY);
    }
}

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Gauge, SequencePlan};
use crate::error::{OrbitError, Result};
use crate::linalg;
use crate::operators::OperatorSpec;
use crate::powernorms::{closed_form_power_norm, matrix_norm, restricted_normalized, NormMethod, NormalizedPower};

/// Sparse vector as `(index, value)` pairs sorted by index.
pub type SparseVec = Vec<(usize, f64)>;

fn sparse(v: &[f64]) -> SparseVec {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).collect()
}

fn sparse_dot(s: &SparseVec, x: &[f64]) -> f64 {
    s.iter().map(|(i, v)| v * x[*i]).sum()
}

/// `g(v)` for sparse `g` and sparse `v`.
fn sparse_pair(g: &SparseVec, v: &SparseVec) -> f64 {
    v.iter().filter_map(|(i, vi)| g.binary_search_by_key(i, |(j, _)| *j).ok().map(|p| g[p].1 * vi)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCase {
    /// First step of a block: the block bound holds for any unit `u`.
    BlockStart,
    /// `‖s_l‖ ≤ 2^{-k}`: the block bound holds for any unit `u`.
    SmallSum,
    /// `u` must also lie in a tail subspace where the smoothness bound holds.
    Modulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub l: usize,
    pub n: usize,
    pub case: StepCase,
    pub k: i32,
    /// `‖s_l‖` after the step.
    pub s_norm: f64,
    /// `min_j ‖T^{n_j} x_l‖ / ((α_j/2)‖T^{n_j}‖)`, certified through the
    /// stored norming functionals.
    pub orbit_margin: f64,
    /// The same minimum from fresh norm evaluations, when affordable.
    pub orbit_margin_exact: Option<f64>,
    /// `‖s_l‖` over its block bound.
    pub block_ratio: f64,
    /// Left over right side of the smoothness bound in the modulus case.
    pub smoothness_ratio: Option<f64>,
    /// `structured` or `generic` maximizer search.
    pub search: String,
}

#[derive(Debug, Clone)]
pub struct ConstructionState {
    pub l: usize,
    pub x: Vec<f64>,
    /// Sum over the current block.
    pub s: Vec<f64>,
    pub n: Vec<usize>,
    pub u: Vec<SparseVec>,
    /// Norming functional `f_j` of `T^{n_j} x_j`.
    pub f: Vec<SparseVec>,
    /// `g_j = (T^{n_j}/‖T^{n_j}‖)ᵀ f_j`; later directions lie in its kernel.
    pub g: Vec<SparseVec>,
    pub k: i32,
    pub alpha: Vec<f64>,
    pub trace: Vec<StepRecord>,
}

impl ConstructionState {
    /// One JSON record per step.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|r| serde_json::to_string(r).expect("step record serializes") + "\n").collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstructOptions {
    pub n_search_max: usize,
    /// Steps to run; the whole plan when `None`.
    pub steps: Option<usize>,
    /// Largest dimension for the dense restricted-norm fallback.
    pub generic_dim_limit: usize,
    /// Fresh per-step margins are computed while `dim · l` stays below this.
    pub exact_check_limit: usize,
    pub candidate_limit: usize,
}

impl ConstructOptions {
    pub fn new(n_search_max: usize) -> Self {
        ConstructOptions {
            n_search_max,
            steps: None,
            generic_dim_limit: 2048,
            exact_check_limit: 20_000_000,
            candidate_limit: 256,
        }
    }
}

pub fn construct_vector(
    t: &OperatorSpec,
    plan: &SequencePlan,
    n_search_max: usize,
) -> Result<(Vec<f64>, ConstructionState)> {
    construct_vector_with(t, plan, &ConstructOptions::new(n_search_max))
}

struct Found {
    n: usize,
    power: NormalizedPower,
    v: Vec<f64>,
    how: &'static str,
}

/// Builds `x_L = Σ_{i ≤ L} α_i u_i` step by step so that
/// `‖T^{n_j} x_l‖ ≥ (α_j/2)‖T^{n_j}‖` for all `j ≤ l` and the block sums
/// `s_l` obey `‖s_l‖ ≤ 2^{1−k} ∏(1+β_i)(1+ρ̄(2^k α_i))`.
///
/// Each new direction lies in the kernels of all earlier `g_j`. In the
/// modulus case it is also supported beyond the support of `s_l`, where
/// `‖s_l/‖s_l‖ + t y‖ = 1 + ρ̄(t)` holds exactly in `ℓ^p` and `c0`.
pub fn construct_vector_with(
    t: &OperatorSpec,
    plan: &SequencePlan,
    opts: &ConstructOptions,
) -> Result<(Vec<f64>, ConstructionState)> {
    let space = t.space;
    let d = space.dim;
    let steps = opts.steps.unwrap_or(plan.len());
    if steps > plan.len() {
        return Err(OrbitError::PlanExhausted(plan.len()));
    }
    let mut st = ConstructionState {
        l: 0,
        x: space.zeros(),
        s: space.zeros(),
        n: Vec::new(),
        u: Vec::new(),
        f: Vec::new(),
        g: Vec::new(),
        k: plan.blocks[0].k,
        alpha: plan.alpha[..steps].to_vec(),
        trace: Vec::new(),
    };
    let mut s_top: Option<usize> = None;

    for l1 in 1..=steps {
        let alpha = plan.alpha[l1 - 1];
        let block = plan.block_of(l1);
        let case = if block.m == l1 {
            StepCase::BlockStart
        } else if space.norm(&st.s) <= 2f64.powi(-st.k) {
            StepCase::SmallSum
        } else {
            StepCase::Modulus
        };
        if case == StepCase::BlockStart {
            st.s.iter_mut().for_each(|v| *v = 0.0);
            s_top = None;
            st.k = block.k;
        }
        let floor = match case {
            StepCase::Modulus => s_top.map_or(0, |m| m + 1),
            _ => 0,
        };
        let n_lo = st.n.last().map_or(1, |n| n + 1);
        if n_lo > opts.n_search_max {
            return Err(OrbitError::PlanExhausted(l1 - 1));
        }

        let in_subspace = |c: &SparseVec| {
            c.iter().all(|(i, _)| *i >= floor)
                && st.g.iter().all(|g| {
                    let scale: f64 = g.iter().map(|(_, v)| v.abs()).sum::<f64>().max(1.0);
                    sparse_pair(g, c).abs() <= 1e-12 * scale
                })
        };
        let mut generic_basis: Option<DMatrix<f64>> = None;
        let mut found: Option<Found> = None;
        for n in n_lo..=opts.n_search_max {
            let power = NormalizedPower::new(t, n)?;
            if power.is_zero() {
                break;
            }
            let hit = power.norming_candidates(opts.candidate_limit).into_iter().find(|c| in_subspace(c));
            if let Some(c) = hit {
                let mut v = space.zeros();
                c.iter().for_each(|(i, x)| v[*i] = *x);
                let v = space.normalize(&v)?;
                found = Some(Found { n, power, v, how: "structured" });
                break;
            }
            if d > opts.generic_dim_limit {
                continue;
            }
            let basis = generic_basis.get_or_insert_with(|| {
                let rows = st.g.len() + floor;
                let mut c = DMatrix::zeros(rows, d);
                for (r, g) in st.g.iter().enumerate() {
                    g.iter().for_each(|(i, v)| c[(r, *i)] = *v);
                }
                for i in 0..floor {
                    c[(st.g.len() + i, i)] = 1.0;
                }
                linalg::null_space(&c)
            });
            if basis.ncols() == 0 {
                break;
            }
            let est = restricted_normalized(&power, basis, 4)?;
            if est.value < 0.5 {
                continue;
            }
            let Some(mut v) = est.maximizer else { continue };
            v[..floor].iter_mut().for_each(|x| *x = 0.0);
            let Ok(v) = space.normalize(&v) else { continue };
            if power.image_norm(&v) >= 0.5 {
                found = Some(Found { n, power, v, how: "generic" });
                break;
            }
        }
        let Found { n, power, v, how } = found.ok_or(OrbitError::StarFails { step: l1, n_max: opts.n_search_max })?;

        // one of x ± αv has image at least α/2 since the two images differ by 2α‖P v‖ ≥ α
        let shifted = |sgn: f64| -> Vec<f64> { st.x.iter().zip(&v).map(|(a, b)| a + sgn * alpha * b).collect() };
        let plus = shifted(1.0);
        let minus = shifted(-1.0);
        let sign = if power.image_norm(&plus) >= power.image_norm(&minus) { 1.0 } else { -1.0 };
        let u: Vec<f64> = v.iter().map(|x| sign * x).collect();

        let mut smoothness_ratio = None;
        if case == StepCase::Modulus {
            let s_norm = space.norm(&st.s);
            let tk = 2f64.powi(st.k) * alpha;
            let rhs = s_norm * (1.0 + plan.beta[l1 - 1]) * (1.0 + plan.rho_bar.eval(tk));
            let far: Vec<f64> = st.s.iter().zip(&u).map(|(a, b)| a + tk * s_norm * b).collect();
            let near: Vec<f64> = st.s.iter().zip(&u).map(|(a, b)| a + alpha * b).collect();
            let ratio = space.norm(&far) / rhs;
            if ratio > 1.0 + 1e-12 || space.norm(&near) > rhs * (1.0 + 1e-12) {
                return Err(OrbitError::ClaimFailed(format!("smoothness bound fails at step {l1}: ratio {ratio}")));
            }
            smoothness_ratio = Some(ratio);
        }

        for (i, ui) in u.iter().enumerate() {
            if *ui != 0.0 {
                st.x[i] += alpha * ui;
                st.s[i] += alpha * ui;
                s_top = Some(s_top.map_or(i, |m| m.max(i)));
            }
        }
        let image = power.apply(&st.x);
        let f = space.duality_functional(&image)?;
        let g = sparse(&power.apply_transpose(&f.coeffs));
        st.n.push(n);
        st.u.push(sparse(&u));
        st.f.push(sparse(&f.coeffs));
        st.g.push(g);
        st.l = l1;

        let mut margin = f64::INFINITY;
        for (j, g) in st.g.iter().enumerate() {
            let half = st.alpha[j] / 2.0;
            let certified = if j + 1 == l1 { power.image_norm(&st.x) } else { sparse_dot(g, &st.x).abs() };
            margin = margin.min(certified / half);
        }
        let margin_exact = if d.saturating_mul(l1) <= opts.exact_check_limit {
            let mut m = f64::INFINITY;
            for (j, &nj) in st.n.iter().enumerate() {
                m = m.min(NormalizedPower::new(t, nj)?.image_norm(&st.x) / (st.alpha[j] / 2.0));
            }
            Some(m)
        } else {
            None
        };
        if margin < 1.0 - 1e-9 || margin_exact.is_some_and(|m| m < 1.0 - 1e-9) {
            return Err(OrbitError::ClaimFailed(format!("orbit lower bound fails at step {l1}: margin {margin}")));
        }
        let s_norm = space.norm(&st.s);
        let ln_bound = plan.ln_block_bound(l1);
        let block_ratio = (s_norm.ln() - ln_bound).exp();
        if block_ratio > 1.0 + 1e-12 {
            return Err(OrbitError::ClaimFailed(format!("block bound fails at step {l1}: ratio {block_ratio}")));
        }
        st.trace.push(StepRecord {
            l: l1,
            n,
            case,
            k: st.k,
            s_norm,
            orbit_margin: margin,
            orbit_margin_exact: margin_exact,
            block_ratio,
            smoothness_ratio,
            search: how.to_string(),
        });
    }
    Ok((st.x.clone(), st))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// Fresh `‖T^{n_j} x‖/‖T^{n_j}‖`.
    pub ratios: Vec<f64>,
    /// `ratio_j / (α_j/2)`.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    /// `P_J = Σ_{j ≤ J} ρ(α_j/2)`.
    pub predicted: Vec<f64>,
    /// `Σ_{j ≤ J} ρ(ratio_j)`.
    pub realized: Vec<f64>,
    /// Whether a second, unnormalized evaluation `‖T^n x‖ / ‖T^n‖` was used.
    pub direct_checked: Vec<bool>,
}

/// Recomputes every `‖T^{n_j} x‖/‖T^{n_j}‖` from scratch and compares the
/// realized partial sums of `ρ` with the predicted ones.
///
/// For dimensions up to 512 the ratio is also evaluated without the
/// normalized power (explicit power and separately computed power norm)
/// whenever `‖T^n‖` is representable, and the smaller value is used.
pub fn verify_construction(
    t: &OperatorSpec,
    x: &[f64],
    state: &ConstructionState,
    rho: &Gauge,
) -> Result<VerifyReport> {
    t.space.check(x)?;
    let mut rep = VerifyReport {
        ratios: Vec::new(),
        margins: Vec::new(),
        min_margin: f64::INFINITY,
        predicted: Vec::new(),
        realized: Vec::new(),
        direct_checked: Vec::new(),
    };
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for (j, &n) in state.n.iter().enumerate() {
        let half = state.alpha[j] / 2.0;
        let mut r = NormalizedPower::new(t, n)?.image_norm(x);
        let mut direct = false;
        if t.dim() <= 512 {
            let norm = match closed_form_power_norm(t, n) {
                Some(pn) => pn.value,
                None => matrix_norm(&t.power_matrix(n), t.space, NormMethod::Auto).value,
            };
            if norm.is_normal() && norm.is_finite() {
                let img = t.apply_power(n, x)?;
                r = r.min(t.space.norm(&img) / norm);
                direct = true;
            }
        }
        if r < half * (1.0 - 1e-9) {
            return Err(OrbitError::VerificationFailure { n, ratio: r, required: half });
        }
        p_sum += rho.eval(half);
        r_sum += rho.eval(r);
        if r_sum < p_sum * (1.0 - 1e-12) {
            return Err(OrbitError::VerificationFailure { n, ratio: r, required: half });
        }
        rep.min_margin = rep.min_margin.min(r / half);
        rep.ratios.push(r);
        rep.margins.push(r / half);
        rep.predicted.push(p_sum);
        rep.realized.push(r_sum);
        rep.direct_checked.push(direct);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{plan_blocks, PlanOptions, TailModel};
    use crate::operators::Operator;
    use crate::spaces::SpaceSpec;

    fn plan_for(alpha: &[f64], space: &SpaceSpec, tail: TailModel) -> SequencePlan {
        let opts = PlanOptions { tail, ..PlanOptions::default() };
        plan_blocks(alpha, &Gauge::rho_bar_for(space), &Gauge::power(1.0), opts).unwrap()
    }

    #[test]
    fn doubled_shift_construction() {
        let sp = SpaceSpec::lp(2.0, 128).unwrap();
        let t = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap().scaled(2.0).unwrap();
        let alpha: Vec<f64> = (1..=12).map(|i| 2.0 * 0.5f64.powi(i)).collect();
        let plan = plan_for(&alpha, &sp, TailModel::GeometricFromData);
        let (x, st) = construct_vector(&t, &plan, 127).unwrap();
        assert_eq!(st.n.len(), 12);
        assert!(st.trace.iter().all(|r| r.orbit_margin >= 1.0 - 1e-9 && r.block_ratio <= 1.0 + 1e-12));
        let rep = verify_construction(&t, &x, &st, &Gauge::power(1.0)).unwrap();
        assert!(rep.min_margin >= 1.0 - 1e-9);
        assert!(rep.direct_checked.iter().all(|c| *c));
        // oracle: ‖T^{n_j} x‖ ≥ (α_j/2)·2^{n_j}
        for (j, &n) in st.n.iter().enumerate() {
            let img = t.apply_power(n, &x).unwrap();
            assert!(sp.norm(&img) >= alpha[j] / 2.0 * 2f64.powi(n as i32) * (1.0 - 1e-12));
        }
        assert_eq!(st.trace_jsonl().lines().count(), 12);
    }

    #[test]
    fn modulus_case_is_exercised() {
        // 200 equal scales: block k = 1 spans steps 63..165 and its sum
        // 0.05·√(l−62) passes 1/2 near l = 163
        let alpha = vec![0.05; 200];
        let d = 400;
        let sp = SpaceSpec::lp(2.0, d).unwrap();
        let t = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap();
        let plan = plan_for(&alpha, &sp, TailModel::Finite);
        assert_eq!(plan.blocks[1].k, 1);
        let opts = ConstructOptions { steps: Some(180), ..ConstructOptions::new(d - 1) };
        let (x, st) = construct_vector_with(&t, &plan, &opts).unwrap();
        assert!(st.trace.iter().any(|r| r.case == StepCase::Modulus));
        for r in st.trace.iter().filter(|r| r.case == StepCase::Modulus) {
            assert!(r.smoothness_ratio.unwrap() <= 1.0 + 1e-12);
        }
        verify_construction(&t, &x, &st, &Gauge::power(1.0)).unwrap();
    }

    #[test]
    fn identity_construction() {
        let sp = SpaceSpec::lp(3.0, 16).unwrap();
        let t = OperatorSpec::identity(sp);
        let alpha: Vec<f64> = (1..=6).map(|i| 0.5f64.powi(i)).collect();
        let plan = plan_for(&alpha, &sp, TailModel::GeometricFromData);
        let (x, st) = construct_vector(&t, &plan, 10).unwrap();
        for (j, a) in alpha.iter().enumerate() {
            assert!(sp.norm(&x) >= a / 2.0);
            assert!(st.trace[j].orbit_margin >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn dense_operator_uses_generic_search() {
        let sp = SpaceSpec::lp(2.0, 12).unwrap();
        let m = DMatrix::from_fn(12, 12, |i, j| {
            if j == i + 1 {
                1.1
            } else if i == j {
                0.3
            } else {
                0.0
            }
        });
        let t = OperatorSpec::new(Operator::Dense(m), sp).unwrap();
        let alpha: Vec<f64> = (1..=4).map(|i| 0.5f64.powi(i)).collect();
        let plan = plan_for(&alpha, &sp, TailModel::GeometricFromData);
        let (x, st) = construct_vector(&t, &plan, 11).unwrap();
        assert!(st.trace.iter().all(|r| r.search == "generic"));
        verify_construction(&t, &x, &st, &Gauge::power(1.0)).unwrap();
    }

    #[test]
    fn nilpotent_shift_runs_out() {
        let sp = SpaceSpec::lp(2.0, 6).unwrap();
        let t = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap();
        let alpha: Vec<f64> = (1..=10).map(|i| 0.5f64.powi(i)).collect();
        let plan = plan_for(&alpha, &sp, TailModel::GeometricFromData);
        let err = construct_vector(&t, &plan, 10).unwrap_err();
        assert!(matches!(err, OrbitError::StarFails { .. }), "{err:?}");
    }

    #[test]
    fn empty_construction_verifies() {
        let sp = SpaceSpec::lp(2.0, 4).unwrap();
        let t = OperatorSpec::identity(sp);
        let plan = plan_for(&[0.25, 0.125], &sp, TailModel::GeometricFromData);
        let opts = ConstructOptions { steps: Some(0), ..ConstructOptions::new(4) };
        let (x, st) = construct_vector_with(&t, &plan, &opts).unwrap();
        let rep = verify_construction(&t, &x, &st, &Gauge::power(1.0)).unwrap();
        assert!(rep.predicted.is_empty() && rep.realized.is_empty());
    }
}

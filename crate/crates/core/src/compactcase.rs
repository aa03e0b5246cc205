//! Big orbits for operators whose power norms do not decay: the compact
//! cluster-point vector, the reflexive variant, the finite-codimension
//! dichotomy and an upper estimate of the essential norm `‖T‖_μ`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::operators::OperatorSpec;
use crate::powernorms::{power_norm_table, restricted_norm, restricted_normalized, NormalizedPower, SubspaceSpec};
use crate::spaces::{argmax_abs, Functional, SpaceSpec};

fn check_monotone(t: &OperatorSpec, horizon: usize) -> Result<()> {
    let table = power_norm_table(t, horizon)?;
    for w in table.entries.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.ln_value < a.ln_value - 1e-12 {
            return Err(OrbitError::NormsNotMonotone { n: b.n, prev: a.value, next: b.value });
        }
    }
    Ok(())
}

/// Flip the sign so the largest coordinate (lowest index on ties) is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    if v[argmax_abs(&v)] < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    v
}

fn distance(space: &SpaceSpec, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    space.norm(&diff)
}

/// Index with the most other points within `tol`, lowest index on ties,
/// together with its neighborhood (itself included).
fn densest(space: &SpaceSpec, points: &[Vec<f64>], tol: f64) -> (usize, Vec<usize>) {
    let mut best = (0, Vec::new());
    for i in 0..points.len() {
        let hood: Vec<usize> = (0..points.len()).filter(|&j| distance(space, &points[i], &points[j]) <= tol).collect();
        if hood.len() > best.1.len() {
            best = (i, hood);
        }
    }
    best
}

fn maximizers(t: &OperatorSpec, horizon: usize) -> Result<(Vec<NormalizedPower>, Vec<Vec<f64>>)> {
    let powers: Vec<NormalizedPower> = (1..=horizon).map(|n| NormalizedPower::new(t, n)).collect::<Result<_>>()?;
    let xs = powers.iter().map(|p| p.maximizer().map(canonical_sign)).collect::<Result<_>>()?;
    Ok((powers, xs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigOrbitVector {
    pub x: Vec<f64>,
    /// Index `N₀` (1-based) of the chosen maximizer.
    pub n0: usize,
    /// Indices whose maximizers fall in the chosen cluster.
    pub cluster: Vec<usize>,
    /// All `n ≤ N` with `‖T^n x‖ ≥ (1−ε)‖T^n‖`.
    pub hits: Vec<usize>,
}

/// Norm maximizers `x_n` for `n ≤ N` are grouped by the distance between
/// their images `T x_n` (tolerance `ε/2`); the center of the densest group
/// is returned together with the indices where its orbit ratio is at least
/// `1 − ε`.
pub fn compact_big_orbit_vector(t: &OperatorSpec, epsilon: f64, horizon: usize) -> Result<BigOrbitVector> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(OrbitError::InvalidArgument("epsilon must lie in (0, 1)".into()));
    }
    check_monotone(t, horizon)?;
    let (powers, xs) = maximizers(t, horizon)?;
    for (p, x) in powers.iter().zip(&xs) {
        let r = p.image_norm(x);
        if r < 1.0 - epsilon / 2.0 {
            return Err(OrbitError::NormingFailure { n: p.n, achieved: r, required: 1.0 - epsilon / 2.0 });
        }
    }
    let images: Vec<Vec<f64>> = xs.iter().map(|x| t.apply(x)).collect::<Result<_>>()?;
    let (i0, cluster) = densest(&t.space, &images, epsilon / 2.0);
    if cluster.len() < 2 {
        return Err(OrbitError::EmptyCluster { tol: epsilon / 2.0 });
    }
    let x = xs[i0].clone();
    let hits = powers.iter().filter(|p| p.image_norm(&x) >= 1.0 - epsilon).map(|p| p.n).collect();
    Ok(BigOrbitVector { x, n0: i0 + 1, cluster: cluster.iter().map(|i| i + 1).collect(), hits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflexiveOutcome {
    pub x: Vec<f64>,
    pub cluster: Vec<usize>,
    /// `max_{n ∈ [⌈N/2⌉, N]} ‖T^n x‖/‖T^n‖`.
    pub estimate: f64,
}

/// Maximizers `x_n` grouped in `X` with tolerance `tol`; `x` is the mean of
/// the densest group, so `‖x‖ ≤ 1`.
pub fn reflexive_big_orbit_vector(t: &OperatorSpec, horizon: usize, tol: f64) -> Result<ReflexiveOutcome> {
    check_monotone(t, horizon)?;
    let (powers, xs) = maximizers(t, horizon)?;
    let space = t.space;
    let (_, cluster) = densest(&space, &xs, tol);
    let mut x = space.zeros();
    for &i in &cluster {
        x.iter_mut().zip(&xs[i]).for_each(|(a, b)| *a += b / cluster.len() as f64);
    }
    let nx = space.norm(&x);
    if nx > 1.0 {
        x.iter_mut().for_each(|a| *a /= nx);
    }
    let lo = horizon.div_ceil(2).max(1);
    let estimate = powers[lo - 1..].iter().map(|p| p.image_norm(&x)).fold(0.0, f64::max);
    Ok(ReflexiveOutcome { x, cluster: cluster.iter().map(|i| i + 1).collect(), estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiCompactWitness {
    /// Chosen complement vector index `i` (1-based).
    pub index: usize,
    /// Coordinates `j` with `f_i = e_j` spanning the complement `F`.
    pub complement: Vec<usize>,
    /// Dual functionals `f*_i`, vanishing on `M`.
    pub duals: Vec<Vec<f64>>,
    /// `max ‖f*_i‖`.
    pub c: f64,
    /// `(1−a)/(2Cr)`.
    pub a_r: f64,
    /// `A = {n ≤ N : ‖T^n|_M‖ ≤ a‖T^n‖}`.
    pub a_set: Vec<usize>,
    /// `A_i = {n ∈ A : ‖T^n f_i‖ ≥ a_r‖T^n‖}` for every `i`.
    pub subsets: Vec<Vec<usize>>,
}

/// Pivot columns of `g` (largest remaining entry first), one per row.
fn pivot_columns(g: &DMatrix<f64>) -> Vec<usize> {
    let mut m = g.clone();
    let mut cols = Vec::new();
    for r in 0..m.nrows() {
        let (mut bi, mut bj, mut bv) = (r, 0, 0.0);
        for i in r..m.nrows() {
            for j in 0..m.ncols() {
                if !cols.contains(&j) && m[(i, j)].abs() > bv {
                    (bi, bj, bv) = (i, j, m[(i, j)].abs());
                }
            }
        }
        m.swap_rows(r, bi);
        cols.push(bj);
        for i in r + 1..m.nrows() {
            let f = m[(i, bj)] / m[(r, bj)];
            for j in 0..m.ncols() {
                m[(i, j)] -= f * m[(r, j)];
            }
        }
    }
    cols
}

/// Splits `X = F ⊕ M` with `F` spanned by canonical vectors and reports
/// which `f_i` carries the large powers for the indices where the
/// restriction to `M` is small.
pub fn semi_compact_witness(t: &OperatorSpec, m: &SubspaceSpec, a: f64, horizon: usize) -> Result<SemiCompactWitness> {
    if !(a > 0.0 && a < 1.0) {
        return Err(OrbitError::InvalidArgument("a must lie in (0, 1)".into()));
    }
    let d = t.dim();
    m.validate(d)?;
    let cons = m.constraints(d);
    let r = cons.len();
    if r == 0 {
        return Err(OrbitError::InvalidArgument("subspace must have positive codimension".into()));
    }
    if r == d {
        return Err(OrbitError::EmptySubspace { rank: r, dim: d });
    }
    let g = DMatrix::from_fn(r, d, |i, j| cons[i].coeffs[j]);
    let complement = pivot_columns(&g);
    let g_f = DMatrix::from_fn(r, r, |i, k| g[(i, complement[k])]);
    let inv = g_f.try_inverse().ok_or_else(|| OrbitError::InvalidArgument("constraint pivots are singular".into()))?;
    let duals_m = inv * &g;
    let duals: Vec<Vec<f64>> = (0..r).map(|i| duals_m.row(i).iter().copied().collect()).collect();
    let space = t.space;
    let c = duals.iter().map(|f| space.dual_norm(&Functional::new(f.clone()))).fold(0.0, f64::max);
    let a_r = (1.0 - a) / (2.0 * c * r as f64);

    let basis = m.orthonormal_basis(d);
    let mut a_set = Vec::new();
    let mut subsets = vec![Vec::new(); r];
    for n in 1..=horizon {
        let p = NormalizedPower::new(t, n)?;
        if p.is_zero() {
            break;
        }
        if restricted_normalized(&p, &basis, 8)?.value > a {
            continue;
        }
        a_set.push(n);
        for (i, &j) in complement.iter().enumerate() {
            if p.image_norm(&space.basis(j)) >= a_r {
                subsets[i].push(n);
            }
        }
    }
    if a_set.is_empty() {
        return Err(OrbitError::EmptyA { horizon });
    }
    for n in &a_set {
        if !subsets.iter().any(|s| s.contains(n)) {
            return Err(OrbitError::ClaimFailed(format!("n = {n} lies in A but in no A_i")));
        }
    }
    let index = (0..r).max_by(|&x, &y| subsets[x].len().cmp(&subsets[y].len()).then(y.cmp(&x))).unwrap() + 1;
    Ok(SemiCompactWitness { index, complement, duals, c, a_r, a_set, subsets })
}

/// Upper estimate of `‖T‖_μ`: the least `‖T|_M‖` over tail subspaces of
/// codimension `≤ budget` and `trials` random constraint sets per
/// codimension. Candidate seeds depend only on `(seed, codim, trial)`, so a
/// larger budget searches a superset.
pub fn mu_norm_estimate(t: &OperatorSpec, budget: usize, trials: usize, seed: u64) -> Result<f64> {
    let d = t.dim();
    if budget >= d {
        return Err(OrbitError::InvalidArgument(format!("budget {budget} must be below the dimension {d}")));
    }
    let mut candidates: Vec<SubspaceSpec> = (0..=budget).map(|c| SubspaceSpec::tail(d, c)).collect();
    for c in 1..=budget {
        for k in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((c as u64) << 40) ^ k as u64);
            let fs =
                (0..c).map(|_| Functional::new((0..d).map(|_| StandardNormal.sample(&mut rng)).collect())).collect();
            candidates.push(SubspaceSpec::Constraints(fs));
        }
    }
    let values: Vec<f64> =
        candidates.par_iter().map(|m| restricted_norm(t, 1, m).map(|e| e.value)).collect::<Result<_>>()?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

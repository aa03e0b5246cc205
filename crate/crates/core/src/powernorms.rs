//! Power norms `‖T^n‖`, normalized powers `T^n/‖T^n‖`, restricted norms on
//! finite-codimension subspaces, orbit ratio profiles and spectral radii.
//!
//! Structured operators get closed-form power norms. Their normalized powers
//! are assembled directly from those closed forms, so orbit ratios stay
//! representable long after `‖T^n‖` itself underflows (the block shift has
//! `‖S^n‖ = 2^{-n²}`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::linalg;
use crate::operators::{block_offset, Operator, OperatorSpec};
use crate::spaces::{lp_norm, Functional, SpaceKind, SpaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certainty {
    Exact,
    ClosedForm,
    LowerBound,
}

impl Certainty {
    pub fn as_str(&self) -> &'static str {
        match self {
            Certainty::Exact => "exact",
            Certainty::ClosedForm => "closed_form",
            Certainty::LowerBound => "lower_bound",
        }
    }

    /// Exact and closed-form values are certified; lower bounds are not.
    pub fn is_certified(&self) -> bool {
        !matches!(self, Certainty::LowerBound)
    }
}

/// A norm value with its natural logarithm, kept separately so that values
/// below the floating-point range still compare and divide correctly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerNorm {
    pub value: f64,
    pub ln: f64,
}

impl PowerNorm {
    pub fn from_value(value: f64) -> Self {
        PowerNorm { value, ln: value.ln() }
    }

    pub const ZERO: PowerNorm = PowerNorm { value: 0.0, ln: f64::NEG_INFINITY };
    pub const ONE: PowerNorm = PowerNorm { value: 1.0, ln: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormMethod {
    Auto,
    ExactSpecial,
    PowerMethod { restarts: usize, iters: usize, tol: f64 },
}

impl NormMethod {
    /// 8 restarts, 500 iterations, relative tolerance 1e-10.
    pub const DEFAULT_POWER: NormMethod = NormMethod::PowerMethod { restarts: 8, iters: 500, tol: 1e-10 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub certainty: Certainty,
    pub converged: bool,
    /// A unit vector attaining (or nearly attaining) the value, when known.
    pub maximizer: Option<Vec<f64>>,
}

impl NormEstimate {
    fn exact(value: f64, certainty: Certainty) -> Self {
        NormEstimate { value, certainty, converged: true, maximizer: None }
    }

    pub fn require_converged(self, iterations: usize) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(OrbitError::NonConvergence { iterations, best: self.value })
        }
    }
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Closed-form `‖T^n‖` for structured variants; `None` when no formula applies.
pub fn closed_form_power_norm(t: &OperatorSpec, n: usize) -> Option<PowerNorm> {
    closed_form_op(&t.op, t.space, n)
}

fn closed_form_op(op: &Operator, space: SpaceSpec, n: usize) -> Option<PowerNorm> {
    let d = space.dim;
    if n == 0 {
        return Some(PowerNorm::ONE);
    }
    match op {
        Operator::Dense(_) => None,
        Operator::UnweightedBackwardShift => Some(if n < d { PowerNorm::ONE } else { PowerNorm::ZERO }),
        Operator::WeightedBackwardShift { weights } => {
            if n >= d {
                return Some(PowerNorm::ZERO);
            }
            let (start, _) = best_window(weights, n);
            Some(window_norm(&weights[start..start + n]))
        }
        Operator::C0FixedShift { weights } => {
            if space.kind != SpaceKind::Sup {
                return None;
            }
            let mut big_w = 1.0;
            let mut sum = 1.0;
            for w in weights.iter().take(n) {
                big_w *= w;
                sum += big_w;
            }
            Some(PowerNorm::from_value(sum))
        }
        Operator::BlockBackwardShift { scales } => {
            if n > scales.len() {
                return Some(PowerNorm::ZERO);
            }
            let cmax = scales[n - 1..].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            Some(PowerNorm { value: cmax.powi(n as i32), ln: n as f64 * cmax.ln() })
        }
        Operator::Diagonal { entries } => {
            let lmax = entries.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            Some(PowerNorm { value: lmax.powi(n as i32), ln: n as f64 * lmax.ln() })
        }
        Operator::Scaled { factor, inner } => {
            let base = closed_form_op(inner, space, n)?;
            let c = factor.abs();
            Some(PowerNorm { value: base.value * c.powi(n as i32), ln: base.ln + n as f64 * c.ln() })
        }
    }
}

/// Start of the window of `n` consecutive weights with the largest product.
fn best_window(weights: &[f64], n: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=weights.len() - n {
        let ln: f64 = weights[start..start + n].iter().map(|w| w.ln()).sum();
        if ln > best.1 {
            best = (start, ln);
        }
    }
    best
}

fn window_norm(w: &[f64]) -> PowerNorm {
    PowerNorm { value: w.iter().product(), ln: w.iter().map(|v| v.ln()).sum() }
}

// ---------------------------------------------------------------------------
// Normalized powers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Body {
    Zero,
    /// `y_i = coeffs[i] x_{i+shift}` plus `y_0 += head · x[..head.len()]`.
    Shift {
        shift: usize,
        coeffs: Vec<f64>,
        head: Vec<f64>,
    },
    /// Block `k` (1-based) contributes `factor · B_k^shift` on its coordinates.
    Blocks {
        shift: usize,
        factors: Vec<(usize, f64)>,
    },
    Diagonal(Vec<f64>),
    Matrix(DMatrix<f64>),
}

/// `T^n / ‖T^n‖` for a fixed `n`.
#[derive(Debug, Clone)]
pub struct NormalizedPower {
    pub n: usize,
    pub space: SpaceSpec,
    pub norm: PowerNorm,
    pub certainty: Certainty,
    sign: f64,
    body: Body,
}

impl NormalizedPower {
    pub fn new(t: &OperatorSpec, n: usize) -> Result<Self> {
        let (sign, body, norm, certainty) = normalized_body(&t.op, t, n)?;
        Ok(NormalizedPower { n, space: t.space, norm, certainty, sign, body })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.body, Body::Zero)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.space.dim;
        let mut y = vec![0.0; d];
        match &self.body {
            Body::Zero => {}
            Body::Shift { shift, coeffs, head } => {
                for (i, c) in coeffs.iter().enumerate() {
                    y[i] = c * x[i + shift];
                }
                if !head.is_empty() {
                    y[0] += head.iter().zip(x).map(|(h, v)| h * v).sum::<f64>();
                }
            }
            Body::Blocks { shift, factors } => {
                for &(k, f) in factors {
                    let o = block_offset(k);
                    for j in 0..=(k - shift) {
                        y[o + j] = f * x[o + j + shift];
                    }
                }
            }
            Body::Diagonal(c) => {
                for i in 0..d {
                    y[i] = c[i] * x[i];
                }
            }
            Body::Matrix(m) => {
                let v = m * DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            }
        }
        if self.sign < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        y
    }

    pub fn apply_transpose(&self, f: &[f64]) -> Vec<f64> {
        let d = self.space.dim;
        let mut y = vec![0.0; d];
        match &self.body {
            Body::Zero => {}
            Body::Shift { shift, coeffs, head } => {
                for (i, c) in coeffs.iter().enumerate() {
                    y[i + shift] = c * f[i];
                }
                for (k, h) in head.iter().enumerate() {
                    y[k] += h * f[0];
                }
            }
            Body::Blocks { shift, factors } => {
                for &(k, fac) in factors {
                    let o = block_offset(k);
                    for j in 0..=(k - shift) {
                        y[o + j + shift] = fac * f[o + j];
                    }
                }
            }
            Body::Diagonal(c) => {
                for i in 0..d {
                    y[i] = c[i] * f[i];
                }
            }
            Body::Matrix(m) => {
                let v = m.tr_mul(&DVector::from_column_slice(f));
                y.copy_from_slice(v.as_slice());
            }
        }
        if self.sign < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        y
    }

    /// `‖T^n x‖ / ‖T^n‖`, skipping the coordinates the power annihilates.
    pub fn image_norm(&self, x: &[f64]) -> f64 {
        match &self.body {
            Body::Zero => 0.0,
            Body::Blocks { shift, factors } => {
                let mut vals = Vec::new();
                for &(k, f) in factors {
                    let o = block_offset(k);
                    vals.extend((0..=(k - shift)).map(|j| f * x[o + j + shift]));
                }
                lp_norm(&vals, self.space.exponent())
            }
            _ => self.space.norm(&self.apply(x)),
        }
    }

    /// Unit vectors with `‖T^n v‖ = ‖T^n‖`, as sparse `(index, value)`
    /// lists, ordered by their lowest coordinate. At most `limit` are returned.
    pub fn norming_candidates(&self, limit: usize) -> Vec<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        match &self.body {
            Body::Zero | Body::Matrix(_) => {}
            Body::Shift { shift, coeffs, head } => {
                if !head.is_empty() {
                    // c0 truncation: e_0 + … + e_n attains the sup-norm bound
                    let top = (head.len()..=*shift).filter(|&k| k < self.space.dim);
                    let support: Vec<usize> = (0..head.len()).chain(top).collect();
                    out.push(support.into_iter().map(|k| (k, 1.0)).collect());
                } else {
                    for (i, c) in coeffs.iter().enumerate() {
                        if c.abs() == 1.0 {
                            out.push(vec![(i + shift, 1.0)]);
                            if out.len() >= limit {
                                break;
                            }
                        }
                    }
                }
            }
            Body::Blocks { shift, factors } => {
                'outer: for &(k, f) in factors {
                    if f.abs() == 1.0 {
                        let o = block_offset(k);
                        for j in *shift..=k {
                            out.push(vec![(o + j, 1.0)]);
                            if out.len() >= limit {
                                break 'outer;
                            }
                        }
                    }
                }
            }
            Body::Diagonal(c) => {
                for (i, v) in c.iter().enumerate() {
                    if v.abs() == 1.0 {
                        out.push(vec![(i, 1.0)]);
                        if out.len() >= limit {
                            break;
                        }
                    }
                }
            }
        }
        out
    }

    /// Unit vector attaining `‖T^n‖`: a structured norming vector when one is
    /// known, the top singular vector for `p = 2`, the power-method iterate
    /// otherwise.
    pub fn maximizer(&self) -> Result<Vec<f64>> {
        if self.is_zero() {
            return Err(OrbitError::DegeneratePower { n: self.n });
        }
        if let Some(c) = self.norming_candidates(1).into_iter().next() {
            let mut v = self.space.zeros();
            for (i, val) in c {
                v[i] = val;
            }
            return self.space.normalize(&v);
        }
        let d = self.space.dim;
        let est = restricted_normalized(self, &DMatrix::identity(d, d), 8)?;
        est.maximizer.ok_or(OrbitError::DegeneratePower { n: self.n })
    }

    /// Dense matrix of the normalized power.
    pub fn matrix(&self) -> DMatrix<f64> {
        if let Body::Matrix(m) = &self.body {
            return m * self.sign;
        }
        let d = self.space.dim;
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            m.set_column(j, &DVector::from_column_slice(&col));
        }
        m
    }
}

type BodyParts = (f64, Body, PowerNorm, Certainty);

fn normalized_body(op: &Operator, t: &OperatorSpec, n: usize) -> Result<BodyParts> {
    let d = t.dim();
    if n == 0 {
        return Ok((1.0, Body::Diagonal(vec![1.0; d]), PowerNorm::ONE, Certainty::Exact));
    }
    let zero = (1.0, Body::Zero, PowerNorm::ZERO, Certainty::ClosedForm);
    match op {
        Operator::Scaled { factor, inner } => {
            let (s, body, norm, cert) = normalized_body(inner, t, n)?;
            let c = factor.abs();
            let sign = if *factor < 0.0 && n % 2 == 1 { -s } else { s };
            let norm = if norm.is_zero() || c == 0.0 {
                PowerNorm::ZERO
            } else {
                PowerNorm { value: norm.value * c.powi(n as i32), ln: norm.ln + n as f64 * c.ln() }
            };
            if norm.is_zero() {
                return Ok(zero);
            }
            Ok((sign, body, norm, cert))
        }
        Operator::UnweightedBackwardShift => {
            if n >= d {
                return Ok(zero);
            }
            Ok((
                1.0,
                Body::Shift { shift: n, coeffs: vec![1.0; d - n], head: vec![] },
                PowerNorm::ONE,
                Certainty::ClosedForm,
            ))
        }
        Operator::WeightedBackwardShift { weights } => {
            if n >= d {
                return Ok(zero);
            }
            let (start, ln_max) = best_window(weights, n);
            if ln_max == f64::NEG_INFINITY {
                return Ok(zero);
            }
            let norm = window_norm(&weights[start..start + n]);
            let coeffs = window_ratios(weights, n, start, norm);
            Ok((1.0, Body::Shift { shift: n, coeffs, head: vec![] }, norm, Certainty::ClosedForm))
        }
        Operator::C0FixedShift { weights } if t.space.kind == SpaceKind::Sup => {
            let norm = closed_form_op(op, t.space, n).expect("sup c0 closed form");
            // head: W_k / ‖T^n‖ for k < min(n, d); shifted part: products of n weights
            let reach = n.min(d);
            let mut head = Vec::with_capacity(reach);
            let mut big_w = 1.0;
            for k in 0..reach {
                if k > 0 {
                    big_w *= weights[k - 1];
                }
                head.push(big_w / norm.value);
            }
            let coeffs: Vec<f64> = if n < d {
                (0..d - n).map(|i| weights[i..i + n].iter().product::<f64>() / norm.value).collect()
            } else {
                vec![]
            };
            Ok((1.0, Body::Shift { shift: n, coeffs, head }, norm, Certainty::ClosedForm))
        }
        Operator::BlockBackwardShift { scales } => {
            if n > scales.len() {
                return Ok(zero);
            }
            let cmax = scales[n - 1..].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            if cmax == 0.0 {
                return Ok(zero);
            }
            let factors: Vec<(usize, f64)> = scales
                .iter()
                .enumerate()
                .skip(n - 1)
                .map(|(b, &c)| (b + 1, (c / cmax).powi(n as i32)))
                .filter(|(_, f)| *f != 0.0)
                .collect();
            let norm = PowerNorm { value: cmax.powi(n as i32), ln: n as f64 * cmax.ln() };
            Ok((1.0, Body::Blocks { shift: n, factors }, norm, Certainty::ClosedForm))
        }
        Operator::Diagonal { entries } => {
            let lmax = entries.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            if lmax == 0.0 {
                return Ok(zero);
            }
            let coeffs = entries.iter().map(|l| (l / lmax).powi(n as i32)).collect();
            let norm = PowerNorm { value: lmax.powi(n as i32), ln: n as f64 * lmax.ln() };
            Ok((1.0, Body::Diagonal(coeffs), norm, Certainty::ClosedForm))
        }
        Operator::Dense(_) | Operator::C0FixedShift { .. } => {
            let inner = OperatorSpec { op: op.clone(), space: t.space };
            let m = inner.power_matrix(n);
            let est = matrix_norm(&m, t.space, NormMethod::Auto);
            if !(est.value > t.space.underflow) {
                return Ok((1.0, Body::Zero, PowerNorm::from_value(est.value), est.certainty));
            }
            Ok((1.0, Body::Matrix(m / est.value), PowerNorm::from_value(est.value), est.certainty))
        }
    }
}

/// Products of `n` consecutive weights divided by the maximal product.
fn window_ratios(weights: &[f64], n: usize, best: usize, norm: PowerNorm) -> Vec<f64> {
    let count = weights.len() + 1 - n;
    if norm.value > 1e-290 {
        (0..count)
            .map(|i| if i == best { 1.0 } else { weights[i..i + n].iter().product::<f64>() / norm.value })
            .collect()
    } else {
        (0..count)
            .map(|i| {
                if i == best {
                    1.0
                } else {
                    let ln: f64 = weights[i..i + n].iter().map(|w| w.ln()).sum();
                    (ln - norm.ln).exp()
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Generic norms
// ---------------------------------------------------------------------------

type LinearMap<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Nonlinear power method for `max ‖Ax‖/‖x‖`, optionally restricted to the
/// range of `project`. Each step maps `x` to the vector attaining the dual
/// norm of `Aᵀ J(Ax)`, `J` being the duality map.
pub(crate) fn boyd_power_method(
    space: SpaceSpec,
    apply: LinearMap<'_>,
    apply_t: LinearMap<'_>,
    project: Option<LinearMap<'_>>,
    starts: &[Vec<f64>],
    iters: usize,
    tol: f64,
) -> NormEstimate {
    let mut best = NormEstimate { value: 0.0, certainty: Certainty::LowerBound, converged: false, maximizer: None };
    let mut any_converged = false;
    let prep = |v: &[f64]| -> Option<Vec<f64>> {
        let v = match project {
            Some(p) => p(v),
            None => v.to_vec(),
        };
        space.normalize(&v).ok()
    };
    for start in starts {
        let Some(mut x) = prep(start) else { continue };
        let mut value = space.norm(&apply(&x));
        let mut converged = false;
        for _ in 0..iters {
            let y = apply(&x);
            let Ok(f) = space.duality_functional(&y) else {
                converged = true;
                break;
            };
            let z = apply_t(&f.coeffs);
            let Ok(xn) = space.dual_attaining_vector(&z) else {
                converged = true;
                break;
            };
            let Some(xn) = prep(&xn) else {
                converged = true;
                break;
            };
            let vn = space.norm(&apply(&xn));
            if vn >= value {
                let done = vn - value <= tol * vn.max(f64::MIN_POSITIVE);
                x = xn;
                value = vn;
                if done {
                    converged = true;
                    break;
                }
            } else {
                // projected steps may overshoot; keep the better iterate
                converged = value - vn <= tol * value;
                break;
            }
        }
        any_converged |= converged;
        if value > best.value || best.maximizer.is_none() {
            best.value = value;
            best.maximizer = Some(x);
        }
    }
    best.converged = any_converged;
    best
}

fn default_starts(m: &DMatrix<f64>, space: SpaceSpec, restarts: usize) -> Vec<Vec<f64>> {
    let d = space.dim;
    let mut starts = Vec::with_capacity(restarts.max(1));
    let col_norms: Vec<f64> = (0..d).map(|j| lp_norm(m.column(j).as_slice(), space.exponent())).collect();
    let jmax = crate::spaces::argmax_abs(&col_norms);
    starts.push(space.basis(jmax));
    for r in 1..restarts.max(1) {
        starts.push(space.random_unit(0x0b17_5eed ^ r as u64));
    }
    starts
}

/// Norm of a dense matrix acting on `space`.
pub fn matrix_norm(m: &DMatrix<f64>, space: SpaceSpec, method: NormMethod) -> NormEstimate {
    let exact = match (method, space.kind) {
        (NormMethod::PowerMethod { .. }, _) => None,
        (_, SpaceKind::Lp { p }) if p == 1.0 => Some(linalg::max_column_abs_sum(m)),
        (_, SpaceKind::Lp { p }) if p == 2.0 => Some(linalg::top_singular(m).0),
        (_, SpaceKind::Sup) => Some(linalg::max_row_abs_sum(m)),
        _ => None,
    };
    if let Some(v) = exact {
        return NormEstimate::exact(v, Certainty::Exact);
    }
    let (restarts, iters, tol) = match method {
        NormMethod::PowerMethod { restarts, iters, tol } => (restarts, iters, tol),
        _ => match NormMethod::DEFAULT_POWER {
            NormMethod::PowerMethod { restarts, iters, tol } => (restarts, iters, tol),
            _ => unreachable!(),
        },
    };
    let apply = |x: &[f64]| (m * DVector::from_column_slice(x)).as_slice().to_vec();
    let apply_t = |f: &[f64]| m.tr_mul(&DVector::from_column_slice(f)).as_slice().to_vec();
    let starts = default_starts(m, space, restarts);
    boyd_power_method(space, &apply, &apply_t, None, &starts, iters, tol)
}

/// `‖T‖` by closed form when available, otherwise from the dense matrix.
pub fn operator_norm(t: &OperatorSpec, method: NormMethod) -> Result<NormEstimate> {
    if method == NormMethod::Auto {
        if let Some(pn) = closed_form_power_norm(t, 1) {
            return Ok(NormEstimate::exact(pn.value, Certainty::ClosedForm));
        }
    }
    Ok(matrix_norm(&t.matrix(), t.space, method))
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerNormEntry {
    pub n: usize,
    pub value: f64,
    pub ln_value: f64,
    pub certainty: Certainty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerNormTable {
    /// Entries for `n = 0..=horizon`.
    pub entries: Vec<PowerNormEntry>,
    pub horizon: usize,
}

impl PowerNormTable {
    pub fn value(&self, n: usize) -> f64 {
        self.entries[n].value
    }

    pub fn get(&self, n: usize) -> &PowerNormEntry {
        &self.entries[n]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,value,certainty\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:e},{}\n", e.n, e.value, e.certainty.as_str()));
        }
        s
    }
}

fn check_horizon(t: &OperatorSpec, n: usize) -> Result<()> {
    if let Some(h) = t.safe_horizon() {
        if n > h {
            return Err(OrbitError::HorizonExceeded { requested: n, horizon: h });
        }
    }
    Ok(())
}

/// `n ↦ ‖T^n‖` for `n = 0..=horizon`, closed forms first.
pub fn power_norm_table(t: &OperatorSpec, horizon: usize) -> Result<PowerNormTable> {
    check_horizon(t, horizon)?;
    if closed_form_power_norm(t, 1).is_some() {
        let entries = (0..=horizon)
            .map(|n| {
                let pn = closed_form_power_norm(t, n).expect("closed form available");
                PowerNormEntry { n, value: pn.value, ln_value: pn.ln, certainty: Certainty::ClosedForm }
            })
            .collect();
        return Ok(PowerNormTable { entries, horizon });
    }
    power_norm_table_generic(t, horizon, NormMethod::Auto)
}

/// Table computed from materialized powers only, ignoring closed forms.
pub fn power_norm_table_generic(t: &OperatorSpec, horizon: usize, method: NormMethod) -> Result<PowerNormTable> {
    check_horizon(t, horizon)?;
    let a = t.matrix();
    let mut power = DMatrix::identity(t.dim(), t.dim());
    let mut entries = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        if n > 0 {
            power = &a * &power;
        }
        let est =
            if n == 0 { NormEstimate::exact(1.0, Certainty::Exact) } else { matrix_norm(&power, t.space, method) };
        let certainty = match method {
            NormMethod::PowerMethod { .. } if n > 0 => Certainty::LowerBound,
            _ => est.certainty,
        };
        entries.push(PowerNormEntry { n, value: est.value, ln_value: est.value.ln(), certainty });
    }
    Ok(PowerNormTable { entries, horizon })
}

// ---------------------------------------------------------------------------
// Subspaces and restricted norms
// ---------------------------------------------------------------------------

/// A finite-codimension subspace, given by constraints (intersection of
/// kernels) or by a spanning set.
#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceSpec {
    Constraints(Vec<Functional>),
    Basis(Vec<Vec<f64>>),
}

impl SubspaceSpec {
    /// `span{e_r, …, e_{d-1}}`: the first `r` coordinates vanish.
    pub fn tail(dim: usize, r: usize) -> Self {
        SubspaceSpec::Constraints(
            (0..r)
                .map(|i| {
                    let mut c = vec![0.0; dim];
                    c[i] = 1.0;
                    Functional::new(c)
                })
                .collect(),
        )
    }

    pub fn whole() -> Self {
        SubspaceSpec::Constraints(vec![])
    }

    fn constraint_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            SubspaceSpec::Constraints(fs) => DMatrix::from_fn(fs.len(), dim, |i, j| fs[i].coeffs[j]),
            SubspaceSpec::Basis(_) => self.orthonormal_basis(dim).transpose(),
        }
    }

    /// Orthonormal (Euclidean) basis of the subspace as matrix columns.
    pub fn orthonormal_basis(&self, dim: usize) -> DMatrix<f64> {
        match self {
            SubspaceSpec::Constraints(_) => linalg::null_space(&self.constraint_matrix(dim)),
            SubspaceSpec::Basis(vs) => {
                let b = DMatrix::from_fn(dim, vs.len(), |i, j| vs[j][i]);
                linalg::column_space(&b)
            }
        }
    }

    /// Independent constraint functionals cutting out the subspace.
    pub fn constraints(&self, dim: usize) -> Vec<Functional> {
        let g = match self {
            SubspaceSpec::Constraints(_) => linalg::column_space(&self.constraint_matrix(dim).transpose()),
            SubspaceSpec::Basis(_) => linalg::null_space(&self.orthonormal_basis(dim).transpose()),
        };
        (0..g.ncols()).map(|j| Functional::new(g.column(j).iter().copied().collect())).collect()
    }

    pub fn codim(&self, dim: usize) -> usize {
        dim - self.orthonormal_basis(dim).ncols()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = match self {
            SubspaceSpec::Constraints(fs) => fs.iter().any(|f| f.coeffs.len() != dim),
            SubspaceSpec::Basis(vs) => vs.iter().any(|v| v.len() != dim),
        };
        if bad {
            return Err(OrbitError::InvalidArgument("subspace vectors must match the space dimension".into()));
        }
        Ok(())
    }
}

/// `sup { ‖T^n y‖ : y ∈ M, ‖y‖ = 1 }`, with a maximizer.
pub fn restricted_norm(t: &OperatorSpec, n: usize, m: &SubspaceSpec) -> Result<NormEstimate> {
    m.validate(t.dim())?;
    let basis = m.orthonormal_basis(t.dim());
    if basis.ncols() == 0 {
        return Err(OrbitError::EmptySubspace { rank: t.dim(), dim: t.dim() });
    }
    let np = NormalizedPower::new(t, n)?;
    let mut est = restricted_normalized(&np, &basis, 8)?;
    est.value *= np.norm.value;
    if basis.ncols() == t.dim() && est.certainty != Certainty::LowerBound {
        // M = X: the restriction is the full power norm
        est.certainty = np.certainty;
    }
    Ok(est)
}

/// Restricted maximization of `‖P y‖` for a normalized power `P` over the
/// column span of the orthonormal `basis`.
pub(crate) fn restricted_normalized(
    np: &NormalizedPower,
    basis: &DMatrix<f64>,
    restarts: usize,
) -> Result<NormEstimate> {
    let space = np.space;
    if np.is_zero() {
        let v = space.normalize(basis.column(0).as_slice())?;
        return Ok(NormEstimate { value: 0.0, certainty: np.certainty, converged: true, maximizer: Some(v) });
    }
    if space.exponent() == Some(2.0) {
        let pm = np.matrix();
        let (s, w) = linalg::top_singular(&(&pm * basis));
        let v = basis * w;
        let v = space.normalize(v.as_slice())?;
        let certainty = if np.certainty.is_certified() { Certainty::Exact } else { Certainty::LowerBound };
        return Ok(NormEstimate { value: s, certainty, converged: true, maximizer: Some(v) });
    }
    let project = |v: &[f64]| -> Vec<f64> {
        let c = basis.tr_mul(&DVector::from_column_slice(v));
        (basis * c).as_slice().to_vec()
    };
    let apply = |x: &[f64]| np.apply(x);
    let apply_t = |f: &[f64]| np.apply_transpose(f);
    let mut starts: Vec<Vec<f64>> = (0..basis.ncols()).map(|j| basis.column(j).iter().copied().collect()).collect();
    // favour the basis directions with the largest images
    starts.sort_by(|a, b| np.image_norm(b).total_cmp(&np.image_norm(a)));
    starts.truncate(restarts.max(1).div_ceil(2));
    for r in 0..restarts / 2 {
        starts.push(space.random_unit(0x5eb5_0ace ^ r as u64));
    }
    let mut est = boyd_power_method(space, &apply, &apply_t, Some(&project), &starts, 500, 1e-10);
    est.certainty = Certainty::LowerBound;
    Ok(est)
}

// ---------------------------------------------------------------------------
// Orbits and spectral radii
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitProfile {
    /// `r_n = ‖T^n x‖ / ‖T^n‖` for `n = 0..=horizon`.
    pub ratios: Vec<f64>,
    pub horizon: usize,
}

impl OrbitProfile {
    pub fn to_dat(&self) -> String {
        let mut s = String::from("# n r_n\n");
        for (n, r) in self.ratios.iter().enumerate() {
            s.push_str(&format!("{n} {r:e}\n"));
        }
        s
    }
}

pub fn orbit_profile(t: &OperatorSpec, x: &[f64], horizon: usize) -> Result<OrbitProfile> {
    t.space.check(x)?;
    let mut ratios = Vec::with_capacity(horizon + 1);
    ratios.push(t.space.norm(x));
    for n in 1..=horizon {
        let np = NormalizedPower::new(t, n)?;
        if np.is_zero() {
            return Err(OrbitError::DegeneratePower { n });
        }
        ratios.push(np.image_norm(x));
    }
    Ok(OrbitProfile { ratios, horizon })
}

/// Gelfand estimate `‖T^N‖^{1/N}` at the horizon.
pub fn spectral_radius(t: &OperatorSpec, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(OrbitError::InvalidArgument("horizon must be positive".into()));
    }
    let pn = match closed_form_power_norm(t, horizon) {
        Some(pn) => pn,
        None => PowerNorm::from_value(matrix_norm(&t.power_matrix(horizon), t.space, NormMethod::Auto).value),
    };
    if pn.is_zero() || !(pn.value > t.space.underflow || pn.ln.is_finite()) {
        return Err(OrbitError::DegeneratePower { n: horizon });
    }
    Ok((pn.ln / horizon as f64).exp())
}

/// `max_{n ∈ [⌈N/2⌉, N]} ‖T^n x‖^{1/n}`, a finite-horizon stand-in for the
/// local spectral radius `limsup ‖T^n x‖^{1/n}`.
pub fn local_spectral_radius(t: &OperatorSpec, x: &[f64], horizon: usize) -> Result<f64> {
    t.space.check(x)?;
    let start = horizon.div_ceil(2).max(1);
    let mut best: f64 = 0.0;
    for n in start..=horizon {
        let np = NormalizedPower::new(t, n)?;
        let r = np.image_norm(x);
        if np.is_zero() || r == 0.0 {
            continue;
        }
        best = best.max(((r.ln() + np.norm.ln) / n as f64).exp());
    }
    Ok(best)
}

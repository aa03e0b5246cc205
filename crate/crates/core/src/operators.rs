//! Structured and dense operators on truncated sequence spaces.
//!
//! Coordinates are 0-based. The shift variants use these conventions:
//!
//! * `UnweightedBackwardShift`: `(Bx)_i = x_{i+1}`, the last coordinate is dropped.
//! * `WeightedBackwardShift`: `(Tx)_i = w[i] x_{i+1}`; `w[i]` is the weight
//!   `w_{i+2}` of the 1-based convention `T e_k = w_k e_{k-1}`.
//! * `C0FixedShift`: `(Tx)_0 = x_0 + w[0] x_1`, `(Tx)_i = w[i] x_{i+1}`; the
//!   fixed weight `w_0 = 1` is implicit and `w[j]` stores `w_{j+1}`.
//! * `BlockBackwardShift`: block `k = 1..=K` occupies `k + 1` consecutive
//!   coordinates `e_{k,0}, …, e_{k,k}` and acts as `c_k B_k`.
//!
//! A truncated shift is nilpotent; [`OperatorSpec::safe_horizon`] reports the
//! largest power that is guaranteed to be nonzero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::spaces::{SpaceKind, SpaceSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    UnweightedBackwardShift,
    WeightedBackwardShift { weights: Vec<f64> },
    C0FixedShift { weights: Vec<f64> },
    BlockBackwardShift { scales: Vec<f64> },
    Diagonal { entries: Vec<f64> },
    Scaled { factor: f64, inner: Box<Operator> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub op: Operator,
    pub space: SpaceSpec,
}

/// Dimension `K(K+3)/2` spanned by blocks `1..=K`.
pub fn block_dim(blocks: usize) -> usize {
    blocks * (blocks + 3) / 2
}

/// Offset of block `k` (1-based).
pub fn block_offset(k: usize) -> usize {
    block_dim(k - 1)
}

impl Operator {
    /// Dimension the variant requires, when it pins one.
    fn required_dim(&self) -> Option<usize> {
        match self {
            Operator::Dense(m) => Some(m.nrows()),
            Operator::UnweightedBackwardShift => None,
            Operator::WeightedBackwardShift { weights } | Operator::C0FixedShift { weights } => Some(weights.len() + 1),
            Operator::BlockBackwardShift { scales } => Some(block_dim(scales.len())),
            Operator::Diagonal { entries } => Some(entries.len()),
            Operator::Scaled { inner, .. } => inner.required_dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OrbitError::InvalidArgument(m.to_string()));
        match self {
            Operator::Dense(m) if m.nrows() != m.ncols() => bad("dense matrix must be square"),
            Operator::Dense(m) if m.iter().any(|v| !v.is_finite()) => bad("dense entries must be finite"),
            Operator::WeightedBackwardShift { weights } if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) => {
                bad("shift weights must be finite and nonnegative")
            }
            Operator::C0FixedShift { weights } if weights.iter().any(|w| !(*w >= 0.0) || *w > 1.0) => {
                bad("c0 shift weights must lie in [0, 1]")
            }
            Operator::BlockBackwardShift { scales } if scales.is_empty() => bad("block shift needs at least one block"),
            Operator::BlockBackwardShift { scales } if scales.iter().any(|c| !c.is_finite()) => {
                bad("block scales must be finite")
            }
            Operator::Diagonal { entries } if entries.iter().any(|v| !v.is_finite()) => {
                bad("diagonal entries must be finite")
            }
            Operator::Scaled { factor, .. } if !factor.is_finite() => bad("scale factor must be finite"),
            Operator::Scaled { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let d = x.len();
        match self {
            Operator::Dense(m) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = (0..d).map(|j| m[(i, j)] * x[j]).sum();
                }
            }
            Operator::UnweightedBackwardShift => {
                y[..d - 1].copy_from_slice(&x[1..]);
                y[d - 1] = 0.0;
            }
            Operator::WeightedBackwardShift { weights } => {
                for i in 0..d - 1 {
                    y[i] = weights[i] * x[i + 1];
                }
                y[d - 1] = 0.0;
            }
            Operator::C0FixedShift { weights } => {
                for i in 0..d - 1 {
                    y[i] = weights[i] * x[i + 1];
                }
                y[d - 1] = 0.0;
                y[0] += x[0];
            }
            Operator::BlockBackwardShift { scales } => {
                for (b, &c) in scales.iter().enumerate() {
                    let k = b + 1;
                    let o = block_offset(k);
                    for j in 0..k {
                        y[o + j] = c * x[o + j + 1];
                    }
                    y[o + k] = 0.0;
                }
            }
            Operator::Diagonal { entries } => {
                for ((yi, xi), l) in y.iter_mut().zip(x).zip(entries) {
                    *yi = l * xi;
                }
            }
            Operator::Scaled { factor, inner } => {
                inner.apply_into(x, y);
                for v in y.iter_mut() {
                    *v *= factor;
                }
            }
        }
    }

    fn apply_transpose_into(&self, f: &[f64], y: &mut [f64]) {
        let d = f.len();
        match self {
            Operator::Dense(m) => {
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj = (0..d).map(|i| m[(i, j)] * f[i]).sum();
                }
            }
            Operator::UnweightedBackwardShift => {
                y[0] = 0.0;
                y[1..].copy_from_slice(&f[..d - 1]);
            }
            Operator::WeightedBackwardShift { weights } => {
                y[0] = 0.0;
                for i in 0..d - 1 {
                    y[i + 1] = weights[i] * f[i];
                }
            }
            Operator::C0FixedShift { weights } => {
                y[0] = f[0];
                for i in 0..d - 1 {
                    y[i + 1] = weights[i] * f[i];
                }
            }
            Operator::BlockBackwardShift { scales } => {
                for (b, &c) in scales.iter().enumerate() {
                    let k = b + 1;
                    let o = block_offset(k);
                    y[o] = 0.0;
                    for j in 0..k {
                        y[o + j + 1] = c * f[o + j];
                    }
                }
            }
            Operator::Diagonal { .. } => self.apply_into(f, y),
            Operator::Scaled { factor, inner } => {
                inner.apply_transpose_into(f, y);
                for v in y.iter_mut() {
                    *v *= factor;
                }
            }
        }
    }
}

impl OperatorSpec {
    pub fn new(op: Operator, space: SpaceSpec) -> Result<Self> {
        op.validate()?;
        if let Some(d) = op.required_dim() {
            if d != space.dim {
                return Err(OrbitError::DimensionMismatch { expected: d, got: space.dim });
            }
        }
        if matches!(op, Operator::UnweightedBackwardShift) && space.dim < 1 {
            return Err(OrbitError::InvalidArgument("shift needs dimension >= 1".into()));
        }
        Ok(OperatorSpec { op, space })
    }

    pub fn identity(space: SpaceSpec) -> Self {
        OperatorSpec { op: Operator::Diagonal { entries: vec![1.0; space.dim] }, space }
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    /// `2T`, `cT`, … as a new spec on the same space.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        OperatorSpec::new(Operator::Scaled { factor, inner: Box::new(self.op.clone()) }, self.space)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.space.check(x)?;
        let mut y = self.space.zeros();
        self.op.apply_into(x, &mut y);
        Ok(y)
    }

    pub fn apply_transpose(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.space.check(f)?;
        let mut y = self.space.zeros();
        self.op.apply_transpose_into(f, &mut y);
        Ok(y)
    }

    /// `T^n x`; `n = 0` returns `x` unchanged.
    pub fn apply_power(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.space.check(x)?;
        let mut cur = x.to_vec();
        let mut next = self.space.zeros();
        for _ in 0..n {
            self.op.apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn apply_transpose_power(&self, n: usize, f: &[f64]) -> Result<Vec<f64>> {
        self.space.check(f)?;
        let mut cur = f.to_vec();
        let mut next = self.space.zeros();
        for _ in 0..n {
            self.op.apply_transpose_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Dense matrix whose columns are the images of the canonical basis.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.op.apply_into(&e, &mut col);
            e[j] = 0.0;
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        }
        m
    }

    pub fn materialize(&self) -> OperatorSpec {
        OperatorSpec { op: Operator::Dense(self.matrix()), space: self.space }
    }

    /// Dense matrix of `T^n`.
    pub fn power_matrix(&self, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply_power(n, &e).expect("dimension checked");
            e[j] = 0.0;
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        }
        m
    }

    /// Largest `n` for which `T^n` is guaranteed nonzero by structure, when
    /// the variant is nilpotent on the truncation.
    pub fn safe_horizon(&self) -> Option<usize> {
        fn horizon(op: &Operator, d: usize) -> Option<usize> {
            match op {
                Operator::UnweightedBackwardShift | Operator::WeightedBackwardShift { .. } => Some(d - 1),
                Operator::BlockBackwardShift { scales } => Some(scales.len()),
                Operator::Scaled { inner, .. } => horizon(inner, d),
                _ => None,
            }
        }
        horizon(&self.op, self.dim())
    }

    pub fn to_description(&self) -> OperatorFile {
        OperatorFile { desc: OperatorDesc::from(&self.op), dim: self.dim(), p: self.space.exponent() }
    }

    pub fn from_description(file: &OperatorFile) -> Result<Self> {
        let kind = match file.p {
            Some(p) => SpaceKind::Lp { p },
            None => SpaceKind::Sup,
        };
        let space = SpaceSpec::new(kind, file.dim)?;
        OperatorSpec::new(file.desc.to_operator()?, space)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_description()).expect("operator description serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: OperatorFile = serde_json::from_str(s).map_err(|e| OrbitError::Description(e.to_string()))?;
        Self::from_description(&file)
    }
}

/// On-disk operator description: `{variant, parameters, dim, p}` with
/// `p = null` for the sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    #[serde(flatten)]
    pub desc: OperatorDesc,
    pub dim: usize,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "parameters", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDesc {
    Dense { rows: Vec<Vec<f64>> },
    UnweightedBackwardShift {},
    WeightedBackwardShift { weights: Vec<f64> },
    C0FixedShift { weights: Vec<f64> },
    BlockBackwardShift { scales: Vec<f64> },
    Diagonal { entries: Vec<f64> },
    Scaled { factor: f64, inner: Box<OperatorDesc> },
}

impl From<&Operator> for OperatorDesc {
    fn from(op: &Operator) -> Self {
        match op {
            Operator::Dense(m) => {
                OperatorDesc::Dense { rows: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() }
            }
            Operator::UnweightedBackwardShift => OperatorDesc::UnweightedBackwardShift {},
            Operator::WeightedBackwardShift { weights } => {
                OperatorDesc::WeightedBackwardShift { weights: weights.clone() }
            }
            Operator::C0FixedShift { weights } => OperatorDesc::C0FixedShift { weights: weights.clone() },
            Operator::BlockBackwardShift { scales } => OperatorDesc::BlockBackwardShift { scales: scales.clone() },
            Operator::Diagonal { entries } => OperatorDesc::Diagonal { entries: entries.clone() },
            Operator::Scaled { factor, inner } => {
                OperatorDesc::Scaled { factor: *factor, inner: Box::new(OperatorDesc::from(inner.as_ref())) }
            }
        }
    }
}

impl OperatorDesc {
    pub fn to_operator(&self) -> Result<Operator> {
        Ok(match self {
            OperatorDesc::Dense { rows } => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(OrbitError::Description("dense rows must form a square matrix".into()));
                }
                Operator::Dense(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
            }
            OperatorDesc::UnweightedBackwardShift {} => Operator::UnweightedBackwardShift,
            OperatorDesc::WeightedBackwardShift { weights } => {
                Operator::WeightedBackwardShift { weights: weights.clone() }
            }
            OperatorDesc::C0FixedShift { weights } => Operator::C0FixedShift { weights: weights.clone() },
            OperatorDesc::BlockBackwardShift { scales } => Operator::BlockBackwardShift { scales: scales.clone() },
            OperatorDesc::Diagonal { entries } => Operator::Diagonal { entries: entries.clone() },
            OperatorDesc::Scaled { factor, inner } => {
                Operator::Scaled { factor: *factor, inner: Box::new(inner.to_operator()?) }
            }
        })
    }
}

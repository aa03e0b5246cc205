//! Truncated sequence spaces: `ℓ^p` of dimension `d` and the sup-normed
//! truncation shared by `c0` and `ℓ^∞`.
//!
//! Vectors are plain `[f64]` coordinate slices; a [`SpaceSpec`] carries the
//! geometry (norm, duality map, sampling) that gives them meaning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};

/// Norms at or below this value are treated as zero.
pub const DEFAULT_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    Lp { p: f64 },
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    #[serde(flatten)]
    pub kind: SpaceKind,
    pub dim: usize,
    #[serde(default = "default_underflow", skip_serializing)]
    pub underflow: f64,
}

fn default_underflow() -> f64 {
    DEFAULT_UNDERFLOW
}

/// A linear functional on a truncated space; pairing is the coordinate dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub coeffs: Vec<f64>,
}

impl Functional {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Functional { coeffs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SpaceSpec {
    pub fn new(kind: SpaceKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(OrbitError::InvalidArgument("dimension must be positive".into()));
        }
        if let SpaceKind::Lp { p } = kind {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(OrbitError::InvalidArgument(format!("exponent p = {p} must be >= 1")));
            }
        }
        Ok(SpaceSpec { kind, dim, underflow: DEFAULT_UNDERFLOW })
    }

    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        Self::new(SpaceKind::Lp { p }, dim)
    }

    pub fn sup(dim: usize) -> Result<Self> {
        Self::new(SpaceKind::Sup, dim)
    }

    pub fn with_underflow(mut self, tol: f64) -> Self {
        self.underflow = tol;
        self
    }

    /// Same geometry, different dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Ok(Self::new(self.kind, dim)?.with_underflow(self.underflow))
    }

    /// Exponent of the norm; `None` for the sup norm.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            SpaceKind::Lp { p } => Some(p),
            SpaceKind::Sup => None,
        }
    }

    /// Exponent of the dual norm; `None` encodes `∞`.
    pub fn dual_exponent(&self) -> Option<f64> {
        match self.kind {
            SpaceKind::Lp { p } if p == 1.0 => None,
            SpaceKind::Lp { p } => Some(p / (p - 1.0)),
            SpaceKind::Sup => Some(1.0),
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(OrbitError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    pub fn basis(&self, i: usize) -> Vec<f64> {
        let mut e = self.zeros();
        e[i] = 1.0;
        e
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match self.kind {
            SpaceKind::Lp { p } => lp_norm(x, Some(p)),
            SpaceKind::Sup => lp_norm(x, None),
        }
    }

    pub fn dual_norm(&self, f: &Functional) -> f64 {
        lp_norm(&f.coeffs, self.dual_exponent())
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.norm(x);
        if !(n > self.underflow) {
            return Err(OrbitError::ZeroVector { norm: n });
        }
        Ok(x.iter().map(|v| v / n).collect())
    }

    /// Norming functional: `‖f‖_* = 1` and `f(x) = ‖x‖`.
    ///
    /// In the sup norm the lowest index attaining the maximum is used.
    pub fn duality_functional(&self, x: &[f64]) -> Result<Functional> {
        let n = self.norm(x);
        if !(n > self.underflow) {
            return Err(OrbitError::ZeroVector { norm: n });
        }
        let coeffs = match self.kind {
            SpaceKind::Lp { p } if p == 1.0 => x.iter().map(|&v| sign(v)).collect(),
            SpaceKind::Lp { p } if p == 2.0 => x.iter().map(|&v| v / n).collect(),
            SpaceKind::Lp { p } => x.iter().map(|&v| sign(v) * (v.abs() / n).powf(p - 1.0)).collect(),
            SpaceKind::Sup => {
                let i = argmax_abs(x);
                let mut c = self.zeros();
                c[i] = sign(x[i]);
                c
            }
        };
        Ok(Functional::new(coeffs))
    }

    /// Inverse duality map: for a functional `z`, a unit vector `x` with
    /// `z(x) = ‖z‖_*`. Lowest index wins ties where the maximizer is not unique.
    pub fn dual_attaining_vector(&self, z: &[f64]) -> Result<Vec<f64>> {
        let zn = lp_norm(z, self.dual_exponent());
        if !(zn > self.underflow) {
            return Err(OrbitError::ZeroVector { norm: zn });
        }
        let x = match self.kind {
            SpaceKind::Lp { p } if p == 1.0 => {
                let i = argmax_abs(z);
                let mut x = self.zeros();
                x[i] = sign(z[i]);
                x
            }
            SpaceKind::Lp { p } => {
                let q = p / (p - 1.0);
                z.iter().map(|&v| sign(v) * (v.abs() / zn).powf(q - 1.0)).collect()
            }
            SpaceKind::Sup => z.iter().map(|&v| sign(v)).collect(),
        };
        Ok(x)
    }

    /// Random direction with law invariant under coordinate sign flips.
    ///
    /// For `ℓ^p` the coordinates are generalized Gaussian with density
    /// `∝ exp(-|t|^p)`, so `x/‖x‖` follows the cone measure and
    /// `U^{1/d} x/‖x‖` is uniform in the unit ball. For the sup norm the
    /// coordinates are uniform on `[-1, 1]`.
    pub fn random_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            SpaceKind::Lp { p } if p == 1.0 => (0..self.dim)
                .map(|_| {
                    let mag: f64 = Exp1.sample(rng);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect(),
            // a Gaussian with any variance gives the same direction law
            SpaceKind::Lp { p } if p == 2.0 => (0..self.dim).map(|_| StandardNormal.sample(rng)).collect(),
            SpaceKind::Lp { p } => {
                let gamma = Gamma::new(1.0 / p, 1.0).expect("valid gamma shape");
                (0..self.dim)
                    .map(|_| {
                        let mag = gamma.sample(rng).powf(1.0 / p);
                        if rng.random::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect()
            }
            SpaceKind::Sup => (0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        }
    }

    pub fn random_unit(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_unit_with(&mut rng)
    }

    pub fn random_unit_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let v = self.random_direction(rng);
            if let Ok(u) = self.normalize(&v) {
                return u;
            }
        }
    }

    /// Uniform sample from the open ball `B(center, radius)`.
    pub fn sample_in_ball<R: Rng + ?Sized>(&self, center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
        let u = self.random_unit_with(rng);
        let r: f64 = rng.random::<f64>().powf(1.0 / self.dim as f64) * radius;
        center.iter().zip(&u).map(|(c, v)| c + r * v).collect()
    }
}

/// `ℓ^p` norm with overflow-safe scaling; `None` is the sup norm.
pub fn lp_norm(x: &[f64], p: Option<f64>) -> f64 {
    match p {
        None => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        Some(p) if p == 1.0 => x.iter().map(|v| v.abs()).sum(),
        Some(p) => {
            let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if m == 0.0 || !m.is_finite() {
                return m;
            }
            if p == 2.0 {
                m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
            } else {
                m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Lowest index of the largest absolute entry.
pub fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{construct_vector_with, ConstructOptions};
use super::SequencePlan;
use crate::error::{OrbitError, Result};
use crate::operators::OperatorSpec;
use crate::powernorms::orbit_profile;

/// Last-quarter increment, as a fraction of the total, that flags a
/// partial sum as still growing.
pub const DEFAULT_GROWTH_FRACTION: f64 = 0.1;

/// `r_n = ‖T^n x‖/‖T^n‖` for `n = 1..=N`.
pub fn orbit_ratios(t: &OperatorSpec, x: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let mut r = orbit_profile(t, x, horizon)?.ratios;
    r.remove(0);
    Ok(r)
}

/// Where the scanned vector comes from.
#[derive(Debug, Clone)]
pub enum XSource {
    /// Built by the inductive construction from `plan`.
    Constructed {
        plan: Box<SequencePlan>,
        options: ConstructOptions,
    },
    /// Random unit vector.
    Random(u64),
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub q: f64,
    /// `(N', S_q(N'))` at `N/4`, `N/2`, `3N/4` and `N`.
    pub checkpoints: Vec<(usize, f64)>,
    /// `(S_q(N) − S_q(⌊3N/4⌋)) / S_q(N)`.
    pub last_quarter: f64,
    pub growing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentScan {
    pub rows: Vec<QRow>,
    /// Largest `q` still flagged growing.
    pub critical_exponent: Option<f64>,
    pub ratios: Vec<f64>,
    pub x: Vec<f64>,
    pub growth_fraction: f64,
}

impl ExponentScan {
    pub fn row(&self, q: f64) -> Option<&QRow> {
        self.rows.iter().find(|r| r.q == q)
    }

    /// `S_q(n)` for every `n = 1..=N`.
    pub fn partial_sums(&self, q: f64) -> Vec<f64> {
        self.ratios
            .iter()
            .scan(0.0, |s, r| {
                *s += r.powf(q);
                Some(*s)
            })
            .collect()
    }

    /// One row per `q` and checkpoint.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("q,n,partial_sum,growing\n");
        for r in &self.rows {
            for (n, v) in &r.checkpoints {
                s += &format!("{},{},{:e},{}\n", r.q, n, v, r.growing);
            }
        }
        s
    }
}

/// Partial sums `S_q(N') = Σ_{n ≤ N'} r_n^q` and growth flags per `q`.
pub fn exponent_scan(t: &OperatorSpec, source: &XSource, q_grid: &[f64], horizon: usize) -> Result<ExponentScan> {
    exponent_scan_with(t, source, q_grid, horizon, DEFAULT_GROWTH_FRACTION)
}

pub fn exponent_scan_with(
    t: &OperatorSpec,
    source: &XSource,
    q_grid: &[f64],
    horizon: usize,
    growth_fraction: f64,
) -> Result<ExponentScan> {
    if horizon < 4 {
        return Err(OrbitError::InvalidArgument("scan horizon must be at least 4".into()));
    }
    if q_grid.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
        return Err(OrbitError::InvalidArgument("exponents must be positive and finite".into()));
    }
    let x = match source {
        XSource::Constructed { plan, options } => construct_vector_with(t, plan, options)?.0,
        XSource::Random(seed) => t.space.random_unit(*seed),
        XSource::Supplied(x) => {
            t.space.check(x)?;
            x.clone()
        }
    };
    let ratios = orbit_ratios(t, &x, horizon)?;
    let marks = [horizon / 4, horizon / 2, 3 * horizon / 4, horizon];
    let rows: Vec<QRow> = q_grid
        .par_iter()
        .map(|&q| {
            let mut checkpoints = Vec::with_capacity(marks.len());
            let mut sum = 0.0;
            let mut next = 0;
            for (i, r) in ratios.iter().enumerate() {
                sum += r.powf(q);
                while next < marks.len() && marks[next] == i + 1 {
                    checkpoints.push((i + 1, sum));
                    next += 1;
                }
            }
            let total = checkpoints[3].1;
            let last_quarter = if total > 0.0 { (total - checkpoints[2].1) / total } else { 0.0 };
            QRow { q, checkpoints, last_quarter, growing: last_quarter >= growth_fraction }
        })
        .collect();
    let critical_exponent = rows.iter().filter(|r| r.growing).map(|r| r.q).reduce(f64::max);
    Ok(ExponentScan { rows, critical_exponent, ratios, x, growth_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{plan_blocks, Gauge, PlanOptions, TailModel};
    use crate::operators::{block_dim, Operator};
    use crate::spaces::SpaceSpec;

    fn block_shift(p: f64, blocks: usize) -> OperatorSpec {
        let scales = (1..=blocks).map(|k| 2f64.powi(-(k as i32))).collect();
        OperatorSpec::new(Operator::BlockBackwardShift { scales }, SpaceSpec::lp(p, block_dim(blocks)).unwrap())
            .unwrap()
    }

    #[test]
    fn identity_diverges_linearly() {
        let t = OperatorSpec::identity(SpaceSpec::lp(2.0, 5).unwrap());
        let scan = exponent_scan(&t, &XSource::Random(3), &[0.5, 1.0, 4.0], 40).unwrap();
        for r in &scan.rows {
            assert_eq!(r.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(), vec![10, 20, 30, 40]);
            assert!((r.checkpoints[3].1 - 40.0).abs() < 1e-9);
            assert!((r.last_quarter - 0.25).abs() < 1e-12 && r.growing);
        }
        assert_eq!(scan.critical_exponent, Some(4.0));
    }

    #[test]
    fn block_shift_random_vectors_stay_bounded() {
        let t = block_shift(2.0, 40);
        for seed in 0..5 {
            let scan = exponent_scan(&t, &XSource::Random(seed), &[2.0], 40).unwrap();
            let row = scan.row(2.0).unwrap();
            assert!(row.checkpoints[3].1 <= 2.0 + 1e-6);
        }
    }

    #[test]
    fn constructed_vector_grows_below_p() {
        let (blocks, steps) = (60, 60);
        let t = block_shift(2.0, blocks);
        let alpha: Vec<f64> = (1..=steps).map(|i| 0.1 * (i as f64).powf(-0.35)).collect();
        let opts = PlanOptions { tail: TailModel::Finite, ..PlanOptions::default() };
        let plan = plan_blocks(&alpha, &Gauge::rho_bar_for(&t.space), &Gauge::power(1.5), opts).unwrap();
        let source = XSource::Constructed { plan: Box::new(plan), options: ConstructOptions::new(steps) };
        let scan = exponent_scan(&t, &source, &[1.5, 2.0], steps).unwrap();
        // oracle: each constructed step contributes at least (α_n/2)^q
        let lower: f64 = alpha.iter().map(|a| (a / 2.0).powf(1.5)).sum();
        let row = scan.row(1.5).unwrap();
        assert!(row.checkpoints[3].1 >= lower * (1.0 - 1e-9));
        assert!(row.growing);
        assert!(scan.row(2.0).unwrap().last_quarter < row.last_quarter);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = OperatorSpec::identity(SpaceSpec::lp(2.0, 3).unwrap());
        assert!(exponent_scan(&t, &XSource::Random(0), &[1.0], 3).is_err());
        assert!(exponent_scan(&t, &XSource::Random(0), &[0.0], 8).is_err());
        assert!(exponent_scan(&t, &XSource::Supplied(vec![1.0]), &[1.0], 8).is_err());
    }
}

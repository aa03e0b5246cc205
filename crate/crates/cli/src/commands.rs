use anyhow::{bail, Result};
use clap::ValueEnum;
use serde::Serialize;

use orbitlab::construct::{
    construct_vector_with, exponent_scan_with, plan_blocks, verify_construction, ConstructOptions, ExponentScan, Gauge,
    PlanOptions, SequencePlan, XSource,
};
use orbitlab::gallery;
use orbitlab::moduli::{closed_kind_for, rho_bar_empirical, ModulusCurve};
use orbitlab::operators::OperatorSpec;
use orbitlab::powernorms::{
    closed_form_power_norm, orbit_profile, power_norm_table, power_norm_table_generic, NormMethod,
};
use orbitlab::witness::{haar_interval_bound, porosity_witness, verify_ball_exclusion, OperatorFamily};

use crate::artifacts::Artifacts;
use crate::config::{ExperimentConfig, OperatorConfig, ScanSource, VectorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Orbit,
    Construct,
    Witness,
    Modulus,
    Verify,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Construct => "construct",
            Command::Witness => "witness",
            Command::Modulus => "modulus",
            Command::Verify => "verify",
            Command::Scan => "scan",
        }
    }
}

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

/// Command-specific configuration checks and defaults that depend on the
/// resolved space. Errors here are configuration errors.
pub fn resolve(cmd: Command, cfg: &mut ExperimentConfig) -> Result<()> {
    match cmd {
        Command::Verify if matches!(cfg.operator, OperatorConfig::Inline(_)) => {
            bail!("`verify` needs a gallery operator")
        }
        Command::Scan if cfg.scan.q_grid.is_empty() => {
            let Some(p) = cfg.space.p.filter(|_| cfg.space.kind == "lp") else {
                bail!("scan.q_grid is required on the sup norm");
            };
            cfg.scan.q_grid = vec![p - 0.5, p, p + 0.5];
        }
        Command::Scan
            if cfg.scan.source == ScanSource::Supplied && !matches!(cfg.orbit.vector, VectorConfig::Explicit(_)) =>
        {
            bail!("scan.source = supplied needs orbit.vector.explicit")
        }
        _ => {}
    }
    if cmd == Command::Scan && cfg.horizon < 4 {
        bail!("scan needs horizon ≥ 4");
    }
    Ok(())
}

/// Seeds the command draws from, for provenance.
pub fn seeds(cmd: Command, cfg: &ExperimentConfig) -> Vec<u64> {
    let s = cfg.seed;
    match cmd {
        Command::Witness => {
            let bases = (0..cfg.witness.base_points as u64).map(|b| s + b);
            let balls = (0..cfg.witness.seeds as u64).map(|k| s + k);
            let mut v: Vec<u64> = bases.chain(balls).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        Command::Scan if cfg.scan.source == ScanSource::Random => {
            (0..cfg.scan.random_vectors as u64).map(|i| s + i).collect()
        }
        _ => vec![s],
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> orbitlab::Result<Outcome> {
    let res = match cmd {
        Command::Orbit => orbit(cfg, t, out),
        Command::Construct => construct(cfg, t, out),
        Command::Witness => witness(cfg, t, out),
        Command::Modulus => modulus(cfg, t, out),
        Command::Verify => verify(cfg, out),
        Command::Scan => scan(cfg, t, out),
    };
    res.map_err(|e| match e.downcast::<orbitlab::OrbitError>() {
        Ok(oe) => oe,
        Err(other) => orbitlab::OrbitError::Description(format!("{other:#}")),
    })
}

fn vector(cfg: &ExperimentConfig, t: &OperatorSpec) -> orbitlab::Result<Vec<f64>> {
    let sp = t.space;
    match &cfg.orbit.vector {
        VectorConfig::Random => Ok(sp.random_unit(cfg.seed)),
        VectorConfig::Basis(i) if *i < sp.dim => Ok(sp.basis(*i)),
        VectorConfig::Basis(i) => Err(orbitlab::OrbitError::DimensionMismatch { expected: sp.dim, got: *i }),
        VectorConfig::Explicit(x) => {
            sp.check(x)?;
            Ok(x.clone())
        }
    }
}

#[derive(Serialize)]
struct OrbitRow {
    n: usize,
    norm: f64,
    ln_norm: f64,
    certainty: &'static str,
    ratio: f64,
}

fn orbit(cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> Result<Outcome> {
    let x = vector(cfg, t)?;
    let n = cfg.horizon;
    let prof = orbit_profile(t, &x, n)?;
    let table = if closed_form_power_norm(t, 1).is_some() {
        power_norm_table(t, n)?
    } else {
        power_norm_table_generic(t, n, NormMethod::Auto)?
    };
    let rows: Vec<OrbitRow> = (1..=n)
        .map(|k| {
            let e = table.get(k);
            OrbitRow {
                n: k,
                norm: e.value,
                ln_norm: e.ln_value,
                certainty: e.certainty.as_str(),
                ratio: prof.ratios[k],
            }
        })
        .collect();
    out.csv("results.csv", &rows)?;
    out.json("results.json", &serde_json::json!({ "x": x, "profile": prof, "norms": table }))?;
    out.raw_curve("ratios", &prof.to_dat())?;
    out.curve("ln_norms", "n ln‖T^n‖", rows.iter().map(|r| (r.n, format!("{:e}", r.ln_norm))))?;
    let bound = prof.ratios[0] * (1.0 + cfg.tol);
    let over = rows.iter().filter(|r| r.ratio > bound).count();
    Ok(Outcome { passed: over == 0, summary: format!("{n} ratios, {over} above ‖x‖") })
}

fn plan(cfg: &ExperimentConfig, t: &OperatorSpec) -> Result<(SequencePlan, ConstructOptions)> {
    let c = &cfg.construct;
    let opts = PlanOptions { tail: c.tail, beta_ratio: c.beta_ratio, min_blocks: 1 };
    let plan = plan_blocks(&c.alpha.values(), &Gauge::rho_bar_for(&t.space), &Gauge::power(c.rho_q), opts)?;
    Ok((plan, ConstructOptions::new(c.n_search_max.unwrap_or(cfg.horizon))))
}

fn construct(cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> Result<Outcome> {
    let (plan, opts) = plan(cfg, t)?;
    let (x, st) = construct_vector_with(t, &plan, &opts)?;
    let rep = verify_construction(t, &x, &st, &plan.rho)?;
    out.csv("results.csv", &st.trace)?;
    out.json(
        "results.json",
        &serde_json::json!({ "alpha": plan.alpha, "blocks": plan.blocks, "n": st.n, "verify": rep, "x": x }),
    )?;
    out.text("trace.jsonl", &st.trace_jsonl())?;
    out.curve("margins", "j margin_j", rep.margins.iter().enumerate().map(|(j, m)| (j + 1, format!("{m:e}"))))?;
    out.curve("partial_sums", "J realized_J", rep.realized.iter().enumerate().map(|(j, v)| (j + 1, format!("{v:e}"))))?;
    out.curve("predicted", "J predicted_J", rep.predicted.iter().enumerate().map(|(j, v)| (j + 1, format!("{v:e}"))))?;
    Ok(Outcome { passed: true, summary: format!("{} steps, min margin {:.6}", st.l, rep.min_margin) })
}

#[derive(Serialize)]
struct WitnessRow {
    point: usize,
    epsilon: f64,
    n: usize,
    radius: f64,
    center_ratio: f64,
    seed: u64,
    fraction: f64,
}

fn witness(cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> Result<Outcome> {
    let w = &cfg.witness;
    let family = OperatorFamily::powers(t.clone(), w.thresholds.values(cfg.horizon)?)?;
    let sp = family.space();
    let mut rows = Vec::new();
    for b in 0..w.base_points {
        let scale = (b + 1) as f64 / w.base_points as f64;
        let x: Vec<f64> = sp.random_unit(cfg.seed + b as u64).iter().map(|v| v * scale).collect();
        for &eps in &w.epsilon {
            let wit = porosity_witness(&family, &x, eps, w.start)?;
            for k in 0..w.seeds as u64 {
                let seed = cfg.seed + k;
                let rep = verify_ball_exclusion(&wit, &family, w.samples, seed);
                rows.push(WitnessRow {
                    point: b,
                    epsilon: eps,
                    n: wit.n,
                    radius: wit.radius,
                    center_ratio: wit.center_ratio,
                    seed,
                    fraction: rep.fraction,
                });
            }
        }
    }
    let haar =
        (w.start < sp.dim).then(|| haar_interval_bound(&family, &sp.basis(w.start), &sp.zeros(), w.start)).map(|r| {
            match r {
                Ok(h) => serde_json::to_value(h).expect("bound serializes"),
                Err(e) => serde_json::json!({ "error": e.code(), "message": e.to_string() }),
            }
        });
    out.csv("results.csv", &rows)?;
    out.json("results.json", &serde_json::json!({ "exclusion": rows, "haar": haar }))?;
    out.curve("exclusion", "run fraction", rows.iter().enumerate().map(|(i, r)| (i, r.fraction)))?;
    let short = rows.iter().filter(|r| r.fraction != 1.0).count();
    Ok(Outcome { passed: short == 0, summary: format!("{} exclusion runs, {short} below 1.0", rows.len()) })
}

#[derive(Serialize)]
struct ModulusRow {
    t: f64,
    empirical: f64,
    closed_lo: f64,
    closed_hi: Option<f64>,
}

fn modulus(cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> Result<Outcome> {
    let m = &cfg.modulus;
    let sp = t.space;
    let emp = rho_bar_empirical(sp, &m.t_grid, m.sphere_samples, &m.tail_depths, cfg.seed)?;
    let closed = ModulusCurve::closed(closed_kind_for(&sp), &m.t_grid)?;
    let rows: Vec<ModulusRow> = m
        .t_grid
        .iter()
        .zip(emp.values.iter().zip(&closed.values))
        .map(|(&t, (e, c))| ModulusRow { t, empirical: e.lo(), closed_lo: c.lo(), closed_hi: c.hi() })
        .collect();
    out.csv("results.csv", &rows)?;
    out.json("results.json", &serde_json::json!({ "empirical": emp, "closed": closed }))?;
    out.raw_curve("rho_bar_empirical", &emp.to_dat())?;
    out.raw_curve("rho_bar_closed", &closed.to_dat())?;
    let violations = emp.invariant_violations(1e-9);
    let outside = rows
        .iter()
        .filter(|r| r.empirical < r.closed_lo - m.tol || r.closed_hi.is_some_and(|h| r.empirical > h + m.tol))
        .count();
    Ok(Outcome {
        passed: violations.is_empty() && outside == 0,
        summary: format!(
            "{} grid points, {outside} outside tolerance, {} invariant violations",
            rows.len(),
            violations.len()
        ),
    })
}

fn verify(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Outcome> {
    let OperatorConfig::Gallery { name, .. } = &cfg.operator else { unreachable!("checked in resolve") };
    let params = cfg.example_params(cfg.verify.samples);
    let rep = gallery::verify_example_with(name, cfg.space.dim, cfg.horizon, cfg.tol, &params)?;
    out.text("results.csv", &rep.to_csv())?;
    out.text("results.json", &(rep.to_json() + "\n"))?;
    out.curve(
        "norms",
        "n ‖T^n‖",
        rep.formula_checks.iter().enumerate().map(|(i, c)| (i + 1, format!("{:e}", c.computed))),
    )?;
    let failed = rep.failures().len();
    Ok(Outcome { passed: rep.pass, summary: format!("{name}: {failed} failed claims") })
}

#[derive(Serialize)]
struct ScanRow {
    vector: usize,
    q: f64,
    n: usize,
    partial_sum: f64,
    growing: bool,
}

fn scan(cfg: &ExperimentConfig, t: &OperatorSpec, out: &Artifacts) -> Result<Outcome> {
    let s = &cfg.scan;
    let sources: Vec<XSource> = match s.source {
        ScanSource::Constructed => {
            let (plan, options) = plan(cfg, t)?;
            vec![XSource::Constructed { plan: Box::new(plan), options }]
        }
        ScanSource::Random => (0..s.random_vectors as u64).map(|i| XSource::Random(cfg.seed + i)).collect(),
        ScanSource::Supplied => vec![XSource::Supplied(vector(cfg, t)?)],
    };
    let scans: Vec<ExponentScan> = sources
        .iter()
        .map(|src| exponent_scan_with(t, src, &s.q_grid, cfg.horizon, s.growth_fraction))
        .collect::<orbitlab::Result<_>>()?;
    let mut rows = Vec::new();
    for (v, sc) in scans.iter().enumerate() {
        for r in &sc.rows {
            for &(n, partial_sum) in &r.checkpoints {
                rows.push(ScanRow { vector: v, q: r.q, n, partial_sum, growing: r.growing });
            }
        }
    }
    out.csv("results.csv", &rows)?;
    let summary: Vec<_> = scans
        .iter()
        .map(|sc| serde_json::json!({ "critical_exponent": sc.critical_exponent, "rows": sc.rows }))
        .collect();
    out.json("results.json", &serde_json::json!({ "scans": summary }))?;
    if let Some(first) = scans.first() {
        out.curve("ratios", "n r_n", first.ratios.iter().enumerate().map(|(i, r)| (i + 1, format!("{r:e}"))))?;
        for q in &s.q_grid {
            let sums = first.partial_sums(*q);
            out.curve(
                &format!("partial_sums_q{q}"),
                "n S_q(n)",
                sums.iter().enumerate().map(|(i, v)| (i + 1, format!("{v:e}"))),
            )?;
        }
    }
    let flags: Vec<String> = scans[0]
        .rows
        .iter()
        .map(|r| format!("q = {}: {}", r.q, if r.growing { "growing" } else { "bounded" }))
        .collect();
    Ok(Outcome { passed: true, summary: flags.join(", ") })
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use orbitlab::construct::TailModel;
use orbitlab::gallery::{self, ExampleParams};
use orbitlab::operators::{OperatorDesc, OperatorFile, OperatorSpec};
use orbitlab::witness::ThresholdRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// `lp` or `sup`.
    pub kind: String,
    pub p: Option<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Gallery {
        name: String,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Inline(OperatorDesc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorConfig {
    /// Seeded random unit vector.
    Random,
    Basis(usize),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub vector: VectorConfig,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig { vector: VectorConfig::Random }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessConfig {
    pub epsilon: Vec<f64>,
    pub thresholds: ThresholdRule,
    /// Index `N` of the set `E_N`.
    pub start: usize,
    pub base_points: usize,
    pub samples: usize,
    pub seeds: usize,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            epsilon: vec![1.0, 0.5, 0.25],
            thresholds: ThresholdRule::Harmonic,
            start: 1,
            base_points: 5,
            samples: 10_000,
            seeds: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusConfig {
    pub t_grid: Vec<f64>,
    pub sphere_samples: usize,
    pub tail_depths: Vec<usize>,
    /// Allowed gap between the empirical and closed-form curves.
    pub tol: f64,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        ModulusConfig {
            t_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            sphere_samples: 8,
            tail_depths: vec![16, 32, 48],
            tol: 1e-4,
        }
    }
}

/// Scale sequences `α_1..α_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaRule {
    /// `α_i = c·r^i`
    Geometric {
        c: f64,
        r: f64,
        len: usize,
    },
    /// `α_i = c·i^{-exponent}`
    Power {
        c: f64,
        exponent: f64,
        len: usize,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl AlphaRule {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AlphaRule::Geometric { c, r, len } => (1..=*len).map(|i| c * r.powi(i as i32)).collect(),
            AlphaRule::Power { c, exponent, len } => (1..=*len).map(|i| c * (i as f64).powf(-exponent)).collect(),
            AlphaRule::Explicit { values } => values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructConfig {
    pub alpha: AlphaRule,
    pub tail: TailModel,
    pub beta_ratio: f64,
    /// `ρ(t) = t^rho_q` in the realized partial sums.
    pub rho_q: f64,
    /// Largest power searched; the horizon when absent.
    pub n_search_max: Option<usize>,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        ConstructConfig {
            alpha: AlphaRule::Geometric { c: 2.0, r: 0.5, len: 12 },
            tail: TailModel::GeometricFromData,
            beta_ratio: 0.5,
            rho_q: 1.0,
            n_search_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSource {
    Constructed,
    Random,
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// `p − ½, p, p + ½` when empty.
    pub q_grid: Vec<f64>,
    pub source: ScanSource,
    /// Random vectors scanned when `source` is `random`.
    pub random_vectors: usize,
    pub growth_fraction: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            q_grid: Vec::new(),
            source: ScanSource::Constructed,
            random_vectors: 1,
            growth_fraction: orbitlab::construct::DEFAULT_GROWTH_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { samples: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub operator: OperatorConfig,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub witness: WitnessConfig,
    #[serde(default)]
    pub modulus: ModulusConfig,
    #[serde(default)]
    pub construct: ConstructConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Parses `value` as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c = value`, creating intermediate objects.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').with_context(|| format!("override `{assignment}` lacks `=`"))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{assignment}` has an empty key");
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().with_context(|| format!("`{path}` descends into a non-object"))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().with_context(|| format!("`{path}` descends into a non-object"))?;
    obj.insert(keys[keys.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.space.kind.as_str() {
            "lp" if self.space.p.is_none_or(|p| !(p >= 1.0)) => bail!("space.p must be at least 1 for lp"),
            "lp" | "sup" => {}
            other => bail!("space.kind must be `lp` or `sup`, got `{other}`"),
        }
        if self.horizon == 0 {
            bail!("horizon must be positive");
        }
        if !(self.tol >= 0.0) {
            bail!("tol must be nonnegative");
        }
        if let OperatorConfig::Gallery { name, .. } = &self.operator {
            gallery::entry(name).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        self.witness.thresholds.check_non_increasing(self.horizon).map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.witness.epsilon.iter().any(|e| !(*e > 0.0)) {
            bail!("witness.epsilon entries must be positive");
        }
        if self.scan.q_grid.iter().any(|q| !(*q > 0.0)) {
            bail!("scan.q_grid entries must be positive");
        }
        Ok(())
    }

    pub fn example_params(&self, samples: usize) -> ExampleParams {
        let weights = match &self.operator {
            OperatorConfig::Gallery { weights, .. } => weights.clone(),
            OperatorConfig::Inline(_) => None,
        };
        ExampleParams { p: self.space.p, weights, samples, seed: self.seed }
    }

    /// Builds the operator and rewrites `space` to the one actually used.
    pub fn resolve_operator(&mut self) -> orbitlab::Result<OperatorSpec> {
        let t = match &self.operator {
            OperatorConfig::Gallery { name, .. } => {
                gallery::build(name, self.space.dim, &self.example_params(self.verify.samples))?
            }
            OperatorConfig::Inline(desc) => OperatorSpec::from_description(&OperatorFile {
                desc: desc.clone(),
                dim: self.space.dim,
                p: if self.space.kind == "sup" { None } else { self.space.p },
            })?,
        };
        self.space = match t.space.exponent() {
            Some(p) => SpaceConfig { kind: "lp".into(), p: Some(p), dim: t.dim() },
            None => SpaceConfig { kind: "sup".into(), p: None, dim: t.dim() },
        };
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "space": {"kind": "lp", "p": 2.0, "dim": 64},
        "operator": {"gallery": {"name": "weighted_shift_lp"}},
        "horizon": 12
    }"#;

    #[test]
    fn defaults_fill_sections() {
        let cfg = ExperimentConfig::parse(BASE, &[]).unwrap();
        assert_eq!(cfg.tol, 1e-9);
        assert_eq!(cfg.scan.growth_fraction, 0.1);
        assert_eq!(cfg.out, PathBuf::from("out"));
    }

    #[test]
    fn dotted_overrides() {
        let sets = ["horizon=8".to_string(), "scan.q_grid=[1.5,2]".into(), "space.kind=sup".into()];
        let cfg = ExperimentConfig::parse(BASE, &sets).unwrap();
        assert_eq!(cfg.horizon, 8);
        assert_eq!(cfg.scan.q_grid, vec![1.5, 2.0]);
        assert_eq!(cfg.space.kind, "sup");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("{", &[]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["horizon=0".into()]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["bogus=1".into()]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["horizon.x=1".into()]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["operator.gallery.name=nope".into()]).is_err());
        assert!(ExperimentConfig::parse(BASE, &["witness.thresholds={\"rule\":\"explicit\",\"values\":[1,2]}".into()])
            .is_err());
    }

    #[test]
    fn block_operator_rewrites_dimension() {
        let mut cfg = ExperimentConfig::parse(BASE, &["operator.gallery.name=block_shift_S".into()]).unwrap();
        let t = cfg.resolve_operator().unwrap();
        assert_eq!(t.dim(), 54);
        assert_eq!(cfg.space.dim, 54);
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::parse(BASE, &[]).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text, &[]).unwrap(), cfg);
    }
}

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Output directory with `curves/` for two-column data files.
pub struct Artifacts {
    dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub versions: Versions,
    pub command: &'a str,
    pub seeds: Vec<u64>,
    pub config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub orbitlab: &'static str,
    pub cli: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Versions { orbitlab: orbitlab::VERSION, cli: env!("CARGO_PKG_VERSION") }
    }
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("curves")).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `curves/<name>.dat` with a `#` header naming the columns.
    pub fn curve<X: Display, Y: Display>(
        &self,
        name: &str,
        columns: &str,
        points: impl IntoIterator<Item = (X, Y)>,
    ) -> Result<()> {
        let mut s = format!("# {columns}\n");
        for (x, y) in points {
            s += &format!("{x} {y}\n");
        }
        self.raw_curve(name, &s)
    }

    /// Writes a curve already rendered in the two-column format.
    pub fn raw_curve(&self, name: &str, body: &str) -> Result<()> {
        self.text(&format!("curves/{name}.dat"), body)
    }

    pub fn provenance(&self, command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>) -> Result<()> {
        let p = Provenance { tool: "orbitlab", versions: Versions::current(), command, seeds, config: cfg };
        self.json("provenance.json", &p)
    }
}

//! Output directory with a manifest of every table written into it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub format: &'static str,
    pub description: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    tables: &'a [ManifestEntry],
}

pub struct Artifacts {
    root: PathBuf,
    command: &'static str,
    seed: u64,
    entries: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn create(root: &Path, command: &'static str, seed: u64) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Artifacts { root: root.to_path_buf(), command, seed, entries: Vec::new() })
    }

    fn target(&self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(path)
    }

    pub fn csv<I>(&mut self, rel: &str, description: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.target(rel)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row).with_context(|| format!("writing {rel}"))?;
        }
        w.flush()?;
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            format: "csv",
            description: description.to_string(),
            columns: header.iter().map(|s| s.to_string()).collect(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, description: &str, value: &T) -> Result<()> {
        let path = self.target(rel)?;
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        self.entries.push(ManifestEntry { path: rel.to_string(), format: "json", description: description.to_string(), columns: Vec::new() });
        Ok(())
    }

    pub fn text(&mut self, rel: &str, description: &str, body: &str) -> Result<()> {
        let path = self.target(rel)?;
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.entries.push(ManifestEntry { path: rel.to_string(), format: "text", description: description.to_string(), columns: Vec::new() });
        Ok(())
    }

    /// Writes `manifest.json` and returns the number of tables.
    pub fn finish(self) -> Result<usize> {
        let manifest = Manifest { command: self.command, seed: self.seed, tables: &self.entries };
        let path = self.root.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.entries.len())
    }
}

/// Shortest round-trip form, so tables are byte-stable across runs; exponent
/// notation outside `[1e-4, 1e6)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if (1e-4..1e6).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

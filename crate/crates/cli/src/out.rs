//! Output directory writer.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use return_landscape::io::csv::Table;
use return_landscape::io::svg::{emit_svg, Plot};
use return_landscape::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Every file of a command goes through one `OutDir`, which also writes a
/// manifest of relative paths and SHA-256 digests.
pub struct OutDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn bytes(&mut self, rel: &str, data: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, data)?;
        let digest: String = Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect();
        self.files.insert(rel.to_string(), digest);
        Ok(())
    }

    pub fn text(&mut self, rel: &str, s: &str) -> Result<()> {
        self.bytes(rel, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
        s.push('\n');
        self.text(rel, &s)
    }

    pub fn csv(&mut self, rel: &str, t: &Table) -> Result<()> {
        self.text(rel, &t.to_csv())
    }

    pub fn svg(&mut self, rel: &str, plot: &Plot) -> Result<()> {
        self.text(rel, &emit_svg(plot)?)
    }

    /// Writes `manifest.json` and returns the number of files written.
    pub fn finish(mut self) -> Result<usize> {
        let n = self.files.len();
        let files = std::mem::take(&mut self.files);
        self.json("manifest.json", &files)?;
        Ok(n)
    }
}

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Output directory that records every file written through it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes `rel` via a temporary file in the same directory and a rename, so
    /// readers never observe a partial file.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        let dir = path.parent().unwrap_or(&self.root);
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp =
            tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    /// Writes CSV produced by `fill` into `rel`.
    pub fn write_with(&mut self, rel: &str, fill: impl FnOnce(&mut Vec<u8>) -> nodelab::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("rendering {rel}"))?;
        self.write(rel, &buf)
    }

    /// Copies the config verbatim and the effective (post-override) config.
    pub fn echo_config(&mut self, original: &str, effective: &impl serde::Serialize) -> Result<()> {
        self.write("config.toml", original.as_bytes())?;
        let effective = toml::to_string(effective).context("serializing effective config")?;
        self.write("effective_config.toml", effective.as_bytes())
    }

    /// Writes `manifest.txt`: produced files, then one line per failed run.
    pub fn finish(mut self, command: &str, failures: &[String]) -> Result<()> {
        let mut text = String::new();
        writeln!(text, "command {command}").unwrap();
        writeln!(text, "status {}", if failures.is_empty() { "ok" } else { "partial" }).unwrap();
        for f in &self.files {
            writeln!(text, "file {f}").unwrap();
        }
        for f in failures {
            writeln!(text, "failed {f}").unwrap();
        }
        self.files.clear();
        self.write("manifest.txt", text.as_bytes())
    }
}

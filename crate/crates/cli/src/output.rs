//! Output sink: atomic files under a prefix, or one JSON document on stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gcsd::SpectralDensity;
use serde::Serialize;
use serde_json::{Map, Value};
use tempfile::NamedTempFile;

use crate::args::ExperimentConfig;

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `PREFIX.suffix`, keeping any directories in the prefix.
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub struct Output {
    prefix: Option<PathBuf>,
    doc: Map<String, Value>,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(prefix: Option<PathBuf>) -> Self {
        Self { prefix, doc: Map::new(), written: Vec::new() }
    }

    fn file(&mut self, suffix: &str, contents: &str) -> Result<()> {
        if let Some(prefix) = &self.prefix {
            let path = prefixed(prefix, suffix);
            write_atomic(&path, contents.as_bytes())?;
            self.written.push(path);
        }
        Ok(())
    }

    /// `PREFIX.name.json` and `PREFIX.name.csv`.
    pub fn density(&mut self, name: &str, d: &SpectralDensity) -> Result<()> {
        if self.prefix.is_some() {
            self.file(&format!("{name}.json"), &d.to_json())?;
            self.file(&format!("{name}.csv"), &d.to_csv())
        } else {
            self.doc.insert(name.into(), serde_json::to_value(d)?);
            Ok(())
        }
    }

    /// `PREFIX.name.json`.
    pub fn value(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        if self.prefix.is_some() {
            self.file(&format!("{name}.json"), &serde_json::to_string_pretty(v)?)
        } else {
            self.doc.insert(name.into(), serde_json::to_value(v)?);
            Ok(())
        }
    }

    /// A raw file that has no place in the stdout document.
    pub fn raw(&mut self, suffix: &str, contents: &str) -> Result<()> {
        self.file(suffix, contents)
    }

    /// Writes the config (or prints the document) and lists written files on
    /// stderr.
    pub fn finish(mut self, config: &ExperimentConfig) -> Result<()> {
        if self.prefix.is_some() {
            self.file("config.json", &serde_json::to_string_pretty(config)?)?;
            for p in &self.written {
                eprintln!("wrote {}", p.display());
            }
        } else {
            self.doc.insert("config".into(), serde_json::to_value(config)?);
            println!("{}", serde_json::to_string_pretty(&Value::Object(self.doc))?);
        }
        Ok(())
    }
}

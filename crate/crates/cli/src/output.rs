//! Output directories: atomic artifact writes, the resolved-config snapshot
//! and a manifest written last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    threads: usize,
    artifacts: &'a [Artifact],
    timings_s: Vec<(&'a str, f64)>,
    total_s: f64,
}

pub struct RunDir {
    pub dir: PathBuf,
    command: String,
    config_toml: String,
    artifacts: Vec<Artifact>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: PathBuf, command: &str, config_toml: String) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            command: command.to_string(),
            config_toml,
            artifacts: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.write(name, &bytes)
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((label.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    /// Writes `config.toml` and then `manifest.json`.
    pub fn finish(mut self) -> Result<PathBuf> {
        let config = std::mem::take(&mut self.config_toml);
        self.write("config.toml", config.as_bytes())?;
        let manifest = Manifest {
            command: &self.command,
            version: phasegraph::VERSION,
            config_sha256: sha256_hex(config.as_bytes()),
            threads: rayon::current_num_threads(),
            artifacts: &self.artifacts,
            timings_s: self.timings.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
            total_s: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_artifacts_and_config() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(tmp.path().join("x"), "test", "a = 1\n".into()).unwrap();
        run.write_csv("t.csv", &["a", "b"], vec![vec!["1".into(), "2".into()]]).unwrap();
        let manifest = run.finish().unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
        let names: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
        assert_eq!(names, ["t.csv", "config.toml"]);
        assert_eq!(fs::read_to_string(tmp.path().join("x/t.csv")).unwrap(), "a,b\n1,2\n");
        assert_eq!(m["config_sha256"], sha256_hex(b"a = 1\n"));
    }
}

//! Output helpers: every file starts with a metadata line (CSV) or a
//! `meta` object (JSON) carrying the command, the config hash and the
//! seed, so any artifact can be traced back to its exact invocation.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, serde::Serialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(command: &str, config_repr: &str, seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(b"\0");
        hasher.update(config_repr.as_bytes());
        let digest = hasher.finalize();
        let config_hash = digest
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        Self {
            command: command.to_string(),
            config_hash,
            seed,
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# spt {} config_hash={} seed={}\n",
            self.command, self.config_hash, self.seed
        )
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {dir:?}"))
}

/// Writes a CSV file with the metadata line, a header row, then rows.
pub fn write_csv(
    dir: &Path,
    name: &str,
    meta: &Meta,
    columns: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let mut out = String::new();
    out.push_str(&meta.csv_header());
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            // shortest round-trip representation keeps reruns bit-identical
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(&path, out).with_context(|| format!("writing {path:?}"))?;
    Ok(path)
}

/// Writes a JSON document `{ "meta": ..., <payload fields> }`.
pub fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    meta: &Meta,
    payload: &T,
) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    let doc = serde_json::json!({
        "meta": meta,
        "result": payload,
    });
    let mut file = fs::File::create(&path).with_context(|| format!("creating {path:?}"))?;
    file.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(path)
}

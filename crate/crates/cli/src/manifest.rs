//! Training run manifest: a small CSV with the config snapshot, seed, and
//! checkpoint hash in comment lines, followed by one loss record per
//! iteration. Values round-trip exactly through the shortest-float
//! formatting.

use anyhow::{bail, Context, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub content: f64,
    pub style: f64,
    pub id1: f64,
    pub id2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Comma-joined key=value config snapshot.
    pub config: String,
    pub seed: u64,
    pub checkpoint_sha256: String,
    pub records: Vec<LossRecord>,
}

const HEADER: &str = "iter,content,style,id1,id2,total";

impl RunManifest {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config: {}\n", self.config));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str(&format!(
            "# checkpoint_sha256: {}\n",
            self.checkpoint_sha256
        ));
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter, r.content, r.style, r.id1, r.id2, r.total
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<RunManifest> {
        let mut config = None;
        let mut seed = None;
        let mut sha = None;
        let mut records = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("config:") {
                    config = Some(v.trim().to_string());
                } else if let Some(v) = rest.strip_prefix("seed:") {
                    seed = Some(v.trim().parse().context("manifest seed")?);
                } else if let Some(v) = rest.strip_prefix("checkpoint_sha256:") {
                    sha = Some(v.trim().to_string());
                }
                continue;
            }
            if !saw_header {
                if line != HEADER {
                    bail!("line {}: expected '{HEADER}', got '{line}'", lineno + 1);
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                bail!(
                    "line {}: expected 6 fields, got {}",
                    lineno + 1,
                    fields.len()
                );
            }
            let rec = LossRecord {
                iter: fields[0].parse().context("iteration number")?,
                content: fields[1].parse().context("content loss")?,
                style: fields[2].parse().context("style loss")?,
                id1: fields[3].parse().context("id1 loss")?,
                id2: fields[4].parse().context("id2 loss")?,
                total: fields[5].parse().context("total loss")?,
            };
            if let Some(last) = records.last() {
                let last: &LossRecord = last;
                if rec.iter <= last.iter {
                    bail!(
                        "iteration numbers must increase: {} after {}",
                        rec.iter,
                        last.iter
                    );
                }
            }
            records.push(rec);
        }
        if !saw_header {
            bail!("manifest has no record header");
        }
        Ok(RunManifest {
            config: config.context("manifest missing '# config:' line")?,
            seed: seed.context("manifest missing '# seed:' line")?,
            checkpoint_sha256: sha.context("manifest missing '# checkpoint_sha256:' line")?,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::image::atomic_write(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

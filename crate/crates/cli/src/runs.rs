//! Run-directory conventions: config snapshots, overwrite protection, and
//! newline-delimited record files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use nrnf_core::config::RunConfig;

/// Creates the output directory; refuses to reuse a non-empty one without
/// `--overwrite`.
pub fn ensure_out_dir(dir: &Path, overwrite: bool) -> anyhow::Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            bail!("usage: {} is not empty; pass --overwrite to reuse it", dir.display());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Stores the resolved config verbatim; the snapshot alone reproduces the
/// run.
pub fn write_config_snapshot(cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
    let text = toml::to_string_pretty(cfg).context("serializing config")?;
    std::fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

pub fn write_jsonl_file<T: Serialize, P: AsRef<Path>>(items: &[T], path: P) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json_line<T: Serialize>(item: &T, path: &Path) -> anyhow::Result<()> {
    let mut line = serde_json::to_string(item)?;
    line.push('\n');
    std::fs::write(path, line)?;
    Ok(())
}

/// Tab-separated flat table for plotting.
pub fn write_tsv<P: AsRef<Path>>(rows: &[Vec<String>], path: P) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for row in rows {
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

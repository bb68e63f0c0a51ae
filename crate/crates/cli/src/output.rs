use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use tempdens_core::provenance::{Envelope, Provenance};
use tempdens_core::RunConfig;

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// JSON artifact inside a provenance envelope.
pub fn write_json(path: &Path, cfg: &RunConfig, artifact: Value) -> Result<()> {
    let env = Envelope::wrap(cfg, artifact)?;
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Non-JSON artifact with a `<file>.provenance.json` sidecar.
pub fn write_with_sidecar(path: &Path, cfg: &RunConfig, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)?;
    let prov = Provenance::new(cfg, bytes)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".provenance.json");
    let mut text = serde_json::to_string_pretty(&prov)?;
    text.push('\n');
    write_atomic(&PathBuf::from(side), text.as_bytes())
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

pub fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/out.csv");
        let cfg = RunConfig::default();
        write_with_sidecar(&p, &cfg, b"x,y\n1,2\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x,y\n1,2\n");
        let side: Provenance =
            serde_json::from_str(&fs::read_to_string(dir.path().join("a/b/out.csv.provenance.json")).unwrap()).unwrap();
        assert_eq!(
            side.content_sha256,
            tempdens_core::provenance::sha256_hex(b"x,y\n1,2\n")
        );
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("a/b")).unwrap().collect();
        assert_eq!(leftovers.len(), 2);
    }

    #[test]
    fn csv_quoting() {
        let b = csv_bytes(
            &["a", "b"],
            &[vec!["x,y".into(), cell(Some(0.5))], vec!["z".into(), cell(None)]],
        )
        .unwrap();
        assert_eq!(String::from_utf8(b).unwrap(), "a,b\n\"x,y\",0.500000\nz,\n");
    }
}

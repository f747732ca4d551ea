//! Atomic file output and the JSON / CSV document formats.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Sends a document to `out`, or to standard output when `out` is `None`.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_document<T: Serialize>(doc: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// CSV whose first line is `# config: {...}`, followed by `extra` comment
/// lines, a header and the rows.
pub fn csv_document<R, I>(config: &RunConfig, extra: &[String], header: &[&str], rows: I) -> anyhow::Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut bytes = Vec::new();
    writeln!(bytes, "# config: {}", serde_json::to_string(config)?)?;
    for line in extra {
        writeln!(bytes, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(bytes);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// `q.json` becomes `q.paths.csv`; the sibling of a quantizer document.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_starts_with_config() {
        let cfg = RunConfig::default();
        let doc = csv_document(&cfg, &["slope: 1".into()], &["a", "b"], vec![vec!["1", "2"]]).unwrap();
        let text = String::from_utf8(doc).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config: {"));
        assert_eq!(&lines[1..], ["# slope: 1", "a,b", "1,2"]);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/q.json"), "paths.csv"), PathBuf::from("out/q.paths.csv"));
        assert_eq!(sibling(Path::new("q"), "paths.csv"), PathBuf::from("q.paths.csv"));
    }
}

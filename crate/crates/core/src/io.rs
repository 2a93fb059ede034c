//! Config loading, digests and record emission.
//!
//! Numbers are written by `serde_json`, which prints the shortest decimal
//! that round-trips; field order follows struct declaration order, so equal
//! inputs give equal bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parses JSON text, turning serde errors into path-qualified config errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let path = if e.line() > 0 {
            format!("{origin}:{}:{}", e.line(), e.column())
        } else {
            origin.to_string()
        };
        Error::config(path, e.to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

/// Streaming JSON Lines writer.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes `records` as JSON Lines; an empty slice gives an empty file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = JsonlWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

/// Writes a CSV table with the given header; the header is written even
/// when there are no rows.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        b: Complex64,
    }

    #[test]
    fn empty_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("x.jsonl");
        write_jsonl::<Row>(&j, &[]).unwrap();
        assert_eq!(std::fs::read(&j).unwrap(), b"");
        let c = dir.path().join("x.csv");
        write_csv::<(f64, f64)>(&c, &["a", "b"], &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "a,b\n");
    }

    #[test]
    fn complex_is_pair_and_floats_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("x.jsonl");
        write_jsonl(
            &j,
            &[Row {
                a: 0.1,
                b: Complex64::new(1.5, -2.0),
            }],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&j).unwrap(),
            "{\"a\":0.1,\"b\":[1.5,-2.0]}\n"
        );
    }

    #[test]
    fn digest_is_stable() {
        let a = config_digest(&[1, 2, 3]).unwrap();
        assert_eq!(a, config_digest(&[1, 2, 3]).unwrap());
        assert_ne!(a, config_digest(&[1, 2, 4]).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn io_errors_name_the_path() {
        let e = read_json::<Vec<f64>>(Path::new("/nonexistent/c.json")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/c.json"));
        let e = parse_json::<Vec<f64>>("[1, x]", "c.json").unwrap_err();
        assert!(e.to_string().contains("c.json:1"), "{e}");
    }
}

//! File helpers: atomic writes, JSON documents and plain comma-separated tables.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Write `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// A header plus rows of raw string fields. Fields never contain commas,
/// quotes or newlines, so no quoting is needed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Csv(format!(
                "row has {} fields, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        if let Some(bad) = row.iter().find(|f| f.contains([',', '\n', '"'])) {
            return Err(Error::Csv(format!("field {bad:?} needs quoting")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column {name}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv("empty table".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect::<Vec<_>>();
        let mut table = Table {
            header,
            rows: Vec::new(),
        };
        for (k, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != table.header.len() {
                return Err(Error::Csv(format!(
                    "line {}: {} fields, expected {}",
                    k + 2,
                    row.len(),
                    table.header.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Shortest decimal that round-trips, with `NaN` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Csv(format!("not a number: {field:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x".into()]).unwrap();
        t.push(vec![fmt_f64(f64::NAN), fmt_f64(0.1)]).unwrap();
        let back = Table::parse(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(parse_f64(&back.rows[1][0]).unwrap().is_nan());
        assert_eq!(parse_f64(&back.rows[1][1]).unwrap(), 0.1);
        assert_eq!(back.column("b").unwrap(), 1);
        assert!(back.column("c").is_err());
    }

    #[test]
    fn table_rejects_ragged_rows_and_commas() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push(vec!["1".into()]).is_err());
        assert!(t.push(vec!["1,2".into(), "3".into()]).is_err());
        assert!(Table::parse("a,b\n1\n").is_err());
        assert!(Table::parse("").is_err());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let leftovers = std::fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        write_json_atomic(&path, &vec![0.1, 1e-300]).unwrap();
        let back: Vec<f64> = read_json(&path).unwrap();
        assert_eq!(back, vec![0.1, 1e-300]);
        assert!(read_json::<Vec<f64>>(&dir.path().join("missing.json")).is_err());
    }
}

//! Data files: CSV tables with a schema comment line, JSON summaries, and
//! atomic writes into the output directory.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

/// `{:.16e}`: 17 significant digits, locale independent.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn kind(&self) -> &'static str {
        match self {
            Cell::Num(_) => "f64",
            Cell::Int(_) => "u64",
            Cell::Text(_) => "str",
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(x) => number(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the schema");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Schema comment, header row, data rows.
    pub fn to_bytes(&self) -> Vec<u8> {
        let kinds: Vec<&str> = match self.rows.first() {
            Some(r) => r.iter().map(Cell::kind).collect(),
            None => vec!["f64"; self.columns.len()],
        };
        let schema: Vec<String> = self
            .columns
            .iter()
            .zip(&kinds)
            .map(|(c, k)| format!("{c}:{k}"))
            .collect();
        let mut out = format!("# schema: {}\n", schema.join(",")).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
            w.write_record(&self.columns).expect("in-memory write");
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
            }
            w.flush().expect("in-memory flush");
        }
        out
    }
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}

/// A named output file held in memory until every file of a command is ready.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            bytes,
        }
    }
}

/// Writes every artifact to a temporary file in `dir` first and renames them
/// into place only once all writes have succeeded.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(&a.bytes).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.flush().map_err(|e| CliError::io(tmp.path(), e))?;
        staged.push((tmp, dir.join(&a.name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(number(0.1), "1.0000000000000001e-1");
        assert_eq!(number(-2.0), "-2.0000000000000000e0");
        assert_eq!(number(f64::NAN), "NaN");
        assert_eq!(number(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(["t", "status"]);
        t.push(vec![1.5.into(), "ok, fine".into()]);
        let text = String::from_utf8(t.to_bytes()).unwrap();
        assert_eq!(text, "# schema: t:f64,status:str\nt,status\n1.5000000000000000e0,\"ok, fine\"\n");
    }

    #[test]
    fn atomic_writes_leave_only_targets() {
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(dir.path(), &[Artifact::new("a.csv", b"x".to_vec()), Artifact::new("b.json", b"{}".to_vec())]).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["a.csv", "b.json"]);
    }
}

//! Delimited-text and JSON-lines plumbing shared by the loaders and exporters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A loaded input table: header names plus string cells, with the 1-based
/// data row number of each row kept for reject reporting.
pub(crate) struct RawTable {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        let is_jsonl = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("jsonl") | Some("ndjson")
        );
        if is_jsonl {
            Self::read_jsonl(path)
        } else {
            Self::read_csv(path)
        }
    }

    fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(BufReader::new(file));
        let columns = reader
            .headers()
            .map_err(|e| Error::schema(path, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
                _ => Error::schema(path, e.to_string()),
            })?;
            rows.push((i + 1, rec.iter().map(str::to_owned).collect()));
        }
        Ok(Self {
            path: path.to_owned(),
            columns,
            rows,
        })
    }

    fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut columns: Vec<String> = Vec::new();
        let mut objects = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::schema(path, format!("line {}: {e}", i + 1)))?;
            let obj = match value {
                serde_json::Value::Object(m) => m,
                _ => {
                    return Err(Error::schema(
                        path,
                        format!("line {}: expected an object", i + 1),
                    ))
                }
            };
            for k in obj.keys() {
                if !columns.iter().any(|c| c == k) {
                    columns.push(k.clone());
                }
            }
            objects.push(obj);
        }
        let rows = objects
            .into_iter()
            .enumerate()
            .map(|(i, obj)| {
                let cells = columns
                    .iter()
                    .map(|c| obj.get(c).map(json_cell).unwrap_or_default())
                    .collect();
                (i + 1, cells)
            })
            .collect();
        Ok(Self {
            path: path.to_owned(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::schema(&self.path, format!("missing column `{name}`")))
    }
}

fn json_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.trim().to_owned(),
        serde_json::Value::Array(items) => {
            items.iter().map(json_cell).collect::<Vec<_>>().join("|")
        }
        other => other.to_string(),
    }
}

pub(crate) fn cell(row: &[String], idx: usize) -> &str {
    row.get(idx).map(String::as_str).unwrap_or("")
}

/// Shortest round-trip decimal form; missing values are written as empty cells.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Small CSV writer wrapper that reports errors against the target path.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        writer
            .write_record(header)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        Ok(Self {
            path: path.to_owned(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(cells)
            .map_err(|e| Error::io(&self.path, std::io::Error::other(e.to_string())))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{io_err, LogError};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub name: String,
    pub value: f64,
    pub wall_time: f64,
}

impl MetricRecord {
    fn to_line(&self) -> String {
        json!({
            "step": self.step,
            "name": self.name,
            "value": self.value,
            "wall_time": self.wall_time,
        })
        .to_string()
    }

    fn from_line(line: &str) -> Option<Self> {
        let v: serde_json::Value = serde_json::from_str(line).ok()?;
        Some(Self {
            step: v.get("step")?.as_u64()?,
            name: v.get("name")?.as_str()?.to_string(),
            value: v.get("value")?.as_f64()?,
            wall_time: v.get("wall_time")?.as_f64()?,
        })
    }
}

/// Append-only writer; each record is one line written and flushed whole.
#[derive(Debug)]
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<(), LogError> {
        if !record.value.is_finite() {
            return Err(LogError::Format(format!("metric {} is not finite", record.name)));
        }
        let mut line = record.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))
    }
}

/// Reads every complete record. An unterminated trailing line is treated as
/// an interrupted write and skipped.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>, LogError> {
    let text = std::fs::read(path).map_err(io_err(path))?;
    let mut segments: Vec<&[u8]> = text.split(|&b| b == b'\n').collect();
    // Whatever follows the final newline is either empty or a torn write.
    segments.pop();
    let mut out = Vec::with_capacity(segments.len());
    for (i, raw) in segments.into_iter().enumerate() {
        let line = String::from_utf8_lossy(raw);
        if line.trim().is_empty() {
            continue;
        }
        let rec = MetricRecord::from_line(&line).ok_or_else(|| {
            LogError::Format(format!("{}: malformed record on line {}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_partial_tail() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("m.jsonl");
        let mut w = MetricsWriter::open(&p).unwrap();
        for s in 0..3 {
            w.append(&MetricRecord {
                step: s,
                name: "score".into(),
                value: s as f64 * 1.5,
                wall_time: 0.25,
            })
            .unwrap();
        }
        let good = read_metrics(&p).unwrap();
        assert_eq!(good.len(), 3);
        assert_eq!(good[2].value, 3.0);
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"step\": 3, \"na").unwrap();
        assert_eq!(read_metrics(&p).unwrap(), good);
    }
}

//! File formats: panel CSV, returns ingestion, provenance lines and atomic writes.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::panel::{Panel, PanelRole};

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Hex SHA-256 of a configuration's canonical JSON text.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Leading comment line identifying the configuration and seed behind an output file.
pub fn provenance_line<T: Serialize>(config: &T, seed: u64) -> Result<String> {
    Ok(format!(
        "# svlab {} config_sha256={} seed={seed}\n",
        env!("CARGO_PKG_VERSION"),
        config_hash(config)?
    ))
}

/// Panel as CSV: one row per time index, header `t,s1,...,sp`, shortest
/// round-trip decimal representation of each value.
pub fn panel_csv(panel: &Panel, provenance: Option<&str>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(line) = provenance {
        out.extend_from_slice(line.as_bytes());
    }
    {
        let mut wr = csv::Writer::from_writer(&mut out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=panel.p()).map(|i| format!("s{i}")));
        wr.write_record(&header)?;
        let mut rec = Vec::with_capacity(panel.p() + 1);
        for t in 0..panel.n() {
            rec.clear();
            rec.push((t + 1).to_string());
            rec.extend((0..panel.p()).map(|i| format!("{}", panel.get(i, t))));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    LogReturns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Error,
    DropRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestOptions {
    pub transform: Transform,
    pub missing: MissingPolicy,
}

/// Time-indexed table: `values[t][i]` is series `i` at label `dates[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsTable {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ReturnsTable {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// The table as a `p x n` observation panel.
    pub fn to_panel(&self) -> Result<Panel> {
        let (p, n) = (self.p(), self.n());
        let mut v = vec![0.0; p * n];
        for (t, row) in self.values.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                v[i * n + t] = *x;
            }
        }
        Panel::new(p, n, v, PanelRole::X)
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "null")
}

pub fn ingest_returns(path: &Path, options: IngestOptions) -> Result<ReturnsTable> {
    ingest_reader(fs::File::open(path)?, options)
}

/// Parses a table whose first column holds row labels. Lines starting with `#` are ignored.
/// Row numbers in errors are 1-based file lines; columns are 1-based CSV fields.
pub fn ingest_reader<R: Read>(reader: R, options: IngestOptions) -> Result<ReturnsTable> {
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((idx + 1, line));
    }
    let mut iter = lines.into_iter();
    let (header_line, header) = iter.next().ok_or(Error::Ingest {
        row: 0,
        column: 0,
        message: "no header row".into(),
    })?;
    let header = split_record(&header, header_line)?;
    if header.len() < 2 {
        return Err(Error::Ingest {
            row: header_line,
            column: header.len(),
            message: "header needs a label column and at least one series".into(),
        });
    }
    let names: Vec<String> = header[1..].iter().map(|s| s.trim().to_string()).collect();
    let p = names.len();

    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut lines_of = Vec::new();
    for (line_no, line) in iter {
        let fields = split_record(&line, line_no)?;
        if fields.len() != p + 1 {
            return Err(Error::Ingest {
                row: line_no,
                column: fields.len().min(p + 1),
                message: format!("expected {} fields, found {}", p + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(p);
        let mut missing = false;
        for (c, cell) in fields[1..].iter().enumerate() {
            let cell = cell.trim();
            if is_missing(cell) {
                if options.missing == MissingPolicy::Error {
                    return Err(Error::Ingest {
                        row: line_no,
                        column: c + 2,
                        message: "missing value".into(),
                    });
                }
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                row: line_no,
                column: c + 2,
                message: format!("not a number: `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row: line_no,
                    column: c + 2,
                    message: format!("non-finite value `{cell}`"),
                });
            }
            row.push(v);
        }
        if missing {
            continue;
        }
        dates.push(fields[0].trim().to_string());
        values.push(row);
        lines_of.push(line_no);
    }

    if options.transform == Transform::LogReturns {
        if values.len() < 2 {
            return Err(Error::Ingest {
                row: lines_of.first().copied().unwrap_or(header_line),
                column: 1,
                message: "log returns need at least two rows".into(),
            });
        }
        for (t, row) in values.iter().enumerate() {
            if let Some(c) = row.iter().position(|&v| v <= 0.0) {
                return Err(Error::Ingest {
                    row: lines_of[t],
                    column: c + 2,
                    message: "log returns need positive prices".into(),
                });
            }
        }
        let returns = values
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b / a).ln()).collect())
            .collect();
        values = returns;
        dates.remove(0);
    }
    if values.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok(ReturnsTable { dates, names, values })
}

fn split_record(line: &str, line_no: usize) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    match rdr.records().next() {
        Some(Ok(r)) => Ok(r.iter().map(str::to_string).collect()),
        Some(Err(e)) => Err(Error::Ingest {
            row: line_no,
            column: 0,
            message: e.to_string(),
        }),
        None => Ok(Vec::new()),
    }
}

/// Reads a panel file written by `panel_csv` (or any label-first table).
pub fn read_panel(path: &Path) -> Result<Panel> {
    ingest_returns(path, IngestOptions::default())?.to_panel()
}

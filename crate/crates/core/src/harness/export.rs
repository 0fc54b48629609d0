//! CSV / JSON export of aggregated results, with a run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AggregateRow, ExperimentSpec, SkippedEngine};
use crate::error::{Result, SdmError};

pub const CSV_HEADER: &str = "engine,d,magnitude,mean_final_cosine,std_final_cosine,baseline,trials,seed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = SdmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(SdmError::Config(format!("unknown output format '{other}'"))),
        }
    }
}

/// Provenance of a result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_hash: String,
    pub code_version: String,
    pub base_seed: u64,
    pub spec: ExperimentSpec,
    pub trials: usize,
    #[serde(default)]
    pub skipped: Vec<SkippedEngine>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, trials: usize, skipped: Vec<SkippedEngine>) -> Self {
        Manifest {
            spec_hash: spec.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: spec.base_seed,
            spec: spec.clone(),
            trials,
            skipped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub manifest: Manifest,
    pub rows: Vec<AggregateRow>,
}

/// Renders rows as CSV.  Floats use Rust's shortest round-trip formatting,
/// so identical values always produce identical bytes.
pub fn to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.engine, r.d, r.magnitude, r.mean_final_cosine, r.std_final_cosine, r.baseline, r.trials, r.seed
        ));
    }
    out
}

/// Parses CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines();
    let mut offset = 0u64;
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => offset += h.len() as u64 + 1,
        _ => {
            return Err(SdmError::Format {
                offset: 0,
                message: format!("expected header '{CSV_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        let start = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| SdmError::Format {
            offset: start,
            message: format!("bad {what} in row '{line}'"),
        };
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(bad("column count"));
        }
        rows.push(AggregateRow {
            engine: f[0].parse().map_err(|_| bad("engine"))?,
            d: f[1].parse().map_err(|_| bad("d"))?,
            magnitude: f[2].parse().map_err(|_| bad("magnitude"))?,
            mean_final_cosine: f[3].parse().map_err(|_| bad("mean_final_cosine"))?,
            std_final_cosine: f[4].parse().map_err(|_| bad("std_final_cosine"))?,
            baseline: f[5].parse().map_err(|_| bad("baseline"))?,
            trials: f[6].parse().map_err(|_| bad("trials"))?,
            seed: f[7].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}

pub fn to_json(manifest: &Manifest, rows: &[AggregateRow]) -> Result<String> {
    let doc = ResultDocument {
        manifest: manifest.clone(),
        rows: rows.to_vec(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| SdmError::Numeric(format!("cannot encode results: {e}")))
}

pub fn from_json(text: &str) -> Result<ResultDocument> {
    serde_json::from_str(text).map_err(|e| SdmError::Format {
        offset: 0,
        message: e.to_string(),
    })
}

/// Path of the manifest written next to a result file.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `rows` to `path` in the given format.  CSV output also writes the
/// manifest to `<path>.manifest.json`; JSON output embeds it.
pub fn export_results(manifest: &Manifest, rows: &[AggregateRow], format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => {
            write_file(path, to_csv(rows).as_bytes())?;
            let m = serde_json::to_string_pretty(manifest)
                .map_err(|e| SdmError::Numeric(format!("cannot encode manifest: {e}")))?;
            write_file(&manifest_path(path), m.as_bytes())
        }
        Format::Json => write_file(path, to_json(manifest, rows)?.as_bytes()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Reads back either format (detected from the first byte).
pub fn read_results(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        Ok(from_json(&text)?.rows)
    } else {
        from_csv(&text)
    }
}

/// Writes any serializable table as CSV with the given header, one row per
/// record.  Used by the analysis subcommands.
pub fn simple_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.into_iter().collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

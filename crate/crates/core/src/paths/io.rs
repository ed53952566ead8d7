//! Path files: a JSON object `{regime, times, values, meta}` or a CSV table
//! with header `time,value`. Floats are written in shortest round-trip form,
//! so a write/read cycle reproduces the grid bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Regime, SampledPath};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathFormat {
    Json,
    Csv,
}

impl PathFormat {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => PathFormat::Csv,
            _ => PathFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

/// On-disk form of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFile {
    pub regime: Regime,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub meta: PathMeta,
}

impl PathFile {
    pub fn new(path: &SampledPath, meta: PathMeta) -> Self {
        Self {
            regime: path.regime(),
            times: path.times().to_vec(),
            values: path.values().to_vec(),
            meta,
        }
    }

    pub fn into_path(self) -> Result<SampledPath> {
        SampledPath::new(self.times, self.values, self.regime)
    }
}

#[derive(Serialize, Deserialize)]
struct RawPath {
    regime: Regime,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Serialize for SampledPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawPath {
            regime: self.regime(),
            times: self.times().to_vec(),
            values: self.values().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SampledPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPath::deserialize(d)?;
        SampledPath::new(raw.times, raw.values, raw.regime).map_err(serde::de::Error::custom)
    }
}

/// Writes a path as JSON (with metadata) or CSV.
pub fn write_path<W: Write>(
    mut w: W,
    path: &SampledPath,
    meta: &PathMeta,
    format: PathFormat,
) -> Result<()> {
    match format {
        PathFormat::Json => {
            serde_json::to_writer(&mut w, &PathFile::new(path, meta.clone()))?;
            writeln!(w)?;
        }
        PathFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["time", "value"])?;
            for (t, v) in path.times().iter().zip(path.values()) {
                wtr.write_record([t.to_string(), v.to_string()])?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}

/// Reads a path. CSV files carry no regime, so `csv_regime` supplies it.
pub fn read_path<R: Read>(r: R, format: PathFormat, csv_regime: Regime) -> Result<(SampledPath, PathMeta)> {
    match format {
        PathFormat::Json => {
            let file: PathFile = serde_json::from_reader(BufReader::new(r))?;
            let meta = file.meta.clone();
            Ok((file.into_path()?, meta))
        }
        PathFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(r);
            let headers = rdr.headers()?.clone();
            if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "value" {
                return Err(Error::InvalidPath(format!(
                    "CSV header must be `time,value`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                )));
            }
            let mut times = Vec::new();
            let mut values = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidPath(format!("bad number `{s}`: {e}")))
                };
                times.push(parse(&rec[0])?);
                values.push(parse(&rec[1])?);
            }
            Ok((SampledPath::new(times, values, csv_regime)?, PathMeta::default()))
        }
    }
}

/// Reads a path file, choosing the format from its extension.
pub fn read_path_file(path: &Path, csv_regime: Regime) -> Result<(SampledPath, PathMeta)> {
    read_path(File::open(path)?, PathFormat::from_extension(path), csv_regime)
}

pub fn write_path_file(
    path: &Path,
    sampled: &SampledPath,
    meta: &PathMeta,
    format: PathFormat,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_path(&mut w, sampled, meta, format)?;
    w.flush()?;
    Ok(())
}

//! CSV encounter files and the JSON dataset manifest.
//!
//! Rows are `encounter_id,t_index,x1,y1,x2,y2` (meters) or, for GPS logs,
//! `encounter_id,t_index,lat1,lon1,lat2,lon2` (degrees). GPS rows are
//! projected onto a local tangent plane around each encounter's mean
//! position with the equirectangular approximation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Encounter, Point};
use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Xy,
    LatLon,
}

impl Format {
    fn header(self) -> [&'static str; 6] {
        match self {
            Format::Xy => ["encounter_id", "t_index", "x1", "y1", "x2", "y2"],
            Format::LatLon => ["encounter_id", "t_index", "lat1", "lon1", "lat2", "lon2"],
        }
    }
}

/// Formats a double with 17 significant digits (exact round trip).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column `{column}`: `{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column `{column}`: non-finite value"),
        });
    }
    Ok(v)
}

fn project(rows: &[[f64; 4]]) -> (Vec<Point>, Vec<Point>) {
    let n = (rows.len() * 2) as f64;
    let (lat0, lon0) = rows.iter().fold((0.0, 0.0), |(la, lo), r| {
        (la + r[0] + r[2], lo + r[1] + r[3])
    });
    let (lat0, lon0) = (lat0 / n, lon0 / n);
    let k = lat0.to_radians().cos();
    let proj = |lat: f64, lon: f64| -> Point {
        [
            EARTH_RADIUS_M * (lon - lon0).to_radians() * k,
            EARTH_RADIUS_M * (lat - lat0).to_radians(),
        ]
    };
    rows.iter()
        .map(|r| (proj(r[0], r[1]), proj(r[2], r[3])))
        .unzip()
}

/// Reads encounters in first-appearance order of `encounter_id`.
pub fn ingest(path: impl AsRef<Path>, format: Format) -> Result<Vec<Encounter>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = format.header();

    let mut groups: IndexMap<String, Vec<(u64, usize, [f64; 4])>> = IndexMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let t: usize = record[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("column `t_index`: `{}` is not an index", &record[1]),
        })?;
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_f64(&record[k + 2], line, header[k + 2])?;
        }
        groups
            .entry(record[0].trim().to_owned())
            .or_default()
            .push((line, t, vals));
    }

    let mut out = Vec::with_capacity(groups.len());
    for (id, mut rows) in groups {
        rows.sort_by_key(|r| r.1);
        for (expected, (line, t, _)) in rows.iter().enumerate() {
            if *t != expected {
                return Err(Error::Validation(format!(
                    "encounter `{id}`: t_index {t} at line {line} breaks the 0..{} sequence",
                    rows.len()
                )));
            }
        }
        let payload: Vec<[f64; 4]> = rows.iter().map(|r| r.2).collect();
        let (s1, s2) = match format {
            Format::Xy => payload.iter().map(|r| ([r[0], r[1]], [r[2], r[3]])).unzip(),
            Format::LatLon => project(&payload),
        };
        out.push(Encounter::new(id, s1, s2)?);
    }
    Ok(out)
}

/// Writes encounters as `xy` CSV with 17 significant digits.
pub fn export(encs: &[Encounter], path: impl AsRef<Path>, format: Format) -> Result<()> {
    if format != Format::Xy {
        return Err(Error::Config(
            "export writes projected coordinates; only the xy format is supported".into(),
        ));
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", format.header().join(",")).map_err(io)?;
    for e in encs {
        if e.s1.len() != e.s2.len() {
            return Err(Error::Validation(format!(
                "encounter `{}` has mismatched lengths",
                e.id
            )));
        }
        for t in 0..e.len() {
            let [x1, y1, x2, y2] = e.step(t);
            writeln!(
                w,
                "{},{t},{},{},{},{}",
                e.id,
                fmt_f64(x1),
                fmt_f64(y1),
                fmt_f64(x2),
                fmt_f64(y2)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub length: usize,
}

/// Sidecar description of a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub data_file: String,
    pub format: Format,
    /// `m` for raw coordinates, `normalized` for model space.
    pub units: String,
    /// `none`, `shared` or `literal`.
    pub normalization: String,
    pub count: usize,
    pub encounters: Vec<ManifestEntry>,
}

impl Manifest {
    pub const VERSION: u32 = 1;

    pub fn describe(encs: &[Encounter], data_file: &str) -> Self {
        let normalization = match encs.first().and_then(|e| e.frame) {
            Some(f) => f.mode.as_str().to_owned(),
            None if encs.first().is_some_and(|e| e.normalized) => "unknown".to_owned(),
            None => "none".to_owned(),
        };
        let normalized = encs.first().is_some_and(|e| e.normalized);
        Self {
            format_version: Self::VERSION,
            data_file: data_file.to_owned(),
            format: Format::Xy,
            units: if normalized { "normalized" } else { "m" }.to_owned(),
            normalization,
            count: encs.len(),
            encounters: encs
                .iter()
                .map(|e| ManifestEntry {
                    id: e.id.clone(),
                    length: e.len(),
                })
                .collect(),
        }
    }
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if m.format_version != Manifest::VERSION {
        return Err(Error::Validation(format!(
            "manifest format_version {} is not supported",
            m.format_version
        )));
    }
    Ok(m)
}

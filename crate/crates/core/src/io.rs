//! File formats: dataset CSV with a JSON sidecar, chain JSON-lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, SettingKind};

/// Floats are written with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    let d = data.dim().unwrap_or(0);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    if data.y.is_some() {
        header.push("y".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, x) in data.x.iter().enumerate() {
        let mut cells: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        if let Some(y) = &data.y {
            cells.push(fmt_f64(y[i]));
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_csv(data, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Parse a dataset CSV. The setting kind is not stored in the CSV; a `y`
/// column must be present exactly when `kind` is a regression setting.
pub fn read_dataset_csv<R: BufRead>(r: R, kind: SettingKind) -> Result<Dataset> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let has_y = cols.last() == Some(&"y");
    let d = if has_y { cols.len() - 1 } else { cols.len() };
    for (i, c) in cols.iter().take(d).enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(Error::Parse(format!("unexpected column {c:?} at position {}", i + 1)));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if vals.len() != cols.len() {
            return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, cols.len())));
        }
        xs.push(vals[..d].to_vec());
        if has_y {
            ys.push(vals[d]);
        }
    }
    if has_y != kind.is_regression() {
        return Err(Error::Config(format!(
            "a {kind} dataset {} a y column",
            if kind.is_regression() { "needs" } else { "must not have" }
        )));
    }
    Dataset::new(kind, xs, has_y.then_some(ys))
}

pub fn load_dataset(path: &Path, kind: SettingKind) -> Result<Dataset> {
    read_dataset_csv(BufReader::new(File::open(path)?), kind)
}

/// Metadata written next to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub kind: SettingKind,
    pub noise_sd: Option<f64>,
    pub truncation: Option<f64>,
    pub seed: u64,
    pub truth_family: String,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub n: usize,
    /// Row-major `q*`.
    pub orientation: Vec<f64>,
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Per-move acceptance counts `(accepted, proposed)` up to a retained draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub latent: (u64, u64),
    pub scale: (u64, u64),
    pub orientation: (u64, u64),
    pub dimension: (u64, u64),
}

/// One retained draw of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub iter: usize,
    pub b: usize,
    pub a: f64,
    /// Row-major orientation.
    pub q: Vec<f64>,
    /// Latent values at the anchor points.
    pub latent: Vec<f64>,
    pub whitened: Vec<f64>,
    pub log_post: f64,
    pub acceptances: MoveCounts,
}

pub fn write_chain_jsonl<W: Write>(records: &[ChainRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_chain_jsonl<R: BufRead>(r: R) -> Result<Vec<ChainRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("record {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let data = Dataset::new(
            SettingKind::FixedDesign,
            vec![vec![0.1, -0.2], vec![1.0 / 3.0, 0.0]],
            Some(vec![0.5, -2.0 / 7.0]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        assert!(buf.starts_with(b"x1,x2,y\n"));
        let back = read_dataset_csv(&buf[..], SettingKind::FixedDesign).unwrap();
        assert_eq!(back, data);
        assert!(read_dataset_csv(&buf[..], SettingKind::Density).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let rec = ChainRecord {
            chain: 0,
            iter: 10,
            b: 1,
            a: 1.25,
            q: vec![1.0, 0.0, 0.0, 1.0],
            latent: vec![0.1],
            whitened: vec![0.1],
            log_post: -3.5,
            acceptances: MoveCounts::default(),
        };
        let mut buf = Vec::new();
        write_chain_jsonl(std::slice::from_ref(&rec), &mut buf).unwrap();
        assert_eq!(read_chain_jsonl(&buf[..]).unwrap(), vec![rec]);
    }
}

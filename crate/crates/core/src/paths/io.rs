//! CSV and JSON serialization of paths and datasets.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SampledPath, SamplingGrid};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Description of a generated fBM dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub hurst: f64,
    pub d: usize,
    pub grid: SamplingGrid,
    pub n_paths: usize,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

fn header(d: usize, with_id: bool) -> Vec<String> {
    let mut h = Vec::with_capacity(d + 2);
    if with_id {
        h.push("path_id".to_string());
    }
    h.push("t".to_string());
    h.extend((0..d).map(|j| format!("ch{j}")));
    h
}

/// Writes one path as `t,ch0,ch1,…`.
pub fn write_path_csv<W: Write>(writer: W, path: &SampledPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(path.dim(), false))?;
    for k in 0..path.len() {
        let mut rec = vec![path.times()[k].to_string()];
        rec.extend(path.value(k).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes several paths in long format: `path_id,t,ch0,…`.
pub fn write_paths_csv<W: Write>(writer: W, paths: &[SampledPath]) -> Result<()> {
    write_long(writer, paths, None)
}

/// Long format with a trailing `seed` column repeated on every row.
pub fn write_paths_csv_seeded<W: Write>(writer: W, paths: &[SampledPath], seed: u64) -> Result<()> {
    write_long(writer, paths, Some(seed))
}

fn write_long<W: Write>(writer: W, paths: &[SampledPath], seed: Option<u64>) -> Result<()> {
    let d = paths.first().map_or(0, SampledPath::dim);
    if paths.iter().any(|p| p.dim() != d) {
        return Err(Error::validation("all paths in a file must share a dimension"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut h = header(d, true);
    if seed.is_some() {
        h.push("seed".to_string());
    }
    w.write_record(h)?;
    let seed = seed.map(|s| s.to_string());
    for (i, path) in paths.iter().enumerate() {
        for k in 0..path.len() {
            let mut rec = vec![i.to_string(), path.times()[k].to_string()];
            rec.extend(path.value(k).iter().map(f64::to_string));
            rec.extend(seed.clone());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::validation(format!("not a number: {field:?}")))
}

fn build_path(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<SampledPath> {
    SampledPath::new(SamplingGrid::new(times)?, Matrix::from_rows(rows)?)
}

/// Reads a single-path CSV written by [`write_path_csv`].
pub fn read_path_csv<R: Read>(reader: R) -> Result<SampledPath> {
    let mut r = csv::Reader::from_reader(reader);
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec.iter().map(parse_f64).collect::<Result<Vec<_>>>()?;
        if vals.len() < 2 {
            return Err(Error::validation("path CSV rows need t and at least one channel"));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    build_path(times, rows)
}

/// Reads a long-format CSV written by [`write_paths_csv`]; paths are returned
/// in order of first appearance of their id. Columns other than `path_id`,
/// `t` and `ch*` are ignored.
pub fn read_paths_csv<R: Read>(reader: R) -> Result<Vec<SampledPath>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("long-format CSV needs a `{name}` column")))
    };
    let (id_col, t_col) = (find("path_id")?, find("t")?);
    let channels: Vec<usize> = (0..)
        .map_while(|j| headers.iter().position(|h| h == format!("ch{j}")))
        .collect();
    if channels.is_empty() {
        return Err(Error::validation("long-format CSV needs at least one `ch0` column"));
    }
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<f64>, Vec<Vec<f64>>)> = None;
    for rec in r.records() {
        let rec = rec?;
        let id = rec[id_col].to_string();
        let t = parse_f64(&rec[t_col])?;
        let row = channels.iter().map(|&c| parse_f64(&rec[c])).collect::<Result<Vec<_>>>()?;
        match &mut current {
            Some((cur, times, rows)) if *cur == id => {
                times.push(t);
                rows.push(row);
            }
            _ => {
                if let Some((_, times, rows)) = current.take() {
                    out.push(build_path(times, rows)?);
                }
                current = Some((id, vec![t], vec![row]));
            }
        }
    }
    if let Some((_, times, rows)) = current {
        out.push(build_path(times, rows)?);
    }
    Ok(out)
}

/// Writes labels as `path_id,y`.
pub fn write_labels_csv<W: Write>(writer: W, labels: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["path_id", "y"])?;
    for (i, y) in labels.iter().enumerate() {
        w.write_record([i.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `y` column of a labels CSV, in row order.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::validation("labels CSV needs a `y` column"))?;
    r.records().map(|rec| parse_f64(&rec?[col])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_format_roundtrip() {
        let g = SamplingGrid::new(vec![0.0, 0.25, 1.0]).unwrap();
        let a = SampledPath::from_rows(g.clone(), vec![vec![1.5, -2.0], vec![0.1, 0.2], vec![3.0, 1e-17]])
            .unwrap();
        let b = a.shifted(&[1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("path_id,t,ch0,ch1\n"));
        assert_eq!(read_paths_csv(&buf[..]).unwrap(), vec![a.clone(), b.clone()]);
        let mut buf = Vec::new();
        write_paths_csv_seeded(&mut buf, &[a.clone(), b.clone()], 7).unwrap();
        assert!(buf.starts_with(b"path_id,t,ch0,ch1,seed\n"));
        assert_eq!(read_paths_csv(&buf[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn single_roundtrip() {
        let g = SamplingGrid::uniform(3).unwrap();
        let p = SampledPath::new(g, Matrix::from_fn(4, 1, |k, _| (k as f64).sqrt())).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &p).unwrap();
        assert!(buf.starts_with(b"t,ch0\n"));
        assert_eq!(read_path_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn labels_roundtrip() {
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &[0.5, -1.25, 3.0]).unwrap();
        assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), vec![0.5, -1.25, 3.0]);
        assert!(read_labels_csv("path_id,z\n0,1\n".as_bytes()).is_err());
    }
}

//! Plain-text point-cloud format.
//!
//! ```text
//! # d=2 n=3
//! 0.25 0.5 1
//! ...
//! ```
//! One atom per line: `d` coordinates then the weight. Blank lines and
//! further `#` comments are ignored.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Ambient, Measure};
use crate::error::{Error, Result};

/// Raw contents of a point-cloud file, before ambient parameters are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub d: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PointCloud {
    pub fn into_measure(self, s: f64, eps: f64) -> Result<Measure> {
        Measure::new(Ambient::new(self.d, s, eps)?, self.coords, self.weights)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut d = None;
    let mut n = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("d=") {
            d = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().ok();
        }
    }
    Some((d?, n?))
}

pub fn read_cloud<R: BufRead>(reader: R) -> Result<PointCloud> {
    let mut header = None;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if header.is_none() {
                header = Some(parse_header(t).ok_or(Error::Parse {
                    line: lineno,
                    reason: "expected header `# d=<d> n=<count>`".into(),
                })?);
            }
            continue;
        }
        let (d, _) = header.ok_or(Error::Parse {
            line: lineno,
            reason: "data before header".into(),
        })?;
        let mut fields = 0;
        for tok in t.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("not a number: {tok:?}"),
            })?;
            if fields < d {
                coords.push(v);
            } else {
                weights.push(v);
            }
            fields += 1;
        }
        if fields != d + 1 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {} fields, found {fields}", d + 1),
            });
        }
    }
    let (d, n) = header.ok_or(Error::Parse {
        line: 0,
        reason: "missing header".into(),
    })?;
    if weights.len() != n {
        return Err(Error::Parse {
            line: 0,
            reason: format!("header announces {n} atoms, file has {}", weights.len()),
        });
    }
    Ok(PointCloud { d, coords, weights })
}

pub fn read_cloud_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(BufReader::new(f))
}

/// Writes `mu` with shortest round-trip float formatting.
pub fn write_cloud<W: Write>(mu: &Measure, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# d={} n={}", mu.dim(), mu.len())?;
    for (p, w) in mu.points() {
        for x in p {
            write!(out, "{x} ")?;
        }
        writeln!(out, "{w}")?;
    }
    out.flush()
}

pub fn write_cloud_file(mu: &Measure, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cloud(mu, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let amb = Ambient::new(2, 1.5, 0.1).unwrap();
        let mu = Measure::new(amb, vec![0.1, 1.0 / 3.0, -2.5e-7, 7.0], vec![0.3, 1e-300]).unwrap();
        let mut buf = Vec::new();
        write_cloud(&mu, &mut buf).unwrap();
        let cloud = read_cloud(&buf[..]).unwrap();
        assert_eq!(cloud.coords, mu.coords());
        assert_eq!(cloud.weights, mu.weights());
    }

    #[test]
    fn reports_bad_line() {
        let text = "# d=1 n=2\n0.5 1\n0.7\n";
        match read_cloud(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch() {
        assert!(read_cloud("# d=1 n=3\n0 1\n".as_bytes()).is_err());
    }
}

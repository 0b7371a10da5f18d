//! Text and image formats: `n,prob` CSV, JSON arrays, 8-bit PGM and 0/1 mask CSV.
//!
//! Floats are written with 17 significant digits so that parsing the text
//! reproduces the exact binary value.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::states::PhotonNumberDistribution;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {line}: {e}: {s:?}")))
}

pub fn pmf_to_csv(dist: &PhotonNumberDistribution) -> String {
    let mut out = String::from("n,prob\n");
    for (n, p) in dist.probs().iter().enumerate() {
        let _ = writeln!(out, "{n},{}", fmt_f64(*p));
    }
    out
}

/// Reads `n,prob` rows; the tail bound is the missing mass plus rounding allowance.
pub fn pmf_from_csv(text: &str) -> Result<PhotonNumberDistribution> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "n,prob" => {}
        other => return Err(Error::Parse(format!("expected header n,prob, got {other:?}"))),
    }
    let mut probs = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (n, p) = line.split_once(',').ok_or_else(|| Error::Parse(format!("line {}: missing comma", i + 1)))?;
        let n: usize = n.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        if n != probs.len() {
            return Err(Error::Parse(format!("line {}: expected n = {}, got {n}", i + 1, probs.len())));
        }
        probs.push(parse_f64(p, i + 1)?);
    }
    PhotonNumberDistribution::from_truncated(probs)
}

pub fn pmf_to_json(dist: &PhotonNumberDistribution) -> String {
    serde_json::to_string(dist.probs()).expect("f64 slices always serialize")
}

pub fn pmf_from_json(text: &str) -> Result<PhotonNumberDistribution> {
    let probs: Vec<f64> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    PhotonNumberDistribution::from_truncated(probs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples in `0..=maxval`.
    pub data: Vec<u16>,
}

impl GrayImage {
    /// Scales `values` so that the largest maps to 255; negatives clip to 0.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        let max = values.iter().cloned().fold(0.0f64, f64::max);
        let data = values
            .iter()
            .map(|&v| if max > 0.0 { (v.max(0.0) / max * 255.0).round() as u16 } else { 0 })
            .collect();
        Self { width, height, maxval: 255, data }
    }

    /// Samples divided by `maxval`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64 / self.maxval as f64).collect()
    }
}

pub fn write_pgm(path: &Path, img: &GrayImage, binary: bool) -> Result<()> {
    let mut bytes = format!(
        "{}\n{} {}\n{}\n",
        if binary { "P5" } else { "P2" },
        img.width,
        img.height,
        img.maxval
    )
    .into_bytes();
    if binary {
        for &v in &img.data {
            if img.maxval < 256 {
                bytes.push(v as u8);
            } else {
                bytes.extend_from_slice(&v.to_be_bytes());
            }
        }
    } else {
        for row in img.data.chunks(img.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            bytes.extend_from_slice(line.join(" ").as_bytes());
            bytes.push(b'\n');
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let binary = match header[0].as_str() {
        "P5" => true,
        "P2" => false,
        m => return Err(Error::Parse(format!("unsupported PGM magic {m}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("PGM header {s:?}: {e}")));
    let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    let count = width * height;
    let data: Vec<u16> = if binary {
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let body = bytes.get(pos..pos + need).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
        if wide {
            body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            body.iter().map(|&b| b as u16).collect()
        }
    } else {
        let text = String::from_utf8_lossy(&bytes[pos..]);
        let vals: std::result::Result<Vec<u16>, _> = text.split_ascii_whitespace().take(count).map(str::parse).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("PGM raster: {e}")))?;
        if vals.len() != count {
            return Err(Error::Parse("truncated PGM raster".into()));
        }
        vals
    };
    if data.iter().any(|&v| v as usize > maxval) {
        return Err(Error::Parse("PGM sample exceeds maxval".into()));
    }
    Ok(GrayImage { width, height, maxval: maxval as u16, data })
}

/// One matrix row per line, entries `0` or `1`.
pub fn mask_to_csv(rows: usize, cols: usize, data: &[u8]) -> String {
    let mut out = String::with_capacity(rows * cols * 2);
    for row in data.chunks(cols).take(rows) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push(if *v != 0 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Returns `(rows, cols, data)`.
pub fn mask_from_csv(text: &str) -> Result<(usize, usize, Vec<u8>)> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            match tok.trim() {
                "0" => data.push(0),
                "1" => data.push(1),
                t => return Err(Error::Parse(format!("mask line {}: entry {t:?} is not 0/1", i + 1))),
            }
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::Parse(format!("mask line {}: ragged row", i + 1)));
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty mask".into()))?;
    Ok((rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{pmf, CutoffPolicy, SourceSpec};

    #[test]
    fn pmf_csv_and_json_round_trip_bitwise() {
        let d = pmf(SourceSpec::Thermal { mean: 2.3 }, CutoffPolicy::Default).unwrap();
        let back = pmf_from_csv(&pmf_to_csv(&d)).unwrap();
        assert_eq!(back.probs(), d.probs());
        let back = pmf_from_json(&pmf_to_json(&d)).unwrap();
        assert_eq!(back.probs(), d.probs());
    }

    #[test]
    fn pgm_round_trip_both_encodings() {
        let img = GrayImage { width: 3, height: 2, maxval: 255, data: vec![0, 10, 255, 7, 8, 9] };
        let dir = tempfile::tempdir().unwrap();
        for binary in [false, true] {
            let p = dir.path().join(format!("x{binary}.pgm"));
            write_pgm(&p, &img, binary).unwrap();
            assert_eq!(read_pgm(&p).unwrap(), img);
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let img = parse_pgm(b"P2\n# comment\n2 1\n# another\n15\n3 15\n").unwrap();
        assert_eq!(img.data, vec![3, 15]);
        assert!(parse_pgm(b"P3\n1 1\n255\n0\n").is_err());
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let data = vec![1, 0, 1, 0, 0, 1];
        let (r, c, d) = mask_from_csv(&mask_to_csv(2, 3, &data)).unwrap();
        assert_eq!((r, c, d), (2, 3, data));
        assert!(mask_from_csv("1,2\n").is_err());
        assert!(mask_from_csv("1,0\n1\n").is_err());
    }
}

//! On-disk formats: RF frames, polar images, PGM rasters, metric CSVs and
//! the content-hash manifest.
//!
//! All binary formats are little-endian. Samples are stored as `f32`, so a
//! read followed by a write reproduces the original bytes.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::acoustics::RFFrame;
use crate::beamform::{CartesianImage, PolarGrid, Scanlines};
use crate::error::{Error, Result};
use crate::metrics::DepthCurve;

pub const RF_MAGIC: &[u8; 8] = b"CDWRF1\0\0";
pub const IMAGE_MAGIC: &[u8; 8] = b"CDWIMG1\0";

fn format_err(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        what,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err(self.what, "truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| format_err(self.what, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(self.what, format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

pub fn rf_to_bytes(frame: &RFFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * frame.samples().len());
    out.extend_from_slice(RF_MAGIC);
    out.extend_from_slice(&(frame.n_elements() as u32).to_le_bytes());
    out.extend_from_slice(&(frame.n_samples() as u32).to_le_bytes());
    out.extend_from_slice(&frame.sample_rate.to_le_bytes());
    out.extend_from_slice(&frame.t0.to_le_bytes());
    push_f32s(&mut out, frame.samples());
    out
}

pub fn rf_from_bytes(buf: &[u8]) -> Result<RFFrame> {
    let mut r = Reader { buf, pos: 0, what: "rf frame" };
    if r.take(8)? != RF_MAGIC {
        return Err(format_err("rf frame", "bad magic"));
    }
    let n_el = r.u32()? as usize;
    let n_s = r.u32()? as usize;
    let fs = r.f64()?;
    let t0 = r.f64()?;
    let samples = r.f32s(n_el * n_s)?;
    r.finish()?;
    RFFrame::from_samples(n_el, n_s, samples, fs, t0)
}

/// Polar image: magic, u32 angle count, u32 range count, f64 axes (angles in
/// degrees, then ranges in meters), then `f32` values, angle-major.
pub fn image_to_bytes(img: &Scanlines) -> Vec<u8> {
    let g = &img.grid;
    let mut out = Vec::with_capacity(16 + 8 * (g.n_angles() + g.n_ranges()) + 4 * g.len());
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&(g.n_angles() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n_ranges() as u32).to_le_bytes());
    for &v in g.angles_deg().iter().chain(g.ranges()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_f32s(&mut out, img.data());
    out
}

pub fn image_from_bytes(buf: &[u8]) -> Result<Scanlines> {
    let mut r = Reader { buf, pos: 0, what: "polar image" };
    if r.take(8)? != IMAGE_MAGIC {
        return Err(format_err("polar image", "bad magic"));
    }
    let na = r.u32()? as usize;
    let nr = r.u32()? as usize;
    let angles = (0..na).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let ranges = (0..nr).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let data = r.f32s(na * nr)?;
    r.finish()?;
    Scanlines::from_data(PolarGrid::new(angles, ranges)?, data)
}

/// Binary PGM (P5), maxval 255, rows top (shallow) to bottom.
pub fn pgm_to_bytes(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::ShapeMismatch(format!("{} pixels for {width}x{height}", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn cartesian_to_pgm(img: &CartesianImage, dynamic_range_db: f64) -> Result<Vec<u8>> {
    pgm_to_bytes(img.nx, img.nz, &img.to_gray(dynamic_range_db))
}

/// `(width, height, pixels)`.
pub fn pgm_from_bytes(buf: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let err = |r: &str| format_err("pgm", r);
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&buf[start..pos]).map_err(|_| err("non-ascii header"))?.to_string());
    }
    if fields[0] != "P5" {
        return Err(err("not a P5 file"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(err("only maxval 255 is supported"));
    }
    let data = buf.get(pos + 1..).ok_or_else(|| err("missing raster"))?;
    if data.len() != w * h {
        return Err(err("raster size mismatch"));
    }
    Ok((w, h, data.to_vec()))
}

pub const DEPTH_HEADER: &str = "depth_mm,value_db";
pub const PIN_HEADER: &str = "pin_index,x_mm,value_db";

/// `depth_mm,value_db`; linear curves are written in dB.
pub fn depth_curve_csv(curve: &DepthCurve) -> String {
    let mut s = format!("{DEPTH_HEADER}\n");
    for (&d, &v) in curve.depths().iter().zip(curve.values()) {
        let db = if curve.db { v } else { 10.0 * v.log10() };
        s.push_str(&format!("{},{}\n", d * 1e3, db));
    }
    s
}

/// `pin_index,x_mm,value_db`.
pub fn profile_csv(pins: &[(f64, f64)], values: &[f64]) -> String {
    let mut s = format!("{PIN_HEADER}\n");
    for (k, (&(x, _), &v)) in pins.iter().zip(values).enumerate() {
        s.push_str(&format!("{k},{},{v}\n", x * 1e3));
    }
    s
}

/// Parsed metric table: header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_metric_csv(text: &str) -> Result<MetricTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| format_err("csv", "empty file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format_err("csv", format!("row {}: {e}", i + 1)))?;
            if row.len() != header.len() {
                return Err(format_err("csv", format!("row {} has {} fields", i + 1, row.len())));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricTable { header, rows })
}

impl MetricTable {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

/// Row-by-row difference of the last column, keyed on the first; the
/// report ends with the largest absolute difference.
pub fn compare_tables(a: &MetricTable, b: &MetricTable) -> Result<String> {
    if a.header != b.header {
        return Err(format_err("csv", "headers differ"));
    }
    if a.rows.len() != b.rows.len() {
        return Err(format_err("csv", format!("{} rows vs {}", a.rows.len(), b.rows.len())));
    }
    let key = &a.header[0];
    let mut s = format!("{key},a,b,diff\n");
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        if ra[0] != rb[0] {
            return Err(format_err("csv", format!("key {} vs {}", ra[0], rb[0])));
        }
        let (va, vb) = (*ra.last().expect("non-empty"), *rb.last().expect("non-empty"));
        let d = vb - va;
        worst = worst.max(d.abs());
        s.push_str(&format!("{},{va},{vb},{d}\n", ra[0]));
    }
    s.push_str(&format!("max_abs_diff,{worst}\n"));
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under a root directory and records their SHA-256 hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<(String, String)>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` at `rel` (forward-slash separated) below the root.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.push((rel.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    /// `<sha256>  <path>` per artifact, sorted by path.
    pub fn manifest_text(&self) -> String {
        let mut e = self.entries.clone();
        e.sort();
        e.iter().map(|(p, h)| format!("{h}  {p}\n")).collect()
    }

    /// Writes the manifest next to the artifacts and returns its text.
    pub fn finish(self) -> Result<String> {
        let text = self.manifest_text();
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        Ok(text)
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

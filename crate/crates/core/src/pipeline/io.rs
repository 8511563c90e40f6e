//! On-disk formats.
//!
//! Numeric payloads are raw little-endian `f64` files (`*.f64`) described by a
//! JSON sidecar of the same stem (`*.json`). Fields store `values[i*n + j]`,
//! sample `(i, j)` at `origin + (i·dx, j·dx)`. Traces store `values[k*l + t]`
//! for detector `k` and time sample `t`. PGM previews are derived output only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::forward::{TraceKind, TraceMatrix};
use crate::geometry::{DomainDescription, WeightRule};
use crate::pipeline::config::build_detectors;
use crate::point::Point;

pub const FIELD_FORMAT: &str = "npat-field";
pub const TRACE_FORMAT: &str = "npat-trace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub data: String,
    pub n: usize,
    pub dx: f64,
    pub origin: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseInfo {
    pub percent: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub format: String,
    pub data: String,
    pub kind: TraceKind,
    pub m: usize,
    pub l: usize,
    pub dt: f64,
    pub t_final: f64,
    pub domain: DomainDescription,
    pub weights: WeightRule,
    /// Grid step the detector count was derived from.
    pub dx: f64,
    pub noise: Option<NoiseInfo>,
}

/// `dir/stem.json` and `dir/stem.f64`.
pub fn artifact_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.f64")))
}

fn write_raw(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_raw(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            count * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_sidecar<T: for<'de> Deserialize<'de>>(path: &Path, format: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    match v.get("format").and_then(|f| f.as_str()) {
        Some(f) if f == format => Ok(serde_json::from_value(v)?),
        other => Err(Error::Format(format!(
            "{}: expected format `{format}`, found {:?}",
            path.display(),
            other.unwrap_or("none")
        ))),
    }
}

/// Data file next to `sidecar`.
fn data_path(sidecar: &Path, data: &str) -> PathBuf {
    sidecar.parent().unwrap_or(Path::new(".")).join(data)
}

/// Writes `stem.f64` and `stem.json` into `dir`; returns the sidecar path.
pub fn write_field(dir: &Path, stem: &str, f: &ScalarField2D) -> Result<PathBuf> {
    let (json, raw) = artifact_paths(dir, stem);
    write_raw(&raw, f.values())?;
    let o = f.origin();
    write_json(
        &json,
        &FieldSidecar {
            format: FIELD_FORMAT.into(),
            data: format!("{stem}.f64"),
            n: f.n(),
            dx: f.dx(),
            origin: [o.x, o.y],
        },
    )?;
    Ok(json)
}

/// Loads a field from its sidecar (or from the `.f64` file next to it).
pub fn read_field(path: &Path) -> Result<ScalarField2D> {
    let sidecar = path.with_extension("json");
    let meta: FieldSidecar = read_sidecar(&sidecar, FIELD_FORMAT)?;
    let values = read_raw(&data_path(&sidecar, &meta.data), meta.n * meta.n)?;
    ScalarField2D::new(meta.n, meta.dx, Point::new(meta.origin[0], meta.origin[1]), values)
}

/// Everything needed to rebuild the detector array of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProvenance {
    pub domain: DomainDescription,
    pub dx: f64,
    pub noise: Option<NoiseInfo>,
}

pub fn write_trace(dir: &Path, stem: &str, t: &TraceMatrix, prov: &TraceProvenance) -> Result<PathBuf> {
    let (json, raw) = artifact_paths(dir, stem);
    write_raw(&raw, t.values())?;
    write_json(
        &json,
        &TraceSidecar {
            format: TRACE_FORMAT.into(),
            data: format!("{stem}.f64"),
            kind: t.kind,
            m: t.m(),
            l: t.l(),
            dt: t.dt(),
            t_final: t.t_final(),
            domain: prov.domain.clone(),
            weights: t.detectors().rule(),
            dx: prov.dx,
            noise: prov.noise.clone(),
        },
    )?;
    Ok(json)
}

pub fn read_trace(path: &Path) -> Result<(TraceMatrix, TraceProvenance)> {
    let sidecar = path.with_extension("json");
    let meta: TraceSidecar = read_sidecar(&sidecar, TRACE_FORMAT)?;
    let det = build_detectors(&meta.domain, meta.dx, meta.weights)?;
    if det.len() != meta.m {
        return Err(Error::Format(format!(
            "{}: sidecar says m = {} but the domain and dx give {}",
            sidecar.display(),
            meta.m,
            det.len()
        )));
    }
    let values = read_raw(&data_path(&sidecar, &meta.data), meta.m * meta.l)?;
    let t = TraceMatrix::new(meta.kind, Arc::new(det), meta.dt, meta.t_final, values)?;
    if t.l() != meta.l {
        return Err(Error::Format(format!("{}: inconsistent l", sidecar.display())));
    }
    Ok((
        t,
        TraceProvenance {
            domain: meta.domain,
            dx: meta.dx,
            noise: meta.noise,
        },
    ))
}

/// 8-bit binary PGM, linearly scaled from the field's minimum to maximum,
/// with `+y` pointing up.
pub fn write_pgm(path: &Path, f: &ScalarField2D) -> Result<()> {
    let n = f.n();
    let (lo, hi) = f.min_max();
    let span = hi - lo;
    let mut out = Vec::with_capacity(n * n + 32);
    write!(out, "P5\n{n} {n}\n255\n")?;
    for row in 0..n {
        let j = n - 1 - row;
        for i in 0..n {
            let v = if span > 0.0 { (f.get(i, j) - lo) / span } else { 0.0 };
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_circle_detectors;

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScalarField2D::from_fn(7, 0.25, Point::new(-0.75, -0.75), |p| p.x * 3.0 - p.y * p.y);
        let side = write_field(dir.path(), "f", &f).unwrap();
        assert_eq!(read_field(&side).unwrap(), f);
        assert_eq!(read_field(&dir.path().join("f.f64")).unwrap(), f);
        fs::write(dir.path().join("f.f64"), [0u8; 12]).unwrap();
        assert!(matches!(read_field(&side), Err(Error::Format(_))));
    }

    #[test]
    fn trace_round_trip_rebuilds_detectors() {
        let dir = tempfile::tempdir().unwrap();
        let dx = 0.05;
        let det = Arc::new(build_circle_detectors(1.0, Point::ORIGIN, dx).unwrap());
        let m = det.len();
        let values: Vec<f64> = (0..m * 11).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = TraceMatrix::new(TraceKind::Mixed { a: 1.0, b: 0.1 }, det.clone(), dx, 0.5, values).unwrap();
        let prov = TraceProvenance {
            domain: DomainDescription::Circle {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            dx,
            noise: Some(NoiseInfo { percent: 10.0, seed: 4 }),
        };
        let side = write_trace(dir.path(), "t", &t, &prov).unwrap();
        let (back, p2) = read_trace(&side).unwrap();
        assert_eq!(p2, prov);
        assert_eq!(back.kind, t.kind);
        assert_eq!(back.values(), t.values());
        assert_eq!(back.detectors().points(), det.points());
        assert_eq!(back.detectors().weights(), det.weights());
        assert!(matches!(read_field(&side), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_header_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScalarField2D::from_fn(4, 1.0, Point::ORIGIN, |p| p.y);
        let path = dir.path().join("p.pgm");
        write_pgm(&path, &f).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 16);
        assert_eq!(&px[..4], &[255; 4]);
        assert_eq!(&px[12..], &[0; 4]);
    }
}

//! File formats: heatmaps (JSON and 16-bit PGM), GeoJSON results, IQ
//! captures with a JSON sidecar, ground truth, and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fusion::FusedMap;
use crate::geometry::{GeoOrigin, LocalPoint};
use crate::localize::{LongAxis, RegionSummary};
use crate::simulator::Scenario;
use crate::spectrum::IqBuffer;

/// Segments of the GeoJSON ellipse polygon.
pub const POLYGON_SEGMENTS: usize = 64;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
}

fn format_err(what: &'static str, msg: impl ToString) -> IoError {
    IoError::Format {
        what,
        msg: msg.to_string(),
    }
}

/// Writes through a temporary sibling file and renames it into place, so
/// readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let fs_err = |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(fs_err)
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

pub fn heatmap_json(map: &FusedMap) -> String {
    to_json_pretty(map)
}

pub fn parse_heatmap(json: &str) -> Result<FusedMap, IoError> {
    let map: FusedMap = serde_json::from_str(json).map_err(|e| format_err("heatmap", e))?;
    map.validate().map_err(|e| format_err("heatmap", e))?;
    Ok(map)
}

/// Binary PGM, 16 bits per pixel big-endian, scaled so the maximum is
/// 65535. The first row is the northernmost.
pub fn heatmap_pgm(map: &FusedMap) -> Vec<u8> {
    let g = &map.grid;
    let mut out = format!("P5\n{} {}\n65535\n", g.width, g.height).into_bytes();
    out.reserve(2 * g.len());
    let max = map.max();
    for j in (0..g.height).rev() {
        for i in 0..g.width {
            let v = if max > 0.0 {
                (map.get(i, j) / max * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// GeoJSON
// ---------------------------------------------------------------------------

fn coord(origin: &GeoOrigin, p: LocalPoint) -> Value {
    let (lon, lat) = origin.to_geodetic(p);
    json!([lon, lat])
}

/// FeatureCollection with, per region, the peak and centroid points and the
/// ellipse polygon.
pub fn results_geojson(regions: &[RegionSummary], origin: &GeoOrigin) -> Value {
    let mut features = Vec::new();
    for (k, r) in regions.iter().enumerate() {
        let f = &r.fit;
        let long = match f.long_axis {
            LongAxis::Bounded(m) => json!(m),
            LongAxis::Unbounded => json!("unbounded"),
        };
        let props = |kind: &str, p: LocalPoint| {
            json!({
                "region": k,
                "kind": kind,
                "long_axis_m": long,
                "short_axis_m": f.short_axis,
                "heading_deg": f.heading_deg,
                "quality": r.quality,
                "degenerate": r.degenerate,
                "contour_sigma": f.contour_sigma,
                "local_east_m": p.east,
                "local_north_m": p.north,
            })
        };
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": coord(origin, f.peak)},
            "properties": props("peak", f.peak),
        }));
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": coord(origin, f.center)},
            "properties": props("centroid", f.center),
        }));
        let ring: Vec<Value> = f
            .polygon(POLYGON_SEGMENTS)
            .into_iter()
            .map(|p| coord(origin, p))
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": props("ellipse", f.centroid),
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

// ---------------------------------------------------------------------------
// IQ captures
// ---------------------------------------------------------------------------

/// Describes a raw IQ file of interleaved little-endian f32 pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqSidecar {
    pub sample_rate_hz: f64,
    pub center_freq_mhz: f64,
    pub n: usize,
}

pub fn encode_iq(buf: &IqBuffer) -> (Vec<u8>, IqSidecar) {
    let mut out = Vec::with_capacity(8 * buf.len());
    for z in buf.samples() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    let side = IqSidecar {
        sample_rate_hz: buf.sample_rate_hz(),
        center_freq_mhz: buf.center_freq_mhz(),
        n: buf.len(),
    };
    (out, side)
}

pub fn decode_iq(bytes: &[u8], side: &IqSidecar) -> Result<IqBuffer, IoError> {
    if bytes.len() != 8 * side.n {
        return Err(format_err(
            "iq file",
            format!("{} bytes, sidecar declares {} samples", bytes.len(), side.n),
        ));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    IqBuffer::new(samples, side.sample_rate_hz, side.center_freq_mhz)
        .map_err(|e| format_err("iq file", e))
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthJammer {
    pub x: f64,
    pub y: f64,
    pub band: String,
    pub eirp: f64,
    pub denial_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub jammers: Vec<TruthJammer>,
}

impl Truth {
    pub fn from_scenario(s: &Scenario) -> Self {
        Truth {
            jammers: s
                .jammers
                .iter()
                .map(|j| TruthJammer {
                    x: j.position.east,
                    y: j.position.north,
                    band: j.band.clone(),
                    eirp: j.eirp,
                    denial_radius_m: s.denial_radius(j),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::threshold;
    use crate::geometry::GridSpec;
    use crate::localize::localize_map;

    fn blob() -> FusedMap {
        let grid = GridSpec::new(LocalPoint::new(-100.0, -100.0), 5.0, 40, 40).unwrap();
        let mut values = vec![0.0; grid.len()];
        for j in 0..grid.height {
            for i in 0..grid.width {
                let c = grid.cell_center(i, j).unwrap();
                values[grid.index(i, j)] =
                    (-(c.east * c.east / 800.0 + c.north * c.north / 400.0)).exp();
            }
        }
        FusedMap {
            grid,
            n_scans: 2,
            threshold_applied: None,
            values,
        }
    }

    #[test]
    fn pgm_layout() {
        let mut m = blob();
        m.grid = GridSpec::new(LocalPoint::ORIGIN, 1.0, 2, 2).unwrap();
        m.values = vec![0.0, 0.5, 1.0, 0.25];
        let b = heatmap_pgm(&m);
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&b[..header.len()], header);
        let px: Vec<u16> = b[header.len()..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        // north row (j = 1) first
        assert_eq!(px, vec![65535, 16384, 0, 32768]);
    }

    #[test]
    fn heatmap_json_round_trip() {
        let m = blob();
        assert_eq!(parse_heatmap(&heatmap_json(&m)).unwrap(), m);
        assert!(parse_heatmap("{}").is_err());
    }

    #[test]
    fn iq_round_trip_and_length_check() {
        let s: Vec<Complex64> = (0..64)
            .map(|k| Complex64::new(k as f64 * 0.5, -1.0))
            .collect();
        let b = IqBuffer::new(s, 1e6, 1575.42).unwrap();
        let (bytes, side) = encode_iq(&b);
        assert_eq!(bytes.len(), 512);
        assert_eq!(decode_iq(&bytes, &side).unwrap(), b);
        assert!(decode_iq(&bytes[..504], &side).is_err());
        assert!(decode_iq(&[], &side).is_err());
    }

    #[test]
    fn geojson_rings_are_closed_and_finite() {
        let m = threshold(&blob(), 0.5).unwrap();
        let scans = [
            LocalPoint::new(300.0, 0.0),
            LocalPoint::new(0.0, 300.0),
            LocalPoint::new(-300.0, -10.0),
        ];
        let regions = localize_map(&m, &scans);
        assert_eq!(regions.len(), 1);
        let gj = results_geojson(&regions, &GeoOrigin::new(48.0, 11.0));
        let feats = gj["features"].as_array().unwrap();
        assert_eq!(feats.len(), 3);
        let ring = feats[2]["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.len(), POLYGON_SEGMENTS + 1);
        assert_eq!(ring.first(), ring.last());
        for c in ring {
            assert!(c[0].as_f64().unwrap().is_finite() && c[1].as_f64().unwrap().is_finite());
        }
        assert!(feats[0]["properties"]["long_axis_m"].is_number());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("rfimap-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        assert!(write_atomic(&dir.join("missing/x"), b"").is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}

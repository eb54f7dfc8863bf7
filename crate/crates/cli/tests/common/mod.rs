#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rfimap")
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn rfimap")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn jammer(x: f64, y: f64) -> Value {
    json!({"x": x, "y": y, "eirp": 1.0})
}

/// Scenario with a grid of 5 m cells covering `half` meters around the origin.
pub fn scenario(jammers: Vec<Value>, poses: &[(f64, f64)], half: f64, extra: Value) -> Value {
    let n = (2.0 * half / 5.0).round() as usize;
    let mut s = json!({
        "jammers": jammers,
        "poses": poses.iter().map(|&(x, y)| json!({"x": x, "y": y})).collect::<Vec<_>>(),
        "grid": {"origin": {"east": -half, "north": -half}, "resolution": 5.0, "width": n, "height": n},
        "noise_floor": 1e-8,
        "step_deg": 30.0,
        "seed": 1
    });
    if let Value::Object(m) = extra {
        for (k, v) in m {
            s[k] = v;
        }
    }
    s
}

/// Pose at `range` meters from `from` along compass bearing `deg`.
pub fn polar(from: (f64, f64), deg: f64, range: f64) -> (f64, f64) {
    let (s, c) = deg.to_radians().sin_cos();
    (from.0 + range * s, from.1 + range * c)
}

pub fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

pub fn scan_logs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("scan_")
        })
        .collect();
    v.sort();
    v
}

pub fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// One summary per region from a results GeoJSON, taken from the
/// centroid features.
#[derive(Debug, Clone)]
pub struct Region {
    pub east: f64,
    pub north: f64,
    pub long_axis: Option<f64>,
    pub short_axis: f64,
    pub heading_deg: f64,
    pub quality: Option<f64>,
    pub degenerate: bool,
}

pub fn regions(geojson: &Value) -> Vec<Region> {
    geojson["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["properties"]["kind"] == "centroid")
        .map(|f| {
            let p = &f["properties"];
            Region {
                east: p["local_east_m"].as_f64().unwrap(),
                north: p["local_north_m"].as_f64().unwrap(),
                long_axis: p["long_axis_m"].as_f64(),
                short_axis: p["short_axis_m"].as_f64().unwrap(),
                heading_deg: p["heading_deg"].as_f64().unwrap(),
                quality: p["quality"].as_f64(),
                degenerate: p["degenerate"].as_bool().unwrap(),
            }
        })
        .collect()
}

/// Simulates a scenario and fuses the resulting scan logs through the
/// command line. Returns the fuse output and its directory.
pub fn simulate_and_fuse(dir: &Path, scenario: &Value, fuse_args: &[&str]) -> (Output, PathBuf) {
    let sc = write_json(dir, "scenario.json", scenario);
    let sim = dir.join("sim");
    let o = run([
        Path::new("simulate").as_os_str(),
        sc.as_os_str(),
        "--out".as_ref(),
        sim.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.join("fused");
    let mut args: Vec<String> = vec!["fuse".into()];
    args.extend(scan_logs(&sim).iter().map(|p| p.display().to_string()));
    args.extend(["--grid".into(), sim.join("grid.json").display().to_string()]);
    args.extend(["--out".into(), out.display().to_string()]);
    args.extend(fuse_args.iter().map(|s| s.to_string()));
    (run(&args), out)
}

//! `rfimap`: simulate, analyze and fuse horizon scans from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rfimap::antenna::{srp_from_measurement, RadiationPattern, DEFAULT_COMPONENTS};
use rfimap::fusion::{fuse_scans, threshold, FusedMap, ProjectionMode, DEFAULT_ALPHA};
use rfimap::geometry::{GeoOrigin, GridSpec, LocalPoint};
use rfimap::io::{
    decode_iq, encode_iq, heatmap_json, heatmap_pgm, parse_heatmap, results_geojson,
    to_json_pretty, IqSidecar, Truth,
};
use rfimap::localize::{assess, localize_map, LongAxis, RegionSummary};
use rfimap::scanops::{HorizonScan, ScanLog, ScanPose};
use rfimap::simulator::{
    parse_scenario, received_power, simulate_all, simulate_iq, IqSource, Scenario,
};
use rfimap::spectrum::{
    default_channels, detect_peaks, parse_channels, psd, AllocationTable, ChannelMask,
    DEFAULT_PROMINENCE,
};
use rfimap::SrpModel;

const EXIT_NO_REGION: u8 = 1;
const EXIT_INPUT: u8 = 2;

/// Samples per simulated IQ capture.
const IQ_SAMPLES: usize = 4096;
const IQ_RATE_HZ: f64 = 8.192e6;

#[derive(Parser, Debug)]
#[command(
    name = "rfimap",
    version,
    about = "Map GNSS interference sources from UAV horizon scans"
)]
struct Cli {
    /// Print progress to standard error.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario: one scan log per pose plus truth.json and grid.json.
    Simulate(SimulateArgs),
    /// Periodogram and peak report of an IQ capture.
    Psd(PsdArgs),
    /// Fuse scan logs into a heatmap and localize the sources.
    Fuse(FuseArgs),
    /// Rate the angular spread of scan poses around candidate regions.
    Plan(PlanArgs),
    /// Re-export a heatmap as PGM and GeoJSON.
    Export(ExportArgs),
    /// Fit a radiation pattern model from a measured pattern.
    Srp(SrpArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step_deg: Option<f64>,
    #[arg(long)]
    band: Option<String>,
    /// Also write an IQ capture per pose, taken at its peak heading.
    #[arg(long)]
    iq: bool,
}

#[derive(Args, Debug)]
struct PsdArgs {
    /// Raw interleaved little-endian f32 IQ file.
    iq: PathBuf,
    /// Sidecar JSON; defaults to the IQ path with a .json extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Channel mask configuration.
    #[arg(long)]
    channels: Option<PathBuf>,
    /// Allocation table for harmonic attribution.
    #[arg(long)]
    allocations: Option<PathBuf>,
    /// Minimum peak-to-median power ratio.
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    prominence: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct MapArgs {
    /// Threshold as a fraction of the fused maximum, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Geodetic anchor of the local frame as "lat,lon".
    #[arg(long, value_parser = parse_origin, default_value = "0,0")]
    origin: GeoOrigin,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Scan log files.
    #[arg(required = true)]
    scans: Vec<PathBuf>,
    /// Radiation pattern model, or a measured pattern to fit.
    #[arg(long)]
    srp: Option<PathBuf>,
    /// Half-power beamwidth of the default pattern when no --srp is given.
    #[arg(long, default_value_t = 60.0)]
    hpbw: f64,
    /// Grid specification file.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Grid resolution in meters; resamples a given grid over the same extent.
    #[arg(long)]
    grid_res: Option<f64>,
    /// Padding around the scan positions for the automatic grid, meters.
    #[arg(long, default_value_t = 1000.0)]
    margin: f64,
    /// Only use scan logs of this band.
    #[arg(long)]
    band: Option<String>,
    /// Project one unweighted lobe along each scan's peak heading.
    #[arg(long)]
    unweighted: bool,
    #[command(flatten)]
    map: MapArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// JSON list of {"x", "y"} positions, or a scenario file.
    poses: PathBuf,
    /// Candidate region as "east,north"; repeatable. Defaults to the pose centroid.
    #[arg(long = "region", value_parser = parse_point)]
    regions: Vec<LocalPoint>,
    /// Write plan.json here instead of printing only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    heatmap: PathBuf,
    /// Scan logs, used for the geometry quality and focus selection.
    #[arg(long = "scan")]
    scans: Vec<PathBuf>,
    /// Threshold to apply if the heatmap is not yet thresholded.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_origin, default_value = "0,0")]
    origin: GeoOrigin,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SrpArgs {
    /// Measured pattern: {"band_mhz": f, "samples": [[deg, dB], ...]}.
    pattern: PathBuf,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma separated numbers, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok((a, b))
}

fn parse_origin(s: &str) -> Result<GeoOrigin, String> {
    let (lat, lon) = parse_pair(s)?;
    if lat.abs() >= 90.0 {
        return Err("latitude must be inside (-90, 90)".into());
    }
    Ok(GeoOrigin::new(lat, lon))
}

fn parse_point(s: &str) -> Result<LocalPoint, String> {
    parse_pair(s).map(|(e, n)| LocalPoint::new(e, n))
}

#[derive(Debug)]
enum Failure {
    NoRegion(String),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Output file name and contents.
type Artifact = (String, Vec<u8>);

/// Artifacts are staged under temporary names and only renamed into place
/// once every one of them has been written.
fn commit(dir: &Path, files: Vec<Artifact>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let pid = std::process::id();
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.{pid}.tmp"));
        if let Err(e) = fs::write(&tmp, &bytes) {
            cleanup(&staged);
            let _ = fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("writing {}", tmp.display()));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dst) in &staged {
        fs::rename(tmp, dst).with_context(|| format!("renaming to {}", dst.display()))?;
    }
    Ok(())
}

fn load_scans(paths: &[PathBuf], band: Option<&str>) -> Result<Vec<HorizonScan>> {
    let mut scans = Vec::new();
    for p in paths {
        let log: ScanLog = serde_json::from_str(&read(p)?)
            .with_context(|| format!("parsing scan log {}", p.display()))?;
        let scan = HorizonScan::try_from(log)
            .with_context(|| format!("invalid scan log {}", p.display()))?;
        if band.is_none_or(|b| b == scan.band) {
            scans.push(scan);
        }
    }
    if scans.is_empty() {
        bail!("no scan logs for the selected band");
    }
    if scans.iter().any(|s| s.band != scans[0].band) {
        bail!("scan logs mix bands, select one with --band");
    }
    Ok(scans)
}

fn load_srp(path: Option<&Path>, hpbw: f64) -> Result<SrpModel> {
    let Some(path) = path else {
        return SrpModel::from_hpbw(hpbw).map_err(|e| anyhow!("--hpbw: {e}"));
    };
    let text = read(path)?;
    if let Ok(model) = serde_json::from_str::<SrpModel>(&text) {
        return Ok(model);
    }
    let rp: RadiationPattern = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} is neither a pattern model nor a measured pattern",
            path.display()
        )
    })?;
    rp.validate()?;
    Ok(srp_from_measurement(&rp, DEFAULT_COMPONENTS)?.model)
}

fn auto_grid(scans: &[HorizonScan], margin: f64, res: f64) -> Result<GridSpec> {
    if !(margin > 0.0) {
        bail!("--margin must be > 0");
    }
    let (mut lo_e, mut lo_n) = (f64::INFINITY, f64::INFINITY);
    let (mut hi_e, mut hi_n) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in scans {
        let p = s.pose.position;
        lo_e = lo_e.min(p.east);
        lo_n = lo_n.min(p.north);
        hi_e = hi_e.max(p.east);
        hi_n = hi_n.max(p.north);
    }
    let origin = LocalPoint::new(lo_e - margin, lo_n - margin);
    let w = ((hi_e - lo_e + 2.0 * margin) / res).ceil() as usize;
    let h = ((hi_n - lo_n + 2.0 * margin) / res).ceil() as usize;
    Ok(GridSpec::new(origin, res, w.max(1), h.max(1))?)
}

fn resample(grid: GridSpec, res: f64) -> Result<GridSpec> {
    let w = (grid.width as f64 * grid.resolution / res).round().max(1.0) as usize;
    let h = (grid.height as f64 * grid.resolution / res)
        .round()
        .max(1.0) as usize;
    Ok(GridSpec::new(grid.origin, res, w, h)?)
}

fn region_table(regions: &[RegionSummary]) -> String {
    let mut out = format!(
        "{:<7}{:>12}{:>12}{:>28}{:>16}{:>16}{:>9}\n",
        "Region",
        "Long Axis",
        "Short Axis",
        "Heading on Local northing",
        "Local Easting",
        "Local Northing",
        "Quality"
    );
    for (k, r) in regions.iter().enumerate() {
        let f = &r.fit;
        let (long, tag) = match f.long_axis {
            LongAxis::Bounded(m) => (format!("{m:.2} m"), ""),
            LongAxis::Unbounded => ("unbound".to_string(), " (focus)"),
        };
        let quality = r.quality.map_or("n/a".to_string(), |q| format!("{q:.2}"));
        out.push_str(&format!(
            "{:<7}{:>12}{:>12}{:>28}{:>16}{:>16}{:>9}{}\n",
            k + 1,
            long,
            format!("{:.2} m", f.short_axis),
            format!("{:.2}°", f.heading_deg),
            format!("{:.2} m", f.center.east),
            format!("{:.2} m", f.center.north),
            quality,
            tag
        ));
    }
    out
}

fn localized_outputs(
    map: &FusedMap,
    positions: &[LocalPoint],
    origin: &GeoOrigin,
) -> Result<(Vec<RegionSummary>, Vec<Artifact>), Failure> {
    let regions = localize_map(map, positions);
    if regions.is_empty() {
        return Err(Failure::NoRegion("no region survived the threshold".into()));
    }
    let files = vec![
        ("heatmap.pgm".to_string(), heatmap_pgm(map)),
        ("heatmap.json".to_string(), heatmap_json(map).into_bytes()),
        (
            "results.geojson".to_string(),
            to_json_pretty(&results_geojson(&regions, origin)).into_bytes(),
        ),
    ];
    Ok((regions, files))
}

fn cmd_simulate(a: SimulateArgs, verbose: u8) -> Result<(), Failure> {
    let mut scenario: Scenario = parse_scenario(&read(&a.scenario)?)
        .with_context(|| format!("scenario {}", a.scenario.display()))?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(step) = a.step_deg {
        scenario.step_deg = Some(step);
    }
    if let Some(band) = a.band {
        scenario.band = band;
    }
    scenario.validate().map_err(anyhow::Error::from)?;
    let scans = simulate_all(&scenario).map_err(anyhow::Error::from)?;
    let mut files = Vec::new();
    for (k, s) in scans.iter().enumerate() {
        files.push((
            format!("scan_{k:03}.json"),
            to_json_pretty(&ScanLog::from(s.clone())).into_bytes(),
        ));
    }
    files.push((
        "truth.json".into(),
        to_json_pretty(&Truth::from_scenario(&scenario)).into_bytes(),
    ));
    files.push((
        "grid.json".into(),
        to_json_pretty(&scenario.grid).into_bytes(),
    ));
    if a.iq {
        let mask = default_channels()
            .into_iter()
            .find(|m| m.name == scenario.band)
            .ok_or_else(|| anyhow!("no channel definition for band {}", scenario.band))?;
        for (k, (nominal, scan)) in scenario.poses.iter().zip(&scans).enumerate() {
            let rx = ScanPose::new(*nominal, scan.pose.heading);
            let mut sources = Vec::new();
            for j in scenario.jammers.iter().filter(|j| j.band == scenario.band) {
                let power = received_power(j, &rx, &scenario.srp, scenario.path_loss_exponent)
                    .map_err(anyhow::Error::from)?;
                sources.push(IqSource {
                    waveform: j.waveform,
                    power,
                });
            }
            let seed = scenario
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(k as u64);
            let buf = simulate_iq(
                &sources,
                &mask,
                IQ_SAMPLES,
                IQ_RATE_HZ,
                scenario.noise_floor,
                seed,
            )
            .map_err(anyhow::Error::from)?;
            let (bytes, side) = encode_iq(&buf);
            files.push((format!("iq_{k:03}.bin"), bytes));
            files.push((
                format!("iq_{k:03}.json"),
                to_json_pretty(&side).into_bytes(),
            ));
        }
    }
    if verbose > 0 {
        eprintln!("simulated {} scans into {}", scans.len(), a.out.display());
    }
    commit(&a.out, files)?;
    Ok(())
}

#[derive(Serialize)]
struct BandPowerDoc {
    name: String,
    power: f64,
}

#[derive(Serialize)]
struct PsdDoc<'a> {
    frame: &'a rfimap::spectrum::PsdFrame,
    band_power: Vec<BandPowerDoc>,
}

fn cmd_psd(a: PsdArgs) -> Result<(), Failure> {
    let side_path = a
        .sidecar
        .clone()
        .unwrap_or_else(|| a.iq.with_extension("json"));
    let side: IqSidecar = serde_json::from_str(&read(&side_path)?)
        .with_context(|| format!("parsing sidecar {}", side_path.display()))?;
    let bytes = fs::read(&a.iq).with_context(|| format!("reading {}", a.iq.display()))?;
    let buf = decode_iq(&bytes, &side).map_err(anyhow::Error::from)?;
    let masks: Vec<ChannelMask> = match &a.channels {
        Some(p) => parse_channels(&read(p)?).map_err(anyhow::Error::from)?,
        None => default_channels(),
    };
    let table = match &a.allocations {
        Some(p) => AllocationTable::from_json(&read(p)?).map_err(anyhow::Error::from)?,
        None => AllocationTable::default(),
    };
    if !(a.prominence > 0.0) {
        return Err(anyhow!("--prominence must be > 0").into());
    }
    let frame = psd(&buf).map_err(anyhow::Error::from)?;
    let band_power = masks
        .iter()
        .filter_map(|m| {
            rfimap::spectrum::band_power(&frame, m)
                .ok()
                .map(|power| BandPowerDoc {
                    name: m.name.clone(),
                    power,
                })
        })
        .collect();
    let peaks = detect_peaks(&frame, a.prominence, &table);
    println!(
        "{:>14}{:>8}{:>14}{:>12}  attribution",
        "MHz", "bin", "power", "prominence"
    );
    for p in &peaks {
        let attr: Vec<String> = p
            .attribution
            .iter()
            .filter_map(|at| {
                at.band
                    .as_ref()
                    .map(|b| format!("order {} {:.3} MHz {}", at.order, at.fundamental_mhz, b))
            })
            .collect();
        println!(
            "{:>14.6}{:>8}{:>14.6e}{:>12.1}  {}",
            p.freq_mhz,
            p.bin,
            p.power,
            p.prominence,
            attr.join("; ")
        );
    }
    commit(
        &a.out,
        vec![
            (
                "psd.json".into(),
                to_json_pretty(&PsdDoc {
                    frame: &frame,
                    band_power,
                })
                .into_bytes(),
            ),
            ("peaks.json".into(), to_json_pretty(&peaks).into_bytes()),
        ],
    )?;
    Ok(())
}

fn cmd_fuse(a: FuseArgs, verbose: u8) -> Result<(), Failure> {
    let scans = load_scans(&a.scans, a.band.as_deref())?;
    let srp = load_srp(a.srp.as_deref(), a.hpbw)?;
    if let Some(r) = a.grid_res {
        if !(r > 0.0 && r.is_finite()) {
            return Err(anyhow!("--grid-res must be > 0").into());
        }
    }
    let grid = match &a.grid {
        Some(p) => {
            let g: GridSpec = serde_json::from_str(&read(p)?)
                .with_context(|| format!("parsing grid {}", p.display()))?;
            g.validate().map_err(anyhow::Error::from)?;
            match a.grid_res {
                Some(r) => resample(g, r)?,
                None => g,
            }
        }
        None => auto_grid(
            &scans,
            a.margin,
            a.grid_res.unwrap_or(rfimap::geometry::DEFAULT_RESOLUTION_M),
        )?,
    };
    let mode = if a.unweighted {
        ProjectionMode::Unweighted
    } else {
        ProjectionMode::Weighted
    };
    if verbose > 0 {
        eprintln!(
            "fusing {} scans on a {}x{} grid",
            scans.len(),
            grid.width,
            grid.height
        );
    }
    let fused = fuse_scans(&scans, &srp, &grid, mode).map_err(anyhow::Error::from)?;
    if !(a.map.alpha > 0.0 && a.map.alpha < 1.0) {
        return Err(anyhow!("--alpha must be inside (0, 1)").into());
    }
    let map = match threshold(&fused, a.map.alpha) {
        Ok(m) => m,
        Err(rfimap::fusion::FusionError::AllZero) => {
            return Err(Failure::NoRegion("fused map is zero everywhere".into()))
        }
        Err(e) => return Err(anyhow::Error::from(e).into()),
    };
    let positions: Vec<LocalPoint> = scans.iter().map(|s| s.pose.position).collect();
    let (regions, files) = localized_outputs(&map, &positions, &a.map.origin)?;
    print!("{}", region_table(&regions));
    for r in regions.iter().filter(|r| r.degenerate) {
        eprintln!(
            "warning: degenerate geometry around ({:.1}, {:.1}), quality {:.2}",
            r.fit.centroid.east,
            r.fit.centroid.north,
            r.quality.unwrap_or(0.0)
        );
    }
    commit(&a.out, files)?;
    Ok(())
}

#[derive(Serialize)]
struct PlanDoc {
    regions: Vec<rfimap::localize::QualityReport>,
    warnings: Vec<String>,
}

fn load_positions(path: &Path) -> Result<Vec<LocalPoint>> {
    let text = read(path)?;
    #[derive(serde::Deserialize)]
    struct Xy {
        x: f64,
        y: f64,
    }
    if let Ok(list) = serde_json::from_str::<Vec<Xy>>(&text) {
        return Ok(list
            .into_iter()
            .map(|p| LocalPoint::new(p.x, p.y))
            .collect());
    }
    let scenario = parse_scenario(&text)
        .with_context(|| format!("{} is neither a pose list nor a scenario", path.display()))?;
    Ok(scenario.poses)
}

fn cmd_plan(a: PlanArgs) -> Result<(), Failure> {
    let poses = load_positions(&a.poses)?;
    if poses.len() < 2 {
        return Err(anyhow!("at least 2 poses are needed, got {}", poses.len()).into());
    }
    let candidates = if a.regions.is_empty() {
        let n = poses.len() as f64;
        vec![LocalPoint::new(
            poses.iter().map(|p| p.east).sum::<f64>() / n,
            poses.iter().map(|p| p.north).sum::<f64>() / n,
        )]
    } else {
        a.regions.clone()
    };
    let mut doc = PlanDoc {
        regions: Vec::new(),
        warnings: Vec::new(),
    };
    for c in candidates {
        let r = assess(&poses, c).map_err(anyhow::Error::from)?;
        if r.degenerate {
            doc.warnings.push(format!(
                "degenerate geometry: region ({:.1}, {:.1}) has quality {:.2}",
                c.east, c.north, r.quality
            ));
        }
        doc.regions.push(r);
    }
    let json = to_json_pretty(&doc);
    print!("{json}");
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &a.out {
        commit(out, vec![("plan.json".into(), json.into_bytes())])?;
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<(), Failure> {
    let mut map = parse_heatmap(&read(&a.heatmap)?).map_err(anyhow::Error::from)?;
    if let Some(alpha) = a.alpha {
        map = threshold(&map, alpha).map_err(anyhow::Error::from)?;
    } else if map.threshold_applied.is_none() {
        map = threshold(&map, DEFAULT_ALPHA).map_err(anyhow::Error::from)?;
    }
    let positions: Vec<LocalPoint> = if a.scans.is_empty() {
        Vec::new()
    } else {
        load_scans(&a.scans, None)?
            .iter()
            .map(|s| s.pose.position)
            .collect()
    };
    let (regions, files) = localized_outputs(&map, &positions, &a.origin)?;
    print!("{}", region_table(&regions));
    commit(&a.out, files)?;
    Ok(())
}

fn cmd_srp(a: SrpArgs) -> Result<(), Failure> {
    let rp: RadiationPattern = serde_json::from_str(&read(&a.pattern)?)
        .with_context(|| format!("parsing pattern {}", a.pattern.display()))?;
    rp.validate().map_err(anyhow::Error::from)?;
    let fit = srp_from_measurement(&rp, a.components).map_err(anyhow::Error::from)?;
    println!(
        "fitted {} components, residual rms {:.4}, half-power beamwidth {}",
        fit.model.components().len(),
        fit.residual_rms,
        fit.model
            .half_power_beamwidth()
            .map_or("n/a".to_string(), |h| format!("{h:.1}°"))
    );
    commit(
        &a.out,
        vec![("srp.json".into(), to_json_pretty(&fit.model).into_bytes())],
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let v = cli.verbose;
    let res = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, v),
        Command::Psd(a) => cmd_psd(a),
        Command::Fuse(a) => cmd_fuse(a, v),
        Command::Plan(a) => cmd_plan(a),
        Command::Export(a) => cmd_export(a),
        Command::Srp(a) => cmd_srp(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NoRegion(msg)) => {
            eprintln!("no region: {msg}");
            ExitCode::from(EXIT_NO_REGION)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

//! Synthetic ground truth: jammers, horizon scans, IQ captures and hover
//! jitter.
//!
//! Propagation is a plain power law `eirp * d^-n`; since the fusion is
//! range-free only the relative power across headings of one scan matters.
//! Every output is a pure function of the scenario and the seed: each pose
//! draws from its own ChaCha stream selected by the pose index.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::SrpModel;
use crate::geometry::{bearing_diff, bearing_to, Bearing, GridSpec, LocalPoint};
use crate::scanops::{default_step, steps_per_revolution, HorizonScan, ScanError, ScanPose};
use crate::spectrum::{ChannelMask, IqBuffer, SpectrumError};

/// Hover position standard deviation observed in calm conditions, meters.
pub const HOVER_STDDEV_M: f64 = 0.142;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("receiver and jammer positions coincide")]
    Coincident,
    #[error("pose {pose} lies inside the denial radius ({radius:.1} m) of jammer {jammer}")]
    InsideDenial {
        pose: usize,
        jammer: usize,
        radius: f64,
    },
    #[error("pose index {0} out of range")]
    NoSuchPose(usize),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Baseband shape of a jammer's emission, relative to the channel centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// Continuous wave, snapped to the nearest DFT bin.
    Tone { offset_hz: f64 },
    /// Linear sweep across `sweep_hz` centred on the offset.
    Chirp { offset_hz: f64, sweep_hz: f64 },
    /// Flat band-limited noise.
    BandNoise { offset_hz: f64, bandwidth_hz: f64 },
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform::Tone { offset_hz: 0.0 }
    }
}

/// Directional transmit antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxPattern {
    pub srp: SrpModel,
    pub heading: Bearing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jammer {
    pub position: LocalPoint,
    /// Relative linear power.
    pub eirp: f64,
    pub band: String,
    pub tx_pattern: Option<TxPattern>,
    pub duty_cycle: f64,
    pub waveform: Waveform,
    /// Explicit denial radius; derived from the noise floor when absent.
    pub denial_radius_m: Option<f64>,
}

impl Jammer {
    pub fn new(position: LocalPoint, eirp: f64, band: impl Into<String>) -> Self {
        Jammer {
            position,
            eirp,
            band: band.into(),
            tx_pattern: None,
            duty_cycle: 1.0,
            waveform: Waveform::default(),
            denial_radius_m: None,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.eirp > 0.0 && self.eirp.is_finite()) {
            return Err(SimError::Invalid("jammer eirp must be > 0".into()));
        }
        if !self.position.is_finite() {
            return Err(SimError::Invalid("jammer position must be finite".into()));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(SimError::Invalid("duty cycle must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Wind acting on the hovering UAV.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wind {
    pub speed_mps: f64,
    /// Direction the wind pushes towards.
    pub direction: Bearing,
}

/// Hover position noise: isotropic Gaussian plus extra spread along the
/// wind direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub stddev_m: f64,
    /// Added along-wind standard deviation per m/s of wind.
    pub wind_gain: f64,
}

impl Default for JitterModel {
    fn default() -> Self {
        JitterModel {
            stddev_m: HOVER_STDDEV_M,
            wind_gain: 0.05,
        }
    }
}

impl JitterModel {
    pub const NONE: JitterModel = JitterModel {
        stddev_m: 0.0,
        wind_gain: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub jammers: Vec<Jammer>,
    pub poses: Vec<LocalPoint>,
    pub grid: GridSpec,
    pub noise_floor: f64,
    pub path_loss_exponent: f64,
    pub wind: Wind,
    pub jitter: JitterModel,
    /// Receive antenna pattern.
    pub srp: SrpModel,
    /// Band the scans are taken in.
    pub band: String,
    /// Heading step; the pattern's default step when absent.
    pub step_deg: Option<f64>,
    /// Periodograms averaged per heading, sets the noise variance.
    pub averaging: usize,
    /// Jammer-to-noise margin defining the denied area.
    pub denial_margin_db: f64,
    pub seed: u64,
}

impl Scenario {
    /// A scenario with the default receive pattern (60° half-power
    /// beamwidth), L1 scans and calm air.
    pub fn new(
        jammers: Vec<Jammer>,
        poses: Vec<LocalPoint>,
        grid: GridSpec,
        noise_floor: f64,
    ) -> Result<Self, SimError> {
        let s = Scenario {
            jammers,
            poses,
            grid,
            noise_floor,
            path_loss_exponent: 2.0,
            wind: Wind::default(),
            jitter: JitterModel::default(),
            srp: SrpModel::from_hpbw(60.0).expect("valid default pattern"),
            band: "L1".into(),
            step_deg: None,
            averaging: 16,
            denial_margin_db: 40.0,
            seed: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.poses.is_empty() {
            return Err(SimError::Invalid(
                "at least one scan pose is required".into(),
            ));
        }
        if !(1.5..=4.0).contains(&self.path_loss_exponent) {
            return Err(SimError::Invalid(format!(
                "path loss exponent {} outside [1.5, 4]",
                self.path_loss_exponent
            )));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(SimError::Invalid("noise floor must be >= 0".into()));
        }
        if self.averaging == 0 {
            return Err(SimError::Invalid("averaging count must be >= 1".into()));
        }
        if !(self.jitter.stddev_m >= 0.0 && self.jitter.wind_gain >= 0.0) {
            return Err(SimError::Invalid("jitter must be >= 0".into()));
        }
        if !(self.wind.speed_mps >= 0.0) {
            return Err(SimError::Invalid("wind speed must be >= 0".into()));
        }
        self.grid
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        if let Some(step) = self.step_deg {
            steps_per_revolution(step)?;
        }
        for (k, j) in self.jammers.iter().enumerate() {
            j.validate()?;
            let radius = self.denial_radius(j);
            for (p, pose) in self.poses.iter().enumerate() {
                if !pose.is_finite() {
                    return Err(SimError::Invalid("pose must be finite".into()));
                }
                if pose.distance(&j.position) <= radius {
                    return Err(SimError::InsideDenial {
                        pose: p,
                        jammer: k,
                        radius,
                    });
                }
            }
        }
        Ok(())
    }

    /// Radius inside which the jammer exceeds the noise floor by the
    /// denial margin at boresight. Zero when the floor is zero.
    pub fn denial_radius(&self, j: &Jammer) -> f64 {
        if let Some(r) = j.denial_radius_m {
            return r;
        }
        if self.noise_floor <= 0.0 {
            return 0.0;
        }
        let margin = 10f64.powf(self.denial_margin_db / 10.0);
        (j.eirp * j.duty_cycle / (self.noise_floor * margin)).powf(1.0 / self.path_loss_exponent)
    }

    pub fn effective_step(&self) -> Result<f64, SimError> {
        match self.step_deg {
            Some(s) => Ok(s),
            None => Ok(default_step(&self.srp)?),
        }
    }
}

/// Power received from `jammer` with the antenna boresight along
/// `rx.heading`.
pub fn received_power(
    jammer: &Jammer,
    rx: &ScanPose,
    rx_srp: &SrpModel,
    exponent: f64,
) -> Result<f64, SimError> {
    let d = rx.position.distance(&jammer.position);
    let towards = bearing_to(rx.position, jammer.position).map_err(|_| SimError::Coincident)?;
    let rx_gain = rx_srp.eval(bearing_diff(rx.heading, towards));
    let tx_gain = match &jammer.tx_pattern {
        Some(tx) => {
            let out = bearing_to(jammer.position, rx.position).map_err(|_| SimError::Coincident)?;
            tx.srp.eval(bearing_diff(tx.heading, out))
        }
        None => 1.0,
    };
    Ok(jammer.eirp * d.powf(-exponent) * rx_gain * tx_gain * jammer.duty_cycle)
}

fn pose_rng(seed: u64, pose_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pose_index as u64);
    rng
}

fn displace<R: Rng + ?Sized>(
    p: LocalPoint,
    jitter: &JitterModel,
    wind: &Wind,
    rng: &mut R,
) -> LocalPoint {
    let (ae, an) = wind.direction.unit();
    let along_sd = jitter.stddev_m + jitter.wind_gain * wind.speed_mps;
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let along = z1 * along_sd;
    let across = z2 * jitter.stddev_m;
    LocalPoint::new(
        p.east + along * ae + across * an,
        p.north + along * an - across * ae,
    )
}

/// Gaussian hover displacement: `stddev_m` in every direction plus
/// `wind_gain * speed` extra along the wind.
pub fn perturb_pose(pose: &ScanPose, jitter: &JitterModel, wind: &Wind, seed: u64) -> ScanPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScanPose::new(
        displace(pose.position, jitter, wind, &mut rng),
        pose.heading,
    )
}

/// Synthesizes the horizon scan flown at pose `pose_index`.
///
/// At each heading step the UAV sits at a jittered position; the received
/// power from every in-band jammer is summed with a noise-floor draw whose
/// spread matches an average of `averaging` periodograms. The scan
/// position is the mean of the jittered positions.
pub fn simulate_scan(
    scenario: &Scenario,
    pose_index: usize,
    step_deg: f64,
    seed: u64,
) -> Result<HorizonScan, SimError> {
    let nominal = *scenario
        .poses
        .get(pose_index)
        .ok_or(SimError::NoSuchPose(pose_index))?;
    let n = steps_per_revolution(step_deg)?;
    let mut rng = pose_rng(seed, pose_index);
    let noise = if scenario.noise_floor > 0.0 {
        let m = scenario.averaging as f64;
        Some(
            Gamma::new(m, scenario.noise_floor / m)
                .map_err(|e| SimError::Invalid(e.to_string()))?,
        )
    } else {
        None
    };

    let mut powers = Vec::with_capacity(n);
    let (mut se, mut sn) = (0.0, 0.0);
    for k in 0..n {
        let heading = Bearing::new(k as f64 * step_deg);
        let at = displace(nominal, &scenario.jitter, &scenario.wind, &mut rng);
        se += at.east;
        sn += at.north;
        let rx = ScanPose::new(at, heading);
        let mut p = 0.0;
        for j in scenario.jammers.iter().filter(|j| j.band == scenario.band) {
            p += received_power(j, &rx, &scenario.srp, scenario.path_loss_exponent)?;
        }
        if let Some(g) = &noise {
            p += g.sample(&mut rng);
        }
        powers.push(p);
    }
    let centre = LocalPoint::new(se / n as f64, sn / n as f64);
    Ok(HorizonScan::from_powers(
        centre,
        scenario.band.clone(),
        step_deg,
        &powers,
    )?)
}

/// Simulates every pose of the scenario with its own step and seed.
pub fn simulate_all(scenario: &Scenario) -> Result<Vec<HorizonScan>, SimError> {
    scenario.validate()?;
    let step = scenario.effective_step()?;
    (0..scenario.poses.len())
        .into_par_iter()
        .map(|k| simulate_scan(scenario, k, step, scenario.seed))
        .collect()
}

/// An emitter as seen in one IQ capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqSource {
    pub waveform: Waveform,
    /// Mean power per sample.
    pub power: f64,
}

/// Synthesizes `n` samples centred on `mask`: complex white noise of mean
/// power `noise_power` plus every source.
pub fn simulate_iq(
    sources: &[IqSource],
    mask: &ChannelMask,
    n: usize,
    sample_rate_hz: f64,
    noise_power: f64,
    seed: u64,
) -> Result<IqBuffer, SimError> {
    if n < 16 || !n.is_power_of_two() {
        return Err(SpectrumError::BadLength(n).into());
    }
    if !(noise_power >= 0.0) || sources.iter().any(|s| !(s.power >= 0.0)) {
        return Err(SimError::Invalid("powers must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let df = sample_rate_hz / nf;
    let sd = (noise_power / 2.0).sqrt();
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * sd, im * sd)
        })
        .collect();

    for s in sources {
        let amp = s.power.sqrt();
        match s.waveform {
            Waveform::Tone { offset_hz } => {
                let k = (offset_hz / df).round();
                for (m, v) in x.iter_mut().enumerate() {
                    let ph = 2.0 * std::f64::consts::PI * ((k * m as f64) % nf) / nf;
                    *v += Complex64::from_polar(amp, ph);
                }
            }
            Waveform::Chirp {
                offset_hz,
                sweep_hz,
            } => {
                let f0 = offset_hz - sweep_hz / 2.0;
                let duration = nf / sample_rate_hz;
                let rate = sweep_hz / duration;
                for (m, v) in x.iter_mut().enumerate() {
                    let t = m as f64 / sample_rate_hz;
                    let ph = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t);
                    *v += Complex64::from_polar(amp, ph);
                }
            }
            Waveform::BandNoise {
                offset_hz,
                bandwidth_hz,
            } => {
                let (lo, hi) = (
                    offset_hz - bandwidth_hz / 2.0,
                    offset_hz + bandwidth_hz / 2.0,
                );
                let mut spec = vec![Complex64::default(); n];
                for (k, z) in spec.iter_mut().enumerate() {
                    let f = if k < n / 2 { k as f64 } else { k as f64 - nf } * df;
                    if f >= lo && f < hi {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        *z = Complex64::new(re, im);
                    }
                }
                FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
                let e: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() / nf;
                if e > 0.0 {
                    let g = amp / e.sqrt();
                    for (v, z) in x.iter_mut().zip(spec) {
                        *v += z * g;
                    }
                }
            }
        }
    }
    Ok(IqBuffer::new(x, sample_rate_hz, mask.center_mhz)?)
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub jammers: Vec<JammerDoc>,
    pub poses: Vec<PointDoc>,
    pub grid: GridSpec,
    pub noise_floor: f64,
    #[serde(default = "default_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default)]
    pub wind: WindDoc,
    #[serde(default)]
    pub jitter: JitterModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srp: Option<SrpModel>,
    #[serde(default = "default_band")]
    pub band: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_deg: Option<f64>,
    #[serde(default = "default_averaging")]
    pub averaging: usize,
    #[serde(default = "default_margin")]
    pub denial_margin_db: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_exponent() -> f64 {
    2.0
}
fn default_band() -> String {
    "L1".into()
}
fn default_averaging() -> usize {
    16
}
fn default_margin() -> f64 {
    40.0
}
fn default_duty() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDoc {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WindDoc {
    pub speed: f64,
    pub direction_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxPatternDoc {
    pub components: Vec<crate::antenna::MixtureComponent>,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerDoc {
    pub x: f64,
    pub y: f64,
    pub eirp: f64,
    #[serde(default = "default_band")]
    pub band: String,
    #[serde(default = "default_duty")]
    pub duty_cycle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_pattern: Option<TxPatternDoc>,
    #[serde(default)]
    pub waveform: Waveform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denial_radius_m: Option<f64>,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = SimError;
    fn try_from(d: ScenarioDoc) -> Result<Self, SimError> {
        let jammers = d
            .jammers
            .into_iter()
            .map(|j| {
                let tx_pattern = j
                    .tx_pattern
                    .map(|t| {
                        SrpModel::new(t.components)
                            .map(|srp| TxPattern {
                                srp,
                                heading: Bearing::new(t.heading_deg),
                            })
                            .map_err(|e| SimError::Invalid(e.to_string()))
                    })
                    .transpose()?;
                Ok(Jammer {
                    position: LocalPoint::new(j.x, j.y),
                    eirp: j.eirp,
                    band: j.band,
                    tx_pattern,
                    duty_cycle: j.duty_cycle,
                    waveform: j.waveform,
                    denial_radius_m: j.denial_radius_m,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let srp = match d.srp {
            Some(m) => {
                m.check_constraints()
                    .map_err(|e| SimError::Invalid(e.to_string()))?;
                m
            }
            None => SrpModel::from_hpbw(60.0).expect("valid default pattern"),
        };
        let s = Scenario {
            jammers,
            poses: d.poses.iter().map(|p| LocalPoint::new(p.x, p.y)).collect(),
            grid: d.grid,
            noise_floor: d.noise_floor,
            path_loss_exponent: d.path_loss_exponent,
            wind: Wind {
                speed_mps: d.wind.speed,
                direction: Bearing::new(d.wind.direction_deg),
            },
            jitter: d.jitter,
            srp,
            band: d.band,
            step_deg: d.step_deg,
            averaging: d.averaging,
            denial_margin_db: d.denial_margin_db,
            seed: d.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        ScenarioDoc {
            jammers: s
                .jammers
                .iter()
                .map(|j| JammerDoc {
                    x: j.position.east,
                    y: j.position.north,
                    eirp: j.eirp,
                    band: j.band.clone(),
                    duty_cycle: j.duty_cycle,
                    tx_pattern: j.tx_pattern.as_ref().map(|t| TxPatternDoc {
                        components: t.srp.components().to_vec(),
                        heading_deg: t.heading.degrees(),
                    }),
                    waveform: j.waveform,
                    denial_radius_m: j.denial_radius_m,
                })
                .collect(),
            poses: s
                .poses
                .iter()
                .map(|p| PointDoc {
                    x: p.east,
                    y: p.north,
                    psi: None,
                })
                .collect(),
            grid: s.grid,
            noise_floor: s.noise_floor,
            path_loss_exponent: s.path_loss_exponent,
            wind: WindDoc {
                speed: s.wind.speed_mps,
                direction_deg: s.wind.direction.degrees(),
            },
            jitter: s.jitter,
            srp: Some(s.srp.clone()),
            band: s.band.clone(),
            step_deg: s.step_deg,
            averaging: s.averaging,
            denial_margin_db: s.denial_margin_db,
            seed: s.seed,
        }
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(json: &str) -> Result<Scenario, SimError> {
    let doc: ScenarioDoc =
        serde_json::from_str(json).map_err(|e| SimError::Invalid(e.to_string()))?;
    Scenario::try_from(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{band_power, detect_peaks, psd, psd_averaged, AllocationTable};

    fn grid() -> GridSpec {
        GridSpec::centered(LocalPoint::ORIGIN, 1000.0, 5.0).unwrap()
    }

    fn rx(e: f64, n: f64, h: f64) -> ScanPose {
        ScanPose::new(LocalPoint::new(e, n), Bearing::new(h))
    }

    #[test]
    fn inverse_square_law() {
        let j = Jammer::new(LocalPoint::ORIGIN, 1.0, "L1");
        let srp = SrpModel::from_hpbw(60.0).unwrap();
        let near = received_power(&j, &rx(0.0, -100.0, 0.0), &srp, 2.0).unwrap();
        let far = received_power(&j, &rx(0.0, -200.0, 0.0), &srp, 2.0).unwrap();
        assert!((near / far - 4.0).abs() < 1e-12);
    }

    #[test]
    fn boresight_versus_backplane() {
        let j = Jammer::new(LocalPoint::ORIGIN, 1.0, "L1");
        let srp = SrpModel::from_hpbw(60.0).unwrap();
        let on = received_power(&j, &rx(0.0, -100.0, 0.0), &srp, 2.0).unwrap();
        let off = received_power(&j, &rx(0.0, -100.0, 180.0), &srp, 2.0).unwrap();
        assert!(off / on <= 0.01);
        assert!((off / on - srp.eval(180.0)).abs() < 1e-15);
    }

    #[test]
    fn duty_cycle_scales_power() {
        let mut j = Jammer::new(LocalPoint::ORIGIN, 1.0, "L1");
        let srp = SrpModel::from_hpbw(60.0).unwrap();
        let cw = received_power(&j, &rx(50.0, 0.0, 270.0), &srp, 2.0).unwrap();
        j.duty_cycle = 0.5;
        let half = received_power(&j, &rx(50.0, 0.0, 270.0), &srp, 2.0).unwrap();
        assert!((half - cw / 2.0).abs() < 1e-18);
        assert_eq!(
            received_power(&j, &rx(0.0, 0.0, 0.0), &srp, 2.0),
            Err(SimError::Coincident)
        );
    }

    #[test]
    fn directional_transmitter() {
        let mut j = Jammer::new(LocalPoint::ORIGIN, 1.0, "L1");
        j.tx_pattern = Some(TxPattern {
            srp: SrpModel::from_hpbw(40.0).unwrap(),
            heading: Bearing::new(90.0),
        });
        let srp = SrpModel::from_hpbw(60.0).unwrap();
        // receiver east, in the transmit beam, looking west
        let lit = received_power(&j, &rx(100.0, 0.0, 270.0), &srp, 2.0).unwrap();
        let dark = received_power(&j, &rx(-100.0, 0.0, 90.0), &srp, 2.0).unwrap();
        assert!(dark / lit < 0.01);
    }

    #[test]
    fn empty_scenario_gives_flat_zero_scan() {
        let mut s = Scenario::new(vec![], vec![LocalPoint::new(0.0, 0.0)], grid(), 0.0).unwrap();
        s.jitter = JitterModel::NONE;
        let scan = simulate_scan(&s, 0, 30.0, 1).unwrap();
        assert!(scan.steps.iter().all(|st| st.rel_power == 0.0));
    }

    #[test]
    fn jammer_due_north_peaks_at_zero() {
        let j = Jammer::new(LocalPoint::new(0.0, 600.0), 1.0, "L1");
        let mut s = Scenario::new(vec![j], vec![LocalPoint::ORIGIN], grid(), 1e-9).unwrap();
        s.srp = SrpModel::from_hpbw(20.0).unwrap();
        let scan = simulate_scan(&s, 0, 10.0, 3).unwrap();
        assert_eq!(scan.pose.heading.degrees(), 0.0);
        assert_eq!(scan.steps[0].rel_power, 1.0);
    }

    #[test]
    fn jammer_due_east_peaks_at_ninety() {
        let j = Jammer::new(LocalPoint::new(700.0, 0.0), 1.0, "L1");
        let s = Scenario::new(vec![j], vec![LocalPoint::ORIGIN], grid(), 1e-8).unwrap();
        let scan = simulate_scan(&s, 0, 15.0, 11).unwrap();
        let h = scan.pose.heading.degrees();
        assert!((h - 90.0).abs() <= 7.5, "{h}");
    }

    #[test]
    fn scans_are_deterministic() {
        let j = Jammer::new(LocalPoint::new(300.0, 400.0), 1.0, "L1");
        let s = Scenario::new(
            vec![j],
            vec![LocalPoint::ORIGIN, LocalPoint::new(-500.0, 0.0)],
            grid(),
            1e-8,
        )
        .unwrap();
        let a = simulate_scan(&s, 1, 20.0, 99).unwrap();
        let b = simulate_scan(&s, 1, 20.0, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_scan(&s, 1, 20.0, 100).unwrap();
        assert_ne!(a, c);
        assert_eq!(simulate_all(&s).unwrap(), simulate_all(&s).unwrap());
    }

    #[test]
    fn off_band_jammers_are_ignored() {
        let j = Jammer::new(LocalPoint::new(300.0, 400.0), 1.0, "L2");
        let mut s = Scenario::new(vec![j], vec![LocalPoint::ORIGIN], grid(), 0.0).unwrap();
        s.jitter = JitterModel::NONE;
        let scan = simulate_scan(&s, 0, 30.0, 1).unwrap();
        assert!(scan.steps.iter().all(|st| st.rel_power == 0.0));
    }

    #[test]
    fn power_falls_with_distance() {
        let srp = SrpModel::from_hpbw(60.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let j = Jammer::new(LocalPoint::new(0.0, 100.0 * k as f64), 1.0, "L1");
            let total: f64 = (0..24)
                .map(|h| received_power(&j, &rx(0.0, 0.0, h as f64 * 15.0), &srp, 2.5).unwrap())
                .sum();
            assert!(total <= last);
            last = total;
        }
    }

    #[test]
    fn scenario_validation() {
        let j = Jammer::new(LocalPoint::ORIGIN, 1.0, "L1");
        // 1 / (1e-6 * 1e4) -> 10 m denial radius
        let err = Scenario::new(
            vec![j.clone()],
            vec![LocalPoint::new(5.0, 0.0)],
            grid(),
            1e-6,
        );
        assert!(matches!(err, Err(SimError::InsideDenial { .. })));
        assert!(Scenario::new(
            vec![j.clone()],
            vec![LocalPoint::new(50.0, 0.0)],
            grid(),
            1e-6
        )
        .is_ok());
        assert!(Scenario::new(vec![], vec![], grid(), 0.0).is_err());
        let mut s = Scenario::new(vec![j], vec![LocalPoint::new(50.0, 0.0)], grid(), 1e-6).unwrap();
        s.path_loss_exponent = 5.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_jitter_keeps_pose() {
        let p = rx(12.0, -3.0, 45.0);
        assert_eq!(perturb_pose(&p, &JitterModel::NONE, &Wind::default(), 5), p);
    }

    fn spread(jitter: &JitterModel, wind: &Wind) -> (f64, f64) {
        let (mut se, mut sn) = (0.0, 0.0);
        let n = 10_000;
        for seed in 0..n {
            let q = perturb_pose(&rx(0.0, 0.0, 0.0), jitter, wind, seed).position;
            se += q.east * q.east;
            sn += q.north * q.north;
        }
        ((se / n as f64).sqrt(), (sn / n as f64).sqrt())
    }

    #[test]
    fn hover_jitter_statistics() {
        let (se, sn) = spread(&JitterModel::default(), &Wind::default());
        for s in [se, sn] {
            assert!((s - HOVER_STDDEV_M).abs() / HOVER_STDDEV_M < 0.1, "{s}");
        }
        let wind = Wind {
            speed_mps: 5.0,
            direction: Bearing::new(90.0),
        };
        let (along, across) = spread(&JitterModel::default(), &wind);
        assert!(along > across);
    }

    #[test]
    fn noise_only_iq_is_flat() {
        let mask = ChannelMask::new("L1", 1575.42, 2.0).unwrap();
        let bufs: Vec<_> = (0..32)
            .map(|s| simulate_iq(&[], &mask, 1024, 4.096e6, 2.0, s).unwrap())
            .collect();
        let f = psd_averaged(&bufs).unwrap();
        let mean = f.total_power() / f.len() as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.05);
        let max = f.power.iter().copied().fold(0.0, f64::max);
        assert!(max < 2.0 * mean);
    }

    #[test]
    fn tone_round_trip() {
        let mask = ChannelMask::new("L1", 1575.42, 2.0).unwrap();
        let src = IqSource {
            waveform: Waveform::Tone { offset_hz: 2.0e6 },
            power: 1.0,
        };
        let bufs: Vec<_> = (0..16)
            .map(|s| simulate_iq(&[src], &mask, 4096, 16.384e6, 0.1, s).unwrap())
            .collect();
        let f = psd_averaged(&bufs).unwrap();
        let peaks = detect_peaks(&f, 10.0, &AllocationTable::default());
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].bin, 500);
        assert!((peaks[0].freq_mhz - 1577.42).abs() < 1e-9);
    }

    #[test]
    fn chirp_conserves_tone_energy() {
        let mask = ChannelMask::new("L1", 1575.42, 2.0).unwrap();
        let (fs, n) = (16.384e6, 4096);
        let tone = IqSource {
            waveform: Waveform::Tone { offset_hz: 1.0e6 },
            power: 1.0,
        };
        let chirp = IqSource {
            waveform: Waveform::Chirp {
                offset_hz: 1.0e6,
                sweep_hz: 2.0e6,
            },
            power: 1.0,
        };
        let ft = psd(&simulate_iq(&[tone], &mask, n, fs, 0.0, 1).unwrap()).unwrap();
        let fc = psd(&simulate_iq(&[chirp], &mask, n, fs, 0.0, 1).unwrap()).unwrap();
        assert!((ft.total_power() - fc.total_power()).abs() < 1e-6 * ft.total_power());
        let sweep = ChannelMask::new("sweep", mask.center_mhz + 1.0, 2.4).unwrap();
        let in_sweep = band_power(&fc, &sweep).unwrap();
        assert!(in_sweep > 0.95 * fc.total_power());
        let occupied = fc
            .power
            .iter()
            .filter(|p| **p > 1e-3 * n as f64 / 500.0)
            .count();
        assert!(occupied > 400, "chirp occupies {occupied} bins");
    }

    #[test]
    fn band_noise_power_and_extent() {
        let mask = ChannelMask::new("L1", 1575.42, 2.0).unwrap();
        let src = IqSource {
            waveform: Waveform::BandNoise {
                offset_hz: -2.0e6,
                bandwidth_hz: 1.0e6,
            },
            power: 3.0,
        };
        let b = simulate_iq(&[src], &mask, 2048, 8.192e6, 0.0, 4).unwrap();
        assert!((b.energy() / 2048.0 - 3.0).abs() < 1e-9);
        let f = psd(&b).unwrap();
        let band = ChannelMask::new("b", 1573.42, 1.0).unwrap();
        assert!((band_power(&f, &band).unwrap() - f.total_power()).abs() < 1e-9 * f.total_power());
    }

    #[test]
    fn scenario_json_round_trip() {
        let json = r#"{
            "jammers": [{"x": 0, "y": 0, "eirp": 1.0, "waveform": {"kind": "chirp", "offset_hz": 0, "sweep_hz": 1e6}}],
            "poses": [{"x": 500, "y": 0}, {"x": 0, "y": 500}],
            "grid": {"origin": {"east": -1000, "north": -1000}, "resolution": 5, "width": 400, "height": 400},
            "noise_floor": 1e-8,
            "wind": {"speed": 2, "direction_deg": 45},
            "seed": 7
        }"#;
        let s = parse_scenario(json).unwrap();
        assert_eq!(s.poses.len(), 2);
        assert_eq!(s.seed, 7);
        assert_eq!(s.path_loss_exponent, 2.0);
        let back = serde_json::to_string(&ScenarioDoc::from(&s)).unwrap();
        assert_eq!(parse_scenario(&back).unwrap(), s);
        assert!(parse_scenario("{").is_err());
        assert!(parse_scenario(&json.replace("\"eirp\": 1.0", "\"eirp\": -1.0")).is_err());
    }
}

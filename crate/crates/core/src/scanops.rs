//! Horizon scans.
//!
//! At each vantage point the UAV turns through a full revolution in fixed
//! heading steps and records the in-band power at every step. A scan is
//! stored relative to its own strongest step, so only the variation of
//! power with heading is used and the absolute receiver calibration never
//! matters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::SrpModel;
use crate::geometry::{bearing_diff, circular_mean, Bearing, LocalPoint};
use crate::spectrum::{band_power, ChannelMask, PsdFrame, SpectrumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("pose trace is empty")]
    EmptyTrace,
    #[error("pose trace timestamps must be strictly increasing")]
    NonMonotonicTime,
    #[error("heading step {0} does not divide 360 degrees")]
    BadStep(f64),
    #[error("revolution incomplete, no capture near headings {0:?}")]
    IncompleteRevolution(Vec<f64>),
    #[error("more than one capture in the heading bin at {0} degrees")]
    DuplicateHeading(f64),
    #[error("frame {0} has no capture heading or position")]
    MissingCapture(usize),
    #[error("no channel masks given")]
    NoMasks,
    #[error("invalid scan: {0}")]
    Invalid(String),
    #[error("antenna pattern is not directional (half-power beamwidth {0:.1} degrees)")]
    Isotropic(f64),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Position and heading of the UAV for one scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPose {
    pub position: LocalPoint,
    pub heading: Bearing,
}

impl ScanPose {
    pub fn new(position: LocalPoint, heading: Bearing) -> Self {
        Self { position, heading }
    }
}

/// Relative power observed at one heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanStep {
    pub heading: Bearing,
    pub rel_power: f64,
}

/// One full-revolution scan for one band.
///
/// `pose.position` is the averaged hover position; `pose.heading` is the
/// heading of the strongest step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScanLog", into = "ScanLog")]
pub struct HorizonScan {
    pub pose: ScanPose,
    pub band: String,
    pub step_deg: f64,
    pub steps: Vec<ScanStep>,
}

/// Number of steps in a revolution, if `step_deg` divides 360.
pub fn steps_per_revolution(step_deg: f64) -> Result<usize, ScanError> {
    if !(step_deg > 0.0 && step_deg <= 360.0) {
        return Err(ScanError::BadStep(step_deg));
    }
    let n = 360.0 / step_deg;
    let r = n.round();
    if (n - r).abs() > 1e-9 * r.max(1.0) {
        return Err(ScanError::BadStep(step_deg));
    }
    Ok(r as usize)
}

impl HorizonScan {
    /// Builds a scan from raw per-step powers at headings `k * step_deg`,
    /// dividing by the largest power. An all-zero scan stays all zero.
    pub fn from_powers(
        position: LocalPoint,
        band: impl Into<String>,
        step_deg: f64,
        powers: &[f64],
    ) -> Result<Self, ScanError> {
        let n = steps_per_revolution(step_deg)?;
        if powers.len() != n {
            return Err(ScanError::Invalid(format!(
                "expected {n} step powers, got {}",
                powers.len()
            )));
        }
        if powers.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ScanError::Invalid("powers must be finite and >= 0".into()));
        }
        let (argmax, max) = powers
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (k, p)| if p > acc.1 { (k, p) } else { acc });
        let steps = powers
            .iter()
            .enumerate()
            .map(|(k, &p)| ScanStep {
                heading: Bearing::new(k as f64 * step_deg),
                rel_power: if max > 0.0 { p / max } else { 0.0 },
            })
            .collect();
        Ok(HorizonScan {
            pose: ScanPose::new(position, Bearing::new(argmax as f64 * step_deg)),
            band: band.into(),
            step_deg,
            steps,
        })
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let n = steps_per_revolution(self.step_deg)?;
        if self.steps.len() != n {
            return Err(ScanError::Invalid(format!(
                "{} steps for a {}-degree step",
                self.steps.len(),
                self.step_deg
            )));
        }
        if !self.pose.position.is_finite() {
            return Err(ScanError::Invalid("non-finite pose".into()));
        }
        let mut max: f64 = 0.0;
        for (k, s) in self.steps.iter().enumerate() {
            let expect = Bearing::new(k as f64 * self.step_deg);
            if bearing_diff(s.heading, expect).abs() > 1e-6 {
                return Err(ScanError::Invalid(format!(
                    "step {k} at {} degrees, expected {}",
                    s.heading.degrees(),
                    expect.degrees()
                )));
            }
            if !(s.rel_power >= 0.0 && s.rel_power <= 1.0) {
                return Err(ScanError::Invalid(format!(
                    "relative power {} outside [0, 1]",
                    s.rel_power
                )));
            }
            max = max.max(s.rel_power);
        }
        if max > 0.0 && max != 1.0 {
            return Err(ScanError::Invalid(format!(
                "scan is not max-normalized (max {max})"
            )));
        }
        Ok(())
    }

    pub fn peak_heading(&self) -> Bearing {
        self.pose.heading
    }
}

/// Scan log file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanLog {
    pub pose: PoseDoc,
    pub band: String,
    pub step_deg: f64,
    pub steps: Vec<StepDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseDoc {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDoc {
    pub heading_deg: f64,
    pub rel_power: f64,
}

impl TryFrom<ScanLog> for HorizonScan {
    type Error = ScanError;
    fn try_from(log: ScanLog) -> Result<Self, Self::Error> {
        let scan = HorizonScan {
            pose: ScanPose::new(
                LocalPoint::new(log.pose.x, log.pose.y),
                Bearing::new(log.pose.psi),
            ),
            band: log.band,
            step_deg: log.step_deg,
            steps: log
                .steps
                .into_iter()
                .map(|s| ScanStep {
                    heading: Bearing::new(s.heading_deg),
                    rel_power: s.rel_power,
                })
                .collect(),
        };
        scan.validate()?;
        Ok(scan)
    }
}

impl From<HorizonScan> for ScanLog {
    fn from(s: HorizonScan) -> Self {
        ScanLog {
            pose: PoseDoc {
                x: s.pose.position.east,
                y: s.pose.position.north,
                psi: s.pose.heading.degrees(),
            },
            band: s.band,
            step_deg: s.step_deg,
            steps: s
                .steps
                .into_iter()
                .map(|st| StepDoc {
                    heading_deg: st.heading.degrees(),
                    rel_power: st.rel_power,
                })
                .collect(),
        }
    }
}

/// One pose sample recorded during a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub time_s: f64,
    pub position: LocalPoint,
    pub heading: Bearing,
}

/// Pose history of one scan.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseTrace {
    samples: Vec<PoseSample>,
}

impl PoseTrace {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self, ScanError> {
        if samples.windows(2).any(|w| !(w[1].time_s > w[0].time_s)) {
            return Err(ScanError::NonMonotonicTime);
        }
        Ok(PoseTrace { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Averaged reference pose of a trace: arithmetic mean position and
/// circular mean heading. When the headings cancel out (a full, evenly
/// sampled revolution) the first sample's heading is used.
pub fn reference_pose(trace: &PoseTrace) -> Result<ScanPose, ScanError> {
    let s = trace.samples();
    let first = s.first().ok_or(ScanError::EmptyTrace)?;
    let n = s.len() as f64;
    let east = s.iter().map(|p| p.position.east).sum::<f64>() / n;
    let north = s.iter().map(|p| p.position.north).sum::<f64>() / n;
    let heading = circular_mean(s.iter().map(|p| p.heading)).unwrap_or(first.heading);
    Ok(ScanPose::new(LocalPoint::new(east, north), heading))
}

/// Assembles one scan per channel mask from a revolution of PSD frames.
///
/// Each frame is assigned to the nearest heading bin; every bin must be
/// hit exactly once. The scan position is the mean of the frame positions.
pub fn build_scan(
    frames: &[PsdFrame],
    masks: &[ChannelMask],
    step_deg: f64,
) -> Result<Vec<HorizonScan>, ScanError> {
    let n = steps_per_revolution(step_deg)?;
    if masks.is_empty() {
        return Err(ScanError::NoMasks);
    }
    let mut bins: Vec<Option<&PsdFrame>> = vec![None; n];
    let mut positions = Vec::with_capacity(frames.len());
    for (idx, f) in frames.iter().enumerate() {
        let (Some(h), Some(p)) = (f.heading, f.position) else {
            return Err(ScanError::MissingCapture(idx));
        };
        let k = (h.degrees() / step_deg).round() as usize % n;
        if bins[k].replace(f).is_some() {
            return Err(ScanError::DuplicateHeading(k as f64 * step_deg));
        }
        positions.push(p);
    }
    let missing: Vec<f64> = bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.is_none())
        .map(|(k, _)| k as f64 * step_deg)
        .collect();
    if !missing.is_empty() {
        return Err(ScanError::IncompleteRevolution(missing));
    }
    let m = positions.len() as f64;
    let position = LocalPoint::new(
        positions.iter().map(|p| p.east).sum::<f64>() / m,
        positions.iter().map(|p| p.north).sum::<f64>() / m,
    );

    masks
        .iter()
        .map(|mask| {
            let powers = bins
                .iter()
                .map(|f| band_power(f.expect("all bins filled"), mask))
                .collect::<Result<Vec<_>, _>>()?;
            HorizonScan::from_powers(position, mask.name.clone(), step_deg, &powers)
        })
        .collect()
}

/// Integer divisors of 360, the admissible heading steps.
pub const HEADING_STEPS: [f64; 24] = [
    1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 9.0, 10.0, 12.0, 15.0, 18.0, 20.0, 24.0, 30.0, 36.0, 40.0,
    45.0, 60.0, 72.0, 90.0, 120.0, 180.0, 360.0,
];

/// Nearest admissible step; ties go to the finer step.
pub fn snap_step(deg: f64) -> f64 {
    HEADING_STEPS
        .iter()
        .copied()
        .min_by(|a, b| (a - deg).abs().total_cmp(&(b - deg).abs()))
        .expect("non-empty table")
}

/// Heading step matched to the antenna directivity: the half-power
/// beamwidth snapped to a divisor of 360.
pub fn default_step(srp: &SrpModel) -> Result<f64, ScanError> {
    match srp.half_power_beamwidth() {
        Some(w) if w < 180.0 => Ok(snap_step(w)),
        Some(w) => Err(ScanError::Isotropic(w)),
        None => Err(ScanError::Isotropic(360.0)),
    }
}

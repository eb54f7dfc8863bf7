//! Receive antenna modelling.
//!
//! A measured azimuth pattern goes through three stages before it is used
//! for projection:
//!
//! 1. [`normalize_pattern`] shifts the pattern so its peak is 0 dB.
//! 2. [`symmetrize`] enforces an even pattern with its maximum on boresight
//!    and a backplane that tapers towards zero.
//! 3. [`fit_srp`] fits a nonnegative Gaussian mixture in relative bearing,
//!    giving the smooth [`SrpModel`] used by the fusion code.
//!
//! Each mixture component is a mirrored pair of Gaussians centred at
//! `±mean`, with `mean <= sigma`. A mirrored pair under that bound is
//! unimodal, so any nonnegative mixture of them is even and peaks at 0°.
//! The fitter additionally bounds `sigma` so that every component has
//! decayed below 1% of its boresight value at 180°.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_signed;

/// Default number of mixture components for [`fit_srp`].
pub const DEFAULT_COMPONENTS: usize = 3;

/// Maximum RMS residual, in linear gain, accepted from a fit.
pub const MAX_FIT_RMS: f64 = 0.05;

/// Linear gain ceiling enforced at ±180°.
pub const BACKPLANE_LIMIT: f64 = 0.01;

/// Half-width of the backplane sector the taper is tuned on.
const BACKPLANE_SECTOR_DEG: f64 = 30.0;

const MIN_SIGMA_DEG: f64 = 0.5;
const MAX_COMPONENTS: usize = 5;
const MIN_SAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AntennaError {
    #[error("invalid radiation pattern: {0}")]
    InvalidPattern(String),
    #[error("pattern contains non-finite gains")]
    NonFiniteGain,
    #[error("invalid SRP model: {0}")]
    InvalidModel(String),
    #[error("component count {0} outside 1..=5")]
    ComponentCount(usize),
    #[error("mixture fit did not converge, residual RMS {rms:.4}")]
    FitDivergence { rms: f64 },
    #[error("SRP constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("pattern is not directional, half-power beamwidth is {0:.1} degrees")]
    Isotropic(f64),
}

/// Measured azimuth pattern of one band, gains in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationPattern {
    pub band_mhz: f64,
    /// `(relative bearing in degrees, gain in dB)`, bearings in `[0, 360)`.
    pub samples: Vec<(f64, f64)>,
}

impl RadiationPattern {
    pub fn new(band_mhz: f64, samples: Vec<(f64, f64)>) -> Result<Self, AntennaError> {
        let rp = RadiationPattern { band_mhz, samples };
        rp.validate()?;
        Ok(rp)
    }

    pub fn validate(&self) -> Result<(), AntennaError> {
        if self.samples.len() < MIN_SAMPLES {
            return Err(AntennaError::InvalidPattern(format!(
                "need at least {MIN_SAMPLES} samples, got {}",
                self.samples.len()
            )));
        }
        for w in self.samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(AntennaError::InvalidPattern(
                    "bearings must be strictly increasing".into(),
                ));
            }
        }
        let first = self.samples[0].0;
        let last = self.samples[self.samples.len() - 1].0;
        if !(first >= 0.0 && last < 360.0) {
            return Err(AntennaError::InvalidPattern(
                "bearings must lie in [0, 360)".into(),
            ));
        }
        if self.samples.iter().any(|s| !s.1.is_finite()) {
            return Err(AntennaError::NonFiniteGain);
        }
        Ok(())
    }

    pub fn peak_db(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Peak linear (power) gain.
    pub fn peak_linear(&self) -> f64 {
        db_to_linear(self.peak_db())
    }

    fn linear(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|&(b, g)| (b, db_to_linear(g)))
            .collect()
    }

    /// Linear gain at an arbitrary bearing by circular linear interpolation.
    pub fn interpolate_linear(&self, bearing_deg: f64) -> f64 {
        interpolate_circular(&self.linear(), bearing_deg)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.max(1e-30).log10()
}

fn interpolate_circular(lin: &[(f64, f64)], bearing_deg: f64) -> f64 {
    let x = bearing_deg.rem_euclid(360.0);
    let n = lin.len();
    // index of first sample with bearing > x
    let hi = lin.partition_point(|s| s.0 <= x);
    let (a, b) = if hi == 0 || hi == n {
        // wrap segment between the last and first sample
        let a = lin[n - 1];
        let b = (lin[0].0 + 360.0, lin[0].1);
        let xx = if x < lin[0].0 { x + 360.0 } else { x };
        return lerp(a, b, xx);
    } else {
        (lin[hi - 1], lin[hi])
    };
    lerp(a, b, x)
}

fn lerp(a: (f64, f64), b: (f64, f64), x: f64) -> f64 {
    let span = b.0 - a.0;
    if span <= 0.0 {
        return a.1;
    }
    let t = (x - a.0) / span;
    a.1 + t * (b.1 - a.1)
}

/// Shifts the pattern so that its peak gain is exactly 0 dB.
pub fn normalize_pattern(rp: &RadiationPattern) -> Result<RadiationPattern, AntennaError> {
    rp.validate()?;
    let peak = rp.peak_db();
    Ok(RadiationPattern {
        band_mhz: rp.band_mhz,
        samples: rp.samples.iter().map(|&(b, g)| (b, g - peak)).collect(),
    })
}

/// Enforces the three shape constraints: mirror symmetry about boresight,
/// maximum at 0°, and a backplane no higher than [`BACKPLANE_LIMIT`].
///
/// Mirror samples are averaged in linear gain (interpolating where the
/// mirror bearing was not sampled). The backplane is tapered by
/// `cos²(θ/2)^p` with `p >= 1` chosen so every sample within 30° of 180°
/// ends up at or below the limit.
pub fn symmetrize(rp: &RadiationPattern) -> Result<RadiationPattern, AntennaError> {
    rp.validate()?;
    let lin = rp.linear();
    let mut bearings: Vec<f64> = rp.samples.iter().map(|s| s.0).collect();
    if bearings[0] != 0.0 {
        bearings.insert(0, 0.0);
    }
    let mut gains: Vec<f64> = bearings
        .iter()
        .map(|&b| 0.5 * (interpolate_circular(&lin, b) + interpolate_circular(&lin, 360.0 - b)))
        .collect();

    let peak = gains.iter().copied().fold(0.0, f64::max);
    gains[0] = peak;

    let power = taper_power(&bearings, &gains);
    for (b, g) in bearings.iter().zip(gains.iter_mut()) {
        *g *= taper(*b, power);
    }

    Ok(RadiationPattern {
        band_mhz: rp.band_mhz,
        samples: bearings
            .into_iter()
            .zip(gains)
            .map(|(b, g)| (b, linear_to_db(g)))
            .collect(),
    })
}

fn taper(bearing_deg: f64, power: f64) -> f64 {
    let c = (bearing_deg.to_radians() / 2.0).cos();
    (c * c).powf(power)
}

fn taper_power(bearings: &[f64], gains: &[f64]) -> f64 {
    let mut p: f64 = 1.0;
    for (&b, &g) in bearings.iter().zip(gains) {
        let off = wrap_signed(b).abs();
        if off < 180.0 - BACKPLANE_SECTOR_DEG || g <= BACKPLANE_LIMIT {
            continue;
        }
        let t = taper(b, 1.0);
        if t <= 0.0 {
            continue;
        }
        p = p.max((BACKPLANE_LIMIT / g).ln() / t.ln());
    }
    p
}

/// One mirrored Gaussian pair of the SRP mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

impl From<[f64; 3]> for MixtureComponent {
    fn from(a: [f64; 3]) -> Self {
        MixtureComponent {
            weight: a[0],
            mean: a[1],
            sigma: a[2],
        }
    }
}

impl From<MixtureComponent> for [f64; 3] {
    fn from(c: MixtureComponent) -> Self {
        [c.weight, c.mean, c.sigma]
    }
}

impl MixtureComponent {
    /// Unweighted value of the pair, `0.5 * (N(x - mean) + N(x + mean))`
    /// with unit-height Gaussians.
    fn shape(&self, x: f64) -> f64 {
        let s2 = 2.0 * self.sigma * self.sigma;
        let a = x - self.mean;
        let b = x + self.mean;
        0.5 * ((-(a * a) / s2).exp() + (-(b * b) / s2).exp())
    }
}

/// Standard radiation pattern: a normalized, even Gaussian mixture over
/// relative bearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SrpDoc", into = "SrpDoc")]
pub struct SrpModel {
    components: Vec<MixtureComponent>,
}

#[derive(Serialize, Deserialize)]
struct SrpDoc {
    components: Vec<MixtureComponent>,
}

impl TryFrom<SrpDoc> for SrpModel {
    type Error = AntennaError;
    fn try_from(d: SrpDoc) -> Result<Self, Self::Error> {
        SrpModel::new(d.components)
    }
}

impl From<SrpModel> for SrpDoc {
    fn from(m: SrpModel) -> Self {
        SrpDoc {
            components: m.components,
        }
    }
}

impl SrpModel {
    /// Builds a model, rescaling the weights so that the boresight gain is 1.
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self, AntennaError> {
        if components.is_empty() {
            return Err(AntennaError::InvalidModel("no components".into()));
        }
        for c in &components {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(AntennaError::InvalidModel("weights must be >= 0".into()));
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(AntennaError::InvalidModel("sigma must be > 0".into()));
            }
            if !(c.mean >= 0.0 && c.mean <= c.sigma) {
                return Err(AntennaError::InvalidModel(format!(
                    "component mean {} must lie in [0, sigma={}]",
                    c.mean, c.sigma
                )));
            }
        }
        let peak: f64 = components.iter().map(|c| c.weight * c.shape(0.0)).sum();
        if !(peak > 0.0) {
            return Err(AntennaError::InvalidModel("all weights are zero".into()));
        }
        Ok(SrpModel {
            components: components
                .into_iter()
                .map(|c| MixtureComponent {
                    weight: c.weight / peak,
                    ..c
                })
                .collect(),
        })
    }

    /// Single Gaussian lobe with the given standard deviation.
    pub fn gaussian(sigma_deg: f64) -> Result<Self, AntennaError> {
        SrpModel::new(vec![MixtureComponent {
            weight: 1.0,
            mean: 0.0,
            sigma: sigma_deg,
        }])
    }

    /// Single Gaussian lobe with the given half-power beamwidth.
    pub fn from_hpbw(hpbw_deg: f64) -> Result<Self, AntennaError> {
        SrpModel::gaussian(hpbw_deg / (2.0 * (2.0 * LN_2).sqrt()))
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Gain at relative bearing `dpsi` (degrees, wrapped into `(-180, 180]`).
    pub fn eval(&self, dpsi: f64) -> f64 {
        let x = wrap_signed(dpsi);
        self.components.iter().map(|c| c.weight * c.shape(x)).sum()
    }

    /// Full angular width over which the gain is at least 0.5, or `None` if
    /// the gain never drops to half power.
    pub fn half_power_beamwidth(&self) -> Option<f64> {
        if self.eval(180.0) >= 0.5 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, 180.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) >= 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo + hi)
    }

    /// Checks evenness, boresight maximum, nonnegativity and the backplane
    /// limit on a 0.1° lattice.
    pub fn check_constraints(&self) -> Result<(), AntennaError> {
        let peak = self.eval(0.0);
        if (peak - 1.0).abs() > 1e-12 {
            return Err(AntennaError::ConstraintViolated(format!(
                "boresight gain {peak} != 1"
            )));
        }
        for k in 0..=1800 {
            let x = k as f64 * 0.1;
            let (a, b) = (self.eval(x), self.eval(-x));
            if (a - b).abs() > 1e-12 {
                return Err(AntennaError::ConstraintViolated(format!(
                    "asymmetric at {x} degrees"
                )));
            }
            if a < 0.0 || a > peak + 1e-12 {
                return Err(AntennaError::ConstraintViolated(format!(
                    "gain {a} at {x} degrees outside [0, peak]"
                )));
            }
        }
        let back = self.eval(180.0);
        if back > BACKPLANE_LIMIT {
            return Err(AntennaError::ConstraintViolated(format!(
                "backplane gain {back} exceeds {BACKPLANE_LIMIT}"
            )));
        }
        Ok(())
    }
}

/// Result of [`fit_srp`].
#[derive(Debug, Clone, PartialEq)]
pub struct SrpFit {
    pub model: SrpModel,
    /// RMS residual in linear gain over the pattern samples.
    pub residual_rms: f64,
}

// ln(1 / 0.0099): leaves headroom under the 1% backplane limit.
const BACKPLANE_LOG_RATIO: f64 = 4.615_220_521_841_593;

/// Largest sigma for which a pair with `mean = t * sigma` has decayed to
/// below the backplane limit (relative to its boresight value) at 180°.
fn sigma_cap(t: f64) -> f64 {
    let l = BACKPLANE_LOG_RATIO;
    let b = 360.0 * t;
    (-b + (b * b + 8.0 * l * 32400.0).sqrt()) / (4.0 * l)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln()
}

/// Unconstrained parameters `(a, b, c)` per component map to
/// `weight = a²`, `mean = sigmoid(c) * sigma`,
/// `sigma = MIN + (cap(t) - MIN) * sigmoid(b)`.
fn decode(params: &[f64]) -> Vec<MixtureComponent> {
    params
        .chunks_exact(3)
        .map(|p| {
            let t = sigmoid(p[2]);
            let cap = sigma_cap(t);
            let sigma = MIN_SIGMA_DEG + (cap - MIN_SIGMA_DEG) * sigmoid(p[1]);
            MixtureComponent {
                weight: p[0] * p[0],
                mean: t * sigma,
                sigma,
            }
        })
        .collect()
}

fn encode(components: &[MixtureComponent]) -> Vec<f64> {
    let mut out = Vec::with_capacity(components.len() * 3);
    for c in components {
        let t = (c.mean / c.sigma).clamp(0.0, 1.0);
        let cap = sigma_cap(t);
        let frac = (c.sigma - MIN_SIGMA_DEG) / (cap - MIN_SIGMA_DEG);
        out.push(c.weight.max(0.0).sqrt());
        out.push(logit(frac));
        out.push(logit(t));
    }
    out
}

fn mixture_value(components: &[MixtureComponent], x: f64) -> f64 {
    components.iter().map(|c| c.weight * c.shape(x)).sum()
}

fn residuals(params: &[f64], xs: &[f64], ys: &[f64]) -> DVector<f64> {
    let comps = decode(params);
    DVector::from_iterator(
        xs.len(),
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| mixture_value(&comps, x) - y),
    )
}

fn jacobian(params: &[f64], xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(xs.len(), params.len());
    let mut p = params.to_vec();
    for k in 0..params.len() {
        let h = 1e-6 * params[k].abs().max(1.0);
        p[k] = params[k] + h;
        let rp = residuals(&p, xs, ys);
        p[k] = params[k] - h;
        let rm = residuals(&p, xs, ys);
        p[k] = params[k];
        jac.set_column(k, &((rp - rm) / (2.0 * h)));
    }
    jac
}

/// Levenberg-Marquardt on the unconstrained parametrisation. Returns the
/// final parameters and half the squared residual norm.
fn levenberg_marquardt(init: Vec<f64>, xs: &[f64], ys: &[f64]) -> (Vec<f64>, f64) {
    let mut params = init;
    let mut r = residuals(&params, xs, ys);
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..400 {
        let jac = jacobian(&params, xs, ys);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        if grad.amax() < 1e-14 {
            break;
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * (jtj[(d, d)] + 1e-9);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let rt = residuals(&trial, xs, ys);
            let ct = 0.5 * rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                params = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return (params, cost);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (params, cost)
}

/// Distance from boresight at which the samples first fall below half the
/// boresight gain.
fn half_power_offset(xs: &[f64], ys: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = xs.iter().map(|x| x.abs()).zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let top = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    pts.iter()
        .find(|p| p.1 < 0.5 * top)
        .map(|p| p.0)
        .unwrap_or(90.0)
}

fn initial_guesses(n: usize, sigma0: f64) -> Vec<Vec<MixtureComponent>> {
    let mut out = Vec::new();
    for &scale in &[0.7, 1.0, 1.4] {
        for &ratio in &[1.5f64, 2.5] {
            for &t_outer in &[0.05, 0.5, 0.9] {
                let guess = (0..n)
                    .map(|k| {
                        // narrowest lobe first, centred; outer lobes may split
                        let t = if k == 0 { 0.05 } else { t_outer };
                        let s = scale * ratio.powf(k as f64 - (n - 1) as f64 / 2.0);
                        let sigma = (sigma0 * s).clamp(MIN_SIGMA_DEG * 4.0, sigma_cap(t) * 0.95);
                        MixtureComponent {
                            weight: 1.0 / n as f64,
                            mean: t * sigma,
                            sigma,
                        }
                    })
                    .collect();
                out.push(guess);
            }
        }
    }
    out
}

/// Least-squares fit of an `n_components` mixture to the linear gain of
/// `rp`, which should already be symmetrized.
pub fn fit_srp(rp: &RadiationPattern, n_components: usize) -> Result<SrpFit, AntennaError> {
    if !(1..=MAX_COMPONENTS).contains(&n_components) {
        return Err(AntennaError::ComponentCount(n_components));
    }
    rp.validate()?;
    let xs: Vec<f64> = rp.samples.iter().map(|s| wrap_signed(s.0)).collect();
    let ys: Vec<f64> = rp.samples.iter().map(|s| db_to_linear(s.1)).collect();

    let sigma0 = (half_power_offset(&xs, &ys) / (2.0 * LN_2).sqrt()).clamp(2.0, 55.0);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for guess in initial_guesses(n_components, sigma0) {
        let (p, cost) = levenberg_marquardt(encode(&guess), &xs, &ys);
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((p, cost));
        }
    }
    let (params, _) = best.expect("at least one initial guess");
    let model = SrpModel::new(decode(&params))?;
    let sq: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (model.eval(x) - y).powi(2))
        .sum();
    let rms = (sq / xs.len() as f64).sqrt();
    if !(rms <= MAX_FIT_RMS) {
        return Err(AntennaError::FitDivergence { rms });
    }
    Ok(SrpFit {
        model,
        residual_rms: rms,
    })
}

/// Normalize, symmetrize and fit in one go.
pub fn srp_from_measurement(
    rp: &RadiationPattern,
    n_components: usize,
) -> Result<SrpFit, AntennaError> {
    fit_srp(&symmetrize(&normalize_pattern(rp)?)?, n_components)
}

/// Per-band sensitivity correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMask {
    pub band_mhz: f64,
    pub scale: f64,
}

/// Computes the per-band scale that brings every band down to the peak
/// sensitivity of the least sensitive band. Takes the measured (not yet
/// normalized) patterns, since the peaks are what is being equalized.
pub fn band_masks(patterns: &[RadiationPattern]) -> Result<Vec<GainMask>, AntennaError> {
    if patterns.is_empty() {
        return Err(AntennaError::InvalidPattern("no bands given".into()));
    }
    let peaks: Vec<f64> = patterns
        .iter()
        .map(|p| p.validate().map(|_| p.peak_linear()))
        .collect::<Result<_, _>>()?;
    let floor = peaks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(patterns
        .iter()
        .zip(peaks)
        .map(|(p, peak)| GainMask {
            band_mhz: p.band_mhz,
            scale: floor / peak,
        })
        .collect())
}

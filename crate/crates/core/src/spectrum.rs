//! Periodogram power spectral density and in-band power.
//!
//! The periodogram is the plain `N`-point form with no window and no
//! averaging:
//!
//! ```text
//! P(f_k) = |sum_n x[n] exp(-j 2 pi k n / N)|^2 / N
//! ```
//!
//! so that the bin powers sum to the buffer energy. The receiver gain is
//! taken as fixed: nothing in this module renormalizes a frame.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Bearing, LocalPoint};

/// Default peak prominence: 13 dB over the median bin power. Periodogram
/// bins of white noise are exponential, so a single capture of a few
/// thousand bins rarely produces a false peak at this level.
pub const DEFAULT_PROMINENCE: f64 = 20.0;

const DEFAULT_ALLOCATIONS: &str = include_str!("../config/allocations.json");
const DEFAULT_CHANNELS: &str = include_str!("../config/channels.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("buffer length {0} is not a power of two >= 16")]
    BadLength(usize),
    #[error("buffer contains non-finite samples")]
    NonFinite,
    #[error("invalid sample rate {0}")]
    BadSampleRate(f64),
    #[error("channel {0} does not overlap the captured span")]
    DisjointMask(String),
    #[error("invalid channel mask: {0}")]
    InvalidMask(String),
    #[error("frames differ in length, rate or center frequency")]
    Mismatch,
    #[error("no frames given")]
    Empty,
    #[error("bad configuration: {0}")]
    Config(String),
}

/// Complex baseband capture.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    center_freq_mhz: f64,
}

impl IqBuffer {
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        center_freq_mhz: f64,
    ) -> Result<Self, SpectrumError> {
        let n = samples.len();
        if n < 16 || !n.is_power_of_two() {
            return Err(SpectrumError::BadLength(n));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(SpectrumError::BadSampleRate(sample_rate_hz));
        }
        if !center_freq_mhz.is_finite()
            || samples
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(SpectrumError::NonFinite);
        }
        Ok(IqBuffer {
            samples,
            sample_rate_hz,
            center_freq_mhz,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_mhz(&self) -> f64 {
        self.center_freq_mhz
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// One periodogram. Bins are kept in DFT order `k = 0..N`, so bins at
/// `k >= N/2` carry the negative baseband frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdFrame {
    pub center_freq_mhz: f64,
    pub sample_rate_hz: f64,
    pub freq_mhz: Vec<f64>,
    pub power: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Bearing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<LocalPoint>,
}

impl PsdFrame {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Captured span `[lo, hi)` in MHz.
    pub fn span_mhz(&self) -> (f64, f64) {
        let half = self.sample_rate_hz / 2e6;
        (self.center_freq_mhz - half, self.center_freq_mhz + half)
    }

    pub fn with_capture(mut self, heading: Bearing, position: LocalPoint) -> Self {
        self.heading = Some(heading);
        self.position = Some(position);
        self
    }

    /// Bin indices ordered by ascending frequency.
    fn ascending(&self) -> Vec<usize> {
        let n = self.len();
        (n / 2..n).chain(0..n / 2).collect()
    }
}

fn bin_frequencies(n: usize, sample_rate_hz: f64, center_mhz: f64) -> Vec<f64> {
    let df = sample_rate_hz / n as f64;
    (0..n)
        .map(|k| {
            let signed = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            center_mhz + signed * df / 1e6
        })
        .collect()
}

/// Periodogram of one buffer.
pub fn psd(iq: &IqBuffer) -> Result<PsdFrame, SpectrumError> {
    // buffers built through IqBuffer::new are already checked, fields are private
    let n = iq.len();
    let mut spectrum = iq.samples.clone();
    FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
    let power = spectrum.iter().map(|z| z.norm_sqr() / n as f64).collect();
    Ok(PsdFrame {
        center_freq_mhz: iq.center_freq_mhz,
        sample_rate_hz: iq.sample_rate_hz,
        freq_mhz: bin_frequencies(n, iq.sample_rate_hz, iq.center_freq_mhz),
        power,
        heading: None,
        position: None,
    })
}

/// Bin-wise mean of the periodograms of several captures of the same
/// configuration.
pub fn psd_averaged(buffers: &[IqBuffer]) -> Result<PsdFrame, SpectrumError> {
    let first = buffers.first().ok_or(SpectrumError::Empty)?;
    let mut acc = psd(first)?;
    for b in &buffers[1..] {
        if b.len() != first.len()
            || b.sample_rate_hz != first.sample_rate_hz
            || b.center_freq_mhz != first.center_freq_mhz
        {
            return Err(SpectrumError::Mismatch);
        }
        let f = psd(b)?;
        for (a, p) in acc.power.iter_mut().zip(f.power) {
            *a += p;
        }
    }
    let m = buffers.len() as f64;
    acc.power.iter_mut().for_each(|p| *p /= m);
    Ok(acc)
}

/// A monitored GNSS channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMask {
    pub name: String,
    pub center_mhz: f64,
    pub bandwidth_mhz: f64,
}

impl ChannelMask {
    pub fn new(
        name: impl Into<String>,
        center_mhz: f64,
        bandwidth_mhz: f64,
    ) -> Result<Self, SpectrumError> {
        let m = ChannelMask {
            name: name.into(),
            center_mhz,
            bandwidth_mhz,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        if !(self.bandwidth_mhz > 0.0) || !self.center_mhz.is_finite() {
            return Err(SpectrumError::InvalidMask(format!(
                "{}: bandwidth must be positive",
                self.name
            )));
        }
        Ok(())
    }

    pub fn range_mhz(&self) -> (f64, f64) {
        let h = self.bandwidth_mhz / 2.0;
        (self.center_mhz - h, self.center_mhz + h)
    }
}

#[derive(Deserialize)]
struct ChannelDoc {
    channels: Vec<ChannelMask>,
}

/// Parses a `{"channels": [...]}` document.
pub fn parse_channels(json: &str) -> Result<Vec<ChannelMask>, SpectrumError> {
    let doc: ChannelDoc =
        serde_json::from_str(json).map_err(|e| SpectrumError::Config(e.to_string()))?;
    for c in &doc.channels {
        c.validate()?;
    }
    Ok(doc.channels)
}

/// The bundled GNSS channel list.
pub fn default_channels() -> Vec<ChannelMask> {
    parse_channels(DEFAULT_CHANNELS).expect("bundled channel table is valid")
}

/// Sum of bin powers whose frequency falls in `[center - bw/2, center + bw/2)`.
pub fn band_power(frame: &PsdFrame, mask: &ChannelMask) -> Result<f64, SpectrumError> {
    mask.validate()?;
    let (lo, hi) = mask.range_mhz();
    let (span_lo, span_hi) = frame.span_mhz();
    if hi <= span_lo || lo >= span_hi {
        return Err(SpectrumError::DisjointMask(mask.name.clone()));
    }
    Ok(frame
        .freq_mhz
        .iter()
        .zip(&frame.power)
        .filter(|(f, _)| **f >= lo && **f < hi)
        .map(|(_, p)| p)
        .sum())
}

/// A frequency allocation that may host an interfering transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationBand {
    pub name: String,
    pub lo_mhz: f64,
    pub hi_mhz: f64,
}

impl AllocationBand {
    pub fn contains(&self, mhz: f64) -> bool {
        mhz >= self.lo_mhz && mhz <= self.hi_mhz
    }
}

/// Allocation band table. Allocations are regulation specific, so the
/// table is loaded from configuration; [`AllocationTable::default`]
/// parses the bundled file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationTable {
    pub bands: Vec<AllocationBand>,
}

impl AllocationTable {
    pub fn from_json(json: &str) -> Result<Self, SpectrumError> {
        let t: AllocationTable =
            serde_json::from_str(json).map_err(|e| SpectrumError::Config(e.to_string()))?;
        for b in &t.bands {
            if !(b.lo_mhz <= b.hi_mhz) {
                return Err(SpectrumError::Config(format!("{}: lo > hi", b.name)));
            }
        }
        Ok(t)
    }
}

impl Default for AllocationTable {
    fn default() -> Self {
        AllocationTable::from_json(DEFAULT_ALLOCATIONS).expect("bundled allocation table is valid")
    }
}

/// Candidate origin of a spectral peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub fundamental_mhz: f64,
    pub order: u8,
    pub band: Option<String>,
}

/// For harmonic orders 1 to 3, lists every allocation containing
/// `peak_mhz / order`. Orders with no matching allocation are reported once
/// with `band: None`.
pub fn attribute_harmonics(peak_mhz: f64, table: &AllocationTable) -> Vec<Attribution> {
    let mut out = Vec::new();
    for order in 1u8..=3 {
        let f = peak_mhz / order as f64;
        let before = out.len();
        for b in table.bands.iter().filter(|b| b.contains(f)) {
            out.push(Attribution {
                fundamental_mhz: f,
                order,
                band: Some(b.name.clone()),
            });
        }
        if out.len() == before {
            out.push(Attribution {
                fundamental_mhz: f,
                order,
                band: None,
            });
        }
    }
    out
}

/// A detected narrowband peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub freq_mhz: f64,
    pub bin: usize,
    pub power: f64,
    /// Peak power over the median bin power.
    pub prominence: f64,
    pub attribution: Vec<Attribution>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Local maxima whose power is at least `min_prominence` times the median
/// bin power, strongest first.
pub fn detect_peaks(
    frame: &PsdFrame,
    min_prominence: f64,
    table: &AllocationTable,
) -> Vec<PeakReport> {
    let order = frame.ascending();
    let p: Vec<f64> = order.iter().map(|&k| frame.power[k]).collect();
    let floor = median(&p);
    let mut peaks = Vec::new();
    for i in 0..p.len() {
        let left_ok = i == 0 || p[i] > p[i - 1];
        let right_ok = i + 1 == p.len() || p[i] >= p[i + 1];
        if !(left_ok && right_ok) || !(p[i] > 0.0) {
            continue;
        }
        // a single-bin frame has no neighbours to stand out from
        if p.len() == 1 {
            continue;
        }
        let prominence = if floor > 0.0 {
            p[i] / floor
        } else {
            f64::INFINITY
        };
        if prominence >= min_prominence {
            let k = order[i];
            peaks.push(PeakReport {
                freq_mhz: frame.freq_mhz[k],
                bin: k,
                power: p[i],
                prominence,
                attribution: attribute_harmonics(frame.freq_mhz[k], table),
            });
        }
    }
    peaks.sort_by(|a, b| {
        b.power
            .total_cmp(&a.power)
            .then(a.freq_mhz.total_cmp(&b.freq_mhz))
    });
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Direct O(N²) evaluation of the periodogram definition.
    fn naive_periodogram(x: &[Complex64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let s: Complex64 = x
                    .iter()
                    .enumerate()
                    .map(|(m, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (k * m % n) as f64 / n as f64)
                    })
                    .sum();
                s.norm_sqr() / n as f64
            })
            .collect()
    }

    fn buf(x: Vec<Complex64>) -> IqBuffer {
        IqBuffer::new(x, 1.024e6, 1575.42).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(
            IqBuffer::new(vec![Complex64::default(); 48], 1.0, 1.0),
            Err(SpectrumError::BadLength(48))
        );
        assert_eq!(
            IqBuffer::new(vec![Complex64::default(); 8], 1.0, 1.0),
            Err(SpectrumError::BadLength(8))
        );
        let mut x = vec![Complex64::default(); 16];
        x[3].im = f64::NAN;
        assert_eq!(IqBuffer::new(x, 1.0, 1.0), Err(SpectrumError::NonFinite));
    }

    #[test]
    fn dc_tone() {
        let f = psd(&buf(vec![Complex64::new(1.0, 0.0); 64])).unwrap();
        assert!((f.power[0] - 64.0).abs() < 1e-9);
        assert!(f.power[1..].iter().all(|p| p.abs() < 1e-9));
    }

    #[test]
    fn single_bin_tone() {
        let x = (0..64)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * 5.0 * n as f64 / 64.0))
            .collect();
        let f = psd(&buf(x)).unwrap();
        for (k, p) in f.power.iter().enumerate() {
            let expect = if k == 5 { 64.0 } else { 0.0 };
            assert!((p - expect).abs() < 1e-9, "bin {k}: {p}");
        }
    }

    #[test]
    fn white_noise_parseval() {
        let x = noise(4096, 7);
        let b = buf(x);
        let total = psd(&b).unwrap().total_power();
        assert!((total - b.energy()).abs() <= 1e-9 * b.energy());
    }

    #[test]
    fn matches_direct_definition() {
        let x = noise(128, 3);
        let fast = psd(&buf(x.clone())).unwrap().power;
        let slow = naive_periodogram(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn frequencies_follow_dft_order() {
        let f = psd(&buf(vec![Complex64::default(); 16])).unwrap();
        let df = 1.024e6 / 16.0 / 1e6;
        assert_eq!(f.freq_mhz[0], 1575.42);
        assert!((f.freq_mhz[1] - (1575.42 + df)).abs() < 1e-12);
        assert!((f.freq_mhz[8] - (1575.42 - 8.0 * df)).abs() < 1e-12);
        assert!((f.freq_mhz[15] - (1575.42 - df)).abs() < 1e-12);
    }

    #[test]
    fn averaging_takes_the_mean() {
        let a = buf(noise(64, 1));
        let b = buf(noise(64, 2));
        let avg = psd_averaged(&[a.clone(), b.clone()]).unwrap();
        let (pa, pb) = (psd(&a).unwrap(), psd(&b).unwrap());
        for k in 0..64 {
            assert!((avg.power[k] - 0.5 * (pa.power[k] + pb.power[k])).abs() < 1e-12);
        }
        let c = IqBuffer::new(noise(64, 3), 2.0e6, 1575.42).unwrap();
        assert_eq!(psd_averaged(&[a, c]), Err(SpectrumError::Mismatch));
        assert_eq!(psd_averaged(&[]), Err(SpectrumError::Empty));
    }

    fn flat_frame(n: usize) -> PsdFrame {
        PsdFrame {
            center_freq_mhz: 1575.42,
            sample_rate_hz: 16e6,
            freq_mhz: bin_frequencies(n, 16e6, 1575.42),
            power: vec![1.0; n],
            heading: None,
            position: None,
        }
    }

    #[test]
    fn band_power_examples() {
        let mut zero = flat_frame(64);
        zero.power.iter_mut().for_each(|p| *p = 0.0);
        let l1 = ChannelMask::new("L1", 1575.42, 2.0).unwrap();
        assert_eq!(band_power(&zero, &l1).unwrap(), 0.0);

        let mut tone = zero.clone();
        tone.power[2] = 5.0;
        assert_eq!(band_power(&tone, &l1).unwrap(), 5.0);

        let flat = flat_frame(64);
        let lower = ChannelMask::new("lower", 1575.42 - 4.0, 8.0).unwrap();
        let upper = ChannelMask::new("upper", 1575.42 + 4.0, 8.0).unwrap();
        assert_eq!(band_power(&flat, &lower).unwrap(), 32.0);
        assert_eq!(band_power(&flat, &upper).unwrap(), 32.0);

        let full = ChannelMask::new("all", 1575.42, 16.0).unwrap();
        assert_eq!(band_power(&flat, &full).unwrap(), flat.total_power());

        let far = ChannelMask::new("L2", 1227.6, 2.0).unwrap();
        assert_eq!(
            band_power(&flat, &far),
            Err(SpectrumError::DisjointMask("L2".into()))
        );
        assert!(ChannelMask::new("bad", 1.0, 0.0).is_err());
    }

    #[test]
    fn band_power_grows_with_width() {
        let f = psd(&buf(noise(256, 9))).unwrap();
        let mut last = 0.0;
        for k in 1..20 {
            let m = ChannelMask::new("m", 1575.42, k as f64 * 0.05).unwrap();
            let p = band_power(&f, &m).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn harmonic_attribution() {
        let table = AllocationTable::default();
        let a = attribute_harmonics(1575.42, &table);
        assert!(a.iter().any(|x| x.order == 2
            && (x.fundamental_mhz - 787.71).abs() < 1e-9
            && x.band.as_deref() == Some("TV broadcast 781-794 MHz")));
        assert!(a.iter().any(|x| x.order == 3
            && (x.fundamental_mhz - 525.14).abs() < 1e-9
            && x.band.as_deref() == Some("TV broadcast 521-530 MHz")));
        assert!(a.iter().any(|x| x.order == 1 && x.band.is_none()));

        let b = attribute_harmonics(1260.0, &table);
        assert!(b.iter().any(|x| x.order == 1
            && x.fundamental_mhz == 1260.0
            && x.band.as_deref() == Some("Radio amateur 1240-1300 MHz")));
    }

    #[test]
    fn attribution_is_exactly_table_driven() {
        let table = AllocationTable::default();
        for step in 0..4000 {
            let f = 1000.0 + step as f64 * 0.25;
            let got = attribute_harmonics(f, &table);
            for order in 1u8..=3 {
                let sub = f / order as f64;
                let expect: Vec<&str> = table
                    .bands
                    .iter()
                    .filter(|b| sub >= b.lo_mhz && sub <= b.hi_mhz)
                    .map(|b| b.name.as_str())
                    .collect();
                let have: Vec<&str> = got
                    .iter()
                    .filter(|a| a.order == order)
                    .filter_map(|a| a.band.as_deref())
                    .collect();
                assert_eq!(have, expect, "f={f} order={order}");
            }
        }
    }

    #[test]
    fn peaks_on_flat_or_weak_spectra() {
        let table = AllocationTable::default();
        assert!(detect_peaks(&flat_frame(64), DEFAULT_PROMINENCE, &table).is_empty());
        let mut weak = flat_frame(64);
        weak.power[10] = 5.0;
        assert!(detect_peaks(&weak, DEFAULT_PROMINENCE, &table).is_empty());
    }

    #[test]
    fn two_injected_tones() {
        let table = AllocationTable::default();
        let mut f = flat_frame(256);
        f.power[20] = 100.0;
        f.power[200] = 150.0;
        let peaks = detect_peaks(&f, DEFAULT_PROMINENCE, &table);
        assert_eq!(peaks.len(), 2);
        assert_eq!(peaks[0].bin, 200);
        assert_eq!(peaks[1].bin, 20);
        assert!((peaks[0].prominence - 150.0).abs() < 1e-12);
    }

    #[test]
    fn bundled_tables_parse() {
        assert_eq!(AllocationTable::default().bands.len(), 3);
        let ch = default_channels();
        assert!(ch.iter().any(|c| c.name == "L1" && c.center_mhz == 1575.42));
        assert!(AllocationTable::from_json("{").is_err());
    }

    proptest! {
        #[test]
        fn parseval_shift_and_scale(seed in 0u64..1000, shift in 0usize..256, alpha in 0.1f64..10.0) {
            let x = noise(256, seed);
            let p = psd(&buf(x.clone())).unwrap();
            let e: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((p.total_power() - e).abs() <= 1e-9 * e);

            let mut shifted = x.clone();
            shifted.rotate_left(shift);
            let ps = psd(&buf(shifted)).unwrap();
            let scaled = psd(&buf(x.iter().map(|z| z * alpha).collect())).unwrap();
            let tol = 1e-9 * p.power.iter().copied().fold(0.0, f64::max);
            for k in 0..256 {
                prop_assert!((ps.power[k] - p.power[k]).abs() <= tol);
                prop_assert!((scaled.power[k] - alpha * alpha * p.power[k]).abs() <= tol * alpha * alpha);
            }
        }
    }
}

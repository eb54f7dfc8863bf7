//! Transmitter estimates from a thresholded fused map.
//!
//! Surviving cells are grouped into 8-connected regions. Each region is
//! summarized by its density-weighted second moments as an ellipse whose
//! semi-axes are two standard deviations along the principal directions.
//! When every scan looks at a source from the same side the region runs
//! off the edge of the map along its long axis; such fits are reported as
//! unbounded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusedMap;
use crate::geometry::{bearing_to, wrap_signed, LocalPoint};

/// Sigma multiple used for the reported ellipse axes.
pub const CONTOUR_SIGMA: f64 = 2.0;

/// Geometry quality below which a region is flagged as degenerate.
pub const DEGENERATE_QUALITY: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("region has {0} cells, at least 3 are needed for an ellipse")]
    TooFewCells(usize),
    #[error("need at least 2 scan positions away from the region, got {0}")]
    TooFewPoses(usize),
    #[error("region has no density")]
    EmptyRegion,
}

/// A connected group of surviving cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEstimate {
    /// `(i, j)` grid cells in row-major discovery order.
    pub cells: Vec<(usize, usize)>,
    /// Density-weighted mean of the cell centres.
    pub centroid: LocalPoint,
    /// Centre of the densest cell.
    pub peak: LocalPoint,
    pub total_density: f64,
}

/// Connected components (8-neighbourhood) of the nonzero cells, largest
/// total density first.
pub fn extract_regions(map: &FusedMap) -> Vec<RegionEstimate> {
    let g = &map.grid;
    let mut label = vec![false; g.len()];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..g.len() {
        if label[start] || !(map.values[start] > 0.0) {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let mut cells = Vec::new();
        while let Some(k) = stack.pop() {
            let (i, j) = (k % g.width, k / g.width);
            cells.push((i, j));
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= g.width as i64 || nj >= g.height as i64 {
                        continue;
                    }
                    let nk = g.index(ni as usize, nj as usize);
                    if !label[nk] && map.values[nk] > 0.0 {
                        label[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        cells.sort_by_key(|&(i, j)| (j, i));
        regions.push(summarize(map, cells));
    }
    regions.sort_by(|a, b| b.total_density.total_cmp(&a.total_density));
    regions
}

fn summarize(map: &FusedMap, cells: Vec<(usize, usize)>) -> RegionEstimate {
    let g = &map.grid;
    let (mut w, mut se, mut sn) = (0.0, 0.0, 0.0);
    let mut best = (cells[0], f64::NEG_INFINITY);
    for &(i, j) in &cells {
        let v = map.get(i, j);
        let c = g.center_unchecked(i, j);
        w += v;
        se += v * c.east;
        sn += v * c.north;
        if v > best.1 {
            best = ((i, j), v);
        }
    }
    RegionEstimate {
        centroid: LocalPoint::new(se / w, sn / w),
        peak: g.center_unchecked(best.0 .0, best.0 .1),
        total_density: w,
        cells,
    }
}

/// Length of the long semi-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LongAxis {
    Bounded(f64),
    Unbounded,
}

impl LongAxis {
    pub fn is_unbounded(&self) -> bool {
        matches!(self, LongAxis::Unbounded)
    }

    pub fn meters(&self) -> Option<f64> {
        match *self {
            LongAxis::Bounded(m) => Some(m),
            LongAxis::Unbounded => None,
        }
    }
}

/// Best-fit ellipse of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseFit {
    /// Reported centre: the centroid, or for unbounded fits the focus
    /// closest to the scans.
    pub center: LocalPoint,
    pub long_axis: LongAxis,
    pub short_axis: f64,
    /// Angle of the long axis from local north, clockwise, in `(-90, 90]`.
    pub heading_deg: f64,
    /// Density-weighted centroid of the region.
    pub centroid: LocalPoint,
    pub peak: LocalPoint,
    /// Long semi-axis measured from the (possibly clipped) region.
    pub fitted_long_axis: f64,
    pub contour_sigma: f64,
}

impl EllipseFit {
    fn major_unit(&self) -> (f64, f64) {
        let (s, c) = self.heading_deg.to_radians().sin_cos();
        (s, c)
    }

    /// Perpendicular distance from `p` to the line through the centre
    /// along the long axis.
    pub fn distance_to_major_axis(&self, p: LocalPoint) -> f64 {
        let (ue, un) = self.major_unit();
        let (de, dn) = (p.east - self.center.east, p.north - self.center.north);
        (de * un - dn * ue).abs()
    }

    /// Closed polygon approximating the ellipse around the centroid, with
    /// `segments + 1` vertices (first and last equal).
    pub fn polygon(&self, segments: usize) -> Vec<LocalPoint> {
        let (ue, un) = self.major_unit();
        let (ve, vn) = (un, -ue);
        let a = self.long_axis.meters().unwrap_or(self.fitted_long_axis);
        let b = self.short_axis;
        let mut pts: Vec<LocalPoint> = (0..segments)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
                let (s, c) = t.sin_cos();
                LocalPoint::new(
                    self.centroid.east + a * c * ue + b * s * ve,
                    self.centroid.north + a * c * un + b * s * vn,
                )
            })
            .collect();
        pts.push(pts[0]);
        pts
    }
}

/// Eigen-decomposition of a symmetric 2x2 matrix `[[a, b], [b, c]]`,
/// returning `(l1, l2, (e, n))` with `l1 >= l2` and the unit eigenvector of
/// `l1`.
fn principal_axes(a: f64, b: f64, c: f64) -> (f64, f64, (f64, f64)) {
    let tr = a + c;
    let disc = ((a - c) * 0.5).hypot(b);
    let l1 = tr * 0.5 + disc;
    let l2 = (tr * 0.5 - disc).max(0.0);
    // angle of the major axis from the east axis
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    (l1, l2, (theta.cos(), theta.sin()))
}

/// Marches from `start` both ways along `dir` and reports whether the line
/// leaves the grid while still inside the region.
fn runs_off_grid(
    region: &RegionEstimate,
    map: &FusedMap,
    start: LocalPoint,
    dir: (f64, f64),
) -> bool {
    let g = &map.grid;
    let mut member = vec![false; g.len()];
    for &(i, j) in &region.cells {
        member[g.index(i, j)] = true;
    }
    let step = g.resolution * 0.25;
    let (lo, hi) = g.bounds();
    let reach = (hi.east - lo.east).hypot(hi.north - lo.north);
    let n = (reach / step).ceil() as usize + 1;
    [1.0, -1.0].iter().any(|&sign| {
        let mut inside = false;
        for k in 0..=n {
            let t = sign * step * k as f64;
            let p = LocalPoint::new(start.east + t * dir.0, start.north + t * dir.1);
            match g.point_to_cell(p) {
                Some((i, j)) => inside = member[g.index(i, j)],
                None => return inside,
            }
        }
        false
    })
}

/// Density-weighted moment ellipse of a region.
///
/// `scan_positions` is only used to pick the reported focus of an
/// unbounded fit.
pub fn fit_ellipse(
    region: &RegionEstimate,
    map: &FusedMap,
    scan_positions: &[LocalPoint],
) -> Result<EllipseFit, LocalizeError> {
    if region.cells.len() < 3 {
        return Err(LocalizeError::TooFewCells(region.cells.len()));
    }
    let g = &map.grid;
    let mut w = 0.0;
    let (mut me, mut mn) = (0.0, 0.0);
    for &(i, j) in &region.cells {
        let v = map.get(i, j);
        let c = g.center_unchecked(i, j);
        w += v;
        me += v * c.east;
        mn += v * c.north;
    }
    if !(w > 0.0) {
        return Err(LocalizeError::EmptyRegion);
    }
    let mean = LocalPoint::new(me / w, mn / w);
    let (mut cee, mut cen, mut cnn) = (0.0, 0.0, 0.0);
    for &(i, j) in &region.cells {
        let v = map.get(i, j);
        let c = g.center_unchecked(i, j);
        let (de, dn) = (c.east - mean.east, c.north - mean.north);
        cee += v * de * de;
        cen += v * de * dn;
        cnn += v * dn * dn;
    }
    let (l1, l2, (ue, un)) = principal_axes(cee / w, cen / w, cnn / w);
    let short = (CONTOUR_SIGMA * l2.sqrt()).max(g.resolution);
    let long = (CONTOUR_SIGMA * l1.sqrt()).max(short);

    let mut heading = wrap_signed(ue.atan2(un).to_degrees());
    if heading <= -90.0 {
        heading += 180.0;
    } else if heading > 90.0 {
        heading -= 180.0;
    }

    let touches_along_major = runs_off_grid(region, map, mean, (ue, un));

    let mut fit = EllipseFit {
        center: mean,
        long_axis: LongAxis::Bounded(long),
        short_axis: short,
        heading_deg: heading,
        centroid: mean,
        peak: region.peak,
        fitted_long_axis: long,
        contour_sigma: CONTOUR_SIGMA,
    };
    if touches_along_major {
        fit.long_axis = LongAxis::Unbounded;
        if !scan_positions.is_empty() {
            let n = scan_positions.len() as f64;
            let hub = LocalPoint::new(
                scan_positions.iter().map(|p| p.east).sum::<f64>() / n,
                scan_positions.iter().map(|p| p.north).sum::<f64>() / n,
            );
            let f = (long * long - short * short).max(0.0).sqrt();
            let f1 = LocalPoint::new(mean.east + f * ue, mean.north + f * un);
            let f2 = LocalPoint::new(mean.east - f * ue, mean.north - f * un);
            fit.center = if f1.distance(&hub) <= f2.distance(&hub) {
                f1
            } else {
                f2
            };
        }
    }
    Ok(fit)
}

/// Distance from the estimate to the true transmitter position. Unbounded
/// fits are scored by their peak cell.
pub fn localization_error(fit: &EllipseFit, truth: LocalPoint) -> f64 {
    match fit.long_axis {
        LongAxis::Bounded(_) => fit.center.distance(&truth),
        LongAxis::Unbounded => fit.peak.distance(&truth),
    }
}

/// Angular spread of the scan positions around `centre`: one minus the
/// mean resultant length of the unit bearings towards each scan. 0 means
/// every scan looks from the same direction.
pub fn geometry_quality(
    scan_positions: &[LocalPoint],
    centre: LocalPoint,
) -> Result<f64, LocalizeError> {
    let (mut se, mut sn, mut n) = (0.0, 0.0, 0usize);
    for p in scan_positions {
        if let Ok(b) = bearing_to(centre, *p) {
            let (e, north) = b.unit();
            se += e;
            sn += north;
            n += 1;
        }
    }
    if n < 2 {
        return Err(LocalizeError::TooFewPoses(n));
    }
    Ok((1.0 - se.hypot(sn) / n as f64).clamp(0.0, 1.0))
}

/// Quality summary used by mission planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub region: LocalPoint,
    pub quality: f64,
    pub degenerate: bool,
}

pub fn assess(
    scan_positions: &[LocalPoint],
    centre: LocalPoint,
) -> Result<QualityReport, LocalizeError> {
    let quality = geometry_quality(scan_positions, centre)?;
    Ok(QualityReport {
        region: centre,
        quality,
        degenerate: quality < DEGENERATE_QUALITY,
    })
}

/// One localized region with its ellipse and the mission geometry seen
/// from its centroid. Quality is unknown with fewer than two scan
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSummary {
    pub region: RegionEstimate,
    pub fit: EllipseFit,
    pub quality: Option<f64>,
    pub degenerate: bool,
}

/// Regions of a thresholded map, largest first. Regions too small for an
/// ellipse are dropped.
pub fn localize_map(map: &FusedMap, scan_positions: &[LocalPoint]) -> Vec<RegionSummary> {
    extract_regions(map)
        .into_iter()
        .filter_map(|region| {
            let fit = fit_ellipse(&region, map, scan_positions).ok()?;
            let quality = geometry_quality(scan_positions, region.centroid).ok();
            Some(RegionSummary {
                region,
                fit,
                quality,
                degenerate: quality.is_some_and(|q| q < DEGENERATE_QUALITY),
            })
        })
        .collect()
}

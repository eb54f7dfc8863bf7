//! Expectation density per scan, fusion across scans, thresholding.
//!
//! Every grid cell is scored by how well its bearing from the scan
//! position agrees with the headings at which power was seen:
//!
//! ```text
//! HM(c) = sum_j  p_j * SRP(heading_j - bearing(pose -> c))
//! ```
//!
//! There is no range term, so a single scan produces a fan of rays and the
//! transmitter shows up where the rays of several scans cross. The fused
//! map is the cell-wise mean over scans, and a relative threshold removes
//! the low-level background that accumulates everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::SrpModel;
use crate::geometry::{bearing_diff, bearing_to, Bearing, GeometryError, GridSpec};
use crate::scanops::{HorizonScan, ScanError};

/// Default threshold as a fraction of the fused maximum.
pub const DEFAULT_ALPHA: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no heatmaps to fuse")]
    NoMaps,
    #[error("heatmap grids differ")]
    GridMismatch,
    #[error("threshold fraction {0} outside (0, 1)")]
    BadAlpha(f64),
    #[error("map is all zero")]
    AllZero,
    #[error("heatmap has {got} values for a {expected}-cell grid")]
    SizeMismatch { expected: usize, got: usize },
    #[error("heatmap values must be finite and >= 0")]
    BadValue,
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Grid(#[from] GeometryError),
}

/// How scan powers are projected onto the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// Sum over all steps, each step's pattern weighted by its power.
    #[default]
    Weighted,
    /// One unweighted pattern lobe along the scan's reference heading.
    Unweighted,
}

/// Per-scan expectation density, row-major with `j` (north) as the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(grid: GridSpec) -> Self {
        Heatmap {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Cell-wise mean of several heatmaps, optionally thresholded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedMap {
    pub grid: GridSpec,
    pub n_scans: usize,
    pub threshold_applied: Option<f64>,
    pub values: Vec<f64>,
}

impl FusedMap {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len() {
            return Err(FusionError::SizeMismatch {
                expected: self.grid.len(),
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FusionError::BadValue);
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cell `(i, j)` holding the largest value; first in row-major order on ties.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &v) in self.values.iter().enumerate() {
            if v > 0.0 && best.is_none_or(|b| v > b.1) {
                best = Some((k, v));
            }
        }
        best.map(|(k, _)| (k % self.grid.width, k / self.grid.width))
    }
}

/// Projects one scan onto `grid`. Cells at the scan position itself have
/// no bearing and get zero.
pub fn expectation_density(
    scan: &HorizonScan,
    srp: &SrpModel,
    grid: &GridSpec,
    mode: ProjectionMode,
) -> Result<Heatmap, FusionError> {
    scan.validate()?;
    grid.validate()?;
    let origin = scan.pose.position;
    let active: Vec<(Bearing, f64)> = match mode {
        ProjectionMode::Weighted => scan
            .steps
            .iter()
            .filter(|s| s.rel_power > 0.0)
            .map(|s| (s.heading, s.rel_power))
            .collect(),
        ProjectionMode::Unweighted => vec![(scan.pose.heading, 1.0)],
    };

    let mut values = vec![0.0; grid.len()];
    values
        .par_chunks_mut(grid.width)
        .enumerate()
        .for_each(|(j, row)| {
            for (i, cell) in row.iter_mut().enumerate() {
                let c = grid.center_unchecked(i, j);
                let Ok(b) = bearing_to(origin, c) else {
                    continue;
                };
                *cell = active
                    .iter()
                    .map(|&(h, p)| p * srp.eval(bearing_diff(h, b)))
                    .sum();
            }
        });
    Ok(Heatmap {
        grid: *grid,
        values,
    })
}

/// Correctly rounded mean of a small set of values, independent of their
/// order: values are sorted, summed with an error-free transformation and
/// divided with a residual correction.
fn exact_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &v in values.iter() {
        let s = hi + v;
        let bp = s - hi;
        let err = (hi - (s - bp)) + (v - bp);
        hi = s;
        lo += err;
    }
    let n = values.len() as f64;
    let q = hi / n;
    let r = (-q).mul_add(n, hi) + lo;
    q + r / n
}

/// Cell-wise mean of per-scan heatmaps on identical grids.
pub fn fuse(maps: &[Heatmap]) -> Result<FusedMap, FusionError> {
    let first = maps.first().ok_or(FusionError::NoMaps)?;
    for m in maps {
        if m.grid != first.grid {
            return Err(FusionError::GridMismatch);
        }
        if m.values.len() != m.grid.len() {
            return Err(FusionError::SizeMismatch {
                expected: m.grid.len(),
                got: m.values.len(),
            });
        }
    }
    let mut values = vec![0.0; first.grid.len()];
    values.par_iter_mut().enumerate().for_each_init(
        || Vec::with_capacity(maps.len()),
        |buf, (k, out)| {
            buf.clear();
            buf.extend(maps.iter().map(|m| m.values[k]));
            *out = exact_mean(buf);
        },
    );
    Ok(FusedMap {
        grid: first.grid,
        n_scans: maps.len(),
        threshold_applied: None,
        values,
    })
}

/// Zeroes every cell below `alpha` times the map maximum.
pub fn threshold(map: &FusedMap, alpha: f64) -> Result<FusedMap, FusionError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FusionError::BadAlpha(alpha));
    }
    let max = map.max();
    if !(max > 0.0) {
        return Err(FusionError::AllZero);
    }
    let cut = alpha * max;
    Ok(FusedMap {
        values: map
            .values
            .iter()
            .map(|&v| if v < cut { 0.0 } else { v })
            .collect(),
        threshold_applied: Some(alpha),
        ..map.clone()
    })
}

/// Projects and fuses a set of scans.
pub fn fuse_scans(
    scans: &[HorizonScan],
    srp: &SrpModel,
    grid: &GridSpec,
    mode: ProjectionMode,
) -> Result<FusedMap, FusionError> {
    if scans.is_empty() {
        return Err(FusionError::NoMaps);
    }
    let maps = scans
        .iter()
        .map(|s| expectation_density(s, srp, grid, mode))
        .collect::<Result<Vec<_>, _>>()?;
    fuse(&maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LocalPoint;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::centered(LocalPoint::ORIGIN, 100.0, 5.0).unwrap()
    }

    fn srp() -> SrpModel {
        SrpModel::from_hpbw(60.0).unwrap()
    }

    fn scan(powers: &[f64], pos: LocalPoint) -> HorizonScan {
        let step = 360.0 / powers.len() as f64;
        HorizonScan::from_powers(pos, "L1", step, powers).unwrap()
    }

    #[test]
    fn zero_scan_gives_zero_map() {
        let m = expectation_density(
            &scan(&[0.0; 12], LocalPoint::ORIGIN),
            &srp(),
            &grid(),
            ProjectionMode::Weighted,
        )
        .unwrap();
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_projects_one_lobe() {
        let mut p = [0.0; 4];
        p[1] = 1.0; // 90 degrees
        let g = GridSpec::new(LocalPoint::new(-102.5, -102.5), 5.0, 41, 41).unwrap();
        let m = expectation_density(
            &scan(&p, LocalPoint::ORIGIN),
            &srp(),
            &g,
            ProjectionMode::Weighted,
        )
        .unwrap();
        // cell 20 is centred on the origin
        assert_eq!(m.get(20, 20), 0.0);
        for i in 21..41 {
            assert!((m.get(i, 20) - 1.0).abs() < 1e-12);
        }
        for j in 21..41 {
            assert!((m.get(20, j) - srp().eval(90.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn unweighted_mode_uses_reference_heading() {
        let s = scan(&[0.2, 1.0, 0.5, 0.0], LocalPoint::ORIGIN);
        let g = GridSpec::new(LocalPoint::new(-102.5, -102.5), 5.0, 41, 41).unwrap();
        let m = expectation_density(&s, &srp(), &g, ProjectionMode::Unweighted).unwrap();
        assert!((m.get(30, 20) - 1.0).abs() < 1e-12);
        assert!((m.get(10, 20) - srp().eval(180.0)).abs() < 1e-12);
    }

    #[test]
    fn fuse_examples() {
        let m = expectation_density(
            &scan(&[0.3, 1.0, 0.1, 0.0], LocalPoint::new(7.0, -3.0)),
            &srp(),
            &grid(),
            ProjectionMode::Weighted,
        )
        .unwrap();
        for n in 1..=9 {
            let f = fuse(&vec![m.clone(); n]).unwrap();
            assert_eq!(f.values, m.values, "n = {n}");
            assert_eq!(f.n_scans, n);
        }
        let z = Heatmap::zeros(m.grid);
        let half = fuse(&[m.clone(), z]).unwrap();
        for (a, b) in half.values.iter().zip(&m.values) {
            assert_eq!(*a, b / 2.0);
        }
        let other = Heatmap::zeros(GridSpec::centered(LocalPoint::ORIGIN, 50.0, 5.0).unwrap());
        assert_eq!(fuse(&[m, other]), Err(FusionError::GridMismatch));
        assert_eq!(fuse(&[]), Err(FusionError::NoMaps));
    }

    #[test]
    fn fuse_is_order_independent() {
        let maps: Vec<_> = (0..5)
            .map(|k| {
                let pos = LocalPoint::new(30.0 * k as f64 - 60.0, 15.0 * k as f64);
                let powers: Vec<f64> = (0..12)
                    .map(|s| ((s * 7 + k * 3) % 11) as f64 / 10.0)
                    .collect();
                expectation_density(
                    &scan(&powers, pos),
                    &srp(),
                    &grid(),
                    ProjectionMode::Weighted,
                )
                .unwrap()
            })
            .collect();
        let a = fuse(&maps).unwrap();
        let mut rev = maps.clone();
        rev.reverse();
        rev.swap(1, 3);
        let b = fuse(&rev).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    fn tiny(values: Vec<f64>) -> FusedMap {
        FusedMap {
            grid: GridSpec::new(LocalPoint::ORIGIN, 1.0, values.len(), 1).unwrap(),
            n_scans: 1,
            threshold_applied: None,
            values,
        }
    }

    #[test]
    fn threshold_examples() {
        let t = threshold(&tiny(vec![1.0, 0.6, 0.4]), 0.5).unwrap();
        assert_eq!(t.values, vec![1.0, 0.6, 0.0]);
        assert_eq!(t.threshold_applied, Some(0.5));
        let t = threshold(&tiny(vec![0.3, 0.9999, 1.0, 1.0]), 1.0 - 1e-12).unwrap();
        assert_eq!(t.values, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            threshold(&tiny(vec![0.0; 3]), 0.5),
            Err(FusionError::AllZero)
        );
        assert_eq!(
            threshold(&tiny(vec![1.0]), 1.0),
            Err(FusionError::BadAlpha(1.0))
        );
        assert_eq!(
            threshold(&tiny(vec![1.0]), 0.0),
            Err(FusionError::BadAlpha(0.0))
        );
    }

    #[test]
    fn density_is_range_free_along_rays() {
        let mut p = [0.0; 8];
        p[2] = 1.0;
        let s = scan(&p, LocalPoint::new(2.5, 2.5));
        let m = expectation_density(&s, &srp(), &grid(), ProjectionMode::Weighted).unwrap();
        // cells due north-east of the pose share one bearing
        let vals: Vec<f64> = (21..40).map(|k| m.get(k, k)).collect();
        assert!(vals.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn argmax_reports_first_maximum() {
        let m = tiny(vec![0.1, 0.7, 0.7, 0.2]);
        assert_eq!(m.argmax(), Some((1, 0)));
        assert_eq!(tiny(vec![0.0; 2]).argmax(), None);
    }

    proptest! {
        #[test]
        fn mean_of_copies_is_exact(x in 0f64..1e3, n in 1usize..17) {
            let mut v = vec![x; n];
            prop_assert_eq!(exact_mean(&mut v), x);
        }

        #[test]
        fn projection_is_linear(
            p in proptest::collection::vec(0f64..1.0, 12),
            q in proptest::collection::vec(0f64..1.0, 12),
            a in 0f64..2.0,
            b in 0f64..2.0,
        ) {
            // unnormalized scans so the combination is not renormalized
            let mk = |v: Vec<f64>| {
                let mut s = scan(&[1.0; 12], LocalPoint::new(12.0, -7.0));
                for (st, x) in s.steps.iter_mut().zip(v) { st.rel_power = x; }
                s
            };
            let g = GridSpec::centered(LocalPoint::ORIGIN, 50.0, 5.0).unwrap();
            let ed = |s: &HorizonScan| {
                let mut h = Heatmap::zeros(g);
                let bare = s.clone();
                for (j, row) in h.values.chunks_mut(g.width).enumerate() {
                    for (i, cell) in row.iter_mut().enumerate() {
                        let c = g.cell_center(i, j).unwrap();
                        if let Ok(bb) = bearing_to(bare.pose.position, c) {
                            *cell = bare.steps.iter().map(|st| st.rel_power * srp().eval(bearing_diff(st.heading, bb))).sum();
                        }
                    }
                }
                h
            };
            let combo: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
            let lhs = ed(&mk(combo));
            let (ep, eq) = (ed(&mk(p.clone())), ed(&mk(q.clone())));
            for k in 0..lhs.values.len() {
                prop_assert!((lhs.values[k] - (a * ep.values[k] + b * eq.values[k])).abs() <= 1e-12 * (1.0 + lhs.values[k]));
            }
            // the library path agrees with the direct sum on the normalized scan
            let peak = p.iter().copied().fold(0.0, f64::max);
            if peak > 0.0 {
                let s = HorizonScan::from_powers(LocalPoint::new(12.0, -7.0), "L1", 30.0, &p).unwrap();
                let lib = expectation_density(&s, &srp(), &g, ProjectionMode::Weighted).unwrap();
                for k in 0..lib.values.len() {
                    prop_assert!((lib.values[k] - ep.values[k] / peak).abs() <= 1e-12 * (1.0 + lib.values[k]));
                }
            }
        }

        #[test]
        fn rotation_equivariance(delta_steps in 0usize..24, r in 10f64..90.0, phi in 0f64..360.0) {
            let powers: Vec<f64> = (0..24).map(|k| ((k * 5) % 7) as f64 / 6.0).collect();
            let base = scan(&powers, LocalPoint::ORIGIN);
            let mut rotated = base.clone();
            for (k, st) in rotated.steps.iter_mut().enumerate() {
                st.rel_power = base.steps[(k + 24 - delta_steps) % 24].rel_power;
            }
            let delta = delta_steps as f64 * 15.0;
            // point grids holding a single query cell centre each
            let at = |s: &HorizonScan, b: f64| {
                let q = LocalPoint::ORIGIN.offset(Bearing::new(b), r);
                let g = GridSpec::new(LocalPoint::new(q.east - 0.5, q.north - 0.5), 1.0, 1, 1).unwrap();
                expectation_density(s, &srp(), &g, ProjectionMode::Weighted).unwrap().values[0]
            };
            prop_assert!((at(&base, phi) - at(&rotated, phi + delta)).abs() < 1e-9);
        }

        #[test]
        fn threshold_is_idempotent(v in proptest::collection::vec(0f64..1.0, 1..50), alpha in 0.01f64..0.99) {
            prop_assume!(v.iter().any(|x| *x > 0.0));
            let once = threshold(&tiny(v), alpha).unwrap();
            let twice = threshold(&once, alpha).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}

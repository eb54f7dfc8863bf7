//! Local planar frame, compass bearings and grid addressing.
//!
//! Everything downstream works in a flat east/north frame anchored at a
//! declared origin. Bearings follow the compass convention: 0° is local
//! north and angles grow clockwise, so `atan2(d_east, d_north)` gives the
//! bearing from one point to another.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the equirectangular conversion.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Upper bound on grid size accepted by [`GridSpec::new`].
pub const MAX_GRID_CELLS: usize = 16 * 1024 * 1024;

/// Default grid resolution in meters per cell.
pub const DEFAULT_RESOLUTION_M: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bearing is undefined between coincident points")]
    CoincidentPoints,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cell ({i}, {j}) outside {width}x{height} grid")]
    CellOutOfRange {
        i: usize,
        j: usize,
        width: usize,
        height: usize,
    },
}

/// A point in the local east/north plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub east: f64,
    pub north: f64,
}

impl LocalPoint {
    pub const ORIGIN: LocalPoint = LocalPoint {
        east: 0.0,
        north: 0.0,
    };

    pub fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }

    pub fn is_finite(&self) -> bool {
        self.east.is_finite() && self.north.is_finite()
    }

    pub fn distance(&self, other: &LocalPoint) -> f64 {
        (self.east - other.east).hypot(self.north - other.north)
    }

    /// Point reached by moving `distance` meters along `bearing`.
    pub fn offset(&self, bearing: Bearing, distance: f64) -> LocalPoint {
        let (s, c) = bearing.degrees().to_radians().sin_cos();
        LocalPoint::new(self.east + distance * s, self.north + distance * c)
    }
}

/// Compass bearing in degrees, always held in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Bearing(f64);

impl Bearing {
    pub const NORTH: Bearing = Bearing(0.0);

    pub fn new(degrees: f64) -> Self {
        let mut d = degrees.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if d >= 360.0 {
            d = 0.0;
        }
        Bearing(d)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn rotate(self, delta_deg: f64) -> Self {
        Bearing::new(self.0 + delta_deg)
    }

    /// Unit vector (east, north) pointing along the bearing.
    pub fn unit(self) -> (f64, f64) {
        let (s, c) = self.0.to_radians().sin_cos();
        (s, c)
    }
}

impl From<f64> for Bearing {
    fn from(d: f64) -> Self {
        Bearing::new(d)
    }
}

impl From<Bearing> for f64 {
    fn from(b: Bearing) -> f64 {
        b.0
    }
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_signed(degrees: f64) -> f64 {
    let mut d = degrees.rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Compass bearing from `from` towards `to`.
pub fn bearing_to(from: LocalPoint, to: LocalPoint) -> Result<Bearing, GeometryError> {
    if !from.is_finite() || !to.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let de = to.east - from.east;
    let dn = to.north - from.north;
    if de == 0.0 && dn == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    Ok(Bearing::new(de.atan2(dn).to_degrees()))
}

/// Signed difference `a - b` in `(-180, 180]`.
pub fn bearing_diff(a: Bearing, b: Bearing) -> f64 {
    wrap_signed(a.degrees() - b.degrees())
}

/// Circular mean of a set of bearings, `None` when the resultant vanishes.
pub fn circular_mean(bearings: impl IntoIterator<Item = Bearing>) -> Option<Bearing> {
    let (mut se, mut sn, mut n) = (0.0, 0.0, 0usize);
    for b in bearings {
        let (e, north) = b.unit();
        se += e;
        sn += north;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let r = se.hypot(sn) / n as f64;
    if r < 1e-12 {
        return None;
    }
    Some(Bearing::new(se.atan2(sn).to_degrees()))
}

/// Regular grid over the local plane. `origin` is the south-west corner of
/// cell `(0, 0)`; `i` counts columns eastwards and `j` rows northwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: LocalPoint,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(
        origin: LocalPoint,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let g = GridSpec {
            origin,
            resolution,
            width,
            height,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid of `resolution` cells covering `[center - half_extent, center + half_extent]`
    /// on both axes.
    pub fn centered(
        center: LocalPoint,
        half_extent: f64,
        resolution: f64,
    ) -> Result<Self, GeometryError> {
        if !(half_extent > 0.0) || !(resolution > 0.0) {
            return Err(GeometryError::InvalidGrid(
                "extent and resolution must be positive".into(),
            ));
        }
        let cells = ((2.0 * half_extent) / resolution).ceil().max(1.0) as usize;
        let span = cells as f64 * resolution;
        let origin = LocalPoint::new(center.east - span / 2.0, center.north - span / 2.0);
        GridSpec::new(origin, resolution, cells, cells)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.origin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(GeometryError::InvalidGrid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidGrid("empty grid".into()));
        }
        match self.width.checked_mul(self.height) {
            Some(n) if n <= MAX_GRID_CELLS => Ok(()),
            _ => Err(GeometryError::InvalidGrid(format!(
                "{}x{} exceeds the {MAX_GRID_CELLS}-cell limit",
                self.width, self.height
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index of cell `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Result<LocalPoint, GeometryError> {
        if i >= self.width || j >= self.height {
            return Err(GeometryError::CellOutOfRange {
                i,
                j,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.center_unchecked(i, j))
    }

    pub(crate) fn center_unchecked(&self, i: usize, j: usize) -> LocalPoint {
        LocalPoint::new(
            self.origin.east + (i as f64 + 0.5) * self.resolution,
            self.origin.north + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn point_to_cell(&self, p: LocalPoint) -> Option<(usize, usize)> {
        let fi = ((p.east - self.origin.east) / self.resolution).floor();
        let fj = ((p.north - self.origin.north) / self.resolution).floor();
        if !(fi >= 0.0 && fj >= 0.0) {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    /// East/north extent as `(min, max)` corners.
    pub fn bounds(&self) -> (LocalPoint, LocalPoint) {
        let max = LocalPoint::new(
            self.origin.east + self.width as f64 * self.resolution,
            self.origin.north + self.height as f64 * self.resolution,
        );
        (self.origin, max)
    }

    pub fn is_border(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.width || j + 1 == self.height
    }
}

/// Geodetic anchor of the local frame. Conversion is equirectangular, which
/// is adequate over a few kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoOrigin {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Self {
        Self { lat_deg, lon_deg }
    }

    /// Returns `(lon_deg, lat_deg)` for a local point.
    pub fn to_geodetic(&self, p: LocalPoint) -> (f64, f64) {
        let lat = self.lat_deg + (p.north / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon_deg
            + (p.east / (EARTH_RADIUS_M * self.lat_deg.to_radians().cos())).to_degrees();
        (lon, lat)
    }

    pub fn to_local(&self, lon_deg: f64, lat_deg: f64) -> LocalPoint {
        let north = (lat_deg - self.lat_deg).to_radians() * EARTH_RADIUS_M;
        let east = (lon_deg - self.lon_deg).to_radians()
            * EARTH_RADIUS_M
            * self.lat_deg.to_radians().cos();
        LocalPoint::new(east, north)
    }
}

//! Spatial features of on-the-way outlet choice.
//!
//! Everything here is derived from raw trip geometry: the detour incurred by
//! visiting an outlet, the point along a trip where the purchase need arises,
//! local competition counts, and a Gaussian-kernel agglomeration index over
//! surrounding retail opportunities. A [`Market`] bundles the outlets, the
//! opportunity zones and a [`DistanceProvider`] into the spatial universe the
//! rest of the crate works over.

use std::collections::HashMap;

use thiserror::Error;

pub mod moran;

pub use moran::{morans_i, MoranOptions, MoranResult, WeightScheme};

/// Planar coordinate in kilometres.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Straight-line distance to `other`, in the same units as the coordinates.
    pub fn euclidean(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at fraction `t` of the segment from `self` to `other` (`t` clamped to [0, 1]).
    pub fn lerp(&self, other: Point, t: f64) -> Point {
        let t = t.clamp(0.0, 1.0);
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

/// A retail outlet (gas station) with a composite service-quality score.
#[derive(Clone, Debug)]
pub struct Outlet {
    pub id: String,
    pub location: Point,
    pub quality: f64,
}

/// A zone of the study area holding a count of retail opportunities.
#[derive(Clone, Debug)]
pub struct Zone {
    pub id: String,
    pub centroid: Point,
    pub opportunities: u32,
}

/// Built-in distance metrics for when no pairwise matrix is supplied.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Manhattan / taxicab distance.
    Rectilinear,
}

impl Metric {
    fn distance(&self, a: Point, b: Point) -> f64 {
        match self {
            Metric::Euclidean => a.euclidean(b),
            Metric::Rectilinear => (a.x - b.x).abs() + (a.y - b.y).abs(),
        }
    }
}

/// A location that may carry a name resolvable in a distance matrix.
///
/// Matrix-mode providers can only measure between named locations; free
/// points are rejected, which is how "no arbitrary points in matrix mode"
/// is enforced.
#[derive(Copy, Clone, Debug)]
pub struct Site<'a> {
    pub id: Option<&'a str>,
    pub point: Point,
}

impl<'a> Site<'a> {
    pub fn named(id: &'a str, point: Point) -> Self {
        Self { id: Some(id), point }
    }

    pub fn free(point: Point) -> Self {
        Self { id: None, point }
    }
}

/// Pairwise distances over named locations, loaded from a matrix file.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    km: Vec<f64>,
    /// Number of (i, j) pairs with d(i,j) != d(j,i). One-way streets exist,
    /// so asymmetry is tolerated and surfaced as a warning at load time.
    pub asymmetric_pairs: usize,
}

impl DistanceMatrix {
    pub fn new(ids: Vec<String>, km: Vec<f64>) -> Result<Self, SpatialError> {
        let n = ids.len();
        if km.len() != n * n {
            return Err(SpatialError::MatrixShape { ids: n, cells: km.len() });
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(SpatialError::DuplicateId { id: id.clone() });
            }
        }
        for i in 0..n {
            if km[i * n + i] != 0.0 {
                return Err(SpatialError::MatrixDiagonal { id: ids[i].clone() });
            }
        }
        if let Some(bad) = km.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(SpatialError::MatrixEntry {
                row: ids[bad / n].clone(),
                col: ids[bad % n].clone(),
            });
        }
        let mut asymmetric_pairs = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if km[i * n + j] != km[j * n + i] {
                    asymmetric_pairs += 1;
                }
            }
        }
        Ok(Self { ids, index, km, asymmetric_pairs })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn lookup(&self, a: &str, b: &str) -> Result<f64, SpatialError> {
        let i = *self.index.get(a).ok_or_else(|| SpatialError::UnknownLocation { id: a.into() })?;
        let j = *self.index.get(b).ok_or_else(|| SpatialError::UnknownLocation { id: b.into() })?;
        Ok(self.km[i * self.ids.len() + j])
    }
}

/// Total distance function over sites, in kilometres.
#[derive(Clone, Debug)]
pub enum DistanceProvider {
    /// Built-in metric scaled by a constant factor (e.g. a road circuity factor).
    Metric { metric: Metric, scale: f64 },
    /// Pairwise matrix over named locations.
    Matrix(DistanceMatrix),
}

impl DistanceProvider {
    pub fn euclidean() -> Self {
        DistanceProvider::Metric { metric: Metric::Euclidean, scale: 1.0 }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, DistanceProvider::Matrix(_))
    }

    /// Distance between two sites. Matrix mode requires both sites to be named.
    pub fn between(&self, a: Site<'_>, b: Site<'_>) -> Result<f64, SpatialError> {
        match self {
            DistanceProvider::Metric { metric, scale } => Ok(scale * metric.distance(a.point, b.point)),
            DistanceProvider::Matrix(m) => match (a.id, b.id) {
                (Some(a), Some(b)) => {
                    if a == b {
                        Ok(0.0)
                    } else {
                        m.lookup(a, b)
                    }
                }
                _ => Err(SpatialError::UnnamedInMatrixMode),
            },
        }
    }
}

/// The spatial universe choices are modeled over.
#[derive(Clone, Debug)]
pub struct Market {
    pub outlets: Vec<Outlet>,
    pub zones: Vec<Zone>,
    pub distances: DistanceProvider,
    /// Radius defining a "local competitor", km. Boundary is inclusive.
    pub comp_radius: f64,
    /// Travel-time scale of the agglomeration kernel, minutes.
    pub t_star: f64,
    /// Converts distance to travel time, km per minute.
    pub speed: f64,
    comp: Vec<u32>,
    aggl: Vec<f64>,
    outlet_index: HashMap<String, usize>,
    zone_index: HashMap<String, usize>,
}

impl Market {
    pub fn new(
        outlets: Vec<Outlet>,
        zones: Vec<Zone>,
        distances: DistanceProvider,
        comp_radius: f64,
        t_star: f64,
        speed: f64,
    ) -> Result<Self, SpatialError> {
        if !(comp_radius > 0.0) {
            return Err(SpatialError::InvalidParameter { name: "comp_radius", value: comp_radius });
        }
        if !(t_star > 0.0) {
            return Err(SpatialError::InvalidParameter { name: "t_star", value: t_star });
        }
        if !(speed > 0.0) {
            return Err(SpatialError::InvalidParameter { name: "speed", value: speed });
        }
        let mut outlet_index = HashMap::with_capacity(outlets.len());
        for (i, o) in outlets.iter().enumerate() {
            if !o.location.is_finite() || !o.quality.is_finite() {
                return Err(SpatialError::NonFinite { id: o.id.clone() });
            }
            if outlet_index.insert(o.id.clone(), i).is_some() {
                return Err(SpatialError::DuplicateId { id: o.id.clone() });
            }
        }
        let mut zone_index = HashMap::with_capacity(zones.len());
        for (i, z) in zones.iter().enumerate() {
            if !z.centroid.is_finite() {
                return Err(SpatialError::NonFinite { id: z.id.clone() });
            }
            if zone_index.insert(z.id.clone(), i).is_some() {
                return Err(SpatialError::DuplicateId { id: z.id.clone() });
            }
        }
        let mut market = Self {
            outlets,
            zones,
            distances,
            comp_radius,
            t_star,
            speed,
            comp: Vec::new(),
            aggl: Vec::new(),
            outlet_index,
            zone_index,
        };
        market.comp = (0..market.outlets.len())
            .map(|i| market.local_competition(i))
            .collect::<Result<_, _>>()?;
        market.aggl = (0..market.outlets.len())
            .map(|i| market.agglomeration_index(i))
            .collect::<Result<_, _>>()?;
        Ok(market)
    }

    pub fn outlet_index(&self, id: &str) -> Option<usize> {
        self.outlet_index.get(id).copied()
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zone_index.get(id).copied()
    }

    pub fn outlet_site(&self, idx: usize) -> Site<'_> {
        let o = &self.outlets[idx];
        Site::named(&o.id, o.location)
    }

    pub fn zone_site(&self, idx: usize) -> Site<'_> {
        let z = &self.zones[idx];
        Site::named(&z.id, z.centroid)
    }

    /// Precomputed local-competition count for outlet `idx`.
    pub fn comp(&self, idx: usize) -> u32 {
        self.comp[idx]
    }

    /// Precomputed agglomeration index for outlet `idx`.
    pub fn aggl(&self, idx: usize) -> f64 {
        self.aggl[idx]
    }

    /// Number of other outlets within `comp_radius` of outlet `idx` (boundary inclusive).
    pub fn local_competition(&self, idx: usize) -> Result<u32, SpatialError> {
        let own = self.outlet_site(idx);
        let mut count = 0;
        for (j, other) in self.outlets.iter().enumerate() {
            if j == idx {
                continue;
            }
            let d = self.distances.between(own, Site::named(&other.id, other.location))?;
            if d <= self.comp_radius {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Gaussian-kernel accessibility of outlet `idx` to surrounding retail
    /// opportunities: sum over zones of `opportunities * exp(-(r/T*)^2 / 2)`
    /// with `r` the travel time to the zone centroid in minutes.
    pub fn agglomeration_index(&self, idx: usize) -> Result<f64, SpatialError> {
        let own = self.outlet_site(idx);
        let mut total = 0.0;
        for (zi, zone) in self.zones.iter().enumerate() {
            let km = self.distances.between(own, self.zone_site(zi))?;
            let minutes = km / self.speed;
            total += zone.opportunities as f64 * gaussian_kernel(minutes, self.t_star);
        }
        Ok(total)
    }
}

/// `exp(-(r/t_star)^2 / 2)`.
pub fn gaussian_kernel(r: f64, t_star: f64) -> f64 {
    let u = r / t_star;
    (-u * u / 2.0).exp()
}

/// Relative extra distance of deviating via `outlet` on the way from
/// `position` to `destination`:
/// `(d(pos,outlet) + d(outlet,dest) - d(pos,dest)) / d(pos,dest)`.
///
/// Nonnegative whenever the provider satisfies the triangle inequality;
/// matrix-mode data can legitimately produce small negative values, which
/// callers surface as data warnings rather than clamping.
pub fn detour_fraction(
    position: Site<'_>,
    outlet: Site<'_>,
    destination: Site<'_>,
    d: &DistanceProvider,
) -> Result<f64, SpatialError> {
    let remaining = d.between(position, destination)?;
    if remaining == 0.0 {
        return Err(SpatialError::DegenerateTrip);
    }
    let via = d.between(position, outlet)? + d.between(outlet, destination)?;
    Ok((via - remaining) / remaining)
}

/// Location from which a consumer evaluates the outlets.
///
/// Consumers aware of the need before departing evaluate from the origin.
/// Consumers who became aware en route are placed `speed * minutes_aware`
/// back from the chosen outlet along the straight origin-to-outlet segment,
/// clamped at the origin when the reported time overshoots the trip.
pub fn point_of_awareness(
    origin: Point,
    chosen_outlet: Point,
    aware_before: bool,
    minutes_aware: f64,
    d: &DistanceProvider,
    speed: f64,
) -> Result<Point, SpatialError> {
    if aware_before {
        return Ok(origin);
    }
    let segment = match d {
        DistanceProvider::Metric { metric, scale } => scale * metric.distance(origin, chosen_outlet),
        DistanceProvider::Matrix(_) => return Err(SpatialError::UnnamedInMatrixMode),
    };
    if segment == 0.0 {
        return Ok(origin);
    }
    let back = (speed * minutes_aware.max(0.0)).min(segment);
    Ok(chosen_outlet.lerp(origin, back / segment))
}

#[derive(Debug, Error)]
pub enum SpatialError {
    /// Consumer position coincides with the destination; the detour ratio is undefined.
    #[error("degenerate trip: position equals destination, detour undefined")]
    DegenerateTrip,
    #[error("all values are equal; Moran's I is undefined")]
    ZeroVariance,
    #[error("need at least 3 sites for Moran's I, got {n}")]
    TooFewSites { n: usize },
    #[error("duplicate location in Moran input at index {index}")]
    DuplicateLocation { index: usize },
    #[error("value/location lengths differ: {values} values, {locations} locations")]
    LengthMismatch { values: usize, locations: usize },
    #[error("matrix-mode distances require named locations")]
    UnnamedInMatrixMode,
    #[error("unknown location id {id:?} in distance matrix")]
    UnknownLocation { id: String },
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
    #[error("distance matrix has {cells} cells for {ids} ids")]
    MatrixShape { ids: usize, cells: usize },
    #[error("distance matrix diagonal for {id:?} is nonzero")]
    MatrixDiagonal { id: String },
    #[error("negative or non-finite distance between {row:?} and {col:?}")]
    MatrixEntry { row: String, col: String },
    #[error("non-finite coordinates or quality for {id:?}")]
    NonFinite { id: String },
    #[error("{name} must be positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

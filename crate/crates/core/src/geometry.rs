//! Convex polytopes in vertex + facet form and the exact geometric primitives
//! the energy formulas need: half-space clipping, volumes and facet areas,
//! intersections with translates, splitting by an interface plane, planar
//! cross-sections and outward facet offsets.

use serde::{Deserialize, Serialize};

use crate::lattice::{miller_reduce, BoundaryRule, BravaisLattice, MillerVector};
use crate::{Error, Result, Vec3};

/// Planarity and coincidence tolerance, relative to the polytope diameter.
pub const GEOMETRY_TOLERANCE: f64 = 1e-10;

/// A bounded region that lattice points can be tested against.
pub trait Region: Sync {
    /// Axis-aligned bounding box, or `None` when unbounded.
    fn bounds(&self) -> Option<(Vec3, Vec3)>;
    fn diameter(&self) -> f64;
    fn volume(&self) -> f64;
    /// Membership under a boundary rule; points within `tol` of the boundary
    /// are boundary points.
    fn contains(&self, x: &Vec3, rule: &BoundaryRule, tol: f64) -> bool;
}

/// `{x : normal · x <= offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!("bad half-space normal {normal:?}")));
        }
        Ok(HalfSpace { normal, offset })
    }

    /// Same half-space with a unit normal.
    pub fn normalized(&self) -> HalfSpace {
        let len = self.normal.norm();
        HalfSpace {
            normal: self.normal / len,
            offset: self.offset / len,
        }
    }

    pub fn complement(&self) -> HalfSpace {
        HalfSpace {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// A polygonal face of a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Outward unit normal.
    pub normal: Vec3,
    /// `normal · x` for points `x` of the facet.
    pub offset: f64,
    pub area: f64,
    /// Vertices, counter-clockwise seen from outside.
    pub ring: Vec<Vec3>,
    pub miller: Option<MillerVector>,
    /// Index of the defining half-space when built by [`ConvexPolytope::from_halfspaces`].
    pub source: Option<usize>,
}

/// A bounded convex polytope. An empty polytope (zero volume) is a valid value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    vertices: Vec<Vec3>,
    facets: Vec<Facet>,
    volume: f64,
    diameter: f64,
}

/// Volume and per-facet `(area, unit normal)` of a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub volume: f64,
    pub facets: Vec<(f64, Vec3)>,
}

fn ring_centroid(ring: &[Vec3]) -> Vec3 {
    ring.iter().fold(Vec3::zeros(), |a, b| a + b) / ring.len() as f64
}

fn ring_area(ring: &[Vec3], normal: &Vec3) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let c = ring_centroid(ring);
    let mut a = 0.0;
    for i in 0..ring.len() {
        let p = ring[i] - c;
        let q = ring[(i + 1) % ring.len()] - c;
        a += normal.dot(&p.cross(&q));
    }
    0.5 * a
}

/// Orthonormal `(u, v)` with `u × v = n`.
fn plane_frame(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.6 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

fn dedupe(points: &[Vec3], tol: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - p).norm() <= tol) {
            out.push(*p);
        }
    }
    out
}

/// Removes consecutive near-duplicates from a closed ring.
fn dedupe_ring(ring: Vec<Vec3>, tol: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(ring.len());
    for p in ring {
        if out.last().is_none_or(|q| (q - p).norm() > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= tol {
        out.pop();
    }
    out
}

/// Sorts coplanar points of a convex polygon counter-clockwise about `n`.
fn order_ring(points: Vec<Vec3>, n: &Vec3) -> Vec<Vec3> {
    let c = ring_centroid(&points);
    let (u, v) = plane_frame(n);
    let mut keyed: Vec<(f64, Vec3)> = points
        .into_iter()
        .map(|p| {
            let d = p - c;
            (d.dot(&v).atan2(d.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Sutherland–Hodgman clip of a ring against `n·x <= d`, collecting the
/// points that land on the cutting plane.
fn clip_ring(ring: &[Vec3], n: &Vec3, d: f64, tol: f64, on_plane: &mut Vec<Vec3>) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(ring.len() + 2);
    for i in 0..ring.len() {
        let cur = ring[i];
        let next = ring[(i + 1) % ring.len()];
        let dc = n.dot(&cur) - d;
        let dn = n.dot(&next) - d;
        if dc <= tol {
            out.push(cur);
            if dc >= -tol {
                on_plane.push(cur);
            }
        }
        if (dc < -tol && dn > tol) || (dc > tol && dn < -tol) {
            let t = dc / (dc - dn);
            let p = cur + (next - cur) * t;
            out.push(p);
            on_plane.push(p);
        }
    }
    out
}

impl ConvexPolytope {
    pub fn empty() -> Self {
        ConvexPolytope {
            vertices: Vec::new(),
            facets: Vec::new(),
            volume: 0.0,
            diameter: 0.0,
        }
    }

    fn assemble(facets: Vec<Facet>, tol: f64) -> Self {
        if facets.len() < 4 {
            return Self::empty();
        }
        let all: Vec<Vec3> = facets.iter().flat_map(|f| f.ring.iter().copied()).collect();
        let vertices = dedupe(&all, tol);
        let reference = ring_centroid(&vertices);
        let volume: f64 = facets
            .iter()
            .map(|f| f.area * f.normal.dot(&(ring_centroid(&f.ring) - reference)) / 3.0)
            .sum();
        let mut diameter: f64 = 0.0;
        for (i, p) in vertices.iter().enumerate() {
            for q in &vertices[i + 1..] {
                diameter = diameter.max((p - q).norm());
            }
        }
        if volume <= tol * tol * diameter.max(tol) {
            return Self::empty();
        }
        ConvexPolytope {
            vertices,
            facets,
            volume,
            diameter,
        }
    }

    /// Axis-aligned box `[min, max]`.
    pub fn from_box(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|i| !(max[i] > min[i]) || !min[i].is_finite() || !max[i].is_finite()) {
            return Err(Error::DegeneratePolytope(format!("box {min:?}..{max:?} has no interior")));
        }
        let mut facets = Vec::with_capacity(6);
        for axis in 0..3 {
            for (sign, value) in [(-1.0, min[axis]), (1.0, max[axis])] {
                let mut normal = Vec3::zeros();
                normal[axis] = sign;
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut pts = Vec::with_capacity(4);
                for (sa, sb) in [(false, false), (true, false), (true, true), (false, true)] {
                    let mut p = Vec3::zeros();
                    p[axis] = value;
                    p[a] = if sa { max[a] } else { min[a] };
                    p[b] = if sb { max[b] } else { min[b] };
                    pts.push(p);
                }
                let ring = order_ring(pts, &normal);
                let area = ring_area(&ring, &normal);
                facets.push(Facet {
                    normal,
                    offset: sign * value,
                    area,
                    ring,
                    miller: None,
                    source: None,
                });
            }
        }
        let tol = GEOMETRY_TOLERANCE * (max - min).norm();
        Ok(Self::assemble(facets, tol))
    }

    /// `[0, 1]³` with the Miller normals of the integer lattice attached.
    pub fn unit_cube() -> Self {
        Self::from_box(Vec3::zeros(), Vec3::repeat(1.0))
            .expect("unit cube")
            .with_miller_normals(&BravaisLattice::integer())
    }

    /// Intersection of half-spaces; errors when empty or unbounded.
    pub fn from_halfspaces(halfspaces: &[HalfSpace]) -> Result<Self> {
        let hs: Vec<HalfSpace> = halfspaces.iter().map(|h| h.normalized()).collect();
        if hs.iter().any(|h| !h.normal.iter().all(|c| c.is_finite()) || !h.offset.is_finite()) {
            return Err(Error::InvalidArgument("non-finite half-space".into()));
        }
        let scale = 1.0 + hs.iter().map(|h| h.offset.abs()).fold(0.0, f64::max);
        // feasible vertices from triple intersections give a starting box
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut found = false;
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                for k in j + 1..hs.len() {
                    let m = crate::Mat3::from_rows(&[
                        hs[i].normal.transpose(),
                        hs[j].normal.transpose(),
                        hs[k].normal.transpose(),
                    ]);
                    if m.determinant().abs() < 1e-12 {
                        continue;
                    }
                    let Some(x) = m.try_inverse().map(|inv| inv * Vec3::new(hs[i].offset, hs[j].offset, hs[k].offset))
                    else {
                        continue;
                    };
                    let ftol = 1e-9 * (1.0 + x.norm());
                    if hs.iter().all(|h| h.normal.dot(&x) - h.offset <= ftol) {
                        lo = lo.inf(&x);
                        hi = hi.sup(&x);
                        found = true;
                    }
                }
            }
        }
        let (center, half) = if found {
            ((lo + hi) * 0.5, ((hi - lo).amax()).max(1e-3 * scale) * 2.0)
        } else {
            (Vec3::zeros(), 1e3 * scale)
        };
        let mut poly = Self::from_box(center - Vec3::repeat(half), center + Vec3::repeat(half))?;
        for (i, h) in hs.iter().enumerate() {
            poly = poly.clip_impl(h, Some(i), None).0;
            if poly.is_empty() {
                return Err(Error::DegeneratePolytope("half-space intersection is empty".into()));
            }
        }
        if poly.facets.iter().any(|f| f.source.is_none()) {
            return Err(Error::UnboundedRegion);
        }
        Ok(poly)
    }

    /// Convex hull of a point set with at least four non-coplanar points.
    pub fn from_hull(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::DegeneratePolytope("hull needs at least four points".into()));
        }
        let mut extent: f64 = 0.0;
        for p in points {
            for q in points {
                extent = extent.max((p - q).norm());
            }
        }
        let tol = GEOMETRY_TOLERANCE * extent.max(f64::MIN_POSITIVE);
        let mut planes: Vec<HalfSpace> = Vec::new();
        let n = points.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
                    if normal.norm() <= tol * extent {
                        continue;
                    }
                    let mut normal = normal.normalize();
                    let mut offset = normal.dot(&points[i]);
                    let (mut above, mut below) = (false, false);
                    for p in points {
                        let s = normal.dot(p) - offset;
                        above |= s > tol;
                        below |= s < -tol;
                    }
                    if above && below {
                        continue;
                    }
                    if above {
                        normal = -normal;
                        offset = -offset;
                    }
                    if !planes
                        .iter()
                        .any(|h| (h.normal - normal).norm() < 1e-9 && (h.offset - offset).abs() <= tol)
                    {
                        planes.push(HalfSpace { normal, offset });
                    }
                }
            }
        }
        if planes.len() < 4 {
            return Err(Error::DegeneratePolytope("points are coplanar".into()));
        }
        Self::from_halfspaces(&planes)
    }

    /// Attaches Miller normals to every facet whose normal is rational with
    /// respect to `lattice` (components up to 1000).
    pub fn with_miller_normals(mut self, lattice: &BravaisLattice) -> Self {
        for f in &mut self.facets {
            f.miller = detect_miller(&f.normal, lattice);
        }
        self
    }

    /// True when every vertex is a lattice point and every facet carries a
    /// Miller normal.
    pub fn is_lattice_polyhedron(&self, lattice: &BravaisLattice) -> bool {
        !self.is_empty()
            && self.facets.iter().all(|f| f.miller.is_some())
            && self.vertices.iter().all(|v| {
                let c = lattice.to_lattice_coords(v);
                (c - c.map(|x| x.round())).amax() < 1e-9
            })
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn surface_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    pub fn halfspaces(&self) -> Vec<HalfSpace> {
        self.facets
            .iter()
            .map(|f| HalfSpace {
                normal: f.normal,
                offset: f.offset,
            })
            .collect()
    }

    fn tolerance(&self) -> f64 {
        GEOMETRY_TOLERANCE * self.diameter.max(f64::MIN_POSITIVE)
    }

    /// Intersection with a half-space; empty when nothing of positive volume remains.
    pub fn clip(&self, hs: &HalfSpace) -> ConvexPolytope {
        self.clip_impl(&hs.normalized(), None, None).0
    }

    /// Returns the clipped polytope and the index of the new cap facet.
    fn clip_impl(&self, hs: &HalfSpace, source: Option<usize>, miller: Option<MillerVector>) -> (ConvexPolytope, Option<usize>) {
        if self.is_empty() {
            return (Self::empty(), None);
        }
        let hs = hs.normalized();
        let (n, d) = (hs.normal, hs.offset);
        let tol = self.tolerance();
        let dists: Vec<f64> = self.vertices.iter().map(|v| n.dot(v) - d).collect();
        let max = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        if max <= tol {
            return (self.clone(), None);
        }
        if min >= -tol {
            return (Self::empty(), None);
        }
        let mut facets = Vec::with_capacity(self.facets.len() + 1);
        let mut cap_points = Vec::new();
        for f in &self.facets {
            let ring = dedupe_ring(clip_ring(&f.ring, &n, d, tol, &mut cap_points), tol);
            if ring.len() < 3 {
                continue;
            }
            let area = ring_area(&ring, &f.normal);
            if area > tol * tol {
                facets.push(Facet {
                    ring,
                    area,
                    ..f.clone()
                });
            }
        }
        let cap_points = dedupe(&cap_points, tol);
        let mut cap = None;
        if cap_points.len() >= 3 {
            let ring = order_ring(cap_points, &n);
            let area = ring_area(&ring, &n);
            if area > tol * tol {
                cap = Some(facets.len());
                facets.push(Facet {
                    normal: n,
                    offset: d,
                    area,
                    ring,
                    miller,
                    source,
                });
            }
        }
        let poly = Self::assemble(facets, tol);
        if poly.is_empty() {
            (poly, None)
        } else {
            (poly, cap)
        }
    }

    /// Volume and facet data.
    pub fn measure(&self) -> Measure {
        Measure {
            volume: self.volume,
            facets: self.facets.iter().map(|f| (f.area, f.normal)).collect(),
        }
    }

    /// `Ω ∩ (Ω − shift)`, the set of `x` with both `x` and `x + shift` in `Ω`.
    pub fn intersect_translate(&self, shift: &Vec3) -> ConvexPolytope {
        self.intersect_translated(self, shift)
    }

    /// `self ∩ (other − shift)`: points `x` of `self` with `x + shift` in `other`.
    pub fn intersect_translated(&self, other: &ConvexPolytope, shift: &Vec3) -> ConvexPolytope {
        if other.is_empty() {
            return Self::empty();
        }
        let mut out = self.clone();
        for f in &other.facets {
            let hs = HalfSpace {
                normal: f.normal,
                offset: f.offset - f.normal.dot(shift),
            };
            out = out.clip_impl(&hs, None, None).0;
            if out.is_empty() {
                break;
            }
        }
        out
    }

    /// Decomposition into tetrahedra: facet fans coned to the vertex centroid.
    pub fn tetrahedra(&self) -> Vec<[Vec3; 4]> {
        let apex = ring_centroid(&self.vertices);
        let mut out = Vec::new();
        for f in &self.facets {
            for i in 1..f.ring.len() - 1 {
                out.push([apex, f.ring[0], f.ring[i], f.ring[i + 1]]);
            }
        }
        out
    }

    /// Index of the facet lying in the plane `n·x = offset` with outward normal `n`.
    pub fn facet_on_plane(&self, n: &Vec3, offset: f64) -> Option<usize> {
        let tol = self.tolerance();
        self.facets
            .iter()
            .position(|f| f.normal.dot(n) > 1.0 - 1e-12 && (f.offset - offset).abs() <= tol)
    }
}

fn detect_miller(normal: &Vec3, lattice: &BravaisLattice) -> Option<MillerVector> {
    // components of the normal in the dual basis are proportional to n · e_k
    let v = Vec3::new(
        normal.dot(&lattice.basis_vector(0)),
        normal.dot(&lattice.basis_vector(1)),
        normal.dot(&lattice.basis_vector(2)),
    );
    let smallest = v.iter().map(|c| c.abs()).filter(|c| *c > 1e-9).fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return None;
    }
    for mult in 1..=1000 {
        let u = v * (mult as f64 / smallest);
        let r = u.map(|c| c.round());
        if (u - r).amax() < 1e-7 * mult as f64 {
            return miller_reduce([r.x as i64, r.y as i64, r.z as i64]).ok();
        }
    }
    None
}

impl Region for ConvexPolytope {
    fn bounds(&self) -> Option<(Vec3, Vec3)> {
        if self.is_empty() {
            return Some((Vec3::zeros(), Vec3::zeros()));
        }
        let lo = self.vertices.iter().fold(Vec3::repeat(f64::INFINITY), |a, v| a.inf(v));
        let hi = self.vertices.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
        Some((lo, hi))
    }

    fn diameter(&self) -> f64 {
        self.diameter
    }

    fn volume(&self) -> f64 {
        self.volume
    }

    fn contains(&self, x: &Vec3, rule: &BoundaryRule, tol: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        for (i, f) in self.facets.iter().enumerate() {
            let s = f.normal.dot(x) - f.offset;
            if s > tol {
                return false;
            }
            if s >= -tol && !rule.includes(Some(i), &f.normal) {
                return false;
            }
        }
        true
    }
}

/// A solid ball, used for remainder and counting experiments with curved boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Ball { center, radius }
    }
}

impl Region for Ball {
    fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let r = Vec3::repeat(self.radius);
        Some((self.center - r, self.center + r))
    }

    fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3)
    }

    fn contains(&self, x: &Vec3, rule: &BoundaryRule, tol: f64) -> bool {
        let d = x - self.center;
        let s = d.norm() - self.radius;
        if s > tol {
            false
        } else if s >= -tol {
            rule.includes(None, &d)
        } else {
            true
        }
    }
}

/// Vertices of the polygon `Ω ∩ {x·n = s}`, counter-clockwise about `n`.
pub fn cross_section(poly: &ConvexPolytope, n: &Vec3, s: f64) -> Vec<Vec3> {
    let n = n.normalize();
    let tol = poly.tolerance();
    let mut pts = Vec::new();
    for f in poly.facets() {
        for i in 0..f.ring.len() {
            let a = f.ring[i];
            let b = f.ring[(i + 1) % f.ring.len()];
            let da = n.dot(&a) - s;
            let db = n.dot(&b) - s;
            if da.abs() <= tol {
                pts.push(a);
            }
            if (da < -tol && db > tol) || (da > tol && db < -tol) {
                pts.push(a + (b - a) * (da / (da - db)));
            }
        }
    }
    let pts = dedupe(&pts, tol);
    if pts.len() < 3 {
        return Vec::new();
    }
    order_ring(pts, &n)
}

/// Area of `Ω ∩ {x·n = s}`; zero outside the support.
pub fn cross_section_area(poly: &ConvexPolytope, n: &Vec3, s: f64) -> f64 {
    let ring = cross_section(poly, n, s);
    ring_area(&ring, &n.normalize()).max(0.0)
}

/// `vol(Ω ∩ (−shift + Ω))`.
pub fn self_intersection_volume(poly: &ConvexPolytope, shift: &Vec3) -> f64 {
    poly.intersect_translate(shift).volume()
}

pub fn clip(poly: &ConvexPolytope, hs: &HalfSpace) -> ConvexPolytope {
    poly.clip(hs)
}

pub fn measure(poly: &ConvexPolytope) -> Measure {
    poly.measure()
}

/// A planar interface `{x : (x − anchor)·n̂ = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfacePlane {
    pub unit_normal: Vec3,
    pub miller: Option<MillerVector>,
    pub anchor: Vec3,
}

impl InterfacePlane {
    pub fn new(normal: Vec3) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidArgument("interface normal must be nonzero".into()));
        }
        Ok(InterfacePlane {
            unit_normal: normal / len,
            miller: None,
            anchor: Vec3::zeros(),
        })
    }

    /// Crystallographic plane through the origin with `n̂ = ñ/|ñ|`.
    pub fn from_miller(lattice: &BravaisLattice, m: MillerVector) -> Self {
        InterfacePlane {
            unit_normal: lattice.miller_normal(&m).normalize(),
            miller: Some(m),
            anchor: Vec3::zeros(),
        }
    }

    pub fn with_anchor(mut self, anchor: Vec3) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn offset(&self) -> f64 {
        self.anchor.dot(&self.unit_normal)
    }

    /// Signed distance `(x − anchor)·n̂`.
    pub fn side(&self, x: &Vec3) -> f64 {
        x.dot(&self.unit_normal) - self.offset()
    }

    /// The Miller vector oriented along `n̂`.
    pub fn oriented_miller(&self) -> Option<MillerVector> {
        self.miller
            .map(|m| if m.as_vec3().dot(&self.unit_normal) >= 0.0 { m } else { m.neg() })
    }
}

/// Result of cutting a polytope by an interface plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSplit {
    /// `{x ∈ Ω : (x − anchor)·n̂ >= 0}`.
    pub plus: ConvexPolytope,
    /// `{x ∈ Ω : (x − anchor)·n̂ <= 0}`.
    pub minus: ConvexPolytope,
    /// Facet of `plus` lying on the interface.
    pub plus_cap: usize,
    /// Facet of `minus` lying on the interface.
    pub minus_cap: usize,
    pub interface_area: f64,
    pub interface_ring: Vec<Vec3>,
}

/// Splits `Ω` into the parts on either side of the plane.
pub fn split_by_plane(poly: &ConvexPolytope, plane: &InterfacePlane) -> Result<PlaneSplit> {
    let n = plane.unit_normal;
    let c = plane.offset();
    let m = plane.oriented_miller();
    let (minus, minus_cap) = poly.clip_impl(&HalfSpace { normal: n, offset: c }, None, m);
    let (plus, plus_cap) = poly.clip_impl(&HalfSpace { normal: -n, offset: -c }, None, m.map(|v| v.neg()));
    match (minus_cap, plus_cap) {
        (Some(mc), Some(pc)) if !minus.is_empty() && !plus.is_empty() => {
            let sigma = &minus.facets()[mc];
            let interface_area = sigma.area;
            let interface_ring = sigma.ring.clone();
            Ok(PlaneSplit {
                plus,
                minus,
                plus_cap: pc,
                minus_cap: mc,
                interface_area,
                interface_ring,
            })
        }
        _ => Err(Error::PlaneMissesInterior),
    }
}

/// Pushes facet `f` outward by `distances[f]`, keeping its Miller normal.
pub fn offset_facets(poly: &ConvexPolytope, distances: &[f64]) -> Result<ConvexPolytope> {
    if distances.len() != poly.facets().len() {
        return Err(Error::InvalidArgument(format!(
            "{} distances for {} facets",
            distances.len(),
            poly.facets().len()
        )));
    }
    let hs: Vec<HalfSpace> = poly
        .facets()
        .iter()
        .zip(distances)
        .map(|(f, d)| HalfSpace {
            normal: f.normal,
            offset: f.offset + d,
        })
        .collect();
    let mut out = ConvexPolytope::from_halfspaces(&hs).map_err(|e| match e {
        Error::DegeneratePolytope(s) => Error::CombinatorialChange(s),
        other => other,
    })?;
    if out.facets.len() != poly.facets.len() {
        return Err(Error::CombinatorialChange(format!(
            "{} facets became {}",
            poly.facets.len(),
            out.facets.len()
        )));
    }
    for f in &mut out.facets {
        let src = f.source.expect("every facet comes from an input half-space");
        f.miller = poly.facets[src].miller;
    }
    let mut seen: Vec<usize> = out.facets.iter().filter_map(|f| f.source).collect();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != poly.facets.len() {
        return Err(Error::CombinatorialChange("a facet vanished".into()));
    }
    Ok(out)
}

/// Polytope description used by scene files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Box { min: [f64; 3], max: [f64; 3] },
    Hull { vertices: Vec<[f64; 3]> },
    Halfspaces { normals: Vec<[f64; 3]>, offsets: Vec<f64> },
    /// `unit_cube`, `centered_cube` (`[-1,1]³`), `unit_tetrahedron`
    /// (`0, e1, e2, e3`) or `tetrahedron2` (`0, 2e1, 2e2, 2e3`).
    Named { name: String },
}

impl DomainSpec {
    /// Builds the polytope and attaches any Miller normals it has with respect to `lattice`.
    pub fn build(&self, lattice: &BravaisLattice) -> Result<ConvexPolytope> {
        let poly = match self {
            DomainSpec::Box { min, max } => ConvexPolytope::from_box(Vec3::from(*min), Vec3::from(*max))?,
            DomainSpec::Hull { vertices } => {
                let pts: Vec<Vec3> = vertices.iter().map(|v| Vec3::from(*v)).collect();
                ConvexPolytope::from_hull(&pts)?
            }
            DomainSpec::Halfspaces { normals, offsets } => {
                if normals.len() != offsets.len() {
                    return Err(Error::InvalidArgument("normals and offsets differ in length".into()));
                }
                let hs = normals
                    .iter()
                    .zip(offsets)
                    .map(|(n, d)| HalfSpace::new(Vec3::from(*n), *d))
                    .collect::<Result<Vec<_>>>()?;
                ConvexPolytope::from_halfspaces(&hs)?
            }
            DomainSpec::Named { name } => match name.as_str() {
                "unit_cube" => ConvexPolytope::from_box(Vec3::zeros(), Vec3::repeat(1.0))?,
                "centered_cube" => ConvexPolytope::from_box(Vec3::repeat(-1.0), Vec3::repeat(1.0))?,
                "unit_tetrahedron" => ConvexPolytope::from_hull(&[Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()])?,
                "tetrahedron2" => ConvexPolytope::from_hull(&[
                    Vec3::zeros(),
                    Vec3::x() * 2.0,
                    Vec3::y() * 2.0,
                    Vec3::z() * 2.0,
                ])?,
                other => return Err(Error::InvalidArgument(format!("unknown named domain `{other}`"))),
            },
        };
        Ok(poly.with_miller_normals(lattice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GaussLegendre;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cube() -> ConvexPolytope {
        ConvexPolytope::unit_cube()
    }

    fn centered_cube(h: f64) -> ConvexPolytope {
        ConvexPolytope::from_box(Vec3::repeat(-h), Vec3::repeat(h)).unwrap()
    }

    fn tet() -> ConvexPolytope {
        ConvexPolytope::from_hull(&[Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]).unwrap()
    }

    fn monte_carlo_volume(inside: impl Fn(&Vec3) -> bool, lo: Vec3, hi: Vec3, samples: usize) -> f64 {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut hits = 0usize;
        for _ in 0..samples {
            let p = Vec3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            );
            if inside(&p) {
                hits += 1;
            }
        }
        hits as f64 / samples as f64 * (hi - lo).product()
    }

    #[test]
    fn clip_examples() {
        let c = cube();
        let half = c.clip(&HalfSpace::new(Vec3::x(), 0.5).unwrap());
        assert_relative_eq!(half.volume(), 0.5, max_relative = 1e-14);
        let same = c.clip(&HalfSpace::new(Vec3::x(), 2.0).unwrap());
        assert_eq!(same, c);
        let corner = c.clip(&HalfSpace::new(Vec3::repeat(1.0), 0.5).unwrap());
        assert_relative_eq!(corner.volume(), 0.125 / 6.0, max_relative = 1e-13);
        assert_eq!(corner.facets().len(), 4);
        let mc = monte_carlo_volume(|p| p.sum() <= 0.5, Vec3::zeros(), Vec3::repeat(0.5), 400_000);
        assert!((mc - 0.125 / 6.0).abs() < 0.03 * 0.125 / 6.0 * 3.0);
        let gone = c.clip(&HalfSpace::new(Vec3::x(), -0.1).unwrap());
        assert!(gone.is_empty());
        assert_eq!(gone.volume(), 0.0);
    }

    #[test]
    fn measure_examples() {
        let m = cube().measure();
        assert_relative_eq!(m.volume, 1.0, max_relative = 1e-14);
        assert_eq!(m.facets.len(), 6);
        assert!(m.facets.iter().all(|(a, _)| (a - 1.0).abs() < 1e-14));
        let b = ConvexPolytope::from_box(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0)).unwrap();
        let m = b.measure();
        assert_relative_eq!(m.volume, 2.0, max_relative = 1e-14);
        let mut areas: Vec<f64> = m.facets.iter().map(|f| f.0).collect();
        areas.sort_by(f64::total_cmp);
        for (a, e) in areas.iter().zip([1.0, 1.0, 2.0, 2.0, 2.0, 2.0]) {
            assert_relative_eq!(*a, e, max_relative = 1e-14);
        }
        let m = tet().measure();
        assert_relative_eq!(m.volume, 1.0 / 6.0, max_relative = 1e-14);
        let diag = m
            .facets
            .iter()
            .find(|(_, n)| (n - Vec3::repeat(1.0 / 3f64.sqrt())).norm() < 1e-12)
            .unwrap();
        assert_relative_eq!(diag.0, 3f64.sqrt() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn halfspace_construction_and_unbounded_detection() {
        let hs: Vec<HalfSpace> = (0..3)
            .flat_map(|i| {
                let mut n = Vec3::zeros();
                n[i] = 1.0;
                [HalfSpace::new(n, 1.0).unwrap(), HalfSpace::new(-n, 0.0).unwrap()]
            })
            .collect();
        let p = ConvexPolytope::from_halfspaces(&hs).unwrap();
        assert_relative_eq!(p.volume(), 1.0, max_relative = 1e-13);
        assert!(p.facets().iter().all(|f| f.source.is_some()));
        let open = &hs[..5];
        assert_eq!(ConvexPolytope::from_halfspaces(open), Err(Error::UnboundedRegion));
        let cone = [
            HalfSpace::new(Vec3::new(-1.0, 0.0, 0.2), 0.0).unwrap(),
            HalfSpace::new(Vec3::new(0.0, -1.0, 0.2), 0.0).unwrap(),
            HalfSpace::new(Vec3::new(1.0, 1.0, 0.2), 0.0).unwrap(),
        ];
        assert_eq!(ConvexPolytope::from_halfspaces(&cone), Err(Error::UnboundedRegion));
    }

    #[test]
    fn self_intersection_examples() {
        let c = cube();
        for d in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert_relative_eq!(self_intersection_volume(&c, &Vec3::new(d, 0.0, 0.0)), 1.0 - d, epsilon = 1e-13);
            assert_relative_eq!(
                self_intersection_volume(&c, &Vec3::new(d, d, 0.0)),
                (1.0 - d) * (1.0 - d),
                epsilon = 1e-13
            );
        }
        assert_eq!(self_intersection_volume(&c, &Vec3::new(2.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn split_examples() {
        let c = centered_cube(0.5);
        let s = split_by_plane(&c, &InterfacePlane::new(Vec3::z()).unwrap()).unwrap();
        assert_relative_eq!(s.plus.volume(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(s.minus.volume(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(s.interface_area, 1.0, max_relative = 1e-13);
        let s = split_by_plane(&c, &InterfacePlane::new(Vec3::new(1.0, 1.0, 0.0)).unwrap()).unwrap();
        assert_relative_eq!(s.plus.volume(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(s.interface_area, 2f64.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(s.plus.facets()[s.plus_cap].normal, -Vec3::new(1.0, 1.0, 0.0).normalize(), epsilon = 1e-14);

        let shifted = ConvexPolytope::from_hull(&[
            Vec3::new(-0.3, -0.2, -0.5),
            Vec3::new(1.0, 0.0, -0.4),
            Vec3::new(0.1, 1.2, 0.2),
            Vec3::new(0.2, 0.3, 0.9),
        ])
        .unwrap();
        let s = split_by_plane(&shifted, &InterfacePlane::new(Vec3::z()).unwrap()).unwrap();
        assert_relative_eq!(s.plus.volume() + s.minus.volume(), shifted.volume(), max_relative = 1e-12);
        let (lo, hi) = shifted.bounds().unwrap();
        let hs = shifted.halfspaces();
        let mc = monte_carlo_volume(
            |p| p.z >= 0.0 && hs.iter().all(|h| h.normal.dot(p) <= h.offset),
            lo,
            hi,
            400_000,
        );
        assert!((mc - s.plus.volume()).abs() < 0.05 * s.plus.volume(), "{mc} vs {}", s.plus.volume());

        let miss = split_by_plane(&cube(), &InterfacePlane::new(Vec3::z()).unwrap());
        assert_eq!(miss, Err(Error::PlaneMissesInterior));
    }

    #[test]
    fn cross_section_examples() {
        let c = cube();
        assert_relative_eq!(cross_section_area(&c, &Vec3::z(), 0.5), 1.0, max_relative = 1e-14);
        assert_eq!(cross_section_area(&c, &Vec3::z(), 1.5), 0.0);
        let n = Vec3::repeat(1.0).normalize();
        let mid = 3f64.sqrt() / 2.0;
        let hex = cross_section_area(&c, &n, mid);
        assert_relative_eq!(hex, 3.0 * 3f64.sqrt() / 4.0, max_relative = 1e-13);
        // thin-slab Monte Carlo estimate
        let h = 0.02;
        let slab = monte_carlo_volume(|p| (p.dot(&n) - mid).abs() <= h / 2.0, Vec3::zeros(), Vec3::repeat(1.0), 2_000_000);
        assert!((slab / h - hex).abs() < 0.03 * hex, "{} vs {hex}", slab / h);
    }

    #[test]
    fn offset_examples() {
        let c = cube();
        for k in [2, 5, 17] {
            let d = 1.0 / (2.0 * k as f64);
            let ok = offset_facets(&c, &[d; 6]).unwrap();
            assert_relative_eq!(ok.volume(), (1.0 + 1.0 / k as f64).powi(3), max_relative = 1e-13);
            assert!(ok.facets().iter().all(|f| f.miller.is_some()));
        }
        let same = offset_facets(&c, &[0.0; 6]).unwrap();
        assert_relative_eq!(same.volume(), 1.0, max_relative = 1e-14);
        assert_eq!(same.facets().len(), 6);
        let mut d = [0.0; 6];
        let xs: Vec<usize> = c
            .facets()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.normal.x.abs() > 0.5)
            .map(|(i, _)| i)
            .collect();
        for i in xs {
            d[i] = 0.1;
        }
        assert_relative_eq!(offset_facets(&c, &d).unwrap().volume(), 1.2, max_relative = 1e-13);
        // pulling a facet of a thin pyramid inward past its apex removes it
        let wedge = ConvexPolytope::from_hull(&[
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(0.0, 0.0, 0.1),
        ])
        .unwrap();
        let mut d = vec![0.0; 4];
        let bottom = wedge.facets().iter().position(|f| f.normal.z < -0.5).unwrap();
        d[bottom] = -0.2;
        assert!(offset_facets(&wedge, &d).is_err());
    }

    #[test]
    fn lattice_polyhedron_detection() {
        let z3 = BravaisLattice::integer();
        let t = DomainSpec::Named { name: "tetrahedron2".into() }.build(&z3).unwrap();
        assert!(t.is_lattice_polyhedron(&z3));
        let diag = t.facets().iter().find(|f| f.normal.x > 0.1).unwrap();
        assert_eq!(diag.miller.unwrap().components(), [1, 1, 1]);
        let off = ConvexPolytope::from_box(Vec3::zeros(), Vec3::repeat(0.5)).unwrap().with_miller_normals(&z3);
        assert!(!off.is_lattice_polyhedron(&z3));
    }

    #[test]
    fn domain_spec_json() {
        let z3 = BravaisLattice::integer();
        let spec: DomainSpec = serde_json::from_str(r#"{"type":"box","min":[0,0,0],"max":[2,1,1]}"#).unwrap();
        assert_relative_eq!(spec.build(&z3).unwrap().volume(), 2.0, max_relative = 1e-14);
        let spec: DomainSpec =
            serde_json::from_str(r#"{"type":"hull","vertices":[[0,0,0],[1,0,0],[0,1,0],[0,0,1]]}"#).unwrap();
        assert_relative_eq!(spec.build(&z3).unwrap().volume(), 1.0 / 6.0, max_relative = 1e-13);
        let spec: DomainSpec = serde_json::from_str(
            r#"{"type":"halfspaces","normals":[[1,0,0],[-1,0,0],[0,1,0],[0,-1,0],[0,0,1],[0,0,-1]],"offsets":[1,0,1,0,1,0]}"#,
        )
        .unwrap();
        assert_relative_eq!(spec.build(&z3).unwrap().volume(), 1.0, max_relative = 1e-13);
        assert!(serde_json::from_str::<DomainSpec>(r#"{"type":"box","min":[0,0,0],"max":[1,1,1],"x":1}"#).is_err());
        let back: DomainSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    fn random_polytope(seed: u64) -> ConvexPolytope {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let pts: Vec<Vec3> = (0..9)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ConvexPolytope::from_hull(&pts).unwrap()
    }

    /// Exact for piecewise-quadratic cross-section areas: Gauss rule between
    /// consecutive vertex heights.
    fn integrate_sections(p: &ConvexPolytope, n: &Vec3) -> f64 {
        let mut h: Vec<f64> = p.vertices().iter().map(|v| v.dot(n)).collect();
        h.sort_by(f64::total_cmp);
        let rule = GaussLegendre::new(4);
        h.windows(2).map(|w| rule.integrate(w[0], w[1], |s| cross_section_area(p, n, s))).sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn clip_complement_volumes_add_up(seed in 0u64..1000, nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0, d in -0.5f64..0.5) {
            let p = random_polytope(seed);
            prop_assume!(Vec3::new(nx, ny, nz).norm() > 0.1);
            let h = HalfSpace::new(Vec3::new(nx, ny, nz), d).unwrap();
            let a = p.clip(&h).volume();
            let b = p.clip(&h.complement()).volume();
            prop_assert!((a + b - p.volume()).abs() <= 1e-12 * p.volume());
        }

        #[test]
        fn self_intersection_is_symmetric(seed in 0u64..1000, tx in -0.5f64..0.5, ty in -0.5f64..0.5, tz in -0.5f64..0.5) {
            let p = random_polytope(seed);
            let t = Vec3::new(tx, ty, tz);
            let a = self_intersection_volume(&p, &t);
            let b = self_intersection_volume(&p, &-t);
            prop_assert!((a - b).abs() <= 1e-12 * p.volume());
        }

        #[test]
        fn sections_integrate_to_volume(seed in 0u64..1000, nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0) {
            let p = random_polytope(seed);
            prop_assume!(Vec3::new(nx, ny, nz).norm() > 0.1);
            let n = Vec3::new(nx, ny, nz).normalize();
            let v = integrate_sections(&p, &n);
            prop_assert!((v - p.volume()).abs() <= 1e-10 * p.volume(), "{} vs {}", v, p.volume());
        }
    }

    #[test]
    fn translate_volume_derivative_is_projected_facet_area() {
        for seed in [3u64, 11, 29] {
            let p = random_polytope(seed);
            let w = Vec3::new(0.3, -0.7, 0.45);
            let expect: f64 = p.facets().iter().map(|f| f.area * w.dot(&f.normal).max(0.0)).sum();
            let mut prev = f64::INFINITY;
            for eps in [1e-2, 1e-3, 1e-4] {
                let slope = (p.volume() - self_intersection_volume(&p, &(w * eps))) / eps;
                let err = (slope - expect).abs();
                assert!(err < prev);
                prev = err;
            }
            assert!(prev < 1e-3 * expect.max(1.0));
        }
    }
}

//! Bravais-lattice algebra: bases and their duals, lattice-point enumeration
//! and counting inside regions, the lattice-point remainder, Miller vectors,
//! and sequences of Miller vectors whose directions converge to a target.

use serde::{Deserialize, Serialize};

use crate::geometry::Region;
use crate::{Error, Mat3, Result, Vec3};

/// Relative slack used when deciding whether a lattice vector lies in a ball.
const BALL_SLACK: f64 = 1e-12;

/// Signed-distance band, relative to the region diameter, inside which a point
/// counts as lying on the boundary.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-12;

/// Hard cap on the number of integer triples scanned by one enumeration.
const MAX_SCAN: u128 = 4_000_000_000;

/// A simple lattice `{Σ c_i e_i : c ∈ Z³}` together with its dual basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpec", into = "LatticeSpec")]
pub struct BravaisLattice {
    /// Columns are the basis vectors `e_i`.
    basis: Mat3,
    /// Columns are the dual vectors `b_i`, `b_i · e_k = δ_ik`.
    dual: Mat3,
    /// `basis⁻¹`, cached for coordinate conversion.
    inverse: Mat3,
    cell_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub basis: [[f64; 3]; 3],
}

impl TryFrom<LatticeSpec> for BravaisLattice {
    type Error = Error;

    fn try_from(spec: LatticeSpec) -> Result<Self> {
        BravaisLattice::new(spec.basis.map(Vec3::from))
    }
}

impl From<BravaisLattice> for LatticeSpec {
    fn from(lattice: BravaisLattice) -> Self {
        LatticeSpec {
            basis: [0, 1, 2].map(|i| lattice.basis_vector(i).into()),
        }
    }
}

impl Default for BravaisLattice {
    fn default() -> Self {
        Self::integer()
    }
}

impl BravaisLattice {
    pub fn new(basis: [Vec3; 3]) -> Result<Self> {
        let dual = dual_basis(basis)?;
        let e = Mat3::from_columns(&basis);
        let inverse = e.try_inverse().ok_or_else(|| Error::InvalidLattice("singular basis".into()))?;
        Ok(BravaisLattice {
            basis: e,
            dual: Mat3::from_columns(&dual),
            inverse,
            cell_volume: e.determinant().abs(),
        })
    }

    /// The integer lattice `Z³` with unit cell volume.
    pub fn integer() -> Self {
        BravaisLattice {
            basis: Mat3::identity(),
            dual: Mat3::identity(),
            inverse: Mat3::identity(),
            cell_volume: 1.0,
        }
    }

    pub fn basis_vector(&self, i: usize) -> Vec3 {
        self.basis.column(i).into_owned()
    }

    pub fn dual_vector(&self, i: usize) -> Vec3 {
        self.dual.column(i).into_owned()
    }

    pub fn basis_matrix(&self) -> &Mat3 {
        &self.basis
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn to_cartesian(&self, coords: [i64; 3]) -> Vec3 {
        self.basis * Vec3::new(coords[0] as f64, coords[1] as f64, coords[2] as f64)
    }

    /// Real-valued lattice coordinates of a Cartesian point.
    pub fn to_lattice_coords(&self, x: &Vec3) -> Vec3 {
        self.inverse * x
    }

    /// Cartesian normal `Σ m_k b_k` of the lattice planes with Miller vector `m`.
    ///
    /// Its length is the inverse of the interplanar spacing.
    pub fn miller_normal(&self, m: &MillerVector) -> Vec3 {
        let c = m.components();
        self.dual * Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
    }

    /// Shortest-vector-free upper bound: every lattice vector `w` with
    /// `|w| <= radius` has `|c_i| <= radius |b_i|`.
    fn coordinate_bounds(&self, radius: f64) -> [i64; 3] {
        [0, 1, 2].map(|i| (radius * self.dual_vector(i).norm() * (1.0 + BALL_SLACK)).floor() as i64)
    }
}

/// Dual basis `b_i` with `b_i · e_k = δ_ik`.
pub fn dual_basis(basis: [Vec3; 3]) -> Result<[Vec3; 3]> {
    let e = Mat3::from_columns(&basis);
    let scale: f64 = basis.iter().map(|v| v.norm()).product();
    let det = e.determinant();
    if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-12 * scale {
        return Err(Error::InvalidLattice("basis vectors are linearly dependent".into()));
    }
    let inv = e
        .try_inverse()
        .ok_or_else(|| Error::InvalidLattice("singular basis".into()))?;
    // rows of e⁻¹ are the dual vectors
    Ok([0, 1, 2].map(|i| inv.row(i).transpose()))
}

/// A lattice vector with its integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeVector {
    pub coords: [i64; 3],
    pub cart: Vec3,
}

/// All lattice vectors with `|w| <= radius`, origin included, in lexicographic
/// order of their lattice coordinates.
pub fn enumerate_ball(lattice: &BravaisLattice, radius: f64) -> Vec<LatticeVector> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Vec::new();
    }
    let bound = lattice.coordinate_bounds(radius);
    let r2 = radius * radius * (1.0 + BALL_SLACK);
    let mut out = Vec::new();
    for i in -bound[0]..=bound[0] {
        for j in -bound[1]..=bound[1] {
            for k in -bound[2]..=bound[2] {
                let coords = [i, j, k];
                let cart = lattice.to_cartesian(coords);
                if cart.norm_squared() <= r2 {
                    out.push(LatticeVector { coords, cart });
                }
            }
        }
    }
    out
}

/// How points lying exactly on the boundary of a region are treated.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryRule {
    /// Boundary points belong to the region.
    #[default]
    Closed,
    /// A boundary point belongs to the region only if the outward normal there
    /// has a negative first nonzero component. Regions sharing a facet with
    /// opposite normals then partition the lattice points between them; the
    /// unit cube becomes `[0,1)³`.
    #[serde(alias = "half-open", alias = "half_open")]
    HalfOpen,
    /// Explicit per-facet inclusion flags (polytopes only).
    PerFacet(Vec<bool>),
}

impl BoundaryRule {
    /// Whether a boundary point with outward normal `normal` on facet `facet`
    /// is included.
    pub fn includes(&self, facet: Option<usize>, normal: &Vec3) -> bool {
        match self {
            BoundaryRule::Closed => true,
            BoundaryRule::HalfOpen => owns_boundary(normal),
            BoundaryRule::PerFacet(flags) => facet.and_then(|f| flags.get(f).copied()).unwrap_or(true),
        }
    }
}

fn owns_boundary(normal: &Vec3) -> bool {
    let scale = normal.amax();
    for c in normal.iter() {
        if c.abs() > 1e-12 * scale {
            return *c < 0.0;
        }
    }
    false
}

/// Points of `offset + εL` inside a region.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePointSet {
    pub scale: f64,
    pub offset: Vec3,
    /// Integer lattice coordinates, lexicographically ordered.
    pub coords: Vec<[i64; 3]>,
    /// Cartesian positions `offset + ε Σ c_i e_i`.
    pub points: Vec<Vec3>,
    pub boundary_rule: BoundaryRule,
}

impl LatticePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn scan_region<R, F>(
    lattice: &BravaisLattice,
    eps: f64,
    offset: &Vec3,
    region: &R,
    rule: &BoundaryRule,
    mut visit: F,
) -> Result<()>
where
    R: Region + ?Sized,
    F: FnMut([i64; 3], Vec3),
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {eps}")));
    }
    let (lo, hi) = region.bounds().ok_or(Error::UnboundedRegion)?;
    if !(lo.iter().chain(hi.iter()).all(|v| v.is_finite())) {
        return Err(Error::UnboundedRegion);
    }
    let mut cmin = Vec3::repeat(f64::INFINITY);
    let mut cmax = Vec3::repeat(f64::NEG_INFINITY);
    for corner in 0..8 {
        let x = Vec3::new(
            if corner & 1 == 0 { lo.x } else { hi.x },
            if corner & 2 == 0 { lo.y } else { hi.y },
            if corner & 4 == 0 { lo.z } else { hi.z },
        );
        let c = lattice.to_lattice_coords(&(x - offset)) / eps;
        cmin = cmin.inf(&c);
        cmax = cmax.sup(&c);
    }
    let lo_i = cmin.map(|v| v.floor() as i64 - 1);
    let hi_i = cmax.map(|v| v.ceil() as i64 + 1);
    let span: u128 = (0..3).map(|i| (hi_i[i] - lo_i[i] + 1) as u128).product();
    if span > MAX_SCAN {
        return Err(Error::InvalidArgument(format!(
            "enumeration would scan {span} lattice sites; increase ε"
        )));
    }
    let tol = MEMBERSHIP_TOLERANCE * region.diameter();
    let e = lattice.basis_matrix() * eps;
    for i in lo_i[0]..=hi_i[0] {
        for j in lo_i[1]..=hi_i[1] {
            for k in lo_i[2]..=hi_i[2] {
                let x = offset + e * Vec3::new(i as f64, j as f64, k as f64);
                if region.contains(&x, rule, tol) {
                    visit([i, j, k], x);
                }
            }
        }
    }
    Ok(())
}

/// `Ω ∩ εL` under the given boundary rule.
pub fn enumerate_in_region<R: Region + ?Sized>(
    lattice: &BravaisLattice,
    eps: f64,
    region: &R,
    rule: &BoundaryRule,
) -> Result<LatticePointSet> {
    enumerate_shifted(lattice, eps, &Vec3::zeros(), region, rule)
}

/// `Ω ∩ (u + εL)` under the given boundary rule.
pub fn enumerate_shifted<R: Region + ?Sized>(
    lattice: &BravaisLattice,
    eps: f64,
    offset: &Vec3,
    region: &R,
    rule: &BoundaryRule,
) -> Result<LatticePointSet> {
    let mut coords = Vec::new();
    let mut points = Vec::new();
    scan_region(lattice, eps, offset, region, rule, |c, x| {
        coords.push(c);
        points.push(x);
    })?;
    Ok(LatticePointSet {
        scale: eps,
        offset: *offset,
        coords,
        points,
        boundary_rule: rule.clone(),
    })
}

/// `#(Ω ∩ (u + εL))` without materialising the points.
pub fn count_shifted<R: Region + ?Sized>(
    lattice: &BravaisLattice,
    eps: f64,
    offset: &Vec3,
    region: &R,
    rule: &BoundaryRule,
) -> Result<usize> {
    let mut n = 0usize;
    scan_region(lattice, eps, offset, region, rule, |_, _| n += 1)?;
    Ok(n)
}

/// The remainder `|Ω| − ε³|K| #(Ω ∩ εL)`.
pub fn lattice_remainder<R: Region + ?Sized>(
    region: &R,
    lattice: &BravaisLattice,
    eps: f64,
    rule: &BoundaryRule,
) -> Result<f64> {
    let n = count_shifted(lattice, eps, &Vec3::zeros(), region, rule)?;
    Ok(region.volume() - eps.powi(3) * lattice.cell_volume() * n as f64)
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a as i64
}

/// Returns `(g, x, y)` with `g = gcd(a, b) >= 0` and `a x + b y = g`.
pub(crate) fn extended_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut old_r, mut r) = (a as i128, b as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (old_r, old_s, old_t) = (-old_r, -old_s, -old_t);
    }
    (old_r as i64, old_s as i64, old_t as i64)
}

/// A primitive integer normal `(h, k, l)` with `gcd(|h|, |k|, |l|) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 3]", into = "[i64; 3]")]
pub struct MillerVector([i64; 3]);

impl TryFrom<[i64; 3]> for MillerVector {
    type Error = Error;

    fn try_from(v: [i64; 3]) -> Result<Self> {
        MillerVector::new(v)
    }
}

impl From<MillerVector> for [i64; 3] {
    fn from(m: MillerVector) -> Self {
        m.0
    }
}

impl std::fmt::Display for MillerVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({} {} {})", self.0[0], self.0[1], self.0[2])
    }
}

impl MillerVector {
    /// Accepts `v` only if it is already primitive.
    pub fn new(v: [i64; 3]) -> Result<Self> {
        let g = gcd(gcd(v[0], v[1]), v[2]);
        match g {
            0 => Err(Error::ZeroVector),
            1 => Ok(MillerVector(v)),
            _ => Err(Error::NotMiller(format!("{v:?} has common divisor {g}"))),
        }
    }

    pub fn components(&self) -> [i64; 3] {
        self.0
    }

    /// Integer pairing with lattice coordinates, `w · 𝐧`.
    pub fn pair(&self, coords: &[i64; 3]) -> i64 {
        self.0[0] * coords[0] + self.0[1] * coords[1] + self.0[2] * coords[2]
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.0[0] as f64, self.0[1] as f64, self.0[2] as f64)
    }

    pub fn norm(&self) -> f64 {
        self.as_vec3().norm()
    }

    pub fn unit(&self) -> Vec3 {
        self.as_vec3().normalize()
    }

    pub fn neg(&self) -> MillerVector {
        MillerVector(self.0.map(|c| -c))
    }

    /// Distance between adjacent planes of the integer lattice, `1/|𝐧|`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.norm()
    }

    /// Area of the 2D unit cell of the integer lattice on one of these planes, `|𝐧|`.
    pub fn planar_cell_area(&self) -> f64 {
        self.norm()
    }
}

/// Divides a nonzero integer vector by the gcd of its components.
pub fn miller_reduce(v: [i64; 3]) -> Result<MillerVector> {
    let g = gcd(gcd(v[0], v[1]), v[2]);
    if g == 0 {
        return Err(Error::ZeroVector);
    }
    Ok(MillerVector(v.map(|c| c / g)))
}

/// `(spacing, planar_cell_area) = (1/|𝐧|, |𝐧|)` for the integer lattice.
pub fn miller_geometry(m: &MillerVector) -> (f64, f64) {
    (m.spacing(), m.planar_cell_area())
}

/// What a Miller-vector sequence should converge to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MillerTarget {
    /// A unit vector; approximated through continued fractions.
    Direction(Vec3),
    /// A crystallographic direction; approached through a completed basis.
    Rational(MillerVector),
}

impl MillerTarget {
    /// Classifies a unit vector: if it is parallel to an integer vector of
    /// norm at most `max_norm` (to 1e-9) the rational target is returned.
    pub fn from_direction(n: Vec3, max_norm: i64) -> Result<Self> {
        check_unit(&n)?;
        let scale = n.amax();
        for mult in 1..=max_norm {
            let v = n * (mult as f64 / scale);
            let r = v.map(|c| c.round());
            if (v - r).amax() < 1e-9 * mult as f64 {
                let m = miller_reduce([r.x as i64, r.y as i64, r.z as i64])?;
                if m.norm() <= max_norm as f64 {
                    return Ok(MillerTarget::Rational(m));
                }
            }
        }
        Ok(MillerTarget::Direction(n))
    }

    pub fn unit(&self) -> Vec3 {
        match self {
            MillerTarget::Direction(n) => *n,
            MillerTarget::Rational(m) => m.unit(),
        }
    }
}

fn check_unit(n: &Vec3) -> Result<()> {
    if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTarget(format!("{n:?} is not a unit vector")));
    }
    Ok(())
}

/// One element `𝐧_j` of a Miller sequence with a Bézout certificate `p`,
/// `𝐧_j · p = 1`, proving primitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillerSequenceElement {
    pub normal: MillerVector,
    pub certificate: [i64; 3],
}

/// Integer basis `d_1, d_2, d_3` with `d_1·m = d_2·m = 0`, `d_3·m = 1`, and
/// its dual `b_i` (`b_i · d_k = δ_ik`, so `b_3 = m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisCompletion {
    pub d: [[i64; 3]; 3],
    pub b: [[i64; 3]; 3],
}

/// Completes `m` to a unimodular basis by column-reducing the row `mᵀ` to
/// Hermite form `(0, 0, 1)`.
pub fn complete_basis(m: &MillerVector) -> BasisCompletion {
    // columns of v
    let mut v = [[1i64, 0, 0], [0, 1, 0], [0, 0, 1]];
    let mut r = m.components();
    for i in 0..2 {
        if r[i] == 0 {
            continue;
        }
        let (a, b) = (r[i], r[2]);
        let (g, x, y) = extended_gcd(a, b);
        let ci = v[i];
        let c2 = v[2];
        for row in 0..3 {
            v[i][row] = (b / g) * ci[row] - (a / g) * c2[row];
            v[2][row] = x * ci[row] + y * c2[row];
        }
        r[i] = 0;
        r[2] = g;
    }
    if r[2] < 0 {
        v[2] = v[2].map(|c| -c);
    }
    let d = v;
    let cross = |p: [i64; 3], q: [i64; 3]| {
        [
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        ]
    };
    let triple = |p: [i64; 3], q: [i64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    // V has columns d_k; its inverse has rows (d_j × d_k)/det for cyclic (i, j, k)
    let det = triple(d[0], cross(d[1], d[2]));
    debug_assert!(det == 1 || det == -1);
    let b = [
        cross(d[1], d[2]).map(|c| c * det),
        cross(d[2], d[0]).map(|c| c * det),
        cross(d[0], d[1]).map(|c| c * det),
    ];
    BasisCompletion { d, b }
}

/// The `j`-th element (`j >= 1`) of a sequence `𝐧_j` of Miller vectors with
/// `𝐧_j/|𝐧_j| → target` and `|𝐧_j| → ∞`, for the integer lattice.
///
/// Rational targets use `𝐧_j = b_1 + b_2 + j b_3` from [`complete_basis`];
/// directions use the `j`-th continued-fraction convergents of the components
/// brought to a common denominator.
pub fn miller_sequence(target: &MillerTarget, j: u32) -> Result<MillerSequenceElement> {
    if j == 0 {
        return Err(Error::InvalidArgument("sequence index starts at 1".into()));
    }
    match target {
        MillerTarget::Rational(m) => {
            let basis = complete_basis(m);
            let jj = j as i64;
            let [b1, b2, b3] = basis.b;
            let n = [0, 1, 2].map(|i| b1[i] + b2[i] + jj * b3[i]);
            let [d1, d2, d3] = basis.d;
            let p = [0, 1, 2].map(|i| -jj * d1[i] + d2[i] + d3[i]);
            let normal = MillerVector::new(n)?;
            Ok(MillerSequenceElement { normal, certificate: p })
        }
        MillerTarget::Direction(n) => {
            check_unit(n)?;
            let idx = j as usize;
            let mut fracs = [(0i128, 1i128); 3];
            let mut advanced = false;
            for c in 0..3 {
                let conv = convergents(n[c].abs());
                if conv.len() > idx {
                    advanced = true;
                }
                let (h, k) = conv[idx.min(conv.len() - 1)];
                fracs[c] = (if n[c] < 0.0 { -h } else { h }, k);
            }
            if !advanced {
                return Err(Error::InvalidTarget(
                    "continued fractions are exhausted; use the rational branch for this direction".into(),
                ));
            }
            let lcm = fracs.iter().fold(1i128, |acc, &(_, k)| acc / gcd128(acc, k) * k);
            let v: Vec<i128> = fracs.iter().map(|&(h, k)| h * (lcm / k)).collect();
            let to_i64 = |x: i128| {
                i64::try_from(x).map_err(|_| Error::InvalidTarget("Miller components overflow i64".into()))
            };
            let normal = miller_reduce([to_i64(v[0])?, to_i64(v[1])?, to_i64(v[2])?])?;
            let certificate = bezout_certificate(&normal);
            Ok(MillerSequenceElement { normal, certificate })
        }
    }
}

fn gcd128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `p` with `m · p = 1`.
pub fn bezout_certificate(m: &MillerVector) -> [i64; 3] {
    let [a, b, c] = m.components();
    let (g1, x, y) = extended_gcd(a, b);
    let (_, u, v) = extended_gcd(g1, c);
    [u * x, u * y, v]
}

/// Continued-fraction convergents `h/k` of the exact binary value of `x >= 0`.
fn convergents(x: f64) -> Vec<(i128, i128)> {
    // x = mant · 2^exp exactly; values below 2^-70 are treated as zero
    if x < 2f64.powi(-70) {
        return vec![(0, 1)];
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    let e = exp - 1075;
    let (mut num, mut den): (i128, i128) = if e >= 0 {
        ((mant as i128) << e, 1)
    } else {
        (mant as i128, 1i128 << (-e))
    };
    let g = gcd128(num, den);
    num /= g;
    den /= g;
    let mut out = Vec::new();
    let (mut h1, mut h2) = (1i128, 0i128);
    let (mut k1, mut k2) = (0i128, 1i128);
    while den != 0 {
        let a = num / den;
        (num, den) = (den, num - a * den);
        let h = a * h1 + h2;
        let k = a * k1 + k2;
        out.push((h, k));
        (h2, h1) = (h1, h);
        (k2, k1) = (k1, k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Ball, ConvexPolytope};
    use approx::assert_relative_eq;

    fn dot_i(a: [i64; 3], b: [i64; 3]) -> i64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[test]
    fn dual_of_identity_and_scaled_basis() {
        let d = dual_basis([Vec3::x(), Vec3::y(), Vec3::z()]).unwrap();
        assert_eq!(d, [Vec3::x(), Vec3::y(), Vec3::z()]);
        let d = dual_basis([Vec3::x() * 2.0, Vec3::y() * 2.0, Vec3::z() * 2.0]).unwrap();
        assert_eq!(d, [Vec3::x() * 0.5, Vec3::y() * 0.5, Vec3::z() * 0.5]);
    }

    #[test]
    fn dual_residual_is_tiny_for_general_basis() {
        let basis = [Vec3::new(1.0, 0.2, -0.1), Vec3::new(0.3, 1.1, 0.05), Vec3::new(-0.2, 0.4, 0.9)];
        let d = dual_basis(basis).unwrap();
        for (i, di) in d.iter().enumerate() {
            for (k, bk) in basis.iter().enumerate() {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((di.dot(bk) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_basis_is_rejected() {
        let r = dual_basis([Vec3::x(), Vec3::y(), Vec3::x() + Vec3::y()]);
        assert!(matches!(r, Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn ball_counts() {
        let z3 = BravaisLattice::integer();
        let ball = enumerate_ball(&z3, 1.5);
        assert_eq!(ball.len(), 19);
        assert!(ball.windows(2).all(|p| p[0].coords < p[1].coords));
        assert!(ball.iter().any(|w| w.coords == [0, 0, 0]));
        assert_eq!(enumerate_ball(&z3, 0.0).len(), 1);
        assert_eq!(enumerate_ball(&z3, 0.5).len(), 1);
    }

    #[test]
    fn ball_matches_bounding_box_scan() {
        let z3 = BravaisLattice::integer();
        for r in [1.0, 1.7, 2.0, 2.33, 3.1] {
            let mut n = 0;
            for i in -4i64..=4 {
                for j in -4i64..=4 {
                    for k in -4i64..=4 {
                        if ((i * i + j * j + k * k) as f64) <= r * r * (1.0 + 1e-12) {
                            n += 1;
                        }
                    }
                }
            }
            assert_eq!(enumerate_ball(&z3, r).len(), n, "radius {r}");
        }
    }

    #[test]
    fn cube_enumeration_rules() {
        let z3 = BravaisLattice::integer();
        let cube = ConvexPolytope::unit_cube();
        let open = enumerate_in_region(&z3, 0.5, &cube, &BoundaryRule::HalfOpen).unwrap();
        assert_eq!(open.len(), 8);
        let closed = enumerate_in_region(&z3, 0.5, &cube, &BoundaryRule::Closed).unwrap();
        assert_eq!(closed.len(), 27);
        assert!(closed.coords.windows(2).all(|p| p[0] < p[1]));
        // closed ⊇ half-open, with the difference on the boundary
        for c in &open.coords {
            assert!(closed.coords.contains(c));
        }
        for x in &closed.points {
            let interior = x.iter().all(|v| *v > 1e-12 && *v < 1.0 - 1e-12);
            if interior {
                assert!(open.points.contains(x));
            }
        }
    }

    #[test]
    fn tetrahedron_has_four_points() {
        let z3 = BravaisLattice::integer();
        let tet = ConvexPolytope::from_hull(&[Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]).unwrap();
        let pts = enumerate_in_region(&z3, 1.0, &tet, &BoundaryRule::Closed).unwrap();
        assert_eq!(pts.len(), 4);
    }

    #[test]
    fn remainder_of_cube() {
        let z3 = BravaisLattice::integer();
        let cube = ConvexPolytope::unit_cube();
        for k in 1..12 {
            let eps = 1.0 / k as f64;
            let r = lattice_remainder(&cube, &z3, eps, &BoundaryRule::HalfOpen).unwrap();
            assert!(r.abs() < 1e-12, "k={k} r={r}");
            let r = lattice_remainder(&cube, &z3, eps, &BoundaryRule::Closed).unwrap();
            let kf = k as f64;
            assert_relative_eq!(r, 1.0 - (kf + 1.0).powi(3) / kf.powi(3), epsilon = 1e-12);
        }
    }

    #[test]
    fn remainder_of_ball_matches_brute_force() {
        let z3 = BravaisLattice::integer();
        let ball = Ball::new(Vec3::zeros(), 1.0);
        let mut n = 0;
        for i in -10i64..=10 {
            for j in -10i64..=10 {
                for k in -10i64..=10 {
                    if i * i + j * j + k * k <= 100 {
                        n += 1;
                    }
                }
            }
        }
        let expect = 4.0 / 3.0 * std::f64::consts::PI - 1e-3 * n as f64;
        let r = lattice_remainder(&ball, &z3, 0.1, &BoundaryRule::Closed).unwrap();
        assert_relative_eq!(r, expect, epsilon = 1e-12);
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(miller_reduce([2, 4, 6]).unwrap().components(), [1, 2, 3]);
        assert_eq!(miller_reduce([0, 0, 5]).unwrap().components(), [0, 0, 1]);
        assert_eq!(miller_reduce([-3, 6, -9]).unwrap().components(), [-1, 2, -3]);
        assert_eq!(miller_reduce([0, 0, 0]), Err(Error::ZeroVector));
        assert!(MillerVector::new([2, 2, 0]).is_err());
    }

    #[test]
    fn geometry_examples() {
        let (s, a) = miller_geometry(&MillerVector::new([0, 0, 1]).unwrap());
        assert_eq!((s, a), (1.0, 1.0));
        let (s, a) = miller_geometry(&MillerVector::new([1, 1, 1]).unwrap());
        assert_relative_eq!(s, 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(a, 3f64.sqrt(), max_relative = 1e-15);
        let (s, a) = miller_geometry(&MillerVector::new([1, 2, 3]).unwrap());
        assert_relative_eq!(s, 1.0 / 14f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(a * s, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn standard_completion_gives_one_one_j() {
        let m = MillerVector::new([0, 0, 1]).unwrap();
        let basis = complete_basis(&m);
        assert_eq!(basis.d, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        for j in 1..10u32 {
            let e = miller_sequence(&MillerTarget::Rational(m), j).unwrap();
            assert_eq!(e.normal.components(), [1, 1, j as i64]);
            assert_eq!(dot_i(e.normal.components(), e.certificate), 1);
        }
    }

    #[test]
    fn completion_of_general_miller_vectors() {
        for v in [[1, 2, 3], [-3, 5, 7], [4, 0, -9], [0, 6, 35], [1, 1, 1], [12, -18, 5]] {
            let m = MillerVector::new(v).unwrap();
            let c = complete_basis(&m);
            assert_eq!(dot_i(c.d[0], v), 0);
            assert_eq!(dot_i(c.d[1], v), 0);
            assert_eq!(dot_i(c.d[2], v), 1);
            assert_eq!(c.b[2], v);
            for i in 0..3 {
                for k in 0..3 {
                    assert_eq!(dot_i(c.b[i], c.d[k]), (i == k) as i64);
                }
            }
            let mut prev = 0.0;
            for j in 1..30u32 {
                let e = miller_sequence(&MillerTarget::Rational(m), j).unwrap();
                assert_eq!(dot_i(e.normal.components(), e.certificate), 1);
                assert!(e.normal.norm() > prev);
                prev = e.normal.norm();
            }
            let far = miller_sequence(&MillerTarget::Rational(m), 100_000).unwrap();
            assert!((far.normal.unit() - m.unit()).norm() < 1e-4);
        }
    }

    #[test]
    fn irrational_direction_sequence_converges() {
        let target = Vec3::new(1.0, 1.0, 2f64.sqrt()) / 2.0;
        let t = MillerTarget::Direction(target);
        let mut prev_angle = f64::INFINITY;
        let mut prev_norm = 0.0;
        for j in 1..=20 {
            let e = miller_sequence(&t, j).unwrap();
            let n = e.normal.as_vec3();
            assert_eq!(dot_i(e.normal.components(), e.certificate), 1);
            let angle = n.cross(&target).norm().atan2(n.dot(&target));
            assert!(angle < prev_angle, "j={j} angle={angle} prev={prev_angle}");
            assert!(e.normal.norm() > prev_norm);
            prev_angle = angle;
            prev_norm = e.normal.norm();
        }
        assert!(prev_angle < 1e-12);
    }

    #[test]
    fn sequence_rejects_bad_targets() {
        let bad = MillerTarget::Direction(Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(miller_sequence(&bad, 1), Err(Error::InvalidTarget(_))));
        let rational_as_direction = MillerTarget::Direction(Vec3::z());
        assert!(miller_sequence(&rational_as_direction, 1).is_err());
        assert_eq!(
            MillerTarget::from_direction(Vec3::new(1.0, 2.0, 3.0).normalize(), 100).unwrap(),
            MillerTarget::Rational(MillerVector::new([1, 2, 3]).unwrap())
        );
    }

    #[test]
    fn lattice_serde_round_trip() {
        let l = BravaisLattice::new([Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 1.0, 0.0), Vec3::new(0.0, 0.0, 2.0)])
            .unwrap();
        let s = serde_json::to_string(&l).unwrap();
        let back: BravaisLattice = serde_json::from_str(&s).unwrap();
        assert_eq!(l, back);
        assert_relative_eq!(l.cell_volume(), 2.0);
        let bad: std::result::Result<BravaisLattice, _> =
            serde_json::from_str(r#"{"basis":[[1,0,0],[2,0,0],[0,0,1]]}"#);
        assert!(bad.is_err());
    }
}

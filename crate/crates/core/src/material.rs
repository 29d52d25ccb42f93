//! Pair potentials, deformation maps and the Cauchy–Born stored energy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::InterfacePlane;
use crate::lattice::{enumerate_ball, BravaisLattice};
use crate::numerics::{compensated_sum, golden_section_min};
use crate::{Error, Mat3, Result, Vec3};

/// Below this, a deformation is treated as non-invertible.
pub const INVERTIBILITY_TOLERANCE: f64 = 1e-12;

/// Smallest singular value of `F`.
pub fn sigma_min(f: &Mat3) -> f64 {
    f.singular_values().min()
}

/// Parameters of the built-in radial profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `amplitude · (r − cutoff)²` inside the cutoff.
    QuadraticCutoff {
        cutoff: f64,
        #[serde(default = "unit_amplitude")]
        amplitude: f64,
    },
    /// Lennard-Jones, shifted in value and slope so both vanish at the cutoff.
    LjTruncatedShifted { sigma: f64, epsilon: f64, cutoff: f64 },
    /// Morse, shifted in value and slope so both vanish at the cutoff.
    MorseTruncated { depth: f64, alpha: f64, r0: f64, cutoff: f64 },
}

fn unit_amplitude() -> f64 {
    1.0
}

/// Regularity of the profile at the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
}

/// An even, finite-range pair potential `Φ(z) = φ(|z|)` with `Φ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpec", into = "PotentialSpec")]
pub struct PairPotential {
    spec: PotentialSpec,
    cutoff: f64,
    // value and slope of the unshifted profile at the cutoff
    shift: f64,
    slope: f64,
}

impl TryFrom<PotentialSpec> for PairPotential {
    type Error = Error;

    fn try_from(spec: PotentialSpec) -> Result<Self> {
        PairPotential::new(spec)
    }
}

impl From<PairPotential> for PotentialSpec {
    fn from(p: PairPotential) -> Self {
        p.spec
    }
}

impl fmt::Display for PairPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.spec)
    }
}

fn lj(sigma: f64, epsilon: f64, r: f64) -> (f64, f64) {
    let s6 = (sigma / r).powi(6);
    let s12 = s6 * s6;
    (4.0 * epsilon * (s12 - s6), 4.0 * epsilon * (-12.0 * s12 + 6.0 * s6) / r)
}

fn morse(depth: f64, alpha: f64, r0: f64, r: f64) -> (f64, f64) {
    let e = (-alpha * (r - r0)).exp();
    (depth * ((1.0 - e).powi(2) - 1.0), 2.0 * depth * alpha * (1.0 - e) * e)
}

impl PairPotential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let (cutoff, params): (f64, Vec<f64>) = match &spec {
            PotentialSpec::QuadraticCutoff { cutoff, amplitude } => (*cutoff, vec![*amplitude]),
            PotentialSpec::LjTruncatedShifted { sigma, epsilon, cutoff } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidPotential("sigma must be positive".into()));
                }
                (*cutoff, vec![*sigma, *epsilon])
            }
            PotentialSpec::MorseTruncated { depth, alpha, r0, cutoff } => (*cutoff, vec![*depth, *alpha, *r0]),
        };
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::InvalidPotential(format!("cutoff must be positive and finite, got {cutoff}")));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidPotential("parameters must be finite".into()));
        }
        let (shift, slope) = match &spec {
            PotentialSpec::QuadraticCutoff { .. } => (0.0, 0.0),
            PotentialSpec::LjTruncatedShifted { sigma, epsilon, .. } => lj(*sigma, *epsilon, cutoff),
            PotentialSpec::MorseTruncated { depth, alpha, r0, .. } => morse(*depth, *alpha, *r0, cutoff),
        };
        Ok(PairPotential {
            spec,
            cutoff,
            shift,
            slope,
        })
    }

    /// `(r − 2)²` for `r < 2`.
    pub fn reference() -> Self {
        Self::quadratic(2.0, 1.0)
    }

    pub fn quadratic(cutoff: f64, amplitude: f64) -> Self {
        Self::new(PotentialSpec::QuadraticCutoff { cutoff, amplitude }).expect("valid quadratic potential")
    }

    /// `Φ ≡ 0`.
    pub fn zero() -> Self {
        Self::quadratic(2.0, 0.0)
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Compact support satisfies every algebraic decay rate.
    pub fn decay_exponent(&self) -> f64 {
        f64::INFINITY
    }

    pub fn smoothness(&self) -> Smoothness {
        Smoothness::C1
    }

    /// `φ(r)`; zero for `r >= cutoff` and for `r <= 0`.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        if !(r > 0.0) || r >= self.cutoff {
            return 0.0;
        }
        match &self.spec {
            PotentialSpec::QuadraticCutoff { amplitude, .. } => amplitude * (r - self.cutoff) * (r - self.cutoff),
            PotentialSpec::LjTruncatedShifted { sigma, epsilon, .. } => {
                lj(*sigma, *epsilon, r).0 - self.shift - (r - self.cutoff) * self.slope
            }
            PotentialSpec::MorseTruncated { depth, alpha, r0, .. } => {
                morse(*depth, *alpha, *r0, r).0 - self.shift - (r - self.cutoff) * self.slope
            }
        }
    }

    /// `φ′(r)`; zero outside `(0, cutoff)`.
    pub fn derivative(&self, r: f64) -> f64 {
        if !(r > 0.0) || r >= self.cutoff {
            return 0.0;
        }
        match &self.spec {
            PotentialSpec::QuadraticCutoff { amplitude, .. } => 2.0 * amplitude * (r - self.cutoff),
            PotentialSpec::LjTruncatedShifted { sigma, epsilon, .. } => lj(*sigma, *epsilon, r).1 - self.slope,
            PotentialSpec::MorseTruncated { depth, alpha, r0, .. } => morse(*depth, *alpha, *r0, r).1 - self.slope,
        }
    }

    /// `Φ(z)`.
    #[inline]
    pub fn eval(&self, z: &Vec3) -> f64 {
        let r2 = z.norm_squared();
        if r2 >= self.cutoff * self.cutoff {
            return 0.0;
        }
        self.profile(r2.sqrt())
    }

    /// True when the profile is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.spec, PotentialSpec::QuadraticCutoff { amplitude, .. } if amplitude == 0.0)
    }
}

/// Builds a potential from a tag and named parameters.
pub fn builtin_potential(name: &str, params: &BTreeMap<String, f64>) -> Result<PairPotential> {
    let mut obj = serde_json::Map::new();
    obj.insert("type".into(), serde_json::Value::String(name.to_string()));
    for (k, v) in params {
        obj.insert(k.clone(), serde_json::json!(v));
    }
    let spec: PotentialSpec = serde_json::from_value(serde_json::Value::Object(obj))
        .map_err(|e| Error::InvalidPotential(format!("{name}: {e}")))?;
    PairPotential::new(spec)
}

/// A piecewise-affine map `F⁻x` on `(x − anchor)·n̂ <= 0` and `F⁺x` (shifted
/// to stay continuous) beyond, with `F⁺ = F⁻ + a ⊗ n̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseAffine {
    pub f_minus: Mat3,
    pub a: Vec3,
    pub plane: InterfacePlane,
}

impl PiecewiseAffine {
    pub fn f_plus(&self) -> Mat3 {
        self.f_minus + self.a * self.plane.unit_normal.transpose()
    }

    /// `tF⁺ + (1 − t)F⁻`.
    pub fn segment(&self, t: f64) -> Mat3 {
        self.f_minus + self.a * self.plane.unit_normal.transpose() * t
    }
}

pub type MapFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;
pub type GradientFn = dyn Fn(&Vec3) -> Mat3 + Send + Sync;

/// A user-supplied smooth map with its bi-Lipschitz constant.
#[derive(Clone)]
pub struct SmoothMap {
    pub map: Arc<MapFn>,
    pub gradient: Option<Arc<GradientFn>>,
    pub lambda: f64,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("gradient", &self.gradient.is_some())
            .field("lambda", &self.lambda)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Deformation {
    Affine(Mat3),
    PiecewiseAffine(PiecewiseAffine),
    Smooth(SmoothMap),
}

impl Deformation {
    pub fn identity() -> Self {
        Deformation::Affine(Mat3::identity())
    }

    pub fn affine(f: Mat3) -> Result<Self> {
        if !(f.determinant() > 0.0) {
            return Err(Error::NonInvertible(format!("det F = {} is not positive", f.determinant())));
        }
        Ok(Deformation::Affine(f))
    }

    /// Checks `det > 0` at both ends of the segment; `det(tF⁺ + (1−t)F⁻)` is
    /// affine in `t`, so this covers the whole segment.
    pub fn piecewise(f_minus: Mat3, a: Vec3, plane: InterfacePlane) -> Result<Self> {
        let pw = PiecewiseAffine { f_minus, a, plane };
        let (dm, dp) = (f_minus.determinant(), pw.f_plus().determinant());
        if !(dm > 0.0) || !(dp > 0.0) {
            return Err(Error::NonInvertible(format!("det F⁻ = {dm}, det F⁺ = {dp}")));
        }
        Ok(Deformation::PiecewiseAffine(pw))
    }

    pub fn smooth(map: Arc<MapFn>, gradient: Option<Arc<GradientFn>>, lambda: f64) -> Result<Self> {
        if !(lambda > INVERTIBILITY_TOLERANCE) {
            return Err(Error::NonInvertible(format!("bi-Lipschitz constant {lambda}")));
        }
        Ok(Deformation::Smooth(SmoothMap { map, gradient, lambda }))
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        match self {
            Deformation::Affine(f) => f * x,
            Deformation::PiecewiseAffine(pw) => {
                let s = pw.plane.side(x);
                if s > 0.0 {
                    pw.f_minus * x + pw.a * s
                } else {
                    pw.f_minus * x
                }
            }
            Deformation::Smooth(m) => (m.map)(x),
        }
    }

    /// `y(εp)/ε`, the image in lattice units.
    pub fn scaled_image(&self, p: &Vec3, eps: f64) -> Vec3 {
        match self {
            Deformation::Affine(f) => f * p,
            _ => self.apply(&(p * eps)) / eps,
        }
    }

    /// `∇y(x)`; central differences when a smooth map has no gradient.
    pub fn gradient_at(&self, x: &Vec3) -> Mat3 {
        match self {
            Deformation::Affine(f) => *f,
            Deformation::PiecewiseAffine(pw) => {
                if pw.plane.side(x) > 0.0 {
                    pw.f_plus()
                } else {
                    pw.f_minus
                }
            }
            Deformation::Smooth(m) => match &m.gradient {
                Some(g) => g(x),
                None => {
                    let h = 1e-6 * (1.0 + x.norm());
                    let mut out = Mat3::zeros();
                    for j in 0..3 {
                        let mut e = Vec3::zeros();
                        e[j] = h;
                        out.set_column(j, &(((m.map)(&(x + e)) - (m.map)(&(x - e))) / (2.0 * h)));
                    }
                    out
                }
            },
        }
    }
}

/// `min_t σ_min(tB + (1 − t)A)` over `t ∈ [0, 1]`: a 200-point scan refined by
/// golden-section search around the best grid point.
pub fn segment_sigma_min(a: &Mat3, b: &Mat3) -> f64 {
    let f = |t: f64| sigma_min(&(a + (b - a) * t));
    let n: usize = 200;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=n {
        let v = f(i as f64 / n as f64);
        if v < best.1 {
            best = (i, v);
        }
    }
    let lo = best.0.saturating_sub(1) as f64 / n as f64;
    let hi = (best.0 + 1).min(n) as f64 / n as f64;
    best.1.min(golden_section_min(f, lo, hi, 1e-12).1)
}

/// `λ` with `|y(z) − y(x)| >= λ|z − x|`. For a piecewise-affine map every
/// difference quotient is a convex combination of `F⁻` and `F⁺` applied to
/// `z − x`, so the segment minimum is a valid bound.
pub fn bilipschitz_lower_bound(d: &Deformation) -> Result<f64> {
    let lambda = match d {
        Deformation::Affine(f) => sigma_min(f),
        Deformation::PiecewiseAffine(pw) => segment_sigma_min(&pw.f_minus, &pw.f_plus()),
        Deformation::Smooth(m) => m.lambda,
    };
    if !(lambda > INVERTIBILITY_TOLERANCE) {
        return Err(Error::NonInvertible(format!("bi-Lipschitz bound {lambda}")));
    }
    Ok(lambda)
}

/// `W(F) = (1/(2|K|)) Σ_w Φ(Fw)`, the stored energy per unit reference volume.
pub fn cauchy_born_w(phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3) -> Result<f64> {
    let s = sigma_min(f);
    if !(s > INVERTIBILITY_TOLERANCE) {
        return Err(Error::NonInvertible(format!("σ_min(F) = {s}")));
    }
    let shell = enumerate_ball(lattice, phi.cutoff() / s * (1.0 + 1e-9));
    let sum = compensated_sum(shell.iter().map(|w| phi.eval(&(f * w.cart))));
    Ok(0.5 * sum / lattice.cell_volume())
}

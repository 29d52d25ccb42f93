//! Discrete and cell-averaged energies and the surface and interfacial
//! energy densities of their small-ε expansions.
//!
//! All densities are per unit reference volume or area, so lattice sums carry
//! a factor `1/|K|`; for the integer lattice this factor is 1.

use serde::{Deserialize, Serialize};

use crate::geometry::{cross_section_area, split_by_plane, ConvexPolytope, Facet, InterfacePlane};
use crate::lattice::{enumerate_ball, enumerate_shifted, BoundaryRule, BravaisLattice, LatticeVector, MillerVector};
use crate::material::{bilipschitz_lower_bound, cauchy_born_w, segment_sigma_min, sigma_min, Deformation, PairPotential, PiecewiseAffine, SmoothMap};
use crate::numerics::{adaptive_simpson, compensated_sum, deterministic_par_sum, integrate_tetrahedron, integrate_triangle, GaussLegendre, NeumaierSum};
use crate::{Error, Mat3, Result, Vec3};

/// Relative tolerance of the Hadamard rank-one check.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;

/// Slack on enumeration radii so that bonds of length exactly `R` are visited
/// (and then contribute zero).
const RADIUS_SLACK: f64 = 1e-9;

/// Quadrature settings for the integral paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    /// Gauss–Legendre order for the `t`-integrals of `σ̂`.
    pub gauss_order: usize,
    /// Target of the adaptive Simpson rule for slab cross terms.
    pub simpson_tol: f64,
    /// Gauss order per axis on each tetrahedron for smooth maps.
    pub smooth_order: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            gauss_order: 32,
            simpson_tol: 1e-10,
            smooth_order: 8,
        }
    }
}

/// Lattice vectors `w ≠ 0` with `|w| <= radius`.
pub(crate) fn shell(lattice: &BravaisLattice, radius: f64) -> Vec<LatticeVector> {
    enumerate_ball(lattice, radius * (1.0 + RADIUS_SLACK))
        .into_iter()
        .filter(|w| w.coords != [0, 0, 0])
        .collect()
}

pub(crate) fn check_scale(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    Ok(())
}

/// Value of a discrete energy together with the number of atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEnergy {
    pub value: f64,
    pub atom_count: usize,
}

/// `E = (ε³/2) Σ_{x,z ∈ Ω∩εL} Φ((y(z) − y(x))/ε)`.
pub fn discrete_energy(
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    eps: f64,
    d: &Deformation,
    phi: &PairPotential,
    rule: &BoundaryRule,
) -> Result<DiscreteEnergy> {
    discrete_energy_shifted(omega, lattice, eps, &Vec3::zeros(), d, phi, rule)
}

/// The discrete energy of the translated body `Ω ∩ (u + εL)`.
///
/// Neighbors are found through a dense index over the lattice-coordinate box
/// of the atoms, searching lattice offsets of length up to `R/λ`: farther
/// pairs cannot interact because `|y(z) − y(x)| >= λ|z − x|`.
pub fn discrete_energy_shifted(
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    eps: f64,
    offset: &Vec3,
    d: &Deformation,
    phi: &PairPotential,
    rule: &BoundaryRule,
) -> Result<DiscreteEnergy> {
    check_scale(eps)?;
    let lambda = bilipschitz_lower_bound(d)?;
    let offsets = shell(lattice, phi.cutoff() / lambda);
    discrete_energy_with_shell(omega, lattice, eps, offset, d, phi, rule, &offsets)
}

/// [`discrete_energy_shifted`] with the bond shell precomputed, for callers
/// that sweep many offsets.
#[allow(clippy::too_many_arguments)]
pub(crate) fn discrete_energy_with_shell(
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    eps: f64,
    offset: &Vec3,
    d: &Deformation,
    phi: &PairPotential,
    rule: &BoundaryRule,
    offsets: &[LatticeVector],
) -> Result<DiscreteEnergy> {
    let atoms = enumerate_shifted(lattice, eps, offset, omega, rule)?;
    let n = atoms.len();
    if n < 2 || phi.is_zero() {
        return Ok(DiscreteEnergy { value: 0.0, atom_count: n });
    }
    let images: Vec<Vec3> = atoms.points.iter().map(|x| d.apply(x) / eps).collect();

    let mut lo = atoms.coords[0];
    let mut hi = atoms.coords[0];
    for c in &atoms.coords {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let dims = [
        (hi[0] - lo[0] + 1) as usize,
        (hi[1] - lo[1] + 1) as usize,
        (hi[2] - lo[2] + 1) as usize,
    ];
    let mut index = vec![u32::MAX; dims[0] * dims[1] * dims[2]];
    let slot = |c: [i64; 3]| -> Option<usize> {
        let mut s = 0usize;
        for k in 0..3 {
            let v = c[k] - lo[k];
            if v < 0 || v as usize >= dims[k] {
                return None;
            }
            s = s * dims[k] + v as usize;
        }
        Some(s)
    };
    for (i, c) in atoms.coords.iter().enumerate() {
        index[slot(*c).expect("inside box")] = i as u32;
    }
    let sum = deterministic_par_sum(n, |i, acc| {
        let c = atoms.coords[i];
        for w in offsets {
            let nb = [c[0] + w.coords[0], c[1] + w.coords[1], c[2] + w.coords[2]];
            if let Some(s) = slot(nb) {
                let j = index[s];
                if j != u32::MAX {
                    acc.add(phi.eval(&(images[j as usize] - images[i])));
                }
            }
        }
    });
    Ok(DiscreteEnergy {
        value: 0.5 * eps.powi(3) * sum,
        atom_count: n,
    })
}

/// The cell average `Ē = (1/(2|K|)) Σ_w ∫_Ω χ_Ω(x+εw) Φ((y(x+εw) − y(x))/ε) dx`.
///
/// Affine maps use exact intersection volumes. Piecewise-affine maps add to
/// the exact same-phase terms the cross terms between the phases, whose
/// integrands depend only on the distance to the interface. Smooth maps are
/// integrated with a collapsed Gauss rule on a tetrahedral decomposition of
/// each `Ω ∩ (Ω − εw)`.
pub fn cell_avg_energy(
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    eps: f64,
    d: &Deformation,
    phi: &PairPotential,
    opts: &QuadratureOptions,
) -> Result<f64> {
    check_scale(eps)?;
    let lambda = bilipschitz_lower_bound(d)?;
    if phi.is_zero() || omega.is_empty() {
        return Ok(0.0);
    }
    let ws = shell(lattice, phi.cutoff() / lambda);
    let sum = match d {
        Deformation::Affine(f) => deterministic_par_sum(ws.len(), |i, acc| {
            let v = phi.eval(&(f * ws[i].cart));
            if v != 0.0 {
                acc.add(omega.intersect_translate(&(ws[i].cart * eps)).volume() * v);
            }
        }),
        Deformation::PiecewiseAffine(pw) => {
            let split = split_by_plane(omega, &pw.plane)?;
            let (fp, fm) = (pw.f_plus(), pw.f_minus);
            deterministic_par_sum(ws.len(), |i, acc| {
                let w = &ws[i];
                let shift = w.cart * eps;
                let vp = phi.eval(&(fp * w.cart));
                if vp != 0.0 {
                    acc.add(split.plus.intersect_translate(&shift).volume() * vp);
                }
                let vm = phi.eval(&(fm * w.cart));
                if vm != 0.0 {
                    acc.add(split.minus.intersect_translate(&shift).volume() * vm);
                }
                acc.add(interface_cross_term(&split.plus, &split.minus, pw, w, eps, phi, opts.simpson_tol));
            })
        }
        Deformation::Smooth(m) => {
            let rule = GaussLegendre::new(opts.smooth_order);
            deterministic_par_sum(ws.len(), |i, acc| {
                acc.add(smooth_term(omega, m, &ws[i], eps, phi, &rule));
            })
        }
    };
    Ok(0.5 * sum / lattice.cell_volume())
}

/// `∫ Φ((ŷ(x+εw) − ŷ(x))/ε) dx` over the points `x` whose bond `x → x+εw`
/// crosses the interface.
fn interface_cross_term(
    plus: &ConvexPolytope,
    minus: &ConvexPolytope,
    pw: &PiecewiseAffine,
    w: &LatticeVector,
    eps: f64,
    phi: &PairPotential,
    tol: f64,
) -> f64 {
    let n = pw.plane.unit_normal;
    let c = pw.plane.offset();
    let wn = w.cart.dot(&n);
    let shift = w.cart * eps;
    // argument of Φ as p + q s with s = (x − anchor)·n̂
    let fm_w = pw.f_minus * w.cart;
    let (region, p, q) = if wn > 0.0 {
        (minus.intersect_translated(plus, &shift), fm_w + pw.a * wn, pw.a / eps)
    } else if wn < 0.0 {
        (plus.intersect_translated(minus, &shift), fm_w, -pw.a / eps)
    } else {
        return 0.0;
    };
    if region.is_empty() {
        return 0.0;
    }
    let mut breaks: Vec<f64> = region.vertices().iter().map(|v| v.dot(&n) - c).collect();
    let (s0, s1) = breaks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let r = phi.cutoff();
    let (qa, qb, qc) = (q.norm_squared(), 2.0 * p.dot(&q), p.norm_squared() - r * r);
    if qa > 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let sq = disc.sqrt();
            for root in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if root > s0 && root < s1 {
                    breaks.push(root);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (s1 - s0));
    let integrand = |s: f64| {
        let v = phi.eval(&(p + q * s));
        if v == 0.0 {
            0.0
        } else {
            v * cross_section_area(&region, &n, s + c)
        }
    };
    let mut acc = NeumaierSum::new();
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b > a {
            acc.add(adaptive_simpson(&integrand, a, b, tol * (b - a)));
        }
    }
    acc.value()
}

fn smooth_term(omega: &ConvexPolytope, m: &SmoothMap, w: &LatticeVector, eps: f64, phi: &PairPotential, rule: &GaussLegendre) -> f64 {
    let shift = w.cart * eps;
    let region = omega.intersect_translate(&shift);
    if region.is_empty() {
        return 0.0;
    }
    let mut acc = NeumaierSum::new();
    for tet in region.tetrahedra() {
        acc.add(integrate_tetrahedron(rule, tet, |x| {
            phi.eval(&(((m.map)(&(x + shift)) - (m.map)(x)) / eps))
        }));
    }
    acc.value()
}

fn unit(n: &Vec3) -> Result<Vec3> {
    let len = n.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(n / len)
}

fn require_invertible(f: &Mat3) -> Result<f64> {
    let s = sigma_min(f);
    if !(s > crate::material::INVERTIBILITY_TOLERANCE) {
        return Err(Error::NonInvertible(format!("σ_min(F) = {s}")));
    }
    Ok(s)
}

/// Cauchy–Born density `W(F)`.
pub fn stored_energy(phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3) -> Result<f64> {
    cauchy_born_w(phi, lattice, f)
}

/// `γ(F, n) = −(1/(4|K|)) Σ_w |w·n| Φ(Fw)`; `n` is normalized first.
pub fn gamma(phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3, n: &Vec3) -> Result<f64> {
    let n = unit(n)?;
    let s = require_invertible(f)?;
    let ws = shell(lattice, phi.cutoff() / s);
    let sum = compensated_sum(ws.iter().map(|w| w.cart.dot(&n).abs() * phi.eval(&(f * w.cart))));
    Ok(-0.25 * sum / lattice.cell_volume())
}

/// `γ⋄(F, 𝐧) = −(1/(4|K|)) Σ_w (|w·𝐧| − 1)/|𝐧| Φ(Fw)` for a Miller normal `𝐧`.
pub fn gamma_diamond(phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3, m: &MillerVector) -> Result<f64> {
    let s = require_invertible(f)?;
    let len = lattice.miller_normal(m).norm();
    let ws = shell(lattice, phi.cutoff() / s);
    let sum = compensated_sum(ws.iter().map(|w| (m.pair(&w.coords).abs() as f64 - 1.0) * phi.eval(&(f * w.cart))));
    Ok(-0.25 * sum / (len * lattice.cell_volume()))
}

/// Returns `a` with `F⁺ − F⁻ = a ⊗ n̂`, or an error when the jump is not rank one along `n̂`.
pub fn hadamard_amplitude(f_plus: &Mat3, f_minus: &Mat3, n: &Vec3) -> Result<Vec3> {
    let n = unit(n)?;
    let jump = f_plus - f_minus;
    let a = jump * n;
    let residual = (jump - a * n.transpose()).norm();
    let scale = 1.0f64.max(f_plus.norm()).max(f_minus.norm());
    if residual > COMPATIBILITY_TOLERANCE * scale {
        return Err(Error::Incompatible(format!(
            "F⁺ − F⁻ differs from a rank-one jump along {n:?} by {residual:e}"
        )));
    }
    Ok(a)
}

fn segment_lambda(f_minus: &Mat3, f_plus: &Mat3) -> Result<f64> {
    let lam = segment_sigma_min(f_minus, f_plus);
    if !(lam > crate::material::INVERTIBILITY_TOLERANCE) {
        return Err(Error::NonInvertible(format!("segment F⁻ → F⁺ reaches σ_min = {lam}")));
    }
    Ok(lam)
}

/// `∫₀¹ Φ(p + t q) dt`, split where `|p + tq|` crosses the cutoff.
fn segment_integral(phi: &PairPotential, p: &Vec3, q: &Vec3, rule: &GaussLegendre) -> f64 {
    let r = phi.cutoff();
    let (qa, qb, qc) = (q.norm_squared(), 2.0 * p.dot(q), p.norm_squared() - r * r);
    let mut breaks = vec![0.0, 1.0];
    if qa > 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let sq = disc.sqrt();
            for root in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if root > 0.0 && root < 1.0 {
                    breaks.push(root);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let mut acc = NeumaierSum::new();
    for win in breaks.windows(2) {
        acc.add(rule.integrate(win[0], win[1], |t| phi.eval(&(p + q * t))));
    }
    acc.value()
}

/// Interfacial density `σ` and interaction energy `σ̂ = −2 ∫₀¹ γ(tF⁺ + (1−t)F⁻, n̂) dt`,
/// returned as `(σ, σ̂)`.
pub fn sigma(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_plus: &Mat3,
    f_minus: &Mat3,
    n: &Vec3,
    gauss_order: usize,
) -> Result<(f64, f64)> {
    let n = unit(n)?;
    let a = hadamard_amplitude(f_plus, f_minus, &n)?;
    let lam = segment_lambda(f_minus, f_plus)?;
    let rule = GaussLegendre::new(gauss_order.max(1));
    let ws = shell(lattice, phi.cutoff() / lam);
    let hat = deterministic_par_sum(ws.len(), |i, acc| {
        let w = &ws[i];
        let wn = w.cart.dot(&n);
        if wn != 0.0 {
            acc.add(wn.abs() * segment_integral(phi, &(f_minus * w.cart), &(a * wn), &rule));
        }
    }) * 0.5
        / lattice.cell_volume();
    let total = gamma(phi, lattice, f_plus, &n)? + gamma(phi, lattice, f_minus, &n)? + hat;
    Ok((total, hat))
}

/// Bracket of the discrete interaction energy for one bond `w` with
/// `K = |w·ñ| >= 1` subintervals.
fn tau_bracket(phi: &PairPotential, f_minus: &Mat3, jump: &Mat3, w: &Vec3, k: i64) -> f64 {
    let base = f_minus * w;
    let step = jump * w;
    let mut acc = NeumaierSum::new();
    acc.add(0.5 * phi.eval(&base));
    acc.add(0.5 * phi.eval(&(base + step)));
    for j in 1..k {
        acc.add(phi.eval(&(base + step * (j as f64 / k as f64))));
    }
    acc.value()
}

/// Interfacial density `τ` and interaction energy `τ̂` on the crystallographic
/// plane with Miller normal `ñ`, returned as `(τ, τ̂)`.
///
/// Bonds parallel to the plane (`w·ñ = 0`) do not cross it and are left out
/// of `τ̂`, matching the trapezoid form in which they carry weight zero.
pub fn tau(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_plus: &Mat3,
    f_minus: &Mat3,
    m: &MillerVector,
) -> Result<(f64, f64)> {
    let nt = lattice.miller_normal(m);
    let n = nt.normalize();
    hadamard_amplitude(f_plus, f_minus, &n)?;
    let lam = segment_lambda(f_minus, f_plus)?;
    let jump = f_plus - f_minus;
    let ws = shell(lattice, phi.cutoff() / lam);
    let sum = deterministic_par_sum(ws.len(), |i, acc| {
        let k = m.pair(&ws[i].coords).abs();
        if k > 0 {
            acc.add(tau_bracket(phi, f_minus, &jump, &ws[i].cart, k));
        }
    });
    let hat = sum / (2.0 * nt.norm() * lattice.cell_volume());
    let total = gamma(phi, lattice, f_plus, &n)? + gamma(phi, lattice, f_minus, &n)? + hat;
    Ok((total, hat))
}

/// `τ̂` through trapezoidal sums: `(1/(2|F⁺−F⁻|)) Σ_w |w·n̂| T[Φ_w; F⁻, F⁺, |w·ñ|]`.
pub fn tau_trapezoid_form(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_plus: &Mat3,
    f_minus: &Mat3,
    m: &MillerVector,
) -> Result<f64> {
    let n = lattice.miller_normal(m).normalize();
    hadamard_amplitude(f_plus, f_minus, &n)?;
    let span = (f_plus - f_minus).norm();
    if span == 0.0 {
        return Err(Error::InvalidArgument("the trapezoid form needs F⁺ ≠ F⁻".into()));
    }
    let lam = segment_lambda(f_minus, f_plus)?;
    let ws = shell(lattice, phi.cutoff() / lam);
    let mut acc = NeumaierSum::new();
    for w in &ws {
        let k = m.pair(&w.coords).unsigned_abs() as usize;
        if k > 0 {
            let t = trapezoid_sum(|f: &Mat3| phi.eval(&(f * w.cart)), f_minus, f_plus, k)?;
            acc.add(w.cart.dot(&n).abs() * t);
        }
    }
    Ok(acc.value() / (2.0 * span * lattice.cell_volume()))
}

/// Points of a normed affine space along which trapezoidal sums are taken.
pub trait PathPoint: Sized {
    fn lerp(a: &Self, b: &Self, t: f64) -> Self;
    fn distance(a: &Self, b: &Self) -> f64;
}

impl PathPoint for f64 {
    fn lerp(a: &Self, b: &Self, t: f64) -> Self {
        a + (b - a) * t
    }
    fn distance(a: &Self, b: &Self) -> f64 {
        (b - a).abs()
    }
}

impl PathPoint for Vec3 {
    fn lerp(a: &Self, b: &Self, t: f64) -> Self {
        a + (b - a) * t
    }
    fn distance(a: &Self, b: &Self) -> f64 {
        (b - a).norm()
    }
}

/// Frobenius norm.
impl PathPoint for Mat3 {
    fn lerp(a: &Self, b: &Self, t: f64) -> Self {
        a + (b - a) * t
    }
    fn distance(a: &Self, b: &Self) -> f64 {
        (b - a).norm()
    }
}

/// `T[f; a, b, K] = (|b−a|/K) Σ_{j<K} ½[f(x_j) + f(x_{j+1})]`, `x_j = a + (j/K)(b − a)`.
pub fn trapezoid_sum<P: PathPoint, F: Fn(&P) -> f64>(f: F, a: &P, b: &P, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("trapezoid partition number must be positive".into()));
    }
    let mut acc = NeumaierSum::new();
    acc.add(0.5 * f(a));
    acc.add(0.5 * f(b));
    for j in 1..k {
        acc.add(f(&P::lerp(a, b, j as f64 / k as f64)));
    }
    Ok(P::distance(a, b) / k as f64 * acc.value())
}

/// `∫_∂Ω density(x, facet) dA`, with a collapsed Gauss rule of the given
/// order on each facet triangle (order 1 is exact for facet-wise constants).
pub fn surface_integral<F: Fn(&Vec3, &Facet) -> f64>(poly: &ConvexPolytope, density: F, order: usize) -> f64 {
    let rule = GaussLegendre::new(order.max(1));
    let mut acc = NeumaierSum::new();
    for f in poly.facets() {
        for i in 1..f.ring.len() - 1 {
            acc.add(integrate_triangle(&rule, [f.ring[0], f.ring[i], f.ring[i + 1]], |x| density(x, f)));
        }
    }
    acc.value()
}

/// `Σ_f area_f · density(facet)` for facet-wise constant densities.
pub fn facet_sum<F: Fn(&Facet) -> Result<f64>>(poly: &ConvexPolytope, density: F) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    for f in poly.facets() {
        acc.add(f.area * density(f)?);
    }
    Ok(acc.value())
}

/// A measured energy next to the terms of its predicted expansion
/// `bulk + ε (surface + interface)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub label: String,
    pub epsilon: f64,
    pub total: f64,
    pub bulk_prediction: f64,
    pub surface_prediction: f64,
    pub interface_prediction: f64,
    pub atom_count: Option<usize>,
}

/// One CSV line of an [`EnergyBreakdown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub label: String,
    pub eps: f64,
    pub value: f64,
    pub bulk: f64,
    pub surface: f64,
    pub interface: f64,
    pub residual: f64,
}

impl EnergyBreakdown {
    pub fn prediction(&self) -> f64 {
        self.bulk_prediction + self.epsilon * (self.surface_prediction + self.interface_prediction)
    }

    /// `(total − prediction)/ε`.
    pub fn scaled_residual(&self) -> f64 {
        (self.total - self.prediction()) / self.epsilon
    }

    pub fn row(&self) -> EnergyRow {
        EnergyRow {
            label: self.label.clone(),
            eps: self.epsilon,
            value: self.total,
            bulk: self.bulk_prediction,
            surface: self.surface_prediction,
            interface: self.interface_prediction,
            residual: self.scaled_residual(),
        }
    }
}

/// Which expansion to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    /// Cell average of an affine (or smooth) map: `∫W + ε∫γ`.
    CellAvgAffine,
    /// Cell average with a phase boundary: adds `ε|Σ|σ`.
    CellAvgInterface,
    /// Discrete energy of a lattice polyhedron: `∫W + ε∫γ⋄`.
    DiscretePolyhedron,
    /// Discrete energy with a crystallographic phase boundary: adds `ε|Σ|τ`.
    DiscreteInterface,
}

/// Coefficients of `E ≈ bulk + ε (surface + interface)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Expansion {
    pub bulk: f64,
    pub surface: f64,
    pub interface: f64,
}

impl Expansion {
    pub fn at(&self, eps: f64) -> f64 {
        self.bulk + eps * (self.surface + self.interface)
    }

    pub fn breakdown(&self, label: &str, eps: f64, total: f64, atom_count: Option<usize>) -> EnergyBreakdown {
        EnergyBreakdown {
            label: label.to_string(),
            epsilon: eps,
            total,
            bulk_prediction: self.bulk,
            surface_prediction: self.surface,
            interface_prediction: self.interface,
            atom_count,
        }
    }
}

fn require_miller(f: &Facet) -> Result<MillerVector> {
    f.miller.ok_or_else(|| {
        Error::InconsistentScene(format!("facet with normal {:?} has no Miller normal", f.normal.as_slice()))
    })
}

/// Facet sum over the outer boundary of one phase, skipping the interface cap.
fn phase_surface<F: Fn(&Facet) -> Result<f64>>(poly: &ConvexPolytope, cap: usize, density: F) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    for (i, f) in poly.facets().iter().enumerate() {
        if i != cap {
            acc.add(f.area * density(f)?);
        }
    }
    Ok(acc.value())
}

/// Assembles the predicted bulk, surface and interface coefficients.
pub fn predict_expansion(
    kind: ExpansionKind,
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    d: &Deformation,
    phi: &PairPotential,
    opts: &QuadratureOptions,
) -> Result<Expansion> {
    match (kind, d) {
        (ExpansionKind::CellAvgAffine, Deformation::Affine(f)) => Ok(Expansion {
            bulk: omega.volume() * cauchy_born_w(phi, lattice, f)?,
            surface: facet_sum(omega, |fc| gamma(phi, lattice, f, &fc.normal))?,
            interface: 0.0,
        }),
        (ExpansionKind::CellAvgAffine, Deformation::Smooth(_)) => {
            let rule = GaussLegendre::new(opts.smooth_order);
            let mut bulk = NeumaierSum::new();
            for tet in omega.tetrahedra() {
                let mut err = None;
                bulk.add(integrate_tetrahedron(&rule, tet, |x| {
                    cauchy_born_w(phi, lattice, &d.gradient_at(x)).unwrap_or_else(|e| {
                        err = Some(e);
                        0.0
                    })
                }));
                if let Some(e) = err {
                    return Err(e);
                }
            }
            let surface = surface_integral(
                omega,
                |x, fc| gamma(phi, lattice, &d.gradient_at(x), &fc.normal).unwrap_or(f64::NAN),
                opts.smooth_order,
            );
            if !surface.is_finite() {
                return Err(Error::NonInvertible("surface gradient is singular".into()));
            }
            Ok(Expansion {
                bulk: bulk.value(),
                surface,
                interface: 0.0,
            })
        }
        (ExpansionKind::CellAvgInterface, Deformation::PiecewiseAffine(pw)) => {
            let split = split_by_plane(omega, &pw.plane)?;
            let (fp, fm) = (pw.f_plus(), pw.f_minus);
            let n = pw.plane.unit_normal;
            Ok(Expansion {
                bulk: split.plus.volume() * cauchy_born_w(phi, lattice, &fp)?
                    + split.minus.volume() * cauchy_born_w(phi, lattice, &fm)?,
                surface: phase_surface(&split.plus, split.plus_cap, |fc| gamma(phi, lattice, &fp, &fc.normal))?
                    + phase_surface(&split.minus, split.minus_cap, |fc| gamma(phi, lattice, &fm, &fc.normal))?,
                interface: split.interface_area * sigma(phi, lattice, &fp, &fm, &n, opts.gauss_order)?.0,
            })
        }
        (ExpansionKind::DiscretePolyhedron, Deformation::Affine(f)) => Ok(Expansion {
            bulk: omega.volume() * cauchy_born_w(phi, lattice, f)?,
            surface: facet_sum(omega, |fc| gamma_diamond(phi, lattice, f, &require_miller(fc)?))?,
            interface: 0.0,
        }),
        (ExpansionKind::DiscreteInterface, Deformation::PiecewiseAffine(pw)) => {
            let m = pw
                .plane
                .miller
                .ok_or_else(|| Error::InconsistentScene("the interface needs a Miller normal".into()))?;
            let split = split_by_plane(omega, &pw.plane)?;
            let (fp, fm) = (pw.f_plus(), pw.f_minus);
            Ok(Expansion {
                bulk: split.plus.volume() * cauchy_born_w(phi, lattice, &fp)?
                    + split.minus.volume() * cauchy_born_w(phi, lattice, &fm)?,
                surface: phase_surface(&split.plus, split.plus_cap, |fc| {
                    gamma_diamond(phi, lattice, &fp, &require_miller(fc)?)
                })? + phase_surface(&split.minus, split.minus_cap, |fc| {
                    gamma_diamond(phi, lattice, &fm, &require_miller(fc)?)
                })?,
                interface: split.interface_area * tau(phi, lattice, &fp, &fm, &m)?.0,
            })
        }
        (kind, _) => Err(Error::InconsistentScene(format!(
            "{kind:?} does not apply to this deformation"
        ))),
    }
}

/// Which density a [`DensityRow`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityLabel {
    #[serde(rename = "W")]
    W,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "gamma_diamond")]
    GammaDiamond,
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "sigma_hat")]
    SigmaHat,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "tau_hat")]
    TauHat,
}

impl DensityLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityLabel::W => "W",
            DensityLabel::Gamma => "gamma",
            DensityLabel::GammaDiamond => "gamma_diamond",
            DensityLabel::Sigma => "sigma",
            DensityLabel::SigmaHat => "sigma_hat",
            DensityLabel::Tau => "tau",
            DensityLabel::TauHat => "tau_hat",
        }
    }
}

/// One evaluated density. `gradients` is `[F]` or `[F⁺, F⁻]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub label: DensityLabel,
    pub gradients: Vec<Mat3>,
    pub normal: Option<Vec3>,
    pub miller: Option<MillerVector>,
    pub value: f64,
}

fn fmt_matrix(m: &Mat3) -> String {
    let rows: Vec<String> = (0..3)
        .map(|i| format!("{} {} {}", m[(i, 0)], m[(i, 1)], m[(i, 2)]))
        .collect();
    rows.join("; ")
}

impl DensityRow {
    /// `[label, F, normal, value]` as CSV fields.
    pub fn csv_fields(&self) -> [String; 4] {
        let f = self.gradients.iter().map(fmt_matrix).collect::<Vec<_>>().join(" | ");
        let normal = match (&self.miller, &self.normal) {
            (Some(m), _) => m.to_string(),
            (None, Some(n)) => format!("{} {} {}", n.x, n.y, n.z),
            (None, None) => String::new(),
        };
        [self.label.as_str().to_string(), f, normal, format!("{}", self.value)]
    }
}

/// A list of evaluated densities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DensityTable {
    pub rows: Vec<DensityRow>,
}

impl DensityTable {
    pub fn push_w(&mut self, phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3) -> Result<f64> {
        let value = cauchy_born_w(phi, lattice, f)?;
        self.rows.push(DensityRow {
            label: DensityLabel::W,
            gradients: vec![*f],
            normal: None,
            miller: None,
            value,
        });
        Ok(value)
    }

    pub fn push_gamma(&mut self, phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3, n: &Vec3) -> Result<f64> {
        let value = gamma(phi, lattice, f, n)?;
        self.rows.push(DensityRow {
            label: DensityLabel::Gamma,
            gradients: vec![*f],
            normal: Some(unit(n)?),
            miller: None,
            value,
        });
        Ok(value)
    }

    pub fn push_gamma_diamond(&mut self, phi: &PairPotential, lattice: &BravaisLattice, f: &Mat3, m: &MillerVector) -> Result<f64> {
        let value = gamma_diamond(phi, lattice, f, m)?;
        self.rows.push(DensityRow {
            label: DensityLabel::GammaDiamond,
            gradients: vec![*f],
            normal: Some(lattice.miller_normal(m).normalize()),
            miller: Some(*m),
            value,
        });
        Ok(value)
    }

    /// Pushes `σ` and `σ̂`.
    pub fn push_sigma(
        &mut self,
        phi: &PairPotential,
        lattice: &BravaisLattice,
        f_plus: &Mat3,
        f_minus: &Mat3,
        n: &Vec3,
        gauss_order: usize,
    ) -> Result<(f64, f64)> {
        let (s, hat) = sigma(phi, lattice, f_plus, f_minus, n, gauss_order)?;
        for (label, value) in [(DensityLabel::Sigma, s), (DensityLabel::SigmaHat, hat)] {
            self.rows.push(DensityRow {
                label,
                gradients: vec![*f_plus, *f_minus],
                normal: Some(unit(n)?),
                miller: None,
                value,
            });
        }
        Ok((s, hat))
    }

    /// Pushes `τ` and `τ̂`.
    pub fn push_tau(
        &mut self,
        phi: &PairPotential,
        lattice: &BravaisLattice,
        f_plus: &Mat3,
        f_minus: &Mat3,
        m: &MillerVector,
    ) -> Result<(f64, f64)> {
        let (t, hat) = tau(phi, lattice, f_plus, f_minus, m)?;
        for (label, value) in [(DensityLabel::Tau, t), (DensityLabel::TauHat, hat)] {
            self.rows.push(DensityRow {
                label,
                gradients: vec![*f_plus, *f_minus],
                normal: Some(lattice.miller_normal(m).normalize()),
                miller: Some(*m),
                value,
            });
        }
        Ok((t, hat))
    }
}

/// Interface plane through the origin with Miller normal `m`, and the
/// piecewise map `F⁻`, `F⁺ = F⁻ + a ⊗ n̂` across it.
pub fn crystallographic_twin(lattice: &BravaisLattice, m: MillerVector, f_minus: Mat3, a: Vec3) -> Result<Deformation> {
    Deformation::piecewise(f_minus, a, InterfacePlane::from_miller(lattice, m))
}

//! ε-schedules, least-squares fits of `E ≈ c₀ + c₁ε (+ c₂ε²)`, and the
//! convergence studies built on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{
    cell_avg_energy, discrete_energy, gamma, gamma_diamond, predict_expansion, sigma, tau, Expansion,
    ExpansionKind, QuadratureOptions,
};
use crate::geometry::{offset_facets, ConvexPolytope};
use crate::lattice::{count_shifted, miller_sequence, BoundaryRule, BravaisLattice, MillerTarget, MillerVector};
use crate::material::{cauchy_born_w, Deformation, PairPotential};
use crate::{Error, Mat3, Result, Vec3};

/// Largest `k` accepted by [`epsilon_schedule`].
pub const MAX_SCHEDULE_K: u32 = 200;
/// Default share of the schedule (smallest ε first) used by the fits.
pub const DEFAULT_FIT_FRACTION: f64 = 0.6;
/// Relative agreement required between fitted and predicted coefficients.
pub const CLAIM_TOLERANCE: f64 = 0.01;
/// Residual trends are judged from this `k` on.
pub const TAIL_START: u32 = 10;

/// How `ε_k` depends on `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// `ε_k = 1/k`.
    Reciprocal,
    /// `ε_k = 1/(k + θ)` with `0 < θ < 1`.
    Offset { theta: f64 },
}

impl ScheduleKind {
    pub fn epsilon(&self, k: u32) -> f64 {
        match self {
            ScheduleKind::Reciprocal => 1.0 / k as f64,
            ScheduleKind::Offset { theta } => 1.0 / (k as f64 + theta),
        }
    }
}

/// The pairs `(k, ε_k)` for `k_min..=k_max`.
pub fn epsilon_schedule(kind: &ScheduleKind, k_min: u32, k_max: u32) -> Result<Vec<(u32, f64)>> {
    if k_min < 2 || k_max <= k_min || k_max > MAX_SCHEDULE_K {
        return Err(Error::InvalidSchedule(format!(
            "need 2 <= k_min < k_max <= {MAX_SCHEDULE_K}, got {k_min}..{k_max}"
        )));
    }
    if let ScheduleKind::Offset { theta } = kind {
        if !(*theta > 0.0 && *theta < 1.0) {
            return Err(Error::InvalidSchedule(format!("θ must lie in (0, 1), got {theta}")));
        }
    }
    Ok((k_min..=k_max).map(|k| (k, kind.epsilon(k))).collect())
}

/// Least-squares coefficients of a polynomial in ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub order: usize,
    /// `c₀, c₁[, c₂]`.
    pub coefficients: Vec<f64>,
    /// `(E_i − fit(ε_i))/ε_i`, in input order.
    pub residuals: Vec<f64>,
}

impl ExpansionFit {
    pub fn bulk(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn linear(&self) -> f64 {
        self.coefficients[1]
    }

    pub fn quadratic(&self) -> Option<f64> {
        self.coefficients.get(2).copied()
    }

    pub fn eval(&self, eps: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * eps + c)
    }
}

/// Fits `E ≈ c₀ + c₁ε` (order 1) or `c₀ + c₁ε + c₂ε²` (order 2) to `(ε, E)` pairs.
pub fn fit_expansion(points: &[(f64, f64)], order: usize) -> Result<ExpansionFit> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidArgument(format!("model order must be 1 or 2, got {order}")));
    }
    if points.len() < order + 2 {
        return Err(Error::InvalidArgument(format!(
            "order {order} needs at least {} points, got {}",
            order + 2,
            points.len()
        )));
    }
    if points.iter().any(|&(e, v)| !(e > 0.0) || !e.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidArgument("fit points need finite values and ε > 0".into()));
    }
    let cols = order + 1;
    let mut a = DMatrix::from_fn(points.len(), cols, |i, j| points[i].0.powi(j as i32));
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    // equilibrate columns so the rank test sees comparable scales
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).unscale_mut(*s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::RankDeficient);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| Error::RankDeficient)?;
    let coefficients: Vec<f64> = (0..cols).map(|j| x[j] / scales[j]).collect();
    let mut fit = ExpansionFit {
        order,
        coefficients,
        residuals: Vec::with_capacity(points.len()),
    };
    fit.residuals = points.iter().map(|&(e, v)| (v - fit.eval(e)) / e).collect();
    Ok(fit)
}

/// Which convergence statement a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proposition {
    /// Cell average converges to the bulk integral.
    P1,
    /// Cell average of an affine or smooth map: bulk plus surface.
    P2,
    /// Cell average with a planar phase boundary: adds the interface term.
    P3,
    /// Discrete energy of a lattice polyhedron.
    P4,
    /// Discrete energy with a crystallographic phase boundary.
    P5,
}

impl Proposition {
    fn is_discrete(self) -> bool {
        matches!(self, Proposition::P4 | Proposition::P5)
    }
}

/// Fit settings: polynomial order and the share of smallest ε values used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub order: usize,
    pub fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            order: 2,
            fraction: DEFAULT_FIT_FRACTION,
        }
    }
}

/// Everything [`verify_proposition`] needs.
#[derive(Debug, Clone)]
pub struct PropositionScene {
    pub omega: ConvexPolytope,
    pub lattice: BravaisLattice,
    pub deformation: Deformation,
    pub potential: PairPotential,
    pub schedule: ScheduleKind,
    pub k_min: u32,
    pub k_max: u32,
    pub rule: BoundaryRule,
    pub quadrature: QuadratureOptions,
    pub fit: FitOptions,
}

impl PropositionScene {
    /// Reciprocal schedule over `k = 4..=40`, closed boundary rule, default quadrature and fit.
    pub fn new(omega: ConvexPolytope, lattice: BravaisLattice, deformation: Deformation, potential: PairPotential) -> Self {
        PropositionScene {
            omega,
            lattice,
            deformation,
            potential,
            schedule: ScheduleKind::Reciprocal,
            k_min: 4,
            k_max: 40,
            rule: BoundaryRule::Closed,
            quadrature: QuadratureOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Energies along a schedule against their predicted expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub proposition: Proposition,
    pub schedule: Vec<(u32, f64)>,
    pub energies: Vec<f64>,
    pub predictions: Vec<f64>,
    /// `(E_k − prediction_k)/ε_k`, which is `k (E_k − prediction_k)` for `ε_k = 1/k`.
    pub residuals: Vec<f64>,
    pub target: Expansion,
    pub target_bulk: f64,
    /// Predicted coefficient of ε (surface plus interface); zero for P1.
    pub target_surface: f64,
    pub fitted_bulk: f64,
    pub fitted_surface: f64,
    pub fitted_quadratic: Option<f64>,
    pub fit_order: usize,
    pub fit_points: usize,
    /// Log-log slope of `|E − prediction|` against ε over the fitted points.
    pub convergence_order_estimate: Option<f64>,
    pub claim_holds: bool,
}

impl ExpansionReport {
    /// Whether `|residual|` strictly decreases over the entries with `k >= k_from`.
    pub fn residuals_decreasing_from(&self, k_from: u32) -> bool {
        let tail: Vec<f64> = self
            .schedule
            .iter()
            .zip(&self.residuals)
            .filter(|((k, _), _)| *k >= k_from)
            .map(|(_, r)| r.abs())
            .collect();
        tail.len() >= 2 && tail.windows(2).all(|w| w[1] < w[0])
    }

    /// Relative difference of the fitted and predicted ε-coefficients.
    pub fn surface_gap(&self) -> f64 {
        relative_gap(self.fitted_surface, self.target_surface)
    }
}

fn relative_gap(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs().max(1e-12)
}

fn check_lattice_polyhedron(scene: &PropositionScene) -> Result<()> {
    if !scene.omega.is_lattice_polyhedron(&scene.lattice) {
        return Err(Error::InconsistentScene(
            "the domain must be a lattice polyhedron with Miller facet normals".into(),
        ));
    }
    Ok(())
}

fn check_crystallographic_interface(scene: &PropositionScene) -> Result<()> {
    let Deformation::PiecewiseAffine(pw) = &scene.deformation else {
        return Err(Error::InconsistentScene("P5 needs a piecewise-affine deformation".into()));
    };
    let m = pw
        .plane
        .miller
        .ok_or_else(|| Error::InconsistentScene("the interface needs a Miller normal".into()))?;
    let c = scene.lattice.to_lattice_coords(&pw.plane.anchor);
    let level = m.as_vec3().dot(&c);
    if (level - level.round()).abs() > 1e-9 {
        return Err(Error::InconsistentScene(
            "the interface must pass through a lattice point".into(),
        ));
    }
    Ok(())
}

fn expansion_kind(prop: Proposition, d: &Deformation) -> ExpansionKind {
    match (prop, d) {
        (Proposition::P1, Deformation::PiecewiseAffine(_)) => ExpansionKind::CellAvgInterface,
        (Proposition::P1 | Proposition::P2, _) => ExpansionKind::CellAvgAffine,
        (Proposition::P3, _) => ExpansionKind::CellAvgInterface,
        (Proposition::P4, _) => ExpansionKind::DiscretePolyhedron,
        (Proposition::P5, _) => ExpansionKind::DiscreteInterface,
    }
}

/// Least-squares slope of `log y` against `log x`, skipping non-positive `y`.
fn log_log_slope(points: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Computes the energy along the scene's schedule, compares it with the
/// predicted expansion and fits `c₀ + c₁ε (+ c₂ε²)` to the smallest ε values.
///
/// For P2–P5 the claim holds when the fitted ε-coefficient is within
/// [`CLAIM_TOLERANCE`] of the prediction and the scaled residuals strictly
/// decrease in magnitude from [`TAIL_START`] on. For P1 the prediction is the
/// bulk term alone: the fitted bulk must match and `|E − bulk|` must decrease
/// while the scaled residual stays bounded.
pub fn verify_proposition(prop: Proposition, scene: &PropositionScene) -> Result<ExpansionReport> {
    let schedule = epsilon_schedule(&scene.schedule, scene.k_min, scene.k_max)?;
    if !(scene.fit.fraction > 0.0 && scene.fit.fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fit fraction must lie in (0, 1], got {}", scene.fit.fraction)));
    }
    match prop {
        Proposition::P4 => check_lattice_polyhedron(scene)?,
        Proposition::P5 => {
            check_lattice_polyhedron(scene)?;
            check_crystallographic_interface(scene)?;
        }
        _ => {}
    }
    let full = predict_expansion(
        expansion_kind(prop, &scene.deformation),
        &scene.omega,
        &scene.lattice,
        &scene.deformation,
        &scene.potential,
        &scene.quadrature,
    )?;
    let target = if prop == Proposition::P1 {
        Expansion {
            bulk: full.bulk,
            surface: 0.0,
            interface: 0.0,
        }
    } else {
        full
    };

    let energies = schedule
        .par_iter()
        .map(|&(_, eps)| {
            if prop.is_discrete() {
                discrete_energy(&scene.omega, &scene.lattice, eps, &scene.deformation, &scene.potential, &scene.rule)
                    .map(|e| e.value)
            } else {
                cell_avg_energy(&scene.omega, &scene.lattice, eps, &scene.deformation, &scene.potential, &scene.quadrature)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let predictions: Vec<f64> = schedule.iter().map(|&(_, eps)| target.at(eps)).collect();
    let residuals: Vec<f64> = schedule
        .iter()
        .zip(energies.iter().zip(&predictions))
        .map(|(&(_, eps), (e, p))| (e - p) / eps)
        .collect();

    // smallest ε first
    let mut order: Vec<usize> = (0..schedule.len()).collect();
    order.sort_by(|&i, &j| schedule[i].1.total_cmp(&schedule[j].1));
    let take = ((scene.fit.fraction * schedule.len() as f64).ceil() as usize)
        .max(scene.fit.order + 2)
        .min(schedule.len());
    let window = &order[..take];
    let points: Vec<(f64, f64)> = window.iter().map(|&i| (schedule[i].1, energies[i])).collect();
    let fit = fit_expansion(&points, scene.fit.order)?;
    let convergence_order_estimate =
        log_log_slope(window.iter().map(|&i| (schedule[i].1, (energies[i] - predictions[i]).abs())));

    let mut report = ExpansionReport {
        proposition: prop,
        schedule,
        energies,
        predictions,
        residuals,
        target,
        target_bulk: target.bulk,
        target_surface: target.surface + target.interface,
        fitted_bulk: fit.bulk(),
        fitted_surface: fit.linear(),
        fitted_quadratic: fit.quadratic(),
        fit_order: fit.order,
        fit_points: points.len(),
        convergence_order_estimate,
        claim_holds: false,
    };
    report.claim_holds = if prop == Proposition::P1 {
        p1_claim(&report)
    } else {
        report.surface_gap() <= CLAIM_TOLERANCE && report.residuals_decreasing_from(TAIL_START)
    };
    Ok(report)
}

fn p1_claim(report: &ExpansionReport) -> bool {
    let tail: Vec<(f64, f64)> = report
        .schedule
        .iter()
        .zip(report.energies.iter().zip(&report.residuals))
        .filter(|((k, _), _)| *k >= TAIL_START)
        .map(|(_, (e, r))| ((e - report.target_bulk).abs(), r.abs()))
        .collect();
    let Some(&(_, first)) = tail.first() else {
        return false;
    };
    let decreasing = tail.windows(2).all(|w| w[1].0 <= w[0].0);
    let bounded = tail.iter().all(|&(_, r)| r <= 2.0 * first + 1e-12);
    decreasing && bounded && relative_gap(report.fitted_bulk, report.target_bulk) <= CLAIM_TOLERANCE
}

/// One element of a Miller-vector sequence and its two gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MillerLimitRow {
    pub j: u32,
    pub miller: MillerVector,
    /// `|𝐧_j|` as a Cartesian normal.
    pub norm: f64,
    /// `|γ⋄(F⁻, 𝐧_j) − γ(F⁻, n)|`.
    pub gamma_diamond_gap: f64,
    /// `W(F⁻)/(2|𝐧_j|)`.
    pub w_over_2n: f64,
    /// `|τ(F⁻ + a⊗n̂_j, F⁻, 𝐧_j) − σ(F⁻ + a⊗n, F⁻, n)|`.
    pub tau_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MillerLimitStudy {
    pub target: Vec3,
    pub w: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub rows: Vec<MillerLimitRow>,
    /// Smallest `C` with `gap_j <= (W/2 + C)/|𝐧_j|` on every row.
    pub c_gamma: f64,
    /// Log-log slope of the `γ⋄` gap against `|𝐧_j|`.
    pub gamma_diamond_slope: Option<f64>,
}

/// Gaps along the Miller sequence of `target` for `j = 1..=j_max`.
pub fn miller_limit_study(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_minus: &Mat3,
    a: &Vec3,
    target: &MillerTarget,
    j_max: u32,
    opts: &QuadratureOptions,
) -> Result<MillerLimitStudy> {
    if j_max == 0 {
        return Err(Error::InvalidArgument("j_max must be at least 1".into()));
    }
    let normals = (1..=j_max)
        .map(|j| miller_sequence(target, j).map(|el| (j, el.normal)))
        .collect::<Result<Vec<_>>>()?;
    let n = match target {
        MillerTarget::Direction(n) => *n,
        MillerTarget::Rational(m) => lattice.miller_normal(m).normalize(),
    };
    miller_limit_rows(phi, lattice, f_minus, a, &n, &normals, opts)
}

/// Gaps for an explicit list of `(j, 𝐧_j)` approaching the unit normal `n`.
pub fn miller_limit_rows(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_minus: &Mat3,
    a: &Vec3,
    n: &Vec3,
    normals: &[(u32, MillerVector)],
    opts: &QuadratureOptions,
) -> Result<MillerLimitStudy> {
    let n = n.try_normalize(0.0).ok_or(Error::ZeroVector)?;
    let w = cauchy_born_w(phi, lattice, f_minus)?;
    let g = gamma(phi, lattice, f_minus, &n)?;
    let (s, _) = sigma(phi, lattice, &(f_minus + a * n.transpose()), f_minus, &n, opts.gauss_order)?;
    let rows = normals
        .par_iter()
        .map(|&(j, m)| {
            let cart = lattice.miller_normal(&m);
            let norm = cart.norm();
            let nj = cart / norm;
            let gd = gamma_diamond(phi, lattice, f_minus, &m)?;
            let (t, _) = tau(phi, lattice, &(f_minus + a * nj.transpose()), f_minus, &m)?;
            Ok(MillerLimitRow {
                j,
                miller: m,
                norm,
                gamma_diamond_gap: (gd - g).abs(),
                w_over_2n: w / (2.0 * norm),
                tau_gap: (t - s).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c_gamma = rows
        .iter()
        .map(|r| r.gamma_diamond_gap * r.norm - 0.5 * w)
        .fold(f64::NEG_INFINITY, f64::max);
    let gamma_diamond_slope = log_log_slope(rows.iter().map(|r| (r.norm, r.gamma_diamond_gap)));
    Ok(MillerLimitStudy {
        target: n,
        w,
        gamma: g,
        sigma: s,
        rows,
        c_gamma,
        gamma_diamond_slope,
    })
}

/// `Ω_k` for one `k`, with the lattice-point counts on `Ω` and `Ω_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedDomainRow {
    pub k: u32,
    pub eps: f64,
    /// `|Ω_k| − ε³|K| #(Ω_k ∩ εL)`.
    pub remainder: f64,
    /// `k` times the remainder.
    pub scaled_remainder: f64,
    /// `#(Ω_k ∩ εL) − #(Ω ∩ εL)`, closed rule on both.
    pub count_difference: i64,
}

/// `Ω` with every facet pushed out by half its interplanar spacing at scale ε.
pub fn modified_domain(omega: &ConvexPolytope, lattice: &BravaisLattice, eps: f64) -> Result<ConvexPolytope> {
    let distances = omega
        .facets()
        .iter()
        .map(|f| {
            let m = f.miller.ok_or_else(|| {
                Error::InconsistentScene("every facet of Ω needs a Miller normal".into())
            })?;
            Ok(eps / (2.0 * lattice.miller_normal(&m).norm()))
        })
        .collect::<Result<Vec<f64>>>()?;
    offset_facets(omega, &distances)
}

/// Rows of [`ModifiedDomainRow`] for `ε_k = 1/k`, `k = k_min..=k_max`.
pub fn modified_domain_check(
    omega: &ConvexPolytope,
    lattice: &BravaisLattice,
    k_min: u32,
    k_max: u32,
) -> Result<Vec<ModifiedDomainRow>> {
    let schedule = epsilon_schedule(&ScheduleKind::Reciprocal, k_min, k_max)?;
    let rule = BoundaryRule::Closed;
    schedule
        .par_iter()
        .map(|&(k, eps)| {
            let omega_k = modified_domain(omega, lattice, eps)?;
            let base = count_shifted(lattice, eps, &Vec3::zeros(), omega, &rule)?;
            let count = count_shifted(lattice, eps, &Vec3::zeros(), &omega_k, &rule)?;
            let remainder = omega_k.volume() - eps.powi(3) * lattice.cell_volume() * count as f64;
            Ok(ModifiedDomainRow {
                k,
                eps,
                remainder,
                scaled_remainder: k as f64 * remainder,
                count_difference: count as i64 - base as i64,
            })
        })
        .collect()
}

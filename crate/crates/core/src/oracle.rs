//! Brute-force references: lattice-translation averages computed literally on
//! a grid of offsets, and dense trapezoid path integrals for `σ̂`.

use rayon::prelude::*;

use crate::energy::{check_scale, discrete_energy_with_shell, hadamard_amplitude, shell};
use crate::geometry::Region;
use crate::lattice::{count_shifted, enumerate_ball, BoundaryRule, BravaisLattice};
use crate::material::{bilipschitz_lower_bound, segment_sigma_min, Deformation, PairPotential};
use crate::numerics::{compensated_sum, NeumaierSum};
use crate::{Error, Mat3, Result, Vec3};

/// Smallest subdivision count accepted by [`dense_path_integral`].
pub const MIN_SUBDIVISIONS: usize = 1000;

/// Midpoint grid of `grid_n³` offsets in the scaled cell `εK`.
pub fn offset_grid(lattice: &BravaisLattice, eps: f64, grid_n: usize) -> Vec<Vec3> {
    let e = lattice.basis_matrix() * eps;
    let h = 1.0 / grid_n as f64;
    let mut out = Vec::with_capacity(grid_n.pow(3));
    for i in 0..grid_n {
        for j in 0..grid_n {
            for k in 0..grid_n {
                let t = Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h);
                out.push(e * t);
            }
        }
    }
    out
}

fn check_grid(grid_n: usize) -> Result<()> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument(format!("grid_n must be at least 2, got {grid_n}")));
    }
    Ok(())
}

/// `ε³|K|` times the mean of `#(Ω ∩ (u + εL))` over the offset grid; tends to `|Ω|`.
pub fn translate_average_count<R: Region + ?Sized>(
    omega: &R,
    lattice: &BravaisLattice,
    eps: f64,
    grid_n: usize,
    rule: &BoundaryRule,
) -> Result<f64> {
    check_grid(grid_n)?;
    let offsets = offset_grid(lattice, eps, grid_n);
    let counts = offsets
        .par_iter()
        .map(|u| count_shifted(lattice, eps, u, omega, rule).map(|c| c as u128))
        .collect::<Result<Vec<u128>>>()?;
    let total: u128 = counts.iter().sum();
    Ok(eps.powi(3) * lattice.cell_volume() * total as f64 / offsets.len() as f64)
}

/// Mean of the discrete energy of `Ω ∩ (u + εL)` over the offset grid.
pub fn translate_average_energy(
    omega: &crate::geometry::ConvexPolytope,
    lattice: &BravaisLattice,
    eps: f64,
    d: &Deformation,
    phi: &PairPotential,
    grid_n: usize,
    rule: &BoundaryRule,
) -> Result<f64> {
    check_grid(grid_n)?;
    check_scale(eps)?;
    let bonds = shell(lattice, phi.cutoff() / bilipschitz_lower_bound(d)?);
    let offsets = offset_grid(lattice, eps, grid_n);
    let energies = offsets
        .par_iter()
        .map(|u| discrete_energy_with_shell(omega, lattice, eps, u, d, phi, rule, &bonds).map(|e| e.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(energies.iter().copied()) / offsets.len() as f64)
}

/// `σ̂` with the `t`-integral of each bond replaced by a composite trapezoid
/// rule with `subdivisions` panels.
pub fn dense_path_integral(
    phi: &PairPotential,
    lattice: &BravaisLattice,
    f_plus: &Mat3,
    f_minus: &Mat3,
    n: &Vec3,
    subdivisions: usize,
) -> Result<f64> {
    if subdivisions < MIN_SUBDIVISIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SUBDIVISIONS} subdivisions, got {subdivisions}"
        )));
    }
    let n = n.try_normalize(0.0).ok_or(Error::ZeroVector)?;
    hadamard_amplitude(f_plus, f_minus, &n)?;
    let lam = segment_sigma_min(f_minus, f_plus);
    if !(lam > crate::material::INVERTIBILITY_TOLERANCE) {
        return Err(Error::NonInvertible(format!("segment reaches σ_min = {lam}")));
    }
    let ws: Vec<_> = enumerate_ball(lattice, phi.cutoff() / lam * (1.0 + 1e-9))
        .into_iter()
        .filter(|w| w.cart.dot(&n) != 0.0)
        .collect();
    let jump = f_plus - f_minus;
    let per_bond: Vec<f64> = ws
        .par_iter()
        .map(|w| {
            let base = f_minus * w.cart;
            let step = jump * w.cart;
            let mut acc = NeumaierSum::new();
            acc.add(0.5 * phi.eval(&base));
            acc.add(0.5 * phi.eval(&(base + step)));
            for j in 1..subdivisions {
                acc.add(phi.eval(&(base + step * (j as f64 / subdivisions as f64))));
            }
            w.cart.dot(&n).abs() * acc.value() / subdivisions as f64
        })
        .collect();
    Ok(0.5 * compensated_sum(per_bond) / lattice.cell_volume())
}

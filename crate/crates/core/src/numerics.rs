//! Small numerical kernels shared by the energy and oracle code: compensated
//! summation with a deterministic parallel reduction, Gauss–Legendre rules,
//! adaptive Simpson, golden-section search and simplex quadrature.

use rayon::prelude::*;

use crate::Vec3;

/// Neumaier's variant of Kahan summation.
///
/// Unlike plain Kahan it stays accurate when an added term is larger in
/// magnitude than the running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    #[inline]
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Number of items per partial sum in [`deterministic_par_sum`].
///
/// The chunking is independent of the thread count, which is what makes the
/// reduction bit-stable across pools of different sizes.
pub const REDUCTION_CHUNK: usize = 1024;

/// Sums `term(i)` for `i in 0..n` in parallel.
///
/// Each fixed-size chunk is accumulated sequentially, then the chunk partials
/// are merged in chunk order, so the result does not depend on scheduling.
pub fn deterministic_par_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize, &mut NeumaierSum) + Sync,
{
    let chunks = n.div_ceil(REDUCTION_CHUNK);
    let partials: Vec<NeumaierSum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = NeumaierSum::new();
            let end = ((c + 1) * REDUCTION_CHUNK).min(n);
            for i in c * REDUCTION_CHUNK..end {
                term(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = NeumaierSum::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `order`-point rule by Newton iteration on the Legendre
    /// polynomial, starting from the usual Chebyshev-like guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = NeumaierSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }

    /// Nodes and weights mapped onto `[0, 1]`.
    pub fn unit_interval(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Simpson quadrature with the usual Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Minimizes a unimodal function on `[a, b]` by golden-section search.
/// Returns `(argmin, min)`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Integrates `f` over a tetrahedron with a collapsed (Duffy) tensor
/// Gauss–Legendre rule.
pub fn integrate_tetrahedron<F: FnMut(&Vec3) -> f64>(
    rule: &GaussLegendre,
    v: [Vec3; 4],
    mut f: F,
) -> f64 {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let e3 = v[3] - v[0];
    let det = e1.dot(&e2.cross(&e3)).abs();
    let mut acc = NeumaierSum::new();
    for (u, wu) in rule.unit_interval() {
        for (s, ws) in rule.unit_interval() {
            for (t, wt) in rule.unit_interval() {
                let x1 = u;
                let x2 = s * (1.0 - u);
                let x3 = t * (1.0 - u) * (1.0 - s);
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - s);
                let p = v[0] + e1 * x1 + e2 * x2 + e3 * x3;
                acc.add(wu * ws * wt * jac * f(&p));
            }
        }
    }
    det * acc.value()
}

/// Integrates `f` over a triangle with a collapsed tensor Gauss–Legendre rule.
pub fn integrate_triangle<F: FnMut(&Vec3) -> f64>(rule: &GaussLegendre, v: [Vec3; 3], mut f: F) -> f64 {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let twice_area = e1.cross(&e2).norm();
    let mut acc = NeumaierSum::new();
    for (u, wu) in rule.unit_interval() {
        for (s, ws) in rule.unit_interval() {
            let p = v[0] + e1 * u + e2 * (s * (1.0 - u));
            acc.add(wu * ws * (1.0 - u) * f(&p));
        }
    }
    twice_area * acc.value()
}

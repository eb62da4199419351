//! The biharmonic heat kernel on the strip, its L1 scaling, and a Picard
//! solver for the mild formulation of the perturbation equation.
//!
//! The kernel is `k(t, x) = sum_{xi'} int dxi_z exp(-|2 pi xi|^4 t + 2 pi i xi.x)`.
//! Convolutions with it are done in Fourier space on the periodic grid; the
//! physical-space evaluation exists for the L1 study only.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::nonlinearity_hat;
use crate::grid::{Grid, RealField, SpectralField};
use crate::kink::KinkProfile;
use crate::thresholds;

/// `-ln(1e-16)`: modes with `|2 pi xi|^4 t` above this are dropped.
const LOG_CUTOFF: f64 = 36.84;

/// Valid time range of the physical-space kernel.
pub const KERNEL_T_MIN: f64 = 1e-3;
pub const KERNEL_T_MAX: f64 = 1e3;

/// Largest supported derivative order of the kernel.
pub const KERNEL_MAX_ORDER: usize = 3;

const PANELS: usize = 96;
const NODES_PER_PANEL: usize = 16;

/// Truncation parameters of the kernel sum and integral at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub d: usize,
    pub t: f64,
    /// Transverse lattice modes with `|xi_l| <= radius` are kept.
    pub lattice_radius: i64,
    /// The `xi_z` integral runs over `[-cutoff, cutoff]`.
    pub xi_cutoff: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl KernelSpec {
    pub fn new(d: usize, t: f64) -> Result<KernelSpec> {
        if !(2..=5).contains(&d) {
            return Err(Error::Cutoff(format!("dimension {d} outside 2..=5")));
        }
        if !(t >= KERNEL_T_MIN && t <= KERNEL_T_MAX) {
            return Err(Error::Cutoff(format!(
                "t = {t} outside the supported range [{KERNEL_T_MIN}, {KERNEL_T_MAX}]"
            )));
        }
        let xi = (LOG_CUTOFF / t).powf(0.25) / (2.0 * PI);
        Ok(KernelSpec {
            d,
            t,
            lattice_radius: xi.floor() as i64,
            xi_cutoff: xi,
            panels: PANELS,
            nodes_per_panel: NODES_PER_PANEL,
        })
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        let rule = GaussLegendre::new(NonZeroUsize::new(self.nodes_per_panel).unwrap());
        let h = 2.0 * self.xi_cutoff / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.nodes_per_panel);
        for p in 0..self.panels {
            let mid = -self.xi_cutoff + (p as f64 + 0.5) * h;
            for &(x, w) in rule.as_node_weight_pairs() {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    fn lattice(&self) -> Vec<Vec<i64>> {
        let r = self.lattice_radius;
        let mut pts = vec![vec![]];
        for _ in 1..self.d {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    (-r..=r).map(move |m| {
                        let mut q = p.clone();
                        q.push(m);
                        q
                    })
                })
                .filter(|q: &Vec<i64>| {
                    let s: i64 = q.iter().map(|m| m * m).sum();
                    (2.0 * PI).powi(4) * (s as f64).powi(2) * self.t <= LOG_CUTOFF
                })
                .collect();
        }
        pts
    }
}

/// Evaluates `d^alpha k(t, x)` at one point via a precomputed rule.
struct KernelEvaluator {
    spec: KernelSpec,
    nodes: Vec<(f64, f64)>,
    lattice: Vec<Vec<i64>>,
}

impl KernelEvaluator {
    fn new(spec: KernelSpec) -> Self {
        KernelEvaluator {
            nodes: spec.nodes(),
            lattice: spec.lattice(),
            spec,
        }
    }

    /// `g_{q,m}(z) = int (2 pi i xi_z)^m exp(-(2 pi)^4 (q + xi_z^2)^2 t + 2 pi i xi_z z)`.
    fn z_factor(&self, q: f64, m: u32, z: f64) -> Complex64 {
        let tp4 = (2.0 * PI).powi(4) * self.spec.t;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(xi, w) in &self.nodes {
            let s = q + xi * xi;
            let amp = w * (-tp4 * s * s).exp() * (2.0 * PI * xi).powi(m as i32);
            acc += Complex64::from_polar(amp, 2.0 * PI * xi * z);
        }
        acc * Complex64::i().powu(m)
    }

    fn eval(&self, x: &[f64], alpha: &[u32]) -> f64 {
        let d = self.spec.d;
        let m = alpha[d - 1];
        let mut total = Complex64::new(0.0, 0.0);
        let mut cache: Vec<(i64, Complex64)> = Vec::new();
        for xi in &self.lattice {
            let q: i64 = xi.iter().map(|v| v * v).sum();
            let mut pre = Complex64::new(1.0, 0.0);
            let mut phase = 0.0;
            for l in 0..d - 1 {
                let k = 2.0 * PI * xi[l] as f64;
                pre *= (Complex64::i() * k).powu(alpha[l]);
                phase += k * x[l];
            }
            if pre.norm() == 0.0 {
                continue;
            }
            let g = match cache.iter().find(|(c, _)| *c == q) {
                Some(&(_, g)) => g,
                None => {
                    let g = self.z_factor(q as f64, m, x[d - 1]);
                    cache.push((q, g));
                    g
                }
            };
            total += pre * Complex64::from_polar(1.0, phase) * g;
        }
        total.re
    }
}

fn check_point(d: usize, x: &[f64], alpha: &[u32]) -> Result<()> {
    if x.len() != d || alpha.len() != d {
        return Err(Error::Cutoff(format!(
            "point and multi-index must have {d} entries"
        )));
    }
    if alpha.iter().sum::<u32>() as usize > KERNEL_MAX_ORDER {
        return Err(Error::Cutoff(format!(
            "derivative order above {KERNEL_MAX_ORDER}"
        )));
    }
    Ok(())
}

/// `d^alpha k(t, x)`; `x` and `alpha` list transverse coordinates first, z last.
pub fn kernel_eval(d: usize, t: f64, x: &[f64], alpha: &[u32]) -> Result<f64> {
    check_point(d, x, alpha)?;
    Ok(KernelEvaluator::new(KernelSpec::new(d, t)?).eval(x, alpha))
}

/// Multi-indices of total order `j` in `d` variables with multiplicity `j! / alpha!`.
pub fn multi_indices(d: usize, j: u32) -> Vec<(Vec<u32>, f64)> {
    fn rec(d: usize, j: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == d {
            prefix.push(j);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in 0..=j {
            prefix.push(a);
            rec(d, j - a, prefix, out);
            prefix.pop();
        }
    }
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let mut out = Vec::new();
    rec(d, j, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|a| {
            let mult = fact(j) / a.iter().map(|&k| fact(k)).product::<f64>();
            (a, mult)
        })
        .collect()
}

/// Transverse sample points per axis for the L1 quadrature.
fn transverse_points(radius: i64) -> usize {
    if radius == 0 {
        1
    } else {
        (8 * radius as usize + 8).next_power_of_two()
    }
}

/// `|| |grad^j k(t)| ||_{L1}` over the strip, with the tensor norm
/// `|grad^j k|^2 = sum_alpha (j!/alpha!) (d^alpha k)^2`.
pub fn kernel_l1_norm(d: usize, t: f64, j: usize) -> Result<f64> {
    if j > KERNEL_MAX_ORDER {
        return Err(Error::Cutoff(format!("derivative order {j} above {KERNEL_MAX_ORDER}")));
    }
    let spec = KernelSpec::new(d, t)?;
    let ev = KernelEvaluator::new(spec);
    let alphas = multi_indices(d, j as u32);
    let s = t.powf(0.25);
    let h = 0.02 * s;
    let nz = (40.0 * s / h).round() as i64;
    let nx = transverse_points(spec.lattice_radius);
    let n_trans = nx.pow(d as u32 - 1);
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    for it in 0..n_trans {
        let mut rem = it;
        for xl in x.iter_mut().take(d - 1) {
            *xl = (rem % nx) as f64 / nx as f64;
            rem /= nx;
        }
        for iz in -nz..=nz {
            x[d - 1] = iz as f64 * h;
            let sq: f64 = alphas
                .iter()
                .map(|(a, mult)| mult * ev.eval(&x, a).powi(2))
                .sum();
            total += sq.sqrt();
        }
    }
    Ok(total * h / n_trans as f64)
}

/// Scaled norms `t^{j/4} ||grad^j k(t)||_{L1}` and their max/min ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelScaling {
    pub j: usize,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub scaled: Vec<f64>,
    pub flatness: f64,
}

pub fn kernel_scaling(d: usize, j: usize, times: &[f64]) -> Result<KernelScaling> {
    if times.is_empty() {
        return Err(Error::Cutoff("empty time list".into()));
    }
    let norms = times
        .iter()
        .map(|&t| kernel_l1_norm(d, t, j))
        .collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = times
        .iter()
        .zip(&norms)
        .map(|(t, n)| t.powf(j as f64 / 4.0) * n)
        .collect();
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    Ok(KernelScaling {
        j,
        times: times.to_vec(),
        norms,
        scaled,
        flatness: max / min,
    })
}

/// A field sampled at the levels of a time grid on `[0, T0]`, in Fourier space.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlab {
    pub times: Vec<f64>,
    pub levels: Vec<Vec<Complex64>>,
}

/// Default number of time levels.
pub const SLAB_LEVELS: usize = 33;

/// Picard stopping tolerance on the weighted-norm increment.
pub const PICARD_TOL: f64 = 1e-10;

/// Levels `T0 (i / (n - 1))^2`, graded towards `t = 0` where the data smooths.
pub fn slab_times(t0: f64, levels: usize) -> Vec<f64> {
    let n = levels.max(2) - 1;
    (0..=n)
        .map(|i| t0 * (i as f64 / n as f64).powi(2))
        .collect()
}

impl TimeSlab {
    pub fn zeros(times: Vec<f64>, len: usize) -> Self {
        let levels = vec![vec![Complex64::new(0.0, 0.0); len]; times.len()];
        TimeSlab { times, levels }
    }

    /// Time derivative at every level by second-order non-uniform differences.
    fn time_derivative(&self) -> Vec<Vec<Complex64>> {
        let n = self.times.len();
        let t = &self.times;
        let f = &self.levels;
        (0..n)
            .map(|i| {
                let (a, b, c) = if i == 0 {
                    (0, 1, 2)
                } else if i == n - 1 {
                    (n - 3, n - 2, n - 1)
                } else {
                    (i - 1, i, i + 1)
                };
                if n == 2 {
                    let h = t[1] - t[0];
                    return f[1].iter().zip(&f[0]).map(|(x, y)| (x - y) / h).collect();
                }
                // Derivative of the quadratic through (a, b, c), evaluated at t_i.
                let x = t[i];
                let wa = ((x - t[b]) + (x - t[c])) / ((t[a] - t[b]) * (t[a] - t[c]));
                let wb = ((x - t[a]) + (x - t[c])) / ((t[b] - t[a]) * (t[b] - t[c]));
                let wc = ((x - t[a]) + (x - t[b])) / ((t[c] - t[a]) * (t[c] - t[b]));
                f[a].iter()
                    .zip(&f[b])
                    .zip(&f[c])
                    .map(|((p, q), r)| p * wa + q * wb + r * wc)
                    .collect()
            })
            .collect()
    }
}

/// Grid sup norm of `|grad^j f|` for a spectral field.
pub fn gradient_sup(grid: &Grid, coeffs: &[Complex64], j: u32) -> Result<f64> {
    let field = SpectralField {
        spec: *grid.spec(),
        coeffs: coeffs.to_vec(),
    };
    let mut acc = vec![0.0; grid.len()];
    for (alpha, mult) in multi_indices(grid.spec().d, j) {
        let vals = grid.inverse_values(&grid.differentiate(&field, &alpha)?.coeffs);
        for (a, v) in acc.iter_mut().zip(vals) {
            *a += mult * v * v;
        }
    }
    Ok(acc.iter().fold(0.0_f64, |m, v| m.max(*v)).sqrt())
}

/// `sum_{j<=4} max_t t^{j/4} || |grad^j f| ||_inf + max_t || t f_t ||_inf`.
pub fn weighted_norm(grid: &Grid, slab: &TimeSlab) -> Result<f64> {
    if slab.times.len() < 2 {
        return Err(Error::Internal("time slab needs at least two levels".into()));
    }
    let mut terms = [0.0_f64; 5];
    for (t, level) in slab.times.iter().zip(&slab.levels) {
        for (j, term) in terms.iter_mut().enumerate() {
            if j > 0 && *t == 0.0 {
                continue;
            }
            let w = t.powf(j as f64 / 4.0);
            *term = term.max(w * gradient_sup(grid, level, j as u32)?);
        }
    }
    let mut dt_term = 0.0_f64;
    for (t, level) in slab.times.iter().zip(slab.time_derivative()) {
        if *t > 0.0 {
            let sup = grid.inverse_values(&level).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            dt_term = dt_term.max(t * sup);
        }
    }
    Ok(terms.iter().sum::<f64>() + dt_term)
}

/// Right-hand side of the mild formulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// `N = G'(v + f) - G'(v)` about the kink profile.
    Kink(KinkProfile),
    /// `N = a f`; the mild solution is then known in closed form.
    Linear(f64),
}

/// The map `T f(t) = e^{-t lap^2} f0 + int_0^t lap e^{-(t-s) lap^2} N(f(s)) ds`.
pub struct DuhamelMap<'g> {
    grid: &'g Grid,
    source: Source,
    v: Vec<f64>,
}

/// Weights of `N(s_a)` and `N(s_b)` in `int_{s_a}^{s_b} e^{-lam (s_b - s)} N(s) ds`
/// for `N` linear on the interval.
fn interval_weights(lam: f64, h: f64) -> (f64, f64) {
    let x = lam * h;
    if x < 1e-2 {
        let (mut wa, mut wb) = (0.0, 0.0);
        let mut term = 0.5;
        for n in 0..8 {
            wa += (n + 1) as f64 * term;
            wb += term;
            term *= -x / (n + 3) as f64;
        }
        (h * wa, h * wb)
    } else {
        let em = (-x).exp_m1();
        let wa = (-em - x * (-x).exp()) / (x * x);
        let wb = (x + em) / (x * x);
        (h * wa, h * wb)
    }
}

impl<'g> DuhamelMap<'g> {
    pub fn new(grid: &'g Grid, source: Source) -> Self {
        let v = match source {
            Source::Kink(k) => k.tables(grid.z()).v,
            Source::Linear(_) => Vec::new(),
        };
        DuhamelMap { grid, source, v }
    }

    fn source_hat(&self, fh: &[Complex64]) -> Vec<Complex64> {
        match self.source {
            Source::Kink(_) => {
                let f = self.grid.inverse_values(fh);
                nonlinearity_hat(self.grid, &self.v, &f)
            }
            Source::Linear(a) => fh.iter().map(|c| c * a).collect(),
        }
    }

    /// The semigroup term `e^{-t lap^2} f0` at every level.
    pub fn free(&self, f0: &[Complex64], times: &[f64]) -> TimeSlab {
        let k2 = self.grid.k2();
        let levels = times
            .iter()
            .map(|&t| {
                f0.iter()
                    .zip(k2)
                    .map(|(c, &k)| c * (-k * k * t).exp())
                    .collect()
            })
            .collect();
        TimeSlab {
            times: times.to_vec(),
            levels,
        }
    }

    /// Applies the map to `f`, integrating the source exactly against the
    /// semigroup for `N` piecewise linear in time.
    pub fn apply(&self, f: &TimeSlab, f0: &[Complex64]) -> TimeSlab {
        let k2 = self.grid.k2();
        let dealias = self.grid.spec().dealias;
        let sources: Vec<Vec<Complex64>> = f.levels.iter().map(|l| self.source_hat(l)).collect();
        let mut out = self.free(f0, &f.times);
        let mut acc = vec![Complex64::new(0.0, 0.0); k2.len()];
        for i in 1..f.times.len() {
            let h = f.times[i] - f.times[i - 1];
            for (m, a) in acc.iter_mut().enumerate() {
                let k = k2[m];
                let lam = k * k;
                let (wa, wb) = interval_weights(lam, h);
                *a = *a * (-lam * h).exp() + sources[i - 1][m] * wa + sources[i][m] * wb;
            }
            for ((o, a), &k) in out.levels[i].iter_mut().zip(&acc).zip(k2) {
                *o -= a * k;
            }
            if dealias {
                self.grid.project_band(&mut out.levels[i]);
            }
        }
        out
    }
}

/// Converged fixed point of the mild formulation and its Picard history.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub slab: TimeSlab,
    pub iterations: usize,
    /// Weighted norm of each Picard increment.
    pub increments: Vec<f64>,
}

impl LocalSolution {
    /// Real-space field at the final level.
    pub fn final_field(&self, grid: &Grid) -> RealField {
        RealField {
            spec: *grid.spec(),
            values: grid.inverse_values(self.slab.levels.last().unwrap()),
        }
    }
}

/// Picard iteration of the mild formulation on `[0, t0]` from the semigroup term.
pub fn local_solve(
    grid: &Grid,
    f0: &RealField,
    source: Source,
    t0: f64,
    levels: usize,
) -> Result<LocalSolution> {
    if f0.spec != *grid.spec() {
        return Err(Error::GridMismatch);
    }
    f0.check_finite()?;
    if !(t0 > 0.0 && t0.is_finite()) || levels < 3 {
        return Err(Error::Config(format!(
            "local solve needs T0 > 0 and at least 3 levels, got {t0} and {levels}"
        )));
    }
    let map = DuhamelMap::new(grid, source);
    let mut f0h = grid.forward_values(&f0.values);
    if grid.spec().dealias {
        grid.project_band(&mut f0h);
    }
    let mut current = map.free(&f0h, &slab_times(t0, levels));
    let mut increments = Vec::new();
    for iteration in 1..=thresholds::PICARD_MAX_ITER {
        let next = map.apply(&current, &f0h);
        let diff = TimeSlab {
            times: next.times.clone(),
            levels: next
                .levels
                .iter()
                .zip(&current.levels)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        };
        let inc = weighted_norm(grid, &diff)?;
        if !inc.is_finite() {
            return Err(Error::NonContraction {
                iteration,
                prev: increments.last().copied().unwrap_or(0.0),
                next: inc,
            });
        }
        current = next;
        if let Some(&prev) = increments.last() {
            if inc > prev && inc > PICARD_TOL {
                return Err(Error::NonContraction {
                    iteration,
                    prev,
                    next: inc,
                });
            }
        }
        increments.push(inc);
        if inc <= PICARD_TOL {
            return Ok(LocalSolution {
                slab: current,
                iterations: iteration,
                increments,
            });
        }
    }
    Err(Error::NonContraction {
        iteration: thresholds::PICARD_MAX_ITER,
        prev: increments[increments.len() - 2],
        next: *increments.last().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn small_grid() -> Grid {
        Grid::new(GridSpec {
            d: 2,
            n_transverse: 8,
            l_z: 20.0,
            n_z: 128,
            dealias: true,
        })
        .unwrap()
    }

    #[test]
    fn kernel_has_unit_mass_and_is_even() {
        for &t in &[0.1, 1.0, 10.0] {
            let spec = KernelSpec::new(2, t).unwrap();
            let ev = KernelEvaluator::new(spec);
            let h = 0.01 * t.powf(0.25);
            let n = (40.0 * t.powf(0.25) / h) as i64;
            let mass: f64 = (-n..=n).map(|i| ev.eval(&[0.0, i as f64 * h], &[0, 0])).sum::<f64>() * h;
            assert!((mass - 1.0).abs() < 1e-10, "t = {t}: {mass}");
            for z in [0.3, 1.7] {
                let a = ev.eval(&[0.2, z], &[0, 0]);
                let b = ev.eval(&[-0.2, -z], &[0, 0]);
                assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn transverse_modes_enter_at_small_times() {
        let t = 2e-3;
        let spec = KernelSpec::new(2, t).unwrap();
        assert!(spec.lattice_radius >= 1);
        let ev = KernelEvaluator::new(spec);
        // Mass over one transverse period is still one.
        let h = 0.02 * t.powf(0.25);
        let n = (40.0 * t.powf(0.25) / h) as i64;
        let nx = 32;
        let mut mass = 0.0;
        for ix in 0..nx {
            for iz in -n..=n {
                mass += ev.eval(&[ix as f64 / nx as f64, iz as f64 * h], &[0, 0]);
            }
        }
        mass *= h / nx as f64;
        assert!((mass - 1.0).abs() < 1e-9, "{mass}");
    }

    #[test]
    fn kernel_collapses_under_scaling() {
        let profile = |t: f64, y: f64| t.powf(0.25) * kernel_eval(2, t, &[0.0, y * t.powf(0.25)], &[0, 0]).unwrap();
        for y in [0.0, 0.5, 1.3, 2.9] {
            let a = profile(0.5, y);
            for t in [1.0, 2.0] {
                assert!((profile(t, y) - a).abs() < 1e-12, "y = {y}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let t = 0.7;
        let h = 1e-4;
        for z in [0.2, 0.9] {
            let fd = (kernel_eval(2, t, &[0.0, z + h], &[0, 0]).unwrap()
                - kernel_eval(2, t, &[0.0, z - h], &[0, 0]).unwrap())
                / (2.0 * h);
            let exact = kernel_eval(2, t, &[0.0, z], &[0, 1]).unwrap();
            assert!((fd - exact).abs() < 1e-7, "{fd} vs {exact}");
        }
    }

    #[test]
    fn cutoff_errors() {
        assert!(matches!(KernelSpec::new(2, 1e-5), Err(Error::Cutoff(_))));
        assert!(kernel_l1_norm(2, 1.0, 4).is_err());
        assert!(kernel_scaling(2, 0, &[]).is_err());
    }

    #[test]
    fn l1_norm_of_kernel_at_least_one() {
        assert!(kernel_l1_norm(2, 1.0, 0).unwrap() >= 1.0);
    }

    #[test]
    fn multiplicities_sum_to_power_of_d() {
        for d in 2..=5 {
            for j in 0..=4 {
                let s: f64 = multi_indices(d, j).iter().map(|(_, m)| m).sum();
                assert_eq!(s, (d as f64).powi(j as i32));
            }
        }
    }

    #[test]
    fn interval_weights_branches_agree() {
        let h = 0.3;
        for x in [0.002, 0.0099] {
            let (a, b) = interval_weights(x / h, h);
            let ea = h * ((-(-x).exp_m1()) - x * (-x).exp()) / (x * x);
            let eb = h * (x + (-x).exp_m1()) / (x * x);
            assert!((a - ea).abs() < 1e-10 && (b - eb).abs() < 1e-10);
        }
        let (a, b) = interval_weights(0.0, h);
        assert_eq!((a, b), (0.5 * h, 0.5 * h));
    }

    #[test]
    fn weighted_norm_trivial_cases() {
        let grid = small_grid();
        let times = slab_times(0.1, 5);
        let zero = TimeSlab::zeros(times.clone(), grid.len());
        assert_eq!(weighted_norm(&grid, &zero).unwrap(), 0.0);
        let a = 0.37;
        let c = grid.forward_values(&vec![a; grid.len()]);
        let constant = TimeSlab {
            times: times.clone(),
            levels: vec![c; times.len()],
        };
        assert!((weighted_norm(&grid, &constant).unwrap() - a).abs() < 1e-14);
    }

    #[test]
    fn weighted_norm_of_lowest_z_mode() {
        let grid = small_grid();
        let l = grid.spec().l_z;
        let t0 = 0.1;
        let times = slab_times(t0, 5);
        let vals = grid.sample(|_, z| (PI * z / l).sin()).values;
        let c = grid.forward_values(&vals);
        let slab = TimeSlab {
            times: times.clone(),
            levels: vec![c; times.len()],
        };
        let k = PI / l;
        let expected: f64 = (0..=4).map(|j| k.powi(j) * t0.powf(j as f64 / 4.0)).sum();
        assert!((weighted_norm(&grid, &slab).unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let grid = small_grid();
        let sol = local_solve(&grid, &grid.zeros_real(), Source::Kink(KinkProfile::new(0.0)), 0.1, 9)
            .unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.slab.levels.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn linear_source_reproduces_the_semigroup() {
        let grid = small_grid();
        let a = 0.5;
        let f0 = grid.sample(|x, z| 1e-3 * (-(z - 1.0) * (z - 1.0) / 4.0).exp() * (1.0 + 0.5 * (2.0 * PI * x[0]).cos()));
        let t0 = 0.1;
        let sol = local_solve(&grid, &f0, Source::Linear(a), t0, SLAB_LEVELS).unwrap();
        let mut fh = grid.forward_values(&f0.values);
        grid.project_band(&mut fh);
        let exact: Vec<Complex64> = fh
            .iter()
            .zip(grid.k2())
            .map(|(c, &k)| c * (-(k * k + a * k) * t0).exp())
            .collect();
        let got = sol.slab.levels.last().unwrap();
        let err = grid
            .inverse_values(&got.iter().zip(&exact).map(|(x, y)| x - y).collect::<Vec<_>>())
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-8, "{err}");
        for w in sol.increments.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}

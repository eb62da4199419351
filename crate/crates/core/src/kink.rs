//! The kink family `v_c(z) = tanh((z - c)/sqrt 2)` and projection onto it.

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Surface tension `m0 = int_{-1}^{1} sqrt(2 G(s)) ds = 2 sqrt(2) / 3`.
pub fn surface_tension() -> f64 {
    2.0 * SQRT2 / 3.0
}

/// Double-well potential `G(u) = (1 - u^2)^2 / 4` and its derivatives.
pub fn potential(u: f64) -> f64 {
    let a = 1.0 - u * u;
    0.25 * a * a
}

pub fn potential_d1(u: f64) -> f64 {
    u * u * u - u
}

pub fn potential_d2(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

/// A shifted kink `v_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkProfile {
    pub c: f64,
}

/// `(tanh s, sech^2 s)` computed without cancellation in the tails.
fn tanh_sech2(s: f64) -> (f64, f64) {
    let ch = s.cosh();
    (s.tanh(), 1.0 / (ch * ch))
}

impl KinkProfile {
    pub fn new(c: f64) -> Self {
        KinkProfile { c }
    }

    fn arg(&self, z: f64) -> f64 {
        (z - self.c) / SQRT2
    }

    pub fn value(&self, z: f64) -> f64 {
        self.arg(z).tanh()
    }

    pub fn dz(&self, z: f64) -> f64 {
        tanh_sech2(self.arg(z)).1 / SQRT2
    }

    pub fn dzz(&self, z: f64) -> f64 {
        let (t, s2) = tanh_sech2(self.arg(z));
        -t * s2
    }

    pub fn dzzz(&self, z: f64) -> f64 {
        let (t, s2) = tanh_sech2(self.arg(z));
        -s2 * (1.0 - 3.0 * t * t) / SQRT2
    }

    /// `v_c`, `v_cz`, `v_czz` on the given z samples.
    pub fn tables(&self, z: &[f64]) -> KinkTables {
        let mut v = Vec::with_capacity(z.len());
        let mut vz = Vec::with_capacity(z.len());
        let mut vzz = Vec::with_capacity(z.len());
        for &zz in z {
            let (t, s2) = tanh_sech2(self.arg(zz));
            v.push(t);
            vz.push(s2 / SQRT2);
            vzz.push(-t * s2);
        }
        KinkTables { v, vz, vzz }
    }

    /// Kink energy `int_{-L}^{L} (v_z^2/2 + G(v)) dz` in closed form.
    pub fn truncated_energy(&self, l: f64) -> f64 {
        surface_tension() - self.energy_deficit(l)
    }

    /// `m0` minus the truncated kink energy, accurate when tiny.
    pub fn energy_deficit(&self, l: f64) -> f64 {
        // On each side the missing tail is (sqrt2/2)(e^2 - e^3/3) with e = 1 - tanh(b).
        let tail = |a: f64| {
            let b = a / SQRT2;
            let e = 2.0 / ((2.0 * b).exp() + 1.0);
            0.5 * SQRT2 * (e * e - e * e * e / 3.0)
        };
        tail(l - self.c) + tail(l + self.c)
    }

    /// The full-state field `u = v_c` sampled on the grid.
    pub fn field(&self, grid: &Grid) -> RealField {
        grid.sample_z(|z| self.value(z))
    }
}

/// Kink samples along z.
#[derive(Debug, Clone)]
pub struct KinkTables {
    pub v: Vec<f64>,
    pub vz: Vec<f64>,
    pub vzz: Vec<f64>,
}

/// `phi(c) = int (u - v_c) v_cz` and its c-derivative for a z-profile of u.
pub fn projection_residual(z: &[f64], dz: f64, ubar: &[f64], c: f64) -> (f64, f64) {
    let k = KinkProfile::new(c);
    let mut phi = 0.0;
    let mut dphi = 0.0;
    for (&zz, &u) in z.iter().zip(ubar) {
        let (t, s2) = tanh_sech2(k.arg(zz));
        let vz = s2 / SQRT2;
        let vzz = -t * s2;
        let r = u - t;
        phi += r * vz;
        dphi += vz * vz - r * vzz;
    }
    (phi * dz, dphi * dz)
}

fn profile_distance_sq(z: &[f64], ubar: &[f64], c: f64) -> f64 {
    let k = KinkProfile::new(c);
    z.iter()
        .zip(ubar)
        .map(|(&zz, &u)| (u - k.value(zz)).powi(2))
        .sum()
}

/// Step of the sign-change scan used to bracket roots of `phi`.
const SCAN_STEP: f64 = 0.25;

/// Projection tolerance on `|phi|`.
pub const PHI_TOL: f64 = 1e-10;

/// Safeguarded Newton on a bracket `[a, b]` with `phi(a) < 0 < phi(b)`.
fn refine(z: &[f64], dz: f64, ubar: &[f64], mut a: f64, mut b: f64) -> Result<f64> {
    let mut c = 0.5 * (a + b);
    for _ in 0..200 {
        let (phi, dphi) = projection_residual(z, dz, ubar, c);
        if phi.abs() <= 1e-14 {
            return Ok(c);
        }
        if phi < 0.0 {
            a = c;
        } else {
            b = c;
        }
        let newton = c - phi / dphi;
        let next = if dphi > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - c).abs() <= 1e-15 * (1.0 + c.abs()) || b - a <= 1e-15 * (1.0 + c.abs()) {
            c = next;
            break;
        }
        c = next;
    }
    let (phi, _) = projection_residual(z, dz, ubar, c);
    if phi.abs() <= PHI_TOL {
        Ok(c)
    } else {
        Err(Error::Projection(format!(
            "root refinement stalled at c = {c} with phi = {phi:e}"
        )))
    }
}

/// L2 projection of a transverse-mean profile onto the kink family.
///
/// Scans `|c - c_init| <= half_window` for sign changes of `phi` from
/// negative to positive (local minima of `||u - v_c||`), refines each and
/// returns the one closest to `ubar`.
pub fn project_shift_profile(
    z: &[f64],
    dz: f64,
    ubar: &[f64],
    c_init: f64,
    half_window: f64,
) -> Result<f64> {
    let steps = (2.0 * half_window / SCAN_STEP).ceil().max(1.0) as usize;
    let h = 2.0 * half_window / steps as f64;
    let lo = c_init - half_window;
    let mut best: Option<(f64, f64)> = None;
    let mut prev = projection_residual(z, dz, ubar, lo).0;
    for i in 1..=steps {
        let c = lo + i as f64 * h;
        let cur = projection_residual(z, dz, ubar, c).0;
        if prev < 0.0 && cur >= 0.0 {
            let root = if cur == 0.0 {
                c
            } else {
                refine(z, dz, ubar, c - h, c)?
            };
            let dist = profile_distance_sq(z, ubar, root);
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((root, dist));
            }
        }
        prev = cur;
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        Error::Projection(format!(
            "no sign change of phi within |c - {c_init}| <= {half_window}"
        ))
    })
}

/// Shift `c` of the L2-closest kink to the full state `u`.
pub fn project_shift(grid: &Grid, u: &RealField, c_init: f64) -> Result<f64> {
    if u.spec != *grid.spec() {
        return Err(Error::GridMismatch);
    }
    u.check_finite()?;
    let ubar = grid.transverse_mean(&u.values);
    project_shift_profile(grid.z(), grid.dz(), &ubar, c_init, 0.5 * grid.spec().l_z)
}

/// Cold-start guess `c ~ -1/2 int (u - v_0)` from the profile of `u - v_0`.
pub fn mass_shift_estimate(grid: &Grid, f0: &RealField) -> f64 {
    -0.5 * grid.integrate(&f0.values)
}

/// `||u - v_c||_inf / ||u - v_cbar||_inf`; zero when `u = v_c`.
pub fn shift_comparison_monitor(grid: &Grid, u: &RealField, c: f64, c_bar: f64) -> f64 {
    let sup_dist = |s: f64| {
        let k = KinkProfile::new(s);
        let v: Vec<f64> = grid.z().iter().map(|&z| k.value(z)).collect();
        u.values
            .chunks_exact(grid.slab_len())
            .zip(&v)
            .flat_map(|(row, &vz)| row.iter().map(move |x| (x - vz).abs()))
            .fold(0.0, f64::max)
    };
    let num = sup_dist(c);
    if num == 0.0 {
        return 0.0;
    }
    if c == c_bar {
        return 1.0;
    }
    num / sup_dist(c_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid() -> Grid {
        Grid::new(GridSpec {
            d: 2,
            n_transverse: 8,
            l_z: 40.0,
            n_z: 512,
            dealias: true,
        })
        .unwrap()
    }

    #[test]
    fn m0_matches_closed_form_integral() {
        // int_{-1}^{1} (1 - s^2)/sqrt2 ds = (4/3)/sqrt2
        assert!((surface_tension() - (4.0 / 3.0) / SQRT2).abs() < 1e-15);
        assert!((surface_tension() - 0.942_809_041_582_063_4).abs() < 1e-15);
    }

    #[test]
    fn kink_energy_by_quadrature() {
        let g = grid();
        let k = KinkProfile::new(0.0);
        let e: f64 = g
            .z()
            .iter()
            .map(|&z| 0.5 * k.dz(z).powi(2) + potential(k.value(z)))
            .sum::<f64>()
            * g.dz();
        assert!((e - surface_tension()).abs() < 1e-8);
        assert!(k.energy_deficit(40.0) < 1e-20);
        let short = KinkProfile::new(0.3).truncated_energy(3.0);
        let quad = {
            let n = 200_000;
            let h = 6.0 / n as f64;
            let kk = KinkProfile::new(0.3);
            (0..=n)
                .map(|i| {
                    let z = -3.0 + i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * (0.5 * kk.dz(z).powi(2) + potential(kk.value(z)))
                })
                .sum::<f64>()
                * h
        };
        assert!((short - quad).abs() < 1e-9);
    }

    #[test]
    fn euler_lagrange_residual_vanishes() {
        let g = grid();
        let k = KinkProfile::new(0.2);
        for &z in g.z() {
            let r = -k.dzz(z) + potential_d1(k.value(z));
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let k = KinkProfile::new(-0.4);
        let h = 1e-5;
        for z in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let fd1 = (k.value(z + h) - k.value(z - h)) / (2.0 * h);
            let fd2 = (k.dz(z + h) - k.dz(z - h)) / (2.0 * h);
            let fd3 = (k.dzz(z + h) - k.dzz(z - h)) / (2.0 * h);
            assert!((fd1 - k.dz(z)).abs() < 1e-9);
            assert!((fd2 - k.dzz(z)).abs() < 1e-9);
            assert!((fd3 - k.dzzz(z)).abs() < 1e-9);
            assert!(k.dz(z) > 0.0);
        }
        assert!(k.dz(1000.0) >= 0.0 && k.dz(1000.0).is_finite());
    }

    #[test]
    fn exact_kink_projects_to_itself() {
        let g = grid();
        let u = KinkProfile::new(0.3).field(&g);
        let c = project_shift(&g, &u, 0.0).unwrap();
        assert!((c - 0.3).abs() < 1e-10);
    }

    #[test]
    fn even_perturbation_keeps_center() {
        let g = grid();
        let k = KinkProfile::new(0.0);
        let u = g.sample(|x, z| {
            k.value(z) + 0.05 * (2.0 * std::f64::consts::PI * x[0]).cos() * (-z * z).exp()
        });
        let c = project_shift(&g, &u, 0.7).unwrap();
        assert!(c.abs() < 1e-8);
    }

    #[test]
    fn translation_mode_perturbation_matches_scan() {
        let g = grid();
        let k = KinkProfile::new(0.0);
        let u = g.sample_z(|z| k.value(z) + 0.05 * k.dz(z));
        let c = project_shift(&g, &u, 0.0).unwrap();
        // Golden-section minimization of c -> ||u - v_c||^2 as an independent oracle.
        let ubar = g.transverse_mean(&u.values);
        let dist = |c: f64| profile_distance_sq(g.z(), &ubar, c);
        let (mut a, mut b) = (-0.5, 0.5);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = b - r * (b - a);
            let x2 = a + r * (b - a);
            if dist(x1) < dist(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let oracle = 0.5 * (a + b);
        assert!((c - oracle).abs() < 1e-7, "{c} vs {oracle}");
        assert!((c + 0.05).abs() < 5e-3);
    }

    #[test]
    fn projection_fails_without_front() {
        let g = grid();
        let u = g.sample_z(|_| 1.0);
        assert!(matches!(project_shift(&g, &u, 0.0), Err(Error::Projection(_))));
    }

    #[test]
    fn comparison_monitor_trivial_cases() {
        let g = grid();
        let u = KinkProfile::new(0.25).field(&g);
        assert_eq!(shift_comparison_monitor(&g, &u, 0.25, 0.0), 0.0);
        let w = g.sample_z(|z| KinkProfile::new(0.25).value(z) + 0.01 * (-z * z).exp());
        assert_eq!(shift_comparison_monitor(&g, &w, 0.1, 0.1), 1.0);
    }
}

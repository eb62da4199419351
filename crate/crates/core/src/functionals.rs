//! Energy gap, dissipation, Hdot^{-1} distance and the linearized functionals.
//!
//! States are written `u = v_ref + f` with an analytic reference kink and a
//! perturbation `f` that is periodic on the truncated strip. All integrals
//! are assembled from `f` so that small gaps are never the difference of two
//! order-one numbers.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::kink::{project_shift_profile, KinkProfile, KinkTables};

/// Mass tolerance for the Hdot^{-1} distance.
pub const MASS_TOL: f64 = 1e-10;

/// Orthogonality tolerance for the Hardy ratio.
pub const ORTHO_TOL: f64 = 1e-8;

/// Ratios whose denominator falls below this are stored as zero.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Boundary-decay limit for the Lassoued-Mironescu evaluation.
pub const LM_BOUNDARY_LIMIT: f64 = 1e-6;

/// Distance from the z-boundary excluded from the Lassoued-Mironescu window.
pub const LM_MARGIN: f64 = 10.0;

/// One time-stamped record of the monitored functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub energy_gap: f64,
    pub dissipation: f64,
    pub hminus1_sq: f64,
    pub shift: f64,
    pub f_l2: f64,
    pub f_grad_l2: f64,
    pub f_sup: f64,
    pub gn_ratio: f64,
    pub mass: f64,
    pub alg_ratio_c: f64,
    #[serde(rename = "alg_ratio_E")]
    pub alg_ratio_e: f64,
    /// `||u - v_0||_{L2}`.
    #[serde(default)]
    pub f0_l2: f64,
    /// `||grad(u - v_0)||_{L2}`.
    #[serde(default)]
    pub f0_grad_l2: f64,
}

impl Diagnostics {
    /// `||u - v_c||_{H1}`.
    pub fn fc_h1(&self) -> f64 {
        self.f_l2.hypot(self.f_grad_l2)
    }

    /// `||u - v_0||_{H1}`.
    pub fn f0_h1(&self) -> f64 {
        self.f0_l2.hypot(self.f0_grad_l2)
    }
}

fn guarded(num: f64, den: f64) -> f64 {
    if den < RATIO_FLOOR {
        0.0
    } else {
        num / den
    }
}

/// `||f_c||_inf / (E^{1/2 - d'/12} D^{d'/12})`.
pub fn gn_ratio(f_sup: f64, e: f64, dis: f64, d_prime: usize) -> f64 {
    let q = d_prime as f64 / 12.0;
    guarded(f_sup, e.max(0.0).powf(0.5 - q) * dis.max(0.0).powf(q))
}

/// `c^2 / (sqrt(H E) + (|c| + 1) E)`.
pub fn alg_ratio_c(c: f64, e: f64, h: f64) -> f64 {
    let e = e.max(0.0);
    guarded(c * c, (h.max(0.0) * e).sqrt() + (c.abs() + 1.0) * e)
}

/// `E / (sqrt(H D) + (|c| + 1)^2 D)`.
pub fn alg_ratio_e(c: f64, e: f64, h: f64, dis: f64) -> f64 {
    let dis = dis.max(0.0);
    guarded(e, (h.max(0.0) * dis).sqrt() + (c.abs() + 1.0).powi(2) * dis)
}

/// `N = G'(v + f) - G'(v)` pointwise, for a reference profile `v(z)`.
pub fn nonlinearity(grid: &Grid, v: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    for (row, &v) in f.chunks_exact(grid.slab_len()).zip(v) {
        let a = 3.0 * v * v - 1.0;
        let b = 3.0 * v;
        out.extend(row.iter().map(|&x| x * (a + x * (b + x))));
    }
    out
}

/// Transform of `N`, restricted to the 2/3 band when dealiasing is on.
pub fn nonlinearity_hat(grid: &Grid, v: &[f64], f: &[f64]) -> Vec<Complex64> {
    let mut n = grid.forward_values(&nonlinearity(grid, v, f));
    if grid.spec().dealias {
        grid.project_band(&mut n);
    }
    n
}

/// Functional evaluation about a fixed reference kink.
pub struct Evaluator<'g> {
    grid: &'g Grid,
    v_ref: KinkProfile,
    tables: KinkTables,
}

impl<'g> Evaluator<'g> {
    pub fn new(grid: &'g Grid, v_ref: KinkProfile) -> Self {
        Evaluator {
            grid,
            v_ref,
            tables: v_ref.tables(grid.z()),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn reference(&self) -> KinkProfile {
        self.v_ref
    }

    pub fn tables(&self) -> &KinkTables {
        &self.tables
    }

    fn rows<'a>(&'a self, f: &'a [f64]) -> impl Iterator<Item = (&'a [f64], f64)> + 'a {
        f.chunks_exact(self.grid.slab_len()).zip(self.tables.v.iter().copied())
    }

    /// `N = G'(v + f) - G'(v)` pointwise.
    pub fn nonlinearity(&self, f: &[f64]) -> Vec<f64> {
        nonlinearity(self.grid, &self.tables.v, f)
    }

    /// Transform of `N`, restricted to the 2/3 band when dealiasing is on.
    pub fn nonlinearity_hat(&self, f: &[f64]) -> Vec<Complex64> {
        nonlinearity_hat(self.grid, &self.tables.v, f)
    }

    /// `int G(v + f) - G(v) - G'(v) f`.
    pub fn potential_excess(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for (row, v) in self.rows(f) {
            let a = 0.5 * (3.0 * v * v - 1.0);
            s += row
                .iter()
                .map(|&x| x * x * (a + x * (v + 0.25 * x)))
                .sum::<f64>();
        }
        s * self.grid.spec().cell()
    }

    /// Energy gap from samples `f` and their transform `fh`.
    pub fn energy_gap(&self, fh: &[Complex64], f: &[f64]) -> f64 {
        let k2 = self.grid.k2();
        let grad = self.grid.weighted_sum(fh, |i| k2[i]);
        0.5 * grad + self.potential_excess(f) - self.v_ref.energy_deficit(self.grid.spec().l_z)
    }

    /// `int |grad mu|^2` with `mu_hat = N_hat + |k|^2 f_hat`.
    pub fn dissipation(&self, fh: &[Complex64], nh: &[Complex64]) -> f64 {
        let k2 = self.grid.k2();
        fh.iter()
            .zip(nh)
            .zip(k2)
            .map(|((f, n), &k)| k * (n + f * k).norm_sqr())
            .sum::<f64>()
            * self.grid.spec().volume()
    }

    /// Shift, norms of `f_c`, and the sup norm, given `f` about the reference.
    fn shifted(&self, fh: &[Complex64], f: &[f64], c_init: f64) -> Result<(f64, f64, f64, f64)> {
        let grid = self.grid;
        let z = grid.z();
        let fbar = grid.transverse_mean(f);
        let ubar: Vec<f64> = fbar.iter().zip(&self.tables.v).map(|(a, b)| a + b).collect();
        let c = project_shift_profile(z, grid.dz(), &ubar, c_init, 0.5 * grid.spec().l_z)?;
        // f_c = f - delta with delta = v_c - v_ref, a function of z only.
        let kc = KinkProfile::new(c);
        let delta: Vec<f64> = z
            .iter()
            .zip(&self.tables.v)
            .map(|(&zz, &v)| kc.value(zz) - v)
            .collect();
        let dh = grid.forward_profile(&delta);
        let slab = grid.slab_len();
        let k2 = grid.k2();
        let mut l2 = 0.0;
        let mut g2 = 0.0;
        for (i, c) in fh.iter().enumerate() {
            let v = if i % slab == 0 { c - dh[i / slab] } else { *c };
            let a = v.norm_sqr();
            l2 += a;
            g2 += k2[i] * a;
        }
        let vol = grid.spec().volume();
        let sup = f
            .chunks_exact(slab)
            .zip(&delta)
            .flat_map(|(row, &dl)| row.iter().map(move |x| (x - dl).abs()))
            .fold(0.0, f64::max);
        Ok((c, (vol * l2).sqrt(), (vol * g2).sqrt(), sup))
    }

    /// A full diagnostics record. `nh` may carry a precomputed nonlinearity transform.
    pub fn diagnostics(
        &self,
        t: f64,
        fh: &[Complex64],
        f: &[f64],
        nh: Option<&[Complex64]>,
        c_init: f64,
    ) -> Result<Diagnostics> {
        let grid = self.grid;
        let vol = grid.spec().volume();
        let e = self.energy_gap(fh, f);
        let dis = match nh {
            Some(n) => self.dissipation(fh, n),
            None => self.dissipation(fh, &self.nonlinearity_hat(f)),
        };
        let mass = fh[0].re * vol;
        let h = hminus1_from(grid, fh)?;
        let (c, f_l2, f_grad_l2, f_sup) = self.shifted(fh, f, c_init)?;
        let k2 = grid.k2();
        let f0_l2 = grid.weighted_sum(fh, |_| 1.0).sqrt();
        let f0_grad_l2 = grid.weighted_sum(fh, |i| k2[i]).sqrt();
        let rec = Diagnostics {
            t,
            energy_gap: e,
            dissipation: dis,
            hminus1_sq: h,
            shift: c,
            f_l2,
            f_grad_l2,
            f_sup,
            gn_ratio: gn_ratio(f_sup, e, dis, grid.spec().d_prime()),
            mass,
            alg_ratio_c: alg_ratio_c(c, e, h),
            alg_ratio_e: alg_ratio_e(c, e, h, dis),
            f0_l2,
            f0_grad_l2,
        };
        Ok(rec)
    }
}

fn reference_perturbation(grid: &Grid, u: &RealField) -> Result<RealField> {
    if u.spec != *grid.spec() {
        return Err(Error::GridMismatch);
    }
    u.check_finite()?;
    let v = KinkProfile::new(0.0).tables(grid.z()).v;
    let slab = grid.slab_len();
    let values = u
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| x - v[i / slab])
        .collect();
    Ok(RealField {
        spec: u.spec,
        values,
    })
}

/// `E(u) - m0` for a full state `u` close to the kink family.
pub fn energy_gap(grid: &Grid, u: &RealField) -> Result<f64> {
    let f = reference_perturbation(grid, u)?;
    let fh = grid.forward(&f)?;
    let e = Evaluator::new(grid, KinkProfile::new(0.0)).energy_gap(&fh.coeffs, &f.values);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite { index: 0, value: e })
    }
}

/// `int |grad(lap u - G'(u))|^2` for a full state `u`.
pub fn dissipation(grid: &Grid, u: &RealField) -> Result<f64> {
    let f = reference_perturbation(grid, u)?;
    let fh = grid.forward(&f)?;
    let ev = Evaluator::new(grid, KinkProfile::new(0.0));
    Ok(ev.dissipation(&fh.coeffs, &ev.nonlinearity_hat(&f.values)))
}

fn hminus1_from(grid: &Grid, fh: &[Complex64]) -> Result<f64> {
    let mass = fh[0].re * grid.spec().volume();
    if mass.abs() > MASS_TOL {
        return Err(Error::Mass {
            mass,
            tol: MASS_TOL,
        });
    }
    let k2 = grid.k2();
    Ok(grid.weighted_sum(fh, |i| if k2[i] > 0.0 { 1.0 / k2[i] } else { 0.0 }))
}

/// Squared Hdot^{-1} norm of a mean-zero perturbation `f0 = u - v_0`.
pub fn hminus1_sq(grid: &Grid, f0: &RealField) -> Result<f64> {
    let fh = grid.forward(f0)?;
    hminus1_from(grid, &fh.coeffs)
}

fn gradient_components(grid: &Grid, f: &RealField) -> Result<Vec<RealField>> {
    let fh = grid.forward(f)?;
    let d = grid.spec().d;
    (0..d)
        .map(|a| {
            let mut order = vec![0u32; d];
            order[a] = 1;
            grid.inverse(&grid.differentiate(&fh, &order)?)
        })
        .collect()
}

/// `int |grad f|^2 + G''(v_c) f^2`.
pub fn linearized_gap(grid: &Grid, f: &RealField, c: f64) -> Result<f64> {
    let fh = grid.forward(f)?;
    let k2 = grid.k2();
    let grad = grid.weighted_sum(&fh.coeffs, |i| k2[i]);
    let v = KinkProfile::new(c).tables(grid.z()).v;
    let pot: f64 = f
        .values
        .chunks_exact(grid.slab_len())
        .zip(&v)
        .map(|(row, &v)| (3.0 * v * v - 1.0) * row.iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(grad + pot * grid.spec().cell())
}

/// `int v_cz^2 |grad g|^2` with `g = f / v_cz`, on the window `|z - c| <= L - 10`.
///
/// Evaluated as `|grad' f|^2 + (f_z + sqrt2 tanh f)^2`, which equals
/// `v_cz^2 |grad g|^2` without dividing by the decaying `v_cz`.
pub fn linearized_gap_lm(grid: &Grid, f: &RealField, c: f64) -> Result<f64> {
    let spec = grid.spec();
    let slab = grid.slab_len();
    let z = grid.z();
    let outer = 0.9 * spec.l_z;
    let sup = f
        .values
        .chunks_exact(slab)
        .zip(z)
        .filter(|(_, &zz)| zz.abs() >= outer)
        .flat_map(|(row, _)| row.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    if sup > LM_BOUNDARY_LIMIT {
        return Err(Error::Window {
            sup,
            limit: LM_BOUNDARY_LIMIT,
        });
    }
    let grads = gradient_components(grid, f)?;
    let d = spec.d;
    let cut = spec.l_z - LM_MARGIN;
    let k = KinkProfile::new(c);
    let mut s = 0.0;
    for (iz, &zz) in z.iter().enumerate() {
        if (zz - c).abs() > cut {
            continue;
        }
        let w = std::f64::consts::SQRT_2 * k.value(zz);
        for j in iz * slab..(iz + 1) * slab {
            let mut row = 0.0;
            for g in &grads[..d - 1] {
                row += g.values[j] * g.values[j];
            }
            let gz = grads[d - 1].values[j] + w * f.values[j];
            s += row + gz * gz;
        }
    }
    Ok(s * spec.cell())
}

/// `int |grad(-lap f + G''(v_c) f)|^2`.
pub fn linearized_dissipation(grid: &Grid, f: &RealField, c: f64) -> Result<f64> {
    let fh = grid.forward(f)?;
    let k2 = grid.k2();
    let mut lap = fh.clone();
    for (x, &k) in lap.coeffs.iter_mut().zip(k2) {
        *x *= -k;
    }
    let lap = grid.inverse(&lap)?;
    let v = KinkProfile::new(c).tables(grid.z()).v;
    let slab = grid.slab_len();
    let w: Vec<f64> = f
        .values
        .iter()
        .zip(&lap.values)
        .enumerate()
        .map(|(i, (x, l))| {
            let vv = v[i / slab];
            (3.0 * vv * vv - 1.0) * x - l
        })
        .collect();
    let wh = grid.forward_values(&w);
    Ok(grid.weighted_sum(&wh, |i| k2[i]))
}

/// `<f, v_cz>` over the strip.
pub fn translation_overlap(grid: &Grid, f: &RealField, c: f64) -> f64 {
    let vz = KinkProfile::new(c).tables(grid.z()).vz;
    f.values
        .chunks_exact(grid.slab_len())
        .zip(&vz)
        .map(|(row, &w)| w * row.iter().sum::<f64>())
        .sum::<f64>()
        * grid.spec().cell()
}

/// Removes the `v_cz` component of `f`.
pub fn orthogonalize(grid: &Grid, f: &RealField, c: f64) -> RealField {
    let vz = KinkProfile::new(c).tables(grid.z()).vz;
    let norm: f64 = vz.iter().map(|w| w * w).sum::<f64>() * grid.dz();
    let a = translation_overlap(grid, f, c) / norm;
    let slab = grid.slab_len();
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| x - a * vz[i / slab])
        .collect();
    RealField {
        spec: f.spec,
        values,
    }
}

/// `int f^2 / ((z - c)^2 + 1)` divided by `||grad f||^2`, for `f` orthogonal to `v_cz`.
pub fn hardy_ratio(grid: &Grid, f: &RealField, c: f64) -> Result<f64> {
    let overlap = translation_overlap(grid, f, c);
    if overlap.abs() > ORTHO_TOL {
        return Err(Error::Orthogonality { value: overlap });
    }
    let num: f64 = f
        .values
        .chunks_exact(grid.slab_len())
        .zip(grid.z())
        .map(|(row, &z)| row.iter().map(|x| x * x).sum::<f64>() / ((z - c).powi(2) + 1.0))
        .sum::<f64>()
        * grid.spec().cell();
    let fh = grid.forward(f)?;
    let k2 = grid.k2();
    let den = grid.weighted_sum(&fh.coeffs, |i| k2[i]);
    if num == 0.0 {
        Ok(0.0)
    } else if den == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(num / den)
    }
}

/// All monitored functionals of a full state `u` at time `t`.
pub fn diagnostics(grid: &Grid, u: &RealField, t: f64, c_init: f64) -> Result<Diagnostics> {
    let f = reference_perturbation(grid, u)?;
    let fh = grid.forward(&f)?;
    Evaluator::new(grid, KinkProfile::new(0.0)).diagnostics(t, &fh.coeffs, &f.values, None, c_init)
}

/// `G0 = H0 + E0 + E0^7`.
pub fn g0(h0: f64, e0: f64) -> f64 {
    h0 + e0 + e0.powi(7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn grid(d: usize) -> Grid {
        Grid::new(GridSpec {
            d,
            n_transverse: 16,
            l_z: 40.0,
            n_z: 512,
            dealias: true,
        })
        .unwrap()
    }

    fn bump(g: &Grid, amp: f64) -> RealField {
        g.sample(|x, z| amp * (1.0 + 0.5 * (2.0 * PI * x[0]).cos()) * z * (-(z - 0.3).powi(2) / 2.0).exp())
    }

    #[test]
    fn kinks_have_zero_gap_and_dissipation() {
        let g = grid(2);
        for c in [0.0, 0.5, -1.25] {
            let u = KinkProfile::new(c).field(&g);
            assert!(energy_gap(&g, &u).unwrap().abs() < 1e-9);
            assert!(dissipation(&g, &u).unwrap().abs() < 1e-9);
        }
        let u0 = KinkProfile::new(0.0).field(&g);
        let d = diagnostics(&g, &u0, 0.0, 0.0).unwrap();
        assert!(d.energy_gap.abs() < 1e-12);
        assert!(d.dissipation.abs() < 1e-12);
        assert_eq!(d.hminus1_sq, 0.0);
        assert!(d.shift.abs() < 1e-12);
        assert_eq!(d.gn_ratio, 0.0);
    }

    #[test]
    fn zero_field_functionals() {
        let g = grid(2);
        let z = g.zeros_real();
        assert_eq!(hminus1_sq(&g, &z).unwrap(), 0.0);
        assert_eq!(linearized_gap(&g, &z, 0.0).unwrap(), 0.0);
        assert_eq!(linearized_dissipation(&g, &z, 0.0).unwrap(), 0.0);
        assert_eq!(hardy_ratio(&g, &z, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hminus1_single_mode() {
        let g = grid(2);
        let l = g.spec().l_z;
        let (a, k) = (0.3, 5.0);
        let f = g.sample_z(|z| a * (2.0 * PI * k * z / (2.0 * l)).sin());
        let h = hminus1_sq(&g, &f).unwrap();
        let exact = a * a * g.spec().volume() / 2.0 / (4.0 * PI * PI * (k / (2.0 * l)).powi(2));
        assert!((h - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn hminus1_rejects_mass() {
        let g = grid(2);
        let f = g.sample_z(|z| (-z * z).exp());
        assert!(matches!(hminus1_sq(&g, &f), Err(Error::Mass { .. })));
    }

    #[test]
    fn translation_mode_is_in_both_kernels() {
        let g = grid(3);
        let c = 0.4;
        let k = KinkProfile::new(c);
        let f = g.sample_z(|z| k.dz(z));
        assert!(linearized_gap(&g, &f, c).unwrap().abs() < 1e-9);
        assert!(linearized_dissipation(&g, &f, c).unwrap().abs() < 1e-9);
        assert!(linearized_gap_lm(&g, &f, c).unwrap().abs() < 1e-9);
    }

    #[test]
    fn lm_identity_for_transverse_mode() {
        let g = grid(2);
        let k = KinkProfile::new(0.0);
        let f = g.sample(|x, z| k.dz(z) * (2.0 * PI * x[0]).sin());
        let lm = linearized_gap_lm(&g, &f, 0.0).unwrap();
        let el = linearized_gap(&g, &f, 0.0).unwrap();
        // Right side in closed form: int v_z^2 (2 pi)^2 cos^2 = (2 pi)^2 / 2 * int v_z^2.
        let closed = (2.0 * PI).powi(2) / 2.0 * g.z().iter().map(|&z| k.dz(z).powi(2)).sum::<f64>() * g.dz();
        assert!((lm - closed).abs() < 1e-9 * closed);
        assert!((el - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn lm_window_rejects_boundary_mass() {
        let g = grid(2);
        let f = g.sample_z(|z| 1e-3 * (z / 40.0).cos());
        assert!(matches!(linearized_gap_lm(&g, &f, 0.0), Err(Error::Window { .. })));
    }

    #[test]
    fn hardy_requires_orthogonality() {
        let g = grid(2);
        let f = g.sample_z(|z| (-z * z).exp());
        assert!(matches!(hardy_ratio(&g, &f, 0.0), Err(Error::Orthogonality { .. })));
        let odd = g.sample_z(|z| z * (-z * z / 4.0).exp());
        let r = hardy_ratio(&g, &odd, 0.0).unwrap();
        assert!(r > 0.0 && r.is_finite());
    }

    #[test]
    fn small_perturbation_gap_is_half_linearized_gap() {
        let g = grid(2);
        let w = bump(&g, 1.0);
        let k0 = KinkProfile::new(0.0);
        let el = linearized_gap(&g, &w, 0.0).unwrap();
        let ratio = |eps: f64| {
            let u = g.sample(|_, z| k0.value(z));
            let u = RealField {
                spec: u.spec,
                values: u.values.iter().zip(&w.values).map(|(a, b)| a + eps * b).collect(),
            };
            energy_gap(&g, &u).unwrap() / (eps * eps)
        };
        // Richardson: r(eps) = E_l/2 + a eps + O(eps^2).
        let (r1, r2) = (ratio(1e-3), ratio(5e-4));
        let extrap = 2.0 * r2 - r1;
        assert!((extrap - 0.5 * el).abs() < 1e-6 * el.abs().max(1.0), "{extrap} {}", 0.5 * el);
    }

    #[test]
    fn small_perturbation_dissipation_is_linearized() {
        let g = grid(2);
        let w = bump(&g, 1.0);
        let k0 = KinkProfile::new(0.0);
        let dl = linearized_dissipation(&g, &w, 0.0).unwrap();
        let ratio = |eps: f64| {
            let u = g.sample(|_, z| k0.value(z));
            let u = RealField {
                spec: u.spec,
                values: u.values.iter().zip(&w.values).map(|(a, b)| a + eps * b).collect(),
            };
            dissipation(&g, &u).unwrap() / (eps * eps)
        };
        let (r1, r2) = (ratio(1e-3), ratio(5e-4));
        let extrap = 2.0 * r2 - r1;
        assert!((extrap - dl).abs() < 1e-5 * dl, "{extrap} {dl}");
    }
}

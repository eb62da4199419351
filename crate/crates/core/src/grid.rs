//! Spectral discretization of the strip `Q^(d-1) x [-L, L)`.
//!
//! Samples are stored with the transverse coordinates varying fastest
//! (x1 first) and z slowest. Fourier coefficients use the same layout and
//! are normalized as `c = (1/N) sum f e^{-2 pi i k.x}`, so that
//! `int f^2 = vol * sum |c|^2` with `vol = 2L` (the torus has unit side).
//!
//! Derivatives treat the Nyquist index of each axis as wavenumber zero.
//! This keeps every derivative operator a real diagonal multiplier on the
//! same set of wavenumbers, so discrete identities such as
//! `||lap f|| = ||hess f||` hold to roundoff.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of grid nodes (about 1 GiB of complex data).
pub const MAX_NODES: usize = 1 << 26;

/// Columns gathered per pass of a strided transform.
const TILE: usize = 16;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Spatial dimension, 2..=5.
    pub d: usize,
    pub n_transverse: usize,
    /// Half-length of the z interval.
    pub l_z: f64,
    pub n_z: usize,
    pub dealias: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            d: 2,
            n_transverse: 64,
            l_z: 100.0,
            n_z: 2048,
            dealias: true,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.d) {
            return Err(Error::InvalidGrid(format!("d = {} is outside 2..=5", self.d)));
        }
        for (name, n) in [("n_transverse", self.n_transverse), ("n_z", self.n_z)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even and >= 8")));
            }
        }
        if !(self.l_z.is_finite() && self.l_z >= 20.0) {
            return Err(Error::InvalidGrid(format!("l_z = {} must be >= 20", self.l_z)));
        }
        let nodes = self
            .n_transverse
            .checked_pow((self.d - 1) as u32)
            .and_then(|s| s.checked_mul(self.n_z));
        match nodes {
            Some(n) if n <= MAX_NODES => Ok(()),
            _ => Err(Error::InvalidGrid(format!(
                "node count exceeds the budget of {MAX_NODES}"
            ))),
        }
    }

    pub fn slab_len(&self) -> usize {
        self.n_transverse.pow((self.d - 1) as u32)
    }

    pub fn node_count(&self) -> usize {
        self.slab_len() * self.n_z
    }

    /// Measure of the truncated strip.
    pub fn volume(&self) -> f64 {
        2.0 * self.l_z
    }

    /// Quadrature weight of one node.
    pub fn cell(&self) -> f64 {
        self.volume() / self.node_count() as f64
    }

    /// Effective dimension `max(3, d)` used by the interpolation exponents.
    pub fn d_prime(&self) -> usize {
        self.d.max(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub spec: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl RealField {
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// L2 norms of a field and its derivatives, plus the grid sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub grad_l2: f64,
    pub hess_l2: f64,
    pub third_l2: f64,
    pub lap_l2: f64,
    pub sup: f64,
}

/// Signed integer frequency of index `i` on an axis of length `n`.
pub fn frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Largest frequency kept by the 2/3 rule.
pub fn band_limit(n: usize) -> i64 {
    ((n - 1) / 3) as i64
}

struct AxisPlan {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// A grid with its FFT plans and wavenumber tables.
pub struct Grid {
    spec: GridSpec,
    slab: usize,
    plan_t: AxisPlan,
    plan_z: AxisPlan,
    k_t: Vec<f64>,
    k_z: Vec<f64>,
    band_t: Vec<bool>,
    band_z: Vec<bool>,
    k2: Vec<f64>,
    band: Vec<bool>,
    x: Vec<f64>,
    z: Vec<f64>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        let nt = spec.n_transverse;
        let nz = spec.n_z;
        let mut planner = FftPlanner::new();
        let plan_t = AxisPlan {
            fwd: planner.plan_fft_forward(nt),
            inv: planner.plan_fft_inverse(nt),
        };
        let plan_z = AxisPlan {
            fwd: planner.plan_fft_forward(nz),
            inv: planner.plan_fft_inverse(nz),
        };
        let wave = |i: usize, n: usize, side: f64| {
            if i == n / 2 {
                0.0
            } else {
                TWO_PI * frequency(i, n) as f64 / side
            }
        };
        let k_t: Vec<f64> = (0..nt).map(|i| wave(i, nt, 1.0)).collect();
        let k_z: Vec<f64> = (0..nz).map(|i| wave(i, nz, 2.0 * spec.l_z)).collect();
        let band_t: Vec<bool> = (0..nt)
            .map(|i| frequency(i, nt).abs() <= band_limit(nt))
            .collect();
        let band_z: Vec<bool> = (0..nz)
            .map(|i| frequency(i, nz).abs() <= band_limit(nz))
            .collect();

        let slab = spec.slab_len();
        let m = spec.d - 1;
        let total = spec.node_count();
        let mut k2 = Vec::with_capacity(total);
        let mut band = Vec::with_capacity(total);
        for idx in 0..total {
            let iz = idx / slab;
            let mut rem = idx % slab;
            let mut s = k_z[iz] * k_z[iz];
            let mut keep = band_z[iz];
            for _ in 0..m {
                let i = rem % nt;
                rem /= nt;
                s += k_t[i] * k_t[i];
                keep &= band_t[i];
            }
            k2.push(s);
            band.push(keep);
        }
        let x = (0..nt).map(|i| i as f64 / nt as f64).collect();
        let h = 2.0 * spec.l_z / nz as f64;
        let z = (0..nz).map(|j| -spec.l_z + j as f64 * h).collect();
        Ok(Grid {
            spec,
            slab,
            plan_t,
            plan_z,
            k_t,
            k_z,
            band_t,
            band_z,
            k2,
            band,
            x,
            z,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    pub fn slab_len(&self) -> usize {
        self.slab
    }

    /// Transverse sample coordinates on one axis.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// z sample coordinates, starting at `-L`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn dz(&self) -> f64 {
        2.0 * self.spec.l_z / self.spec.n_z as f64
    }

    /// `|2 pi xi|^2` for every mode, in storage order.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Modes retained by the 2/3 rule.
    pub fn band(&self) -> &[bool] {
        &self.band
    }

    /// Per-axis wavenumbers: axis `l < d-1` is transverse, axis `d-1` is z.
    pub fn axis_wavenumbers(&self, axis: usize) -> &[f64] {
        if axis + 1 == self.spec.d {
            &self.k_z
        } else {
            &self.k_t
        }
    }

    /// Per-axis membership in the 2/3 band.
    pub fn axis_band(&self, axis: usize) -> &[bool] {
        if axis + 1 == self.spec.d {
            &self.band_z
        } else {
            &self.band_t
        }
    }

    /// Index of node `(i_1, ..., i_{d-1}, i_z)`.
    pub fn index(&self, multi: &[usize]) -> usize {
        let m = self.spec.d - 1;
        let mut idx = 0;
        for l in (0..m).rev() {
            idx = idx * self.spec.n_transverse + multi[l];
        }
        idx + multi[m] * self.slab
    }

    /// Writes the per-axis indices of node `idx` into `out` (length d).
    pub fn multi_index(&self, idx: usize, out: &mut [usize]) {
        let m = self.spec.d - 1;
        let nt = self.spec.n_transverse;
        out[m] = idx / self.slab;
        let mut rem = idx % self.slab;
        for o in out.iter_mut().take(m) {
            *o = rem % nt;
            rem /= nt;
        }
    }

    /// Wavevector `2 pi xi` of mode `idx`.
    pub fn wavevector(&self, idx: usize, out: &mut [f64]) {
        let m = self.spec.d - 1;
        let mut multi = [0usize; 5];
        self.multi_index(idx, &mut multi[..=m]);
        for l in 0..m {
            out[l] = self.k_t[multi[l]];
        }
        out[m] = self.k_z[multi[m]];
    }

    pub fn zeros_real(&self) -> RealField {
        RealField {
            spec: self.spec,
            values: vec![0.0; self.len()],
        }
    }

    pub fn zeros_spectral(&self) -> SpectralField {
        SpectralField {
            spec: self.spec,
            coeffs: vec![Complex64::new(0.0, 0.0); self.len()],
        }
    }

    /// Samples `f(x', z)` at every node.
    pub fn sample<F: FnMut(&[f64], f64) -> f64>(&self, mut f: F) -> RealField {
        let m = self.spec.d - 1;
        let mut multi = [0usize; 5];
        let mut xs = [0.0; 4];
        let values = (0..self.len())
            .map(|idx| {
                self.multi_index(idx, &mut multi[..=m]);
                for l in 0..m {
                    xs[l] = self.x[multi[l]];
                }
                f(&xs[..m], self.z[multi[m]])
            })
            .collect();
        RealField {
            spec: self.spec,
            values,
        }
    }

    /// Samples a function of z only.
    pub fn sample_z<F: Fn(f64) -> f64>(&self, f: F) -> RealField {
        let mut values = Vec::with_capacity(self.len());
        for &z in &self.z {
            let v = f(z);
            values.extend(std::iter::repeat(v).take(self.slab));
        }
        RealField {
            spec: self.spec,
            values,
        }
    }

    fn check_spec(&self, spec: &GridSpec) -> Result<()> {
        if *spec == self.spec {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn transform_axis(&self, data: &mut [Complex64], plan: &dyn Fft<f64>, stride: usize) {
        let n = plan.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            return;
        }
        // Gather a few columns at a time so reads stay contiguous.
        let tile = TILE.min(stride);
        let block = n * stride;
        let mut lines = vec![Complex64::new(0.0, 0.0); n * tile];
        for chunk in data.chunks_exact_mut(block) {
            let mut col0 = 0;
            while col0 < stride {
                let w = tile.min(stride - col0);
                let buf = &mut lines[..n * w];
                for k in 0..n {
                    let row = &chunk[k * stride + col0..k * stride + col0 + w];
                    for (c, v) in row.iter().enumerate() {
                        buf[c * n + k] = *v;
                    }
                }
                plan.process_with_scratch(buf, &mut scratch);
                for k in 0..n {
                    let row = &mut chunk[k * stride + col0..k * stride + col0 + w];
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = buf[c * n + k];
                    }
                }
                col0 += w;
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.spec.d - 1;
        let (pt, pz) = if inverse {
            (&self.plan_t.inv, &self.plan_z.inv)
        } else {
            (&self.plan_t.fwd, &self.plan_z.fwd)
        };
        let mut stride = 1;
        for _ in 0..m {
            self.transform_axis(data, pt.as_ref(), stride);
            stride *= self.spec.n_transverse;
        }
        self.transform_axis(data, pz.as_ref(), stride);
    }

    /// Normalized forward transform of raw samples (no finiteness check).
    pub fn forward_values(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = 1.0 / data.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        data
    }

    /// Real part of the inverse transform of raw coefficients.
    pub fn inverse_values(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn forward(&self, f: &RealField) -> Result<SpectralField> {
        self.check_spec(&f.spec)?;
        f.check_finite()?;
        Ok(SpectralField {
            spec: self.spec,
            coeffs: self.forward_values(&f.values),
        })
    }

    pub fn inverse(&self, f: &SpectralField) -> Result<RealField> {
        self.check_spec(&f.spec)?;
        Ok(RealField {
            spec: self.spec,
            values: self.inverse_values(&f.coeffs),
        })
    }

    /// Applies `prod_l (i k_l)^{order_l}`; `order` lists transverse axes first, z last.
    pub fn differentiate(&self, f: &SpectralField, order: &[u32]) -> Result<SpectralField> {
        self.check_spec(&f.spec)?;
        let d = self.spec.d;
        if order.len() != d {
            return Err(Error::InvalidGrid(format!(
                "derivative multi-index has {} entries, expected {d}",
                order.len()
            )));
        }
        if order.iter().sum::<u32>() > 4 {
            return Err(Error::InvalidGrid("derivative order above 4".into()));
        }
        let total: u32 = order.iter().sum();
        let i_pow = match total % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let mut kv = [0.0; 5];
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                self.wavevector(idx, &mut kv[..d]);
                let mut s = 1.0;
                for l in 0..d {
                    s *= kv[l].powi(order[l] as i32);
                }
                c * i_pow * s
            })
            .collect();
        Ok(SpectralField {
            spec: self.spec,
            coeffs,
        })
    }

    /// Zeroes every mode outside the 2/3 band.
    pub fn project_band(&self, f: &mut [Complex64]) {
        for (c, &keep) in f.iter_mut().zip(&self.band) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Trapezoidal (spectrally exact) quadrature of grid samples.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.spec.cell()
    }

    /// `vol * sum w(xi) |c|^2`.
    pub fn weighted_sum<W: Fn(usize) -> f64>(&self, coeffs: &[Complex64], w: W) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| w(i) * c.norm_sqr())
            .sum::<f64>()
            * self.spec.volume()
    }

    /// Product of two fields, projected to the 2/3 band when dealiasing is on.
    pub fn product(&self, a: &RealField, b: &RealField) -> Result<RealField> {
        self.check_spec(&a.spec)?;
        self.check_spec(&b.spec)?;
        let values: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
        if !self.spec.dealias {
            return Ok(RealField {
                spec: self.spec,
                values,
            });
        }
        let mut c = self.forward_values(&values);
        self.project_band(&mut c);
        Ok(RealField {
            spec: self.spec,
            values: self.inverse_values(&c),
        })
    }

    pub fn norms(&self, f: &RealField) -> Result<Norms> {
        let c = self.forward(f)?;
        let mut n = self.norms_spectral(&c);
        n.sup = f.sup();
        Ok(n)
    }

    /// Spectral parts of [`Grid::norms`]; `sup` is left at zero.
    pub fn norms_spectral(&self, f: &SpectralField) -> Norms {
        let d = self.spec.d;
        let mut kv = [0.0; 5];
        let (mut l2, mut g, mut h, mut t, mut lap) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (idx, c) in f.coeffs.iter().enumerate() {
            let a = c.norm_sqr();
            if a == 0.0 {
                continue;
            }
            self.wavevector(idx, &mut kv[..d]);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut s3 = 0.0;
            for p in 0..d {
                let kp = kv[p] * kv[p];
                s1 += kp;
                for q in 0..d {
                    let kq = kv[q] * kv[q];
                    s2 += kp * kq;
                    for r in 0..d {
                        s3 += kp * kq * kv[r] * kv[r];
                    }
                }
            }
            l2 += a;
            g += s1 * a;
            h += s2 * a;
            t += s3 * a;
            lap += self.k2[idx] * self.k2[idx] * a;
        }
        let vol = self.spec.volume();
        Norms {
            l2: (vol * l2).sqrt(),
            grad_l2: (vol * g).sqrt(),
            hess_l2: (vol * h).sqrt(),
            third_l2: (vol * t).sqrt(),
            lap_l2: (vol * lap).sqrt(),
            sup: 0.0,
        }
    }

    /// Normalized 1D transform of a z-profile. Entry `j` is the coefficient of
    /// the mode stored at index `j * slab_len()` of a full spectral field.
    pub fn forward_profile(&self, profile: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = profile.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_axis(&mut data, self.plan_z.fwd.as_ref(), 1);
        let scale = 1.0 / data.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        data
    }

    /// Mean over the transverse torus at each z sample.
    pub fn transverse_mean(&self, values: &[f64]) -> Vec<f64> {
        values
            .chunks_exact(self.slab)
            .map(|s| s.iter().sum::<f64>() / self.slab as f64)
            .collect()
    }
}

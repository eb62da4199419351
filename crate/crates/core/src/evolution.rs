//! Time integration of the perturbation equation
//! `f_t = -lap^2 f + lap(G'(v + f) - G'(v))` about the fixed kink `v = v_0`.
//!
//! The scheme is first-order IMEX with linear stabilization `S`:
//! `(1 + dt |k|^4 + dt S |k|^2) f^{n+1} = (1 + dt S |k|^2) f^n - dt |k|^2 N^n`.

use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, Shape};
use crate::error::{Error, Result};
use crate::functionals::{nonlinearity_hat, Diagnostics, Evaluator};
use crate::grid::{Grid, RealField, SpectralField};
use crate::kink::KinkProfile;
use crate::sampling::{self, SmoothFieldOptions};

/// Abort threshold on `||f_c||_inf`.
pub const DELTA_RUN: f64 = 0.2;

/// Mass-correction profile `q ~ (1 + (z/w)^2)^(-beta)`.
pub const MASS_PROFILE_WIDTH: f64 = 10.0;
pub const MASS_PROFILE_DECAY: f64 = 1.2;

/// Cap on `||mu q||_inf` when the perturbation amplitude is zero.
pub const MASS_CORRECTION_CAP: f64 = 0.1;

/// Relative tolerance of the per-interval energy-dissipation balance.
pub const BALANCE_TOL: f64 = 1e-3;

/// Any `|f|` above this is treated as numerical blow-up.
const BLOWUP_SUP: f64 = 10.0;

/// Fraction of the per-interval balance tolerance that step control may spend.
const DEFECT_SHARE: f64 = 0.5;

/// Smallest permitted step relative to the configured `dt`.
const MIN_DT_SCALE: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    /// Perturbation about `v_0`, in Fourier space.
    pub f: SpectralField,
    /// Warm start for the next shift projection.
    pub last_c: f64,
}

/// Unit-mass heavy-tailed profile used to enforce the mass constraint.
pub fn mass_profile(grid: &Grid) -> Vec<f64> {
    let raw: Vec<f64> = grid
        .z()
        .iter()
        .map(|&z| (1.0 + (z / MASS_PROFILE_WIDTH).powi(2)).powf(-MASS_PROFILE_DECAY))
        .collect();
    let mass: f64 = raw.iter().sum::<f64>() * grid.dz();
    raw.into_iter().map(|q| q / mass).collect()
}

/// The perturbation shape `p` with unit sup norm (or zero).
pub fn perturbation_shape(grid: &Grid, shape: Shape, seed: u64) -> RealField {
    let tau = std::f64::consts::TAU;
    match shape {
        Shape::None => grid.zeros_real(),
        Shape::Transverse => grid.sample(|x, z| (tau * x[0]).cos() * (-0.5 * (z - 1.0).powi(2)).exp()),
        Shape::Odd => {
            let mut f = grid.sample(|x, z| (1.0 + (tau * x[0]).cos()) * z * (-0.5 * z * z).exp());
            let s = f.sup();
            f.values.iter_mut().for_each(|v| *v /= s);
            f
        }
        Shape::Random => {
            sampling::smooth_field(grid, &mut sampling::rng(seed), &SmoothFieldOptions::default())
        }
    }
}

/// Initial perturbation `f_0 = v_{c0} - v_0 + eps p + mu q` with zero mass.
pub fn build_initial(grid: &Grid, cfg: &RunConfig) -> Result<EvolutionState> {
    let init = &cfg.init;
    let k0 = KinkProfile::new(0.0);
    let kc = KinkProfile::new(init.c0);
    let p = perturbation_shape(grid, init.shape, init.seed);
    let q = mass_profile(grid);
    let slab = grid.slab_len();
    let mut values: Vec<f64> = p
        .values
        .iter()
        .enumerate()
        .map(|(i, pv)| {
            let z = grid.z()[i / slab];
            kc.value(z) - k0.value(z) + init.epsilon * pv
        })
        .collect();
    let mu = -grid.integrate(&values);
    let correction = mu.abs() * q.iter().fold(0.0_f64, |m, x| m.max(*x));
    let limit = if init.epsilon > 0.0 {
        init.epsilon
    } else {
        MASS_CORRECTION_CAP
    };
    if correction > limit {
        return Err(Error::Config(format!(
            "mass correction {correction:.3e} exceeds {limit:.3e}; reduce |c0| or enlarge l_z"
        )));
    }
    for (i, v) in values.iter_mut().enumerate() {
        *v += mu * q[i / slab];
    }
    let mut fh = grid.forward_values(&values);
    if grid.spec().dealias {
        grid.project_band(&mut fh);
    }
    fh[0] = Complex64::new(0.0, 0.0);
    Ok(EvolutionState {
        t: 0.0,
        f: SpectralField {
            spec: *grid.spec(),
            coeffs: fh,
        },
        last_c: init.c0,
    })
}

/// IMEX stepper about an arbitrary reference profile `v(z)`.
pub struct Stepper<'g> {
    grid: &'g Grid,
    v: Vec<f64>,
    stab: f64,
}

impl<'g> Stepper<'g> {
    /// `reference` holds `v` at the grid's z samples.
    pub fn new(grid: &'g Grid, reference: Vec<f64>, stab: f64) -> Self {
        assert_eq!(reference.len(), grid.spec().n_z);
        Stepper {
            grid,
            v: reference,
            stab,
        }
    }

    /// Stepper about `v_0`.
    pub fn kink(grid: &'g Grid, stab: f64) -> Self {
        Stepper::new(grid, KinkProfile::new(0.0).tables(grid.z()).v, stab)
    }

    pub fn nonlinearity_hat(&self, f: &[f64]) -> Vec<Complex64> {
        nonlinearity_hat(self.grid, &self.v, f)
    }

    /// One IMEX update from `f_hat` and its nonlinearity transform.
    pub fn advance(&self, fh: &[Complex64], nh: &[Complex64], dt: f64) -> Vec<Complex64> {
        let s = self.stab;
        let mut out: Vec<Complex64> = fh
            .iter()
            .zip(nh)
            .zip(self.grid.k2())
            .map(|((f, n), &k)| {
                let num = f * (1.0 + dt * s * k) - n * (dt * k);
                num / (1.0 + dt * k * (k + s))
            })
            .collect();
        if self.grid.spec().dealias {
            self.grid.project_band(&mut out);
        }
        out
    }

    /// Steps a spectral field by `dt`, returning the new coefficients.
    pub fn step(&self, fh: &[Complex64], dt: f64) -> Vec<Complex64> {
        let f = self.grid.inverse_values(fh);
        self.advance(fh, &self.nonlinearity_hat(&f), dt)
    }
}

/// One step of the perturbation equation about `v_0`.
pub fn step(grid: &Grid, state: &EvolutionState, dt: f64, stab: f64) -> Result<EvolutionState> {
    if state.f.spec != *grid.spec() {
        return Err(Error::GridMismatch);
    }
    let next = Stepper::kink(grid, stab).step(&state.f.coeffs, dt);
    if let Some(i) = next.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::Abort {
            t: state.t + dt,
            reason: format!("non-finite Fourier coefficient at mode {i}"),
            checkpoint: None,
        });
    }
    Ok(EvolutionState {
        t: state.t + dt,
        f: SpectralField {
            spec: state.f.spec,
            coeffs: next,
        },
        last_c: state.last_c,
    })
}

/// Record times: `0`, then `t0 * 10^(k / stride)` up to `t_end`, then `t_end`.
pub fn record_schedule(t0: f64, stride: usize, t_end: f64) -> Vec<f64> {
    let mut ts = vec![0.0];
    let mut k = 0;
    loop {
        let t = t0 * 10f64.powf(k as f64 / stride as f64);
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts.push(t_end);
    ts
}

/// Energy-dissipation balance over one recorded interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceInterval {
    pub t1: f64,
    pub t2: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    /// Trapezoidal `int D dt` over the steps of the interval.
    pub dissipation_integral: f64,
    /// Largest step used in the interval.
    pub dt: f64,
}

impl BalanceInterval {
    pub fn residual(&self) -> f64 {
        (self.energy_end - self.energy_start + self.dissipation_integral).abs()
    }

    pub fn bound(&self) -> f64 {
        BALANCE_TOL * (self.energy_start + self.dt)
    }

    pub fn holds(&self) -> bool {
        self.residual() <= self.bound()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Diagnostics>,
    pub balance: Vec<BalanceInterval>,
    pub config_hash: String,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Mass `int f` at every record, from the exact zero mode.
    pub mass_drift: f64,
    pub checkpoints: Vec<PathBuf>,
    /// Perturbation `u - v_0` at `t_end`.
    pub final_field: RealField,
}

/// Integrates a configuration to `t_end`.
pub fn run(cfg: &RunConfig, checkpoint_dir: Option<&Path>) -> Result<Trajectory> {
    run_observed(cfg, checkpoint_dir, &mut |_| Ok(()))
}

/// Like [`run`], calling `observe` on every record as soon as it is produced.
pub fn run_observed(
    cfg: &RunConfig,
    checkpoint_dir: Option<&Path>,
    observe: &mut dyn FnMut(&Diagnostics) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid)?;
    let state = build_initial(&grid, cfg)?;
    let ev = Evaluator::new(&grid, KinkProfile::new(0.0));
    let stepper = Stepper::kink(&grid, cfg.time.stabilization);
    let schedule = record_schedule(cfg.output.record_t0, cfg.output.record_stride, cfg.time.t_end);

    let mut fh = state.f.coeffs;
    let mut f = grid.inverse_values(&fh);
    let mut nh = stepper.nonlinearity_hat(&f);
    let mut e = ev.energy_gap(&fh, &f);
    let mut dis = ev.dissipation(&fh, &nh);
    let mass0 = fh[0].re * grid.spec().volume();

    let mut traj = Trajectory {
        records: Vec::with_capacity(schedule.len()),
        balance: Vec::with_capacity(schedule.len()),
        config_hash: cfg.content_hash(),
        steps: 0,
        rejected_steps: 0,
        mass_drift: 0.0,
        checkpoints: Vec::new(),
        final_field: grid.zeros_real(),
    };
    let dump = |tag: &str, f: &[f64], t: f64| -> Option<PathBuf> {
        let dir = checkpoint_dir?;
        let path = dir.join(format!("{tag}.kflw"));
        let field = RealField {
            spec: *grid.spec(),
            values: f.to_vec(),
        };
        Checkpoint::new(&field, t).write(&path).ok()?;
        Some(path)
    };

    let first = ev.diagnostics(0.0, &fh, &f, Some(&nh), state.last_c)?;
    let mut last_c = first.shift;
    observe(&first)?;
    traj.records.push(first);

    let time = &cfg.time;
    let mut t = 0.0;
    let mut dt_ctrl = time.dt;
    let dt_floor = time.dt * MIN_DT_SCALE;
    let mut last_checkpoint: Option<PathBuf> = None;
    for (k, &target) in schedule.iter().enumerate().skip(1) {
        let t1 = t;
        let e1 = e;
        let span = target - t1;
        let mut integral = 0.0;
        let mut dt_used: f64 = 0.0;
        while t < target {
            let mut dt = (time.dt_ramp * t).clamp(time.dt_min, time.dt).min(dt_ctrl);
            let last = t + dt >= target * (1.0 - 1e-12);
            if last {
                dt = target - t;
            }
            let fh_new = stepper.advance(&fh, &nh, dt);
            let f_new = grid.inverse_values(&fh_new);
            let sup = f_new.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if !sup.is_finite() || sup > BLOWUP_SUP {
                return Err(Error::Abort {
                    t: t + dt,
                    reason: format!("perturbation sup norm {sup:e}"),
                    checkpoint: dump("abort", &f, t).or(last_checkpoint),
                });
            }
            let nh_new = stepper.nonlinearity_hat(&f_new);
            let e_new = ev.energy_gap(&fh_new, &f_new);
            let dis_new = ev.dissipation(&fh_new, &nh_new);
            let defect = (e_new - e + 0.5 * dt * (dis + dis_new)).abs();
            let allowed = DEFECT_SHARE * BALANCE_TOL * (e_new.max(0.0) + dt) * dt / span;
            let increased = e_new > e + 1e-13 + 1e-10 * e.abs();
            if increased || defect > allowed {
                traj.rejected_steps += 1;
                dt_ctrl = if increased {
                    0.5 * dt
                } else {
                    dt * (0.8 * allowed / defect).max(0.2)
                };
                if dt_ctrl < dt_floor {
                    return Err(Error::Abort {
                        t,
                        reason: "step size underflow while enforcing energy decay".into(),
                        checkpoint: dump("abort", &f, t).or(last_checkpoint),
                    });
                }
                continue;
            }
            if !last {
                let grow = if defect > 0.0 { 0.8 * allowed / defect } else { 2.0 };
                dt_ctrl = dt * grow.clamp(1.0, 2.0);
            }
            integral += 0.5 * dt * (dis + dis_new);
            dt_used = dt_used.max(dt);
            t = if last { target } else { t + dt };
            fh = fh_new;
            f = f_new;
            nh = nh_new;
            e = e_new;
            dis = dis_new;
            traj.steps += 1;
        }
        traj.balance.push(BalanceInterval {
            t1,
            t2: t,
            energy_start: e1,
            energy_end: e,
            dissipation_integral: integral,
            dt: dt_used,
        });
        let rec = ev.diagnostics(t, &fh, &f, Some(&nh), last_c)?;
        last_c = rec.shift;
        traj.mass_drift = traj.mass_drift.max((rec.mass - mass0).abs());
        if rec.f_sup > DELTA_RUN {
            return Err(Error::Abort {
                t,
                reason: format!("||f_c||_inf = {:.3e} exceeds {DELTA_RUN}", rec.f_sup),
                checkpoint: dump("abort", &f, t).or(last_checkpoint),
            });
        }
        observe(&rec)?;
        traj.records.push(rec);
        let stride = cfg.output.checkpoint_stride;
        if stride > 0 && k % stride == 0 {
            if let Some(p) = dump(&format!("checkpoint-{k:05}"), &f, t) {
                traj.checkpoints.push(p.clone());
                last_checkpoint = Some(p);
            }
        }
    }
    traj.final_field = RealField {
        spec: *grid.spec(),
        values: f,
    };
    Ok(traj)
}

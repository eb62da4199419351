//! Power-law fits of trajectories, inequality monitors, and the saturated
//! ODE system for `(E, H, D, c^2)`.

use std::collections::BTreeMap;

use ode_solvers::continuous_output_model::ContinuousOutputModel;
use ode_solvers::{Dopri5, System, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{g0, Diagnostics, RATIO_FLOOR};
use crate::thresholds;

/// Least-squares fit of `log y = log a + s log t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub prefactor: f64,
    /// Largest absolute deviation in `log y` from the fitted line.
    pub residual: f64,
    pub points: usize,
}

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_POINTS: usize = 10;

/// Fits a power law to the samples with `t` in `[t1, t2]`.
pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64)) -> Result<PowerFit> {
    let (t1, t2) = window;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t1 && t <= t2)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} samples in [{t1}, {t2}], need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if let Some(&(t, y)) = pts.iter().find(|&&(t, y)| !(y > 0.0) || !(t > 0.0)) {
        return Err(Error::Fit(format!("non-positive sample y({t}) = {y}")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all samples share one time".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(PowerFit {
        slope,
        prefactor: intercept.exp(),
        residual,
        points: pts.len(),
    })
}

/// Largest monitored ratio and the number of records whose denominator was
/// below the guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorStat {
    pub max_ratio: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

impl MonitorStat {
    fn new() -> Self {
        MonitorStat {
            max_ratio: 0.0,
            evaluated: 0,
            skipped: 0,
        }
    }

    fn push(&mut self, num: f64, den: f64) {
        if den < RATIO_FLOOR {
            self.skipped += 1;
        } else {
            self.evaluated += 1;
            self.max_ratio = self.max_ratio.max(num / den);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `c^2 <~ sqrt(H E) + (|c| + 1) E`.
    pub shift: MonitorStat,
    /// `E <~ sqrt(H D) + (|c| + 1)^2 D`.
    pub energy: MonitorStat,
    /// `||f_c||_inf <~ E^{1/2 - d'/12} D^{d'/12}`.
    pub sup_norm: MonitorStat,
}

/// Maximum over a trajectory of each monitored ratio, recomputed from raw fields.
pub fn monitor_inequalities(records: &[Diagnostics], d_prime: usize) -> InequalityReport {
    let mut shift = MonitorStat::new();
    let mut energy = MonitorStat::new();
    let mut sup_norm = MonitorStat::new();
    let q = d_prime as f64 / 12.0;
    for r in records {
        let e = r.energy_gap.max(0.0);
        let d = r.dissipation.max(0.0);
        let h = r.hminus1_sq.max(0.0);
        let c = r.shift;
        shift.push(c * c, (h * e).sqrt() + (c.abs() + 1.0) * e);
        energy.push(e, (h * d).sqrt() + (c.abs() + 1.0).powi(2) * d);
        sup_norm.push(r.f_sup, e.powf(0.5 - q) * d.powf(q));
    }
    InequalityReport {
        shift,
        energy,
        sup_norm,
    }
}

/// Monitored quantities of a trajectory, in the order of the rate table.
pub const RATE_QUANTITIES: [&str; 6] = [
    "fc_h1",
    "f0_h1",
    "energy_gap",
    "shift_sq",
    "dissipation",
    "hminus1_sq",
];

/// Time series of a named quantity; `shift_sq` drops points below the floor.
pub fn series(records: &[Diagnostics], name: &str) -> Result<Vec<(f64, f64)>> {
    let get: fn(&Diagnostics) -> f64 = match name {
        "fc_h1" => |r| r.fc_h1(),
        "f0_h1" => |r| r.f0_h1(),
        "energy_gap" => |r| r.energy_gap,
        "shift_sq" => |r| r.shift * r.shift,
        "dissipation" => |r| r.dissipation,
        "hminus1_sq" => |r| r.hminus1_sq,
        _ => return Err(Error::Fit(format!("unknown quantity '{name}'"))),
    };
    Ok(records
        .iter()
        .map(|r| (r.t, get(r)))
        .filter(|&(_, y)| name != "shift_sq" || y >= thresholds::SHIFT_SQ_FLOOR)
        .collect())
}

/// One fitted slope compared with its expected value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    /// `None` when the quantity could not be fitted.
    pub slope: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub window: (f64, f64),
    pub config_hash: Option<String>,
    pub fits: BTreeMap<String, PowerFit>,
    /// Quantities whose fit failed, with the reason.
    pub fit_errors: BTreeMap<String, String>,
    /// Slope checks for the quantities that have an expected rate.
    pub checks: BTreeMap<String, SlopeCheck>,
    pub e0: f64,
    pub h0: f64,
    /// `H0 + E0 + E0^7`.
    pub g0: f64,
    pub max_h_over_g0: f64,
    pub energy_exceeds_initial: bool,
    pub mass_drift: f64,
    pub inequalities: InequalityReport,
}

impl RateReport {
    pub fn slopes_pass(&self) -> bool {
        self.checks.values().all(|c| c.pass)
    }
}

/// Fits every monitored quantity on `window` and compares with the expected rates.
pub fn rate_report(
    records: &[Diagnostics],
    window: (f64, f64),
    d_prime: usize,
    config_hash: Option<String>,
) -> Result<RateReport> {
    if records.is_empty() {
        return Err(Error::Fit("empty trajectory".into()));
    }
    if !(window.0 > 0.0 && window.1 >= 10.0 * window.0) {
        return Err(Error::Fit(format!(
            "window [{}, {}] spans less than one decade",
            window.0, window.1
        )));
    }
    let mut fits = BTreeMap::new();
    let mut fit_errors = BTreeMap::new();
    let mut checks = BTreeMap::new();
    for name in RATE_QUANTITIES {
        let slope = match fit_power_law(&series(records, name)?, window) {
            Ok(fit) => {
                fits.insert(name.to_string(), fit);
                Some(fit.slope)
            }
            Err(e) => {
                fit_errors.insert(name.to_string(), e.to_string());
                None
            }
        };
        if let Some(&(_, expected, tolerance)) =
            thresholds::RATE_TARGETS.iter().find(|(n, _, _)| *n == name)
        {
            checks.insert(
                name.to_string(),
                SlopeCheck {
                    slope,
                    expected,
                    tolerance,
                    pass: slope.map_or(false, |s| (s - expected).abs() <= tolerance),
                },
            );
        }
    }
    let first = &records[0];
    let (e0, h0) = (first.energy_gap, first.hminus1_sq);
    let g = g0(h0, e0);
    let max_h = records.iter().map(|r| r.hminus1_sq).fold(0.0, f64::max);
    let mass_drift = records
        .iter()
        .map(|r| (r.mass - first.mass).abs())
        .fold(0.0, f64::max);
    Ok(RateReport {
        window,
        config_hash,
        fits,
        fit_errors,
        checks,
        e0,
        h0,
        g0: g,
        max_h_over_g0: if g > 0.0 { max_h / g } else { 0.0 },
        energy_exceeds_initial: records.iter().any(|r| r.energy_gap > e0),
        mass_drift,
        inequalities: monitor_inequalities(records, d_prime),
    })
}

/// Which differential inequality is saturated besides `dE/dt = -D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// `D` from the saturated algebraic relation; `H` grows at its maximal rate.
    #[serde(rename = "max-H")]
    MaxH,
    /// `D` also grows at its maximal rate, starting from the algebraic root.
    #[serde(rename = "max-D")]
    MaxD,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::MaxH => "max-H",
            Variant::MaxD => "max-D",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "max-H" | "max-h" | "maxh" => Ok(Variant::MaxH),
            "max-D" | "max-d" | "maxd" => Ok(Variant::MaxD),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub t: f64,
    pub e: f64,
    pub h: f64,
    pub d: f64,
    pub c_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeParams {
    pub e0: f64,
    pub h0: f64,
    pub c_star: f64,
    pub d_prime: usize,
    pub variant: Variant,
    pub t_end: f64,
    pub rtol: f64,
}

/// Default relative tolerance of the ODE integrator.
pub const ODE_RTOL: f64 = 1e-8;

/// Output grid: first positive time and points per decade.
pub const ODE_T_MIN: f64 = 1e-6;
pub const ODE_POINTS_PER_DECADE: usize = 40;

impl OdeParams {
    pub fn new(e0: f64, h0: f64, c_star: f64, d_prime: usize, variant: Variant) -> Self {
        OdeParams {
            e0,
            h0,
            c_star,
            d_prime,
            variant,
            t_end: 1e6,
            rtol: ODE_RTOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > 0.0 && self.h0 > 0.0 && self.e0.is_finite() && self.h0.is_finite()) {
            return Err(Error::Config(format!(
                "E0 = {} and H0 = {} must be positive",
                self.e0, self.h0
            )));
        }
        if !(self.c_star >= 1.0 && self.c_star.is_finite()) {
            return Err(Error::Config(format!("c_star = {} must be >= 1", self.c_star)));
        }
        if !(3..=5).contains(&self.d_prime) {
            return Err(Error::Config(format!("d' = {} must be 3, 4 or 5", self.d_prime)));
        }
        if !(self.t_end > ODE_T_MIN && self.rtol > 0.0 && self.rtol < 1e-2) {
            return Err(Error::Config("t_end or rtol out of range".into()));
        }
        Ok(())
    }

    /// `G0 = H0 + c_star^2 (1 + E0^2) E0`.
    pub fn g0(&self) -> f64 {
        self.h0 + self.c_star.powi(2) * (1.0 + self.e0.powi(2)) * self.e0
    }
}

/// Positive root `D` of `c_star^2 D + sqrt(H D) = E`.
pub fn algebraic_dissipation(e: f64, h: f64, c_star: f64) -> Result<f64> {
    let disc = h + 4.0 * c_star * c_star * e;
    if disc < 0.0 || !disc.is_finite() {
        return Err(Error::Internal(format!(
            "negative discriminant for E = {e}, H = {h}"
        )));
    }
    if e <= 0.0 {
        return Ok(0.0);
    }
    let s = 2.0 * e / (h.sqrt() + disc.sqrt());
    Ok(s * s)
}

/// Saturated `c^2 = sqrt(H E) + c_star E`.
pub fn shift_sq(e: f64, h: f64, c_star: f64) -> f64 {
    let e = e.max(0.0);
    (h.max(0.0) * e).sqrt() + c_star * e
}

struct Saturated {
    c_star: f64,
    d_prime: f64,
    variant: Variant,
}

impl Saturated {
    fn dissipation(&self, y: &Vector3<f64>) -> f64 {
        match self.variant {
            Variant::MaxH => {
                let (e, h) = (y[0].max(0.0), y[1].max(0.0));
                let s = 2.0 * e / (h.sqrt() + (h + 4.0 * self.c_star * self.c_star * e).sqrt());
                if s.is_finite() {
                    s * s
                } else {
                    0.0
                }
            }
            Variant::MaxD => y[2].max(0.0),
        }
    }
}

impl System<f64, Vector3<f64>> for Saturated {
    fn system(&self, _t: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        let e = y[0].max(0.0);
        let h = y[1].max(0.0);
        let d = self.dissipation(y);
        let c2 = shift_sq(e, h, self.c_star);
        let q = self.d_prime / 12.0;
        dy[0] = -d;
        dy[1] = self.c_star.sqrt() * ((c2 * d).sqrt() + e.powf(1.5 - q) * d.powf(q));
        dy[2] = match self.variant {
            Variant::MaxH => 0.0,
            Variant::MaxD => d.powf(1.5) + e.powf(1.0 - 2.0 * q) * d.powf(1.0 + 2.0 * q),
        };
    }

    fn solout(&mut self, _t: f64, y: &Vector3<f64>, _dy: &Vector3<f64>) -> bool {
        y[0] <= 0.0
    }
}

/// Output times `0, t_min, ...` log-spaced up to `t_end`.
pub fn ode_output_grid(t_end: f64) -> Vec<f64> {
    let mut ts = vec![0.0];
    let mut k = 0;
    loop {
        let t = ODE_T_MIN * 10f64.powf(k as f64 / ODE_POINTS_PER_DECADE as f64);
        if t > t_end * (1.0 + 1e-12) {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub params: OdeParams,
    pub states: Vec<OdeState>,
    /// Time at which `E` reached zero (max-D variant only).
    pub t_star: Option<f64>,
}

/// Integrates the saturated system with default tolerance up to `t_end`.
pub fn ode_integrate(
    e0: f64,
    h0: f64,
    c_star: f64,
    d_prime: usize,
    variant: Variant,
    t_end: f64,
) -> Result<Vec<OdeState>> {
    let p = OdeParams {
        t_end,
        ..OdeParams::new(e0, h0, c_star, d_prime, variant)
    };
    Ok(ode_solve(&p)?.states)
}

/// Integrates the saturated system and samples it on [`ode_output_grid`].
pub fn ode_solve(p: &OdeParams) -> Result<OdeTrajectory> {
    p.validate()?;
    let sys = Saturated {
        c_star: p.c_star,
        d_prime: p.d_prime as f64,
        variant: p.variant,
    };
    let d0 = algebraic_dissipation(p.e0, p.h0, p.c_star)?;
    let y0 = Vector3::new(p.e0, p.h0, d0);
    let state = |t: f64, y: &Vector3<f64>, sys: &Saturated| {
        let e = y[0].max(0.0);
        let h = y[1];
        OdeState {
            t,
            e,
            h,
            d: sys.dissipation(y),
            c_sq: shift_sq(e, h, p.c_star),
        }
    };
    let probe = Saturated { ..sys };
    let mut solver = Dopri5::from_param(
        sys,
        0.0,
        p.t_end,
        0.0,
        y0,
        p.rtol,
        p.rtol * 1e-12,
        0.9,
        0.04,
        0.2,
        10.0,
        p.t_end,
        0.0,
        u32::MAX,
        u32::MAX,
        ode_solvers::OutputType::Continuous,
    );
    let mut model = ContinuousOutputModel::default();
    let outcome = solver.integrate_with_continuous_output_model(&mut model);
    let (_, reached) = model.bounds();
    let end_state = model.evaluate(reached);
    let crossed = end_state.map_or(false, |y| y[0] <= 0.0);
    if let Err(e) = outcome {
        if !crossed {
            return Err(Error::Internal(format!("ODE integration failed: {e}")));
        }
    }
    if !crossed && reached < p.t_end * (1.0 - 1e-12) {
        return Err(Error::Internal(format!("ODE integration stopped at t = {reached}")));
    }
    let t_star = if crossed {
        let (mut lo, mut hi) = (0.0, reached);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match model.evaluate(mid) {
                Some(y) if y[0] > 0.0 => lo = mid,
                _ => hi = mid,
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Some(lo)
    } else {
        None
    };
    let mut states = Vec::new();
    for t in ode_output_grid(p.t_end) {
        let s = match t_star {
            Some(ts) if t >= ts => {
                let y = model.evaluate(ts).unwrap_or(y0);
                OdeState {
                    t,
                    e: 0.0,
                    h: y[1],
                    d: 0.0,
                    c_sq: 0.0,
                }
            }
            _ => {
                let y = if t == 0.0 {
                    y0
                } else {
                    model
                        .evaluate(t)
                        .ok_or_else(|| Error::Internal(format!("no dense output at t = {t}")))?
                };
                state(t, &y, &probe)
            }
        };
        states.push(s);
    }
    Ok(OdeTrajectory {
        params: *p,
        states,
        t_star,
    })
}

/// The six conclusion ratios (constant-1 right-hand sides), maximized over t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeRatios {
    /// `E / E0`.
    pub energy_bound: f64,
    /// `E t / G0`.
    pub energy_decay: f64,
    /// `c^2 / (G0^{1/2} E0^{1/2})`.
    pub shift_bound: f64,
    /// `c^2 t^{1/2} / G0`.
    pub shift_decay: f64,
    /// `H / G0`.
    pub distance_bound: f64,
    /// `D t^2 / (G0 + G0^2 + E0 G0^{6/(6-d')} t^{-(2d'-6)/(6-d')})`.
    pub dissipation_decay: f64,
}

impl OdeRatios {
    pub fn as_array(&self) -> [(&'static str, f64); 6] {
        [
            ("energy_bound", self.energy_bound),
            ("energy_decay", self.energy_decay),
            ("shift_bound", self.shift_bound),
            ("shift_decay", self.shift_decay),
            ("distance_bound", self.distance_bound),
            ("dissipation_decay", self.dissipation_decay),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeBoundReport {
    pub params: OdeParams,
    pub g0: f64,
    pub t_star: Option<f64>,
    pub ratios: OdeRatios,
    /// Names of ratios above their frozen thresholds.
    pub exceeded: Vec<String>,
}

impl OdeBoundReport {
    pub fn pass(&self) -> bool {
        self.exceeded.is_empty()
    }
}

/// Maximum over the sampled states of each conclusion ratio.
pub fn ode_ratios(states: &[OdeState], p: &OdeParams) -> OdeRatios {
    let g = p.g0();
    let dp = p.d_prime as f64;
    let mut r = OdeRatios {
        energy_bound: 0.0,
        energy_decay: 0.0,
        shift_bound: 0.0,
        shift_decay: 0.0,
        distance_bound: 0.0,
        dissipation_decay: 0.0,
    };
    for s in states {
        r.energy_bound = r.energy_bound.max(s.e / p.e0);
        r.shift_bound = r.shift_bound.max(s.c_sq / (g * p.e0).sqrt());
        r.distance_bound = r.distance_bound.max(s.h / g);
        if s.t > 0.0 {
            r.energy_decay = r.energy_decay.max(s.e * s.t / g);
            r.shift_decay = r.shift_decay.max(s.c_sq * s.t.sqrt() / g);
            let rhs = g + g * g
                + p.e0 * g.powf(6.0 / (6.0 - dp)) * s.t.powf(-(2.0 * dp - 6.0) / (6.0 - dp));
            r.dissipation_decay = r.dissipation_decay.max(s.d * s.t * s.t / rhs);
        }
    }
    r
}

/// Compares the conclusion ratios of one trajectory with the frozen thresholds.
pub fn check_ode_bounds(traj: &OdeTrajectory) -> OdeBoundReport {
    let ratios = ode_ratios(&traj.states, &traj.params);
    let exceeded = ratios
        .as_array()
        .iter()
        .zip(thresholds::ODE_RATIO_LIMITS.iter())
        .filter(|((_, v), (_, lim))| !(v <= lim))
        .map(|((n, _), _)| n.to_string())
        .collect();
    OdeBoundReport {
        params: traj.params,
        g0: traj.params.g0(),
        t_star: traj.t_star,
        ratios,
        exceeded,
    }
}

/// The acceptance sweep: `E0, H0 in {0.1, 1, 10}`, `c_star in {1, 10, 100}`,
/// `d' in {3, 4, 5}`, both variants.
pub fn standard_sweep() -> Vec<OdeParams> {
    let vals = [0.1, 1.0, 10.0];
    let cs = [1.0, 10.0, 100.0];
    let mut out = Vec::new();
    for variant in [Variant::MaxH, Variant::MaxD] {
        for d_prime in 3..=5 {
            for &e0 in &vals {
                for &h0 in &vals {
                    for &c in &cs {
                        out.push(OdeParams::new(e0, h0, c, d_prime, variant));
                    }
                }
            }
        }
    }
    out
}

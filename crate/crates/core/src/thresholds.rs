//! Constants frozen from calibration runs. Each is the measured worst case
//! times a headroom factor of about two.

/// `c^2` samples below this are dropped from power-law fits.
pub const SHIFT_SQ_FLOOR: f64 = 1e-14;

/// `(quantity, expected slope, tolerance)` on the default fit window.
pub const RATE_TARGETS: [(&str, f64, f64); 5] = [
    ("fc_h1", -0.5, 0.10),
    ("f0_h1", -0.25, 0.10),
    ("energy_gap", -1.0, 0.2),
    ("shift_sq", -0.5, 0.15),
    ("dissipation", -2.0, 0.3),
];

/// Default fit window for the reference run.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (10.0, 500.0);

/// `H(t) <= C G0` along the reference run (measured 0.972).
pub const H_OVER_G0: f64 = 2.0;

/// `c^2 / (sqrt(H E) + (|c| + 1) E)` (measured 0.836).
pub const ALG_SHIFT: f64 = 1.7;

/// `E / (sqrt(H D) + (|c| + 1)^2 D)` (measured 0.417).
pub const ALG_ENERGY: f64 = 0.85;

/// `||f_c||_inf / (E^{1/2 - d'/12} D^{d'/12})` (measured 0.450).
pub const GAGLIARDO_NIRENBERG: f64 = 0.9;

/// `E_l(f) >= LAMBDA ||f||^2` for `f` orthogonal to `v_cz` (measured 1.683).
pub const COERCIVITY: f64 = 0.8;

/// `D_l(f) >= MU ||grad f||^2` for `f` orthogonal to `v_cz` (measured 4.170).
pub const DISSIPATION_COERCIVITY: f64 = 2.0;

/// Hardy-type ratio bound (measured 0.775).
pub const HARDY: f64 = 1.6;

/// Two-sided band `[1/K, K]` for `E / ||f_c||_{H1}^2` and
/// `D / sum_{j=1..3} ||grad^j f_c||^2` (measured 0.385 to 3.248).
pub const EQUIVALENCE: f64 = 6.0;

/// Shift comparison monitor bound.
pub const SHIFT_MONITOR: f64 = 10.0;

/// Limits on the six ODE conclusion ratios, in [`crate::rates::OdeRatios`] order.
/// Measured sweep maxima: 1, 12.59, 1.411, 12.86, 13.12, 9.221.
pub const ODE_RATIO_LIMITS: [(&str, f64); 6] = [
    ("energy_bound", 1.0),
    ("energy_decay", 25.0),
    ("shift_bound", 3.0),
    ("shift_decay", 26.0),
    ("distance_bound", 27.0),
    ("dissipation_decay", 19.0),
];

/// Picard iterations allowed for the local Duhamel solve.
pub const PICARD_MAX_ITER: usize = 50;

/// Picard iterations expected for `||f0||_inf = 1e-3`, `T0 = 0.1` (measured: 9).
pub const PICARD_ITER_BOUND: usize = 20;

use proptest::prelude::*;
use rand::Rng;
use rustfft::num_complex::Complex64;

use kinkflow::checkpoint::Checkpoint;
use kinkflow::config::RunConfig;
use kinkflow::evolution::Stepper;
use kinkflow::functionals::{hminus1_sq, linearized_gap};
use kinkflow::grid::{frequency, Grid, GridSpec, RealField};
use kinkflow::kink::{project_shift, KinkProfile};
use kinkflow::rates::fit_power_law;
use kinkflow::sampling::{rng, smooth_field, SmoothFieldOptions};

fn grid(d: usize, nt: usize, nz: usize) -> Grid {
    Grid::new(GridSpec {
        d,
        n_transverse: nt,
        l_z: 20.0,
        n_z: nz,
        dealias: true,
    })
    .unwrap()
}

fn noise(g: &Grid, seed: u64) -> RealField {
    let mut r = rng(seed);
    RealField {
        spec: *g.spec(),
        values: (0..g.len()).map(|_| r.gen_range(-1.0..1.0)).collect(),
    }
}

fn band_limited(g: &Grid, seed: u64) -> RealField {
    let mut c = g.forward_values(&noise(g, seed).values);
    g.project_band(&mut c);
    RealField {
        spec: *g.spec(),
        values: g.inverse_values(&c),
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Coefficients of `coarse` placed on a grid twice as fine in every axis.
fn refine(coarse: &Grid, fine: &Grid, c: &[Complex64]) -> Vec<Complex64> {
    let d = coarse.spec().d;
    let (nt, nz) = (coarse.spec().n_transverse, coarse.spec().n_z);
    let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
    let mut m = vec![0; d];
    for (idx, v) in c.iter().enumerate() {
        coarse.multi_index(idx, &mut m);
        let mut fm = m.clone();
        for l in 0..d {
            let n = if l + 1 == d { nz } else { nt };
            fm[l] = frequency(m[l], n).rem_euclid(2 * n as i64) as usize;
        }
        out[fine.index(&fm)] = *v;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip(seed in any::<u64>(), d in 2usize..=4) {
        let g = grid(d, 8, 64);
        let f = noise(&g, seed);
        let back = g.inverse(&g.forward(&f).unwrap()).unwrap();
        prop_assert!(sup_diff(&back.values, &f.values) <= 1e-12);
    }

    #[test]
    fn parseval(seed in any::<u64>(), d in 2usize..=4) {
        let g = grid(d, 8, 64);
        let f = noise(&g, seed);
        let lhs = g.integrate(&f.values.iter().map(|v| v * v).collect::<Vec<_>>());
        let rhs = g.weighted_sum(&g.forward(&f).unwrap().coeffs, |_| 1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn interpolation_and_hessian_identity(seed in any::<u64>(), d in 2usize..=4) {
        let g = grid(d, 8, 64);
        let n = g.norms(&noise(&g, seed)).unwrap();
        prop_assert!(n.grad_l2.powi(2) <= n.l2 * n.lap_l2 * (1.0 + 1e-12));
        prop_assert!((n.lap_l2 - n.hess_l2).abs() <= 1e-12 * n.lap_l2);
    }

    #[test]
    fn dealiased_product_matches_padded(seed in any::<u64>()) {
        let g = grid(2, 8, 64);
        let fine = grid(2, 16, 128);
        let a = band_limited(&g, seed);
        let b = band_limited(&g, seed.wrapping_add(1));
        let got = g.forward_values(&g.product(&a, &b).unwrap().values);
        let fa = fine.inverse_values(&refine(&g, &fine, &g.forward_values(&a.values)));
        let fb = fine.inverse_values(&refine(&g, &fine, &g.forward_values(&b.values)));
        let prod: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
        let mut exact = vec![Complex64::new(0.0, 0.0); g.len()];
        let pc = fine.forward_values(&prod);
        let mut m = vec![0; 2];
        for (idx, e) in exact.iter_mut().enumerate() {
            if g.band()[idx] {
                g.multi_index(idx, &mut m);
                let fm = [
                    frequency(m[0], 8).rem_euclid(16) as usize,
                    frequency(m[1], 64).rem_euclid(128) as usize,
                ];
                *e = pc[fine.index(&fm)];
            }
        }
        let err = got.iter().zip(&exact).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        prop_assert!(err <= 1e-13, "{}", err);
    }

    #[test]
    fn shift_is_translation_equivariant(c in -2.0f64..2.0, s in -3.0f64..3.0, amp in 0.0f64..0.05) {
        let g = grid(2, 8, 256);
        let build = |shift: f64| g.sample(|x, z| {
            let y = z - shift;
            KinkProfile::new(c + shift).value(z)
                + amp * (1.0 + (std::f64::consts::TAU * x[0]).cos()) * y * (-(y - 0.3) * (y - 0.3)).exp()
        });
        let c0 = project_shift(&g, &build(0.0), c).unwrap();
        let c1 = project_shift(&g, &build(s), c + s).unwrap();
        prop_assert!((c1 - c0 - s).abs() <= 1e-8, "{} {} {}", c0, c1, s);
    }

    #[test]
    fn linearized_gap_is_nonnegative(seed in any::<u64>(), c in -1.0f64..1.0) {
        let g = grid(2, 16, 512);
        let f = smooth_field(&g, &mut rng(seed), &SmoothFieldOptions::default());
        prop_assert!(linearized_gap(&g, &f, c).unwrap() >= 0.0);
    }

    #[test]
    fn hminus1_matches_poisson_solve(seed in any::<u64>(), d in 2usize..=3) {
        let g = grid(d, 8, 128);
        let mut f = smooth_field(&g, &mut rng(seed), &SmoothFieldOptions::default());
        let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
        f.values.iter_mut().for_each(|v| *v -= mean);
        // -lap phi = f, then H = int |grad phi|^2.
        let fh = g.forward(&f).unwrap();
        let phi_hat: Vec<Complex64> = fh.coeffs.iter().zip(g.k2())
            .map(|(c, &k)| if k > 0.0 { c / k } else { Complex64::new(0.0, 0.0) })
            .collect();
        let phi = RealField { spec: *g.spec(), values: g.inverse_values(&phi_hat) };
        let oracle = g.norms(&phi).unwrap().grad_l2.powi(2);
        let h = hminus1_sq(&g, &f).unwrap();
        prop_assert!((h - oracle).abs() <= 1e-10 * oracle, "{} {}", h, oracle);
    }

    #[test]
    fn power_fit_recovers_slope(slope in -3.0f64..1.0, a in 1e-3f64..1e3) {
        let series: Vec<(f64, f64)> = (0..40)
            .map(|k| 10f64.powf(k as f64 / 10.0))
            .map(|t| (t, a * t.powf(slope)))
            .collect();
        let fit = fit_power_law(&series, (1.0, 1e4)).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-6);
        prop_assert!((fit.prefactor / a - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn exact_kink_projects_to_its_center(c in -5.0f64..5.0) {
        let g = grid(2, 8, 512);
        let u = KinkProfile::new(c).field(&g);
        prop_assert!((project_shift(&g, &u, 0.0).unwrap() - c).abs() <= 1e-9);
    }

    #[test]
    fn stepping_preserves_mass(seed in any::<u64>(), dt in 1e-4f64..1e-2) {
        let g = grid(2, 8, 128);
        let mut f = smooth_field(&g, &mut rng(seed), &SmoothFieldOptions { sup: 0.05, ..Default::default() });
        let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
        f.values.iter_mut().for_each(|v| *v -= mean - 1e-3);
        let st = Stepper::kink(&g, 2.0);
        let mut fh = g.forward_values(&f.values);
        g.project_band(&mut fh);
        let m0 = fh[0];
        for _ in 0..10 {
            fh = st.step(&fh, dt);
        }
        prop_assert!((fh[0] - m0).norm() <= 1e-12 * m0.norm().max(1e-3));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), t in 0.0f64..1e3) {
        let g = grid(3, 8, 64);
        let f = noise(&g, seed);
        let back = Checkpoint::from_bytes(&Checkpoint::new(&f, t).to_bytes()).unwrap();
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
        prop_assert_eq!(back.field(true).unwrap().values, f.values);
    }

    #[test]
    fn config_toml_round_trip(eps in 0.0f64..0.1, c0 in -5.0f64..5.0, seed in 0..=i64::MAX as u64) {
        let text = format!("[init]\nepsilon = {eps:?}\nc0 = {c0:?}\nseed = {seed}\n");
        let cfg = RunConfig::from_toml(&text, &[]).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        prop_assert_eq!(cfg.content_hash(), again.content_hash());
        prop_assert_eq!(cfg, again);
    }
}

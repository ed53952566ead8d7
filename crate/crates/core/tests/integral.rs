use pathwise_ito::integral::{
    convergence_report, evaluation_grid, ito_approximant, ito_residual, qv_approximant, qv_at_partition_times,
    stieltjes_against_qv, BuiltinF, Ladder, LevelFunction, Tolerances,
};
use pathwise_ito::partition::{partition_cadlag, partition_continuous, threshold, Rule};
use pathwise_ito::paths::{
    derive_seed, generate, Constant, GeneratorKind, PathGeneratorConfig, Regime, SampledPath,
};
use proptest::prelude::*;

fn brownian(seed: u64, step: f64) -> SampledPath {
    generate(&PathGeneratorConfig::new(GeneratorKind::Brownian, seed, 1.0, step)).unwrap()
}

#[test]
fn linear_pair_distances_obey_riemann_bound() {
    let w = SampledPath::from_fn(1.0, 1.0 / 4096.0, Regime::ContinuousLinear, |t| t).unwrap();
    let levels: Vec<u32> = (2..=9).collect();
    let ladder = Ladder::build(&w, &w, Rule::Continuous, &levels, 1.0).unwrap();
    let r = convergence_report(&ladder.approximants, Tolerances::default()).unwrap();
    for (n, d) in levels[1..].iter().zip(&r.sup_distances) {
        assert!(*d <= threshold(*n - 1) + 1e-12, "n = {n}: {d}");
    }
    assert!(r.fitted_rate.unwrap() < -2.0);
    let loose = Tolerances { tol_abs: threshold(8), tol_rel: 0.0 };
    assert!(convergence_report(&ladder.approximants, loose).unwrap().converged);
}

#[test]
fn qv_of_constant_is_zero() {
    let w = SampledPath::constant(1.5, 1.0, 0.01, Regime::ContinuousLinear).unwrap();
    let p = partition_continuous(&w, &w, 6, 1.0).unwrap();
    let grid = evaluation_grid(&w, &[&p], 1.0);
    assert!(qv_approximant(&w, &p, &grid).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn stieltjes_of_one_is_total_mass() {
    let w = brownian(3, 1.0 / 2048.0);
    let p = partition_continuous(&w, &w, 5, 1.0).unwrap();
    let a = qv_at_partition_times(&w, &p).unwrap();
    let one = Constant { value: 1.0, end: 1.0 };
    let s = stieltjes_against_qv(&one, &a).unwrap();
    for (x, y) in s.values.iter().zip(&a.values) {
        assert!((x - (y - a.values[0])).abs() <= 1e-12);
    }
}

#[test]
fn sin_residual_shrinks_on_average() {
    let f = BuiltinF::Sin;
    let mut mean = [0.0; 3];
    for i in 0..20 {
        let w = brownian(derive_seed(61, i), 1.0 / 16384.0);
        let phi = f.derivative_path(&w);
        for (j, n) in [3u32, 4, 5].into_iter().enumerate() {
            mean[j] += ito_residual(&f, &w, &phi, n, 1.0).unwrap().residual.abs() / 20.0;
        }
    }
    assert!(mean[0] > mean[1] && mean[1] > mean[2], "{mean:?}");
}

fn max_gap(a: &LevelFunction, b: &[f64]) -> f64 {
    a.values.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_in_the_integrand(seed in any::<u64>(), n in 1u32..8, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let w = brownian(derive_seed(seed, 0), 1.0 / 1024.0);
        let f = brownian(derive_seed(seed, 1), 1.0 / 1024.0);
        let g = brownian(derive_seed(seed, 2), 1.0 / 1024.0);
        // one partition, built from a reference integrand, shared by all
        let p = partition_continuous(&w, &f, n, 1.0).unwrap();
        let grid = evaluation_grid(&w, &[&p], 1.0);
        let h = SampledPath::new(
            f.times().to_vec(),
            f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect(),
            Regime::ContinuousLinear,
        ).unwrap();
        let ih = ito_approximant(&h, &w, &p, &grid).unwrap();
        let i_f = ito_approximant(&f, &w, &p, &grid).unwrap();
        let ig = ito_approximant(&g, &w, &p, &grid).unwrap();
        let expect: Vec<f64> = i_f.values.iter().zip(&ig.values).map(|(x, y)| a * x + b * y).collect();
        let scale = 1.0 + ih.sup_norm();
        prop_assert!(max_gap(&ih, &expect) <= 1e-9 * scale);
    }

    #[test]
    fn square_identity_at_every_grid_point(seed in any::<u64>(), n in 1u32..10, cadlag in any::<bool>()) {
        let mut w = brownian(seed, 1.0 / 1024.0);
        if cadlag {
            w = w.with_regime(Regime::CadlagStep);
        }
        let p = if cadlag {
            partition_cadlag(&w, &w, n, 1.0).unwrap()
        } else {
            partition_continuous(&w, &w, n, 1.0).unwrap()
        };
        let grid = evaluation_grid(&w, &[&p], 1.0);
        let i = ito_approximant(&w, &w, &p, &grid).unwrap();
        let a = qv_approximant(&w, &p, &grid).unwrap();
        let w0 = w.values()[0];
        for (k, &s) in grid.iter().enumerate() {
            let ws = w.evaluate(s).unwrap();
            prop_assert!((ws * ws - w0 * w0 - 2.0 * i.values[k] - a.values[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn constant_integrand_telescopes(seed in any::<u64>(), c in -5.0f64..5.0) {
        let w = brownian(seed, 1.0 / 1024.0);
        let phi = Constant { value: c, end: 1.0 };
        let levels = [3, 4, 5, 6];
        let ladder = Ladder::build(&w, &phi, Rule::Continuous, &levels, 1.0).unwrap();
        for l in &ladder.approximants {
            for (s, v) in l.breakpoints.iter().zip(&l.values) {
                let exact = c * (w.evaluate(*s).unwrap() - w.values()[0]);
                prop_assert!((v - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
            }
        }
        let r = convergence_report(&ladder.approximants, Tolerances::default()).unwrap();
        prop_assert!(r.sup_distances.iter().all(|&d| d == 0.0));
        prop_assert!(r.converged);
    }

    #[test]
    fn qv_steps_are_bounded_and_nondecreasing(seed in any::<u64>(), n in 1u32..9) {
        let w = brownian(derive_seed(seed, 0), 1.0 / 2048.0);
        let phi = brownian(derive_seed(seed, 1), 1.0 / 2048.0);
        let p = partition_continuous(&w, &phi, n, 1.0).unwrap();
        let a = qv_at_partition_times(&w, &p).unwrap();
        let eps = threshold(n);
        for d in a.values.windows(2) {
            prop_assert!(d[1] >= d[0]);
            prop_assert!(d[1] - d[0] <= eps * eps * (1.0 + 1e-9));
        }
    }

    #[test]
    fn flat_stretches_leave_the_integral_flat(seed in any::<u64>(), n in 1u32..8) {
        let mut values: Vec<f64> = brownian(seed, 1.0 / 512.0).values().to_vec();
        // freeze omega on [0.25, 0.75]
        let (i0, i1) = (128, 384);
        let frozen = values[i0];
        for v in &mut values[i0..=i1] {
            *v = frozen;
        }
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64 / 512.0).collect();
        let w = SampledPath::new(times, values, Regime::ContinuousLinear).unwrap();
        let phi = brownian(derive_seed(seed, 9), 1.0 / 512.0);
        let p = partition_continuous(&w, &phi, n, 1.0).unwrap();
        let grid = evaluation_grid(&w, &[&p], 1.0);
        let i = ito_approximant(&phi, &w, &p, &grid).unwrap();
        let at = |s: f64| i.value(s).unwrap();
        let base = at(0.25);
        for &s in grid.iter().filter(|&&s| (0.25..=0.75).contains(&s)) {
            prop_assert_eq!(at(s), base);
        }
    }

    #[test]
    fn x_and_square_residuals_vanish(seed in any::<u64>(), n in 1u32..10) {
        let w = brownian(seed, 1.0 / 1024.0);
        for f in [BuiltinF::Identity, BuiltinF::Square] {
            let phi = f.derivative_path(&w);
            let r = ito_residual(&f, &w, &phi, n, 1.0).unwrap();
            prop_assert!(r.residual.abs() <= 1e-9, "{:?}: {}", f, r.residual);
        }
    }
}

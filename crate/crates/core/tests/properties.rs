use num_complex::Complex64;
use proptest::prelude::*;

use rqnls_core::diagnostics::{morawetz_action, morawetz_action_direct, L6Accumulator, MorawetzWeight};
use rqnls_core::dynamics::{free_evolve, translate};
use rqnls_core::grid::{project_low, Grid1D, NormSpec, SpectralField};
use rqnls_core::nonlinearity::{eval_f_fft, sextic_density, Nonlinearity, NonlinearityMethod};
use rqnls_core::random::{random_field, RandomFieldSpec};
use rqnls_core::resonance::{
    circle_lattice_points, enumerate_resonances, CircleSpec, Dim, ElementarySums, ModeIndex,
    ResonanceTable, ResonantTuple,
};

fn dim_strategy() -> impl Strategy<Value = Dim> {
    prop_oneof![Just(Dim::One), Just(Dim::Two)]
}

fn field(dim: Dim, cutoff: i64, seed: u64) -> SpectralField {
    let g = Grid1D::new(10.0, 64).unwrap();
    let spec = RandomFieldSpec {
        max_wavenumber: 2.0,
        center_spread: 2.5,
        ..Default::default()
    };
    random_field(&g, dim, cutoff, &spec, seed).unwrap()
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.sub(b).norm(NormSpec::l2(0.0)) / b.norm(NormSpec::l2(0.0)).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn tuples_are_resonant_and_trivial_ones_present(
        dim in dim_strategy(), cutoff in 0i64..3, a in -2i64..3, b in -2i64..3
    ) {
        let table = ResonanceTable::build(dim, cutoff).unwrap();
        for (j, tuples) in table.iter() {
            prop_assert!(tuples.windows(2).all(|w| w[0] < w[1]));
            for t in tuples {
                prop_assert!(t.is_resonant_for(j));
                prop_assert!(t.sup_norm() <= cutoff);
            }
        }
        let clamp = |x: i64| x.clamp(-cutoff, cutoff);
        let (k, l) = match dim {
            Dim::One => (ModeIndex::d1(clamp(a)), ModeIndex::d1(clamp(b))),
            Dim::Two => (ModeIndex::d2(clamp(a), clamp(b)), ModeIndex::d2(clamp(b), clamp(-a))),
        };
        for j in table.modes() {
            let t = ResonantTuple([*j, k, k, l, l]);
            prop_assert!(table.contains(*j, &t));
        }
    }

    #[test]
    fn resonances_are_symmetric_under_negation(dim in dim_strategy(), cutoff in 1i64..3, a in -2i64..3) {
        let j = match dim {
            Dim::One => ModeIndex::d1(a.clamp(-cutoff, cutoff)),
            Dim::Two => ModeIndex::d2(a.clamp(-cutoff, cutoff), 0),
        };
        let mut neg: Vec<ResonantTuple> = enumerate_resonances(dim, j, cutoff)
            .unwrap()
            .iter()
            .map(|t| ResonantTuple(t.0.map(|m| -m)))
            .collect();
        neg.sort();
        prop_assert_eq!(neg, enumerate_resonances(dim, -j, cutoff).unwrap());
    }

    #[test]
    fn circle_points_lie_on_the_circle(cx in -6i64..7, cy in -6i64..7, q in 0i64..400) {
        let c = CircleSpec::new([cx, cy], q).unwrap();
        let pts = circle_lattice_points(&c, 0.0);
        prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
        for p in &pts {
            let (x, y) = (2 * p.0[0] - cx, 2 * p.0[1] - cy);
            prop_assert_eq!(x * x + y * y, q);
        }
        if !c.is_parity_consistent() {
            prop_assert!(pts.is_empty());
        }
    }

    #[test]
    fn elementary_sums_are_even(k in 1i64..40, j in 0i64..60) {
        let s = ElementarySums::new(k).unwrap();
        prop_assert!((s.get(j) - s.get(-j)).abs() <= 1e-14 * s.get(j));
        prop_assert!(s.get(j) >= 0.0);
    }

    #[test]
    fn lift_matches_direct(dim in dim_strategy(), cutoff in 1i64..3, seed in any::<u64>()) {
        let u = field(dim, cutoff, seed);
        let direct = Nonlinearity::new(dim, cutoff, NonlinearityMethod::DirectEnumeration).unwrap();
        prop_assert!(rel(&direct.eval(&u).unwrap(), &eval_f_fft(&u).unwrap()) < 1e-12);
    }

    #[test]
    fn quintic_homogeneity(seed in any::<u64>(), r in 0.1f64..2.0, th in 0.0f64..6.3) {
        let u = field(Dim::One, 2, seed);
        let c = Complex64::from_polar(r, th);
        let lhs = eval_f_fft(&u.scaled(c)).unwrap();
        let rhs = eval_f_fft(&u).unwrap().scaled(c * r.powi(4));
        prop_assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn gauge_covariance(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let u = field(Dim::Two, 1, seed);
        let rot = |v: &SpectralField| {
            let mut out = v.clone();
            for (m, j) in v.modes().iter().enumerate() {
                let z = Complex64::from_polar(1.0, a + b * (j.0[0] - j.0[1]) as f64 + c * j.norm_sq() as f64);
                out.row_mut(m).iter_mut().for_each(|x| *x *= z);
            }
            out
        };
        let lhs = eval_f_fft(&rot(&u)).unwrap();
        let rhs = rot(&eval_f_fft(&u).unwrap());
        prop_assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn sextic_density_nonnegative(dim in dim_strategy(), cutoff in 0i64..3, seed in any::<u64>()) {
        let d = sextic_density(&field(dim, cutoff, seed)).unwrap();
        let max = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!(d.iter().all(|&v| v >= -1e-12 * max));
    }

    #[test]
    fn free_flow_is_a_unitary_group(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let u = field(Dim::One, 1, seed);
        let a = free_evolve(&free_evolve(&u, s), t);
        let b = free_evolve(&u, s + t);
        prop_assert!(rel(&a, &b) < 1e-12);
        let n = u.norm(NormSpec::l2(1.0));
        prop_assert!((a.norm(NormSpec::l2(1.0)) - n).abs() < 1e-12 * n);
    }

    #[test]
    fn projection_commutes_with_free_flow(seed in any::<u64>(), t in -2.0f64..2.0, frac in 0.1f64..1.0) {
        let u = field(Dim::One, 1, seed);
        let n = frac * u.grid().nyquist();
        let a = project_low(&free_evolve(&u, t), n).unwrap();
        let b = free_evolve(&project_low(&u, n).unwrap(), t);
        prop_assert!(rel(&a, &b) < 1e-12);
    }

    #[test]
    fn translations_compose(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let u = field(Dim::One, 1, seed);
        let lhs = translate(&translate(&u, a), b);
        prop_assert!(rel(&lhs, &translate(&u, a + b)) < 1e-12);
    }

    #[test]
    fn morawetz_prefix_sum_matches_double_loop(dim in dim_strategy(), seed in any::<u64>()) {
        let u = field(dim, 1, seed);
        let a = morawetz_action(&u, MorawetzWeight::Sign);
        let b = morawetz_action_direct(&u, MorawetzWeight::Sign);
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
    }

    #[test]
    fn l6_accumulation_is_monotone_and_homogeneous(seed in any::<u64>(), th in 0.1f64..3.0) {
        let u = field(Dim::One, 1, seed);
        let mut plain = L6Accumulator::new(0.5);
        let mut scaled = L6Accumulator::new(0.5);
        let mut last = 0.0;
        for k in 0..5 {
            let t = 0.3 * k as f64;
            let v = free_evolve(&u, t);
            let p = plain.push(t, &v);
            let s = scaled.push(t, &v.scaled(Complex64::new(th, 0.0)));
            prop_assert!(p >= last);
            prop_assert!((s - th * p).abs() <= 1e-12 * s.max(1e-300));
            last = p;
        }
    }
}

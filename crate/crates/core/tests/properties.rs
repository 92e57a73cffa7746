//! Randomized invariants of the plant model and the control laws.

use proptest::prelude::*;

use extrudesim_core::control::{
    min_gain_k1, min_gain_k22, optimal_closed_loop_pole, riccati_residual, solve_riccati, strand_control,
    switching_function, update_sliding_surface, K1ConditionForm, SlidingState, StrandControllerConfig, Switching,
};
use extrudesim_core::plant::{
    plant_derivatives, sample_plant, BoundsSpec, DisturbanceProfile, ParamDistribution, PlantParams,
    ReferenceSignal, UncertaintySampler,
};

fn plant() -> impl Strategy<Value = PlantParams> {
    (-5.0..-0.01f64, 0.1..5.0f64, -5.0..-0.01f64, -2.0..2.0f64, 0.1..5.0f64)
        .prop_map(|(a1, b1, a2, a21, b2)| PlantParams { a1, b1, a2, a21, b2 })
}

fn bounds() -> impl Strategy<Value = BoundsSpec> {
    prop::array::uniform6(0.0..3.0f64).prop_map(|v| BoundsSpec {
        eta1_bar: v[0],
        eta2_bar: v[1],
        x1r_bar: v[2],
        x1rd_bar: v[3],
        x2r_bar: v[4],
        x2rd_bar: v[5],
    })
}

/// Multiples of 1/8 in [-16, 16]: products and short sums of these are exact in f64.
fn dyadic() -> impl Strategy<Value = f64> {
    (-128i32..=128).prop_map(|k| k as f64 / 8.0)
}

fn switching() -> impl Strategy<Value = Switching> {
    prop_oneof![Just(Switching::Signum), (1e-4..2.0f64).prop_map(|epsilon| Switching::BoundaryLayer { epsilon })]
}

proptest! {
    #[test]
    fn pulse_peak_is_amplitude_at_midpoint(amp in -5.0..5.0f64, t0 in 0.0..50.0f64, w in 0.1..60.0f64) {
        let d = DisturbanceProfile::QuadraticPulse { amplitude: amp, t_start: t0, t_end: t0 + w };
        let n = 10_000;
        let h = w / (n - 1) as f64;
        let (mut best, mut at) = (0.0f64, t0);
        for i in 0..n {
            let t = t0 + i as f64 * h;
            let v = d.eval(t).abs();
            if v > best {
                best = v;
                at = t;
            }
        }
        prop_assert!((best - amp.abs()).abs() <= 1e-6 * amp.abs().max(1.0));
        if amp != 0.0 {
            prop_assert!((at - (t0 + 0.5 * w)).abs() <= h);
        }
        prop_assert_eq!(d.eval(t0), 0.0);
        prop_assert_eq!(d.eval(t0 + w), 0.0);
    }

    #[test]
    fn reference_derivative_matches_central_difference(
        kind in 0usize..3,
        a in -3.0..3.0f64,
        b in 0.05..4.0f64,
        c in -2.0..2.0f64,
        t in 0.0..20.0f64,
    ) {
        let r = match kind {
            0 => ReferenceSignal::RampToHold { start_value: c, slope: a, hold_time: 10.0 * b },
            1 => ReferenceSignal::Sinusoid { amplitude: a, omega: b, offset: c, phase: 0.3 },
            _ => ReferenceSignal::PiecewiseLinear { points: vec![(1.0, c), (1.0 + 5.0 * b, a), (12.0, c + a)] },
        };
        let breaks: Vec<f64> = match &r {
            ReferenceSignal::RampToHold { hold_time, .. } => vec![*hold_time],
            ReferenceSignal::PiecewiseLinear { points } => points.iter().map(|p| p.0).collect(),
            _ => vec![],
        };
        let h = 1e-5;
        prop_assume!(t > 2.0 * h && breaks.iter().all(|bp| (t - bp).abs() > 2.0 * h));
        let (_, d) = r.eval(t);
        let fd = (r.eval(t + h).0 - r.eval(t - h).0) / (2.0 * h);
        prop_assert!((fd - d).abs() <= 1e-6 * (1.0 + d.abs()), "fd {} vs {}", fd, d);
    }

    #[test]
    fn plant_derivatives_are_linear_exactly(
        p in prop::array::uniform5(dyadic()),
        v in prop::array::uniform6(dyadic()),
        w in prop::array::uniform6(dyadic()),
        k in -3i32..=3,
    ) {
        let p = PlantParams { a1: p[0], b1: p[1], a2: p[2], a21: p[3], b2: p[4] };
        let f = |v: [f64; 6]| plant_derivatives(&p, v[0], v[1], v[2], v[3], v[4], v[5]);
        let alpha = 2f64.powi(k);
        let scaled: [f64; 6] = v.map(|x| alpha * x);
        let (fx, fy) = f(v);
        prop_assert_eq!(f(scaled), (alpha * fx, alpha * fy));
        let sum: [f64; 6] = std::array::from_fn(|i| v[i] + w[i]);
        let (gx, gy) = f(w);
        prop_assert_eq!(f(sum), (fx + gx, fy + gy));
    }

    #[test]
    fn plant_derivatives_are_linear_to_rounding(
        p in plant(),
        v in prop::array::uniform6(-10.0..10.0f64),
        w in prop::array::uniform6(-10.0..10.0f64),
        alpha in -4.0..4.0f64,
    ) {
        let f = |v: [f64; 6]| plant_derivatives(&p, v[0], v[1], v[2], v[3], v[4], v[5]);
        let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() <= 1e-12 * 500.0 && (a.1 - b.1).abs() <= 1e-12 * 500.0;
        let (fx, fy) = f(v);
        prop_assert!(close(f(v.map(|x| alpha * x)), (alpha * fx, alpha * fy)));
        let (gx, gy) = f(w);
        prop_assert!(close(f(std::array::from_fn(|i| v[i] + w[i])), (fx + gx, fy + gy)));
    }

    #[test]
    fn sampler_is_deterministic_and_valid(seed in any::<u64>(), frac in 0.0..0.5f64, rel in 0.0..2.0f64, n in 1usize..20) {
        let nominal = PlantParams { a1: -1.0, b1: 1.0, a2: -0.5, a21: 0.2, b2: 4.0 };
        let sampler = UncertaintySampler {
            seed,
            a1: ParamDistribution::Uniform { fraction: frac },
            b1: ParamDistribution::Uniform { fraction: frac },
            a2: ParamDistribution::Gaussian { rel_std: rel },
            a21: ParamDistribution::Gaussian { rel_std: rel },
            b2: ParamDistribution::None,
        };
        match sample_plant(&sampler, &nominal, n) {
            Ok(first) => {
                let again = sample_plant(&sampler, &nominal, n).unwrap();
                let bits = |v: &[PlantParams]| -> Vec<[u64; 5]> {
                    v.iter().map(|p| [p.a1, p.b1, p.a2, p.a21, p.b2].map(f64::to_bits)).collect()
                };
                prop_assert_eq!(bits(&first), bits(&again));
                prop_assert_eq!(first.len(), n);
                for p in &first {
                    prop_assert!(p.is_valid());
                    prop_assert!(p.a1 >= -(1.0 + frac) && p.a1 <= -(1.0 - frac));
                    prop_assert_eq!(p.b2, 4.0);
                }
            }
            // a huge relative spread on a2 can exhaust the resample budget; that is the only allowed error
            Err(e) => {
                let cap = matches!(e, extrudesim_core::Error::ResampleCapExceeded { .. });
                prop_assert!(cap, "unexpected error {}", e);
            }
        }
    }

    #[test]
    fn riccati_residual_pole_and_scaling(
        a2 in -5.0..-0.01f64,
        b2 in 0.1..5.0f64,
        q in 0.0..10.0f64,
        r in 0.01..10.0f64,
        lambda in 0.01..100.0f64,
    ) {
        let p = PlantParams { a1: -1.0, b1: 1.0, a2, a21: 0.0, b2 };
        let pr = solve_riccati(&p, q, r).unwrap();
        prop_assert!(pr >= 0.0);
        prop_assert!(riccati_residual(&p, q, r, pr).abs() <= 1e-9 * (1.0 + q));
        // independent form of the pole: -sqrt(a2^2 + b2^2 q / r)
        let want = -(a2 * a2 + b2 * b2 * q / r).sqrt();
        let pole = a2 - b2 * b2 * pr / r;
        prop_assert!((pole - want).abs() <= 1e-9 * want.abs());
        prop_assert!((optimal_closed_loop_pole(&p, q, r) - want).abs() <= 1e-9 * want.abs());
        if q > 0.0 {
            prop_assert!(pole < 0.0);
        }
        let ps = solve_riccati(&p, lambda * q, lambda * r).unwrap();
        let (g, gs) = (b2 * pr / r, b2 * ps / (lambda * r));
        prop_assert!((g - gs).abs() <= 1e-9 * g.abs().max(1e-300));
        prop_assert!((ps - lambda * pr).abs() <= 1e-9 * (lambda * pr).max(1e-300));
    }

    #[test]
    fn switching_is_odd_and_bounded(e in -1e6..1e6f64, mode in switching()) {
        let v = switching_function(e, mode);
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(switching_function(-e, mode), -v);
        if let Switching::BoundaryLayer { epsilon } = mode {
            if e.abs() >= epsilon {
                prop_assert_eq!(v, e.signum());
            }
        }
    }

    #[test]
    fn strand_law_is_the_sum_of_its_components(
        p in plant(),
        k22 in 0.0..5.0f64,
        q in 0.0..10.0f64,
        r in 0.01..10.0f64,
        mode in switching(),
        sm in any::<bool>(),
        opt in any::<bool>(),
        x in prop::array::uniform4(-5.0..5.0f64),
    ) {
        let cfg = StrandControllerConfig::design(&p, k22, q, r, mode, sm, opt).unwrap();
        let sliding = SlidingState { z: x[3], s: x[2] - x[1] - x[3] };
        let out = strand_control(&cfg, x[0], x[2], x[1], &sliding);
        prop_assert_eq!(out.u2, out.u_cancel + out.u_sm + out.u_opt);
        prop_assert_eq!(out.u_cancel, -p.a21 / p.b2 * x[0]);
        if !sm {
            prop_assert_eq!(out.u_sm, 0.0);
        }
        if !opt {
            prop_assert_eq!(out.u_opt, 0.0);
        }
    }

    #[test]
    fn surface_keeps_s_equal_error_minus_integral(
        errors in prop::collection::vec(-3.0..3.0f64, 1..50),
        dt in 1e-4..0.1f64,
        pole in -10.0..-0.01f64,
    ) {
        let p = PlantParams { a1: -1.0, b1: 1.0, a2: -0.5, a21: 0.0, b2: 1.0 };
        let cfg = StrandControllerConfig::design(&p, 1.0, 1.0, 1.0, Switching::Signum, true, true)
            .unwrap()
            .with_opt_gain(&p, (p.a2 - pole) / p.b2);
        let mut st = SlidingState::new(errors[0]);
        prop_assert_eq!(st.z, 0.0);
        let mut prev = errors[0];
        let mut z = 0.0;
        for e in &errors[1..] {
            st = update_sliding_surface(st, &cfg, *e, dt);
            z += 0.5 * dt * cfg.sliding_pole * (prev + e);
            prev = *e;
            prop_assert!((st.s - (e - st.z)).abs() <= 1e-12 * (1.0 + e.abs() + st.z.abs()));
            prop_assert!((st.z - z).abs() <= 1e-9 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn min_gains_are_monotone_in_every_bound(p in plant(), b in bounds(), field in 0usize..6, bump in 0.01..2.0f64) {
        let mut up = b;
        match field {
            0 => up.eta1_bar += bump,
            1 => up.eta2_bar += bump,
            2 => up.x1r_bar += bump,
            3 => up.x1rd_bar += bump,
            4 => up.x2r_bar += bump,
            _ => up.x2rd_bar += bump,
        }
        for form in [K1ConditionForm::Product, K1ConditionForm::PaperLiteral] {
            prop_assert!(min_gain_k1(&p, &up, form) >= min_gain_k1(&p, &b, form));
        }
        prop_assert!(min_gain_k22(&p, &up) >= min_gain_k22(&p, &b));
        if field == 0 {
            prop_assert!(min_gain_k1(&p, &up, K1ConditionForm::Product) > min_gain_k1(&p, &b, K1ConditionForm::Product));
        }
        if field == 1 {
            prop_assert!(min_gain_k22(&p, &up) > min_gain_k22(&p, &b));
        }
    }
}

#[test]
fn gain_threshold_examples() {
    let b = BoundsSpec { x1rd_bar: 1.0, x1r_bar: 3.0, eta1_bar: 0.5, ..Default::default() };
    let p = PlantParams { a1: -2.0, b1: 1.0, a2: -1.0, a21: 0.0, b2: 1.0 };
    assert_eq!(min_gain_k1(&p, &b, K1ConditionForm::Product), 1.0 + 2.0 * 3.0 + 0.5);
    assert_eq!(min_gain_k1(&PlantParams { b1: 2.0, ..p }, &b, K1ConditionForm::Product), 3.75);

    let b = BoundsSpec { x2rd_bar: 0.2, x2r_bar: 0.5, eta2_bar: 0.3, ..Default::default() };
    let p = PlantParams { a2: -1.0, b2: 2.0, ..p };
    assert!((min_gain_k22(&p, &b) - 0.5).abs() < 1e-15);
}

//! Precondition handling, calibration and closed-form values of the verifier.

use kinetic_barrier::barrier::{Amplitude, Barrier, FrozenBarrier};
use kinetic_barrier::fixtures::{own_bounds, Fixture};
use kinetic_barrier::grid::{GridDistribution, VelocityGrid};
use kinetic_barrier::kernel::cancellation_constant;
use kinetic_barrier::params::KernelParams;
use kinetic_barrier::solver::Snapshot;
use kinetic_barrier::verifier::{
    appearance_exponents, check_bad23, check_bad2_bad3, check_good_small_v, check_inner_integral_lemma, contact_scan,
    fit_slope, linfty_schedule, log_factor_residuals, sample_velocities, Comparison, Sampled, VerifyContext,
};
use kinetic_barrier::{geom, Error};
use proptest::prelude::*;

fn ctx(p: KernelParams) -> VerifyContext {
    VerifyContext::new(p, cancellation_constant(&p).unwrap())
}

fn reference() -> VerifyContext {
    ctx(KernelParams::new(2, 0.5, 0.3))
}

fn is_precondition<T: std::fmt::Debug>(r: kinetic_barrier::Result<T>) -> bool {
    matches!(r, Err(Error::PreconditionViolated(_)))
}

#[test]
fn cancellation_constant_matches_high_precision_values() {
    // reference values of the angular integral at 40 digits (expm1 form, substituted)
    let cases = [
        ((2, 0.5, 0.3), 2.562_048_372_663_993_5),
        ((3, 0.0, 0.25), 17.216_761_886_397_173),
        ((3, -1.0, 0.7), 35.504_042_626_581_06),
        ((2, -1.5, 0.9), 4.789_528_899_611_21),
    ];
    for ((d, gamma, s), want) in cases {
        let c = cancellation_constant(&KernelParams::new(d, gamma, s)).unwrap();
        let rel = (c.value - want).abs() / want;
        assert!(rel < 1e-9, "d={d} gamma={gamma} s={s}: {} vs {want} (rel {rel:e})", c.value);
        assert!(c.quadrature_error < 1e-6 * want);
    }
}

#[test]
fn appearance_exponents_by_regime() {
    let hard = appearance_exponents(&KernelParams::new(3, 1.0, 0.5), 10.0).unwrap();
    assert_eq!(hard.beta, Some(13.0));
    assert_eq!(hard.q_soft, None);
    let soft = appearance_exponents(&KernelParams::new(3, -0.5, 0.5), 0.0).unwrap();
    assert_eq!(soft.q_soft, Some(2.5));
    let maxwell = appearance_exponents(&KernelParams::new(3, 0.0, 0.5), 0.0).unwrap();
    assert_eq!(maxwell.q_soft, Some(4.0));
    assert!(matches!(
        appearance_exponents(&KernelParams::new(3, -2.5, 0.9), 0.0),
        Err(Error::WrongRegime(_))
    ));
}

#[test]
fn lemma_rejects_speeds_below_two() {
    let r = check_inner_integral_lemma(&FrozenBarrier::plain(1.0, 8.0), &[([1.5, 0.0, 0.0], geom::ZERO)], &reference());
    assert!(is_precondition(r));
}

#[test]
fn small_v_check_needs_a_contact_point() {
    let grid = VelocityGrid::new(2, 0.6, 16).unwrap();
    let zero = GridDistribution::from_fn(grid, |_| 0.0);
    let r = check_good_small_v(&zero, 4.0, &[geom::ZERO], &reference());
    assert!(is_precondition(r));
}

#[test]
fn divergent_regime_needs_q_above_threshold() {
    let c = reference();
    let grid = VelocityGrid::new(2, 8.0, 16).unwrap();
    let f = GridDistribution::from_fn(grid, |_| 0.0);
    // threshold d + gamma + 2s = 3.1
    let r = check_bad2_bad3(&f, &Comparison::plain(1.0, 3.0), &[[4.0, 0.0, 0.0]], &c);
    assert!(is_precondition(r));
}

#[test]
fn three_case_bound_needs_q_in_range() {
    let c = reference();
    let f = Fixture::unit_maxwellian().sample_default(2).unwrap();
    let r = check_bad23(Sampled::Fixed(&f), &Comparison::plain(1.0, 3.5), &[[8.0, 0.0, 0.0]], &c);
    assert!(is_precondition(r));
}

fn constant_trajectory(f: &GridDistribution, times: &[f64]) -> Vec<Snapshot> {
    times.iter().map(|&t| Snapshot { t, f: f.clone() }).collect()
}

#[test]
fn linfty_calibration_is_minimal_on_the_ladder() {
    let p = KernelParams::new(2, 0.5, 0.3);
    let f = Fixture::unit_maxwellian().sample(VelocityGrid::new(2, 6.0, 24).unwrap());
    let traj = constant_trajectory(&f, &[0.5, 1.0]);
    let b = linfty_schedule(&p, &own_bounds(&f), &traj).unwrap();
    let c = ctx(p);
    assert!(!contact_scan(&traj, &b, &c).unwrap().contact);
    let Amplitude::ShiftedPower { n0, beta } = b.amplitude else { panic!("unexpected amplitude {:?}", b.amplitude) };
    let half = Barrier::plain(Amplitude::ShiftedPower { n0: n0 / 2.0, beta }, 0.0);
    assert!(contact_scan(&traj, &half, &c).unwrap().contact);
}

#[test]
fn linfty_calibration_fails_past_the_ladder() {
    let p = KernelParams::new(2, 0.5, 0.3);
    let grid = VelocityGrid::new(2, 2.0, 8).unwrap();
    let f = GridDistribution::from_fn(grid, |_| 1e16);
    let traj = constant_trajectory(&f, &[1.0]);
    let r = linfty_schedule(&p, &own_bounds(&f), &traj);
    assert!(matches!(r, Err(Error::CalibrationFailed(_))), "{r:?}");
}

#[test]
fn linfty_calibration_needs_moderate_singularity() {
    let p = KernelParams::new(2, 1.5, 0.4);
    let f = Fixture::unit_maxwellian().sample(VelocityGrid::new(2, 4.0, 8).unwrap());
    let traj = constant_trajectory(&f, &[1.0]);
    assert!(is_precondition(linfty_schedule(&p, &own_bounds(&f), &traj)));
}

#[test]
fn contact_scan_breaks_ties_at_the_lowest_node() {
    let grid = VelocityGrid::new(2, 2.0, 8).unwrap();
    let f = GridDistribution::from_fn(grid, |_| 0.5);
    let mut peaked = f.clone();
    peaked.values[20] = 2.0;
    peaked.values[37] = 2.0;
    let traj = vec![Snapshot { t: 0.5, f }, Snapshot { t: 1.0, f: peaked }];
    let b = Barrier::plain(Amplitude::Constant(1.0), 0.0);
    let r = contact_scan(&traj, &b, &reference()).unwrap();
    assert!(r.contact);
    assert_eq!(r.t0, 1.0);
    assert_eq!(r.v0_index, 20);
    assert!(r.margin <= 0.0);
}

#[test]
fn contact_scan_rejects_unordered_times() {
    let grid = VelocityGrid::new(2, 2.0, 8).unwrap();
    let f = GridDistribution::from_fn(grid, |_| 0.5);
    let traj = constant_trajectory(&f, &[1.0, 0.5]);
    let b = Barrier::plain(Amplitude::Constant(1.0), 0.0);
    assert!(is_precondition(contact_scan(&traj, &b, &reference())));
}

proptest! {
    #[test]
    fn slope_fit_recovers_power_laws(k in -6.0f64..3.0, a in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0, 64.0].iter().map(|&x| (x.ln(), (a * x.powf(k)).ln())).collect();
        prop_assert!((fit_slope(&pts) - k).abs() < 1e-9);
    }

    #[test]
    fn log_factor_fit_prefers_log_corrected_data(k in -5.0f64..0.0, a in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> =
            [8.0f64, 16.0, 32.0, 64.0].iter().map(|&x| (x, a * x.powf(k) * (1.0 + x).ln())).collect();
        let (without, with) = log_factor_residuals(&pts, k);
        prop_assert!(with < 1e-18 && with < without);
    }

    #[test]
    fn sampled_velocities_have_the_requested_speeds(seed in any::<u64>(), d in 2usize..=3) {
        let speeds = [2.0, 5.0, 11.0];
        let vs = sample_velocities(d, &speeds, 3, seed);
        prop_assert_eq!(vs.len(), 9);
        for (k, v) in vs.iter().enumerate() {
            prop_assert!((geom::norm(v) - speeds[k / 3]).abs() < 1e-12);
            if d == 2 {
                prop_assert_eq!(v[2], 0.0);
            }
        }
        prop_assert_eq!(vs, sample_velocities(d, &speeds, 3, seed));
    }

    #[test]
    fn frozen_barriers_are_positive_and_nonincreasing(
        n in 1e-3f64..1e3, q in 0.0f64..12.0, eps in 0.0f64..1.0, p in 0.0f64..6.0, r in 0.0f64..100.0, dr in 0.0f64..50.0,
    ) {
        let b = FrozenBarrier { n, q, eps, corrector_exponent: p };
        let (g0, g1) = (b.at_speed(r), b.at_speed(r + dr));
        prop_assert!(g1 > 0.0 && g1 <= g0);
    }
}

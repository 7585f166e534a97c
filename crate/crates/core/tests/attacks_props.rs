use containment_core::attacks::{
    dos_active, dos_duty_fit, dos_metrics, duty_scan_points, ActuationAttack, ActuationKind, CamouflageSignal,
    CamouflageSource, DosSchedule, FdiModel, Node,
};
use nalgebra::DVector;
use proptest::prelude::*;

/// Non-overlapping `(start, duration)` pairs from gap/length draws.
fn schedule() -> impl Strategy<Value = DosSchedule> {
    prop::collection::vec((0.05f64..2.0, 0.01f64..1.5), 0..12).prop_map(|draws| {
        let mut t = 0.0;
        let mut iv = Vec::new();
        for (gap, dur) in draws {
            t += gap;
            iv.push((t, dur));
            t += dur;
        }
        DosSchedule::from_intervals(iv).unwrap()
    })
}

fn any_schedule() -> impl Strategy<Value = DosSchedule> {
    prop_oneof![
        schedule(),
        (0.5f64..3.0, 0.0f64..2.0, 0.05f64..0.95)
            .prop_map(|(period, start, frac)| DosSchedule::periodic(period, start, frac * period).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn attacked_time_is_additive(sched in any_schedule(), a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0) {
        let mut t = [a, b, c];
        t.sort_by(f64::total_cmp);
        let whole = dos_metrics(&sched, t[0], t[2]).total_time;
        let parts = dos_metrics(&sched, t[0], t[1]).total_time + dos_metrics(&sched, t[1], t[2]).total_time;
        prop_assert!((whole - parts).abs() < 1e-12, "{} vs {}", whole, parts);
    }

    #[test]
    fn indicator_integrates_to_attacked_time(sched in any_schedule(), a in 0.0f64..8.0, len in 0.1f64..4.0) {
        let h = 1e-4;
        let steps = (len / h).round() as usize;
        let b = a + steps as f64 * h;
        let integral: f64 = (0..steps).filter(|&k| dos_active(&sched, a + k as f64 * h)).count() as f64 * h;
        let ta = dos_metrics(&sched, a, b).total_time;
        // A left Riemann sum misses at most one step per indicator switch.
        let switches = sched
            .spans_until(b)
            .iter()
            .flat_map(|&(s, e)| [s, e])
            .filter(|&t| t > a && t < b)
            .count();
        let err = (integral - ta).abs();
        prop_assert!(err <= h * switches as f64 + 1e-9, "{} vs {} with {} switches", integral, ta, switches);
        if switches as f64 <= 2.0 * (b - a) {
            prop_assert!(err <= 2e-4 * (b - a), "{} vs {}", integral, ta);
        }
    }

    #[test]
    fn duty_fit_bounds_every_scan_window(sched in any_schedule(), horizon in 1.0f64..30.0) {
        prop_assume!(!sched.spans_until(horizon).is_empty());
        let Ok(fit) = dos_duty_fit(&sched, horizon) else {
            // Attacked for the whole window: no finite τ_a > 1 exists.
            prop_assert!(dos_metrics(&sched, 0.0, horizon).total_time >= horizon - 1e-9);
            return Ok(());
        };
        prop_assert!(fit.t0 >= 0.0);
        let pts = duty_scan_points(&sched, horizon);
        for (i, &t1) in pts.iter().enumerate() {
            for &t2 in &pts[i + 1..] {
                let ta = dos_metrics(&sched, t1, t2).total_time;
                prop_assert!(ta <= fit.t0 + (t2 - t1) / fit.tau_a, "[{}, {}): {} > {}", t1, t2, ta, fit.t0 + (t2 - t1) / fit.tau_a);
            }
        }
    }

    #[test]
    fn ramp_difference_quotient_is_the_rate(
        rate in prop::collection::vec(-0.05f64..0.05, 1..4),
        t in 0.0f64..30.0,
        h in 1e-3f64..1.0,
    ) {
        let m = rate.len();
        let dbar = rate.iter().map(|r| r * r).sum::<f64>().sqrt() + 1e-3;
        let att = ActuationAttack::ramp(DVector::zeros(m), DVector::from_vec(rate.clone()), dbar).unwrap();
        let d = (att.signal(t + h, m) - att.signal(t, m)) / h;
        for (x, r) in d.iter().zip(&rate) {
            prop_assert!((x - r).abs() <= 1e-12 * (1.0 + t / h));
        }
    }
}

#[test]
fn overlapping_intervals_are_rejected() {
    assert!(DosSchedule::from_intervals(vec![(0.0, 1.0), (0.5, 1.0)]).is_err());
    assert!(DosSchedule::from_intervals(vec![(0.0, 1.0), (1.0, 1.0)]).is_err());
    assert!(DosSchedule::from_intervals(vec![(0.0, 1.0), (1.5, 1.0)]).is_ok());
}

#[test]
fn periodic_example_schedule() {
    let s = DosSchedule::periodic(2.0, 0.5, 1.03).unwrap();
    assert!(!dos_active(&s, 0.49));
    assert!(dos_active(&s, 0.5));
    assert!(dos_active(&s, 1.52));
    assert!(!dos_active(&s, 1.53));
    assert!(dos_active(&s, 2.5));
    let fit = dos_duty_fit(&s, 30.0).unwrap();
    assert!((fit.tau_a - 2.0 / 1.03).abs() < 1e-12);
}

#[test]
fn table_slope_above_bound_is_rejected() {
    let kind = ActuationKind::Table {
        times: vec![0.0, 1.0],
        values: vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.1])],
    };
    assert!(ActuationAttack::new(kind.clone(), 0.05).is_err());
    assert!(ActuationAttack::new(kind, 0.2).is_ok());
}

#[test]
fn unlisted_fdi_links_are_identity() {
    let fdi = FdiModel::<f64>::default();
    let y = DVector::from_vec(vec![1.0, -2.0]);
    assert_eq!(fdi.received(0, Node::Leader(1), &y, 3.0), y);
    assert_eq!(fdi.received(2, Node::Follower(2), &y, 3.0), y);
}

#[test]
fn camouflage_dimension_must_match() {
    let sig = CamouflageSignal::Constant(DVector::from_vec(vec![1.0, 2.0]));
    assert!(CamouflageSource::<f64>::new(9, sig.clone(), 3).is_err());
    assert!(CamouflageSource::<f64>::new(9, sig, 2).is_ok());
}

use std::f64::consts::PI;

use phasegraph::connectivity::{pli_from_diff, wpli_from_diff, wrap_phase};
use phasegraph::eval::metrics::aggregate_subject;
use phasegraph::eval::stats::mann_whitney_u;
use proptest::prelude::*;

proptest! {
    #[test]
    fn wrapped_phase_stays_in_half_open_interval(x in -100.0..100.0f64) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn lag_indices_are_bounded(d in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let p = pli_from_diff(&d);
        prop_assert!((0.0..=1.0).contains(&p));
        if let Some(w) = wpli_from_diff(&d) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&w));
        }
    }

    #[test]
    fn lag_indices_ignore_sign_flip(d in prop::collection::vec(-3.0..3.0f64, 1..100)) {
        let flipped: Vec<f64> = d.iter().map(|v| -v).collect();
        prop_assert!((pli_from_diff(&d) - pli_from_diff(&flipped)).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_p_is_a_probability(
        a in prop::collection::vec(-5.0..5.0f64, 1..30),
        b in prop::collection::vec(-5.0..5.0f64, 1..30),
    ) {
        let (u, p) = mann_whitney_u(&a, &b);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(u >= 0.0 && u <= (a.len() * b.len()) as f64);
    }

    #[test]
    fn subject_probability_lies_within_window_range(z in prop::collection::vec(-20.0..20.0f64, 1..50)) {
        let (p, _) = aggregate_subject(&z);
        let s: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }
}

use coderag_core::metrics::{pass_at_k, pass_at_k_in, MetricError};
use num_rational::Ratio;
use proptest::prelude::*;

fn binomial(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

#[test]
fn rejects_out_of_range_parameters() {
    for (n, c, k) in [(5, 6, 1), (5, 2, 0), (5, 2, 6), (0, 0, 1)] {
        assert_eq!(pass_at_k(n, c, k), Err(MetricError::Parameters { n, c, k }));
    }
}

#[test]
fn single_sample_is_the_empirical_rate() {
    assert_eq!(pass_at_k(1, 1, 1).unwrap(), 1.0);
    assert_eq!(pass_at_k(1, 0, 1).unwrap(), 0.0);
    assert_eq!(pass_at_k_in::<Ratio<i64>>(10, 3, 1).unwrap(), Ratio::new(3, 10));
}

proptest! {
    #[test]
    fn exact_rational_matches_binomial_formula(n in 1u64..=60, c_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
        let c = (c_frac * n as f64).floor() as u64;
        let k = ((k_frac * n as f64).ceil() as u64).clamp(1, n);
        let got = pass_at_k_in::<Ratio<i128>>(n, c, k).unwrap();
        let expected = Ratio::from_integer(1) - Ratio::new(binomial(n - c, k), binomial(n, k));
        prop_assert_eq!(got, expected);
        let float = pass_at_k(n, c, k).unwrap();
        prop_assert!((float - *expected.numer() as f64 / *expected.denom() as f64).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_correct_samples_and_k(n in 2u64..=40, c in 0u64..40, k in 1u64..40) {
        prop_assume!(c < n && k < n);
        let at = |c, k| pass_at_k_in::<Ratio<i128>>(n, c, k).unwrap();
        prop_assert!(at(c, k) <= at(c + 1, k));
        prop_assert!(at(c, k) <= at(c, k + 1));
        prop_assert!(at(c, k) >= Ratio::from_integer(0) && at(c, k) <= Ratio::from_integer(1));
    }
}

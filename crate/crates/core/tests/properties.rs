use std::cmp::Ordering;

use pohst::certify::{
    certify_x, certify_y, eval_f, eval_f_with, eval_factor, eval_p, x_from_y, ProductMode,
    RealVectorX, RealVectorY,
};
use pohst::partition::{
    build_eta, build_pi, check_construction_invariants, search_partition, validate_partition,
    Target,
};
use pohst::regulator::{compare_with_signature_free, discriminant_log_bound, RegulatorQuery};
use pohst::signs::{alpha_beta, classify_pairs, heavy_target, PairIndex, Sign, SignVector};
use proptest::prelude::*;

fn sigma(max_len: usize) -> impl Strategy<Value = SignVector> {
    prop::collection::vec(any::<bool>(), 0..=max_len).prop_map(|bits| {
        SignVector::new(
            bits.into_iter()
                .map(|b| if b { Sign::Minus } else { Sign::Plus })
                .collect(),
        )
    })
}

fn x_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((any::<bool>(), 1e-6..=1.0f64), 0..=max_len).prop_map(|v| {
        v.into_iter()
            .map(|(neg, m)| if neg { -m } else { m })
            .collect()
    })
}

/// Nonzero values with strictly increasing modulus.
fn y_values(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        0.1..10.0f64,
        prop::collection::vec((any::<bool>(), 1.001..4.0f64), min_len..=max_len),
    )
        .prop_map(|(start, steps)| {
            let mut m = start;
            steps
                .into_iter()
                .map(|(neg, r)| {
                    m *= r;
                    if neg {
                        -m
                    } else {
                        m
                    }
                })
                .collect()
        })
}

fn pair(n: usize) -> impl Strategy<Value = PairIndex> {
    (1..=n).prop_flat_map(|j| (1..=j).prop_map(move |i| PairIndex::new(i, j)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn order_is_a_strict_total_order(a in pair(12), b in pair(12), c in pair(12)) {
        prop_assert_eq!(a.cmp(&b), b.cmp(&a).reverse());
        prop_assert_eq!(a.cmp(&b) == Ordering::Equal, a == b);
        if a < b && b < c {
            prop_assert!(a < c);
        }
        prop_assert_eq!(a < b, b.j > a.j || (b.j == a.j && b.i < a.i));
    }

    #[test]
    fn j_and_k_split_the_triangle(s in sigma(20)) {
        let n = s.len();
        let (j, k) = classify_pairs(&s);
        prop_assert_eq!(j.len() + k.len(), n * (n + 1) / 2);
        prop_assert!(j.iter().all(|p| !p.canonical) && k.iter().all(|p| p.canonical));
        prop_assert!(j.windows(2).all(|w| w[0].pair < w[1].pair));
        prop_assert!(k.windows(2).all(|w| w[0].pair < w[1].pair));
    }

    #[test]
    fn adjacent_blocks_multiply(s in sigma(16), seed in any::<u64>()) {
        prop_assume!(s.len() >= 2);
        let n = s.len();
        let i = 1 + (seed as usize) % (n - 1);
        let j = i + ((seed >> 16) as usize) % (n - i);
        let k = j + 1 + ((seed >> 32) as usize) % (n - j);
        let left = s.product_sign(PairIndex::new(i, j)).unwrap();
        let right = s.product_sign(PairIndex::new(j + 1, k)).unwrap();
        prop_assert_eq!(left * right, s.product_sign(PairIndex::new(i, k)).unwrap());
        let direct = s.entries()[i - 1..k].iter().fold(Sign::Plus, |acc, &x| acc * x);
        prop_assert_eq!(direct, s.product_sign(PairIndex::new(i, k)).unwrap());
    }

    #[test]
    fn prefix_counts_match_y_signs(s in sigma(24)) {
        let (alpha, beta) = alpha_beta(&s);
        let ys = s.y_signs();
        prop_assert_eq!(ys.len(), s.len() + 1);
        prop_assert_eq!(ys[0], Sign::Plus);
        let p = ys.iter().filter(|x| x.is_plus()).count();
        prop_assert_eq!(alpha + 1, p);
        prop_assert_eq!(beta, ys.len() - p);
    }

    #[test]
    fn pattern_text_and_index_round_trip(s in sigma(24)) {
        let text = s.to_string();
        prop_assert_eq!(text.parse::<SignVector>().unwrap(), s.clone());
        prop_assert_eq!(SignVector::from_index(s.len(), s.index()), s);
    }

    #[test]
    fn factors_lie_in_sign_ranges(xs in x_values(12)) {
        let x = RealVectorX::new(xs).unwrap();
        let s = x.signs();
        for p in s.pairs() {
            let a = eval_factor(&x, p).unwrap();
            prop_assert!((0.0..=2.0).contains(&a));
            if s.product_sign(p).unwrap().is_plus() {
                prop_assert!(a < 1.0);
            } else {
                prop_assert!(a > 1.0);
            }
        }
    }

    #[test]
    fn change_of_variables_identity(ys in y_values(1, 10)) {
        let y = RealVectorY::new(ys).unwrap();
        let p = eval_p(&y);
        let f = eval_f(&x_from_y(&y));
        prop_assert!((p - f).abs() <= 1e-12 * p.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn log_mode_agrees_with_plain(xs in x_values(12)) {
        let x = RealVectorX::new(xs).unwrap();
        let plain = eval_f_with(&x, ProductMode::Plain);
        let log = eval_f_with(&x, ProductMode::Log);
        prop_assert!((plain - log).abs() <= 1e-10 * plain.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn certificates_hold_on_random_points(xs in x_values(10)) {
        let x = RealVectorX::new(xs).unwrap();
        let cert = certify_x(&x).unwrap();
        prop_assert!(cert.ok, "{:?}", cert);
        prop_assert!(cert.bounds_match_heavy);
        prop_assert_eq!(cert.exponent, heavy_target(&x.signs()));
        prop_assert!((cert.total - cert.grouped_total).abs() <= 1e-12 * cert.total.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn y_certificates_hold(ys in y_values(2, 10)) {
        let y = RealVectorY::new(ys).unwrap();
        let (p, m) = y.sign_counts();
        let cert = certify_y(&y).unwrap();
        prop_assert!(cert.ok);
        prop_assert_eq!(cert.exponent, p.min(m));
    }

    #[test]
    fn constructions_validate(s in sigma(18)) {
        let (eta, trace) = build_eta(&s).unwrap();
        prop_assert!(validate_partition(&s, &eta).ok);
        prop_assert_eq!(eta.heavy_count, heavy_target(&s));
        let report = check_construction_invariants(&s, &trace);
        prop_assert!(report.ok, "{:?}", report.violations);
        let pi = build_pi(&s).unwrap();
        prop_assert!(validate_partition(&s, &pi).ok);
        prop_assert_eq!(pi.heavy_count, 0);
    }

    #[test]
    fn search_matches_ladder(s in sigma(9)) {
        let target = heavy_target(&s);
        let found = search_partition(&s, Target::K, target).unwrap();
        prop_assert!(validate_partition(&s, &found).ok);
        prop_assert_eq!(found.heavy_count, build_eta(&s).unwrap().0.heavy_count);
    }

    #[test]
    fn regulator_bound_is_monotone(n in 2u32..30, m in 0u32..15, r in 1e-3..1e3f64, dr in 0.0..10.0f64) {
        prop_assume!(m <= n / 2);
        let q = RegulatorQuery { n, min_pm: m, regulator: r };
        let base = discriminant_log_bound(&q).unwrap().log_bound;
        let larger_r = discriminant_log_bound(&RegulatorQuery { regulator: r + dr, ..q }).unwrap().log_bound;
        prop_assert!(larger_r >= base);
        if m < n / 2 {
            let larger_m = discriminant_log_bound(&RegulatorQuery { min_pm: m + 1, ..q }).unwrap().log_bound;
            prop_assert!(larger_m >= base);
        }
        let cmp = compare_with_signature_free(&q).unwrap();
        prop_assert!(cmp.improvement >= 0.0);
        prop_assert_eq!(cmp.improvement, f64::from(n / 2 - m) * 4f64.ln());
    }
}

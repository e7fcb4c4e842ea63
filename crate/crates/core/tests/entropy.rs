mod common;

use common::{bowen, orbits, random_monotone, random_schedule, random_word, small_instance};
use naifs::entropy::{exact_cover_count, exact_spanning_count, rate_slack, separated_set};
use naifs::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Brute-force maximum separated set size over all subsets.
fn brute_max_separated(orb: &[Vec<Point>], space: Space, eps: f64) -> usize {
    let n = orb.len();
    (0u32..1 << n)
        .filter(|mask| {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            idx.iter()
                .enumerate()
                .all(|(a, &i)| idx[a + 1..].iter().all(|&j| bowen(space, &orb[i], &orb[j]) > eps))
        })
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sandwich_holds_exactly(seed in any::<u64>()) {
        let c = small_instance(seed);
        let n = c.w.len();
        let r = exact_spanning_count(&c.s, &c.g, None, &c.w, n, c.eps).unwrap();
        let s = separated_count(&c.s, &c.g, None, &c.w, n, c.eps, true).unwrap();
        let r_half = exact_spanning_count(&c.s, &c.g, None, &c.w, n, c.eps / 2.0).unwrap();
        prop_assert!(r <= s && s <= r_half, "r {r} s {s} r(eps/2) {r_half}");
    }

    #[test]
    fn exact_separated_matches_brute_force(seed in any::<u64>()) {
        let c = small_instance(seed);
        prop_assume!(c.g.len() <= 14);
        let orb = orbits(&c.s, &c.g, &c.w);
        let exact = separated_count(&c.s, &c.g, None, &c.w, c.w.len(), c.eps, true).unwrap();
        prop_assert_eq!(exact, brute_max_separated(&orb, c.g.space(), c.eps));
    }

    #[test]
    fn greedy_set_is_separated_and_spans(seed in any::<u64>(), log_cells in 5u32..9) {
        let mut c = small_instance(seed);
        c.g = Grid::new(c.g.space(), 1.0 / (1u32 << log_cells) as f64).unwrap();
        let space = c.g.space();
        let orb = orbits(&c.s, &c.g, &c.w);
        let kept = separated_set(&c.s, &c.g, None, &c.w, c.w.len(), c.eps, false).unwrap();
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                prop_assert!(bowen(space, &orb[i], &orb[j]) > c.eps);
            }
        }
        for o in &orb {
            prop_assert!(kept.iter().any(|&k| bowen(space, o, &orb[k]) <= c.eps));
        }
    }

    #[test]
    fn exact_counts_grow_as_eps_shrinks(seed in any::<u64>(), shrink in 0.1f64..1.0) {
        let c = small_instance(seed);
        let n = c.w.len();
        let small = c.eps * shrink;
        let s1 = separated_count(&c.s, &c.g, None, &c.w, n, c.eps, true).unwrap();
        let s2 = separated_count(&c.s, &c.g, None, &c.w, n, small, true).unwrap();
        let r1 = exact_spanning_count(&c.s, &c.g, None, &c.w, n, c.eps).unwrap();
        let r2 = exact_spanning_count(&c.s, &c.g, None, &c.w, n, small).unwrap();
        prop_assert!(s2 >= s1 && r2 >= r1);
    }

    #[test]
    fn greedy_counts_grow_as_eps_shrinks_on_monotone_interval(seed in any::<u64>(), shrink in 0.1f64..1.0, eps in 0.02f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_schedule(&mut rng, Space::Interval, |r, _| random_monotone(r));
        let w = random_word(&mut rng, &s, 4);
        let g = Grid::new(Space::Interval, 1.0 / 256.0).unwrap();
        let s1 = separated_count(&s, &g, None, &w, 4, eps, false).unwrap();
        let s2 = separated_count(&s, &g, None, &w, 4, eps * shrink, false).unwrap();
        prop_assert!(s2 >= s1, "{s1} at {eps}, {s2} at {}", eps * shrink);
    }

    #[test]
    fn monotone_counts_obey_linear_bound(seed in any::<u64>(), n in 1usize..8, eps in 0.02f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_schedule(&mut rng, Space::Interval, |r, _| random_monotone(r));
        prop_assert!(s.is_monotone());
        let w = random_word(&mut rng, &s, n);
        let g = Grid::new(Space::Interval, 1.0 / 512.0).unwrap();
        let count = separated_count(&s, &g, None, &w, n, eps, false).unwrap();
        prop_assert!(count <= 1 + (n + 1) * (1.0 / eps).floor() as usize, "{count}");
    }

    #[test]
    fn cover_count_is_subadditive_over_halves(seed in any::<u64>()) {
        let c = small_instance(seed);
        let n = c.w.len();
        let half = c.g.len() / 2;
        let first: Vec<usize> = (0..half).collect();
        let second: Vec<usize> = (half..c.g.len()).collect();
        let whole = exact_cover_count(&c.s, &c.g, None, &c.w, n, c.eps).unwrap();
        let a = exact_cover_count(&c.s, &c.g, Some(&first), &c.w, n, c.eps).unwrap();
        let b = exact_cover_count(&c.s, &c.g, Some(&second), &c.w, n, c.eps).unwrap();
        prop_assert!(whole <= a + b, "{whole} > {a} + {b}");
    }
}

#[test]
fn blocking_at_most_multiplies_the_rate() {
    let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(2), MapSpec::circle(3)]).unwrap();
    let g = Grid::new(Space::Circle, 2f64.powi(-12)).unwrap();
    let eps = [1.0 / 16.0, 1.0 / 32.0];
    let opts = CountOptions {
        spanning: SpanningMode::SeparatedBound,
        ..Default::default()
    };
    let base = entropy_estimate(&averaged_counts(&s, &g, None, &eps, &[2, 3, 4, 5, 6], 4096, 1, opts).unwrap()).unwrap();
    let b = s.blocked(2).unwrap();
    let blocked = entropy_estimate(&averaged_counts(&b, &g, None, &eps, &[1, 2, 3], 4096, 1, opts).unwrap()).unwrap();
    let slack = rate_slack(blocked.uncertainty, 2.0 * base.uncertainty);
    assert!(
        blocked.value <= 2.0 * base.value + slack,
        "blocked {} vs 2 x {}",
        blocked.value,
        base.value
    );
}

#[test]
fn shifted_rates_do_not_decrease() {
    let spec = ScheduleSpec {
        levels: vec![
            vec![MapSpec::Identity {}],
            vec![MapSpec::circle(2)],
            vec![MapSpec::circle(2), MapSpec::circle(3)],
        ],
        tail: Tail::Constant,
    };
    let s = NaifsSchedule::from_spec(Space::Circle, &spec).unwrap();
    let g = Grid::new(Space::Circle, 2f64.powi(-14)).unwrap();
    let opts = CountOptions {
        spanning: SpanningMode::SeparatedBound,
        ..Default::default()
    };
    let a = asymptotic_entropy(&s, &g, &[1.0 / 8.0, 1.0 / 16.0], &[2, 3, 4, 5], &[1, 2, 3], 256, 9, opts).unwrap();
    let rates: Vec<f64> = a.per_shift.iter().map(|r| r.estimate.value).collect();
    assert!(a.monotone, "{:?} {rates:?}", a.violations);
    assert!(a.chaotic);
}

#[test]
fn counts_are_identical_across_pools() {
    let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(2), MapSpec::circle(3)]).unwrap();
    let g = Grid::new(Space::Circle, 2f64.powi(-10)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| averaged_counts(&s, &g, None, &[0.05], &[3, 6, 9], 40, 11, CountOptions::default()).unwrap())
    };
    let one = run(1);
    assert!(one.iter().any(|r| r.sampled));
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&run(3)).unwrap());
}

#[test]
fn contraction_point_probe_is_zero() {
    let s = NaifsSchedule::autonomous(Space::Interval, &[MapSpec::HalfShift { c: 0.0 }]).unwrap();
    let g = Grid::new(Space::Interval, 1.0 / 512.0).unwrap();
    let p = entropy_point_probe(&s, &g, &Point::scalar(0.6), 0.1, &[1.0 / 16.0, 1.0 / 32.0], &[2, 3, 4, 5, 6], 8, 2).unwrap();
    assert!(p.local.value.abs() < 1e-9 && p.global.value.abs() < 1e-9);
}

#[test]
fn doubling_point_probe_matches_global() {
    let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(2)]).unwrap();
    let g = Grid::new(Space::Circle, 2f64.powi(-12)).unwrap();
    let eps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let p = entropy_point_probe(&s, &g, &Point::scalar(0.37), 0.1, &eps, &(2..=9).collect::<Vec<_>>(), 1, 3).unwrap();
    assert!(p.gap <= 0.08);
    assert!((p.local.value - std::f64::consts::LN_2).abs() <= 0.08);
}

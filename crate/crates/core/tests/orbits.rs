use proptest::prelude::*;

use markovline::chain::BandedKernel;
use markovline::maps::{build_random_walk_map, nonlinear_quasi_lift, Bump, MarkovMap};
use markovline::orbits::{cylinder, escape_diagnostics, itinerary, markov_property_test, MarkovTestReport};

fn defect_map() -> MarkovMap {
    build_random_walk_map(&BandedKernel::five_point_defect()).unwrap()
}

fn maps() -> [MarkovMap; 2] {
    [defect_map(), nonlinear_quasi_lift(0.02, Bump::default()).unwrap()]
}

/// Largest deviation over the entries that `reference` tests. The plain maximum is taken over
/// a row set that grows with N, so its ratio is not a scaling statistic.
fn max_deviation_on(r: &MarkovTestReport, reference: &MarkovTestReport) -> f64 {
    r.entries
        .iter()
        .filter(|e| reference.entries.iter().any(|x| (x.from, x.to) == (e.from, e.to)))
        .map(|e| e.deviation.abs())
        .fold(0.0, f64::max)
}

#[test]
fn deviations_shrink_like_inverse_square_root() {
    let map = defect_map();
    let mut ratios: Vec<f64> = (1..=5)
        .map(|seed| {
            let small = markov_property_test(&map, 0, 250_000, 20, seed, 1000).unwrap();
            let large = markov_property_test(&map, 0, 1_000_000, 20, seed, 1000).unwrap();
            max_deviation_on(&small, &small) / max_deviation_on(&large, &small)
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    assert!((1.2..=3.0).contains(&ratios[2]), "ratios {ratios:?}");
}

#[test]
fn escape_follows_the_drift() {
    let drift: Vec<_> = ["0", "0", "0.2", "0.4", "0.4"].iter().map(|s| s.parse().unwrap()).collect();
    let map = build_random_walk_map(&BandedKernel::homogeneous(2, drift).unwrap()).unwrap();
    let r = escape_diagnostics(&map, 0, 4000, 200, 20.0, 3).unwrap();
    assert!(r.escaped_plus > 0.99 && r.escaped_minus == 0.0, "{r:?}");
    let r = escape_diagnostics(&defect_map(), 0, 4000, 400, 20.0, 3).unwrap();
    assert!(r.returned > 0.9, "{r:?}");
    assert!((r.returned + r.escaped_plus + r.escaped_minus - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn itineraries_lie_in_their_cylinders(x0 in -10.0f64..10.0, n in 1usize..9) {
        for map in maps() {
            let it = itinerary(&map, x0, n);
            let part = map.partition();
            let mut x = x0;
            for k in 0..=n {
                let c = cylinder(&map, &it.cells[..=k]).unwrap();
                prop_assert!(c.left - 1e-12 <= x0 && x0 <= c.right + 1e-12, "prefix {:?}: {c:?}", &it.cells[..=k]);
                prop_assert_eq!(part.cell_of(x), it.cells[k]);
                x = map.evaluate(x);
            }
        }
    }

    #[test]
    fn cylinders_are_nested(x0 in -10.0f64..10.0, n in 1usize..9) {
        for map in maps() {
            let it = itinerary(&map, x0, n);
            for k in 1..=n {
                let parent = cylinder(&map, &it.cells[..k]).unwrap();
                let child = cylinder(&map, &it.cells[..=k]).unwrap();
                prop_assert!(parent.left <= child.left + 1e-15 && child.right <= parent.right + 1e-15);
                prop_assert!(child.len() > 0.0);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>()) {
        let map = defect_map();
        let a = markov_property_test(&map, 0, 5000, 5, seed, 100).unwrap();
        let b = markov_property_test(&map, 0, 5000, 5, seed, 100).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }
}

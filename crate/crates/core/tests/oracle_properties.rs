use elimtas::model::HypSet;
use elimtas::oracle::lipschitz_constant;
use elimtas::{grid_oracle, oracle_allocation, worst_case_rate, Allocation, KlTable};
use proptest::prelude::*;

/// Random divergence table with strictly positive off-diagonal entries in some action.
fn table(max_a: usize, max_k: usize) -> impl Strategy<Value = KlTable> {
    (1..=max_a, 2..=max_k).prop_flat_map(|(n_a, k)| {
        prop::collection::vec(0.0f64..2.0, n_a * k * k).prop_map(move |v| {
            KlTable::from_fn(n_a, k, |a, h, g| v[(a * k + h) * k + g] + if a == 0 { 0.01 } else { 0.0 })
                .unwrap()
        })
    })
}

fn normalize(v: &[f64]) -> Allocation {
    let s: f64 = v.iter().sum();
    Allocation::new(v.iter().map(|x| x / s).collect()).unwrap()
}

fn opponents(k: usize, h: usize, mask: u64) -> HypSet {
    let set: HypSet = (0..k).filter(|&g| g != h && mask >> g & 1 == 1).collect();
    if set.is_empty() {
        HypSet::all_except(k, h)
    } else {
        set
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_matches_grid(kl in table(3, 4), h in 0usize..4, mask in any::<u64>()) {
        let k = kl.num_hypotheses();
        let h = h % k;
        let set: HypSet = opponents(k, h, mask).iter().take(3).collect();
        let lp = oracle_allocation(&kl, h, set).unwrap();
        let grid = grid_oracle(&kl, h, set, 0.001).unwrap();
        let l = lipschitz_constant(&kl, h, set);
        prop_assert!((lp.rate - grid.rate).abs() <= 0.001 * l + 1e-9, "lp {} grid {}", lp.rate, grid.rate);
        prop_assert!(lp.rate >= grid.rate - 1e-9);
        let achieved = worst_case_rate(&kl, h, set, &lp.allocation).unwrap();
        prop_assert!((achieved - lp.rate).abs() <= 1e-8);
    }

    #[test]
    fn smaller_set_has_larger_rate(kl in table(4, 6), h in 0usize..6, outer in any::<u64>(), inner in any::<u64>()) {
        let k = kl.num_hypotheses();
        let h = h % k;
        let s = opponents(k, h, outer);
        let sub: HypSet = s.iter().filter(|&g| inner >> g & 1 == 1).collect();
        let sub = if sub.is_empty() { HypSet::from_indices([s.iter().next().unwrap()]) } else { sub };
        prop_assert!(sub.is_subset(s));
        let big = oracle_allocation(&kl, h, s).unwrap().rate;
        let small = oracle_allocation(&kl, h, sub).unwrap().rate;
        prop_assert!(small >= big - 1e-9, "{small} < {big}");
    }

    #[test]
    fn rate_is_concave(
        kl in table(4, 6),
        h in 0usize..6,
        mask in any::<u64>(),
        raw_w in prop::collection::vec(0.001f64..1.0, 4),
        raw_v in prop::collection::vec(0.001f64..1.0, 4),
    ) {
        let k = kl.num_hypotheses();
        let h = h % k;
        let set = opponents(k, h, mask);
        let n = kl.num_actions();
        let w = normalize(&raw_w[..n]);
        let v = normalize(&raw_v[..n]);
        let mid = Allocation::new(w.weights().iter().zip(v.weights()).map(|(a, b)| (a + b) / 2.0).collect()).unwrap();
        let f = |x: &Allocation| worst_case_rate(&kl, h, set, x).unwrap();
        prop_assert!(f(&mid) >= (f(&w) + f(&v)) / 2.0 - 1e-12);

        let l = lipschitz_constant(&kl, h, set);
        let dist: f64 = w.weights().iter().zip(v.weights()).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!((f(&w) - f(&v)).abs() <= l * dist + 1e-12);
    }

    #[test]
    fn allocation_on_simplex(kl in table(5, 8), h in 0usize..8, mask in any::<u64>()) {
        let k = kl.num_hypotheses();
        let h = h % k;
        let sol = oracle_allocation(&kl, h, opponents(k, h, mask)).unwrap();
        let w = sol.allocation.weights();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn two_action_example() {
    // d(h, g1) = (1, 0), d(h, g2) = (0, 1): equal split, rate 0.5
    let kl = KlTable::from_fn(2, 3, |a, h, g| match (h, g) {
        (0, 1) => if a == 0 { 1.0 } else { 0.0 },
        (0, 2) => if a == 1 { 1.0 } else { 0.0 },
        _ => 0.5,
    })
    .unwrap();
    let sol = oracle_allocation(&kl, 0, HypSet::all_except(3, 0)).unwrap();
    assert!((sol.rate - 0.5).abs() < 1e-12);
    assert!((grid_oracle(&kl, 0, HypSet::all_except(3, 0), 0.001).unwrap().rate - 0.5).abs() < 1e-3);
}

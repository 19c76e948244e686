use dpsyn_core::accountant::{epsilon_to_rho, rho_to_epsilon, BudgetLedger};
use dpsyn_core::dataset::{AttributeSpec, Dataset, Domain};
use dpsyn_core::marginal::{compute_marginal, consistency_gap, make_consistent, Clique, Marginal, Provenance};
use dpsyn_core::metrics::{fidelity_tvd, query_error, QueryWorkload};
use dpsyn_core::preprocess::{uniform_bin_fit, MergeMap};
use dpsyn_core::rng::seeded;
use dpsyn_core::selection::privsyn_select;
use dpsyn_core::synth::{build_junction_tree, gum_synthesize, GumConfig};
use dpsyn_core::theory::{conditional_estimate, kl_divergence, JointDistribution};
use proptest::prelude::*;

fn domain(sizes: &[usize]) -> Domain {
    Domain::new(
        sizes
            .iter()
            .enumerate()
            .map(|(j, &s)| AttributeSpec::categorical(&format!("a{j}"), (0..s).map(|v| v.to_string())))
            .collect(),
    )
    .unwrap()
}

/// Random dataset over small categorical attributes.
fn dataset_strategy(d: std::ops::RangeInclusive<usize>, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Dataset> {
    (prop::collection::vec(2usize..5, d), n).prop_flat_map(|(sizes, n)| {
        let cols: Vec<_> = sizes.iter().map(|&s| prop::collection::vec(0u32..s as u32, n)).collect();
        (Just(sizes), cols).prop_map(|(sizes, cols)| Dataset::from_codes(domain(&sizes), cols).unwrap())
    })
}

fn same_shape(sizes: Vec<usize>, n: usize) -> impl Strategy<Value = Dataset> {
    let cols: Vec<_> = sizes.iter().map(|&s| prop::collection::vec(0u32..s as u32, n)).collect();
    cols.prop_map(move |cols| Dataset::from_codes(domain(&sizes), cols).unwrap())
}

fn triple() -> impl Strategy<Value = (Dataset, Dataset, Dataset)> {
    (prop::collection::vec(2usize..4, 2..=3), 1usize..40, 1usize..40, 1usize..40)
        .prop_flat_map(|(s, a, b, c)| (same_shape(s.clone(), a), same_shape(s.clone(), b), same_shape(s, c)))
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_rho_round_trip(rho in 1e-4f64..100.0, use_small in any::<bool>()) {
        let delta = if use_small { 1e-8 } else { 1e-5 };
        let eps = rho_to_epsilon(rho, delta).unwrap();
        let back = epsilon_to_rho(eps, delta).unwrap();
        let again = rho_to_epsilon(back, delta).unwrap();
        prop_assert!(again <= eps && again >= eps * (1.0 - 1e-9));
        prop_assert!((back - rho).abs() <= 1e-8 * rho);
        prop_assert!(rho_to_epsilon(rho * 1.01, delta).unwrap() > eps);
    }

    #[test]
    fn ledger_never_overdraws(costs in prop::collection::vec(0.0f64..0.3, 1..20)) {
        let mut ledger = BudgetLedger::new(1.0).unwrap();
        for (k, c) in costs.iter().enumerate() {
            let before = ledger.rho_spent();
            match ledger.spend(*c, format!("s{k}")) {
                Ok(()) => prop_assert!((ledger.rho_spent() - before - c).abs() < 1e-15),
                Err(_) => prop_assert_eq!(ledger.rho_spent(), before),
            }
            prop_assert!(ledger.rho_spent() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn kl_is_gibbs(p in distribution(5), q in distribution(5)) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn conditional_estimate_normalized(probs in distribution(2 * 3 * 2), cond_on_third in any::<bool>()) {
        let joint = JointDistribution::new(vec![2, 3, 2], probs).unwrap();
        let cond: Vec<usize> = if cond_on_third { vec![2] } else { vec![] };
        let est = conditional_estimate(&joint, 0, 1, &cond).unwrap();
        prop_assert!((est.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(est.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tvd_is_a_bounded_metric((a, b, c) in triple()) {
        let ab = fidelity_tvd(&a, &b).unwrap().mean;
        let ba = fidelity_tvd(&b, &a).unwrap().mean;
        let ac = fidelity_tvd(&a, &c).unwrap().mean;
        let bc = fidelity_tvd(&b, &c).unwrap().mean;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(fidelity_tvd(&a, &a).unwrap().mean, 0.0);
    }

    #[test]
    fn query_error_bounded(ds in dataset_strategy(3..=4, 1..=60), seed in any::<u64>()) {
        let wl = QueryWorkload::generate(ds.domain(), 3, 50, seed).unwrap();
        prop_assert_eq!(query_error(&ds, &ds, &wl).unwrap(), 0.0);
        let other = ds.select_rows(&[0]);
        let qe = query_error(&ds, &other, &wl).unwrap();
        prop_assert!((0.0..=1.0).contains(&qe));
    }

    #[test]
    fn make_consistent_agrees_on_overlaps(ds in dataset_strategy(3..=3, 20..=80), noise in prop::collection::vec(-5.0f64..5.0, 32)) {
        let dom = ds.domain().clone();
        let noisy: Vec<Marginal> = [[0usize, 1], [1, 2]]
            .iter()
            .enumerate()
            .map(|(k, attrs)| {
                let exact = compute_marginal(&ds, &Clique::new(attrs, &dom).unwrap()).unwrap();
                let counts = exact.counts.iter().enumerate().map(|(c, x)| x + noise[(k * 16 + c) % 32]).collect();
                Marginal::new(exact.clique.clone(), counts, Provenance::Noisy { sigma: 3.0 }).unwrap()
            })
            .collect();
        let target = ds.n() as f64;
        let out = make_consistent(&noisy, target);
        for m in &out {
            prop_assert!(m.counts.iter().all(|&c| c >= 0.0));
            prop_assert!((m.total() - target).abs() <= 1e-6 * target.max(1.0));
        }
        prop_assert!(consistency_gap(&out) <= 1e-6 * target.max(1.0) + 1e-9);
    }

    #[test]
    fn gum_updates_monotone(counts in prop::collection::vec(0.0f64..50.0, 6), seed in any::<u64>()) {
        let dom = domain(&[2, 3]);
        let t = Marginal::new(Clique::new(&[0, 1], &dom).unwrap(), counts, Provenance::Noisy { sigma: 1.0 }).unwrap();
        let n = t.total().round().max(1.0) as usize;
        let out = gum_synthesize(&[t], &dom, n, &GumConfig::default(), &mut seeded(seed)).unwrap();
        prop_assert_eq!(out.update_violations, 0);
        prop_assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn merge_threshold_dominance(counts in prop::collection::vec(-10.0f64..500.0, 2..30), theta in 0.0f64..0.1, sigma in 0.1f64..20.0) {
        let map = MergeMap::from_noisy_counts("x", counts.clone(), theta, sigma);
        prop_assert!(map.compact_size() >= 1);
        for (i, &c) in counts.iter().enumerate() {
            if map.merged_codes.contains(&(i as u32)) {
                prop_assert!(c < map.threshold);
            } else if c < map.threshold {
                // only the largest count survives when everything is below threshold
                prop_assert_eq!(map.merged_codes.len() + 1, counts.len());
            }
            prop_assert!((map.remap[i] as usize) < map.compact_size());
        }
    }

    #[test]
    fn uniform_bins_are_monotone(xs in prop::collection::vec(-5.0f64..15.0, 2..50), bins in 1usize..200) {
        let spec = uniform_bin_fit("x", (0.0, 10.0), bins).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let codes: Vec<usize> = sorted.iter().map(|&x| spec.bin_of(x)).collect();
        prop_assert!(codes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(codes.iter().all(|&c| c < bins));
        for b in 0..bins {
            prop_assert_eq!(spec.bin_of(spec.midpoint(b)), b);
        }
    }

    #[test]
    fn junction_trees_have_running_intersection(pairs in prop::collection::vec((0usize..6, 1usize..6), 1..10)) {
        let sizes = [2usize; 6];
        let cliques: Vec<Clique> = pairs
            .iter()
            .map(|&(a, step)| Clique::from_sizes(&[a, (a + step) % 6], &sizes).unwrap())
            .collect();
        let tree = build_junction_tree(&cliques, 1 << 20).unwrap();
        prop_assert!(tree.has_running_intersection());
        for c in &cliques {
            prop_assert!(c.attrs().iter().all(|a| tree.attributes().contains(a)));
        }
    }

    #[test]
    fn privsyn_spends_exactly_its_budget(ds in dataset_strategy(3..=4, 30..=100), seed in any::<u64>()) {
        let mut ledger = BudgetLedger::new(1.0).unwrap();
        let plan = privsyn_select(&ds, 0.2, 0.5, &mut ledger, &mut seeded(seed)).unwrap();
        prop_assert!((ledger.rho_spent() - plan.rho_total()).abs() <= 1e-12);
        prop_assert!(ledger.rho_spent() <= 0.7 + 1e-12);
        prop_assert!(plan.entries.len() >= ds.d());
    }
}

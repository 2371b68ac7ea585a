use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthsim_core::evaluator::{histogram, mean_absolute_error, PairRow, PairScoreTable, Score};
use synthsim_core::generator::{mutate_selection, select_initial};
use synthsim_core::model::{
    ground_truth_similarity, label_union, stub_source_for, ArchiveRef, ComponentSpec, Label, LabelSet,
};

fn label_set() -> impl Strategy<Value = BTreeSet<(u8, u8)>> {
    prop::collection::btree_set((0u8..3, 0u8..12), 1..10)
}

fn to_labels(set: &BTreeSet<(u8, u8)>) -> LabelSet {
    set.iter()
        .map(|(l, f)| Label::new(format!("lib{l}"), format!("f{f}")).unwrap())
        .collect()
}

/// One component per library present in `set`, seeded by its first function.
fn components(set: &BTreeSet<(u8, u8)>, tag: &str) -> Vec<ComponentSpec> {
    let mut by_lib: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
    for &(l, f) in set {
        by_lib.entry(l).or_default().push(f);
    }
    by_lib
        .into_iter()
        .map(|(l, fs)| {
            let lib = format!("lib{l}");
            let labels = fs.iter().map(|f| Label::new(&lib, format!("f{f}")).unwrap()).collect();
            let seed = format!("f{}", fs[0]);
            ComponentSpec::new(
                format!("{lib}.{seed}.{tag}"),
                &lib,
                &seed,
                &seed,
                labels,
                stub_source_for(&seed),
                ArchiveRef::from_bytes(lib.as_bytes()),
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn jaccard_is_symmetric_and_bounded(a in label_set(), b in label_set()) {
        let (la, lb) = (to_labels(&a), to_labels(&b));
        let ab = ground_truth_similarity(&la, &lb).unwrap();
        prop_assert_eq!(ab, ground_truth_similarity(&lb, &la).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
        prop_assert_eq!(ab == 0.0, a.is_disjoint(&b));
    }

    #[test]
    fn union_ignores_order_and_grows_with_the_list(sets in prop::collection::vec(label_set(), 1..5), rot in 0usize..5) {
        let comps: Vec<ComponentSpec> = sets.iter().enumerate().flat_map(|(i, s)| components(s, &i.to_string())).collect();
        let whole = label_union(comps.iter()).unwrap();
        let mut rotated = comps.clone();
        rotated.rotate_left(rot % comps.len());
        prop_assert_eq!(&label_union(rotated.iter()).unwrap(), &whole);
        for k in 1..=comps.len() {
            prop_assert!(label_union(comps[..k].iter()).unwrap().is_subset(&whole));
        }
    }

    #[test]
    fn shared_component_never_shrinks_intersection_or_union(a in label_set(), b in label_set(), c in label_set()) {
        let (ca, cb, cc) = (components(&a, "a"), components(&b, "b"), components(&c, "c"));
        let la = label_union(ca.iter()).unwrap();
        let lb = label_union(cb.iter()).unwrap();
        let la2 = label_union(ca.iter().chain(&cc)).unwrap();
        let lb2 = label_union(cb.iter().chain(&cc)).unwrap();
        prop_assert!(la2.intersection_len(&lb2) >= la.intersection_len(&lb));
        prop_assert!(la2.union_len(&lb2) >= la.union_len(&lb));
    }

    #[test]
    fn mutation_keeps_libraries_distinct(
        sizes in prop::collection::vec(1usize..6, 1..10),
        n_frac in 0.0f64..=1.0,
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let n = ((sizes.len() as f64 * n_frac).ceil() as usize).clamp(1, sizes.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cur = select_initial(&sizes, n, &mut rng).unwrap();
        for _ in 0..20 {
            let next = mutate_selection(&cur, &sizes, p, &mut rng).unwrap();
            prop_assert_eq!(next.len(), n);
            let libs: BTreeSet<usize> = next.iter().map(|q| q.library).collect();
            prop_assert_eq!(libs.len(), n);
            prop_assert!(next.iter().all(|q| q.component < sizes[q.library]));
            let shared = cur.iter().zip(&next).filter(|(x, y)| x == y).count();
            prop_assert!(shared + ((n as f64 * p) + 1e-9).floor() as usize >= n);
            cur = next;
        }
    }

    #[test]
    fn mae_is_order_free_and_bounded(rows in prop::collection::vec((0.0f64..=1.0, prop::option::of(0.0f64..=1.0)), 1..40), shift in 0usize..40) {
        prop_assume!(rows.iter().any(|(_, s)| s.is_some()));
        let build = |rows: &[(f64, Option<f64>)]| PairScoreTable {
            columns: vec!["m".into()],
            rows: rows.iter().enumerate().map(|(i, (g, s))| PairRow {
                id_a: format!("a{i}"),
                id_b: format!("b{i}"),
                ground_truth: *g,
                scores: [("m".to_owned(), s.map_or(Score::Error, Score::Value))].into(),
            }).collect(),
        };
        let mae = mean_absolute_error(&build(&rows), "m").unwrap();
        prop_assert!((0.0..=1.0).contains(&mae));
        let mut rotated = rows.clone();
        rotated.rotate_left(shift % rows.len());
        let again = mean_absolute_error(&build(&rotated), "m").unwrap();
        prop_assert!((mae - again).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything(values in prop::collection::vec(0.0f64..=1.0, 0..100), bins in 1usize..20) {
        let h = histogram(&values, bins).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), values.len());
        for v in &values {
            let hits = h.iter().enumerate().filter(|(i, b)| {
                b.low <= *v && (*v < b.high || (*i == bins - 1 && *v <= b.high))
            }).count();
            prop_assert_eq!(hits, 1);
        }
    }
}

use std::collections::BTreeSet;

use dlgan_core::label::{LabelKind, LabelSampling, LabelSchema, LabelVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schema(sizes: &[usize]) -> LabelSchema {
    LabelSchema::new(
        sizes.iter().enumerate().map(|(g, &k)| (format!("g{g}"), (0..k).map(|v| format!("v{v}")).collect::<Vec<_>>())),
    )
    .unwrap()
}

fn sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=4, 1..=4)
}

/// A schema plus one partial and one complete index assignment for it.
fn case() -> impl Strategy<Value = (Vec<usize>, Vec<Option<usize>>, Vec<usize>)> {
    sizes().prop_flat_map(|s| {
        let partial: Vec<_> = s.iter().map(|&k| prop::option::of(0..k)).collect();
        let full: Vec<_> = s.iter().map(|&k| 0..k).collect();
        (Just(s), partial, full)
    })
}

fn complete(s: &LabelSchema, idx: &[usize]) -> LabelVector {
    s.from_indices(&idx.iter().map(|&i| Some(i)).collect::<Vec<_>>()).unwrap()
}

#[test]
fn shapes_schema_counts_exhaustively() {
    let s = LabelSchema::synthetic_shapes();
    let random = s.enumerate(LabelKind::Random, None).unwrap();
    assert_eq!(random.len(), 36);
    assert_eq!(random.iter().map(|v| v.to_string()).collect::<BTreeSet<_>>().len(), 36);
    let complete: Vec<_> = random.iter().filter(|v| s.is_complete(v).unwrap()).collect();
    assert_eq!(complete.len(), 12);
    for gt in complete {
        let matching = s.enumerate(LabelKind::Matching, Some(gt)).unwrap();
        assert_eq!(matching.len(), 8);
        assert_eq!(matching.iter().map(|v| v.to_string()).collect::<BTreeSet<_>>().len(), 8);
        assert!(matching.iter().all(|y| s.is_matching(y, gt).unwrap()));
        let matching_in_random = random.iter().filter(|y| s.is_matching(y, gt).unwrap()).count();
        assert_eq!(matching_in_random, 8);
        for y in &random {
            let filled = s.fill(y, gt).unwrap();
            assert!(s.is_complete(&filled).unwrap());
            assert_eq!(s.decode(&filled).unwrap(), s.decode(&s.fill(&filled, gt).unwrap()).unwrap());
        }
    }
    for y in &random {
        assert_eq!(&s.encode(&s.decode(y).unwrap()).unwrap(), y);
        assert_eq!(&s.parse_bits(&y.to_string()).unwrap(), y);
    }
}

proptest! {
    #[test]
    fn encode_decode_round_trip((sz, partial, _) in case()) {
        let s = schema(&sz);
        let v = s.from_indices(&partial).unwrap();
        prop_assert_eq!(s.group_values(&v).unwrap(), partial.clone());
        prop_assert_eq!(s.encode(&s.decode(&v).unwrap()).unwrap(), v.clone());
        prop_assert_eq!(s.parse_bits(&v.to_string()).unwrap(), v.clone());
        prop_assert_eq!(v.len(), sz.iter().sum::<usize>());
        let ones = v.bits().iter().filter(|b| **b == 1).count();
        prop_assert_eq!(ones, partial.iter().flatten().count());
    }

    #[test]
    fn fill_laws((sz, partial, full) in case()) {
        let s = schema(&sz);
        let a = s.from_indices(&partial).unwrap();
        let gt = complete(&s, &full);
        let f = s.fill(&a, &gt).unwrap();
        prop_assert!(s.is_complete(&f).unwrap());
        prop_assert_eq!(s.fill(&s.empty(), &gt).unwrap(), gt.clone());
        prop_assert_eq!(s.fill(&gt, &f).unwrap(), gt.clone());
        prop_assert_eq!(s.fill(&f, &gt).unwrap(), f.clone());
        for (g, v) in s.group_values(&f).unwrap().iter().enumerate() {
            prop_assert_eq!(*v, Some(partial[g].unwrap_or(full[g])));
        }
        prop_assert_eq!(s.is_matching(&a, &gt).unwrap(), f == gt);
    }

    #[test]
    fn enumeration_counts(sz in sizes()) {
        let s = schema(&sz);
        let random = s.enumerate(LabelKind::Random, None).unwrap();
        prop_assert_eq!(random.len(), sz.iter().map(|k| k + 1).product::<usize>());
        prop_assert_eq!(random.iter().map(|v| v.to_string()).collect::<BTreeSet<_>>().len(), random.len());
        let gt = complete(&s, &vec![0; sz.len()]);
        let matching = s.enumerate(LabelKind::Matching, Some(&gt)).unwrap();
        prop_assert_eq!(matching.len(), 1usize << sz.len());
        prop_assert!(matching.iter().all(|y| s.is_matching(y, &gt).unwrap()));
        let filled = s.enumerate(LabelKind::Filled, Some(&gt)).unwrap();
        let distinct: BTreeSet<_> = filled.iter().map(|v| v.to_string()).collect();
        prop_assert_eq!(distinct.len(), sz.iter().product::<usize>());
    }

    #[test]
    fn sampled_labels_are_well_formed((sz, _, full) in case(), seed in any::<u64>(), keep in 0.0f64..=1.0) {
        let s = schema(&sz);
        let gt = complete(&s, &full);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = LabelSampling { keep_probability: keep, ..Default::default() };
        for _ in 0..8 {
            let m = s.sample_matching(&gt, &policy, &mut rng).unwrap();
            prop_assert!(s.is_matching(&m, &gt).unwrap());
            let r = s.sample_random(&policy, &mut rng);
            prop_assert_eq!(s.parse_bits(&r.to_string()).unwrap(), r);
        }
    }
}

//! Property tests for the corpus, triage and preprocessing laws.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use synthbench_core::corpus::{
    balanced_sample, split_train_test, ImageRecord, Manifest, Modality, Provenance, SourceKind,
    Split,
};
use synthbench_core::grid::{PixelGrid, RangeTag};
use synthbench_core::preprocess::tile_count;
use synthbench_core::triage::{average_hash, hamming};

fn record_strategy(idx: usize) -> impl Strategy<Value = ImageRecord> {
    (
        prop_oneof![Just(Modality::Xray), Just(Modality::Histology)],
        1u32..2000,
        1u32..2000,
        prop_oneof![Just(1u8), Just(3u8)],
        prop_oneof![Just("A"), Just("B"), Just("C")],
        prop_oneof![Just(Split::Train), Just(Split::Test)],
        any::<bool>(),
    )
        .prop_map(move |(modality, w, h, channels, class, split, synthetic)| {
            let mut labels = BTreeMap::new();
            labels.insert("class".to_string(), class.to_string());
            ImageRecord {
                id: format!("r{idx:04}"),
                path: format!("img/r{idx:04}.png"),
                modality,
                width: w,
                height: h,
                channels,
                labels,
                split,
                source_kind: if synthetic { SourceKind::Synthetic } else { SourceKind::Real },
                provenance: synthetic.then(|| Provenance {
                    model_id: "m".into(),
                    checkpoint_id: "s8_e000".into(),
                }),
            }
        })
}

fn manifest_strategy() -> impl Strategy<Value = Manifest> {
    (0usize..24)
        .prop_flat_map(|n| {
            let records: Vec<_> = (0..n).map(record_strategy).collect();
            records
        })
        .prop_map(|records| Manifest::new(records).expect("generated records are valid"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_line_json_round_trips(manifest in manifest_strategy()) {
        let text = manifest.to_line_json();
        let back = Manifest::from_line_json(&text).unwrap();
        prop_assert_eq!(&manifest, &back);
    }

    #[test]
    fn balanced_sample_histogram_is_uniform(
        per_class in 1usize..30,
        extra_a in 0usize..20,
        seed in any::<u64>(),
    ) {
        // Two classes, A has extras; request the satisfiable maximum.
        let mut records = Vec::new();
        for i in 0..per_class + extra_a {
            let mut labels = BTreeMap::new();
            labels.insert("class".to_string(), "A".to_string());
            records.push(ImageRecord {
                id: format!("a{i:03}"), path: String::new(), modality: Modality::Xray,
                width: 8, height: 8, channels: 1, labels, split: Split::Train,
                source_kind: SourceKind::Real, provenance: None,
            });
        }
        for i in 0..per_class {
            let mut labels = BTreeMap::new();
            labels.insert("class".to_string(), "B".to_string());
            records.push(ImageRecord {
                id: format!("b{i:03}"), path: String::new(), modality: Modality::Xray,
                width: 8, height: 8, channels: 1, labels, split: Split::Train,
                source_kind: SourceKind::Real, provenance: None,
            });
        }
        let manifest = Manifest::new(records).unwrap();
        let ids = balanced_sample(&manifest, &["class".to_string()], 2 * per_class, seed).unwrap();
        let a = ids.iter().filter(|i| i.starts_with('a')).count();
        let b = ids.iter().filter(|i| i.starts_with('b')).count();
        prop_assert_eq!(a, per_class);
        prop_assert_eq!(b, per_class);
        let uniq: BTreeSet<_> = ids.iter().collect();
        prop_assert_eq!(uniq.len(), ids.len());
    }

    #[test]
    fn split_is_always_a_partition(
        n in 2usize..60,
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let records: Vec<ImageRecord> = (0..n).map(|i| ImageRecord {
            id: format!("r{i:03}"), path: String::new(), modality: Modality::Xray,
            width: 8, height: 8, channels: 1, labels: BTreeMap::new(), split: Split::Train,
            source_kind: SourceKind::Real, provenance: None,
        }).collect();
        let manifest = Manifest::new(records).unwrap();
        let (train, test) = split_train_test(&manifest, fraction, &[], seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        let all: BTreeSet<_> = train.iter().chain(test.iter()).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert!(!train.is_empty() && !test.is_empty());
        // Within one record of the requested share.
        prop_assert!((test.len() as f64 - fraction * n as f64).abs() <= 1.0);
    }

    #[test]
    fn hamming_is_a_metric_on_random_signatures(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = synthbench_core::rng::rng_from_seed(seed);
        let mut img = || {
            PixelGrid::from_fn(24, 24, RangeTag::Unit, |_, _| rng.gen::<f32>()).unwrap()
        };
        let a = average_hash(&img(), 16).unwrap();
        let b = average_hash(&img(), 16).unwrap();
        let c = average_hash(&img(), 16).unwrap();
        prop_assert_eq!(hamming(&a, &a).unwrap(), 0);
        prop_assert_eq!(hamming(&a, &b).unwrap(), hamming(&b, &a).unwrap());
        let ab = hamming(&a, &b).unwrap();
        let bc = hamming(&b, &c).unwrap();
        let ac = hamming(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc, "triangle violated: {} > {} + {}", ac, ab, bc);
    }

    #[test]
    fn tile_count_law_matches_enumeration(
        h in 1usize..600,
        w in 1usize..600,
        tile in 1usize..300,
        stride in 1usize..300,
    ) {
        let expected = if h < tile || w < tile {
            0
        } else {
            ((h - tile) / stride + 1) * ((w - tile) / stride + 1)
        };
        prop_assert_eq!(tile_count(h, w, tile, stride), expected);
    }
}

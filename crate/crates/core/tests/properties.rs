use std::sync::OnceLock;

use proptest::prelude::*;

use deeponet_maze::bench::build_dataset;
use deeponet_maze::config::ExperimentConfig;
use deeponet_maze::dataset::format::{decode_dataset, encode_dataset};
use deeponet_maze::dataset::{split_functions, subsample_points, subset_size, DatasetFile, SUBSET_MENU};
use deeponet_maze::transport::TallyGrid;

fn dataset() -> &'static DatasetFile {
    static DS: OnceLock<DatasetFile> = OnceLock::new();
    DS.get_or_init(|| {
        let mut cfg = ExperimentConfig::desk();
        cfg.corpus.functions = 23;
        cfg.tally = TallyGrid::with_cells(7, 5);
        cfg.transport.particles_per_batch = 100;
        cfg.transport.batches = 2;
        build_dataset(&cfg).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_functions(seed in any::<u64>()) {
        let corpus = &dataset().corpus;
        let s = split_functions(corpus, seed).unwrap();
        prop_assert_eq!(s.test.len(), corpus.len() * 2 / 10);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..corpus.len()).collect::<Vec<_>>());
        prop_assert_eq!(split_functions(corpus, seed).unwrap(), s);
    }

    #[test]
    fn subsets_have_exact_size_and_ignore_view_order(seed in any::<u64>(), f in 0usize..5, rot in 0usize..23) {
        let corpus = &dataset().corpus;
        let fraction = SUBSET_MENU[f];
        let cells = corpus.tally_grid.cells();
        let view: Vec<usize> = (0..corpus.len()).collect();
        let mut rotated = view.clone();
        rotated.rotate_left(rot);
        let a = subsample_points(corpus, &view, fraction, seed).unwrap();
        let b = subsample_points(corpus, &rotated, fraction, seed).unwrap();
        for (i, idx) in a.indices.iter().enumerate() {
            prop_assert_eq!(idx.len(), subset_size(fraction, cells));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&k| k < cells));
            let j = rotated.iter().position(|&p| p == view[i]).unwrap();
            prop_assert_eq!(idx, &b.indices[j]);
        }
    }

    #[test]
    fn target_transform_inverts(flux in 1e-6f64..1e6) {
        let norm = dataset().norm.as_ref().unwrap();
        let back = norm.inverse_target(norm.transform_target(flux));
        prop_assert!((back - flux).abs() <= 1e-9 * flux);
    }

    #[test]
    fn any_corrupted_byte_is_rejected(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = encode_dataset(dataset());
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode_dataset(&bytes).is_err());
    }
}

#[test]
fn fractions_outside_the_menu_are_rejected() {
    let corpus = &dataset().corpus;
    for f in [0.0, 0.45, 0.55, 1.0] {
        assert!(subsample_points(corpus, &[0], f, 1).is_err());
    }
}

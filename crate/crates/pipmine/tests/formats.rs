use std::path::Path;

use pipmine::formats;
use pipmine::pipmine_core::bandit::DesignMatrixDiag;
use pipmine::pipmine_core::claims::{DrugCombination, HistoricalDataset, MiningSample};
use pipmine::pipmine_core::miner::{Snapshot, TraceRow};
use pipmine::pipmine_core::neuralnet::Mlp;
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = HistoricalDataset> {
    (1usize..40).prop_flat_map(|dim| {
        let combo = btree_set(0..dim as u32, 0..dim.min(8));
        let rr = prop_oneof![
            0.0..10.0f64,
            Just(0.0),
            Just(1.1),
            (0u32..1000).prop_map(|k| k as f64 / 7.0)
        ];
        btree_set(combo, 0..30).prop_flat_map(move |combos| {
            let n = combos.len();
            (Just(combos), vec(rr.clone(), n)).prop_map(move |(combos, rrs)| {
                let entries = combos
                    .into_iter()
                    .zip(rrs)
                    .map(|(c, r)| (DrugCombination::new(dim, c.into_iter().collect()).unwrap(), r))
                    .collect();
                HistoricalDataset::new(dim, entries).unwrap()
            })
        })
    })
}

proptest! {
    #[test]
    fn dataset_round_trips(data in dataset_strategy()) {
        let text = formats::render_dataset(&data);
        let back = formats::parse_dataset(Path::new("mem"), &text).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn snapshot_round_trips(
        dims in vec(1usize..6, 2..4),
        seed in any::<u64>(),
        step in 0usize..100_000,
        lambda in 0.01f64..10.0,
    ) {
        let mut dims = dims;
        dims.push(1);
        let m = Mlp::zeros(&dims).unwrap().param_count();
        let theta: Vec<f64> = (0..m).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 - 500.0) / 97.0).collect();
        let diag: Vec<f64> = (0..m).map(|i| lambda + i as f64 * 0.5).collect();
        let snap = Snapshot {
            step,
            network: Mlp::from_parameters(&dims, theta).unwrap(),
            design: DesignMatrixDiag::from_parts(diag, lambda).unwrap(),
        };
        let back = formats::decode_snapshot(&formats::encode_snapshot(&snap)).unwrap();
        prop_assert_eq!(back, snap);
    }
}

#[test]
fn samples_trace_and_ensemble_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = |d: &[u32]| DrugCombination::new(6, d.to_vec()).unwrap();
    let samples = vec![
        MiningSample {
            combination: c(&[1, 2]),
            observed_reward: -0.25,
        },
        MiningSample {
            combination: c(&[1, 2]),
            observed_reward: 1.0 / 3.0,
        },
        MiningSample {
            combination: c(&[]),
            observed_reward: 2.5,
        },
    ];
    let path = dir.path().join("s.txt");
    formats::write_atomic(&path, formats::render_samples(6, &samples).as_bytes()).unwrap();
    assert_eq!(formats::read_samples(&path).unwrap(), samples);

    let trace = vec![TraceRow {
        step: 1,
        recommended: c(&[0, 5]),
        played: c(&[0]),
        reward: 0.1,
    }];
    let path = dir.path().join("t.csv");
    formats::write_atomic(&path, formats::render_trace(&trace).unwrap().as_bytes()).unwrap();
    assert_eq!(formats::read_trace(&path, 6).unwrap(), trace);

    let member = |step| Snapshot {
        step,
        network: Mlp::zeros(&[6, 2, 1]).unwrap(),
        design: DesignMatrixDiag::new(17, 1.0).unwrap(),
    };
    let members = vec![member(5), member(15), member(100)];
    formats::write_ensemble(&dir.path().join("ens"), &members).unwrap();
    assert_eq!(formats::read_ensemble(&dir.path().join("ens")).unwrap(), members);
}

#[test]
fn atomic_write_replaces_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/out.txt");
    formats::write_atomic(&path, b"first version, longer").unwrap();
    formats::write_atomic(&path, b"second").unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
    let leftovers = std::fs::read_dir(path.parent().unwrap()).unwrap().count();
    assert_eq!(leftovers, 1);
}

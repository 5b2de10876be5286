use std::path::PathBuf;

use lmte_core::lmt::Task;
use lmte_eval::datasets::{bundled, load_dataset, task_of, write_bundled, BUNDLED_IDS};
use lmte_eval::Error;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn bundled_datasets_have_expected_shape() {
    for id in BUNDLED_IDS {
        let d = bundled(id).unwrap();
        assert_eq!(d.features.n_rows(), 500);
        assert_eq!(d.target.len(), 500);
        if d.task == Task::Classification {
            let pos = d.target.iter().filter(|&&v| v == 1.0).count();
            assert!(d.target.iter().all(|&v| v == 0.0 || v == 1.0));
            assert!((100..=400).contains(&pos), "{id}: {pos} positives");
        }
    }
    assert_eq!(task_of("friedman").unwrap(), Task::Regression);
    assert!(matches!(bundled("iris"), Err(Error::UnknownDataset(..))));
}

#[test]
fn generators_are_pure() {
    for id in BUNDLED_IDS {
        assert_eq!(bundled(id).unwrap(), bundled(id).unwrap());
    }
}

#[test]
fn written_copies_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_bundled(dir.path()).unwrap();
    for id in BUNDLED_IDS {
        let d = bundled(id).unwrap();
        let back = load_dataset(dir.path(), id, d.task).unwrap();
        assert_eq!(back.features.schema, d.features.schema);
        assert_eq!(back.target, d.target);
        assert_eq!(back.features.cells, d.features.cells);
    }
}

#[test]
fn checked_in_data_matches_the_generators() {
    let dir = tempfile::tempdir().unwrap();
    write_bundled(dir.path()).unwrap();
    for id in BUNDLED_IDS {
        for name in [format!("{id}.csv"), format!("{id}.schema.json")] {
            let fresh = std::fs::read(dir.path().join(&name)).unwrap();
            let stored = std::fs::read(data_dir().join(&name)).unwrap_or_else(|e| panic!("data/{name}: {e}"));
            assert!(fresh == stored, "data/{name} differs from its generator");
        }
    }
}

use proptest::prelude::*;

use ran_core::affinity::{assign_all_neighbors, SparseAffinity};
use ran_core::dataset::{
    gen_three_rings, load_csv, read_csv, save_csv, write_csv, DataMatrix, LabeledDataset,
};

fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
    (2usize..12, 1usize..5).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-1e6f64..1e6, n * d),
            prop::collection::vec(-5i64..5, n),
        )
            .prop_map(move |(values, labels)| {
                LabeledDataset::new(DataMatrix::new(n, d, values).unwrap(), labels).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(ds in dataset_strategy()) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), Some(ds.data.d())).unwrap();
        prop_assert_eq!(back, ds);
    }
}

#[test]
fn save_and_load_through_a_file() {
    let ds = gen_three_rings(10, [1.0, 2.0, 3.0], 0.05, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rings.csv");
    save_csv(&ds, &path).unwrap();
    assert_eq!(load_csv(&path, Some(2)).unwrap(), ds);
}

#[test]
fn missing_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_csv(dir.path().join("absent.csv"), None).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn affinity_triplets_round_trip() {
    let ds = gen_three_rings(8, [1.0, 2.0, 3.0], 0.05, 1).unwrap();
    let (s, _) = assign_all_neighbors(&ds.data, None, 0.0, 3).unwrap();
    let mut buf = Vec::new();
    s.write_triplets(&mut buf).unwrap();
    let back = SparseAffinity::read_triplets(buf.as_slice(), s.n(), s.k()).unwrap();
    assert_eq!(back, s);
}

use milpf::embedset::{
    read_dataset, synth_dataset, write_dataset, SynthConfig, GEOMS_FILE, GLOBAL_FILE, MANIFEST_FILE, TILES_FILE,
};
use milpf::Error;
use proptest::prelude::*;

fn config() -> impl Strategy<Value = SynthConfig> {
    (2usize..30, 2usize..9, 1usize..4, 0usize..6, any::<u64>()).prop_map(|(n, d, v, t, seed)| SynthConfig {
        n_bags: n,
        dim: d,
        views_per_bag: (1, v),
        tiles_per_view: (t, t + 3),
        signal_tiles_per_positive: (t.min(1), t.min(1)),
        bags_per_patient: 1 + (seed % 3) as usize,
        positive_rate: 0.5,
        tile_size: 8,
        seed,
        ..SynthConfig::default()
    })
}

fn files(dir: &std::path::Path) -> Vec<Vec<u8>> {
    [MANIFEST_FILE, GLOBAL_FILE, TILES_FILE, GEOMS_FILE]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn read_inverts_write(cfg in config()) {
        let Ok(ds) = synth_dataset(&cfg) else { return Ok(()) };
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_dataset(&ds, &a).unwrap();
        let back = read_dataset(&a).unwrap();
        prop_assert_eq!(&back, &ds);
        write_dataset(&back, &b).unwrap();
        prop_assert_eq!(files(&a), files(&b));
    }
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let cfg = SynthConfig {
        n_bags: 50,
        dim: 5,
        tiles_per_view: (3, 9),
        seed: 42,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&synth_dataset(&cfg).unwrap(), &dir.path().join("x")).unwrap();
    write_dataset(&synth_dataset(&cfg).unwrap(), &dir.path().join("y")).unwrap();
    assert_eq!(files(&dir.path().join("x")), files(&dir.path().join("y")));
}

#[test]
fn truncated_tile_payload_is_rejected() {
    let cfg = SynthConfig {
        n_bags: 10,
        dim: 4,
        tiles_per_view: (3, 5),
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&synth_dataset(&cfg).unwrap(), dir.path()).unwrap();
    let path = dir.path().join(TILES_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(Error::PayloadSize { .. })));
}

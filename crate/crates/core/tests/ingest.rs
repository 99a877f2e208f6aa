use std::path::PathBuf;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use reftraj_core::ingest::{filter_sites, load_dataset, read_embeddings, read_sites, FilterRules};
use reftraj_core::rng::rng_from;
use reftraj_core::synthetic::{generate_world, write_world, SynthConfig};
use reftraj_core::{EmbeddingVector, IngestOptions, InputPaths, Strategy};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/funnel")
}

#[test]
fn funnel_fixture_keeps_four_sites() {
    let (ds, report) = load_dataset(&InputPaths::in_dir(fixture()), &IngestOptions::default()).unwrap();
    assert_eq!(ds.sites.len(), 10);
    assert!(report.sites_without_embeddings.is_empty());
    // Only 2017, 2018 and 2024 rows are present, all inside the window.
    assert_eq!(report.out_of_window_rows, 0);
    assert_eq!(ds.sites[9].strategy, Strategy::NotIdentified);
    assert_eq!(ds.sites[7].start_lulc, None);

    let (kept, funnel) = filter_sites(ds.sites, &FilterRules::default());
    assert_eq!(funnel.input, 10);
    assert_eq!(funnel.dropped_area, 3);
    assert_eq!(funnel.dropped_start_year, 3);
    assert_eq!(funnel.kept, 4);
    let ids: Vec<&str> = kept.iter().map(|s| s.site_id.as_str()).collect();
    assert_eq!(ids, ["s06", "s07", "s08", "s10"]);

    let (again, second) = filter_sites(kept.clone(), &FilterRules::default());
    assert_eq!(again, kept);
    assert_eq!(second.dropped_area + second.dropped_start_year, 0);
}

fn shuffled_lines(text: &str, seed: u64) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.shuffle(&mut rng_from(seed));
    let mut out = String::from(header);
    out.push('\n');
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}

#[test]
fn synthetic_world_round_trips_through_csv() {
    let config = SynthConfig {
        seed: 3,
        points_per_class: 4,
        changing_per_transition: 2,
        n_sites: 12,
        ..Default::default()
    };
    let world = generate_world(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_world(&world, dir.path()).unwrap();
    let (ds, report) = load_dataset(&InputPaths::in_dir(dir.path()), &IngestOptions::default()).unwrap();
    assert_eq!(report.unmapped_codes.len(), 0);
    assert_eq!(ds.sites, world.dataset.sites);
    assert_eq!(ds.references, world.dataset.references);
    assert_eq!(ds.dim, 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loading_ignores_row_order(seed in 0u64..1000) {
        let config = SynthConfig {
            seed: 11,
            n_classes: 2,
            points_per_class: 2,
            changing_per_transition: 0,
            n_sites: 6,
            ..Default::default()
        };
        let world = generate_world(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_world(&world, dir.path()).unwrap();
        let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
        let opts = IngestOptions::default();

        let load = |emb: &str, sites: &str| {
            let table = read_embeddings(emb.as_bytes()).unwrap();
            read_sites(sites.as_bytes(), &table, None, None, &opts).unwrap().0
        };
        let a = load(&read("embeddings.csv"), &read("sites.csv"));
        let b = load(
            &shuffled_lines(&read("embeddings.csv"), seed),
            &shuffled_lines(&read("sites.csv"), seed + 1),
        );
        prop_assert_eq!(a, b);
    }

    #[test]
    fn embedding_serde_round_trip(values in prop::collection::vec(-1e6f64..1e6, 64)) {
        let e = EmbeddingVector::new(values, 64).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: EmbeddingVector = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, e);
    }
}

#[test]
fn serde_rejects_malformed_vectors() {
    assert_eq!(serde_json::from_str::<EmbeddingVector>("[1.0, 2.0]").unwrap().dim(), 2);
    assert!(serde_json::from_str::<EmbeddingVector>("[1.0, null]").is_err());
}

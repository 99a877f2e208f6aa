use std::collections::BTreeMap;

use reftraj_core::reference::{classify_stability, StabilityRules};
use reftraj_core::synthetic::{generate_world, oracle_similarity, write_world, Mislabel, SynthConfig, TruthKind, World};
use reftraj_core::trajectory::{build_trajectories, TrajectoryKind};
use reftraj_core::{
    build_reference_set, cosine_similarity, reference::classify_points, LulcClass, ReferenceYearPolicy, Stability, Strategy,
};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        points_per_class: 20,
        changing_per_transition: 5,
        n_sites: 40,
        mislabels: vec![Mislabel {
            true_class: LulcClass::Urban,
            labeled_as: LulcClass::ForestFormation,
            count: 3,
        }],
        ..Default::default()
    }
}

#[test]
fn same_seed_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = write_world(&generate_world(&small(3)).unwrap(), a.path()).unwrap();
    let fb = write_world(&generate_world(&small(3)).unwrap(), b.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
    let other = generate_world(&small(4)).unwrap();
    let first = generate_world(&small(3)).unwrap();
    assert_ne!(other.dataset.sites, first.dataset.sites);
}

#[test]
fn stability_recovers_truth_without_noise() {
    let world = generate_world(&SynthConfig { noise_sigma: 0.0, ..small(7) }).unwrap();
    let rules = StabilityRules::default();
    let mut checked = 0;
    for p in &world.dataset.references {
        let row = world.truth.get(&p.point_id).unwrap();
        let got = classify_stability(&p.lulc_series, &rules).unwrap();
        let want = match row.kind {
            TruthKind::Stable => Stability::Stable(row.true_class.unwrap()),
            TruthKind::Changing => Stability::changing(row.from.unwrap(), row.to.unwrap()).unwrap(),
            // Labels say one class; the embedding belongs to another.
            TruthKind::Mislabeled => Stability::Stable(LulcClass::ForestFormation),
            TruthKind::Site => unreachable!(),
        };
        assert_eq!(got, want, "{}", p.point_id);
        checked += 1;
    }
    assert_eq!(checked, 10 * 20 + 5 * 5 + 3);
}

fn linear_recovery() -> SynthConfig {
    SynthConfig {
        seed: 19,
        points_per_class: 10,
        changing_per_transition: 0,
        n_sites: 30,
        noise_sigma: 0.0,
        years: (2017, 2025),
        start_years: (2017, 2017),
        initial_progress_max: 0.0,
        recovery_rate_by_strategy: Strategy::ALL.iter().map(|&s| (s, 0.125)).collect(),
        ..Default::default()
    }
}

#[test]
fn full_recovery_reaches_the_secondary_centroid() {
    let mut world = generate_world(&linear_recovery()).unwrap();
    let sf = world.centroids[&LulcClass::SecondaryForest].clone();
    for s in &world.dataset.sites {
        assert_eq!(s.embeddings[&2025], sf, "{}", s.site_id);
        assert_eq!(s.embeddings[&2017], world.centroids[&LulcClass::Pasture]);
    }
    classify_points(&mut world.dataset.references, &StabilityRules::default()).unwrap();
    let refset = build_reference_set(&world.dataset.references, ReferenceYearPolicy::default()).unwrap();
    let trajs = build_trajectories(&world.dataset.sites, &refset, TrajectoryKind::Global).unwrap();
    for t in &trajs {
        assert!((t.at_delta(8).unwrap() - 1.0).abs() < 1e-12);
        let sims: Vec<f64> = t.samples.iter().map(|s| s.similarity).collect();
        for w in sims.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{}: {sims:?}", t.site_id);
        }
        for s in &t.samples {
            let expected = world.expected_similarity(&t.site_id, s.year).unwrap();
            assert!((s.similarity - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn noisy_group_means_are_nearly_monotone() {
    let config = SynthConfig {
        seed: 31,
        points_per_class: 20,
        changing_per_transition: 0,
        n_sites: 400,
        start_years: (2017, 2017),
        ..Default::default()
    };
    let mut world = generate_world(&config).unwrap();
    classify_points(&mut world.dataset.references, &StabilityRules::default()).unwrap();
    let refset = build_reference_set(&world.dataset.references, ReferenceYearPolicy::default()).unwrap();
    let trajs = build_trajectories(&world.dataset.sites, &refset, TrajectoryKind::Global).unwrap();

    let mut groups: BTreeMap<(Strategy, i32), (f64, usize)> = BTreeMap::new();
    for (site, t) in world.dataset.sites.iter().zip(&trajs) {
        for s in &t.samples {
            let e = groups.entry((site.strategy, s.delta_t)).or_default();
            e.0 += s.similarity;
            e.1 += 1;
        }
    }
    for strategy in Strategy::ALL {
        let means: Vec<f64> = groups
            .range((strategy, i32::MIN)..=(strategy, i32::MAX))
            .map(|(_, (sum, n))| sum / *n as f64)
            .collect();
        for w in means.windows(2) {
            assert!(w[1] >= w[0] - 0.01, "{strategy:?}: {means:?}");
        }
    }
}

#[test]
fn oracle_agrees_with_cosine() {
    let world = generate_world(&small(5)).unwrap();
    let vectors: Vec<_> = world
        .dataset
        .sites
        .iter()
        .flat_map(|s| s.embeddings.values())
        .chain(world.dataset.references.iter().flat_map(|p| p.embeddings.values()))
        .collect();
    let mut n = 0;
    for (i, a) in vectors.iter().enumerate() {
        let b = vectors[(i * 7 + 13) % vectors.len()];
        let s = cosine_similarity(a, b).unwrap();
        let o = oracle_similarity(a.as_slice(), b.as_slice()).unwrap();
        assert!((s - o).abs() < 1e-12);
        n += 1;
        if n == 1000 {
            break;
        }
    }
    assert_eq!(n, 1000);
}

#[test]
fn expected_similarity_tracks_progress() {
    let world = generate_world(&small(2)).unwrap();
    let row = world.truth.of_kind(TruthKind::Site).next().unwrap();
    let start = row.start_year.unwrap();
    let mut last = f64::NEG_INFINITY;
    for y in start..=2024 {
        let e = world.expected_similarity(&row.id, y).unwrap();
        assert!(e >= last - 1e-12);
        last = e;
        assert!(World::site_progress(row, y) <= 1.0);
    }
}

//! Shared inputs for the benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;
use reftraj_core::reference::{classify_points, StabilityRules};
use reftraj_core::rng::rng_from;
use reftraj_core::synthetic::{generate_world, SynthConfig};
use reftraj_core::{build_reference_set, EmbeddingVector, ReferenceSet, ReferenceYearPolicy, SiteRecord};

pub fn random_embeddings(seed: u64, n: usize, dim: usize) -> Vec<EmbeddingVector> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let v = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            EmbeddingVector::new(v, dim).unwrap()
        })
        .collect()
}

/// Sites and a classified reference set from a default-sized world.
pub fn world(seed: u64, n_sites: usize) -> (Vec<SiteRecord>, ReferenceSet) {
    let config = SynthConfig {
        seed,
        n_sites,
        points_per_class: 100,
        changing_per_transition: 0,
        ..SynthConfig::default()
    };
    let mut w = generate_world(&config).unwrap();
    classify_points(&mut w.dataset.references, &StabilityRules::default()).unwrap();
    let refset = build_reference_set(&w.dataset.references, ReferenceYearPolicy::default()).unwrap();
    (w.dataset.sites, refset)
}

/// Two-class XOR layout in the first two columns plus noise columns.
pub fn xor_design(seed: u64, n: usize, extra: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let mut row = vec![a, b];
        row.extend((0..extra).map(|_| rng.sample::<f64, _>(StandardNormal)));
        x.push(row);
        y.push(usize::from((a > 0.0) != (b > 0.0)));
    }
    (x, y)
}

pub fn random_points(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| [rng.random_range(-53.0..-44.0), rng.random_range(-25.0..-19.8)])
        .collect()
}

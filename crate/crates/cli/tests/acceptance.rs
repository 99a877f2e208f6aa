//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use reftraj_core::prediction::metrics::accuracy;
use reftraj_core::prediction::{
    evaluate, kmeans, make_targets, spatial_kfold, train_forest_classifier, train_linear, train_logistic, EvalConfig,
    FeatureSet, ForestParams, KMeansParams, LogisticParams, Metric, ModelKind, Task,
};
use reftraj_core::projection::{fit_projection, silhouette_score};
use reftraj_core::reference::{classify_points, classify_stability, detect_outliers, OutlierMetric, StabilityRules};
use reftraj_core::rng::rng_from;
use reftraj_core::synthetic::{generate_world, Mislabel, SynthConfig, TruthKind};
use reftraj_core::trajectory::{
    aggregate_trajectories, build_trajectories, classify_embedding_series, compute_baselines, GroupBy, TrajectoryKind,
};
use reftraj_core::{
    build_reference_set, cosine_similarity, EmbeddingVector, LulcClass, ReferenceSet, ReferenceYearPolicy, SiteRecord,
    Stability,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn ev(v: Vec<f64>) -> EmbeddingVector {
    let d = v.len();
    EmbeddingVector::new(v, d).unwrap()
}

fn classified_refset(world: &mut reftraj_core::synthetic::World) -> ReferenceSet {
    classify_points(&mut world.dataset.references, &StabilityRules::default()).unwrap();
    build_reference_set(&world.dataset.references, ReferenceYearPolicy::default()).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = gaussian_vec(&mut rng, 64);
        let b = gaussian_vec(&mut rng, 64);
        let oracle = naive_cosine(&a, &b);
        let got = cosine_similarity(&ev(a), &ev(b)).unwrap();
        worst = worst.max((got - oracle).abs());
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-12 && t < Duration::from_secs(1),
        format!("max abs diff {worst:.2e} over 1000 pairs in {t:.2?}"),
    )
}

/// Scans the stable window and both change windows directly.
fn stability_oracle(series: &[LulcClass; 10]) -> Stability {
    // Index 0 is 2015; the change windows are 2017-2020 and 2021-2024.
    if series.iter().all(|c| *c == series[0]) {
        return Stability::Stable(series[0]);
    }
    let before = &series[2..6];
    let after = &series[6..10];
    let uniform = |w: &[LulcClass]| w.iter().all(|c| *c == w[0]);
    if uniform(before) && uniform(after) && before[0] != after[0] {
        Stability::Changing {
            from: before[0],
            to: after[0],
        }
    } else {
        Stability::Neither
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let classes = [LulcClass::Pasture, LulcClass::SecondaryForest, LulcClass::Urban];
    let rules = StabilityRules::default();
    let mut mismatches = 0;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for code in 0..3usize.pow(10) {
        let mut series = [LulcClass::Pasture; 10];
        let mut rest = code;
        for slot in series.iter_mut() {
            *slot = classes[rest % 3];
            rest /= 3;
        }
        let map: BTreeMap<i32, LulcClass> = (2015..).zip(series).collect();
        let got = classify_stability(&map, &rules).unwrap();
        let want = stability_oracle(&series);
        if got != want {
            mismatches += 1;
        }
        *counts.entry(got.kind()).or_default() += 1;
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(10),
        format!("{mismatches} mismatches over 59049 series {counts:?} in {t:.2?}"),
    )
}

fn recovery_world() -> SynthConfig {
    SynthConfig {
        seed: 3,
        points_per_class: 200,
        changing_per_transition: 0,
        n_sites: 200,
        noise_sigma: 0.05,
        years: (2017, 2024),
        start_years: (2017, 2017),
        ..SynthConfig::default()
    }
}

fn criterion_3_and_4() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut world = generate_world(&recovery_world()).unwrap();
    let refset = classified_refset(&mut world);
    let sites = &world.dataset.sites;
    let trajs = build_trajectories(sites, &refset, TrajectoryKind::Global).unwrap();
    let improved = trajs.iter().filter(|t| t.improvement > 0.0).count();
    let share = improved as f64 / trajs.len() as f64;
    // One group: every site starts in 2017.
    let curve = aggregate_trajectories(sites, &trajs, GroupBy::StartYear);
    let worst_drop = curve
        .windows(2)
        .map(|w| w[0].mean - w[1].mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let t = start.elapsed();
    let c3 = outcome(
        trajs.len() == 200 && share >= 0.95 && worst_drop <= 0.01 && curve.len() == 8 && t < Duration::from_secs(30),
        format!(
            "{improved}/{} improved, {} curve points, largest step down {worst_drop:.4}, {t:.2?}",
            trajs.len(),
            curve.len()
        ),
    );
    let band = compute_baselines(&world.dataset.references, &refset).unwrap();
    let gap = band.upper - band.lower;
    let c4 = outcome(
        gap >= 0.2,
        format!("upper {:.4}, lower {:.4}, gap {gap:.4}", band.upper, band.lower),
    );
    (c3, c4)
}

fn criterion_5() -> Outcome {
    let mut precisions = Vec::new();
    for seed in 0..20u64 {
        let config = SynthConfig {
            seed: 500 + seed,
            points_per_class: 1000,
            changing_per_transition: 0,
            n_sites: 10,
            noise_sigma: 0.05,
            mislabels: vec![
                Mislabel {
                    true_class: LulcClass::Urban,
                    labeled_as: LulcClass::ForestFormation,
                    count: 4,
                },
                Mislabel {
                    true_class: LulcClass::Pasture,
                    labeled_as: LulcClass::ForestFormation,
                    count: 3,
                },
                Mislabel {
                    true_class: LulcClass::SugarCane,
                    labeled_as: LulcClass::ForestFormation,
                    count: 3,
                },
            ],
            ..SynthConfig::default()
        };
        let mut world = generate_world(&config).unwrap();
        let refset = classified_refset(&mut world);
        let report = detect_outliers(
            &world.dataset.references,
            LulcClass::ForestFormation,
            &refset,
            10,
            OutlierMetric::Cosine,
        )
        .unwrap();
        let hits = report
            .ranked
            .iter()
            .filter(|(id, _)| world.truth.get(id).map(|r| r.kind) == Some(TruthKind::Mislabeled))
            .count();
        precisions.push(hits as f64 / 10.0);
    }
    let mean = precisions.iter().sum::<f64>() / precisions.len() as f64;
    let min = precisions.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        mean >= 0.9,
        format!("precision@10 mean {mean:.3}, min {min:.3} over 20 seeds"),
    )
}

fn criterion_6() -> Outcome {
    let config = SynthConfig {
        seed: 6,
        points_per_class: 200,
        changing_per_transition: 40,
        n_sites: 10,
        noise_sigma: 0.05,
        ..SynthConfig::default()
    };
    let mut world = generate_world(&config).unwrap();
    let refset = classified_refset(&mut world);
    let mut total = 0;
    let mut correct = 0;
    let mut detected_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &world.dataset.references {
        let Some(row) = world.truth.get(&p.point_id) else { continue };
        if row.kind != TruthKind::Changing {
            continue;
        }
        total += 1;
        let traj = classify_embedding_series(&p.point_id, &p.embeddings, &refset).unwrap();
        *detected_counts.entry(traj.transitions.len()).or_default() += 1;
        if let [only] = traj.transitions.as_slice() {
            let truth = row.transition_year.unwrap();
            if (only.year - truth).abs() <= 1 && only.from == row.from.unwrap() && only.to == row.to.unwrap() {
                correct += 1;
            }
        }
    }
    let share = correct as f64 / total as f64;
    outcome(
        total == 200 && share >= 0.9,
        format!("{correct}/{total} with one transition within 1 year; transition counts {detected_counts:?}"),
    )
}

fn blob_points(seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for b in 0..5 {
        let angle = 2.0 * std::f64::consts::PI * b as f64 / 5.0;
        for _ in 0..40 {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            pts.push([angle.cos() + 0.01 * dx, angle.sin() + 0.01 * dy]);
            truth.push(b);
        }
    }
    (pts, truth)
}

fn criterion_7() -> Outcome {
    let mut increases = 0;
    for seed in 0..100u64 {
        let mut rng = rng_from(7000 + seed);
        let n = rng.random_range(20..300);
        let k = rng.random_range(2..9);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-50.0..-40.0), rng.random_range(-25.0..-19.0)])
            .collect();
        let r = kmeans(&pts, &KMeansParams::new(k, seed)).unwrap();
        increases += r.objective_history.windows(2).filter(|w| w[1] > w[0]).count();
    }

    let (pts, truth) = blob_points(77);
    let sites: Vec<SiteRecord> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| SiteRecord {
            site_id: format!("site_{i:03}"),
            centroid_lon: -47.0 + p[0],
            centroid_lat: -22.0 + p[1],
            area_ha: 1.0,
            start_year: 2020,
            strategy: reftraj_core::Strategy::NotIdentified,
            start_lulc: None,
            embeddings: BTreeMap::new(),
            spectral: BTreeMap::new(),
            covariates: BTreeMap::new(),
        })
        .collect();
    let a = spatial_kfold(&sites, 5, 42).unwrap();
    let b = spatial_kfold(&sites, 5, 42).unwrap();
    let reproducible = a == b;
    // Each fold must hold exactly one blob.
    let mut blob_of_fold: BTreeMap<usize, std::collections::BTreeSet<usize>> = BTreeMap::new();
    for (s, t) in sites.iter().zip(&truth) {
        blob_of_fold.entry(a.fold_of(&s.site_id).unwrap()).or_default().insert(*t);
    }
    let pure = blob_of_fold.len() == 5 && blob_of_fold.values().all(|b| b.len() == 1);
    outcome(
        increases == 0 && reproducible && pure,
        format!("{increases} objective increases over 100 datasets, reproducible {reproducible}, blob purity {pure}"),
    )
}

fn labeled_blobs(seed: u64, centers: &[(f64, f64, usize)], n: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &(cx, cy, label) in centers {
        for _ in 0..n {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            x.push(vec![cx + sigma * dx, cy + sigma * dy]);
            y.push(label);
        }
    }
    (x, y)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let (x, y) = labeled_blobs(81, &[(-2.0, -2.0, 0), (2.0, 2.0, 1), (2.0, -2.0, 2)], 150, 0.5);
    let logistic = train_logistic(&x, &y, &LogisticParams::default()).unwrap();
    let pred: Vec<usize> = x.iter().map(|r| logistic.predict(r)).collect();
    let train_acc = accuracy(&y, &pred);

    let xor = [(0.0, 0.0, 0), (1.0, 1.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1)];
    let (xtr, ytr) = labeled_blobs(82, &xor, 100, 0.15);
    let (xte, yte) = labeled_blobs(83, &xor, 100, 0.15);
    let forest = train_forest_classifier(
        &xtr,
        &ytr,
        &ForestParams {
            n_trees: 100,
            seed: 8,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let pred: Vec<usize> = xte.iter().map(|r| forest.predict_class(r)).collect();
    let xor_acc = accuracy(&yte, &pred);

    let lx: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 3.0 - 5.0]).collect();
    let ly: Vec<f64> = lx.iter().map(|r| 2.0 * r[0] + 1.0).collect();
    let ridge = train_linear(&lx, &ly, 1e-9).unwrap();
    let coef_err = (ridge.weights[0] - 2.0).abs().max((ridge.intercept - 1.0).abs());
    let t = start.elapsed();
    outcome(
        train_acc >= 0.99 && xor_acc >= 0.9 && coef_err < 1e-6 && t < Duration::from_secs(60),
        format!(
            "logistic train accuracy {train_acc:.3}, forest XOR accuracy {xor_acc:.3}, ridge coefficient error {coef_err:.1e}, {t:.2?}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let config = SynthConfig {
        seed: 9,
        points_per_class: 50,
        changing_per_transition: 0,
        n_sites: 1000,
        ..SynthConfig::default()
    };
    let mut world = generate_world(&config).unwrap();
    let refset = classified_refset(&mut world);
    let sites = &world.dataset.sites;
    let folds = spatial_kfold(sites, 5, 9).unwrap();

    let similarity = make_targets(sites, &refset, Task::FutureSimilarity, 3, 0).unwrap();
    let reg = EvalConfig {
        models: vec![ModelKind::Linear],
        feature_sets: vec![FeatureSet::Embeddings, FeatureSet::Covariates],
        ..EvalConfig::for_task(Task::FutureSimilarity, 9)
    };
    let r = evaluate(sites, &similarity, &folds, &reg).unwrap();
    let emb_r2 = r[0].mean_of(Metric::R2).unwrap();
    let cov_r2 = r[1].mean_of(Metric::R2).unwrap();

    // Strategy labels reassigned at random, so nothing observable at the
    // feature year carries information about them.
    let mut shuffled = sites.clone();
    let mut labels: Vec<_> = shuffled.iter().map(|s| s.strategy).collect();
    labels.shuffle(&mut rng_from(99));
    for (s, l) in shuffled.iter_mut().zip(labels) {
        s.strategy = l;
    }
    let strategy = make_targets(&shuffled, &refset, Task::Strategy, 3, 0).unwrap();
    let clf = EvalConfig {
        feature_sets: vec![FeatureSet::Embeddings, FeatureSet::CovariatesSpectral],
        ..EvalConfig::for_task(Task::Strategy, 9)
    };
    let c = evaluate(&shuffled, &strategy, &folds, &clf).unwrap();
    let f1 = |model: ModelKind, set: FeatureSet| {
        c.iter()
            .find(|r| r.model == model && r.feature_set == set)
            .and_then(|r| r.mean_of(Metric::MacroF1))
            .unwrap()
    };
    let mut margins = Vec::new();
    for model in ModelKind::defaults_for(Task::Strategy) {
        margins.push((model, f1(model, FeatureSet::Embeddings) - f1(model, FeatureSet::CovariatesSpectral)));
    }
    let worst_margin = margins.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        emb_r2 - cov_r2 >= 0.1 && worst_margin <= 0.05,
        format!(
            "similarity R2 embeddings {emb_r2:.3} vs covariates {cov_r2:.3}; strategy macro-F1 margins (embeddings minus covariates+spectral) {}",
            margins
                .iter()
                .map(|(m, d)| format!("{m} {d:+.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = rng_from(10);
    let mut worst_ortho: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..10 {
        let data: Vec<EmbeddingVector> = (0..200)
            .map(|_| ev((0..32).map(|j| rng.sample::<f64, _>(StandardNormal) / (1.0 + j as f64)).collect()))
            .collect();
        let m = fit_projection(&data).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let [a, b] = &m.components;
        worst_ortho = worst_ortho
            .max((dot(a, a) - 1.0).abs())
            .max((dot(b, b) - 1.0).abs())
            .max(dot(a, b).abs());
        ordered &= m.explained_variance[0] >= m.explained_variance[1];
    }
    let mut c1 = vec![0.0; 64];
    let mut c2 = vec![0.0; 64];
    c1[0] = 1.0;
    c2[1] = 1.0;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in [&c1, &c2].into_iter().enumerate() {
        for _ in 0..100 {
            data.push(ev(c.iter().map(|x| x + 0.02 * rng.sample::<f64, _>(StandardNormal)).collect()));
            labels.push(label);
        }
    }
    let sil = silhouette_score(&data, &labels).unwrap();
    outcome(
        worst_ortho < 1e-8 && ordered && sil > 0.9,
        format!("orthonormality error {worst_ortho:.1e}, variances ordered {ordered}, silhouette {sil:.3}"),
    )
}

fn run_pipeline(root: &Path, seed: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let bin = env!("CARGO_BIN_EXE_reftraj");
    let world = root.join("world");
    let steps: [(&str, &[&str]); 5] = [
        ("world", &["synth"]),
        ("references", &["references"]),
        ("trajectories", &["trajectories", "--aggregate", "strategy"]),
        ("project", &["project"]),
        ("predict", &["predict"]),
    ];
    for (dir, args) in steps {
        let out_dir = root.join(dir);
        let mut cmd = Command::new(bin);
        cmd.args(["--seed", seed, "--output-dir"]).arg(&out_dir);
        if dir != "world" {
            cmd.arg("--input-dir").arg(&world);
        }
        let out = cmd.args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{dir}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let mut files = BTreeMap::new();
    for (dir, _) in steps {
        for entry in std::fs::read_dir(root.join(dir)).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let name = format!("{dir}/{}", path.file_name().unwrap().to_string_lossy());
            let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            if name.contains("manifest_") {
                // Manifests name the run's own directories; compare their checksums only.
                let m: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
                bytes = serde_json::to_vec(&(&m["config_hash"], &m["artifacts"], &m["inputs"].as_array().map(|a| {
                    a.iter().map(|i| i["sha256"].clone()).collect::<Vec<_>>()
                })))
                .unwrap();
            }
            files.insert(name, bytes);
        }
    }
    Ok(files)
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path(), "7");
    let elapsed_first = start.elapsed();
    let second = run_pipeline(b.path(), "7");
    match (first, second) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&String> = x.keys().filter(|k| x.get(*k) != y.get(*k)).collect();
            let same_set = x.keys().eq(y.keys());
            outcome(
                same_set && differing.is_empty() && elapsed_first < Duration::from_secs(300),
                format!(
                    "{} files compared, {} differ, one pipeline run {elapsed_first:.2?}",
                    x.len(),
                    differing.len()
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("pipeline failed: {e}")),
    }
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    results.push((1, criterion_1()));
    results.push((2, criterion_2()));
    let (c3, c4) = criterion_3_and_4();
    results.push((3, c3));
    results.push((4, c4));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));
    results.push((11, criterion_11()));

    let mut failed = 0;
    for (n, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {verdict} ({})", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

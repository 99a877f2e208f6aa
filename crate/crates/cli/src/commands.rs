use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};

use reftraj_core::ingest::{embedding_column, filter_sites, FilterReport};
use reftraj_core::prediction::{evaluate, make_targets, spatial_kfold, EvalConfig, FoldAssignment};
use reftraj_core::projection::{fit_projection, silhouette_score, trajectory_paths_2d};
use reftraj_core::reference::{classify_points, detect_outliers, StabilityRules};
use reftraj_core::synthetic::{generate_world, write_world};
use reftraj_core::trajectory::{
    aggregate_trajectories, build_trajectories, classify_trajectory, compute_baselines, spectral_trajectory,
};
use reftraj_core::{
    build_reference_set, load_dataset, Dataset, IngestOptions, IngestReport, InputPaths, LulcClass, ReferenceSet,
    Stability, Strategy,
};

use crate::config::RunConfig;
use crate::manifest::Outputs;
use crate::CliError;

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Loaded {
    paths: InputPaths,
    dataset: Dataset,
    report: IngestReport,
    funnel: FilterReport,
}

impl Loaded {
    fn inputs(&self) -> Vec<&Path> {
        self.paths.all()
    }
}

/// Reads every input table and applies the site filters.
fn load(config: &RunConfig) -> Result<Loaded, CliError> {
    let paths = config.input_paths()?;
    let opts = IngestOptions {
        window: config.window()?,
        lulc_years: config.lulc_window()?,
        ..IngestOptions::default()
    };
    let (mut dataset, report) = load_dataset(&paths, &opts)?;
    let (kept, funnel) = filter_sites(std::mem::take(&mut dataset.sites), &config.filter_rules());
    dataset.sites = kept;
    info!(
        "loaded {} sites ({} kept) and {} reference points",
        funnel.input,
        funnel.kept,
        dataset.references.len()
    );
    Ok(Loaded {
        paths,
        dataset,
        report,
        funnel,
    })
}

/// Classifies reference points and builds the reference set.
fn references_of(config: &RunConfig, loaded: &mut Loaded) -> Result<ReferenceSet, CliError> {
    classify_points(&mut loaded.dataset.references, &StabilityRules::default())?;
    Ok(build_reference_set(&loaded.dataset.references, config.policy()?)?)
}

pub fn validate(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let mut out = Outputs::new(&config.output_dir)?;
    let f = &loaded.funnel;
    let stages = [
        ("without_embeddings", loaded.report.sites_without_embeddings.len()),
        ("input", f.input),
        ("dropped_area", f.dropped_area),
        ("dropped_start_year", f.dropped_start_year),
        ("kept", f.kept),
    ];
    out.csv(
        "funnel.csv",
        &["stage", "count"],
        stages.iter().map(|(s, n)| vec![s.to_string(), n.to_string()]),
    )?;
    out.json("ingest_report.json", &loaded.report)?;
    for (stage, n) in stages {
        println!("{stage}\t{n}");
    }
    println!("reference_points\t{}", loaded.dataset.references.len());
    out.commit("validate", config, &loaded.inputs())?;
    Ok(())
}

/// Which parts of the `references` command to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReferenceAction {
    Classify,
    Build,
    Outliers,
    All,
}

pub fn references(config: &RunConfig, action: ReferenceAction) -> Result<(), CliError> {
    let mut loaded = load(config)?;
    let refset = references_of(config, &mut loaded)?;
    let mut out = Outputs::new(&config.output_dir)?;
    let points = &loaded.dataset.references;
    let all = action == ReferenceAction::All;

    if all || action == ReferenceAction::Classify {
        out.csv(
            "reference_classes.csv",
            &["point_id", "stability", "class_from", "class_to"],
            points.iter().map(|p| {
                let s = p.stability.unwrap_or(Stability::Neither);
                let (from, to) = match s {
                    Stability::Stable(c) => (c.to_string(), String::new()),
                    Stability::Changing { from, to } => (from.to_string(), to.to_string()),
                    Stability::Neither => (String::new(), String::new()),
                };
                vec![p.point_id.clone(), s.kind().to_string(), from, to]
            }),
        )?;
    }

    if all || action == ReferenceAction::Build {
        let dim = refset.dim();
        let mut header = vec!["year".to_string(), "class".into(), "members".into()];
        header.extend((0..dim).map(embedding_column));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        for year in refset.years().collect::<Vec<_>>() {
            for (class, c) in refset.centroids_at(year).into_iter().flatten() {
                let mut row = vec![year.to_string(), class.to_string(), c.members.to_string()];
                row.extend(c.vector.as_slice().iter().map(|&x| num(x)));
                rows.push(row);
            }
        }
        out.csv("reference_centroids.csv", &header, rows)?;
    }

    if all || action == ReferenceAction::Outliers {
        let metric = config.metric()?;
        let mut classes = config.outlier_classes()?;
        if classes.is_empty() {
            classes = refset
                .centroids_at(refset.anchor_year())
                .map(|m| m.keys().copied().collect())
                .unwrap_or_default();
        }
        let mut rows = Vec::new();
        for class in classes {
            let report = detect_outliers(points, class, &refset, config.top_k, metric)?;
            for (rank, (id, d)) in report.ranked.iter().enumerate() {
                rows.push(vec![class.to_string(), (rank + 1).to_string(), id.clone(), num(*d)]);
            }
        }
        out.csv("outliers.csv", &["class", "rank", "point_id", "distance"], rows)?;
    }

    out.commit("references", config, &loaded.inputs())?;
    Ok(())
}

pub fn trajectories(config: &RunConfig) -> Result<(), CliError> {
    let mut loaded = load(config)?;
    let refset = references_of(config, &mut loaded)?;
    let sites = &loaded.dataset.sites;
    let trajs = build_trajectories(sites, &refset, config.trajectory_kind()?)?;
    let mut out = Outputs::new(&config.output_dir)?;

    out.csv(
        "trajectories.csv",
        &["site_id", "reference", "year", "delta_t", "similarity"],
        trajs.iter().flat_map(|t| {
            t.samples.iter().map(move |s| {
                vec![
                    t.site_id.clone(),
                    t.reference.to_string(),
                    s.year.to_string(),
                    s.delta_t.to_string(),
                    num(s.similarity),
                ]
            })
        }),
    )?;
    out.csv(
        "improvement.csv",
        &["site_id", "improvement", "degenerate"],
        trajs
            .iter()
            .map(|t| vec![t.site_id.clone(), num(t.improvement), t.degenerate.to_string()]),
    )?;

    match compute_baselines(&loaded.dataset.references, &refset) {
        Ok(band) => {
            out.csv(
                "baselines.csv",
                &["band", "value"],
                [
                    vec!["upper".to_string(), num(band.upper)],
                    vec!["lower".to_string(), num(band.lower)],
                ],
            )?;
        }
        Err(e) => warn!("baselines skipped: {e}"),
    }

    if let Some(group) = config.group_by()? {
        let rows = aggregate_trajectories(sites, &trajs, group);
        out.csv(
            &format!("aggregate_{}.csv", group.name()),
            &["group", "delta_t", "mean", "sd", "n"],
            rows.iter().map(|r| {
                vec![
                    r.group.clone(),
                    r.delta_t.to_string(),
                    num(r.mean),
                    num(r.sd),
                    r.n.to_string(),
                ]
            }),
        )?;
    }

    if sites.iter().any(|s| !s.spectral.is_empty()) {
        out.csv(
            "spectral_trajectories.csv",
            &["site_id", "year", "delta_t", "ndvi", "evi"],
            sites.iter().flat_map(|s| {
                spectral_trajectory(s).into_iter().map(move |r| {
                    vec![
                        s.site_id.clone(),
                        r.year.to_string(),
                        r.delta_t.to_string(),
                        num(r.ndvi),
                        num(r.evi),
                    ]
                })
            }),
        )?;
    }

    let classes = sites
        .iter()
        .map(|s| classify_trajectory(s, &refset))
        .collect::<Result<Vec<_>, _>>()?;
    out.csv(
        "class_trajectories.csv",
        &["site_id", "year", "class", "similarity", "change_magnitude"],
        classes.iter().flat_map(|c| {
            c.years.iter().map(move |y| {
                vec![
                    c.site_id.clone(),
                    y.year.to_string(),
                    y.class.to_string(),
                    num(y.similarity),
                    opt_num(y.change_magnitude),
                ]
            })
        }),
    )?;
    out.csv(
        "transitions.csv",
        &["site_id", "year", "from", "to"],
        classes.iter().flat_map(|c| {
            c.transitions.iter().map(move |t| {
                vec![c.site_id.clone(), t.year.to_string(), t.from.to_string(), t.to.to_string()]
            })
        }),
    )?;

    out.commit("trajectories", config, &loaded.inputs())?;
    Ok(())
}

pub fn project(config: &RunConfig) -> Result<(), CliError> {
    let mut loaded = load(config)?;
    let refset = references_of(config, &mut loaded)?;
    let year = refset.anchor_year();
    let stable: Vec<(&str, LulcClass, &reftraj_core::EmbeddingVector)> = loaded
        .dataset
        .references
        .iter()
        .filter_map(|p| Some((p.point_id.as_str(), p.stable_class()?, p.embeddings.get(&year)?)))
        .collect();
    let vectors: Vec<_> = stable.iter().map(|(_, _, e)| (*e).clone()).collect();
    let model = fit_projection(&vectors)?;

    let mut rows = Vec::new();
    for (id, class, e) in &stable {
        let (x, y) = model.project(e)?;
        rows.push(vec![id.to_string(), class.to_string(), year.to_string(), num(x), num(y)]);
    }
    let strategy: BTreeMap<&str, Strategy> = loaded
        .dataset
        .sites
        .iter()
        .map(|s| (s.site_id.as_str(), s.strategy))
        .collect();
    for r in trajectory_paths_2d(&loaded.dataset.sites, &model)? {
        let label = strategy[r.id.as_str()].label().to_string();
        rows.push(vec![r.id, label, r.year.to_string(), num(r.x), num(r.y)]);
    }

    let mut out = Outputs::new(&config.output_dir)?;
    out.csv("projection.csv", &["id", "label", "year", "x", "y"], rows)?;

    let ratio = model.explained_variance_ratio();
    let mut stats = vec![
        ("explained_variance_1", model.explained_variance[0]),
        ("explained_variance_2", model.explained_variance[1]),
        ("explained_variance_ratio_1", ratio[0]),
        ("explained_variance_ratio_2", ratio[1]),
    ];
    let labels: Vec<LulcClass> = stable.iter().map(|(_, c, _)| *c).collect();
    match silhouette_score(&vectors, &labels) {
        Ok(s) => stats.push(("silhouette_reference_classes", s)),
        Err(e) => warn!("silhouette skipped: {e}"),
    }
    out.csv(
        "projection_stats.csv",
        &["stat", "value"],
        stats.iter().map(|(k, v)| vec![k.to_string(), num(*v)]),
    )?;
    out.commit("project", config, &loaded.inputs())?;
    Ok(())
}

fn write_folds(out: &mut Outputs, folds: &FoldAssignment) -> Result<(), CliError> {
    out.csv(
        "folds.csv",
        &["site_id", "fold"],
        folds
            .assignment
            .iter()
            .map(|(id, f)| vec![id.clone(), f.to_string()]),
    )?;
    Ok(())
}

pub fn predict(config: &RunConfig) -> Result<(), CliError> {
    let mut loaded = load(config)?;
    let refset = references_of(config, &mut loaded)?;
    let sites = &loaded.dataset.sites;
    let folds = spatial_kfold(sites, config.k_folds, config.seed)?;
    let models = config.models()?;
    let feature_sets = config.feature_sets()?;

    let mut results = Vec::new();
    for task in config.tasks()? {
        let targets = make_targets(sites, &refset, task, config.horizon, config.feature_offset)?;
        if !targets.excluded.is_empty() {
            info!("{task}: {} sites lack the target year", targets.excluded.len());
        }
        let mut eval = EvalConfig::for_task(task, config.seed);
        if !models.is_empty() {
            eval.models = models.iter().copied().filter(|m| m.supports(task)).collect();
            if eval.models.is_empty() {
                return Err(CliError::Config(format!("no requested model supports task {task}")));
            }
        }
        if !feature_sets.is_empty() {
            eval.feature_sets = feature_sets.clone();
        }
        eval.impute = config.impute;
        eval.forest.n_trees = config.n_trees;
        results.extend(evaluate(sites, &targets, &folds, &eval)?);
    }

    let mut out = Outputs::new(&config.output_dir)?;
    write_folds(&mut out, &folds)?;
    let mut fold_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for r in &results {
        let key = [r.task.to_string(), r.model.to_string(), r.feature_set.to_string()];
        for f in &r.per_fold {
            for (metric, value) in &f.metrics {
                let mut row = key.to_vec();
                row.extend([f.fold.to_string(), metric.to_string(), num(*value)]);
                fold_rows.push(row);
            }
        }
        for s in &r.aggregate {
            let mut row = key.to_vec();
            row.extend([s.metric.to_string(), num(s.mean), num(s.sd)]);
            summary_rows.push(row);
        }
        for fold in &r.skipped_folds {
            warn!("{} {} {}: fold {fold} skipped", key[0], key[1], key[2]);
        }
    }
    out.csv(
        "predict_folds.csv",
        &["task", "model", "feature_set", "fold", "metric", "value"],
        fold_rows,
    )?;
    out.csv(
        "predict_summary.csv",
        &["task", "model", "feature_set", "metric", "mean", "sd"],
        summary_rows,
    )?;
    out.commit("predict", config, &loaded.inputs())?;
    Ok(())
}

pub fn synth(config: &RunConfig) -> Result<(), CliError> {
    let synth = config.synth_config()?;
    let world = generate_world(&synth)?;
    let mut out = Outputs::new(&config.output_dir)?;
    // Register the targets first so a failed write still cleans up.
    for name in [
        "embeddings.csv",
        "sites.csv",
        "spectral.csv",
        "covariates.csv",
        "reference_points.csv",
        "lulc_codes.csv",
        "ground_truth.csv",
    ] {
        out.adopt(out.dir().join(name));
    }
    for path in write_world(&world, out.dir())? {
        out.adopt(path);
    }
    out.commit("synth", config, &[])?;
    Ok(())
}

/// Half-open bins `[lo, hi)` over the configured edges, with open ends.
fn area_histogram(areas: &[f64], edges: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut bounds = vec![0.0];
    bounds.extend(edges.iter().copied().filter(|&e| e > 0.0));
    bounds.push(f64::INFINITY);
    bounds
        .windows(2)
        .map(|w| {
            let n = areas.iter().filter(|&&a| a >= w[0] && a < w[1]).count();
            (w[0], w[1], n)
        })
        .collect()
}

pub fn report(config: &RunConfig) -> Result<(), CliError> {
    let loaded = load(config)?;
    let sites = &loaded.dataset.sites;
    let mut out = Outputs::new(&config.output_dir)?;

    let mut by_strategy: BTreeMap<Strategy, usize> = Strategy::ALL.iter().map(|&s| (s, 0)).collect();
    let mut by_year: BTreeMap<i32, usize> = BTreeMap::new();
    for s in sites {
        *by_strategy.entry(s.strategy).or_default() += 1;
        *by_year.entry(s.start_year).or_default() += 1;
    }
    out.csv(
        "report_strategy.csv",
        &["strategy", "count"],
        by_strategy
            .iter()
            .map(|(s, n)| vec![s.label().to_string(), n.to_string()]),
    )?;
    out.csv(
        "report_start_year.csv",
        &["start_year", "count"],
        by_year.iter().map(|(y, n)| vec![y.to_string(), n.to_string()]),
    )?;
    let areas: Vec<f64> = sites.iter().map(|s| s.area_ha).collect();
    out.csv(
        "report_area.csv",
        &["bin_lo", "bin_hi", "count"],
        area_histogram(&areas, &config.area_bins)
            .into_iter()
            .map(|(lo, hi, n)| vec![num(lo), num(hi), n.to_string()]),
    )?;
    out.commit("report", config, &loaded.inputs())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_every_area() {
        let areas = [0.5, 1.0, 1.5, 7.0, 250.0];
        let h = area_histogram(&areas, &[1.0, 2.0, 10.0]);
        assert_eq!(
            h,
            vec![(0.0, 1.0, 1), (1.0, 2.0, 2), (2.0, 10.0, 1), (10.0, f64::INFINITY, 1)]
        );
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), areas.len());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-9, 12345.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}

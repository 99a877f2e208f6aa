//! Synthetic worlds with known ground truth.
//!
//! Class centroids are random unit vectors. Stable reference points scatter
//! around their centroid, changing points slide from one centroid to another
//! across the year range, and restoration sites move from the Pasture
//! centroid toward the SecondaryForest centroid at a strategy-dependent rate.
//! All embeddings are renormalised onto the unit sphere after noise.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{embedding_column, lulc_column, Dataset};
use crate::model::{
    CovariateSet, EmbeddingVector, LulcClass, LulcCodes, ReferencePoint, SiteRecord, SpectralSample,
    Strategy, Year, YearWindow,
};
use crate::rng::{derive_seed, rng_from};

/// Classes in generation order; `n_classes` takes a prefix.
pub const SYNTH_CLASSES: [LulcClass; 10] = [
    LulcClass::SecondaryForest,
    LulcClass::Pasture,
    LulcClass::PrimaryForest,
    LulcClass::ForestFormation,
    LulcClass::ForestPlantation,
    LulcClass::Wetland,
    LulcClass::SugarCane,
    LulcClass::Coffee,
    LulcClass::Grassland,
    LulcClass::Urban,
];

/// Classes built close to SecondaryForest.
const FOREST_GROUP: [LulcClass; 2] = [LulcClass::PrimaryForest, LulcClass::ForestFormation];

const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mislabel {
    pub true_class: LulcClass,
    pub labeled_as: LulcClass,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim: usize,
    pub n_classes: usize,
    pub points_per_class: usize,
    pub changing_per_transition: usize,
    pub transitions: Vec<(LulcClass, LulcClass)>,
    pub mislabels: Vec<Mislabel>,
    pub n_sites: usize,
    pub noise_sigma: f64,
    /// Embedding years, inclusive.
    pub years: (Year, Year),
    /// Years with an LULC label on reference points.
    pub lulc_years: (Year, Year),
    /// First year carrying the target label on changing points.
    pub transition_year: Year,
    pub start_years: (Year, Year),
    /// Site progress at the start year is uniform on `[0, initial_progress_max]`.
    pub initial_progress_max: f64,
    pub recovery_rate_by_strategy: BTreeMap<Strategy, f64>,
    pub centroid_min_separation: f64,
    /// Upper bound on the cosine between centroids of unrelated classes.
    pub unrelated_max_cosine: f64,
    /// Cosine of PrimaryForest and ForestFormation centroids to SecondaryForest.
    pub forest_affinity: f64,
    pub area_range: (f64, f64),
    /// `(lon_min, lat_min, lon_max, lat_max)`.
    pub bbox: (f64, f64, f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            dim: 64,
            n_classes: 10,
            points_per_class: 200,
            changing_per_transition: 40,
            transitions: vec![
                (LulcClass::ForestFormation, LulcClass::Urban),
                (LulcClass::ForestFormation, LulcClass::SugarCane),
                (LulcClass::ForestFormation, LulcClass::Pasture),
                (LulcClass::Pasture, LulcClass::ForestFormation),
                (LulcClass::Coffee, LulcClass::ForestFormation),
            ],
            mislabels: Vec::new(),
            n_sites: 400,
            noise_sigma: 0.05,
            years: (2017, 2024),
            lulc_years: (2015, 2024),
            transition_year: 2021,
            start_years: (2017, 2021),
            initial_progress_max: 0.5,
            recovery_rate_by_strategy: [
                (Strategy::NaturalRegenMgmt, 0.12),
                (Strategy::NaturalRegenNoMgmt, 0.08),
                (Strategy::FullAreaPlanting, 0.16),
                (Strategy::Agroforestry, 0.06),
                (Strategy::NotIdentified, 0.10),
            ]
            .into(),
            centroid_min_separation: 0.25,
            unrelated_max_cosine: 0.3,
            forest_affinity: 0.7,
            area_range: (0.5, 30.0),
            bbox: (-53.0, -25.0, -44.0, -19.8),
        }
    }
}

impl SynthConfig {
    pub fn classes(&self) -> &[LulcClass] {
        &SYNTH_CLASSES[..self.n_classes]
    }

    fn has(&self, c: LulcClass) -> bool {
        self.classes().contains(&c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(2..=SYNTH_CLASSES.len()).contains(&self.n_classes) {
            return bad("n_classes must be between 2 and 10");
        }
        if self.dim < self.n_classes + 2 {
            return bad("dim must exceed n_classes + 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if self.years.0 > self.years.1 || self.lulc_years.0 > self.lulc_years.1 {
            return bad("year ranges must be ordered");
        }
        if self.start_years.0 > self.start_years.1 {
            return bad("start_years must be ordered");
        }
        if !(0.0..=1.0).contains(&self.initial_progress_max) {
            return bad("initial_progress_max must be in [0, 1]");
        }
        for s in Strategy::ALL {
            match self.recovery_rate_by_strategy.get(&s) {
                Some(r) if (0.0..=1.0).contains(r) => {}
                _ => return bad("every strategy needs a recovery rate in [0, 1]"),
            }
        }
        if !(self.centroid_min_separation > 0.0) {
            return bad("centroid_min_separation must be > 0");
        }
        if !(self.area_range.0 > 0.0 && self.area_range.0 <= self.area_range.1) {
            return bad("area_range must be positive and ordered");
        }
        for &(a, b) in &self.transitions {
            if a == b {
                return Err(Error::SameClassTransition(a));
            }
        }
        for m in &self.mislabels {
            if !self.has(m.true_class) || !self.has(m.labeled_as) {
                return bad("mislabel classes must be among the generated classes");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TruthKind {
    Stable,
    Changing,
    Mislabeled,
    Site,
}

impl TruthKind {
    pub fn name(&self) -> &'static str {
        match self {
            TruthKind::Stable => "stable",
            TruthKind::Changing => "changing",
            TruthKind::Mislabeled => "mislabeled",
            TruthKind::Site => "site",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub kind: TruthKind,
    /// Class whose centroid generated the embeddings (stable/mislabeled).
    pub true_class: Option<LulcClass>,
    pub from: Option<LulcClass>,
    pub to: Option<LulcClass>,
    pub transition_year: Option<Year>,
    pub rate: Option<f64>,
    pub initial_progress: Option<f64>,
    pub start_year: Option<Year>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    pub fn get(&self, id: &str) -> Option<&TruthRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn of_kind(&self, kind: TruthKind) -> impl Iterator<Item = &TruthRow> {
        self.rows.iter().filter(move |r| r.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: SynthConfig,
    pub dataset: Dataset,
    pub codes: LulcCodes,
    pub truth: GroundTruth,
    pub centroids: BTreeMap<LulcClass, EmbeddingVector>,
}

impl World {
    /// Recovery progress of a site at `year`, in `[0, 1]`.
    pub fn site_progress(row: &TruthRow, year: Year) -> f64 {
        let f0 = row.initial_progress.unwrap_or(0.0);
        let rate = row.rate.unwrap_or(0.0);
        let dt = (year - row.start_year.unwrap_or(year)).max(0) as f64;
        (f0 + rate * dt).min(1.0)
    }

    /// Cosine of the noise-free site embedding to the SecondaryForest centroid.
    pub fn expected_similarity(&self, site_id: &str, year: Year) -> Option<f64> {
        let row = self.truth.get(site_id)?;
        let f = Self::site_progress(row, year);
        let pasture = self.centroids.get(&LulcClass::Pasture)?;
        let sf = self.centroids.get(&LulcClass::SecondaryForest)?;
        let e = interpolate(pasture.as_slice(), sf.as_slice(), f);
        oracle_similarity(&e, sf.as_slice()).ok()
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `normalize((1 - f) a + f b)`, returning the endpoints exactly at 0 and 1.
fn interpolate(a: &[f64], b: &[f64], f: f64) -> Vec<f64> {
    if f <= 0.0 {
        return a.to_vec();
    }
    if f >= 1.0 {
        return b.to_vec();
    }
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - f) * x + f * y).collect();
    normalize(&mut v);
    v
}

fn add_noise(mut v: Vec<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return v;
    }
    let noise = Normal::new(0.0, sigma).unwrap();
    v.iter_mut().for_each(|x| *x += noise.sample(rng));
    normalize(&mut v);
    v
}

fn sample_centroids(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<BTreeMap<LulcClass, Vec<f64>>> {
    let dim = config.dim;
    let max_any = 1.0 - config.centroid_min_separation;
    if config.forest_affinity > max_any {
        return Err(Error::SeparationInfeasible);
    }
    let related = |a: LulcClass, b: LulcClass| {
        let forestish = |c: LulcClass| c == LulcClass::SecondaryForest || FOREST_GROUP.contains(&c);
        forestish(a) && forestish(b)
    };
    let mut placed: Vec<(LulcClass, Vec<f64>)> = Vec::new();
    for &class in config.classes() {
        let sf = placed
            .iter()
            .find(|(c, _)| *c == LulcClass::SecondaryForest)
            .map(|(_, v)| v.clone());
        let mut accepted = None;
        for _ in 0..MAX_TRIES {
            let mut cand = unit_vector(rng, dim);
            if let (true, Some(sf)) = (FOREST_GROUP.contains(&class), &sf) {
                let proj = dot(&cand, sf);
                cand.iter_mut().zip(sf).for_each(|(x, s)| *x -= proj * s);
                normalize(&mut cand);
                let a = config.forest_affinity;
                let b = (1.0 - a * a).sqrt();
                cand = sf.iter().zip(&cand).map(|(s, u)| a * s + b * u).collect();
            }
            let ok = placed.iter().all(|(c, v)| {
                let cos = dot(&cand, v);
                let limit = if related(class, *c) { max_any } else { config.unrelated_max_cosine.min(max_any) };
                cos <= limit + 1e-12
            });
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        let v = accepted.ok_or(Error::SeparationInfeasible)?;
        placed.push((class, v));
    }
    Ok(placed.into_iter().collect())
}

fn random_location(config: &SynthConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (lon0, lat0, lon1, lat1) = config.bbox;
    (rng.random_range(lon0..=lon1), rng.random_range(lat0..=lat1))
}

fn lulc_series(config: &SynthConfig, before: LulcClass, after: LulcClass, switch: Year) -> BTreeMap<Year, LulcClass> {
    (config.lulc_years.0..=config.lulc_years.1)
        .map(|y| (y, if y < switch { before } else { after }))
        .collect()
}

fn embed_years(
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    base: impl Fn(Year) -> Vec<f64>,
) -> Result<BTreeMap<Year, EmbeddingVector>> {
    (config.years.0..=config.years.1)
        .map(|y| {
            let v = add_noise(base(y), config.noise_sigma, rng);
            Ok((y, EmbeddingVector::new(v, config.dim)?))
        })
        .collect()
}

fn covariates_for(rng: &mut ChaCha8Rng, lon: f64, lat: f64, years: (Year, Year)) -> BTreeMap<Year, CovariateSet> {
    let n = |rng: &mut ChaCha8Rng, sd: f64| rng.sample::<f64, _>(StandardNormal) * sd;
    let elevation = (600.0 + 90.0 * (lon + 48.5) + n(rng, 40.0)).max(0.0);
    let slope = (8.0 + n(rng, 4.0)).abs().min(60.0);
    let aspect = rng.random_range(0.0..360.0);
    let forest_cover = (0.3 + 0.05 * (lat + 22.0) + n(rng, 0.1)).clamp(0.0, 1.0);
    let roads = (1.0 + n(rng, 0.5)).abs();
    (years.0..=years.1)
        .map(|y| {
            let precip = (1300.0 + 250.0 * (0.5 * lon).sin() + 40.0 * (lat + 22.0) + n(rng, 60.0)).max(0.0);
            let tmin = 14.0 + 0.8 * (lat + 22.0) + n(rng, 0.5);
            let tmax = tmin + 11.0 + n(rng, 0.5);
            let et = (900.0 + 0.2 * (precip - 1300.0) + n(rng, 30.0)).max(0.0);
            let cov = CovariateSet::from_array([
                precip,
                tmin,
                tmax,
                et,
                elevation,
                slope,
                aspect,
                forest_cover,
                roads,
            ]);
            (y, cov)
        })
        .collect()
}

/// Builds a world from `config`. Identical configs give identical worlds.
pub fn generate_world(config: &SynthConfig) -> Result<World> {
    config.validate()?;
    let dim = config.dim;
    let mut crng = rng_from(derive_seed(config.seed, 0));
    let centroids = sample_centroids(config, &mut crng)?;
    let centroid = |c: LulcClass| centroids[&c].clone();

    let mut references = Vec::new();
    let mut truth = Vec::new();

    let mut rng = rng_from(derive_seed(config.seed, 1));
    for &class in config.classes() {
        for i in 0..config.points_per_class {
            let id = format!("pt_{}_{i:04}", class.base_name());
            let (lon, lat) = random_location(config, &mut rng);
            let c = centroid(class);
            let embeddings = embed_years(config, &mut rng, |_| c.clone())?;
            references.push(ReferencePoint {
                point_id: id.clone(),
                lon,
                lat,
                lulc_series: lulc_series(config, class, class, Year::MAX),
                embeddings,
                stability: None,
            });
            truth.push(TruthRow {
                id,
                kind: TruthKind::Stable,
                true_class: Some(class),
                from: None,
                to: None,
                transition_year: None,
                rate: None,
                initial_progress: None,
                start_year: None,
            });
        }
    }

    let mut rng = rng_from(derive_seed(config.seed, 2));
    let span = (config.years.1 - config.years.0).max(1) as f64;
    for &(from, to) in &config.transitions {
        if !config.has(from) || !config.has(to) {
            continue;
        }
        let (a, b) = (centroid(from), centroid(to));
        for i in 0..config.changing_per_transition {
            let id = format!("chg_{}_{}_{i:04}", from.base_name(), to.base_name());
            let (lon, lat) = random_location(config, &mut rng);
            let embeddings = embed_years(config, &mut rng, |y| {
                interpolate(&a, &b, (y - config.years.0) as f64 / span)
            })?;
            references.push(ReferencePoint {
                point_id: id.clone(),
                lon,
                lat,
                lulc_series: lulc_series(config, from, to, config.transition_year),
                embeddings,
                stability: None,
            });
            truth.push(TruthRow {
                id,
                kind: TruthKind::Changing,
                true_class: None,
                from: Some(from),
                to: Some(to),
                transition_year: Some(config.transition_year),
                rate: None,
                initial_progress: None,
                start_year: None,
            });
        }
    }

    let mut rng = rng_from(derive_seed(config.seed, 3));
    for m in &config.mislabels {
        let c = centroid(m.true_class);
        for i in 0..m.count {
            let id = format!("mis_{}_as_{}_{i:04}", m.true_class.base_name(), m.labeled_as.base_name());
            let (lon, lat) = random_location(config, &mut rng);
            let embeddings = embed_years(config, &mut rng, |_| c.clone())?;
            references.push(ReferencePoint {
                point_id: id.clone(),
                lon,
                lat,
                lulc_series: lulc_series(config, m.labeled_as, m.labeled_as, Year::MAX),
                embeddings,
                stability: None,
            });
            truth.push(TruthRow {
                id,
                kind: TruthKind::Mislabeled,
                true_class: Some(m.true_class),
                from: Some(m.labeled_as),
                to: None,
                transition_year: None,
                rate: None,
                initial_progress: None,
                start_year: None,
            });
        }
    }

    let mut rng = rng_from(derive_seed(config.seed, 4));
    let mut sites = Vec::with_capacity(config.n_sites);
    if config.n_sites > 0 && !(config.has(LulcClass::Pasture) && config.has(LulcClass::SecondaryForest)) {
        return Err(Error::InvalidConfig("sites need Pasture and SecondaryForest centroids".into()));
    }
    for i in 0..config.n_sites {
        let site_id = format!("site_{i:04}");
        let (lon, lat) = random_location(config, &mut rng);
        let area_ha = rng.random_range(config.area_range.0..=config.area_range.1);
        let start_year = rng.random_range(config.start_years.0..=config.start_years.1);
        let strategy = Strategy::ALL[rng.random_range(0..Strategy::ALL.len())];
        let rate = config.recovery_rate_by_strategy[&strategy];
        let f0 = if config.initial_progress_max > 0.0 {
            rng.random_range(0.0..=config.initial_progress_max)
        } else {
            0.0
        };
        let row = TruthRow {
            id: site_id.clone(),
            kind: TruthKind::Site,
            true_class: None,
            from: Some(LulcClass::Pasture),
            to: Some(LulcClass::SecondaryForest),
            transition_year: None,
            rate: Some(rate),
            initial_progress: Some(f0),
            start_year: Some(start_year),
        };
        let pasture = centroid(LulcClass::Pasture);
        let sf = centroid(LulcClass::SecondaryForest);
        let embeddings = embed_years(config, &mut rng, |y| {
            interpolate(&pasture, &sf, World::site_progress(&row, y))
        })?;
        let spectral = (config.years.0..=config.years.1)
            .map(|y| {
                let f = World::site_progress(&row, y);
                let n: f64 = rng.sample::<f64, _>(StandardNormal);
                let m: f64 = rng.sample::<f64, _>(StandardNormal);
                let ndvi = (0.3 + 0.5 * f + 0.03 * n).clamp(-1.0, 1.0);
                let evi = 0.2 + 0.4 * f + 0.03 * m;
                (y, SpectralSample { ndvi, evi })
            })
            .collect();
        let covariates = covariates_for(&mut rng, lon, lat, config.years);
        sites.push(SiteRecord {
            site_id,
            centroid_lon: lon,
            centroid_lat: lat,
            area_ha,
            start_year,
            strategy,
            start_lulc: Some(LulcClass::Pasture),
            embeddings,
            spectral,
            covariates,
        });
        truth.push(row);
    }

    truth.sort_by(|a, b| a.id.cmp(&b.id));
    let window = YearWindow::new(config.years.0, config.years.1)?;
    let dataset = Dataset::new(sites, references, window, dim)?;
    Ok(World {
        config: config.clone(),
        dataset,
        codes: LulcCodes::mapbiomas_default(),
        truth: GroundTruth { rows: truth },
        centroids: centroids
            .into_iter()
            .map(|(c, v)| Ok((c, EmbeddingVector::new(v, dim)?)))
            .collect::<Result<_>>()?,
    })
}

/// Cosine similarity by direct summation, kept separate from the
/// engine's implementation so the two can be checked against each other.
pub fn oracle_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::WrongDimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut ab = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
    }
    let mut aa = 0.0;
    for x in a {
        aa += x * x;
    }
    let mut bb = 0.0;
    for x in b {
        bb += x * x;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = ab / (aa.sqrt() * bb.sqrt());
    Ok(s.clamp(-1.0, 1.0))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes the ingest tables plus `ground_truth.csv` into `dir` and returns
/// the written paths.
pub fn write_world(world: &World, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ds = &world.dataset;
    let mut written = Vec::new();

    let path = dir.join("embeddings.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        let mut header = vec!["id".to_string(), "year".to_string()];
        header.extend((0..ds.dim).map(embedding_column));
        w.write_record(&header).map_err(&err)?;
        let mut rows: Vec<(&str, Year, &EmbeddingVector)> = ds
            .sites
            .iter()
            .flat_map(|s| s.embeddings.iter().map(move |(y, e)| (s.site_id.as_str(), *y, e)))
            .chain(
                ds.references
                    .iter()
                    .flat_map(|p| p.embeddings.iter().map(move |(y, e)| (p.point_id.as_str(), *y, e))),
            )
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
        for (id, year, e) in rows {
            let mut rec = vec![id.to_string(), year.to_string()];
            rec.extend(e.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("sites.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        w.write_record(["site_id", "lon", "lat", "area_ha", "start_year", "strategy", "start_lulc"])
            .map_err(&err)?;
        for s in &ds.sites {
            w.write_record([
                s.site_id.clone(),
                s.centroid_lon.to_string(),
                s.centroid_lat.to_string(),
                s.area_ha.to_string(),
                s.start_year.to_string(),
                s.strategy.label().to_string(),
                opt(&s.start_lulc),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("spectral.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        w.write_record(["id", "year", "ndvi", "evi"]).map_err(&err)?;
        for s in &ds.sites {
            for (y, sp) in &s.spectral {
                w.write_record([s.site_id.clone(), y.to_string(), sp.ndvi.to_string(), sp.evi.to_string()])
                    .map_err(&err)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("covariates.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        let mut header = vec!["id", "year"];
        header.extend(CovariateSet::COLUMNS);
        w.write_record(&header).map_err(&err)?;
        for s in &ds.sites {
            for (y, c) in &s.covariates {
                let mut rec = vec![s.site_id.clone(), y.to_string()];
                rec.extend(c.to_array().iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(&err)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("reference_points.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        let years: Vec<Year> = (world.config.lulc_years.0..=world.config.lulc_years.1).collect();
        let mut header = vec!["point_id".to_string(), "lon".to_string(), "lat".to_string()];
        header.extend(years.iter().map(|y| lulc_column(*y)));
        w.write_record(&header).map_err(&err)?;
        for p in &ds.references {
            let mut rec = vec![p.point_id.clone(), p.lon.to_string(), p.lat.to_string()];
            for y in &years {
                let class = p.lulc_series[y];
                let label = match world.codes.code_of(class) {
                    Some(code) => code.to_string(),
                    None => class.to_string(),
                };
                rec.push(label);
            }
            w.write_record(&rec).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("lulc_codes.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        w.write_record(["code", "name"]).map_err(&err)?;
        for (code, class) in world.codes.iter() {
            w.write_record([code.to_string(), class.to_string()]).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    let path = dir.join("ground_truth.csv");
    {
        let err = write_err(&path);
        let mut w = writer(&path)?;
        w.write_record(["id", "kind", "true_class", "from", "to", "transition_year", "rate"])
            .map_err(&err)?;
        for r in &world.truth.rows {
            w.write_record([
                r.id.clone(),
                r.kind.name().to_string(),
                opt(&r.true_class),
                opt(&r.from),
                opt(&r.to),
                opt(&r.transition_year),
                opt(&r.rate),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    written.push(path);

    Ok(written)
}

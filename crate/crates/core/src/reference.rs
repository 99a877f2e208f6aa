//! Reference-point classification, reference embeddings and label outliers.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_km;
use crate::model::{EmbeddingVector, LulcClass, ReferencePoint, SiteRecord, Stability, Year};
use crate::vector::{cosine_distance, euclidean_distance, mean_vector};

/// Year rules for stable and changing reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityRules {
    pub min_stable_years: usize,
    pub end_year: Year,
    /// Inclusive window that must hold the source class.
    pub change_from: (Year, Year),
    /// Inclusive window that must hold the target class.
    pub change_to: (Year, Year),
}

impl Default for StabilityRules {
    fn default() -> Self {
        StabilityRules {
            min_stable_years: 10,
            end_year: 2024,
            change_from: (2017, 2020),
            change_to: (2021, 2024),
        }
    }
}

impl StabilityRules {
    /// Every year the rules inspect.
    pub fn required_years(&self) -> BTreeSet<Year> {
        let stable_start = self.end_year - self.min_stable_years as Year + 1;
        (stable_start..=self.end_year)
            .chain(self.change_from.0..=self.change_from.1)
            .chain(self.change_to.0..=self.change_to.1)
            .collect()
    }
}

fn uniform_class(
    series: &BTreeMap<Year, LulcClass>,
    years: std::ops::RangeInclusive<Year>,
) -> Option<LulcClass> {
    let mut classes = years.map(|y| series[&y]);
    let first = classes.next()?;
    classes.all(|c| c == first).then_some(first)
}

/// Stable if the last `min_stable_years` years through `end_year` share one
/// class; otherwise changing if the two change windows are each uniform with
/// different classes; otherwise neither.
pub fn classify_stability(
    series: &BTreeMap<Year, LulcClass>,
    rules: &StabilityRules,
) -> Result<Stability> {
    if let Some(missing) = rules
        .required_years()
        .into_iter()
        .find(|y| !series.contains_key(y))
    {
        return Err(Error::InsufficientSeries(missing));
    }
    let stable_start = rules.end_year - rules.min_stable_years as Year + 1;
    if rules.min_stable_years > 0 {
        if let Some(c) = uniform_class(series, stable_start..=rules.end_year) {
            return Ok(Stability::Stable(c));
        }
    }
    let from = uniform_class(series, rules.change_from.0..=rules.change_from.1);
    let to = uniform_class(series, rules.change_to.0..=rules.change_to.1);
    match (from, to) {
        (Some(a), Some(b)) if a != b => Stability::changing(a, b),
        _ => Ok(Stability::Neither),
    }
}

/// Classifies every point in place.
pub fn classify_points(points: &mut [ReferencePoint], rules: &StabilityRules) -> Result<()> {
    points.par_iter_mut().try_for_each(|p| {
        p.stability = Some(classify_stability(&p.lulc_series, rules)?);
        Ok(())
    })
}

/// Which years' embeddings define the reference vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceYearPolicy {
    /// One reference built from a single year, used for every trajectory year.
    FixedYear(Year),
    /// A separate reference per year.
    PerYear,
}

impl Default for ReferenceYearPolicy {
    fn default() -> Self {
        ReferenceYearPolicy::FixedYear(2024)
    }
}

impl std::fmt::Display for ReferenceYearPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceYearPolicy::FixedYear(y) => write!(f, "fixed:{y}"),
            ReferenceYearPolicy::PerYear => f.write_str("per-year"),
        }
    }
}

impl std::str::FromStr for ReferenceYearPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "per-year" || s == "per_year" {
            return Ok(ReferenceYearPolicy::PerYear);
        }
        let year = s.strip_prefix("fixed:").unwrap_or(s);
        year.parse()
            .map(ReferenceYearPolicy::FixedYear)
            .map_err(|_| Error::InvalidConfig(format!("bad reference year policy {s:?}")))
    }
}

/// A stable secondary-forest point eligible as a local reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryPoint {
    pub point_id: String,
    pub lon: f64,
    pub lat: f64,
    pub embeddings: BTreeMap<Year, EmbeddingVector>,
}

/// Mean vector plus the number of members it averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub vector: EmbeddingVector,
    pub members: usize,
}

/// Global and per-class reference embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    policy: ReferenceYearPolicy,
    dim: usize,
    /// Class centroids per year; the global reference is the
    /// secondary-forest entry.
    centroids: BTreeMap<Year, BTreeMap<LulcClass, Centroid>>,
    secondary_points: Vec<SecondaryPoint>,
}

impl ReferenceSet {
    pub fn policy(&self) -> ReferenceYearPolicy {
        self.policy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Year used where a single reference year is needed: the fixed year, or
    /// the latest year under the per-year policy.
    pub fn anchor_year(&self) -> Year {
        match self.policy {
            ReferenceYearPolicy::FixedYear(y) => y,
            ReferenceYearPolicy::PerYear => *self
                .centroids
                .keys()
                .next_back()
                .expect("reference set has at least one year"),
        }
    }

    fn resolve(&self, year: Year) -> Year {
        match self.policy {
            ReferenceYearPolicy::FixedYear(y) => y,
            ReferenceYearPolicy::PerYear => year,
        }
    }

    /// The global reference for trajectory year `year`.
    pub fn global_ref(&self, year: Year) -> Option<&EmbeddingVector> {
        self.centroid(LulcClass::SecondaryForest, year)
    }

    pub fn global_members(&self, year: Year) -> usize {
        self.centroids_at(year)
            .and_then(|m| m.get(&LulcClass::SecondaryForest))
            .map_or(0, |c| c.members)
    }

    pub fn centroid(&self, class: LulcClass, year: Year) -> Option<&EmbeddingVector> {
        self.centroids_at(year)
            .and_then(|m| m.get(&class))
            .map(|c| &c.vector)
    }

    pub fn centroids_at(&self, year: Year) -> Option<&BTreeMap<LulcClass, Centroid>> {
        self.centroids.get(&self.resolve(year))
    }

    /// All stored years, ascending.
    pub fn years(&self) -> impl Iterator<Item = Year> + '_ {
        self.centroids.keys().copied()
    }

    pub fn secondary_points(&self) -> &[SecondaryPoint] {
        &self.secondary_points
    }

    /// Embedding of a local reference point at trajectory year `year`.
    pub fn local_embedding<'a>(
        &self,
        point: &'a SecondaryPoint,
        year: Year,
    ) -> Option<&'a EmbeddingVector> {
        point.embeddings.get(&self.resolve(year))
    }
}

/// Builds the global reference and class centroids from classified points.
///
/// Means are summed in ascending `point_id` order.
pub fn build_reference_set(
    points: &[ReferencePoint],
    policy: ReferenceYearPolicy,
) -> Result<ReferenceSet> {
    let mut stable: Vec<(&ReferencePoint, LulcClass)> = points
        .iter()
        .filter_map(|p| p.stable_class().map(|c| (p, c)))
        .collect();
    stable.sort_by(|a, b| a.0.point_id.cmp(&b.0.point_id));

    let years: BTreeSet<Year> = match policy {
        ReferenceYearPolicy::FixedYear(y) => [y].into(),
        ReferenceYearPolicy::PerYear => stable
            .iter()
            .flat_map(|(p, _)| p.embeddings.keys().copied())
            .collect(),
    };
    let dim = stable
        .iter()
        .find_map(|(p, _)| p.embeddings.values().next().map(|e| e.dim()))
        .ok_or(Error::NoSecondaryForestPoints)?;

    let mut centroids = BTreeMap::new();
    for year in years {
        let mut members: BTreeMap<LulcClass, Vec<&[f64]>> = BTreeMap::new();
        for (p, class) in &stable {
            if let Some(e) = p.embeddings.get(&year) {
                members.entry(*class).or_default().push(e.as_slice());
            }
        }
        let by_class: BTreeMap<LulcClass, Centroid> = members
            .into_iter()
            .map(|(class, vs)| {
                let n = vs.len();
                let mean = mean_vector(vs, dim).expect("non-empty member list");
                let vector = EmbeddingVector::new(mean, dim)?;
                Ok((class, Centroid { vector, members: n }))
            })
            .collect::<Result<_>>()?;
        if by_class.contains_key(&LulcClass::SecondaryForest) {
            centroids.insert(year, by_class);
        } else if let ReferenceYearPolicy::FixedYear(_) = policy {
            return Err(Error::NoSecondaryForestPoints);
        }
    }
    if centroids.is_empty() {
        return Err(Error::NoSecondaryForestPoints);
    }

    let secondary_points = stable
        .iter()
        .filter(|(_, c)| *c == LulcClass::SecondaryForest)
        .filter(|(p, _)| match policy {
            ReferenceYearPolicy::FixedYear(y) => p.embeddings.contains_key(&y),
            ReferenceYearPolicy::PerYear => !p.embeddings.is_empty(),
        })
        .map(|(p, _)| SecondaryPoint {
            point_id: p.point_id.clone(),
            lon: p.lon,
            lat: p.lat,
            embeddings: p.embeddings.clone(),
        })
        .collect();

    Ok(ReferenceSet {
        policy,
        dim,
        centroids,
        secondary_points,
    })
}

/// The nearest stable secondary-forest point to a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReference {
    pub point_id: String,
    pub distance_km: f64,
}

/// Nearest secondary point by great-circle distance; ties go to the smallest id.
pub fn nearest_secondary(refset: &ReferenceSet, lon: f64, lat: f64) -> Result<&SecondaryPoint> {
    let mut best: Option<(&SecondaryPoint, f64)> = None;
    for p in &refset.secondary_points {
        let d = haversine_km(lon, lat, p.lon, p.lat);
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && p.point_id < b.point_id),
        };
        if better {
            best = Some((p, d));
        }
    }
    best.map(|(p, _)| p).ok_or(Error::NoSecondaryForestPoints)
}

pub fn find_local_reference(site: &SiteRecord, refset: &ReferenceSet) -> Result<LocalReference> {
    let p = nearest_secondary(refset, site.centroid_lon, site.centroid_lat)?;
    Ok(LocalReference {
        point_id: p.point_id.clone(),
        distance_km: haversine_km(site.centroid_lon, site.centroid_lat, p.lon, p.lat),
    })
}

/// Distance used to rank outliers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutlierMetric {
    /// `1 - cosine similarity`.
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for OutlierMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(OutlierMetric::Cosine),
            "euclidean" => Ok(OutlierMetric::Euclidean),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub class: LulcClass,
    /// `(point_id, distance)`, distance non-increasing.
    pub ranked: Vec<(String, f64)>,
}

/// Ranks the stable members of `class` by distance from the class centroid
/// at the reference anchor year, farthest first, keeping `top_k`.
pub fn detect_outliers(
    points: &[ReferencePoint],
    class: LulcClass,
    refset: &ReferenceSet,
    top_k: usize,
    metric: OutlierMetric,
) -> Result<OutlierReport> {
    let year = refset.anchor_year();
    let centroid = refset
        .centroid(class, year)
        .ok_or(Error::NoCentroidForClass(class))?
        .as_slice();
    let members: Vec<&ReferencePoint> = points
        .iter()
        .filter(|p| p.stable_class() == Some(class) && p.embeddings.contains_key(&year))
        .collect();
    let mut ranked = members
        .par_iter()
        .map(|p| {
            let e = p.embeddings[&year].as_slice();
            let d = match metric {
                OutlierMetric::Cosine => cosine_distance(e, centroid)?,
                OutlierMetric::Euclidean => euclidean_distance(e, centroid),
            };
            Ok((p.point_id.clone(), d))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(OutlierReport { class, ranked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use LulcClass::*;

    fn series(pairs: &[(Year, LulcClass)]) -> BTreeMap<Year, LulcClass> {
        pairs.iter().copied().collect()
    }

    fn run(first: Year, last: Year, class: LulcClass) -> Vec<(Year, LulcClass)> {
        (first..=last).map(|y| (y, class)).collect()
    }

    #[test]
    fn ten_years_of_pasture_is_stable() {
        let s = series(&run(2015, 2024, Pasture));
        assert_eq!(
            classify_stability(&s, &StabilityRules::default()).unwrap(),
            Stability::Stable(Pasture)
        );
    }

    #[test]
    fn forest_to_pasture_is_changing() {
        let mut v = run(2015, 2020, ForestFormation);
        v.extend(run(2021, 2024, Pasture));
        assert_eq!(
            classify_stability(&series(&v), &StabilityRules::default()).unwrap(),
            Stability::Changing {
                from: ForestFormation,
                to: Pasture
            }
        );
    }

    #[test]
    fn nine_years_is_not_enough() {
        let mut v = vec![(2015, Urban)];
        v.extend(run(2016, 2024, Pasture));
        assert_eq!(
            classify_stability(&series(&v), &StabilityRules::default()).unwrap(),
            Stability::Neither
        );
    }

    #[test]
    fn alternating_is_neither() {
        let v: Vec<_> = (2015..=2024)
            .map(|y| (y, if y % 2 == 0 { Pasture } else { Urban }))
            .collect();
        assert_eq!(
            classify_stability(&series(&v), &StabilityRules::default()).unwrap(),
            Stability::Neither
        );
    }

    #[test]
    fn short_series_is_rejected() {
        let s = series(&run(2017, 2024, Pasture));
        assert!(matches!(
            classify_stability(&s, &StabilityRules::default()),
            Err(Error::InsufficientSeries(2015))
        ));
    }

    fn point(id: &str, lon: f64, lat: f64, class: LulcClass, e: Vec<f64>) -> ReferencePoint {
        let dim = e.len();
        ReferencePoint {
            point_id: id.into(),
            lon,
            lat,
            lulc_series: BTreeMap::new(),
            embeddings: [(2024, EmbeddingVector::new(e, dim).unwrap())].into(),
            stability: Some(Stability::Stable(class)),
        }
    }

    #[test]
    fn global_reference_is_the_mean() {
        let pts = vec![
            point("a", 0.0, 0.0, SecondaryForest, vec![1.0, 0.0, 2.0]),
            point("b", 0.0, 0.0, SecondaryForest, vec![0.0, 1.0, 4.0]),
            point("c", 0.0, 0.0, Pasture, vec![9.0, 9.0, 9.0]),
        ];
        let rs = build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2024)).unwrap();
        assert_eq!(rs.global_ref(2019).unwrap().as_slice(), &[0.5, 0.5, 3.0]);
        assert_eq!(rs.global_members(2024), 2);
        assert_eq!(rs.centroid(Pasture, 2024).unwrap().as_slice(), &[9.0, 9.0, 9.0]);
        assert!(rs.centroid(Urban, 2024).is_none());
    }

    #[test]
    fn single_point_reference_is_identity() {
        let pts = vec![point("a", 0.0, 0.0, SecondaryForest, vec![0.3, -0.7])];
        let rs = build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2024)).unwrap();
        assert_eq!(rs.global_ref(2024).unwrap().as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn no_secondary_points() {
        let pts = vec![point("c", 0.0, 0.0, Pasture, vec![1.0, 1.0])];
        assert!(matches!(
            build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2024)),
            Err(Error::NoSecondaryForestPoints)
        ));
        assert!(matches!(
            build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2020)),
            Err(Error::NoSecondaryForestPoints)
        ));
    }

    fn site_at(lon: f64, lat: f64) -> SiteRecord {
        SiteRecord {
            site_id: "s".into(),
            centroid_lon: lon,
            centroid_lat: lat,
            area_ha: 2.0,
            start_year: 2020,
            strategy: crate::model::Strategy::NotIdentified,
            start_lulc: None,
            embeddings: BTreeMap::new(),
            spectral: BTreeMap::new(),
            covariates: BTreeMap::new(),
        }
    }

    #[test]
    fn local_reference_nearest_and_ties() {
        let pts = vec![
            point("far", 0.0, 1.0, SecondaryForest, vec![1.0, 0.0]),
            point("near", 0.0, 0.0, SecondaryForest, vec![0.0, 1.0]),
        ];
        let rs = build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2024)).unwrap();
        let r = find_local_reference(&site_at(0.0, 0.4), &rs).unwrap();
        assert_eq!(r.point_id, "near");
        assert!((r.distance_km - 44.478).abs() < 1e-3);

        let r = find_local_reference(&site_at(0.0, 0.0), &rs).unwrap();
        assert_eq!((r.point_id.as_str(), r.distance_km), ("near", 0.0));

        let tied = vec![
            point("b", 5.0, 5.0, SecondaryForest, vec![1.0, 0.0]),
            point("a", 5.0, 5.0, SecondaryForest, vec![0.0, 1.0]),
        ];
        let rs = build_reference_set(&tied, ReferenceYearPolicy::FixedYear(2024)).unwrap();
        assert_eq!(find_local_reference(&site_at(1.0, 1.0), &rs).unwrap().point_id, "a");
    }

    #[test]
    fn displaced_point_ranks_first() {
        let mut pts: Vec<_> = (0..5)
            .map(|i| point(&format!("p{i}"), 0.0, 0.0, Urban, vec![1.0, 1.0, 0.0]))
            .collect();
        pts.push(point("odd", 0.0, 0.0, Urban, vec![1.0, -1.0, 0.5]));
        pts.push(point("sf", 0.0, 0.0, SecondaryForest, vec![0.0, 0.0, 1.0]));
        let rs = build_reference_set(&pts, ReferenceYearPolicy::FixedYear(2024)).unwrap();
        for metric in [OutlierMetric::Cosine, OutlierMetric::Euclidean] {
            let rep = detect_outliers(&pts, Urban, &rs, 10, metric).unwrap();
            assert_eq!(rep.ranked.len(), 6);
            assert_eq!(rep.ranked[0].0, "odd");
            assert!(rep.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        }
        let rep = detect_outliers(&pts, Urban, &rs, 2, OutlierMetric::Cosine).unwrap();
        assert_eq!(rep.ranked.len(), 2);
        assert!(matches!(
            detect_outliers(&pts, Wetland, &rs, 2, OutlierMetric::Cosine),
            Err(Error::NoCentroidForClass(Wetland))
        ));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "fixed:2024".parse::<ReferenceYearPolicy>().unwrap(),
            ReferenceYearPolicy::FixedYear(2024)
        );
        assert_eq!(
            "2020".parse::<ReferenceYearPolicy>().unwrap(),
            ReferenceYearPolicy::FixedYear(2020)
        );
        assert_eq!(
            "per-year".parse::<ReferenceYearPolicy>().unwrap(),
            ReferenceYearPolicy::PerYear
        );
        assert!("sometimes".parse::<ReferenceYearPolicy>().is_err());
    }
}

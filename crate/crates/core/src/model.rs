//! Domain types shared by every stage of the pipeline.
//!
//! All types are plain immutable values once constructed. Per-year data is
//! kept in `BTreeMap`s keyed by calendar year so iteration order is always
//! chronological.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding width used when nothing else is known.
pub const DEFAULT_DIM: usize = 64;

/// Calendar year. Only annual composites exist, so no finer timestamps.
pub type Year = i32;

/// A validated, finite embedding vector.
///
/// Vectors are not assumed to be unit-norm; cosine similarity normalises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Validates length and finiteness.
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if values.len() != dim {
            return Err(Error::WrongDimension {
                expected: dim,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        let dim = values.len();
        EmbeddingVector::new(values, dim)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks a raw value sequence against the dataset dimension.
pub fn validate_embedding(values: &[f64], dim: usize) -> Result<EmbeddingVector> {
    EmbeddingVector::new(values.to_vec(), dim)
}

/// Land use / land cover class.
///
/// Codes from the source map that are not in the configured code table are
/// carried as `Other(code)` instead of being dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LulcClass {
    PrimaryForest,
    SecondaryForest,
    ForestFormation,
    ForestPlantation,
    Wetland,
    SugarCane,
    Coffee,
    Grassland,
    Pasture,
    Urban,
    Other(i32),
}

impl LulcClass {
    pub const NAMED: [LulcClass; 10] = [
        LulcClass::PrimaryForest,
        LulcClass::SecondaryForest,
        LulcClass::ForestFormation,
        LulcClass::ForestPlantation,
        LulcClass::Wetland,
        LulcClass::SugarCane,
        LulcClass::Coffee,
        LulcClass::Grassland,
        LulcClass::Pasture,
        LulcClass::Urban,
    ];

    /// Base name; `Other` classes share the name "Other".
    pub fn base_name(&self) -> &'static str {
        match self {
            LulcClass::PrimaryForest => "PrimaryForest",
            LulcClass::SecondaryForest => "SecondaryForest",
            LulcClass::ForestFormation => "ForestFormation",
            LulcClass::ForestPlantation => "ForestPlantation",
            LulcClass::Wetland => "Wetland",
            LulcClass::SugarCane => "SugarCane",
            LulcClass::Coffee => "Coffee",
            LulcClass::Grassland => "Grassland",
            LulcClass::Pasture => "Pasture",
            LulcClass::Urban => "Urban",
            LulcClass::Other(_) => "Other",
        }
    }
}

// Ordered by name so that every tie-break on classes is alphabetical.
impl Ord for LulcClass {
    fn cmp(&self, other: &Self) -> Ordering {
        let code = |c: &LulcClass| match c {
            LulcClass::Other(code) => *code,
            _ => 0,
        };
        self.base_name()
            .cmp(other.base_name())
            .then_with(|| code(self).cmp(&code(other)))
    }
}

impl PartialOrd for LulcClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for LulcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LulcClass::Other(code) => write!(f, "Other({code})"),
            named => f.write_str(named.base_name()),
        }
    }
}

fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for LulcClass {
    type Err = Error;

    /// Accepts `PrimaryForest`, `Primary Forest`, `primary_forest` and `Other(42)`.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if let Some(inner) = trimmed
            .strip_prefix("Other(")
            .and_then(|rest| rest.strip_suffix(')'))
        {
            let code = inner
                .trim()
                .parse::<i32>()
                .map_err(|_| Error::InvalidCodeTable(format!("bad class label {s:?}")))?;
            return Ok(LulcClass::Other(code));
        }
        let key = normalize_label(trimmed);
        LulcClass::NAMED
            .iter()
            .copied()
            .find(|c| normalize_label(c.base_name()) == key)
            .ok_or_else(|| Error::InvalidCodeTable(format!("unknown class label {s:?}")))
    }
}

/// Bijective mapping between integer map codes and classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LulcCodes {
    by_code: BTreeMap<i32, LulcClass>,
    by_class: BTreeMap<LulcClass, i32>,
}

impl LulcCodes {
    pub fn new(pairs: impl IntoIterator<Item = (i32, LulcClass)>) -> Result<Self> {
        let mut by_code = BTreeMap::new();
        let mut by_class = BTreeMap::new();
        for (code, class) in pairs {
            if let LulcClass::Other(_) = class {
                return Err(Error::InvalidCodeTable(format!(
                    "code {code} cannot map to {class}"
                )));
            }
            if by_code.insert(code, class).is_some() {
                return Err(Error::InvalidCodeTable(format!("code {code} listed twice")));
            }
            if by_class.insert(class, code).is_some() {
                return Err(Error::InvalidCodeTable(format!("class {class} listed twice")));
            }
        }
        Ok(LulcCodes { by_code, by_class })
    }

    /// MapBiomas collection codes for the coverage classes. Primary and
    /// secondary forest come from a separate layer and get codes 101 and 102.
    pub fn mapbiomas_default() -> Self {
        LulcCodes::new([
            (3, LulcClass::ForestFormation),
            (9, LulcClass::ForestPlantation),
            (11, LulcClass::Wetland),
            (12, LulcClass::Grassland),
            (15, LulcClass::Pasture),
            (20, LulcClass::SugarCane),
            (24, LulcClass::Urban),
            (46, LulcClass::Coffee),
            (101, LulcClass::PrimaryForest),
            (102, LulcClass::SecondaryForest),
        ])
        .expect("default code table is bijective")
    }

    /// Maps a code, falling back to `Other(code)`.
    pub fn class_of(&self, code: i32) -> LulcClass {
        self.by_code
            .get(&code)
            .copied()
            .unwrap_or(LulcClass::Other(code))
    }

    pub fn is_mapped(&self, code: i32) -> bool {
        self.by_code.contains_key(&code)
    }

    pub fn code_of(&self, class: LulcClass) -> Option<i32> {
        match class {
            LulcClass::Other(code) => Some(code),
            named => self.by_class.get(&named).copied(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, LulcClass)> + '_ {
        self.by_code.iter().map(|(c, k)| (*c, *k))
    }

    /// Parses a label that is either an integer code or a class name.
    pub fn parse_label(&self, label: &str) -> Result<LulcClass> {
        match label.trim().parse::<i32>() {
            Ok(code) => Ok(self.class_of(code)),
            Err(_) => label.parse(),
        }
    }
}

impl Default for LulcCodes {
    fn default() -> Self {
        LulcCodes::mapbiomas_default()
    }
}

/// Restoration strategy categories of the site registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    NaturalRegenMgmt,
    NaturalRegenNoMgmt,
    FullAreaPlanting,
    Agroforestry,
    NotIdentified,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::NaturalRegenMgmt,
        Strategy::NaturalRegenNoMgmt,
        Strategy::FullAreaPlanting,
        Strategy::Agroforestry,
        Strategy::NotIdentified,
    ];

    /// Registry label written to CSV.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::NaturalRegenMgmt => "Natural Regeneration with Management",
            Strategy::NaturalRegenNoMgmt => "Natural Regeneration without Management",
            Strategy::FullAreaPlanting => "Full-Area Planting",
            Strategy::Agroforestry => "Agroforestry Systems",
            Strategy::NotIdentified => "Not Identified",
        }
    }

    pub fn index(&self) -> usize {
        Strategy::ALL.iter().position(|s| s == self).unwrap()
    }

    pub fn from_index(index: usize) -> Option<Strategy> {
        Strategy::ALL.get(index).copied()
    }

    /// Lenient parse of registry labels. An empty label means `NotIdentified`;
    /// anything unrecognised yields `None`.
    pub fn parse_label(s: &str) -> Option<Strategy> {
        let key = normalize_label(s);
        let strategy = match key.as_str() {
            "" | "notidentified" | "naoidentificado" => Strategy::NotIdentified,
            "naturalregenerationwithmanagement"
            | "naturalgenerationwithmanagement"
            | "naturalregenmgmt" => Strategy::NaturalRegenMgmt,
            "naturalregenerationwithoutmanagement"
            | "naturalgenerationwithoutmanagement"
            | "naturalregennomgmt" => Strategy::NaturalRegenNoMgmt,
            "fullareaplanting" => Strategy::FullAreaPlanting,
            "agroforestry" | "agroforestrysystems" | "agroforestrysystem" => {
                Strategy::Agroforestry
            }
            _ => return None,
        };
        Some(strategy)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Annual environmental covariates of a site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub precip_mm: f64,
    pub tmin_c: f64,
    pub tmax_c: f64,
    pub et_mm: f64,
    pub elevation_m: f64,
    pub slope_deg: f64,
    pub aspect_deg: f64,
    pub forest_cover_2km: f64,
    pub road_density_5km: f64,
}

impl CovariateSet {
    pub const COLUMNS: [&'static str; 9] = [
        "precip_mm",
        "tmin_c",
        "tmax_c",
        "et_mm",
        "elevation_m",
        "slope_deg",
        "aspect_deg",
        "forest_cover_2km",
        "road_density_5km",
    ];

    /// Values in `COLUMNS` order.
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.precip_mm,
            self.tmin_c,
            self.tmax_c,
            self.et_mm,
            self.elevation_m,
            self.slope_deg,
            self.aspect_deg,
            self.forest_cover_2km,
            self.road_density_5km,
        ]
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        CovariateSet {
            precip_mm: v[0],
            tmin_c: v[1],
            tmax_c: v[2],
            et_mm: v[3],
            elevation_m: v[4],
            slope_deg: v[5],
            aspect_deg: v[6],
            forest_cover_2km: v[7],
            road_density_5km: v[8],
        }
    }

    /// Returns the name of the first field violating its range, if any.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let arr = self.to_array();
        for (name, v) in Self::COLUMNS.iter().zip(arr) {
            if !v.is_finite() {
                return Err((name, format!("{v} is not finite")));
            }
        }
        let ranged = [
            ("precip_mm", self.precip_mm >= 0.0, ">= 0"),
            ("et_mm", self.et_mm >= 0.0, ">= 0"),
            (
                "slope_deg",
                (0.0..=90.0).contains(&self.slope_deg),
                "in [0, 90]",
            ),
            (
                "aspect_deg",
                (0.0..360.0).contains(&self.aspect_deg),
                "in [0, 360)",
            ),
            (
                "forest_cover_2km",
                (0.0..=1.0).contains(&self.forest_cover_2km),
                "in [0, 1]",
            ),
            ("road_density_5km", self.road_density_5km >= 0.0, ">= 0"),
            ("tmin_c", self.tmin_c <= self.tmax_c, "<= tmax_c"),
        ];
        match ranged.iter().find(|(_, ok, _)| !ok) {
            Some((name, _, rule)) => Err((name, format!("must be {rule}"))),
            None => Ok(()),
        }
    }
}

/// Annual spectral index composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub ndvi: f64,
    pub evi: f64,
}

/// Inclusive range of years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub first: Year,
    pub last: Year,
}

impl YearWindow {
    pub fn new(first: Year, last: Year) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidConfig(format!(
                "empty year window {first}..{last}"
            )));
        }
        Ok(YearWindow { first, last })
    }

    pub fn contains(&self, year: Year) -> bool {
        (self.first..=self.last).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = Year> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for YearWindow {
    fn default() -> Self {
        YearWindow {
            first: 2017,
            last: 2024,
        }
    }
}

pub fn valid_lon_lat(lon: f64, lat: f64) -> bool {
    (-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat)
}

/// One restoration polygon, reduced to centroid, area and annual data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub centroid_lon: f64,
    pub centroid_lat: f64,
    pub area_ha: f64,
    pub start_year: Year,
    pub strategy: Strategy,
    pub start_lulc: Option<LulcClass>,
    pub embeddings: BTreeMap<Year, EmbeddingVector>,
    pub spectral: BTreeMap<Year, SpectralSample>,
    pub covariates: BTreeMap<Year, CovariateSet>,
}

/// Stability classification of a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    Stable(LulcClass),
    Changing { from: LulcClass, to: LulcClass },
    Neither,
}

impl Stability {
    pub fn changing(from: LulcClass, to: LulcClass) -> Result<Self> {
        if from == to {
            return Err(Error::SameClassTransition(from));
        }
        Ok(Stability::Changing { from, to })
    }

    pub fn stable_class(&self) -> Option<LulcClass> {
        match self {
            Stability::Stable(c) => Some(*c),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Stability::Stable(_) => "stable",
            Stability::Changing { .. } => "changing",
            Stability::Neither => "neither",
        }
    }
}

/// A sampled reference pixel with its annual label series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub point_id: String,
    pub lon: f64,
    pub lat: f64,
    pub lulc_series: BTreeMap<Year, LulcClass>,
    pub embeddings: BTreeMap<Year, EmbeddingVector>,
    /// `None` until the reference engine has classified the point.
    pub stability: Option<Stability>,
}

impl ReferencePoint {
    pub fn stable_class(&self) -> Option<LulcClass> {
        self.stability.and_then(|s| s.stable_class())
    }
}

//! CSV ingestion: embeddings, site metadata, spectral indices, covariates and
//! reference points, joined into a [`Dataset`].
//!
//! All inputs are UTF-8 CSV with a header row and `.` as decimal separator.
//! Rows may arrive in any order; every output is keyed or sorted by id so
//! shuffled inputs load to an identical dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    valid_lon_lat, CovariateSet, EmbeddingVector, LulcClass, LulcCodes, ReferencePoint,
    SiteRecord, SpectralSample, Strategy, Year, YearWindow,
};

/// All embeddings of one file, keyed by `(id, year)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<(String, Year), EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str, year: Year) -> Option<&EmbeddingVector> {
        self.vectors.get(&(id.to_string(), year))
    }

    /// All years available for `id`.
    pub fn for_id(&self, id: &str) -> BTreeMap<Year, EmbeddingVector> {
        self.vectors
            .range((id.to_string(), Year::MIN)..=(id.to_string(), Year::MAX))
            .map(|((_, year), v)| (*year, v.clone()))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Year, &EmbeddingVector)> {
        self.vectors
            .iter()
            .map(|((id, year), v)| (id.as_str(), *year, v))
    }
}

/// Column name of embedding coordinate `index`.
pub fn embedding_column(index: usize) -> String {
    format!("A{index:02}")
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<StringRecord> {
    rdr.headers().cloned().map_err(csv_error)
}

/// Header lookup with required-column checking.
struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &StringRecord, required: &[&str]) -> Result<Self> {
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for name in required {
            if !index.contains_key(*name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        Ok(Columns { index })
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn req(&self, name: &str) -> usize {
        self.index[name]
    }
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn text<'r>(rec: &'r StringRecord, idx: usize, name: &str) -> Result<&'r str> {
    match rec.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::MissingMetadataField {
            line: line_of(rec),
            field: name.to_string(),
        }),
    }
}

fn number<T: FromStr>(rec: &StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = text(rec, idx, name)?;
    raw.parse::<T>().map_err(|_| Error::InvalidValue {
        line: line_of(rec),
        field: name.to_string(),
        message: format!("cannot parse {raw:?}"),
    })
}

fn finite(rec: &StringRecord, idx: usize, name: &str) -> Result<f64> {
    let v: f64 = number(rec, idx, name)?;
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            line: line_of(rec),
            field: name.to_string(),
            message: format!("{v} is not finite"),
        });
    }
    Ok(v)
}

/// Reads `id,year,A00,...`; the dimension is the number of `A` columns.
pub fn read_embeddings<R: Read>(reader: R) -> Result<EmbeddingTable> {
    let mut rdr = csv_reader(reader);
    let header = headers(&mut rdr)?;
    for (i, name) in ["id", "year"].iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let dim = header.len() - 2;
    if dim == 0 {
        return Err(Error::MissingColumn(embedding_column(0)));
    }
    for j in 0..dim {
        if header.get(j + 2) != Some(embedding_column(j).as_str()) {
            return Err(Error::MissingColumn(embedding_column(j)));
        }
    }

    let mut vectors = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        if rec.len() > header.len() {
            return Err(Error::MissingColumn(embedding_column(dim)));
        }
        if rec.len() < header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let id = text(&rec, 0, "id")?.to_string();
        let year: Year = number(&rec, 1, "year")?;
        let values = (0..dim)
            .map(|j| number::<f64>(&rec, j + 2, &embedding_column(j)))
            .collect::<Result<Vec<_>>>()?;
        let vector = EmbeddingVector::new(values, dim).map_err(|e| Error::InvalidValue {
            line,
            field: "embedding".into(),
            message: e.to_string(),
        })?;
        if vectors.insert((id.clone(), year), vector).is_some() {
            return Err(Error::DuplicateKey { id, year });
        }
    }
    Ok(EmbeddingTable { dim, vectors })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    read_embeddings(open(path.as_ref())?)
}

/// Reads a `code,name` table.
pub fn read_lulc_codes<R: Read>(reader: R) -> Result<LulcCodes> {
    let mut rdr = csv_reader(reader);
    let cols = Columns::new(&headers(&mut rdr)?, &["code", "name"])?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let code: i32 = number(&rec, cols.req("code"), "code")?;
        let name = text(&rec, cols.req("name"), "name")?;
        let class: LulcClass = name.parse().map_err(|_| Error::InvalidValue {
            line: line_of(&rec),
            field: "name".into(),
            message: format!("unknown class {name:?}"),
        })?;
        pairs.push((code, class));
    }
    LulcCodes::new(pairs)
}

pub fn load_lulc_codes(path: impl AsRef<Path>) -> Result<LulcCodes> {
    read_lulc_codes(open(path.as_ref())?)
}

/// Settings shared by the loaders.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Years for which embeddings, spectral and covariate rows are kept.
    pub window: YearWindow,
    /// Years whose `lulc_<Y>` columns must exist in the reference table.
    pub lulc_years: YearWindow,
    pub codes: LulcCodes,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            window: YearWindow::default(),
            lulc_years: YearWindow {
                first: 2015,
                last: 2024,
            },
            codes: LulcCodes::default(),
        }
    }
}

type PerYear<T> = BTreeMap<String, BTreeMap<Year, T>>;

/// Counts of rows that did not make it into the dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Sites with no embedding year in the window; excluded from the output.
    pub sites_without_embeddings: Vec<String>,
    /// Per-year rows outside the configured window.
    pub out_of_window_rows: usize,
    /// Spectral/covariate rows whose id matches no site.
    pub unmatched_rows: usize,
    /// LULC codes absent from the code table, kept as `Other(code)`.
    pub unmapped_codes: BTreeSet<i32>,
}

fn read_per_year<R: Read, T>(
    reader: R,
    required: &[&str],
    parse: impl Fn(&StringRecord, &Columns) -> Result<T>,
) -> Result<PerYear<T>> {
    let mut rdr = csv_reader(reader);
    let mut all = vec!["id", "year"];
    all.extend_from_slice(required);
    let cols = Columns::new(&headers(&mut rdr)?, &all)?;
    let mut out: PerYear<T> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let id = text(&rec, cols.req("id"), "id")?.to_string();
        let year: Year = number(&rec, cols.req("year"), "year")?;
        let value = parse(&rec, &cols)?;
        if out.entry(id.clone()).or_default().insert(year, value).is_some() {
            return Err(Error::DuplicateKey { id, year });
        }
    }
    Ok(out)
}

/// Reads `id,year,ndvi,evi`. Extra columns (monthly composites) are ignored.
pub fn read_spectral<R: Read>(reader: R) -> Result<PerYear<SpectralSample>> {
    read_per_year(reader, &["ndvi", "evi"], |rec, cols| {
        let ndvi = finite(rec, cols.req("ndvi"), "ndvi")?;
        if !(-1.0..=1.0).contains(&ndvi) {
            return Err(Error::InvalidValue {
                line: line_of(rec),
                field: "ndvi".into(),
                message: format!("{ndvi} outside [-1, 1]"),
            });
        }
        let evi = finite(rec, cols.req("evi"), "evi")?;
        Ok(SpectralSample { ndvi, evi })
    })
}

pub fn read_covariates<R: Read>(reader: R) -> Result<PerYear<CovariateSet>> {
    read_per_year(reader, &CovariateSet::COLUMNS, |rec, cols| {
        let mut values = [0.0; 9];
        for (slot, name) in values.iter_mut().zip(CovariateSet::COLUMNS) {
            *slot = finite(rec, cols.req(name), name)?;
        }
        let cov = CovariateSet::from_array(values);
        cov.check().map_err(|(field, message)| Error::InvalidValue {
            line: line_of(rec),
            field: field.to_string(),
            message,
        })?;
        Ok(cov)
    })
}

/// Site metadata row before the per-year join.
struct SiteMeta {
    site_id: String,
    lon: f64,
    lat: f64,
    area_ha: f64,
    start_year: Year,
    strategy: Strategy,
    start_lulc: Option<LulcClass>,
}

fn read_site_meta<R: Read>(reader: R, codes: &LulcCodes) -> Result<Vec<SiteMeta>> {
    let mut rdr = csv_reader(reader);
    let cols = Columns::new(
        &headers(&mut rdr)?,
        &["site_id", "lon", "lat", "area_ha", "start_year", "strategy"],
    )?;
    let lulc_col = cols.get("start_lulc");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let site_id = text(&rec, cols.req("site_id"), "site_id")?.to_string();
        let lon = finite(&rec, cols.req("lon"), "lon")?;
        let lat = finite(&rec, cols.req("lat"), "lat")?;
        if !valid_lon_lat(lon, lat) {
            return Err(Error::InvalidValue {
                line,
                field: "lon/lat".into(),
                message: format!("({lon}, {lat}) is not a valid coordinate"),
            });
        }
        let area_ha = finite(&rec, cols.req("area_ha"), "area_ha")?;
        if area_ha <= 0.0 {
            return Err(Error::InvalidValue {
                line,
                field: "area_ha".into(),
                message: format!("{area_ha} must be positive"),
            });
        }
        let start_year: Year = number(&rec, cols.req("start_year"), "start_year")?;
        let raw_strategy = rec.get(cols.req("strategy")).unwrap_or("");
        let strategy =
            Strategy::parse_label(raw_strategy).ok_or_else(|| Error::UnknownStrategy {
                line,
                value: raw_strategy.to_string(),
            })?;
        let start_lulc = match lulc_col.and_then(|i| rec.get(i)) {
            Some(label) if !label.is_empty() => {
                Some(codes.parse_label(label).map_err(|_| Error::InvalidValue {
                    line,
                    field: "start_lulc".into(),
                    message: format!("unknown class {label:?}"),
                })?)
            }
            _ => None,
        };
        out.push(SiteMeta {
            site_id,
            lon,
            lat,
            area_ha,
            start_year,
            strategy,
            start_lulc,
        });
    }
    Ok(out)
}

/// Keeps in-window entries of `map` and counts the rest.
fn window_filter<T>(
    map: BTreeMap<Year, T>,
    window: &YearWindow,
    dropped: &mut usize,
) -> BTreeMap<Year, T> {
    let before = map.len();
    let kept: BTreeMap<Year, T> = map.into_iter().filter(|(y, _)| window.contains(*y)).collect();
    *dropped += before - kept.len();
    kept
}

/// Joins site metadata with the per-year tables.
///
/// Sites without any in-window embedding are listed in the report and left
/// out of the result. Output is sorted by `site_id`.
pub fn read_sites<R: Read>(
    meta: R,
    embeddings: &EmbeddingTable,
    spectral: Option<PerYear<SpectralSample>>,
    covariates: Option<PerYear<CovariateSet>>,
    opts: &IngestOptions,
) -> Result<(Vec<SiteRecord>, IngestReport)> {
    let metas = read_site_meta(meta, &opts.codes)?;
    let mut spectral = spectral.unwrap_or_default();
    let mut covariates = covariates.unwrap_or_default();
    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    let mut sites = Vec::with_capacity(metas.len());
    for m in metas {
        if !seen.insert(m.site_id.clone()) {
            return Err(Error::DuplicateId(m.site_id));
        }
        let emb = window_filter(
            embeddings.for_id(&m.site_id),
            &opts.window,
            &mut report.out_of_window_rows,
        );
        let spec = window_filter(
            spectral.remove(&m.site_id).unwrap_or_default(),
            &opts.window,
            &mut report.out_of_window_rows,
        );
        let cov = window_filter(
            covariates.remove(&m.site_id).unwrap_or_default(),
            &opts.window,
            &mut report.out_of_window_rows,
        );
        if emb.is_empty() {
            warn!("site {} has no embeddings in the window; skipped", m.site_id);
            report.sites_without_embeddings.push(m.site_id);
            continue;
        }
        sites.push(SiteRecord {
            site_id: m.site_id,
            centroid_lon: m.lon,
            centroid_lat: m.lat,
            area_ha: m.area_ha,
            start_year: m.start_year,
            strategy: m.strategy,
            start_lulc: m.start_lulc,
            embeddings: emb,
            spectral: spec,
            covariates: cov,
        });
    }
    report.unmatched_rows = spectral.values().map(|m| m.len()).sum::<usize>()
        + covariates.values().map(|m| m.len()).sum::<usize>();
    sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));
    Ok((sites, report))
}

pub fn load_sites(
    meta_path: impl AsRef<Path>,
    embeddings: &EmbeddingTable,
    spectral_path: Option<&Path>,
    covariates_path: Option<&Path>,
    opts: &IngestOptions,
) -> Result<(Vec<SiteRecord>, IngestReport)> {
    let (spectral, covariates) = rayon::join(
        || spectral_path.map(|p| read_spectral(open(p)?)).transpose(),
        || covariates_path.map(|p| read_covariates(open(p)?)).transpose(),
    );
    read_sites(
        open(meta_path.as_ref())?,
        embeddings,
        spectral?,
        covariates?,
        opts,
    )
}

pub fn lulc_column(year: Year) -> String {
    format!("lulc_{year}")
}

/// Reads `point_id,lon,lat,lulc_<Y>...` and attaches embeddings.
///
/// Points come back unclassified (`stability == None`), sorted by id.
pub fn read_reference_points<R: Read>(
    meta: R,
    embeddings: &EmbeddingTable,
    opts: &IngestOptions,
) -> Result<(Vec<ReferencePoint>, IngestReport)> {
    let mut rdr = csv_reader(meta);
    let header = headers(&mut rdr)?;
    let cols = Columns::new(&header, &["point_id", "lon", "lat"])?;
    let year_cols = opts
        .lulc_years
        .years()
        .map(|y| {
            cols.get(&lulc_column(y))
                .map(|i| (y, i))
                .ok_or(Error::MissingYearColumn(y))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let point_id = text(&rec, cols.req("point_id"), "point_id")?.to_string();
        if !seen.insert(point_id.clone()) {
            return Err(Error::DuplicateId(point_id));
        }
        let lon = finite(&rec, cols.req("lon"), "lon")?;
        let lat = finite(&rec, cols.req("lat"), "lat")?;
        if !valid_lon_lat(lon, lat) {
            return Err(Error::InvalidValue {
                line,
                field: "lon/lat".into(),
                message: format!("({lon}, {lat}) is not a valid coordinate"),
            });
        }
        let mut lulc_series = BTreeMap::new();
        for &(year, idx) in &year_cols {
            let column = lulc_column(year);
            let label = text(&rec, idx, &column)?;
            let class = match label.parse::<i32>() {
                Ok(code) => {
                    if !opts.codes.is_mapped(code) && report.unmapped_codes.insert(code) {
                        warn!("LULC code {code} is not in the code table; kept as Other({code})");
                    }
                    opts.codes.class_of(code)
                }
                Err(_) => label.parse().map_err(|_| Error::InvalidValue {
                    line,
                    field: column.clone(),
                    message: format!("unknown class {label:?}"),
                })?,
            };
            lulc_series.insert(year, class);
        }
        let embeddings = window_filter(
            embeddings.for_id(&point_id),
            &opts.window,
            &mut report.out_of_window_rows,
        );
        points.push(ReferencePoint {
            point_id,
            lon,
            lat,
            lulc_series,
            embeddings,
            stability: None,
        });
    }
    points.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    Ok((points, report))
}

pub fn load_reference_points(
    meta_path: impl AsRef<Path>,
    embeddings: &EmbeddingTable,
    opts: &IngestOptions,
) -> Result<(Vec<ReferencePoint>, IngestReport)> {
    read_reference_points(open(meta_path.as_ref())?, embeddings, opts)
}

/// The joined study dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sites: Vec<SiteRecord>,
    pub references: Vec<ReferencePoint>,
    pub window: YearWindow,
    pub dim: usize,
}

impl Dataset {
    /// Checks id uniqueness and sorts both collections by id.
    pub fn new(
        mut sites: Vec<SiteRecord>,
        mut references: Vec<ReferencePoint>,
        window: YearWindow,
        dim: usize,
    ) -> Result<Self> {
        sites.sort_by(|a, b| a.site_id.cmp(&b.site_id));
        references.sort_by(|a, b| a.point_id.cmp(&b.point_id));
        if let Some(w) = sites.windows(2).find(|w| w[0].site_id == w[1].site_id) {
            return Err(Error::DuplicateId(w[0].site_id.clone()));
        }
        if let Some(w) = references
            .windows(2)
            .find(|w| w[0].point_id == w[1].point_id)
        {
            return Err(Error::DuplicateId(w[0].point_id.clone()));
        }
        Ok(Dataset {
            sites,
            references,
            window,
            dim,
        })
    }
}

/// Standard input file locations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub embeddings: PathBuf,
    pub sites: PathBuf,
    pub spectral: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub reference_points: PathBuf,
    pub lulc_codes: Option<PathBuf>,
}

impl InputPaths {
    /// The file names written by the synthetic generator, inside `dir`.
    /// Optional tables are only included when the file exists.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        InputPaths {
            embeddings: dir.join("embeddings.csv"),
            sites: dir.join("sites.csv"),
            spectral: optional("spectral.csv"),
            covariates: optional("covariates.csv"),
            reference_points: dir.join("reference_points.csv"),
            lulc_codes: optional("lulc_codes.csv"),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.embeddings.as_path(), self.sites.as_path()];
        v.extend(self.spectral.as_deref());
        v.extend(self.covariates.as_deref());
        v.push(self.reference_points.as_path());
        v.extend(self.lulc_codes.as_deref());
        v
    }
}

/// Loads and joins every input table. A code table file, when given,
/// replaces `opts.codes`.
pub fn load_dataset(paths: &InputPaths, opts: &IngestOptions) -> Result<(Dataset, IngestReport)> {
    let mut opts = opts.clone();
    if let Some(p) = &paths.lulc_codes {
        opts.codes = load_lulc_codes(p)?;
    }
    let embeddings = load_embeddings(&paths.embeddings)?;
    let (sites, site_report) = load_sites(
        &paths.sites,
        &embeddings,
        paths.spectral.as_deref(),
        paths.covariates.as_deref(),
        &opts,
    )?;
    let (refs, ref_report) = load_reference_points(&paths.reference_points, &embeddings, &opts)?;
    let report = IngestReport {
        sites_without_embeddings: site_report.sites_without_embeddings,
        out_of_window_rows: site_report.out_of_window_rows + ref_report.out_of_window_rows,
        unmatched_rows: site_report.unmatched_rows,
        unmapped_codes: ref_report.unmapped_codes,
    };
    let dataset = Dataset::new(sites, refs, opts.window, embeddings.dim())?;
    Ok((dataset, report))
}

/// Site filtering thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterRules {
    /// Inclusive lower bound on buffered area.
    pub min_area_ha: f64,
    /// Inclusive start-year bounds.
    pub start_years: (Year, Year),
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_area_ha: 1.0,
            start_years: (2017, 2024),
        }
    }
}

/// Site counts through the filter stages, in application order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub dropped_area: usize,
    pub dropped_start_year: usize,
    pub kept: usize,
}

/// Applies the area rule, then the start-year rule.
pub fn filter_sites(sites: Vec<SiteRecord>, rules: &FilterRules) -> (Vec<SiteRecord>, FilterReport) {
    let mut report = FilterReport {
        input: sites.len(),
        ..Default::default()
    };
    let (lo, hi) = rules.start_years;
    let kept: Vec<SiteRecord> = sites
        .into_iter()
        .filter(|s| {
            if s.area_ha < rules.min_area_ha {
                report.dropped_area += 1;
                false
            } else if s.start_year < lo || s.start_year > hi {
                report.dropped_start_year += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

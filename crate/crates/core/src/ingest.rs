//! Raw-source ingestion.
//!
//! Three kinds of CSV source are read through a [`ColumnManifest`] that maps the
//! canonical feature names onto whatever headers a given file uses:
//!
//! * `animal`: one row per animal (EID, date of birth, weaning date, weaning weight)
//! * `weather`: daily rainfall and/or temperature, merged across files by date
//! * `weights`: individual weigh events from the in-paddock platform

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{chrono_format, YearMonth, DEFAULT_DATE_FORMAT};
use crate::error::{Error, Result};
use crate::preprocess::StudyWindow;

pub const EID: &str = "EID";
pub const DATE_OF_BIRTH: &str = "Date of Birth";
pub const WEANING_DATE: &str = "Weaning Date";
pub const WEANING_WEIGHT: &str = "Weaning Weight";
pub const DATE_OF_WEIGHT: &str = "Date of Weight";
pub const ACTUAL_WEIGHT: &str = "Actual Weight";
pub const RAINFALL_DATE: &str = "Rainfall Date";
pub const RAINFALL_QUANTITY: &str = "Rainfall Quantity";
pub const TEMPERATURE_DATE: &str = "Temperature Date";
pub const TEMPERATURE: &str = "Temperature";

const ANIMAL_FEATURES: [&str; 4] = [EID, DATE_OF_BIRTH, WEANING_DATE, WEANING_WEIGHT];
const WEIGHT_FEATURES: [&str; 3] = [EID, DATE_OF_WEIGHT, ACTUAL_WEIGHT];
const RAINFALL_FEATURES: [&str; 2] = [RAINFALL_DATE, RAINFALL_QUANTITY];
const TEMPERATURE_FEATURES: [&str; 2] = [TEMPERATURE_DATE, TEMPERATURE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimalRecord {
    pub eid: String,
    pub date_of_birth: NaiveDate,
    pub weaning_date: NaiveDate,
    pub weaning_weight: f64,
}

/// One day of weather. Either field may be absent when a source only
/// carries the other quantity for that date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDaily {
    pub date: NaiveDate,
    pub rainfall_mm: Option<f64>,
    pub temperature_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeighEvent {
    pub eid: String,
    pub date: NaiveDate,
    pub weight_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceRole {
    Animal,
    Weather,
    Weights,
}

impl SourceRole {
    fn known_features(self) -> &'static [&'static str] {
        match self {
            SourceRole::Animal => &ANIMAL_FEATURES,
            SourceRole::Weights => &WEIGHT_FEATURES,
            SourceRole::Weather => &[RAINFALL_DATE, RAINFALL_QUANTITY, TEMPERATURE_DATE, TEMPERATURE],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: PathBuf,
    pub role: SourceRole,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    /// Required feature name -> source column header.
    pub columns: BTreeMap<String, String>,
}

fn default_date_format() -> String {
    DEFAULT_DATE_FORMAT.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub first_month: YearMonth,
    pub last_month: YearMonth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnManifest {
    pub files: Vec<ManifestFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ColumnManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: ColumnManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.check()?;
        Ok(manifest)
    }

    /// Structural checks that do not need the files themselves.
    pub fn check(&self) -> Result<()> {
        if self.files.is_empty() {
            return Err(Error::Manifest("manifest lists no files".into()));
        }
        let mut has_rain = false;
        let mut has_temp = false;
        for f in &self.files {
            let known = f.role.known_features();
            for feature in f.columns.keys() {
                if !known.contains(&feature.as_str()) {
                    return Err(Error::Manifest(format!(
                        "{}: feature {feature:?} is not valid for role {:?}",
                        f.path.display(),
                        f.role
                    )));
                }
            }
            match f.role {
                SourceRole::Animal => require_all(f, &ANIMAL_FEATURES)?,
                SourceRole::Weights => require_all(f, &WEIGHT_FEATURES)?,
                SourceRole::Weather => {
                    let rain = pair_state(f, &RAINFALL_FEATURES)?;
                    let temp = pair_state(f, &TEMPERATURE_FEATURES)?;
                    if !rain && !temp {
                        return Err(Error::Manifest(format!(
                            "{}: weather file maps neither rainfall nor temperature",
                            f.path.display()
                        )));
                    }
                    has_rain |= rain;
                    has_temp |= temp;
                }
            }
        }
        for role in [SourceRole::Animal, SourceRole::Weights] {
            if !self.files.iter().any(|f| f.role == role) {
                return Err(Error::Manifest(format!("no file declared for role {role:?}")));
            }
        }
        if !has_rain || !has_temp {
            return Err(Error::Manifest(
                "weather files must map both rainfall and temperature".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn entry(&self, path: &Path, role: SourceRole) -> Option<&ManifestFile> {
        self.files
            .iter()
            .find(|f| f.role == role && (f.path == path || self.resolve(&f.path) == path))
    }

    /// Manifest mapping every feature to an identically named header.
    pub fn identity(animals: &str, weather: &str, weights: &str, window: Option<WindowSpec>) -> Self {
        let map = |features: &[&str]| {
            features
                .iter()
                .map(|f| (f.to_string(), f.to_string()))
                .collect::<BTreeMap<_, _>>()
        };
        let weather_features = [RAINFALL_DATE, RAINFALL_QUANTITY, TEMPERATURE_DATE, TEMPERATURE];
        Self {
            files: vec![
                ManifestFile {
                    path: animals.into(),
                    role: SourceRole::Animal,
                    date_format: default_date_format(),
                    columns: map(&ANIMAL_FEATURES),
                },
                ManifestFile {
                    path: weather.into(),
                    role: SourceRole::Weather,
                    date_format: default_date_format(),
                    columns: map(&weather_features),
                },
                ManifestFile {
                    path: weights.into(),
                    role: SourceRole::Weights,
                    date_format: default_date_format(),
                    columns: map(&WEIGHT_FEATURES),
                },
            ],
            window,
            base_dir: PathBuf::new(),
        }
    }
}

fn require_all(f: &ManifestFile, features: &[&str]) -> Result<()> {
    for feature in features {
        if !f.columns.contains_key(*feature) {
            return Err(Error::Manifest(format!(
                "{}: required feature {feature:?} is not mapped",
                f.path.display()
            )));
        }
    }
    Ok(())
}

/// True if both features of a (date, value) pair are mapped; error if only one is.
fn pair_state(f: &ManifestFile, pair: &[&str; 2]) -> Result<bool> {
    match (f.columns.contains_key(pair[0]), f.columns.contains_key(pair[1])) {
        (true, true) => Ok(true),
        (false, false) => Ok(false),
        _ => Err(Error::Manifest(format!(
            "{}: {:?} and {:?} must be mapped together",
            f.path.display(),
            pair[0],
            pair[1]
        ))),
    }
}

/// Records parsed from one source file.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceRecords {
    Animals(Vec<AnimalRecord>),
    Weather(Vec<WeatherDaily>),
    Weights(Vec<WeighEvent>),
}

impl SourceRecords {
    pub fn len(&self) -> usize {
        match self {
            SourceRecords::Animals(v) => v.len(),
            SourceRecords::Weather(v) => v.len(),
            SourceRecords::Weights(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parse a file declared in `manifest` under `role`.
pub fn parse_source(path: &Path, manifest: &ColumnManifest, role: SourceRole) -> Result<SourceRecords> {
    let entry = manifest
        .entry(path, role)
        .ok_or_else(|| Error::Manifest(format!("{} is not declared with role {role:?}", path.display())))?;
    let resolved = manifest.resolve(&entry.path);
    let file = File::open(&resolved).map_err(|e| Error::io(&resolved, e))?;
    parse_reader(file, entry, &resolved.display().to_string())
}

/// Parse CSV content from any reader according to one manifest entry.
pub fn parse_reader<R: Read>(reader: R, entry: &ManifestFile, label: &str) -> Result<SourceRecords> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();

    let mut index = BTreeMap::new();
    for (feature, header) in &entry.columns {
        let pos = headers.iter().position(|h| h == header).ok_or_else(|| {
            Error::Manifest(format!(
                "{label}: column {header:?} (mapped to {feature:?}) not found in header"
            ))
        })?;
        index.insert(feature.as_str(), pos);
    }

    let parser = RowParser {
        label,
        format: chrono_format(&entry.date_format),
        index,
    };

    match entry.role {
        SourceRole::Animal => {
            let mut out = Vec::new();
            let mut seen = BTreeSet::new();
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| Error::csv(label, e))?;
                let animal = AnimalRecord {
                    eid: parser.text(&rec, row, EID)?,
                    date_of_birth: parser.date(&rec, row, DATE_OF_BIRTH)?,
                    weaning_date: parser.date(&rec, row, WEANING_DATE)?,
                    weaning_weight: parser.number(&rec, row, WEANING_WEIGHT)?,
                };
                if !seen.insert(animal.eid.clone()) {
                    return Err(Error::DuplicateKey {
                        file: label.to_string(),
                        key: animal.eid,
                    });
                }
                out.push(animal);
            }
            Ok(SourceRecords::Animals(out))
        }
        SourceRole::Weights => {
            let mut out = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| Error::csv(label, e))?;
                let event = WeighEvent {
                    eid: parser.text(&rec, row, EID)?,
                    date: parser.date(&rec, row, DATE_OF_WEIGHT)?,
                    weight_kg: parser.number(&rec, row, ACTUAL_WEIGHT)?,
                };
                if event.weight_kg <= 0.0 {
                    return Err(parser.row_error(row, format!("weight {} kg is not positive", event.weight_kg)));
                }
                out.push(event);
            }
            Ok(SourceRecords::Weights(out))
        }
        SourceRole::Weather => {
            let has_rain = parser.index.contains_key(RAINFALL_DATE);
            let has_temp = parser.index.contains_key(TEMPERATURE_DATE);
            let mut days: BTreeMap<NaiveDate, WeatherDaily> = BTreeMap::new();
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| Error::csv(label, e))?;
                if has_rain && !parser.is_blank(&rec, RAINFALL_DATE) {
                    let date = parser.date(&rec, row, RAINFALL_DATE)?;
                    let mm = parser.number(&rec, row, RAINFALL_QUANTITY)?;
                    if mm < 0.0 {
                        return Err(parser.row_error(row, format!("negative rainfall {mm}")));
                    }
                    merge_field(&mut days, date, mm, Field::Rain, label)?;
                }
                if has_temp && !parser.is_blank(&rec, TEMPERATURE_DATE) {
                    let date = parser.date(&rec, row, TEMPERATURE_DATE)?;
                    let c = parser.number(&rec, row, TEMPERATURE)?;
                    merge_field(&mut days, date, c, Field::Temp, label)?;
                }
            }
            Ok(SourceRecords::Weather(days.into_values().collect()))
        }
    }
}

#[derive(Clone, Copy)]
enum Field {
    Rain,
    Temp,
}

fn merge_field(
    days: &mut BTreeMap<NaiveDate, WeatherDaily>,
    date: NaiveDate,
    value: f64,
    field: Field,
    label: &str,
) -> Result<()> {
    let day = days.entry(date).or_insert(WeatherDaily {
        date,
        rainfall_mm: None,
        temperature_c: None,
    });
    let (slot, name) = match field {
        Field::Rain => (&mut day.rainfall_mm, "rainfall"),
        Field::Temp => (&mut day.temperature_c, "temperature"),
    };
    if slot.is_some() {
        return Err(Error::DuplicateKey {
            file: label.to_string(),
            key: format!("{name} on {date}"),
        });
    }
    *slot = Some(value);
    Ok(())
}

struct RowParser<'a> {
    label: &'a str,
    format: String,
    index: BTreeMap<&'a str, usize>,
}

impl RowParser<'_> {
    fn row_error(&self, row: usize, message: String) -> Error {
        Error::Row {
            file: self.label.to_string(),
            row,
            message,
        }
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, row: usize, feature: &str) -> Result<&'r str> {
        let pos = self.index[feature];
        rec.get(pos)
            .ok_or_else(|| self.row_error(row, format!("missing field for {feature:?}")))
    }

    fn is_blank(&self, rec: &csv::StringRecord, feature: &str) -> bool {
        rec.get(self.index[feature]).is_none_or(|s| s.is_empty())
    }

    fn text(&self, rec: &csv::StringRecord, row: usize, feature: &str) -> Result<String> {
        let s = self.field(rec, row, feature)?;
        if s.is_empty() {
            return Err(self.row_error(row, format!("{feature:?} is empty")));
        }
        Ok(s.to_string())
    }

    fn date(&self, rec: &csv::StringRecord, row: usize, feature: &str) -> Result<NaiveDate> {
        let s = self.field(rec, row, feature)?;
        NaiveDate::parse_from_str(s, &self.format).map_err(|e| {
            self.row_error(
                row,
                format!(
                    "cannot parse {feature:?} value {s:?} with format {:?}: {e}",
                    self.format
                ),
            )
        })
    }

    fn number(&self, rec: &csv::StringRecord, row: usize, feature: &str) -> Result<f64> {
        let s = self.field(rec, row, feature)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.row_error(row, format!("cannot parse {feature:?} value {s:?} as a number"))),
        }
    }
}

/// Merge weather records from several sources into one record per date.
pub fn merge_weather(parts: Vec<Vec<WeatherDaily>>) -> Result<Vec<WeatherDaily>> {
    let mut days: BTreeMap<NaiveDate, WeatherDaily> = BTreeMap::new();
    for part in parts {
        for day in part {
            if let Some(mm) = day.rainfall_mm {
                merge_field(&mut days, day.date, mm, Field::Rain, "weather")?;
            }
            if let Some(c) = day.temperature_c {
                merge_field(&mut days, day.date, c, Field::Temp, "weather")?;
            }
        }
    }
    Ok(days.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBundle {
    pub animals: Vec<AnimalRecord>,
    pub weather: Vec<WeatherDaily>,
    pub events: Vec<WeighEvent>,
    pub window: StudyWindow,
}

/// Read every file in the manifest into a bundle.
///
/// `window` overrides the manifest's own window; one of the two must be present.
pub fn load_bundle(manifest: &ColumnManifest, window: Option<StudyWindow>) -> Result<RawBundle> {
    let window = match (window, manifest.window) {
        (Some(w), _) => w,
        (None, Some(spec)) => StudyWindow::new(spec.first_month, spec.last_month)?,
        (None, None) => {
            return Err(Error::Manifest(
                "no study window given on the command line or in the manifest".into(),
            ))
        }
    };
    let mut animals = Vec::new();
    let mut weather_parts = Vec::new();
    let mut events = Vec::new();
    for entry in &manifest.files {
        match parse_source(&entry.path, manifest, entry.role)? {
            SourceRecords::Animals(a) => animals.extend(a),
            SourceRecords::Weather(w) => weather_parts.push(w),
            SourceRecords::Weights(e) => events.extend(e),
        }
    }
    let mut seen = BTreeSet::new();
    for a in &animals {
        if !seen.insert(a.eid.as_str()) {
            return Err(Error::DuplicateKey {
                file: "animal sources".into(),
                key: a.eid.clone(),
            });
        }
    }
    Ok(RawBundle {
        animals,
        weather: merge_weather(weather_parts)?,
        events,
        window,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    OrphanEvents {
        eid: String,
        count: usize,
    },
    CoverageGap {
        field: String,
        months: Vec<YearMonth>,
        fatal: bool,
    },
    NonPositiveWeaningWeight {
        eid: String,
        weight: f64,
    },
    WeaningBeforeBirth {
        eid: String,
    },
}

impl Finding {
    pub fn is_fatal(&self) -> bool {
        match self {
            Finding::CoverageGap { fatal, .. } => *fatal,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn accepted(&self) -> bool {
        !self.findings.iter().any(Finding::is_fatal)
    }

    pub fn orphan_event_count(&self) -> usize {
        self.findings
            .iter()
            .map(|f| match f {
                Finding::OrphanEvents { count, .. } => *count,
                _ => 0,
            })
            .sum()
    }
}

/// Cross-source consistency checks.
///
/// Weather is expected over `[window.start - 2 months, window.end]`. A gap is
/// fatal when it falls in a month some feature row actually reads, i.e.
/// `[window.start - 1, window.end - 1]`; gaps elsewhere are reported only.
pub fn validate_bundle(bundle: &RawBundle) -> ValidationReport {
    let mut findings = Vec::new();

    let known: BTreeSet<&str> = bundle.animals.iter().map(|a| a.eid.as_str()).collect();
    let mut orphans: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &bundle.events {
        if !known.contains(e.eid.as_str()) {
            *orphans.entry(e.eid.as_str()).or_default() += 1;
        }
    }
    findings.extend(orphans.into_iter().map(|(eid, count)| Finding::OrphanEvents {
        eid: eid.to_string(),
        count,
    }));

    for a in &bundle.animals {
        if a.weaning_weight <= 0.0 {
            findings.push(Finding::NonPositiveWeaningWeight {
                eid: a.eid.clone(),
                weight: a.weaning_weight,
            });
        }
        if a.weaning_date <= a.date_of_birth {
            findings.push(Finding::WeaningBeforeBirth { eid: a.eid.clone() });
        }
    }

    let w = bundle.window;
    let required = YearMonth::range_inclusive(w.first_month().add_months(-2), w.last_month());
    let needed_first = w.first_month().add_months(-1);
    let needed_last = w.last_month().add_months(-1);
    let mut rain_months = BTreeSet::new();
    let mut temp_months = BTreeSet::new();
    for d in &bundle.weather {
        let ym = YearMonth::of(d.date);
        if d.rainfall_mm.is_some() {
            rain_months.insert(ym);
        }
        if d.temperature_c.is_some() {
            temp_months.insert(ym);
        }
    }
    let required: Vec<YearMonth> = required.collect();
    for (field, present) in [("rainfall", &rain_months), ("temperature", &temp_months)] {
        let missing: Vec<YearMonth> = required.iter().copied().filter(|m| !present.contains(m)).collect();
        if !missing.is_empty() {
            let fatal = missing.iter().any(|m| *m >= needed_first && *m <= needed_last);
            findings.push(Finding::CoverageGap {
                field: field.to_string(),
                months: missing,
                fatal,
            });
        }
    }

    ValidationReport { findings }
}

fn fmt_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(&r)?;
    }
    wtr.flush()
}

/// Canonical animal CSV: identity headers, ISO dates, shortest round-trip floats.
pub fn write_animals<W: Write>(out: W, animals: &[AnimalRecord]) -> std::io::Result<()> {
    write_csv(
        out,
        &ANIMAL_FEATURES,
        animals.iter().map(|a| {
            vec![
                a.eid.clone(),
                fmt_date(a.date_of_birth),
                fmt_date(a.weaning_date),
                a.weaning_weight.to_string(),
            ]
        }),
    )
}

pub fn write_weather<W: Write>(out: W, weather: &[WeatherDaily]) -> std::io::Result<()> {
    write_csv(
        out,
        &[RAINFALL_DATE, RAINFALL_QUANTITY, TEMPERATURE_DATE, TEMPERATURE],
        weather.iter().map(|d| {
            let (rd, rv) = match d.rainfall_mm {
                Some(v) => (fmt_date(d.date), v.to_string()),
                None => (String::new(), String::new()),
            };
            let (td, tv) = match d.temperature_c {
                Some(v) => (fmt_date(d.date), v.to_string()),
                None => (String::new(), String::new()),
            };
            vec![rd, rv, td, tv]
        }),
    )
}

pub fn write_weights<W: Write>(out: W, events: &[WeighEvent]) -> std::io::Result<()> {
    write_csv(
        out,
        &WEIGHT_FEATURES,
        events
            .iter()
            .map(|e| vec![e.eid.clone(), fmt_date(e.date), e.weight_kg.to_string()]),
    )
}

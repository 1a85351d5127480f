//! Monthly panel -> supervised feature rows, and the four dataset variants.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::ingest::AnimalRecord;
use crate::matrix::Matrix;
use crate::preprocess::{MonthlyWeather, MonthlyWeight, StudyWindow};

/// Columns of the feature table, in output order. The first is the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureColumn {
    NextMonthWeight,
    WeaningWeight,
    AgeMonths,
    CurrentMonthWeight,
    PreviousMonthWeight,
    Rainfall0,
    Rainfall1,
    Rainfall2,
    Temperature0,
    Temperature1,
    Temperature2,
}

impl FeatureColumn {
    pub const ALL: [FeatureColumn; 11] = [
        FeatureColumn::NextMonthWeight,
        FeatureColumn::WeaningWeight,
        FeatureColumn::AgeMonths,
        FeatureColumn::CurrentMonthWeight,
        FeatureColumn::PreviousMonthWeight,
        FeatureColumn::Rainfall0,
        FeatureColumn::Rainfall1,
        FeatureColumn::Rainfall2,
        FeatureColumn::Temperature0,
        FeatureColumn::Temperature1,
        FeatureColumn::Temperature2,
    ];

    pub fn header(self) -> &'static str {
        match self {
            FeatureColumn::NextMonthWeight => "Next month weight",
            FeatureColumn::WeaningWeight => "Weaning weight",
            FeatureColumn::AgeMonths => "Current age by month",
            FeatureColumn::CurrentMonthWeight => "Current month weight",
            FeatureColumn::PreviousMonthWeight => "Previous month weight",
            FeatureColumn::Rainfall0 => "Current month rainfall",
            FeatureColumn::Rainfall1 => "Previous first-month rainfall",
            FeatureColumn::Rainfall2 => "Previous second-month rainfall",
            FeatureColumn::Temperature0 => "Current month temperature",
            FeatureColumn::Temperature1 => "Previous first-month temperature",
            FeatureColumn::Temperature2 => "Previous second-month temperature",
        }
    }
}

/// One supervised example: an animal in an interior month of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub eid: String,
    pub month: YearMonth,
    pub next_month_weight: f64,
    pub weaning_weight: f64,
    pub age_months: u32,
    pub current_month_weight: f64,
    pub previous_month_weight: f64,
    pub rainfall_0: f64,
    pub rainfall_1: f64,
    pub rainfall_2: f64,
    pub temperature_0: f64,
    pub temperature_1: f64,
    pub temperature_2: f64,
}

impl FeatureRow {
    pub fn value(&self, column: FeatureColumn) -> f64 {
        match column {
            FeatureColumn::NextMonthWeight => self.next_month_weight,
            FeatureColumn::WeaningWeight => self.weaning_weight,
            FeatureColumn::AgeMonths => self.age_months as f64,
            FeatureColumn::CurrentMonthWeight => self.current_month_weight,
            FeatureColumn::PreviousMonthWeight => self.previous_month_weight,
            FeatureColumn::Rainfall0 => self.rainfall_0,
            FeatureColumn::Rainfall1 => self.rainfall_1,
            FeatureColumn::Rainfall2 => self.rainfall_2,
            FeatureColumn::Temperature0 => self.temperature_0,
            FeatureColumn::Temperature1 => self.temperature_1,
            FeatureColumn::Temperature2 => self.temperature_2,
        }
    }
}

/// Whole calendar months from the birth month to `month`.
pub fn age_in_months(dob: NaiveDate, month: YearMonth) -> Result<u32> {
    let age = month.months_since(YearMonth::of(dob));
    if age < 0 {
        return Err(Error::Precondition(format!("month {month} precedes birth date {dob}")));
    }
    Ok(age as u32)
}

/// One row per animal per interior window month, sorted by (eid, month).
pub fn build_feature_rows(
    weights: &[MonthlyWeight],
    weather: &[MonthlyWeather],
    animals: &[AnimalRecord],
    window: &StudyWindow,
) -> Result<Vec<FeatureRow>> {
    let mut panel: BTreeMap<&str, BTreeMap<YearMonth, f64>> = BTreeMap::new();
    for w in weights {
        panel
            .entry(w.eid.as_str())
            .or_default()
            .insert(w.month, w.mean_weight_kg);
    }
    let weather: BTreeMap<YearMonth, &MonthlyWeather> = weather.iter().map(|w| (w.month, w)).collect();
    let animals: BTreeMap<&str, &AnimalRecord> = animals.iter().map(|a| (a.eid.as_str(), a)).collect();

    let lookup_weather = |month: YearMonth| -> Result<&MonthlyWeather> {
        weather.get(&month).copied().ok_or(Error::Coverage {
            field: "weather",
            month,
        })
    };

    let mut rows = Vec::with_capacity(panel.len() * window.len().saturating_sub(2));
    for (eid, series) in &panel {
        let animal = animals
            .get(eid)
            .ok_or_else(|| Error::Consistency(format!("animal {eid} has weights but no background record")))?;
        let weight_at = |month: YearMonth| -> Result<f64> {
            series
                .get(&month)
                .copied()
                .ok_or_else(|| Error::Consistency(format!("animal {eid} missing from panel in {month}")))
        };
        for month in window.interior_months() {
            let w0 = lookup_weather(month)?;
            let w1 = lookup_weather(month.add_months(-1))?;
            let w2 = lookup_weather(month.add_months(-2))?;
            rows.push(FeatureRow {
                eid: eid.to_string(),
                month,
                next_month_weight: weight_at(month.add_months(1))?,
                weaning_weight: animal.weaning_weight,
                age_months: age_in_months(animal.date_of_birth, month)?,
                current_month_weight: weight_at(month)?,
                previous_month_weight: weight_at(month.add_months(-1))?,
                rainfall_0: w0.mean_daily_rainfall_mm,
                rainfall_1: w1.mean_daily_rainfall_mm,
                rainfall_2: w2.mean_daily_rainfall_mm,
                temperature_0: w0.mean_temperature_c,
                temperature_1: w1.mean_temperature_c,
                temperature_2: w2.mean_temperature_c,
            });
        }
    }
    Ok(rows)
}

/// The four feature subsets compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetVariant {
    WeatherAndAge,
    WeatherOnly,
    AgeOnly,
    Baseline,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 4] = [
        DatasetVariant::WeatherAndAge,
        DatasetVariant::WeatherOnly,
        DatasetVariant::AgeOnly,
        DatasetVariant::Baseline,
    ];

    /// Column title used in the metric tables.
    pub fn title(self) -> &'static str {
        match self {
            DatasetVariant::WeatherAndAge => "Dataset Including Weather and Age Factors",
            DatasetVariant::WeatherOnly => "Dataset With Weather Factors (Excluding Age Factor)",
            DatasetVariant::AgeOnly => "Dataset With Age Factor (Excluding Weather Factors)",
            DatasetVariant::Baseline => "Dataset Excluding Age and Weather Factors",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            DatasetVariant::WeatherAndAge => "weather-and-age",
            DatasetVariant::WeatherOnly => "weather-only",
            DatasetVariant::AgeOnly => "age-only",
            DatasetVariant::Baseline => "baseline",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.slug() == s)
    }

    /// Predictor columns in table order. The label is never among them.
    pub fn predictors(self) -> &'static [FeatureColumn] {
        use FeatureColumn::*;
        match self {
            DatasetVariant::WeatherAndAge => &[
                WeaningWeight,
                AgeMonths,
                CurrentMonthWeight,
                PreviousMonthWeight,
                Rainfall0,
                Rainfall1,
                Rainfall2,
                Temperature0,
                Temperature1,
                Temperature2,
            ],
            DatasetVariant::WeatherOnly => &[
                WeaningWeight,
                CurrentMonthWeight,
                PreviousMonthWeight,
                Rainfall0,
                Rainfall1,
                Rainfall2,
                Temperature0,
                Temperature1,
                Temperature2,
            ],
            DatasetVariant::AgeOnly => &[WeaningWeight, AgeMonths, CurrentMonthWeight, PreviousMonthWeight],
            DatasetVariant::Baseline => &[WeaningWeight, CurrentMonthWeight, PreviousMonthWeight],
        }
    }
}

/// Design matrix, label vector and row provenance for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub columns: Vec<String>,
    pub eids: Vec<String>,
    pub months: Vec<YearMonth>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub fn select_variant(rows: &[FeatureRow], variant: DatasetVariant) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::Precondition("no feature rows to select from".into()));
    }
    let predictors = variant.predictors();
    let mut data = Vec::with_capacity(rows.len() * predictors.len());
    for r in rows {
        data.extend(predictors.iter().map(|c| r.value(*c)));
    }
    Ok(Dataset {
        x: Matrix::from_vec(rows.len(), predictors.len(), data)?,
        y: rows.iter().map(|r| r.next_month_weight).collect(),
        columns: predictors.iter().map(|c| c.header().to_string()).collect(),
        eids: rows.iter().map(|r| r.eid.clone()).collect(),
        months: rows.iter().map(|r| r.month).collect(),
    })
}

/// All eleven table columns as a matrix, in output order.
pub fn table_matrix(rows: &[FeatureRow]) -> Matrix {
    let mut data = Vec::with_capacity(rows.len() * FeatureColumn::ALL.len());
    for r in rows {
        data.extend(FeatureColumn::ALL.iter().map(|c| r.value(*c)));
    }
    Matrix::from_vec(rows.len(), FeatureColumn::ALL.len(), data).expect("consistent shape")
}

pub fn feature_table_header() -> Vec<&'static str> {
    FeatureColumn::ALL.iter().map(|c| c.header()).collect()
}

/// Write the feature table. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_feature_table<W: Write>(out: W, rows: &[FeatureRow]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(feature_table_header())?;
    for r in rows {
        wtr.write_record(FeatureColumn::ALL.iter().map(|c| match c {
            FeatureColumn::AgeMonths => r.age_months.to_string(),
            other => r.value(*other).to_string(),
        }))?;
    }
    wtr.flush()
}

/// Read a feature table back as an 11-column matrix in output order.
pub fn read_feature_table<R: Read>(input: R) -> Result<Matrix> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::csv("feature table", e))?.clone();
    let expected = feature_table_header();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Shape(format!("unexpected feature table header {headers:?}")));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv("feature table", e))?;
        for field in rec.iter() {
            data.push(field.parse::<f64>().map_err(|_| Error::Row {
                file: "feature table".into(),
                row: i + 1,
                message: format!("cannot parse {field:?}"),
            })?);
        }
        n += 1;
    }
    Matrix::from_vec(n, expected.len(), data)
}

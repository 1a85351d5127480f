//! Evaluation across dataset variants and models, and its on-disk form.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::evaluate::cv::{CvPlan, CvResult, ScalingMode};
use crate::evaluate::grid::{grid_search, CandidateScore, GridSpec};
use crate::evaluate::metrics::{MetricSet, METRIC_LABELS};
use crate::features::{select_variant, DatasetVariant, FeatureRow};
use crate::fsutil::{write_atomic, write_csv_atomic};
use crate::models::{ModelConfig, ModelKind};

/// Which target space the emitted tables and charts use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    #[default]
    Scaled,
    Kg,
    Both,
}

impl MetricSpace {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "scaled" => Some(MetricSpace::Scaled),
            "kg" => Some(MetricSpace::Kg),
            "both" => Some(MetricSpace::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: ModelKind,
    pub variant: DatasetVariant,
    pub chosen: ModelConfig,
    pub grid: Vec<CandidateScore>,
    pub result: CvResult,
    /// Month of each dataset row, indexed like `result.predictions[..].row`.
    pub months: Vec<YearMonth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plan: CvPlan,
    pub scaling: ScalingMode,
    pub n_rows: usize,
    pub entries: Vec<ReportEntry>,
}

impl EvaluationReport {
    pub fn entry(&self, model: ModelKind, variant: DatasetVariant) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.model == model && e.variant == variant)
    }

    fn models(&self) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.model) {
                out.push(e.model);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Grid-search every model over every requested variant of `rows`.
/// Entries are ordered by model (as given) then variant (as given).
pub fn evaluate(
    rows: &[FeatureRow],
    variants: &[DatasetVariant],
    grids: &[GridSpec],
    plan: &CvPlan,
    scaling: ScalingMode,
) -> Result<EvaluationReport> {
    if variants.is_empty() || grids.is_empty() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let mut entries = Vec::with_capacity(variants.len() * grids.len());
    for grid in grids {
        grid.validate()?;
        for &variant in variants {
            let data = select_variant(rows, variant)?;
            let found = grid_search(grid, &data, plan, scaling)?;
            entries.push(ReportEntry {
                model: found.best.kind(),
                variant,
                chosen: found.best,
                grid: found.scores,
                result: found.result,
                months: data.months,
            });
        }
    }
    Ok(EvaluationReport {
        plan: *plan,
        scaling,
        n_rows: rows.len(),
        entries,
    })
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn metric_table(report: &EvaluationReport, model: ModelKind, pick: fn(&CvResult) -> MetricSet) -> Vec<Vec<String>> {
    let mut header = vec!["Evaluation Metrics".to_string()];
    header.extend(DatasetVariant::ALL.iter().map(|v| v.title().to_string()));
    let mut table = vec![header];
    let cells: Vec<Option<[f64; 5]>> = DatasetVariant::ALL
        .iter()
        .map(|&v| report.entry(model, v).map(|e| pick(&e.result).values()))
        .collect();
    for (i, label) in METRIC_LABELS.iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(cells.iter().map(|c| c.map(|vals| fmt(vals[i])).unwrap_or_default()));
        table.push(row);
    }
    table
}

fn grid_table(report: &EvaluationReport, models: &[ModelKind], pick: impl Fn(&CvResult) -> f64) -> Vec<Vec<String>> {
    let mut header = vec!["Model".to_string()];
    header.extend(DatasetVariant::ALL.iter().map(|v| v.title().to_string()));
    let mut table = vec![header];
    for &m in models {
        let mut row = vec![m.label().to_string()];
        row.extend(
            DatasetVariant::ALL
                .iter()
                .map(|&v| report.entry(m, v).map(|e| fmt(pick(&e.result))).unwrap_or_default()),
        );
        table.push(row);
    }
    table
}

fn write_table(path: &Path, table: &[Vec<String>]) -> Result<()> {
    write_csv_atomic(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in table {
            w.write_record(row)?;
        }
        w.flush()
    })
}

/// Write metric tables, chart data and `report.json` into `dir`.
/// Returns the written paths in a stable order.
pub fn emit_report(report: &EvaluationReport, dir: &Path, space: MetricSpace) -> Result<Vec<PathBuf>> {
    if report.entries.is_empty() {
        return Err(Error::Precondition("report has no entries".into()));
    }
    for e in &report.entries {
        if let Some(p) = e.result.predictions.iter().find(|p| p.row >= e.months.len()) {
            return Err(Error::Consistency(format!(
                "prediction for row {} but only {} row months",
                p.row,
                e.months.len()
            )));
        }
    }
    let mut written = Vec::new();
    let mut put = |name: String, table: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        write_table(&path, &table)?;
        written.push(path);
        Ok(())
    };
    let models = report.models();
    let scaled = space != MetricSpace::Kg;
    for &m in &models {
        if scaled {
            put(format!("{}_train.csv", m.name()), metric_table(report, m, |r| r.train))?;
            put(format!("{}_test.csv", m.name()), metric_table(report, m, |r| r.test))?;
        }
        if space != MetricSpace::Scaled {
            put(
                format!("{}_train_kg.csv", m.name()),
                metric_table(report, m, |r| r.train_kg),
            )?;
            put(
                format!("{}_test_kg.csv", m.name()),
                metric_table(report, m, |r| r.test_kg),
            )?;
        }
    }
    let chart = |r: &CvResult| if scaled { r.test } else { r.test_kg };
    put("rmse_bars.csv".into(), grid_table(report, &models, |r| chart(r).rmse))?;
    put("r2_heatmap.csv".into(), grid_table(report, &models, |r| chart(r).r2))?;
    put("mae_heatmap.csv".into(), grid_table(report, &models, |r| chart(r).mae))?;

    let mut scatter = vec![[
        "Model",
        "Dataset",
        "Row",
        "Month",
        "Fold",
        "Actual",
        "Predicted",
        "Actual (scaled)",
        "Predicted (scaled)",
    ]
    .map(String::from)
    .to_vec()];
    let mut trend = vec![["Model", "Dataset", "Month", "Mean actual", "Mean predicted", "Rows"]
        .map(String::from)
        .to_vec()];
    for e in &report.entries {
        let mut by_month: BTreeMap<YearMonth, (f64, f64, usize)> = BTreeMap::new();
        for p in &e.result.predictions {
            let month = e.months[p.row];
            scatter.push(vec![
                e.model.label().to_string(),
                e.variant.slug().to_string(),
                p.row.to_string(),
                month.to_string(),
                p.fold.to_string(),
                fmt(p.actual),
                fmt(p.predicted),
                fmt(p.actual_scaled),
                fmt(p.predicted_scaled),
            ]);
            let acc = by_month.entry(month).or_insert((0.0, 0.0, 0));
            acc.0 += p.actual;
            acc.1 += p.predicted;
            acc.2 += 1;
        }
        for (month, (a, p, n)) in by_month {
            trend.push(vec![
                e.model.label().to_string(),
                e.variant.slug().to_string(),
                month.to_string(),
                fmt(a / n as f64),
                fmt(p / n as f64),
                n.to_string(),
            ]);
        }
    }
    put("scatter.csv".into(), scatter)?;
    put("monthly_trend.csv".into(), trend)?;

    let json = dir.join("report.json");
    let mut text = report.to_json()?.into_bytes();
    text.write_all(b"\n").expect("writing to a Vec cannot fail");
    write_atomic(&json, &text)?;
    written.push(json);
    Ok(written)
}

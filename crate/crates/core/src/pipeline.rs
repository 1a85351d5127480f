//! Raw bundle to feature rows, in one call.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{build_feature_rows, FeatureRow};
use crate::ingest::{validate_bundle, RawBundle, ValidationReport, WeighEvent};
use crate::preprocess::{
    aggregate_monthly_weather, aggregate_monthly_weights, remove_irregular_animals, remove_outlier_events,
    select_eligible, CleaningPolicy, MonthlyWeather, MonthlyWeight,
};

/// Record counts after each cleaning stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PrepSummary {
    pub animals: usize,
    pub events_in_window: usize,
    pub eligible_animals: usize,
    pub outlier_events_removed: usize,
    pub irregular_animals_removed: usize,
    pub retained_animals: usize,
    pub monthly_records: usize,
    pub imputed_cells: usize,
    pub feature_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub validation: ValidationReport,
    pub panel: Vec<MonthlyWeight>,
    pub weather: Vec<MonthlyWeather>,
    pub rows: Vec<FeatureRow>,
    pub summary: PrepSummary,
}

/// Validate, clean, aggregate and lag a bundle.
///
/// Stages: events outside the window are dropped; animals weighed in every
/// window month are kept; per-animal outlier events are removed; monthly
/// means are formed and animals with irregular series are dropped; the
/// panel is then re-aggregated over the survivors so imputed cells use the
/// final mob's mean.
pub fn prepare(bundle: &RawBundle, policy: &CleaningPolicy) -> Result<Prepared> {
    policy.validate()?;
    let validation = validate_bundle(bundle);
    if !validation.accepted() {
        let fatal: Vec<String> = validation
            .findings
            .iter()
            .filter(|f| f.is_fatal())
            .map(|f| format!("{f:?}"))
            .collect();
        return Err(Error::Consistency(format!("bundle rejected: {}", fatal.join("; "))));
    }
    let window = bundle.window;
    let events: Vec<WeighEvent> = bundle
        .events
        .iter()
        .filter(|e| window.contains(crate::calendar::YearMonth::of(e.date)))
        .cloned()
        .collect();
    let mut eligible = select_eligible(&events, &window);
    eligible.retain(|eid| bundle.animals.iter().any(|a| &a.eid == eid));
    if eligible.is_empty() {
        return Err(Error::NoEligibleAnimals);
    }
    let eligible_events: Vec<WeighEvent> = events.iter().filter(|e| eligible.contains(&e.eid)).cloned().collect();
    let cleaned = remove_outlier_events(&eligible_events, policy);
    let first_pass = aggregate_monthly_weights(&cleaned, &eligible, &window, policy)?;
    let irregular = remove_irregular_animals(&first_pass, policy);
    let retained: std::collections::BTreeSet<String> = eligible.difference(&irregular).cloned().collect();
    if retained.is_empty() {
        return Err(Error::NoEligibleAnimals);
    }
    let panel = aggregate_monthly_weights(&cleaned, &retained, &window, policy)?;
    let weather = aggregate_monthly_weather(
        &bundle.weather,
        window.first_month().add_months(-1),
        window.last_month().add_months(-1),
    )?;
    let rows = build_feature_rows(&panel, &weather, &bundle.animals, &window)?;

    let summary = PrepSummary {
        animals: bundle.animals.len(),
        events_in_window: events.len(),
        eligible_animals: eligible.len(),
        outlier_events_removed: eligible_events.len() - cleaned.len(),
        irregular_animals_removed: irregular.len(),
        retained_animals: retained.len(),
        monthly_records: panel.len(),
        imputed_cells: panel.iter().filter(|c| c.imputed).count(),
        feature_rows: rows.len(),
    };
    Ok(Prepared {
        validation,
        panel,
        weather,
        rows,
        summary,
    })
}

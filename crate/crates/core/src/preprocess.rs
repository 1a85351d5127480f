//! Cleaning and monthly aggregation of weigh events and weather.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::ingest::{WeatherDaily, WeighEvent, WindowSpec};

/// Inclusive range of months under study. At least three months long, since
/// the first and last month only supply lag/target values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WindowSpec", into = "WindowSpec")]
pub struct StudyWindow {
    first_month: YearMonth,
    last_month: YearMonth,
}

impl StudyWindow {
    pub fn new(first_month: YearMonth, last_month: YearMonth) -> Result<Self> {
        if last_month.months_since(first_month) < 2 {
            return Err(Error::Config(format!(
                "study window {first_month}..{last_month} must span at least 3 months"
            )));
        }
        Ok(Self {
            first_month,
            last_month,
        })
    }

    pub fn first_month(&self) -> YearMonth {
        self.first_month
    }

    pub fn last_month(&self) -> YearMonth {
        self.last_month
    }

    pub fn len(&self) -> usize {
        self.last_month.months_since(self.first_month) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn months(&self) -> impl Iterator<Item = YearMonth> {
        YearMonth::range_inclusive(self.first_month, self.last_month)
    }

    pub fn contains(&self, month: YearMonth) -> bool {
        month >= self.first_month && month <= self.last_month
    }

    /// Months that have both a previous and a next month inside the window.
    pub fn interior_months(&self) -> impl Iterator<Item = YearMonth> {
        YearMonth::range_inclusive(self.first_month.add_months(1), self.last_month.add_months(-1))
    }
}

impl TryFrom<WindowSpec> for StudyWindow {
    type Error = Error;

    fn try_from(spec: WindowSpec) -> Result<Self> {
        StudyWindow::new(spec.first_month, spec.last_month)
    }
}

impl From<StudyWindow> for WindowSpec {
    fn from(w: StudyWindow) -> Self {
        WindowSpec {
            first_month: w.first_month,
            last_month: w.last_month,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyWeight {
    pub eid: String,
    pub month: YearMonth,
    pub mean_weight_kg: f64,
    pub n_events: usize,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyWeather {
    pub month: YearMonth,
    pub mean_daily_rainfall_mm: f64,
    pub mean_temperature_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    /// Robust z-score (median/MAD) above which a weigh event is discarded.
    pub outlier_z_threshold: f64,
    /// Largest tolerated month-over-month fall in mean weight, as a fraction.
    pub irregular_drop_pct: f64,
    pub impute: bool,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            outlier_z_threshold: 3.5,
            irregular_drop_pct: 0.10,
            impute: true,
        }
    }
}

impl CleaningPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.outlier_z_threshold.is_nan() || self.outlier_z_threshold <= 0.0 {
            return Err(Error::Config("outlier threshold must be positive".into()));
        }
        if !(self.irregular_drop_pct > 0.0 && self.irregular_drop_pct < 1.0) {
            return Err(Error::Config("irregular drop fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Animals with at least one weigh event in every month of the window.
pub fn select_eligible(events: &[WeighEvent], window: &StudyWindow) -> BTreeSet<String> {
    let mut seen: BTreeMap<&str, BTreeSet<YearMonth>> = BTreeMap::new();
    for e in events {
        let m = YearMonth::of(e.date);
        if window.contains(m) {
            seen.entry(e.eid.as_str()).or_default().insert(m);
        }
    }
    let need = window.len();
    seen.into_iter()
        .filter(|(_, months)| months.len() == need)
        .map(|(eid, _)| eid.to_string())
        .collect()
}

const MAD_CONSISTENCY: f64 = 1.4826;
// Scale of the mean absolute deviation under normality, sqrt(pi/2).
const MEAN_AD_CONSISTENCY: f64 = 1.253_314_137_315_500_3;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per-animal location and scale used by the outlier rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustStats {
    pub median: f64,
    /// Scale in kg; zero only when every value equals the median.
    pub scale: f64,
}

impl RobustStats {
    /// `None` for fewer than three values.
    pub fn estimate(values: &[f64]) -> Option<Self> {
        if values.len() < 3 {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let med = median(&sorted);
        let mut dev: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
        dev.sort_by(f64::total_cmp);
        let mad = median(&dev);
        let scale = if mad > 0.0 {
            MAD_CONSISTENCY * mad
        } else {
            // More than half the values sit on the median; fall back to the mean deviation.
            MEAN_AD_CONSISTENCY * dev.iter().sum::<f64>() / dev.len() as f64
        };
        Some(Self { median: med, scale })
    }

    pub fn z(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            (x - self.median).abs() / self.scale
        }
    }
}

/// Robust statistics for every animal with at least three events.
pub fn per_animal_stats(events: &[WeighEvent]) -> BTreeMap<String, RobustStats> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in events {
        groups.entry(e.eid.as_str()).or_default().push(e.weight_kg);
    }
    groups
        .into_iter()
        .filter_map(|(eid, w)| RobustStats::estimate(&w).map(|s| (eid.to_string(), s)))
        .collect()
}

/// Drop events whose robust z exceeds `threshold` under the supplied statistics.
/// Animals without statistics pass through.
pub fn remove_outliers_with(
    events: &[WeighEvent],
    stats: &BTreeMap<String, RobustStats>,
    threshold: f64,
) -> Vec<WeighEvent> {
    events
        .iter()
        .filter(|e| stats.get(&e.eid).is_none_or(|s| s.z(e.weight_kg) <= threshold))
        .cloned()
        .collect()
}

/// Per-animal robust outlier removal; surviving events keep their order.
pub fn remove_outlier_events(events: &[WeighEvent], policy: &CleaningPolicy) -> Vec<WeighEvent> {
    let stats = per_animal_stats(events);
    remove_outliers_with(events, &stats, policy.outlier_z_threshold)
}

fn ls_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Animals whose monthly series shows a fall larger than the tolerated
/// fraction, or no upward least-squares trend.
pub fn remove_irregular_animals(panel: &[MonthlyWeight], policy: &CleaningPolicy) -> BTreeSet<String> {
    let mut series: BTreeMap<&str, Vec<(YearMonth, f64)>> = BTreeMap::new();
    for cell in panel {
        series
            .entry(cell.eid.as_str())
            .or_default()
            .push((cell.month, cell.mean_weight_kg));
    }
    let mut removed = BTreeSet::new();
    for (eid, mut s) in series {
        s.sort_by_key(|(m, _)| *m);
        let values: Vec<f64> = s.iter().map(|(_, v)| *v).collect();
        let big_drop = values
            .windows(2)
            .any(|w| (w[0] - w[1]) / w[0] > policy.irregular_drop_pct);
        if big_drop || ls_slope(&values) <= 0.0 {
            removed.insert(eid.to_string());
        }
    }
    removed
}

/// One mean weight per (eligible animal, window month), sorted by (eid, month).
///
/// Cells left empty by outlier removal take the mob mean of that month when
/// `policy.impute` is set.
pub fn aggregate_monthly_weights(
    events: &[WeighEvent],
    eligible: &BTreeSet<String>,
    window: &StudyWindow,
    policy: &CleaningPolicy,
) -> Result<Vec<MonthlyWeight>> {
    let mut sums: BTreeMap<(&str, YearMonth), (f64, usize)> = BTreeMap::new();
    for e in events {
        let m = YearMonth::of(e.date);
        if window.contains(m) && eligible.contains(&e.eid) {
            let cell = sums.entry((e.eid.as_str(), m)).or_insert((0.0, 0));
            cell.0 += e.weight_kg;
            cell.1 += 1;
        }
    }

    let mut mob: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for ((_, m), (sum, n)) in &sums {
        let acc = mob.entry(*m).or_insert((0.0, 0));
        acc.0 += sum / *n as f64;
        acc.1 += 1;
    }

    let mut out = Vec::with_capacity(eligible.len() * window.len());
    for eid in eligible {
        for month in window.months() {
            match sums.get(&(eid.as_str(), month)) {
                Some(&(sum, n)) => out.push(MonthlyWeight {
                    eid: eid.clone(),
                    month,
                    mean_weight_kg: sum / n as f64,
                    n_events: n,
                    imputed: false,
                }),
                None => {
                    let fill = match mob.get(&month) {
                        Some(&(s, k)) if policy.impute => s / k as f64,
                        _ => {
                            return Err(Error::MissingCell {
                                eid: eid.clone(),
                                month,
                            })
                        }
                    };
                    out.push(MonthlyWeight {
                        eid: eid.clone(),
                        month,
                        mean_weight_kg: fill,
                        n_events: 0,
                        imputed: true,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Monthly means of daily rainfall and temperature for each month in
/// `first..=last`. Each quantity averages over the days on which it was observed.
pub fn aggregate_monthly_weather(
    daily: &[WeatherDaily],
    first: YearMonth,
    last: YearMonth,
) -> Result<Vec<MonthlyWeather>> {
    #[derive(Default)]
    struct Acc {
        rain: f64,
        n_rain: usize,
        temp: f64,
        n_temp: usize,
    }
    let mut acc: BTreeMap<YearMonth, Acc> = BTreeMap::new();
    for d in daily {
        let m = YearMonth::of(d.date);
        if m < first || m > last {
            continue;
        }
        let a = acc.entry(m).or_default();
        if let Some(r) = d.rainfall_mm {
            a.rain += r;
            a.n_rain += 1;
        }
        if let Some(t) = d.temperature_c {
            a.temp += t;
            a.n_temp += 1;
        }
    }
    YearMonth::range_inclusive(first, last)
        .map(|month| {
            let a = acc.get(&month);
            let (rain, n_rain) = a.map_or((0.0, 0), |a| (a.rain, a.n_rain));
            let (temp, n_temp) = a.map_or((0.0, 0), |a| (a.temp, a.n_temp));
            if n_rain == 0 {
                return Err(Error::Coverage {
                    field: "rainfall",
                    month,
                });
            }
            if n_temp == 0 {
                return Err(Error::Coverage {
                    field: "temperature",
                    month,
                });
            }
            Ok(MonthlyWeather {
                month,
                mean_daily_rainfall_mm: rain / n_rain as f64,
                mean_temperature_c: temp / n_temp as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn ev(eid: &str, y: i32, m: u32, d: u32, w: f64) -> WeighEvent {
        WeighEvent {
            eid: eid.into(),
            date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            weight_kg: w,
        }
    }

    fn window(a: &str, b: &str) -> StudyWindow {
        StudyWindow::new(ym(a), ym(b)).unwrap()
    }

    #[test]
    fn window_needs_three_months() {
        assert!(StudyWindow::new(ym("2022-02"), ym("2022-03")).is_err());
        let w = window("2022-02", "2022-10");
        assert_eq!(w.len(), 9);
        assert_eq!(w.interior_months().count(), 7);
    }

    #[test]
    fn eligibility_needs_every_month() {
        let w = window("2022-01", "2022-03");
        let events = vec![
            ev("a", 2022, 1, 5, 200.0),
            ev("a", 2022, 2, 5, 210.0),
            ev("a", 2022, 3, 5, 220.0),
            ev("b", 2022, 1, 5, 200.0),
            ev("b", 2022, 2, 5, 210.0),
            ev("b", 2022, 4, 5, 230.0),
            ev("c", 2022, 1, 9, 200.0),
            ev("c", 2022, 2, 9, 210.0),
            ev("c", 2022, 3, 9, 220.0),
        ];
        let eligible = select_eligible(&events, &w);
        assert_eq!(eligible, ["a", "c"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn eligibility_saturated() {
        let w = window("2022-01", "2022-03");
        let mut events = Vec::new();
        for eid in ["x", "y"] {
            let mut day = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
            while day <= NaiveDate::from_ymd_opt(2022, 3, 31).unwrap() {
                events.push(WeighEvent {
                    eid: eid.into(),
                    date: day,
                    weight_kg: 200.0,
                });
                day = day.succ_opt().unwrap();
            }
        }
        assert_eq!(select_eligible(&events, &w).len(), 2);
    }

    #[test]
    fn outlier_620_removed() {
        let events: Vec<_> = [200.0, 202.0, 205.0, 620.0]
            .iter()
            .enumerate()
            .map(|(i, &w)| ev("a", 2022, 2, i as u32 + 1, w))
            .collect();
        let kept = remove_outlier_events(&events, &CleaningPolicy::default());
        let w: Vec<f64> = kept.iter().map(|e| e.weight_kg).collect();
        assert_eq!(w, vec![200.0, 202.0, 205.0]);
        // median 203.5, MAD 2.5, z(620) = 416.5 / (1.4826 * 2.5)
        let s = RobustStats::estimate(&[200.0, 202.0, 205.0, 620.0]).unwrap();
        assert_eq!(s.median, 203.5);
        assert!((s.z(620.0) - 416.5 / 3.7065).abs() < 1e-9);
    }

    #[test]
    fn identical_weights_untouched() {
        let events: Vec<_> = (1..=5).map(|d| ev("a", 2022, 2, d, 250.0)).collect();
        assert_eq!(remove_outlier_events(&events, &CleaningPolicy::default()), events);
    }

    #[test]
    fn infinite_threshold_is_identity() {
        let events: Vec<_> = [200.0, 202.0, 205.0, 620.0]
            .iter()
            .enumerate()
            .map(|(i, &w)| ev("a", 2022, 2, i as u32 + 1, w))
            .collect();
        let policy = CleaningPolicy {
            outlier_z_threshold: f64::INFINITY,
            ..Default::default()
        };
        assert_eq!(remove_outlier_events(&events, &policy), events);
    }

    #[test]
    fn small_groups_pass_through() {
        let events = vec![ev("a", 2022, 2, 1, 200.0), ev("a", 2022, 2, 2, 900.0)];
        assert_eq!(remove_outlier_events(&events, &CleaningPolicy::default()), events);
    }

    #[test]
    fn zero_mad_with_distinct_value_uses_mean_deviation() {
        // MAD is zero here, yet 620 is clearly off.
        let events: Vec<_> = [200.0, 200.0, 200.0, 200.0, 620.0]
            .iter()
            .enumerate()
            .map(|(i, &w)| ev("a", 2022, 2, i as u32 + 1, w))
            .collect();
        let kept = remove_outlier_events(&events, &CleaningPolicy::default());
        assert_eq!(kept.len(), 4);
    }

    fn panel(eid: &str, means: &[f64]) -> Vec<MonthlyWeight> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| MonthlyWeight {
                eid: eid.into(),
                month: ym("2022-02").add_months(i as i64),
                mean_weight_kg: m,
                n_events: 1,
                imputed: false,
            })
            .collect()
    }

    #[test]
    fn irregular_rules() {
        let policy = CleaningPolicy::default();
        let mut p = panel("drop", &[200.0, 220.0, 190.0, 240.0]);
        p.extend(panel("grow", &[200.0, 210.0, 230.0, 240.0]));
        p.extend(panel("flat", &[200.0, 200.0, 200.0, 200.0]));
        let removed = remove_irregular_animals(&p, &policy);
        assert_eq!(removed, ["drop", "flat"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn monthly_mean_of_two_events() {
        let w = window("2022-02", "2022-04");
        let events = vec![
            ev("a", 2022, 2, 18, 209.0),
            ev("a", 2022, 2, 20, 211.0),
            ev("a", 2022, 3, 1, 215.0),
            ev("a", 2022, 4, 1, 220.0),
        ];
        let eligible = select_eligible(&events, &w);
        let out = aggregate_monthly_weights(&events, &eligible, &w, &CleaningPolicy::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].mean_weight_kg, 210.0);
        assert_eq!(out[0].n_events, 2);
        assert_eq!(out[1].mean_weight_kg, 215.0);
        assert!(!out[1].imputed);
    }

    #[test]
    fn empty_cell_imputed_with_mob_mean_or_rejected() {
        let w = window("2022-02", "2022-04");
        let events = vec![
            ev("a", 2022, 2, 1, 200.0),
            ev("a", 2022, 3, 1, 210.0),
            ev("a", 2022, 4, 1, 220.0),
            ev("b", 2022, 2, 1, 300.0),
            ev("b", 2022, 4, 1, 320.0),
            ev("c", 2022, 2, 1, 250.0),
            ev("c", 2022, 3, 1, 262.0),
            ev("c", 2022, 4, 1, 270.0),
        ];
        let eligible: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let out = aggregate_monthly_weights(&events, &eligible, &w, &CleaningPolicy::default()).unwrap();
        let cell = out.iter().find(|c| c.eid == "b" && c.month == ym("2022-03")).unwrap();
        assert!(cell.imputed);
        assert_eq!(cell.n_events, 0);
        assert_eq!(cell.mean_weight_kg, 236.0);

        let strict = CleaningPolicy {
            impute: false,
            ..Default::default()
        };
        match aggregate_monthly_weights(&events, &eligible, &w, &strict).unwrap_err() {
            Error::MissingCell { eid, month } => {
                assert_eq!(eid, "b");
                assert_eq!(month, ym("2022-03"));
            }
            e => panic!("{e}"),
        }
    }

    fn day(y: i32, m: u32, d: u32, rain: f64, temp: f64) -> WeatherDaily {
        WeatherDaily {
            date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            rainfall_mm: Some(rain),
            temperature_c: Some(temp),
        }
    }

    #[test]
    fn weather_mean_of_daily_values() {
        // 103.4 mm over 31 days.
        let mut daily: Vec<_> = (1..=31).map(|d| day(2022, 1, d, 0.0, 20.0)).collect();
        daily[3].rainfall_mm = Some(60.0);
        daily[17].rainfall_mm = Some(43.4);
        let m = aggregate_monthly_weather(&daily, ym("2022-01"), ym("2022-01")).unwrap();
        assert!((m[0].mean_daily_rainfall_mm - 3.335483870967742).abs() < 1e-12);
        assert_eq!(m[0].mean_temperature_c, 20.0);
    }

    #[test]
    fn zero_rain_month() {
        let daily: Vec<_> = (1..=28).map(|d| day(2022, 2, d, 0.0, 25.0)).collect();
        let m = aggregate_monthly_weather(&daily, ym("2022-02"), ym("2022-02")).unwrap();
        assert_eq!(m[0].mean_daily_rainfall_mm, 0.0);
    }

    #[test]
    fn missing_weather_month_is_coverage_error() {
        let daily: Vec<_> = (1..=28).map(|d| day(2022, 2, d, 0.0, 25.0)).collect();
        assert!(matches!(
            aggregate_monthly_weather(&daily, ym("2022-01"), ym("2022-02")).unwrap_err(),
            Error::Coverage { .. }
        ));
    }
}

use chrono::{Datelike, Days, NaiveDate};

use mobweigh::features::{read_feature_table, table_matrix, write_feature_table};
use mobweigh::ingest::{load_bundle, ColumnManifest, WeighEvent};
use mobweigh::pipeline::prepare;
use mobweigh::preprocess::CleaningPolicy;
use mobweigh::stats::fit_regression;
use mobweigh::synth::{ground_truth, SynthConfig, SynthHerd};
use mobweigh::{Error, Matrix, YearMonth};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_animals: 12,
        daily_access_prob: 1.0,
        measurement_noise_sd: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn ym(y: i32, m: u32) -> YearMonth {
    YearMonth::new(y, m).unwrap()
}

#[test]
fn same_seed_writes_identical_files() {
    let cfg = SynthConfig {
        n_animals: 10,
        seed: 9,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = SynthHerd::generate(&cfg).unwrap().write(a.path()).unwrap();
    let fb = SynthHerd::generate(&cfg).unwrap().write(b.path()).unwrap();
    for (x, y) in [
        (&fa.animals, &fb.animals),
        (&fa.weather, &fb.weather),
        (&fa.weights, &fb.weights),
        (&fa.manifest, &fb.manifest),
    ] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let c = tempfile::tempdir().unwrap();
    let fc = SynthHerd::generate(&SynthConfig { seed: 10, ..cfg })
        .unwrap()
        .write(c.path())
        .unwrap();
    assert_ne!(std::fs::read(&fa.weights).unwrap(), std::fs::read(&fc.weights).unwrap());
}

#[test]
fn written_herd_loads_back() {
    let herd = SynthHerd::generate(&SynthConfig {
        n_animals: 8,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = herd.write(dir.path()).unwrap();
    let manifest = ColumnManifest::load(&files.manifest).unwrap();
    let bundle = load_bundle(&manifest, None).unwrap();
    assert_eq!(bundle, herd.bundle);
}

#[test]
fn noise_free_monthly_means_match_truth() {
    let herd = SynthHerd::generate(&small(21)).unwrap();
    let prep = prepare(&herd.bundle, &CleaningPolicy::default()).unwrap();
    assert_eq!(prep.summary.retained_animals, 12);
    assert_eq!(prep.summary.outlier_events_removed, 0);
    assert_eq!(prep.panel.len(), 12 * 9);
    for cell in &prep.panel {
        let want = herd.monthly_truth(&cell.eid, cell.month).unwrap();
        assert!((cell.mean_weight_kg - want).abs() < 1e-9, "{} {}", cell.eid, cell.month);
        assert_eq!(cell.n_events, cell.month.last_day().day() as usize);
    }
}

#[test]
fn constant_gain_gives_linear_trajectory() {
    let cfg = SynthConfig {
        age_effect: 0.0,
        heat_penalty: 0.0,
        rain_boost: 0.0,
        animal_adg_sd: 0.0,
        ..small(4)
    };
    let herd = SynthHerd::generate(&cfg).unwrap();
    for a in &herd.bundle.animals {
        let day = a.weaning_date + Days::new(100);
        let got = herd.ground_truth(&a.eid, day).unwrap();
        assert!((got - (a.weaning_weight + 100.0 * cfg.base_adg)).abs() < 1e-9);
        assert_eq!(herd.ground_truth(&a.eid, a.weaning_date).unwrap(), a.weaning_weight);
        assert_eq!(ground_truth(&cfg, &a.eid, day).unwrap(), got);
    }
}

#[test]
fn trajectories_rise_without_heat() {
    let cfg = SynthConfig {
        heat_penalty: 0.0,
        ..small(6)
    };
    let herd = SynthHerd::generate(&cfg).unwrap();
    let last = cfg.window.last_month().last_day();
    for a in &herd.bundle.animals {
        let mut prev = f64::NEG_INFINITY;
        for d in a.weaning_date.iter_days().take_while(|d| *d <= last) {
            let w = herd.ground_truth(&a.eid, d).unwrap();
            assert!(w >= prev);
            prev = w;
        }
    }
}

/// Per animal and calendar month: mean daily gain, mean rainfall, mean heat
/// excess and mean age in months, over every full month with a successor.
fn monthly_gains(herd: &SynthHerd) -> (Matrix, Vec<f64>) {
    let cfg = &herd.config;
    let weather: std::collections::BTreeMap<NaiveDate, (f64, f64)> = herd
        .bundle
        .weather
        .iter()
        .map(|d| (d.date, (d.rainfall_mm.unwrap(), d.temperature_c.unwrap())))
        .collect();
    let mut design = Vec::new();
    let mut gains = Vec::new();
    for a in &herd.bundle.animals {
        for m in cfg.window.months().take(cfg.window.len() - 1) {
            let (first, next) = (m.first_day(), m.add_months(1).first_day());
            let n = (next - first).num_days() as f64;
            let gain = herd.ground_truth(&a.eid, next).unwrap() - herd.ground_truth(&a.eid, first).unwrap();
            let (mut rain, mut heat, mut age) = (0.0, 0.0, 0.0);
            for d in first.iter_days().take_while(|d| *d < next) {
                let (r, t) = weather[&d];
                rain += r;
                heat += (t - cfg.heat_threshold).max(0.0);
                age += (d - a.date_of_birth).num_days() as f64 / mobweigh::synth::DAYS_PER_MONTH;
            }
            design.push(vec![rain / n, heat / n, age / n]);
            gains.push(gain / n);
        }
    }
    (Matrix::from_rows(&design).unwrap(), gains)
}

fn names() -> Vec<String> {
    ["rain", "heat", "age"].map(String::from).to_vec()
}

#[test]
fn monthly_gains_recover_growth_drivers() {
    let cfg = SynthConfig {
        animal_adg_sd: 0.0,
        ..small(8)
    };
    let herd = SynthHerd::generate(&cfg).unwrap();
    let (x, y) = monthly_gains(&herd);
    let fit = fit_regression(&x, &y, 1, &names()).unwrap();
    let c = &fit.coefficients;
    assert!((c[0] - cfg.base_adg).abs() < 1e-6, "{c:?}");
    assert!((c[1] - cfg.rain_boost).abs() < 1e-6, "{c:?}");
    assert!((c[2] + cfg.heat_penalty).abs() < 1e-6, "{c:?}");
    assert!((c[3] - cfg.age_effect).abs() < 1e-6, "{c:?}");
}

#[test]
fn weather_moves_gain_across_seeds() {
    for seed in 100..105 {
        let herd = SynthHerd::generate(&SynthConfig {
            seed,
            n_animals: 30,
            ..SynthConfig::default()
        })
        .unwrap();
        let (x, y) = monthly_gains(&herd);
        let fit = fit_regression(&x, &y, 1, &names()).unwrap();
        assert!(
            fit.coefficients[1] > 0.0 && fit.p_values[1] < 0.05,
            "seed {seed}: rain {fit:?}"
        );
        assert!(
            fit.coefficients[2] < 0.0 && fit.p_values[2] < 0.05,
            "seed {seed}: heat {fit:?}"
        );
    }
}

#[test]
fn injected_outlier_is_removed_without_side_effects() {
    let herd = SynthHerd::generate(&small(13)).unwrap();
    let clean = prepare(&herd.bundle, &CleaningPolicy::default()).unwrap();
    let mut bundle = herd.bundle.clone();
    let eid = bundle.animals[3].eid.clone();
    bundle.events.push(WeighEvent {
        eid,
        date: NaiveDate::from_ymd_opt(2022, 5, 14).unwrap(),
        weight_kg: 4000.0,
    });
    let dirty = prepare(&bundle, &CleaningPolicy::default()).unwrap();
    assert_eq!(dirty.summary.outlier_events_removed, 1);
    assert_eq!(dirty.rows, clean.rows);
}

#[test]
fn sharp_fall_drops_the_animal() {
    let herd = SynthHerd::generate(&small(14)).unwrap();
    let mut bundle = herd.bundle.clone();
    let eid = bundle.animals[5].eid.clone();
    for e in bundle
        .events
        .iter_mut()
        .filter(|e| e.eid == eid && YearMonth::of(e.date) == ym(2022, 6))
    {
        e.weight_kg *= 0.8;
    }
    let prep = prepare(&bundle, &CleaningPolicy::default()).unwrap();
    assert_eq!(prep.summary.irregular_animals_removed, 1);
    assert_eq!(prep.summary.retained_animals, 11);
    assert!(prep.rows.iter().all(|r| r.eid != eid));
    assert_eq!(prep.rows.len(), 11 * 7);
}

#[test]
fn missed_month_makes_animal_ineligible() {
    let herd = SynthHerd::generate(&small(15)).unwrap();
    let mut bundle = herd.bundle.clone();
    let eid = bundle.animals[0].eid.clone();
    bundle
        .events
        .retain(|e| !(e.eid == eid && YearMonth::of(e.date) == ym(2022, 4)));
    let prep = prepare(&bundle, &CleaningPolicy::default()).unwrap();
    assert_eq!(prep.summary.eligible_animals, 11);
    assert!(prep.panel.iter().all(|c| c.eid != eid));
}

#[test]
fn no_events_means_no_eligible_animals() {
    let mut bundle = SynthHerd::generate(&small(16)).unwrap().bundle;
    bundle.events.clear();
    assert!(matches!(
        prepare(&bundle, &CleaningPolicy::default()),
        Err(Error::NoEligibleAnimals)
    ));
}

#[test]
fn weather_gap_in_lag_months_is_fatal() {
    let mut bundle = SynthHerd::generate(&small(17)).unwrap().bundle;
    let gap: Vec<NaiveDate> = bundle
        .weather
        .iter()
        .filter(|d| YearMonth::of(d.date) == ym(2022, 1))
        .map(|d| d.date)
        .collect();
    bundle.weather.retain(|d| !gap.contains(&d.date));
    let err = prepare(&bundle, &CleaningPolicy::default()).unwrap_err();
    assert!(matches!(err, Error::Consistency(_) | Error::Coverage { .. }), "{err}");
}

#[test]
fn feature_table_round_trips() {
    let herd = SynthHerd::generate(&SynthConfig {
        n_animals: 6,
        seed: 18,
        ..SynthConfig::default()
    })
    .unwrap();
    let prep = prepare(&herd.bundle, &CleaningPolicy::default()).unwrap();
    let mut buf = Vec::new();
    write_feature_table(&mut buf, &prep.rows).unwrap();
    assert_eq!(read_feature_table(buf.as_slice()).unwrap(), table_matrix(&prep.rows));
}

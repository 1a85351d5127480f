//! Synthetic herds with a known daily growth model.
//!
//! Each animal grows from its weaning weight by a daily gain of
//!
//! ```text
//! base_adg + animal_offset + age_effect * age_months
//!     - heat_penalty * max(0, temperature - heat_threshold)
//!     + rain_boost * rainfall
//! ```
//!
//! where age is in (fractional) months and the weather is that day's value.
//! Weight on date `D` is the weaning weight plus the gains of every day from
//! the weaning date up to, but not including, `D`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::fsutil::write_csv_atomic;
use crate::ingest::{
    write_animals, write_weather, write_weights, AnimalRecord, ColumnManifest, RawBundle, WeatherDaily, WeighEvent,
    WindowSpec,
};
use crate::preprocess::StudyWindow;

/// Average month length used to express age in fractional months.
pub const DAYS_PER_MONTH: f64 = 30.4375;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthClimate {
    /// Mean daily rainfall, mm.
    pub rainfall_mm: f64,
    /// Mean daily temperature, °C.
    pub temperature_c: f64,
}

/// Expected weather for each calendar month, January first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherProfile {
    pub months: [MonthClimate; 12],
    /// Daily rainfall is the monthly mean times `1 + U(-rain_jitter, rain_jitter)`.
    pub rain_jitter: f64,
    /// Daily temperature is the monthly mean plus `U(-temperature_jitter, temperature_jitter)`.
    pub temperature_jitter: f64,
}

impl Default for WeatherProfile {
    /// A southern-hemisphere inland climate: hot summers around January,
    /// cool winters around July.
    fn default() -> Self {
        let m = |rainfall_mm, temperature_c| MonthClimate {
            rainfall_mm,
            temperature_c,
        };
        Self {
            months: [
                m(3.34, 31.3),
                m(0.59, 30.7),
                m(1.10, 28.9),
                m(2.23, 22.9),
                m(2.52, 17.8),
                m(1.46, 13.1),
                m(0.59, 13.9),
                m(2.55, 14.8),
                m(2.45, 17.4),
                m(2.00, 20.5),
                m(1.80, 24.0),
                m(1.90, 28.5),
            ],
            rain_jitter: 0.5,
            temperature_jitter: 3.0,
        }
    }
}

impl WeatherProfile {
    pub fn month(&self, month: YearMonth) -> MonthClimate {
        self.months[month.month() as usize - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_animals: usize,
    pub window: StudyWindow,
    /// Inclusive range of birth dates.
    pub dob_first: NaiveDate,
    pub dob_last: NaiveDate,
    /// Every animal is weaned on this date; it must precede the window.
    pub weaning_date: NaiveDate,
    pub weaning_weight_mean: f64,
    pub weaning_weight_sd: f64,
    /// kg/day
    pub base_adg: f64,
    /// Standard deviation of a per-animal constant added to `base_adg`.
    pub animal_adg_sd: f64,
    /// kg/day per month of age.
    pub age_effect: f64,
    /// kg/day per °C above `heat_threshold`.
    pub heat_penalty: f64,
    pub heat_threshold: f64,
    /// kg/day per mm of daily rainfall.
    pub rain_boost: f64,
    /// Probability that an animal is weighed on a given day.
    pub daily_access_prob: f64,
    pub measurement_noise_sd: f64,
    pub weather_profile: WeatherProfile,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 108 animals over February to October 2022.
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        Self {
            n_animals: 108,
            window: StudyWindow::new(
                YearMonth::new(2022, 2).expect("valid month"),
                YearMonth::new(2022, 10).expect("valid month"),
            )
            .expect("nine-month window"),
            dob_first: d(2021, 6, 15),
            dob_last: d(2021, 10, 15),
            weaning_date: d(2022, 1, 31),
            weaning_weight_mean: 195.0,
            weaning_weight_sd: 15.0,
            base_adg: 0.4,
            animal_adg_sd: 0.05,
            age_effect: 0.02,
            heat_penalty: 0.04,
            heat_threshold: 25.0,
            rain_boost: 0.08,
            daily_access_prob: 0.6,
            measurement_noise_sd: 4.0,
            weather_profile: WeatherProfile::default(),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_animals == 0 {
            return bad("n_animals must be positive");
        }
        if self.dob_first > self.dob_last {
            return bad("dob range is empty");
        }
        if self.weaning_date <= self.dob_last {
            return bad("weaning date must follow every birth date");
        }
        if self.weaning_date >= self.window.first_month().first_day() {
            return bad("weaning date must precede the study window");
        }
        if !(0.0..=1.0).contains(&self.daily_access_prob) {
            return bad("daily_access_prob must lie in [0, 1]");
        }
        for (name, v) in [
            ("weaning_weight_sd", self.weaning_weight_sd),
            ("animal_adg_sd", self.animal_adg_sd),
            ("measurement_noise_sd", self.measurement_noise_sd),
            ("temperature_jitter", self.weather_profile.temperature_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        if !(0.0..=1.0).contains(&self.weather_profile.rain_jitter) {
            return bad("rain_jitter must lie in [0, 1]");
        }
        if self.weather_profile.months.iter().any(|m| m.rainfall_mm < 0.0) {
            return bad("profile rainfall must be non-negative");
        }
        if !(self.weaning_weight_mean > 0.0) {
            return bad("weaning_weight_mean must be positive");
        }
        Ok(())
    }

    /// First day with generated weather: two months before the window, or the
    /// weaning date if that is earlier.
    fn weather_start(&self) -> NaiveDate {
        self.window
            .first_month()
            .add_months(-2)
            .first_day()
            .min(self.weaning_date)
    }

    fn weather_end(&self) -> NaiveDate {
        self.window.last_month().last_day()
    }
}

/// Tag for animal `index`: fifteen digits, starting with the 982 manufacturer code.
pub fn eid_for(index: usize) -> String {
    format!("982000{:09}", 100_000 + index)
}

fn index_of(eid: &str, n: usize) -> Option<usize> {
    let i = eid
        .strip_prefix("982000")?
        .parse::<usize>()
        .ok()?
        .checked_sub(100_000)?;
    (i < n && eid_for(i) == eid).then_some(i)
}

fn days(first: NaiveDate, last: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    first.iter_days().take_while(move |d| *d <= last)
}

fn generate_weather(cfg: &SynthConfig) -> Vec<WeatherDaily> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let p = &cfg.weather_profile;
    days(cfg.weather_start(), cfg.weather_end())
        .map(|date| {
            let c = p.month(YearMonth::of(date));
            let rain = c.rainfall_mm * (1.0 + p.rain_jitter * rng.random_range(-1.0..=1.0));
            let temp = c.temperature_c + p.temperature_jitter * rng.random_range(-1.0..=1.0);
            WeatherDaily {
                date,
                rainfall_mm: Some(rain.max(0.0)),
                temperature_c: Some(temp),
            }
        })
        .collect()
}

/// Per-animal draws made before any weighing.
#[derive(Debug, Clone, PartialEq)]
struct Animal {
    record: AnimalRecord,
    adg_offset: f64,
}

fn animal_rng(cfg: &SynthConfig, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn draw_animal(cfg: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> Animal {
    let span = (cfg.dob_last - cfg.dob_first).num_days() as u64;
    let dob = cfg.dob_first + Days::new(rng.random_range(0..=span));
    let weaning_weight = if cfg.weaning_weight_sd > 0.0 {
        let dist = Normal::new(cfg.weaning_weight_mean, cfg.weaning_weight_sd).expect("validated sd");
        loop {
            let w = dist.sample(rng);
            if w > 0.0 {
                break w;
            }
        }
    } else {
        cfg.weaning_weight_mean
    };
    let adg_offset = if cfg.animal_adg_sd > 0.0 {
        Normal::new(0.0, cfg.animal_adg_sd).expect("validated sd").sample(rng)
    } else {
        0.0
    };
    Animal {
        record: AnimalRecord {
            eid: eid_for(index),
            date_of_birth: dob,
            weaning_date: cfg.weaning_date,
            weaning_weight,
        },
        adg_offset,
    }
}

/// Noise-free weight of `animal` on every day from weaning to `weather`'s last day.
fn trajectory(
    cfg: &SynthConfig,
    animal: &Animal,
    weather: &BTreeMap<NaiveDate, (f64, f64)>,
) -> BTreeMap<NaiveDate, f64> {
    let mut out = BTreeMap::new();
    let mut w = animal.record.weaning_weight;
    let Some((&last, _)) = weather.last_key_value() else {
        return out;
    };
    for date in days(cfg.weaning_date, last) {
        out.insert(date, w);
        let (rain, temp) = weather[&date];
        let age_months = (date - animal.record.date_of_birth).num_days() as f64 / DAYS_PER_MONTH;
        w += cfg.base_adg + animal.adg_offset + cfg.age_effect * age_months
            - cfg.heat_penalty * (temp - cfg.heat_threshold).max(0.0)
            + cfg.rain_boost * rain;
    }
    out
}

fn weather_lookup(weather: &[WeatherDaily]) -> BTreeMap<NaiveDate, (f64, f64)> {
    weather
        .iter()
        .map(|d| {
            (
                d.date,
                (
                    d.rainfall_mm.expect("generated weather is complete"),
                    d.temperature_c.expect("generated weather is complete"),
                ),
            )
        })
        .collect()
}

/// A generated herd together with its noise-free trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthHerd {
    pub config: SynthConfig,
    pub bundle: RawBundle,
    truth: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

/// Paths written by [`SynthHerd::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub animals: PathBuf,
    pub weather: PathBuf,
    pub weights: PathBuf,
    pub manifest: PathBuf,
}

impl SynthHerd {
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let weather = generate_weather(cfg);
        let lookup = weather_lookup(&weather);
        let first = cfg.window.first_month().first_day();
        let last = cfg.window.last_month().last_day();
        let noise =
            (cfg.measurement_noise_sd > 0.0).then(|| Normal::new(0.0, cfg.measurement_noise_sd).expect("validated sd"));

        let mut animals = Vec::with_capacity(cfg.n_animals);
        let mut events = Vec::new();
        let mut truth = BTreeMap::new();
        for i in 0..cfg.n_animals {
            let mut rng = animal_rng(cfg, i);
            let animal = draw_animal(cfg, i, &mut rng);
            let path = trajectory(cfg, &animal, &lookup);
            for date in days(first, last) {
                if cfg.daily_access_prob >= 1.0 || rng.random_bool(cfg.daily_access_prob) {
                    let e = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                    events.push(WeighEvent {
                        eid: animal.record.eid.clone(),
                        date,
                        weight_kg: path[&date] + e,
                    });
                }
            }
            truth.insert(animal.record.eid.clone(), path);
            animals.push(animal.record);
        }
        Ok(Self {
            config: cfg.clone(),
            bundle: RawBundle {
                animals,
                weather,
                events,
                window: cfg.window,
            },
            truth,
        })
    }

    /// Noise-free weight of `eid` on `date`.
    pub fn ground_truth(&self, eid: &str, date: NaiveDate) -> Result<f64> {
        let path = self
            .truth
            .get(eid)
            .ok_or_else(|| Error::UnknownAnimal(eid.to_string()))?;
        path.get(&date).copied().ok_or_else(|| {
            Error::Precondition(format!(
                "{date} lies outside the simulated span {} to {}",
                self.config.weaning_date,
                self.config.weather_end()
            ))
        })
    }

    /// Mean noise-free weight of `eid` over the days of `month`.
    pub fn monthly_truth(&self, eid: &str, month: YearMonth) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for d in days(month.first_day(), month.last_day()) {
            sum += self.ground_truth(eid, d)?;
            n += 1;
        }
        Ok(sum / n as f64)
    }

    /// Write `animals.csv`, `weather.csv`, `weights.csv` and an identity
    /// `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        let files = SynthFiles {
            animals: dir.join("animals.csv"),
            weather: dir.join("weather.csv"),
            weights: dir.join("weights.csv"),
            manifest: dir.join("manifest.json"),
        };
        write_csv_atomic(&files.animals, |b| write_animals(b, &self.bundle.animals))?;
        write_csv_atomic(&files.weather, |b| write_weather(b, &self.bundle.weather))?;
        write_csv_atomic(&files.weights, |b| write_weights(b, &self.bundle.events))?;
        let manifest = ColumnManifest::identity(
            "animals.csv",
            "weather.csv",
            "weights.csv",
            Some(WindowSpec {
                first_month: self.config.window.first_month(),
                last_month: self.config.window.last_month(),
            }),
        );
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        crate::fsutil::write_atomic(&files.manifest, text.as_bytes())?;
        Ok(files)
    }
}

/// Generate a herd from `cfg`.
pub fn generate_bundle(cfg: &SynthConfig) -> Result<SynthHerd> {
    SynthHerd::generate(cfg)
}

/// Noise-free weight of `eid` on `date` under `cfg`, without simulating weigh events.
pub fn ground_truth(cfg: &SynthConfig, eid: &str, date: NaiveDate) -> Result<f64> {
    cfg.validate()?;
    let index = index_of(eid, cfg.n_animals).ok_or_else(|| Error::UnknownAnimal(eid.to_string()))?;
    let weather = weather_lookup(&generate_weather(cfg));
    let animal = draw_animal(cfg, index, &mut animal_rng(cfg, index));
    trajectory(cfg, &animal, &weather).get(&date).copied().ok_or_else(|| {
        Error::Precondition(format!(
            "{date} lies outside the simulated span {} to {}",
            cfg.weaning_date,
            cfg.weather_end()
        ))
    })
}

//! K-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::metrics::MetricSet;
use crate::features::Dataset;
use crate::matrix::Matrix;
use crate::models::ModelConfig;
use crate::scaling::MinMaxScaler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 42,
            shuffle: true,
        }
    }
}

impl CvPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if n < self.k {
            return Err(Error::Precondition(format!("{n} rows cannot fill {} folds", self.k)));
        }
        Ok(())
    }
}

/// Where the min-max scalers are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Fit on each training split only.
    #[default]
    FoldWise,
    /// Fit once on the whole dataset before splitting.
    PaperCompat,
}

impl ScalingMode {
    pub fn name(self) -> &'static str {
        match self {
            ScalingMode::FoldWise => "fold-wise",
            ScalingMode::PaperCompat => "paper-compat",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [ScalingMode::FoldWise, ScalingMode::PaperCompat]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split `0..n` into `plan.k` folds. Test sets are contiguous runs of the
/// (optionally shuffled) index order; the first `n % k` folds get one extra
/// row. Both index lists of each fold are sorted.
pub fn kfold_split(n: usize, plan: &CvPlan) -> Result<Vec<Fold>> {
    plan.validate(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    if plan.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    }
    let base = n / plan.k;
    let extra = n % plan.k;
    let mut folds = Vec::with_capacity(plan.k);
    let mut start = 0;
    for f in 0..plan.k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}

/// One held-out prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub fold: usize,
    pub actual: f64,
    pub predicted: f64,
    pub actual_scaled: f64,
    pub predicted_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train: MetricSet,
    pub test: MetricSet,
    pub train_kg: MetricSet,
    pub test_kg: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Fold means, scaled target space.
    pub train: MetricSet,
    pub test: MetricSet,
    /// Fold means, kilograms.
    pub train_kg: MetricSet,
    pub test_kg: MetricSet,
    pub folds: Vec<FoldScores>,
    /// Held-out predictions ordered by row index.
    pub predictions: Vec<Prediction>,
}

struct FoldOutput {
    scores: FoldScores,
    predictions: Vec<Prediction>,
}

fn scalers(data: &Dataset, rows: &[usize]) -> Result<(MinMaxScaler, MinMaxScaler)> {
    let x = data.x.select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
    Ok((
        MinMaxScaler::fit(&x, &data.columns)?,
        MinMaxScaler::fit_vector(&y, "target")?,
    ))
}

fn run_fold(
    config: &ModelConfig,
    data: &Dataset,
    fold_index: usize,
    fold: &Fold,
    global: Option<&(MinMaxScaler, MinMaxScaler)>,
) -> Result<FoldOutput> {
    let local;
    let (xs, ys) = match global {
        Some(pair) => pair,
        None => {
            local = scalers(data, &fold.train)?;
            &local
        }
    };
    let prepare = |rows: &[usize]| -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
        let x = xs.transform(&data.x.select_rows(rows))?;
        let y_kg: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
        let y = ys.transform_vector(&y_kg)?;
        Ok((x, y, y_kg))
    };
    let (x_train, y_train, y_train_kg) = prepare(&fold.train)?;
    let (x_test, y_test, y_test_kg) = prepare(&fold.test)?;

    let model = config.fit(&x_train, &y_train, &data.columns)?;
    let p_train = model.predict(&x_train, &data.columns)?;
    let p_test = model.predict(&x_test, &data.columns)?;
    let p_train_kg = ys.inverse_vector(&p_train)?;
    let p_test_kg = ys.inverse_vector(&p_test)?;

    let scores = FoldScores {
        fold: fold_index,
        n_train: fold.train.len(),
        n_test: fold.test.len(),
        train: MetricSet::compute_scaled(&y_train, &p_train, &y_train_kg, &p_train_kg)?,
        test: MetricSet::compute_scaled(&y_test, &p_test, &y_test_kg, &p_test_kg)?,
        train_kg: MetricSet::compute(&y_train_kg, &p_train_kg)?,
        test_kg: MetricSet::compute(&y_test_kg, &p_test_kg)?,
    };
    let predictions = fold
        .test
        .iter()
        .enumerate()
        .map(|(j, &row)| Prediction {
            row,
            fold: fold_index,
            actual: y_test_kg[j],
            predicted: p_test_kg[j],
            actual_scaled: y_test[j],
            predicted_scaled: p_test[j],
        })
        .collect();
    Ok(FoldOutput { scores, predictions })
}

/// Fit and score `config` on every fold of `data`. Folds run in parallel;
/// results are merged in fold order.
pub fn cross_validate(config: &ModelConfig, data: &Dataset, plan: &CvPlan, scaling: ScalingMode) -> Result<CvResult> {
    if data.x.rows() != data.y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} targets",
            data.x.rows(),
            data.y.len()
        )));
    }
    let folds = kfold_split(data.len(), plan)?;
    let global = match scaling {
        ScalingMode::PaperCompat => Some(scalers(data, &(0..data.len()).collect::<Vec<_>>())?),
        ScalingMode::FoldWise => None,
    };
    let outputs: Vec<FoldOutput> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            run_fold(config, data, i, fold, global.as_ref()).map_err(|e| Error::Fold {
                fold: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let scores: Vec<FoldScores> = outputs.iter().map(|o| o.scores.clone()).collect();
    let mean = |f: fn(&FoldScores) -> MetricSet| MetricSet::mean(&scores.iter().map(f).collect::<Vec<_>>());
    let mut predictions: Vec<Prediction> = outputs.into_iter().flat_map(|o| o.predictions).collect();
    predictions.sort_by_key(|p| p.row);
    Ok(CvResult {
        train: mean(|s| s.train)?,
        test: mean(|s| s.test)?,
        train_kg: mean(|s| s.train_kg)?,
        test_kg: mean(|s| s.test_kg)?,
        folds: scores,
        predictions,
    })
}

//! Hyperparameter grid search scored by cross-validated test RMSE.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::cv::{cross_validate, CvPlan, CvResult, ScalingMode};
use crate::features::Dataset;
use crate::models::{ModelConfig, ModelKind};

/// Candidate configurations for one model kind, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub candidates: Vec<ModelConfig>,
}

impl GridSpec {
    pub fn new(candidates: Vec<ModelConfig>) -> Result<Self> {
        let grid = Self { candidates };
        grid.validate()?;
        Ok(grid)
    }

    pub fn single(config: ModelConfig) -> Self {
        Self {
            candidates: vec![config],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .candidates
            .first()
            .ok_or_else(|| Error::Config("grid has no candidates".into()))?;
        if let Some(other) = self.candidates.iter().find(|c| c.kind() != first.kind()) {
            return Err(Error::Config(format!(
                "grid mixes {} and {} candidates",
                first.kind().name(),
                other.kind().name()
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> Option<ModelKind> {
        self.candidates.first().map(ModelConfig::kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub config: ModelConfig,
    /// Fold-mean test RMSE in scaled space; absent when the candidate failed.
    pub test_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: ModelConfig,
    pub scores: Vec<CandidateScore>,
    pub result: CvResult,
}

/// Cross-validate every candidate and keep the lowest fold-mean test RMSE.
/// Exact ties go to the earlier candidate.
pub fn grid_search(grid: &GridSpec, data: &Dataset, plan: &CvPlan, scaling: ScalingMode) -> Result<GridResult> {
    grid.validate()?;
    let outcomes: Vec<Result<CvResult>> = grid
        .candidates
        .par_iter()
        .map(|c| cross_validate(c, data, plan, scaling))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, out) in outcomes.iter().enumerate() {
        if let Ok(r) = out {
            let rmse = r.test.rmse;
            if !rmse.is_nan() && best.is_none_or(|(_, b)| rmse < b) {
                best = Some((i, rmse));
            }
        }
    }
    let scores: Vec<CandidateScore> = grid
        .candidates
        .iter()
        .zip(&outcomes)
        .map(|(config, out)| CandidateScore {
            config: config.clone(),
            test_rmse: out.as_ref().ok().map(|r| r.test.rmse),
            error: out.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let Some((best_index, _)) = best else {
        let reasons: Vec<String> = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.error.as_ref().map(|e| format!("candidate {i}: {e}")))
            .collect();
        return Err(Error::GridExhausted(reasons.join("; ")));
    };
    let result = outcomes
        .into_iter()
        .nth(best_index)
        .expect("index in range")
        .expect("best candidate succeeded");
    Ok(GridResult {
        best_index,
        best: grid.candidates[best_index].clone(),
        scores,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::YearMonth;
    use crate::matrix::Matrix;
    use crate::models::{ForestConfig, SvrConfig};

    fn data(n: usize) -> Dataset {
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64;
                [a, (a * 7.0).sin()]
            })
            .collect();
        let y = rows
            .iter()
            .map(|r| 50.0 + 20.0 * (r[0] * 6.0).sin() + 5.0 * r[1])
            .collect();
        Dataset {
            x: Matrix::from_rows(&rows).unwrap(),
            y,
            columns: vec!["a".into(), "b".into()],
            eids: (0..n).map(|i| i.to_string()).collect(),
            months: vec![YearMonth::new(2022, 3).unwrap(); n],
        }
    }

    #[test]
    fn validation() {
        assert!(GridSpec::new(vec![]).is_err());
        assert!(GridSpec::new(vec![ModelConfig::Mean, ModelConfig::Svr(SvrConfig::default())]).is_err());
    }

    #[test]
    fn ties_go_to_first_candidate() {
        let grid = GridSpec::new(vec![ModelConfig::Mean, ModelConfig::Mean]).unwrap();
        let res = grid_search(
            &grid,
            &data(30),
            &CvPlan {
                k: 3,
                ..Default::default()
            },
            ScalingMode::FoldWise,
        )
        .unwrap();
        assert_eq!(res.best_index, 0);
        assert_eq!(res.scores.len(), 2);
    }

    #[test]
    fn failing_candidates_are_skipped_or_reported() {
        let bad = ModelConfig::Forest(ForestConfig {
            n_estimators: 0,
            ..Default::default()
        });
        let good = ModelConfig::Forest(ForestConfig {
            n_estimators: 3,
            ..Default::default()
        });
        let plan = CvPlan {
            k: 3,
            ..Default::default()
        };
        let res = grid_search(
            &GridSpec::new(vec![bad.clone(), good]).unwrap(),
            &data(30),
            &plan,
            ScalingMode::FoldWise,
        )
        .unwrap();
        assert_eq!(res.best_index, 1);
        assert!(res.scores[0].error.is_some());
        let err = grid_search(&GridSpec::single(bad), &data(30), &plan, ScalingMode::FoldWise).unwrap_err();
        assert!(matches!(err, Error::GridExhausted(_)));
    }
}

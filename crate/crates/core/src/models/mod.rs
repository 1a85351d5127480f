//! Regressors behind a common fit/predict contract.

pub mod forest;
pub mod lstm;
pub mod svr;

use serde::{Deserialize, Serialize};

pub use forest::{Forest, ForestConfig};
pub use lstm::{Lstm, LstmConfig, LstmNetwork, SequenceMode};
pub use svr::{Kernel, Svr, SvrConfig};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Svr,
    Lstm,
    /// Predicts the training mean; a reference point for the others.
    Mean,
}

impl ModelKind {
    pub const COMPARED: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Lstm, ModelKind::Svr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Svr => "svr",
            ModelKind::Lstm => "lstm",
            ModelKind::Mean => "mean",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Forest => "RF",
            ModelKind::Svr => "SVR",
            ModelKind::Lstm => "LSTM",
            ModelKind::Mean => "Mean",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [ModelKind::Forest, ModelKind::Svr, ModelKind::Lstm, ModelKind::Mean]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Forest(ForestConfig),
    Svr(SvrConfig),
    Lstm(LstmConfig),
    Mean,
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Forest(_) => ModelKind::Forest,
            ModelConfig::Svr(_) => ModelKind::Svr,
            ModelConfig::Lstm(_) => ModelKind::Lstm,
            ModelConfig::Mean => ModelKind::Mean,
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[f64], columns: &[String]) -> Result<FittedModel> {
        if columns.len() != x.cols() {
            return Err(Error::Shape(format!(
                "{} column names for {} columns",
                columns.len(),
                x.cols()
            )));
        }
        let params = match self {
            ModelConfig::Forest(cfg) => Parameters::Forest(Forest::fit(x, y, cfg)?),
            ModelConfig::Svr(cfg) => Parameters::Svr(Svr::fit(x, y, cfg)?),
            ModelConfig::Lstm(cfg) => Parameters::Lstm(Lstm::fit(x, y, cfg)?),
            ModelConfig::Mean => {
                if y.is_empty() {
                    return Err(Error::Precondition("cannot fit on zero rows".into()));
                }
                Parameters::Mean {
                    value: forest::bounded_mean(y.iter().copied()),
                }
            }
        };
        Ok(FittedModel {
            config: self.clone(),
            columns: columns.to_vec(),
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Forest(Forest),
    Svr(Svr),
    Lstm(Lstm),
    Mean { value: f64 },
}

/// A trained model together with the configuration and column set it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub columns: Vec<String>,
    pub params: Parameters,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    /// Predict for rows whose columns are exactly the training columns, in order.
    pub fn predict(&self, x: &Matrix, columns: &[String]) -> Result<Vec<f64>> {
        if columns != self.columns.as_slice() {
            return Err(Error::Shape(format!(
                "model trained on columns {:?}, got {:?}",
                self.columns, columns
            )));
        }
        if x.is_empty() {
            return Ok(Vec::new());
        }
        if x.cols() != self.columns.len() {
            return Err(Error::Shape(format!(
                "expected {} columns, got {}",
                self.columns.len(),
                x.cols()
            )));
        }
        let out = match &self.params {
            Parameters::Forest(f) => f.predict(x),
            Parameters::Svr(s) => s.predict(x),
            Parameters::Lstm(l) => l.predict(x),
            Parameters::Mean { value } => vec![*value; x.rows()],
        };
        if let Some(i) = out.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("non-finite prediction for row {i}")));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

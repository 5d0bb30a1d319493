//! Estimators looked up by algorithm name, with positional string
//! parameters as they appear in pipeline configurations.

use std::fmt;

use super::kmeans::{kmeans_predict, kmeans_train, KMeansModel, KMeansParams};
use super::logreg::{logreg_predict, logreg_train, LogRegModel, LogRegParams};
use super::{FeatureMatrix, MlError};
use crate::relation::Relation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    PositiveInt,
    NonNegativeFloat,
    PositiveFloat,
    Seed,
}

impl ParamKind {
    fn describe(self) -> &'static str {
        match self {
            ParamKind::PositiveInt => "positive integer",
            ParamKind::NonNegativeFloat => "non-negative number",
            ParamKind::PositiveFloat => "positive number",
            ParamKind::Seed => "unsigned 64-bit integer",
        }
    }

    fn accepts(self, s: &str) -> bool {
        match self {
            ParamKind::PositiveInt => s.parse::<usize>().is_ok_and(|v| v > 0),
            ParamKind::NonNegativeFloat => {
                s.parse::<f64>().is_ok_and(|v| v.is_finite() && v >= 0.0)
            }
            ParamKind::PositiveFloat => s.parse::<f64>().is_ok_and(|v| v.is_finite() && v > 0.0),
            ParamKind::Seed => s.parse::<u64>().is_ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
}

/// A trained model that can label a feature matrix.
pub trait Fitted: fmt::Debug + Send + Sync {
    fn predict(&self, m: &FeatureMatrix) -> Result<Relation, MlError>;
    fn to_json(&self) -> serde_json::Value;
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    /// Positional parameters in configuration order.
    fn params(&self) -> &'static [ParamSpec];
    fn needs_label(&self) -> bool;
    /// `params` has already been checked and completed by the registry.
    fn fit(
        &self,
        m: &FeatureMatrix,
        labels: Option<&[f64]>,
        params: &[String],
    ) -> Result<Box<dyn Fitted>, MlError>;
}

const KMEANS_PARAMS: &[ParamSpec] = &[
    ParamSpec {
        name: "k",
        kind: ParamKind::PositiveInt,
        default: "2",
    },
    ParamSpec {
        name: "max_iter",
        kind: ParamKind::PositiveInt,
        default: "100",
    },
    ParamSpec {
        name: "tol",
        kind: ParamKind::NonNegativeFloat,
        default: "0.0001",
    },
    ParamSpec {
        name: "seed",
        kind: ParamKind::Seed,
        default: "0",
    },
];

const LOGREG_PARAMS: &[ParamSpec] = &[
    ParamSpec {
        name: "lr",
        kind: ParamKind::PositiveFloat,
        default: "0.1",
    },
    ParamSpec {
        name: "epochs",
        kind: ParamKind::PositiveInt,
        default: "100",
    },
    ParamSpec {
        name: "seed",
        kind: ParamKind::Seed,
        default: "0",
    },
];

fn parse<T: std::str::FromStr>(s: &str) -> T {
    s.parse()
        .ok()
        .expect("parameters validated by the registry")
}

struct KMeans;

impl Estimator for KMeans {
    fn name(&self) -> &'static str {
        "KMeans"
    }

    fn params(&self) -> &'static [ParamSpec] {
        KMEANS_PARAMS
    }

    fn needs_label(&self) -> bool {
        false
    }

    fn fit(
        &self,
        m: &FeatureMatrix,
        _labels: Option<&[f64]>,
        p: &[String],
    ) -> Result<Box<dyn Fitted>, MlError> {
        let params = KMeansParams {
            k: parse(&p[0]),
            max_iter: parse(&p[1]),
            tol: parse(&p[2]),
            seed: parse(&p[3]),
        };
        Ok(Box::new(kmeans_train(m, &params)?))
    }
}

impl Fitted for KMeansModel {
    fn predict(&self, m: &FeatureMatrix) -> Result<Relation, MlError> {
        kmeans_predict(self, m)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "algorithm": "KMeans", "model": self })
    }
}

struct LogisticRegression;

impl Estimator for LogisticRegression {
    fn name(&self) -> &'static str {
        "LogisticRegression"
    }

    fn params(&self) -> &'static [ParamSpec] {
        LOGREG_PARAMS
    }

    fn needs_label(&self) -> bool {
        true
    }

    fn fit(
        &self,
        m: &FeatureMatrix,
        labels: Option<&[f64]>,
        p: &[String],
    ) -> Result<Box<dyn Fitted>, MlError> {
        let labels = labels.ok_or_else(|| MlError::LabelRequired {
            algorithm: self.name().to_string(),
        })?;
        let params = LogRegParams {
            lr: parse(&p[0]),
            epochs: parse(&p[1]),
            seed: parse(&p[2]),
        };
        Ok(Box::new(logreg_train(m, labels, &params)?))
    }
}

impl Fitted for LogRegModel {
    fn predict(&self, m: &FeatureMatrix) -> Result<Relation, MlError> {
        logreg_predict(self, m)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "algorithm": "LogisticRegression", "model": self })
    }
}

/// Algorithm names are matched case-insensitively. `LogReg` is accepted as
/// an alias of `LogisticRegression`.
pub struct Registry {
    estimators: Vec<Box<dyn Estimator>>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry {
            estimators: vec![Box::new(KMeans), Box::new(LogisticRegression)],
        }
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            estimators: Vec::new(),
        }
    }

    /// Adds an estimator, replacing any with the same name.
    pub fn register(&mut self, e: Box<dyn Estimator>) {
        self.estimators
            .retain(|x| !x.name().eq_ignore_ascii_case(e.name()));
        self.estimators.push(e);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.estimators.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator, MlError> {
        let wanted = if name.eq_ignore_ascii_case("logreg") {
            "LogisticRegression"
        } else {
            name
        };
        self.estimators
            .iter()
            .find(|e| e.name().eq_ignore_ascii_case(wanted))
            .map(|e| e.as_ref())
            .ok_or_else(|| MlError::UnknownAlgorithm {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    /// Checks `given` against the estimator's declared parameters and fills
    /// the missing trailing ones with defaults.
    pub fn resolve_params(&self, name: &str, given: &[String]) -> Result<Vec<String>, MlError> {
        let est = self.get(name)?;
        let specs = est.params();
        if given.len() > specs.len() {
            return Err(MlError::TooManyParameters {
                algorithm: est.name().to_string(),
                max: specs.len(),
                got: given.len(),
            });
        }
        specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let v = given.get(i).map_or(spec.default, |s| s.trim());
                if spec.kind.accepts(v) {
                    Ok(v.to_string())
                } else {
                    Err(MlError::BadParameter {
                        algorithm: est.name().to_string(),
                        name: spec.name.to_string(),
                        value: v.to_string(),
                        expected: spec.kind.describe(),
                    })
                }
            })
            .collect()
    }

    pub fn fit(
        &self,
        name: &str,
        m: &FeatureMatrix,
        labels: Option<&[f64]>,
        params: &[String],
    ) -> Result<Box<dyn Fitted>, MlError> {
        let params = self.resolve_params(name, params)?;
        self.get(name)?.fit(m, labels, &params)
    }
}

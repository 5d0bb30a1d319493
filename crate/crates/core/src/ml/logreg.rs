use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, MlError};
use crate::numeric::ExactSum;
use crate::relation::Relation;
use crate::types::{ColumnType, Value};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub lr: f64,
    pub epochs: usize,
    /// Accepted for interface symmetry; training from zero is deterministic.
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            lr: 0.1,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub training_loss: f64,
    /// Loss before every update, then the final loss.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logit(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
    z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Mean binary cross-entropy and its gradient; the gradient has `d + 1`
/// entries with the bias last.
pub fn logreg_loss_grad(
    weights: &[f64],
    bias: f64,
    m: &FeatureMatrix,
    labels: &[f64],
) -> Result<(f64, Vec<f64>), MlError> {
    if weights.len() != m.d() {
        return Err(MlError::DimensionMismatch {
            expected: m.d(),
            got: weights.len(),
        });
    }
    if labels.len() != m.n() {
        return Err(MlError::DimensionMismatch {
            expected: m.n(),
            got: labels.len(),
        });
    }
    let mut loss = ExactSum::new();
    let mut grad = vec![ExactSum::new(); m.d() + 1];
    for (x, &y) in m.rows().zip(labels) {
        let z = logit(weights, bias, x);
        loss.add(softplus(z) - y * z);
        let r = sigmoid(z) - y;
        for (g, v) in grad.iter_mut().zip(x) {
            g.add(r * v);
        }
        grad[m.d()].add(r);
    }
    let n = m.n() as f64;
    Ok((
        loss.value() / n,
        grad.iter().map(|g| g.value() / n).collect(),
    ))
}

/// Full-batch gradient descent from the zero model.
pub fn logreg_train(
    m: &FeatureMatrix,
    labels: &[f64],
    params: &LogRegParams,
) -> Result<LogRegModel, MlError> {
    let mut weights = vec![0.0; m.d()];
    let mut bias = 0.0;
    let mut history = Vec::with_capacity(params.epochs + 1);
    for epoch in 0..params.epochs {
        let (loss, grad) = logreg_loss_grad(&weights, bias, m, labels)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(MlError::Divergence { epoch });
        }
        history.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= params.lr * g;
        }
        bias -= params.lr * grad[m.d()];
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(MlError::Divergence { epoch });
        }
    }
    let (loss, _) = logreg_loss_grad(&weights, bias, m, labels)?;
    if !loss.is_finite() {
        return Err(MlError::Divergence {
            epoch: params.epochs,
        });
    }
    history.push(loss);
    Ok(LogRegModel {
        weights,
        bias,
        training_loss: loss,
        loss_history: history,
    })
}

/// Source rows plus Float64 `probability` and Int64 `label` (1 iff the
/// probability is at least 0.5). If the input already has a column with
/// one of those names, the new column is called `predicted_<name>`.
pub fn logreg_predict(model: &LogRegModel, m: &FeatureMatrix) -> Result<Relation, MlError> {
    if model.weights.len() != m.d() {
        return Err(MlError::DimensionMismatch {
            expected: model.weights.len(),
            got: m.d(),
        });
    }
    let schema = m.source().schema();
    let name = |base: &'static str| -> String {
        if schema.index_of(base).is_some() {
            format!("predicted_{base}")
        } else {
            base.to_string()
        }
    };
    let (p_name, l_name) = (name("probability"), name("label"));
    let values = m.rows().map(|x| {
        let p = sigmoid(logit(&model.weights, model.bias, x));
        vec![Value::Float64(p), Value::Int64(i64::from(p >= 0.5))]
    });
    m.extend_source(
        &[
            (p_name.as_str(), ColumnType::Float64),
            (l_name.as_str(), ColumnType::Int64),
        ],
        values,
    )
}

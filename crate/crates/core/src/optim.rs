//! First-order optimizers over named parameter groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state for one group of parameters sharing a learning rate.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    kind: OptimizerKind,
    learning_rate: f64,
    names: Vec<String>,
    // (first, second) moments per parameter, adam only
    moments: Vec<(Vec<T>, Vec<T>)>,
    step_count: u64,
}

impl<T: Scalar> OptimizerState<T> {
    /// Creates state for the parameters whose names satisfy `select`.
    pub fn new(
        kind: OptimizerKind,
        learning_rate: f64,
        params: &ModelParams<T>,
        select: impl Fn(&str) -> bool,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let names: Vec<String> = params.names().filter(|n| select(n)).map(String::from).collect();
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => names
                .iter()
                .map(|n| {
                    let len = params.get(n).map_or(0, |t| t.len());
                    (vec![T::zero(); len], vec![T::zero(); len])
                })
                .collect(),
        };
        Ok(OptimizerState {
            kind,
            learning_rate,
            names,
            moments,
            step_count: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    /// Applies one update to the group's parameters, then zeroes their gradients.
    pub fn step(&mut self, params: &mut ModelParams<T>) -> Result<()> {
        for name in &self.names {
            let t = params.get(name).ok_or_else(|| Error::MissingGradient(name.clone()))?;
            if t.grad().is_none() {
                return Err(Error::MissingGradient(name.clone()));
            }
        }
        self.step_count += 1;
        let lr = T::lit(self.learning_rate);
        let t = self.step_count as i32;
        let bc1 = T::lit(1.0 - ADAM_BETA1.powi(t));
        let bc2 = T::lit(1.0 - ADAM_BETA2.powi(t));
        let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));

        for (i, name) in self.names.iter().enumerate() {
            let tensor = params.get_mut(name).expect("checked above");
            let (data, grad) = tensor.data_and_grad_mut();
            let grad = grad.expect("checked above");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, &g) in data.iter_mut().zip(grad.iter()) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = &mut self.moments[i];
                    for (((p, &g), m), v) in data.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            grad.iter_mut().for_each(|g| *g = T::zero());
        }
        Ok(())
    }
}

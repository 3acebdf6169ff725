//! Mini-batch partial-likelihood loss, gradient, and Hessian for the
//! linear relative risk `f(x) = theta^T x`.
//!
//! Risk sets are formed within the batch: the batch is sorted by
//! descending time (O(s log s)) and swept once, accumulating the weighted
//! sums `S0 = sum w_j`, `S1 = sum w_j x_j`, `S2 = sum w_j x_j x_j^T` with
//! `w_j = exp(theta^T x_j)`. A batch without events contributes zero
//! loss and zero gradient, so the SGD step becomes a no-op.

use ndarray::{Array1, Array2};

use crate::batching::MiniBatch;
use crate::error::{Error, Result};
use crate::survival::{sweep_risk_sets, Dataset, RelativeRisk, SweepStep, RISK_BOUND};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoxModel {
    pub theta: Array1<f64>,
}

impl LinearCoxModel {
    pub fn new(theta: Array1<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "linear model coefficients",
            });
        }
        Ok(Self { theta })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            theta: Array1::zeros(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

impl RelativeRisk for LinearCoxModel {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn log_risk(&self, x: &[f64]) -> f64 {
        self.theta.iter().zip(x).map(|(t, v)| t * v).sum()
    }
}

/// What to accumulate in a batch sweep.
#[derive(Clone, Copy)]
struct Want {
    gradient: bool,
    hessian: bool,
}

struct BatchStats {
    loss: f64,
    gradient: Option<Array1<f64>>,
    hessian: Option<Array2<f64>>,
}

fn batch_stats(
    data: &Dataset,
    batch: &MiniBatch,
    model: &LinearCoxModel,
    want: Want,
) -> Result<BatchStats> {
    batch.validate(data.len())?;
    if model.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: model.dim(),
        });
    }
    let s = batch.size();
    let p = data.dim();

    // Gather the batch once; positions index these arrays.
    let times: Vec<f64> = batch.indices.iter().map(|&i| data.record(i).time).collect();
    let events: Vec<bool> = batch
        .indices
        .iter()
        .map(|&i| data.record(i).event)
        .collect();
    let mut f_values = Vec::with_capacity(s);
    for &i in &batch.indices {
        let f = model.log_risk(&data.record(i).covariates);
        if !f.is_finite() {
            return Err(Error::NonFinite {
                context: "relative risk values",
            });
        }
        if f.abs() > RISK_BOUND {
            return Err(Error::RiskOverflow {
                value: f,
                limit: RISK_BOUND,
            });
        }
        f_values.push(f);
    }
    let covariate = |pos: usize| -> &[f64] { &data.record(batch.indices[pos]).covariates };

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));

    let mut s0 = 0.0;
    let mut s1 = Array1::<f64>::zeros(if want.gradient || want.hessian { p } else { 0 });
    let mut s2 = Array2::<f64>::zeros(if want.hessian { (p, p) } else { (0, 0) });

    let mut loss = 0.0;
    let mut gradient = want.gradient.then(|| Array1::<f64>::zeros(p));
    let mut hessian = want.hessian.then(|| Array2::<f64>::zeros((p, p)));

    sweep_risk_sets(
        &order,
        |pos| times[pos],
        |pos| events[pos],
        |step| match step {
            SweepStep::Absorb(pos) => {
                let w = f_values[pos].exp();
                s0 += w;
                if want.gradient || want.hessian {
                    let x = covariate(pos);
                    for (acc, &v) in s1.iter_mut().zip(x) {
                        *acc += w * v;
                    }
                    if want.hessian {
                        for a in 0..p {
                            for b in 0..p {
                                s2[[a, b]] += w * x[a] * x[b];
                            }
                        }
                    }
                }
            }
            SweepStep::Event(pos) => {
                loss += f_values[pos] - s0.ln();
                if let Some(g) = gradient.as_mut() {
                    let x = covariate(pos);
                    for a in 0..p {
                        g[a] += x[a] - s1[a] / s0;
                    }
                }
                if let Some(h) = hessian.as_mut() {
                    for a in 0..p {
                        for b in 0..p {
                            h[[a, b]] += s2[[a, b]] / s0 - (s1[a] / s0) * (s1[b] / s0);
                        }
                    }
                }
            }
        },
    );

    let scale = s as f64;
    Ok(BatchStats {
        loss: -loss / scale,
        gradient: gradient.map(|g| g / -scale),
        hessian: hessian.map(|h| h / scale),
    })
}

/// Within-batch negative log-partial likelihood, `-(1/s) sum` over batch
/// events. Zero when the batch contains no events.
pub fn batch_loss(data: &Dataset, batch: &MiniBatch, model: &LinearCoxModel) -> Result<f64> {
    Ok(batch_stats(
        data,
        batch,
        model,
        Want {
            gradient: false,
            hessian: false,
        },
    )?
    .loss)
}

/// Analytic gradient of [`batch_loss`]:
/// `-(1/s) sum_{i in batch events} [x_i - S1_i/S0_i]`.
pub fn batch_gradient(
    data: &Dataset,
    batch: &MiniBatch,
    model: &LinearCoxModel,
) -> Result<Array1<f64>> {
    Ok(batch_stats(
        data,
        batch,
        model,
        Want {
            gradient: true,
            hessian: false,
        },
    )?
    .gradient
    .unwrap())
}

/// Analytic Hessian of [`batch_loss`]:
/// `(1/s) sum_{i in batch events} [S2_i/S0_i - (S1_i/S0_i)(S1_i/S0_i)^T]`.
///
/// Each event term is a weighted covariance, so the result is symmetric
/// positive semidefinite by construction.
pub fn batch_hessian(
    data: &Dataset,
    batch: &MiniBatch,
    model: &LinearCoxModel,
) -> Result<Array2<f64>> {
    Ok(batch_stats(
        data,
        batch,
        model,
        Want {
            gradient: false,
            hessian: true,
        },
    )?
    .hessian
    .unwrap())
}

/// Loss and gradient in one sweep.
pub fn batch_loss_gradient(
    data: &Dataset,
    batch: &MiniBatch,
    model: &LinearCoxModel,
) -> Result<(f64, Array1<f64>)> {
    let stats = batch_stats(
        data,
        batch,
        model,
        Want {
            gradient: true,
            hessian: false,
        },
    )?;
    Ok((stats.loss, stats.gradient.unwrap()))
}

/// Loss, gradient, and Hessian in one sweep.
pub fn batch_loss_gradient_hessian(
    data: &Dataset,
    batch: &MiniBatch,
    model: &LinearCoxModel,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let stats = batch_stats(
        data,
        batch,
        model,
        Want {
            gradient: true,
            hessian: true,
        },
    )?;
    Ok((stats.loss, stats.gradient.unwrap(), stats.hessian.unwrap()))
}

impl crate::sgd::StochasticModel for LinearCoxModel {
    fn param_count(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> Array1<f64> {
        self.theta.clone()
    }

    fn set_params(&mut self, params: &ndarray::ArrayView1<f64>) -> Result<()> {
        if params.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "linear model coefficients",
            });
        }
        self.theta.assign(params);
        Ok(())
    }

    fn batch_loss(&self, data: &Dataset, batch: &MiniBatch) -> Result<f64> {
        batch_loss(data, batch, self)
    }

    fn batch_gradient(&self, data: &Dataset, batch: &MiniBatch) -> Result<Array1<f64>> {
        batch_gradient(data, batch, self)
    }

    fn eval_loss(&self, data: &Dataset) -> Result<f64> {
        Ok(crate::survival::full_loss(data, self)?.value)
    }
}

fn full_batch(data: &Dataset) -> MiniBatch {
    MiniBatch::new((0..data.len()).collect())
}

/// Gradient of the full-sample loss (the batch gradient with the whole
/// dataset as the batch).
pub fn full_gradient(data: &Dataset, model: &LinearCoxModel) -> Result<Array1<f64>> {
    batch_gradient(data, &full_batch(data), model)
}

/// Hessian of the full-sample loss.
pub fn full_hessian(data: &Dataset, model: &LinearCoxModel) -> Result<Array2<f64>> {
    batch_hessian(data, &full_batch(data), model)
}

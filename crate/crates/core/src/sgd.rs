//! Projected stochastic gradient descent over mini-batch Cox losses.
//!
//! The engine is generic over any [`StochasticModel`] (linear Cox, the
//! toy Cox network, or test surrogates) and over the batch source:
//! offline batches drawn from a fixed dataset through a
//! [`BatchSampler`], or online batches simulated fresh from a
//! [`SimSpec`] at every step.

use ndarray::{Array1, ArrayView1};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

use crate::batching::{BatchSampler, MiniBatch};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::simulate::SimSpec;
use crate::survival::Dataset;

/// Learning-rate schedule.
///
/// Step indices are 0-based; polynomial schedules evaluate at `t + 1` so
/// the first step uses rate `C`. Epoch indices are 0-based as well: the
/// per-epoch schedule starts at `C` and decreases after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LrSchedule {
    Constant {
        gamma: f64,
    },
    /// `gamma_t = C / (t+1)^alpha`, `alpha` in [0, 1].
    Polynomial {
        c: f64,
        alpha: f64,
    },
    /// `gamma = C / (epoch+1)`, updated once per epoch.
    EpochPolynomial {
        c: f64,
    },
    /// `gamma_t = C / (t+1)`; the schedule paired with weighted iterate
    /// averaging.
    AveragingPoly {
        c: f64,
    },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant { gamma } => gamma.is_finite() && gamma >= 0.0,
            LrSchedule::Polynomial { c, alpha } => {
                c > 0.0 && c.is_finite() && (0.0..=1.0).contains(&alpha)
            }
            LrSchedule::EpochPolynomial { c } | LrSchedule::AveragingPoly { c } => {
                c > 0.0 && c.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid schedule {self:?}")))
        }
    }

    pub fn rate(&self, t: u64, epoch: u64) -> f64 {
        match *self {
            LrSchedule::Constant { gamma } => gamma,
            LrSchedule::Polynomial { c, alpha } => c / ((t + 1) as f64).powf(alpha),
            LrSchedule::EpochPolynomial { c } => c / (epoch + 1) as f64,
            LrSchedule::AveragingPoly { c } => c / (t + 1) as f64,
        }
    }
}

/// Total run length: epochs (offline, `m` draws each) or raw iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RunLength {
    Epochs { count: u64 },
    Iterations { count: u64 },
}

/// Which iterates to keep in the [`Trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordCadence {
    /// Snapshot at every epoch boundary.
    EveryEpoch,
    /// Snapshot at multiples of `10^floor(log10 t)`: every step through
    /// t=10, every 10 through 100, and so on.
    Log10,
    /// Snapshot every step (tests only; memory grows linearly).
    EveryStep,
    /// Final iterate only.
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub schedule: LrSchedule,
    /// Radius of the projection ball, or `None` to disable projection.
    pub projection_radius: Option<f64>,
    pub run_length: RunLength,
    /// Maintain the weighted iterate average `theta_check`.
    pub averaging: bool,
    pub cadence: RecordCadence,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if let Some(b) = self.projection_radius {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "projection radius must be positive, got {b}"
                )));
            }
        }
        // Zero-length runs are allowed (initial evaluation only).
        Ok(())
    }

    /// Divergence guard radius: ten times the projection ball, or a fixed
    /// ceiling when projection is off.
    fn guard_radius(&self) -> f64 {
        match self.projection_radius {
            Some(b) => 10.0 * b,
            None => 1e8,
        }
    }
}

/// A model that can be driven by the SGD engine.
pub trait StochasticModel {
    fn param_count(&self) -> usize;
    fn params(&self) -> Array1<f64>;
    fn set_params(&mut self, params: &ArrayView1<f64>) -> Result<()>;
    fn batch_loss(&self, data: &Dataset, batch: &MiniBatch) -> Result<f64>;
    fn batch_gradient(&self, data: &Dataset, batch: &MiniBatch) -> Result<Array1<f64>>;
    /// Full-sample loss used for held-out evaluation.
    fn eval_loss(&self, data: &Dataset) -> Result<f64>;
}

/// Where batches come from.
pub enum BatchSource<'a> {
    /// Draw index subsets of a fixed dataset.
    Offline {
        data: &'a Dataset,
        sampler: BatchSampler,
    },
    /// Simulate a fresh s-record batch from the population each step.
    Online {
        spec: &'a SimSpec,
        s: usize,
        rng: Box<ChaCha8Rng>,
    },
}

impl<'a> BatchSource<'a> {
    pub fn offline(data: &'a Dataset, sampler: BatchSampler) -> Self {
        BatchSource::Offline { data, sampler }
    }

    pub fn online(spec: &'a SimSpec, s: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if s < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size must be at least 2, got {s}"
            )));
        }
        Ok(BatchSource::Online {
            spec,
            s,
            rng: Box::new(stream_rng(seed, 0)),
        })
    }

    /// Draws per epoch: `m = n/s` cells (FB) or `ceil(n/s)` (SB) offline;
    /// online data has no epochs, so one draw counts as one.
    pub fn epoch_len(&self) -> usize {
        match self {
            BatchSource::Offline { sampler, .. } => sampler.epoch_len(),
            BatchSource::Online { .. } => 1,
        }
    }

    fn next(&mut self) -> Result<(Cow<'a, Dataset>, MiniBatch)> {
        match self {
            BatchSource::Offline { data, sampler } => Ok((Cow::Borrowed(*data), sampler.draw())),
            BatchSource::Online { spec, s, rng } => {
                let batch_data = spec.draw_dataset(*s, rng)?;
                let batch = MiniBatch::new((0..*s).collect());
                Ok((Cow::Owned(batch_data), batch))
            }
        }
    }
}

/// Orthogonal projection onto the ball of radius `b`: returns the input
/// when inside, otherwise scales it radially onto the sphere.
pub fn project_ball(theta: &Array1<f64>, b: f64) -> Array1<f64> {
    let norm = theta.dot(theta).sqrt();
    if norm <= b {
        theta.clone()
    } else {
        theta * (b / norm)
    }
}

/// Running weighted iterate average
/// `theta_check_t = 2/((t+1)(t+2)) sum_{i=0}^t (i+1) theta_i`,
/// maintained incrementally.
#[derive(Debug, Clone)]
pub struct WeightedAverage {
    value: Array1<f64>,
    count: u64,
}

impl WeightedAverage {
    pub fn new(dim: usize) -> Self {
        Self {
            value: Array1::zeros(dim),
            count: 0,
        }
    }

    /// Fold in the iterate with index `count` (0-based):
    /// `avg <- avg * t/(t+2) + theta * 2/(t+2)`.
    pub fn push(&mut self, theta: &Array1<f64>) {
        let t = self.count as f64;
        if self.count == 0 {
            self.value.assign(theta);
        } else {
            let keep = t / (t + 2.0);
            let add = 2.0 / (t + 2.0);
            self.value = &self.value * keep + theta * add;
        }
        self.count += 1;
    }

    pub fn value(&self) -> &Array1<f64> {
        &self.value
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// One recorded state of the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Iterations completed when the snapshot was taken.
    pub t: u64,
    pub epoch: u64,
    pub params: Vec<f64>,
    pub averaged: Option<Vec<f64>>,
    pub eval_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_params: Vec<f64>,
    pub final_averaged: Option<Vec<f64>>,
    pub iterations: u64,
    pub projection_hits: u64,
}

impl Trajectory {
    /// Snapshot with `t == target`, if the cadence recorded one.
    pub fn point_at(&self, target: u64) -> Option<&TrajectoryPoint> {
        self.points.iter().find(|p| p.t == target)
    }
}

fn should_record(cadence: RecordCadence, t: u64, epoch_len: usize) -> bool {
    match cadence {
        RecordCadence::EveryEpoch => epoch_len > 0 && t.is_multiple_of(epoch_len as u64),
        RecordCadence::Log10 => {
            let mut scale = 1u64;
            while scale * 10 <= t {
                scale *= 10;
            }
            t.is_multiple_of(scale)
        }
        RecordCadence::EveryStep => true,
        RecordCadence::FinalOnly => false,
    }
}

/// Run projected SGD: `theta_{t+1} = Pi_B[theta_t - gamma_t g_t]` with
/// `g_t` the mini-batch gradient from `source`.
///
/// The model's current parameters are the initial point. When projection
/// is enabled the initial point is projected onto the ball first. A
/// divergence guard aborts on non-finite values or when the iterate norm
/// exceeds ten times the ball radius (1e8 with projection off).
pub fn run_sgd<M: StochasticModel>(
    source: &mut BatchSource,
    model: &mut M,
    config: &SgdConfig,
    eval_data: Option<&Dataset>,
) -> Result<Trajectory> {
    config.validate()?;
    let epoch_len = source.epoch_len();
    let total: u64 = match config.run_length {
        RunLength::Epochs { count } => count * epoch_len as u64,
        RunLength::Iterations { count } => count,
    };
    let guard = config.guard_radius();

    let mut theta = model.params();
    if let Some(b) = config.projection_radius {
        theta = project_ball(&theta, b);
        model.set_params(&theta.view())?;
    }

    let mut average = config.averaging.then(|| {
        let mut avg = WeightedAverage::new(theta.len());
        avg.push(&theta);
        avg
    });
    let mut projection_hits = 0u64;
    let mut points = Vec::new();

    let snapshot = |t: u64,
                    epoch: u64,
                    model: &M,
                    theta: &Array1<f64>,
                    average: &Option<WeightedAverage>|
     -> Result<TrajectoryPoint> {
        let eval_loss = match eval_data {
            Some(data) => Some(model.eval_loss(data)?),
            None => None,
        };
        Ok(TrajectoryPoint {
            t,
            epoch,
            params: theta.to_vec(),
            averaged: average.as_ref().map(|a| a.value().to_vec()),
            eval_loss,
        })
    };

    // Initial snapshot (t = 0) for every cadence except FinalOnly.
    if config.cadence != RecordCadence::FinalOnly {
        points.push(snapshot(0, 0, model, &theta, &average)?);
    }

    for t in 0..total {
        let epoch = if epoch_len > 0 {
            t / epoch_len as u64
        } else {
            0
        };
        let gamma = config.schedule.rate(t, epoch);
        let (data, batch) = source.next()?;
        let grad = model.batch_gradient(&data, &batch)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                reason: "non-finite gradient".to_string(),
            });
        }

        theta = &theta - &(grad * gamma);
        if let Some(b) = config.projection_radius {
            let norm = theta.dot(&theta).sqrt();
            if norm > b {
                theta *= b / norm;
                projection_hits += 1;
            }
        }
        let norm = theta.dot(&theta).sqrt();
        if !norm.is_finite() || norm > guard {
            return Err(Error::Divergence {
                iteration: t,
                reason: format!("iterate norm {norm:.3e} exceeded guard {guard:.3e}"),
            });
        }
        model.set_params(&theta.view())?;
        if let Some(avg) = average.as_mut() {
            avg.push(&theta);
        }

        let done = t + 1;
        if config.cadence != RecordCadence::FinalOnly
            && should_record(config.cadence, done, epoch_len)
        {
            let epoch_done = if epoch_len > 0 {
                done / epoch_len as u64
            } else {
                0
            };
            points.push(snapshot(done, epoch_done, model, &theta, &average)?);
        }
    }

    if points.last().map(|p| p.t) != Some(total) {
        let epoch_done = if epoch_len > 0 {
            total / epoch_len as u64
        } else {
            0
        };
        points.push(snapshot(total, epoch_done, model, &theta, &average)?);
    }

    Ok(Trajectory {
        final_params: theta.to_vec(),
        final_averaged: average.as_ref().map(|a| a.value().to_vec()),
        iterations: total,
        projection_hits,
        points,
    })
}

/// `phi_beta(t) = (t^beta - 1)/beta` for `beta != 0`, `log t` at zero.
pub fn phi(beta: f64, t: f64) -> f64 {
    if beta == 0.0 {
        t.ln()
    } else {
        (t.powf(beta) - 1.0) / beta
    }
}

/// Right-hand side of the non-asymptotic projected-SGD bound on
/// `E ||theta_t - theta_0||^2` with learning rate `C/t^alpha`:
///
/// - `alpha` in [0,1):
///   `(delta0^2 + D^2 C^2 phi_{1-2a}(t)) exp(-mu C t^{1-a} / 2) + 2 D^2 C^2 / (mu t^a)`
/// - `alpha = 1`:
///   `delta0^2 t^{-mu C} + 2 D^2 C^2 t^{-mu C} phi_{mu C - 1}(t)`
///
/// `mu` is the strong-convexity constant on the projection ball, `d_grad`
/// the maximal gradient norm over the ball, `delta0` the distance from
/// the initial point to the truth.
pub fn theory_bound(t: u64, alpha: f64, c: f64, mu: f64, d_grad: f64, delta0: f64) -> f64 {
    let tf = t as f64;
    let d2c2 = d_grad * d_grad * c * c;
    if alpha < 1.0 {
        (delta0 * delta0 + d2c2 * phi(1.0 - 2.0 * alpha, tf))
            * (-mu * c / 2.0 * tf.powf(1.0 - alpha)).exp()
            + 2.0 * d2c2 / (mu * tf.powf(alpha))
    } else {
        delta0 * delta0 * tf.powf(-mu * c) + 2.0 * d2c2 * tf.powf(-mu * c) * phi(mu * c - 1.0, tf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::{SamplerConfig, Strategy};
    use crate::survival::SurvivalRecord;
    use ndarray::array;
    use proptest::prelude::*;

    fn dummy_dataset() -> Dataset {
        Dataset::new(vec![
            SurvivalRecord::new(vec![1.0], 1.0, true).unwrap(),
            SurvivalRecord::new(vec![0.0], 2.0, false).unwrap(),
        ])
        .unwrap()
    }

    /// Deterministic 1-d quadratic surrogate `(x - target)^2 / 2`; batch
    /// inputs are ignored.
    struct Quadratic {
        x: f64,
        target: f64,
    }

    impl StochasticModel for Quadratic {
        fn param_count(&self) -> usize {
            1
        }
        fn params(&self) -> Array1<f64> {
            array![self.x]
        }
        fn set_params(&mut self, params: &ArrayView1<f64>) -> Result<()> {
            self.x = params[0];
            Ok(())
        }
        fn batch_loss(&self, _: &Dataset, _: &MiniBatch) -> Result<f64> {
            Ok((self.x - self.target).powi(2) / 2.0)
        }
        fn batch_gradient(&self, _: &Dataset, _: &MiniBatch) -> Result<Array1<f64>> {
            Ok(array![self.x - self.target])
        }
        fn eval_loss(&self, _: &Dataset) -> Result<f64> {
            Ok((self.x - self.target).powi(2) / 2.0)
        }
    }

    fn sb_source(data: &Dataset) -> BatchSource<'_> {
        BatchSource::offline(
            data,
            BatchSampler::new(
                SamplerConfig {
                    strategy: Strategy::Sb,
                    s: 2,
                    seed: 0,
                },
                data.len(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_rate_is_identity() {
        let data = dummy_dataset();
        let mut source = sb_source(&data);
        let mut model = Quadratic {
            x: 0.3,
            target: 2.0,
        };
        let config = SgdConfig {
            schedule: LrSchedule::Constant { gamma: 0.0 },
            projection_radius: None,
            run_length: RunLength::Iterations { count: 50 },
            averaging: false,
            cadence: RecordCadence::FinalOnly,
        };
        let traj = run_sgd(&mut source, &mut model, &config, None).unwrap();
        assert_eq!(traj.final_params, vec![0.3]);
    }

    #[test]
    fn quadratic_contraction_closed_form() {
        // gamma = 1/2 on (x-2)^2/2 from 0: x_t = 2 (1 - 0.5^t).
        let data = dummy_dataset();
        let mut source = sb_source(&data);
        let mut model = Quadratic {
            x: 0.0,
            target: 2.0,
        };
        let config = SgdConfig {
            schedule: LrSchedule::Constant { gamma: 0.5 },
            projection_radius: None,
            run_length: RunLength::Iterations { count: 3 },
            averaging: false,
            cadence: RecordCadence::EveryStep,
        };
        let traj = run_sgd(&mut source, &mut model, &config, None).unwrap();
        assert!((traj.final_params[0] - 1.75).abs() < 1e-12);
        let x2 = traj.point_at(2).unwrap().params[0];
        assert!((x2 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let inside = project_ball(&array![3.0, 4.0], 10.0);
        assert_eq!(inside, array![3.0, 4.0]);
        let scaled = project_ball(&array![3.0, 4.0], 1.0);
        assert!((scaled[0] - 0.6).abs() < 1e-15);
        assert!((scaled[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn projection_idempotent_on_random_points() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(81, 0);
        for _ in 0..100 {
            let v = array![
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0)
            ];
            let b = rng.gen_range(0.1..3.0);
            let once = project_ball(&v, b);
            let twice = project_ball(&once, b);
            assert!((&once - &twice).iter().all(|d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn weighted_average_of_constant_is_constant() {
        let mut avg = WeightedAverage::new(2);
        let c = array![1.5, -0.5];
        for _ in 0..100 {
            avg.push(&c);
        }
        assert!((avg.value()[0] - 1.5).abs() < 1e-12);
        assert!((avg.value()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted_average_linear_sequence() {
        // theta_i = i for i = 0,1,2: (1*0 + 2*1 + 3*2) / 6 = 8/6.
        let mut avg = WeightedAverage::new(1);
        for i in 0..3 {
            avg.push(&array![i as f64]);
        }
        assert!((avg.value()[0] - 8.0 / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weighted_average_matches_direct_sum(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::rng::stream_rng(seed, 9);
            let len = rng.gen_range(1..40usize);
            let seq: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut avg = WeightedAverage::new(1);
            for v in &seq {
                avg.push(&array![*v]);
            }
            let t = len as f64 - 1.0;
            let direct: f64 = seq
                .iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * v)
                .sum::<f64>()
                * 2.0
                / ((t + 1.0) * (t + 2.0));
            prop_assert!((avg.value()[0] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_keeps_iterates_in_ball() {
        let data = dummy_dataset();
        let mut source = sb_source(&data);
        // Aggressive rate would overshoot without projection.
        let mut model = Quadratic {
            x: 0.0,
            target: 50.0,
        };
        let config = SgdConfig {
            schedule: LrSchedule::Constant { gamma: 1.9 },
            projection_radius: Some(3.0),
            run_length: RunLength::Iterations { count: 40 },
            averaging: false,
            cadence: RecordCadence::EveryStep,
        };
        let traj = run_sgd(&mut source, &mut model, &config, None).unwrap();
        for p in &traj.points {
            let norm: f64 = p.params.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 3.0 + 1e-12);
        }
        assert!(traj.projection_hits > 0);
    }

    #[test]
    fn divergence_guard_aborts() {
        let data = dummy_dataset();
        let mut source = sb_source(&data);
        // gamma = 3 on the quadratic diverges geometrically.
        let mut model = Quadratic {
            x: 1.0,
            target: 0.0,
        };
        let config = SgdConfig {
            schedule: LrSchedule::Constant { gamma: 3.0 },
            projection_radius: None,
            run_length: RunLength::Iterations { count: 100 },
            averaging: false,
            cadence: RecordCadence::FinalOnly,
        };
        assert!(matches!(
            run_sgd(&mut source, &mut model, &config, None),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn schedule_rates() {
        let poly = LrSchedule::Polynomial { c: 2.0, alpha: 0.5 };
        assert!((poly.rate(0, 0) - 2.0).abs() < 1e-15);
        assert!((poly.rate(3, 0) - 1.0).abs() < 1e-15);
        let epoch = LrSchedule::EpochPolynomial { c: 4.0 };
        assert!((epoch.rate(999, 0) - 4.0).abs() < 1e-15);
        assert!((epoch.rate(0, 199) - 4.0 / 200.0).abs() < 1e-15);
        let avgp = LrSchedule::AveragingPoly { c: 1.0 };
        assert!((avgp.rate(9, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn log10_cadence_records_decade_multiples() {
        assert!(should_record(RecordCadence::Log10, 1, 1));
        assert!(should_record(RecordCadence::Log10, 7, 1));
        assert!(should_record(RecordCadence::Log10, 10, 1));
        assert!(!should_record(RecordCadence::Log10, 11, 1));
        assert!(should_record(RecordCadence::Log10, 20, 1));
        assert!(should_record(RecordCadence::Log10, 2000, 1));
        assert!(!should_record(RecordCadence::Log10, 2001, 1));
    }

    #[test]
    fn phi_values() {
        assert!((phi(0.0, 10.0) - 10.0_f64.ln()).abs() < 1e-12);
        assert!((phi(1.0, 5.0) - 4.0).abs() < 1e-12);
        assert!((phi(-0.5, 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theory_bound_alpha_one_arithmetic() {
        // mu C = 2, delta0 = 1, D = 1, C = 1, t = 100:
        // t^-2 + 2 t^-2 phi_1(100) = 1e-4 + 2e-4 * 99 = 0.0199.
        let b = theory_bound(100, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert!((b - 0.0199).abs() < 1e-12, "bound {b}");
    }

    #[test]
    fn linear_cox_sgd_is_deterministic() {
        use crate::cox_linear::LinearCoxModel;
        let spec = crate::simulate::SimSpec::linear_unit_box(3);
        let mut rng = crate::rng::stream_rng(83, 0);
        let data = spec.draw_dataset(64, &mut rng).unwrap();
        let run = || -> Vec<f64> {
            let sampler = BatchSampler::new(
                SamplerConfig {
                    strategy: Strategy::Sb,
                    s: 8,
                    seed: 42,
                },
                data.len(),
            )
            .unwrap();
            let mut source = BatchSource::offline(&data, sampler);
            let mut model = LinearCoxModel::zeros(3);
            let config = SgdConfig {
                schedule: LrSchedule::EpochPolynomial { c: 1.0 },
                projection_radius: Some(10.0),
                run_length: RunLength::Epochs { count: 5 },
                averaging: true,
                cadence: RecordCadence::EveryEpoch,
            };
            run_sgd(&mut source, &mut model, &config, Some(&data))
                .unwrap()
                .final_params
        };
        assert_eq!(run(), run());
    }
}

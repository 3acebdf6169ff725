//! Monte-Carlo estimation of the batch-size-dependent quantities behind
//! the SGD estimators' sandwich variances, plus the stratified-Cox
//! Newton oracle.
//!
//! At the truth `theta_0` the expected batch Hessian `H_s`, the
//! batch-gradient covariance `Sigma_s`, and the shared-record
//! cross-covariance `Sigma_(s|1)` satisfy `H_s = s Sigma_s` and
//! `H_{2s} - H_s` is positive semidefinite; the fixed-batch and
//! stochastic-batch estimators carry asymptotic variances
//! `s H^-1 Sigma_s H^-T` and `s^2 H^-1 Sigma_(s|1) H^-T`. All of these
//! are estimated here from fresh simulated batches with block-based
//! Monte-Carlo standard errors.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batching::{BatchSampler, MiniBatch, SamplerConfig, Strategy};
use crate::cox_linear::{batch_gradient, batch_loss_gradient_hessian, LinearCoxModel};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvector, quadratic_form, sym_inverse, trace};
use crate::rng::{derive_seed, replication_rng, stream_rng};
use crate::sgd::{run_sgd, BatchSource, RecordCadence, RunLength, SgdConfig};
use crate::simulate::SimSpec;
use crate::survival::Dataset;

/// Number of blocks used for batch-means standard errors.
pub const SE_BLOCKS: usize = 20;

/// Replication count below which identity gates report "inconclusive"
/// rather than pass/fail.
pub const MIN_CONCLUSIVE_REPS: usize = 1000;

pub(crate) fn se_from_blocks(blocks: &[f64]) -> f64 {
    let b = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / b;
    let var = blocks.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

fn matrix_se_from_blocks(blocks: &[Array2<f64>]) -> Array2<f64> {
    let p = blocks[0].nrows();
    let b = blocks.len() as f64;
    let mut mean = Array2::<f64>::zeros((p, p));
    for m in blocks {
        mean += m;
    }
    mean /= b;
    let mut var = Array2::<f64>::zeros((p, p));
    for m in blocks {
        let d = m - &mean;
        var += &(&d * &d);
    }
    var /= b - 1.0;
    var.mapv(|v| (v / b).sqrt())
}

/// Monte-Carlo estimates of `H_s`, `Sigma_s`, `Sigma_(s|1)` at one
/// evaluation point, with per-entry block standard errors and the two
/// derived sandwich variances.
#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    pub s: usize,
    pub replications: usize,
    pub h: Array2<f64>,
    pub h_se: Array2<f64>,
    pub sigma_s: Array2<f64>,
    pub sigma_s_se: Array2<f64>,
    pub sigma_s1: Option<Array2<f64>>,
    pub sigma_s1_se: Option<Array2<f64>>,
    /// Per-block means, kept for derived-statistic standard errors.
    pub h_blocks: Vec<Array2<f64>>,
    pub sigma_s_blocks: Vec<Array2<f64>>,
    pub sigma_s1_blocks: Option<Vec<Array2<f64>>>,
}

impl SandwichEstimate {
    /// Fixed-batch sandwich `s H^-1 Sigma_s H^-T`.
    pub fn var_fb(&self) -> Result<Array2<f64>> {
        let hinv = sym_inverse(&self.h)?;
        Ok(hinv.dot(&self.sigma_s).dot(&hinv.t()) * self.s as f64)
    }

    /// Stochastic-batch sandwich `s^2 H^-1 Sigma_(s|1) H^-T`.
    pub fn var_sb(&self) -> Result<Array2<f64>> {
        let sigma_s1 = self.sigma_s1.as_ref().ok_or_else(|| {
            Error::InvalidConfig("Sigma_(s|1) was not estimated for this run".into())
        })?;
        let hinv = sym_inverse(&self.h)?;
        Ok(hinv.dot(sigma_s1).dot(&hinv.t()) * (self.s * self.s) as f64)
    }

    /// Entrywise `|H - s Sigma_s|` compared against three combined
    /// standard errors; returns the largest ratio (pass when <= 1).
    pub fn identity_max_ratio(&self) -> f64 {
        let p = self.h.nrows();
        let sf = self.s as f64;
        let mut worst: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                let diff = (self.h[[i, j]] - sf * self.sigma_s[[i, j]]).abs();
                let se = (self.h_se[[i, j]].powi(2) + (sf * self.sigma_s_se[[i, j]]).powi(2))
                    .sqrt()
                    .max(1e-300);
                worst = worst.max(diff / (3.0 * se));
            }
        }
        worst
    }

    /// Smallest eigenvalue of `s Sigma_s - s^2 Sigma_(s|1)` together with
    /// its block standard error (projected onto the minimizing
    /// eigenvector). Positive values confirm the U-statistic ordering.
    pub fn ordering_gap(&self) -> Result<(f64, f64)> {
        let sigma_s1 = self.sigma_s1.as_ref().ok_or_else(|| {
            Error::InvalidConfig("Sigma_(s|1) was not estimated for this run".into())
        })?;
        let s1_blocks = self.sigma_s1_blocks.as_ref().unwrap();
        let sf = self.s as f64;
        let diff = &self.sigma_s * sf - sigma_s1 * (sf * sf);
        let v = min_eigenvector(&diff);
        let per_block: Vec<f64> = self
            .sigma_s_blocks
            .iter()
            .zip(s1_blocks)
            .map(|(a, b)| quadratic_form(&(a * sf - b * (sf * sf)), &v))
            .collect();
        Ok((
            crate::linalg::min_eigenvalue(&diff),
            se_from_blocks(&per_block),
        ))
    }
}

fn sample_covariance(grads: &[&Array1<f64>]) -> Array2<f64> {
    let n = grads.len();
    let p = grads[0].len();
    let mut mean = Array1::<f64>::zeros(p);
    for g in grads {
        mean += *g;
    }
    mean /= n as f64;
    let mut cov = Array2::<f64>::zeros((p, p));
    for g in grads {
        let d = *g - &mean;
        for i in 0..p {
            for j in 0..p {
                cov[[i, j]] += d[i] * d[j];
            }
        }
    }
    cov / (n as f64 - 1.0)
}

fn cross_covariance(pairs: &[(Array1<f64>, Array1<f64>)]) -> Array2<f64> {
    let n = pairs.len();
    let p = pairs[0].0.len();
    let mut mean_a = Array1::<f64>::zeros(p);
    let mut mean_b = Array1::<f64>::zeros(p);
    for (a, b) in pairs {
        mean_a += a;
        mean_b += b;
    }
    mean_a /= n as f64;
    mean_b /= n as f64;
    let mut cov = Array2::<f64>::zeros((p, p));
    for (a, b) in pairs {
        let da = a - &mean_a;
        let db = b - &mean_b;
        for i in 0..p {
            for j in 0..p {
                cov[[i, j]] += da[i] * db[j];
            }
        }
    }
    cov /= n as f64 - 1.0;
    // Exchangeability of the pair makes the population cross-covariance
    // symmetric; symmetrize the estimate.
    let cov_t = cov.t().to_owned();
    (&cov + &cov_t) * 0.5
}

type HessianGradBlock = (Array2<f64>, Vec<Array1<f64>>);

struct BlockMoments {
    h_mean: Array2<f64>,
    grads: Vec<Array1<f64>>,
    pairs: Vec<(Array1<f64>, Array1<f64>)>,
}

/// Estimate `H_s`, `Sigma_s`, and `Sigma_(s|1)` at `theta` from `reps`
/// fresh population batches (plus `reps` paired batches sharing their
/// first record for the cross term).
///
/// Blocks run in parallel with independent RNG streams; results are
/// deterministic given the seed.
pub fn estimate_hs_sigmas(
    spec: &SimSpec,
    theta: &Array1<f64>,
    s: usize,
    reps: usize,
    seed: u64,
) -> Result<SandwichEstimate> {
    spec.validate()?;
    if s < 2 {
        return Err(Error::InvalidConfig(format!(
            "batch size must be at least 2, got {s}"
        )));
    }
    if reps < SE_BLOCKS {
        return Err(Error::InvalidConfig(format!(
            "need at least {SE_BLOCKS} replications for block standard errors, got {reps}"
        )));
    }
    let p = spec.dim;
    let model = LinearCoxModel::new(theta.clone())?;
    let per_block = reps / SE_BLOCKS;
    let reps = per_block * SE_BLOCKS;

    let blocks: Vec<Result<BlockMoments>> = (0..SE_BLOCKS)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(derive_seed(seed, block as u64), 0);
            let mut h_mean = Array2::<f64>::zeros((p, p));
            let mut grads = Vec::with_capacity(per_block);
            let mut pairs = Vec::with_capacity(per_block);
            let all = MiniBatch::new((0..s).collect());
            for _ in 0..per_block {
                // One fresh batch feeds both H and Sigma_s; the pair for
                // Sigma_(s|1) shares exactly its first record.
                let batch_data = spec.draw_dataset(s, &mut rng)?;
                let (_, grad, hess) = batch_loss_gradient_hessian(&batch_data, &all, &model)?;
                h_mean += &hess;

                let mut partner_records = vec![batch_data.record(0).clone()];
                partner_records.extend((0..s - 1).map(|_| spec.draw_record(&mut rng)));
                let partner = Dataset::new(partner_records)?;
                let partner_grad = batch_gradient(&partner, &all, &model)?;

                pairs.push((grad.clone(), partner_grad));
                grads.push(grad);
            }
            h_mean /= per_block as f64;
            Ok(BlockMoments {
                h_mean,
                grads,
                pairs,
            })
        })
        .collect();

    let mut h_blocks = Vec::with_capacity(SE_BLOCKS);
    let mut grad_blocks: Vec<Vec<Array1<f64>>> = Vec::with_capacity(SE_BLOCKS);
    let mut pair_blocks: Vec<Vec<(Array1<f64>, Array1<f64>)>> = Vec::with_capacity(SE_BLOCKS);
    for block in blocks {
        let block = block?;
        h_blocks.push(block.h_mean);
        grad_blocks.push(block.grads);
        pair_blocks.push(block.pairs);
    }

    let mut h = Array2::<f64>::zeros((p, p));
    for hb in &h_blocks {
        h += hb;
    }
    h /= SE_BLOCKS as f64;
    let h_se = matrix_se_from_blocks(&h_blocks);

    let sigma_s_blocks: Vec<Array2<f64>> = grad_blocks
        .iter()
        .map(|g| sample_covariance(&g.iter().collect::<Vec<_>>()))
        .collect();
    let all_grads: Vec<&Array1<f64>> = grad_blocks.iter().flatten().collect();
    let sigma_s = sample_covariance(&all_grads);
    let sigma_s_se = matrix_se_from_blocks(&sigma_s_blocks);

    let sigma_s1_blocks: Vec<Array2<f64>> =
        pair_blocks.iter().map(|ps| cross_covariance(ps)).collect();
    let all_pairs: Vec<(Array1<f64>, Array1<f64>)> = pair_blocks.into_iter().flatten().collect();
    let sigma_s1 = cross_covariance(&all_pairs);
    let sigma_s1_se = matrix_se_from_blocks(&sigma_s1_blocks);

    Ok(SandwichEstimate {
        s,
        replications: reps,
        h,
        h_se,
        sigma_s,
        sigma_s_se,
        sigma_s1: Some(sigma_s1),
        sigma_s1_se: Some(sigma_s1_se),
        h_blocks,
        sigma_s_blocks,
        sigma_s1_blocks: Some(sigma_s1_blocks),
    })
}

/// Conditional variant: batches are SB subsets of a fixed dataset rather
/// than fresh population draws. `Sigma_(s|1)` is not defined here.
///
/// With `s == n` every draw is the whole dataset and `H` equals the
/// full-sample Hessian exactly.
pub fn estimate_hs_sigmas_conditional(
    data: &Dataset,
    theta: &Array1<f64>,
    s: usize,
    reps: usize,
    seed: u64,
) -> Result<SandwichEstimate> {
    if reps < SE_BLOCKS {
        return Err(Error::InvalidConfig(format!(
            "need at least {SE_BLOCKS} replications for block standard errors, got {reps}"
        )));
    }
    let p = data.dim();
    let model = LinearCoxModel::new(theta.clone())?;
    let per_block = reps / SE_BLOCKS;

    let blocks: Vec<Result<HessianGradBlock>> = (0..SE_BLOCKS)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(derive_seed(seed, block as u64), 0);
            let mut h_mean = Array2::<f64>::zeros((p, p));
            let mut grads = Vec::with_capacity(per_block);
            for _ in 0..per_block {
                let batch = MiniBatch::new(crate::batching::sample_subset(data.len(), s, &mut rng));
                let (_, grad, hess) = batch_loss_gradient_hessian(data, &batch, &model)?;
                h_mean += &hess;
                grads.push(grad);
            }
            h_mean /= per_block as f64;
            Ok((h_mean, grads))
        })
        .collect();

    let mut h_blocks = Vec::with_capacity(SE_BLOCKS);
    let mut grad_blocks = Vec::with_capacity(SE_BLOCKS);
    for block in blocks {
        let (h_mean, grads) = block?;
        h_blocks.push(h_mean);
        grad_blocks.push(grads);
    }
    let mut h = Array2::<f64>::zeros((p, p));
    for hb in &h_blocks {
        h += hb;
    }
    h /= SE_BLOCKS as f64;
    let h_se = matrix_se_from_blocks(&h_blocks);
    let sigma_s_blocks: Vec<Array2<f64>> = grad_blocks
        .iter()
        .map(|g: &Vec<Array1<f64>>| sample_covariance(&g.iter().collect::<Vec<_>>()))
        .collect();
    let all_grads: Vec<&Array1<f64>> = grad_blocks.iter().flatten().collect();
    let sigma_s = sample_covariance(&all_grads);
    let sigma_s_se = matrix_se_from_blocks(&sigma_s_blocks);

    Ok(SandwichEstimate {
        s,
        replications: per_block * SE_BLOCKS,
        h,
        h_se,
        sigma_s,
        sigma_s_se,
        sigma_s1: None,
        sigma_s1_se: None,
        h_blocks,
        sigma_s_blocks,
        sigma_s1_blocks: None,
    })
}

/// One consecutive `(s, 2s)` comparison in a [`MonotoneReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonePair {
    pub s: usize,
    pub s_double: usize,
    /// Smallest eigenvalue of `H_{2s} - H_s`.
    pub min_eigenvalue: f64,
    /// Block standard error of that eigenvalue (projected form).
    pub standard_error: f64,
    /// Trace increment `Tr(H_{2s}) - Tr(H_s)`.
    pub trace_increment: f64,
    pub pass: bool,
}

/// Numerical check of the Hessian monotonicity in batch size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub s_values: Vec<usize>,
    pub traces: Vec<f64>,
    pub trace_ses: Vec<f64>,
    pub pairs: Vec<MonotonePair>,
}

/// Estimate `H_s` along a ladder of batch sizes and compare consecutive
/// doubled pairs: the minimum eigenvalue of `H_{2s} - H_s` must be
/// non-negative within three standard errors.
pub fn verify_convexity_monotone(
    spec: &SimSpec,
    theta: &Array1<f64>,
    s_values: &[usize],
    reps: usize,
    seed: u64,
) -> Result<MonotoneReport> {
    let estimates: Vec<SandwichEstimate> = s_values
        .iter()
        .enumerate()
        .map(|(k, &s)| estimate_hs_sigmas(spec, theta, s, reps, derive_seed(seed, 1000 + k as u64)))
        .collect::<Result<Vec<_>>>()?;

    let traces: Vec<f64> = estimates.iter().map(|e| trace(&e.h)).collect();
    let trace_ses: Vec<f64> = estimates
        .iter()
        .map(|e| {
            let per_block: Vec<f64> = e.h_blocks.iter().map(trace).collect();
            se_from_blocks(&per_block)
        })
        .collect();

    let mut pairs = Vec::new();
    for w in estimates.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        if hi.s != 2 * lo.s {
            continue;
        }
        let diff = &hi.h - &lo.h;
        let v = min_eigenvector(&diff);
        let per_block: Vec<f64> = lo
            .h_blocks
            .iter()
            .zip(&hi.h_blocks)
            .map(|(a, b)| quadratic_form(&(b - a), &v))
            .collect();
        let se = se_from_blocks(&per_block);
        let min_eig = crate::linalg::min_eigenvalue(&diff);
        pairs.push(MonotonePair {
            s: lo.s,
            s_double: hi.s,
            min_eigenvalue: min_eig,
            standard_error: se,
            trace_increment: trace(&hi.h) - trace(&lo.h),
            pass: min_eig >= -3.0 * se,
        });
    }

    Ok(MonotoneReport {
        s_values: s_values.to_vec(),
        traces,
        trace_ses,
        pairs,
    })
}

/// Newton solver for the fixed-batch objective
/// `(1/m) sum_k batch_loss(stratum_k)`.
///
/// Strata without events contribute identically zero terms; at least one
/// stratum must contain an event. Converges when the gradient norm drops
/// below 1e-10; singular Hessians and non-convergence within 100
/// iterations are errors.
pub fn strata_newton(data: &Dataset, partition: &[MiniBatch]) -> Result<Array1<f64>> {
    if partition.is_empty() {
        return Err(Error::InvalidConfig("empty partition".into()));
    }
    if partition
        .iter()
        .all(|b| b.indices.iter().all(|&i| !data.record(i).event))
    {
        return Err(Error::InvalidConfig(
            "no stratum contains an event; the objective is constant".into(),
        ));
    }
    let p = data.dim();
    let m = partition.len() as f64;
    let mut model = LinearCoxModel::zeros(p);

    let objective = |model: &LinearCoxModel| -> Result<(f64, Array1<f64>, Array2<f64>)> {
        let mut loss = 0.0;
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        for stratum in partition {
            let (l, g, h) = batch_loss_gradient_hessian(data, stratum, model)?;
            loss += l;
            grad += &g;
            hess += &h;
        }
        Ok((loss / m, grad / m, hess / m))
    };

    let tolerance = 1e-10;
    let max_iterations = 100;
    let (mut loss, mut grad, mut hess) = objective(&model)?;
    for _ in 0..max_iterations {
        let grad_norm = grad.dot(&grad).sqrt();
        if grad_norm < tolerance {
            return Ok(model.theta);
        }
        let direction = crate::linalg::sym_solve(&hess, &grad).map_err(|e| match e {
            Error::SingularMatrix { value, floor, .. } => Error::SingularMatrix {
                value,
                floor,
                hint: "stratified Hessian is singular; use larger strata",
            },
            other => other,
        })?;
        // Backtracking keeps Newton robust far from the optimum.
        let mut step = 1.0;
        loop {
            let candidate = LinearCoxModel::new(&model.theta - &(&direction * step))?;
            match objective(&candidate) {
                Ok((l, g, h)) if l.is_finite() && l <= loss + 1e-12 => {
                    model = candidate;
                    loss = l;
                    grad = g;
                    hess = h;
                    break;
                }
                _ => {
                    step *= 0.5;
                    if step < 1e-8 {
                        return Err(Error::NewtonNonConvergence {
                            iterations: max_iterations,
                            grad_norm,
                        });
                    }
                }
            }
        }
    }
    let grad_norm = grad.dot(&grad).sqrt();
    if grad_norm < tolerance {
        Ok(model.theta)
    } else {
        Err(Error::NewtonNonConvergence {
            iterations: max_iterations,
            grad_norm,
        })
    }
}

/// Full-sample Cox maximum likelihood: Newton on the whole dataset as a
/// single stratum.
pub fn full_mle(data: &Dataset) -> Result<Array1<f64>> {
    strata_newton(data, &[MiniBatch::new((0..data.len()).collect())])
}

/// Configuration of the batch-efficiency replication study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyConfig {
    pub n: usize,
    pub dim: usize,
    pub s_values: Vec<usize>,
    pub runs: usize,
    pub epochs: u64,
    /// Per-epoch learning-rate constant: `gamma = lr_c / (epoch + 1)`.
    pub lr_c: f64,
    pub projection_radius: f64,
    /// Target censoring fraction, calibrated once per config. The
    /// reference protocol observes every event: its censoring law is
    /// inherited from the nonlinear setup, whose calibrated rate is
    /// negligible against the linear model's hazards.
    pub censoring_target: Option<f64>,
    pub seed: u64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl EfficiencyConfig {
    /// The reference replication protocol: n = 2048, p = 10, s = 2^k for
    /// k = 2..9, 200 runs, 200 epochs, per-epoch rate 4/(epoch+1),
    /// projection ball 1e6, 30% censoring.
    pub fn reference() -> Self {
        Self {
            n: 2048,
            dim: 10,
            s_values: vec![4, 8, 16, 32, 64, 128, 256, 512],
            runs: 200,
            epochs: 200,
            lr_c: 4.0,
            projection_radius: 1e6,
            censoring_target: None,
            seed: 20_240_001,
        }
    }
}

/// One SGD fit inside the efficiency study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyRun {
    pub run: usize,
    pub strategy: Strategy,
    pub s: usize,
    /// `log ||theta_hat - theta_0||^2`.
    pub log_err_truth: f64,
    /// `log ||theta_hat - theta_strata||^2` (FB only).
    pub log_err_strata: Option<f64>,
}

/// Distribution summary for one `(strategy, s)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyCell {
    pub strategy: Strategy,
    pub s: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyTable {
    pub config: EfficiencyConfig,
    pub censor_rate: f64,
    pub runs: Vec<EfficiencyRun>,
    pub cells: Vec<EfficiencyCell>,
}

impl EfficiencyTable {
    pub fn cell(&self, strategy: Strategy, s: usize) -> Option<&EfficiencyCell> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.s == s)
    }

    /// Largest `log ||theta_FB - theta_strata||^2` over all FB runs.
    pub fn max_log_err_strata(&self) -> f64 {
        self.runs
            .iter()
            .filter_map(|r| r.log_err_strata)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn log_sq_norm(diff: &Array1<f64>) -> f64 {
    diff.dot(diff).ln()
}

/// Run the SB/FB replication study: for each run a fresh dataset is
/// simulated, SGD is fitted per `(strategy, s)` cell, and the FB fits
/// are compared against the stratified Newton oracle on the same
/// partition.
///
/// Runs execute in parallel with per-run seeds; output ordering is fixed.
pub fn replication_efficiency_table(config: &EfficiencyConfig) -> Result<EfficiencyTable> {
    let spec = SimSpec::linear_unit_box(config.dim);
    let (spec, censor_rate) = match config.censoring_target {
        Some(target) => {
            let mut cal_rng = replication_rng(config.seed, u64::MAX - 1);
            let calibration =
                crate::simulate::calibrate_censoring(&spec, target, 100_000, &mut cal_rng)?;
            (
                spec.with_censoring(crate::simulate::CensorLaw::Exponential {
                    rate: calibration.rate,
                }),
                calibration.rate,
            )
        }
        None => (spec, 0.0),
    };
    let theta0 = Array1::from_vec(spec.theta0().expect("linear spec").to_vec());

    let run_one = |run: usize| -> Result<Vec<EfficiencyRun>> {
        let run_seed = derive_seed(config.seed, run as u64);
        let mut data_rng = stream_rng(run_seed, 0);
        let data = spec.draw_dataset(config.n, &mut data_rng)?;
        let mut out = Vec::with_capacity(config.s_values.len() * 2);

        for (cell_idx, &s) in config.s_values.iter().enumerate() {
            for strategy in [Strategy::Sb, Strategy::Fb] {
                let sampler_seed = derive_seed(
                    run_seed,
                    100 + 2 * cell_idx as u64 + u64::from(strategy == Strategy::Fb),
                );
                // Epochs cycle through all the data for both strategies:
                // FB reshuffles its fixed cells, SB draws a fresh
                // partition each epoch.
                let sampler = BatchSampler::new(
                    SamplerConfig {
                        strategy,
                        s,
                        seed: sampler_seed,
                    },
                    data.len(),
                )?
                .with_epoch_cycling();
                let partition = sampler.partition().map(<[MiniBatch]>::to_vec);
                let mut source = BatchSource::offline(&data, sampler);
                let mut model = LinearCoxModel::zeros(config.dim);
                let sgd_config = SgdConfig {
                    schedule: crate::sgd::LrSchedule::EpochPolynomial { c: config.lr_c },
                    projection_radius: Some(config.projection_radius),
                    run_length: RunLength::Epochs {
                        count: config.epochs,
                    },
                    averaging: false,
                    cadence: RecordCadence::FinalOnly,
                };
                let trajectory = run_sgd(&mut source, &mut model, &sgd_config, None)?;
                let theta_hat = Array1::from_vec(trajectory.final_params);

                let log_err_strata = match partition {
                    Some(cells) => {
                        let oracle = strata_newton(&data, &cells)?;
                        Some(log_sq_norm(&(&theta_hat - &oracle)))
                    }
                    None => None,
                };
                out.push(EfficiencyRun {
                    run,
                    strategy,
                    s,
                    log_err_truth: log_sq_norm(&(&theta_hat - &theta0)),
                    log_err_strata,
                });
            }
        }
        Ok(out)
    };

    let nested: Vec<Result<Vec<EfficiencyRun>>> =
        (0..config.runs).into_par_iter().map(run_one).collect();
    let mut runs = Vec::with_capacity(config.runs * config.s_values.len() * 2);
    for r in nested {
        runs.extend(r?);
    }

    let mut cells = Vec::new();
    for &s in &config.s_values {
        for strategy in [Strategy::Sb, Strategy::Fb] {
            let mut values: Vec<f64> = runs
                .iter()
                .filter(|r| r.strategy == strategy && r.s == s)
                .map(|r| r.log_err_truth)
                .collect();
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            cells.push(EfficiencyCell {
                strategy,
                s,
                mean,
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
            });
        }
    }

    Ok(EfficiencyTable {
        config: config.clone(),
        censor_rate,
        runs,
        cells,
    })
}

/// Exchangeability check helper: estimate `Sigma_(s|1)` with the shared
/// record placed at a random position in the partner batch instead of
/// position 0.
pub fn estimate_sigma_s1_shuffled(
    spec: &SimSpec,
    theta: &Array1<f64>,
    s: usize,
    reps: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    spec.validate()?;
    let model = LinearCoxModel::new(theta.clone())?;
    let mut rng: ChaCha8Rng = stream_rng(seed, 0);
    let all = MiniBatch::new((0..s).collect());
    let mut pairs = Vec::with_capacity(reps);
    use rand::Rng;
    for _ in 0..reps {
        let first = spec.draw_dataset(s, &mut rng)?;
        let g1 = batch_gradient(&first, &all, &model)?;
        let mut records: Vec<crate::survival::SurvivalRecord> =
            (0..s - 1).map(|_| spec.draw_record(&mut rng)).collect();
        let position = rng.gen_range(0..s);
        records.insert(position, first.record(0).clone());
        let partner = Dataset::new(records)?;
        let g2 = batch_gradient(&partner, &all, &model)?;
        pairs.push((g1, g2));
    }
    Ok(cross_covariance(&pairs))
}

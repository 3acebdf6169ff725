//! Toy-scale sparse ReLU feed-forward relative-risk network.
//!
//! The architecture is the plain recursion `f(x) = W_K f_K(x) + v_K`,
//! `f_k = relu(W_{k-1} f_{k-1} + v_{k-1})`, with scalar output.
//! Gradients of the within-batch Cox loss are hand-written
//! backpropagation: the loss couples records only through risk-set sums,
//! so each record receives the output gradient
//! `dL/df_j = -(1/s) [event_j - exp(f_j) * sum_{events i: T_i <= T_j} 1/S0_i]`
//! and is then backpropagated independently.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::batching::MiniBatch;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::survival::{sweep_risk_sets, Dataset, RelativeRisk, SweepStep, RISK_BOUND};

/// Construction parameters for [`MlpCoxModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Layer widths `p_0, ..., p_K, 1` (input first, scalar output last).
    pub widths: Vec<usize>,
    /// Target number of nonzero weight entries across all layers; `None`
    /// keeps the network dense.
    pub sparsity: Option<usize>,
    /// Clip every weight and bias entry to [-1, 1] after each parameter
    /// update (the constrained-family training mode).
    pub sup_norm_clip: bool,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>, seed: u64) -> Self {
        Self {
            widths,
            sparsity: None,
            sup_norm_clip: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "widths must list at least input and output".into(),
            ));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(
                "output width must be 1 for a relative-risk network".into(),
            ));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MlpCoxModel {
    widths: Vec<usize>,
    /// `weights[k]` has shape `(widths[k+1], widths[k])`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    /// `true` marks a weight entry that is structurally zero.
    masks: Option<Vec<Array2<bool>>>,
    sup_norm_clip: bool,
}

impl MlpCoxModel {
    /// Fan-in uniform initialization, then the sparsity mask (when
    /// requested) zeroes all but `sparsity` uniformly chosen weight
    /// entries.
    pub fn new(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, 0);
        let layers = config.widths.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for k in 0..layers {
            let (rows, cols) = (config.widths[k + 1], config.widths[k]);
            let scale = 1.0 / (cols as f64).sqrt();
            weights.push(Array2::from_shape_fn((rows, cols), |_| {
                rng.gen_range(-scale..scale)
            }));
            biases.push(Array1::from_shape_fn(rows, |_| {
                rng.gen_range(-scale..scale)
            }));
        }

        let masks = match config.sparsity {
            None => None,
            Some(target) => {
                let total: usize = weights.iter().map(|w| w.len()).sum();
                if target >= total {
                    None
                } else {
                    // Keep a uniform `target`-subset of weight positions.
                    let keep = crate::batching::sample_subset(total, target, &mut rng);
                    let keep: std::collections::HashSet<usize> = keep.into_iter().collect();
                    let mut masks = Vec::with_capacity(layers);
                    let mut offset = 0;
                    for w in &weights {
                        let (rows, cols) = (w.nrows(), w.ncols());
                        masks.push(Array2::from_shape_fn((rows, cols), |(i, j)| {
                            !keep.contains(&(offset + i * cols + j))
                        }));
                        offset += rows * cols;
                    }
                    Some(masks)
                }
            }
        };

        let mut model = Self {
            widths: config.widths.clone(),
            weights,
            biases,
            masks,
            sup_norm_clip: config.sup_norm_clip,
        };
        model.apply_mask();
        Ok(model)
    }

    /// A network with every weight and bias set to zero.
    pub fn zeros(widths: Vec<usize>) -> Result<Self> {
        let mut model = Self::new(&MlpConfig::new(widths, 0))?;
        for w in &mut model.weights {
            w.fill(0.0);
        }
        for v in &mut model.biases {
            v.fill(0.0);
        }
        Ok(model)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn masks(&self) -> Option<&[Array2<bool>]> {
        self.masks.as_deref()
    }

    /// Number of nonzero-allowed weight entries.
    pub fn active_weights(&self) -> usize {
        match &self.masks {
            None => self.weights.iter().map(|w| w.len()).sum(),
            Some(masks) => masks
                .iter()
                .map(|m| m.iter().filter(|&&x| !x).count())
                .sum(),
        }
    }

    fn apply_mask(&mut self) {
        if let Some(masks) = &self.masks {
            for (w, m) in self.weights.iter_mut().zip(masks) {
                for (value, &masked) in w.iter_mut().zip(m.iter()) {
                    if masked {
                        *value = 0.0;
                    }
                }
            }
        }
        if self.sup_norm_clip {
            for w in &mut self.weights {
                w.mapv_inplace(|v| v.clamp(-1.0, 1.0));
            }
            for v in &mut self.biases {
                v.mapv_inplace(|x| x.clamp(-1.0, 1.0));
            }
        }
    }

    /// Shift the output bias, shifting every `f(x)` by the same constant.
    pub fn shift_output(&mut self, c: f64) {
        let last = self.layers() - 1;
        self.biases[last][0] += c;
    }

    /// Forward pass keeping pre-activations for backprop. Row dot
    /// products accumulate in column order so the result is reproducible
    /// independent of any BLAS kernel.
    fn forward_trace(&self, x: &[f64]) -> (f64, Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let mut activations: Vec<Array1<f64>> = Vec::with_capacity(self.layers());
        let mut preacts: Vec<Array1<f64>> = Vec::with_capacity(self.layers());
        let mut a = Array1::from_iter(x.iter().copied());
        for k in 0..self.layers() {
            let w = &self.weights[k];
            let mut z = self.biases[k].clone();
            for row in 0..w.nrows() {
                let mut acc = z[row];
                for col in 0..w.ncols() {
                    acc += w[[row, col]] * a[col];
                }
                z[row] = acc;
            }
            activations.push(a);
            a = if k + 1 < self.layers() {
                z.mapv(|v| v.max(0.0))
            } else {
                z.clone()
            };
            preacts.push(z);
        }
        (a[0], activations, preacts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.forward_trace(x).0)
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.param_count_internal());
        for k in 0..self.layers() {
            out.extend(self.weights[k].iter().copied());
            out.extend(self.biases[k].iter().copied());
        }
        Array1::from_vec(out)
    }

    fn param_count_internal(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, v)| w.len() + v.len())
            .sum()
    }

    pub fn set_params_flat(&mut self, params: &ArrayView1<f64>) -> Result<()> {
        if params.len() != self.param_count_internal() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count_internal(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "network parameters",
            });
        }
        let mut offset = 0;
        for k in 0..self.layers() {
            let len = self.weights[k].len();
            let cols = self.weights[k].ncols();
            for (idx, value) in params
                .slice(ndarray::s![offset..offset + len])
                .iter()
                .enumerate()
            {
                self.weights[k][[idx / cols, idx % cols]] = *value;
            }
            offset += len;
            let blen = self.biases[k].len();
            for (idx, value) in params
                .slice(ndarray::s![offset..offset + blen])
                .iter()
                .enumerate()
            {
                self.biases[k][idx] = *value;
            }
            offset += blen;
        }
        self.apply_mask();
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&MlpCheckpoint::from(self))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: MlpCheckpoint = serde_json::from_str(&text)?;
        checkpoint.into_model()
    }
}

impl RelativeRisk for MlpCoxModel {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn log_risk(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).0
    }
}

/// Versioned checkpoint: shapes, row-major weights, mask bitmaps.
#[derive(Debug, Serialize, Deserialize)]
struct MlpCheckpoint {
    version: u32,
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    masks: Option<Vec<Vec<u8>>>,
    sup_norm_clip: bool,
}

impl From<&MlpCoxModel> for MlpCheckpoint {
    fn from(model: &MlpCoxModel) -> Self {
        Self {
            version: 1,
            widths: model.widths.clone(),
            weights: model
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: model.biases.iter().map(|v| v.to_vec()).collect(),
            masks: model.masks.as_ref().map(|masks| {
                masks
                    .iter()
                    .map(|m| m.iter().map(|&b| u8::from(b)).collect())
                    .collect()
            }),
            sup_norm_clip: model.sup_norm_clip,
        }
    }
}

impl MlpCheckpoint {
    fn into_model(self) -> Result<MlpCoxModel> {
        if self.version != 1 {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let config = MlpConfig::new(self.widths.clone(), 0);
        config.validate()?;
        let layers = self.widths.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::InvalidConfig(
                "checkpoint layer count mismatch".into(),
            ));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for k in 0..layers {
            let (rows, cols) = (self.widths[k + 1], self.widths[k]);
            let w = Array2::from_shape_vec((rows, cols), self.weights[k].clone())
                .map_err(|e| Error::InvalidConfig(format!("bad weight shape: {e}")))?;
            weights.push(w);
            if self.biases[k].len() != rows {
                return Err(Error::InvalidConfig("bad bias shape".into()));
            }
            biases.push(Array1::from_vec(self.biases[k].clone()));
        }
        let masks = match self.masks {
            None => None,
            Some(bitmaps) => {
                let mut masks = Vec::with_capacity(layers);
                for (k, bits) in bitmaps.into_iter().enumerate() {
                    let (rows, cols) = (self.widths[k + 1], self.widths[k]);
                    let m = Array2::from_shape_vec((rows, cols), bits)
                        .map_err(|e| Error::InvalidConfig(format!("bad mask shape: {e}")))?;
                    masks.push(m.mapv(|b| b != 0));
                }
                Some(masks)
            }
        };
        let mut model = MlpCoxModel {
            widths: self.widths,
            weights,
            biases,
            masks,
            sup_norm_clip: self.sup_norm_clip,
        };
        model.apply_mask();
        Ok(model)
    }
}

/// Per-record output gradients of the within-batch Cox loss.
///
/// Returns `(loss, dL/df per batch position, n_events)`.
fn batch_output_gradients(
    times: &[f64],
    events: &[bool],
    f_values: &[f64],
) -> (f64, Vec<f64>, usize) {
    let s = times.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));

    // Descending sweep: S0 per event and the loss.
    let mut cum0 = 0.0;
    let mut loss = 0.0;
    let mut n_events = 0usize;
    let mut inv_s0: Vec<(usize, f64)> = Vec::new();
    sweep_risk_sets(
        &order,
        |pos| times[pos],
        |pos| events[pos],
        |step| match step {
            SweepStep::Absorb(pos) => {
                cum0 += f_values[pos].exp();
            }
            SweepStep::Event(pos) => {
                n_events += 1;
                loss += f_values[pos] - cum0.ln();
                inv_s0.push((pos, 1.0 / cum0));
            }
        },
    );
    let scale = s as f64;
    loss = -loss / scale;

    // Ascending sweep: cumulative event weights
    // R_j = sum_{events i: T_i <= T_j} 1/S0_i, tie groups absorbed whole.
    let mut r = vec![0.0; s];
    let inv_of: std::collections::HashMap<usize, f64> = inv_s0.into_iter().collect();
    let mut cum_r = 0.0;
    let mut hi = s;
    while hi > 0 {
        let mut lo = hi;
        let t = times[order[hi - 1]];
        while lo > 0 && times[order[lo - 1]] == t {
            lo -= 1;
        }
        for &pos in &order[lo..hi] {
            if let Some(inv) = inv_of.get(&pos) {
                cum_r += inv;
            }
        }
        for &pos in &order[lo..hi] {
            r[pos] = cum_r;
        }
        hi = lo;
    }

    let grads: Vec<f64> = (0..s)
        .map(|pos| {
            let delta = if events[pos] { 1.0 } else { 0.0 };
            -(delta - f_values[pos].exp() * r[pos]) / scale
        })
        .collect();
    (loss, grads, n_events)
}

/// Within-batch Cox loss and flat parameter gradient by backpropagation.
///
/// Masked parameters receive zero gradient; a batch without events
/// returns zero loss and a zero gradient.
pub fn batch_loss_grad(
    data: &Dataset,
    batch: &MiniBatch,
    model: &MlpCoxModel,
) -> Result<(f64, Array1<f64>)> {
    batch.validate(data.len())?;
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.dim(),
        });
    }

    let s = batch.size();
    let mut times = Vec::with_capacity(s);
    let mut events = Vec::with_capacity(s);
    let mut f_values = Vec::with_capacity(s);
    let mut traces = Vec::with_capacity(s);
    for &i in &batch.indices {
        let record = data.record(i);
        let (f, activations, preacts) = model.forward_trace(&record.covariates);
        if !f.is_finite() {
            return Err(Error::NonFinite {
                context: "network output",
            });
        }
        if f.abs() > RISK_BOUND {
            return Err(Error::RiskOverflow {
                value: f,
                limit: RISK_BOUND,
            });
        }
        times.push(record.time);
        events.push(record.event);
        f_values.push(f);
        traces.push((activations, preacts));
    }

    let (loss, output_grads, n_events) = batch_output_gradients(&times, &events, &f_values);

    let layers = model.layers();
    let mut grad_w: Vec<Array2<f64>> = model
        .weights
        .iter()
        .map(|w| Array2::zeros((w.nrows(), w.ncols())))
        .collect();
    let mut grad_v: Vec<Array1<f64>> = model
        .biases
        .iter()
        .map(|v| Array1::zeros(v.len()))
        .collect();

    if n_events > 0 {
        for (pos, (activations, preacts)) in traces.iter().enumerate() {
            let g = output_grads[pos];
            if g == 0.0 {
                continue;
            }
            // delta holds dL/dz_k while walking layers backwards.
            let mut delta = Array1::from_elem(1, g);
            for k in (0..layers).rev() {
                let a = &activations[k];
                for (row, &d) in delta.iter().enumerate() {
                    grad_v[k][row] += d;
                    if d != 0.0 {
                        for (col, &av) in a.iter().enumerate() {
                            grad_w[k][[row, col]] += d * av;
                        }
                    }
                }
                if k > 0 {
                    let back = model.weights[k].t().dot(&delta);
                    let z = &preacts[k - 1];
                    delta =
                        Array1::from_shape_fn(
                            back.len(),
                            |i| {
                                if z[i] > 0.0 {
                                    back[i]
                                } else {
                                    0.0
                                }
                            },
                        );
                }
            }
        }
    }

    if let Some(masks) = &model.masks {
        for (gw, m) in grad_w.iter_mut().zip(masks) {
            for (value, &masked) in gw.iter_mut().zip(m.iter()) {
                if masked {
                    *value = 0.0;
                }
            }
        }
    }

    let mut flat = Vec::with_capacity(model.param_count_internal());
    for k in 0..layers {
        flat.extend(grad_w[k].iter().copied());
        flat.extend(grad_v[k].iter().copied());
    }
    Ok((loss, Array1::from_vec(flat)))
}

/// Within-batch Cox loss only (no backprop).
pub fn batch_loss(data: &Dataset, batch: &MiniBatch, model: &MlpCoxModel) -> Result<f64> {
    batch.validate(data.len())?;
    let mut times = Vec::with_capacity(batch.size());
    let mut events = Vec::with_capacity(batch.size());
    let mut f_values = Vec::with_capacity(batch.size());
    for &i in &batch.indices {
        let record = data.record(i);
        let f = model.forward(&record.covariates)?;
        if f.abs() > RISK_BOUND {
            return Err(Error::RiskOverflow {
                value: f,
                limit: RISK_BOUND,
            });
        }
        times.push(record.time);
        events.push(record.event);
        f_values.push(f);
    }
    Ok(batch_output_gradients(&times, &events, &f_values).0)
}

impl crate::sgd::StochasticModel for MlpCoxModel {
    fn param_count(&self) -> usize {
        self.param_count_internal()
    }

    fn params(&self) -> Array1<f64> {
        self.params_flat()
    }

    fn set_params(&mut self, params: &ArrayView1<f64>) -> Result<()> {
        self.set_params_flat(params)
    }

    fn batch_loss(&self, data: &Dataset, batch: &MiniBatch) -> Result<f64> {
        batch_loss(data, batch, self)
    }

    fn batch_gradient(&self, data: &Dataset, batch: &MiniBatch) -> Result<Array1<f64>> {
        Ok(batch_loss_grad(data, batch, self)?.1)
    }

    fn eval_loss(&self, data: &Dataset) -> Result<f64> {
        Ok(crate::survival::full_loss(data, self)?.value)
    }
}

/// A Hutchinson trace estimate with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub probes: usize,
}

/// Hutchinson trace estimator `E_z[z^T (H z)]` with Rademacher probes.
///
/// `hvp` must return an (unbiased estimate of an) `H z` product; its own
/// randomness is folded into the Monte-Carlo standard error.
pub fn hutchinson_trace<F>(
    dim: usize,
    probes: usize,
    rng: &mut ChaCha8Rng,
    mut hvp: F,
) -> Result<TraceEstimate>
where
    F: FnMut(&Array1<f64>, &mut ChaCha8Rng) -> Result<Array1<f64>>,
{
    if probes == 0 {
        return Err(Error::InvalidConfig("at least one probe required".into()));
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..probes {
        let z = Array1::from_shape_fn(dim, |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let hz = hvp(&z, rng)?;
        let value = z.dot(&hz);
        sum += value;
        sumsq += value * value;
    }
    let mean = sum / probes as f64;
    let var = (sumsq / probes as f64 - mean * mean).max(0.0);
    Ok(TraceEstimate {
        estimate: mean,
        standard_error: (var / probes.max(1) as f64).sqrt(),
        probes,
    })
}

/// Finite-difference step for Hessian-vector products:
/// `1e-4 * (1 + ||theta||)`.
fn hvp_step(theta: &Array1<f64>) -> f64 {
    1e-4 * (1.0 + theta.dot(theta).sqrt())
}

/// Estimate `Tr(H_s)` at the model's current parameters.
///
/// Each probe draws one fresh SB batch from `data` and forms the
/// Hessian-vector product as a central difference of the batch gradient
/// along the probe direction; `z^T H z` values are averaged over probes.
pub fn hessian_trace_estimate(
    data: &Dataset,
    model: &MlpCoxModel,
    s: usize,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TraceEstimate> {
    if s < 2 || s > data.len() {
        return Err(Error::InvalidConfig(format!(
            "batch size must satisfy 2 <= s <= n, got s={s} n={}",
            data.len()
        )));
    }
    let theta = model.params_flat();
    let step = hvp_step(&theta);
    let mut probe_model = model.clone();
    let dim = theta.len();
    hutchinson_trace(dim, probes, rng, |z, rng| {
        let batch = MiniBatch::new(crate::batching::sample_subset(data.len(), s, rng));
        let up = &theta + &(z * step);
        probe_model.set_params_flat(&up.view())?;
        let (_, g_up) = batch_loss_grad(data, &batch, &probe_model)?;
        let down = &theta - &(z * step);
        probe_model.set_params_flat(&down.view())?;
        let (_, g_down) = batch_loss_grad(data, &batch, &probe_model)?;
        Ok((g_up - g_down) / (2.0 * step))
    })
}

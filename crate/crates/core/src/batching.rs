//! Mini-batch construction under the two sampling strategies.
//!
//! SB (stochastic batch) draws a fresh uniform s-subset of the data at
//! every step; FB (fixed batch) builds one seeded disjoint partition up
//! front and draws uniformly from its cells. Both are addressed by
//! `(seed, draw counter)` so a batch can be reproduced without replaying
//! the draws before it.

use std::collections::HashSet;

use itertools::Itertools;
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest number of subsets [`exact_batch_expectation`] will enumerate.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// An index subset of a dataset. Batch size is `indices.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
}

impl MiniBatch {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Distinctness and range check against a dataset of `n` records.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.indices.len() < 2 {
            return Err(Error::InvalidBatch(format!(
                "batch size must be at least 2, got {}",
                self.indices.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.indices.len());
        for &i in &self.indices {
            if i >= n {
                return Err(Error::InvalidBatch(format!(
                    "index {i} out of range for n={n}"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidBatch(format!("duplicate index {i}")));
            }
        }
        Ok(())
    }
}

/// Batch sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Stochastic batch: fresh uniform s-subset per draw.
    #[serde(rename = "SB")]
    Sb,
    /// Fixed batch: one seeded disjoint partition, cells drawn uniformly.
    #[serde(rename = "FB")]
    Fb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub s: usize,
    pub seed: u64,
}

/// Stateful sampler addressed by a draw counter.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    config: SamplerConfig,
    n: usize,
    counter: u64,
    partition: Option<Vec<MiniBatch>>,
    dropped: usize,
    /// SB only: draw batches by cycling through a fresh seeded shuffle of
    /// all records each epoch, so an epoch is one pass over the data.
    cycling: bool,
    /// Cached shuffled order (cells for FB, records for cycling SB) for
    /// the epoch currently in progress.
    epoch_order: Option<(u64, Vec<usize>)>,
}

/// Stream id reserved for building the FB partition; draws use streams
/// starting at 0 and epoch orders count down from `u64::MAX - 1`.
const PARTITION_STREAM: u64 = u64::MAX;

fn epoch_order_stream(epoch: u64) -> u64 {
    u64::MAX - 1 - epoch
}

impl BatchSampler {
    pub fn new(config: SamplerConfig, n: usize) -> Result<Self> {
        if config.s < 2 || config.s > n {
            return Err(Error::InvalidConfig(format!(
                "batch size must satisfy 2 <= s <= n, got s={} n={n}",
                config.s
            )));
        }
        let (partition, dropped) = match config.strategy {
            Strategy::Sb => (None, 0),
            Strategy::Fb => {
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = stream_rng(config.seed, PARTITION_STREAM);
                // Fisher-Yates via rand's shuffle, seeded.
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
                let m = n / config.s;
                let dropped = n - m * config.s;
                let cells = order
                    .chunks_exact(config.s)
                    .map(|c| MiniBatch::new(c.to_vec()))
                    .collect();
                (Some(cells), dropped)
            }
        };
        Ok(Self {
            config,
            n,
            counter: 0,
            partition,
            dropped,
            cycling: false,
            epoch_order: None,
        })
    }

    /// For SB, draw epochs as one pass over a fresh uniformly shuffled
    /// partition of the records instead of independent subsets (each
    /// draw is still marginally a uniform s-subset). FB always cycles.
    pub fn with_epoch_cycling(mut self) -> Self {
        self.cycling = true;
        self
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// FB cells, in partition order. `None` for SB.
    pub fn partition(&self) -> Option<&[MiniBatch]> {
        self.partition.as_deref()
    }

    /// Records dropped because `n mod s != 0` (FB only).
    pub fn dropped_records(&self) -> usize {
        self.dropped
    }

    /// Number of draws that constitute one epoch: `m = n/s` cells for FB,
    /// `ceil(n/s)` draws for SB.
    pub fn epoch_len(&self) -> usize {
        match &self.partition {
            Some(cells) => cells.len(),
            None => self.n.div_ceil(self.config.s),
        }
    }

    /// Draw the batch addressed by the current counter and advance it.
    pub fn draw(&mut self) -> MiniBatch {
        let counter = self.counter;
        self.counter += 1;
        if self.partition.is_some() {
            // FB draws cycle through the partition, reshuffled each
            // epoch, so one epoch is one pass over all the data. The
            // marginal distribution of each draw stays uniform over the
            // cells.
            let m = self.partition.as_ref().unwrap().len() as u64;
            self.ensure_epoch_order(counter / m, m as usize);
            let cell = self.epoch_order.as_ref().unwrap().1[(counter % m) as usize];
            return self.partition.as_ref().unwrap()[cell].clone();
        }
        if self.cycling {
            let m = self.epoch_len() as u64;
            self.ensure_epoch_order(counter / m, self.n);
            let order = &self.epoch_order.as_ref().unwrap().1;
            return Self::cycling_batch(order, (counter % m) as usize, self.config.s, self.n);
        }
        self.draw_at(counter)
    }

    fn ensure_epoch_order(&mut self, epoch: u64, len: usize) {
        let refresh = !matches!(&self.epoch_order, Some((e, _)) if *e == epoch);
        if refresh {
            self.epoch_order = Some((epoch, Self::shuffled_order(self.config.seed, epoch, len)));
        }
    }

    fn shuffled_order(seed: u64, epoch: u64, len: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut stream_rng(seed, epoch_order_stream(epoch)));
        order
    }

    /// Batch at epoch position `pos` of a shuffled record order. A short
    /// trailing chunk is replaced by the last `s` records of the order so
    /// every batch has exactly `s` distinct members.
    fn cycling_batch(order: &[usize], pos: usize, s: usize, n: usize) -> MiniBatch {
        let start = pos * s;
        let range = if start + s <= n {
            start..start + s
        } else {
            n - s..n
        };
        MiniBatch::new(order[range].to_vec())
    }

    /// Batch for an explicit draw counter; does not advance state.
    pub fn draw_at(&self, counter: u64) -> MiniBatch {
        match &self.partition {
            Some(cells) => {
                let m = cells.len() as u64;
                let order = Self::shuffled_order(self.config.seed, counter / m, cells.len());
                cells[order[(counter % m) as usize]].clone()
            }
            None if self.cycling => {
                let m = self.epoch_len() as u64;
                let order = Self::shuffled_order(self.config.seed, counter / m, self.n);
                Self::cycling_batch(&order, (counter % m) as usize, self.config.s, self.n)
            }
            None => {
                let mut rng = stream_rng(self.config.seed, counter);
                MiniBatch::new(sample_subset(self.n, self.config.s, &mut rng))
            }
        }
    }
}

/// Floyd's algorithm: uniform s-subset of `0..n` in O(s) draws.
pub fn sample_subset(n: usize, s: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(s <= n);
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    let mut member: HashSet<usize> = HashSet::with_capacity(s);
    for j in (n - s)..n {
        let t = rng.gen_range(0..=j);
        let pick = if member.contains(&t) { j } else { t };
        member.insert(pick);
        chosen.push(pick);
    }
    chosen
}

/// Number of s-subsets of an n-set, saturating at `u128::MAX`.
pub fn binomial(n: usize, s: usize) -> u128 {
    if s > n {
        return 0;
    }
    let s = s.min(n - s);
    let mut acc: u128 = 1;
    for k in 0..s {
        acc = match acc.checked_mul((n - k) as u128) {
            Some(v) => v / (k as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact average of `g` over every s-subset of an n-record dataset:
/// `(1/C(n,s)) sum_{D(s) subset D(n)} g(D(s))`.
///
/// This is the tiny-n oracle for the batch-expectation target; it refuses
/// once `C(n,s)` exceeds [`ENUMERATION_BUDGET`].
pub fn exact_batch_expectation<F>(n: usize, s: usize, mut g: F) -> Result<Array1<f64>>
where
    F: FnMut(&MiniBatch) -> Result<Array1<f64>>,
{
    if s < 2 || s > n {
        return Err(Error::InvalidConfig(format!(
            "batch size must satisfy 2 <= s <= n, got s={s} n={n}"
        )));
    }
    let count = binomial(n, s);
    if count > ENUMERATION_BUDGET {
        return Err(Error::CombinatorialBudget {
            n,
            s,
            count,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut sum: Option<Array1<f64>> = None;
    let mut seen = 0u128;
    for combo in (0..n).combinations(s) {
        let value = g(&MiniBatch::new(combo))?;
        match sum.as_mut() {
            Some(acc) => *acc += &value,
            None => sum = Some(value),
        }
        seen += 1;
    }
    debug_assert_eq!(seen, count);
    let mut mean = sum.expect("at least one subset");
    mean /= count as f64;
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fb_partition_covers_disjointly() {
        let sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 5,
            },
            6,
        )
        .unwrap();
        let cells = sampler.partition().unwrap();
        assert_eq!(cells.len(), 3);
        let mut all: Vec<usize> = cells.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sampler.dropped_records(), 0);
    }

    #[test]
    fn fb_drops_remainder() {
        let sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 3,
                seed: 5,
            },
            8,
        )
        .unwrap();
        assert_eq!(sampler.partition().unwrap().len(), 2);
        assert_eq!(sampler.dropped_records(), 2);
    }

    #[test]
    fn rejects_bad_batch_size() {
        for s in [0, 1, 7] {
            assert!(BatchSampler::new(
                SamplerConfig {
                    strategy: Strategy::Sb,
                    s,
                    seed: 0,
                },
                6,
            )
            .is_err());
        }
    }

    #[test]
    fn draws_are_counter_deterministic() {
        let config = SamplerConfig {
            strategy: Strategy::Sb,
            s: 3,
            seed: 99,
        };
        let mut a = BatchSampler::new(config, 10).unwrap();
        let mut b = BatchSampler::new(config, 10).unwrap();
        for _ in 0..5 {
            assert_eq!(a.draw(), b.draw());
        }
        // Addressing by counter skips history.
        let c = BatchSampler::new(config, 10).unwrap();
        assert_eq!(c.draw_at(4), a.draw_at(4));
    }

    #[test]
    fn sb_pairs_uniform_within_3_se() {
        let mut sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Sb,
                s: 2,
                seed: 123,
            },
            4,
        )
        .unwrap();
        let draws = 100_000usize;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let mut b = sampler.draw().indices;
            b.sort_unstable();
            *counts.entry((b[0], b[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for (&pair, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se,
                "pair {pair:?} frequency {freq} outside 1/6 +- 3se"
            );
        }
    }

    #[test]
    fn sb_uniformity_chi_square() {
        // Goodness of fit over all C(n,s) subsets at the 0.001 level.
        // chi^2 0.999 quantiles: dof 5 -> 20.515, dof 19 -> 43.820.
        for (n, s, crit) in [(4usize, 2usize, 20.515f64), (6, 3, 43.820)] {
            let mut sampler = BatchSampler::new(
                SamplerConfig {
                    strategy: Strategy::Sb,
                    s,
                    seed: 2024,
                },
                n,
            )
            .unwrap();
            let cells = binomial(n, s) as usize;
            let draws = 20_000 * cells;
            let mut counts = std::collections::HashMap::new();
            for _ in 0..draws {
                let mut b = sampler.draw().indices;
                b.sort_unstable();
                *counts.entry(b).or_insert(0usize) += 1;
            }
            assert_eq!(counts.len(), cells);
            let expected = draws as f64 / cells as f64;
            let chi2: f64 = counts
                .values()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            assert!(
                chi2 < crit,
                "chi2 {chi2} exceeds 0.999 critical value {crit} for n={n} s={s}"
            );
        }
    }

    #[test]
    fn fb_draw_picks_partition_cells() {
        let mut sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 7,
            },
            6,
        )
        .unwrap();
        let cells: Vec<MiniBatch> = sampler.partition().unwrap().to_vec();
        for _ in 0..50 {
            let b = sampler.draw();
            assert!(cells.contains(&b));
        }
    }

    #[test]
    fn fb_epoch_visits_every_cell_once() {
        let mut sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 11,
            },
            10,
        )
        .unwrap();
        let m = sampler.epoch_len();
        assert_eq!(m, 5);
        for _epoch in 0..4 {
            let mut seen = std::collections::HashSet::new();
            for _ in 0..m {
                let mut b = sampler.draw().indices;
                b.sort_unstable();
                assert!(seen.insert(b), "cell repeated within an epoch");
            }
            assert_eq!(seen.len(), m);
        }
        // draw_at matches the stateful sequence.
        let fresh = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 11,
            },
            10,
        )
        .unwrap();
        let mut replay = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 11,
            },
            10,
        )
        .unwrap();
        for counter in 0..12u64 {
            assert_eq!(replay.draw(), fresh.draw_at(counter));
        }
    }

    #[test]
    fn cycling_sb_epoch_covers_all_records() {
        let mut sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Sb,
                s: 3,
                seed: 21,
            },
            12,
        )
        .unwrap()
        .with_epoch_cycling();
        let m = sampler.epoch_len();
        assert_eq!(m, 4);
        for _epoch in 0..3 {
            let mut seen = Vec::new();
            for _ in 0..m {
                let b = sampler.draw();
                assert_eq!(b.indices.len(), 3);
                seen.extend(b.indices);
            }
            seen.sort_unstable();
            assert_eq!(seen, (0..12).collect::<Vec<_>>());
        }
        // Counter addressing replays the same sequence.
        let replay = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Sb,
                s: 3,
                seed: 21,
            },
            12,
        )
        .unwrap()
        .with_epoch_cycling();
        let mut fresh = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Sb,
                s: 3,
                seed: 21,
            },
            12,
        )
        .unwrap()
        .with_epoch_cycling();
        for counter in 0..9u64 {
            assert_eq!(fresh.draw(), replay.draw_at(counter));
        }
    }

    #[test]
    fn cycling_sb_short_tail_still_draws_s_distinct() {
        let mut sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Sb,
                s: 4,
                seed: 22,
            },
            10,
        )
        .unwrap()
        .with_epoch_cycling();
        // epoch_len = ceil(10/4) = 3; the third batch reuses the tail.
        assert_eq!(sampler.epoch_len(), 3);
        for _ in 0..9 {
            let b = sampler.draw();
            b.validate(10).unwrap();
            assert_eq!(b.indices.len(), 4);
        }
    }

    #[test]
    fn fb_draws_marginally_uniform() {
        let sampler = BatchSampler::new(
            SamplerConfig {
                strategy: Strategy::Fb,
                s: 2,
                seed: 13,
            },
            8,
        )
        .unwrap();
        // Look only at the first draw of each epoch: it is a uniform
        // pick of the 4 cells.
        let mut counts = std::collections::HashMap::new();
        let trials = 40_000;
        for epoch in 0..trials {
            let b = sampler.draw_at(epoch * 4);
            let mut key = b.indices.clone();
            key.sort_unstable();
            *counts.entry(key).or_insert(0usize) += 1;
        }
        let p = 0.25;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for (cell, &c) in &counts {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - p).abs() < 4.0 * se,
                "cell {cell:?} frequency {freq}"
            );
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(6, 2), 15);
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(52, 5), 2_598_960);
    }

    #[test]
    fn exact_expectation_of_constant() {
        let c = array![2.5, -1.0];
        let out = exact_batch_expectation(3, 2, |_| Ok(c.clone())).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn exact_expectation_of_decomposable_mean() {
        // Mean of per-record values over the batch averages to the
        // full-sample mean exactly, whatever s.
        let values = [0.3, -1.2, 2.0, 0.7];
        let full = values.iter().sum::<f64>() / 4.0;
        for s in 2..=4 {
            let out = exact_batch_expectation(4, s, |b| {
                let m = b.indices.iter().map(|&i| values[i]).sum::<f64>() / s as f64;
                Ok(array![m])
            })
            .unwrap();
            assert!((out[0] - full).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_expectation_respects_budget() {
        let err = exact_batch_expectation(60, 20, |_| Ok(array![0.0]));
        assert!(matches!(err, Err(Error::CombinatorialBudget { .. })));
    }

    #[test]
    fn sampler_config_json_round_trip() {
        let config = SamplerConfig {
            strategy: Strategy::Fb,
            s: 32,
            seed: 17,
        };
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(text, r#"{"strategy":"FB","s":32,"seed":17}"#);
        let back: SamplerConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config, back);
        let sb: SamplerConfig = serde_json::from_str(r#"{"strategy":"SB","s":4,"seed":9}"#).unwrap();
        assert_eq!(sb.strategy, Strategy::Sb);
    }

    #[test]
    fn minibatch_validation() {
        assert!(MiniBatch::new(vec![0, 1]).validate(3).is_ok());
        assert!(MiniBatch::new(vec![0]).validate(3).is_err());
        assert!(MiniBatch::new(vec![0, 3]).validate(3).is_err());
        assert!(MiniBatch::new(vec![1, 1]).validate(3).is_err());
    }
}

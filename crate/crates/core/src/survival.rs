//! Core survival data types and the full-sample partial-likelihood loss.
//!
//! A [`Dataset`] owns right-censored records and a descending-time
//! permutation; risk-set aggregates are computed in a single cumulative
//! sweep along that permutation. Ties are handled Breslow-style: the
//! at-risk indicator `T_j >= T_i` keeps every tied subject in the risk
//! set of an event at that time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Guard on the magnitude of any log relative-risk value. Values beyond
/// this would push `exp` toward overflow inside risk-set sums.
pub const RISK_BOUND: f64 = 50.0;

/// One right-censored observation: covariates, observed time
/// `min(event time, censoring time)`, and whether the event was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub covariates: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(covariates: Vec<f64>, time: f64, event: bool) -> Result<Self> {
        if !time.is_finite() || time <= 0.0 {
            return Err(Error::InvalidRecord(format!(
                "observed time must be positive and finite, got {time}"
            )));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRecord(
                "covariates must be finite".to_string(),
            ));
        }
        Ok(Self {
            covariates,
            time,
            event,
        })
    }
}

/// Maps a covariate vector to its scalar log relative risk `f(x)`.
pub trait RelativeRisk {
    fn dim(&self) -> usize;
    fn log_risk(&self, x: &[f64]) -> f64;
}

/// An immutable collection of survival records with a shared covariate
/// dimension and a cached descending-time sort order.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    dim: usize,
    /// Record indices sorted by descending time, ties broken by original
    /// index so that tied blocks keep a stable order.
    sorted_index: Vec<usize>,
}

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = records[0].covariates.len();
        for r in &records {
            if r.covariates.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.covariates.len(),
                });
            }
        }
        let mut sorted_index: Vec<usize> = (0..records.len()).collect();
        sorted_index.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time).then(a.cmp(&b)));
        Ok(Self {
            records,
            dim,
            sorted_index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SurvivalRecord {
        &self.records[i]
    }

    /// Record indices in descending-time order (ties by original index).
    pub fn sorted_index(&self) -> &[usize] {
        &self.sorted_index
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// New dataset holding clones of the selected records (a mini-batch
    /// viewed as its own dataset).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidBatch(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records)
    }

    /// Evaluate a relative-risk model on every record.
    pub fn risk_values(&self, model: &impl RelativeRisk) -> Result<Vec<f64>> {
        if model.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: model.dim(),
            });
        }
        self.records
            .iter()
            .map(|r| {
                let f = model.log_risk(&r.covariates);
                check_risk_value(f)?;
                Ok(f)
            })
            .collect()
    }

    /// Read the CSV dataset format: header `x1,...,xp,time,event`,
    /// `event` in {0,1}. Lines starting with `#` are skipped.
    pub fn from_csv(path: &Path) -> Result<Dataset> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        let mut p: Option<usize> = None;
        let mut saw_header = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.len() < 3
                    || cols[cols.len() - 2] != "time"
                    || cols[cols.len() - 1] != "event"
                {
                    return Err(Error::CsvParse {
                        line: lineno + 1,
                        message: "expected header `x1,...,xp,time,event`".to_string(),
                    });
                }
                p = Some(cols.len() - 2);
                saw_header = true;
                continue;
            }
            let p = p.unwrap();
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != p + 2 {
                return Err(Error::CsvParse {
                    line: lineno + 1,
                    message: format!("expected {} fields, got {}", p + 2, fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::CsvParse {
                    line: lineno + 1,
                    message: format!("bad number `{s}`: {e}"),
                })
            };
            let covariates = fields[..p]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>>>()?;
            let time = parse(fields[p])?;
            let event = match fields[p + 1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::CsvParse {
                        line: lineno + 1,
                        message: format!("event must be 0 or 1, got `{other}`"),
                    })
                }
            };
            records.push(SurvivalRecord::new(covariates, time, event)?);
        }
        Dataset::new(records)
    }

    /// Write the CSV dataset format. `comments` lines are emitted first,
    /// each prefixed with `# `.
    pub fn to_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let header: Vec<String> = (1..=self.dim)
            .map(|i| format!("x{i}"))
            .chain(["time".to_string(), "event".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut fields: Vec<String> = r.covariates.iter().map(|x| format!("{x}")).collect();
            fields.push(format!("{}", r.time));
            fields.push(if r.event { "1" } else { "0" }.to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn check_risk_value(f: f64) -> Result<()> {
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
    Ok(())
}

fn check_risk_values(f_values: &[f64]) -> Result<()> {
    f_values.iter().try_for_each(|&f| check_risk_value(f))
}

/// Per-event risk-set aggregates.
///
/// For each record `i` with an observed event, `s0[k]` holds
/// `S0_i = sum_{T_j >= T_i} exp(f_j)` and, when requested, `s1[k]` holds
/// `S1_i = sum_{T_j >= T_i} exp(f_j) x_j`.
#[derive(Debug, Clone)]
pub struct RiskSetWeights {
    pub event_indices: Vec<usize>,
    pub s0: Vec<f64>,
    pub s1: Option<Vec<Vec<f64>>>,
}

/// One step of a descending-time risk-set sweep.
pub(crate) enum SweepStep {
    /// The record enters the risk set.
    Absorb(usize),
    /// The record is an event whose tied block is fully absorbed.
    Event(usize),
}

/// Walk records in descending time order, absorbing whole tied blocks
/// into the risk set before firing their events (Breslow convention).
pub(crate) fn sweep_risk_sets(
    sorted: &[usize],
    time_of: impl Fn(usize) -> f64,
    event_of: impl Fn(usize) -> bool,
    mut step: impl FnMut(SweepStep),
) {
    let n = sorted.len();
    let mut start = 0;
    while start < n {
        let t = time_of(sorted[start]);
        let mut end = start;
        while end < n && time_of(sorted[end]) == t {
            end += 1;
        }
        for &j in &sorted[start..end] {
            step(SweepStep::Absorb(j));
        }
        for &i in &sorted[start..end] {
            if event_of(i) {
                step(SweepStep::Event(i));
            }
        }
        start = end;
    }
}

/// Risk-set sums `S0_i` (and optionally `S1_i`) for every event, in one
/// descending-time cumulative sweep.
pub fn risk_set_weights(data: &Dataset, f_values: &[f64], with_s1: bool) -> Result<RiskSetWeights> {
    if f_values.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: f_values.len(),
        });
    }
    check_risk_values(f_values)?;

    let p = data.dim();
    let mut cum0 = 0.0;
    let mut cum1 = vec![0.0; if with_s1 { p } else { 0 }];
    let mut out = RiskSetWeights {
        event_indices: Vec::new(),
        s0: Vec::new(),
        s1: with_s1.then(Vec::new),
    };
    sweep_risk_sets(
        data.sorted_index(),
        |j| data.record(j).time,
        |j| data.record(j).event,
        |step| match step {
            SweepStep::Absorb(j) => {
                let w = f_values[j].exp();
                cum0 += w;
                if with_s1 {
                    for (acc, &x) in cum1.iter_mut().zip(&data.record(j).covariates) {
                        *acc += w * x;
                    }
                }
            }
            SweepStep::Event(i) => {
                out.event_indices.push(i);
                out.s0.push(cum0);
                if let Some(s1) = out.s1.as_mut() {
                    s1.push(cum1.clone());
                }
            }
        },
    );
    Ok(out)
}

/// Value of the negative log-partial likelihood together with the number
/// of events that contributed. `n_events == 0` is the degenerate case
/// where the loss is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub n_events: usize,
}

/// Full-sample negative log-partial likelihood
/// `-(1/n) sum_{i: event} [f(X_i) - log S0_i]` for precomputed risk
/// values.
pub fn full_loss_from_values(data: &Dataset, f_values: &[f64]) -> Result<LossValue> {
    let weights = risk_set_weights(data, f_values, false)?;
    let mut total = 0.0;
    for (&i, &s0) in weights.event_indices.iter().zip(&weights.s0) {
        total += f_values[i] - s0.ln();
    }
    Ok(LossValue {
        value: -total / data.len() as f64,
        n_events: weights.event_indices.len(),
    })
}

/// Full-sample negative log-partial likelihood of a relative-risk model.
pub fn full_loss(data: &Dataset, model: &impl RelativeRiskModelExt) -> Result<LossValue> {
    let f_values = model.risk_values_for(data)?;
    full_loss_from_values(data, &f_values)
}

/// Blanket helper so `full_loss` accepts anything implementing
/// [`RelativeRisk`].
pub trait RelativeRiskModelExt {
    fn risk_values_for(&self, data: &Dataset) -> Result<Vec<f64>>;
}

impl<M: RelativeRisk> RelativeRiskModelExt for M {
    fn risk_values_for(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.risk_values(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn dataset(rows: &[(&[f64], f64, bool)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|(x, t, e)| SurvivalRecord::new(x.to_vec(), *t, *e).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// O(n^2) definition of the risk-set sums.
    fn naive_s0(data: &Dataset, f: &[f64]) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for i in data.sorted_index() {
            let i = *i;
            if !data.record(i).event {
                continue;
            }
            let ti = data.record(i).time;
            let s0: f64 = (0..data.len())
                .filter(|&j| data.record(j).time >= ti)
                .map(|j| f[j].exp())
                .sum();
            out.push((i, s0));
        }
        out
    }

    /// Direct evaluation of the loss definition, double loop.
    fn naive_loss(data: &Dataset, f: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..data.len() {
            if !data.record(i).event {
                continue;
            }
            let ti = data.record(i).time;
            let s0: f64 = (0..data.len())
                .filter(|&j| data.record(j).time >= ti)
                .map(|j| f[j].exp())
                .sum();
            total += f[i] - s0.ln();
        }
        -total / data.len() as f64
    }

    #[test]
    fn two_record_risk_set() {
        let data = dataset(&[(&[1.0], 1.0, true), (&[0.0], 2.0, false)]);
        let w = risk_set_weights(&data, &[0.0, 0.0], false).unwrap();
        assert_eq!(w.event_indices, vec![0]);
        assert!((w.s0[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nested_risk_sets() {
        let data = dataset(&[
            (&[0.0], 3.0, true),
            (&[0.0], 2.0, true),
            (&[0.0], 1.0, true),
        ]);
        let w = risk_set_weights(&data, &[0.0; 3], false).unwrap();
        assert_eq!(w.event_indices, vec![0, 1, 2]);
        assert_eq!(w.s0, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sweep_matches_naive_on_random_data() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..50 {
            let n = rng.gen_range(2..12);
            let rows: Vec<SurvivalRecord> = (0..n)
                .map(|_| {
                    SurvivalRecord::new(
                        vec![rng.gen_range(-1.0..1.0)],
                        // Coarse times force ties regularly.
                        (rng.gen_range(1..5) as f64) * 0.5,
                        rng.gen_bool(0.7),
                    )
                    .unwrap()
                })
                .collect();
            let data = Dataset::new(rows).unwrap();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w = risk_set_weights(&data, &f, false).unwrap();
            let expect = naive_s0(&data, &f);
            assert_eq!(w.event_indices.len(), expect.len());
            for ((i, s0), (j, t0)) in w
                .event_indices
                .iter()
                .zip(&w.s0)
                .map(|(a, b)| (*a, *b))
                .zip(expect)
            {
                assert_eq!(i, j);
                let rel = (s0 - t0).abs() / t0.abs().max(1.0);
                assert!(rel < 1e-12, "s0 {s0} vs naive {t0}");
            }
        }
    }

    #[test]
    fn s1_matches_naive() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(13, 0);
        let rows: Vec<SurvivalRecord> = (0..8)
            .map(|_| {
                SurvivalRecord::new(
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    rng.gen_range(0.1..3.0),
                    rng.gen_bool(0.6),
                )
                .unwrap()
            })
            .collect();
        let data = Dataset::new(rows).unwrap();
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = risk_set_weights(&data, &f, true).unwrap();
        let s1 = w.s1.unwrap();
        for (k, &i) in w.event_indices.iter().enumerate() {
            let ti = data.record(i).time;
            for (c, got) in s1[k].iter().enumerate() {
                let expect: f64 = (0..8)
                    .filter(|&j| data.record(j).time >= ti)
                    .map(|j| f[j].exp() * data.record(j).covariates[c])
                    .sum();
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_two_records_zero_risk() {
        let data = dataset(&[(&[1.0], 1.0, true), (&[0.0], 2.0, false)]);
        let loss = full_loss_from_values(&data, &[0.0, 0.0]).unwrap();
        assert!((loss.value - 0.5 * 2.0_f64.ln()).abs() < 1e-12);
        assert_eq!(loss.n_events, 1);
    }

    #[test]
    fn loss_zero_when_only_event_is_longest_survivor() {
        let data = dataset(&[
            (&[0.5], 1.0, false),
            (&[0.2], 2.0, false),
            (&[0.9], 3.0, true),
        ]);
        let loss = full_loss_from_values(&data, &[0.3, -0.8, 1.2]).unwrap();
        assert!(loss.value.abs() < 1e-15);
    }

    #[test]
    fn loss_zero_with_warning_when_no_events() {
        let data = dataset(&[(&[0.0], 1.0, false), (&[0.0], 2.0, false)]);
        let loss = full_loss_from_values(&data, &[0.4, -0.4]).unwrap();
        assert_eq!(loss.n_events, 0);
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn loss_matches_naive_double_loop() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(17, 0);
        for _ in 0..20 {
            let n = rng.gen_range(2..10);
            let rows: Vec<SurvivalRecord> = (0..n)
                .map(|_| {
                    SurvivalRecord::new(
                        vec![rng.gen_range(-1.0..1.0)],
                        rng.gen_range(0.1..4.0),
                        rng.gen_bool(0.7),
                    )
                    .unwrap()
                })
                .collect();
            let data = Dataset::new(rows).unwrap();
            let theta = rng.gen_range(-1.5..1.5);
            let f: Vec<f64> = data
                .records()
                .iter()
                .map(|r| theta * r.covariates[0])
                .collect();
            let got = full_loss_from_values(&data, &f).unwrap().value;
            let expect = naive_loss(&data, &f);
            assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn breslow_both_tied_events_share_risk_set() {
        let data = dataset(&[(&[0.0], 2.0, true), (&[0.0], 2.0, true)]);
        let w = risk_set_weights(&data, &[0.0, 0.0], false).unwrap();
        assert_eq!(w.s0, vec![2.0, 2.0]);
        let loss = full_loss_from_values(&data, &[0.0, 0.0]).unwrap();
        assert!((loss.value - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn breslow_tied_event_sees_all_tied_subjects() {
        let data = dataset(&[
            (&[0.0], 1.0, true),
            (&[0.0], 1.0, false),
            (&[0.0], 2.0, false),
        ]);
        let w = risk_set_weights(&data, &[0.0; 3], false).unwrap();
        assert_eq!(w.event_indices, vec![0]);
        assert!((w.s0[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonfinite_risk_values() {
        let data = dataset(&[(&[0.0], 1.0, true), (&[0.0], 2.0, false)]);
        assert!(risk_set_weights(&data, &[f64::NAN, 0.0], false).is_err());
        assert!(matches!(
            full_loss_from_values(&data, &[60.0, 0.0]),
            Err(Error::RiskOverflow { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("coxsgd_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.csv");
        let data = dataset(&[(&[1.0, 2.0], 1.5, true), (&[0.25, -1.0], 2.0, false)]);
        data.to_csv(&path, &["seed=1".to_string()]).unwrap();
        let back = Dataset::from_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.dim(), 2);
        assert_eq!(back.record(0).covariates, vec![1.0, 2.0]);
        assert_eq!(back.record(1).time, 2.0);
        assert!(!back.record(1).event);
    }

    proptest! {
        /// Permuting records leaves the loss unchanged (within summation
        /// round-off), including tied times.
        #[test]
        fn loss_permutation_invariant(
            seed in 0u64..500,
            n in 2usize..9,
        ) {
            use rand::seq::SliceRandom;
            use rand::Rng;
            let mut rng = crate::rng::stream_rng(seed, 1);
            let rows: Vec<SurvivalRecord> = (0..n)
                .map(|_| SurvivalRecord::new(
                    vec![rng.gen_range(-1.0..1.0)],
                    (rng.gen_range(1..4) as f64) * 0.5,
                    rng.gen_bool(0.7),
                ).unwrap())
                .collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let data = Dataset::new(rows.clone()).unwrap();
            let base = full_loss_from_values(&data, &f).unwrap().value;

            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let shuffled_rows: Vec<SurvivalRecord> = perm.iter().map(|&i| rows[i].clone()).collect();
            let shuffled_f: Vec<f64> = perm.iter().map(|&i| f[i]).collect();
            let shuffled = Dataset::new(shuffled_rows).unwrap();
            let other = full_loss_from_values(&shuffled, &shuffled_f).unwrap().value;
            prop_assert!((base - other).abs() <= 1e-12 * base.abs().max(1.0));
        }

        /// Adding a constant to every risk value leaves the loss unchanged.
        #[test]
        fn loss_location_invariant(
            seed in 0u64..500,
            shift in -5.0f64..5.0,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream_rng(seed, 2);
            let n = rng.gen_range(2..9);
            let rows: Vec<SurvivalRecord> = (0..n)
                .map(|_| SurvivalRecord::new(
                    vec![rng.gen_range(-1.0..1.0)],
                    rng.gen_range(0.1..4.0),
                    rng.gen_bool(0.7),
                ).unwrap())
                .collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let shifted: Vec<f64> = f.iter().map(|v| v + shift).collect();
            let data = Dataset::new(rows).unwrap();
            let a = full_loss_from_values(&data, &f).unwrap().value;
            let b = full_loss_from_values(&data, &shifted).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        /// The loss is non-negative: each event subject is in its own
        /// risk set, so exp(f_i) <= S0_i.
        #[test]
        fn loss_nonnegative(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = crate::rng::stream_rng(seed, 3);
            let n = rng.gen_range(2..9);
            let rows: Vec<SurvivalRecord> = (0..n)
                .map(|_| SurvivalRecord::new(
                    vec![rng.gen_range(-1.0..1.0)],
                    rng.gen_range(0.1..4.0),
                    rng.gen_bool(0.7),
                ).unwrap())
                .collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let data = Dataset::new(rows).unwrap();
            let loss = full_loss_from_values(&data, &f).unwrap();
            prop_assert!(loss.value >= -1e-15);
        }
    }
}

//! Task metrics and the CSV metric log.
//!
//! Metric functions are pure; `MetricLog` collects one record per evaluation
//! point and serializes to CSV with the fixed column order
//! `step,loss,<metric...>,wall_ms` so identical runs produce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Number of bits (threshold 0.5) that disagree.
pub fn bit_error(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "bit sequences must align");
    pred.iter()
        .zip(target)
        .filter(|(p, t)| (**p >= 0.5) != (**t >= 0.5))
        .count() as f64
}

/// Fraction of bits that agree; empty sequences count as fully correct.
pub fn bit_accuracy(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "bit sequences must align");
    if pred.is_empty() {
        return 1.0;
    }
    1.0 - bit_error(pred, target) / pred.len() as f64
}

/// Position-aligned token matches over the longer length.
pub fn seq_accuracy(pred: &[usize], target: &[usize]) -> f64 {
    let longer = pred.len().max(target.len());
    if longer == 0 {
        return 1.0;
    }
    let matches = pred.iter().zip(target).filter(|(p, t)| p == t).count();
    matches as f64 / longer as f64
}

/// Levenshtein distance normalized by the longer length; two empty
/// sequences are identical, so 0.
pub fn nld(a: &[usize], b: &[usize]) -> f64 {
    let longer = a.len().max(b.len());
    if longer == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longer as f64
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Fraction of the first `k` predictions found in the relevant multiset,
/// consuming matches so duplicates are not double-counted.
pub fn precision_at_k(pred: &[usize], relevant: &[usize], k: usize) -> f64 {
    assert!(k > 0, "k must be positive");
    assert!(k <= pred.len(), "need at least k predictions");
    let mut pool = BTreeMap::new();
    for &r in relevant {
        *pool.entry(r).or_insert(0usize) += 1;
    }
    let mut hits = 0usize;
    for &p in &pred[..k] {
        if let Some(c) = pool.get_mut(&p) {
            if *c > 0 {
                *c -= 1;
                hits += 1;
            }
        }
    }
    hits as f64 / k as f64
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "sequences must align");
    assert!(!pred.is_empty(), "mse over empty sequences");
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub loss: f64,
    /// One value per named metric, in the log's column order.
    pub values: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    names: Vec<String>,
    records: Vec<MetricRecord>,
}

impl MetricLog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        MetricLog { names: names.into_iter().map(Into::into).collect(), records: Vec::new() }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    pub fn push(&mut self, record: MetricRecord) {
        assert_eq!(record.values.len(), self.names.len(), "one value per metric column");
        if let Some(prev) = self.records.last() {
            assert!(record.step > prev.step, "steps must increase");
        }
        self.records.push(record);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss");
        for name in &self.names {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",wall_ms\n");
        for r in &self.records {
            let _ = write!(out, "{},{}", r.step, r.loss);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", r.wall_ms);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_sequences_score_perfectly() {
        let bits = [0.9, 0.1, 0.6, 0.4];
        assert_eq!(bit_error(&bits, &[1.0, 0.0, 1.0, 0.0]), 0.0);
        assert_eq!(bit_accuracy(&bits, &[1.0, 0.0, 1.0, 0.0]), 1.0);
        let toks = [3usize, 1, 4, 1, 5];
        assert_eq!(seq_accuracy(&toks, &toks), 1.0);
        assert_eq!(nld(&toks, &toks), 0.0);
        assert_eq!(mse(&[1.5, -2.0], &[1.5, -2.0]), 0.0);
    }

    #[test]
    fn single_substitution_in_three_tokens_is_one_third() {
        let d = nld(&[22, 14, 50], &[22, 15, 50]);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn deleting_everything_costs_the_whole_length() {
        assert_eq!(nld(&[1, 2, 3], &[]), 1.0);
        assert_eq!(nld(&[], &[7]), 1.0);
        assert_eq!(nld(&[], &[]), 0.0);
    }

    #[test]
    fn edit_distance_matches_a_recursive_oracle() {
        fn oracle(a: &[usize], b: &[usize]) -> usize {
            if a.is_empty() {
                return b.len();
            }
            if b.is_empty() {
                return a.len();
            }
            let sub = oracle(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
            let del = oracle(&a[1..], b) + 1;
            let ins = oracle(a, &b[1..]) + 1;
            sub.min(del).min(ins)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let la = rng.gen_range(0..=6);
            let lb = rng.gen_range(0..=6);
            let a: Vec<usize> = (0..la).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<usize> = (0..lb).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(levenshtein(&a, &b), oracle(&a, &b), "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn seq_accuracy_penalizes_the_longer_side() {
        assert_eq!(seq_accuracy(&[1, 2, 3, 9], &[1, 2, 3]), 0.75);
        assert_eq!(seq_accuracy(&[1, 2], &[1, 9, 3, 4]), 0.25);
        assert_eq!(seq_accuracy(&[], &[]), 1.0);
    }

    #[test]
    fn precision_at_k_consumes_duplicate_matches() {
        // relevant holds one 5; predicting it twice only counts once
        assert_eq!(precision_at_k(&[5, 5, 1], &[5, 2], 2), 0.5);
        assert_eq!(precision_at_k(&[5, 2, 9], &[5, 2], 2), 1.0);
        assert_eq!(precision_at_k(&[9, 8, 7], &[5, 2], 3), 0.0);
        // two 5s relevant → both predictions hit
        assert_eq!(precision_at_k(&[5, 5], &[5, 5, 1], 2), 1.0);
    }

    #[test]
    fn csv_has_the_stable_column_order() {
        let mut log = MetricLog::new(["bit_accuracy", "nld"]);
        log.push(MetricRecord { step: 0, loss: 1.25, values: vec![0.5, 1.0], wall_ms: 0 });
        log.push(MetricRecord { step: 100, loss: 0.5, values: vec![0.875, 0.25], wall_ms: 0 });
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,loss,bit_accuracy,nld,wall_ms"));
        assert_eq!(lines.next(), Some("0,1.25,0.5,1,0"));
        assert_eq!(lines.next(), Some("100,0.5,0.875,0.25,0"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    #[should_panic(expected = "steps must increase")]
    fn out_of_order_steps_are_rejected() {
        let mut log = MetricLog::new(["mse"]);
        log.push(MetricRecord { step: 5, loss: 0.0, values: vec![0.0], wall_ms: 0 });
        log.push(MetricRecord { step: 5, loss: 0.0, values: vec![0.0], wall_ms: 0 });
    }

    #[test]
    fn bit_error_counts_threshold_crossings() {
        let pred = [0.49, 0.51, 0.99, 0.01];
        let target = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(bit_error(&pred, &target), 2.0);
        assert_eq!(bit_accuracy(&pred, &target), 0.5);
    }
}

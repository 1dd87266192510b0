//! Seeded generators for the synthetic benchmark tasks. Every generator is
//! a pure function of (spec, seed): the same pair always reproduces the
//! same sample bit for bit.
//!
//! Token tasks (double/copy/reverse/add/max, odd-even, sum) emit one-hot
//! rows and carry the raw value sequences in `meta`. Binary-vector tasks
//! follow the usual layout of content channels plus dedicated delimiter
//! channels (start-of-input, start-of-target), with task-specific extras
//! such as the repeat-count scalar or the priority channel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Double,
    Copy,
    Reverse,
    Add,
    Max,
    LongCopy,
    NtmCopy,
    RepeatCopy,
    AssocRecall,
    DynNgrams,
    PrioritySort,
    OddEven,
    Sum,
    Sinusoid,
}

impl TaskKind {
    pub const ALL: [TaskKind; 14] = [
        TaskKind::Double,
        TaskKind::Copy,
        TaskKind::Reverse,
        TaskKind::Add,
        TaskKind::Max,
        TaskKind::LongCopy,
        TaskKind::NtmCopy,
        TaskKind::RepeatCopy,
        TaskKind::AssocRecall,
        TaskKind::DynNgrams,
        TaskKind::PrioritySort,
        TaskKind::OddEven,
        TaskKind::Sum,
        TaskKind::Sinusoid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Double => "double",
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Add => "add",
            TaskKind::Max => "max",
            TaskKind::LongCopy => "long_copy",
            TaskKind::NtmCopy => "ntm_copy",
            TaskKind::RepeatCopy => "repeat_copy",
            TaskKind::AssocRecall => "assoc_recall",
            TaskKind::DynNgrams => "dyn_ngrams",
            TaskKind::PrioritySort => "priority_sort",
            TaskKind::OddEven => "odd_even",
            TaskKind::Sum => "sum",
            TaskKind::Sinusoid => "sinusoid",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("unknown task kind `{0}`")]
    UnknownKind(String),
    #[error("sequencing needs at least one subtask")]
    EmptySequencing,
    #[error("task `{0}` cannot be sequenced")]
    UnsupportedSubtask(TaskKind),
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| TaskError::UnknownKind(s.to_string()))
    }
}

/// Generation parameters. `TaskSpec::new` fills the published defaults for
/// a kind; individual fields can then be overridden for downscaled runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Inclusive sequence-length range.
    pub len_range: (usize, usize),
    /// Inclusive token value range for token tasks.
    pub value_range: (u32, u32),
    /// Content channels for binary-vector tasks.
    pub bits: usize,
    pub repeat_range: (usize, usize),
    pub item_range: (usize, usize),
    pub item_len: usize,
    pub n_items: usize,
    pub n_sorted: usize,
    pub amp_range: (f64, f64),
    /// Sinusoid only: corrupt the observed half with uniform noise.
    pub noisy: bool,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        let mut spec = TaskSpec {
            kind,
            len_range: (50, 50),
            value_range: (1, 10),
            bits: 8,
            repeat_range: (1, 10),
            item_range: (2, 6),
            item_len: 3,
            n_items: 20,
            n_sorted: 16,
            amp_range: (1.0, 5.0),
            noisy: false,
        };
        match kind {
            TaskKind::Double | TaskKind::Copy | TaskKind::Reverse | TaskKind::Add => {}
            TaskKind::Max => spec.value_range = (1, 50),
            TaskKind::LongCopy => spec.len_range = (1, 40),
            TaskKind::NtmCopy => spec.len_range = (1, 20),
            TaskKind::RepeatCopy => spec.len_range = (1, 10),
            TaskKind::AssocRecall => {
                spec.bits = 6;
                spec.len_range = (3, 3);
            }
            TaskKind::DynNgrams => spec.len_range = (50, 50),
            TaskKind::PrioritySort => spec.len_range = (20, 20),
            TaskKind::OddEven => spec.len_range = (1, 20),
            TaskKind::Sum => {
                spec.len_range = (1, 10);
                spec.value_range = (1, 50);
            }
            TaskKind::Sinusoid => spec.len_range = (100, 100),
        }
        spec
    }
}

/// One generated instance. `mask` flags which target steps are scored and
/// always matches the target length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub meta: Map<String, Value>,
}

impl Sample {
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }

    /// Raw token values stashed by the token-task generators.
    pub fn meta_values(&self, key: &str) -> Vec<u32> {
        self.meta[key]
            .as_array()
            .expect("meta array")
            .iter()
            .map(|v| v.as_u64().expect("integer meta value") as u32)
            .collect()
    }
}

/// Stable seed mixer for per-sample streams (splitmix64 finalizer).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn one_hot(dim: usize, id: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[id] = 1.0;
    v
}

fn draw_len(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(spec.len_range.0..=spec.len_range.1)
}

fn random_bit_row(bits: usize, width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut row = vec![0.0; width];
    for slot in row.iter_mut().take(bits) {
        *slot = f64::from(rng.gen_range(0..=1u8));
    }
    row
}

/// Target rule for the token tasks, on explicit input values. Half-integer
/// outputs (add) are exact in f64.
pub fn discrete_targets(kind: TaskKind, x: &[u32]) -> Vec<f64> {
    let t = x.len();
    match kind {
        TaskKind::Double => x.iter().chain(x).map(|v| f64::from(*v)).collect(),
        TaskKind::Copy | TaskKind::LongCopy => x.iter().map(|v| f64::from(*v)).collect(),
        TaskKind::Reverse => x.iter().rev().map(|v| f64::from(*v)).collect(),
        TaskKind::Add => (1..=t / 2)
            .map(|i| (f64::from(x[i - 1]) + f64::from(x[t - i - 1])) / 2.0)
            .collect(),
        TaskKind::Max => (1..=t / 2)
            .map(|i| f64::from(x[2 * i - 2].max(x[2 * i - 1])))
            .collect(),
        _ => panic!("{kind} is not a token task"),
    }
}

/// Odd-even rule: first half doubles the input, second half counts on from
/// the previous output in steps of two.
pub fn odd_even_targets(x: &[u32]) -> Vec<u32> {
    let l = x.len();
    let mut y = Vec::with_capacity(l);
    for n in 1..=l {
        if n <= l / 2 {
            y.push(2 * x[n - 1]);
        } else if n == 1 {
            y.push(2 * x[0]);
        } else {
            y.push(y[n - 2] + 2);
        }
    }
    y
}

/// Sum rule: pairs the i-th value of the first view with the mirrored
/// value of the second.
pub fn sum_targets(x1: &[u32], x2: &[u32]) -> Vec<u32> {
    assert_eq!(x1.len(), x2.len());
    let l = x1.len();
    (1..=l).map(|i| x1[i - 1] + x2[l - i]).collect()
}

/// Token vocabulary sized to every value the odd-even rule can emit
/// (second-half counting can run past 2·49 up to 118); id 0 is reserved
/// for the decoder start token.
pub const ODD_EVEN_VOCAB: usize = 120;

/// Sum outputs lie in [2,100]; ids map values directly and the size is
/// kept even for the split-head decoders.
pub const SUM_VOCAB: usize = 102;

fn meta_of(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn token_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let (lo, hi) = spec.value_range;
    let t = draw_len(spec, rng);
    let x: Vec<u32> = (0..t).map(|_| rng.gen_range(lo..=hi)).collect();
    let y = discrete_targets(spec.kind, &x);

    let in_dim = (hi - lo + 1) as usize;
    let input = x
        .iter()
        .map(|v| one_hot(in_dim, (v - lo) as usize))
        .collect();
    // The add task emits half-integers, so its output alphabet lives on a
    // half-unit grid; the other tasks reuse the input alphabet.
    let (out_dim, to_id): (usize, fn(f64, u32) -> usize) = if spec.kind == TaskKind::Add {
        (2 * (hi - lo) as usize + 1, |v, lo| {
            (2.0 * v) as usize - 2 * lo as usize
        })
    } else {
        ((hi - lo + 1) as usize, |v, lo| v as usize - lo as usize)
    };
    let target: Vec<Vec<f64>> = y.iter().map(|v| one_hot(out_dim, to_id(*v, lo))).collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(t)),
        ("input_values", json!(x)),
        ("target_values", json!(y)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn ntm_copy_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let bits = spec.bits;
    let width = bits + 2;
    let t = draw_len(spec, rng);
    let items: Vec<Vec<f64>> = (0..t).map(|_| random_bit_row(bits, width, rng)).collect();

    let mut input = Vec::with_capacity(t + 2);
    let mut start = vec![0.0; width];
    start[bits] = 1.0;
    input.push(start);
    input.extend(items.iter().cloned());
    let mut end = vec![0.0; width];
    end[bits + 1] = 1.0;
    input.push(end);

    let target: Vec<Vec<f64>> = items.iter().map(|row| row[..bits].to_vec()).collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(t)),
        ("bits", json!(bits)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn repeat_copy_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let bits = spec.bits;
    let width = bits + 2;
    let t = draw_len(spec, rng);
    let n = rng.gen_range(spec.repeat_range.0..=spec.repeat_range.1);
    let items: Vec<Vec<f64>> = (0..t).map(|_| random_bit_row(bits, width, rng)).collect();

    let mut input = Vec::with_capacity(t + 2);
    let mut start = vec![0.0; width];
    start[bits] = 1.0;
    input.push(start);
    input.extend(items.iter().cloned());
    // The start-of-target step doubles as the repeat-count channel,
    // normalised by the largest trained count.
    let mut marker = vec![0.0; width];
    marker[bits + 1] = n as f64 / spec.repeat_range.1 as f64;
    input.push(marker);

    // Target rows get one extra end-marker channel, raised only on the
    // final step after the n copies.
    let mut target: Vec<Vec<f64>> = Vec::with_capacity(n * t + 1);
    for _ in 0..n {
        for row in &items {
            let mut out = row[..bits].to_vec();
            out.push(0.0);
            target.push(out);
        }
    }
    let mut end_marker = vec![0.0; bits + 1];
    end_marker[bits] = 1.0;
    target.push(end_marker);

    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(t)),
        ("repeats", json!(n)),
        ("bits", json!(bits)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn assoc_recall_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let bits = spec.bits;
    let width = bits + 2;
    let n = rng.gen_range(spec.item_range.0.max(2)..=spec.item_range.1);
    let items: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            (0..spec.item_len)
                .map(|_| random_bit_row(bits, width, rng))
                .collect()
        })
        .collect();
    let query_idx = rng.gen_range(0..n - 1);

    let mut input = Vec::new();
    for item in &items {
        let mut delim = vec![0.0; width];
        delim[bits] = 1.0;
        input.push(delim);
        input.extend(item.iter().cloned());
    }
    let mut query_delim = vec![0.0; width];
    query_delim[bits + 1] = 1.0;
    input.push(query_delim.clone());
    input.extend(items[query_idx].iter().cloned());
    input.push(query_delim);

    let target: Vec<Vec<f64>> = items[query_idx + 1]
        .iter()
        .map(|row| row[..bits].to_vec())
        .collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("n_items", json!(n)),
        ("item_len", json!(spec.item_len)),
        ("bits", json!(bits)),
        ("query", json!(query_idx)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

/// Lookup context for the n-gram table: the six previous bits with the
/// most recent one in the least-significant position.
pub fn ngram_context(bits: &[u8], t: usize) -> usize {
    assert!(t >= 6);
    (1..=6).map(|i| (bits[t - i] as usize) << (i - 1)).sum()
}

fn dyn_ngrams_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let t = draw_len(spec, rng);
    assert!(t > 6, "n-gram sequences need more than six steps");
    let beta = Beta::new(0.5, 0.5).expect("valid beta");
    let table: Vec<f64> = (0..64).map(|_| beta.sample(rng)).collect();

    let mut bits: Vec<u8> = (0..6).map(|_| rng.gen_range(0..=1)).collect();
    for step in 6..t {
        let p = table[ngram_context(&bits, step)];
        bits.push(u8::from(rng.gen_bool(p)));
    }

    let input: Vec<Vec<f64>> = bits.iter().map(|b| vec![f64::from(*b)]).collect();
    let target: Vec<Vec<f64>> = bits[1..].iter().map(|b| vec![f64::from(*b)]).collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(t)),
        ("table", json!(table)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn priority_sort_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let bits = spec.bits;
    // Channels: content, priority, start delimiter, end delimiter.
    let width = bits + 3;
    let n = spec.n_items;
    let k = spec.n_sorted.min(n);
    let items: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|_| {
            (
                random_bit_row(bits, bits, rng),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();

    let mut input = Vec::with_capacity(n + 2);
    let mut start = vec![0.0; width];
    start[bits + 1] = 1.0;
    input.push(start);
    for (content, priority) in &items {
        let mut row = vec![0.0; width];
        row[..bits].copy_from_slice(content);
        row[bits] = *priority;
        input.push(row);
    }
    let mut end = vec![0.0; width];
    end[bits + 2] = 1.0;
    input.push(end);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| items[*b].1.partial_cmp(&items[*a].1).expect("finite"));
    let target: Vec<Vec<f64>> = order[..k].iter().map(|&i| items[i].0.clone()).collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("n_items", json!(n)),
        ("n_sorted", json!(k)),
        ("bits", json!(bits)),
        (
            "priorities",
            json!(items.iter().map(|(_, p)| *p).collect::<Vec<f64>>()),
        ),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn odd_even_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let l = draw_len(spec, rng);
    let mut pool: Vec<u32> = (0..25).map(|i| 2 * i + 1).collect();
    assert!(l <= pool.len(), "odd-even length exceeds the odd pool");
    pool.shuffle(rng);
    let x: Vec<u32> = pool[..l].to_vec();
    let y = odd_even_targets(&x);

    let input = x
        .iter()
        .map(|v| one_hot(ODD_EVEN_VOCAB, *v as usize))
        .collect();
    let target: Vec<Vec<f64>> = y
        .iter()
        .map(|v| one_hot(ODD_EVEN_VOCAB, *v as usize))
        .collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(l)),
        ("input_values", json!(x)),
        ("target_values", json!(y)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn sum_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let (lo, hi) = spec.value_range;
    let l = draw_len(spec, rng);
    let x1: Vec<u32> = (0..l).map(|_| rng.gen_range(lo..=hi)).collect();
    let x2: Vec<u32> = (0..l).map(|_| rng.gen_range(lo..=hi)).collect();
    let y = sum_targets(&x1, &x2);

    // Interleaved single-matrix form for one-stream consumers: value
    // one-hot plus two view-flag channels. The per-view token lists ride
    // in meta for dual-memory models.
    let val_dim = (hi - lo + 1) as usize;
    let width = val_dim + 2;
    let mut input = Vec::with_capacity(2 * l);
    for i in 0..l {
        for (view, x) in [(0usize, &x1), (1usize, &x2)] {
            let mut row = vec![0.0; width];
            row[(x[i] - lo) as usize] = 1.0;
            row[val_dim + view] = 1.0;
            input.push(row);
        }
    }
    let target: Vec<Vec<f64>> = y.iter().map(|v| one_hot(SUM_VOCAB, *v as usize)).collect();
    let mask = vec![true; target.len()];
    let meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("len", json!(l)),
        ("x1_values", json!(x1)),
        ("x2_values", json!(x2)),
        ("target_values", json!(y)),
    ]);
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

fn sinusoid_sample(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Sample {
    let points = draw_len(spec, rng);
    let a = rng.gen_range(spec.amp_range.0..=spec.amp_range.1);
    let f = rng.gen_range(10.0..30.0);
    let phi = rng.gen_range(0.0..100.0);
    let degenerate = a == 0.0;

    let mut xs = Vec::with_capacity(2 * points);
    let mut ys = Vec::with_capacity(2 * points);
    for t in 1..=2 * points {
        let eps1: f64 = rng.gen_range(-1.0..1.0);
        let x = (t as f64 + eps1) / 1000.0;
        xs.push(x);
        ys.push(5.0 + a * (std::f64::consts::TAU * f * x + phi).sin());
    }

    let input: Vec<Vec<f64>> = (0..points)
        .map(|t| {
            let noise = if spec.noisy {
                rng.gen_range(-2.0..2.0)
            } else {
                0.0
            };
            vec![xs[t], ys[t] + noise]
        })
        .collect();
    let target: Vec<Vec<f64>> = (points..2 * points).map(|t| vec![ys[t]]).collect();
    let mask = vec![true; target.len()];
    let mut meta = meta_of(vec![
        ("kind", json!(spec.kind.name())),
        ("amplitude", json!(a)),
        ("frequency", json!(f)),
        ("phase", json!(phi)),
        ("target_xs", json!(&xs[points..])),
    ]);
    if degenerate {
        meta.insert("degenerate".to_string(), json!(true));
    }
    Sample {
        input,
        target,
        mask,
        meta,
    }
}

/// Generates one sample for any atomic task kind.
pub fn generate(spec: &TaskSpec, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        TaskKind::Double
        | TaskKind::Copy
        | TaskKind::Reverse
        | TaskKind::Add
        | TaskKind::Max
        | TaskKind::LongCopy => token_sample(spec, &mut rng),
        TaskKind::NtmCopy => ntm_copy_sample(spec, &mut rng),
        TaskKind::RepeatCopy => repeat_copy_sample(spec, &mut rng),
        TaskKind::AssocRecall => assoc_recall_sample(spec, &mut rng),
        TaskKind::DynNgrams => dyn_ngrams_sample(spec, &mut rng),
        TaskKind::PrioritySort => priority_sort_sample(spec, &mut rng),
        TaskKind::OddEven => odd_even_sample(spec, &mut rng),
        TaskKind::Sum => sum_sample(spec, &mut rng),
        TaskKind::Sinusoid => sinusoid_sample(spec, &mut rng),
    }
}

fn sequencing_code(kind: TaskKind) -> Result<usize, TaskError> {
    match kind {
        TaskKind::NtmCopy => Ok(0),
        TaskKind::RepeatCopy => Ok(1),
        TaskKind::AssocRecall => Ok(2),
        TaskKind::PrioritySort => Ok(3),
        other => Err(TaskError::UnsupportedSubtask(other)),
    }
}

fn pad_rows(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut out = row.clone();
            out.resize(width, 0.0);
            out
        })
        .collect()
}

/// Concatenates subtask instances behind an order-indicator row: position
/// i of the indicator carries (code of the i-th subtask) + 1, which makes
/// distinct orders distinct vectors.
pub fn compose_sequencing(subtasks: &[TaskSpec], seed: u64) -> Result<Sample, TaskError> {
    if subtasks.is_empty() {
        return Err(TaskError::EmptySequencing);
    }
    let codes: Vec<usize> = subtasks
        .iter()
        .map(|s| sequencing_code(s.kind))
        .collect::<Result<_, _>>()?;

    let parts: Vec<Sample> = subtasks
        .iter()
        .enumerate()
        .map(|(i, s)| generate(s, derive_seed(seed, i as u64, 0)))
        .collect();
    let in_width = parts
        .iter()
        .map(|p| p.input.first().map_or(0, Vec::len))
        .max()
        .unwrap()
        .max(subtasks.len());
    let out_width = parts
        .iter()
        .map(|p| p.target.first().map_or(0, Vec::len))
        .max()
        .unwrap();

    let mut indicator = vec![0.0; in_width];
    for (i, code) in codes.iter().enumerate() {
        indicator[i] = (*code + 1) as f64;
    }
    let mut input = vec![indicator];
    let mut target = Vec::new();
    let mut mask = Vec::new();
    let mut kinds = Vec::new();
    for part in &parts {
        input.extend(pad_rows(&part.input, in_width));
        target.extend(pad_rows(&part.target, out_width));
        mask.extend(part.mask.iter().copied());
        kinds.push(part.meta["kind"].clone());
    }
    let meta = meta_of(vec![
        ("kind", json!("sequencing")),
        ("subtasks", Value::Array(kinds)),
        (
            "subtask_targets",
            json!(parts.iter().map(|p| p.target.len()).collect::<Vec<_>>()),
        ),
    ]);
    Ok(Sample {
        input,
        target,
        mask,
        meta,
    })
}

/// One element of a continual-learning stream: a training batch for the
/// current task, or a marker to evaluate all tasks after a boundary.
#[derive(Debug)]
pub enum CurriculumEvent {
    Batch {
        task: usize,
        iter: usize,
        samples: Vec<Sample>,
    },
    Eval {
        after_task: usize,
    },
}

/// Task-by-task batch stream with an evaluation marker after each task.
pub struct Curriculum {
    order: Vec<TaskSpec>,
    iters_per_task: usize,
    batch: usize,
    seed: u64,
    pos: usize,
}

/// The published scale for the four-task continual run: total iterations
/// and batch size.
pub fn curriculum_paper_scale() -> (usize, usize) {
    (20_000, 16)
}

pub fn continual_curriculum(
    order: &[TaskSpec],
    iters_per_task: usize,
    batch: usize,
    seed: u64,
) -> Curriculum {
    assert!(iters_per_task >= 1);
    Curriculum {
        order: order.to_vec(),
        iters_per_task,
        batch,
        seed,
        pos: 0,
    }
}

impl Iterator for Curriculum {
    type Item = CurriculumEvent;

    fn next(&mut self) -> Option<CurriculumEvent> {
        let per_task = self.iters_per_task + 1;
        let task = self.pos / per_task;
        let step = self.pos % per_task;
        if task >= self.order.len() {
            return None;
        }
        self.pos += 1;
        if step == self.iters_per_task {
            return Some(CurriculumEvent::Eval { after_task: task });
        }
        let samples = (0..self.batch)
            .map(|k| {
                let seed = derive_seed(
                    self.seed,
                    (task * self.iters_per_task + step) as u64,
                    k as u64,
                );
                generate(&self.order[task], seed)
            })
            .collect();
        Some(CurriculumEvent::Batch {
            task,
            iter: step,
            samples,
        })
    }
}

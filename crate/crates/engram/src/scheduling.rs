//! Write scheduling: when memory writes happen, decoupled from how.
//!
//! Policies: regular (every step), random (Bernoulli per step), uniform
//! (every floor(T/(D+1)) steps — the contribution-maximizing intervals),
//! cached-uniform (uniform plus a cache of controller states attended over
//! at each write), and write-protected decoding (no writes past the input).
//!
//! The uniform rule is applied literally: writes at `t = floor(T/(D+1))*k`,
//! which lands D+1 events for D slots (the final write at t=T overwrites);
//! `drop_final_overwrite` trims that last event for the other reading.

use crate::dnc::{parse_interface, read_step, write_step, BoundDnc, DncModel, DncRolloutState};
use crate::ntm::write_slot;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Shape, Tape, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    Regular,
    Random,
    Uniform,
    CachedUniform,
    WriteProtected,
    Explicit,
}

#[derive(thiserror::Error, Debug)]
pub enum ScheduleError {
    #[error("uniform writing needs D+1 <= T, got D={d}, T={t}")]
    TooManySlots { d: usize, t: usize },
    #[error("sequence length must be >= 1")]
    EmptySequence,
    #[error("D must be >= 1, got {0}")]
    NoSlots(usize),
    #[error("cache size {l} exceeds the optimal interval {max}")]
    CacheTooLarge { l: usize, max: usize },
    #[error("explicit schedules are built with WriteSchedule::from_steps")]
    ExplicitPolicy,
}

/// Sorted set of writing timesteps in `1..=T`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct WriteSchedule {
    pub policy: SchedulePolicy,
    pub t_len: usize,
    pub write_steps: Vec<usize>,
}

impl WriteSchedule {
    /// Wraps an explicit step list (strictly increasing, within `1..=T`).
    pub fn from_steps(t_len: usize, write_steps: Vec<usize>) -> Self {
        assert!(
            write_steps.windows(2).all(|w| w[0] < w[1]),
            "write steps must be strictly increasing"
        );
        if let (Some(first), Some(last)) = (write_steps.first(), write_steps.last()) {
            assert!(*first >= 1 && *last <= t_len, "write steps must lie in 1..=T");
        }
        WriteSchedule { policy: SchedulePolicy::Explicit, t_len, write_steps }
    }

    pub fn is_write_step(&self, t: usize) -> bool {
        self.write_steps.binary_search(&t).is_ok()
    }

    pub fn writes(&self) -> usize {
        self.write_steps.len()
    }

    /// Drops a final write at t=T (the overwriting event the literal uniform
    /// rule produces when (D+1) | T).
    pub fn drop_final_overwrite(mut self) -> Self {
        if self.write_steps.last() == Some(&self.t_len) && self.write_steps.len() > 1 {
            self.write_steps.pop();
        }
        self
    }
}

/// Builds a schedule. `d` is the slot count; `cache` (CUW interval) defaults
/// to the optimal interval floor(T/(D+1)); `seed` drives the random policy.
pub fn make_schedule(
    policy: SchedulePolicy,
    t_len: usize,
    d: usize,
    cache: Option<usize>,
    seed: Option<u64>,
) -> Result<WriteSchedule, ScheduleError> {
    if t_len == 0 {
        return Err(ScheduleError::EmptySequence);
    }
    if d == 0 {
        return Err(ScheduleError::NoSlots(d));
    }
    let steps = match policy {
        SchedulePolicy::Explicit => return Err(ScheduleError::ExplicitPolicy),
        SchedulePolicy::Regular => (1..=t_len).collect(),
        SchedulePolicy::WriteProtected => {
            let l_in = cache.unwrap_or(t_len).min(t_len);
            (1..=l_in).collect()
        }
        SchedulePolicy::Random => {
            if d + 1 > t_len {
                return Err(ScheduleError::TooManySlots { d, t: t_len });
            }
            let p = (d + 1) as f64 / t_len as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            (1..=t_len).filter(|_| rng.gen_range(0.0..1.0) < p).collect()
        }
        SchedulePolicy::Uniform | SchedulePolicy::CachedUniform => {
            if d + 1 > t_len {
                return Err(ScheduleError::TooManySlots { d, t: t_len });
            }
            let optimal = t_len / (d + 1);
            let interval = match cache {
                Some(l) if policy == SchedulePolicy::CachedUniform => {
                    if l == 0 || l > optimal {
                        return Err(ScheduleError::CacheTooLarge { l, max: optimal });
                    }
                    l
                }
                _ => optimal,
            };
            (1..=t_len).filter(|t| t % interval == 0).collect()
        }
    };
    Ok(WriteSchedule { policy, t_len, write_steps: steps })
}

/// Local attention over cached controller states:
/// `alpha = softmax_j(v . tanh(W h + U d_j + V r))`, `a = sum_j alpha_j d_j`.
#[derive(Clone, Debug)]
pub struct CacheAttention {
    pub hidden_size: usize,
    pub read_size: usize,
    pub attn_size: usize,
    w: ParamId,
    u: ParamId,
    v_read: ParamId,
    v_score: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundCacheAttention {
    w: TensorId,
    u: TensorId,
    v_read: TensorId,
    v_score: TensorId,
}

impl CacheAttention {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        hidden_size: usize,
        read_size: usize,
        attn_size: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{prefix}.w"), Shape::Matrix(attn_size, hidden_size), rng);
        let u = store.add_uniform(format!("{prefix}.u"), Shape::Matrix(attn_size, hidden_size), rng);
        let v_read = store.add_uniform(format!("{prefix}.v_read"), Shape::Matrix(attn_size, read_size), rng);
        let v_score = store.add_uniform(format!("{prefix}.v_score"), Shape::Vector(attn_size), rng);
        CacheAttention { hidden_size, read_size, attn_size, w, u, v_read, v_score }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundCacheAttention {
        BoundCacheAttention {
            w: store.bind(tape, self.w),
            u: store.bind(tape, self.u),
            v_read: store.bind(tape, self.v_read),
            v_score: store.bind(tape, self.v_score),
        }
    }

    pub fn attend(
        &self,
        tape: &mut Tape,
        bound: &BoundCacheAttention,
        cache: &[TensorId],
        h: TensorId,
        r: TensorId,
    ) -> TensorId {
        assert!(!cache.is_empty(), "attention over an empty cache");
        let wh = tape.matvec(bound.w, h);
        let vr = tape.matvec(bound.v_read, r);
        let base = tape.add(wh, vr);
        let mut scores = Vec::with_capacity(cache.len());
        for d in cache {
            let ud = tape.matvec(bound.u, *d);
            let pre = tape.add(base, ud);
            let act = tape.tanh(pre);
            scores.push(tape.dot(bound.v_score, act));
        }
        let e = tape.concat(&scores);
        let alpha = tape.softmax(e);
        let rows = tape.concat_rows(cache);
        let rows_t = tape.transpose(rows);
        tape.matvec(rows_t, alpha)
    }
}

/// The memory-facing half of a MANN, as the cached-writing loop sees it.
pub trait CuwHooks {
    /// `h_t = f_h(h_ctx, r_prev, x)` where `h_ctx` is `h_{t-1}` on plain
    /// steps and the cache-attended state on write steps.
    fn control(&mut self, tape: &mut Tape, h_ctx: TensorId, r_prev: TensorId, x: TensorId) -> TensorId;
    /// `M_t = f_w(o_t, M_{t-1})` against internal memory state.
    fn write(&mut self, tape: &mut Tape, o: TensorId);
    /// `r_t = f_r(o_t, M_t)`.
    fn read(&mut self, tape: &mut Tape, o: TensorId) -> TensorId;
}

/// One cached-uniform-writing step. Pushes `h_prev` into the cache; at write
/// steps (t mod L == 0) attends over the cache, steps the controller from the
/// attended state, writes, reads, and clears the cache; otherwise runs a
/// controller-only step with the read value frozen.
#[allow(clippy::too_many_arguments)]
pub fn cuw_step<M: CuwHooks>(
    tape: &mut Tape,
    cache: &mut Vec<TensorId>,
    capacity: usize,
    attn: &CacheAttention,
    attn_bound: &BoundCacheAttention,
    model: &mut M,
    h_prev: TensorId,
    r_prev: TensorId,
    x: TensorId,
    t: usize,
) -> (TensorId, TensorId, bool) {
    assert!(capacity >= 1, "cache capacity must be positive");
    assert!(t >= 1, "timesteps are 1-based");
    cache.push(h_prev);
    debug_assert!(cache.len() <= capacity, "cache overflow: missed a write step");
    if t % capacity == 0 {
        let a = attn.attend(tape, attn_bound, cache, h_prev, r_prev);
        let h = model.control(tape, a, r_prev, x);
        model.write(tape, h);
        let r = model.read(tape, h);
        cache.clear();
        (h, r, true)
    } else {
        let h = model.control(tape, h_prev, r_prev, x);
        (h, r_prev, false)
    }
}

/// NTM-style write that is a no-op after the input phase (`t > l_in`).
pub fn write_protected_update(
    tape: &mut Tape,
    mem: TensorId,
    w: TensorId,
    e: TensorId,
    v: TensorId,
    t: usize,
    l_in: usize,
) -> TensorId {
    assert!(t >= 1, "timesteps are 1-based");
    if t <= l_in {
        write_slot(tape, mem, w, e, v)
    } else {
        mem
    }
}

/// DNC whose write phase fires only on scheduled steps; reads run every
/// step. Skipped steps freeze memory, usage, precedence, and linkage.
#[derive(Clone, Debug)]
pub struct ScheduledDnc {
    pub dnc: DncModel,
    pub schedule: WriteSchedule,
}

impl ScheduledDnc {
    pub fn new(dnc: DncModel, schedule: WriteSchedule) -> Self {
        ScheduledDnc { dnc, schedule }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundDnc {
        self.dnc.bind(tape, store)
    }

    /// One step at (1-based) time `t`.
    pub fn step_at(
        &self,
        tape: &mut Tape,
        bound: &BoundDnc,
        state: DncRolloutState,
        x: TensorId,
        t: usize,
    ) -> (DncRolloutState, TensorId) {
        let cfg = &self.dnc.cfg;
        let mut ctrl_in = vec![x];
        ctrl_in.extend(state.memory.reads.iter().copied());
        let ctrl_x = tape.concat(&ctrl_in);
        let lstm = self.dnc.controller.step(tape, &bound.controller, ctrl_x, state.lstm);
        let xi = self.dnc.interface.apply(tape, &bound.interface, lstm.h);
        let emit = parse_interface(tape, xi, cfg.word, cfg.read_heads);
        let after_write = if self.schedule.is_write_step(t) {
            write_step(tape, &state.memory, &emit, cfg.linkage)
        } else {
            state.memory
        };
        let memory = read_step(tape, &after_write, &emit, cfg.linkage);
        let mut out_in = vec![lstm.h];
        out_in.extend(memory.reads.iter().copied());
        let out_x = tape.concat(&out_in);
        let out = self.dnc.output.apply(tape, &bound.output, out_x);
        (DncRolloutState { memory, lstm }, out)
    }

    pub fn forward_seq(&self, tape: &mut Tape, bound: &BoundDnc, inputs: &[Vec<f64>]) -> Vec<TensorId> {
        let mut state = self.dnc.initial_state(tape);
        let mut outs = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            let xt = tape.leaf_vec(x);
            let (next, o) = self.step_at(tape, bound, state, xt, i + 1);
            state = next;
            outs.push(o);
        }
        outs
    }
}

/// DNC under cached uniform writing: controller states accumulate in a cache
/// of size L; every L steps the attended representative state drives one
/// write+read, then the cache clears. Reads are frozen between writes.
#[derive(Clone, Debug)]
pub struct CuwDnc {
    pub dnc: DncModel,
    pub attn: CacheAttention,
    pub cache_size: usize,
}

pub struct BoundCuwDnc {
    pub dnc: BoundDnc,
    pub attn: BoundCacheAttention,
}

impl CuwDnc {
    pub fn init(
        store: &mut ParamStore,
        cfg: crate::dnc::DncConfig,
        cache_size: usize,
        attn_size: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(cache_size >= 1, "cache capacity must be positive");
        let read_size = cfg.read_heads * cfg.word;
        let hidden = cfg.hidden_size;
        let dnc = DncModel::init(store, cfg, rng);
        let attn = CacheAttention::init(store, "cuw.attn", hidden, read_size, attn_size, rng);
        CuwDnc { dnc, attn, cache_size }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundCuwDnc {
        BoundCuwDnc { dnc: self.dnc.bind(tape, store), attn: self.attn.bind(tape, store) }
    }

    pub fn forward_seq(&self, tape: &mut Tape, bound: &BoundCuwDnc, inputs: &[Vec<f64>]) -> Vec<TensorId> {
        let cfg = &self.dnc.cfg;
        let mut state = self.dnc.initial_state(tape);
        let mut cache: Vec<TensorId> = Vec::with_capacity(self.cache_size);
        let mut outs = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            let t = i + 1;
            let xt = tape.leaf_vec(x);
            cache.push(state.lstm.h);
            let reads_cat = tape.concat(&state.memory.reads);
            let lstm = if t % self.cache_size == 0 {
                let a = self.attn.attend(tape, &bound.attn, &cache, state.lstm.h, reads_cat);
                let mut ctrl_in = vec![xt];
                ctrl_in.extend(state.memory.reads.iter().copied());
                let ctrl_x = tape.concat(&ctrl_in);
                let attended = crate::controllers::LstmState { h: a, c: state.lstm.c };
                self.dnc.controller.step(tape, &bound.dnc.controller, ctrl_x, attended)
            } else {
                let mut ctrl_in = vec![xt];
                ctrl_in.extend(state.memory.reads.iter().copied());
                let ctrl_x = tape.concat(&ctrl_in);
                self.dnc.controller.step(tape, &bound.dnc.controller, ctrl_x, state.lstm)
            };
            let memory = if t % self.cache_size == 0 {
                let xi = self.dnc.interface.apply(tape, &bound.dnc.interface, lstm.h);
                let emit = parse_interface(tape, xi, cfg.word, cfg.read_heads);
                let after_write = write_step(tape, &state.memory, &emit, cfg.linkage);
                let m = read_step(tape, &after_write, &emit, cfg.linkage);
                cache.clear();
                m
            } else {
                state.memory
            };
            let mut out_in = vec![lstm.h];
            out_in.extend(memory.reads.iter().copied());
            let out_x = tape.concat(&out_in);
            outs.push(self.dnc.output.apply(tape, &bound.dnc.output, out_x));
            state = DncRolloutState { memory, lstm };
        }
        outs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_schedule_hand_cases() {
        let s = make_schedule(SchedulePolicy::Uniform, 50, 4, None, None).unwrap();
        assert_eq!(s.write_steps, vec![10, 20, 30, 40, 50]);
        let s = make_schedule(SchedulePolicy::Uniform, 30, 14, None, None).unwrap();
        assert_eq!(s.write_steps, (1..=15).map(|k| 2 * k).collect::<Vec<_>>());
        let s = make_schedule(SchedulePolicy::Regular, 5, 1, None, None).unwrap();
        assert_eq!(s.write_steps, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn uniform_rejects_more_slots_than_steps() {
        let err = make_schedule(SchedulePolicy::Uniform, 3, 3, None, None).unwrap_err();
        assert!(matches!(err, ScheduleError::TooManySlots { .. }));
    }

    #[test]
    fn uniform_interval_properties() {
        for t in 2..=60 {
            for d in 1..t.min(12) {
                if d + 1 > t {
                    continue;
                }
                let s = make_schedule(SchedulePolicy::Uniform, t, d, None, None).unwrap();
                let interval = t / (d + 1);
                let mut prev = 0;
                for &step in &s.write_steps {
                    assert_eq!(step - prev, interval, "T={t} D={d}");
                    prev = step;
                }
                assert_eq!(s.writes(), t / interval);
                assert!(s.writes() >= d, "T={t} D={d}: {} writes", s.writes());
            }
        }
    }

    #[test]
    fn drop_final_overwrite_trims_t_end_write() {
        let s = make_schedule(SchedulePolicy::Uniform, 50, 4, None, None).unwrap();
        assert_eq!(s.drop_final_overwrite().write_steps, vec![10, 20, 30, 40]);
        let s = make_schedule(SchedulePolicy::Uniform, 52, 4, None, None).unwrap();
        // last write at 50 < T: nothing to trim
        assert_eq!(s.clone().drop_final_overwrite(), s);
    }

    #[test]
    fn random_schedule_is_seed_reproducible() {
        let a = make_schedule(SchedulePolicy::Random, 40, 3, None, Some(7)).unwrap();
        let b = make_schedule(SchedulePolicy::Random, 40, 3, None, Some(7)).unwrap();
        assert_eq!(a, b);
        let c = make_schedule(SchedulePolicy::Random, 40, 3, None, Some(8)).unwrap();
        assert_ne!(a, c, "different seeds should (here) give different draws");
        assert!(a.write_steps.iter().all(|t| (1..=40).contains(t)));
    }

    #[test]
    fn schedule_serializes_to_json_list() {
        let s = make_schedule(SchedulePolicy::Uniform, 20, 3, None, None).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        let back: WriteSchedule = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        assert!(j.contains("[5,10,15,20]"), "{j}");
    }

    #[test]
    fn write_protected_schedule_stops_at_input_length() {
        let s = make_schedule(SchedulePolicy::WriteProtected, 10, 4, Some(6), None).unwrap();
        assert_eq!(s.write_steps, vec![1, 2, 3, 4, 5, 6]);
    }

    struct MockMann {
        mem: Vec<f64>,
        writes: usize,
    }

    impl CuwHooks for MockMann {
        fn control(&mut self, tape: &mut Tape, h_ctx: TensorId, r_prev: TensorId, x: TensorId) -> TensorId {
            let hx = tape.add(h_ctx, x);
            let s = tape.add(hx, r_prev);
            tape.tanh(s)
        }
        fn write(&mut self, tape: &mut Tape, o: TensorId) {
            self.mem = tape.value(o).to_vec();
            self.writes += 1;
        }
        fn read(&mut self, tape: &mut Tape, _o: TensorId) -> TensorId {
            tape.leaf_vec(&self.mem)
        }
    }

    fn attn_fixture(hidden: usize) -> (ParamStore, CacheAttention) {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let attn = CacheAttention::init(&mut store, "attn", hidden, hidden, 5, &mut rng);
        (store, attn)
    }

    #[test]
    fn cuw_capacity_one_degenerates_to_regular_writing() {
        let (store, attn) = attn_fixture(3);
        let mut t = Tape::new();
        let bound = attn.bind(&mut t, &store);
        let mut model = mock_mann();
        let mut cache = Vec::new();
        let mut h = t.leaf_vec(&[0.1, -0.2, 0.3]);
        let mut r = t.leaf_vec(&[0.0, 0.0, 0.0]);
        for step in 1..=4 {
            let x = t.leaf_vec(&[0.05 * step as f64, 0.0, -0.02]);
            let h_before = t.value(h).to_vec();
            let (h2, r2, wrote) = cuw_step(&mut t, &mut cache, 1, &attn, &bound, &mut model, h, r, x, step);
            assert!(wrote, "L=1 writes every step");
            // singleton cache: attended state is exactly h_prev
            let expect = {
                let mut mock = MockMann { mem: model.mem.clone(), writes: 0 };
                let hp = t.leaf_vec(&h_before);
                let xx = t.leaf_vec(&[0.05 * step as f64, 0.0, -0.02]);
                mock.control(&mut t, hp, r, xx)
            };
            for (a, b) in t.value(h2).iter().zip(t.value(expect)) {
                assert!((a - b).abs() < 1e-12);
            }
            h = h2;
            r = r2;
        }
        assert_eq!(model.writes, 4);
    }

    fn mock_mann() -> MockMann {
        MockMann { mem: vec![0.0; 3], writes: 0 }
    }

    #[test]
    fn cuw_non_write_steps_freeze_memory_and_reads() {
        let (store, attn) = attn_fixture(3);
        let mut t = Tape::new();
        let bound = attn.bind(&mut t, &store);
        let mut model = mock_mann();
        model.mem = vec![0.5, 0.6, 0.7];
        let mut cache = Vec::new();
        let h = t.leaf_vec(&[0.1, -0.2, 0.3]);
        let r = t.leaf_vec(&[9.0, 9.0, 9.0]);
        let x = t.leaf_vec(&[0.0, 0.0, 0.0]);
        let mem_before = model.mem.clone();
        let (_, r2, wrote) = cuw_step(&mut t, &mut cache, 3, &attn, &bound, &mut model, h, r, x, 1);
        assert!(!wrote);
        assert_eq!(model.mem, mem_before, "memory must not move on non-write steps");
        assert_eq!(model.writes, 0);
        assert_eq!(r2, r, "read value frozen");
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn cuw_attention_over_identical_states_returns_that_state() {
        let (store, attn) = attn_fixture(3);
        let mut t = Tape::new();
        let bound = attn.bind(&mut t, &store);
        let d = t.leaf_vec(&[0.4, -0.9, 0.2]);
        let cache = vec![d, d, d];
        let h = t.leaf_vec(&[1.0, 1.0, 1.0]);
        let r = t.leaf_vec(&[0.0, 1.0, 0.0]);
        let a = attn.attend(&mut t, &bound, &cache, h, r);
        for (x, y) in t.value(a).iter().zip(t.value(d)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cuw_with_optimal_interval_matches_uniform_schedule() {
        let (store, attn) = attn_fixture(3);
        let t_len = 24;
        let d = 3;
        let sched = make_schedule(SchedulePolicy::Uniform, t_len, d, None, None).unwrap();
        let capacity = t_len / (d + 1);
        let mut t = Tape::new();
        let bound = attn.bind(&mut t, &store);
        let mut model = mock_mann();
        let mut cache = Vec::new();
        let mut h = t.leaf_vec(&[0.0, 0.0, 0.0]);
        let mut r = t.leaf_vec(&[0.0, 0.0, 0.0]);
        let mut wrote_at = Vec::new();
        for step in 1..=t_len {
            let x = t.leaf_vec(&[0.01, 0.0, 0.0]);
            let (h2, r2, wrote) = cuw_step(&mut t, &mut cache, capacity, &attn, &bound, &mut model, h, r, x, step);
            if wrote {
                wrote_at.push(step);
            }
            h = h2;
            r = r2;
        }
        assert_eq!(wrote_at, sched.write_steps);
    }

    #[test]
    fn write_protection_freezes_decode_phase() {
        let mut t = Tape::new();
        let mem = t.leaf_mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = t.leaf_vec(&[0.0, 1.0, 0.0]);
        let e = t.leaf_vec(&[1.0, 1.0]);
        let v = t.leaf_vec(&[8.0, 9.0]);

        let at_boundary = write_protected_update(&mut t, mem, w, e, v, 4, 4);
        assert_eq!(&t.value(at_boundary)[2..4], &[8.0, 9.0], "write at t=L_in lands");

        let mut frozen = mem;
        let mut snapshots = Vec::new();
        for step in 5..15 {
            frozen = write_protected_update(&mut t, frozen, w, e, v, step, 4);
            snapshots.push(t.value(frozen).to_vec());
        }
        for s in &snapshots {
            assert_eq!(s.as_slice(), t.value(mem), "decode must never touch memory");
        }
    }

    #[test]
    fn scheduled_dnc_freezes_memory_between_writes() {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cfg = crate::dnc::DncConfig {
            input_size: 2,
            output_size: 2,
            hidden_size: 5,
            slots: 3,
            word: 2,
            read_heads: 1,
            linkage: true,
        };
        let dnc = DncModel::init(&mut store, cfg, &mut rng);
        let sched = make_schedule(SchedulePolicy::Uniform, 6, 1, None, None).unwrap();
        assert_eq!(sched.write_steps, vec![3, 6]);
        let model = ScheduledDnc::new(dnc, sched);
        let mut t = Tape::new();
        let bound = model.bind(&mut t, &store);
        let mut state = model.dnc.initial_state(&mut t);
        let mut mem_vals = Vec::new();
        for step in 1..=6 {
            let x = t.leaf_vec(&[0.3 * step as f64, -0.1]);
            let (next, _) = model.step_at(&mut t, &bound, state, x, step);
            mem_vals.push(t.value(next.memory.mem).to_vec());
            state = next;
        }
        assert_eq!(mem_vals[0], mem_vals[1], "no write at t=1,2");
        assert_ne!(mem_vals[1], mem_vals[2], "write fires at t=3");
        assert_eq!(mem_vals[2], mem_vals[3], "frozen again");
        assert_eq!(mem_vals[3], mem_vals[4]);
        assert_ne!(mem_vals[4], mem_vals[5], "write fires at t=6");
    }

    #[test]
    fn cuw_dnc_runs_and_writes_on_interval() {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cfg = crate::dnc::DncConfig {
            input_size: 2,
            output_size: 2,
            hidden_size: 5,
            slots: 3,
            word: 2,
            read_heads: 1,
            linkage: true,
        };
        let model = CuwDnc::init(&mut store, cfg, 2, 4, &mut rng);
        let mut t = Tape::new();
        let bound = model.bind(&mut t, &store);
        let inputs: Vec<Vec<f64>> = (0..6).map(|i| vec![0.2 * i as f64, 0.1]).collect();
        let outs = model.forward_seq(&mut t, &bound, &inputs);
        assert_eq!(outs.len(), 6);
    }
}

//! Slot memory with content + location addressing and erase/add writes.
//!
//! The addressing pipeline runs content similarity -> strength softmax ->
//! interpolation gate -> circular shift -> sharpening, all on-tape. On top of
//! the raw ops sits [`NtmModel`]: an LSTM controller reading and writing one
//! shared memory through emission-squashed head interfaces.

use crate::controllers::{BoundLinear, BoundLstm, Linear, LstmCell, LstmState};
use crate::params::ParamStore;
use crate::tape::{Shape, Tape, TensorId};
use rand::Rng;

/// One head's addressing + write emissions, already squashed into range.
#[derive(Clone, Copy, Debug)]
pub struct NtmHeadEmission {
    pub key: TensorId,
    pub beta: TensorId,
    pub gate: TensorId,
    pub shift: TensorId,
    pub gamma: TensorId,
    pub erase: Option<TensorId>,
    pub add: Option<TensorId>,
}

/// Raw interface width for one head: key W, strength, gate, 3 shift logits,
/// sharpen, plus erase/add vectors when the head writes.
pub const fn emission_size(word: usize, writes: bool) -> usize {
    if writes {
        3 * word + 6
    } else {
        word + 6
    }
}

/// Squashes a raw controller slice into a typed emission: beta=softplus,
/// gate=sigmoid, shift=softmax(3), gamma=1+softplus, erase=sigmoid.
pub fn squash_emission(tape: &mut Tape, raw: TensorId, word: usize, writes: bool) -> NtmHeadEmission {
    let need = emission_size(word, writes);
    assert_eq!(tape.shape(raw), Shape::Vector(need), "emission slice width mismatch");
    let key = tape.slice(raw, 0, word);
    let beta_raw = tape.slice(raw, word, 1);
    let beta_v = tape.softplus(beta_raw);
    let beta = tape.pick(beta_v, 0);
    let gate_raw = tape.slice(raw, word + 1, 1);
    let gate_v = tape.sigmoid(gate_raw);
    let gate = tape.pick(gate_v, 0);
    let shift_raw = tape.slice(raw, word + 2, 3);
    let shift = tape.softmax(shift_raw);
    let gamma_raw = tape.slice(raw, word + 5, 1);
    let gamma_sp = tape.softplus(gamma_raw);
    let gamma_v = tape.affine(gamma_sp, 1.0, 1.0);
    let gamma = tape.pick(gamma_v, 0);
    let (erase, add) = if writes {
        let e_raw = tape.slice(raw, word + 6, word);
        let e = tape.sigmoid(e_raw);
        let v = tape.slice(raw, 2 * word + 6, word);
        (Some(e), Some(v))
    } else {
        (None, None)
    };
    NtmHeadEmission { key, beta, gate, shift, gamma, erase, add }
}

/// Content -> gate -> circular shift -> sharpen. Returns a distribution.
pub fn address_head(
    tape: &mut Tape,
    mem: TensorId,
    emit: &NtmHeadEmission,
    w_prev: TensorId,
) -> TensorId {
    let scores = tape.cosine_rows(mem, emit.key);
    let w_content = tape.softmax_with_strength(scores, emit.beta);
    let gated_c = tape.mul_scalar(w_content, emit.gate);
    let gated_prev = {
        let gp = tape.mul_scalar(w_prev, emit.gate);
        tape.sub(w_prev, gp)
    };
    let w_gated = tape.add(gated_c, gated_prev);
    let w_shifted = tape.shift_conv(w_gated, emit.shift);
    tape.sharpen(w_shifted, emit.gamma)
}

/// `M(i) <- M(i) * (1 - w(i) e) + w(i) v` for every slot i.
pub fn write_slot(tape: &mut Tape, mem: TensorId, w: TensorId, e: TensorId, v: TensorId) -> TensorId {
    let (n, word) = match tape.shape(mem) {
        Shape::Matrix(n, w) => (n, w),
        s => panic!("memory must be a matrix, got {s:?}"),
    };
    assert_eq!(tape.shape(w), Shape::Vector(n), "write weights length mismatch");
    assert_eq!(tape.shape(e), Shape::Vector(word), "erase vector width mismatch");
    assert_eq!(tape.shape(v), Shape::Vector(word), "add vector width mismatch");
    assert!(
        tape.value(e).iter().all(|x| (0.0..=1.0).contains(x)),
        "erase vector must lie in [0,1]"
    );
    let we = tape.outer(w, e);
    let keep = tape.affine(we, -1.0, 1.0);
    let kept = tape.mul(mem, keep);
    let wv = tape.outer(w, v);
    tape.add(kept, wv)
}

/// `r = sum_i w(i) M(i)`.
pub fn read_slot(tape: &mut Tape, mem: TensorId, w: TensorId) -> TensorId {
    let n = match tape.shape(mem) {
        Shape::Matrix(n, _) => n,
        s => panic!("memory must be a matrix, got {s:?}"),
    };
    assert_eq!(tape.shape(w), Shape::Vector(n), "read weights length mismatch");
    let mt = tape.transpose(mem);
    tape.matvec(mt, w)
}

pub const MEMORY_INIT: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct NtmConfig {
    pub input_size: usize,
    pub output_size: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    pub read_heads: usize,
    pub write_heads: usize,
}

impl Default for NtmConfig {
    fn default() -> Self {
        NtmConfig {
            input_size: 8,
            output_size: 8,
            hidden_size: 100,
            slots: 32,
            word: 16,
            read_heads: 1,
            write_heads: 1,
        }
    }
}

/// LSTM controller + interface map + shared slot memory + output readout.
#[derive(Clone, Debug)]
pub struct NtmModel {
    pub cfg: NtmConfig,
    pub controller: LstmCell,
    pub interface: Linear,
    pub output: Linear,
}

pub struct BoundNtm {
    pub controller: BoundLstm,
    pub interface: BoundLinear,
    pub output: BoundLinear,
}

/// Per-sequence rollout state; every field lives on the current tape.
pub struct NtmState {
    pub mem: TensorId,
    pub lstm: LstmState,
    pub read_ws: Vec<TensorId>,
    pub write_ws: Vec<TensorId>,
    pub reads: Vec<TensorId>,
}

impl NtmModel {
    pub fn interface_size(cfg: &NtmConfig) -> usize {
        cfg.read_heads * emission_size(cfg.word, false) + cfg.write_heads * emission_size(cfg.word, true)
    }

    pub fn init(store: &mut ParamStore, cfg: NtmConfig, rng: &mut impl Rng) -> Self {
        assert!(cfg.read_heads >= 1 && cfg.write_heads >= 1, "need at least one head of each kind");
        let ctrl_in = cfg.input_size + cfg.read_heads * cfg.word;
        let controller = LstmCell::init(store, "ntm.ctrl", ctrl_in, cfg.hidden_size, rng);
        let interface = Linear::init(store, "ntm.iface", cfg.hidden_size, Self::interface_size(&cfg), rng);
        let out_in = cfg.hidden_size + cfg.read_heads * cfg.word;
        let output = Linear::init(store, "ntm.out", out_in, cfg.output_size, rng);
        NtmModel { cfg, controller, interface, output }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundNtm {
        BoundNtm {
            controller: self.controller.bind(tape, store),
            interface: self.interface.bind(tape, store),
            output: self.output.bind(tape, store),
        }
    }

    /// Fresh rollout state: near-blank memory, uniform head weights, zero reads.
    pub fn initial_state(&self, tape: &mut Tape) -> NtmState {
        let cfg = &self.cfg;
        let mem = tape.leaf_mat(cfg.slots, cfg.word, &vec![MEMORY_INIT; cfg.slots * cfg.word]);
        let uniform = vec![1.0 / cfg.slots as f64; cfg.slots];
        let read_ws = (0..cfg.read_heads).map(|_| tape.leaf_vec(&uniform)).collect();
        let write_ws = (0..cfg.write_heads).map(|_| tape.leaf_vec(&uniform)).collect();
        let reads = (0..cfg.read_heads).map(|_| tape.leaf_vec(&vec![0.0; cfg.word])).collect();
        NtmState { mem, lstm: self.controller.zero_state(tape), read_ws, write_ws, reads }
    }

    /// One controller + memory step. Writes land before reads.
    pub fn step(&self, tape: &mut Tape, bound: &BoundNtm, state: NtmState, x: TensorId) -> (NtmState, TensorId) {
        let cfg = &self.cfg;
        let mut ctrl_in = vec![x];
        ctrl_in.extend(state.reads.iter().copied());
        let ctrl_x = tape.concat(&ctrl_in);
        let lstm = self.controller.step(tape, &bound.controller, ctrl_x, state.lstm);
        let iface = self.interface.apply(tape, &bound.interface, lstm.h);

        let mut off = 0;
        let mut mem = state.mem;
        let mut write_ws = Vec::with_capacity(cfg.write_heads);
        let wsize = emission_size(cfg.word, true);
        for head in 0..cfg.write_heads {
            let raw = tape.slice(iface, off, wsize);
            off += wsize;
            let emit = squash_emission(tape, raw, cfg.word, true);
            let w = address_head(tape, mem, &emit, state.write_ws[head]);
            mem = write_slot(tape, mem, w, emit.erase.unwrap(), emit.add.unwrap());
            write_ws.push(w);
        }

        let mut read_ws = Vec::with_capacity(cfg.read_heads);
        let mut reads = Vec::with_capacity(cfg.read_heads);
        let rsize = emission_size(cfg.word, false);
        for head in 0..cfg.read_heads {
            let raw = tape.slice(iface, off, rsize);
            off += rsize;
            let emit = squash_emission(tape, raw, cfg.word, false);
            let w = address_head(tape, mem, &emit, state.read_ws[head]);
            reads.push(read_slot(tape, mem, w));
            read_ws.push(w);
        }

        let mut out_in = vec![lstm.h];
        out_in.extend(reads.iter().copied());
        let out_x = tape.concat(&out_in);
        let out = self.output.apply(tape, &bound.output, out_x);
        (NtmState { mem, lstm, read_ws, write_ws, reads }, out)
    }

    /// Rolls the model over a whole input sequence, returning raw outputs.
    pub fn forward_seq(&self, tape: &mut Tape, bound: &BoundNtm, inputs: &[Vec<f64>]) -> Vec<TensorId> {
        let mut state = self.initial_state(tape);
        let mut outs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let xt = tape.leaf_vec(x);
            let (next, o) = self.step(tape, bound, state, xt);
            state = next;
            outs.push(o);
        }
        outs
    }
}

//! Dynamic-allocation memory with temporal linkage and three-mode reads.
//!
//! Writing favors unused slots via a differentiable free list (usage /
//! allocation weighting); a precedence vector and link matrix record write
//! order so reads can traverse forward or backward in time as well as by
//! content. The sort inside allocation is straight-through: the ascending
//! usage permutation is treated as constant during backward.
//!
//! The memory update applies the write gate a second time on top of the
//! gated write weight, following the source equations literally; precedence
//! and link updates use the singly-gated weight.

use crate::controllers::{BoundLinear, BoundLstm, Linear, LstmCell, LstmState};
use crate::ntm::{read_slot, MEMORY_INIT};
use crate::params::ParamStore;
use crate::tape::{Shape, Tape, TensorId};
use rand::Rng;

/// All per-sequence memory state; every field lives on the current tape.
#[derive(Clone, Debug)]
pub struct DncState {
    pub mem: TensorId,
    pub usage: TensorId,
    pub precedence: TensorId,
    pub link: TensorId,
    pub w_write: TensorId,
    pub w_reads: Vec<TensorId>,
    pub reads: Vec<TensorId>,
}

/// Typed interface emissions; gates/strengths squashed, keys raw.
#[derive(Clone, Debug)]
pub struct DncEmission {
    pub read_keys: Vec<TensorId>,
    pub read_betas: Vec<TensorId>,
    pub write_key: TensorId,
    pub write_beta: TensorId,
    pub erase: TensorId,
    pub write_vec: TensorId,
    pub free_gates: Vec<TensorId>,
    pub alloc_gate: TensorId,
    pub write_gate: TensorId,
    pub read_modes: Vec<TensorId>,
}

/// Interface width: `R*W + 5R + 3W + 3` for R read heads on W-wide slots.
pub const fn interface_size(word: usize, read_heads: usize) -> usize {
    read_heads * word + 5 * read_heads + 3 * word + 3
}

/// Splits and squashes a raw interface vector.
///
/// Layout (offsets in order): read keys `R*W`, read strengths `R`
/// (softplus), write key `W`, write strength `1` (softplus), erase `W`
/// (sigmoid), write vector `W`, free gates `R` (sigmoid), allocation gate
/// `1` (sigmoid), write gate `1` (sigmoid), read modes `3R` (softmax per
/// head, order backward/content/forward).
pub fn parse_interface(tape: &mut Tape, xi: TensorId, word: usize, read_heads: usize) -> DncEmission {
    assert_eq!(
        tape.shape(xi),
        Shape::Vector(interface_size(word, read_heads)),
        "interface vector width mismatch"
    );
    let mut off = 0;
    let mut take = |tape: &mut Tape, len: usize| {
        let s = tape.slice(xi, off, len);
        off += len;
        s
    };
    let read_keys: Vec<TensorId> = (0..read_heads).map(|_| take(tape, word)).collect();
    let read_betas: Vec<TensorId> = (0..read_heads)
        .map(|_| {
            let raw = take(tape, 1);
            let sp = tape.softplus(raw);
            tape.pick(sp, 0)
        })
        .collect();
    let write_key = take(tape, word);
    let write_beta = {
        let raw = take(tape, 1);
        let sp = tape.softplus(raw);
        tape.pick(sp, 0)
    };
    let erase = {
        let raw = take(tape, word);
        tape.sigmoid(raw)
    };
    let write_vec = take(tape, word);
    let free_gates: Vec<TensorId> = (0..read_heads)
        .map(|_| {
            let raw = take(tape, 1);
            let s = tape.sigmoid(raw);
            tape.pick(s, 0)
        })
        .collect();
    let alloc_gate = {
        let raw = take(tape, 1);
        let s = tape.sigmoid(raw);
        tape.pick(s, 0)
    };
    let write_gate = {
        let raw = take(tape, 1);
        let s = tape.sigmoid(raw);
        tape.pick(s, 0)
    };
    let read_modes: Vec<TensorId> = (0..read_heads)
        .map(|_| {
            let raw = take(tape, 3);
            tape.softmax(raw)
        })
        .collect();
    DncEmission {
        read_keys,
        read_betas,
        write_key,
        write_beta,
        erase,
        write_vec,
        free_gates,
        alloc_gate,
        write_gate,
        read_modes,
    }
}

/// Usage update + allocation weighting.
///
/// `u_new = (u + w^w_prev - u o w^w_prev) * prod_k (1 - f_k w^{r,k}_prev)`,
/// then allocation over ascending `u_new`.
pub fn allocation_step(
    tape: &mut Tape,
    usage: TensorId,
    w_write_prev: TensorId,
    w_reads_prev: &[TensorId],
    free_gates: &[TensorId],
) -> (TensorId, TensorId) {
    assert_eq!(w_reads_prev.len(), free_gates.len(), "one free gate per read head");
    let uw = tape.mul(usage, w_write_prev);
    let s = tape.add(usage, w_write_prev);
    let written = tape.sub(s, uw);
    let mut retained = written;
    for (w_r, f) in w_reads_prev.iter().zip(free_gates) {
        let fw = tape.mul_scalar(*w_r, *f);
        let keep = tape.affine(fw, -1.0, 1.0);
        retained = tape.mul(retained, keep);
    }
    let a = tape.allocation(retained);
    (retained, a)
}

fn content_weights(tape: &mut Tape, mem: TensorId, key: TensorId, beta: TensorId) -> TensorId {
    let scores = tape.cosine_rows(mem, key);
    tape.softmax_with_strength(scores, beta)
}

/// Write phase: usage/allocation, gated write weight, memory update, and
/// (when `linkage`) precedence + link updates with a forced-zero diagonal.
pub fn write_step(tape: &mut Tape, state: &DncState, emit: &DncEmission, linkage: bool) -> DncState {
    let n = match tape.shape(state.mem) {
        Shape::Matrix(n, _) => n,
        s => panic!("memory must be a matrix, got {s:?}"),
    };
    let (usage, a) = allocation_step(tape, state.usage, state.w_write, &state.w_reads, &emit.free_gates);
    let w_cw = content_weights(tape, state.mem, emit.write_key, emit.write_beta);
    let alloc_part = tape.mul_scalar(a, emit.alloc_gate);
    let content_part = {
        let gated = tape.mul_scalar(w_cw, emit.alloc_gate);
        tape.sub(w_cw, gated)
    };
    let blended = tape.add(alloc_part, content_part);
    let w_write = tape.mul_scalar(blended, emit.write_gate);

    // memory update reapplies the write gate on top of w_write
    let m_w = tape.mul_scalar(w_write, emit.write_gate);
    let we = tape.outer(m_w, emit.erase);
    let keep = tape.affine(we, -1.0, 1.0);
    let kept = tape.mul(state.mem, keep);
    let wv = tape.outer(m_w, emit.write_vec);
    let mem = tape.add(kept, wv);

    let (precedence, link) = if linkage {
        let wsum = tape.sum(w_write);
        let scaled_p = {
            let sp = tape.mul_scalar(state.precedence, wsum);
            tape.sub(state.precedence, sp)
        };
        let precedence = tape.add(scaled_p, w_write);

        let ones = tape.leaf_vec(&vec![1.0; n]);
        let wi = tape.outer(w_write, ones);
        let wj = tape.outer(ones, w_write);
        let wsum_mat = tape.add(wi, wj);
        let coef = tape.affine(wsum_mat, -1.0, 1.0);
        let kept_links = tape.mul(state.link, coef);
        let new_links = tape.outer(w_write, state.precedence);
        let link_raw = tape.add(kept_links, new_links);
        let link = tape.zero_diag(link_raw);
        (precedence, link)
    } else {
        (state.precedence, state.link)
    };

    DncState {
        mem,
        usage,
        precedence,
        link,
        w_write,
        w_reads: state.w_reads.clone(),
        reads: state.reads.clone(),
    }
}

/// Read phase: three-mode weights (backward, content, forward) per head
/// against the post-write memory; content-only when linkage is disabled.
pub fn read_step(tape: &mut Tape, state: &DncState, emit: &DncEmission, linkage: bool) -> DncState {
    let mut w_reads = Vec::with_capacity(state.w_reads.len());
    let mut reads = Vec::with_capacity(state.w_reads.len());
    let link_t = if linkage { Some(tape.transpose(state.link)) } else { None };
    for k in 0..state.w_reads.len() {
        let w_cr = content_weights(tape, state.mem, emit.read_keys[k], emit.read_betas[k]);
        let w = if linkage {
            let bwd = tape.matvec(link_t.unwrap(), state.w_reads[k]);
            let fwd = tape.matvec(state.link, state.w_reads[k]);
            let pi1 = tape.pick(emit.read_modes[k], 0);
            let pi2 = tape.pick(emit.read_modes[k], 1);
            let pi3 = tape.pick(emit.read_modes[k], 2);
            let b = tape.mul_scalar(bwd, pi1);
            let c = tape.mul_scalar(w_cr, pi2);
            let f = tape.mul_scalar(fwd, pi3);
            let bc = tape.add(b, c);
            tape.add(bc, f)
        } else {
            w_cr
        };
        reads.push(read_slot(tape, state.mem, w));
        w_reads.push(w);
    }
    DncState { w_reads, reads, ..state.clone() }
}

#[derive(Clone, Debug)]
pub struct DncConfig {
    pub input_size: usize,
    pub output_size: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    pub read_heads: usize,
    pub linkage: bool,
}

impl Default for DncConfig {
    fn default() -> Self {
        DncConfig {
            input_size: 8,
            output_size: 8,
            hidden_size: 100,
            slots: 32,
            word: 16,
            read_heads: 1,
            linkage: true,
        }
    }
}

/// LSTM controller + interface map + DNC memory + output readout.
#[derive(Clone, Debug)]
pub struct DncModel {
    pub cfg: DncConfig,
    pub controller: LstmCell,
    pub interface: Linear,
    pub output: Linear,
}

pub struct BoundDnc {
    pub controller: BoundLstm,
    pub interface: BoundLinear,
    pub output: BoundLinear,
}

pub struct DncRolloutState {
    pub memory: DncState,
    pub lstm: LstmState,
}

impl DncModel {
    pub fn init(store: &mut ParamStore, cfg: DncConfig, rng: &mut impl Rng) -> Self {
        assert!(cfg.read_heads >= 1, "need at least one read head");
        let ctrl_in = cfg.input_size + cfg.read_heads * cfg.word;
        let controller = LstmCell::init(store, "dnc.ctrl", ctrl_in, cfg.hidden_size, rng);
        let interface = Linear::init(
            store,
            "dnc.iface",
            cfg.hidden_size,
            interface_size(cfg.word, cfg.read_heads),
            rng,
        );
        let out_in = cfg.hidden_size + cfg.read_heads * cfg.word;
        let output = Linear::init(store, "dnc.out", out_in, cfg.output_size, rng);
        DncModel { cfg, controller, interface, output }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundDnc {
        BoundDnc {
            controller: self.controller.bind(tape, store),
            interface: self.interface.bind(tape, store),
            output: self.output.bind(tape, store),
        }
    }

    pub fn initial_memory(tape: &mut Tape, slots: usize, word: usize, read_heads: usize) -> DncState {
        let zeros_n = vec![0.0; slots];
        DncState {
            mem: tape.leaf_mat(slots, word, &vec![MEMORY_INIT; slots * word]),
            usage: tape.leaf_vec(&zeros_n),
            precedence: tape.leaf_vec(&zeros_n),
            link: tape.leaf_mat(slots, slots, &vec![0.0; slots * slots]),
            w_write: tape.leaf_vec(&zeros_n),
            w_reads: (0..read_heads).map(|_| tape.leaf_vec(&zeros_n)).collect(),
            reads: (0..read_heads).map(|_| tape.leaf_vec(&vec![0.0; word])).collect(),
        }
    }

    pub fn initial_state(&self, tape: &mut Tape) -> DncRolloutState {
        DncRolloutState {
            memory: Self::initial_memory(tape, self.cfg.slots, self.cfg.word, self.cfg.read_heads),
            lstm: self.controller.zero_state(tape),
        }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        bound: &BoundDnc,
        state: DncRolloutState,
        x: TensorId,
    ) -> (DncRolloutState, TensorId) {
        let mut ctrl_in = vec![x];
        ctrl_in.extend(state.memory.reads.iter().copied());
        let ctrl_x = tape.concat(&ctrl_in);
        let lstm = self.controller.step(tape, &bound.controller, ctrl_x, state.lstm);
        let xi = self.interface.apply(tape, &bound.interface, lstm.h);
        let emit = parse_interface(tape, xi, self.cfg.word, self.cfg.read_heads);
        let after_write = write_step(tape, &state.memory, &emit, self.cfg.linkage);
        let memory = read_step(tape, &after_write, &emit, self.cfg.linkage);

        let mut out_in = vec![lstm.h];
        out_in.extend(memory.reads.iter().copied());
        let out_x = tape.concat(&out_in);
        let out = self.output.apply(tape, &bound.output, out_x);
        (DncRolloutState { memory, lstm }, out)
    }

    pub fn forward_seq(&self, tape: &mut Tape, bound: &BoundDnc, inputs: &[Vec<f64>]) -> Vec<TensorId> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::finite_diff_check;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 4;
    const W: usize = 3;

    fn blank_state(t: &mut Tape) -> DncState {
        DncModel::initial_memory(t, N, W, 1)
    }

    /// Emission that writes `v` purely through allocation with hard gates.
    fn alloc_write_emission(t: &mut Tape, v: &[f64]) -> DncEmission {
        DncEmission {
            read_keys: vec![t.leaf_vec(&vec![1.0; W])],
            read_betas: vec![t.leaf_scalar(1.0)],
            write_key: t.leaf_vec(&vec![1.0; W]),
            write_beta: t.leaf_scalar(1.0),
            erase: t.leaf_vec(&vec![1.0; W]),
            write_vec: t.leaf_vec(v),
            free_gates: vec![t.leaf_scalar(0.0)],
            alloc_gate: t.leaf_scalar(1.0),
            write_gate: t.leaf_scalar(1.0),
            read_modes: vec![t.leaf_vec(&[0.0, 1.0, 0.0])],
        }
    }

    #[test]
    fn allocation_step_hand_cases() {
        let mut t = Tape::new();
        let state = blank_state(&mut t);
        let free = [t.leaf_scalar(0.0)];
        let (u, a) = allocation_step(&mut t, state.usage, state.w_write, &state.w_reads, &free);
        assert_eq!(t.value(u), &[0.0; N]);
        assert_eq!(t.value(a), &[1.0, 0.0, 0.0, 0.0]);

        let ones = t.leaf_vec(&[1.0; N]);
        let w0 = t.leaf_vec(&[0.0; N]);
        let f0 = t.leaf_scalar(0.0);
        let (_, a) = allocation_step(&mut t, ones, w0, &[w0], &[f0]);
        assert_eq!(t.value(a), &[0.0; N]);
    }

    #[test]
    fn usage_grows_with_writes_and_frees_with_reads() {
        let mut t = Tape::new();
        let u = t.leaf_vec(&[0.2, 0.0, 0.0, 0.0]);
        let w_write = t.leaf_vec(&[0.5, 0.0, 0.0, 0.0]);
        let w_read = t.leaf_vec(&[0.5, 0.0, 0.0, 0.0]);
        let f = t.leaf_scalar(1.0);
        let (u_new, _) = allocation_step(&mut t, u, w_write, &[w_read], &[f]);
        // (0.2 + 0.5 - 0.1) * (1 - 0.5) = 0.3
        assert!((t.value(u_new)[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn gateless_write_changes_nothing() {
        let mut t = Tape::new();
        let mut state = blank_state(&mut t);
        let memv: Vec<f64> = (0..N * W).map(|i| i as f64 * 0.1).collect();
        state.mem = t.leaf_mat(N, W, &memv);
        let mut emit = alloc_write_emission(&mut t, &[1.0, 2.0, 3.0]);
        emit.write_gate = t.leaf_scalar(0.0);
        let next = write_step(&mut t, &state, &emit, true);
        assert_eq!(t.value(next.mem), t.value(state.mem));
        assert_eq!(t.value(next.precedence), t.value(state.precedence));
        assert_eq!(t.value(next.link), t.value(state.link));
    }

    #[test]
    fn two_hard_writes_link_b_after_a() {
        let mut t = Tape::new();
        let state = blank_state(&mut t);
        let emit_a = alloc_write_emission(&mut t, &[1.0, 0.0, 0.0]);
        let after_a = write_step(&mut t, &state, &emit_a, true);
        assert_eq!(t.value(after_a.w_write), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.value(after_a.precedence), &[1.0, 0.0, 0.0, 0.0]);

        let emit_b = alloc_write_emission(&mut t, &[0.0, 1.0, 0.0]);
        let after_b = write_step(&mut t, &after_a, &emit_b, true);
        assert_eq!(t.value(after_b.w_write), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.value(after_b.precedence), &[0.0, 1.0, 0.0, 0.0]);
        // L[b=1, a=0] = 1
        let link = t.value(after_b.link);
        assert!((link[1 * N] - 1.0).abs() < 1e-12, "link = {link:?}");
        let total: f64 = link.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "only one link expected");
        // rows written: slot0 = v_a, slot1 = v_b
        assert_eq!(&t.value(after_b.mem)[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&t.value(after_b.mem)[3..6], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn read_modes_select_content_forward_backward() {
        let mut t = Tape::new();
        let state = blank_state(&mut t);
        let emit_a = alloc_write_emission(&mut t, &[1.0, 0.0, 0.0]);
        let after_a = write_step(&mut t, &state, &emit_a, true);
        let emit_b = alloc_write_emission(&mut t, &[0.0, 1.0, 0.0]);
        let after_b = write_step(&mut t, &after_a, &emit_b, true);

        // content mode: key = row 0's content with high strength
        let mut content_emit = alloc_write_emission(&mut t, &[0.0; W]);
        content_emit.read_keys = vec![t.leaf_vec(&[1.0, 0.0, 0.0])];
        content_emit.read_betas = vec![t.leaf_scalar(100.0)];
        content_emit.read_modes = vec![t.leaf_vec(&[0.0, 1.0, 0.0])];
        let got = read_step(&mut t, &after_b, &content_emit, true);
        assert!(t.value(got.w_reads[0])[0] > 0.99, "content read should find slot 0");

        // forward mode from a one-hot at slot 0 lands on slot 1
        let mut fwd_state = after_b.clone();
        fwd_state.w_reads = vec![t.leaf_vec(&[1.0, 0.0, 0.0, 0.0])];
        let mut fwd_emit = alloc_write_emission(&mut t, &[0.0; W]);
        fwd_emit.read_modes = vec![t.leaf_vec(&[0.0, 0.0, 1.0])];
        let got = read_step(&mut t, &fwd_state, &fwd_emit, true);
        let w = t.value(got.w_reads[0]);
        assert!((w[1] - 1.0).abs() < 1e-12, "forward read = {w:?}");
        // and the read value is slot 1's content
        assert!((t.value(got.reads[0])[1] - 1.0).abs() < 1e-12);

        // backward mode from slot 1 lands on slot 0
        let mut bwd_state = after_b.clone();
        bwd_state.w_reads = vec![t.leaf_vec(&[0.0, 1.0, 0.0, 0.0])];
        let mut bwd_emit = alloc_write_emission(&mut t, &[0.0; W]);
        bwd_emit.read_modes = vec![t.leaf_vec(&[1.0, 0.0, 0.0])];
        let got = read_step(&mut t, &bwd_state, &bwd_emit, true);
        let w = t.value(got.w_reads[0]);
        assert!((w[0] - 1.0).abs() < 1e-12, "backward read = {w:?}");
    }

    #[test]
    fn forward_traversal_recovers_write_chain() {
        let mut t = Tape::new();
        let state = blank_state(&mut t);
        let mut cur = state;
        for i in 0..N {
            let mut v = vec![0.0; W];
            v[i % W] = (i + 1) as f64;
            let emit = alloc_write_emission(&mut t, &v);
            cur = write_step(&mut t, &cur, &emit, true);
        }
        // hard-allocation writes fill slots 0,1,2,3 in order
        let mut w = vec![0.0; N];
        w[0] = 1.0;
        let mut w_id = t.leaf_vec(&w);
        for expect in 1..N {
            let next = t.matvec(cur.link, w_id);
            let v = t.value(next);
            let argmax = v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            assert_eq!(argmax, expect, "chain broken at {expect}: {v:?}");
            w_id = next;
        }
    }

    fn random_emission(t: &mut Tape, rng: &mut ChaCha8Rng, word: usize, heads: usize) -> DncEmission {
        let mut dist3 = || {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let modes: Vec<Vec<f64>> = (0..heads).map(|_| dist3()).collect();
        DncEmission {
            read_keys: (0..heads)
                .map(|_| {
                    let k: Vec<f64> = (0..word).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    t.leaf_vec(&k)
                })
                .collect(),
            read_betas: (0..heads).map(|_| t.leaf_scalar(rng.gen_range(0.0..20.0))).collect(),
            write_key: {
                let k: Vec<f64> = (0..word).map(|_| rng.gen_range(-1.0..1.0)).collect();
                t.leaf_vec(&k)
            },
            write_beta: t.leaf_scalar(rng.gen_range(0.0..20.0)),
            erase: {
                let e: Vec<f64> = (0..word).map(|_| rng.gen_range(0.0..1.0)).collect();
                t.leaf_vec(&e)
            },
            write_vec: {
                let v: Vec<f64> = (0..word).map(|_| rng.gen_range(-1.0..1.0)).collect();
                t.leaf_vec(&v)
            },
            free_gates: (0..heads).map(|_| t.leaf_scalar(rng.gen_range(0.0..1.0))).collect(),
            alloc_gate: t.leaf_scalar(rng.gen_range(0.0..1.0)),
            write_gate: t.leaf_scalar(rng.gen_range(0.0..1.0)),
            read_modes: modes.iter().map(|m| t.leaf_vec(m)).collect(),
        }
    }

    fn check_state_invariants(t: &Tape, s: &DncState, n: usize) {
        let u = t.value(s.usage);
        assert!(u.iter().all(|v| (-1e-12..=1.0 + 1e-9).contains(v)), "usage out of range: {u:?}");
        let ww = t.value(s.w_write);
        assert!(ww.iter().all(|v| *v >= -1e-12));
        assert!(ww.iter().sum::<f64>() <= 1.0 + 1e-9);
        for wr in &s.w_reads {
            let w = t.value(*wr);
            assert!(w.iter().all(|v| *v >= -1e-12));
            assert!(w.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
        let l = t.value(s.link);
        assert!(l.iter().all(|v| (-1e-12..=1.0 + 1e-9).contains(v)));
        for i in 0..n {
            assert_eq!(l[i * n + i], 0.0, "diagonal must stay zero");
            let row: f64 = (0..n).map(|j| l[i * n + j]).sum();
            let col: f64 = (0..n).map(|j| l[j * n + i]).sum();
            assert!(row <= 1.0 + 1e-9, "row sum {row}");
            assert!(col <= 1.0 + 1e-9, "col sum {col}");
        }
    }

    #[test]
    fn invariants_hold_over_random_rollouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..150 {
            let n = rng.gen_range(2..7);
            let word = rng.gen_range(2..5);
            let heads = rng.gen_range(1..3);
            let mut t = Tape::new();
            let mut state = DncModel::initial_memory(&mut t, n, word, heads);
            for _ in 0..20 {
                let emit = random_emission(&mut t, &mut rng, word, heads);
                let after = write_step(&mut t, &state, &emit, true);
                state = read_step(&mut t, &after, &emit, true);
                check_state_invariants(&t, &state, n);
            }
        }
    }

    #[test]
    fn three_step_rollout_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let cfg = DncConfig {
            input_size: 3,
            output_size: 3,
            hidden_size: 6,
            slots: 4,
            word: 3,
            read_heads: 1,
            linkage: true,
        };
        let model = DncModel::init(&mut store, cfg, &mut rng);
        let model_ref = &model;
        let store_ref = &store;
        let probe: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = finite_diff_check(
            move |t, x| {
                let bound = model_ref.bind(t, store_ref);
                let mut state = model_ref.initial_state(t);
                let mut sum = None;
                for step in 0..3 {
                    let xt = t.slice(x, step * 3, 3);
                    let (next, o) = model_ref.step(t, &bound, state, xt);
                    state = next;
                    let sq = t.dot(o, o);
                    sum = Some(match sum {
                        None => sq,
                        Some(s) => t.add(s, sq),
                    });
                }
                sum.unwrap()
            },
            Shape::Vector(9),
            &probe,
            1e-5,
        );
        assert!(r.max_rel_err < 1e-4, "dnc rollout rel err {}", r.max_rel_err);
    }

    #[test]
    fn linkage_flag_disables_temporal_reads() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let cfg = DncConfig {
            input_size: 2,
            output_size: 2,
            hidden_size: 5,
            slots: 3,
            word: 2,
            read_heads: 1,
            linkage: false,
        };
        let model = DncModel::init(&mut store, cfg, &mut rng);
        let mut t = Tape::new();
        let bound = model.bind(&mut t, &store);
        let outs = model.forward_seq(&mut t, &bound, &[vec![0.5, -0.5], vec![1.0, 0.0]]);
        assert_eq!(outs.len(), 2);
        // link/precedence never move off their zero init
        let mut state = model.initial_state(&mut t);
        let x = t.leaf_vec(&[0.5, -0.5]);
        let (next, _) = model.step(&mut t, &bound, state, x);
        assert_eq!(t.value(next.memory.link), &[0.0; 9]);
        assert_eq!(t.value(next.memory.precedence), &[0.0; 3]);
        state = next;
        let _ = state;
    }
}

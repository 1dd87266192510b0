//! Two-process sequence models: a dual-controller network whose decoder is
//! locked out of writing, and a dual-memory computer for asynchronous
//! two-view input.
//!
//! The dual-controller model encodes with one LSTM (reading and writing) and
//! decodes with a second LSTM fed its own previous argmax prediction; memory
//! updates route through `write_protected_update`, so everything past the
//! input length leaves the matrix untouched. The dual-memory computer gives
//! each view its own slot memory and encoder. Late fusion keeps reads
//! view-local; early fusion shares one read net over the stacked pair of
//! memories and routes write values through a gated cache so one view can
//! hold content while the other catches up.

use crate::controllers::{BoundLinear, BoundLstm, Linear, LstmCell, LstmState};
use crate::dnc::{allocation_step, DncModel, DncState};
use crate::ntm::read_slot;
use crate::params::{ParamId, ParamStore};
use crate::scheduling::write_protected_update;
use crate::tape::{Shape, Tape, TensorId};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DualError {
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("decode length must be at least 1")]
    ZeroDecodeLen,
    #[error("no view {0}; valid ids are 0 and 1")]
    InvalidView(usize),
    #[error("no episodes to run")]
    NoEpisodes,
}

/// First maximal index; ties resolve to the lowest position.
pub fn argmax_lowest(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v > vals[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// interface emissions shared by both architectures

/// Write-head emission: key, strength, erase, value, free gates, allocation
/// gate, write gate. Raw width `3w + R + 3`.
pub struct WriteEmission {
    pub key: TensorId,
    pub beta: TensorId,
    pub erase: TensorId,
    pub value: TensorId,
    pub free_gates: Vec<TensorId>,
    pub alloc_gate: TensorId,
    pub write_gate: TensorId,
}

pub const fn write_emission_size(word: usize, read_heads: usize) -> usize {
    3 * word + read_heads + 3
}

/// Content-read emission: `R` keys plus `R` softplus strengths.
pub struct ReadEmission {
    pub keys: Vec<TensorId>,
    pub betas: Vec<TensorId>,
}

pub const fn read_emission_size(word: usize, read_heads: usize) -> usize {
    read_heads * (word + 1)
}

pub fn parse_write_emission(tape: &mut Tape, xi: TensorId, word: usize, read_heads: usize) -> WriteEmission {
    assert_eq!(
        tape.shape(xi),
        Shape::Vector(write_emission_size(word, read_heads)),
        "write emission width mismatch"
    );
    let mut off = 0;
    let mut take = |tape: &mut Tape, len: usize| {
        let s = tape.slice(xi, off, len);
        off += len;
        s
    };
    let key = take(tape, word);
    let beta = {
        let raw = take(tape, 1);
        let sp = tape.softplus(raw);
        tape.pick(sp, 0)
    };
    let erase = {
        let raw = take(tape, word);
        tape.sigmoid(raw)
    };
    let value = take(tape, word);
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
    WriteEmission { key, beta, erase, value, free_gates, alloc_gate, write_gate }
}

pub fn parse_read_emission(tape: &mut Tape, xi: TensorId, word: usize, read_heads: usize) -> ReadEmission {
    assert_eq!(
        tape.shape(xi),
        Shape::Vector(read_emission_size(word, read_heads)),
        "read emission width mismatch"
    );
    let mut off = 0;
    let mut take = |tape: &mut Tape, len: usize| {
        let s = tape.slice(xi, off, len);
        off += len;
        s
    };
    let keys: Vec<TensorId> = (0..read_heads).map(|_| take(tape, word)).collect();
    let betas: Vec<TensorId> = (0..read_heads)
        .map(|_| {
            let raw = take(tape, 1);
            let sp = tape.softplus(raw);
            tape.pick(sp, 0)
        })
        .collect();
    ReadEmission { keys, betas }
}

/// Allocation-blended, gate-scaled write weighting over the current state.
fn write_weighting(tape: &mut Tape, state: &DncState, e: &WriteEmission) -> (TensorId, TensorId) {
    let (usage, a) = allocation_step(tape, state.usage, state.w_write, &state.w_reads, &e.free_gates);
    let scores = tape.cosine_rows(state.mem, e.key);
    let w_c = tape.softmax_with_strength(scores, e.beta);
    let alloc_part = tape.mul_scalar(a, e.alloc_gate);
    let gated_c = tape.mul_scalar(w_c, e.alloc_gate);
    let content_part = tape.sub(w_c, gated_c);
    let blended = tape.add(alloc_part, content_part);
    let w_write = tape.mul_scalar(blended, e.write_gate);
    (usage, w_write)
}

/// Doubly write-gated memory update with an explicit write value, so the
/// cache content can stand in for the raw emission value.
pub fn gated_write(tape: &mut Tape, state: &DncState, e: &WriteEmission, value: TensorId) -> DncState {
    let (usage, w_write) = write_weighting(tape, state, e);
    let m_w = tape.mul_scalar(w_write, e.write_gate);
    let we = tape.outer(m_w, e.erase);
    let keep = tape.affine(we, -1.0, 1.0);
    let kept = tape.mul(state.mem, keep);
    let wv = tape.outer(m_w, value);
    let mem = tape.add(kept, wv);
    DncState { mem, usage, w_write, ..state.clone() }
}

/// `c_t = g ∘ c_{t−1} + (1 − g) ∘ v`.
pub fn cache_update(tape: &mut Tape, cache: TensorId, gate: TensorId, value: TensorId) -> TensorId {
    let held = tape.mul(gate, cache);
    let inv = tape.affine(gate, -1.0, 1.0);
    let fresh = tape.mul(inv, value);
    tape.add(held, fresh)
}

fn content_read(tape: &mut Tape, mem: TensorId, key: TensorId, beta: TensorId) -> (TensorId, TensorId) {
    let scores = tape.cosine_rows(mem, key);
    let w = tape.softmax_with_strength(scores, beta);
    (w, read_slot(tape, mem, w))
}

/// Multi-label objective on logits: `Σ_{l∈Y} −log σ(z_l) + Σ_{l∉Y} −log(1−σ(z_l))`,
/// computed through softplus for stability at saturated scores.
pub fn multilabel_loss(tape: &mut Tape, logits: TensorId, labels: &[bool]) -> TensorId {
    assert_eq!(tape.shape(logits).len(), labels.len(), "one label per score");
    let signs: Vec<f64> = labels.iter().map(|&l| if l { -1.0 } else { 1.0 }).collect();
    let sign = tape.leaf_vec(&signs);
    let flipped = tape.mul(logits, sign);
    let sp = tape.softplus(flipped);
    tape.sum(sp)
}

// ---------------------------------------------------------------------------
// dual controller, write-protected decoding

#[derive(Clone, Debug)]
pub struct DcwConfig {
    pub vocab: usize,
    pub emb: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    pub read_heads: usize,
}

/// Encoder/decoder pair over one slot memory. The encoder ingests the input
/// and writes; the decoder runs free, fed its previous argmax, and every
/// decode-phase write collapses to the identity.
#[derive(Clone, Debug)]
pub struct DcwMannModel {
    pub cfg: DcwConfig,
    pub w_e: ParamId,
    pub w_d: ParamId,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub iface: Linear,
    pub output: Linear,
}

pub struct BoundDcw {
    pub w_e: TensorId,
    pub w_d: TensorId,
    pub encoder: BoundLstm,
    pub decoder: BoundLstm,
    pub iface: BoundLinear,
    pub output: BoundLinear,
}

#[derive(Debug)]
pub struct DcwRun {
    pub tokens: Vec<usize>,
    pub logits: Vec<TensorId>,
    pub loss: Option<TensorId>,
    /// Post-step memory matrix at each decode step.
    pub decode_mems: Vec<TensorId>,
}

impl DcwMannModel {
    pub fn init(store: &mut ParamStore, cfg: DcwConfig, rng: &mut impl Rng) -> Self {
        let ctrl_in = cfg.emb + cfg.read_heads * cfg.word;
        let iface_out =
            write_emission_size(cfg.word, cfg.read_heads) + read_emission_size(cfg.word, cfg.read_heads);
        let w_e = store.add_uniform("dcw.emb_e", Shape::Matrix(cfg.vocab, cfg.emb), rng);
        let w_d = store.add_uniform("dcw.emb_d", Shape::Matrix(cfg.vocab, cfg.emb), rng);
        let encoder = LstmCell::init(store, "dcw.enc", ctrl_in, cfg.hidden_size, rng);
        let decoder = LstmCell::init(store, "dcw.dec", ctrl_in, cfg.hidden_size, rng);
        let iface = Linear::init(store, "dcw.iface", cfg.hidden_size, iface_out, rng);
        let output = Linear::init(
            store,
            "dcw.out",
            cfg.hidden_size + cfg.read_heads * cfg.word,
            cfg.vocab,
            rng,
        );
        DcwMannModel { cfg, w_e, w_d, encoder, decoder, iface, output }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundDcw {
        BoundDcw {
            w_e: store.bind(tape, self.w_e),
            w_d: store.bind(tape, self.w_d),
            encoder: self.encoder.bind(tape, store),
            decoder: self.decoder.bind(tape, store),
            iface: self.iface.bind(tape, store),
            output: self.output.bind(tape, store),
        }
    }

    /// One memory access from a controller state: write-protected write at
    /// step `t`, then content reads against the updated matrix.
    fn access(
        &self,
        tape: &mut Tape,
        bound: &BoundDcw,
        state: &DncState,
        h: TensorId,
        t: usize,
        l_in: usize,
    ) -> DncState {
        let (word, r) = (self.cfg.word, self.cfg.read_heads);
        let xi = self.iface.apply(tape, &bound.iface, h);
        let wsize = write_emission_size(word, r);
        let wxi = tape.slice(xi, 0, wsize);
        let rxi = tape.slice(xi, wsize, read_emission_size(word, r));
        let we = parse_write_emission(tape, wxi, word, r);
        let (usage, w_write) = write_weighting(tape, state, &we);
        let mem = write_protected_update(tape, state.mem, w_write, we.erase, we.value, t, l_in);
        let re = parse_read_emission(tape, rxi, word, r);
        let mut w_reads = Vec::with_capacity(r);
        let mut reads = Vec::with_capacity(r);
        for k in 0..r {
            let (w, rd) = content_read(tape, mem, re.keys[k], re.betas[k]);
            w_reads.push(w);
            reads.push(rd);
        }
        DncState { mem, usage, w_write, w_reads, reads, ..state.clone() }
    }

    fn step_output(&self, tape: &mut Tape, bound: &BoundDcw, h: TensorId, mem: &DncState) -> TensorId {
        let mut parts = vec![h];
        parts.extend(mem.reads.iter().copied());
        let cat = tape.concat(&parts);
        self.output.apply(tape, &bound.output, cat)
    }

    /// Encode `input`, then decode `decode_len` steps on self-feedback.
    /// Cross-entropy against `targets` when given.
    pub fn run(
        &self,
        tape: &mut Tape,
        bound: &BoundDcw,
        input: &[usize],
        decode_len: usize,
        targets: Option<&[usize]>,
    ) -> Result<DcwRun, DualError> {
        if input.is_empty() {
            return Err(DualError::EmptyInput);
        }
        if decode_len == 0 {
            return Err(DualError::ZeroDecodeLen);
        }
        if let Some(ts) = targets {
            assert_eq!(ts.len(), decode_len, "one target per decode step");
        }
        let l_in = input.len();
        let mut mem = DncModel::initial_memory(tape, self.cfg.slots, self.cfg.word, self.cfg.read_heads);
        let mut lstm = self.encoder.zero_state(tape);
        for (i, &tok) in input.iter().enumerate() {
            let e = tape.row(bound.w_e, tok);
            let mut parts = vec![e];
            parts.extend(mem.reads.iter().copied());
            let x = tape.concat(&parts);
            lstm = self.encoder.step(tape, &bound.encoder, x, lstm);
            mem = self.access(tape, bound, &mem, lstm.h, i + 1, l_in);
        }

        // the encoder's final state seeds the decoder
        let mut dec = lstm;
        let mut prev = 0usize;
        let mut tokens = Vec::with_capacity(decode_len);
        let mut logits = Vec::with_capacity(decode_len);
        let mut decode_mems = Vec::with_capacity(decode_len);
        let mut nlls = Vec::new();
        for j in 0..decode_len {
            let t = l_in + j + 1;
            let e = tape.row(bound.w_d, prev);
            let mut parts = vec![e];
            parts.extend(mem.reads.iter().copied());
            let x = tape.concat(&parts);
            dec = self.decoder.step(tape, &bound.decoder, x, dec);
            mem = self.access(tape, bound, &mem, dec.h, t, l_in);
            let o = self.step_output(tape, bound, dec.h, &mem);
            let tok = argmax_lowest(tape.value(o));
            if let Some(ts) = targets {
                let lp = tape.log_softmax(o);
                let ll = tape.pick(lp, ts[j]);
                nlls.push(tape.neg(ll));
            }
            tokens.push(tok);
            logits.push(o);
            decode_mems.push(mem.mem);
            prev = tok;
        }
        let loss = if nlls.is_empty() {
            None
        } else {
            let cat = tape.concat(&nlls);
            Some(tape.sum(cat))
        };
        Ok(DcwRun { tokens, logits, loss, decode_mems })
    }

    /// Same-budget comparison: one controller (the encoder cell) drives both
    /// phases and the memory is written on every step, decode included.
    pub fn run_single_controller(
        &self,
        tape: &mut Tape,
        bound: &BoundDcw,
        input: &[usize],
        decode_len: usize,
        targets: Option<&[usize]>,
    ) -> Result<DcwRun, DualError> {
        if input.is_empty() {
            return Err(DualError::EmptyInput);
        }
        if decode_len == 0 {
            return Err(DualError::ZeroDecodeLen);
        }
        if let Some(ts) = targets {
            assert_eq!(ts.len(), decode_len, "one target per decode step");
        }
        let total = input.len() + decode_len;
        let mut mem = DncModel::initial_memory(tape, self.cfg.slots, self.cfg.word, self.cfg.read_heads);
        let mut lstm = self.encoder.zero_state(tape);
        let mut prev = 0usize;
        let mut tokens = Vec::with_capacity(decode_len);
        let mut logits = Vec::with_capacity(decode_len);
        let mut decode_mems = Vec::with_capacity(decode_len);
        let mut nlls = Vec::new();
        for t in 1..=total {
            let e = if t <= input.len() {
                tape.row(bound.w_e, input[t - 1])
            } else {
                tape.row(bound.w_e, prev)
            };
            let mut parts = vec![e];
            parts.extend(mem.reads.iter().copied());
            let x = tape.concat(&parts);
            lstm = self.encoder.step(tape, &bound.encoder, x, lstm);
            // regular writing: the protection boundary sits past the rollout
            mem = self.access(tape, bound, &mem, lstm.h, t, total);
            if t > input.len() {
                let j = t - input.len() - 1;
                let o = self.step_output(tape, bound, lstm.h, &mem);
                let tok = argmax_lowest(tape.value(o));
                if let Some(ts) = targets {
                    let lp = tape.log_softmax(o);
                    let ll = tape.pick(lp, ts[j]);
                    nlls.push(tape.neg(ll));
                }
                tokens.push(tok);
                logits.push(o);
                decode_mems.push(mem.mem);
                prev = tok;
            }
        }
        let loss = if nlls.is_empty() {
            None
        } else {
            let cat = tape.concat(&nlls);
            Some(tape.sum(cat))
        };
        Ok(DcwRun { tokens, logits, loss, decode_mems })
    }
}

// ---------------------------------------------------------------------------
// dual memory computer

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fusion {
    Late,
    Early,
}

#[derive(Clone, Debug)]
pub struct DmncConfig {
    pub vocab_x1: usize,
    pub vocab_x2: usize,
    pub vocab_y: usize,
    pub emb: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    pub read_heads: usize,
    pub fusion: Fusion,
}

/// Two encoders over two memories with a decode stage that reads both.
#[derive(Clone, Debug)]
pub struct DmncModel {
    pub cfg: DmncConfig,
    pub emb_x: [ParamId; 2],
    pub emb_y: ParamId,
    pub encoders: [LstmCell; 2],
    pub decoder: LstmCell,
    pub wifaces: [Linear; 2],
    /// Two read nets in late fusion, a single shared one in early fusion.
    pub rifaces: Vec<Linear>,
    pub cache_gates: [Linear; 2],
    pub out_heads: [Linear; 2],
    pub dec_riface: Linear,
    pub f_d_seq: Linear,
    pub set_w1: Linear,
    pub set_w2: Linear,
    pub set_w3: Linear,
    pub f_d_set: Linear,
}

pub struct BoundDmnc {
    pub emb_x: [TensorId; 2],
    pub emb_y: TensorId,
    pub encoders: [BoundLstm; 2],
    pub decoder: BoundLstm,
    pub wifaces: [BoundLinear; 2],
    pub rifaces: Vec<BoundLinear>,
    pub cache_gates: [BoundLinear; 2],
    pub out_heads: [BoundLinear; 2],
    pub dec_riface: BoundLinear,
    pub f_d_seq: BoundLinear,
    pub set_w1: BoundLinear,
    pub set_w2: BoundLinear,
    pub set_w3: BoundLinear,
    pub f_d_set: BoundLinear,
}

#[derive(Clone, Debug)]
pub struct DmncViewState {
    pub lstm: LstmState,
    pub mem: DncState,
    pub cache: TensorId,
}

#[derive(Clone, Debug)]
pub struct DmncState {
    pub views: Vec<DmncViewState>,
}

/// What the decoder should produce and score.
pub enum DecodeTask<'a> {
    Seq { targets: &'a [usize], teacher_forced: bool },
    Set { labels: &'a [bool] },
}

#[derive(Debug)]
pub struct DmncDecode {
    pub tokens: Vec<usize>,
    pub set_prediction: Option<Vec<bool>>,
    pub logits: Vec<TensorId>,
    pub loss: TensorId,
}

#[derive(Clone)]
pub struct Episode {
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
    pub seq_targets: Option<Vec<usize>>,
    pub set_labels: Option<Vec<bool>>,
    pub teacher_forced: bool,
}

impl DmncModel {
    pub fn init(store: &mut ParamStore, cfg: DmncConfig, rng: &mut impl Rng) -> Self {
        assert!(cfg.vocab_y % 2 == 0, "output vocabulary splits across the two decoder heads");
        let (w, r, h) = (cfg.word, cfg.read_heads, cfg.hidden_size);
        let ctrl_in = cfg.emb + r * w;
        let half = cfg.vocab_y / 2;
        let emb_x = [
            store.add_uniform("dmnc.emb_x1", Shape::Matrix(cfg.vocab_x1, cfg.emb), rng),
            store.add_uniform("dmnc.emb_x2", Shape::Matrix(cfg.vocab_x2, cfg.emb), rng),
        ];
        let emb_y = store.add_uniform("dmnc.emb_y", Shape::Matrix(cfg.vocab_y, cfg.emb), rng);
        let encoders = [
            LstmCell::init(store, "dmnc.enc1", ctrl_in, h, rng),
            LstmCell::init(store, "dmnc.enc2", ctrl_in, h, rng),
        ];
        let decoder = LstmCell::init(store, "dmnc.dec", cfg.emb + 2 * r * w, 2 * h, rng);
        let wifaces = [
            Linear::init(store, "dmnc.wiface1", h, write_emission_size(w, r), rng),
            Linear::init(store, "dmnc.wiface2", h, write_emission_size(w, r), rng),
        ];
        let rifaces = match cfg.fusion {
            Fusion::Late => vec![
                Linear::init(store, "dmnc.riface1", h, read_emission_size(w, r), rng),
                Linear::init(store, "dmnc.riface2", h, read_emission_size(w, r), rng),
            ],
            Fusion::Early => vec![Linear::init(store, "dmnc.riface", h, read_emission_size(w, r), rng)],
        };
        let cache_gates = [
            Linear::init(store, "dmnc.cache1", h, w, rng),
            Linear::init(store, "dmnc.cache2", h, w, rng),
        ];
        let out_heads = [
            Linear::init(store, "dmnc.out1", 2 * h, half, rng),
            Linear::init(store, "dmnc.out2", 2 * h, half, rng),
        ];
        let dec_riface = Linear::init(store, "dmnc.dec_riface", half, read_emission_size(w, r), rng);
        let f_d_seq = Linear::init(store, "dmnc.f_d_seq", 2 * r * w, cfg.vocab_y, rng);
        let set_w1 = Linear::init(store, "dmnc.set_w1", r * w, h, rng);
        let set_w2 = Linear::init(store, "dmnc.set_w2", r * w, h, rng);
        let set_w3 = Linear::init(store, "dmnc.set_w3", 2 * h, h, rng);
        let f_d_set = Linear::init(store, "dmnc.f_d_set", h, cfg.vocab_y, rng);
        DmncModel {
            cfg,
            emb_x,
            emb_y,
            encoders,
            decoder,
            wifaces,
            rifaces,
            cache_gates,
            out_heads,
            dec_riface,
            f_d_seq,
            set_w1,
            set_w2,
            set_w3,
            f_d_set,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundDmnc {
        BoundDmnc {
            emb_x: [store.bind(tape, self.emb_x[0]), store.bind(tape, self.emb_x[1])],
            emb_y: store.bind(tape, self.emb_y),
            encoders: [self.encoders[0].bind(tape, store), self.encoders[1].bind(tape, store)],
            decoder: self.decoder.bind(tape, store),
            wifaces: [self.wifaces[0].bind(tape, store), self.wifaces[1].bind(tape, store)],
            rifaces: self.rifaces.iter().map(|l| l.bind(tape, store)).collect(),
            cache_gates: [self.cache_gates[0].bind(tape, store), self.cache_gates[1].bind(tape, store)],
            out_heads: [self.out_heads[0].bind(tape, store), self.out_heads[1].bind(tape, store)],
            dec_riface: self.dec_riface.bind(tape, store),
            f_d_seq: self.f_d_seq.bind(tape, store),
            set_w1: self.set_w1.bind(tape, store),
            set_w2: self.set_w2.bind(tape, store),
            set_w3: self.set_w3.bind(tape, store),
            f_d_set: self.f_d_set.bind(tape, store),
        }
    }

    pub fn initial_state(&self, tape: &mut Tape) -> DmncState {
        let views = (0..2)
            .map(|v| DmncViewState {
                lstm: self.encoders[v].zero_state(tape),
                mem: DncModel::initial_memory(tape, self.cfg.slots, self.cfg.word, self.cfg.read_heads),
                cache: tape.leaf_vec(&vec![0.0; self.cfg.word]),
            })
            .collect();
        DmncState { views }
    }

    /// Fresh controller states and caches; memories carry over untouched.
    pub fn reset_transients(&self, tape: &mut Tape, state: DmncState) -> DmncState {
        let views = state
            .views
            .into_iter()
            .enumerate()
            .map(|(v, vs)| DmncViewState {
                lstm: self.encoders[v].zero_state(tape),
                cache: tape.leaf_vec(&vec![0.0; self.cfg.word]),
                mem: vs.mem,
            })
            .collect();
        DmncState { views }
    }

    fn stacked_mem(&self, tape: &mut Tape, state: &DmncState) -> TensorId {
        let n = self.cfg.slots;
        let w = self.cfg.word;
        let m1 = tape.reshape(state.views[0].mem.mem, Shape::Vector(n * w));
        let m2 = tape.reshape(state.views[1].mem.mem, Shape::Vector(n * w));
        let cat = tape.concat(&[m1, m2]);
        tape.reshape(cat, Shape::Matrix(2 * n, w))
    }

    /// One encoder step on `view` (0 or 1): controller, gated write (cache
    /// routing in early fusion), then the mode's read.
    pub fn encode_step(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        mut state: DmncState,
        view: usize,
        token: usize,
    ) -> Result<DmncState, DualError> {
        if view > 1 {
            return Err(DualError::InvalidView(view));
        }
        let (w, r, n) = (self.cfg.word, self.cfg.read_heads, self.cfg.slots);
        let x_emb = tape.row(bound.emb_x[view], token);
        let mut parts = vec![x_emb];
        parts.extend(state.views[view].mem.reads.iter().copied());
        let x = tape.concat(&parts);
        let lstm = self.encoders[view].step(tape, &bound.encoders[view], x, state.views[view].lstm);

        let wxi = self.wifaces[view].apply(tape, &bound.wifaces[view], lstm.h);
        let we = parse_write_emission(tape, wxi, w, r);
        let (value, cache) = match self.cfg.fusion {
            Fusion::Late => (we.value, state.views[view].cache),
            Fusion::Early => {
                let raw = self.cache_gates[view].apply(tape, &bound.cache_gates[view], lstm.h);
                let gate = tape.sigmoid(raw);
                let c = cache_update(tape, state.views[view].cache, gate, we.value);
                (c, c)
            }
        };
        let mut mem = gated_write(tape, &state.views[view].mem, &we, value);

        match self.cfg.fusion {
            Fusion::Late => {
                let rxi = self.rifaces[view].apply(tape, &bound.rifaces[view], lstm.h);
                let re = parse_read_emission(tape, rxi, w, r);
                let mut w_reads = Vec::with_capacity(r);
                let mut reads = Vec::with_capacity(r);
                for k in 0..r {
                    let (wt, rd) = content_read(tape, mem.mem, re.keys[k], re.betas[k]);
                    w_reads.push(wt);
                    reads.push(rd);
                }
                mem.w_reads = w_reads;
                mem.reads = reads;
            }
            Fusion::Early => {
                state.views[view].mem = mem.clone();
                let stacked = self.stacked_mem(tape, &state);
                let rxi = self.rifaces[0].apply(tape, &bound.rifaces[0], lstm.h);
                let re = parse_read_emission(tape, rxi, w, r);
                let mut w_reads = Vec::with_capacity(r);
                let mut reads = Vec::with_capacity(r);
                for k in 0..r {
                    let (wt, rd) = content_read(tape, stacked, re.keys[k], re.betas[k]);
                    // own-memory half drives this view's usage bookkeeping
                    w_reads.push(tape.slice(wt, view * n, n));
                    reads.push(rd);
                }
                mem.w_reads = w_reads;
                mem.reads = reads;
            }
        }
        state.views[view] = DmncViewState { lstm, mem, cache };
        Ok(state)
    }

    /// Alternating consumption of both views until exhausted.
    pub fn encode_interleaved(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        mut state: DmncState,
        x1: &[usize],
        x2: &[usize],
    ) -> Result<DmncState, DualError> {
        if x1.is_empty() && x2.is_empty() {
            return Err(DualError::EmptyInput);
        }
        let mut i = 0;
        while i < x1.len() || i < x2.len() {
            if i < x1.len() {
                state = self.encode_step(tape, bound, state, 0, x1[i])?;
            }
            if i < x2.len() {
                state = self.encode_step(tape, bound, state, 1, x2[i])?;
            }
            i += 1;
        }
        Ok(state)
    }

    fn per_memory_reads(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        state: &DmncState,
        o1: TensorId,
        o2: TensorId,
    ) -> (TensorId, TensorId) {
        let (w, r) = (self.cfg.word, self.cfg.read_heads);
        let read_cat = |tape: &mut Tape, o: TensorId, mem: TensorId| {
            let rxi = self.dec_riface.apply(tape, &bound.dec_riface, o);
            let re = parse_read_emission(tape, rxi, w, r);
            let reads: Vec<TensorId> = (0..r)
                .map(|k| content_read(tape, mem, re.keys[k], re.betas[k]).1)
                .collect();
            tape.concat(&reads)
        };
        let r1 = read_cat(tape, o1, state.views[0].mem.mem);
        let r2 = read_cat(tape, o2, state.views[1].mem.mem);
        (r1, r2)
    }

    /// Decoding never writes; both memories stay bit-identical throughout.
    pub fn decode(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        state: &DmncState,
        task: DecodeTask,
    ) -> Result<DmncDecode, DualError> {
        let h0 = tape.concat(&[state.views[0].lstm.h, state.views[1].lstm.h]);
        match task {
            DecodeTask::Set { labels } => {
                let o1 = self.out_heads[0].apply(tape, &bound.out_heads[0], h0);
                let o2 = self.out_heads[1].apply(tape, &bound.out_heads[1], h0);
                let (r1, r2) = self.per_memory_reads(tape, bound, state, o1, o2);
                let a = self.set_w1.apply(tape, &bound.set_w1, r1);
                let b = self.set_w2.apply(tape, &bound.set_w2, r2);
                let c = self.set_w3.apply(tape, &bound.set_w3, h0);
                let ab = tape.add(a, b);
                let abc = tape.add(ab, c);
                let z = self.f_d_set.apply(tape, &bound.f_d_set, abc);
                let loss = multilabel_loss(tape, z, labels);
                let set_prediction = Some(tape.value(z).iter().map(|&v| v > 0.0).collect());
                Ok(DmncDecode { tokens: vec![], set_prediction, logits: vec![z], loss })
            }
            DecodeTask::Seq { targets, teacher_forced } => {
                if targets.is_empty() {
                    return Err(DualError::ZeroDecodeLen);
                }
                let c0 = tape.leaf_vec(&vec![0.0; 2 * self.cfg.hidden_size]);
                let mut dec = LstmState { h: h0, c: c0 };
                let mut r1_prev = tape.concat(&state.views[0].mem.reads);
                let mut r2_prev = tape.concat(&state.views[1].mem.reads);
                let mut prev = 0usize;
                let mut tokens = Vec::with_capacity(targets.len());
                let mut logits = Vec::with_capacity(targets.len());
                let mut nlls = Vec::with_capacity(targets.len());
                for &target in targets {
                    let y_emb = tape.row(bound.emb_y, prev);
                    let x = tape.concat(&[y_emb, r1_prev, r2_prev]);
                    dec = self.decoder.step(tape, &bound.decoder, x, dec);
                    let o1 = self.out_heads[0].apply(tape, &bound.out_heads[0], dec.h);
                    let o2 = self.out_heads[1].apply(tape, &bound.out_heads[1], dec.h);
                    let (r1, r2) = self.per_memory_reads(tape, bound, state, o1, o2);
                    let o_cat = tape.concat(&[o1, o2]);
                    let rd_cat = tape.concat(&[r1, r2]);
                    let fd = self.f_d_seq.apply(tape, &bound.f_d_seq, rd_cat);
                    let z = tape.add(o_cat, fd);
                    let lp = tape.log_softmax(z);
                    let ll = tape.pick(lp, target);
                    nlls.push(tape.neg(ll));
                    let tok = argmax_lowest(tape.value(z));
                    tokens.push(tok);
                    logits.push(z);
                    prev = if teacher_forced { target } else { tok };
                    r1_prev = r1;
                    r2_prev = r2;
                }
                let cat = tape.concat(&nlls);
                let loss = tape.sum(cat);
                Ok(DmncDecode { tokens, set_prediction: None, logits, loss })
            }
        }
    }

    /// Encode + decode of one episode from a given state, no resets.
    pub fn run_episode(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        state: DmncState,
        ep: &Episode,
    ) -> Result<(DmncState, DmncDecode), DualError> {
        let state = self.encode_interleaved(tape, bound, state, &ep.x1, &ep.x2)?;
        let task = if let Some(labels) = &ep.set_labels {
            DecodeTask::Set { labels }
        } else if let Some(targets) = &ep.seq_targets {
            DecodeTask::Seq { targets, teacher_forced: ep.teacher_forced }
        } else {
            return Err(DualError::ZeroDecodeLen);
        };
        let decode = self.decode(tape, bound, &state, task)?;
        Ok((state, decode))
    }

    /// Memories are cleared once at the start and carried across episodes;
    /// controller states and caches reset per episode.
    pub fn persistent_episode_run(
        &self,
        tape: &mut Tape,
        bound: &BoundDmnc,
        episodes: &[Episode],
    ) -> Result<(Vec<DmncDecode>, DmncState), DualError> {
        if episodes.is_empty() {
            return Err(DualError::NoEpisodes);
        }
        let mut state = self.initial_state(tape);
        let mut outcomes = Vec::with_capacity(episodes.len());
        for ep in episodes {
            state = self.reset_transients(tape, state);
            let (next, decode) = self.run_episode(tape, bound, state, ep)?;
            state = next;
            outcomes.push(decode);
        }
        Ok((outcomes, state))
    }
}

// ---------------------------------------------------------------------------
// single-memory comparison model for two-view tasks

#[derive(Clone, Debug)]
pub struct ViewConcatConfig {
    pub vocab_x1: usize,
    pub vocab_x2: usize,
    pub vocab_y: usize,
    pub emb: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    pub read_heads: usize,
}

/// One encoder and one memory over the interleaved view stream.
#[derive(Clone, Debug)]
pub struct ViewConcatBaseline {
    pub cfg: ViewConcatConfig,
    pub emb_x: [ParamId; 2],
    pub emb_y: ParamId,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub wiface: Linear,
    pub riface: Linear,
    pub out_head: Linear,
    pub dec_riface: Linear,
    pub f_d: Linear,
}

pub struct BoundViewConcat {
    pub emb_x: [TensorId; 2],
    pub emb_y: TensorId,
    pub encoder: BoundLstm,
    pub decoder: BoundLstm,
    pub wiface: BoundLinear,
    pub riface: BoundLinear,
    pub out_head: BoundLinear,
    pub dec_riface: BoundLinear,
    pub f_d: BoundLinear,
}

impl ViewConcatBaseline {
    pub fn init(store: &mut ParamStore, cfg: ViewConcatConfig, rng: &mut impl Rng) -> Self {
        let (w, r, h) = (cfg.word, cfg.read_heads, cfg.hidden_size);
        let ctrl_in = cfg.emb + r * w;
        let emb_x = [
            store.add_uniform("vcb.emb_x1", Shape::Matrix(cfg.vocab_x1, cfg.emb), rng),
            store.add_uniform("vcb.emb_x2", Shape::Matrix(cfg.vocab_x2, cfg.emb), rng),
        ];
        let emb_y = store.add_uniform("vcb.emb_y", Shape::Matrix(cfg.vocab_y, cfg.emb), rng);
        let encoder = LstmCell::init(store, "vcb.enc", ctrl_in, h, rng);
        let decoder = LstmCell::init(store, "vcb.dec", ctrl_in, h, rng);
        let wiface = Linear::init(store, "vcb.wiface", h, write_emission_size(w, r), rng);
        let riface = Linear::init(store, "vcb.riface", h, read_emission_size(w, r), rng);
        let out_head = Linear::init(store, "vcb.out", h, cfg.vocab_y, rng);
        let dec_riface = Linear::init(store, "vcb.dec_riface", cfg.vocab_y, read_emission_size(w, r), rng);
        let f_d = Linear::init(store, "vcb.f_d", r * w, cfg.vocab_y, rng);
        ViewConcatBaseline { cfg, emb_x, emb_y, encoder, decoder, wiface, riface, out_head, dec_riface, f_d }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundViewConcat {
        BoundViewConcat {
            emb_x: [store.bind(tape, self.emb_x[0]), store.bind(tape, self.emb_x[1])],
            emb_y: store.bind(tape, self.emb_y),
            encoder: self.encoder.bind(tape, store),
            decoder: self.decoder.bind(tape, store),
            wiface: self.wiface.bind(tape, store),
            riface: self.riface.bind(tape, store),
            out_head: self.out_head.bind(tape, store),
            dec_riface: self.dec_riface.bind(tape, store),
            f_d: self.f_d.bind(tape, store),
        }
    }

    pub fn run_seq(
        &self,
        tape: &mut Tape,
        bound: &BoundViewConcat,
        x1: &[usize],
        x2: &[usize],
        targets: &[usize],
        teacher_forced: bool,
    ) -> Result<DmncDecode, DualError> {
        if x1.is_empty() && x2.is_empty() {
            return Err(DualError::EmptyInput);
        }
        if targets.is_empty() {
            return Err(DualError::ZeroDecodeLen);
        }
        let (w, r) = (self.cfg.word, self.cfg.read_heads);
        let mut mem = DncModel::initial_memory(tape, self.cfg.slots, w, r);
        let mut lstm = self.encoder.zero_state(tape);
        let step = |tape: &mut Tape, mem: &DncState, lstm: LstmState, view: usize, tok: usize| {
            let x_emb = tape.row(bound.emb_x[view], tok);
            let mut parts = vec![x_emb];
            parts.extend(mem.reads.iter().copied());
            let x = tape.concat(&parts);
            let lstm = self.encoder.step(tape, &bound.encoder, x, lstm);
            let wxi = self.wiface.apply(tape, &bound.wiface, lstm.h);
            let we = parse_write_emission(tape, wxi, w, r);
            let mut mem = gated_write(tape, mem, &we, we.value);
            let rxi = self.riface.apply(tape, &bound.riface, lstm.h);
            let re = parse_read_emission(tape, rxi, w, r);
            let mut w_reads = Vec::with_capacity(r);
            let mut reads = Vec::with_capacity(r);
            for k in 0..r {
                let (wt, rd) = content_read(tape, mem.mem, re.keys[k], re.betas[k]);
                w_reads.push(wt);
                reads.push(rd);
            }
            mem.w_reads = w_reads;
            mem.reads = reads;
            (mem, lstm)
        };
        let mut i = 0;
        while i < x1.len() || i < x2.len() {
            if i < x1.len() {
                let (m, l) = step(tape, &mem, lstm, 0, x1[i]);
                mem = m;
                lstm = l;
            }
            if i < x2.len() {
                let (m, l) = step(tape, &mem, lstm, 1, x2[i]);
                mem = m;
                lstm = l;
            }
            i += 1;
        }

        let c0 = tape.leaf_vec(&vec![0.0; self.cfg.hidden_size]);
        let mut dec = LstmState { h: lstm.h, c: c0 };
        let mut r_prev = tape.concat(&mem.reads);
        let mut prev = 0usize;
        let mut tokens = Vec::with_capacity(targets.len());
        let mut logits = Vec::with_capacity(targets.len());
        let mut nlls = Vec::with_capacity(targets.len());
        for &target in targets {
            let y_emb = tape.row(bound.emb_y, prev);
            let x = tape.concat(&[y_emb, r_prev]);
            dec = self.decoder.step(tape, &bound.decoder, x, dec);
            let o = self.out_head.apply(tape, &bound.out_head, dec.h);
            let rxi = self.dec_riface.apply(tape, &bound.dec_riface, o);
            let re = parse_read_emission(tape, rxi, w, r);
            let reads: Vec<TensorId> =
                (0..r).map(|k| content_read(tape, mem.mem, re.keys[k], re.betas[k]).1).collect();
            let rd = tape.concat(&reads);
            let fd = self.f_d.apply(tape, &bound.f_d, rd);
            let z = tape.add(o, fd);
            let lp = tape.log_softmax(z);
            let ll = tape.pick(lp, target);
            nlls.push(tape.neg(ll));
            let tok = argmax_lowest(tape.value(z));
            tokens.push(tok);
            logits.push(z);
            prev = if teacher_forced { target } else { tok };
            r_prev = rd;
        }
        let cat = tape.concat(&nlls);
        let loss = tape.sum(cat);
        Ok(DmncDecode { tokens, set_prediction: None, logits, loss })
    }
}

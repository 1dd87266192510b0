//! Differentiable external-memory toolkit and experiment harness.
//!
//! The crate centers on slot-based external memories driven by recurrent
//! controllers: content/location addressing with read-write heads, dynamic
//! allocation with temporal links, scheduled and cached writing, key-value
//! program memories, variational memory-conditioned decoding, and dual-memory
//! encoder-decoder architectures. Around those sit a small reverse-mode
//! autodiff tape, classic associative-memory baselines, synthetic sequence
//! tasks with exact oracles, capacity/timing analysis tools, and a training
//! harness (optimizers, metrics, checkpoints, deterministic RNG plumbing).
//!
//! Everything is pure Rust over flat `f64` buffers; nothing here talks to a
//! GPU. Scales are deliberately desk-sized: the point is faithful mechanism,
//! inspection, and reproducibility rather than throughput.

pub mod capacity;
pub mod checkpoint;
pub mod classic;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod dnc;
pub mod dual;
pub mod metrics;
pub mod ntm;
pub mod optim;
pub mod params;
pub mod program;
pub mod run;
pub mod scheduling;
pub mod tape;
pub mod tasks;
pub mod variational;

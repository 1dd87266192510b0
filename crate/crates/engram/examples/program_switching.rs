//! Key-value program memory over an NTM core: at every step each head
//! attends over stored parameter blocks ("programs") and runs under the
//! blended weights, so one network can switch behaviors mid-sequence.
//!
//! Shows the per-step program attention under soft lookup and under
//! straight-through Gumbel sampling, which commits to a single program per
//! step while keeping gradients flowing.

use engram::ntm::NtmConfig;
use engram::params::ParamStore;
use engram::program::{LookupMode, NutmModel};
use engram::tape::Tape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn attention_table(tape: &Tape, attns: &[Vec<engram::tape::TensorId>], programs: usize) {
    print!("{:>4}", "t");
    for p in 0..programs {
        print!(" {:>8}", format!("p{p}"));
    }
    println!();
    for (t, heads) in attns.iter().enumerate() {
        print!("{:>4}", t + 1);
        for v in tape.value(heads[0]) {
            print!(" {v:>8.4}");
        }
        println!();
    }
}

fn main() {
    let cfg = NtmConfig {
        input_size: 4,
        output_size: 4,
        hidden_size: 20,
        slots: 8,
        word: 5,
        read_heads: 1,
        write_heads: 1,
    };
    let programs = 3;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = NutmModel::init(&mut store, cfg, programs, 6, &mut rng);

    // two-phase input: one-hot channel 0 for four steps, then channel 3
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|t| {
            let mut r = vec![0.0; 4];
            r[if t < 4 { 0 } else { 3 }] = 1.0;
            r
        })
        .collect();

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, &store);
    let (_, attns) = model.forward_seq(&mut tape, &bound, &rows, &mut LookupMode::Soft);
    println!("soft lookup — write-head program attention:");
    attention_table(&tape, &attns, programs);
    for heads in &attns {
        let s: f64 = tape.value(heads[0]).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "attention must normalize");
    }

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, &store);
    let mut gumbel = ChaCha8Rng::seed_from_u64(99);
    let mut mode = LookupMode::Hard { temperature: 0.5, rng: &mut gumbel };
    let (_, attns) = model.forward_seq(&mut tape, &bound, &rows, &mut mode);
    println!("\nhard (straight-through Gumbel) lookup — one program per step:");
    attention_table(&tape, &attns, programs);
    for heads in &attns {
        let row = tape.value(heads[0]);
        assert!(row.iter().filter(|v| **v == 1.0).count() == 1, "hard pick is one-hot");
    }
}

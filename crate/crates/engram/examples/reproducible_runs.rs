//! The harness's determinism contract: a (config, seed) pair names a run.
//! Training twice produces byte-identical metrics and checkpoints, saved
//! checkpoints restore for evaluation, and a checkpoint refuses to load
//! under a config it was not trained with.

use engram::checkpoint;
use engram::config::{ModelConfig, ModelKind, OptimizerConfig, RunConfig};
use engram::optim::OptimKind;
use engram::run::{run_evaluation, run_training};
use engram::tasks::{TaskKind, TaskSpec};
use std::fs;

fn cfg() -> RunConfig {
    let mut task = TaskSpec::new(TaskKind::NtmCopy);
    task.len_range = (2, 3);
    task.bits = 3;
    RunConfig {
        seed: 21,
        iterations: 5,
        batch_size: 2,
        eval_interval: 5,
        eval_samples: 10,
        out_dir: "target/example-runs/repro".to_string(),
        metrics: vec![],
        wall_clock: false,
        early_stop_bit_accuracy: None,
        model: ModelConfig {
            kind: ModelKind::Dnc,
            hidden_size: 16,
            slots: 8,
            word: 4,
            read_heads: 1,
            write_heads: 1,
            embedding: 0,
            write_budget: None,
            cache_size: None,
            fusion: None,
        },
        task,
        optimizer: OptimizerConfig { kind: OptimKind::Adam, lr: 1e-3, momentum: 0.9, clip: 10.0 },
        desk_scale: None,
    }
}

fn main() {
    let config = cfg();
    println!("config hash: {}", config.hash());

    let first = run_training(&config).expect("first run");
    let metrics_a = fs::read(&first.metrics_path).unwrap();
    let ckpt_a = fs::read(&first.checkpoint_path).unwrap();

    let second = run_training(&config).expect("second run");
    let metrics_b = fs::read(&second.metrics_path).unwrap();
    let ckpt_b = fs::read(&second.checkpoint_path).unwrap();

    println!("metrics byte-identical across reruns:    {}", metrics_a == metrics_b);
    println!("checkpoints byte-identical across reruns: {}", ckpt_a == ckpt_b);
    assert!(metrics_a == metrics_b && ckpt_a == ckpt_b);

    let summary = run_evaluation(&first.checkpoint_path, &config, 20, 123).expect("eval");
    print!("evaluation from the checkpoint (20 fresh samples):");
    for (name, mean) in summary.names.iter().zip(&summary.means) {
        print!("  {name} {mean:.3}");
    }
    println!();

    let mut other = cfg();
    other.seed = 22;
    match checkpoint::load_expecting(&first.checkpoint_path, &other.hash()) {
        Err(checkpoint::CheckpointError::ConfigHash { expected, found }) => {
            println!("foreign config rejected: checkpoint is {found}, config wants {expected}");
        }
        other => panic!("expected a config-hash rejection, got {other:?}"),
    }
}

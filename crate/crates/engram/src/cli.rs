//! Command-line front end: `train` and `eval` drive the harness from a TOML
//! config, `gen` dumps task instances as JSONL, `analyze` brute-forces
//! optimal write schedules, `oracle` reruns the independent numeric checks,
//! and `plot-data` extracts CSV series for offline plotting.
//!
//! Usage errors exit 2 (clap), runtime failures exit 1 with the error chain
//! on stderr.

use crate::capacity::{self, CapacityParams};
use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::run;
use crate::tasks::{derive_seed, discrete_targets, generate, odd_even_targets, sum_targets};
use crate::tasks::{Sample, TaskKind, TaskSpec};
use crate::variational::{d_var_val, gaussian_kl_val, mc_kl, mog_product_oracle};
use crate::variational::{GaussianVal, MixtureVal};
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "engram",
    version,
    about = "slot-memory sequence models with scheduled writing and a deterministic experiment harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train the configured model and write artifacts to the run directory
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on freshly generated data
    Eval(EvalArgs),
    /// Generate task instances and dump them as JSONL
    Gen(GenArgs),
    /// Brute-force the optimal write schedule for a capacity instance
    Analyze(AnalyzeArgs),
    /// Re-run the independent numeric oracles (divergence bound, mixture
    /// product lemma, task generators)
    Oracle(OracleArgs),
    /// Extract CSV series (learning curves, write gates, program usage)
    PlotData(PlotDataArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Run config the checkpoint was trained under
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint file (default: <out_dir>/checkpoint.bin)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of evaluation samples (default: the config's eval_samples)
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for the evaluation stream
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct GenArgs {
    /// Task name (e.g. copy, odd_even, ntm_copy, sum)
    #[arg(long)]
    pub task: String,
    /// Instances to emit
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the minimum sequence length
    #[arg(long)]
    pub len_min: Option<usize>,
    /// Override the maximum sequence length
    #[arg(long)]
    pub len_max: Option<usize>,
    /// Override the content bit width (binary-vector tasks)
    #[arg(long)]
    pub bits: Option<usize>,
    /// Override the largest token value (token tasks)
    #[arg(long)]
    pub value_max: Option<u32>,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Sequence length
    #[arg(long = "T")]
    pub t: usize,
    /// Write budget (slots beyond the final state)
    #[arg(long = "D")]
    pub d: usize,
    /// Per-step retention factor
    #[arg(long)]
    pub lambda: f64,
    /// Per-write capacity constant
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

#[derive(Args)]
pub struct OracleArgs {
    /// Which oracle to run: dvar, mog-product, tasks, or all
    #[arg(long, default_value = "all")]
    pub check: String,
    /// Instances per check
    #[arg(long, default_value_t = 200)]
    pub n: u64,
    /// Monte-Carlo samples per divergence estimate
    #[arg(long, default_value_t = 20000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct PlotDataArgs {
    /// Series to extract: learning-curve, write-gates, or program-usage
    #[arg(long)]
    pub kind: String,
    /// Run directory holding metrics.csv (learning-curve)
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Single metric column to extract (learning-curve; default: all)
    #[arg(long)]
    pub metric: Option<String>,
    /// Run config (write-gates)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trained checkpoint to restore (write-gates; default: fresh weights)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Task driving the traced rollout (program-usage)
    #[arg(long)]
    pub task: Option<String>,
    /// Program memory size (program-usage)
    #[arg(long, default_value_t = 2)]
    pub programs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code().clamp(0, 255) as u8;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gen(a) => gen(a),
        Command::Analyze(a) => analyze(a),
        Command::Oracle(a) => oracle(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn load_config(path: &PathBuf) -> anyhow::Result<RunConfig> {
    Ok(config::load(path)?)
}

fn parse_task(name: &str) -> anyhow::Result<TaskKind> {
    TaskKind::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| {
        let names: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
        anyhow!("unknown task `{name}`; expected one of: {}", names.join(", "))
    })
}

fn write_out(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    let arts = run::run_training(&cfg)?;
    let tag = if arts.early_stopped { " (early stop)" } else { "" };
    println!("trained {} steps{tag}", arts.final_step);
    if let Some(rec) = arts.log.last() {
        let mut line = format!("step {} loss {}", rec.step, rec.loss);
        for (name, v) in arts.log.names().iter().zip(&rec.values) {
            line.push_str(&format!(" {name} {v}"));
        }
        println!("{line}");
    }
    println!("artifacts in {}", arts.out_dir.display());
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.config)?;
    let eff = cfg.effective();
    let ckpt = args
        .checkpoint
        .unwrap_or_else(|| PathBuf::from(&eff.out_dir).join("checkpoint.bin"));
    let n = args.n.unwrap_or(eff.eval_samples);
    let summary = run::run_evaluation(&ckpt, &cfg, n, args.seed)?;
    println!("evaluated {} samples (seed {})", summary.n, args.seed);
    println!("loss {:.6}", summary.mean_loss);
    for ((name, mean), sd) in summary.names.iter().zip(&summary.means).zip(&summary.sds) {
        println!("{name} {mean:.6} ± {sd:.6}");
    }
    Ok(())
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let kind = parse_task(&args.task)?;
    let mut spec = TaskSpec::new(kind);
    if let Some(lo) = args.len_min {
        spec.len_range.0 = lo;
    }
    if let Some(hi) = args.len_max {
        spec.len_range.1 = hi;
    }
    if let Some(bits) = args.bits {
        spec.bits = bits;
    }
    if let Some(hi) = args.value_max {
        spec.value_range.1 = hi;
    }
    let mut lines = String::new();
    for k in 0..args.n {
        let sample = generate(&spec, derive_seed(args.seed, 0, k));
        lines.push_str(&sample.to_jsonl());
        lines.push('\n');
    }
    write_out(&args.out, &lines)
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let params = if args.lambda > 1.0 {
        CapacityParams::new_expansive(args.lambda, args.c, args.t, args.d)?
    } else {
        CapacityParams::new(args.lambda, args.c, args.t, args.d)?
    };
    let best = capacity::brute_force_optimal_schedule(&params)?;
    let bound = capacity::jensen_bound(&params);
    let top = best.first().expect("at least one schedule");
    let steps: Vec<String> = top.schedule.write_steps.iter().map(ToString::to_string).collect();
    println!("T = {}, D = {}, lambda = {}, C = {}", args.t, args.d, args.lambda, args.c);
    println!("optimal write steps: {{{}}}", steps.join(", "));
    println!("intervals: {:?}", top.intervals);
    println!("I(schedule) = {:.12}", top.i_lambda);
    let attained = (bound - top.i_lambda).abs() <= 1e-9 * bound.abs().max(1.0);
    println!(
        "uniform bound = {:.12} ({})",
        bound,
        if attained { "attained" } else { "not attained" }
    );
    for tie in &best[1..] {
        let steps: Vec<String> = tie.schedule.write_steps.iter().map(ToString::to_string).collect();
        println!("tied: {{{}}}", steps.join(", "));
    }
    Ok(())
}

fn random_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> GaussianVal {
    GaussianVal {
        mu: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        sigma: (0..dim).map(|_| rng.gen_range(0.4..1.5)).collect(),
    }
}

fn random_mixture(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> MixtureVal {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureVal {
        pi: raw.iter().map(|w| w / total).collect(),
        comps: (0..k).map(|_| random_gaussian(dim, rng)).collect(),
    }
}

fn oracle_dvar(n: u64, samples: usize, seed: u64) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 3;
    let mut bound_failures = 0u64;
    let mut exact_failures = 0u64;
    let mut singles = 0u64;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..n {
        let f = random_gaussian(dim, &mut rng);
        let k = rng.gen_range(1..=4);
        let g = random_mixture(k, dim, &mut rng);
        let d = d_var_val(&f, &g);
        let (kl, se) = mc_kl(&f, &g, samples, &mut rng);
        let margin = d - (kl - 3.0 * se);
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            bound_failures += 1;
        }
        if k == 1 {
            singles += 1;
            if (d - gaussian_kl_val(&f, &g.comps[0])).abs() >= 1e-10 {
                exact_failures += 1;
            }
        }
    }
    println!(
        "dvar upper bound: {}/{} instances above the MC estimate - 3SE (worst margin {worst_margin:.6})",
        n - bound_failures,
        n
    );
    println!("dvar single-component exactness: {}/{singles} within 1e-10", singles - exact_failures);
    if bound_failures > 0 || exact_failures > 0 {
        bail!("dvar oracle found violations");
    }
    Ok(())
}

fn oracle_mog_product(n: u64, seed: u64) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for i in 0..n {
        let dim = if i % 2 == 0 { 1 } else { 2 };
        let g1 = random_mixture(rng.gen_range(1..=3), dim, &mut rng);
        let g2 = random_mixture(rng.gen_range(1..=3), dim, &mut rng);
        let points = if dim == 1 { 601 } else { 81 };
        let report = mog_product_oracle(&g1, &g2, -6.0, 6.0, points);
        worst = worst.max(report.max_abs_err);
    }
    println!("mixture product lemma: max grid error {worst:.3e} over {n} instances");
    if worst >= 1e-9 {
        bail!("mixture product oracle exceeded 1e-9");
    }
    Ok(())
}

fn meta_floats(sample: &Sample, key: &str) -> Vec<f64> {
    sample.meta[key]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
        .unwrap_or_default()
}

fn sample_consistent(kind: TaskKind, sample: &Sample) -> bool {
    if sample.mask.len() != sample.target.len() {
        return false;
    }
    match kind {
        TaskKind::Double
        | TaskKind::Copy
        | TaskKind::Reverse
        | TaskKind::Add
        | TaskKind::Max
        | TaskKind::LongCopy => {
            let x = sample.meta_values("input_values");
            meta_floats(sample, "target_values") == discrete_targets(kind, &x)
        }
        TaskKind::OddEven => {
            let x = sample.meta_values("input_values");
            odd_even_targets(&x) == sample.meta_values("target_values")
        }
        TaskKind::Sum => {
            let x1 = sample.meta_values("x1_values");
            let x2 = sample.meta_values("x2_values");
            sum_targets(&x1, &x2) == sample.meta_values("target_values")
        }
        // binary-vector tasks: content rows must be exactly 0/1
        _ => sample
            .target
            .iter()
            .flatten()
            .all(|v| *v == 0.0 || *v == 1.0 || kind == TaskKind::Sinusoid),
    }
}

fn oracle_tasks(n: u64, seed: u64) -> anyhow::Result<()> {
    let mut failures = 0u64;
    for kind in TaskKind::ALL {
        let spec = TaskSpec::new(kind);
        let mut bad = 0u64;
        for i in 0..n {
            let s = generate(&spec, derive_seed(seed, 7, i));
            let replay = generate(&spec, derive_seed(seed, 7, i));
            if s != replay || !sample_consistent(kind, &s) {
                bad += 1;
            }
        }
        println!(
            "task {:<13} {}",
            kind.name(),
            if bad == 0 { format!("ok ({n} instances)") } else { format!("{bad} mismatches") }
        );
        failures += bad;
    }
    if failures > 0 {
        bail!("task oracle found {failures} mismatches");
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> anyhow::Result<()> {
    match args.check.as_str() {
        "dvar" => oracle_dvar(args.n, args.samples, args.seed),
        "mog-product" => oracle_mog_product(args.n, args.seed),
        "tasks" => oracle_tasks(args.n, args.seed),
        "all" => {
            oracle_dvar(args.n, args.samples, args.seed)?;
            oracle_mog_product(args.n, args.seed)?;
            oracle_tasks(args.n, args.seed)
        }
        other => bail!("unknown oracle `{other}`; expected dvar, mog-product, tasks, or all"),
    }
}

fn learning_curve(args: &PlotDataArgs) -> anyhow::Result<String> {
    let run_dir = args.run.as_ref().ok_or_else(|| anyhow!("learning-curve needs --run"))?;
    let path = run_dir.join("metrics.csv");
    let csv = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let Some(metric) = &args.metric else {
        return Ok(csv);
    };
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty metrics file"))?;
    let col = header
        .split(',')
        .position(|c| c == metric)
        .ok_or_else(|| anyhow!("no column `{metric}` in {header}"))?;
    let mut out = format!("step,{metric}\n");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        out.push_str(&format!("{},{}\n", fields[0], fields[col]));
    }
    Ok(out)
}

fn write_gates(args: &PlotDataArgs) -> anyhow::Result<String> {
    let config_path = args.config.as_ref().ok_or_else(|| anyhow!("write-gates needs --config"))?;
    let cfg = load_config(config_path)?.effective();
    let mut model = run::build_model(&cfg.model, &cfg.task, cfg.seed)?;
    if let Some(ckpt) = &args.checkpoint {
        checkpoint::load_expecting(ckpt, &cfg.hash())?.restore(&mut model.store)?;
    }
    let sample = generate(&cfg.task, derive_seed(args.seed, 0, 0));
    let trace = run::write_gate_trace(&model, &sample)?;
    let mut out = String::from("step,write_gate\n");
    for (i, g) in trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, g));
    }
    Ok(out)
}

fn program_usage(args: &PlotDataArgs) -> anyhow::Result<String> {
    use crate::ntm::NtmConfig;
    use crate::params::ParamStore;
    use crate::program::{LookupMode, NutmModel};
    use crate::tape::Tape;

    let task = args.task.as_ref().ok_or_else(|| anyhow!("program-usage needs --task"))?;
    let spec = TaskSpec::new(parse_task(task)?);
    let sample = generate(&spec, derive_seed(args.seed, 0, 0));
    let in_dim = sample.input.first().map_or(1, Vec::len);
    let out_dim = sample.target.first().map_or(1, Vec::len);
    let cfg = NtmConfig {
        input_size: in_dim,
        output_size: out_dim,
        hidden_size: 32,
        slots: 16,
        word: 8,
        read_heads: 1,
        write_heads: 1,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let model = NutmModel::init(&mut store, cfg, args.programs, 6, &mut rng);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, &store);
    let (_, attns) = model.forward_seq(&mut tape, &bound, &sample.input, &mut LookupMode::Soft);

    let mut out = String::from("step");
    for p in 0..args.programs {
        out.push_str(&format!(",p{p}"));
    }
    out.push('\n');
    for (t, heads) in attns.iter().enumerate() {
        out.push_str(&format!("{}", t + 1));
        for v in tape.value(heads[0]) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

fn plot_data(args: PlotDataArgs) -> anyhow::Result<()> {
    let content = match args.kind.as_str() {
        "learning-curve" => learning_curve(&args)?,
        "write-gates" => write_gates(&args)?,
        "program-usage" => program_usage(&args)?,
        other => bail!(
            "unknown plot kind `{other}`; expected learning-curve, write-gates, or program-usage"
        ),
    };
    write_out(&args.out, &content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_declaration_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn task_names_round_trip_through_the_parser() {
        for kind in TaskKind::ALL {
            assert_eq!(parse_task(kind.name()).unwrap(), kind);
        }
        assert!(parse_task("no_such_task").is_err());
    }

    #[test]
    fn analyze_finds_the_textbook_schedule() {
        let params = CapacityParams::new(0.8, 1.0, 9, 2).unwrap();
        let best = capacity::brute_force_optimal_schedule(&params).unwrap();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].schedule.write_steps, vec![3, 6]);
    }

    #[test]
    fn gen_is_reproducible_per_seed() {
        let spec = TaskSpec::new(TaskKind::OddEven);
        let a = generate(&spec, derive_seed(1, 0, 0)).to_jsonl();
        let b = generate(&spec, derive_seed(1, 0, 0)).to_jsonl();
        assert_eq!(a, b);
        let c = generate(&spec, derive_seed(2, 0, 0)).to_jsonl();
        assert_ne!(a, c);
    }

    #[test]
    fn task_oracle_accepts_the_generators() {
        oracle_tasks(25, 3).unwrap();
    }

    #[test]
    fn dvar_oracle_accepts_small_instances() {
        oracle_dvar(8, 4000, 5).unwrap();
        oracle_mog_product(6, 5).unwrap();
    }
}

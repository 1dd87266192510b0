//! Prints one instance of every synthetic task: dimensions, a compact render
//! of the first few rows, and the metadata the generators attach.
//!
//! Binary-vector tasks render as bit strings, token tasks as the ids behind
//! their one-hot rows, the sinusoid as (x, y) pairs.

use engram::tasks::{generate, TaskKind, TaskSpec};

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).max_by(|a, b| row[*a].partial_cmp(&row[*b]).unwrap()).unwrap_or(0)
}

fn render(rows: &[Vec<f64>], kind: TaskKind, limit: usize) -> String {
    let shown = rows.iter().take(limit);
    let body: Vec<String> = match kind {
        TaskKind::NtmCopy
        | TaskKind::RepeatCopy
        | TaskKind::AssocRecall
        | TaskKind::DynNgrams
        | TaskKind::PrioritySort => shown
            .map(|r| r.iter().map(|v| if *v >= 0.5 { '1' } else { '0' }).collect())
            .collect(),
        TaskKind::Sinusoid => shown.map(|r| format!("{r:.2?}")).collect(),
        _ => shown.map(|r| argmax(r).to_string()).collect(),
    };
    let ellipsis = if rows.len() > limit { " …" } else { "" };
    format!("{}{}", body.join(" "), ellipsis)
}

fn main() {
    for kind in TaskKind::ALL {
        let mut spec = TaskSpec::new(kind);
        // downscale the long defaults so the gallery stays readable
        let floor = if kind == TaskKind::DynNgrams { 8 } else { 6 };
        spec.len_range = (spec.len_range.0.min(floor), spec.len_range.1.min(floor));
        spec.n_items = spec.n_items.min(4);
        spec.n_sorted = spec.n_sorted.min(3);
        let sample = generate(&spec, 42);

        println!("=== {} ===", kind.name());
        println!(
            "input  {:>2} rows x {:<3} target {:>2} rows x {:<3}",
            sample.input.len(),
            sample.input.first().map_or(0, Vec::len),
            sample.target.len(),
            sample.target.first().map_or(0, Vec::len),
        );
        println!("input  {}", render(&sample.input, kind, 8));
        println!("target {}", render(&sample.target, kind, 8));
        let keys: Vec<&str> = sample.meta.keys().map(String::as_str).collect();
        println!("meta   {}", keys.join(", "));
        println!();
    }
}

//! Full pipeline: synthetic tasks, shared pretraining, per-task fine-tuning,
//! and every merge method scored against the fine-tuned models.
//!
//! Usage: `cargo run --release --example toy_experiment [seed]`

use chainmerge::harness::{self, ExperimentSpec};

fn main() -> chainmerge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let spec = ExperimentSpec { seed, ..ExperimentSpec::default() };
    let report = harness::run_experiment(&spec)?;

    for (ft, base) in report.finetuned.iter().zip(&report.base) {
        println!("{}: fine-tuned {:.3}, shared base {:.3}", ft.task_name, ft.accuracy, base.accuracy);
    }
    println!();
    println!("{:14} {:>10} {:>10} {:>10}", "method", "normalized", "loss", "shift");
    for m in &report.methods {
        println!("{:14} {:10.4} {:10.4} {:10.4}", m.label, m.avg_normalized, m.mean_loss, m.mcs.grand_total);
    }
    Ok(())
}

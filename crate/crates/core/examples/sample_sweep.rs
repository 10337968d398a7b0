//! How many samples per task the chained merge needs.

use chainmerge::harness::{self, ExperimentSpec};
use chainmerge::merge::{MergeConfig, MergeMethod};

fn main() -> chainmerge::Result<()> {
    let spec = ExperimentSpec {
        methods: vec![MergeConfig::new(MergeMethod::Com)],
        sweep: vec![2, 5, 10, 20, 50, 100, 200, 500],
        ..ExperimentSpec::default()
    };
    let report = harness::run_experiment(&spec)?;
    println!("{:>8} {:>10}", "samples", "normalized");
    for p in &report.sweep {
        println!("{:8} {:10.4}", p.samples, p.avg_normalized);
    }
    Ok(())
}

//! Measures how far each merged network's layer inputs drift from the inputs
//! the same layer saw in the task's own network.

use chainmerge::harness::{self, ExperimentSpec};
use chainmerge::mcs;
use chainmerge::merge::{self, MergeConfig, MergeMethod};

fn main() -> chainmerge::Result<()> {
    let spec = ExperimentSpec::default();
    let prepared = harness::prepare_experiment(&spec)?;
    let bundles = prepared.bundles(spec.samples_for_merging)?;

    println!("{:14} {:>10} {:>10} {:>10} {:>10}", "method", "layer 1", "layer 2", "layer 3", "total");
    for method in MergeMethod::ALL {
        let merged = merge::merge(&bundles, &MergeConfig::new(method))?.merged;
        let report = mcs::mcs_report(&bundles, &merged, method.label())?;
        print!("{:14}", report.method_label);
        for layer in &report.per_layer {
            print!(" {:10.4}", layer.total);
        }
        println!(" {:10.4}", report.grand_total);
    }
    Ok(())
}

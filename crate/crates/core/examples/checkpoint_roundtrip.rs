//! Saves a model and its data to disk and reads them back.

use chainmerge::harness;
use chainmerge::io;
use chainmerge::ActivationKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("chainmerge-example-{}", std::process::id()));
    let model = harness::init_mlp(16, 32, 3, 4, ActivationKind::Relu, 42)?;
    io::save_checkpoint(&model, dir.join("model"))?;
    let task = harness::gen_tasks(42, 1, 16, 4, 64)?.remove(0);
    io::save_matrix(&task.train_inputs, dir.join("train.cmmx"))?;
    io::save_labels(&task.train_labels, dir.join("train_labels.cmmx"))?;

    let manifest = std::fs::read_to_string(dir.join("model").join(io::MANIFEST_FILE))?;
    println!("{manifest}");
    let loaded = io::load_checkpoint(dir.join("model"))?;
    let x = io::load_matrix(dir.join("train.cmmx"))?;
    let labels = io::load_labels(dir.join("train_labels.cmmx"))?;
    let before = harness::evaluate_on(&model, &task.train_inputs, &task.train_labels, "original")?;
    let after = harness::evaluate_on(&loaded, &x, &labels, "reloaded")?;
    println!("accuracy before {:.4}, after {:.4}", before.accuracy, after.accuracy);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

//! `split`: stratified 8:1:1 id lists for the manifest.

use anyhow::{Context, Result};
use cxrpipe::dataset;

use crate::config::PipelineConfig;

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let records = dataset::load_manifest(&cfg.manifest)
        .with_context(|| format!("loading manifest {}", cfg.manifest.display()))?;
    let split = dataset::stratified_split(&records, cfg.split_seed)?;

    let dir = cfg.output_dir.join("split");
    std::fs::create_dir_all(&dir)?;
    for (name, ids) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        let mut text = ids.join("\n");
        text.push('\n');
        std::fs::write(dir.join(format!("{name}.txt")), text)?;
    }
    println!(
        "split: seed {} -> train {} / val {} / test {} -> {}",
        split.seed,
        split.train.len(),
        split.val.len(),
        split.test.len(),
        dir.display()
    );
    Ok(())
}

use std::path::PathBuf;

use aitv_core::phantom::{PhantomKind, P};
use anyhow::Result;
use serde::Serialize;

use crate::io;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// drive, brain or color
    #[arg(long)]
    pub kind: PhantomKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    kind: PhantomKind,
    seed: u64,
    rows: usize,
    cols: usize,
    regions: &'a [String],
    colors: &'a [Vec<f64>],
}

/// Writes `<kind>.{png,txt}`, `<kind>_truth.{png,txt}` and `<kind>.json`.
pub fn run(args: Args) -> Result<()> {
    let p = args.kind.build(args.seed);
    let stem = args.kind.to_string();
    let dir = &args.output_dir;
    io::save_image_pair(dir, &stem, &p.image, P)?;
    io::write_atomic(&dir.join(format!("{stem}_truth.txt")), p.truth.labels_text().as_bytes())?;
    io::save_labels_png(&dir.join(format!("{stem}_truth.png")), &p.truth)?;
    let (rows, cols) = p.image.dims();
    io::write_json(
        &dir.join(format!("{stem}.json")),
        &Manifest {
            tool: "aitv",
            version: env!("CARGO_PKG_VERSION"),
            command: "phantom",
            kind: args.kind,
            seed: args.seed,
            rows,
            cols,
            regions: &p.region_names,
            colors: p.truth.centroids(),
        },
    )?;
    eprintln!(
        "wrote {stem} phantom ({rows}×{cols}, {} regions) to {}",
        p.k(),
        dir.display()
    );
    Ok(())
}

//! Pretrains a backbone and runs the group-by-group interpreter curriculum
//! on a small synthetic set, then compares dense and reduced inference.
//!
//! Usage: `train_curriculum [run_dir]`. An unfinished run in `run_dir` resumes.

use iared::harness::eval::{evaluate, evaluate_dense};
use iared::harness::pipeline::{self, RunDir};

mod support;

fn main() -> iared::Result<()> {
    let cfg = support::quick_config();
    let tmp = tempfile::tempdir()?;
    let dir = match std::env::args().nth(1) {
        Some(p) => RunDir::new(p),
        None => RunDir::new(tmp.path()),
    };
    let out = pipeline::train(&cfg, &dir, None)?;
    print!("{}", std::fs::read_to_string(dir.log())?);

    let test = pipeline::dataset(&cfg)?.test;
    let (dense, _) = evaluate_dense(&out.backbone, &test)?;
    let (reduced, _) = evaluate(&out.model, &test)?;
    println!("dense backbone: accuracy {:.3}", dense.accuracy);
    println!(
        "with interpreters: accuracy {:.3}, mean keep-ratio {:.3}, per group {:?}",
        reduced.accuracy, reduced.mean_keep_ratio, reduced.keep_ratios
    );
    Ok(())
}

//! Generates the synthetic region dataset and writes a few images and masks.
//!
//! Usage: `synthetic_data [out_dir]` (default `synthetic_samples`).

use iared::explain::Pixmap;
use iared::harness::synthetic::{gen_synthetic, SyntheticSpec};

fn main() -> iared::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic_samples".into());
    std::fs::create_dir_all(&out)?;
    let spec = SyntheticSpec {
        train: 8,
        test: 0,
        ..SyntheticSpec::default()
    };
    let data = gen_synthetic(&spec)?;
    for (i, s) in data.train.iter().enumerate() {
        Pixmap::from_image(&s.image)?.write(format!("{out}/sample{i}.ppm"))?;
        Pixmap::from_mask(&s.mask).write(format!("{out}/sample{i}_mask.pgm"))?;
        println!("sample {i}: class {} region at {:?}", s.label, s.origin);
    }
    Ok(())
}

//! Analytical cost of DeiT-B and DeiT-S, dense and with tokens dropped per group.

use iared::accountant::{model_flops, CostConfig};

fn main() -> iared::Result<()> {
    for (name, dim) in [("DeiT-S", 384), ("DeiT-B", 768)] {
        let dense = CostConfig {
            embed_dim: dim,
            depth: 12,
            num_patches: 196,
            blocks_per_group: None,
        };
        let r = model_flops(&dense, &[196; 12])?;
        println!("{name}: {:.2} GFLOPs dense", r.total / 1e9);

        // four groups keeping 100%, 80%, 60% and 45% of the patches
        let grouped = CostConfig {
            blocks_per_group: Some(3),
            ..dense
        };
        let trace: Vec<usize> = [196, 157, 118, 88].iter().flat_map(|&n| [n; 3]).collect();
        let r = model_flops(&grouped, &trace)?;
        println!(
            "{name}: {:.2} GFLOPs with dropping (interpreters {:.3} G), speed-up {:.2}x",
            r.total / 1e9,
            r.interpreter / 1e9,
            r.speedup()
        );
    }
    Ok(())
}

//! Runs the full data-kind × noise × formula matrix from an inline TOML
//! configuration and prints the summary table.

use std::fs;

use neumann_pat::pipeline::{cmd_matrix, RunConfig};
use neumann_pat::Result;

const CONFIG: &str = r#"
[grid]
n = 121

[phantom]
kind = "head"

[noise]
seed = 42

[reconstruction]
a = 1.0
b = 2.0
"#;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("npat_matrix_example");
    let cfg = RunConfig::parse(CONFIG, "inline")?.with_overrides(&[format!("output.dir=\"{}\"", dir.display())])?;
    let out = cmd_matrix(&cfg)?;
    println!("{:<10} {:>6} {:<14} {:>8} {:>8}", "kind", "noise", "formula", "relL2", "corr");
    for c in &out.cells {
        match &c.metrics {
            Some(m) => println!(
                "{:<10} {:>6} {:<14} {:>8.4} {:>8.4}",
                c.kind, c.noise_percent, c.formula, m.relative_l2, m.correlation
            ),
            None => println!("{:<10} {:>6} {:<14} failed: {}", c.kind, c.noise_percent, c.formula, c.error.as_deref().unwrap_or("")),
        }
    }
    println!("{} files, summary at {}", out.files.len(), dir.join("matrix/summary.csv").display());
    let _ = fs::metadata(dir.join("matrix/summary.csv"))?;
    Ok(())
}

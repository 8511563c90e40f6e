//! Rasterizes the head phantom and a single smooth bump, then writes
//! previews next to the working directory.
//!
//! ```text
//! cargo run --release --example phantom_raster
//! ```

use std::path::Path;

use neumann_pat::phantoms::{head_phantom, rasterize, rasterize_gradient, Component, Phantom};
use neumann_pat::pipeline::io::write_pgm;
use neumann_pat::{GridSpec, Point, Result};

fn main() -> Result<()> {
    let grid = GridSpec::new(201, 1.0, Point::ORIGIN)?;

    let head = head_phantom(&grid);
    let f = rasterize(&head, &grid)?;
    println!("head: {} components, max {:.3}", head.components.len(), f.max_abs());
    write_pgm(Path::new("head.pgm"), &f)?;

    let bump = Phantom::new(vec![Component::bump(Point::new(0.2, -0.1), 0.4, 1.0)]);
    let g = rasterize(&bump, &grid)?;
    let (gx, gy) = rasterize_gradient(&bump, &grid)?;
    println!("bump: max {:.3}, max |grad| {:.3}", g.max_abs(), gx.max_abs().max(gy.max_abs()));
    write_pgm(Path::new("bump.pgm"), &g)?;

    // Too close to the detector circle for the chosen grid.
    let late = Phantom::new(vec![Component::bump(Point::new(0.7, 0.0), 0.3, 1.0)]);
    if let Err(e) = rasterize(&late, &grid) {
        println!("rejected: {e}");
    }
    Ok(())
}

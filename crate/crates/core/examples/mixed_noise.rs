//! Reconstruction from the mixed trace `a u + b ∂_ν u` under increasing
//! Gaussian noise.

use std::sync::Arc;

use neumann_pat::forward::{add_gaussian_noise, make_mixed_trace, solve_dirichlet_trace_oracle, solve_neumann_trace_oracle};
use neumann_pat::geometry::build_circle_detectors;
use neumann_pat::inversion::{reconstruct_mixed, reconstruct_neumann};
use neumann_pat::phantoms::{head_phantom, rasterize, rasterize_gradient};
use neumann_pat::pipeline::MetricsReport;
use neumann_pat::{GridSpec, Point, Result};

fn main() -> Result<()> {
    let grid = GridSpec::new(151, 1.0, Point::ORIGIN)?;
    let dx = grid.dx();
    let phantom = head_phantom(&grid);
    let f = rasterize(&phantom, &grid)?;
    let (fx, fy) = rasterize_gradient(&phantom, &grid)?;
    let det = Arc::new(build_circle_detectors(1.0, Point::ORIGIN, dx)?);
    let u = solve_dirichlet_trace_oracle(&f, det.clone(), dx, 16.0)?;
    let d = solve_neumann_trace_oracle(&f, &fx, &fy, det, dx, 16.0)?;
    let mixed = make_mixed_trace(&u, &d, 1.0, 2.0)?;

    println!("noise%  neumann  mixed(a=1,b=2)");
    for (i, p) in [0.0, 5.0, 10.0, 20.0].into_iter().enumerate() {
        let dn = add_gaussian_noise(&d, p, 100 + i as u64)?;
        let mn = add_gaussian_noise(&mixed, p, 200 + i as u64)?;
        let en = MetricsReport::compute(&reconstruct_neumann(&dn, &f)?, &f)?.relative_l2;
        let em = MetricsReport::compute(&reconstruct_mixed(&mn, &f)?, &f)?.relative_l2;
        println!("{p:>6.1}  {en:.4}   {em:.4}");
    }
    Ok(())
}

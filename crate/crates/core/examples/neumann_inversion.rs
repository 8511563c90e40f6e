//! Exact inversion from the normal-derivative trace on a circle, compared
//! with universal back-projection of the Dirichlet trace.

use std::sync::Arc;

use neumann_pat::forward::{solve_dirichlet_trace_oracle, solve_neumann_trace_oracle};
use neumann_pat::geometry::build_circle_detectors;
use neumann_pat::inversion::{reconstruct_dirichlet_ubp, reconstruct_neumann};
use neumann_pat::phantoms::{head_phantom, rasterize, rasterize_gradient};
use neumann_pat::pipeline::MetricsReport;
use neumann_pat::{GridSpec, Point, Result};

fn main() -> Result<()> {
    for n in [101, 201] {
        let grid = GridSpec::new(n, 1.0, Point::ORIGIN)?;
        let dx = grid.dx();
        let phantom = head_phantom(&grid);
        let f = rasterize(&phantom, &grid)?;
        let (fx, fy) = rasterize_gradient(&phantom, &grid)?;
        let det = Arc::new(build_circle_detectors(1.0, Point::ORIGIN, dx)?);
        let t_final = 16.0;

        let d = solve_neumann_trace_oracle(&f, &fx, &fy, det.clone(), dx, t_final)?;
        let rec = reconstruct_neumann(&d, &f)?;
        let m = MetricsReport::compute(&rec, &f)?;
        println!("N={n}: neumann  rel L2 {:.4}, corr {:.5}", m.relative_l2, m.correlation);

        let u = solve_dirichlet_trace_oracle(&f, det, dx, t_final)?;
        let ubp = reconstruct_dirichlet_ubp(&u, &f)?;
        let m = MetricsReport::compute(&ubp, &f)?;
        println!("N={n}: ubp      rel L2 {:.4}, corr {:.5}, best scale {:.4}", m.relative_l2, m.correlation, m.alpha_star);
    }
    Ok(())
}

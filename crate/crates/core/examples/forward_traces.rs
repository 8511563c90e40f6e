//! Boundary traces on the unit circle from the exact radial-mean solver and
//! from the FFT propagator, and how far apart they are.

use std::sync::Arc;

use neumann_pat::forward::{solve_dirichlet_trace_oracle, solve_neumann_trace_oracle, spectral_boundary_traces};
use neumann_pat::geometry::build_circle_detectors;
use neumann_pat::phantoms::{rasterize, rasterize_gradient, Component, Phantom};
use neumann_pat::{GridSpec, Point, Result, TraceMatrix};

fn rel_diff(a: &TraceMatrix, b: &TraceMatrix) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.values().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn main() -> Result<()> {
    let grid = GridSpec::new(201, 1.0, Point::ORIGIN)?;
    let dx = grid.dx();
    let phantom = Phantom::new(vec![Component::Gaussian {
        center: Point::new(0.05, 0.0),
        sigma: 0.15,
        amplitude: 1.0,
    }]);
    let f = rasterize(&phantom, &grid)?;
    let (fx, fy) = rasterize_gradient(&phantom, &grid)?;
    let det = Arc::new(build_circle_detectors(1.0, Point::ORIGIN, dx)?);
    let t_final = 2.4;

    let u = solve_dirichlet_trace_oracle(&f, det.clone(), dx, t_final)?;
    let d = solve_neumann_trace_oracle(&f, &fx, &fy, det.clone(), dx, t_final)?;
    println!("{} detectors x {} time samples", u.m(), u.l());

    let (su, sd) = spectral_boundary_traces(&f, det, dx, t_final, 2, false)?;
    println!("dirichlet: spectral vs oracle {:.2e}", rel_diff(&su, &u));
    println!("neumann:   spectral vs oracle {:.2e}", rel_diff(&sd, &d));

    // Arrival at the detector nearest the source: the trace is flat until
    // the front covers the distance.
    let k = (0..u.m())
        .min_by(|&i, &j| det_dist(&u, i).total_cmp(&det_dist(&u, j)))
        .unwrap_or(0);
    let first = (0..u.l()).find(|&l| u.get(k, l).abs() > 1e-3 * u.max_abs()).unwrap_or(0);
    println!("nearest detector {k}: first signal at t = {:.3}", u.time(first));
    Ok(())
}

fn det_dist(t: &TraceMatrix, k: usize) -> f64 {
    t.detectors().points()[k].dist(Point::new(0.05, 0.0))
}

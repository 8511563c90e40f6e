//! Boundary traces of the wave equation with initial data `(f, 0)`.
//!
//! Two independent solvers:
//!
//! - the spherical-mean route, `u(y,t) = f(y) + ∫₀ᵗ t ∂_r M f(y,r)/√(t²−r²) dr`,
//!   evaluated per detector with a product-integration rule, and
//! - a pseudo-spectral propagator `û(ξ,t) = cos(‖ξ‖t) f̂(ξ)` on a zero-padded
//!   periodic grid, followed by interpolation or finite differences at the
//!   detectors.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::geometry::DetectorArray;
use crate::point::Point;
use crate::transforms::SphericalMeans;

/// Extra grid cells around `[z−ρ, z+ρ]²` used by the grid solver.
pub const SPECTRAL_MARGIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    Dirichlet,
    Neumann,
    Mixed { a: f64, b: f64 },
    /// Intermediate integrand traces, e.g. `∂_t(u/t)`.
    Derived,
}

impl TraceKind {
    pub fn name(&self) -> &'static str {
        match self {
            TraceKind::Dirichlet => "dirichlet",
            TraceKind::Neumann => "neumann",
            TraceKind::Mixed { .. } => "mixed",
            TraceKind::Derived => "derived",
        }
    }
}

/// Number of time samples `L = ⌊T/Δt⌋ + 1`.
pub fn time_samples(t_final: f64, dt: f64) -> usize {
    (t_final / dt + 1e-9).floor() as usize + 1
}

/// `M × L` space–time boundary data, row-major in the detector index.
#[derive(Debug, Clone)]
pub struct TraceMatrix {
    pub kind: TraceKind,
    m: usize,
    l: usize,
    dt: f64,
    t_final: f64,
    values: Vec<f64>,
    detectors: Arc<DetectorArray>,
}

impl TraceMatrix {
    pub fn new(
        kind: TraceKind,
        detectors: Arc<DetectorArray>,
        dt: f64,
        t_final: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let m = detectors.len();
        let l = time_samples(t_final, dt);
        if values.len() != m * l {
            return Err(Error::ShapeMismatch(format!(
                "expected {m}x{l} = {} values, got {}",
                m * l,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "trace contains NaN or infinity"));
        }
        Ok(TraceMatrix {
            kind,
            m,
            l,
            dt,
            t_final,
            values,
            detectors,
        })
    }

    pub fn zeros(kind: TraceKind, detectors: Arc<DetectorArray>, dt: f64, t_final: f64) -> Self {
        let m = detectors.len();
        let l = time_samples(t_final, dt);
        TraceMatrix {
            kind,
            m,
            l,
            dt,
            t_final,
            values: vec![0.0; m * l],
            detectors,
        }
    }

    pub fn detectors(&self) -> &Arc<DetectorArray> {
        &self.detectors
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.l..(k + 1) * self.l]
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.l + l]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn with_values(&self, kind: TraceKind, values: Vec<f64>) -> Result<Self> {
        TraceMatrix::new(kind, self.detectors.clone(), self.dt, self.t_final, values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        TraceMatrix {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// Same detectors, time grid and shape.
    pub fn compatible(&self, other: &TraceMatrix) -> bool {
        self.m == other.m
            && self.l == other.l
            && self.dt == other.dt
            && (Arc::ptr_eq(&self.detectors, &other.detectors)
                || self.detectors.points() == other.detectors.points())
    }

    /// `α·self + β·other`, keeping `self.kind`.
    pub fn combine(&self, alpha: f64, other: &TraceMatrix, beta: f64) -> Result<Self> {
        if !self.compatible(other) {
            return Err(Error::ShapeMismatch("traces differ in shape, time grid or detectors".into()));
        }
        Ok(TraceMatrix {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
            ..self.clone()
        })
    }
}

/// Product-integration weights for `∫₀^{t_l} h(r) · r/√(t_l² − r²) dr` with
/// `h` linear between the nodes `r_j = j·h`, `t_l = l·h`.
///
/// Entries are stored dimensionless (`h = 1`); [`apply`](Self::apply) restores
/// the step.
#[derive(Debug, Clone)]
pub struct RadialAbelTable {
    step: f64,
    max_node: usize,
    rows: Vec<Vec<f64>>,
}

/// Moments `∫_a^b r/√(t²−r²) dr` and `∫_a^b r²/√(t²−r²) dr`, `0 ≤ a < b ≤ t`.
fn cell_moments(a: f64, b: f64, t: f64) -> (f64, f64) {
    let ta = (t * t - a * a).max(0.0).sqrt();
    let tb = (t * t - b * b).max(0.0).sqrt();
    let m0 = (b * b - a * a) / (ta + tb);
    if t >= 8.0 * b {
        // far from the singularity: 8-point Gauss–Legendre on the smooth integrand
        const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
        const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
        let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
        let mut m1 = 0.0;
        for (x, w) in X.iter().zip(W) {
            for r in [c - hw * x, c + hw * x] {
                m1 += w * r * r / (t * t - r * r).sqrt();
            }
        }
        return (m0, m1 * hw);
    }
    let dasin = (b / t).min(1.0).asin() - (a / t).asin();
    let m1 = 0.5 * t * t * dasin - 0.5 * (b * tb - a * ta);
    (m0, m1)
}

impl RadialAbelTable {
    /// Weights for `l = 0..l_count` and nodes `j = 0..=max_node`.
    pub fn new(step: f64, l_count: usize, max_node: usize) -> Self {
        let rows = (0..l_count)
            .into_par_iter()
            .map(|l| {
                let t = l as f64;
                let top = l.min(max_node + 1);
                let mut row = vec![0.0; (l.min(max_node)) + 1];
                for j in 0..top {
                    // cell [j, j+1], clipped at t; contributes to nodes j and j+1
                    let (a, b) = (j as f64, (j + 1) as f64);
                    if a >= t {
                        break;
                    }
                    let (m0, m1) = cell_moments(a, b.min(t), t);
                    // linear interpolant h(r) = h_j (b − r) + h_{j+1} (r − a)
                    let w_hi = m1 - a * m0;
                    let w_lo = b * m0 - m1;
                    row[j] += w_lo;
                    if j + 1 < row.len() {
                        row[j + 1] += w_hi;
                    }
                }
                row
            })
            .collect();
        RadialAbelTable {
            step,
            max_node,
            rows,
        }
    }

    pub fn max_node(&self) -> usize {
        self.max_node
    }

    /// `∫₀^{t_l} h(r) r/√(t_l²−r²) dr` for node samples `h[j]`, restricted to
    /// the nonzero node range `[lo, hi]`.
    pub fn apply(&self, l: usize, h: &[f64], lo: usize, hi: usize) -> f64 {
        let row = &self.rows[l];
        let hi = hi.min(row.len() - 1);
        if lo > hi {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in lo..=hi {
            acc += row[j] * h[j];
        }
        acc * self.step
    }
}

fn nonzero_range(h: &[f64]) -> (usize, usize) {
    let lo = h.iter().position(|v| *v != 0.0).unwrap_or(h.len());
    let hi = h.iter().rposition(|v| *v != 0.0).unwrap_or(0);
    (lo, hi)
}

/// Checks shared by the oracle solvers and returns the radial node count.
fn oracle_setup(f: &ScalarField2D, detectors: &DetectorArray, dt: f64, t_final: f64) -> Result<Option<usize>> {
    if !(t_final > 0.0) {
        return Err(Error::invalid("t_final", format!("must be positive, got {t_final}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let Some(s) = f.support_disk() else {
        return Ok(None);
    };
    let mut far = 0.0_f64;
    for (k, y) in detectors.points().iter().enumerate() {
        let d = y.dist(s.center);
        if d <= s.radius {
            return Err(Error::precondition(format!(
                "detector {k} at ({:.4}, {:.4}) lies inside the support disk of f (center ({:.4}, {:.4}), radius {:.4})",
                y.x, y.y, s.center.x, s.center.y, s.radius
            )));
        }
        far = far.max(d + s.radius);
    }
    Ok(Some((far / dt).ceil() as usize + 2))
}

/// Per-detector `u(y_k, t_l)` rows for initial data `(f, 0)`.
fn dirichlet_rows(
    f: &ScalarField2D,
    points: &[Point],
    dt: f64,
    l_count: usize,
    nodes: usize,
    table: &RadialAbelTable,
) -> Result<Vec<Vec<f64>>> {
    let sm = SphericalMeans::new(f);
    points
        .par_iter()
        .map(|&y| {
            let prof = sm.profile(y, dt, nodes + 1)?;
            // h = ∂_r M f / r, so that t ∫ h r/√(t²−r²) dr is the integral term
            let h: Vec<f64> = prof
                .derivative
                .iter()
                .enumerate()
                .map(|(j, g)| if j == 0 { 0.0 } else { g / (j as f64 * dt) })
                .collect();
            let (lo, hi) = nonzero_range(&h);
            let f_y = f.interp(y);
            Ok((0..l_count)
                .map(|l| {
                    let t = l as f64 * dt;
                    f_y + t * table.apply(l, &h, lo, hi)
                })
                .collect())
        })
        .collect()
}

fn rows_to_trace(
    kind: TraceKind,
    detectors: Arc<DetectorArray>,
    dt: f64,
    t_final: f64,
    rows: Vec<Vec<f64>>,
) -> Result<TraceMatrix> {
    TraceMatrix::new(kind, detectors, dt, t_final, rows.into_iter().flatten().collect())
}

/// Dirichlet trace `u(y_k, t_l)` by the spherical-mean route.
pub fn solve_dirichlet_trace_oracle(
    f: &ScalarField2D,
    detectors: Arc<DetectorArray>,
    dt: f64,
    t_final: f64,
) -> Result<TraceMatrix> {
    let Some(nodes) = oracle_setup(f, &detectors, dt, t_final)? else {
        return Ok(TraceMatrix::zeros(TraceKind::Dirichlet, detectors, dt, t_final));
    };
    let l_count = time_samples(t_final, dt);
    let table = RadialAbelTable::new(dt, l_count, nodes);
    let rows = dirichlet_rows(f, detectors.points(), dt, l_count, nodes, &table)?;
    rows_to_trace(TraceKind::Dirichlet, detectors, dt, t_final, rows)
}

/// Neumann trace `⟨ν_k, ∇u(y_k, t_l)⟩`; `∇u` solves the wave equation with
/// initial data `(∇f, 0)`.
pub fn solve_neumann_trace_oracle(
    f: &ScalarField2D,
    df1: &ScalarField2D,
    df2: &ScalarField2D,
    detectors: Arc<DetectorArray>,
    dt: f64,
    t_final: f64,
) -> Result<TraceMatrix> {
    if !f.same_grid(df1) || !f.same_grid(df2) {
        return Err(Error::ShapeMismatch("f and its partial derivatives use different grids".into()));
    }
    let n1 = oracle_setup(df1, &detectors, dt, t_final)?;
    let n2 = oracle_setup(df2, &detectors, dt, t_final)?;
    oracle_setup(f, &detectors, dt, t_final)?;
    let nodes = match (n1, n2) {
        (None, None) => return Ok(TraceMatrix::zeros(TraceKind::Neumann, detectors, dt, t_final)),
        (a, b) => a.unwrap_or(0).max(b.unwrap_or(0)),
    };
    let l_count = time_samples(t_final, dt);
    let table = RadialAbelTable::new(dt, l_count, nodes);
    let r1 = dirichlet_rows(df1, detectors.points(), dt, l_count, nodes, &table)?;
    let r2 = dirichlet_rows(df2, detectors.points(), dt, l_count, nodes, &table)?;
    let rows = r1
        .into_iter()
        .zip(r2)
        .zip(detectors.normals())
        .map(|((a, b), nu)| a.iter().zip(&b).map(|(x, y)| nu.x * x + nu.y * y).collect())
        .collect();
    rows_to_trace(TraceKind::Neumann, detectors, dt, t_final, rows)
}

/// `v(y, t_l) = ∫₀^{t_l} r M g(y,r)/√(t_l²−r²) dr` for initial data `(0, g)`,
/// at arbitrary points. Returns one row per point.
pub fn velocity_data_rows(g: &ScalarField2D, points: &[Point], dt: f64, l_count: usize) -> Result<Vec<Vec<f64>>> {
    let Some(s) = g.support_disk() else {
        return Ok(vec![vec![0.0; l_count]; points.len()]);
    };
    let far = points.iter().map(|p| p.dist(s.center) + s.radius).fold(0.0, f64::max);
    let nodes = (far / dt).ceil() as usize + 2;
    let table = RadialAbelTable::new(dt, l_count, nodes);
    let sm = SphericalMeans::new(g);
    points
        .par_iter()
        .map(|&y| {
            let prof = sm.profile(y, dt, nodes + 1)?;
            let (lo, hi) = nonzero_range(&prof.means);
            Ok((0..l_count).map(|l| table.apply(l, &prof.means, lo, hi)).collect())
        })
        .collect()
}

/// `u(x, t_l)` for initial data `(f, 0)` at arbitrary points (no support
/// restriction on the points).
pub fn displacement_rows(f: &ScalarField2D, points: &[Point], dt: f64, l_count: usize) -> Result<Vec<Vec<f64>>> {
    let Some(s) = f.support_disk() else {
        return Ok(vec![vec![0.0; l_count]; points.len()]);
    };
    let far = points.iter().map(|p| p.dist(s.center) + s.radius).fold(0.0, f64::max);
    let nodes = (far / dt).ceil() as usize + 2;
    let table = RadialAbelTable::new(dt, l_count, nodes);
    dirichlet_rows(f, points, dt, l_count, nodes, &table)
}

/// Smallest FFT-friendly length (`2^a 3^b 5^c`) that is at least `n`.
fn fft_length(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Cosine propagator on a zero-padded periodic copy of a field's grid.
pub struct SpectralPropagator {
    grid: ScalarField2D,
    len: usize,
    spectrum: Vec<Complex64>,
    wavenumber: Vec<f64>,
    wrap_limit: f64,
    inv: Arc<dyn Fft<f64>>,
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for ib in (0..n).step_by(B) {
        for jb in (0..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                for j in jb..(jb + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

fn fft2(buf: &mut [Complex64], scratch: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, n: usize) {
    plan.process(buf);
    transpose(buf, scratch, n);
    plan.process(scratch);
    transpose(scratch, buf, n);
}

impl SpectralPropagator {
    pub fn new(f: &ScalarField2D, pad_factor: usize) -> Result<Self> {
        if pad_factor < 1 {
            return Err(Error::invalid("pad_factor", "must be at least 1"));
        }
        let n = f.n();
        let len = fft_length(n * pad_factor);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut buf = vec![Complex64::new(0.0, 0.0); len * len];
        for i in 0..n {
            for j in 0..n {
                buf[i * len + j] = Complex64::new(f.get(i, j), 0.0);
            }
        }
        let mut scratch = buf.clone();
        fft2(&mut buf, &mut scratch, &fwd, len);
        let dk = 2.0 * PI / (len as f64 * f.dx());
        let freq = |k: usize| -> f64 {
            let s = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
            s * dk
        };
        let mut wavenumber = Vec::with_capacity(len * len);
        for i in 0..len {
            for j in 0..len {
                wavenumber.push(freq(i).hypot(freq(j)));
            }
        }
        // a periodic image of the support reaches the grid after travelling
        // period − (farthest per-axis offset between grid and support)
        let wrap_limit = match f.support_disk() {
            None => f64::INFINITY,
            Some(s) => {
                let lo = f.origin();
                let hi = f.upper();
                let reach = [s.center.x - lo.x, hi.x - s.center.x, s.center.y - lo.y, hi.y - s.center.y]
                    .into_iter()
                    .fold(0.0, f64::max)
                    + s.radius;
                len as f64 * f.dx() - reach
            }
        };
        Ok(SpectralPropagator {
            grid: ScalarField2D::zeros(n, f.dx(), f.origin()),
            len,
            spectrum: buf,
            wavenumber,
            wrap_limit,
            inv,
        })
    }

    /// Largest time before periodic images reach the grid.
    pub fn wrap_limit(&self) -> f64 {
        self.wrap_limit
    }

    pub fn padded_len(&self) -> usize {
        self.len
    }

    /// `u(·, t)` on the input grid.
    pub fn snapshot(&self, t: f64) -> ScalarField2D {
        let len = self.len;
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .zip(&self.wavenumber)
            .map(|(c, k)| c * (k * t).cos())
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); len * len];
        fft2(&mut buf, &mut scratch, &self.inv, len);
        let n = self.grid.n();
        let scale = 1.0 / (len * len) as f64;
        let mut out = self.grid.clone();
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, buf[i * len + j].re * scale);
            }
        }
        out
    }

    fn check_times(&self, times: &[f64], allow_wrap: bool) -> Result<()> {
        let t_max = times.iter().fold(0.0_f64, |m, t| m.max(*t));
        if !allow_wrap && t_max > self.wrap_limit {
            return Err(Error::precondition(format!(
                "time {t_max} exceeds the wrap-around limit {:.4} of the padded grid; increase pad_factor",
                self.wrap_limit
            )));
        }
        Ok(())
    }
}

/// Snapshots `u(·, t)` on the grid of `f` (which should already contain the
/// detectors with margin). Rejects times beyond the wrap-around limit unless
/// `allow_wrap` is set.
pub fn solve_wave_spectral(
    f: &ScalarField2D,
    pad_factor: usize,
    times: &[f64],
    allow_wrap: bool,
) -> Result<Vec<ScalarField2D>> {
    let prop = SpectralPropagator::new(f, pad_factor)?;
    prop.check_times(times, allow_wrap)?;
    Ok(times.par_iter().map(|&t| prop.snapshot(t)).collect())
}

fn check_margin(grid: &ScalarField2D, detectors: &DetectorArray, cells: f64) -> Result<()> {
    let lo = grid.origin();
    let hi = grid.upper();
    let m = cells * grid.dx();
    for y in detectors.points() {
        if y.x - lo.x < m || y.y - lo.y < m || hi.x - y.x < m || hi.y - y.y < m {
            return Err(Error::precondition(format!(
                "detector ({:.4}, {:.4}) is closer than {cells} cells to the grid edge",
                y.x, y.y
            )));
        }
    }
    Ok(())
}

fn neumann_column(u: &ScalarField2D, detectors: &DetectorArray) -> Vec<f64> {
    let (gx, gy) = u.gradient();
    detectors
        .points()
        .iter()
        .zip(detectors.normals())
        .map(|(y, nu)| nu.x * gx.interp(*y) + nu.y * gy.interp(*y))
        .collect()
}

fn columns_to_trace(
    kind: TraceKind,
    detectors: Arc<DetectorArray>,
    dt: f64,
    t_final: f64,
    columns: &[Vec<f64>],
) -> Result<TraceMatrix> {
    let m = detectors.len();
    let l = columns.len();
    let mut values = vec![0.0; m * l];
    for (li, col) in columns.iter().enumerate() {
        for k in 0..m {
            values[k * l + li] = col[k];
        }
    }
    TraceMatrix::new(kind, detectors, dt, t_final, values)
}

/// Neumann trace from snapshots at `t_l = l·dt`: centered-difference gradient,
/// bilinear interpolation at the detectors, projection on `ν_k`.
pub fn neumann_trace_from_grid(
    snapshots: &[ScalarField2D],
    dt: f64,
    detectors: Arc<DetectorArray>,
) -> Result<TraceMatrix> {
    let Some(first) = snapshots.first() else {
        return Err(Error::invalid("snapshots", "empty snapshot list"));
    };
    check_margin(first, &detectors, 2.0)?;
    let columns: Vec<Vec<f64>> = snapshots.par_iter().map(|u| neumann_column(u, &detectors)).collect();
    let t_final = (snapshots.len() - 1) as f64 * dt;
    columns_to_trace(TraceKind::Neumann, detectors, dt, t_final, &columns)
}

pub fn dirichlet_trace_from_grid(
    snapshots: &[ScalarField2D],
    dt: f64,
    detectors: Arc<DetectorArray>,
) -> Result<TraceMatrix> {
    if snapshots.is_empty() {
        return Err(Error::invalid("snapshots", "empty snapshot list"));
    }
    let columns: Vec<Vec<f64>> = snapshots
        .par_iter()
        .map(|u| detectors.points().iter().map(|y| u.interp(*y)).collect())
        .collect();
    let t_final = (snapshots.len() - 1) as f64 * dt;
    columns_to_trace(TraceKind::Dirichlet, detectors, dt, t_final, &columns)
}

/// Dirichlet and Neumann traces from the spectral solver without keeping all
/// snapshots in memory. `f` is extended by [`SPECTRAL_MARGIN_CELLS`] first.
pub fn spectral_boundary_traces(
    f: &ScalarField2D,
    detectors: Arc<DetectorArray>,
    dt: f64,
    t_final: f64,
    pad_factor: usize,
    allow_wrap: bool,
) -> Result<(TraceMatrix, TraceMatrix)> {
    let ext = f.padded(SPECTRAL_MARGIN_CELLS);
    check_margin(&ext, &detectors, 2.0)?;
    let prop = SpectralPropagator::new(&ext, pad_factor)?;
    let l = time_samples(t_final, dt);
    let times: Vec<f64> = (0..l).map(|i| i as f64 * dt).collect();
    prop.check_times(&times, allow_wrap)?;
    let cols: Vec<(Vec<f64>, Vec<f64>)> = times
        .par_iter()
        .map(|&t| {
            let u = prop.snapshot(t);
            let dir = detectors.points().iter().map(|y| u.interp(*y)).collect();
            (dir, neumann_column(&u, &detectors))
        })
        .collect();
    let (dcols, ncols): (Vec<_>, Vec<_>) = cols.into_iter().unzip();
    Ok((
        columns_to_trace(TraceKind::Dirichlet, detectors.clone(), dt, t_final, &dcols)?,
        columns_to_trace(TraceKind::Neumann, detectors, dt, t_final, &ncols)?,
    ))
}

/// `a·u + b·∂_ν u`.
pub fn make_mixed_trace(u: &TraceMatrix, d: &TraceMatrix, a: f64, b: f64) -> Result<TraceMatrix> {
    let mut out = u.combine(a, d, b)?;
    out.kind = TraceKind::Mixed { a, b };
    Ok(out)
}

/// Adds i.i.d. `N(0, σ²)` noise with `σ = (percent/100)·max|values|`.
///
/// Samples come from ChaCha20 seeded with `seed` (a counter-based stream),
/// mapped to Gaussians by Box–Muller in row-major order, so the output depends
/// only on `(seed, shape, values)`.
pub fn add_gaussian_noise(trace: &TraceMatrix, percent: f64, seed: u64) -> Result<TraceMatrix> {
    if !(percent >= 0.0) {
        return Err(Error::invalid("percent", format!("must be non-negative, got {percent}")));
    }
    let sigma = percent / 100.0 * trace.max_abs();
    if sigma == 0.0 {
        return Ok(trace.clone());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut uniform = move || ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut out = trace.clone();
    let mut spare: Option<f64> = None;
    for v in out.values.iter_mut() {
        let z = match spare.take() {
            Some(z) => z,
            None => {
                let (u1, u2) = (uniform(), uniform());
                let r = (-2.0 * u1.ln()).sqrt();
                let (s, c) = (2.0 * PI * u2).sin_cos();
                spare = Some(r * s);
                r * c
            }
        };
        *v += sigma * z;
    }
    Ok(out)
}

//! The smoothing error operator
//!
//! ```text
//! K_Ω f(x) = (1/8π²) ∫_Ω f(y) (∂_s² H_s R χ_Ω)(ñ(x,y), s̃(x,y)) / ‖x−y‖ dy
//! ñ = (y−x)/‖x−y‖,   s̃ = (‖y‖² − ‖x‖²)/(2‖x−y‖)
//! ```
//!
//! and numerical checks of the identities it enters: the convex-domain
//! inversion formula `f = BP(∂_ν u) + K_Ω f`, the bilinear identity for
//! `∫∫ u v`, and the pairing `∫ f g = 2∫∫ v ∂_ν u + ∫ (K_Ω f) g`.
//!
//! `K_Ω` vanishes for disks and ellipses; for other convex bodies it is a
//! genuine correction.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::forward::{displacement_rows, velocity_data_rows, TraceKind, TraceMatrix};
use crate::geometry::ConvexDomain;
use crate::inversion::{accumulate_abel_with, backproject_points, AbelRule};
use crate::point::Point;
use crate::transforms::{
    hilbert_transform, radon_indicator_profile, second_s_derivative, HilbertOptions, ProfileOnLines, SGrid,
};

/// `ñ(x, y)` and `s̃(x, y)`; undefined for `x = y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryPair {
    pub n: Point,
    pub s: f64,
}

impl GeometryPair {
    pub fn new(x: Point, y: Point) -> Option<Self> {
        let d = y - x;
        let r = d.norm();
        if r == 0.0 {
            return None;
        }
        let n = d * (1.0 / r);
        // (‖y‖² − ‖x‖²)/(2‖x−y‖) = ⟨ñ, (x+y)/2⟩
        Some(GeometryPair {
            n,
            s: n.dot((x + y) * 0.5),
        })
    }
}

/// Which stage of the `(θ, s)` pipeline to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// `H_s R χ_Ω`
    Hilbert,
    /// `∂_s² H_s R χ_Ω`
    Kernel,
}

impl Stage {
    /// Coefficient in front of the weakly singular integral.
    pub fn constant(self) -> f64 {
        match self {
            Stage::Hilbert => 1.0 / (8.0 * PI),
            Stage::Kernel => -1.0 / (8.0 * PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelOptions {
    /// Directions `θ_i = 2πi/n_theta` over the full circle.
    pub n_theta: usize,
    pub ds: f64,
    pub pad_factor: usize,
    /// Gaussian low-pass width in s-samples, applied inside the Hilbert step.
    pub smoothing_samples: f64,
    /// Fraction of the half-width of each support interval treated as the
    /// evaluation band.
    pub band: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            n_theta: 360,
            ds: 1e-3,
            pad_factor: 16,
            smoothing_samples: 2.0,
            band: 0.9,
        }
    }
}

/// Hilbert row, kernel row, support interval, decay warning.
type KernelRow = (Vec<f64>, Vec<f64>, (f64, f64), bool);

/// `H_s R χ_Ω` and `∂_s² H_s R χ_Ω` sampled on `θ_i × s_j`.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub hilbert: ProfileOnLines,
    pub kernel: ProfileOnLines,
    /// Per direction, the evaluation band `[lo, hi]` in `s`.
    pub bands: Vec<(f64, f64)>,
    pub decay_warning: bool,
    pub options: KernelOptions,
    pub domain_label: String,
}

pub fn kernel_field(domain: &ConvexDomain, opts: KernelOptions) -> Result<KernelField> {
    if opts.n_theta < 4 {
        return Err(Error::invalid("n_theta", "need at least 4 directions"));
    }
    if !(opts.ds > 0.0) {
        return Err(Error::invalid("ds", "must be positive"));
    }
    let reach = domain.center().norm() + domain.outer_radius();
    let s = SGrid::symmetric(1.05 * reach, opts.ds);
    let abscissae = s.points();
    let angles: Vec<f64> = (0..opts.n_theta).map(|i| 2.0 * PI * i as f64 / opts.n_theta as f64).collect();
    let hopts = HilbertOptions {
        pad_factor: opts.pad_factor,
        smoothing: (opts.smoothing_samples > 0.0).then_some(opts.smoothing_samples),
    };
    let rows: Vec<KernelRow> = angles
        .par_iter()
        .map(|&a| {
            let theta = Point::unit(a);
            let chord = radon_indicator_profile(domain, theta, &abscissae);
            let h = hilbert_transform(&chord, hopts)?;
            let k = second_s_derivative(&h.values, opts.ds)?;
            let (lo, hi) = domain.support_interval(theta);
            let (c, w) = (0.5 * (lo + hi), 0.5 * (hi - lo) * opts.band);
            Ok((h.values, k, (c - w, c + w), h.decay_warning))
        })
        .collect::<Result<_>>()?;
    let mut hilbert = Vec::with_capacity(rows.len());
    let mut kernel = Vec::with_capacity(rows.len());
    let mut bands = Vec::with_capacity(rows.len());
    let mut decay_warning = false;
    for (h, k, b, w) in rows {
        hilbert.push(h);
        kernel.push(k);
        bands.push(b);
        decay_warning |= w;
    }
    Ok(KernelField {
        hilbert: ProfileOnLines {
            angles: angles.clone(),
            s,
            values: hilbert,
        },
        kernel: ProfileOnLines { angles, s, values: kernel },
        bands,
        decay_warning,
        options: opts,
        domain_label: domain.label(),
    })
}

impl KernelField {
    pub fn n_theta(&self) -> usize {
        self.kernel.angles.len()
    }

    pub fn s_grid(&self) -> SGrid {
        self.kernel.s
    }

    fn stage(&self, stage: Stage) -> &ProfileOnLines {
        match stage {
            Stage::Hilbert => &self.hilbert,
            Stage::Kernel => &self.kernel,
        }
    }

    /// Linear interpolation in `s` along direction `i`.
    #[inline]
    pub fn row_lookup(&self, stage: Stage, i: usize, s: f64) -> f64 {
        let p = self.stage(stage);
        let g = p.s;
        let pos = (s - g.s0) / g.ds;
        if pos < 0.0 || pos > (g.count - 1) as f64 {
            return 0.0;
        }
        let j = (pos as usize).min(g.count - 2);
        let w = pos - j as f64;
        let row = &p.values[i];
        row[j] + w * (row[j + 1] - row[j])
    }

    /// Bilinear interpolation, periodic in the direction angle.
    #[inline]
    pub fn lookup(&self, stage: Stage, theta: Point, s: f64) -> f64 {
        let n = self.n_theta();
        let mut a = theta.y.atan2(theta.x) / (2.0 * PI) * n as f64;
        if a < 0.0 {
            a += n as f64;
        }
        let i = (a as usize).min(n - 1);
        let w = a - i as f64;
        let i1 = (i + 1) % n;
        (1.0 - w) * self.row_lookup(stage, i, s) + w * self.row_lookup(stage, i1, s)
    }

    /// Largest `|value|` over the evaluation bands.
    pub fn band_max_abs(&self, stage: Stage) -> f64 {
        let p = self.stage(stage);
        let mut m = 0.0_f64;
        for (row, &(lo, hi)) in p.values.iter().zip(&self.bands) {
            for (j, v) in row.iter().enumerate() {
                let s = p.s.at(j);
                if s >= lo && s <= hi {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Largest `|H_s R χ − 2s|` over the bands (zero for disks centered at 0).
    pub fn disk_identity_error(&self) -> f64 {
        let p = &self.hilbert;
        let mut m = 0.0_f64;
        for (row, &(lo, hi)) in p.values.iter().zip(&self.bands) {
            for (j, v) in row.iter().enumerate() {
                let s = p.s.at(j);
                if s >= lo && s <= hi {
                    m = m.max((v - 2.0 * s).abs());
                }
            }
        }
        m
    }

    /// `theta,s,value` rows of the kernel stage inside the bands.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "theta,s,value")?;
        let p = &self.kernel;
        for ((a, row), &(lo, hi)) in p.angles.iter().zip(&p.values).zip(&self.bands) {
            for (j, v) in row.iter().enumerate() {
                let s = p.s.at(j);
                if s >= lo && s <= hi {
                    writeln!(w, "{a:.6},{s:.6},{v:.12e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Nonzero samples of a field as quadrature nodes.
fn support_nodes(f: &ScalarField2D) -> Vec<(Point, f64)> {
    let n = f.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = f.get(i, j);
            if v != 0.0 {
                out.push((f.node(i, j), v));
            }
        }
    }
    out
}

const POLAR_ANGLES: usize = 16;
const POLAR_RADII: usize = 8;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    // Newton iteration on P_n; n is small
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (1.0 - x), 0.5 * w)
        })
        .collect()
}

/// Applies `c ∫ g(y) k(ñ, s̃)/‖x − y‖ dy` for a stage of a kernel table, with
/// `c = 1/8π` for the Hilbert stage and `c = −1/8π` for the kernel stage.
pub struct KernelOperator<'a> {
    field: &'a KernelField,
    stage: Stage,
    polar: Vec<(f64, f64)>,
}

impl<'a> KernelOperator<'a> {
    pub fn new(field: &'a KernelField, stage: Stage) -> Self {
        KernelOperator {
            field,
            stage,
            polar: gauss_legendre_unit(POLAR_RADII),
        }
    }

    /// Near `x` (`‖x−y‖ < 2Δx`) the integral is taken in polar coordinates
    /// `y = x + rω`, where `s̃ = ⟨ω, x⟩ + r/2` and the Jacobian cancels `1/r`;
    /// elsewhere grid nodes carry weight `Δx²`.
    fn apply_nodes(&self, g: &ScalarField2D, nodes: &[(Point, f64)], x: Point) -> f64 {
        let dx = g.dx();
        let near = 2.0 * dx;
        let mut far = 0.0;
        for &(y, v) in nodes {
            let d = y - x;
            let r = d.norm();
            if r < near {
                continue;
            }
            let n = d * (1.0 / r);
            far += v * self.field.lookup(self.stage, n, n.dot((x + y) * 0.5)) / r;
        }
        let mut close = 0.0;
        for a in 0..POLAR_ANGLES {
            let w = Point::unit(2.0 * PI * (a as f64 + 0.5) / POLAR_ANGLES as f64);
            let s0 = w.dot(x);
            for &(t, wt) in &self.polar {
                let r = t * near;
                let gy = g.interp(x + w * r);
                if gy != 0.0 {
                    close += wt * near * gy * self.field.lookup(self.stage, w, s0 + 0.5 * r);
                }
            }
        }
        close *= 2.0 * PI / POLAR_ANGLES as f64;
        (far * dx * dx + close) * self.stage.constant()
    }

    pub fn apply(&self, g: &ScalarField2D, x: Point) -> f64 {
        self.apply_nodes(g, &support_nodes(g), x)
    }

    pub fn apply_many(&self, g: &ScalarField2D, xs: &[Point]) -> Vec<f64> {
        let nodes = support_nodes(g);
        xs.par_iter().map(|&x| self.apply_nodes(g, &nodes, x)).collect()
    }

    /// Reference evaluation entirely in polar coordinates around `x`, with
    /// directions aligned to the table rows (no interpolation in θ).
    pub fn apply_polar(&self, g: &ScalarField2D, x: Point) -> f64 {
        let Some(sd) = g.support_disk() else {
            return 0.0;
        };
        let r_max = x.dist(sd.center) + sd.radius;
        let dr = 0.25 * g.dx();
        let steps = (r_max / dr).ceil() as usize;
        let n = self.field.n_theta();
        let mut acc = 0.0;
        for i in 0..n {
            let w = Point::unit(self.field.kernel.angles[i]);
            let s0 = w.dot(x);
            let mut line = 0.0;
            for k in 0..=steps {
                let r = k as f64 * dr;
                let gy = g.interp(x + w * r);
                if gy != 0.0 {
                    let wt = if k == 0 || k == steps { 0.5 } else { 1.0 };
                    line += wt * gy * self.field.row_lookup(self.stage, i, s0 + 0.5 * r);
                }
            }
            acc += line * dr;
        }
        acc * (2.0 * PI / n as f64) * self.stage.constant()
    }
}

/// `K_Ω f(x)` from a precomputed table.
pub fn apply_k(field: &KernelField, f: &ScalarField2D, domain: &ConvexDomain, x: Point) -> Result<f64> {
    if !domain.contains(x) {
        return Err(Error::invalid("x", format!("({:.4}, {:.4}) is outside the domain", x.x, x.y)));
    }
    Ok(KernelOperator::new(field, Stage::Kernel).apply(f, x))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResidual {
    pub x: Point,
    pub f: f64,
    pub backprojection: f64,
    pub k_term: f64,
    pub residual: f64,
    /// `f − BP`, the residual without the correction.
    pub uncorrected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem31Report {
    pub domain: String,
    pub probes: Vec<ProbeResidual>,
    pub f_max: f64,
    /// `max |f − BP − K_Ω f| / ‖f‖_∞`
    pub max_residual: f64,
    /// `max |f − BP| / ‖f‖_∞`
    pub max_uncorrected: f64,
    /// `max |K_Ω f| / ‖f‖_∞`
    pub max_k_term: f64,
    pub n: usize,
    pub dx: f64,
    pub m: usize,
    pub t_final: f64,
}

/// Residual of `f = (1/π) BP(∂_ν u) + K_Ω f` at the probe points.
pub fn check_theorem31(
    f: &ScalarField2D,
    field: &KernelField,
    trace: &TraceMatrix,
    probes: &[Point],
    rule: AbelRule,
) -> Result<Theorem31Report> {
    if trace.kind != TraceKind::Neumann {
        return Err(Error::invalid("trace", "the reconstruction check needs a Neumann trace"));
    }
    let domain = trace.detectors().domain();
    if let Some(p) = probes.iter().find(|p| !domain.contains(**p)) {
        return Err(Error::invalid("probes", format!("probe ({:.4}, {:.4}) is outside the domain", p.x, p.y)));
    }
    let a = accumulate_abel_with(trace, rule);
    let bp = backproject_points(&a, probes, 1.0 / PI);
    let kf = KernelOperator::new(field, Stage::Kernel).apply_many(f, probes);
    let f_max = f.max_abs();
    let scale = if f_max > 0.0 { 1.0 / f_max } else { 1.0 };
    let probes: Vec<ProbeResidual> = probes
        .iter()
        .zip(bp)
        .zip(kf)
        .map(|((&x, b), k)| {
            let fx = f.interp(x);
            ProbeResidual {
                x,
                f: fx,
                backprojection: b,
                k_term: k,
                residual: fx - b - k,
                uncorrected: fx - b,
            }
        })
        .collect();
    let max_of = |g: fn(&ProbeResidual) -> f64| probes.iter().map(|p| g(p).abs()).fold(0.0, f64::max) * scale;
    Ok(Theorem31Report {
        domain: domain.label(),
        f_max,
        max_residual: max_of(|p| p.residual),
        max_uncorrected: max_of(|p| p.uncorrected),
        max_k_term: max_of(|p| p.k_term),
        n: f.n(),
        dx: f.dx(),
        m: trace.m(),
        t_final: trace.t_final(),
        probes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / |lhs|`; absent when `lhs = 0`.
    pub gap: Option<f64>,
    /// `|lhs − rhs| / (‖f‖₂ ‖g‖₂)`
    pub scaled_gap: f64,
    /// Named pieces of the right-hand side.
    pub terms: Vec<(String, f64)>,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub ds: f64,
    pub n_theta: usize,
}

impl IdentityReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        identity: &'static str,
        lhs: f64,
        rhs: f64,
        terms: Vec<(String, f64)>,
        f: &ScalarField2D,
        g: &ScalarField2D,
        dt: f64,
        t_final: f64,
        field: &KernelField,
    ) -> Self {
        let norm = (f.sum_sq() * g.sum_sq()).sqrt() * f.dx() * f.dx();
        let diff = (lhs - rhs).abs();
        IdentityReport {
            identity,
            lhs,
            rhs,
            gap: (lhs != 0.0).then(|| diff / lhs.abs()),
            scaled_gap: if norm > 0.0 { diff / norm } else { diff },
            terms,
            n: f.n(),
            dx: f.dx(),
            dt,
            t_final,
            ds: field.options.ds,
            n_theta: field.n_theta(),
        }
    }
}

/// Trapezoid rule over uniformly spaced samples.
fn trapezoid(v: &[f64], h: f64) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => 0.0,
        n => (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1])) * h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityOptions {
    /// Final time in units of the domain's outer radius.
    pub t_factor: f64,
    /// Spatial subsampling of the `x`-quadrature on the left-hand side.
    pub stride: usize,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            t_factor: 32.0,
            stride: 2,
        }
    }
}

/// `∫_Ω ∫₀^T u v dt dx` against `−(1/8π) ∫∫ f(x) g(y) (H_s R χ_Ω)(ñ, s̃)/‖x−y‖`,
/// with `u` from data `(f, 0)` and `v` from `(0, g)`.
pub fn check_lemma22(
    f: &ScalarField2D,
    g: &ScalarField2D,
    domain: &ConvexDomain,
    field: &KernelField,
    opts: IdentityOptions,
) -> Result<IdentityReport> {
    if !f.same_grid(g) {
        return Err(Error::ShapeMismatch("f and g must share a grid".into()));
    }
    let dx = f.dx();
    let dt = dx;
    let t_final = opts.t_factor * domain.outer_radius();
    let l = crate::forward::time_samples(t_final, dt);
    let stride = opts.stride.max(1);
    let mut xs = Vec::new();
    for i in (0..f.n()).step_by(stride) {
        for j in (0..f.n()).step_by(stride) {
            let p = f.node(i, j);
            if domain.contains(p) {
                xs.push(p);
            }
        }
    }
    let u = displacement_rows(f, &xs, dt, l)?;
    let v = velocity_data_rows(g, &xs, dt, l)?;
    let cell = (stride as f64 * dx).powi(2);
    let lhs: f64 = u
        .iter()
        .zip(&v)
        .map(|(a, b)| {
            let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            trapezoid(&prod, dt)
        })
        .sum::<f64>()
        * cell;

    let op = KernelOperator::new(field, Stage::Hilbert);
    let f_nodes = support_nodes(f);
    let g_nodes = support_nodes(g);
    let rhs = -f_nodes
        .par_iter()
        .map(|&(x, fx)| fx * op.apply_nodes(g, &g_nodes, x))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * dx
        * dx;
    Ok(IdentityReport::new("lemma22", lhs, rhs, vec![], f, g, dt, t_final, field))
}

/// `∫ f g` against `2 ∫_{∂Ω} ∫₀^T v ∂_ν u dt dσ + ∫ (K_Ω f) g`.
pub fn check_prop32(
    f: &ScalarField2D,
    g: &ScalarField2D,
    field: &KernelField,
    neumann: &TraceMatrix,
) -> Result<IdentityReport> {
    if !f.same_grid(g) {
        return Err(Error::ShapeMismatch("f and g must share a grid".into()));
    }
    if neumann.kind != TraceKind::Neumann {
        return Err(Error::invalid("trace", "needs the Neumann trace of f"));
    }
    let dx = f.dx();
    let lhs = f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>() * dx * dx;
    let det: &Arc<_> = neumann.detectors();
    let v = velocity_data_rows(g, det.points(), neumann.dt(), neumann.l())?;
    let boundary = 2.0
        * v.iter()
            .enumerate()
            .map(|(k, vk)| {
                let prod: Vec<f64> = vk.iter().zip(neumann.row(k)).map(|(a, b)| a * b).collect();
                det.weights()[k] * trapezoid(&prod, neumann.dt())
            })
            .sum::<f64>();
    let g_nodes = support_nodes(g);
    let xs: Vec<Point> = g_nodes.iter().map(|p| p.0).collect();
    let kf = KernelOperator::new(field, Stage::Kernel).apply_many(f, &xs);
    let k_term = g_nodes.iter().zip(kf).map(|((_, gv), k)| gv * k).sum::<f64>() * dx * dx;
    Ok(IdentityReport::new(
        "prop32",
        lhs,
        boundary + k_term,
        vec![("boundary".into(), boundary), ("k_term".into(), k_term)],
        f,
        g,
        neumann.dt(),
        neumann.t_final(),
        field,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeneralConvex;

    fn coarse() -> KernelOptions {
        KernelOptions {
            n_theta: 16,
            ..Default::default()
        }
    }

    #[test]
    fn geometry_pair() {
        let x = Point::new(0.1, -0.3);
        let y = Point::new(-0.4, 0.2);
        let p = GeometryPair::new(x, y).unwrap();
        assert!((p.n.norm() - 1.0).abs() < 1e-15);
        let direct = (y.norm_sq() - x.norm_sq()) / (2.0 * x.dist(y));
        assert!((p.s - direct).abs() < 1e-15);
        let q = GeometryPair::new(y, x).unwrap();
        assert!((q.s + p.s).abs() < 1e-15);
        assert!(GeometryPair::new(x, x).is_none());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = gauss_legendre_unit(POLAR_RADII);
        for k in 0..(2 * POLAR_RADII) {
            let got: f64 = q.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((got - 1.0 / (k + 1) as f64).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn disk_kernel_vanishes_and_hilbert_is_2s() {
        let disk = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        let kf = kernel_field(&disk, coarse()).unwrap();
        assert!(kf.disk_identity_error() <= 0.02, "{}", kf.disk_identity_error());
        assert!(kf.band_max_abs(Stage::Kernel) <= 0.05, "{}", kf.band_max_abs(Stage::Kernel));
    }

    #[test]
    fn ellipse_kernel_vanishes_superellipse_does_not() {
        let ell = ConvexDomain::ellipse(Point::ORIGIN, 2.0, 1.0, 0.0).unwrap();
        let ke = kernel_field(&ell, coarse()).unwrap().band_max_abs(Stage::Kernel);
        assert!(ke <= 0.05, "{ke}");
        let disk = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        let kd = kernel_field(&disk, coarse()).unwrap().band_max_abs(Stage::Kernel);
        let sq = ConvexDomain::General(GeneralConvex::superellipse(Point::ORIGIN, 1.0, 1.0, 4.0).unwrap());
        let ks = kernel_field(&sq, coarse()).unwrap().band_max_abs(Stage::Kernel);
        assert!(ks >= 10.0 * kd, "{ks} vs {kd}");
    }

    #[test]
    fn rotation_equivariance() {
        let opts = KernelOptions {
            n_theta: 24,
            ..Default::default()
        };
        let a = kernel_field(&ConvexDomain::ellipse(Point::ORIGIN, 1.0, 0.6, 0.0).unwrap(), opts).unwrap();
        let shift = 2.0 * PI * 3.0 / 24.0;
        let b = kernel_field(&ConvexDomain::ellipse(Point::ORIGIN, 1.0, 0.6, shift).unwrap(), opts).unwrap();
        for i in 0..24 {
            for j in (0..a.s_grid().count).step_by(37) {
                let x = a.hilbert.values[i][j];
                let y = b.hilbert.values[(i + 3) % 24][j];
                assert!((x - y).abs() < 1e-3, "i={i} j={j}: {x} {y}");
            }
        }
    }

    #[test]
    fn zero_field_and_outside_point() {
        let disk = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        let kf = kernel_field(&disk, coarse()).unwrap();
        let z = ScalarField2D::zeros(41, 0.05, Point::new(-1.0, -1.0));
        assert_eq!(apply_k(&kf, &z, &disk, Point::new(0.1, 0.2)).unwrap(), 0.0);
        assert!(apply_k(&kf, &z, &disk, Point::new(1.1, 0.0)).is_err());
    }

    fn bump_field(n: usize, c: Point, r0: f64) -> ScalarField2D {
        let dx = 2.0 / (n - 1) as f64;
        ScalarField2D::from_fn(n, dx, Point::new(-1.0, -1.0), |p| {
            let q2 = (p - c).norm_sq() / (r0 * r0);
            if q2 < 1.0 { (1.0 - 1.0 / (1.0 - q2)).exp() } else { 0.0 }
        })
    }

    #[test]
    fn cartesian_quadrature_matches_polar_reference() {
        let sq = ConvexDomain::General(GeneralConvex::superellipse(Point::ORIGIN, 1.0, 1.0, 4.0).unwrap());
        let kf = kernel_field(&sq, KernelOptions { n_theta: 180, ..Default::default() }).unwrap();
        let f = bump_field(101, Point::new(0.15, 0.05), 0.45);
        let op = KernelOperator::new(&kf, Stage::Kernel);
        let mut scale = 0.0_f64;
        let mut worst = 0.0_f64;
        for x in [Point::new(0.0, 0.0), Point::new(0.3, 0.2), Point::new(-0.5, 0.4), Point::new(0.15, 0.05)] {
            let a = op.apply(&f, x);
            let b = op.apply_polar(&f, x);
            scale = scale.max(b.abs());
            worst = worst.max((a - b).abs());
        }
        assert!(scale > 1e-3, "{scale}");
        assert!(worst <= 0.05 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn apply_k_is_linear() {
        let sq = ConvexDomain::General(GeneralConvex::superellipse(Point::ORIGIN, 1.0, 1.0, 4.0).unwrap());
        let kf = kernel_field(&sq, coarse()).unwrap();
        let f = bump_field(61, Point::new(0.1, 0.0), 0.4);
        let g = bump_field(61, Point::new(-0.2, 0.1), 0.3);
        let h = f.combine(2.0, &g, -0.5).unwrap();
        let x = Point::new(0.05, 0.1);
        let op = KernelOperator::new(&kf, Stage::Kernel);
        let lhs = op.apply(&h, x);
        let rhs = 2.0 * op.apply(&f, x) - 0.5 * op.apply(&g, x);
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

//! Spherical means, chord-length profiles, the Hilbert transform and
//! s-derivatives on uniform grids.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, SupportDisk};
use crate::geometry::ConvexDomain;
use crate::point::Point;

static INTERP_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of field interpolations performed by spherical means so far.
pub fn interpolation_count() -> u64 {
    INTERP_CALLS.load(Ordering::Relaxed)
}

pub fn reset_interpolation_count() {
    INTERP_CALLS.store(0, Ordering::Relaxed);
}

/// Default angular node count for a circle of radius `r` on a grid of step
/// `dx`: arc spacing of `dx/2`, at least 16 nodes.
pub fn default_angles(r: f64, dx: f64) -> usize {
    ((4.0 * PI * r / dx).ceil() as usize).max(16)
}

/// Spherical means `M f(x, r) = (1/2π) ∫_{S¹} f(x + rω) dσ(ω)` of a sampled field.
///
/// Uses the uniform angular trapezoid rule with bilinear interpolation. Only
/// nodes whose circle arc crosses the support disk of `f` are evaluated; the
/// skipped nodes contribute exact zeros.
#[derive(Debug, Clone)]
pub struct SphericalMeans<'a> {
    field: &'a ScalarField2D,
    support: Option<SupportDisk>,
    support_in_grid: bool,
}

/// Samples of `r ↦ M f(x, r)` and its centered-difference derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub means: Vec<f64>,
    pub derivative: Vec<f64>,
}

impl<'a> SphericalMeans<'a> {
    pub fn new(field: &'a ScalarField2D) -> Self {
        let support = field.support_disk();
        let support_in_grid = support.is_none_or(|s| {
            let lo = field.origin();
            let hi = field.upper();
            s.center.x - s.radius >= lo.x
                && s.center.y - s.radius >= lo.y
                && s.center.x + s.radius <= hi.x
                && s.center.y + s.radius <= hi.y
        });
        SphericalMeans {
            field,
            support,
            support_in_grid,
        }
    }

    pub fn support(&self) -> Option<SupportDisk> {
        self.support
    }

    /// Angular node index range `[lo, hi]` (may wrap) meeting the support.
    fn arc(&self, x: Point, r: f64, n: usize) -> Option<(i64, i64)> {
        let s = self.support?;
        let d = x.dist(s.center);
        if d + r <= s.radius || r == 0.0 || d == 0.0 {
            return Some((0, n as i64 - 1));
        }
        if r > d + s.radius || d > r + s.radius {
            return None;
        }
        let cos_a = ((r * r + d * d - s.radius * s.radius) / (2.0 * r * d)).clamp(-1.0, 1.0);
        let alpha = cos_a.acos();
        let beta = (s.center - x).angle();
        let scale = n as f64 / (2.0 * PI);
        let lo = ((beta - alpha) * scale).floor() as i64;
        let hi = ((beta + alpha) * scale).ceil() as i64;
        if hi - lo + 1 >= n as i64 {
            Some((0, n as i64 - 1))
        } else {
            Some((lo, hi))
        }
    }

    fn check_inside(&self, x: Point, r: f64) -> Result<()> {
        if self.support_in_grid {
            return Ok(());
        }
        let lo = self.field.origin();
        let hi = self.field.upper();
        let leaves = x.x - r < lo.x || x.y - r < lo.y || x.x + r > hi.x || x.y + r > hi.y;
        let meets = self.support.is_some_and(|s| {
            let d = x.dist(s.center);
            r <= d + s.radius && d <= r + s.radius
        });
        if leaves && meets {
            return Err(Error::precondition(format!(
                "circle of radius {r} around ({}, {}) leaves the grid where the field is nonzero",
                x.x, x.y
            )));
        }
        Ok(())
    }

    pub fn mean(&self, x: Point, r: f64, n_angles: usize) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::invalid("r", format!("radius must be non-negative, got {r}")));
        }
        if n_angles < 8 {
            return Err(Error::invalid("n_angles", format!("need at least 8, got {n_angles}")));
        }
        self.check_inside(x, r)?;
        if r == 0.0 {
            INTERP_CALLS.fetch_add(1, Ordering::Relaxed);
            return Ok(self.field.interp(x));
        }
        let Some((lo, hi)) = self.arc(x, r, n_angles) else {
            return Ok(0.0);
        };
        let step = 2.0 * PI / n_angles as f64;
        let mut acc = 0.0;
        for i in lo..=hi {
            let (s, c) = (i as f64 * step).sin_cos();
            acc += self.field.interp(x + Point::new(r * c, r * s));
        }
        INTERP_CALLS.fetch_add((hi - lo + 1) as u64, Ordering::Relaxed);
        Ok(acc / n_angles as f64)
    }

    /// Means on a uniform radius grid `r_i = i·dr`, `i = 0..count`, with
    /// `∂_r M f` by centered differences (second-order one-sided at the ends).
    pub fn profile(&self, x: Point, dr: f64, count: usize) -> Result<RadialProfile> {
        let radii: Vec<f64> = (0..count).map(|i| i as f64 * dr).collect();
        let means = radii
            .iter()
            .map(|&r| self.mean(x, r, default_angles(r, self.field.dx())))
            .collect::<Result<Vec<_>>>()?;
        let derivative = centered_derivative(&means, dr);
        Ok(RadialProfile {
            radii,
            means,
            derivative,
        })
    }
}

/// First derivative on a uniform grid; one-sided second order at the ends.
pub fn centered_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![(v[1] - v[0]) / h; 2],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
                } else if i == n - 1 {
                    (v[n - 3] - 4.0 * v[n - 2] + 3.0 * v[n - 1]) / (2.0 * h)
                } else {
                    (v[i + 1] - v[i - 1]) / (2.0 * h)
                }
            })
            .collect(),
    }
}

pub fn spherical_mean(f: &ScalarField2D, x: Point, r: f64, n_angles: usize) -> Result<f64> {
    SphericalMeans::new(f).mean(x, r, n_angles)
}

/// Spherical means over an arbitrary radius list. The derivative column is
/// only meaningful when the radii are uniformly spaced.
pub fn spherical_mean_profile(f: &ScalarField2D, x: Point, radii: &[f64]) -> Result<RadialProfile> {
    let sm = SphericalMeans::new(f);
    let means = radii
        .iter()
        .map(|&r| sm.mean(x, r, default_angles(r, f.dx())))
        .collect::<Result<Vec<_>>>()?;
    let dr = if radii.len() > 1 { radii[1] - radii[0] } else { 1.0 };
    Ok(RadialProfile {
        radii: radii.to_vec(),
        derivative: centered_derivative(&means, dr),
        means,
    })
}

/// Uniform grid `s_j = s0 + j·ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SGrid {
    pub s0: f64,
    pub ds: f64,
    pub count: usize,
}

impl SGrid {
    /// Symmetric grid over `[−smax, smax]` with `ds` spacing (0 is a node).
    pub fn symmetric(smax: f64, ds: f64) -> Self {
        let half = (smax / ds).ceil() as usize;
        SGrid {
            s0: -(half as f64) * ds,
            ds,
            count: 2 * half + 1,
        }
    }

    pub fn at(&self, j: usize) -> f64 {
        self.s0 + j as f64 * self.ds
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.at(j)).collect()
    }
}

/// Functions of `(θ, s)` sampled on a set of directions and a common s-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOnLines {
    /// Direction angles; `θ_i = (cos, sin)` of each entry.
    pub angles: Vec<f64>,
    pub s: SGrid,
    /// Row `i` holds the samples for direction `i`.
    pub values: Vec<Vec<f64>>,
}

/// `s ↦ R χ_Ω(θ, s)` on the given abscissae.
pub fn radon_indicator_profile(domain: &ConvexDomain, theta: Point, s: &[f64]) -> Vec<f64> {
    domain.chord_profile(theta, s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HilbertOptions {
    /// Zero-padding factor (≥ 4).
    pub pad_factor: usize,
    /// Standard deviation, in samples, of an optional Gaussian low-pass
    /// folded into the multiplier.
    pub smoothing: Option<f64>,
}

impl Default for HilbertOptions {
    fn default() -> Self {
        HilbertOptions {
            pad_factor: 16,
            smoothing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertOutput {
    pub values: Vec<f64>,
    /// Set when the input does not decay to `< 1e−3·max` at both ends.
    pub decay_warning: bool,
}

/// `H φ(s) = (1/π) p.v. ∫ φ(t)/(s − t) dt` via the spectral multiplier
/// `−i·sign(ξ)` on a zero-padded periodic grid.
pub fn hilbert_transform(phi: &[f64], opts: HilbertOptions) -> Result<HilbertOutput> {
    let n = phi.len();
    if n < 2 {
        return Err(Error::invalid("phi", "need at least 2 samples"));
    }
    if opts.pad_factor < 4 {
        return Err(Error::invalid("pad_factor", format!("need at least 4, got {}", opts.pad_factor)));
    }
    let max = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let decay_warning = max > 0.0 && (phi[0].abs() >= 1e-3 * max || phi[n - 1].abs() >= 1e-3 * max);
    if max == 0.0 {
        return Ok(HilbertOutput {
            values: vec![0.0; n],
            decay_warning,
        });
    }

    let len = (n * opts.pad_factor).next_power_of_two();
    let mut buf: Vec<Complex64> = phi
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        // signed frequency index
        let kk = if k <= half { k as f64 } else { k as f64 - len as f64 };
        let sign = if k == 0 || k == half { 0.0 } else { kk.signum() };
        let mut mult = Complex64::new(0.0, -sign);
        if let Some(sigma) = opts.smoothing {
            let w = 2.0 * PI * kk / len as f64 * sigma;
            mult *= (-0.5 * w * w).exp();
        }
        *c *= mult;
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    Ok(HilbertOutput {
        values: buf[..n].iter().map(|c| c.re * scale).collect(),
        decay_warning,
    })
}

/// Central second difference; second-order one-sided stencils at the ends.
pub fn second_s_derivative(phi: &[f64], ds: f64) -> Result<Vec<f64>> {
    let n = phi.len();
    if n < 5 {
        return Err(Error::invalid("phi", format!("need at least 5 samples, got {n}")));
    }
    let h2 = ds * ds;
    Ok((0..n)
        .map(|j| {
            if j == 0 {
                (2.0 * phi[0] - 5.0 * phi[1] + 4.0 * phi[2] - phi[3]) / h2
            } else if j == n - 1 {
                (2.0 * phi[n - 1] - 5.0 * phi[n - 2] + 4.0 * phi[n - 3] - phi[n - 4]) / h2
            } else {
                (phi[j - 1] - 2.0 * phi[j] + phi[j + 1]) / h2
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_field(n: usize, sigma: f64) -> ScalarField2D {
        let dx = 2.0 / (n - 1) as f64;
        ScalarField2D::from_fn(n, dx, Point::new(-1.0, -1.0), |p| (-p.norm_sq() / (sigma * sigma)).exp())
    }

    #[test]
    fn mean_of_constant_and_degenerate_radius() {
        let f = ScalarField2D::from_fn(41, 0.1, Point::new(-2.0, -2.0), |_| 3.5);
        let sm = SphericalMeans::new(&f);
        assert!((sm.mean(Point::new(0.1, 0.2), 0.7, 64).unwrap() - 3.5).abs() < 1e-12);
        let g = gaussian_field(101, 0.3);
        let x = Point::new(0.13, -0.07);
        assert_eq!(spherical_mean(&g, x, 0.0, 8).unwrap(), g.interp(x));
        assert!(spherical_mean(&g, x, 0.2, 4).is_err());
        assert!(spherical_mean(&g, x, -0.1, 16).is_err());
    }

    #[test]
    fn circle_missing_support_gives_zero() {
        let f = ScalarField2D::from_fn(101, 0.02, Point::new(-1.0, -1.0), |p| {
            let q = p.norm() / 0.5;
            if q < 1.0 { (1.0 - 1.0 / (1.0 - q * q)).exp() } else { 0.0 }
        });
        let sm = SphericalMeans::new(&f);
        let y = Point::new(1.0, 0.0);
        assert_eq!(sm.mean(y, 2.1, 512).unwrap(), 0.0);
        assert_eq!(sm.mean(y, 0.3, 512).unwrap(), 0.0);
        let p = sm.profile(y, 0.02, 1).unwrap();
        assert_eq!(p.means, vec![f.interp(y)]);
    }

    #[test]
    fn support_arc_matches_full_circle_sum() {
        let f = ScalarField2D::from_fn(101, 0.02, Point::new(-1.0, -1.0), |p| {
            let q = (p - Point::new(0.2, 0.1)).norm() / 0.4;
            if q < 1.0 { (1.0 - 1.0 / (1.0 - q * q)).exp() } else { 0.0 }
        });
        let sm = SphericalMeans::new(&f);
        let x = Point::new(-0.8, 0.5);
        for r in [0.3, 0.7, 1.1, 1.4] {
            let n = 720;
            let full: f64 = (0..n)
                .map(|i| f.interp(x + Point::unit(2.0 * PI * i as f64 / n as f64) * r))
                .sum::<f64>()
                / n as f64;
            assert!((sm.mean(x, r, n).unwrap() - full).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_circle_leaving_grid_on_support() {
        let f = ScalarField2D::from_fn(21, 0.1, Point::new(-1.0, -1.0), |_| 1.0);
        let sm = SphericalMeans::new(&f);
        assert!(sm.mean(Point::new(0.5, 0.0), 0.8, 64).is_err());
        assert!(sm.mean(Point::new(0.0, 0.0), 0.5, 64).is_ok());
    }

    #[test]
    fn hilbert_of_cosine_is_sine() {
        let ds = 0.01;
        let n = 4001;
        let s0 = -20.0;
        let w = 3.0;
        let window = |s: f64| (-(s / 8.0).powi(8)).exp();
        let phi: Vec<f64> = (0..n).map(|j| {
            let s = s0 + j as f64 * ds;
            (w * s).cos() * window(s)
        }).collect();
        let h = hilbert_transform(&phi, HilbertOptions::default()).unwrap();
        assert!(!h.decay_warning);
        for j in (0..n).step_by(50) {
            let s = s0 + j as f64 * ds;
            if s.abs() < 4.0 {
                assert!((h.values[j] - (w * s).sin()).abs() < 1e-2, "s={s}");
            }
        }
    }

    #[test]
    fn hilbert_of_zero_and_decay_flag() {
        let h = hilbert_transform(&[0.0; 64], HilbertOptions::default()).unwrap();
        assert!(h.values.iter().all(|&v| v == 0.0));
        let h = hilbert_transform(&[1.0; 64], HilbertOptions::default()).unwrap();
        assert!(h.decay_warning);
        assert!(hilbert_transform(&[1.0; 64], HilbertOptions { pad_factor: 2, smoothing: None }).is_err());
    }

    #[test]
    fn second_derivative_examples() {
        let ds = 0.01;
        let s: Vec<f64> = (0..201).map(|j| -1.0 + j as f64 * ds).collect();
        let quad: Vec<f64> = s.iter().map(|v| v * v).collect();
        assert!(second_s_derivative(&quad, ds).unwrap().iter().all(|v| (v - 2.0).abs() < 1e-8));
        let lin: Vec<f64> = s.clone();
        assert!(second_s_derivative(&lin, ds).unwrap().iter().all(|v| v.abs() < 1e-8));
        let sin: Vec<f64> = s.iter().map(|v| v.sin()).collect();
        let d2 = second_s_derivative(&sin, ds).unwrap();
        assert!(d2[100].abs() < 1e-10);
        assert!((d2[200] + 1f64.sin()).abs() < 1e-3);
        assert!(second_s_derivative(&[1.0; 4], ds).is_err());
    }

    #[test]
    fn radon_profile_of_disk() {
        let disk = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        let p = radon_indicator_profile(&disk, Point::unit(0.3), &[0.0, 0.5, 1.5, -2.0]);
        assert!((p[0] - 2.0).abs() < 1e-15);
        assert!((p[1] - 2.0 * 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(&p[2..], &[0.0, 0.0]);
        let ell = ConvexDomain::ellipse(Point::ORIGIN, 2.0, 1.0, 0.0).unwrap();
        assert!((radon_indicator_profile(&ell, Point::new(0.0, 1.0), &[0.0])[0] - 4.0).abs() < 1e-14);
    }
}

//! Smooth, compactly supported test phantoms with analytic gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField2D};
use crate::point::Point;

/// Gaussian blobs are cut off where `exp(−r²/σ²)` drops below this.
pub const GAUSSIAN_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Component {
    /// `amp · exp(k · (1 − 1/(1 − q²)))`, `q = ‖y−c‖/r₀`.
    SmoothBump {
        center: Point,
        radius: f64,
        amplitude: f64,
        exponent: f64,
    },
    /// `amp · exp(−‖y−c‖²/σ²)`, truncated at the [`GAUSSIAN_CUTOFF`] level.
    Gaussian { center: Point, sigma: f64, amplitude: f64 },
    /// `amp · S((1 − ϱ)/w)` with `ϱ` the normalized elliptic radius and `S` a
    /// C^∞ step from 0 to 1 on `[0, 1]`.
    SmoothedEllipse {
        center: Point,
        semi_axes: [f64; 2],
        angle: f64,
        amplitude: f64,
        edge: f64,
    },
    /// Indicator of a disk. Discontinuous, outside the theory; only accepted by
    /// phantoms marked `unsupported_regime`.
    Disk { center: Point, radius: f64, amplitude: f64 },
}

fn psi(x: f64) -> f64 {
    if x > 0.0 { (-1.0 / x).exp() } else { 0.0 }
}

fn dpsi(x: f64) -> f64 {
    if x > 0.0 { psi(x) / (x * x) } else { 0.0 }
}

/// C^∞ step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        psi(x) / (psi(x) + psi(1.0 - x))
    }
}

fn smooth_step_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let (a, b) = (psi(x), psi(1.0 - x));
    (dpsi(x) * b + a * dpsi(1.0 - x)) / ((a + b) * (a + b))
}

fn rotate(p: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    Point::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

impl Component {
    pub fn bump(center: Point, radius: f64, amplitude: f64) -> Self {
        Component::SmoothBump {
            center,
            radius,
            amplitude,
            exponent: 1.0,
        }
    }

    pub fn value(&self, p: Point) -> f64 {
        match *self {
            Component::SmoothBump {
                center,
                radius,
                amplitude,
                exponent,
            } => {
                let q2 = (p - center).norm_sq() / (radius * radius);
                if q2 < 1.0 {
                    amplitude * (exponent * (1.0 - 1.0 / (1.0 - q2))).exp()
                } else {
                    0.0
                }
            }
            Component::Gaussian { center, sigma, amplitude } => {
                let e = (p - center).norm_sq() / (sigma * sigma);
                if e < -GAUSSIAN_CUTOFF.ln() { amplitude * (-e).exp() } else { 0.0 }
            }
            Component::SmoothedEllipse {
                center,
                semi_axes,
                angle,
                amplitude,
                edge,
            } => {
                let u = rotate(p - center, -angle);
                let r = (u.x / semi_axes[0]).hypot(u.y / semi_axes[1]);
                amplitude * smooth_step((1.0 - r) / edge)
            }
            Component::Disk { center, radius, amplitude } => {
                if (p - center).norm() < radius { amplitude } else { 0.0 }
            }
        }
    }

    pub fn gradient(&self, p: Point) -> Point {
        match *self {
            Component::SmoothBump {
                center,
                radius,
                exponent,
                ..
            } => {
                let d = p - center;
                let q2 = d.norm_sq() / (radius * radius);
                if q2 >= 1.0 {
                    return Point::ORIGIN;
                }
                let w = 1.0 - q2;
                d * (self.value(p) * exponent * -2.0 / (radius * radius * w * w))
            }
            Component::Gaussian { center, sigma, .. } => (p - center) * (-2.0 * self.value(p) / (sigma * sigma)),
            Component::SmoothedEllipse {
                center,
                semi_axes,
                angle,
                amplitude,
                edge,
            } => {
                let u = rotate(p - center, -angle);
                let (a2, b2) = (semi_axes[0] * semi_axes[0], semi_axes[1] * semi_axes[1]);
                let r = (u.x * u.x / a2 + u.y * u.y / b2).sqrt();
                if r == 0.0 {
                    return Point::ORIGIN;
                }
                let ds = smooth_step_derivative((1.0 - r) / edge);
                if ds == 0.0 {
                    return Point::ORIGIN;
                }
                let dr = Point::new(u.x / (a2 * r), u.y / (b2 * r));
                rotate(dr, angle) * (-amplitude * ds / edge)
            }
            Component::Disk { .. } => Point::ORIGIN,
        }
    }

    /// Center and radius of a disk containing the support.
    pub fn bounding_disk(&self) -> (Point, f64) {
        match *self {
            Component::SmoothBump { center, radius, .. } => (center, radius),
            Component::Gaussian { center, sigma, .. } => (center, sigma * (-GAUSSIAN_CUTOFF.ln()).sqrt()),
            Component::SmoothedEllipse { center, semi_axes, .. } => (center, semi_axes[0].max(semi_axes[1])),
            Component::Disk { center, radius, .. } => (center, radius),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        let ok = match *self {
            Component::SmoothBump { radius, exponent, .. } => radius > 0.0 && exponent > 0.0,
            Component::Gaussian { sigma, .. } => sigma > 0.0,
            Component::SmoothedEllipse { semi_axes, edge, .. } => semi_axes[0] > 0.0 && semi_axes[1] > 0.0 && edge > 0.0 && edge <= 1.0,
            Component::Disk { radius, .. } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("phantom", format!("invalid component parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Phantom {
    pub components: Vec<Component>,
    /// Permits discontinuous components.
    #[serde(default)]
    pub unsupported_regime: bool,
}

impl Phantom {
    pub fn new(components: Vec<Component>) -> Self {
        Phantom {
            components,
            unsupported_regime: false,
        }
    }

    pub fn value(&self, p: Point) -> f64 {
        self.components.iter().map(|c| c.value(p)).sum()
    }

    pub fn gradient(&self, p: Point) -> Point {
        self.components.iter().fold(Point::ORIGIN, |acc, c| acc + c.gradient(p))
    }

    /// Every support must lie in `B_{ρ−4Δx}(z)`.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let limit = grid.radius - 4.0 * grid.dx();
        for c in &self.components {
            c.validate_shape()?;
            if matches!(c, Component::Disk { .. }) && !self.unsupported_regime {
                return Err(Error::invalid(
                    "phantom",
                    "discontinuous components require the unsupported-regime flag",
                ));
            }
            let (center, r) = c.bounding_disk();
            let reach = center.dist(grid.center) + r;
            if reach > limit {
                return Err(Error::precondition(format!(
                    "phantom component reaches radius {reach:.4} from the grid center; limit is {limit:.4} (rho - 4 dx)"
                )));
            }
        }
        Ok(())
    }
}

fn eval_on_grid(grid: &GridSpec, f: impl Fn(Point) -> f64 + Sync) -> ScalarField2D {
    let n = grid.n;
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| f(grid.node(idx / n, idx % n)))
        .collect();
    ScalarField2D::new(n, grid.dx(), grid.origin(), values).expect("phantom values are finite")
}

pub fn rasterize(phantom: &Phantom, grid: &GridSpec) -> Result<ScalarField2D> {
    phantom.validate(grid)?;
    Ok(eval_on_grid(grid, |p| phantom.value(p)))
}

/// Analytic `(∂₁f, ∂₂f)` on the grid.
pub fn rasterize_gradient(phantom: &Phantom, grid: &GridSpec) -> Result<(ScalarField2D, ScalarField2D)> {
    phantom.validate(grid)?;
    Ok((
        eval_on_grid(grid, |p| phantom.gradient(p).x),
        eval_on_grid(grid, |p| phantom.gradient(p).y),
    ))
}

/// Head-like composition scaled to the grid's disk: a smooth skull shell,
/// two interior ellipses and three small bumps. Its maximum is exactly 1.
pub fn head_phantom(grid: &GridSpec) -> Phantom {
    let z = grid.center;
    let r = grid.radius;
    let at = |x: f64, y: f64| z + Point::new(x, y) * r;
    let ellipse = |x, y, a: f64, b: f64, angle, amplitude, edge| Component::SmoothedEllipse {
        center: at(x, y),
        semi_axes: [a * r, b * r],
        angle,
        amplitude,
        edge,
    };
    Phantom::new(vec![
        ellipse(0.0, 0.0, 0.72, 0.88, 0.0, 1.0, 0.15),
        ellipse(0.0, -0.01, 0.60, 0.75, 0.0, -0.75, 0.15),
        ellipse(-0.22, 0.1, 0.14, 0.32, 0.3, 0.3, 0.5),
        ellipse(0.22, 0.1, 0.14, 0.32, -0.3, 0.3, 0.5),
        Component::bump(at(0.0, -0.4), 0.12 * r, 0.35),
        Component::bump(at(-0.15, -0.3), 0.07 * r, 0.3),
        Component::bump(at(0.3, -0.35), 0.08 * r, 0.3),
    ])
}

/// [`head_phantom`] rasterized and normalized to maximum 1.
pub fn head_phantom_like(grid: &GridSpec) -> Result<ScalarField2D> {
    let f = rasterize(&head_phantom(grid), grid)?;
    let max = f.max_abs();
    Ok(f.scaled(1.0 / max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(n, 1.0, Point::ORIGIN).unwrap()
    }

    /// Composite Gauss–Legendre in the radial variable.
    fn radial_integral(f: impl Fn(f64) -> f64, r_max: f64) -> f64 {
        const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let panels = 20_000;
        let h = r_max / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let c = (i as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                let r = c + 0.5 * h * x;
                acc += w * f(r) * r;
            }
        }
        acc * 0.5 * h * 2.0 * std::f64::consts::PI
    }

    #[test]
    fn bump_values_and_integral() {
        let c = Component::bump(Point::new(0.1, -0.2), 0.5, 1.0);
        assert_eq!(c.value(Point::new(0.1, -0.2)), 1.0);
        assert_eq!(c.value(Point::new(0.7, -0.2)), 0.0);
        let want = radial_integral(|r| c.value(Point::new(0.1 + r, -0.2)), 0.5);
        assert!((want - 0.317_028).abs() < 1e-6, "{want}");
        let f = rasterize(&Phantom::new(vec![c.clone()]), &unit_grid(401)).unwrap();
        assert!((f.integral() - want).abs() < 1e-6);
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let p = Phantom::new(vec![Component::bump(Point::ORIGIN, 0.4, 0.0)]);
        assert_eq!(rasterize(&p, &unit_grid(51)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn support_violations_are_rejected() {
        let grid = unit_grid(101);
        let p = Phantom::new(vec![Component::bump(Point::new(0.5, 0.0), 0.45, 1.0)]);
        assert!(rasterize(&p, &grid).is_err());
        let g = |sigma| Phantom::new(vec![Component::Gaussian {
            center: Point::ORIGIN,
            sigma,
            amplitude: 1.0,
        }]);
        assert!(rasterize(&g(0.2), &unit_grid(201)).is_err());
        assert!(rasterize(&g(0.15), &unit_grid(201)).is_ok());
        let disk = Phantom::new(vec![Component::Disk {
            center: Point::ORIGIN,
            radius: 0.3,
            amplitude: 1.0,
        }]);
        assert!(rasterize(&disk, &grid).is_err());
        let allowed = Phantom {
            unsupported_regime: true,
            ..disk
        };
        assert!(rasterize(&allowed, &grid).is_ok());
    }

    fn fd_gradient_error(n: usize, p: &Phantom) -> f64 {
        let grid = unit_grid(n);
        let f = rasterize(p, &grid).unwrap();
        let (gx, gy) = rasterize_gradient(p, &grid).unwrap();
        let (fx, fy) = f.gradient();
        gx.values()
            .iter()
            .zip(fx.values())
            .chain(gy.values().iter().zip(fy.values()))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = Phantom::new(vec![Component::bump(Point::new(0.05, 0.1), 0.5, 1.0)]);
        let coarse = fd_gradient_error(401, &p);
        let fine = fd_gradient_error(801, &p);
        assert!(coarse <= 2e-2, "{coarse}");
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
        assert_eq!(p.gradient(Point::new(0.05, 0.1)), Point::ORIGIN);
    }

    #[test]
    fn bump_gradient_is_radial() {
        let c = Component::bump(Point::new(0.2, 0.3), 0.4, 2.0);
        for k in 0..20 {
            let p = Point::new(0.2, 0.3) + Point::unit(k as f64 * 0.3) * (0.02 * k as f64);
            let g = c.gradient(p);
            assert!(g.cross(p - Point::new(0.2, 0.3)).abs() <= 1e-12);
        }
    }

    #[test]
    fn smoothed_ellipse_gradient_by_differences() {
        let c = Component::SmoothedEllipse {
            center: Point::new(0.1, 0.0),
            semi_axes: [0.5, 0.3],
            angle: 0.4,
            amplitude: 1.5,
            edge: 0.3,
        };
        let h = 1e-6;
        for k in 0..40 {
            let p = Point::new(0.1, 0.0) + Point::unit(k as f64 * 0.37) * (0.012 * k as f64);
            let fd = Point::new(
                (c.value(p + Point::new(h, 0.0)) - c.value(p - Point::new(h, 0.0))) / (2.0 * h),
                (c.value(p + Point::new(0.0, h)) - c.value(p - Point::new(0.0, h))) / (2.0 * h),
            );
            assert!((fd - c.gradient(p)).norm() < 1e-5 * (1.0 + fd.norm()), "{p:?}");
        }
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn head_phantom_normalized_deterministic_and_supported() {
        let grid = unit_grid(301);
        let a = head_phantom_like(&grid).unwrap();
        let b = head_phantom_like(&grid).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.max_abs(), 1.0);
        assert!(a.min_max().0 >= 0.0);
        let limit = 1.0 - 4.0 * grid.dx();
        for i in 0..grid.n {
            for j in 0..grid.n {
                if grid.node(i, j).norm() >= limit {
                    assert_eq!(a.get(i, j), 0.0);
                }
            }
        }
    }
}

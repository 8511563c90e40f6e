//! Scalar fields sampled on uniform square grids.
//!
//! Sample `(i, j)` sits at `origin + (i·Δx, j·Δx)` (zero-based), with `i`
//! running along the first coordinate. Values are stored row-major in `i`:
//! `values[i * n + j]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Square reconstruction grid `[z − ρ, z + ρ]²` with `N` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub radius: f64,
    pub center: Point,
}

impl GridSpec {
    pub fn new(n: usize, radius: f64, center: Point) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("n", format!("need at least 3 samples, got {n}")));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        Ok(GridSpec { n, radius, center })
    }

    /// `Δx = 2ρ/(N − 1)`.
    pub fn dx(&self) -> f64 {
        2.0 * self.radius / (self.n - 1) as f64
    }

    pub fn origin(&self) -> Point {
        self.center - Point::new(self.radius, self.radius)
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let dx = self.dx();
        self.origin() + Point::new(i as f64 * dx, j as f64 * dx)
    }

    pub fn zeros(&self) -> ScalarField2D {
        ScalarField2D::zeros(self.n, self.dx(), self.origin())
    }
}

/// A disk enclosing every sample of a field above the support threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportDisk {
    pub center: Point,
    pub radius: f64,
}

/// Relative magnitude below which samples count as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2D {
    n: usize,
    dx: f64,
    origin: Point,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(n: usize, dx: f64, origin: Point, values: Vec<f64>) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("n", format!("need at least 3 samples, got {n}")));
        }
        if !(dx > 0.0) {
            return Err(Error::invalid("dx", format!("must be positive, got {dx}")));
        }
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {n}x{n} grid, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "contains NaN or infinity"));
        }
        Ok(ScalarField2D {
            n,
            dx,
            origin,
            values,
        })
    }

    pub fn zeros(n: usize, dx: f64, origin: Point) -> Self {
        ScalarField2D {
            n,
            dx,
            origin,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, dx: f64, origin: Point, mut f: impl FnMut(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(origin + Point::new(i as f64 * dx, j as f64 * dx)));
            }
        }
        ScalarField2D {
            n,
            dx,
            origin,
            values,
        }
    }

    pub fn on_grid(grid: &GridSpec, f: impl FnMut(Point) -> f64) -> Self {
        Self::from_fn(grid.n, grid.dx(), grid.origin(), f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        self.origin + Point::new(i as f64 * self.dx, j as f64 * self.dx)
    }

    /// Coordinate of the last sample along each axis.
    pub fn upper(&self) -> Point {
        let ext = (self.n - 1) as f64 * self.dx;
        self.origin + Point::new(ext, ext)
    }

    pub fn same_grid(&self, other: &ScalarField2D) -> bool {
        self.n == other.n && self.dx == other.dx && self.origin == other.origin
    }

    /// Bilinear interpolation; zero outside the sampled square.
    pub fn interp(&self, p: Point) -> f64 {
        let u = (p.x - self.origin.x) / self.dx;
        let v = (p.y - self.origin.y) / self.dx;
        let last = (self.n - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= last && v <= last) {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.n - 2);
        let j = (v.floor() as usize).min(self.n - 2);
        let fu = u - i as f64;
        let fv = v - j as f64;
        let row0 = i * self.n + j;
        let row1 = row0 + self.n;
        let a = self.values[row0];
        let b = self.values[row0 + 1];
        let c = self.values[row1];
        let d = self.values[row1 + 1];
        (1.0 - fu) * ((1.0 - fv) * a + fv * b) + fu * ((1.0 - fv) * c + fv * d)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `∫ f dA` by the rectangle rule over the grid nodes.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dx
    }

    /// Enclosing disk of all samples with `|v| > SUPPORT_THRESHOLD · max|v|`,
    /// enlarged by one cell diagonal. `None` for the zero field.
    pub fn support_disk(&self) -> Option<SupportDisk> {
        let max = self.max_abs();
        if max == 0.0 {
            return None;
        }
        let thr = SUPPORT_THRESHOLD * max;
        let (mut ilo, mut ihi, mut jlo, mut jhi) = (usize::MAX, 0, usize::MAX, 0);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j).abs() > thr {
                    ilo = ilo.min(i);
                    ihi = ihi.max(i);
                    jlo = jlo.min(j);
                    jhi = jhi.max(j);
                }
            }
        }
        let center = self.origin
            + Point::new(
                0.5 * (ilo + ihi) as f64 * self.dx,
                0.5 * (jlo + jhi) as f64 * self.dx,
            );
        let mut r2 = 0.0_f64;
        for i in ilo..=ihi {
            for j in jlo..=jhi {
                if self.get(i, j).abs() > thr {
                    r2 = r2.max((self.node(i, j) - center).norm_sq());
                }
            }
        }
        Some(SupportDisk {
            center,
            radius: r2.sqrt() + std::f64::consts::SQRT_2 * self.dx,
        })
    }

    /// Centered-difference gradient, second-order one-sided at the edges.
    pub fn gradient(&self) -> (ScalarField2D, ScalarField2D) {
        let n = self.n;
        let h = self.dx;
        let mut gx = ScalarField2D::zeros(n, h, self.origin);
        let mut gy = gx.clone();
        let d = |a: f64, b: f64, c: f64, idx: usize| -> f64 {
            // a, b, c are samples at idx-1, idx, idx+1 (or the one-sided triple)
            if idx == 0 {
                (-3.0 * a + 4.0 * b - c) / (2.0 * h)
            } else if idx == n - 1 {
                (a - 4.0 * b + 3.0 * c) / (2.0 * h)
            } else {
                (c - a) / (2.0 * h)
            }
        };
        for i in 0..n {
            for j in 0..n {
                let vx = if i == 0 {
                    d(self.get(0, j), self.get(1, j), self.get(2, j), 0)
                } else if i == n - 1 {
                    d(self.get(n - 3, j), self.get(n - 2, j), self.get(n - 1, j), n - 1)
                } else {
                    d(self.get(i - 1, j), 0.0, self.get(i + 1, j), i)
                };
                let vy = if j == 0 {
                    d(self.get(i, 0), self.get(i, 1), self.get(i, 2), 0)
                } else if j == n - 1 {
                    d(self.get(i, n - 3), self.get(i, n - 2), self.get(i, n - 1), n - 1)
                } else {
                    d(self.get(i, j - 1), 0.0, self.get(i, j + 1), j)
                };
                gx.set(i, j, vx);
                gy.set(i, j, vy);
            }
        }
        (gx, gy)
    }

    /// Extends the grid by `cells` zero samples on every side.
    pub fn padded(&self, cells: usize) -> ScalarField2D {
        let m = self.n + 2 * cells;
        let origin = self.origin - Point::new(cells as f64 * self.dx, cells as f64 * self.dx);
        let mut out = ScalarField2D::zeros(m, self.dx, origin);
        for i in 0..self.n {
            let src = &self.values[i * self.n..(i + 1) * self.n];
            let start = (i + cells) * m + cells;
            out.values[start..start + self.n].copy_from_slice(src);
        }
        out
    }

    /// `α·self + β·other` on a common grid.
    pub fn combine(&self, alpha: f64, other: &ScalarField2D, beta: f64) -> Result<ScalarField2D> {
        if !self.same_grid(other) {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(ScalarField2D {
            values,
            ..self.clone()
        })
    }

    pub fn scaled(&self, s: f64) -> ScalarField2D {
        ScalarField2D {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

//! Measurement domains, chord lengths and detector arrays.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Boundary curve `φ ↦ (γ(φ), γ'(φ))` on `[0, 2π)`, positively oriented.
pub type CurveFn = dyn Fn(f64) -> (Point, Point) + Send + Sync;

/// Number of boundary samples cached for containment and bracketing.
const GENERAL_SAMPLES: usize = 4096;

/// A smooth convex body given by a parametrized boundary.
#[derive(Clone)]
pub struct GeneralConvex {
    curve: Arc<CurveFn>,
    label: String,
    samples: Vec<Point>,
    // polar angles of `samples` about `centroid`, unwrapped and increasing
    angles: Vec<f64>,
    centroid: Point,
}

impl fmt::Debug for GeneralConvex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralConvex")
            .field("label", &self.label)
            .field("centroid", &self.centroid)
            .finish()
    }
}

impl GeneralConvex {
    /// Builds a domain from its boundary parametrization and derivative.
    /// Rejects curves that are not convex and positively oriented.
    pub fn new(
        label: impl Into<String>,
        curve: impl Fn(f64) -> (Point, Point) + Send + Sync + 'static,
    ) -> Result<Self> {
        let curve: Arc<CurveFn> = Arc::new(curve);
        let n = GENERAL_SAMPLES;
        let samples: Vec<Point> = (0..n)
            .map(|k| curve(2.0 * PI * k as f64 / n as f64).0)
            .collect();
        let scale = samples.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
        for k in 0..n {
            let a = samples[k];
            let b = samples[(k + 1) % n];
            let c = samples[(k + 2) % n];
            if (b - a).cross(c - b) < -1e-12 * scale * scale {
                return Err(Error::invalid(
                    "curve",
                    format!("boundary is not convex and positively oriented near sample {k}"),
                ));
            }
        }
        let centroid = samples.iter().fold(Point::ORIGIN, |acc, &p| acc + p) * (1.0 / n as f64);
        let mut angles = Vec::with_capacity(n);
        let mut prev = (samples[0] - centroid).angle();
        angles.push(prev);
        for p in &samples[1..] {
            let mut a = (*p - centroid).angle();
            while a < prev {
                a += 2.0 * PI;
            }
            angles.push(a);
            prev = a;
        }
        Ok(GeneralConvex {
            curve,
            label: label.into(),
            samples,
            angles,
            centroid,
        })
    }

    /// Superellipse `|x/a|^p + |y/b|^p = 1` around `center`, parametrized by
    /// polar angle. Even `p` gives an analytic boundary.
    pub fn superellipse(center: Point, a: f64, b: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::invalid("semi_axes", "must be positive"));
        }
        if !(p >= 2.0) {
            return Err(Error::invalid("exponent", format!("need p >= 2 for convexity, got {p}")));
        }
        let curve = move |phi: f64| {
            let (s, c) = phi.sin_cos();
            let ca = (c / a).abs();
            let sb = (s / b).abs();
            let g = ca.powf(p) + sb.powf(p);
            let dg = p * ca.powf(p - 1.0) * c.signum() * (-s) / a
                + p * sb.powf(p - 1.0) * s.signum() * c / b;
            let r = g.powf(-1.0 / p);
            let dr = -(1.0 / p) * g.powf(-1.0 / p - 1.0) * dg;
            let pos = center + Point::new(r * c, r * s);
            let der = Point::new(dr * c - r * s, dr * s + r * c);
            (pos, der)
        };
        Self::new(format!("superellipse a={a} b={b} p={p} center=({}, {})", center.x, center.y), curve)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, phi: f64) -> (Point, Point) {
        (self.curve)(phi)
    }

    fn contains(&self, p: Point) -> bool {
        let n = self.samples.len();
        let mut a = (p - self.centroid).angle();
        while a < self.angles[0] {
            a += 2.0 * PI;
        }
        // segment k spans angles[k]..angles[k+1] (wrapping)
        let k = match self.angles.partition_point(|&x| x <= a) {
            0 => n - 1,
            idx => idx - 1,
        };
        let v0 = self.samples[k];
        let v1 = self.samples[(k + 1) % n];
        (v1 - v0).cross(p - v0) > 0.0
    }

    fn parameter(k: usize) -> f64 {
        2.0 * PI * k as f64 / GENERAL_SAMPLES as f64
    }

    /// Parameter maximizing `⟨γ(φ), θ⟩`, refined by golden-section search.
    fn extremal_parameter(&self, theta: Point) -> f64 {
        let (kmax, _) = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, p)| (k, p.dot(theta)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let h = 2.0 * PI / GENERAL_SAMPLES as f64;
        let (mut lo, mut hi) = (Self::parameter(kmax) - h, Self::parameter(kmax) + h);
        let g = |phi: f64| self.eval(phi).0.dot(theta);
        let inv = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let m1 = hi - inv * (hi - lo);
            let m2 = lo + inv * (hi - lo);
            if g(m1) < g(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        0.5 * (lo + hi)
    }

    fn support_interval(&self, theta: Point) -> (f64, f64) {
        let hi = self.eval(self.extremal_parameter(theta)).0.dot(theta);
        let lo = self.eval(self.extremal_parameter(-theta)).0.dot(theta);
        (lo, hi)
    }

    /// Bisection for `⟨γ(φ), θ⟩ = s` on `[a, b]` where the sign changes.
    fn bisect(&self, theta: Point, s: f64, mut a: f64, mut b: f64) -> f64 {
        let h = |phi: f64| self.eval(phi).0.dot(theta) - s;
        let mut ha = h(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let hm = h(m);
            if (hm > 0.0) == (ha > 0.0) {
                a = m;
                ha = hm;
            } else {
                b = m;
            }
            if (b - a).abs() <= 1e-12 * (1.0 + a.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }

    fn chord_length(&self, theta: Point, s: f64) -> f64 {
        let phi_max = self.extremal_parameter(theta);
        let phi_min = self.extremal_parameter(-theta);
        let (lo, hi) = (
            self.eval(phi_min).0.dot(theta),
            self.eval(phi_max).0.dot(theta),
        );
        if !(s > lo && s < hi) {
            return 0.0;
        }
        // ⟨γ, θ⟩ increases on phi_min → phi_max and decreases on phi_max → phi_min + 2π
        let mut up_end = phi_max;
        while up_end < phi_min {
            up_end += 2.0 * PI;
        }
        let mut down_end = phi_min;
        while down_end < up_end {
            down_end += 2.0 * PI;
        }
        let p1 = self.eval(self.bisect(theta, s, phi_min, up_end)).0;
        let p2 = self.eval(self.bisect(theta, s, up_end, down_end)).0;
        (p1 - p2).dot(theta.perp()).abs()
    }

    /// Chord lengths for many offsets along one direction: the extremal
    /// parameters are found once and each root is bracketed from the cached
    /// samples before an Illinois false-position refinement.
    fn chord_profile(&self, theta: Point, offsets: &[f64]) -> Vec<f64> {
        let phi_max = self.extremal_parameter(theta);
        let phi_min = self.extremal_parameter(-theta);
        let lo = self.eval(phi_min).0.dot(theta);
        let hi = self.eval(phi_max).0.dot(theta);
        let mut up_end = phi_max;
        while up_end < phi_min {
            up_end += 2.0 * PI;
        }
        let mut down_end = phi_min;
        while down_end < up_end {
            down_end += 2.0 * PI;
        }
        let h = 2.0 * PI / GENERAL_SAMPLES as f64;
        let g = |phi: f64| self.eval(phi).0.dot(theta);
        let arc = |a: f64, b: f64| -> Vec<(f64, f64)> {
            let mut nodes = vec![(a, g(a))];
            let mut k = (a / h).floor() as i64 + 1;
            while (k as f64) * h < b {
                let phi = k as f64 * h;
                nodes.push((phi, g(phi)));
                k += 1;
            }
            nodes.push((b, g(b)));
            nodes
        };
        let up = arc(phi_min, up_end);
        let down = arc(up_end, down_end);
        let root = |nodes: &[(f64, f64)], s: f64, increasing: bool| -> Point {
            let i = nodes
                .partition_point(|&(_, v)| if increasing { v <= s } else { v >= s })
                .clamp(1, nodes.len() - 1);
            let (mut a, mut fa) = (nodes[i - 1].0, nodes[i - 1].1 - s);
            let (mut b, mut fb) = (nodes[i].0, nodes[i].1 - s);
            let mut side = 0;
            for _ in 0..100 {
                if fa == fb || (b - a).abs() <= 1e-14 {
                    break;
                }
                let c = (a * fb - b * fa) / (fb - fa);
                let fc = g(c) - s;
                if fc == 0.0 {
                    return self.eval(c).0;
                }
                if (fc > 0.0) == (fb > 0.0) {
                    b = c;
                    fb = fc;
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                } else {
                    a = c;
                    fa = fc;
                    if side == -1 {
                        fb *= 0.5;
                    }
                    side = -1;
                }
                if fc.abs() <= 1e-15 {
                    break;
                }
            }
            let c = if fa == fb { 0.5 * (a + b) } else { (a * fb - b * fa) / (fb - fa) };
            self.eval(c).0
        };
        offsets
            .iter()
            .map(|&s| {
                if !(s > lo && s < hi) {
                    return 0.0;
                }
                let p1 = root(&up, s, true);
                let p2 = root(&down, s, false);
                (p1 - p2).dot(theta.perp()).abs()
            })
            .collect()
    }
}

/// The measurement domain Ω.
#[derive(Debug, Clone)]
pub enum ConvexDomain {
    Circle {
        center: Point,
        radius: f64,
    },
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
        /// Orthogonal matrix `Q`, row-major.
        rotation: [[f64; 2]; 2],
    },
    General(GeneralConvex),
}

/// Serializable description used in sidecars and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainDescription {
    Circle { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], semi_axes: [f64; 2], angle: f64 },
    Superellipse { center: [f64; 2], semi_axes: [f64; 2], exponent: f64 },
}

impl DomainDescription {
    pub fn build(&self) -> Result<ConvexDomain> {
        match *self {
            DomainDescription::Circle { center, radius } => ConvexDomain::circle(center.into(), radius),
            DomainDescription::Ellipse { center, semi_axes, angle } => {
                ConvexDomain::ellipse(center.into(), semi_axes[0], semi_axes[1], angle)
            }
            DomainDescription::Superellipse { center, semi_axes, exponent } => Ok(ConvexDomain::General(
                GeneralConvex::superellipse(center.into(), semi_axes[0], semi_axes[1], exponent)?,
            )),
        }
    }
}

fn rotation_matrix(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

fn apply(q: &[[f64; 2]; 2], p: Point) -> Point {
    Point::new(q[0][0] * p.x + q[0][1] * p.y, q[1][0] * p.x + q[1][1] * p.y)
}

fn apply_transpose(q: &[[f64; 2]; 2], p: Point) -> Point {
    Point::new(q[0][0] * p.x + q[1][0] * p.y, q[0][1] * p.x + q[1][1] * p.y)
}

fn det(q: &[[f64; 2]; 2]) -> f64 {
    q[0][0] * q[1][1] - q[0][1] * q[1][0]
}

impl ConvexDomain {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        Ok(ConvexDomain::Circle { center, radius })
    }

    /// Ellipse with semi-axes `e1, e2` rotated counter-clockwise by `angle`.
    pub fn ellipse(center: Point, e1: f64, e2: f64, angle: f64) -> Result<Self> {
        Self::ellipse_with_matrix(center, e1, e2, rotation_matrix(angle))
    }

    pub fn ellipse_with_matrix(center: Point, e1: f64, e2: f64, q: [[f64; 2]; 2]) -> Result<Self> {
        if !(e1 > 0.0 && e2 > 0.0) {
            return Err(Error::invalid("semi_axes", format!("must be positive, got ({e1}, {e2})")));
        }
        // ‖QᵀQ − I‖_max ≤ 1e−12
        let qtq = [
            [
                q[0][0] * q[0][0] + q[1][0] * q[1][0] - 1.0,
                q[0][0] * q[0][1] + q[1][0] * q[1][1],
            ],
            [
                q[0][1] * q[0][0] + q[1][1] * q[1][0],
                q[0][1] * q[0][1] + q[1][1] * q[1][1] - 1.0,
            ],
        ];
        if qtq.iter().flatten().any(|v| v.abs() > 1e-12) {
            return Err(Error::invalid("rotation", "matrix is not orthogonal"));
        }
        Ok(ConvexDomain::Ellipse {
            center,
            semi_axes: [e1, e2],
            rotation: q,
        })
    }

    pub fn description(&self) -> Option<DomainDescription> {
        match self {
            ConvexDomain::Circle { center, radius } => Some(DomainDescription::Circle {
                center: [center.x, center.y],
                radius: *radius,
            }),
            ConvexDomain::Ellipse { center, semi_axes, rotation } => Some(DomainDescription::Ellipse {
                center: [center.x, center.y],
                semi_axes: *semi_axes,
                angle: rotation[1][0].atan2(rotation[0][0]),
            }),
            ConvexDomain::General(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConvexDomain::Circle { center, radius } => {
                format!("circle r={radius} center=({}, {})", center.x, center.y)
            }
            ConvexDomain::Ellipse { center, semi_axes, .. } => format!(
                "ellipse e=({}, {}) center=({}, {})",
                semi_axes[0], semi_axes[1], center.x, center.y
            ),
            ConvexDomain::General(g) => g.label().to_string(),
        }
    }

    pub fn center(&self) -> Point {
        match self {
            ConvexDomain::Circle { center, .. } | ConvexDomain::Ellipse { center, .. } => *center,
            ConvexDomain::General(g) => g.centroid,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, ConvexDomain::Circle { .. })
    }

    pub fn is_circle_or_ellipse(&self) -> bool {
        !matches!(self, ConvexDomain::General(_))
    }

    /// Boundary point and derivative at parameter `phi`, positively oriented.
    pub fn boundary(&self, phi: f64) -> (Point, Point) {
        let (s, c) = phi.sin_cos();
        match self {
            ConvexDomain::Circle { center, radius } => (
                *center + Point::new(c, s) * *radius,
                Point::new(-s, c) * *radius,
            ),
            ConvexDomain::Ellipse { center, semi_axes, rotation } => {
                let [e1, e2] = *semi_axes;
                // orientation-reversing Q flips the traversal; undo it
                let sign = det(rotation).signum();
                let pos = *center + apply(rotation, Point::new(e1 * c, sign * e2 * s));
                let der = apply(rotation, Point::new(-e1 * s, sign * e2 * c));
                (pos, der)
            }
            ConvexDomain::General(g) => g.eval(phi),
        }
    }

    /// Outward unit normal at parameter `phi`.
    pub fn normal(&self, phi: f64) -> Point {
        let (_, d) = self.boundary(phi);
        Point::new(d.y, -d.x).normalized()
    }

    pub fn area(&self) -> f64 {
        match self {
            ConvexDomain::Circle { radius, .. } => PI * radius * radius,
            ConvexDomain::Ellipse { semi_axes, .. } => PI * semi_axes[0] * semi_axes[1],
            ConvexDomain::General(_) => {
                // ½∮ γ × γ' dφ, periodic trapezoid
                let n = GENERAL_SAMPLES;
                let c = self.center();
                (0..n)
                    .map(|k| {
                        let (p, d) = self.boundary(2.0 * PI * k as f64 / n as f64);
                        (p - c).cross(d)
                    })
                    .sum::<f64>()
                    * PI
                    / n as f64
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            ConvexDomain::Circle { radius, .. } => 2.0 * PI * radius,
            _ => {
                let n = GENERAL_SAMPLES;
                (0..n)
                    .map(|k| self.boundary(2.0 * PI * k as f64 / n as f64).1.norm())
                    .sum::<f64>()
                    * 2.0
                    * PI
                    / n as f64
            }
        }
    }

    /// Largest distance from [`center`](Self::center) to the boundary.
    pub fn outer_radius(&self) -> f64 {
        match self {
            ConvexDomain::Circle { radius, .. } => *radius,
            ConvexDomain::Ellipse { semi_axes, .. } => semi_axes[0].max(semi_axes[1]),
            ConvexDomain::General(g) => g
                .samples
                .iter()
                .map(|p| p.dist(g.centroid))
                .fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            ConvexDomain::Circle { center, radius } => (p - *center).norm_sq() < radius * radius,
            ConvexDomain::Ellipse { center, semi_axes, rotation } => {
                let q = apply_transpose(rotation, p - *center);
                (q.x / semi_axes[0]).powi(2) + (q.y / semi_axes[1]).powi(2) < 1.0
            }
            ConvexDomain::General(g) => g.contains(p),
        }
    }

    /// Range `[min, max]` of `⟨y, θ⟩` over `y ∈ Ω`.
    pub fn support_interval(&self, theta: Point) -> (f64, f64) {
        match self {
            ConvexDomain::Circle { center, radius } => {
                let m = center.dot(theta);
                (m - radius, m + radius)
            }
            ConvexDomain::Ellipse { center, semi_axes, rotation } => {
                let t = apply_transpose(rotation, theta);
                let e = ((semi_axes[0] * t.x).powi(2) + (semi_axes[1] * t.y).powi(2)).sqrt();
                let m = center.dot(theta);
                (m - e, m + e)
            }
            ConvexDomain::General(g) => g.support_interval(theta),
        }
    }

    /// `R χ_Ω(θ, s_j)` for many offsets along one direction.
    pub fn chord_profile(&self, theta: Point, offsets: &[f64]) -> Vec<f64> {
        match self {
            ConvexDomain::General(g) => g.chord_profile(theta, offsets),
            _ => offsets.iter().map(|&s| self.chord_length(theta, s)).collect(),
        }
    }

    /// Length of `{sθ + aθ^⊥ : a ∈ ℝ} ∩ Ω`, i.e. `R χ_Ω(θ, s)`.
    pub fn chord_length(&self, theta: Point, s: f64) -> f64 {
        match self {
            ConvexDomain::Circle { center, radius } => {
                let sb = s - center.dot(theta);
                2.0 * (radius * radius - sb * sb).max(0.0).sqrt()
            }
            ConvexDomain::Ellipse { center, semi_axes, rotation } => {
                let [e1, e2] = *semi_axes;
                let t = apply_transpose(rotation, theta);
                let e_sq = (e1 * t.x).powi(2) + (e2 * t.y).powi(2);
                let sb = s - center.dot(theta);
                2.0 * e1 * e2 / e_sq * (e_sq - sb * sb).max(0.0).sqrt()
            }
            ConvexDomain::General(g) => g.chord_length(theta, s),
        }
    }
}

/// Quadrature weights at the duplicated endpoint `φ_1 = 0 ≡ φ_M = 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Half weights at `k = 1` and `k = M`, so `Σ w_k` is the closed trapezoid rule.
    #[default]
    Trapezoid,
    /// Equal weights `‖γ'(φ_k)‖ Δφ` for every detector, including both endpoints.
    Uniform,
}

/// Detector points `y_k` on `∂Ω` with outward normals and arc-length weights.
#[derive(Debug, Clone)]
pub struct DetectorArray {
    domain: ConvexDomain,
    points: Vec<Point>,
    normals: Vec<Point>,
    weights: Vec<f64>,
    rule: WeightRule,
}

impl DetectorArray {
    /// `M` detectors at `φ_k = (k−1)·2π/(M−1)`, `k = 1..M`.
    pub fn on_boundary(domain: &ConvexDomain, m: usize, rule: WeightRule) -> Result<Self> {
        if m < 3 {
            return Err(Error::invalid("m", format!("need at least 3 detectors, got {m}")));
        }
        let dphi = 2.0 * PI / (m - 1) as f64;
        let mut points = Vec::with_capacity(m);
        let mut normals = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for k in 0..m {
            let phi = k as f64 * dphi;
            let (p, d) = domain.boundary(phi);
            points.push(p);
            normals.push(Point::new(d.y, -d.x).normalized());
            let end = k == 0 || k == m - 1;
            let w = d.norm() * dphi;
            weights.push(if end && rule == WeightRule::Trapezoid { 0.5 * w } else { w });
        }
        Ok(DetectorArray {
            domain: domain.clone(),
            points,
            normals,
            weights,
            rule,
        })
    }

    /// Circle detectors with `M = ⌈2ρπ/Δx⌉`.
    pub fn circle(radius: f64, center: Point, dx: f64, rule: WeightRule) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::invalid("dx", format!("must be positive, got {dx}")));
        }
        let domain = ConvexDomain::circle(center, radius)?;
        if dx >= 2.0 * radius * PI {
            return Err(Error::invalid("dx", "step too large: fewer than 2 detectors"));
        }
        let m = circle_detector_count(radius, dx).max(3);
        Self::on_boundary(&domain, m, rule)
    }

    pub fn ellipse(
        e1: f64,
        e2: f64,
        rotation: [[f64; 2]; 2],
        center: Point,
        m: usize,
        rule: WeightRule,
    ) -> Result<Self> {
        let domain = ConvexDomain::ellipse_with_matrix(center, e1, e2, rotation)?;
        Self::on_boundary(&domain, m, rule)
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `M = ⌈2ρπ/Δx⌉`.
pub fn circle_detector_count(radius: f64, dx: f64) -> usize {
    (2.0 * radius * PI / dx).ceil() as usize
}

/// Spec-named entry point: circle detectors with trapezoid endpoint weights.
pub fn build_circle_detectors(radius: f64, center: Point, dx: f64) -> Result<DetectorArray> {
    DetectorArray::circle(radius, center, dx, WeightRule::Trapezoid)
}

pub fn build_ellipse_detectors(
    e1: f64,
    e2: f64,
    rotation: [[f64; 2]; 2],
    center: Point,
    m: usize,
) -> Result<DetectorArray> {
    DetectorArray::ellipse(e1, e2, rotation, center, m, WeightRule::Trapezoid)
}

pub fn chord_length(domain: &ConvexDomain, theta: Point, s: f64) -> f64 {
    domain.chord_length(theta, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const I2: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn circle_detector_layout() {
        let d = build_circle_detectors(1.0, Point::ORIGIN, 2.0 * PI / 99.0).unwrap();
        assert_eq!(d.len(), 99);
        assert_eq!(d.points()[0], Point::new(1.0, 0.0));
        assert!((d.points()[1].angle() - 2.0 * PI / 98.0).abs() < 1e-14);

        let d = build_circle_detectors(1.0, Point::ORIGIN, 2.0 / 300.0).unwrap();
        assert_eq!(d.len(), 943);
        for (y, nu) in d.points().iter().zip(d.normals()) {
            assert!((nu.norm() - 1.0).abs() < 1e-12);
            assert!((nu.dot(*y) - 1.0).abs() < 1e-10);
        }
        assert!(build_circle_detectors(1.0, Point::ORIGIN, 7.0).is_err());
    }

    #[test]
    fn weight_rules() {
        let z = Point::new(0.3, -0.2);
        let t = DetectorArray::circle(1.5, z, 0.05, WeightRule::Trapezoid).unwrap();
        let p = DetectorArray::circle(1.5, z, 0.05, WeightRule::Uniform).unwrap();
        let m = t.len();
        assert!(m >= 100);
        assert!((t.total_weight() / (3.0 * PI) - 1.0).abs() < 1e-3);
        assert!((p.weights()[0] - 3.0 * PI / (m - 1) as f64).abs() < 1e-13);
        assert!((p.total_weight() - 3.0 * PI * m as f64 / (m - 1) as f64).abs() < 1e-10);
    }

    #[test]
    fn ellipse_detectors() {
        let d = build_ellipse_detectors(2.0, 1.0, I2, Point::ORIGIN, 10_000).unwrap();
        assert!((d.points()[0] - Point::new(2.0, 0.0)).norm() < 1e-15);
        assert!((d.normals()[0] - Point::new(1.0, 0.0)).norm() < 1e-15);
        assert!((d.total_weight() - 9.688448220547677).abs() < 1e-6);

        let e = build_ellipse_detectors(1.0, 1.0, I2, Point::ORIGIN, 629).unwrap();
        let c = build_circle_detectors(1.0, Point::ORIGIN, 0.01).unwrap();
        assert_eq!(c.len(), 629);
        for k in 0..629 {
            assert!((e.points()[k] - c.points()[k]).norm() < 1e-12);
            assert!((e.normals()[k] - c.normals()[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn rotated_ellipse_points_lie_on_boundary() {
        for angle in [0.3, -1.1] {
            let z = Point::new(0.2, 0.1);
            let dom = ConvexDomain::ellipse(z, 1.5, 0.7, angle).unwrap();
            let d = DetectorArray::on_boundary(&dom, 200, WeightRule::Trapezoid).unwrap();
            let q = rotation_matrix(angle);
            for (y, nu) in d.points().iter().zip(d.normals()) {
                let u = apply_transpose(&q, *y - z);
                assert!(((u.x / 1.5).powi(2) + (u.y / 0.7).powi(2) - 1.0).abs() < 1e-10);
                // outward: moving along ν leaves the domain
                assert!(!dom.contains(*y + *nu * 1e-6));
                assert!(dom.contains(*y - *nu * 1e-6));
            }
        }
    }

    #[test]
    fn reflected_ellipse_keeps_outward_normals() {
        let q = [[1.0, 0.0], [0.0, -1.0]];
        let dom = ConvexDomain::ellipse_with_matrix(Point::ORIGIN, 2.0, 1.0, q).unwrap();
        let d = DetectorArray::on_boundary(&dom, 64, WeightRule::Trapezoid).unwrap();
        for (y, nu) in d.points().iter().zip(d.normals()) {
            assert!(!dom.contains(*y + *nu * 1e-6));
        }
        assert!(ConvexDomain::ellipse_with_matrix(Point::ORIGIN, 1.0, 1.0, [[1.0, 0.1], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn batched_chord_profile_matches_single_evaluations() {
        let sq = ConvexDomain::General(GeneralConvex::superellipse(Point::new(0.1, -0.2), 1.0, 0.7, 4.0).unwrap());
        for a in [0.0, 0.3, 1.2, 2.9, 4.4] {
            let th = Point::unit(a);
            let s: Vec<f64> = (0..200).map(|j| -1.3 + j as f64 * 0.013).collect();
            let batch = sq.chord_profile(th, &s);
            for (sj, b) in s.iter().zip(batch) {
                assert!((sq.chord_length(th, *sj) - b).abs() < 1e-10, "a={a} s={sj}");
            }
        }
    }

    #[test]
    fn chord_examples() {
        let disk = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        let th = Point::unit(0.7);
        assert!((disk.chord_length(th, 0.0) - 2.0).abs() < 1e-15);
        assert!((disk.chord_length(th, 0.6) - 1.6).abs() < 1e-14);
        assert_eq!(disk.chord_length(th, 1.2), 0.0);

        let ell = ConvexDomain::ellipse(Point::ORIGIN, 2.0, 1.0, 0.0).unwrap();
        assert!((ell.chord_length(Point::new(1.0, 0.0), 0.0) - 2.0).abs() < 1e-14);
        assert!((ell.chord_length(Point::new(0.0, 1.0), 0.0) - 4.0).abs() < 1e-14);
    }

    /// Independent oracle: intersect the line with the ellipse by bisection on
    /// the implicit equation along the line direction.
    fn ellipse_chord_oracle(e1: f64, e2: f64, angle: f64, z: Point, theta: Point, s: f64) -> f64 {
        let q = rotation_matrix(angle);
        let inside = |a: f64| {
            let p = theta * s + theta.perp() * a - z;
            let u = apply_transpose(&q, p);
            (u.x / e1).powi(2) + (u.y / e2).powi(2) - 1.0
        };
        // midpoint of the chord is the minimizer of the quadratic along the line
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if inside(m1) < inside(m2) { hi = m2 } else { lo = m1 }
        }
        let mid = 0.5 * (lo + hi);
        if inside(mid) >= 0.0 {
            return 0.0;
        }
        let root = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (inside(m) < 0.0) == (inside(a) < 0.0) { a = m } else { b = m }
            }
            0.5 * (a + b)
        };
        root(mid, 10.0) - root(-10.0, mid)
    }

    #[test]
    fn ellipse_chord_matches_intersection_oracle() {
        let z = Point::new(0.1, -0.3);
        let dom = ConvexDomain::ellipse(z, 2.0, 1.0, 0.4).unwrap();
        for k in 0..12 {
            let th = Point::unit(0.5 * k as f64);
            for s in [-1.5, -0.7, 0.0, 0.33, 1.2] {
                let want = ellipse_chord_oracle(2.0, 1.0, 0.4, z, th, s);
                assert!((dom.chord_length(th, s) - want).abs() < 1e-9, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn general_convex_matches_ellipse() {
        let gen = GeneralConvex::new("ellipse as curve", |phi: f64| {
            let (s, c) = phi.sin_cos();
            (Point::new(2.0 * c, s), Point::new(-2.0 * s, c))
        })
        .unwrap();
        let g = ConvexDomain::General(gen);
        let e = ConvexDomain::ellipse(Point::ORIGIN, 2.0, 1.0, 0.0).unwrap();
        for k in 0..9 {
            let th = Point::unit(0.37 * k as f64);
            for s in [-1.3, -0.2, 0.0, 0.9] {
                assert!((g.chord_length(th, s) - e.chord_length(th, s)).abs() < 1e-9);
            }
            let (a, b) = g.support_interval(th);
            let (c, d) = e.support_interval(th);
            assert!((a - c).abs() < 1e-10 && (b - d).abs() < 1e-10);
        }
        assert!((g.area() - 2.0 * PI).abs() < 1e-10);
        assert!((g.perimeter() - 9.688448220547677).abs() < 1e-9);
        assert!(g.contains(Point::new(1.9, 0.0)) && !g.contains(Point::new(0.0, 1.01)));
    }

    #[test]
    fn rejects_non_convex_curve() {
        let r = GeneralConvex::new("flower", |phi: f64| {
            let r = 1.0 + 0.3 * (5.0 * phi).cos();
            let dr = -1.5 * (5.0 * phi).sin();
            let (s, c) = phi.sin_cos();
            (Point::new(r * c, r * s), Point::new(dr * c - r * s, dr * s + r * c))
        });
        assert!(r.is_err());
    }

    #[test]
    fn superellipse_is_convex_and_consistent() {
        let g = GeneralConvex::superellipse(Point::ORIGIN, 1.0, 1.0, 4.0).unwrap();
        // finite-difference check of the supplied derivative
        for phi in [0.1, 0.9, 2.0, 4.4] {
            let h = 1e-6;
            let fd = (g.eval(phi + h).0 - g.eval(phi - h).0) * (0.5 / h);
            assert!((fd - g.eval(phi).1).norm() < 1e-7);
        }
        let dom = ConvexDomain::General(g);
        // area of |x|^4 + |y|^4 ≤ 1 is Γ(1/4)²/(2√π) ≈ 3.708149
        assert!((dom.area() - 3.708_149_354_602_744).abs() < 1e-8);
    }
}

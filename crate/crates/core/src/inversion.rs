//! Back-projection inversion of boundary traces.
//!
//! All three formulas share one discretization: the time integral
//! `∫_{r}^{T} d(y_k, t)/√(t² − r²) dt` is tabulated at `r = t_l` by product
//! integration ([`accumulate_abel`]) and then read off at `r = ‖x − y_k‖` by
//! linear interpolation inside a weighted detector sum ([`backproject`]).

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::forward::{TraceKind, TraceMatrix};
use crate::geometry::DetectorArray;
use crate::point::Point;

/// Quadrature for the Abel-type time integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbelRule {
    /// `d/t` frozen at the right end of each cell, kernel `t/√(t²−t_l²)`
    /// integrated exactly.
    RightEndpoint,
    /// `d` linear on each cell, kernel `1/√(t²−t_l²)` integrated exactly.
    #[default]
    Linear,
}

/// `A[k, l] ≈ ∫_{t_l}^{T} d(y_k, t)/√(t² − t_l²) dt`.
#[derive(Debug, Clone)]
pub struct AbelAccumulator {
    m: usize,
    l: usize,
    dt: f64,
    values: Vec<f64>,
    detectors: Arc<DetectorArray>,
}

impl AbelAccumulator {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn detectors(&self) -> &Arc<DetectorArray> {
        &self.detectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.l..(k + 1) * self.l]
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.l + l]
    }

    /// Linear interpolation of row `k` at time `r`; zero beyond `t_{L−1}`.
    #[inline]
    pub fn interp(&self, k: usize, r: f64) -> f64 {
        interp_row(self.row(k), r / self.dt)
    }
}

#[inline]
fn interp_row(row: &[f64], pos: f64) -> f64 {
    let i = pos as usize;
    if i + 1 >= row.len() {
        return if i + 1 == row.len() && pos == i as f64 { row[i] } else { 0.0 };
    }
    let w = pos - i as f64;
    row[i] + w * (row[i + 1] - row[i])
}

/// Dimensionless weights of `d[i]` in `A[·, l]`, for `i = l..L`.
fn abel_weights(l: usize, len: usize, rule: AbelRule) -> Vec<f64> {
    let lf = l as f64;
    let root = |i: usize| {
        let x = i as f64;
        ((x - lf) * (x + lf)).max(0.0).sqrt()
    };
    let mut w = vec![0.0; len - l];
    match rule {
        AbelRule::RightEndpoint => {
            for i in l..len - 1 {
                w[i + 1 - l] = (root(i + 1) - root(i)) / (i + 1) as f64;
            }
        }
        AbelRule::Linear => {
            for i in l..len - 1 {
                let (a, b) = (i as f64, (i + 1) as f64);
                let j1 = root(i + 1) - root(i);
                let j0 = if l == 0 {
                    if i == 0 {
                        // ∫₀¹ d(τ)/τ dτ with d(0) = 0 contributes only through d₁
                        w[1] += 1.0;
                        continue;
                    }
                    (b / a).ln()
                } else {
                    ((b + root(i + 1)) / (a + root(i))).ln()
                };
                w[i - l] += b * j0 - j1;
                w[i + 1 - l] += j1 - a * j0;
            }
        }
    }
    w
}

/// Product integration of `d(y_k, t)/√(t² − t_l²)` over `[t_l, T]`; the
/// default rule is
/// `A[k,l] = Σ_{i≥l} (d[k,i+1]/t_{i+1}) (√(t_{i+1}² − t_l²) − √((t_i² − t_l²)₊))`.
pub fn accumulate_abel(d: &TraceMatrix) -> AbelAccumulator {
    accumulate_abel_with(d, AbelRule::RightEndpoint)
}

pub fn accumulate_abel_with(d: &TraceMatrix, rule: AbelRule) -> AbelAccumulator {
    let (m, len) = (d.m(), d.l());
    let weights: Vec<Vec<f64>> = (0..len).into_par_iter().map(|l| abel_weights(l, len, rule)).collect();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|k| {
            let row = d.row(k);
            let weights = &weights;
            (0..len).map(move |l| {
                weights[l]
                    .iter()
                    .zip(&row[l..])
                    .fold(0.0, |acc, (w, v)| acc + w * v)
            })
        })
        .collect();
    AbelAccumulator {
        m,
        l: len,
        dt: d.dt(),
        values,
        detectors: d.detectors().clone(),
    }
}

fn pixel_sum(a: &AbelAccumulator, x: Point, ubp: bool) -> f64 {
    let det = a.detectors.as_ref();
    let mut acc = 0.0;
    for (k, ((y, nu), w)) in det.points().iter().zip(det.normals()).zip(det.weights()).enumerate() {
        let d = x - *y;
        let v = w * a.interp(k, d.norm());
        acc += if ubp { v * nu.dot(d) } else { v };
    }
    acc
}

fn backproject_impl(a: &AbelAccumulator, template: &ScalarField2D, prefactor: f64, ubp: bool) -> ScalarField2D {
    let n = template.n();
    let domain = a.detectors.domain();
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let x = template.node(idx / n, idx % n);
            if domain.contains(x) { prefactor * pixel_sum(a, x, ubp) } else { 0.0 }
        })
        .collect();
    ScalarField2D::new(n, template.dx(), template.origin(), values).expect("finite back-projection")
}

/// `prefactor · Σ_k w_k A_k(‖x − y_k‖)` on the template grid, zero outside Ω.
pub fn backproject(a: &AbelAccumulator, template: &ScalarField2D, prefactor: f64) -> ScalarField2D {
    backproject_impl(a, template, prefactor, false)
}

/// Back-projection at arbitrary points (no masking).
pub fn backproject_points(a: &AbelAccumulator, points: &[Point], prefactor: f64) -> Vec<f64> {
    points.par_iter().map(|&x| prefactor * pixel_sum(a, x, false)).collect()
}

/// Reconstruction formula selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum Formula {
    Neumann,
    Mixed { a: f64, b: f64 },
    DirichletUbp,
}

impl Formula {
    pub fn name(&self) -> &'static str {
        match self {
            Formula::Neumann => "neumann",
            Formula::Mixed { .. } => "mixed",
            Formula::DirichletUbp => "dirichlet_ubp",
        }
    }

    /// Whether `kind` is the data this formula is meant for.
    pub fn matches(&self, kind: TraceKind) -> bool {
        match (self, kind) {
            (Formula::Neumann, TraceKind::Neumann) | (Formula::DirichletUbp, TraceKind::Dirichlet) => true,
            (Formula::Mixed { a, b }, TraceKind::Mixed { a: ta, b: tb }) => *a == ta && *b == tb,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub rule: AbelRule,
    /// Overall constant of the Dirichlet back-projection.
    pub c_ubp: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            rule: AbelRule::Linear,
            c_ubp: 1.0,
        }
    }
}

/// `f = (1/π) ∫_{∂Ω} ∫ ∂_ν u/√(t² − ‖x−y‖²) dt dσ`; exact on circles and ellipses.
pub fn reconstruct_neumann(d: &TraceMatrix, template: &ScalarField2D) -> Result<ScalarField2D> {
    reconstruct(Formula::Neumann, d, template, ReconstructOptions::default())
}

/// `f = (1/(bπ)) ∫_{∂Ω} ∫ (a u + b ∂_ν u)/√(t² − ‖x−y‖²) dt dσ` on circles.
pub fn reconstruct_mixed(m: &TraceMatrix, template: &ScalarField2D) -> Result<ScalarField2D> {
    let TraceKind::Mixed { a, b } = m.kind else {
        return Err(Error::invalid("trace", format!("expected a mixed trace, got {}", m.kind.name())));
    };
    reconstruct(Formula::Mixed { a, b }, m, template, ReconstructOptions::default())
}

/// Dirichlet back-projection
/// `f ≈ c Σ_k w_k ⟨ν_k, x − y_k⟩ ∫ ∂_t(u/t)(y_k, t)/√(t² − ‖x−y_k‖²) dt`.
pub fn reconstruct_dirichlet_ubp(u: &TraceMatrix, template: &ScalarField2D) -> Result<ScalarField2D> {
    reconstruct(Formula::DirichletUbp, u, template, ReconstructOptions::default())
}

fn check_scope(formula: Formula, d: &TraceMatrix) -> Result<()> {
    let domain = d.detectors().domain();
    match formula {
        Formula::Neumann if !domain.is_circle_or_ellipse() => Err(Error::invalid(
            "domain",
            "the exact Neumann formula holds on circles and ellipses only; use the kernel module for general convex domains",
        )),
        Formula::Mixed { a, b } => {
            if !(b > 0.0) || !(a >= 0.0) {
                return Err(Error::invalid("b", format!("mixed formula needs b > 0 and a >= 0, got a={a}, b={b}")));
            }
            if !domain.is_circle() {
                return Err(Error::invalid("domain", "the mixed-trace formula holds on circles only"));
            }
            Ok(())
        }
        Formula::DirichletUbp if !domain.is_circle() => {
            Err(Error::invalid("domain", "the Dirichlet back-projection is implemented for circles only"))
        }
        _ => Ok(()),
    }
}

/// Applies `formula` after checking that the trace kind matches it.
pub fn reconstruct(
    formula: Formula,
    d: &TraceMatrix,
    template: &ScalarField2D,
    opts: ReconstructOptions,
) -> Result<ScalarField2D> {
    if !formula.matches(d.kind) {
        return Err(Error::invalid(
            "trace",
            format!("{} formula applied to a {} trace; pass the cross flag to allow this", formula.name(), d.kind.name()),
        ));
    }
    reconstruct_unchecked(formula, d, template, opts)
}

/// Applies `formula` to any trace kind (deliberate mismatch experiments).
pub fn reconstruct_unchecked(
    formula: Formula,
    d: &TraceMatrix,
    template: &ScalarField2D,
    opts: ReconstructOptions,
) -> Result<ScalarField2D> {
    check_scope(formula, d)?;
    Ok(match formula {
        Formula::Neumann => backproject(&accumulate_abel_with(d, opts.rule), template, 1.0 / PI),
        Formula::Mixed { b, .. } => backproject(&accumulate_abel_with(d, opts.rule), template, 1.0 / (b * PI)),
        Formula::DirichletUbp => {
            let q = time_derivative_over_t(d)?;
            backproject_impl(&accumulate_abel_with(&q, opts.rule), template, opts.c_ubp, true)
        }
    })
}

/// `∂_t(u/t)` by centered differences, one-sided at both ends, with
/// `(u/t)(0) := 0`.
pub fn time_derivative_over_t(u: &TraceMatrix) -> Result<TraceMatrix> {
    let (m, len, dt) = (u.m(), u.l(), u.dt());
    if len < 3 {
        return Err(Error::precondition("time derivative needs at least 3 samples"));
    }
    let mut out = vec![0.0; m * len];
    for k in 0..m {
        let row = u.row(k);
        let p: Vec<f64> = (0..len).map(|l| if l == 0 { 0.0 } else { row[l] / (l as f64 * dt) }).collect();
        let q = &mut out[k * len..(k + 1) * len];
        q[0] = (p[1] - p[0]) / dt;
        for l in 1..len - 1 {
            q[l] = (p[l + 1] - p[l - 1]) / (2.0 * dt);
        }
        q[len - 1] = (p[len - 1] - p[len - 2]) / dt;
    }
    u.with_values(TraceKind::Derived, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexDomain, WeightRule};

    fn detectors(m: usize) -> Arc<DetectorArray> {
        let dom = ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap();
        Arc::new(DetectorArray::on_boundary(&dom, m, WeightRule::Trapezoid).unwrap())
    }

    fn trace_from(det: &Arc<DetectorArray>, dt: f64, t_final: f64, f: impl Fn(usize, f64) -> f64) -> TraceMatrix {
        let l = crate::forward::time_samples(t_final, dt);
        let vals = (0..det.len() * l).map(|i| f(i / l, (i % l) as f64 * dt)).collect();
        TraceMatrix::new(TraceKind::Neumann, det.clone(), dt, t_final, vals).unwrap()
    }

    /// `∫_{c}^{∞} d(t)/√(t² − c²) dt` via `t = c cosh u` (or `∫ d/t` at c = 0),
    /// composite Simpson.
    fn abel_oracle(d: impl Fn(f64) -> f64, c: f64) -> f64 {
        let n = 200_000;
        let (g, hi): (Box<dyn Fn(f64) -> f64>, f64) = if c == 0.0 {
            (Box::new(|t: f64| if t == 0.0 { 1.0 } else { d(t) / t }), 12.0)
        } else {
            (Box::new(|u: f64| d(c * u.cosh())), (12.0 / c).acosh())
        };
        let h = hi / n as f64;
        let mut acc = g(0.0) + g(hi);
        for i in 1..n {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn impulse_and_zero() {
        let det = detectors(8);
        let d = trace_from(&det, 0.1, 1.0, |_, t| if (t - 0.1).abs() < 1e-12 { 1.0 } else { 0.0 });
        let a = accumulate_abel(&d);
        for k in 0..8 {
            assert!((a.get(k, 0) - 1.0).abs() < 1e-15);
            assert_eq!(a.get(k, 1), 0.0);
        }
        let z = accumulate_abel(&trace_from(&det, 0.1, 1.0, |_, _| 0.0));
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn last_column_is_an_empty_sum() {
        let det = detectors(5);
        let d = trace_from(&det, 0.05, 2.0, |k, t| (k as f64 + t).sin());
        let max = d.max_abs();
        for rule in [AbelRule::RightEndpoint, AbelRule::Linear] {
            let a = accumulate_abel_with(&d, rule);
            for k in 0..5 {
                assert!(a.get(k, a.l() - 1).abs() <= d.dt() * max);
                assert!(a.row(k).iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn smooth_data_matches_quadrature_oracle() {
        let det = detectors(3);
        let dt = 5e-4;
        let d = |t: f64| t * (-t * t).exp();
        let tr = trace_from(&det, dt, 3.5, |_, t| d(t));
        let len = tr.l();
        for rule in [AbelRule::RightEndpoint, AbelRule::Linear] {
            let a = accumulate_abel_with(&tr, rule);
            for l in [0, len / 4, len / 2] {
                let want = abel_oracle(d, l as f64 * dt);
                let got = a.get(1, l);
                assert!((got - want).abs() <= 1e-3 * want.abs(), "{rule:?} l={l}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn linear_rule_is_second_order() {
        let det = detectors(3);
        let d = |t: f64| t * (-t * t).exp();
        let err = |dt: f64, rule| {
            let tr = trace_from(&det, dt, 8.0, |_, t| d(t));
            let a = accumulate_abel_with(&tr, rule);
            let l = (0.5 / dt).round() as usize;
            (a.get(0, l) - abel_oracle(d, 0.5)).abs()
        };
        let (c, f) = (err(0.02, AbelRule::Linear), err(0.01, AbelRule::Linear));
        assert!(c / f > 2.5, "{c} {f}");
        let (c, f) = (err(0.02, AbelRule::RightEndpoint), err(0.01, AbelRule::RightEndpoint));
        assert!(c / f > 1.6, "{c} {f}");
    }

    #[test]
    fn constant_accumulator_backprojects_to_perimeter() {
        let det = detectors(64);
        let d = trace_from(&det, 0.1, 4.0, |_, _| 0.0);
        let mut a = accumulate_abel(&d);
        a.values.iter_mut().for_each(|v| *v = 1.0);
        let template = ScalarField2D::zeros(21, 0.1, Point::new(-1.0, -1.0));
        let img = backproject(&a, &template, 0.5);
        let want = 0.5 * det.total_weight();
        for i in 0..21 {
            for j in 0..21 {
                let x = template.node(i, j);
                if ConvexDomain::circle(Point::ORIGIN, 1.0).unwrap().contains(x) {
                    assert!((img.get(i, j) - want).abs() < 1e-12);
                } else {
                    assert_eq!(img.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_trace_reconstructs_to_zero() {
        let det = detectors(64);
        let template = ScalarField2D::zeros(21, 0.1, Point::new(-1.0, -1.0));
        let d = trace_from(&det, 0.1, 4.0, |_, _| 0.0);
        assert_eq!(reconstruct_neumann(&d, &template).unwrap().max_abs(), 0.0);
        let mut m = d.clone();
        m.kind = TraceKind::Mixed { a: 1.0, b: 0.2 };
        assert_eq!(reconstruct_mixed(&m, &template).unwrap().max_abs(), 0.0);
        let mut u = d.clone();
        u.kind = TraceKind::Dirichlet;
        assert_eq!(reconstruct_dirichlet_ubp(&u, &template).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn scope_and_kind_checks() {
        let template = ScalarField2D::zeros(21, 0.1, Point::new(-1.0, -1.0));
        let det = detectors(32);
        let d = trace_from(&det, 0.1, 2.0, |_, _| 0.0);
        let opts = ReconstructOptions::default();
        assert!(reconstruct(Formula::DirichletUbp, &d, &template, opts).is_err());
        assert!(reconstruct_unchecked(Formula::DirichletUbp, &d, &template, opts).is_ok());
        assert!(reconstruct_unchecked(Formula::Mixed { a: 1.0, b: 0.0 }, &d, &template, opts).is_err());
        assert!(reconstruct_unchecked(Formula::Mixed { a: -1.0, b: 1.0 }, &d, &template, opts).is_err());

        let ell = ConvexDomain::ellipse(Point::ORIGIN, 1.0, 0.8, 0.2).unwrap();
        let det = Arc::new(DetectorArray::on_boundary(&ell, 32, WeightRule::Trapezoid).unwrap());
        let d = trace_from(&det, 0.1, 2.0, |_, _| 0.0);
        assert!(reconstruct_neumann(&d, &template).is_ok());
        assert!(reconstruct_unchecked(Formula::Mixed { a: 1.0, b: 1.0 }, &d, &template, opts).is_err());

        let sq = ConvexDomain::General(crate::geometry::GeneralConvex::superellipse(Point::ORIGIN, 1.0, 1.0, 4.0).unwrap());
        let det = Arc::new(DetectorArray::on_boundary(&sq, 32, WeightRule::Trapezoid).unwrap());
        let d = trace_from(&det, 0.1, 2.0, |_, _| 0.0);
        assert!(reconstruct_neumann(&d, &template).is_err());
    }

    #[test]
    fn mixed_formula_degenerates_and_rescales() {
        let det = detectors(40);
        let template = ScalarField2D::zeros(21, 0.1, Point::new(-1.0, -1.0));
        let d = trace_from(&det, 0.05, 3.0, |k, t| (t * (k as f64 + 1.0)).sin() * (-t).exp());
        let neu = reconstruct_neumann(&d, &template).unwrap();
        let mut m = d.clone();
        m.kind = TraceKind::Mixed { a: 0.0, b: 1.0 };
        assert_eq!(reconstruct_mixed(&m, &template).unwrap().values(), neu.values());

        let m1 = d.with_values(TraceKind::Mixed { a: 1.0, b: 0.1 }, d.values().to_vec()).unwrap();
        let m3 = d.scaled(3.0).with_values(TraceKind::Mixed { a: 3.0, b: 0.3 }, d.scaled(3.0).values().to_vec()).unwrap();
        let r1 = reconstruct_mixed(&m1, &template).unwrap();
        let r3 = reconstruct_mixed(&m3, &template).unwrap();
        for (a, b) in r1.values().iter().zip(r3.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn time_derivative_of_linear_quotient() {
        let det = detectors(4);
        let mut u = trace_from(&det, 0.1, 2.0, |_, t| t * (1.0 + 2.0 * t));
        u.kind = TraceKind::Dirichlet;
        let q = time_derivative_over_t(&u).unwrap();
        for l in 2..q.l() - 1 {
            assert!((q.get(0, l) - 2.0).abs() < 1e-12);
        }
    }
}

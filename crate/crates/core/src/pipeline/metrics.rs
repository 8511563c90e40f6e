//! Reconstruction quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Comparison of a reconstruction against the ground truth on the full grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `‖rec − f‖₂ / ‖f‖₂`, or `‖rec‖₂` when `f = 0`.
    pub relative_l2: f64,
    pub max_abs_error: f64,
    /// Pearson correlation; 0 when either field is constant.
    pub correlation: f64,
    /// `argmin_α ‖α·rec − f‖₂ = ⟨rec, f⟩ / ‖rec‖²`; 0 when `rec = 0`.
    pub alpha_star: f64,
    /// `‖rec‖_∞ / ‖f‖_∞`, or `‖rec‖_∞` when `f = 0`.
    pub sup_ratio: f64,
    /// Wall-clock seconds per stage. Written to a separate file so that the
    /// metrics themselves are reproducible byte for byte.
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl MetricsReport {
    pub fn compute(rec: &ScalarField2D, truth: &ScalarField2D) -> Result<Self> {
        if !rec.same_grid(truth) {
            return Err(Error::ShapeMismatch("reconstruction and ground truth grids differ".into()));
        }
        let (r, f) = (rec.values(), truth.values());
        let n = r.len() as f64;
        let mut err2 = 0.0;
        let mut f2 = 0.0;
        let mut r2 = 0.0;
        let mut rf = 0.0;
        let mut max_err = 0.0_f64;
        for (a, b) in r.iter().zip(f) {
            err2 += (a - b) * (a - b);
            f2 += b * b;
            r2 += a * a;
            rf += a * b;
            max_err = max_err.max((a - b).abs());
        }
        let (mr, mf) = (r.iter().sum::<f64>() / n, f.iter().sum::<f64>() / n);
        let mut cov = 0.0;
        let mut vr = 0.0;
        let mut vf = 0.0;
        for (a, b) in r.iter().zip(f) {
            cov += (a - mr) * (b - mf);
            vr += (a - mr) * (a - mr);
            vf += (b - mf) * (b - mf);
        }
        let correlation = if vr > 0.0 && vf > 0.0 {
            (cov / (vr * vf).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let f_sup = truth.max_abs();
        Ok(MetricsReport {
            relative_l2: if f2 > 0.0 { (err2 / f2).sqrt() } else { err2.sqrt() },
            max_abs_error: max_err,
            correlation,
            alpha_star: if r2 > 0.0 { rf / r2 } else { 0.0 },
            sup_ratio: if f_sup > 0.0 { rec.max_abs() / f_sup } else { rec.max_abs() },
            timings: Vec::new(),
        })
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }
}

//! Drivers behind the `npat` verbs. Each writes its artifacts under the
//! configured output directory and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::forward::{
    add_gaussian_noise, make_mixed_trace, solve_dirichlet_trace_oracle, solve_neumann_trace_oracle,
    spectral_boundary_traces, TraceKind, TraceMatrix,
};
use crate::inversion::{reconstruct, reconstruct_unchecked, Formula};
use crate::kernel::{check_lemma22, check_prop32, check_theorem31, kernel_field, IdentityReport, Stage, Theorem31Report};
use crate::phantoms::{rasterize, rasterize_gradient, Component, Phantom};
use crate::pipeline::config::{build_detectors, FormulaKind, ForwardPath, RunConfig};
use crate::pipeline::io::{read_field, read_trace, write_field, write_json, write_pgm, write_trace, NoiseInfo, TraceProvenance};
use crate::pipeline::metrics::{MetricsReport, StageTiming};
use crate::point::Point;

/// Process exit status for an error: 2 for configuration and input problems,
/// 3 for violated numerical preconditions.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Precondition(_) | Error::ShapeMismatch(_) => 3,
        Error::Config { .. } | Error::InvalidArgument { .. } | Error::Format(_) | Error::Io(_) | Error::Json(_) => 2,
    }
}

/// Creates and returns the output directory.
pub fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_timings(path: &Path, timings: &[StageTiming]) -> Result<()> {
    write_json(path, &timings)
}

struct Clock(Instant, Vec<StageTiming>);

impl Clock {
    fn new() -> Self {
        Clock(Instant::now(), Vec::new())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.1.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.0).as_secs_f64(),
        });
        self.0 = now;
    }
}

/// The configured phantom rasterized on the configured grid.
pub fn ground_truth(cfg: &RunConfig) -> Result<ScalarField2D> {
    rasterize(&cfg.phantom(), &cfg.grid_spec()?)
}

/// Noiseless Dirichlet, Neumann and mixed traces of one phantom.
#[derive(Debug, Clone)]
pub struct ForwardTraces {
    pub dirichlet: TraceMatrix,
    pub neumann: TraceMatrix,
    pub mixed: TraceMatrix,
    pub provenance: TraceProvenance,
}

impl ForwardTraces {
    pub fn get(&self, kind: TraceKind) -> &TraceMatrix {
        match kind {
            TraceKind::Dirichlet => &self.dirichlet,
            TraceKind::Neumann => &self.neumann,
            _ => &self.mixed,
        }
    }
}

pub fn simulate(cfg: &RunConfig, phantom: &Phantom) -> Result<ForwardTraces> {
    let grid = cfg.grid_spec()?;
    let f = rasterize(phantom, &grid)?;
    let dx = cfg.dx();
    let desc = cfg.domain_description();
    let det = Arc::new(build_detectors(&desc, dx, cfg.weight_rule())?);
    let t_final = cfg.t_final();
    let (dirichlet, neumann) = match cfg.forward.path {
        ForwardPath::Oracle => {
            let (g1, g2) = rasterize_gradient(phantom, &grid)?;
            (
                solve_dirichlet_trace_oracle(&f, det.clone(), dx, t_final)?,
                solve_neumann_trace_oracle(&f, &g1, &g2, det, dx, t_final)?,
            )
        }
        ForwardPath::Spectral => spectral_boundary_traces(&f, det, dx, t_final, cfg.forward.pad_factor, false)?,
    };
    let (a, b) = cfg.mixed_coefficients();
    let mixed = make_mixed_trace(&dirichlet, &neumann, a, b)?;
    Ok(ForwardTraces {
        dirichlet,
        neumann,
        mixed,
        provenance: TraceProvenance {
            domain: desc,
            dx,
            noise: None,
        },
    })
}

pub fn cmd_phantom(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = output_dir(cfg)?;
    let f = ground_truth(cfg)?;
    let mut out = vec![write_field(&dir, "phantom", &f)?];
    if cfg.output.previews {
        let p = dir.join("phantom.pgm");
        write_pgm(&p, &f)?;
        out.push(p);
    }
    Ok(out)
}

pub fn trace_stem(kind: TraceKind) -> String {
    format!("trace_{}", kind.name())
}

pub fn cmd_forward(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = output_dir(cfg)?;
    let mut clock = Clock::new();
    let traces = simulate(cfg, &cfg.phantom())?;
    clock.lap("forward");
    let mut out = Vec::new();
    for t in [&traces.dirichlet, &traces.neumann, &traces.mixed] {
        out.push(write_trace(&dir, &trace_stem(t.kind), t, &traces.provenance)?);
    }
    clock.lap("write");
    write_timings(&dir.join("timings_forward.json"), &clock.1)?;
    Ok(out)
}

fn percent_label(p: f64) -> String {
    format!("{p}").replace('.', "p")
}

/// Adds noise to a stored trace. `percent` and `seed` default to the config,
/// the seed being the per-kind stream of the trace.
pub fn cmd_noise(cfg: &RunConfig, trace: &Path, percent: Option<f64>, seed: Option<u64>) -> Result<PathBuf> {
    let dir = output_dir(cfg)?;
    let (t, prov) = read_trace(trace)?;
    let percent = percent.unwrap_or(cfg.noise.percent);
    let seed = seed.unwrap_or_else(|| cfg.noise.seed_for(t.kind));
    let noisy = add_gaussian_noise(&t, percent, seed)?;
    let stem = trace
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid("trace", "path has no file name"))?;
    let prov = TraceProvenance {
        noise: Some(NoiseInfo { percent, seed }),
        ..prov
    };
    write_trace(&dir, &format!("{stem}_noise{}", percent_label(percent)), &noisy, &prov)
}

#[derive(Debug, Clone)]
pub struct ReconstructOutcome {
    pub field: ScalarField2D,
    pub metrics: MetricsReport,
    pub files: Vec<PathBuf>,
}

/// Formula to apply: the explicit choice or the configured one. A mixed
/// formula takes its coefficients from a mixed trace when given one.
fn pick_formula(cfg: &RunConfig, kind: FormulaKind, trace: TraceKind) -> Formula {
    match (kind, trace) {
        (FormulaKind::Mixed, TraceKind::Mixed { a, b }) => Formula::Mixed { a, b },
        _ => cfg.formula(kind),
    }
}

pub fn cmd_reconstruct(
    cfg: &RunConfig,
    trace: &Path,
    formula: Option<FormulaKind>,
    cross: bool,
) -> Result<ReconstructOutcome> {
    let dir = output_dir(cfg)?;
    let mut clock = Clock::new();
    let (t, prov) = read_trace(trace)?;
    if prov.domain != cfg.domain_description() || prov.dx != cfg.dx() {
        return Err(Error::Config {
            location: trace.display().to_string(),
            message: "trace was simulated for a different domain or grid than the config describes".into(),
        });
    }
    let truth = ground_truth(cfg)?;
    clock.lap("load");
    let formula = pick_formula(cfg, formula.unwrap_or(cfg.reconstruction.formula), t.kind);
    let template = truth.scaled(0.0);
    let opts = cfg.reconstruct_options();
    let rec = if cross {
        reconstruct_unchecked(formula, &t, &template, opts)?
    } else {
        reconstruct(formula, &t, &template, opts)?
    };
    clock.lap("reconstruct");
    let mut metrics = MetricsReport::compute(&rec, &truth)?;
    let stem = format!(
        "recon_{}_{}",
        formula.name(),
        trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace")
    );
    let mut files = vec![write_field(&dir, &stem, &rec)?];
    if cfg.output.previews {
        let p = dir.join(format!("{stem}.pgm"));
        write_pgm(&p, &rec)?;
        files.push(p);
    }
    let mp = dir.join(format!("{stem}_metrics.json"));
    write_json(&mp, &metrics)?;
    files.push(mp);
    clock.lap("write");
    metrics.timings = clock.1;
    write_timings(&dir.join(format!("{stem}_timings.json")), &metrics.timings)?;
    Ok(ReconstructOutcome {
        field: rec,
        metrics,
        files,
    })
}

/// Metrics of `candidate` against `reference`, both field files.
pub fn cmd_compare(candidate: &Path, reference: &Path) -> Result<MetricsReport> {
    MetricsReport::compute(&read_field(candidate)?, &read_field(reference)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub domain: String,
    /// `max |∂_s² H_s R χ_Ω|` over the evaluation bands.
    pub kernel_band_max: f64,
    /// `max |H_s R χ_Ω − 2s|` over the bands, on circles only.
    pub disk_identity_error: Option<f64>,
    pub vanishing: bool,
    pub decay_warning: bool,
    pub n_theta: usize,
    pub ds: f64,
    pub reconstruction: Option<Theorem31Report>,
    /// Space-time identity for the phantom `f` and the bump `g`.
    pub bilinear: Option<IdentityReport>,
    /// Boundary identity for `f` paired with itself.
    pub boundary_identity: Option<IdentityReport>,
}

/// Threshold below which the kernel counts as vanishing.
pub const VANISHING_TOLERANCE: f64 = 0.05;

fn default_probes(cfg: &RunConfig, f: &ScalarField2D) -> Vec<Point> {
    let c = f.support_disk().map(|d| d.center).unwrap_or_else(|| cfg.grid_center());
    let h = cfg.kernel.probe_spacing;
    (0..9)
        .map(|i| c + Point::new(((i % 3) as f64 - 1.0) * h, ((i / 3) as f64 - 1.0) * h))
        .collect()
}

pub fn cmd_kernel(cfg: &RunConfig) -> Result<(KernelReport, Vec<PathBuf>)> {
    let dir = output_dir(cfg)?;
    let mut clock = Clock::new();
    let desc = cfg.domain_description();
    let domain = desc.build()?;
    let field = kernel_field(&domain, cfg.kernel_options())?;
    clock.lap("kernel_field");
    let kernel_band_max = field.band_max_abs(Stage::Kernel);
    let mut report = KernelReport {
        domain: domain.label(),
        kernel_band_max,
        disk_identity_error: domain.is_circle().then(|| field.disk_identity_error()),
        vanishing: kernel_band_max <= VANISHING_TOLERANCE,
        decay_warning: field.decay_warning,
        n_theta: field.n_theta(),
        ds: field.options.ds,
        reconstruction: None,
        bilinear: None,
        boundary_identity: None,
    };
    let mut files = Vec::new();
    if cfg.kernel.csv {
        let p = dir.join("kernel_field.csv");
        let mut w = std::io::BufWriter::new(fs::File::create(&p)?);
        field.write_csv(&mut w)?;
        std::io::Write::flush(&mut w)?;
        files.push(p);
    }
    let grid = cfg.grid_spec()?;
    let phantom = cfg.phantom();
    let f = rasterize(&phantom, &grid)?;
    if f.max_abs() > 0.0 {
        let (g1, g2) = rasterize_gradient(&phantom, &grid)?;
        let det = Arc::new(build_detectors(&desc, cfg.dx(), cfg.weight_rule())?);
        let t_final = if cfg.kernel.identities {
            cfg.t_final().max(cfg.kernel.identity_t_factor * cfg.grid.radius)
        } else {
            cfg.t_final()
        };
        let neumann = solve_neumann_trace_oracle(&f, &g1, &g2, det, cfg.dx(), t_final)?;
        clock.lap("neumann_trace");
        let probes: Vec<Point> = if cfg.kernel.probes.is_empty() {
            default_probes(cfg, &f)
        } else {
            cfg.kernel.probes.iter().map(|&p| p.into()).collect()
        };
        let probes: Vec<Point> = probes.into_iter().filter(|p| domain.contains(*p)).collect();
        report.reconstruction = Some(check_theorem31(&f, &field, &neumann, &probes, cfg.reconstruct_options().rule)?);
        clock.lap("reconstruction_check");
        if cfg.kernel.identities {
            let g = rasterize(
                &Phantom::new(vec![Component::bump(cfg.kernel.g_center.into(), cfg.kernel.g_radius, 1.0)]),
                &grid,
            )?;
            report.bilinear = Some(check_lemma22(&f, &g, &domain, &field, cfg.identity_options())?);
            clock.lap("bilinear_identity");
            report.boundary_identity = Some(check_prop32(&f, &f, &field, &neumann)?);
            clock.lap("boundary_identity");
        }
    }
    let p = dir.join("kernel_report.json");
    write_json(&p, &report)?;
    files.push(p);
    write_timings(&dir.join("timings_kernel.json"), &clock.1)?;
    Ok((report, files))
}

/// Noise levels of the experiment matrix, in percent.
pub const MATRIX_NOISE_LEVELS: [f64; 3] = [0.0, 10.0, 20.0];

/// Formula meant for a data kind, and the deliberately mismatched one.
pub fn matrix_formulas(kind: TraceKind) -> [FormulaKind; 2] {
    match kind {
        TraceKind::Dirichlet => [FormulaKind::DirichletUbp, FormulaKind::Neumann],
        TraceKind::Neumann => [FormulaKind::Neumann, FormulaKind::DirichletUbp],
        _ => [FormulaKind::Mixed, FormulaKind::Neumann],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixCell {
    pub kind: &'static str,
    pub noise_percent: f64,
    pub formula: &'static str,
    pub matching: bool,
    pub stem: String,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub cells: Vec<MatrixCell>,
    pub files: Vec<PathBuf>,
}

impl MatrixOutcome {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn csv_number(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Runs data kind × noise level × {matching, mismatched} formula. Cell
/// failures are recorded in the summary instead of aborting the run.
pub fn cmd_matrix(cfg: &RunConfig) -> Result<MatrixOutcome> {
    let root = output_dir(cfg)?;
    let dir = root.join("matrix");
    fs::create_dir_all(&dir)?;
    let mut clock = Clock::new();
    let truth = ground_truth(cfg)?;
    let traces = simulate(cfg, &cfg.phantom())?;
    clock.lap("forward");
    let mut files = vec![write_field(&dir, "phantom", &truth)?];
    if cfg.output.previews {
        let p = dir.join("phantom.pgm");
        write_pgm(&p, &truth)?;
        files.push(p);
    }

    let kinds = [traces.dirichlet.kind, traces.neumann.kind, traces.mixed.kind];
    let mut data: Vec<(TraceKind, f64, Result<TraceMatrix>)> = Vec::new();
    for kind in kinds {
        for p in MATRIX_NOISE_LEVELS {
            let clean = traces.get(kind);
            let t = if p == 0.0 {
                Ok(clean.clone())
            } else {
                add_gaussian_noise(clean, p, cfg.noise.seed_for(kind))
            };
            data.push((kind, p, t));
        }
    }
    clock.lap("noise");

    let jobs: Vec<(usize, FormulaKind, bool)> = (0..data.len())
        .flat_map(|i| {
            let [m, x] = matrix_formulas(data[i].0);
            [(i, m, true), (i, x, false)]
        })
        .collect();
    let template = truth.scaled(0.0);
    let opts = cfg.reconstruct_options();
    let results: Vec<(MatrixCell, Option<ScalarField2D>)> = jobs
        .par_iter()
        .map(|&(i, fk, matching)| {
            let (kind, p, ref t) = data[i];
            let formula = pick_formula(cfg, fk, kind);
            let stem = format!("{}_noise{}_{}", kind.name(), percent_label(p), formula.name());
            let run = || -> Result<(ScalarField2D, MetricsReport)> {
                let t = t.as_ref().map_err(|e| Error::precondition(e.to_string()))?;
                let rec = reconstruct_unchecked(formula, t, &template, opts)?;
                let m = MetricsReport::compute(&rec, &truth)?;
                Ok((rec, m))
            };
            let (metrics, error, field) = match run() {
                Ok((rec, m)) => (Some(m), None, Some(rec)),
                Err(e) => (None, Some(e.to_string()), None),
            };
            (
                MatrixCell {
                    kind: kind.name(),
                    noise_percent: p,
                    formula: formula.name(),
                    matching,
                    stem,
                    metrics,
                    error,
                },
                field,
            )
        })
        .collect();
    clock.lap("reconstruct");

    let cells_dir = dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    let mut csv = String::from(
        "kind,noise_percent,formula,matching,status,relative_l2,max_abs_error,correlation,alpha_star,sup_ratio,error\n",
    );
    let mut cells = Vec::with_capacity(results.len());
    for (cell, field) in results {
        if let Some(rec) = &field {
            files.push(write_field(&cells_dir, &cell.stem, rec)?);
            if cfg.output.previews {
                let p = cells_dir.join(format!("{}.pgm", cell.stem));
                write_pgm(&p, rec)?;
                files.push(p);
            }
        }
        let m = cell.metrics.as_ref();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},\"{}\"\n",
            cell.kind,
            cell.noise_percent,
            cell.formula,
            cell.matching,
            if cell.error.is_some() { "failed" } else { "ok" },
            csv_number(m.map(|m| m.relative_l2)),
            csv_number(m.map(|m| m.max_abs_error)),
            csv_number(m.map(|m| m.correlation)),
            csv_number(m.map(|m| m.alpha_star)),
            csv_number(m.map(|m| m.sup_ratio)),
            cell.error.as_deref().unwrap_or("").replace('"', "'"),
        ));
        cells.push(cell);
    }
    let p = dir.join("summary.csv");
    fs::write(&p, csv)?;
    files.push(p);
    let p = dir.join("summary.json");
    write_json(&p, &cells)?;
    files.push(p);
    clock.lap("write");
    write_timings(&dir.join("timings_matrix.json"), &clock.1)?;
    Ok(MatrixOutcome { cells, files })
}

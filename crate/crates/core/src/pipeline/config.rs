//! Run configuration.
//!
//! Configs are TOML files with one table per section. Every key is optional;
//! unknown keys are rejected. Errors carry `file:line` locations.
//!
//! ```toml
//! [grid]
//! n = 201              # samples per axis, at least 51
//! radius = 1.0         # half-width rho of the square grid
//! center = [0.0, 0.0]  # grid center z
//!
//! [domain]
//! kind = "circle"      # circle | ellipse | superellipse
//! radius = 1.0         # circle radius, defaults to grid.radius
//! semi_axes = [1.0, 0.7]
//! angle = 0.0
//! exponent = 4.0       # superellipse exponent
//!
//! [phantom]
//! kind = "head"        # head | bump | gaussian | zero | custom
//! center = [0.0, 0.0]
//! radius = 0.5         # bump radius
//! sigma = 0.15         # gaussian width
//! amplitude = 1.0
//!
//! [forward]
//! path = "oracle"      # oracle | spectral
//! pad_factor = 2
//! t_factor = 16.0      # T = t_factor * rho
//! weights = "trapezoid" # trapezoid | uniform
//!
//! [noise]
//! percent = 0.0
//! seed = 1             # per-kind seeds default to seed, seed + 1, seed + 2
//!
//! [reconstruction]
//! formula = "neumann"  # neumann | mixed | dirichlet_ubp
//! a = 1.0
//! b_cells = 2.0        # b = b_cells * dx unless b is given
//! abel = "linear"      # linear | right_endpoint
//! c_ubp = 1.0
//!
//! [kernel]
//! n_theta = 360
//! ds = 1e-3
//!
//! [output]
//! dir = "out"
//! ```
//!
//! A `custom` phantom lists its components as an array of tables:
//!
//! ```toml
//! [[phantom.components]]
//! type = "smooth_bump"
//! center = { x = 0.1, y = 0.0 }
//! radius = 0.3
//! amplitude = 1.0
//! exponent = 1.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::geometry::{circle_detector_count, ConvexDomain, DetectorArray, DomainDescription, WeightRule};
use crate::inversion::{AbelRule, Formula, ReconstructOptions};
use crate::kernel::{IdentityOptions, KernelOptions};
use crate::phantoms::{head_phantom, Component, Phantom};
use crate::point::Point;
use crate::TraceKind;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub domain: DomainSection,
    pub phantom: PhantomSection,
    pub forward: ForwardSection,
    pub noise: NoiseSection,
    pub reconstruction: ReconstructionSection,
    pub kernel: KernelSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub radius: f64,
    pub center: [f64; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 201,
            radius: 1.0,
            center: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    Circle,
    Ellipse,
    Superellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub kind: DomainKind,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub semi_axes: [f64; 2],
    pub angle: f64,
    pub exponent: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            kind: DomainKind::Circle,
            center: None,
            radius: None,
            semi_axes: [1.0, 0.7],
            angle: 0.0,
            exponent: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    #[default]
    Head,
    Bump,
    Gaussian,
    Zero,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub kind: PhantomKind,
    pub center: [f64; 2],
    pub radius: f64,
    pub sigma: f64,
    pub amplitude: f64,
    pub components: Vec<Component>,
    /// Admits discontinuous components in a custom phantom.
    pub unsupported_regime: bool,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            kind: PhantomKind::Head,
            center: [0.0, 0.0],
            radius: 0.5,
            sigma: 0.15,
            amplitude: 1.0,
            components: Vec::new(),
            unsupported_regime: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardPath {
    #[default]
    Oracle,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    #[default]
    Trapezoid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardSection {
    pub path: ForwardPath,
    pub pad_factor: usize,
    pub t_factor: f64,
    pub weights: WeightChoice,
}

impl Default for ForwardSection {
    fn default() -> Self {
        ForwardSection {
            path: ForwardPath::Oracle,
            pad_factor: 2,
            t_factor: 16.0,
            weights: WeightChoice::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub percent: f64,
    pub seed: u64,
    pub seed_dirichlet: Option<u64>,
    pub seed_neumann: Option<u64>,
    pub seed_mixed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            percent: 0.0,
            seed: 1,
            seed_dirichlet: None,
            seed_neumann: None,
            seed_mixed: None,
        }
    }
}

impl NoiseSection {
    /// Independent stream per trace kind.
    pub fn seed_for(&self, kind: TraceKind) -> u64 {
        match kind {
            TraceKind::Dirichlet => self.seed_dirichlet.unwrap_or(self.seed),
            TraceKind::Neumann => self.seed_neumann.unwrap_or(self.seed.wrapping_add(1)),
            TraceKind::Mixed { .. } => self.seed_mixed.unwrap_or(self.seed.wrapping_add(2)),
            TraceKind::Derived => self.seed.wrapping_add(3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    #[default]
    Neumann,
    Mixed,
    DirichletUbp,
}

impl FormulaKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "neumann" => Some(FormulaKind::Neumann),
            "mixed" => Some(FormulaKind::Mixed),
            "dirichlet_ubp" | "ubp" => Some(FormulaKind::DirichletUbp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbelChoice {
    #[default]
    Linear,
    RightEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionSection {
    pub formula: FormulaKind,
    pub a: f64,
    /// Absolute `b`; overrides `b_cells`.
    pub b: Option<f64>,
    pub b_cells: f64,
    pub abel: AbelChoice,
    pub c_ubp: f64,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        ReconstructionSection {
            formula: FormulaKind::Neumann,
            a: 1.0,
            b: None,
            b_cells: 2.0,
            abel: AbelChoice::Linear,
            c_ubp: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub n_theta: usize,
    pub ds: f64,
    pub pad_factor: usize,
    pub smoothing_samples: f64,
    pub band: f64,
    /// Probe points for the reconstruction residual; a 3x3 pattern around the
    /// phantom center when empty.
    pub probes: Vec<[f64; 2]>,
    pub probe_spacing: f64,
    /// Second function `g` of the bilinear identities: a bump.
    pub g_center: [f64; 2],
    pub g_radius: f64,
    pub identities: bool,
    pub identity_t_factor: f64,
    pub csv: bool,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelOptions::default();
        let i = IdentityOptions::default();
        KernelSection {
            n_theta: k.n_theta,
            ds: k.ds,
            pad_factor: k.pad_factor,
            smoothing_samples: k.smoothing_samples,
            band: k.band,
            probes: Vec::new(),
            probe_spacing: 0.25,
            g_center: [-0.25, -0.1],
            g_radius: 0.3,
            identities: true,
            identity_t_factor: i.t_factor,
            csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub previews: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            previews: true,
        }
    }
}

fn config_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        location: location.into(),
        message: message.into(),
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, 1-based.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Problem found after parsing, tied to a `section.key`.
struct Issue {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn issue(section: &'static str, key: &'static str, message: impl Into<String>) -> Issue {
    Issue {
        section,
        key,
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates `text`; `source` names it in error locations.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = match e.span() {
                Some(span) => format!("{source}:{}", line_of_offset(text, span.start)),
                None => source.to_string(),
            };
            config_error(at, e.message().trim().to_string())
        })?;
        if let Err(i) = cfg.check() {
            let at = match locate(text, i.section, i.key) {
                Some(line) => format!("{source}:{line}"),
                None => format!("{source} ({}.{})", i.section, i.key),
            };
            return Err(config_error(at, i.message));
        }
        Ok(cfg)
    }

    /// Applies `section.key=value` overrides. Values are TOML literals; bare
    /// words are taken as strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| config_error("overrides", e.to_string()))?;
        for o in overrides {
            let bad = |m: &str| config_error(format!("override `{o}`"), m.to_string());
            let (path, raw) = o.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
            let (section, key) = path.trim().split_once('.').ok_or_else(|| bad("expected section.key=value"))?;
            let raw = raw.trim();
            let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            };
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(sec) = entry else {
                return Err(bad("not a section"));
            };
            sec.insert(key.to_string(), value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error("overrides", e.message().trim().to_string()))?;
        cfg.check()
            .map_err(|i| config_error(format!("override ({}.{})", i.section, i.key), i.message))?;
        Ok(cfg)
    }

    fn check(&self) -> std::result::Result<(), Issue> {
        if self.grid.n < 51 {
            return Err(issue("grid", "n", format!("n must be at least 51, got {}", self.grid.n)));
        }
        if !(self.grid.radius > 0.0 && self.grid.radius.is_finite()) {
            return Err(issue("grid", "radius", "radius must be positive"));
        }
        if !(self.forward.t_factor >= 2.0) {
            return Err(issue("forward", "t_factor", format!("t_factor must be at least 2, got {}", self.forward.t_factor)));
        }
        if self.forward.pad_factor < 1 {
            return Err(issue("forward", "pad_factor", "pad_factor must be at least 1"));
        }
        if !(self.noise.percent >= 0.0 && self.noise.percent.is_finite()) {
            return Err(issue("noise", "percent", "percent must be a non-negative number"));
        }
        let r = &self.reconstruction;
        if r.formula == FormulaKind::Mixed {
            let b_ok = match r.b {
                Some(b) => b > 0.0,
                None => r.b_cells > 0.0,
            };
            if !b_ok {
                let key = if r.b.is_some() { "b" } else { "b_cells" };
                return Err(issue("reconstruction", key, "the mixed formula needs b > 0"));
            }
            if !(r.a >= 0.0) {
                return Err(issue("reconstruction", "a", "the mixed formula needs a >= 0"));
            }
        }
        if let Some(rad) = self.domain.radius {
            if !(rad > 0.0) {
                return Err(issue("domain", "radius", "radius must be positive"));
            }
        }
        if self.domain.kind != DomainKind::Circle && !self.domain.semi_axes.iter().all(|&e| e > 0.0) {
            return Err(issue("domain", "semi_axes", "semi-axes must be positive"));
        }
        if self.phantom.kind == PhantomKind::Custom && self.phantom.components.is_empty() {
            return Err(issue("phantom", "components", "a custom phantom needs at least one component"));
        }
        if self.kernel.n_theta < 4 {
            return Err(issue("kernel", "n_theta", "n_theta must be at least 4"));
        }
        if !(self.kernel.ds > 0.0) {
            return Err(issue("kernel", "ds", "ds must be positive"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n, self.grid.radius, self.grid_center())
    }

    pub fn grid_center(&self) -> Point {
        self.grid.center.into()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.grid.radius / (self.grid.n - 1) as f64
    }

    pub fn t_final(&self) -> f64 {
        self.forward.t_factor * self.grid.radius
    }

    pub fn domain_description(&self) -> DomainDescription {
        let d = &self.domain;
        let center = d.center.unwrap_or(self.grid.center);
        match d.kind {
            DomainKind::Circle => DomainDescription::Circle {
                center,
                radius: d.radius.unwrap_or(self.grid.radius),
            },
            DomainKind::Ellipse => DomainDescription::Ellipse {
                center,
                semi_axes: d.semi_axes,
                angle: d.angle,
            },
            DomainKind::Superellipse => DomainDescription::Superellipse {
                center,
                semi_axes: d.semi_axes,
                exponent: d.exponent,
            },
        }
    }

    pub fn weight_rule(&self) -> WeightRule {
        match self.forward.weights {
            WeightChoice::Trapezoid => WeightRule::Trapezoid,
            WeightChoice::Uniform => WeightRule::Uniform,
        }
    }

    pub fn phantom(&self) -> Phantom {
        let p = &self.phantom;
        let center: Point = p.center.into();
        match p.kind {
            PhantomKind::Head => head_phantom(&GridSpec {
                n: self.grid.n,
                radius: self.grid.radius,
                center: self.grid_center(),
            }),
            PhantomKind::Bump => Phantom::new(vec![Component::bump(center, p.radius, p.amplitude)]),
            PhantomKind::Gaussian => Phantom::new(vec![Component::Gaussian {
                center,
                sigma: p.sigma,
                amplitude: p.amplitude,
            }]),
            PhantomKind::Zero => Phantom::new(Vec::new()),
            PhantomKind::Custom => Phantom {
                components: p.components.clone(),
                unsupported_regime: p.unsupported_regime,
            },
        }
    }

    pub fn reconstruct_options(&self) -> ReconstructOptions {
        ReconstructOptions {
            rule: match self.reconstruction.abel {
                AbelChoice::Linear => AbelRule::Linear,
                AbelChoice::RightEndpoint => AbelRule::RightEndpoint,
            },
            c_ubp: self.reconstruction.c_ubp,
        }
    }

    /// Mixed-trace coefficients `(a, b)`.
    pub fn mixed_coefficients(&self) -> (f64, f64) {
        let r = &self.reconstruction;
        (r.a, r.b.unwrap_or(r.b_cells * self.dx()))
    }

    pub fn formula(&self, kind: FormulaKind) -> Formula {
        match kind {
            FormulaKind::Neumann => Formula::Neumann,
            FormulaKind::Mixed => {
                let (a, b) = self.mixed_coefficients();
                Formula::Mixed { a, b }
            }
            FormulaKind::DirichletUbp => Formula::DirichletUbp,
        }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        let k = &self.kernel;
        KernelOptions {
            n_theta: k.n_theta,
            ds: k.ds,
            pad_factor: k.pad_factor,
            smoothing_samples: k.smoothing_samples,
            band: k.band,
        }
    }

    pub fn identity_options(&self) -> IdentityOptions {
        IdentityOptions {
            t_factor: self.kernel.identity_t_factor,
            ..IdentityOptions::default()
        }
    }
}

/// `M = ⌈2ρπ/Δx⌉` on circles, `⌈|∂Ω|/Δx⌉` otherwise.
pub fn detector_count(domain: &ConvexDomain, dx: f64) -> usize {
    match domain {
        ConvexDomain::Circle { radius, .. } => circle_detector_count(*radius, dx),
        _ => (domain.perimeter() / dx).ceil() as usize,
    }
    .max(3)
}

/// Detector array for a domain description at grid step `dx`.
pub fn build_detectors(desc: &DomainDescription, dx: f64, rule: WeightRule) -> Result<DetectorArray> {
    let domain = desc.build()?;
    let m = detector_count(&domain, dx);
    DetectorArray::on_boundary(&domain, m, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_full_example() {
        let cfg = RunConfig::parse("", "t").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = r#"
[grid]
n = 101
radius = 1.0

[domain]
kind = "ellipse"
semi_axes = [0.95, 0.8]

[phantom]
kind = "bump"
center = [0.1, 0.0]
radius = 0.4

[reconstruction]
formula = "mixed"
b_cells = 3.0
"#;
        let cfg = RunConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.grid.n, 101);
        assert_eq!(cfg.mixed_coefficients(), (1.0, 3.0 * 0.02));
        assert!(matches!(cfg.domain_description(), DomainDescription::Ellipse { .. }));
    }

    #[test]
    fn errors_name_the_line() {
        let text = "[grid]\nn = 101\n\n[forward]\nt_factor = 1.0\n";
        let e = RunConfig::parse(text, "run.toml").unwrap_err().to_string();
        assert!(e.contains("run.toml:5"), "{e}");
        let e = RunConfig::parse("[grid]\nn = 10\n", "run.toml").unwrap_err().to_string();
        assert!(e.contains("run.toml:2") && e.contains("at least 51"), "{e}");
        let e = RunConfig::parse("[grid]\n\nsize = 3\n", "run.toml").unwrap_err().to_string();
        assert!(e.contains("run.toml:3") && e.contains("size"), "{e}");
        let e = RunConfig::parse("[noise]\npercent = \"ten\"\n", "run.toml").unwrap_err().to_string();
        assert!(e.contains("run.toml:2"), "{e}");
        let text = "[reconstruction]\nformula = \"mixed\"\nb = 0.0\n";
        let e = RunConfig::parse(text, "run.toml").unwrap_err().to_string();
        assert!(e.contains("run.toml:3") && e.contains("b > 0"), "{e}");
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::default()
            .with_overrides(&["grid.n=121".into(), "reconstruction.formula=mixed".into(), "output.dir=x y".into()])
            .unwrap();
        assert_eq!(cfg.grid.n, 121);
        assert_eq!(cfg.reconstruction.formula, FormulaKind::Mixed);
        assert_eq!(cfg.output.dir, "x y");
        let e = RunConfig::default().with_overrides(&["grid.n=7".into()]).unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
        assert!(RunConfig::default().with_overrides(&["grid".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["grid.bogus=1".into()]).is_err());
    }

    #[test]
    fn detector_counts_follow_the_grid_step() {
        let cfg = RunConfig::default().with_overrides(&["grid.n=301".into()]).unwrap();
        let d = build_detectors(&cfg.domain_description(), cfg.dx(), cfg.weight_rule()).unwrap();
        assert_eq!(d.len(), 943);
        assert_eq!(crate::forward::time_samples(cfg.t_final(), cfg.dx()), 2401);
    }

    #[test]
    fn per_kind_seeds_differ() {
        let n = NoiseSection::default();
        let s = [
            n.seed_for(TraceKind::Dirichlet),
            n.seed_for(TraceKind::Neumann),
            n.seed_for(TraceKind::Mixed { a: 1.0, b: 0.1 }),
        ];
        assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
    }
}

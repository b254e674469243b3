//! Run configuration: strict TOML, validated as a whole.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use rqnls_core::dynamics::SymmetryElement;
use rqnls_core::resonance::{beta_range, Dim, ModeIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Resonant1d,
    Resonant2d,
    Cylinder,
}

impl System {
    pub fn dim(self) -> Dim {
        match self {
            System::Resonant2d => Dim::Two,
            _ => Dim::One,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Resonant1d => "resonant1d",
            System::Resonant2d => "resonant2d",
            System::Cylinder => "cylinder",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Direct,
    Fft,
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Random,
    Gaussian,
    PlaneWave,
    File,
}

/// Initial data. `gaussian` puts `a_k exp(-(x - c_k)^2 / (2 w_k^2))` on mode
/// `modes[k]`; `plane-wave` multiplies each term by `exp(i xi_k x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSpec {
    pub kind: InitialKind,
    /// Rescale to this `L^2 h^1` norm.
    pub norm: Option<f64>,
    pub modes: Vec<Vec<i64>>,
    pub widths: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub centers: Vec<f64>,
    pub wavenumbers: Vec<f64>,
    pub width: f64,
    pub center_spread: f64,
    pub max_wavenumber: f64,
    pub path: Option<PathBuf>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            kind: InitialKind::Random,
            norm: None,
            modes: Vec::new(),
            widths: Vec::new(),
            amplitudes: Vec::new(),
            centers: Vec::new(),
            wavenumbers: Vec::new(),
            width: 1.0,
            center_spread: 1.0,
            max_wavenumber: 1.0,
            path: None,
        }
    }
}

impl InitialSpec {
    /// Closed-form profile for `gaussian` and `plane-wave`.
    pub fn profile(&self, j: ModeIndex, x: f64) -> Complex64 {
        let mut v = Complex64::default();
        for (k, m) in self.modes.iter().enumerate() {
            let mode = ModeIndex::from_coords(m).unwrap_or(ModeIndex::d1(i64::MAX));
            if mode != j {
                continue;
            }
            let c = self.centers.get(k).copied().unwrap_or(0.0);
            let w = self.widths[k];
            let env = self.amplitudes[k] * (-(x - c).powi(2) / (2.0 * w * w)).exp();
            let xi = match self.kind {
                InitialKind::PlaneWave => self.wavenumbers[k],
                _ => 0.0,
            };
            v += Complex64::from_polar(env, xi * x);
        }
        v
    }
}

/// Group parameters for initial data and experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SymmetrySpec {
    pub x0: f64,
    pub xi0: f64,
    pub lambda: f64,
    pub theta: f64,
    pub t_n: f64,
    /// Scales of the approximation experiment.
    pub lambdas: Vec<f64>,
}

impl Default for SymmetrySpec {
    fn default() -> Self {
        SymmetrySpec {
            x0: 0.0,
            xi0: 0.0,
            lambda: 1.0,
            theta: 0.5,
            t_n: 0.0,
            lambdas: vec![4.0, 8.0, 16.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsSpec {
    pub beta: Option<f64>,
    pub brackets: bool,
    pub contamination_threshold: f64,
    pub abort_on_contamination: bool,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            beta: None,
            brackets: true,
            contamination_threshold: 1e-6,
            abort_on_contamination: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: System,
    #[serde(rename = "J", default)]
    pub cutoff: i64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ny", default)]
    pub ny: Option<usize>,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    /// Record interval; defaults to `T / 100` rounded to whole steps.
    #[serde(default)]
    pub cadence: Option<f64>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub symmetry: SymmetrySpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

/// Every problem found in a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors {
    pub source: String,
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration {}:", self.source)?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors {
        source: path.display().to_string(),
        problems: vec![format!("cannot read file: {e}")],
    })?;
    parse_config_str(&text, &path.display().to_string())
}

/// Unknown keys, type errors and range violations are all reported.
pub fn parse_config_str(text: &str, source: &str) -> Result<RunConfig, ConfigErrors> {
    let fail = |problems: Vec<String>| ConfigErrors {
        source: source.to_string(),
        problems,
    };
    let de = toml::Deserializer::parse(text).map_err(|e| fail(vec![e.to_string()]))?;
    let mut unknown = Vec::new();
    let parsed: Result<RunConfig, _> = serde_ignored::deserialize(de, |path| {
        unknown.push(format!("{path}: unknown key"));
    });
    let mut problems = unknown;
    match parsed {
        Ok(cfg) => {
            problems.extend(cfg.problems());
            if problems.is_empty() {
                Ok(cfg)
            } else {
                Err(fail(problems))
            }
        }
        Err(e) => {
            problems.push(e.to_string().trim().to_string());
            Err(fail(problems))
        }
    }
}

impl RunConfig {
    pub fn dim(&self) -> Dim {
        self.system.dim()
    }

    /// Steps per record.
    pub fn cadence(&self) -> f64 {
        match self.cadence {
            Some(c) => c,
            None => (self.duration / self.dt / 100.0).round().max(1.0) * self.dt,
        }
    }

    pub fn beta(&self) -> f64 {
        self.diagnostics
            .beta
            .unwrap_or_else(|| rqnls_core::diagnostics::DiagnosticsConfig::for_dim(self.dim()).beta)
    }

    pub fn symmetry_element(&self) -> SymmetryElement {
        SymmetryElement {
            x0: self.symmetry.x0,
            xi0: self.symmetry.xi0,
            lambda: self.symmetry.lambda,
        }
    }

    /// Range and consistency violations, each naming its field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let whole = |x: f64, unit: f64| {
            let r = x / unit;
            (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            p.push(format!("dt: dt must be positive (got {})", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            p.push(format!("T: must be nonnegative (got {})", self.duration));
        } else if self.dt > 0.0 && !whole(self.duration, self.dt) {
            p.push(format!("T: {} is not a whole number of steps dt = {}", self.duration, self.dt));
        }
        if let Some(c) = self.cadence {
            if !(c.is_finite() && c > 0.0) {
                p.push(format!("cadence: must be positive (got {c})"));
            } else if self.dt > 0.0 && !whole(c, self.dt) {
                p.push(format!("cadence: {c} is not a whole number of steps dt = {}", self.dt));
            }
        }
        if self.cutoff < 0 {
            p.push(format!("J: must be nonnegative (got {})", self.cutoff));
        } else if self.cutoff > 64 {
            p.push(format!("J: {} exceeds the supported maximum 64", self.cutoff));
        }
        if self.nx < 8 || !self.nx.is_power_of_two() {
            p.push(format!("Nx: must be a power of two >= 8 (got {})", self.nx));
        }
        match (self.system, self.ny) {
            (System::Cylinder, None) => p.push("Ny: required for system = cylinder".into()),
            (System::Cylinder, Some(ny)) => {
                if ny < 2 || !ny.is_power_of_two() {
                    p.push(format!("Ny: must be a power of two >= 2 (got {ny})"));
                } else if (2 * self.cutoff + 1) as usize > ny {
                    p.push(format!("Ny: {ny} cannot resolve the y-modes |j| <= {}", self.cutoff));
                }
            }
            (_, Some(_)) => p.push("Ny: only meaningful for system = cylinder".into()),
            _ => {}
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            p.push(format!("L: must be positive (got {})", self.half_width));
        }
        if self.system == System::Cylinder && self.method != MethodChoice::Auto {
            p.push("method: the cylinder integrator has no nonlinearity method".into());
        }
        p.extend(self.initial_problems());
        p.extend(self.symmetry_problems());
        if let Some(b) = self.diagnostics.beta {
            let (lo, hi) = beta_range(self.dim());
            if !(b > lo && b < hi) {
                p.push(format!("diagnostics.beta: {b} outside ({lo}, {hi})"));
            }
        }
        let th = self.diagnostics.contamination_threshold;
        if !(th > 0.0 && th < 1.0) {
            p.push(format!("diagnostics.contamination_threshold: must lie in (0, 1) (got {th})"));
        }
        p
    }

    fn initial_problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let s = &self.initial;
        if let Some(n) = s.norm {
            if !(n.is_finite() && n >= 0.0) {
                p.push(format!("initial.norm: must be nonnegative (got {n})"));
            }
        }
        match s.kind {
            InitialKind::Random => {
                if s.width.is_nan() || s.width <= 0.0 {
                    p.push(format!("initial.width: must be positive (got {})", s.width));
                }
                if !(s.center_spread >= 0.0 && s.max_wavenumber >= 0.0) {
                    p.push("initial.center_spread, initial.max_wavenumber: must be nonnegative".into());
                }
            }
            InitialKind::Gaussian | InitialKind::PlaneWave => {
                let n = s.modes.len();
                if n == 0 {
                    p.push("initial.modes: at least one mode is required".into());
                }
                let rank = self.dim().rank();
                for m in &s.modes {
                    if m.len() != rank {
                        p.push(format!("initial.modes: {m:?} needs {rank} coordinates"));
                    } else if m.iter().any(|c| c.abs() > self.cutoff) {
                        p.push(format!("initial.modes: {m:?} lies outside |j| <= J = {}", self.cutoff));
                    }
                }
                if s.widths.len() != n || s.widths.iter().any(|w| w.is_nan() || *w <= 0.0) {
                    p.push(format!("initial.widths: need {n} positive entries"));
                }
                if s.amplitudes.len() != n {
                    p.push(format!("initial.amplitudes: need {n} entries"));
                }
                if !s.centers.is_empty() && s.centers.len() != n {
                    p.push(format!("initial.centers: need 0 or {n} entries"));
                }
                if s.kind == InitialKind::PlaneWave && s.wavenumbers.len() != n {
                    p.push(format!("initial.wavenumbers: need {n} entries"));
                }
            }
            InitialKind::File => {
                if s.path.is_none() {
                    p.push("initial.path: required for kind = file".into());
                }
            }
        }
        p
    }

    fn symmetry_problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let s = &self.symmetry;
        if let Err(e) = SymmetryElement::check_scale(s.lambda) {
            p.push(format!("symmetry.lambda: {e}"));
        }
        for &l in &s.lambdas {
            if let Err(e) = SymmetryElement::check_scale(l) {
                p.push(format!("symmetry.lambdas: {e}"));
            }
        }
        if s.lambdas.is_empty() {
            p.push("symmetry.lambdas: must not be empty".into());
        }
        if !(s.theta > 0.0 && s.theta < 1.0) {
            p.push(format!("symmetry.theta: must lie in (0, 1) (got {})", s.theta));
        }
        if self.half_width > 0.0 {
            let r = s.xi0 * self.half_width / std::f64::consts::PI;
            if !(r.is_finite() && (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)) {
                p.push(format!(
                    "symmetry.xi0: {} is not a multiple of pi / L",
                    s.xi0
                ));
            }
        }
        if !(s.x0.is_finite() && s.t_n.is_finite()) {
            p.push("symmetry.x0, symmetry.t_n: must be finite".into());
        }
        p
    }
}

//! Verification harness.
//!
//! Each [`CheckSpec`] names one [`Procedure`], which exercises one module
//! operation ([`CheckOp`]) over a parameter grid and turns the outcome into a
//! [`CheckReport`]. Checks are seeded from the suite seed and the check name,
//! so a report does not depend on catalogue order or thread count.
//!
//! Bounded-constant checks publish a convergence table along a cutoff ladder
//! and fail only when the last successive ratio exceeds `1 + tolerance`.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bilinear_virial, bilinear_virial_direct, finite_difference, frequency_localized_morawetz,
    morawetz_action, morawetz_action_direct, morawetz_action_with, morawetz_bound,
    scattering_cauchy_defect, DiagnosticsConfig, L6Accumulator, MorawetzWeight, Recorder,
};
use crate::dynamics::{
    approximation_experiment, evolve, free_evolve, galilean_transform, ApproxConfig,
    CylinderField, CylinderIntegrator, EvolveOptions, Integrator, Outcome, SimState,
};
use crate::error::{Error, Result};
use crate::faults::Faults;
use crate::grid::{project_low, Grid1D, NormSpec, SpectralField};
use crate::nonlinearity::{
    bracket_residuals_with, mass_family, resonant_energy, sextic_density,
    sextic_density_direct, sextic_density_double_index, Nonlinearity, NonlinearityMethod,
};
use crate::random::{normalized, random_field, RandomFieldSpec};
use crate::resonance::{
    beta_range, circle_lattice_points, modes_in_box, CircleSpec, Dim, ElementarySums, ModeIndex,
    ResonanceTable, ResonantTuple, WeightedSums,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Identity,
    BoundedConstant,
    ConvergenceOrder,
    OracleEquivalence,
    Monotonicity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Reported,
}

/// Module operation under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOp {
    EnumerateResonances,
    CircleLatticePoints,
    ElementarySum,
    WeightedResonantSum,
    EvalF,
    BracketResiduals,
    SexticDensity,
    GalileanTransform,
    Evolve,
    StrangStep,
    MorawetzAction,
    FrequencyLocalizedMorawetz,
    ProjectLow,
    ScatteringCauchyDefect,
    L6Accumulation,
    ApproximationExperiment,
    BilinearVirial,
}

/// Test procedure run by a check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Resonance table against the full five-fold loop; tolerance counts tuples.
    ResonanceCompleteness,
    /// Circle enumeration against `r_2(n) = 4 (d_1(n) - d_3(n))` and a brute-force box scan.
    CircleCounts,
    ElementarySumBound,
    WeightedSumBound,
    /// Direct enumeration against the lift, relative `L^2`.
    NonlinearityOracle,
    /// `F(e^{i theta_j} u) = e^{i theta_j} F(u)` for `theta_j = a + b.j + c |j|^2`.
    GaugeCovariance,
    /// `sup_x ||F(u)||_{h^1} / (||u||_{h^1} ||u||^4_{h^beta})` along a ladder of `J`.
    NonlinearEstimate,
    MassBracket,
    MomentumBracket,
    /// `min D >= -tolerance * max D`.
    SexticPositivity,
    /// Lift, direct and double-index routes to `D`.
    SexticRoutes,
    GalileanCovariance,
    /// Largest relative drift of `M_{1,0,0}`, `M_{0,1,0}`, `M_{0,0,1}` and the energy.
    Conservation,
    StrangOrder,
    MorawetzOracle,
    /// `|M| / (||u||^3 ||d_x u||)`, against `tolerance` as the constant.
    MorawetzBound,
    /// Frequency-localized action at the Nyquist cutoff against the plain action.
    FrequencyLocalizedLimit,
    /// `P_{<= N}` commutes with the free flow.
    FreeProjectionCommute,
    CauchyDefectMonotone,
    /// Share of the `L^6` integral gathered in the last quarter of the run.
    L6Saturation,
    ApproximationMonotone,
    VirialOracle,
    /// `max |I'| / (||u||^3 ||d_x u||)` on a cylinder run, against `tolerance`.
    VirialDerivativeBound,
}

impl Procedure {
    pub const ALL: [Procedure; 23] = [
        Procedure::ResonanceCompleteness,
        Procedure::CircleCounts,
        Procedure::ElementarySumBound,
        Procedure::WeightedSumBound,
        Procedure::NonlinearityOracle,
        Procedure::GaugeCovariance,
        Procedure::NonlinearEstimate,
        Procedure::MassBracket,
        Procedure::MomentumBracket,
        Procedure::SexticPositivity,
        Procedure::SexticRoutes,
        Procedure::GalileanCovariance,
        Procedure::Conservation,
        Procedure::StrangOrder,
        Procedure::MorawetzOracle,
        Procedure::MorawetzBound,
        Procedure::FrequencyLocalizedLimit,
        Procedure::FreeProjectionCommute,
        Procedure::CauchyDefectMonotone,
        Procedure::L6Saturation,
        Procedure::ApproximationMonotone,
        Procedure::VirialOracle,
        Procedure::VirialDerivativeBound,
    ];

    pub fn op(self) -> CheckOp {
        use Procedure::*;
        match self {
            ResonanceCompleteness => CheckOp::EnumerateResonances,
            CircleCounts => CheckOp::CircleLatticePoints,
            ElementarySumBound => CheckOp::ElementarySum,
            WeightedSumBound => CheckOp::WeightedResonantSum,
            NonlinearityOracle | GaugeCovariance | NonlinearEstimate => CheckOp::EvalF,
            MassBracket | MomentumBracket => CheckOp::BracketResiduals,
            SexticPositivity | SexticRoutes => CheckOp::SexticDensity,
            GalileanCovariance => CheckOp::GalileanTransform,
            Conservation => CheckOp::Evolve,
            StrangOrder => CheckOp::StrangStep,
            MorawetzOracle | MorawetzBound => CheckOp::MorawetzAction,
            FrequencyLocalizedLimit => CheckOp::FrequencyLocalizedMorawetz,
            FreeProjectionCommute => CheckOp::ProjectLow,
            CauchyDefectMonotone => CheckOp::ScatteringCauchyDefect,
            L6Saturation => CheckOp::L6Accumulation,
            ApproximationMonotone => CheckOp::ApproximationExperiment,
            VirialOracle | VirialDerivativeBound => CheckOp::BilinearVirial,
        }
    }

    pub fn kind(self) -> CheckKind {
        use Procedure::*;
        match self {
            ElementarySumBound | WeightedSumBound | NonlinearEstimate => CheckKind::BoundedConstant,
            StrangOrder => CheckKind::ConvergenceOrder,
            ResonanceCompleteness | CircleCounts | NonlinearityOracle | SexticRoutes
            | MorawetzOracle | VirialOracle => CheckKind::OracleEquivalence,
            CauchyDefectMonotone | L6Saturation | ApproximationMonotone => CheckKind::Monotonicity,
            _ => CheckKind::Identity,
        }
    }

    /// Parameter-grid fields the procedure reads.
    pub fn required(self) -> &'static [&'static str] {
        use Procedure::*;
        match self {
            ResonanceCompleteness => &["cases"],
            CircleCounts => &["radius"],
            ElementarySumBound => &["ladder", "radius"],
            WeightedSumBound => &["cases", "betas", "ladder", "radius"],
            NonlinearityOracle | GaugeCovariance | MassBracket | MomentumBracket
            | SexticPositivity | SexticRoutes | MorawetzOracle | MorawetzBound
            | FrequencyLocalizedLimit | FreeProjectionCommute => {
                &["cases", "nx", "half_width", "samples"]
            }
            NonlinearEstimate => &["cases", "betas", "ladder", "samples"],
            GalileanCovariance | Conservation => &["cases", "nx", "half_width", "dts", "duration"],
            StrangOrder => &["cases", "nx", "half_width", "dts", "duration"],
            CauchyDefectMonotone | L6Saturation => {
                &["cases", "nx", "half_width", "dts", "duration", "amplitude"]
            }
            ApproximationMonotone => &["cases", "nx", "half_width", "ladder", "dts", "duration"],
            VirialOracle => &["nx", "half_width", "samples"],
            VirialDerivativeBound => &["nx", "half_width", "dts", "duration"],
        }
    }
}

/// `(dim, J)` pair of a parameter grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub dim: usize,
    pub cutoff: i64,
}

/// Inputs of a check; a procedure reads only the fields it lists in
/// [`Procedure::required`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub cases: Vec<Case>,
    pub nx: Vec<usize>,
    pub half_width: f64,
    pub betas: Vec<f64>,
    pub samples: usize,
    /// Step sizes; for convergence checks, a halving ladder.
    pub dts: Vec<f64>,
    /// Cutoff or scale ladder of a bounded-constant or scaling check.
    pub ladder: Vec<i64>,
    /// Sup radius in `j`, or the largest squared radius for circle counts.
    pub radius: i64,
    pub duration: f64,
    /// Initial `L^2 h^1` norm.
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub name: String,
    pub procedure: Procedure,
    pub kind: CheckKind,
    pub params: ParamGrid,
    pub tolerance: f64,
}

impl CheckSpec {
    pub fn new(name: &str, procedure: Procedure, params: ParamGrid, tolerance: f64) -> Self {
        CheckSpec {
            name: name.to_string(),
            procedure,
            kind: procedure.kind(),
            params,
            tolerance,
        }
    }

    pub fn op(&self) -> CheckOp {
        self.procedure.op()
    }

    /// Rejects the spec with a message naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| {
            Err(Error::InvalidParameter(format!(
                "check `{}`: field `{field}` {why}",
                self.name
            )))
        };
        if self.name.is_empty() {
            return bad("name", "is empty".into());
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return bad("tolerance", format!("must be positive, got {}", self.tolerance));
        }
        if self.kind != self.procedure.kind() {
            return bad(
                "kind",
                format!("is {:?} but the procedure is {:?}", self.kind, self.procedure.kind()),
            );
        }
        let p = &self.params;
        for &field in self.procedure.required() {
            let msg = match field {
                "cases" if p.cases.is_empty() => Some("is empty".to_string()),
                "cases" => p.cases.iter().find_map(|c| {
                    if Dim::from_rank(c.dim).is_err() {
                        Some(format!("has dimension {} (expected 1 or 2)", c.dim))
                    } else if c.cutoff < 0 {
                        Some(format!("has negative cutoff {}", c.cutoff))
                    } else {
                        None
                    }
                }),
                "nx" if p.nx.is_empty() => Some("is empty".into()),
                "nx" => p
                    .nx
                    .iter()
                    .find(|&&n| n < 8)
                    .map(|n| format!("has {n} points (at least 8 needed)")),
                "half_width" if !(p.half_width > 0.0 && p.half_width.is_finite()) => {
                    Some(format!("must be positive, got {}", p.half_width))
                }
                "betas" if p.betas.is_empty() => Some("is empty".into()),
                "betas" => p.betas.iter().find_map(|&b| {
                    p.cases.iter().find_map(|c| {
                        let (lo, hi) = beta_range(Dim::from_rank(c.dim).ok()?);
                        (!(b > lo && b < hi))
                            .then(|| format!("has {b} outside ({lo}, {hi}) for dim {}", c.dim))
                    })
                }),
                "samples" if p.samples == 0 => Some("must be positive".into()),
                "dts" if p.dts.is_empty() => Some("is empty".into()),
                "dts" => p
                    .dts
                    .iter()
                    .find(|&&d| !(d > 0.0 && d.is_finite()))
                    .map(|d| format!("has non-positive step {d}")),
                "ladder" if p.ladder.len() < 2 => Some("needs at least two entries".into()),
                "ladder" if p.ladder[0] <= 0 || p.ladder.windows(2).any(|w| w[1] <= w[0]) => {
                    Some("must be positive and strictly increasing".into())
                }
                "radius" if p.radius < 0 => Some(format!("must be nonnegative, got {}", p.radius)),
                "duration" if !(p.duration > 0.0 && p.duration.is_finite()) => {
                    Some(format!("must be positive, got {}", p.duration))
                }
                "amplitude" if !(p.amplitude > 0.0 && p.amplitude.is_finite()) => {
                    Some(format!("must be positive, got {}", p.amplitude))
                }
                _ => None,
            };
            if let Some(why) = msg {
                return bad(&format!("params.{field}"), why);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub op: CheckOp,
    pub kind: CheckKind,
    pub status: Status,
    pub tolerance: f64,
    /// Headline numbers: residuals, constants, orders.
    pub measured: BTreeMap<String, f64>,
    pub columns: Vec<String>,
    /// Convergence or sample table, one row per ladder entry.
    pub table: Vec<Vec<f64>>,
    pub detail: String,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub fingerprint: String,
    pub reports: Vec<CheckReport>,
    /// Kept apart from `reports` so that the payload is reproducible.
    pub timings: Vec<Timing>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.reports
            .iter()
            .filter(|r| r.status == Status::Fail)
            .map(|r| r.name.as_str())
            .collect()
    }

    /// JSON of everything except the timings.
    pub fn payload_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            seed: u64,
            fingerprint: &'a str,
            reports: &'a [CheckReport],
        }
        serde_json::to_string_pretty(&Payload {
            seed: self.seed,
            fingerprint: &self.fingerprint,
            reports: &self.reports,
        })
        .expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn fingerprint() -> String {
    format!(
        "rqnls-core {} {}-{} f64",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteLevel {
    Fast,
    Default,
    Full,
}

impl std::str::FromStr for SuiteLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(SuiteLevel::Fast),
            "default" => Ok(SuiteLevel::Default),
            "full" => Ok(SuiteLevel::Full),
            _ => Err(Error::InvalidParameter(format!(
                "unknown suite `{s}` (expected fast, default or full)"
            ))),
        }
    }
}

/// The default catalogue.
pub fn builtin_suite() -> Vec<CheckSpec> {
    suite(SuiteLevel::Default)
}

/// The catalogue at a given size; every level has the same check names.
pub fn suite(level: SuiteLevel) -> Vec<CheckSpec> {
    use Procedure::*;
    let fast = level == SuiteLevel::Fast;
    let full = level == SuiteLevel::Full;
    let pick = |f: usize, d: usize, u: usize| match level {
        SuiteLevel::Fast => f,
        SuiteLevel::Default => d,
        SuiteLevel::Full => u,
    };
    let d1 = |cutoffs: &[i64]| -> Vec<Case> {
        cutoffs.iter().map(|&cutoff| Case { dim: 1, cutoff }).collect()
    };
    let fields = |cases: Vec<Case>, nx: Vec<usize>, samples: usize| ParamGrid {
        cases,
        nx,
        half_width: 12.0,
        samples,
        ..Default::default()
    };
    let mut small = d1(&[1, 2, 3]);
    small.push(Case { dim: 2, cutoff: 1 });
    if !fast {
        small.push(d1(&[4])[0]);
        small.push(Case { dim: 2, cutoff: 2 });
    }
    let smooth = vec![256];
    let run = |nx: usize, dt: f64, duration: f64| ParamGrid {
        cases: d1(&[2]),
        nx: vec![nx],
        half_width: 20.0,
        dts: vec![dt],
        duration,
        amplitude: 1.0,
        ..Default::default()
    };

    vec![
        CheckSpec::new(
            "resonance_completeness",
            ResonanceCompleteness,
            ParamGrid {
                cases: {
                    let mut c = d1(&[0, 1, 2, 3, 4]);
                    let top = if fast { 2 } else { 3 };
                    c.extend((0..=top).map(|cutoff| Case { dim: 2, cutoff }));
                    c
                },
                ..Default::default()
            },
            0.5,
        ),
        CheckSpec::new(
            "circle_counts",
            CircleCounts,
            ParamGrid {
                radius: pick(200, 2000, 20000) as i64,
                ..Default::default()
            },
            0.5,
        ),
        CheckSpec::new(
            "elementary_sum_bound",
            ElementarySumBound,
            ParamGrid {
                ladder: if fast { vec![16, 32, 64, 128] } else { vec![32, 64, 128, 256] },
                radius: 32,
                ..Default::default()
            },
            0.25,
        ),
        CheckSpec::new(
            "weighted_sum_bound_dim1",
            WeightedSumBound,
            ParamGrid {
                cases: d1(&[0]),
                betas: vec![0.5],
                ladder: match level {
                    SuiteLevel::Fast => vec![8, 16, 32, 64],
                    SuiteLevel::Default => vec![16, 32, 64, 128],
                    SuiteLevel::Full => vec![32, 64, 128, 256],
                },
                radius: 16,
                ..Default::default()
            },
            0.25,
        ),
        CheckSpec::new(
            "weighted_sum_bound_dim2",
            WeightedSumBound,
            ParamGrid {
                cases: vec![Case { dim: 2, cutoff: 0 }],
                betas: vec![0.9],
                ladder: if fast { vec![1, 2, 4, 8] } else { vec![2, 4, 8, 16] },
                radius: if fast { 1 } else { 2 },
                ..Default::default()
            },
            0.25,
        ),
        CheckSpec::new(
            "nonlinearity_oracle",
            NonlinearityOracle,
            fields(small.clone(), vec![32, 64], pick(4, 20, 50)),
            1e-10,
        ),
        CheckSpec::new(
            "gauge_covariance",
            GaugeCovariance,
            fields(small.clone(), vec![32], pick(3, 10, 20)),
            1e-12,
        ),
        CheckSpec::new(
            "nonlinear_estimate",
            NonlinearEstimate,
            ParamGrid {
                cases: d1(&[0]),
                betas: vec![0.5],
                ladder: if full { vec![4, 8, 16, 32] } else { vec![2, 4, 8, 16] },
                samples: pick(8, 32, 64),
                ..Default::default()
            },
            0.25,
        ),
        CheckSpec::new(
            "mass_bracket",
            MassBracket,
            fields(small.clone(), smooth.clone(), pick(3, 20, 100)),
            1e-12,
        ),
        CheckSpec::new(
            "momentum_bracket",
            MomentumBracket,
            fields(small.clone(), smooth.clone(), pick(3, 20, 100)),
            1e-8,
        ),
        CheckSpec::new(
            "sextic_positivity",
            SexticPositivity,
            fields(small.clone(), vec![64], pick(4, 20, 100)),
            1e-12,
        ),
        CheckSpec::new(
            "sextic_routes",
            SexticRoutes,
            fields(small.clone(), vec![32], pick(2, 5, 10)),
            1e-10,
        ),
        CheckSpec::new(
            "galilean_covariance",
            GalileanCovariance,
            run(256, 0.01, if fast { 0.25 } else { 1.0 }),
            1e-7,
        ),
        CheckSpec::new(
            "conservation",
            Conservation,
            run(pick(128, 256, 512), 1e-3, if fast { 0.1 } else { 0.5 }),
            1e-6,
        ),
        CheckSpec::new(
            "strang_order",
            StrangOrder,
            ParamGrid {
                dts: vec![0.01, 0.005, 0.0025],
                ..run(256, 0.01, if fast { 0.2 } else { 0.5 })
            },
            0.3,
        ),
        CheckSpec::new(
            "morawetz_oracle",
            MorawetzOracle,
            fields(small.clone(), vec![128], pick(5, 20, 50)),
            1e-10,
        ),
        CheckSpec::new(
            "morawetz_bound",
            MorawetzBound,
            fields(small.clone(), smooth.clone(), pick(5, 20, 50)),
            2.0,
        ),
        CheckSpec::new(
            "frequency_localized_limit",
            FrequencyLocalizedLimit,
            fields(small.clone(), vec![128], pick(3, 10, 20)),
            1e-9,
        ),
        CheckSpec::new(
            "free_projection_commute",
            FreeProjectionCommute,
            fields(small.clone(), vec![128], pick(3, 10, 20)),
            1e-12,
        ),
        CheckSpec::new(
            "cauchy_defect_monotone",
            CauchyDefectMonotone,
            scatter_params(level),
            1.0,
        ),
        CheckSpec::new("l6_saturation", L6Saturation, scatter_params(level), 0.05),
        CheckSpec::new(
            "approximation_monotone",
            ApproximationMonotone,
            ParamGrid {
                cases: d1(&[1]),
                nx: vec![if fast { 256 } else { 1024 }],
                half_width: if fast { 64.0 } else { 256.0 },
                ladder: vec![4, 8, 16],
                dts: vec![1e-3],
                duration: 0.5,
                ..Default::default()
            },
            1.0,
        ),
        CheckSpec::new(
            "virial_oracle",
            VirialOracle,
            ParamGrid {
                nx: vec![128],
                half_width: 12.0,
                samples: pick(3, 10, 20),
                ..Default::default()
            },
            1e-10,
        ),
        CheckSpec::new(
            "virial_derivative_bound",
            VirialDerivativeBound,
            ParamGrid {
                nx: vec![256],
                half_width: 16.0,
                dts: vec![1e-3],
                duration: if fast { 0.2 } else { 1.0 },
                ..Default::default()
            },
            4.0,
        ),
    ]
}

fn scatter_params(level: SuiteLevel) -> ParamGrid {
    let fast = level == SuiteLevel::Fast;
    ParamGrid {
        cases: vec![Case { dim: 1, cutoff: 2 }],
        nx: vec![if fast { 512 } else { 1024 }],
        half_width: if fast { 64.0 } else { 128.0 },
        dts: vec![if fast { 0.02 } else { 0.01 }],
        duration: 8.0,
        amplitude: 0.05,
        ..Default::default()
    }
}

/// Deliberate defects used to show that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    FlipSquareSign,
    DropConjugate,
    BracketFactorHalf,
    UndersizedLift,
    EvenMorawetzKernel,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::FlipSquareSign,
        Mutation::DropConjugate,
        Mutation::BracketFactorHalf,
        Mutation::UndersizedLift,
        Mutation::EvenMorawetzKernel,
    ];

    pub fn faults(self) -> Faults {
        let mut f = Faults::NONE;
        match self {
            Mutation::FlipSquareSign => f.flip_square_sign = true,
            Mutation::DropConjugate => f.drop_conjugate = true,
            Mutation::BracketFactorHalf => f.bracket_factor = Some(0.5),
            Mutation::UndersizedLift => f.undersized_lift = true,
            Mutation::EvenMorawetzKernel => f.even_morawetz_kernel = true,
        }
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationResult {
    pub mutation: Mutation,
    /// Names of the checks that failed under the mutation.
    pub failed: Vec<String>,
}

impl MutationResult {
    pub fn detected(&self) -> bool {
        !self.failed.is_empty()
    }
}

/// Runs `specs` once per canned mutation.
pub fn mutation_harness(specs: &[CheckSpec], seed: u64) -> Result<Vec<MutationResult>> {
    Mutation::ALL
        .iter()
        .map(|&m| {
            let report = run_suite_with(specs, seed, &m.faults())?;
            Ok(MutationResult {
                mutation: m,
                failed: report.failures().into_iter().map(String::from).collect(),
            })
        })
        .collect()
}

/// Validates every spec, then runs the checks in parallel; reports keep
/// catalogue order.
pub fn run_suite(specs: &[CheckSpec], seed: u64) -> Result<SuiteReport> {
    run_suite_with(specs, seed, &Faults::NONE)
}

#[doc(hidden)]
pub fn run_suite_with(specs: &[CheckSpec], seed: u64, faults: &Faults) -> Result<SuiteReport> {
    for s in specs {
        s.validate()?;
    }
    let fp = fingerprint();
    let results: Vec<(CheckReport, f64)> = specs
        .par_iter()
        .map(|s| {
            let start = Instant::now();
            let r = run_check(s, seed, faults, &fp);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let timings = results
        .iter()
        .map(|(r, t)| Timing {
            name: r.name.clone(),
            seconds: *t,
        })
        .collect();
    Ok(SuiteReport {
        seed,
        fingerprint: fp,
        reports: results.into_iter().map(|(r, _)| r).collect(),
        timings,
    })
}

/// What a procedure found; the status follows from the check kind.
struct Finding {
    status: Status,
    measured: BTreeMap<String, f64>,
    columns: Vec<String>,
    table: Vec<Vec<f64>>,
    detail: String,
}

impl Finding {
    fn new(status: Status, detail: String) -> Self {
        Finding {
            status,
            measured: BTreeMap::new(),
            columns: Vec::new(),
            table: Vec::new(),
            detail,
        }
    }

    /// Pass iff `value <= tolerance` (NaN fails).
    fn at_most(key: &str, value: f64, tolerance: f64) -> Self {
        let ok = value <= tolerance;
        let mut f = Finding::new(
            if ok { Status::Pass } else { Status::Fail },
            format!("{key} = {value:.3e} (limit {tolerance:.1e})"),
        );
        f.measured.insert(key.into(), value);
        f
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.measured.insert(key.into(), value);
        self
    }

    fn with_table(mut self, columns: &[&str], table: Vec<Vec<f64>>) -> Self {
        self.columns = columns.iter().map(|s| s.to_string()).collect();
        self.table = table;
        self
    }
}

fn run_check(spec: &CheckSpec, seed: u64, faults: &Faults, fp: &str) -> CheckReport {
    let local = seed ^ name_hash(&spec.name);
    let f = run_procedure(spec, local, faults)
        .unwrap_or_else(|e| Finding::new(Status::Fail, format!("error: {e}")));
    CheckReport {
        name: spec.name.clone(),
        op: spec.op(),
        kind: spec.kind,
        status: f.status,
        tolerance: spec.tolerance,
        measured: f.measured,
        columns: f.columns,
        table: f.table,
        detail: f.detail,
        fingerprint: fp.to_string(),
    }
}

/// FNV-1a.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn run_procedure(spec: &CheckSpec, seed: u64, faults: &Faults) -> Result<Finding> {
    use Procedure::*;
    let p = &spec.params;
    let tol = spec.tolerance;
    match spec.procedure {
        ResonanceCompleteness => resonance_completeness(p, tol, faults),
        CircleCounts => circle_counts(p, tol),
        ElementarySumBound => elementary_ladder(p, tol),
        WeightedSumBound => weighted_ladder(p, tol),
        NonlinearityOracle => nonlinearity_oracle(p, tol, seed, faults),
        GaugeCovariance => gauge_covariance(p, tol, seed, faults),
        NonlinearEstimate => nonlinear_estimate(p, tol, seed, faults),
        MassBracket | MomentumBracket => {
            brackets(p, tol, seed, faults, spec.procedure == MassBracket)
        }
        SexticPositivity => sextic_positivity(p, tol, seed),
        SexticRoutes => sextic_routes(p, tol, seed),
        GalileanCovariance => galilean_covariance(p, tol, seed, faults),
        Conservation => conservation(p, tol, seed, faults),
        StrangOrder => strang_order(p, tol, seed, faults),
        MorawetzOracle => morawetz_oracle(p, tol, seed, faults),
        MorawetzBound => morawetz_ratio(p, tol, seed, faults),
        FrequencyLocalizedLimit => frequency_limit(p, tol, seed),
        FreeProjectionCommute => projection_commute(p, tol, seed),
        CauchyDefectMonotone | L6Saturation => {
            scattering(p, tol, seed, faults, spec.procedure == L6Saturation)
        }
        ApproximationMonotone => approximation(p, tol),
        VirialOracle => virial_oracle(p, tol, seed),
        VirialDerivativeBound => virial_derivative(p, tol),
    }
}

fn dim_of(c: &Case) -> Result<Dim> {
    Dim::from_rank(c.dim)
}

fn test_spec(half_width: f64) -> RandomFieldSpec {
    RandomFieldSpec {
        max_wavenumber: 2.0,
        center_spread: half_width / 4.0,
        ..Default::default()
    }
}

fn sample_field(c: &Case, nx: usize, half_width: f64, seed: u64) -> Result<SpectralField> {
    let grid = Grid1D::new(half_width, nx)?;
    random_field(&grid, dim_of(c)?, c.cutoff, &test_spec(half_width), seed)
}

/// Every `(case, nx, sample)` combination of the grid, with its seed.
fn field_grid(p: &ParamGrid, seed: u64) -> Vec<(Case, usize, u64)> {
    let mut out = Vec::new();
    for c in &p.cases {
        for &nx in &p.nx {
            for _ in 0..p.samples {
                let i = out.len();
                out.push((*c, nx, sample_seed(seed, i)));
            }
        }
    }
    out
}

/// Largest value of `f` over the field grid.
fn max_over_fields(
    p: &ParamGrid,
    seed: u64,
    f: impl Fn(&SpectralField) -> Result<f64> + Sync,
) -> Result<f64> {
    let vals = field_grid(p, seed)
        .into_par_iter()
        .map(|(c, nx, s)| f(&sample_field(&c, nx, p.half_width, s)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) }))
}

fn rel_l2(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = a.sub(b).norm(NormSpec::l2(0.0));
    let n = b.norm(NormSpec::l2(0.0));
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

/// `R(j)` for every `j` in the box by looping over `j1..j4`.
fn naive_resonances(dim: Dim, j: ModeIndex, cutoff: i64) -> Vec<ResonantTuple> {
    let boxed = modes_in_box(dim, cutoff);
    let mut out = Vec::new();
    for &a in &boxed {
        for &b in &boxed {
            for &c in &boxed {
                for &d in &boxed {
                    let e = j - a + b - c + d;
                    if e.sup_norm() > cutoff || !e.fits(dim) {
                        continue;
                    }
                    let t = ResonantTuple([a, b, c, d, e]);
                    if t.square_sum() == j.norm_sq() {
                        out.push(t);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

fn resonance_completeness(p: &ParamGrid, tol: f64, faults: &Faults) -> Result<Finding> {
    let rows = p
        .cases
        .par_iter()
        .map(|c| {
            let dim = dim_of(c)?;
            let table = ResonanceTable::build_with(dim, c.cutoff, faults)?;
            let mut missing = 0usize;
            let mut extra = 0usize;
            for &j in table.modes() {
                let want = naive_resonances(dim, j, c.cutoff);
                let got = table.tuples_for(j);
                missing += want.iter().filter(|t| got.binary_search(t).is_err()).count();
                extra += got.iter().filter(|t| want.binary_search(t).is_err()).count();
            }
            Ok(vec![
                c.dim as f64,
                c.cutoff as f64,
                table.total_len() as f64,
                missing as f64,
                extra as f64,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let bad: f64 = rows.iter().map(|r| r[3] + r[4]).sum();
    Ok(Finding::at_most("mismatched_tuples", bad, tol)
        .with("tuples", rows.iter().map(|r| r[2]).sum())
        .with_table(&["dim", "cutoff", "tuples", "missing", "extra"], rows))
}

/// `r_2(n)` from the divisor formula.
fn r2(n: i64) -> usize {
    if n == 0 {
        return 1;
    }
    let (mut d1, mut d3) = (0, 0);
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            for e in [d, n / d] {
                match e % 4 {
                    1 => d1 += 1,
                    3 => d3 += 1,
                    _ => {}
                }
            }
            if d * d == n {
                match d % 4 {
                    1 => d1 -= 1,
                    3 => d3 -= 1,
                    _ => {}
                }
            }
        }
        d += 1;
    }
    4 * (d1 - d3) as usize
}

fn circle_counts(p: &ParamGrid, tol: f64) -> Result<Finding> {
    let n_max = p.radius;
    let centers = [[0i64, 0], [3, -2], [-1, 5]];
    let integer: usize = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            centers
                .iter()
                .map(|&c| {
                    let pts = CircleSpec::centered(c, n).map(|s| circle_lattice_points(&s, 0.0));
                    usize::from(pts.map(|v| v.len() != r2(n)).unwrap_or(true))
                })
                .sum::<usize>()
        })
        .sum();
    // Half-integer centers against a box scan.
    let q_max = 4 * n_max.min(400);
    let half: usize = (0..=q_max)
        .into_par_iter()
        .map(|q| {
            [[1i64, 0], [1, 1], [-3, 4]]
                .iter()
                .map(|&c| {
                    let r = ((q as f64).sqrt() as i64 + 2) / 2 + 2;
                    let mut want = Vec::new();
                    for x in (c[0] / 2 - r)..=(c[0] / 2 + r) {
                        for y in (c[1] / 2 - r)..=(c[1] / 2 + r) {
                            let (a, b) = (2 * x - c[0], 2 * y - c[1]);
                            if a * a + b * b == q {
                                want.push(ModeIndex::d2(x, y));
                            }
                        }
                    }
                    let got = CircleSpec::new(c, q).map(|s| circle_lattice_points(&s, 0.0));
                    usize::from(got.map(|g| g != want).unwrap_or(true))
                })
                .sum::<usize>()
        })
        .sum();
    Ok(Finding::at_most("mismatched_circles", (integer + half) as f64, tol)
        .with("integer_center_mismatches", integer as f64)
        .with("half_center_mismatches", half as f64))
}

/// Reported constant with its ladder; fails only if the last ratio exceeds `1 + tol`.
fn ladder_finding(ladder: &[i64], values: &[f64], tol: f64) -> Finding {
    let rows: Vec<Vec<f64>> = ladder
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&k, &v))| {
            let ratio = if i == 0 { f64::NAN } else { v / values[i - 1] };
            vec![k as f64, v, ratio]
        })
        .collect();
    let n = values.len();
    let last = values[n - 1] / values[n - 2];
    let ok = last <= 1.0 + tol && values[n - 1].is_finite();
    let mut f = Finding::new(
        if ok { Status::Reported } else { Status::Fail },
        format!(
            "constant {:.6} at K = {}, last ratio {last:.4} (limit {:.2})",
            values[n - 1],
            ladder[n - 1],
            1.0 + tol
        ),
    );
    f.measured.insert("constant".into(), values[n - 1]);
    f.measured.insert("last_ratio".into(), last);
    f.with_table(&["K", "value", "ratio"], rows)
}

fn elementary_ladder(p: &ParamGrid, tol: f64) -> Result<Finding> {
    let values = p
        .ladder
        .par_iter()
        .map(|&k| Ok(ElementarySums::new(k)?.sup(p.radius)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ladder_finding(&p.ladder, &values, tol))
}

fn weighted_ladder(p: &ParamGrid, tol: f64) -> Result<Finding> {
    let dim = dim_of(&p.cases[0])?;
    let beta = p.betas[0];
    let r = p.radius;
    // Representatives up to the symmetries of the box.
    let js: Vec<ModeIndex> = match dim {
        Dim::One => (0..=r).map(ModeIndex::d1).collect(),
        Dim::Two => (0..=r)
            .flat_map(|a| (0..=a).map(move |b| ModeIndex::d2(a, b)))
            .collect(),
    };
    let mut values = Vec::with_capacity(p.ladder.len());
    for &k in &p.ladder {
        let sums = WeightedSums::new(dim, k, beta)?;
        let v = js
            .par_iter()
            .map(|&j| sums.get(j))
            .collect::<Result<Vec<f64>>>()?;
        values.push(v.into_iter().fold(0.0, f64::max));
    }
    Ok(ladder_finding(&p.ladder, &values, tol))
}

fn nonlinearity_oracle(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let direct = Nonlinearity::with_faults(
            u.dim(),
            u.cutoff(),
            NonlinearityMethod::DirectEnumeration,
            faults,
        )?;
        let lift =
            Nonlinearity::with_faults(u.dim(), u.cutoff(), NonlinearityMethod::FftLift, faults)?;
        Ok(rel_l2(&direct.eval(u)?, &lift.eval(u)?))
    })?;
    Ok(Finding::at_most("max_relative_l2", worst, tol))
}

fn gauge_covariance(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let method = NonlinearityMethod::auto(u.dim(), u.cutoff());
        let nl = Nonlinearity::with_faults(u.dim(), u.cutoff(), method, faults)?;
        let (a, b, c) = (0.7, [1.3, -0.4], 0.9);
        let phase = |j: ModeIndex| Complex64::from_polar(1.0, a + j.dot(b) + c * j.norm_sq() as f64);
        let rotate = |v: &SpectralField| {
            let mut out = v.clone();
            for (m, &j) in v.modes().iter().enumerate() {
                let z = phase(j);
                out.row_mut(m).iter_mut().for_each(|x| *x *= z);
            }
            out
        };
        Ok(rel_l2(&nl.eval(&rotate(u))?, &rotate(&nl.eval(u)?)))
    })?;
    Ok(Finding::at_most("max_relative_l2", worst, tol))
}

fn h_norm(modes: &[ModeIndex], v: &[Complex64], s: f64) -> f64 {
    modes
        .iter()
        .zip(v)
        .map(|(j, z)| j.bracket_pow(2.0 * s) * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Pointwise ratio over coherent and randomly phased vectors `u_j = <j>^-2 e^{i phi_j}`.
fn nonlinear_estimate(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let dim = dim_of(&p.cases[0])?;
    let beta = p.betas[0];
    let mut values = Vec::with_capacity(p.ladder.len());
    for &k in &p.ladder {
        let method = NonlinearityMethod::auto(dim, k);
        let nl = Nonlinearity::with_faults(dim, k, method, faults)?;
        let modes = modes_in_box(dim, k);
        let ratios = (0..=p.samples)
            .into_par_iter()
            .map(|s| {
                let u: Vec<Complex64> = modes
                    .iter()
                    .enumerate()
                    .map(|(m, j)| {
                        let phase = if s == 0 {
                            0.0
                        } else {
                            let h = name_hash(&format!("{}:{s}:{m}", sample_seed(seed, 0)));
                            (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
                        };
                        Complex64::from_polar(j.bracket_pow(-2.0), phase)
                    })
                    .collect();
                let mut out = vec![Complex64::default(); u.len()];
                let mut ws = nl.workspace();
                nl.eval_point(&u, &mut out, &mut ws);
                h_norm(&modes, &out, 1.0) / (h_norm(&modes, &u, 1.0) * h_norm(&modes, &u, beta).powi(4))
            })
            .collect::<Vec<f64>>();
        values.push(ratios.into_iter().fold(0.0, f64::max));
    }
    Ok(ladder_finding(&p.ladder, &values, tol))
}

fn brackets(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults, mass: bool) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let r = bracket_residuals_with(u, faults)?;
        Ok(if mass { r.mass } else { r.momentum })
    })?;
    Ok(Finding::at_most("max_residual", worst, tol))
}

fn sextic_positivity(p: &ParamGrid, tol: f64, seed: u64) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let d = sextic_density(u)?;
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(if max > 0.0 { (-min / max).max(0.0) } else { 0.0 })
    })?;
    Ok(Finding::at_most("max_negative_fraction", worst, tol))
}

fn sextic_routes(p: &ParamGrid, tol: f64, seed: u64) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let lift = sextic_density(u)?;
        let table = ResonanceTable::build(u.dim(), u.cutoff())?;
        let direct = sextic_density_direct(u, &table)?;
        let double = sextic_density_double_index(u);
        let scale = lift.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let gap = lift
            .iter()
            .zip(&direct)
            .zip(&double)
            .map(|((a, b), c)| (a - b).abs().max((a - c).abs()))
            .fold(0.0, f64::max);
        Ok(gap / scale)
    })?;
    Ok(Finding::at_most("max_relative_gap", worst, tol))
}

fn smooth_state(p: &ParamGrid, seed: u64, nx: usize, dt: f64) -> Result<SimState> {
    let c = &p.cases[0];
    let u = sample_field(c, nx, p.half_width, seed)?;
    SimState::new(normalized(&u, NormSpec::l2(1.0), p.amplitude.max(f64::MIN_POSITIVE)), dt)
}

fn run_to(
    state: SimState,
    duration: f64,
    faults: &Faults,
    mut observe: impl FnMut(&SimState),
) -> Result<(SimState, Outcome)> {
    let dt = state.dt;
    let method = NonlinearityMethod::auto(state.field.dim(), state.field.cutoff());
    let integ = Integrator::with_faults(&state.field, dt, method, faults)?;
    let cfg = DiagnosticsConfig {
        brackets: false,
        ..DiagnosticsConfig::for_dim(state.field.dim())
    };
    let mut rec = Recorder::new(cfg, &state.field)?;
    let traj = evolve(state, &integ, &EvolveOptions::new(duration, duration), &mut rec, |s| {
        observe(s)
    })?;
    Ok((traj.final_state, traj.outcome))
}

fn completed(outcome: &Outcome) -> Result<()> {
    match outcome {
        Outcome::Completed | Outcome::Contaminated { .. } => Ok(()),
        Outcome::NonFinite(e) => Err(e.clone()),
    }
}

fn galilean_covariance(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let state = smooth_state(p, seed, p.nx[0], p.dts[0])?;
    let xi0 = 3.0 * std::f64::consts::PI / p.half_width;
    let boosted = SimState {
        field: galilean_transform(&state.field, xi0, 0.0)?,
        ..state.clone()
    };
    let (a, oa) = run_to(state, p.duration, faults, |_| {})?;
    let (b, ob) = run_to(boosted, p.duration, faults, |_| {})?;
    completed(&oa)?;
    completed(&ob)?;
    let image = galilean_transform(&a.field, xi0, a.time())?;
    Ok(Finding::at_most("relative_l2", rel_l2(&b.field, &image), tol).with("xi0", xi0))
}

fn conservation(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let state = smooth_state(p, seed, p.nx[0], p.dts[0])?;
    let quantities = |u: &SpectralField| -> Result<[f64; 4]> {
        Ok([
            mass_family(u, 1.0, [0.0; 2], 0.0),
            mass_family(u, 0.0, [1.0, 0.0], 0.0),
            mass_family(u, 0.0, [0.0; 2], 1.0),
            resonant_energy(u)?.total,
        ])
    };
    let q0 = quantities(&state.field)?;
    // M_{0,1,0} may vanish; its drift is taken relative to M_{1,0,1}.
    let scale = [q0[0].abs(), q0[0] + q0[2], q0[2].abs(), q0[3].abs()];
    let dt = state.dt;
    let cadence = (p.duration / 10.0 / dt).round().max(1.0) * dt;
    let method = NonlinearityMethod::auto(state.field.dim(), state.field.cutoff());
    let integ = Integrator::with_faults(&state.field, dt, method, faults)?;
    let cfg = DiagnosticsConfig {
        brackets: false,
        ..DiagnosticsConfig::for_dim(state.field.dim())
    };
    let mut rec = Recorder::new(cfg, &state.field)?;
    let mut drift = [0.0f64; 4];
    let mut err = None;
    let traj = evolve(
        state,
        &integ,
        &EvolveOptions::new((p.duration / dt).round() * dt, cadence),
        &mut rec,
        |s| match quantities(&s.field) {
            Ok(q) => {
                for i in 0..4 {
                    drift[i] = drift[i].max((q[i] - q0[i]).abs() / scale[i]);
                }
            }
            Err(e) => err = Some(e),
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    completed(&traj.outcome)?;
    let worst = drift.iter().cloned().fold(0.0, f64::max);
    Ok(Finding::at_most("max_relative_drift", worst, tol)
        .with("mass_100", drift[0])
        .with("mass_010", drift[1])
        .with("mass_001", drift[2])
        .with("energy", drift[3]))
}

fn strang_order(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let finals = p
        .dts
        .iter()
        .map(|&dt| {
            let state = smooth_state(p, seed, p.nx[0], dt)?;
            let (s, o) = run_to(state, p.duration, faults, |_| {})?;
            completed(&o)?;
            Ok(s.field)
        })
        .collect::<Result<Vec<_>>>()?;
    if finals.len() < 3 {
        return Err(Error::InvalidParameter(
            "field `params.dts` needs three steps for an order estimate".into(),
        ));
    }
    let errs: Vec<f64> = finals
        .windows(2)
        .map(|w| w[0].sub(&w[1]).norm(NormSpec::l2(1.0)))
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let observed = *orders.last().unwrap();
    let ok = (observed - 2.0).abs() <= tol;
    let rows = p
        .dts
        .iter()
        .zip(&errs)
        .enumerate()
        .map(|(i, (&dt, &e))| {
            vec![dt, e, if i == 0 { f64::NAN } else { orders[i - 1] }]
        })
        .collect();
    let mut f = Finding::new(
        if ok { Status::Pass } else { Status::Fail },
        format!("observed order {observed:.3} (target 2 +- {tol})"),
    );
    f.measured.insert("order".into(), observed);
    Ok(f.with_table(&["dt", "difference_to_half_step", "order"], rows))
}

fn morawetz_oracle(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let fast = morawetz_action_with(u, MorawetzWeight::Sign, faults);
        let slow = morawetz_action_direct(u, MorawetzWeight::Sign);
        let scale = morawetz_bound(u).max(f64::MIN_POSITIVE);
        Ok((fast - slow).abs() / slow.abs().max(1e-3 * scale))
    })?;
    Ok(Finding::at_most("max_relative_gap", worst, tol))
}

fn morawetz_ratio(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let m = morawetz_action_with(u, MorawetzWeight::Sign, faults);
        Ok(2.0 * m.abs() / morawetz_bound(u))
    })?;
    Ok(Finding::at_most("max_constant", worst, tol))
}

fn frequency_limit(p: &ParamGrid, tol: f64, seed: u64) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let plain = morawetz_action(u, MorawetzWeight::Sign);
        let local = frequency_localized_morawetz(u, u.grid().nyquist(), 1.0)?;
        Ok((plain - local).abs() / morawetz_bound(u))
    })?;
    Ok(Finding::at_most("max_relative_gap", worst, tol))
}

fn projection_commute(p: &ParamGrid, tol: f64, seed: u64) -> Result<Finding> {
    let worst = max_over_fields(p, seed, |u| {
        let n = u.grid().nyquist() / 4.0;
        let a = project_low(&free_evolve(u, 0.7), n)?;
        let b = free_evolve(&project_low(u, n)?, 0.7);
        Ok(rel_l2(&a, &b))
    })?;
    Ok(Finding::at_most("max_relative_l2", worst, tol))
}

fn scattering(p: &ParamGrid, tol: f64, seed: u64, faults: &Faults, l6: bool) -> Result<Finding> {
    let c = &p.cases[0];
    let grid = Grid1D::new(p.half_width, p.nx[0])?;
    let spec = RandomFieldSpec {
        max_wavenumber: 1.0,
        center_spread: 2.0,
        ..Default::default()
    };
    let u0 = random_field(&grid, dim_of(c)?, c.cutoff, &spec, seed)?;
    let u0 = normalized(&u0, NormSpec::l2(1.0), p.amplitude);
    let dt = p.dts[0];
    let t_end = p.duration;
    let marks = [t_end / 8.0, t_end / 4.0, t_end / 2.0, t_end];
    let beta = DiagnosticsConfig::for_dim(u0.dim()).beta;
    let mut acc = L6Accumulator::new(beta);
    let mut integral = Vec::new();
    let mut snaps = Vec::new();
    let per_mark = (marks[0] / dt).round() as usize;
    if per_mark == 0 || ((per_mark as f64) * dt - marks[0]).abs() > 1e-9 * marks[0] {
        return Err(Error::InvalidParameter(
            "field `params.duration` must be a multiple of 8 steps".into(),
        ));
    }
    let split = (1..=10).rev().find(|d| per_mark.is_multiple_of(*d)).unwrap_or(1);
    let cadence = (per_mark / split) as f64 * dt;
    let method = NonlinearityMethod::auto(u0.dim(), u0.cutoff());
    let integ = Integrator::with_faults(&u0, dt, method, faults)?;
    let cfg = DiagnosticsConfig {
        brackets: false,
        beta,
    };
    let mut rec = Recorder::new(cfg, &u0)?;
    let traj = evolve(
        SimState::new(u0.clone(), dt)?,
        &integ,
        &EvolveOptions::new(t_end, cadence),
        &mut rec,
        |s| {
            let t = s.time();
            acc.push(t, &s.field);
            integral.push((t, acc.value().powi(6)));
            if marks.iter().any(|m| (m - t).abs() < 0.5 * dt) {
                snaps.push((t, s.field.clone()));
            }
        },
    )?;
    completed(&traj.outcome)?;
    if l6 {
        let total = integral.last().map(|x| x.1).unwrap_or(0.0);
        let at = integral
            .iter()
            .rev()
            .find(|(t, _)| *t <= 0.75 * t_end + 0.5 * dt)
            .map(|x| x.1)
            .unwrap_or(0.0);
        let share = if total > 0.0 { (total - at) / total } else { 0.0 };
        return Ok(Finding::at_most("last_quarter_share", share, tol)
            .with("l6_value", acc.value())
            .with("outer_mass_fraction", traj.final_state.field.outer_mass_fraction()));
    }
    let defects = snaps
        .windows(2)
        .map(|w| scattering_cauchy_defect(&w[0].1, w[0].0, &w[1].1, w[1].0))
        .collect::<Result<Vec<f64>>>()?;
    let monotone = defects.windows(2).all(|d| d[1] < d[0]);
    let rows = snaps
        .windows(2)
        .zip(&defects)
        .map(|(w, &d)| vec![w[0].0, w[1].0, d])
        .collect();
    let mut f = Finding::new(
        if monotone { Status::Pass } else { Status::Fail },
        format!("defects {}", sci(&defects)),
    );
    f.measured.insert("last_defect".into(), *defects.last().unwrap());
    f.measured.insert(
        "outer_mass_fraction".into(),
        traj.final_state.field.outer_mass_fraction(),
    );
    Ok(f.with_table(&["t1", "t2", "defect"], rows))
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn approximation(p: &ParamGrid, _tol: f64) -> Result<Finding> {
    let cfg = ApproxConfig {
        lambdas: p.ladder.iter().map(|&l| l as f64).collect(),
        half_width: p.half_width,
        nx: p.nx[0],
        cutoff: p.cases[0].cutoff,
        dt_profile: p.dts[0],
        window: p.duration,
        ..Default::default()
    };
    let target = ModeIndex::d1(0);
    let phi = move |j: ModeIndex, x: f64| {
        if j == target {
            Complex64::new((-x * x / 2.0).exp(), 0.0)
        } else {
            Complex64::default()
        }
    };
    let report = approximation_experiment(&phi, &cfg)?;
    let errs: Vec<f64> = report.rows.iter().map(|r| r.sup_error).collect();
    let monotone = errs.windows(2).all(|e| e[1] < e[0]);
    let rows = report
        .rows
        .iter()
        .map(|r| vec![r.lambda, r.sup_error, r.initial_error])
        .collect();
    let mut f = Finding::new(
        if monotone { Status::Pass } else { Status::Fail },
        format!("sup errors {}", sci(&errs)),
    );
    f.measured.insert("last_error".into(), *errs.last().unwrap());
    Ok(f.with_table(&["lambda", "sup_error", "initial_error"], rows))
}

fn cylinder_sample(nx: usize, half_width: f64, seed: u64) -> Result<CylinderField> {
    let grid = Grid1D::new(half_width, nx)?;
    let u = random_field(&grid, Dim::One, 2, &test_spec(half_width), seed)?;
    CylinderField::from_modes(&u, 16)
}

fn virial_oracle(p: &ParamGrid, tol: f64, seed: u64) -> Result<Finding> {
    let gaps = (0..p.samples)
        .into_par_iter()
        .map(|s| {
            let u = cylinder_sample(p.nx[0], p.half_width, sample_seed(seed, s))?;
            let fast = bilinear_virial(&u);
            let slow = bilinear_virial_direct(&u);
            Ok((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Finding::at_most("max_relative_gap", gaps.into_iter().fold(0.0, f64::max), tol))
}

fn virial_derivative(p: &ParamGrid, tol: f64) -> Result<Finding> {
    let grid = Grid1D::new(p.half_width, p.nx[0])?;
    let u = CylinderField::from_fn(&grid, 16, |x, y| {
        let envelope = (-(x - 1.0).powi(2) / 2.0).exp() + 0.6 * (-(x + 2.0).powi(2)).exp();
        Complex64::from_polar(0.6 * envelope, 0.8 * x) * (1.0 + 0.4 * Complex64::from_polar(1.0, y))
    })?;
    let dt = p.dts[0];
    let integ = CylinderIntegrator::new(&u, dt)?;
    let cadence = ((p.duration / 50.0) / dt).round().max(1.0) * dt;
    let (records, _, outcome) = integ.evolve(&u, p.duration, cadence, |_, _| {})?;
    completed(&outcome)?;
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let i: Vec<f64> = records.iter().map(|r| r.virial).collect();
    let di = finite_difference(&t, &i);
    let worst = records
        .iter()
        .zip(&di)
        .map(|(r, d)| d.abs() / (r.l2_norm.powi(3) * r.dx_norm))
        .fold(0.0, f64::max);
    Ok(Finding::at_most("max_constant", worst, tol).with("records", records.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisor_formula() {
        let direct = |n: i64| {
            let r = (n as f64).sqrt() as i64 + 1;
            let mut c = 0;
            for a in -r..=r {
                for b in -r..=r {
                    if a * a + b * b == n {
                        c += 1;
                    }
                }
            }
            c
        };
        for n in 0..200 {
            assert_eq!(r2(n), direct(n), "{n}");
        }
    }

    #[test]
    fn catalogue_shape() {
        for level in [SuiteLevel::Fast, SuiteLevel::Default, SuiteLevel::Full] {
            let s = suite(level);
            assert!(s.len() >= 12);
            let mut names: Vec<&str> = s.iter().map(|c| c.name.as_str()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), s.len());
            for c in &s {
                c.validate().unwrap();
            }
        }
        let fast: Vec<String> = suite(SuiteLevel::Fast).into_iter().map(|c| c.name).collect();
        let full: Vec<String> = suite(SuiteLevel::Full).into_iter().map(|c| c.name).collect();
        assert_eq!(fast, full);
        let covered: std::collections::BTreeSet<Procedure> =
            builtin_suite().iter().map(|c| c.procedure).collect();
        assert_eq!(covered.len(), Procedure::ALL.len());
    }

    #[test]
    fn empty_suite_passes() {
        let r = run_suite(&[], 1).unwrap();
        assert!(r.reports.is_empty() && r.passed());
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut s = builtin_suite();
        s[5].params.nx.clear();
        let e = run_suite(&s, 1).unwrap_err().to_string();
        assert!(e.contains("params.nx") && e.contains("nonlinearity_oracle"), "{e}");
        let mut s = builtin_suite();
        s[0].tolerance = 0.0;
        assert!(run_suite(&s[..1], 1).unwrap_err().to_string().contains("tolerance"));
        let mut s = builtin_suite();
        s[2].kind = CheckKind::Identity;
        assert!(run_suite(&s[2..3], 1).unwrap_err().to_string().contains("`kind`"));
    }

    #[test]
    fn ladder_status() {
        let ok = ladder_finding(&[1, 2, 4], &[1.0, 1.5, 1.6], 0.25);
        assert_eq!(ok.status, Status::Reported);
        let bad = ladder_finding(&[1, 2, 4], &[1.0, 1.5, 2.0], 0.25);
        assert_eq!(bad.status, Status::Fail);
    }
}

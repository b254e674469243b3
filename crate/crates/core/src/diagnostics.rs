//! Functionals monitored along trajectories and their serialization.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `t`, `step` | time and step count |
//! | `mass_100`, `mass_010`, `mass_001` | `M_{1,0,0}`, `M_{0,e1,0}`, `M_{0,0,1}` |
//! | `energy_kinetic`, `energy_sextic`, `energy_total` | energy parts |
//! | `norm_h0`, `norm_hbeta`, `norm_h1` | `L^2_x h^s` for `s = 0, beta, 1` |
//! | `l6_hbeta`, `l6_h1` | running `L^6_{t,x} h^s` |
//! | `morawetz`, `morawetz_bound` | sign-kernel action and `2 ||u||^3 ||d_x u||` |
//! | `virial` | bilinear virial (cylinder runs; empty otherwise) |
//! | `mass_residual`, `momentum_residual` | bracket identity residuals |
//! | `cauchy_defect` | defect against the previous record (empty on the first) |
//! | `contamination` | mass fraction outside `|x| <= L/2` |

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{free_evolve, CylinderField, SimState};
use crate::error::{invalid, Result};
use crate::faults::Faults;
use crate::grid::{project_low, Grid1D, NormSpec, SpectralField};
use crate::nonlinearity::{
    bracket_residuals_using, mass_family, resonant_energy, Nonlinearity, NonlinearityMethod,
    MOMENTUM_BRACKET_FACTOR,
};
use crate::numerics::pairwise_sum;
use crate::resonance::beta_range;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: i64,
    pub mass_100: f64,
    pub mass_010: f64,
    pub mass_001: f64,
    pub energy_kinetic: f64,
    pub energy_sextic: f64,
    pub energy_total: f64,
    pub norm_h0: f64,
    pub norm_hbeta: f64,
    pub norm_h1: f64,
    pub l6_hbeta: f64,
    pub l6_h1: f64,
    pub morawetz: f64,
    pub morawetz_bound: f64,
    pub virial: Option<f64>,
    pub mass_residual: f64,
    pub momentum_residual: f64,
    pub cauchy_defect: Option<f64>,
    pub contamination: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 20] = [
        "t",
        "step",
        "mass_100",
        "mass_010",
        "mass_001",
        "energy_kinetic",
        "energy_sextic",
        "energy_total",
        "norm_h0",
        "norm_hbeta",
        "norm_h1",
        "l6_hbeta",
        "l6_h1",
        "morawetz",
        "morawetz_bound",
        "virial",
        "mass_residual",
        "momentum_residual",
        "cauchy_defect",
        "contamination",
    ];

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        let mut s = String::new();
        write!(s, "{},{}", csv_float(self.t), self.step).unwrap();
        for v in [
            self.mass_100,
            self.mass_010,
            self.mass_001,
            self.energy_kinetic,
            self.energy_sextic,
            self.energy_total,
            self.norm_h0,
            self.norm_hbeta,
            self.norm_h1,
            self.l6_hbeta,
            self.l6_h1,
            self.morawetz,
            self.morawetz_bound,
        ] {
            write!(s, ",{}", csv_float(v)).unwrap();
        }
        write!(
            s,
            ",{},{},{},{},{}",
            opt(self.virial),
            csv_float(self.mass_residual),
            csv_float(self.momentum_residual),
            opt(self.cauchy_defect),
            csv_float(self.contamination)
        )
        .unwrap();
        s
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.mass_100,
            self.mass_010,
            self.mass_001,
            self.energy_total,
            self.norm_h1,
            self.l6_h1,
            self.morawetz,
            self.mass_residual,
            self.momentum_residual,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Shortest round-trip text of `v`, in exponent form outside `[1e-4, 1e15)`.
pub fn csv_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn write_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = DiagnosticsRecord::csv_header();
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Odd kernel `a(x - y)` of the Morawetz action.
#[derive(Clone, Copy, Debug)]
pub enum MorawetzWeight {
    /// `a(r) = r / |r|`, with `a(0) = 0`.
    Sign,
    /// Any odd function; evaluated by the quadratic double loop.
    Odd(fn(f64) -> f64),
}

impl MorawetzWeight {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            MorawetzWeight::Sign => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            MorawetzWeight::Odd(f) => f(r),
        }
    }
}

/// `A(y) = sum_j |u_j(y)|^2` and `B(x) = sum_j Im(conj(u_j) d_x u_j)(x)`.
pub fn morawetz_densities(u: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let a = u.density(0.0);
    let du = u.dx();
    let mut b = vec![0.0; u.nx()];
    for m in 0..u.n_modes() {
        for ((o, v), d) in b.iter_mut().zip(u.row(m)).zip(du.row(m)) {
            *o += (v.conj() * d).im;
        }
    }
    (a, b)
}

/// `M = sum_{j, j'} int int a(x - y) |u_j(y)|^2 Im(conj(u_j') d_x u_j')(x) dx dy`.
///
/// For the sign kernel the inner integral at `x_i` is
/// `dx (2 sum_{k < i} A_k + A_i - sum_k A_k)`: cells left of `x_i` count
/// `+1`, cells right `-1`, the diagonal cell `0`.
pub fn morawetz_action(u: &SpectralField, w: MorawetzWeight) -> f64 {
    morawetz_action_with(u, w, &Faults::NONE)
}

#[doc(hidden)]
pub fn morawetz_action_with(u: &SpectralField, w: MorawetzWeight, faults: &Faults) -> f64 {
    match w {
        MorawetzWeight::Sign => {
            let (a, b) = morawetz_densities(u);
            sign_kernel_pairing(&a, &b, u.grid().dx(), faults.even_morawetz_kernel)
        }
        MorawetzWeight::Odd(_) => morawetz_action_direct(u, w),
    }
}

fn sign_kernel_pairing(a: &[f64], b: &[f64], dx: f64, even: bool) -> f64 {
    let total = pairwise_sum(a);
    let mut cum = 0.0;
    let mut terms = Vec::with_capacity(a.len());
    for (ai, bi) in a.iter().zip(b) {
        let inner = if even {
            total - ai
        } else {
            2.0 * cum + ai - total
        };
        terms.push(bi * inner);
        cum += ai;
    }
    dx * dx * pairwise_sum(&terms)
}

/// Quadratic double loop over grid pairs.
pub fn morawetz_action_direct(u: &SpectralField, w: MorawetzWeight) -> f64 {
    let (a, b) = morawetz_densities(u);
    let g = u.grid();
    let terms: Vec<f64> = (0..a.len())
        .map(|i| {
            let row: Vec<f64> = (0..a.len())
                .map(|k| w.eval(g.x(i) - g.x(k)) * a[k])
                .collect();
            b[i] * pairwise_sum(&row)
        })
        .collect();
    g.dx() * g.dx() * pairwise_sum(&terms)
}

/// Morawetz action with mass density from `P_{<= C K} u` and momentum
/// density from `P_{<= K} u`.
pub fn frequency_localized_morawetz(u: &SpectralField, k: f64, c: f64) -> Result<f64> {
    if !(k > 0.0 && c > 0.0) {
        return Err(invalid("K and C must be positive"));
    }
    let (a, _) = morawetz_densities(&project_low(u, c * k)?);
    let (_, b) = morawetz_densities(&project_low(u, k)?);
    Ok(sign_kernel_pairing(&a, &b, u.grid().dx(), false))
}

/// `2 ||u||^3_{L^2 l^2} ||d_x u||_{L^2 l^2}`.
pub fn morawetz_bound(u: &SpectralField) -> f64 {
    let n = u.norm(NormSpec::l2(0.0));
    2.0 * n.powi(3) * u.dx().norm(NormSpec::l2(0.0))
}

/// `I = int int_{x > x'} (x - x') rho(x) rho(x') dx dx'` with
/// `rho(x) = int |u(x, y)|^2 dy`, by prefix sums.
pub fn bilinear_virial(u: &CylinderField) -> f64 {
    virial_from_density(&u.x_density(), u.grid())
}

pub fn virial_from_density(rho: &[f64], grid: &Grid1D) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    let mut terms = Vec::with_capacity(rho.len());
    for (i, r) in rho.iter().enumerate() {
        let x = grid.x(i);
        terms.push(r * (x * c - s));
        c += r;
        s += x * r;
    }
    grid.dx() * grid.dx() * pairwise_sum(&terms)
}

pub fn bilinear_virial_direct(u: &CylinderField) -> f64 {
    let rho = u.x_density();
    let g = u.grid();
    let mut terms = Vec::new();
    for i in 0..rho.len() {
        for k in 0..i {
            terms.push((g.x(i) - g.x(k)) * rho[i] * rho[k]);
        }
    }
    g.dx() * g.dx() * pairwise_sum(&terms)
}

/// Centered differences of `values` sampled at `times`; one-sided at the ends.
pub fn finite_difference(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let (a, b) = if n < 2 {
                return 0.0;
            } else if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// `|| e^{-i t2 d_x^2} u(t2) - e^{-i t1 d_x^2} u(t1) ||_{L^2 h^1}`.
pub fn scattering_cauchy_defect(u1: &SpectralField, t1: f64, u2: &SpectralField, t2: f64) -> Result<f64> {
    if t2 < t1 {
        return Err(invalid("Cauchy defect needs t2 >= t1"));
    }
    if !u1.same_shape(u2) {
        return Err(invalid("Cauchy defect snapshots have different shapes"));
    }
    let a = free_evolve(u1, -t1);
    let b = free_evolve(u2, -t2);
    Ok(b.sub(&a).norm(NormSpec::l2(1.0)))
}

/// Running `( int_0^T ||u(t)||^6_{L^6_x h^s} dt )^{1/6}`, trapezoid rule.
#[derive(Clone, Debug, PartialEq)]
pub struct L6Accumulator {
    s: f64,
    last: Option<(f64, f64)>,
    integral: f64,
}

impl L6Accumulator {
    pub fn new(s: f64) -> Self {
        L6Accumulator {
            s,
            last: None,
            integral: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, u: &SpectralField) -> f64 {
        let q = u.norm(NormSpec::l6(self.s)).powi(6);
        self.push_value(t, q)
    }

    /// Add a sample `||u(t)||^6` directly.
    pub fn push_value(&mut self, t: f64, q: f64) -> f64 {
        if let Some((t0, q0)) = self.last {
            self.integral += 0.5 * (t - t0).abs() * (q + q0);
        }
        self.last = Some((t, q));
        self.value()
    }

    pub fn value(&self) -> f64 {
        self.integral.powf(1.0 / 6.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub beta: f64,
    pub brackets: bool,
}

impl DiagnosticsConfig {
    /// `beta` at the midpoint of the valid range of the dimension.
    pub fn for_dim(dim: crate::resonance::Dim) -> Self {
        let (lo, hi) = beta_range(dim);
        DiagnosticsConfig {
            beta: match dim {
                crate::resonance::Dim::One => 0.5f64,
                crate::resonance::Dim::Two => 0.9,
            }
            .clamp(lo, hi),
            brackets: true,
        }
    }
}

/// Builds records along a trajectory, carrying the running accumulations.
pub struct Recorder {
    cfg: DiagnosticsConfig,
    nl: Option<Nonlinearity>,
    l6: [L6Accumulator; 2],
    prev: Option<(f64, SpectralField)>,
}

impl Recorder {
    pub fn new(cfg: DiagnosticsConfig, template: &SpectralField) -> Result<Self> {
        let nl = if cfg.brackets {
            let method = NonlinearityMethod::auto(template.dim(), template.cutoff());
            Some(Nonlinearity::new(template.dim(), template.cutoff(), method)?)
        } else {
            None
        };
        Ok(Recorder {
            cfg,
            nl,
            l6: [L6Accumulator::new(cfg.beta), L6Accumulator::new(1.0)],
            prev: None,
        })
    }

    pub fn record(&mut self, state: &SimState) -> Result<DiagnosticsRecord> {
        let u = &state.field;
        let t = state.time();
        let energy = resonant_energy(u)?;
        let (mass_residual, momentum_residual) = match &self.nl {
            Some(nl) => {
                let r = bracket_residuals_using(u, nl, MOMENTUM_BRACKET_FACTOR)?;
                (r.mass, r.momentum)
            }
            None => (0.0, 0.0),
        };
        let pulled = free_evolve(u, -t);
        let cauchy_defect = self
            .prev
            .as_ref()
            .map(|(_, p)| pulled.sub(p).norm(NormSpec::l2(1.0)));
        self.prev = Some((t, pulled));
        Ok(DiagnosticsRecord {
            t,
            step: state.step,
            mass_100: mass_family(u, 1.0, [0.0; 2], 0.0),
            mass_010: mass_family(u, 0.0, [1.0, 0.0], 0.0),
            mass_001: mass_family(u, 0.0, [0.0; 2], 1.0),
            energy_kinetic: energy.kinetic,
            energy_sextic: energy.sextic,
            energy_total: energy.total,
            norm_h0: u.norm(NormSpec::l2(0.0)),
            norm_hbeta: u.norm(NormSpec::l2(self.cfg.beta)),
            norm_h1: u.norm(NormSpec::l2(1.0)),
            l6_hbeta: self.l6[0].push(t, u),
            l6_h1: self.l6[1].push(t, u),
            morawetz: morawetz_action(u, MorawetzWeight::Sign),
            morawetz_bound: morawetz_bound(u),
            virial: None,
            mass_residual,
            momentum_residual,
            cauchy_defect,
            contamination: u.outer_mass_fraction(),
        })
    }
}

//! Time evolution of the resonant systems and of the full quintic NLS on the
//! cylinder, plus the symmetry group acting on profiles.
//!
//! The resonant flow `i d_t u_j + d_x^2 u_j = F_j(u)` is advanced by Strang
//! splitting: an exact half step of the free flow, a classical RK4 step of
//! `d_t u = -i F(u)` independently at every grid point, and another half step.

mod approximation;
mod cylinder;
mod symmetry;

pub use approximation::{approximation_experiment, ApproxConfig, ApproxReport, ApproxRow};
pub use cylinder::{CylinderField, CylinderIntegrator, CylinderRecord};
pub use symmetry::{apply_symmetry, galilean_transform, translate, SymmetryElement};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsRecord, Recorder};
use crate::error::{invalid, Error, Result};
use crate::faults::Faults;
use crate::grid::{NormSpec, SpectralField};
use crate::nonlinearity::{transpose_to_modes, transpose_to_points, Nonlinearity, NonlinearityMethod};

/// `e^{it d_x^2}`: every x-Fourier coefficient times `e^{-i t xi^2}`.
pub fn free_evolve(u: &SpectralField, t: f64) -> SpectralField {
    if t == 0.0 {
        return u.clone();
    }
    let mut out = u.clone();
    let mult = free_multiplier(u, t);
    u.grid().apply_multiplier(out.values_mut(), &mult);
    out
}

fn free_multiplier(u: &SpectralField, t: f64) -> Vec<Complex64> {
    u.grid()
        .wavenumbers()
        .iter()
        .map(|k| Complex64::from_polar(1.0, -t * k * k))
        .collect()
}

/// A field at time `step * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub field: SpectralField,
    pub step: i64,
    pub dt: f64,
}

impl SimState {
    pub fn new(field: SpectralField, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        Ok(SimState { field, step: 0, dt })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
}

/// Prepared Strang stepper for one grid, truncation and step size.
///
/// A negative `dt` runs the scheme backwards and decrements the step count.
pub struct Integrator {
    nl: Nonlinearity,
    dt: f64,
    half_linear: Vec<Complex64>,
}

impl Integrator {
    pub fn new(template: &SpectralField, dt: f64, method: NonlinearityMethod) -> Result<Self> {
        Self::with_faults(template, dt, method, &Faults::NONE)
    }

    #[doc(hidden)]
    pub fn with_faults(
        template: &SpectralField,
        dt: f64,
        method: NonlinearityMethod,
        faults: &Faults,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(invalid("dt must be nonzero and finite"));
        }
        let nl = Nonlinearity::with_faults(template.dim(), template.cutoff(), method, faults)?;
        Ok(Integrator {
            nl,
            dt,
            half_linear: free_multiplier(template, 0.5 * dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    /// One Strang step in place; fails on non-finite output.
    pub fn step(&self, state: &mut SimState) -> Result<()> {
        if (self.dt.abs() - state.dt).abs() > 1e-12 * state.dt {
            return Err(invalid(format!(
                "integrator step {} does not match state step {}",
                self.dt, state.dt
            )));
        }
        let grid = state.field.grid().clone();
        grid.apply_multiplier(state.field.values_mut(), &self.half_linear);
        self.nonlinear_substep(&mut state.field);
        grid.apply_multiplier(state.field.values_mut(), &self.half_linear);
        state.step += self.dt.signum() as i64;
        if let Some((mode, index)) = state.field.detect_nonfinite() {
            return Err(Error::NonFinite {
                step: state.step,
                mode,
                index,
            });
        }
        Ok(())
    }

    fn nonlinear_substep(&self, field: &mut SpectralField) {
        let n = field.n_modes();
        let nx = field.nx();
        let h = self.dt;
        let mut points = transpose_to_points(field);
        let minus_i = Complex64::new(0.0, -1.0);
        points.par_chunks_mut(n).for_each_init(
            || {
                (
                    self.nl.workspace(),
                    vec![Complex64::default(); 5 * n],
                )
            },
            |(ws, buf), u| {
                let (k1, rest) = buf.split_at_mut(n);
                let (k2, rest) = rest.split_at_mut(n);
                let (k3, rest) = rest.split_at_mut(n);
                let (k4, tmp) = rest.split_at_mut(n);
                self.nl.eval_point(u, k1, ws);
                k1.iter_mut().for_each(|k| *k *= minus_i);
                for m in 0..n {
                    tmp[m] = u[m] + 0.5 * h * k1[m];
                }
                self.nl.eval_point(tmp, k2, ws);
                k2.iter_mut().for_each(|k| *k *= minus_i);
                for m in 0..n {
                    tmp[m] = u[m] + 0.5 * h * k2[m];
                }
                self.nl.eval_point(tmp, k3, ws);
                k3.iter_mut().for_each(|k| *k *= minus_i);
                for m in 0..n {
                    tmp[m] = u[m] + h * k3[m];
                }
                self.nl.eval_point(tmp, k4, ws);
                k4.iter_mut().for_each(|k| *k *= minus_i);
                for m in 0..n {
                    u[m] += h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
                }
            },
        );
        field
            .values_mut()
            .copy_from_slice(&transpose_to_modes(&points, n, nx));
    }
}

/// One Strang step of size `dt` from `s`.
pub fn strang_step(s: &SimState, dt: f64, method: NonlinearityMethod) -> Result<SimState> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(invalid("dt must be positive"));
    }
    let integ = Integrator::new(&s.field, dt, method)?;
    let mut out = s.clone();
    integ.step(&mut out)?;
    Ok(out)
}

/// Step-size hint `0.1 / ||u||_{L^inf h^1}^4`.
pub fn stable_dt_hint(u: &SpectralField) -> f64 {
    let n = u.norm(NormSpec::linf(1.0));
    if n == 0.0 {
        f64::INFINITY
    } else {
        0.1 / n.powi(4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Total time; the step count is `duration / |dt|`.
    pub duration: f64,
    /// Time between records; a multiple of `|dt|`.
    pub cadence: f64,
    pub contamination_threshold: f64,
    pub abort_on_contamination: bool,
}

impl EvolveOptions {
    pub fn new(duration: f64, cadence: f64) -> Self {
        EvolveOptions {
            duration,
            cadence,
            contamination_threshold: 1e-6,
            abort_on_contamination: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Completed,
    /// Stopped on the first non-finite value.
    NonFinite(Error),
    /// Stopped because the mass near the box edge exceeded the threshold.
    Contaminated { step: i64, fraction: f64 },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub outcome: Outcome,
    pub warnings: Vec<String>,
}

/// `x / unit` when it is an integer up to rounding.
pub(crate) fn whole_multiple(x: f64, unit: f64, what: &str) -> Result<usize> {
    let r = x / unit;
    let n = r.round();
    if !(r.is_finite() && n >= 0.0 && (r - n).abs() <= 1e-9 * n.max(1.0)) {
        return Err(invalid(format!(
            "{what} = {x} is not a whole multiple of the step {unit}"
        )));
    }
    Ok(n as usize)
}

/// Repeated Strang steps with a record every `cadence`, the final time
/// included. `observe` sees the state at every record.
///
/// Integration failures end the run with the records gathered so far and
/// the last finite state.
pub fn evolve(
    state: SimState,
    integ: &Integrator,
    opts: &EvolveOptions,
    recorder: &mut Recorder,
    mut observe: impl FnMut(&SimState),
) -> Result<Trajectory> {
    let dt = integ.dt().abs();
    let n_steps = whole_multiple(opts.duration, dt, "duration")?;
    let every = whole_multiple(opts.cadence, dt, "cadence")?;
    if every == 0 {
        return Err(invalid("cadence must be positive"));
    }
    let mut warnings = Vec::new();
    let hint = stable_dt_hint(&state.field);
    if dt > hint {
        warnings.push(format!("dt = {dt} exceeds the stability hint {hint:.3e}"));
    }
    let mut state = state;
    let mut records = vec![recorder.record(&state)?];
    observe(&state);
    let mut outcome = Outcome::Completed;
    let mut warned_contamination = false;
    for k in 1..=n_steps {
        let mut next = state.clone();
        if let Err(e) = integ.step(&mut next) {
            outcome = Outcome::NonFinite(e);
            break;
        }
        state = next;
        if k % every == 0 || k == n_steps {
            let rec = recorder.record(&state)?;
            let fraction = rec.contamination;
            records.push(rec);
            observe(&state);
            if fraction > opts.contamination_threshold {
                if !warned_contamination {
                    warnings.push(format!(
                        "mass fraction {fraction:.3e} outside |x| <= L/2 at step {}",
                        state.step
                    ));
                    warned_contamination = true;
                }
                if opts.abort_on_contamination {
                    outcome = Outcome::Contaminated {
                        step: state.step,
                        fraction,
                    };
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        records,
        final_state: state,
        outcome,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::random::{random_field, RandomFieldSpec};
    use crate::resonance::Dim;

    fn gaussian(grid: &Grid1D) -> SpectralField {
        SpectralField::from_fn(grid, Dim::One, 0, |_, x| Complex64::new((-x * x).exp(), 0.0)).unwrap()
    }

    #[test]
    fn free_gaussian_matches_closed_form() {
        // e^{-x^2} evolves to (1 + 4it)^{-1/2} exp(-x^2 / (1 + 4it)).
        let g = Grid1D::new(40.0, 1024).unwrap();
        let u = free_evolve(&gaussian(&g), 1.0);
        let w = Complex64::new(1.0, 4.0);
        for (i, v) in u.row(0).iter().enumerate() {
            let x = g.x(i);
            let exact = (-x * x / w).exp() / w.sqrt();
            assert!((v - exact).norm() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn free_flow_is_unitary_and_trivial_at_zero() {
        let g = Grid1D::new(10.0, 128).unwrap();
        let u = random_field(&g, Dim::One, 2, &RandomFieldSpec::default(), 1).unwrap();
        assert_eq!(free_evolve(&u, 0.0), u);
        for t in [-3.0, 0.1, 7.5] {
            let v = free_evolve(&u, t);
            for s in [0.0, 1.0, 2.5] {
                let (a, b) = (u.norm(NormSpec::l2(s)), v.norm(NormSpec::l2(s)));
                assert!((a - b).abs() < 1e-12 * a);
            }
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid1D::new(10.0, 64).unwrap();
        let s = SimState::new(SpectralField::zeros(&g, Dim::One, 2).unwrap(), 0.1).unwrap();
        let next = strang_step(&s, 0.1, NonlinearityMethod::DirectEnumeration).unwrap();
        assert_eq!(next.field, s.field);
        assert_eq!(next.step, 1);
        assert!(strang_step(&s, 0.0, NonlinearityMethod::DirectEnumeration).is_err());
    }

    #[test]
    fn nonlinear_substep_preserves_pointwise_mass() {
        let g = Grid1D::new(10.0, 64).unwrap();
        let u = random_field(&g, Dim::One, 2, &RandomFieldSpec::default(), 2).unwrap();
        let integ = Integrator::new(&u, 1e-3, NonlinearityMethod::DirectEnumeration).unwrap();
        let mut f = u.clone();
        integ.nonlinear_substep(&mut f);
        let (a, b) = (u.density(0.0), f.density(0.0));
        for i in 0..a.len() {
            assert!((a[i] - b[i]).abs() < 1e-12 * a[i].max(1e-300) + 1e-20);
        }
    }

    #[test]
    fn methods_give_the_same_step() {
        let g = Grid1D::new(10.0, 64).unwrap();
        let u = random_field(&g, Dim::One, 2, &RandomFieldSpec::default(), 3).unwrap();
        let s = SimState::new(u, 1e-2).unwrap();
        let a = strang_step(&s, 1e-2, NonlinearityMethod::DirectEnumeration).unwrap();
        let b = strang_step(&s, 1e-2, NonlinearityMethod::FftLift).unwrap();
        let d = a.field.sub(&b.field).norm(NormSpec::l2(0.0));
        assert!(d < 1e-13, "{d}");
    }

    #[test]
    fn whole_multiples() {
        assert_eq!(whole_multiple(1.0, 1e-3, "T").unwrap(), 1000);
        assert_eq!(whole_multiple(0.0, 1e-3, "T").unwrap(), 0);
        assert!(whole_multiple(1.0005, 1e-3, "T").is_err());
        assert!(whole_multiple(-1.0, 1e-3, "T").is_err());
    }
}

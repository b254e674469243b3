//! Large-scale profile approximation on the cylinder.
//!
//! For each `lambda` the cylinder solution `u_n` starts from
//! `lambda^{-1/2} e^{i x xi0} (e^{i t_n d_x^2} P_{<= lambda^theta} phi)((x - x_n) / lambda, y)`
//! and is compared with
//! `w_n(t) = e^{-i t xi0^2} e^{i x xi0} sum_j lambda^{-1/2} e^{-i t j^2} e^{i y j}
//!  v_j(t / lambda^2 + t_n, (x - x_n - 2 xi0 t) / lambda)`,
//! where `v` solves the resonant system from `v(t_n) = e^{i t_n d_x^2} phi`.
//!
//! The profile lives on `[-L / lambda, L / lambda)` with the cylinder's point
//! count, so `x / lambda` falls on profile grid points. The cylinder step is
//! `lambda^2` times the profile step: both runs take the same number of steps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    apply_symmetry, free_evolve, symmetry::check_boost, translate, CylinderField,
    CylinderIntegrator, Integrator, SimState, SymmetryElement,
};
use crate::diagnostics::csv_float;
use crate::error::{invalid, Result};
use crate::grid::{project_low, Grid1D, SpectralField};
use crate::nonlinearity::NonlinearityMethod;
use crate::resonance::{Dim, ModeIndex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub lambdas: Vec<f64>,
    pub theta: f64,
    pub xi0: f64,
    pub t_n: f64,
    pub x_n: f64,
    /// Cylinder half-width `L`.
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,
    /// Resonant truncation `J` of the profile.
    pub cutoff: i64,
    /// Step of the resonant run in profile time.
    pub dt_profile: f64,
    /// Window length in profile time; the cylinder runs for `window * lambda^2`.
    pub window: f64,
    /// Compare every this many steps (and at the last step).
    pub sample_every: usize,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            lambdas: vec![4.0, 8.0, 16.0],
            theta: 0.5,
            xi0: 0.0,
            t_n: 0.0,
            x_n: 0.0,
            half_width: 256.0,
            nx: 1024,
            ny: 64,
            cutoff: 1,
            dt_profile: 1e-3,
            window: 0.5,
            sample_every: 10,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(invalid("lambda list is empty"));
        }
        for &l in &self.lambdas {
            SymmetryElement::check_scale(l)?;
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid(format!("theta = {} must lie in (0, 1)", self.theta)));
        }
        if !(self.dt_profile > 0.0 && self.window >= 0.0) {
            return Err(invalid("dt_profile must be positive and window nonnegative"));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every must be positive"));
        }
        check_boost(&Grid1D::new(self.half_width, self.nx)?, self.xi0)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub lambda: f64,
    /// `sup_t ||u_n(t) - w_n(t)||_{L^2_x H^1_y} / ||u_n(0)||_{L^2_x H^1_y}`.
    pub sup_error: f64,
    /// The same ratio at `t = 0`: the projection error.
    pub initial_error: f64,
    pub steps: usize,
    pub cylinder_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub config: ApproxConfig,
    pub rows: Vec<ApproxRow>,
    /// `v` starts at profile time `t_n` from the free evolution of `phi`.
    pub t_n_surrogate: String,
}

impl ApproxReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("lambda,sup_error,initial_error,steps,cylinder_dt\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_float(r.lambda),
                csv_float(r.sup_error),
                csv_float(r.initial_error),
                r.steps,
                csv_float(r.cylinder_dt)
            ));
        }
        s
    }
}

/// Run the comparison for every `lambda`; `phi(j, X)` is the profile.
pub fn approximation_experiment(
    phi: &dyn Fn(ModeIndex, f64) -> Complex64,
    cfg: &ApproxConfig,
) -> Result<ApproxReport> {
    cfg.validate()?;
    let rows = cfg
        .lambdas
        .iter()
        .map(|&l| run_one(phi, cfg, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ApproxReport {
        config: cfg.clone(),
        rows,
        t_n_surrogate: format!("v(t_n) = e^(i t_n d_x^2) phi with t_n = {}", cfg.t_n),
    })
}

fn run_one(phi: &dyn Fn(ModeIndex, f64) -> Complex64, cfg: &ApproxConfig, lambda: f64) -> Result<ApproxRow> {
    let profile_grid = Grid1D::new(cfg.half_width / lambda, cfg.nx)?;
    let phi_field = SpectralField::from_fn(&profile_grid, Dim::One, cfg.cutoff, phi)?;

    let projected = project_low(&phi_field, lambda.powf(cfg.theta))?;
    let g = SymmetryElement {
        x0: cfg.x_n,
        xi0: cfg.xi0,
        lambda,
    };
    let u0_modes = apply_symmetry(&free_evolve(&projected, cfg.t_n), &g)?;
    let mut u = CylinderField::from_modes(&u0_modes, cfg.ny)?;

    let v0 = free_evolve(&phi_field, cfg.t_n);
    let mut v = SimState::new(v0, cfg.dt_profile)?;
    let method = NonlinearityMethod::auto(Dim::One, cfg.cutoff);
    let resonant = Integrator::new(&v.field, cfg.dt_profile, method)?;
    let dt_cyl = cfg.dt_profile * lambda * lambda;
    let cylinder = CylinderIntegrator::new(&u, dt_cyl)?;
    let steps = super::whole_multiple(cfg.window, cfg.dt_profile, "window")?;

    let reference = u.l2x_h1y_norm();
    let compare = |u: &CylinderField, v: &SimState, t: f64| -> Result<f64> {
        if reference == 0.0 {
            return Ok(0.0);
        }
        let w = assemble_w(&v.field, cfg, lambda, t, u.grid(), cfg.ny)?;
        Ok(u.sub(&w).l2x_h1y_norm() / reference)
    };
    let initial_error = compare(&u, &v, 0.0)?;
    let mut sup_error = initial_error;
    for k in 1..=steps {
        cylinder.step(&mut u, k as i64)?;
        resonant.step(&mut v)?;
        if k % cfg.sample_every == 0 || k == steps {
            sup_error = sup_error.max(compare(&u, &v, k as f64 * dt_cyl)?);
        }
    }
    Ok(ApproxRow {
        lambda,
        sup_error,
        initial_error,
        steps,
        cylinder_dt: dt_cyl,
    })
}

fn assemble_w(
    v: &SpectralField,
    cfg: &ApproxConfig,
    lambda: f64,
    t: f64,
    grid: &Grid1D,
    ny: usize,
) -> Result<CylinderField> {
    let shifted = translate(v, (cfg.x_n + 2.0 * cfg.xi0 * t) / lambda);
    let amp = lambda.powf(-0.5);
    let nx = grid.nx();
    let mut values = shifted.into_values();
    for (m, j) in v.modes().iter().enumerate() {
        let jj = j.norm_sq() as f64;
        for i in 0..nx {
            let x = grid.x(i);
            let phase = -t * cfg.xi0 * cfg.xi0 + x * cfg.xi0 - t * jj;
            values[m * nx + i] *= Complex64::from_polar(amp, phase);
        }
    }
    let modes = SpectralField::from_values(grid, v.layout().clone(), values)?;
    CylinderField::from_modes(&modes, ny)
}

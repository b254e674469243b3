use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid1D, SpectralField};

/// `g_{x0, xi0, lambda} f(x) = lambda^{-1/2} e^{i x xi0} f((x - x0) / lambda)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryElement {
    pub x0: f64,
    pub xi0: f64,
    pub lambda: f64,
}

impl SymmetryElement {
    pub const IDENTITY: SymmetryElement = SymmetryElement {
        x0: 0.0,
        xi0: 0.0,
        lambda: 1.0,
    };

    /// `lambda` must be `2^k` for an integer `k`.
    pub fn check_scale(lambda: f64) -> Result<()> {
        let k = lambda.log2();
        if !(lambda > 0.0 && lambda.is_finite() && k == k.round()) {
            return Err(invalid(format!(
                "lambda = {lambda} is not a power of two"
            )));
        }
        Ok(())
    }
}

/// `xi0` must be an integer multiple of `pi / L` on `grid`.
pub(crate) fn check_boost(grid: &Grid1D, xi0: f64) -> Result<i64> {
    let r = xi0 * grid.half_width() / std::f64::consts::PI;
    let k = r.round();
    if !(r.is_finite() && (r - k).abs() <= 1e-9 * k.abs().max(1.0)) {
        return Err(invalid(format!(
            "boost {xi0} is not a multiple of pi/L = {}",
            std::f64::consts::PI / grid.half_width()
        )));
    }
    Ok(k as i64)
}

/// `u_j(x - x0)` for every mode, by a spectral phase.
pub fn translate(u: &SpectralField, x0: f64) -> SpectralField {
    if x0 == 0.0 {
        return u.clone();
    }
    let mult: Vec<Complex64> = u
        .grid()
        .wavenumbers()
        .iter()
        .enumerate()
        .map(|(i, k)| {
            if i == u.nx() / 2 {
                Complex64::new((k * x0).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, -k * x0)
            }
        })
        .collect();
    let mut out = u.clone();
    u.grid().apply_multiplier(out.values_mut(), &mult);
    out
}

/// `g u` on the box stretched by `lambda`, sampled with the same point count.
pub fn apply_symmetry(u: &SpectralField, g: &SymmetryElement) -> Result<SpectralField> {
    SymmetryElement::check_scale(g.lambda)?;
    let grid = u.grid().rescaled(g.lambda)?;
    check_boost(&grid, g.xi0)?;
    let shifted = translate(u, g.x0 / g.lambda);
    let amp = g.lambda.powf(-0.5);
    let nx = grid.nx();
    let mut values = shifted.into_values();
    for (p, v) in values.iter_mut().enumerate() {
        let x = grid.x(p % nx);
        *v *= Complex64::from_polar(amp, x * g.xi0);
    }
    SpectralField::from_values(&grid, u.layout().clone(), values)
}

/// `e^{i x xi0 - i t xi0^2} u(x - 2 xi0 t)`, the Galilean image of a solution at time `t`.
pub fn galilean_transform(u: &SpectralField, xi0: f64, t: f64) -> Result<SpectralField> {
    check_boost(u.grid(), xi0)?;
    let mut out = translate(u, 2.0 * xi0 * t);
    let nx = u.nx();
    let grid = u.grid().clone();
    for (p, v) in out.values_mut().iter_mut().enumerate() {
        let x = grid.x(p % nx);
        *v *= Complex64::from_polar(1.0, x * xi0 - t * xi0 * xi0);
    }
    Ok(out)
}

//! Periodized spatial grid on the line, mode-indexed fields sampled on it,
//! spectral transforms, smooth frequency projectors and `L^p_x h^s` norms.
//!
//! The line is replaced by the periodic box `[-L, L)` with `Nx` points.
//! Transforms are unitary: `fft_x` of a constant `c` is `c * sqrt(Nx)` at
//! zero frequency. Quadratures are Riemann sums with pairwise reduction.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::pairwise_sum;
use crate::resonance::{mode_position, modes_in_box, Dim, ModeIndex, MAX_CUTOFF};

#[derive(Clone)]
pub struct Grid1D {
    half_width: f64,
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("half_width", &self.half_width)
            .field("nx", &self.nx)
            .finish()
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.half_width == other.half_width && self.nx == other.nx
    }
}

impl Grid1D {
    pub fn new(half_width: f64, nx: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid(format!(
                "half_width must be positive and finite, got {half_width}"
            )));
        }
        if nx < 2 || !nx.is_power_of_two() {
            return Err(invalid(format!("nx must be a power of two >= 2, got {nx}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid1D {
            half_width,
            nx,
            forward: planner.plan_fft_forward(nx),
            inverse: planner.plan_fft_inverse(nx),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumber `pi k / L` of FFT bin `i` (standard FFT ordering).
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.nx as i64;
        let k = if (i as i64) < n / 2 { i as i64 } else { i as i64 - n };
        PI * k as f64 / self.half_width
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest representable frequency `pi / dx`.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }

    /// Same grid with the box stretched by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Grid1D> {
        Grid1D::new(self.half_width * factor, self.nx)
    }

    /// Unitary forward transform of one line, in place.
    pub fn forward(&self, line: &mut [Complex64]) {
        self.forward.process(line);
        let s = 1.0 / (self.nx as f64).sqrt();
        line.iter_mut().for_each(|v| *v *= s);
    }

    pub fn inverse(&self, line: &mut [Complex64]) {
        self.inverse.process(line);
        let s = 1.0 / (self.nx as f64).sqrt();
        line.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiply every line by `multiplier[k]` in Fourier space.
    pub fn apply_multiplier(&self, lines: &mut [Complex64], multiplier: &[Complex64]) {
        let n = self.nx;
        let s = 1.0 / n as f64;
        lines.par_chunks_mut(n).for_each(|line| {
            self.forward.process(line);
            for (v, m) in line.iter_mut().zip(multiplier) {
                *v *= m * s;
            }
            self.inverse.process(line);
        });
    }

    /// Spectral derivative of every line.
    pub fn derivative(&self, lines: &[Complex64]) -> Vec<Complex64> {
        let mult: Vec<Complex64> = (0..self.nx)
            .map(|i| {
                // The Nyquist bin has no well-defined sign; drop it.
                if i == self.nx / 2 {
                    Complex64::default()
                } else {
                    Complex64::new(0.0, self.wavenumber(i))
                }
            })
            .collect();
        let mut out = lines.to_vec();
        self.apply_multiplier(&mut out, &mult);
        out
    }

    /// Riemann-sum quadrature of samples.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.dx() * pairwise_sum(samples)
    }
}

/// Modes carried by a field: every `j` with `|j|_inf <= cutoff`, lexicographic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeLayout {
    dim: Dim,
    cutoff: i64,
    modes: Vec<ModeIndex>,
}

impl ModeLayout {
    pub fn new(dim: Dim, cutoff: i64) -> Result<Self> {
        if cutoff < 0 {
            return Err(Error::NegativeCutoff(cutoff));
        }
        if cutoff > MAX_CUTOFF {
            return Err(Error::CutoffTooLarge {
                cutoff,
                max: MAX_CUTOFF,
            });
        }
        Ok(ModeLayout {
            dim,
            cutoff,
            modes: modes_in_box(dim, cutoff),
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn position(&self, j: ModeIndex) -> Option<usize> {
        mode_position(self.dim, self.cutoff, j)
    }

    /// `<j>^(2s)` for every mode.
    pub fn weights(&self, s: f64) -> Vec<f64> {
        self.modes.iter().map(|j| j.bracket_pow(2.0 * s)).collect()
    }
}

/// Physical-space samples `u_j(x_i)` for every mode, stored mode-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    layout: ModeLayout,
    grid: Grid1D,
    values: Vec<Complex64>,
}

/// Unitary x-Fourier coefficients of a [`SpectralField`], mode-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    layout: ModeLayout,
    grid: Grid1D,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid1D, dim: Dim, cutoff: i64) -> Result<Self> {
        let layout = ModeLayout::new(dim, cutoff)?;
        let values = vec![Complex64::default(); layout.len() * grid.nx()];
        Ok(SpectralField {
            layout,
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(
        grid: &Grid1D,
        dim: Dim,
        cutoff: i64,
        mut f: impl FnMut(ModeIndex, f64) -> Complex64,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, dim, cutoff)?;
        let nx = grid.nx();
        for (m, &j) in out.layout.modes.clone().iter().enumerate() {
            for i in 0..nx {
                out.values[m * nx + i] = f(j, grid.x(i));
            }
        }
        Ok(out)
    }

    pub fn from_values(grid: &Grid1D, layout: ModeLayout, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != layout.len() * grid.nx() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                layout.len() * grid.nx(),
                values.len()
            )));
        }
        Ok(SpectralField {
            layout,
            grid: grid.clone(),
            values,
        })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dim(&self) -> Dim {
        self.layout.dim
    }

    pub fn cutoff(&self) -> i64 {
        self.layout.cutoff
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.layout.modes
    }

    pub fn n_modes(&self) -> usize {
        self.layout.len()
    }

    pub fn nx(&self) -> usize {
        self.grid.nx()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        let n = self.nx();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [Complex64] {
        let n = self.nx();
        &mut self.values[m * n..(m + 1) * n]
    }

    pub fn mode(&self, j: ModeIndex) -> Option<&[Complex64]> {
        self.layout.position(j).map(|m| self.row(m))
    }

    pub fn mode_mut(&mut self, j: ModeIndex) -> Option<&mut [Complex64]> {
        self.layout.position(j).map(|m| self.row_mut(m))
    }

    /// Same layout and grid, new values.
    pub fn with_values(&self, values: Vec<Complex64>) -> SpectralField {
        assert_eq!(values.len(), self.values.len());
        SpectralField {
            layout: self.layout.clone(),
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn same_shape(&self, other: &SpectralField) -> bool {
        self.layout == other.layout && self.grid == other.grid
    }

    pub fn scaled(&self, c: Complex64) -> SpectralField {
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }

    /// `self - other`, values only.
    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        assert!(self.same_shape(other), "field shapes differ");
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn fft_x(&self) -> FourierField {
        let mut coeffs = self.values.clone();
        coeffs
            .par_chunks_mut(self.nx())
            .for_each(|line| self.grid.forward(line));
        FourierField {
            layout: self.layout.clone(),
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Spectral x-derivative of every mode.
    pub fn dx(&self) -> SpectralField {
        self.with_values(self.grid.derivative(&self.values))
    }

    /// Mode-weighted pointwise density `sum_j <j>^(2s) |u_j(x)|^2`.
    pub fn density(&self, s: f64) -> Vec<f64> {
        let w = self.layout.weights(s);
        let nx = self.nx();
        let mut rho = vec![0.0; nx];
        for (m, wm) in w.iter().enumerate() {
            for (r, v) in rho.iter_mut().zip(self.row(m)) {
                *r += wm * v.norm_sqr();
            }
        }
        rho
    }

    pub fn norm(&self, spec: NormSpec) -> f64 {
        norm(self, spec)
    }

    /// First `(mode position, x index)` holding NaN or infinity.
    pub fn detect_nonfinite(&self) -> Option<(usize, usize)> {
        detect_nonfinite(self)
    }

    /// Fraction of the `L^2` mass outside `|x| <= L/2`.
    pub fn outer_mass_fraction(&self) -> f64 {
        let rho = self.density(0.0);
        let total = pairwise_sum(&rho);
        if total == 0.0 {
            return 0.0;
        }
        let half = 0.5 * self.grid.half_width();
        let outer: Vec<f64> = rho
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.x(*i).abs() > half)
            .map(|(_, r)| *r)
            .collect();
        pairwise_sum(&outer) / total
    }
}

impl FourierField {
    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        let n = self.grid.nx();
        &self.coeffs[m * n..(m + 1) * n]
    }

    /// Multiply each coefficient by `f(xi)`.
    pub fn apply(&mut self, f: impl Fn(f64) -> Complex64 + Sync) {
        let xi = self.grid.wavenumbers();
        let mult: Vec<Complex64> = xi.iter().map(|&k| f(k)).collect();
        self.coeffs.par_chunks_mut(self.grid.nx()).for_each(|line| {
            for (v, m) in line.iter_mut().zip(&mult) {
                *v *= m;
            }
        });
    }

    pub fn ifft_x(&self) -> SpectralField {
        let mut values = self.coeffs.clone();
        values
            .par_chunks_mut(self.grid.nx())
            .for_each(|line| self.grid.inverse(line));
        SpectralField {
            layout: self.layout.clone(),
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Spatial exponent of a mixed norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    Two,
    Six,
    Infinity,
}

/// `L^p_x h^s`: spatial exponent `p` and mode regularity `s >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub exponent: Exponent,
    pub regularity: f64,
}

impl NormSpec {
    pub fn l2(s: f64) -> Self {
        NormSpec {
            exponent: Exponent::Two,
            regularity: s,
        }
    }

    pub fn l6(s: f64) -> Self {
        NormSpec {
            exponent: Exponent::Six,
            regularity: s,
        }
    }

    pub fn linf(s: f64) -> Self {
        NormSpec {
            exponent: Exponent::Infinity,
            regularity: s,
        }
    }
}

/// `( int ( sum_j <j>^(2s) |u_j(x)|^2 )^(p/2) dx )^(1/p)`.
pub fn norm(f: &SpectralField, spec: NormSpec) -> f64 {
    assert!(spec.regularity >= 0.0, "regularity must be nonnegative");
    let rho = f.density(spec.regularity);
    match spec.exponent {
        Exponent::Two => f.grid.integrate(&rho).sqrt(),
        Exponent::Six => {
            let cubes: Vec<f64> = rho.iter().map(|r| r * r * r).collect();
            f.grid.integrate(&cubes).powf(1.0 / 6.0)
        }
        Exponent::Infinity => rho.iter().cloned().fold(0.0, f64::max).sqrt(),
    }
}

/// Smooth cutoff: 1 on `|r| <= 1`, 0 on `|r| >= 2`, and on `1 < |r| < 2`
/// `g(2 - |r|) / (g(2 - |r|) + g(|r| - 1))` with `g(t) = exp(-1/t)`.
pub fn bump(r: f64) -> f64 {
    let r = r.abs();
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let a = (-1.0 / (2.0 - r)).exp();
        let b = (-1.0 / (r - 1.0)).exp();
        a / (a + b)
    }
}

/// Identifier of the [`bump`] formula, recorded in run metadata.
pub const BUMP_FORMULA_ID: &str = "smoothstep-exp(-1/t):1<=|r|<=2";

/// `P_{<= N}`: multiply every x-Fourier coefficient by `bump(xi / N)`.
pub fn project_low(f: &SpectralField, cutoff: f64) -> Result<SpectralField> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(invalid(format!(
            "projection cutoff must be positive, got {cutoff}"
        )));
    }
    let mut spec = f.fft_x();
    spec.apply(|xi| Complex64::new(bump(xi / cutoff), 0.0));
    Ok(spec.ifft_x())
}

pub fn detect_nonfinite(f: &SpectralField) -> Option<(usize, usize)> {
    let nx = f.nx();
    f.values
        .iter()
        .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        .map(|p| (p / nx, p % nx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_field(grid: &Grid1D) -> SpectralField {
        SpectralField::from_fn(grid, Dim::One, 0, |_, x| Complex64::new((-x * x).exp(), 0.0))
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(1.0, 100).is_err());
        assert!(Grid1D::new(0.0, 64).is_err());
        assert!(Grid1D::new(f64::NAN, 64).is_err());
        let g = Grid1D::new(20.0, 1024).unwrap();
        assert_eq!(g.dx() * g.nx() as f64, 40.0);
        assert_eq!(g.wavenumber(1), PI / 20.0);
        assert_eq!(g.wavenumber(1023), -PI / 20.0);
        assert_eq!(g.wavenumber(512), -PI * 512.0 / 20.0);
    }

    #[test]
    fn constant_transforms_to_zero_frequency() {
        let g = Grid1D::new(3.0, 64).unwrap();
        let c = Complex64::new(0.3, -1.2);
        let f = SpectralField::from_fn(&g, Dim::One, 1, |_, _| c).unwrap();
        let s = f.fft_x();
        for m in 0..3 {
            let row = s.row(m);
            assert!((row[0] - c * 8.0).norm() < 1e-13);
            assert!(row[1..].iter().all(|v| v.norm() < 1e-13));
        }
    }

    #[test]
    fn zero_norm_and_gaussian_norm() {
        let g = Grid1D::new(20.0, 1024).unwrap();
        let z = SpectralField::zeros(&g, Dim::Two, 1).unwrap();
        assert_eq!(norm(&z, NormSpec::l2(1.0)), 0.0);
        assert_eq!(norm(&z, NormSpec::l6(0.5)), 0.0);
        let f = gaussian_field(&g);
        let expect = (PI / 2.0).powf(0.25);
        for s in [0.0, 0.5, 3.0] {
            assert!((norm(&f, NormSpec::l2(s)) - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn mode_weights_enter_norm() {
        let g = Grid1D::new(20.0, 512).unwrap();
        let f = SpectralField::from_fn(&g, Dim::One, 1, |j, x| {
            if j.0[0] >= 0 {
                Complex64::new((-x * x).exp(), 0.0)
            } else {
                Complex64::default()
            }
        })
        .unwrap();
        let single = gaussian_field(&g).norm(NormSpec::l2(0.0)).powi(2);
        let two = f.norm(NormSpec::l2(1.0)).powi(2);
        assert!((two - 3.0 * single).abs() < 1e-12);
    }

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(-1.0), 1.0);
        assert_eq!(bump(2.0), 0.0);
        assert!((bump(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = bump(1.0 + i as f64 / 100.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn projection_cases() {
        let g = Grid1D::new(10.0, 256).unwrap();
        let f = gaussian_field(&g);
        assert!(project_low(&f, 0.0).is_err());
        assert!(project_low(&f, -1.0).is_err());
        let id = project_low(&f, 2.0 * g.nyquist()).unwrap();
        assert!(f.sub(&id).norm(NormSpec::l2(0.0)) < 1e-14);

        let k0 = 40;
        let xi0 = PI * k0 as f64 / g.half_width();
        let wave =
            SpectralField::from_fn(&g, Dim::One, 0, |_, x| Complex64::from_polar(1.0, xi0 * x))
                .unwrap();
        let p = project_low(&wave, xi0 / 4.0).unwrap();
        assert!(p.norm(NormSpec::l2(0.0)) < 1e-12);

        let half = project_low(&f, 0.5).unwrap();
        let both = project_low(&half, 1.0).unwrap();
        assert!(both.sub(&half).norm(NormSpec::l2(0.0)) < 1e-14);
    }

    #[test]
    fn nonfinite_detection() {
        let g = Grid1D::new(1.0, 16).unwrap();
        let mut f = SpectralField::zeros(&g, Dim::One, 1).unwrap();
        assert_eq!(f.detect_nonfinite(), None);
        f.row_mut(1)[7] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(f.detect_nonfinite(), Some((1, 7)));
        f.row_mut(0)[3] = Complex64::new(0.0, f64::INFINITY);
        assert_eq!(f.detect_nonfinite(), Some((0, 3)));
    }
}

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{whole_multiple, Outcome};
use crate::diagnostics::bilinear_virial;
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid1D, SpectralField};
use crate::nonlinearity::EnergyParts;
use crate::numerics::{fft_axis, pairwise_sum};
use crate::resonance::{Dim, ModeIndex};

/// Samples of `u(x, y)` on `[-L, L) x [0, 2 pi)`, stored `values[iy * nx + ix]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderField {
    grid: Grid1D,
    ny: usize,
    values: Vec<Complex64>,
}

struct Plans {
    x: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
    y: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
}

impl Plans {
    fn new(nx: usize, ny: usize) -> Self {
        let mut p = FftPlanner::new();
        Plans {
            x: (p.plan_fft_forward(nx), p.plan_fft_inverse(nx)),
            y: (p.plan_fft_forward(ny), p.plan_fft_inverse(ny)),
        }
    }

    /// Unnormalized 2D transform.
    fn transform(&self, buf: &mut [Complex64], shape: [usize; 2], forward: bool) {
        let (fx, fy) = if forward {
            (&self.x.0, &self.y.0)
        } else {
            (&self.x.1, &self.y.1)
        };
        let (mut line, mut scratch) = (Vec::new(), Vec::new());
        fft_axis(buf, &shape, 1, fx.as_ref(), &mut line, &mut scratch);
        fft_axis(buf, &shape, 0, fy.as_ref(), &mut line, &mut scratch);
    }
}

fn y_wavenumber(iy: usize, ny: usize) -> f64 {
    if iy < ny / 2 {
        iy as f64
    } else {
        iy as f64 - ny as f64
    }
}

impl CylinderField {
    pub fn zeros(grid: &Grid1D, ny: usize) -> Result<Self> {
        if ny < 2 || !ny.is_power_of_two() {
            return Err(invalid(format!("ny must be a power of two >= 2, got {ny}")));
        }
        Ok(CylinderField {
            grid: grid.clone(),
            ny,
            values: vec![Complex64::default(); grid.nx() * ny],
        })
    }

    pub fn from_fn(grid: &Grid1D, ny: usize, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let mut out = Self::zeros(grid, ny)?;
        let nx = grid.nx();
        for iy in 0..ny {
            let y = 2.0 * PI * iy as f64 / ny as f64;
            for ix in 0..nx {
                out.values[iy * nx + ix] = f(grid.x(ix), y);
            }
        }
        Ok(out)
    }

    /// `u(x, y) = sum_j u_j(x) e^{i j y}` from a dim-1 mode field.
    pub fn from_modes(u: &SpectralField, ny: usize) -> Result<Self> {
        if u.dim() != Dim::One {
            return Err(Error::DimMismatch {
                expected: 1,
                found: u.dim().rank(),
            });
        }
        if 2 * u.cutoff() + 1 >= ny as i64 {
            return Err(invalid(format!(
                "ny = {ny} cannot carry modes up to {}",
                u.cutoff()
            )));
        }
        let mut out = Self::zeros(u.grid(), ny)?;
        let nx = u.nx();
        for iy in 0..ny {
            let y = 2.0 * PI * iy as f64 / ny as f64;
            for (m, j) in u.modes().iter().enumerate() {
                let ph = Complex64::from_polar(1.0, j.0[0] as f64 * y);
                for (o, v) in out.values[iy * nx..(iy + 1) * nx].iter_mut().zip(u.row(m)) {
                    *o += v * ph;
                }
            }
        }
        Ok(out)
    }

    /// `u_j(x) = (2 pi)^{-1} int u(x, y) e^{-i j y} dy` for `|j| <= cutoff < ny / 2`.
    pub fn to_modes(&self, cutoff: i64) -> Result<SpectralField> {
        if cutoff < 0 || 2 * cutoff >= self.ny as i64 {
            return Err(invalid(format!(
                "mode cutoff {cutoff} not representable with ny = {}",
                self.ny
            )));
        }
        let nx = self.grid.nx();
        let mut out = SpectralField::zeros(&self.grid, Dim::One, cutoff)?;
        let inv = 1.0 / self.ny as f64;
        for j in -cutoff..=cutoff {
            let row = out.mode_mut(ModeIndex::d1(j)).expect("mode in range");
            for iy in 0..self.ny {
                let y = 2.0 * PI * iy as f64 / self.ny as f64;
                let ph = Complex64::from_polar(inv, -(j as f64) * y);
                for (o, v) in row.iter_mut().zip(&self.values[iy * nx..(iy + 1) * nx]) {
                    *o += v * ph;
                }
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn nx(&self) -> usize {
        self.grid.nx()
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dy(&self) -> f64 {
        2.0 * PI / self.ny as f64
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn sub(&self, other: &CylinderField) -> CylinderField {
        assert!(self.grid == other.grid && self.ny == other.ny, "cylinder shapes differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        CylinderField {
            grid: self.grid.clone(),
            ny: self.ny,
            values,
        }
    }

    fn cell(&self) -> f64 {
        self.grid.dx() * self.dy()
    }

    fn integrate(&self, v: &[f64]) -> f64 {
        self.cell() * pairwise_sum(v)
    }

    /// Apply `mult(ix, iy)` to the 2D Fourier coefficients.
    fn spectral(&self, mult: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
        let (nx, ny) = (self.nx(), self.ny);
        let plans = Plans::new(nx, ny);
        let mut buf = self.values.clone();
        plans.transform(&mut buf, [ny, nx], true);
        let s = 1.0 / (nx * ny) as f64;
        for iy in 0..ny {
            for ix in 0..nx {
                buf[iy * nx + ix] *= mult(ix, iy) * s;
            }
        }
        plans.transform(&mut buf, [ny, nx], false);
        buf
    }

    pub fn dx_field(&self) -> Vec<Complex64> {
        let nx = self.nx();
        self.spectral(|ix, _| {
            if ix == nx / 2 {
                Complex64::default()
            } else {
                Complex64::new(0.0, self.grid.wavenumber(ix))
            }
        })
    }

    pub fn dy_field(&self) -> Vec<Complex64> {
        let ny = self.ny;
        self.spectral(|_, iy| {
            if iy == ny / 2 {
                Complex64::default()
            } else {
                Complex64::new(0.0, y_wavenumber(iy, ny))
            }
        })
    }

    /// `int int |u|^2 dx dy`.
    pub fn mass(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        self.integrate(&v)
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass().sqrt()
    }

    /// `|| d_x u ||_{L^2}`.
    pub fn dx_norm(&self) -> f64 {
        let v: Vec<f64> = self.dx_field().iter().map(|z| z.norm_sqr()).collect();
        self.integrate(&v).sqrt()
    }

    /// `( int int |u|^2 + |d_y u|^2 )^{1/2}`.
    pub fn l2x_h1y_norm(&self) -> f64 {
        let dy = self.dy_field();
        let v: Vec<f64> = self
            .values
            .iter()
            .zip(&dy)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        self.integrate(&v).sqrt()
    }

    /// `int int Im(conj(u) d_x u)`.
    pub fn momentum(&self) -> f64 {
        let d = self.dx_field();
        let v: Vec<f64> = self.values.iter().zip(&d).map(|(a, b)| (a.conj() * b).im).collect();
        self.integrate(&v)
    }

    /// `1/2 int |grad u|^2 + 1/6 int |u|^6`.
    pub fn energy(&self) -> EnergyParts {
        let (dx, dy) = (self.dx_field(), self.dy_field());
        let grad: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        let six: Vec<f64> = self.values.iter().map(|z| z.norm_sqr().powi(3)).collect();
        let kinetic = 0.5 * self.integrate(&grad);
        let sextic = self.integrate(&six) / 6.0;
        EnergyParts {
            kinetic,
            sextic,
            total: kinetic + sextic,
        }
    }

    /// `rho(x) = int |u(x, y)|^2 dy`.
    pub fn x_density(&self) -> Vec<f64> {
        let nx = self.nx();
        let mut rho = vec![0.0; nx];
        for iy in 0..self.ny {
            for (r, v) in rho.iter_mut().zip(&self.values[iy * nx..(iy + 1) * nx]) {
                *r += v.norm_sqr() * self.dy();
            }
        }
        rho
    }

    pub fn detect_nonfinite(&self) -> Option<usize> {
        self.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderRecord {
    pub t: f64,
    pub step: i64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: EnergyParts,
    pub virial: f64,
    pub l2_norm: f64,
    pub dx_norm: f64,
}

impl CylinderRecord {
    pub fn of(u: &CylinderField, step: i64, t: f64) -> Self {
        CylinderRecord {
            t,
            step,
            mass: u.mass(),
            momentum: u.momentum(),
            energy: u.energy(),
            virial: bilinear_virial(u),
            l2_norm: u.l2_norm(),
            dx_norm: u.dx_norm(),
        }
    }
}

/// Strang splitting for `i d_t u + Laplacian u = |u|^4 u` with exact substeps.
pub struct CylinderIntegrator {
    dt: f64,
    nx: usize,
    ny: usize,
    half: Vec<Complex64>,
    plans: Plans,
}

impl CylinderIntegrator {
    pub fn new(template: &CylinderField, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(invalid("dt must be nonzero and finite"));
        }
        let (nx, ny) = (template.nx(), template.ny());
        let s = 1.0 / (nx * ny) as f64;
        let mut half = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let ky = y_wavenumber(iy, ny);
            for ix in 0..nx {
                let kx = template.grid.wavenumber(ix);
                half.push(Complex64::from_polar(s, -0.5 * dt * (kx * kx + ky * ky)));
            }
        }
        Ok(CylinderIntegrator {
            dt,
            nx,
            ny,
            half,
            plans: Plans::new(nx, ny),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn linear_half(&self, values: &mut [Complex64]) {
        let shape = [self.ny, self.nx];
        self.plans.transform(values, shape, true);
        for (v, m) in values.iter_mut().zip(&self.half) {
            *v *= m;
        }
        self.plans.transform(values, shape, false);
    }

    /// One step; `step` labels a non-finite failure.
    pub fn step(&self, u: &mut CylinderField, step: i64) -> Result<()> {
        self.linear_half(&mut u.values);
        for v in u.values.iter_mut() {
            let r = v.norm_sqr();
            *v *= Complex64::from_polar(1.0, -self.dt * r * r);
        }
        self.linear_half(&mut u.values);
        if let Some(p) = u.detect_nonfinite() {
            return Err(Error::NonFinite {
                step,
                mode: p / self.nx,
                index: p % self.nx,
            });
        }
        Ok(())
    }

    /// Evolve over `duration` recording every `cadence`; `observe` sees
    /// `(step, field)` at every record.
    pub fn evolve(
        &self,
        u: &CylinderField,
        duration: f64,
        cadence: f64,
        mut observe: impl FnMut(i64, &CylinderField),
    ) -> Result<(Vec<CylinderRecord>, CylinderField, Outcome)> {
        let dt = self.dt.abs();
        let n = whole_multiple(duration, dt, "duration")?;
        let every = whole_multiple(cadence, dt, "cadence")?.max(1);
        let mut cur = u.clone();
        let mut records = vec![CylinderRecord::of(&cur, 0, 0.0)];
        observe(0, &cur);
        for k in 1..=n {
            let mut next = cur.clone();
            if let Err(e) = self.step(&mut next, k as i64) {
                return Ok((records, cur, Outcome::NonFinite(e)));
            }
            cur = next;
            if k % every == 0 || k == n {
                records.push(CylinderRecord::of(&cur, k as i64, k as f64 * self.dt));
                observe(k as i64, &cur);
            }
        }
        Ok((records, cur, Outcome::Completed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(grid: &Grid1D, ny: usize) -> CylinderField {
        CylinderField::from_fn(grid, ny, |x, y| {
            Complex64::new(0.4 * (-x * x).exp(), 0.0) * (1.0 + 0.3 * Complex64::from_polar(1.0, y))
        })
        .unwrap()
    }

    #[test]
    fn zero_is_fixed() {
        let g = Grid1D::new(8.0, 64).unwrap();
        let mut u = CylinderField::zeros(&g, 8).unwrap();
        let integ = CylinderIntegrator::new(&u, 0.1).unwrap();
        integ.step(&mut u, 1).unwrap();
        assert!(u.values().iter().all(|v| v.norm() == 0.0));
        assert!(CylinderField::zeros(&g, 6).is_err());
    }

    #[test]
    fn mode_round_trip() {
        let g = Grid1D::new(8.0, 64).unwrap();
        let u = bump(&g, 16);
        let modes = u.to_modes(7).unwrap();
        let back = CylinderField::from_modes(&modes, 16).unwrap();
        let err = back.sub(&u).l2_norm();
        assert!(err < 1e-13, "{err}");
        assert!((modes.norm(crate::grid::NormSpec::l2(0.0)).powi(2) * 2.0 * PI - u.mass()).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mass_and_energy() {
        let g = Grid1D::new(20.0, 512).unwrap();
        let u = CylinderField::from_fn(&g, 8, |x, _| Complex64::new((-x * x).exp(), 0.0)).unwrap();
        let tau = 2.0 * PI;
        assert!((u.mass() - tau * (PI / 2.0).sqrt()).abs() < 1e-10);
        let e = u.energy();
        assert!((e.kinetic - tau * 0.5 * (PI / 2.0).sqrt()).abs() < 1e-10);
        assert!((e.sextic - tau * (PI / 6.0).sqrt() / 6.0).abs() < 1e-10);
    }

    #[test]
    fn conserved_quantities_hold_over_short_run() {
        let g = Grid1D::new(10.0, 128).unwrap();
        let u = bump(&g, 16);
        let integ = CylinderIntegrator::new(&u, 1e-3).unwrap();
        let (rec, _, outcome) = integ.evolve(&u, 0.2, 0.1, |_, _| {}).unwrap();
        assert_eq!(outcome, Outcome::Completed);
        let (m0, e0) = (rec[0].mass, rec[0].energy.total);
        for r in &rec {
            assert!((r.mass - m0).abs() < 1e-12 * m0);
            assert!((r.energy.total - e0).abs() < 1e-6 * e0);
        }
    }
}

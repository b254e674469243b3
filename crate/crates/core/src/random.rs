//! Seeded random fields.
//!
//! Mode `j` carries `amplitude <j>^-2 g_j exp(-(x - c_j)^2 / (2 w^2)) e^{i k_j x}`
//! with `g_j` standard complex Gaussian, `c_j` uniform in
//! `[-center_spread, center_spread]` and `k_j` uniform in
//! `[-max_wavenumber, max_wavenumber]`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid1D, NormSpec, SpectralField};
use crate::resonance::Dim;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    pub amplitude: f64,
    pub width: f64,
    pub center_spread: f64,
    pub max_wavenumber: f64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        RandomFieldSpec {
            amplitude: 1.0,
            width: 1.0,
            center_spread: 1.0,
            max_wavenumber: 1.0,
        }
    }
}

pub fn random_field(
    grid: &Grid1D,
    dim: Dim,
    cutoff: i64,
    spec: &RandomFieldSpec,
    seed: u64,
) -> Result<SpectralField> {
    if !(spec.width > 0.0 && spec.amplitude.is_finite()) {
        return Err(invalid("random field needs positive width and finite amplitude"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(grid, dim, cutoff)?;
    let modes = u.modes().to_vec();
    for (m, j) in modes.into_iter().enumerate() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let g = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        let c = spec.center_spread * rng.random_range(-1.0..=1.0);
        let k = spec.max_wavenumber * rng.random_range(-1.0..=1.0);
        let coef = g * spec.amplitude * j.bracket_pow(-2.0);
        for (i, v) in u.row_mut(m).iter_mut().enumerate() {
            let x = grid.x(i);
            let env = (-(x - c).powi(2) / (2.0 * spec.width * spec.width)).exp();
            *v = coef * env * Complex64::from_polar(1.0, k * x);
        }
    }
    Ok(u)
}

/// `u` rescaled so that `norm(u, spec) == target`; zero fields are returned unchanged.
pub fn normalized(u: &SpectralField, spec: NormSpec, target: f64) -> SpectralField {
    let n = u.norm(spec);
    if n == 0.0 {
        return u.clone();
    }
    u.scaled(Complex64::new(target / n, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_reproducible() {
        let g = Grid1D::new(10.0, 64).unwrap();
        let s = RandomFieldSpec::default();
        let a = random_field(&g, Dim::Two, 1, &s, 4).unwrap();
        let b = random_field(&g, Dim::Two, 1, &s, 4).unwrap();
        let c = random_field(&g, Dim::Two, 1, &s, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let n = normalized(&a, NormSpec::l2(1.0), 0.05);
        assert!((n.norm(NormSpec::l2(1.0)) - 0.05).abs() < 1e-15);
    }
}

//! The resonant quintic nonlinearity
//!
//! ```text
//! F_j(u) = sum over (j1..j5) in R(j) of u_j1 conj(u_j2) u_j3 conj(u_j4) u_j5
//! ```
//!
//! evaluated pointwise in `x` by two independent routes: summation over a
//! [`ResonanceTable`], and the lift `W(y, s) = sum_j u_j e^{i(j.y + |j|^2 s)}`
//! whose `(j, |j|^2)` Fourier coefficient of `|W|^4 W` is `F_j`.
//!
//! The lift is fully zero-padded. With `M = max |j|^2` (`J^2` in dim 1,
//! `2 J^2` in dim 2) the quintic product has `y`-frequencies in `[-5J, 5J]`
//! per axis and `s`-frequencies in `[-2M, 3M]`, so `N_y >= 10J + 2` and
//! `N_s >= 5M + 2` leave every coefficient alias-free. The sextic density
//! `|W|^6` has frequencies in `[-6J, 6J]` and `[-3M, 3M]`, so its mean is
//! exact on the same grid.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::Faults;
use crate::grid::SpectralField;
use crate::numerics::{fft_axis, fft_friendly, pairwise_sum};
use crate::resonance::{mode_position, modes_in_box, Dim, ModeIndex, ResonanceTable};

/// Largest lifted buffer (points per spatial sample) the FFT route accepts.
pub const LIFT_CAPACITY: usize = 1 << 22;

/// Largest cutoff for which `auto` picks direct enumeration, per dimension.
pub const AUTO_CROSSOVER: [i64; 2] = [64, 1];

/// Factor in `sum_j {F_j, u_j}_p = -c * d/dx sum_j conj(u_j) F_j`.
pub const MOMENTUM_BRACKET_FACTOR: f64 = 2.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityMethod {
    DirectEnumeration,
    FftLift,
}

impl NonlinearityMethod {
    /// Benchmarked choice: direct enumeration up to [`AUTO_CROSSOVER`].
    pub fn auto(dim: Dim, cutoff: i64) -> Self {
        if cutoff <= AUTO_CROSSOVER[dim.rank() - 1] {
            NonlinearityMethod::DirectEnumeration
        } else {
            NonlinearityMethod::FftLift
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftSizes {
    pub dim: Dim,
    pub ny: usize,
    pub ns: usize,
}

impl LiftSizes {
    /// Alias-free sizes for `cutoff`, rounded to `2^a 3^b`.
    pub fn for_cutoff(dim: Dim, cutoff: i64) -> Result<Self> {
        let max_sq = dim.rank() as i64 * cutoff * cutoff;
        let sizes = LiftSizes {
            dim,
            ny: fft_friendly((10 * cutoff + 2) as usize),
            ns: fft_friendly((5 * max_sq + 2) as usize),
        };
        sizes.check()?;
        Ok(sizes)
    }

    fn undersized(dim: Dim, cutoff: i64) -> Self {
        let max_sq = dim.rank() as i64 * cutoff * cutoff;
        LiftSizes {
            dim,
            ny: (2 * cutoff + 1) as usize,
            ns: (max_sq + 1) as usize,
        }
    }

    pub fn total(&self) -> usize {
        self.ny.pow(self.dim.rank() as u32) * self.ns
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.ny; self.dim.rank()];
        s.push(self.ns);
        s
    }

    fn check(&self) -> Result<()> {
        let required = self.total();
        if required > LIFT_CAPACITY {
            return Err(Error::LiftCapacity {
                ny: self.ny,
                ns: self.ns,
                dim: self.dim.rank(),
                required,
                capacity: LIFT_CAPACITY,
            });
        }
        Ok(())
    }

    fn index(&self, j: ModeIndex, s: i64) -> usize {
        let ny = self.ny as i64;
        let mut idx = 0usize;
        for a in 0..self.dim.rank() {
            idx = idx * self.ny + j.0[a].rem_euclid(ny) as usize;
        }
        idx * self.ns + s.rem_euclid(self.ns as i64) as usize
    }
}

/// `W(y, s)` at one spatial point, row-major over `(y_1, [y_2,] s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedBuffer {
    sizes: LiftSizes,
    data: Vec<Complex64>,
}

impl LiftedBuffer {
    pub fn sizes(&self) -> LiftSizes {
        self.sizes
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// `W` at grid indices `y` (second entry ignored in dim 1) and `s`.
    pub fn at(&self, y: [usize; 2], s: usize) -> Complex64 {
        let mut idx = 0;
        for &ya in y.iter().take(self.sizes.dim.rank()) {
            idx = idx * self.sizes.ny + ya;
        }
        self.data[idx * self.sizes.ns + s]
    }

    /// Mean of `|W|^6` over the torus.
    pub fn sextic_mean(&self) -> f64 {
        let v: Vec<f64> = self.data.iter().map(|w| w.norm_sqr().powi(3)).collect();
        pairwise_sum(&v) / self.data.len() as f64
    }
}

/// Sample the lift of `u` at grid point `i`.
pub fn lift_at(u: &SpectralField, i: usize) -> Result<LiftedBuffer> {
    let plan = LiftPlan::new(u.dim(), u.cutoff(), false)?;
    let mut ws = plan.workspace();
    let vals: Vec<Complex64> = (0..u.n_modes()).map(|m| u.row(m)[i]).collect();
    plan.lift(&vals, &mut ws);
    Ok(LiftedBuffer {
        sizes: plan.sizes,
        data: ws.buf,
    })
}

#[derive(Clone, Debug)]
struct PrefixGroup {
    first: [u32; 3],
    suffix: std::ops::Range<u32>,
}

/// Resonant tuples grouped by `(j1, j2, j3)`; suffixes index the pair table.
#[derive(Clone, Debug)]
struct DirectPlan {
    n: usize,
    groups: Vec<Vec<PrefixGroup>>,
    suffixes: Vec<u32>,
    conjugate_fourth: bool,
}

impl DirectPlan {
    fn new(table: &ResonanceTable, cutoff: i64, faults: &Faults) -> Result<Self> {
        let dim = table.dim();
        if table.cutoff() < cutoff {
            return Err(Error::CutoffMismatch {
                table: table.cutoff(),
                field: cutoff,
            });
        }
        let modes = modes_in_box(dim, cutoff);
        let n = modes.len();
        let pos = |j: ModeIndex| mode_position(dim, cutoff, j).map(|p| p as u32);
        let mut groups = Vec::with_capacity(n);
        let mut suffixes = Vec::new();
        for &j in &modes {
            let mut list: Vec<PrefixGroup> = Vec::new();
            for t in table.tuples_for(j) {
                let idx: Option<Vec<u32>> = t.0.iter().map(|&p| pos(p)).collect();
                let Some(idx) = idx else { continue };
                let first = [idx[0], idx[1], idx[2]];
                let pair = idx[3] * n as u32 + idx[4];
                match list.last_mut() {
                    Some(g) if g.first == first => g.suffix.end += 1,
                    _ => {
                        let at = suffixes.len() as u32;
                        list.push(PrefixGroup {
                            first,
                            suffix: at..at + 1,
                        });
                    }
                }
                suffixes.push(pair);
            }
            groups.push(list);
        }
        Ok(DirectPlan {
            n,
            groups,
            suffixes,
            conjugate_fourth: !faults.drop_conjugate,
        })
    }

    fn eval(&self, u: &[Complex64], out: &mut [Complex64], pairs: &mut Vec<Complex64>) {
        let n = self.n;
        pairs.resize(n * n, Complex64::default());
        for a in 0..n {
            let ua = if self.conjugate_fourth { u[a].conj() } else { u[a] };
            for b in 0..n {
                pairs[a * n + b] = ua * u[b];
            }
        }
        for (m, list) in self.groups.iter().enumerate() {
            let mut acc = Complex64::default();
            for g in list {
                let mut inner = Complex64::default();
                for &p in &self.suffixes[g.suffix.start as usize..g.suffix.end as usize] {
                    inner += pairs[p as usize];
                }
                let [a, b, c] = g.first;
                acc += u[a as usize] * u[b as usize].conj() * u[c as usize] * inner;
            }
            out[m] = acc;
        }
    }
}

#[derive(Clone)]
struct LiftPlan {
    sizes: LiftSizes,
    shape: Vec<usize>,
    positions: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

#[derive(Clone, Debug, Default)]
struct LiftWorkspace {
    buf: Vec<Complex64>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl LiftPlan {
    fn new(dim: Dim, cutoff: i64, undersized: bool) -> Result<Self> {
        let sizes = if undersized {
            LiftSizes::undersized(dim, cutoff)
        } else {
            LiftSizes::for_cutoff(dim, cutoff)?
        };
        let shape = sizes.shape();
        let positions = modes_in_box(dim, cutoff)
            .iter()
            .map(|&j| sizes.index(j, j.norm_sq()))
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Ok(LiftPlan {
            sizes,
            shape,
            positions,
            fwd,
            inv,
        })
    }

    fn workspace(&self) -> LiftWorkspace {
        LiftWorkspace {
            buf: vec![Complex64::default(); self.sizes.total()],
            ..Default::default()
        }
    }

    fn lift(&self, u: &[Complex64], ws: &mut LiftWorkspace) {
        ws.buf.iter_mut().for_each(|v| *v = Complex64::default());
        for (&p, &v) in self.positions.iter().zip(u) {
            ws.buf[p] += v;
        }
        for (axis, fft) in self.inv.iter().enumerate() {
            fft_axis(&mut ws.buf, &self.shape, axis, fft.as_ref(), &mut ws.line, &mut ws.scratch);
        }
    }

    fn eval(&self, u: &[Complex64], out: &mut [Complex64], ws: &mut LiftWorkspace) {
        self.lift(u, ws);
        for w in ws.buf.iter_mut() {
            let r = w.norm_sqr();
            *w *= r * r;
        }
        for (axis, fft) in self.fwd.iter().enumerate() {
            fft_axis(&mut ws.buf, &self.shape, axis, fft.as_ref(), &mut ws.line, &mut ws.scratch);
        }
        let scale = 1.0 / self.sizes.total() as f64;
        for (o, &p) in out.iter_mut().zip(&self.positions) {
            *o = ws.buf[p] * scale;
        }
    }

    fn sextic(&self, u: &[Complex64], ws: &mut LiftWorkspace) -> f64 {
        self.lift(u, ws);
        let v: Vec<f64> = ws.buf.iter().map(|w| w.norm_sqr().powi(3)).collect();
        pairwise_sum(&v) / ws.buf.len() as f64
    }
}

enum Plan {
    Direct(DirectPlan),
    Lift(LiftPlan),
}

/// Per-thread scratch space for [`Nonlinearity::eval_point`].
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    pairs: Vec<Complex64>,
    lift: LiftWorkspace,
}

/// Prepared pointwise evaluator of `F` for a fixed dimension and cutoff.
pub struct Nonlinearity {
    dim: Dim,
    cutoff: i64,
    n_modes: usize,
    method: NonlinearityMethod,
    plan: Plan,
}

impl Nonlinearity {
    pub fn new(dim: Dim, cutoff: i64, method: NonlinearityMethod) -> Result<Self> {
        Self::with_faults(dim, cutoff, method, &Faults::NONE)
    }

    #[doc(hidden)]
    pub fn with_faults(
        dim: Dim,
        cutoff: i64,
        method: NonlinearityMethod,
        faults: &Faults,
    ) -> Result<Self> {
        let plan = match method {
            NonlinearityMethod::DirectEnumeration => {
                let table = ResonanceTable::build_with(dim, cutoff, faults)?;
                Plan::Direct(DirectPlan::new(&table, cutoff, faults)?)
            }
            NonlinearityMethod::FftLift => {
                Plan::Lift(LiftPlan::new(dim, cutoff, faults.undersized_lift)?)
            }
        };
        Ok(Nonlinearity {
            dim,
            cutoff,
            n_modes: modes_in_box(dim, cutoff).len(),
            method,
            plan,
        })
    }

    /// Direct evaluator over an existing table (whose cutoff may exceed `cutoff`).
    pub fn from_table(table: &ResonanceTable, cutoff: i64) -> Result<Self> {
        let plan = DirectPlan::new(table, cutoff, &Faults::NONE)?;
        Ok(Nonlinearity {
            dim: table.dim(),
            cutoff,
            n_modes: plan.n,
            method: NonlinearityMethod::DirectEnumeration,
            plan: Plan::Direct(plan),
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn method(&self) -> NonlinearityMethod {
        self.method
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn workspace(&self) -> Workspace {
        let mut ws = Workspace::default();
        if let Plan::Lift(p) = &self.plan {
            ws.lift = p.workspace();
        }
        ws
    }

    /// `F_j` for the mode values `u` at one spatial point.
    pub fn eval_point(&self, u: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        debug_assert_eq!(u.len(), self.n_modes);
        match &self.plan {
            Plan::Direct(p) => p.eval(u, out, &mut ws.pairs),
            Plan::Lift(p) => p.eval(u, out, &mut ws.lift),
        }
    }

    /// `F(u)` on every grid point, parallel over `x`.
    pub fn eval(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_field(u)?;
        let n = self.n_modes;
        let nx = u.nx();
        let mut pointwise = transpose_to_points(u);
        pointwise
            .par_chunks_mut(n)
            .for_each_init(
                || (self.workspace(), vec![Complex64::default(); n]),
                |(ws, out), chunk| {
                    self.eval_point(chunk, out, ws);
                    chunk.copy_from_slice(out);
                },
            );
        Ok(u.with_values(transpose_to_modes(&pointwise, n, nx)))
    }

    fn check_field(&self, u: &SpectralField) -> Result<()> {
        if u.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim.rank(),
                found: u.dim().rank(),
            });
        }
        if u.cutoff() != self.cutoff {
            return Err(Error::CutoffMismatch {
                table: self.cutoff,
                field: u.cutoff(),
            });
        }
        Ok(())
    }
}

pub(crate) fn transpose_to_points(u: &SpectralField) -> Vec<Complex64> {
    let (n, nx) = (u.n_modes(), u.nx());
    let mut out = vec![Complex64::default(); n * nx];
    for m in 0..n {
        for (i, v) in u.row(m).iter().enumerate() {
            out[i * n + m] = *v;
        }
    }
    out
}

pub(crate) fn transpose_to_modes(p: &[Complex64], n: usize, nx: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * nx];
    for i in 0..nx {
        for m in 0..n {
            out[m * nx + i] = p[i * n + m];
        }
    }
    out
}

/// `F(u)` by summation over `table`, tuples in canonical order.
pub fn eval_f_direct(u: &SpectralField, table: &ResonanceTable) -> Result<SpectralField> {
    if table.dim() != u.dim() {
        return Err(Error::DimMismatch {
            expected: table.dim().rank(),
            found: u.dim().rank(),
        });
    }
    Nonlinearity::from_table(table, u.cutoff())?.eval(u)
}

/// `F(u)` through the dealiased lift.
pub fn eval_f_fft(u: &SpectralField) -> Result<SpectralField> {
    Nonlinearity::new(u.dim(), u.cutoff(), NonlinearityMethod::FftLift)?.eval(u)
}

/// `D(x) = sum_j conj(u_j) F_j(u)`, as the mean of `|W|^6` over the lift.
pub fn sextic_density(u: &SpectralField) -> Result<Vec<f64>> {
    let plan = LiftPlan::new(u.dim(), u.cutoff(), false)?;
    let n = u.n_modes();
    let pointwise = transpose_to_points(u);
    Ok(pointwise
        .par_chunks(n)
        .map_init(|| plan.workspace(), |ws, vals| plan.sextic(vals, ws))
        .collect())
}

/// `Re sum_j conj(u_j) F_j` with `F` summed over `table`.
pub fn sextic_density_direct(u: &SpectralField, table: &ResonanceTable) -> Result<Vec<f64>> {
    let f = eval_f_direct(u, table)?;
    Ok(pairing(u, &f).iter().map(|z| z.re).collect())
}

/// `sum_{k, n} |G_{k,n}|^2` where `G_{k,n}` collects `u_j1 conj(u_j2) u_j3`
/// over `j1 - j2 + j3 = k` and `|j1|^2 - |j2|^2 + |j3|^2 = n`, with `n`
/// ranging over all integers.
pub fn sextic_density_double_index(u: &SpectralField) -> Vec<f64> {
    let dim = u.dim();
    let cut = u.cutoff();
    let modes = u.modes().to_vec();
    let max_sq = dim.rank() as i64 * cut * cut;
    let kw = (6 * cut + 1) as usize;
    let nw = (3 * max_sq + 1) as usize;
    let ky = if dim == Dim::Two { kw } else { 1 };
    let index = |k: ModeIndex, n: i64| {
        let a = (k.0[0] + 3 * cut) as usize;
        let b = if dim == Dim::Two { (k.0[1] + 3 * cut) as usize } else { 0 };
        ((a * ky) + b) * nw + (n + max_sq) as usize
    };
    let pointwise = transpose_to_points(u);
    let nm = modes.len();
    pointwise
        .par_chunks(nm)
        .map_init(
            || vec![Complex64::default(); kw * ky * nw],
            |g, vals| {
                g.iter_mut().for_each(|v| *v = Complex64::default());
                for (a, &p1) in modes.iter().enumerate() {
                    for (b, &p2) in modes.iter().enumerate() {
                        let ab = vals[a] * vals[b].conj();
                        for (c, &p3) in modes.iter().enumerate() {
                            let k = p1 - p2 + p3;
                            let n = p1.norm_sq() - p2.norm_sq() + p3.norm_sq();
                            g[index(k, n)] += ab * vals[c];
                        }
                    }
                }
                let sq: Vec<f64> = g.iter().map(|v| v.norm_sqr()).collect();
                pairwise_sum(&sq)
            },
        )
        .collect()
}

/// `sum_j conj(u_j) F_j` at every point.
fn pairing(u: &SpectralField, f: &SpectralField) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); u.nx()];
    for m in 0..u.n_modes() {
        for ((o, a), b) in out.iter_mut().zip(u.row(m)).zip(f.row(m)) {
            *o += a.conj() * b;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub sextic: f64,
    pub total: f64,
}

/// `sum_j int 1/2 |d_x u_j|^2 dx + int D / 6 dx`.
pub fn resonant_energy(u: &SpectralField) -> Result<EnergyParts> {
    let kinetic = kinetic_energy(u);
    let sextic = u.grid().integrate(&sextic_density(u)?) / 6.0;
    Ok(EnergyParts {
        kinetic,
        sextic,
        total: kinetic + sextic,
    })
}

/// `1/2 sum_j int |d_x u_j|^2 dx`, spectrally.
pub fn kinetic_energy(u: &SpectralField) -> f64 {
    let spec = u.fft_x();
    let xi = u.grid().wavenumbers();
    let per_mode: Vec<f64> = (0..u.n_modes())
        .map(|m| {
            let v: Vec<f64> = spec
                .row(m)
                .iter()
                .zip(&xi)
                .map(|(c, k)| k * k * c.norm_sqr())
                .collect();
            pairwise_sum(&v)
        })
        .collect();
    0.5 * u.grid().dx() * pairwise_sum(&per_mode)
}

/// `int |u_j|^2 dx` for every mode.
pub fn mode_masses(u: &SpectralField) -> Vec<f64> {
    (0..u.n_modes())
        .map(|m| {
            let v: Vec<f64> = u.row(m).iter().map(|z| z.norm_sqr()).collect();
            u.grid().integrate(&v)
        })
        .collect()
}

/// `M_{a,b,c} = sum_j (a + b.j + c |j|^2) int |u_j|^2 dx`.
pub fn mass_family(u: &SpectralField, a: f64, b: [f64; 2], c: f64) -> f64 {
    let terms: Vec<f64> = u
        .modes()
        .iter()
        .zip(mode_masses(u))
        .map(|(j, m)| (a + j.dot(b) + c * j.norm_sq() as f64) * m)
        .collect();
    pairwise_sum(&terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketResiduals {
    pub mass: f64,
    pub momentum: f64,
}

/// Residuals of the mass and momentum bracket identities.
///
/// `mass = max |sum_j Im(conj(u_j) F_j)| / max D`; `momentum` is the relative
/// `L^2` gap between `sum_j {F_j, u_j}_p` and `-(2/3) d/dx D`, with
/// `{f, g}_p = Re(f d_x conj(g) - g d_x conj(f))`. A zero field gives `(0, 0)`.
pub fn bracket_residuals(u: &SpectralField) -> Result<BracketResiduals> {
    bracket_residuals_with(u, &Faults::NONE)
}

#[doc(hidden)]
pub fn bracket_residuals_with(u: &SpectralField, faults: &Faults) -> Result<BracketResiduals> {
    let method = NonlinearityMethod::auto(u.dim(), u.cutoff());
    let nl = Nonlinearity::with_faults(u.dim(), u.cutoff(), method, faults)?;
    let factor = faults.bracket_factor.unwrap_or(MOMENTUM_BRACKET_FACTOR);
    bracket_residuals_using(u, &nl, factor)
}

/// Bracket residuals with a prepared evaluator and an explicit momentum factor.
pub fn bracket_residuals_using(
    u: &SpectralField,
    nl: &Nonlinearity,
    factor: f64,
) -> Result<BracketResiduals> {
    let f = nl.eval(u)?;
    let pair = pairing(u, &f);
    let d_max = pair.iter().map(|z| z.re).fold(0.0, f64::max);
    let im_max = pair.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mass = if d_max > 0.0 { im_max / d_max } else { 0.0 };

    let grid = u.grid();
    let du = u.dx();
    let df = f.dx();
    let nx = u.nx();
    let mut lhs = vec![0.0; nx];
    for m in 0..u.n_modes() {
        let (um, fm, dum, dfm) = (u.row(m), f.row(m), du.row(m), df.row(m));
        for i in 0..nx {
            lhs[i] += (fm[i] * dum[i].conj() - um[i] * dfm[i].conj()).re;
        }
    }
    let d: Vec<Complex64> = pair.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
    let dd = grid.derivative(&d);
    let rhs: Vec<f64> = dd.iter().map(|z| -factor * z.re).collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).collect();
    let rn: Vec<f64> = rhs.iter().map(|b| b * b).collect();
    let (num, den) = (pairwise_sum(&diff).sqrt(), pairwise_sum(&rn).sqrt());
    let momentum = if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(BracketResiduals { mass, momentum })
}

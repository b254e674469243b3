//! Integer combinatorics of the resonance sets on `Z` and `Z^2`.
//!
//! For an output mode `j`, the resonance set `R(j)` holds every 5-tuple
//! `(j1, .., j5)` with
//!
//! ```text
//!   j1 - j2 + j3 - j4 + j5 = j
//!   |j1|^2 - |j2|^2 + |j3|^2 - |j4|^2 + |j5|^2 = |j|^2
//! ```
//!
//! Fixing `j1, j2, j4` leaves `j3 + j5 = S` and `|j3|^2 + |j5|^2 = Q`, which
//! places `j3` on the circle `|2 j3 - S|^2 = 2Q - |S|^2`. On `Z` that circle
//! has at most two points, on `Z^2` its lattice points are enumerated by a
//! single scan over the first coordinate. Both enumerators are therefore one
//! power of the box size cheaper than the naive loop over four free indices.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::Faults;
use crate::numerics::pairwise_sum;

/// Largest admissible mode cutoff. Keeps every square sum well inside `i64`.
pub const MAX_CUTOFF: i64 = 1 << 20;

/// Threshold constant `c` in the dominance condition `|p5| >= c * max(|j|, |p2|, |p4|)`
/// used by [`weighted_resonant_sum`].
pub const DOMINANCE_CONSTANT: f64 = 0.5;

/// Dimension of the discrete mode lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn rank(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn from_rank(rank: usize) -> Result<Self> {
        match rank {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            other => Err(Error::DimMismatch {
                expected: 1,
                found: other,
            }),
        }
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(rank: usize) -> Result<Self> {
        Dim::from_rank(rank)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.rank()
    }
}

/// A mode `j` in `Z` or `Z^2`. One-dimensional modes keep the second
/// coordinate at zero, so the derived ordering is lexicographic in both cases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex(pub [i64; 2]);

impl ModeIndex {
    pub const ZERO: ModeIndex = ModeIndex([0, 0]);

    pub const fn d1(j: i64) -> Self {
        ModeIndex([j, 0])
    }

    pub const fn d2(a: i64, b: i64) -> Self {
        ModeIndex([a, b])
    }

    pub fn from_coords(coords: &[i64]) -> Result<Self> {
        match *coords {
            [a] => Ok(ModeIndex([a, 0])),
            [a, b] => Ok(ModeIndex([a, b])),
            _ => Err(Error::DimMismatch {
                expected: 2,
                found: coords.len(),
            }),
        }
    }

    /// `|j|^2`. Exact for every mode reachable under [`MAX_CUTOFF`].
    pub fn norm_sq(self) -> i64 {
        self.0[0] * self.0[0] + self.0[1] * self.0[1]
    }

    pub fn checked_norm_sq(self) -> Option<i64> {
        let a = self.0[0].checked_mul(self.0[0])?;
        let b = self.0[1].checked_mul(self.0[1])?;
        a.checked_add(b)
    }

    pub fn sup_norm(self) -> i64 {
        self.0[0].abs().max(self.0[1].abs())
    }

    pub fn fits(self, dim: Dim) -> bool {
        dim == Dim::Two || self.0[1] == 0
    }

    /// Japanese bracket power `<j>^s = (1 + |j|^2)^(s/2)`.
    pub fn bracket_pow(self, s: f64) -> f64 {
        (1.0 + self.norm_sq() as f64).powf(0.5 * s)
    }

    pub fn dot(self, b: [f64; 2]) -> f64 {
        self.0[0] as f64 * b[0] + self.0[1] as f64 * b[1]
    }

    pub fn display(self, dim: Dim) -> String {
        match dim {
            Dim::One => format!("{}", self.0[0]),
            Dim::Two => format!("({},{})", self.0[0], self.0[1]),
        }
    }
}

impl Add for ModeIndex {
    type Output = ModeIndex;
    fn add(self, o: ModeIndex) -> ModeIndex {
        ModeIndex([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for ModeIndex {
    type Output = ModeIndex;
    fn sub(self, o: ModeIndex) -> ModeIndex {
        ModeIndex([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl Neg for ModeIndex {
    type Output = ModeIndex;
    fn neg(self) -> ModeIndex {
        ModeIndex([-self.0[0], -self.0[1]])
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

/// `(1 + n)^(-p)` for a squared norm `n`.
#[inline]
pub(crate) fn bracket_sq_pow(norm_sq: i64, p: f64) -> f64 {
    (1.0 + norm_sq as f64).powf(-p)
}

/// A 5-tuple `(j1, .., j5)`; the output mode is `j1 - j2 + j3 - j4 + j5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResonantTuple(pub [ModeIndex; 5]);

impl ResonantTuple {
    pub fn output(&self) -> ModeIndex {
        let t = &self.0;
        t[0] - t[1] + t[2] - t[3] + t[4]
    }

    pub fn square_sum(&self) -> i64 {
        let t = &self.0;
        t[0].norm_sq() - t[1].norm_sq() + t[2].norm_sq() - t[3].norm_sq() + t[4].norm_sq()
    }

    /// Whether the tuple lies in `R(j)`.
    pub fn is_resonant_for(&self, j: ModeIndex) -> bool {
        self.output() == j && self.square_sum() == j.norm_sq()
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|m| m.sup_norm()).max().unwrap_or(0)
    }
}

/// Every mode with sup-norm at most `cutoff`, in lexicographic order.
pub fn modes_in_box(dim: Dim, cutoff: i64) -> Vec<ModeIndex> {
    let r = -cutoff..=cutoff;
    match dim {
        Dim::One => r.map(ModeIndex::d1).collect(),
        Dim::Two => r
            .clone()
            .flat_map(|a| (-cutoff..=cutoff).map(move |b| ModeIndex::d2(a, b)))
            .collect(),
    }
}

fn check_cutoff(cutoff: i64) -> Result<()> {
    if cutoff < 0 {
        return Err(Error::NegativeCutoff(cutoff));
    }
    if cutoff > MAX_CUTOFF {
        return Err(Error::CutoffTooLarge {
            cutoff,
            max: MAX_CUTOFF,
        });
    }
    Ok(())
}

fn check_mode(dim: Dim, j: ModeIndex, cutoff: i64) -> Result<()> {
    if !j.fits(dim) {
        return Err(Error::DimMismatch {
            expected: dim.rank(),
            found: 2,
        });
    }
    if j.sup_norm() > cutoff {
        return Err(Error::ModeOutOfRange { mode: j, cutoff });
    }
    Ok(())
}

/// A circle `|2p - c|^2 = q` given by its doubled center `c = 2P` and
/// quadrupled squared radius `q = 4R^2`, so half-integer centers stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleSpec {
    pub doubled_center: [i64; 2],
    pub quadrupled_radius_sq: i64,
}

impl CircleSpec {
    pub fn new(doubled_center: [i64; 2], quadrupled_radius_sq: i64) -> Result<Self> {
        if quadrupled_radius_sq < 0 {
            return Err(Error::InvalidParameter(format!(
                "quadrupled_radius_sq must be nonnegative, got {quadrupled_radius_sq}"
            )));
        }
        let limit = 4 * MAX_CUTOFF;
        if doubled_center.iter().any(|c| c.abs() > limit) || quadrupled_radius_sq > limit * limit {
            return Err(Error::Overflow("circle parameters"));
        }
        Ok(CircleSpec {
            doubled_center,
            quadrupled_radius_sq,
        })
    }

    /// Integer center `P` with radius `R`.
    pub fn centered(center: [i64; 2], radius_sq: i64) -> Result<Self> {
        Self::new([2 * center[0], 2 * center[1]], 4 * radius_sq)
    }

    /// `q` must be congruent mod 4 to the number of odd center coordinates for
    /// any lattice point to exist.
    pub fn is_parity_consistent(&self) -> bool {
        let odd = (self.doubled_center[0] & 1) + (self.doubled_center[1] & 1);
        self.quadrupled_radius_sq.rem_euclid(4) == odd
    }
}

/// Smallest integer `x` with `2x - c >= lo`.
fn ceil_half(v: i64) -> i64 {
    -((-v).div_euclid(2))
}

fn floor_half(v: i64) -> i64 {
    v.div_euclid(2)
}

/// Visit lattice points `p` with `|2p - c|^2 = q` inside the box
/// `lo <= p <= hi` (componentwise), in lexicographic order.
#[inline]
fn circle_points_in_box(
    c: [i64; 2],
    q: i64,
    lo: [i64; 2],
    hi: [i64; 2],
    mut visit: impl FnMut(ModeIndex),
) {
    if q < 0 {
        return;
    }
    let r = q.isqrt();
    let x_lo = lo[0].max(ceil_half(c[0] - r));
    let x_hi = hi[0].min(floor_half(c[0] + r));
    for x in x_lo..=x_hi {
        let big_x = 2 * x - c[0];
        let rem = q - big_x * big_x;
        if rem < 0 {
            continue;
        }
        let big_y = rem.isqrt();
        if big_y * big_y != rem || (big_y + c[1]) & 1 != 0 {
            continue;
        }
        let y_minus = (c[1] - big_y) / 2;
        if y_minus >= lo[1] && y_minus <= hi[1] {
            visit(ModeIndex([x, y_minus]));
        }
        if big_y != 0 {
            let y_plus = (c[1] + big_y) / 2;
            if y_plus >= lo[1] && y_plus <= hi[1] {
                visit(ModeIndex([x, y_plus]));
            }
        }
    }
}

/// One-dimensional analogue: integers `p` with `(2p - c)^2 = q`, `lo <= p <= hi`.
#[inline]
fn line_points_in_range(c: i64, q: i64, lo: i64, hi: i64, mut visit: impl FnMut(i64)) {
    if q < 0 {
        return;
    }
    let r = q.isqrt();
    if r * r != q || (r + c) & 1 != 0 {
        return;
    }
    let p_minus = (c - r) / 2;
    if p_minus >= lo && p_minus <= hi {
        visit(p_minus);
    }
    if r != 0 {
        let p_plus = (c + r) / 2;
        if p_plus >= lo && p_plus <= hi {
            visit(p_plus);
        }
    }
}

/// All `p in Z^2` on the circle with `|p| >= min_norm`, in lexicographic order.
pub fn circle_lattice_points(circle: &CircleSpec, min_norm: f64) -> Vec<ModeIndex> {
    let c = circle.doubled_center;
    let q = circle.quadrupled_radius_sq;
    let r = q.max(0).isqrt();
    let lo = [ceil_half(c[0] - r), ceil_half(c[1] - r)];
    let hi = [floor_half(c[0] + r), floor_half(c[1] + r)];
    let threshold = min_norm.max(0.0);
    let mut out = Vec::new();
    circle_points_in_box(c, q, lo, hi, |p| {
        if p.norm_sq() as f64 >= threshold * threshold {
            out.push(p);
        }
    });
    out
}

/// Stream every tuple with all entries in the sup-norm box of radius `cutoff`
/// that is resonant for `j`. The emission order is (j1, j2, j4, j3) nested
/// loops, not canonical; callers that need canonical order sort.
pub(crate) fn for_each_resonance(
    dim: Dim,
    j: ModeIndex,
    cutoff: i64,
    mut visit: impl FnMut(&[ModeIndex; 5]),
) {
    let k = cutoff;
    let boxed = modes_in_box(dim, k);
    let jj = j.norm_sq();
    for &p1 in &boxed {
        let n1 = p1.norm_sq();
        for &p2 in &boxed {
            let n2 = p2.norm_sq();
            let s12 = j - p1 + p2;
            for &p4 in &boxed {
                let s = s12 + p4;
                let q = jj - n1 + n2 + p4.norm_sq();
                let rad = 2 * q - s.norm_sq();
                if rad < 0 {
                    continue;
                }
                match dim {
                    Dim::One => {
                        let (lo, hi) = ((s.0[0] - k).max(-k), (s.0[0] + k).min(k));
                        line_points_in_range(s.0[0], rad, lo, hi, |x| {
                            let p3 = ModeIndex::d1(x);
                            visit(&[p1, p2, p3, p4, s - p3]);
                        });
                    }
                    Dim::Two => {
                        // p5 = s - p3 must stay inside the box as well.
                        let lo = [(s.0[0] - k).max(-k), (s.0[1] - k).max(-k)];
                        let hi = [(s.0[0] + k).min(k), (s.0[1] + k).min(k)];
                        circle_points_in_box(s.0, rad, lo, hi, |p3| {
                            visit(&[p1, p2, p3, p4, s - p3]);
                        });
                    }
                }
            }
        }
    }
}

/// Naive loop with a configurable quadratic sign pattern; only used to inject
/// a faulty constraint.
fn for_each_with_signs(
    dim: Dim,
    j: ModeIndex,
    cutoff: i64,
    signs: [i64; 5],
    mut visit: impl FnMut(&[ModeIndex; 5]),
) {
    let boxed = modes_in_box(dim, cutoff);
    let jj = j.norm_sq();
    for &p1 in &boxed {
        for &p2 in &boxed {
            for &p3 in &boxed {
                for &p4 in &boxed {
                    let p5 = j - p1 + p2 - p3 + p4;
                    if p5.sup_norm() > cutoff || !p5.fits(dim) {
                        continue;
                    }
                    let t = [p1, p2, p3, p4, p5];
                    let sq: i64 = t.iter().zip(signs).map(|(p, s)| s * p.norm_sq()).sum();
                    if sq == jj {
                        visit(&t);
                    }
                }
            }
        }
    }
}

/// `R(j)` restricted to entries with sup-norm at most `cutoff`, in canonical
/// (lexicographic) order.
pub fn enumerate_resonances(dim: Dim, j: ModeIndex, cutoff: i64) -> Result<Vec<ResonantTuple>> {
    enumerate_resonances_with(dim, j, cutoff, &Faults::NONE)
}

#[doc(hidden)]
pub fn enumerate_resonances_with(
    dim: Dim,
    j: ModeIndex,
    cutoff: i64,
    faults: &Faults,
) -> Result<Vec<ResonantTuple>> {
    check_cutoff(cutoff)?;
    check_mode(dim, j, cutoff)?;
    let mut out = Vec::new();
    if faults.flip_square_sign {
        for_each_with_signs(dim, j, cutoff, [1, -1, 1, -1, -1], |t| {
            out.push(ResonantTuple(*t))
        });
    } else {
        for_each_resonance(dim, j, cutoff, |t| out.push(ResonantTuple(*t)));
    }
    out.sort_unstable();
    Ok(out)
}

/// The complete family `{R(j) : |j| <= J}` with entries bounded by `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceTable {
    dim: Dim,
    cutoff: i64,
    modes: Vec<ModeIndex>,
    tuples: Vec<Vec<ResonantTuple>>,
}

impl ResonanceTable {
    pub fn build(dim: Dim, cutoff: i64) -> Result<Self> {
        Self::build_with(dim, cutoff, &Faults::NONE)
    }

    #[doc(hidden)]
    pub fn build_with(dim: Dim, cutoff: i64, faults: &Faults) -> Result<Self> {
        check_cutoff(cutoff)?;
        let modes = modes_in_box(dim, cutoff);
        let tuples = modes
            .iter()
            .map(|&j| enumerate_resonances_with(dim, j, cutoff, faults))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResonanceTable {
            dim,
            cutoff,
            modes,
            tuples,
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

    /// Position of `j` in the canonical mode order.
    pub fn position(&self, j: ModeIndex) -> Option<usize> {
        mode_position(self.dim, self.cutoff, j)
    }

    pub fn tuples_for(&self, j: ModeIndex) -> &[ResonantTuple] {
        self.position(j).map_or(&[], |p| &self.tuples[p])
    }

    pub fn contains(&self, j: ModeIndex, tuple: &ResonantTuple) -> bool {
        self.tuples_for(j).binary_search(tuple).is_ok()
    }

    pub fn total_len(&self) -> usize {
        self.tuples.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, &[ResonantTuple])> {
        self.modes
            .iter()
            .copied()
            .zip(self.tuples.iter().map(Vec::as_slice))
    }
}

/// Position of `j` in the lexicographic list of modes with sup-norm `<= cutoff`.
pub fn mode_position(dim: Dim, cutoff: i64, j: ModeIndex) -> Option<usize> {
    if !j.fits(dim) || j.sup_norm() > cutoff {
        return None;
    }
    let side = 2 * cutoff + 1;
    let p = match dim {
        Dim::One => j.0[0] + cutoff,
        Dim::Two => (j.0[0] + cutoff) * side + (j.0[1] + cutoff),
    };
    Some(p as usize)
}

/// Sums `<j>^2 * sum_{j1-j2+j3-j4+j5=j, |ji|<=K} prod <ji>^-2` for every `j`
/// at once, by four successive convolutions of the weight sequence.
#[derive(Clone, Debug)]
pub struct ElementarySums {
    cutoff: i64,
    // index j + 5K
    conv: Vec<f64>,
}

impl ElementarySums {
    pub fn new(cutoff: i64) -> Result<Self> {
        check_cutoff(cutoff)?;
        let w: Vec<f64> = (-cutoff..=cutoff)
            .map(|n| bracket_sq_pow(n * n, 1.0))
            .collect();
        let mut acc = w.clone();
        for _ in 0..4 {
            acc = convolve(&acc, &w);
        }
        Ok(ElementarySums { cutoff, conv: acc })
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn get(&self, j: i64) -> f64 {
        let off = 5 * self.cutoff;
        if j.abs() > off {
            return 0.0;
        }
        (1.0 + (j * j) as f64) * self.conv[(j + off) as usize]
    }

    /// `sup_{|j| <= radius}` of the sums.
    pub fn sup(&self, radius: i64) -> f64 {
        (-radius..=radius).map(|j| self.get(j)).fold(0.0, f64::max)
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// The elementary weighted sum at a single `j` (no square constraint).
pub fn elementary_sum(j: i64, cutoff: i64) -> Result<f64> {
    Ok(ElementarySums::new(cutoff)?.get(j))
}

/// Admissible open interval for the regularity exponent of the weighted sum.
pub fn beta_range(dim: Dim) -> (f64, f64) {
    match dim {
        Dim::One => (3.0 / 8.0, 1.0),
        Dim::Two => (7.0 / 8.0, 1.0),
    }
}

/// `<j>^2 * sum <p1>^-2b <p2>^-2b <p3>^-2b <p4>^-2b <p5>^-2` over the tuples of
/// `R(j)` in the box of radius `cutoff` that satisfy the dominance condition
/// `|p5| >= DOMINANCE_CONSTANT * max(|j|, |p2|, |p4|)`.
pub fn weighted_resonant_sum(dim: Dim, j: ModeIndex, cutoff: i64, beta: f64) -> Result<f64> {
    WeightedSums::new(dim, cutoff, beta)?.get(j)
}

/// Largest pair table (entries) built for the two-dimensional weighted sum.
const PAIR_TABLE_LIMIT: usize = 1 << 24;

/// [`weighted_resonant_sum`] for many `j` at a fixed cutoff and exponent.
///
/// In dim 2 the `(p1, p3)` factor is tabulated once as
/// `A(s, q) = sum <p1>^-2b <p3>^-2b` over `p1 + p3 = s`, `|p1|^2 + |p3|^2 = q`,
/// and each `j` costs one lookup per admissible `(p2, p4, p5)`.
pub struct WeightedSums {
    dim: Dim,
    cutoff: i64,
    beta: f64,
    pairs: Option<Vec<f64>>,
}

impl WeightedSums {
    pub fn new(dim: Dim, cutoff: i64, beta: f64) -> Result<Self> {
        let (lo, hi) = beta_range(dim);
        if !(beta > lo && beta < hi) {
            return Err(Error::BetaOutOfRange {
                beta,
                lo,
                hi,
                dim: dim.rank(),
            });
        }
        check_cutoff(cutoff)?;
        let mut out = WeightedSums {
            dim,
            cutoff,
            beta,
            pairs: None,
        };
        if dim == Dim::Two && out.pair_table_len() <= PAIR_TABLE_LIMIT {
            out.pairs = Some(out.build_pairs());
        }
        Ok(out)
    }

    fn pair_side(&self) -> usize {
        (4 * self.cutoff + 1) as usize
    }

    fn pair_depth(&self) -> usize {
        (4 * self.cutoff * self.cutoff + 1) as usize
    }

    fn pair_table_len(&self) -> usize {
        self.pair_side()
            .saturating_mul(self.pair_side())
            .saturating_mul(self.pair_depth())
    }

    fn build_pairs(&self) -> Vec<f64> {
        let (side, depth) = (self.pair_side(), self.pair_depth());
        let k = 2 * self.cutoff;
        let boxed = modes_in_box(Dim::Two, self.cutoff);
        let w: Vec<f64> = boxed
            .iter()
            .map(|p| bracket_sq_pow(p.norm_sq(), self.beta))
            .collect();
        let mut table = vec![0.0; side * side * depth];
        for (a, &p1) in boxed.iter().enumerate() {
            for (b, &p3) in boxed.iter().enumerate() {
                let s = p1 + p3;
                let q = (p1.norm_sq() + p3.norm_sq()) as usize;
                let idx = (((s.0[0] + k) as usize * side) + (s.0[1] + k) as usize) * depth + q;
                table[idx] += w[a] * w[b];
            }
        }
        table
    }

    pub fn get(&self, j: ModeIndex) -> Result<f64> {
        if !j.fits(self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim.rank(),
                found: 2,
            });
        }
        if j.sup_norm() > MAX_CUTOFF {
            return Err(Error::ModeOutOfRange {
                mode: j,
                cutoff: MAX_CUTOFF,
            });
        }
        match &self.pairs {
            Some(table) => Ok(self.get_with_pairs(j, table)),
            None => Ok(self.get_by_circles(j)),
        }
    }

    fn get_with_pairs(&self, j: ModeIndex, table: &[f64]) -> f64 {
        let (side, depth) = (self.pair_side() as i64, self.pair_depth() as i64);
        let k2 = 2 * self.cutoff;
        let jj = j.norm_sq();
        let boxed = modes_in_box(Dim::Two, self.cutoff);
        let w: Vec<f64> = boxed
            .iter()
            .map(|p| bracket_sq_pow(p.norm_sq(), self.beta))
            .collect();
        // p5 candidates by increasing norm, so admissible ones form a suffix.
        let mut fifth: Vec<(i64, i64, i64, f64)> = boxed
            .iter()
            .map(|p| (p.norm_sq(), p.0[0], p.0[1], bracket_sq_pow(p.norm_sq(), 1.0)))
            .collect();
        fifth.sort_by_key(|t| (t.0, t.1, t.2));
        let c2 = DOMINANCE_CONSTANT * DOMINANCE_CONSTANT;
        let partial: Vec<f64> = boxed
            .par_iter()
            .enumerate()
            .map(|(a, &p2)| {
                let mut acc = 0.0;
                // (p2, p4) and (p4, p2) contribute equally.
                for (b, &p4) in boxed.iter().enumerate().skip(a) {
                    let dominant = jj.max(p2.norm_sq()).max(p4.norm_sq()) as f64;
                    let start = fifth.partition_point(|t| (t.0 as f64) < c2 * dominant);
                    let base = j + p2 + p4;
                    let qb = jj + p2.norm_sq() + p4.norm_sq();
                    let mut inner = 0.0;
                    for &(n5, x5, y5, v5) in &fifth[start..] {
                        let (sx, sy, q) = (base.0[0] - x5 + k2, base.0[1] - y5 + k2, qb - n5);
                        if sx < 0 || sy < 0 || sx >= side || sy >= side || q < 0 || q >= depth {
                            continue;
                        }
                        inner += v5 * table[((sx * side + sy) * depth + q) as usize];
                    }
                    let mult = if a == b { 1.0 } else { 2.0 };
                    acc += mult * w[b] * inner;
                }
                acc * w[a]
            })
            .collect();
        (1.0 + jj as f64) * pairwise_sum(&partial)
    }

    fn get_by_circles(&self, j: ModeIndex) -> f64 {
        let (dim, cutoff) = (self.dim, self.cutoff);
        let boxed = modes_in_box(dim, cutoff);
        let wb: Vec<f64> = boxed
            .iter()
            .map(|p| bracket_sq_pow(p.norm_sq(), self.beta))
            .collect();
        let idx = |p: ModeIndex| mode_position(dim, cutoff, p).expect("mode inside box");
        let jj = j.norm_sq();
        let c2 = DOMINANCE_CONSTANT * DOMINANCE_CONSTANT;
        let mut partial = Vec::with_capacity(boxed.len());
        for (i1, &p1) in boxed.iter().enumerate() {
            let mut acc = 0.0;
            for_each_with_first(dim, j, cutoff, p1, &boxed, |t| {
                let (p2, p3, p4, p5) = (t[1], t[2], t[3], t[4]);
                let dominant = jj.max(p2.norm_sq()).max(p4.norm_sq()) as f64;
                if (p5.norm_sq() as f64) >= c2 * dominant {
                    acc += wb[idx(p2)] * wb[idx(p3)] * wb[idx(p4)] * bracket_sq_pow(p5.norm_sq(), 1.0);
                }
            });
            partial.push(acc * wb[i1]);
        }
        (1.0 + jj as f64) * pairwise_sum(&partial)
    }
}

/// Resonant tuples with a fixed first entry.
fn for_each_with_first(
    dim: Dim,
    j: ModeIndex,
    k: i64,
    p1: ModeIndex,
    boxed: &[ModeIndex],
    mut visit: impl FnMut(&[ModeIndex; 5]),
) {
    let base = j.norm_sq() - p1.norm_sq();
    for &p2 in boxed {
        let s12 = j - p1 + p2;
        let n2 = p2.norm_sq();
        for &p4 in boxed {
            let s = s12 + p4;
            let rad = 2 * (base + n2 + p4.norm_sq()) - s.norm_sq();
            if rad < 0 {
                continue;
            }
            match dim {
                Dim::One => {
                    let (lo, hi) = ((s.0[0] - k).max(-k), (s.0[0] + k).min(k));
                    line_points_in_range(s.0[0], rad, lo, hi, |x| {
                        let p3 = ModeIndex::d1(x);
                        visit(&[p1, p2, p3, p4, s - p3]);
                    });
                }
                Dim::Two => {
                    let lo = [(s.0[0] - k).max(-k), (s.0[1] - k).max(-k)];
                    let hi = [(s.0[0] + k).min(k), (s.0[1] + k).min(k)];
                    circle_points_in_box(s.0, rad, lo, hi, |p3| {
                        visit(&[p1, p2, p3, p4, s - p3]);
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(dim: Dim, j: ModeIndex, cutoff: i64) -> Vec<ResonantTuple> {
        let b = modes_in_box(dim, cutoff);
        let mut out = Vec::new();
        for &a in &b {
            for &c in &b {
                for &d in &b {
                    for &e in &b {
                        for &f in &b {
                            let t = ResonantTuple([a, c, d, e, f]);
                            if t.is_resonant_for(j) {
                                out.push(t);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_cutoff_has_single_tuple() {
        let r = enumerate_resonances(Dim::One, ModeIndex::ZERO, 0).unwrap();
        assert_eq!(r, vec![ResonantTuple([ModeIndex::ZERO; 5])]);
        let r = enumerate_resonances(Dim::Two, ModeIndex::ZERO, 0).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn pairwise_cancellation_member() {
        let t = ResonantTuple([2, 5, 5, -3, -3].map(ModeIndex::d1));
        assert!(t.is_resonant_for(ModeIndex::d1(2)));
        let table = ResonanceTable::build(Dim::One, 5).unwrap();
        assert!(table.contains(ModeIndex::d1(2), &t));
    }

    #[test]
    fn j1_cutoff2_matches_brute_force() {
        let j = ModeIndex::d1(1);
        let fast = enumerate_resonances(Dim::One, j, 2).unwrap();
        let slow = brute_force(Dim::One, j, 2);
        assert_eq!(fast, slow);
        // Frozen from the brute-force loop over {-2..2}^5.
        assert_eq!(fast.len(), 115);
    }

    #[test]
    fn dim2_small_matches_brute_force() {
        for j in modes_in_box(Dim::Two, 1) {
            assert_eq!(
                enumerate_resonances(Dim::Two, j, 1).unwrap(),
                brute_force(Dim::Two, j, 1)
            );
        }
    }

    #[test]
    fn canonical_order_is_sorted_without_duplicates() {
        let r = enumerate_resonances(Dim::Two, ModeIndex::d2(1, 0), 2).unwrap();
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            enumerate_resonances(Dim::One, ModeIndex::ZERO, MAX_CUTOFF + 1),
            Err(Error::CutoffTooLarge { .. })
        ));
        assert!(matches!(
            enumerate_resonances(Dim::One, ModeIndex::d1(3), 2),
            Err(Error::ModeOutOfRange { .. })
        ));
        assert!(matches!(
            enumerate_resonances(Dim::One, ModeIndex::d2(0, 1), 2),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            enumerate_resonances(Dim::One, ModeIndex::ZERO, -1),
            Err(Error::NegativeCutoff(-1))
        ));
    }

    #[test]
    fn origin_circle_of_radius_five() {
        let c = CircleSpec::centered([0, 0], 25).unwrap();
        let pts = circle_lattice_points(&c, 0.0);
        assert_eq!(pts.len(), 12);
        assert!(pts.iter().all(|p| p.norm_sq() == 25));
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        // min norm filter: every point has |p| = 5
        assert_eq!(circle_lattice_points(&c, 5.0).len(), 12);
        assert!(circle_lattice_points(&c, 5.01).is_empty());
    }

    #[test]
    fn degenerate_circle() {
        let c = CircleSpec::new([2, -4], 0).unwrap();
        assert_eq!(circle_lattice_points(&c, 0.0), vec![ModeIndex::d2(1, -2)]);
        let c = CircleSpec::new([1, 0], 0).unwrap();
        assert!(circle_lattice_points(&c, 0.0).is_empty());
    }

    #[test]
    fn half_integer_center_matches_box_scan() {
        for (c, q) in [([1, 0], 2), ([1, 0], 1), ([1, 1], 2), ([1, 3], 50), ([3, 0], 25)] {
            let spec = CircleSpec::new(c, q).unwrap();
            let r = q.isqrt() + 4;
            let mut expect = Vec::new();
            for x in -r..=r {
                for y in -r..=r {
                    if (2 * x - c[0]).pow(2) + (2 * y - c[1]).pow(2) == q {
                        expect.push(ModeIndex::d2(x, y));
                    }
                }
            }
            assert_eq!(circle_lattice_points(&spec, 0.0), expect, "c={c:?} q={q}");
        }
        assert!(!CircleSpec::new([1, 0], 2).unwrap().is_parity_consistent());
        assert!(CircleSpec::new([1, 0], 1).unwrap().is_parity_consistent());
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(CircleSpec::new([0, 0], -1).is_err());
    }

    fn nested_loop_elementary(j: i64, k: i64) -> f64 {
        let w = |n: i64| 1.0 / (1.0 + (n * n) as f64);
        let mut s = 0.0;
        for a in -k..=k {
            for b in -k..=k {
                for c in -k..=k {
                    for d in -k..=k {
                        let e = j - a + b - c + d;
                        if e.abs() <= k {
                            s += w(a) * w(b) * w(c) * w(d) * w(e);
                        }
                    }
                }
            }
        }
        (1.0 + (j * j) as f64) * s
    }

    #[test]
    fn elementary_sum_small_cases() {
        assert_eq!(elementary_sum(0, 0).unwrap(), 1.0);
        for (j, k) in [(1, 1), (0, 2), (3, 2), (-2, 3)] {
            let fast = elementary_sum(j, k).unwrap();
            let slow = nested_loop_elementary(j, k);
            assert!((fast - slow).abs() <= 1e-13 * slow, "j={j} k={k}");
        }
        assert_eq!(elementary_sum(11, 2).unwrap(), 0.0);
    }

    #[test]
    fn elementary_sum_monotone_in_cutoff() {
        let mut prev = ElementarySums::new(1).unwrap();
        for k in [2, 4, 8, 16] {
            let next = ElementarySums::new(k).unwrap();
            for j in -5..=5 {
                assert!(next.get(j) >= prev.get(j));
            }
            prev = next;
        }
    }

    fn nested_loop_weighted(dim: Dim, j: ModeIndex, k: i64, beta: f64) -> f64 {
        let mut s = 0.0;
        for t in brute_force(dim, j, k) {
            let [p1, p2, p3, p4, p5] = t.0;
            let dom = j.norm_sq().max(p2.norm_sq()).max(p4.norm_sq()) as f64;
            if 4.0 * p5.norm_sq() as f64 >= dom {
                let w = |p: ModeIndex| (1.0 + p.norm_sq() as f64).powf(-beta);
                s += w(p1) * w(p2) * w(p3) * w(p4) / (1.0 + p5.norm_sq() as f64);
            }
        }
        (1.0 + j.norm_sq() as f64) * s
    }

    #[test]
    fn weighted_sum_matches_nested_loop() {
        assert_eq!(
            weighted_resonant_sum(Dim::One, ModeIndex::ZERO, 0, 0.5).unwrap(),
            1.0
        );
        for (j, k) in [(0, 8), (3, 5), (-2, 6)] {
            let fast = weighted_resonant_sum(Dim::One, ModeIndex::d1(j), k, 0.5).unwrap();
            let slow = nested_loop_weighted(Dim::One, ModeIndex::d1(j), k, 0.5);
            assert!((fast - slow).abs() <= 1e-12 * slow, "j={j} k={k}: {fast} vs {slow}");
        }
        for (j, k) in [(ModeIndex::d2(1, 0), 1), (ModeIndex::d2(0, 0), 2), (ModeIndex::d2(2, -1), 2)] {
            let sums = WeightedSums::new(Dim::Two, k, 0.9).unwrap();
            let fast = sums.get(j).unwrap();
            let circles = sums.get_by_circles(j);
            let slow = nested_loop_weighted(Dim::Two, j, k, 0.9);
            assert!((fast - slow).abs() <= 1e-12 * slow, "{j}: {fast} vs {slow}");
            assert!((circles - slow).abs() <= 1e-12 * slow);
        }
    }

    #[test]
    fn weighted_sum_rejects_beta() {
        let e = weighted_resonant_sum(Dim::One, ModeIndex::ZERO, 2, 0.3).unwrap_err();
        assert!(e.to_string().contains("(0.375, 1)"), "{e}");
        assert!(weighted_resonant_sum(Dim::Two, ModeIndex::ZERO, 2, 0.5).is_err());
        assert!(weighted_resonant_sum(Dim::One, ModeIndex::ZERO, 2, 1.0).is_err());
    }
}

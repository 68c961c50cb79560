//! Divergence-free, mean-zero velocity fields on the torus `[0, 2π]²`.
//!
//! A field is stored by its coefficients `a_k` in the orthonormal basis
//!
//! ```text
//! e_k(x) = (1/2π) · (k2, -k1)/|k| · exp(i k·x),   k ∈ Z² \ {0}
//! ```
//!
//! truncated to `|k|_∞ ≤ n_max`. Both `a_k` and `a_{-k}` are stored; a real
//! field satisfies `a_{-k} = -conj(a_k)` because `e_{-k} = -conj(e_k)`.
//! Every operation in this module returns fields that satisfy that relation
//! exactly: values are computed for one representative of each pair `{k, -k}`
//! and the partner is derived.
//!
//! Quadratic products are evaluated pseudo-spectrally on a zero-padded grid of
//! `grid_size ≥ 3·n_max + 1` points per axis, which makes the retained modes of
//! every product exact (no aliasing).

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::RngCore;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: i32,
    pub k2: i32,
}

impl WaveVector {
    pub fn new(k1: i32, k2: i32) -> Result<Self> {
        if k1 == 0 && k2 == 0 {
            return Err(Error::ZeroWaveVector);
        }
        Ok(Self { k1, k2 })
    }

    pub fn norm_sq(&self) -> f64 {
        (self.k1 * self.k1 + self.k2 * self.k2) as f64
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> u32 {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs())
    }

    /// Unit polarization `(k2, -k1)/|k|`.
    pub fn polarization(&self) -> [f64; 2] {
        let n = self.norm();
        [self.k2 as f64 / n, -self.k1 as f64 / n]
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector {
            k1: -self.k1,
            k2: -self.k2,
        }
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.k2)
    }
}

/// Evaluates the basis vector `e_k` at a point of the torus.
pub fn basis_eval(k: WaveVector, x: [f64; 2]) -> Result<[Complex64; 2]> {
    if k.k1 == 0 && k.k2 == 0 {
        return Err(Error::ZeroWaveVector);
    }
    let [d1, d2] = k.polarization();
    let phase = Complex64::from_polar(1.0 / TAU, k.k1 as f64 * x[0] + k.k2 as f64 * x[1]);
    Ok([phase * d1, phase * d2])
}

/// Galerkin truncation `|k|_∞ ≤ n_max` plus the size of the physical grid
/// used for products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationParams {
    pub n_max: usize,
    pub grid_size: usize,
}

impl TruncationParams {
    pub fn new(n_max: usize, grid_size: usize) -> Result<Self> {
        let t = Self { n_max, grid_size };
        t.validate()?;
        Ok(t)
    }

    /// Truncation with the smallest 2,3,5-smooth grid that dealiases exactly.
    pub fn with_n_max(n_max: usize) -> Result<Self> {
        Self::new(n_max, Self::default_grid_size(n_max))
    }

    pub fn default_grid_size(n_max: usize) -> usize {
        let mut n = 3 * n_max + 1;
        loop {
            let mut m = n;
            for p in [2, 3, 5] {
                while m.is_multiple_of(p) {
                    m /= p;
                }
            }
            if m == 1 {
                return n;
            }
            n += 1;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::invalid("n_max", "must be positive"));
        }
        if self.n_max > 4096 {
            return Err(Error::invalid("n_max", "must be at most 4096"));
        }
        if self.grid_size < 3 * self.n_max + 1 {
            return Err(Error::invalid(
                "grid_size",
                format!(
                    "{} is too small for exact dealiasing at n_max = {} (need at least {})",
                    self.grid_size,
                    self.n_max,
                    3 * self.n_max + 1
                ),
            ));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        2 * self.n_max + 1
    }

    /// `(2·n_max + 1)² − 1`.
    pub fn mode_count(&self) -> usize {
        self.side() * self.side() - 1
    }

    pub fn wavevector(&self, index: usize) -> WaveVector {
        let center = self.mode_count() / 2;
        let dense = if index < center { index } else { index + 1 };
        let side = self.side();
        let n = self.n_max as i32;
        WaveVector {
            k1: (dense / side) as i32 - n,
            k2: (dense % side) as i32 - n,
        }
    }

    pub fn index_of(&self, k: WaveVector) -> Option<usize> {
        let n = self.n_max as i32;
        if k.max_abs() as i32 > n || (k.k1 == 0 && k.k2 == 0) {
            return None;
        }
        let dense = (k.k1 + n) as usize * self.side() + (k.k2 + n) as usize;
        let center = self.mode_count() / 2;
        Some(if dense < center { dense } else { dense - 1 })
    }

    /// Index of `-k` given the index of `k`.
    pub fn partner(&self, index: usize) -> usize {
        self.mode_count() - 1 - index
    }

    /// One index from each pair `{k, -k}`; the partners are the other half.
    pub fn representatives(&self) -> std::ops::Range<usize> {
        0..self.mode_count() / 2
    }

    pub fn wavevectors(&self) -> impl Iterator<Item = WaveVector> + '_ {
        (0..self.mode_count()).map(|i| self.wavevector(i))
    }

    /// `|k|²` for every mode, in storage order.
    pub fn norm_sq_table(&self) -> Vec<f64> {
        self.wavevectors().map(|k| k.norm_sq()).collect()
    }
}

/// A real, divergence-free, mean-zero velocity field in spectral form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField")]
pub struct SpectralField {
    trunc: TruncationParams,
    coeffs: Vec<Complex64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    trunc: TruncationParams,
    coeffs: Vec<Complex64>,
}

impl TryFrom<RawField> for SpectralField {
    type Error = Error;
    fn try_from(raw: RawField) -> Result<Self> {
        raw.trunc.validate()?;
        SpectralField::from_coeffs(raw.trunc, raw.coeffs)
    }
}

impl SpectralField {
    pub fn zeros(trunc: TruncationParams) -> Self {
        Self {
            trunc,
            coeffs: vec![Complex64::new(0.0, 0.0); trunc.mode_count()],
        }
    }

    /// Accepts coefficients that satisfy the reality relation to `1e-12`
    /// relative and symmetrizes them exactly.
    pub fn from_coeffs(trunc: TruncationParams, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != trunc.mode_count() {
            return Err(Error::invalid(
                "coeffs",
                format!("expected {} modes, got {}", trunc.mode_count(), coeffs.len()),
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("coeffs", "non-finite coefficient"));
        }
        let mut f = Self { trunc, coeffs };
        let scale = f.norm_h().max(f64::MIN_POSITIVE);
        if f.reality_defect() > 1e-12 * scale {
            return Err(Error::invalid(
                "coeffs",
                "coefficients violate a_{-k} = -conj(a_k): field is not real",
            ));
        }
        f.enforce_reality();
        Ok(f)
    }

    /// Builds a field from `(k, a_k)` pairs; `a_{-k}` is set to `-conj(a_k)`.
    pub fn from_modes(trunc: TruncationParams, modes: &[(WaveVector, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(trunc);
        for &(k, a) in modes {
            f.set_mode(k, a)?;
        }
        Ok(f)
    }

    /// Random field with independent complex Gaussian coefficients of standard
    /// deviation `|k|^{-slope}` on each representative mode.
    pub fn random<R: RngCore + ?Sized>(trunc: TruncationParams, rng: &mut R, slope: f64) -> Self {
        let gauss: Vec<f64> = (0..trunc.mode_count()).map(|_| standard_normal(rng)).collect();
        Self::from_gaussians(trunc, &gauss, slope)
    }

    /// Same law as [`SpectralField::random`], built from `mode_count()`
    /// standard normals (two per representative mode).
    pub fn from_gaussians(trunc: TruncationParams, gauss: &[f64], slope: f64) -> Self {
        assert!(gauss.len() >= trunc.mode_count(), "need one normal per stored mode");
        let mut f = Self::zeros(trunc);
        for i in trunc.representatives() {
            let amp = trunc.wavevector(i).norm_sq().powf(-0.5 * slope) * std::f64::consts::FRAC_1_SQRT_2;
            let a = Complex64::new(gauss[2 * i], gauss[2 * i + 1]) * amp;
            f.coeffs[i] = a;
            f.coeffs[trunc.partner(i)] = -a.conj();
        }
        f
    }

    pub fn truncation(&self) -> TruncationParams {
        self.trunc
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn get(&self, k: WaveVector) -> Option<Complex64> {
        self.trunc.index_of(k).map(|i| self.coeffs[i])
    }

    /// Sets `a_k` and, to keep the field real, `a_{-k} = -conj(a_k)`.
    pub fn set_mode(&mut self, k: WaveVector, a: Complex64) -> Result<()> {
        let i = self.trunc.index_of(k).ok_or_else(|| {
            Error::invalid("k", format!("{k} is zero or outside |k|_inf <= {}", self.trunc.n_max))
        })?;
        self.coeffs[i] = a;
        self.coeffs[self.trunc.partner(i)] = -a.conj();
        Ok(())
    }

    /// `max_k |a_{-k} + conj(a_k)|`.
    pub fn reality_defect(&self) -> f64 {
        self.trunc
            .representatives()
            .map(|i| (self.coeffs[self.trunc.partner(i)] + self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn enforce_reality(&mut self) {
        for i in self.trunc.representatives() {
            let j = self.trunc.partner(i);
            let a = (self.coeffs[i] - self.coeffs[j].conj()) * 0.5;
            self.coeffs[i] = a;
            self.coeffs[j] = -a.conj();
        }
    }

    pub(crate) fn assert_real(&self) {
        debug_assert!(
            self.reality_defect() <= 1e-12 * self.norm_h().max(1e-300),
            "reality constraint violated: defect {:e}",
            self.reality_defect()
        );
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(self.trunc, other.trunc, "fields have different truncations");
    }

    /// Real inner product of `H`: `Σ_k Re(a_k conj(b_k))`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.check_same(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// `Σ_k |k|^{2r} Re(a_k conj(b_k))`.
    pub fn sobolev_inner(&self, other: &Self, r: f64) -> f64 {
        self.check_same(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| weight(self.trunc.wavevector(i).norm_sq(), r) * (a.re * b.re + a.im * b.im))
            .sum()
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    pub fn sobolev_norm_sq(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| weight(self.trunc.wavevector(i).norm_sq(), r) * a.norm_sqr())
            .sum()
    }

    /// `‖u‖_r = (Σ_k |k|^{2r} |a_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, r: f64) -> f64 {
        self.sobolev_norm_sq(r).sqrt()
    }

    /// `A^r u`: multiplies each coefficient by `|k|^{2r}`.
    pub fn stokes_apply(&self, r: f64) -> Self {
        let mut out = self.clone();
        for (i, a) in out.coeffs.iter_mut().enumerate() {
            *a *= weight(self.trunc.wavevector(i).norm_sq(), r);
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.coeffs {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self += alpha · x`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        self.check_same(x);
        for (a, b) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *a += b * alpha;
        }
    }

    pub fn distance_h(&self, other: &Self) -> f64 {
        self.check_same(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Evaluates the physical velocity at `x` by direct summation.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0, 0.0];
        for (i, a) in self.coeffs.iter().enumerate() {
            let k = self.trunc.wavevector(i);
            let e = basis_eval(k, x).expect("stored modes are nonzero");
            v[0] += (a * e[0]).re;
            v[1] += (a * e[1]).re;
        }
        v
    }
}

#[inline]
fn weight(norm_sq: f64, r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else if r == 1.0 {
        norm_sq
    } else {
        norm_sq.powf(r)
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

impl Mul<&SpectralField> for f64 {
    type Output = SpectralField;
    fn mul(self, rhs: &SpectralField) -> SpectralField {
        rhs.scaled(self)
    }
}

/// `A^r u`.
pub fn stokes_apply(u: &SpectralField, r: f64) -> SpectralField {
    u.stokes_apply(r)
}

/// `‖u‖_r`.
pub fn sobolev_norm(u: &SpectralField, r: f64) -> f64 {
    u.sobolev_norm(r)
}

/// Velocity sampled on the uniform `grid_size × grid_size` torus grid.
/// Sample `(j1, j2)` sits at `x = (2π j1/N, 2π j2/N)` and is stored at
/// `j1·N + j2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub trunc: TruncationParams,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl GridField {
    pub fn zeros(trunc: TruncationParams) -> Self {
        let n2 = trunc.grid_size * trunc.grid_size;
        Self {
            trunc,
            u1: vec![0.0; n2],
            u2: vec![0.0; n2],
        }
    }

    pub fn grid_point(&self, j1: usize, j2: usize) -> [f64; 2] {
        let h = TAU / self.trunc.grid_size as f64;
        [j1 as f64 * h, j2 as f64 * h]
    }

    pub fn from_fn(trunc: TruncationParams, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let mut g = Self::zeros(trunc);
        let n = trunc.grid_size;
        for j1 in 0..n {
            for j2 in 0..n {
                let v = f(g.grid_point(j1, j2));
                g.u1[j1 * n + j2] = v[0];
                g.u2[j1 * n + j2] = v[1];
            }
        }
        g
    }

    pub fn from_spectral(u: &SpectralField) -> Self {
        let trunc = u.truncation();
        let n = trunc.grid_size;
        let mut grid = FourierGrid::new(trunc);
        let geom = ModeGeometry::new(trunc);
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        geom.fill_velocity(&mut buf, u);
        grid.inverse(&mut buf);
        // inverse() leaves the grid transposed.
        let mut g = Self::zeros(trunc);
        for j2 in 0..n {
            for j1 in 0..n {
                let v = buf[j2 * n + j1];
                g.u1[j1 * n + j2] = v.re;
                g.u2[j1 * n + j2] = v.im;
            }
        }
        g
    }

    /// Leray projection onto the retained modes.
    pub fn leray_project(&self) -> SpectralField {
        let trunc = self.trunc;
        let n = trunc.grid_size;
        let mut grid = FourierGrid::new(trunc);
        let geom = ModeGeometry::new(trunc);
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for j1 in 0..n {
            for j2 in 0..n {
                buf[j2 * n + j1] = Complex64::new(self.u1[j1 * n + j2], self.u2[j1 * n + j2]);
            }
        }
        grid.forward(&mut buf);
        let mut out = SpectralField::zeros(trunc);
        let s = 1.0 / (n * n) as f64;
        for i in trunc.representatives() {
            let m = &geom.modes[i];
            let (p, q) = split_packed(buf[m.pos], buf[m.neg_pos]);
            let c = (p * m.d1 + q * m.d2) * (TAU * s);
            out.coeffs[i] = c;
            out.coeffs[trunc.partner(i)] = -c.conj();
        }
        out
    }

    /// `∫ f·g dx` by the rectangle rule, exact for trigonometric polynomials
    /// resolved by the grid.
    pub fn l2_inner(&self, other: &GridField) -> f64 {
        let n = self.trunc.grid_size as f64;
        let h2 = (TAU / n).powi(2);
        let s: f64 = self
            .u1
            .iter()
            .zip(&other.u1)
            .map(|(a, b)| a * b)
            .chain(self.u2.iter().zip(&other.u2).map(|(a, b)| a * b))
            .sum();
        s * h2
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_inner(self)
    }
}

/// Leray projection of a sampled vector field.
pub fn leray_project(f: &GridField) -> SpectralField {
    f.leray_project()
}

/// Recovers the transforms `(P, Q)` of two real fields packed as `p + i q`,
/// given the packed transform at `k` and at `-k`.
#[inline]
fn split_packed(at_k: Complex64, at_minus_k: Complex64) -> (Complex64, Complex64) {
    let c = at_minus_k.conj();
    ((at_k + c) * 0.5, (at_k - c) * Complex64::new(0.0, -0.5))
}

/// 2D FFTs on the padded grid. Only the `2·n_max + 1` spectral rows that can
/// hold retained modes are transformed along the second axis.
struct FourierGrid {
    n: usize,
    rows: Vec<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl FourierGrid {
    fn new(trunc: TruncationParams) -> Self {
        let n = trunc.grid_size;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let nm = trunc.n_max as i64;
        let rows = (-nm..=nm)
            .map(|m| m.rem_euclid(n as i64) as usize)
            .collect();
        Self {
            n,
            rows,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            for c in (r + 1)..n {
                buf.swap(r * n + c, c * n + r);
            }
        }
    }

    /// Spectral `[m1][m2]` (nonzero only on retained rows) to physical
    /// `[j2][j1]`, unnormalized: `f(x) = Σ_m F(m) e^{i m·x}`.
    fn inverse(&mut self, buf: &mut [Complex64]) {
        let n = self.n;
        for &r in &self.rows {
            self.inv
                .process_with_scratch(&mut buf[r * n..(r + 1) * n], &mut self.scratch);
        }
        self.transpose(buf);
        self.inv.process_with_scratch(buf, &mut self.scratch);
    }

    /// Physical `[j2][j1]` to spectral `[m1][m2]`, valid on retained rows only
    /// and unnormalized (divide by `N²`).
    fn forward(&mut self, buf: &mut [Complex64]) {
        let n = self.n;
        self.fwd.process_with_scratch(buf, &mut self.scratch);
        self.transpose(buf);
        for &r in &self.rows {
            self.fwd
                .process_with_scratch(&mut buf[r * n..(r + 1) * n], &mut self.scratch);
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ModeGeom {
    k1: f64,
    k2: f64,
    d1: f64,
    d2: f64,
    pos: usize,
    neg_pos: usize,
}

#[derive(Clone, Debug)]
struct ModeGeometry {
    modes: Vec<ModeGeom>,
}

impl ModeGeometry {
    fn new(trunc: TruncationParams) -> Self {
        let n = trunc.grid_size as i64;
        let pos = |k1: i32, k2: i32| (k1 as i64).rem_euclid(n) as usize * n as usize + (k2 as i64).rem_euclid(n) as usize;
        let modes = trunc
            .wavevectors()
            .map(|k| {
                let [d1, d2] = k.polarization();
                ModeGeom {
                    k1: k.k1 as f64,
                    k2: k.k2 as f64,
                    d1,
                    d2,
                    pos: pos(k.k1, k.k2),
                    neg_pos: pos(-k.k1, -k.k2),
                }
            })
            .collect();
        Self { modes }
    }

    /// Packs `û1 + i û2` of the velocity into a zeroed `[m1][m2]` buffer.
    fn fill_velocity(&self, buf: &mut [Complex64], u: &SpectralField) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (m, a) in self.modes.iter().zip(u.coeffs()) {
            buf[m.pos] = a * Complex64::new(m.d1, m.d2) * (1.0 / TAU);
        }
    }

    /// Packs `∂_j u1 + i ∂_j u2` for `axis = j ∈ {0, 1}`.
    fn fill_gradient(&self, buf: &mut [Complex64], u: &SpectralField, axis: usize) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (m, a) in self.modes.iter().zip(u.coeffs()) {
            let kj = if axis == 0 { m.k1 } else { m.k2 };
            buf[m.pos] = a * Complex64::new(m.d1, m.d2) * I * (kj / TAU);
        }
    }
}

/// Scratch space for the Navier-Stokes nonlinearity and related quadratic
/// terms. One instance per worker; it is not shared.
pub struct Advection {
    trunc: TruncationParams,
    grid: FourierGrid,
    geom: ModeGeometry,
    bufs: [Vec<Complex64>; 3],
}

impl Clone for Advection {
    fn clone(&self) -> Self {
        Self::new(self.trunc)
    }
}

impl fmt::Debug for Advection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Advection").field("trunc", &self.trunc).finish()
    }
}

impl Advection {
    pub fn new(trunc: TruncationParams) -> Self {
        let n2 = trunc.grid_size * trunc.grid_size;
        let zero = vec![Complex64::new(0.0, 0.0); n2];
        Self {
            trunc,
            grid: FourierGrid::new(trunc),
            geom: ModeGeometry::new(trunc),
            bufs: [zero.clone(), zero.clone(), zero],
        }
    }

    pub fn truncation(&self) -> TruncationParams {
        self.trunc
    }

    /// `B(u) = P[(u·∇)u]`, computed as `P ∂_j(u_j u)`.
    pub fn nonlinearity(&mut self, u: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(self.trunc);
        self.nonlinearity_into(u, &mut out);
        out
    }

    pub fn nonlinearity_into(&mut self, u: &SpectralField, out: &mut SpectralField) {
        debug_assert_eq!(u.truncation(), self.trunc);
        u.assert_real();
        let [a, b, c] = &mut self.bufs;
        self.geom.fill_velocity(a, u);
        self.grid.inverse(a);
        for ((va, vb), vc) in a.iter().zip(b.iter_mut()).zip(c.iter_mut()) {
            let (u1, u2) = (va.re, va.im);
            *vb = Complex64::new(u1 * u1, u1 * u2);
            *vc = Complex64::new(u2 * u2, 0.0);
        }
        self.grid.forward(b);
        self.grid.forward(c);
        let s = TAU / (self.trunc.grid_size * self.trunc.grid_size) as f64;
        let trunc = self.trunc;
        for i in trunc.representatives() {
            let m = &self.geom.modes[i];
            let (p11, p12) = split_packed(b[m.pos], b[m.neg_pos]);
            let p22 = c[m.pos];
            let f1 = I * (p11 * m.k1 + p12 * m.k2);
            let f2 = I * (p12 * m.k1 + p22 * m.k2);
            let coef = (f1 * m.d1 + f2 * m.d2) * s;
            out.coeffs[i] = coef;
            out.coeffs[trunc.partner(i)] = -coef.conj();
        }
    }

    /// `B(u, v) = P[(u·∇)v]`, computed as `P ∂_j(u_j v)`.
    pub fn bilinear(&mut self, u: &SpectralField, v: &SpectralField) -> SpectralField {
        debug_assert_eq!(u.truncation(), self.trunc);
        debug_assert_eq!(v.truncation(), self.trunc);
        u.assert_real();
        v.assert_real();
        let [a, b, c] = &mut self.bufs;
        self.geom.fill_velocity(a, u);
        self.geom.fill_velocity(b, v);
        self.grid.inverse(a);
        self.grid.inverse(b);
        for ((va, vb), vc) in a.iter_mut().zip(b.iter()).zip(c.iter_mut()) {
            let (u1, u2) = (va.re, va.im);
            let (v1, v2) = (vb.re, vb.im);
            // a <- (u1 v1, u2 v1), c <- (u1 v2, u2 v2)
            *va = Complex64::new(u1 * v1, u2 * v1);
            *vc = Complex64::new(u1 * v2, u2 * v2);
        }
        self.grid.forward(a);
        self.grid.forward(c);
        let s = TAU / (self.trunc.grid_size * self.trunc.grid_size) as f64;
        let trunc = self.trunc;
        let mut out = SpectralField::zeros(trunc);
        for i in trunc.representatives() {
            let m = &self.geom.modes[i];
            let (x11, x21) = split_packed(a[m.pos], a[m.neg_pos]);
            let (x12, x22) = split_packed(c[m.pos], c[m.neg_pos]);
            let f1 = I * (x11 * m.k1 + x21 * m.k2);
            let f2 = I * (x12 * m.k1 + x22 * m.k2);
            let coef = (f1 * m.d1 + f2 * m.d2) * s;
            out.coeffs[i] = coef;
            out.coeffs[trunc.partner(i)] = -coef.conj();
        }
        out
    }

    /// `P[(∇u)ᵀ h]`, the field `w_j = Σ_i h_i ∂_j u_i` projected onto `H`.
    pub fn gradient_transpose(&mut self, u: &SpectralField, h: &SpectralField) -> SpectralField {
        let [a, b, c] = &mut self.bufs;
        self.geom.fill_gradient(a, u, 0);
        self.geom.fill_gradient(b, u, 1);
        self.geom.fill_velocity(c, h);
        self.grid.inverse(a);
        self.grid.inverse(b);
        self.grid.inverse(c);
        for ((va, vb), vc) in a.iter_mut().zip(b.iter()).zip(c.iter()) {
            let (h1, h2) = (vc.re, vc.im);
            *va = Complex64::new(h1 * va.re + h2 * va.im, h1 * vb.re + h2 * vb.im);
        }
        self.grid.forward(a);
        let s = TAU / (self.trunc.grid_size * self.trunc.grid_size) as f64;
        let trunc = self.trunc;
        let mut out = SpectralField::zeros(trunc);
        for i in trunc.representatives() {
            let m = &self.geom.modes[i];
            let (w1, w2) = split_packed(a[m.pos], a[m.neg_pos]);
            let coef = (w1 * m.d1 + w2 * m.d2) * s;
            out.coeffs[i] = coef;
            out.coeffs[trunc.partner(i)] = -coef.conj();
        }
        out
    }

    /// Adjoint of the linearization `δ ↦ B(u, δ) + B(δ, u)` applied to `h`:
    /// `-B(u, h) + P[(∇u)ᵀ h]`.
    pub fn linearized_adjoint(&mut self, u: &SpectralField, h: &SpectralField) -> SpectralField {
        let mut out = self.gradient_transpose(u, h);
        let b = self.bilinear(u, h);
        out.axpy(-1.0, &b);
        out
    }

    /// `b(u, v, w) = ⟨B(u, v), w⟩_H`.
    pub fn b_form(&mut self, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
        for f in [u, v, w] {
            if f.truncation() != self.trunc {
                return Err(Error::TruncationMismatch(self.trunc, f.truncation()));
            }
        }
        Ok(self.bilinear(u, v).inner(w))
    }
}

/// `B(u)` with a throwaway workspace.
pub fn nonlinearity(u: &SpectralField) -> SpectralField {
    Advection::new(u.truncation()).nonlinearity(u)
}

/// `b(u, v, w)` with a throwaway workspace.
pub fn b_form(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    Advection::new(u.truncation()).b_form(u, v, w)
}

/// Reference `B(u, v)` by direct convolution over all mode pairs, `O(M²)`:
///
/// ```text
/// ⟨B(u,v), e_k⟩ = (i/2π) Σ_{p+q=k} a_p b_q (ê_p·q)(ê_q·ê_k)
/// ```
///
/// Independent of the grid path; used to check it.
pub fn bilinear_direct(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let trunc = u.truncation();
    if v.truncation() != trunc {
        return Err(Error::TruncationMismatch(trunc, v.truncation()));
    }
    let mut out = SpectralField::zeros(trunc);
    let prefactor = I / TAU;
    for (ip, ap) in u.coeffs().iter().enumerate() {
        if ap.norm_sqr() == 0.0 {
            continue;
        }
        let p = trunc.wavevector(ip);
        let ep = p.polarization();
        for (iq, bq) in v.coeffs().iter().enumerate() {
            let q = trunc.wavevector(iq);
            let k = WaveVector {
                k1: p.k1 + q.k1,
                k2: p.k2 + q.k2,
            };
            let Some(ik) = trunc.index_of(k) else { continue };
            let eq = q.polarization();
            let ek = k.polarization();
            let ep_dot_q = ep[0] * q.k1 as f64 + ep[1] * q.k2 as f64;
            let eq_dot_ek = eq[0] * ek[0] + eq[1] * ek[1];
            out.coeffs[ik] += prefactor * ap * bq * (ep_dot_q * eq_dot_ek);
        }
    }
    Ok(out)
}

/// Reference `b(u, v, w)` through [`bilinear_direct`].
pub fn b_form_direct(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    if w.truncation() != u.truncation() {
        return Err(Error::TruncationMismatch(u.truncation(), w.truncation()));
    }
    Ok(bilinear_direct(u, v)?.inner(w))
}

/// Ratios `|b(u,v,w)| / (‖u‖_H^{1/2}‖u‖_V^{1/2}‖v‖_V‖w‖_H^{1/2}‖w‖_V^{1/2})`,
/// a diagnostic for the interpolation bound on the trilinear form. Only the
/// empirical ratio is reported; the constant is not known.
pub fn interpolation_ratio(adv: &mut Advection, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    let b = adv.b_form(u, v, w)?;
    let denom = (u.norm_h() * u.sobolev_norm(1.0)).sqrt() * v.sobolev_norm(1.0) * (w.norm_h() * w.sobolev_norm(1.0)).sqrt();
    Ok(if denom == 0.0 { 0.0 } else { b.abs() / denom })
}

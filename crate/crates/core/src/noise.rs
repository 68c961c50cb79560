//! Spatially correlated additive noise `√(ε Q) dW` with
//! `Q = (I + δ A^β)^{-1}` and its Ornstein-Uhlenbeck convolution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::spectral::{SpectralField, TruncationParams, WaveVector};

/// Diagonal covariance `σ_k = (1 + δ|k|^{2β})^{-1/2}`.
///
/// `delta = 0` is accepted as the white-noise limit `Q = I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub beta: f64,
    pub delta: f64,
}

impl CovarianceSpec {
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        let s = Self { beta, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn white(beta: f64) -> Result<Self> {
        Self::new(beta, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::invalid("delta", format!("must be non-negative, got {}", self.delta)));
        }
        Ok(())
    }

    /// `σ` as a function of `|k|²`.
    #[inline]
    pub fn sigma(&self, norm_sq: f64) -> f64 {
        (1.0 + self.delta * norm_sq.powf(self.beta)).powf(-0.5)
    }

    pub fn sigma_sq(&self, norm_sq: f64) -> f64 {
        1.0 / (1.0 + self.delta * norm_sq.powf(self.beta))
    }
}

pub fn sigma_k(spec: &CovarianceSpec, k: WaveVector) -> Result<f64> {
    if k.k1 == 0 && k.k2 == 0 {
        return Err(Error::ZeroWaveVector);
    }
    Ok(spec.sigma(k.norm_sq()))
}

/// `√Q f`.
pub fn apply_sqrt_q(spec: &CovarianceSpec, f: &SpectralField) -> SpectralField {
    let trunc = f.truncation();
    let mut out = f.clone();
    for (i, a) in out.coeffs_mut().iter_mut().enumerate() {
        *a *= spec.sigma(trunc.wavevector(i).norm_sq());
    }
    out
}

/// `Tr Q = Σ_k σ_k²` over the retained lattice.
pub fn trace_q(spec: &CovarianceSpec, trunc: TruncationParams) -> f64 {
    trunc.wavevectors().map(|k| spec.sigma_sq(k.norm_sq())).sum()
}

/// `P_ε = Σ_k |k|² σ_k²` over the retained lattice.
pub fn p_epsilon(spec: &CovarianceSpec, trunc: TruncationParams) -> f64 {
    if spec.beta <= 2.0 {
        log::warn!(
            "p_epsilon with beta = {} <= 2: the sum is not controlled by delta^(-2/beta) and grows with the truncation",
            spec.beta
        );
    }
    trunc
        .wavevectors()
        .map(|k| {
            let n = k.norm_sq();
            n * spec.sigma_sq(n)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    /// `Σ_k 1/(|k|²(1 + δ|k|^{2β}))` over the retained lattice.
    pub series: f64,
    /// `(1/β) log(1/δ) + 1/β`.
    pub bound: f64,
}

impl SeriesBound {
    pub fn holds(&self) -> bool {
        self.series <= self.bound
    }
}

/// The series controlling the variance of the stochastic convolution,
/// together with its logarithmic comparison bound. Only meaningful for
/// `δ ∈ (0, 1)`.
pub fn convolution_series_bound(spec: &CovarianceSpec, trunc: TruncationParams) -> Result<SeriesBound> {
    if !(spec.delta > 0.0 && spec.delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("the logarithmic bound needs 0 < delta < 1, got {}", spec.delta),
        ));
    }
    let series = trunc
        .wavevectors()
        .map(|k| {
            let n = k.norm_sq();
            spec.sigma_sq(n) / n
        })
        .sum();
    let bound = ((1.0 / spec.delta).ln() + 1.0) / spec.beta;
    Ok(SeriesBound { series, bound })
}

/// Smallest δ for which the lattice does not yet cut off the scaling of the
/// covariance sums: `δ^{-1/(2β)} ≤ n_max/4`.
pub fn min_unsaturated_delta(beta: f64, trunc: TruncationParams) -> f64 {
    (trunc.n_max as f64 / 4.0).powf(-2.0 * beta)
}

/// Joint law `δ(ε) = c · ε^θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    Power { c: f64, theta: f64 },
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::Power { c: 1.0, theta: 1.0 }
    }
}

/// Which asymptotic hypotheses on `(ε, δ(ε))` hold as `ε → 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleFlags {
    /// `ε log(1/δ) → 0`.
    pub log_vanishes: bool,
    /// `ε δ^{-2/β} → 0`.
    pub p_epsilon_vanishes: bool,
    /// `sup_ε ε δ^{-1/β} < ∞`, which bounds the stationary `V` moments.
    pub moments_bounded: bool,
}

impl NoiseSchedule {
    pub fn power(c: f64, theta: f64) -> Result<Self> {
        let s = NoiseSchedule::Power { c, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let NoiseSchedule::Power { c, theta } = *self;
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("c", format!("must be positive, got {c}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::invalid("theta", format!("must be positive, got {theta}")));
        }
        Ok(())
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        let NoiseSchedule::Power { c, theta } = *self;
        c * epsilon.powf(theta)
    }

    pub fn covariance(&self, epsilon: f64, beta: f64) -> Result<CovarianceSpec> {
        CovarianceSpec::new(beta, self.delta(epsilon))
    }

    pub fn flags(&self, beta: f64) -> ScheduleFlags {
        let NoiseSchedule::Power { theta, .. } = *self;
        ScheduleFlags {
            log_vanishes: true,
            p_epsilon_vanishes: theta < beta / 2.0,
            moments_bounded: theta <= beta,
        }
    }
}

/// Exact one-step update of `dz = -Az dt + √(εQ) dW` over a fixed `dt`.
#[derive(Clone, Debug)]
pub struct OuStepper {
    trunc: TruncationParams,
    decay: Vec<f64>,
    /// Standard deviation of the real and of the imaginary part of the
    /// increment, per representative mode.
    component_std: Vec<f64>,
    gauss: Vec<f64>,
    silent: bool,
}

impl OuStepper {
    pub fn new(trunc: TruncationParams, spec: &CovarianceSpec, epsilon: f64, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::invalid("epsilon", format!("must be non-negative, got {epsilon}")));
        }
        let decay = trunc.wavevectors().map(|k| (-k.norm_sq() * dt).exp()).collect();
        let component_std = trunc
            .representatives()
            .map(|i| {
                let lambda = trunc.wavevector(i).norm_sq();
                (0.5 * increment_variance(spec.sigma_sq(lambda), lambda, epsilon, dt)).sqrt()
            })
            .collect();
        Ok(Self {
            trunc,
            decay,
            component_std,
            gauss: vec![0.0; trunc.mode_count()],
            silent: epsilon == 0.0,
        })
    }

    /// `e^{-|k|² dt}` per mode.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// Writes the Gaussian increment `∫ e^{-A(dt-s)} √(εQ) dW(s)` of step
    /// `step` into `out`.
    pub fn increment(&mut self, rng: &mut RngStream, step: u64, out: &mut SpectralField) {
        let c = out.coeffs_mut();
        if self.silent {
            c.fill(Complex64::new(0.0, 0.0));
            return;
        }
        rng.gaussians(step, &mut self.gauss);
        for (i, s) in self.component_std.iter().enumerate() {
            let g = Complex64::new(self.gauss[2 * i], self.gauss[2 * i + 1]) * s;
            c[i] = g;
            c[self.trunc.mode_count() - 1 - i] = -g.conj();
        }
    }

    /// `z ← e^{-A dt} z + ξ` with `ξ` drawn at `(rng, step)`.
    pub fn step(&mut self, z: &mut SpectralField, rng: &mut RngStream, step: u64, scratch: &mut SpectralField) {
        self.increment(rng, step, scratch);
        for ((a, e), g) in z.coeffs_mut().iter_mut().zip(&self.decay).zip(scratch.coeffs()) {
            *a = *a * *e + g;
        }
    }
}

/// `E|ξ_k|² = ε σ² (1 - e^{-2λ dt}) / (2λ)`.
pub fn increment_variance(sigma_sq: f64, lambda: f64, epsilon: f64, dt: f64) -> f64 {
    epsilon * sigma_sq * -(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)
}

/// Stationary `E|z_k|² = ε σ_k² / (2|k|²)`.
pub fn stationary_variance(spec: &CovarianceSpec, epsilon: f64, k: WaveVector) -> f64 {
    let lambda = k.norm_sq();
    epsilon * spec.sigma_sq(lambda) / (2.0 * lambda)
}

/// Mean and variance `E|z_k - m|²` of one mode after exact evolution over
/// `dt`, starting from mean `mean` and variance `var`.
pub fn ou_moments(mean: Complex64, var: f64, lambda: f64, sigma_sq: f64, epsilon: f64, dt: f64) -> (Complex64, f64) {
    let e = (-lambda * dt).exp();
    (mean * e, var * e * e + increment_variance(sigma_sq, lambda, epsilon, dt))
}

/// One exact OU step with a throwaway stepper.
pub fn ou_exact_step(
    z: &SpectralField,
    spec: &CovarianceSpec,
    epsilon: f64,
    dt: f64,
    rng: &mut RngStream,
    step: u64,
) -> Result<SpectralField> {
    let trunc = z.truncation();
    let mut stepper = OuStepper::new(trunc, spec, epsilon, dt)?;
    let mut out = z.clone();
    let mut scratch = SpectralField::zeros(trunc);
    stepper.step(&mut out, rng, step, &mut scratch);
    Ok(out)
}

/// A draw from the stationary law of the OU process, which is Gaussian with
/// independent modes of variance `ε σ_k² / (2|k|²)`.
pub fn stationary_sample(
    trunc: TruncationParams,
    spec: &CovarianceSpec,
    epsilon: f64,
    rng: &mut RngStream,
    step: u64,
    gauss: &mut Vec<f64>,
    out: &mut SpectralField,
) {
    gauss.resize(trunc.mode_count(), 0.0);
    rng.gaussians(step, gauss);
    let m = trunc.mode_count();
    let c = out.coeffs_mut();
    for i in trunc.representatives() {
        let k = trunc.wavevector(i);
        let s = (0.5 * stationary_variance(spec, epsilon, k)).sqrt();
        let g = Complex64::new(gauss[2 * i], gauss[2 * i + 1]) * s;
        c[i] = g;
        c[m - 1 - i] = -g.conj();
    }
}

//! Exponential time integrators for
//!
//! ```text
//! du + (Au + s·B(u)) dt = φ dt + √(εQ) dW
//! ```
//!
//! with `s = 1` (Navier-Stokes), `s = -1` (the time-reversed flow
//! `v' = -Av + B(v)`) or `s = 0` (Stokes/OU). The linear part and the noise
//! are integrated exactly per mode; the nonlinearity is explicit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CovarianceSpec, OuStepper};
use crate::rng::RngStream;
use crate::spectral::{Advection, SpectralField, TruncationParams};

/// States whose `H` norm exceeds this are treated as a numerical blow-up.
pub const BLOW_UP_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// First order: `u ← e^{-A dt}u + φ₁(dt) N(u) + ξ`.
    #[default]
    ExponentialEuler,
    /// Cox-Matthews ETD2RK: second order for deterministic problems.
    EtdRk2,
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// `false` drops `B`, leaving the linear (Stokes/OU) model.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, scheme: Scheme) -> Result<Self> {
        let c = Self {
            dt,
            t_final,
            scheme,
            record_stride: 1,
            nonlinear: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::invalid("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be positive"));
        }
        steps_for(self.t_final, self.dt).map(|_| ())
    }

    pub fn n_steps(&self) -> usize {
        steps_for(self.t_final, self.dt).expect("validated config")
    }

    pub fn flow(&self) -> Flow {
        if self.nonlinear {
            Flow::Forward
        } else {
            Flow::Linear
        }
    }
}

/// Number of steps of size `dt` covering `[0, t]`; `t` must be a multiple of
/// `dt` to relative precision `1e-9`.
pub fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if n < 1.0 || (n * dt - t).abs() > 1e-9 * t {
        return Err(Error::invalid(
            "dt",
            format!("t = {t} is not a positive integer multiple of dt = {dt}"),
        ));
    }
    Ok(n as usize)
}

/// Sign of the advection term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    /// `u' = -Au - B(u)`.
    Forward,
    /// `v' = -Av + B(v)`.
    Reversed,
    /// `u' = -Au`.
    Linear,
}

impl Flow {
    pub fn sign(self) -> f64 {
        match self {
            Flow::Forward => 1.0,
            Flow::Reversed => -1.0,
            Flow::Linear => 0.0,
        }
    }
}

/// A uniform time grid with one field per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct DiscretePath {
    times: Vec<f64>,
    states: Vec<SpectralField>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    times: Vec<f64>,
    states: Vec<SpectralField>,
}

impl TryFrom<RawPath> for DiscretePath {
    type Error = Error;
    fn try_from(raw: RawPath) -> Result<Self> {
        DiscretePath::new(raw.times, raw.states)
    }
}

impl DiscretePath {
    /// Checks equal lengths, a common truncation and strictly increasing
    /// times. Uniformity is checked by [`DiscretePath::dt`].
    pub fn new(times: Vec<f64>, states: Vec<SpectralField>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::invalid(
                "path",
                format!("{} times but {} states", times.len(), states.len()),
            ));
        }
        if times.is_empty() {
            return Err(Error::invalid("path", "empty path"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("path", "times must be finite and strictly increasing"));
        }
        let trunc = states[0].truncation();
        if let Some(s) = states.iter().find(|s| s.truncation() != trunc) {
            return Err(Error::TruncationMismatch(trunc, s.truncation()));
        }
        Ok(Self { times, states })
    }

    pub fn uniform(t0: f64, dt: f64, states: Vec<SpectralField>) -> Result<Self> {
        let times = (0..states.len()).map(|i| t0 + i as f64 * dt).collect();
        Self::new(times, states)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn into_states(self) -> Vec<SpectralField> {
        self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn truncation(&self) -> TruncationParams {
        self.states[0].truncation()
    }

    pub fn first(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("paths are non-empty")
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("paths are non-empty")
    }

    /// The common step, or an error naming the first step that deviates from
    /// the mean step by more than `1e-12 · max(1, |t_end|)`.
    pub fn dt(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::invalid("path", "a single node has no time step"));
        }
        let n = (self.len() - 1) as f64;
        let dt = (self.t_end() - self.t_start()) / n;
        let tol = 1e-12 * self.t_end().abs().max(1.0);
        for (index, w) in self.times.windows(2).enumerate() {
            let width = w[1] - w[0];
            if (width - dt).abs() > tol {
                return Err(Error::NonUniformGrid {
                    index,
                    width,
                    expected: dt,
                });
            }
        }
        Ok(dt)
    }

    /// Joins `self` on `[a, b]` with `next` on `[b, c]`. The node at `b` is
    /// shared: `next`'s first node must coincide with `self`'s last node in
    /// time and (to `1e-12` relative) in state, and it is kept once.
    pub fn concat(&self, next: &DiscretePath) -> Result<DiscretePath> {
        let tol = 1e-12 * self.t_end().abs().max(1.0);
        if (next.t_start() - self.t_end()).abs() > tol {
            return Err(Error::invalid(
                "path",
                format!("pieces do not meet: {} vs {}", self.t_end(), next.t_start()),
            ));
        }
        let gap = next.first().distance_h(self.last());
        if gap > 1e-12 * self.last().norm_h().max(1.0) {
            return Err(Error::invalid("path", format!("states differ by {gap:e} at the junction")));
        }
        let mut times = self.times.clone();
        let mut states = self.states.clone();
        times.extend_from_slice(&next.times[1..]);
        states.extend_from_slice(&next.states[1..]);
        DiscretePath::new(times, states)
    }

    /// `sup_i ‖self_i − other_i‖_H` over common nodes.
    pub fn sup_distance(&self, other: &DiscretePath) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::invalid("path", "paths have different lengths"));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.distance_h(b))
            .fold(0.0, f64::max))
    }
}

/// `(1 − e^{−x})/x`.
fn phi1(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(e^{−x} − 1 + x)/x²`.
fn phi2(x: f64) -> f64 {
    if x < 1e-3 {
        0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0
    } else {
        ((-x).exp_m1() + x) / (x * x)
    }
}

/// Per-worker time stepper: exponential factors plus scratch space.
#[derive(Debug, Clone)]
pub struct Integrator {
    trunc: TruncationParams,
    dt: f64,
    scheme: Scheme,
    flow: Flow,
    adv: Advection,
    decay: Vec<f64>,
    phi1_dt: Vec<f64>,
    phi2_dt: Vec<f64>,
    n0: SpectralField,
    n1: SpectralField,
    work: SpectralField,
}

impl Integrator {
    pub fn new(trunc: TruncationParams, dt: f64, scheme: Scheme, flow: Flow) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let lambdas = trunc.norm_sq_table();
        Ok(Self {
            trunc,
            dt,
            scheme,
            flow,
            adv: Advection::new(trunc),
            decay: lambdas.iter().map(|l| (-l * dt).exp()).collect(),
            phi1_dt: lambdas.iter().map(|l| dt * phi1(l * dt)).collect(),
            phi2_dt: lambdas.iter().map(|l| dt * phi2(l * dt)).collect(),
            n0: SpectralField::zeros(trunc),
            n1: SpectralField::zeros(trunc),
            work: SpectralField::zeros(trunc),
        })
    }

    pub fn from_config(trunc: TruncationParams, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(trunc, cfg.dt, cfg.scheme, cfg.flow())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn truncation(&self) -> TruncationParams {
        self.trunc
    }

    pub fn flow(&self) -> Flow {
        self.flow
    }

    /// `out = φ − s·B(u + shift)`.
    fn drift(
        adv: &mut Advection,
        flow: Flow,
        u: &SpectralField,
        shift: Option<&SpectralField>,
        forcing: Option<&SpectralField>,
        work: &mut SpectralField,
        out: &mut SpectralField,
    ) {
        match flow {
            Flow::Linear => match forcing {
                Some(f) => out.clone_from(f),
                None => out.coeffs_mut().fill(Default::default()),
            },
            _ => {
                let arg = match shift {
                    Some(z) => {
                        work.clone_from(u);
                        work.axpy(1.0, z);
                        &*work
                    }
                    None => u,
                };
                adv.nonlinearity_into(arg, out);
                out.scale(-flow.sign());
                if let Some(f) = forcing {
                    out.axpy(1.0, f);
                }
            }
        }
    }

    /// One step. `forcing` is held constant over the step; `noise` is the
    /// exact stochastic-convolution increment of the step. `shift0`/`shift1`
    /// are added inside `B` at the start/end of the step (used for `F_x`).
    fn advance(
        &mut self,
        u: &mut SpectralField,
        forcing: Option<&SpectralField>,
        noise: Option<&SpectralField>,
        shifts: Option<(&SpectralField, &SpectralField)>,
        t_next: f64,
    ) -> Result<()> {
        let Self {
            adv,
            flow,
            decay,
            phi1_dt,
            phi2_dt,
            n0,
            n1,
            work,
            scheme,
            ..
        } = self;
        Self::drift(adv, *flow, u, shifts.map(|s| s.0), forcing, work, n0);
        {
            let c = u.coeffs_mut();
            for (i, a) in c.iter_mut().enumerate() {
                *a = *a * decay[i] + n0.coeffs()[i] * phi1_dt[i];
            }
            if let Some(xi) = noise {
                for (a, g) in c.iter_mut().zip(xi.coeffs()) {
                    *a += g;
                }
            }
        }
        if *scheme == Scheme::EtdRk2 {
            Self::drift(adv, *flow, u, shifts.map(|s| s.1), forcing, work, n1);
            let c = u.coeffs_mut();
            for (i, a) in c.iter_mut().enumerate() {
                *a += (n1.coeffs()[i] - n0.coeffs()[i]) * phi2_dt[i];
            }
        }
        check_finite(u, t_next)
    }

    /// Deterministic step with control `phi` held over the step.
    pub fn step_controlled(&mut self, u: &mut SpectralField, phi: Option<&SpectralField>, t_next: f64) -> Result<()> {
        self.advance(u, phi, None, None, t_next)
    }

    /// Stochastic step with a precomputed noise increment.
    pub fn step_with_noise(&mut self, u: &mut SpectralField, noise: &SpectralField, t_next: f64) -> Result<()> {
        self.advance(u, None, Some(noise), None, t_next)
    }

    /// Step of `v' = -Av - B(v + z)` given `z` at both ends of the step.
    pub fn step_shifted(&mut self, v: &mut SpectralField, z0: &SpectralField, z1: &SpectralField, t_next: f64) -> Result<()> {
        self.advance(v, None, None, Some((z0, z1)), t_next)
    }
}

fn check_finite(u: &SpectralField, time: f64) -> Result<()> {
    let norm = u.norm_h();
    if !norm.is_finite() || norm > BLOW_UP_NORM {
        return Err(Error::BlowUp {
            time,
            norm,
            state: Box::new(u.clone()),
        });
    }
    Ok(())
}

/// Integrator plus noise generator for repeated stochastic trajectories.
#[derive(Debug, Clone)]
pub struct StochasticSolver {
    integ: Integrator,
    ou: OuStepper,
    noise: SpectralField,
}

impl StochasticSolver {
    pub fn new(trunc: TruncationParams, spec: &CovarianceSpec, epsilon: f64, dt: f64, scheme: Scheme, flow: Flow) -> Result<Self> {
        Ok(Self {
            integ: Integrator::new(trunc, dt, scheme, flow)?,
            ou: OuStepper::new(trunc, spec, epsilon, dt)?,
            noise: SpectralField::zeros(trunc),
        })
    }

    pub fn dt(&self) -> f64 {
        self.integ.dt
    }

    /// Advances `u` by `n_steps`, drawing noise for global steps
    /// `first_step..first_step + n_steps`. `observe(j, u)` is called after the
    /// `j`-th step of this call (1-based).
    pub fn run(
        &mut self,
        u: &mut SpectralField,
        rng: &mut RngStream,
        first_step: u64,
        n_steps: usize,
        mut observe: impl FnMut(usize, &SpectralField),
    ) -> Result<()> {
        let dt = self.integ.dt;
        for j in 0..n_steps {
            let step = first_step + j as u64;
            self.ou.increment(rng, step, &mut self.noise);
            self.integ
                .step_with_noise(u, &self.noise, (step + 1) as f64 * dt)?;
            observe(j + 1, u);
        }
        Ok(())
    }
}

/// One exponential-Euler step of the stochastic equation with noise drawn at
/// `(rng, step)`.
pub fn step_stochastic(
    u: &SpectralField,
    spec: &CovarianceSpec,
    epsilon: f64,
    dt: f64,
    rng: &mut RngStream,
    step: u64,
) -> Result<SpectralField> {
    let mut s = StochasticSolver::new(u.truncation(), spec, epsilon, dt, Scheme::ExponentialEuler, Flow::Forward)?;
    let mut out = u.clone();
    s.run(&mut out, rng, step, 1, |_, _| {})?;
    Ok(out)
}

/// One ETD-RK2 step of `u' = -Au - B(u) + φ` with `φ` constant over the step.
pub fn step_controlled(u: &SpectralField, phi: &SpectralField, dt: f64) -> Result<SpectralField> {
    let mut integ = Integrator::new(u.truncation(), dt, Scheme::EtdRk2, Flow::Forward)?;
    let mut out = u.clone();
    integ.step_controlled(&mut out, Some(phi), dt)?;
    Ok(out)
}

/// Stochastic trajectory recorded every `record_stride` steps.
pub fn simulate(
    x: &SpectralField,
    spec: &CovarianceSpec,
    epsilon: f64,
    cfg: &SolverConfig,
    rng: &mut RngStream,
) -> Result<DiscretePath> {
    cfg.validate()?;
    let mut solver = StochasticSolver::new(x.truncation(), spec, epsilon, cfg.dt, cfg.scheme, cfg.flow())?;
    let mut u = x.clone();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    solver.run(&mut u, rng, 0, cfg.n_steps(), |j, u| {
        if j % cfg.record_stride == 0 {
            times.push(j as f64 * cfg.dt);
            states.push(u.clone());
        }
    })?;
    DiscretePath::new(times, states)
}

/// Deterministic trajectory of `u' = -Au - s·B(u) + φ_i` on `[t0, t0 + n·dt]`,
/// with `controls[i]` held on the `i`-th step (`None`: no control), recording
/// every node.
pub fn solve_controlled(
    x: &SpectralField,
    controls: Option<&[SpectralField]>,
    n_steps: usize,
    dt: f64,
    scheme: Scheme,
    flow: Flow,
) -> Result<DiscretePath> {
    if let Some(c) = controls {
        if c.len() != n_steps {
            return Err(Error::invalid(
                "controls",
                format!("{} controls for {} steps", c.len(), n_steps),
            ));
        }
    }
    let mut integ = Integrator::new(x.truncation(), dt, scheme, flow)?;
    let mut u = x.clone();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(u.clone());
    for i in 0..n_steps {
        integ.step_controlled(&mut u, controls.map(|c| &c[i]), (i + 1) as f64 * dt)?;
        states.push(u.clone());
    }
    DiscretePath::uniform(0.0, dt, states)
}

/// Unforced deterministic trajectory (`ε = 0`).
pub fn solve_unforced(x: &SpectralField, cfg: &SolverConfig) -> Result<DiscretePath> {
    cfg.validate()?;
    solve_controlled(x, None, cfg.n_steps(), cfg.dt, cfg.scheme, cfg.flow())
}

/// OU trajectory from `z(0) = 0` on the nodes of `n_steps` steps.
pub fn ou_trajectory(
    trunc: TruncationParams,
    spec: &CovarianceSpec,
    epsilon: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<DiscretePath> {
    let mut ou = OuStepper::new(trunc, spec, epsilon, dt)?;
    let mut z = SpectralField::zeros(trunc);
    let mut scratch = SpectralField::zeros(trunc);
    let mut states = vec![z.clone()];
    for step in 0..n_steps {
        ou.step(&mut z, rng, step as u64, &mut scratch);
        states.push(z.clone());
    }
    DiscretePath::uniform(0.0, dt, states)
}

/// `v = F_x(z)`: the solution of `v' = -Av - B(v + z)`, `v(0) = x`, on the
/// nodes of `z`.
///
/// With the exponential-Euler scheme and `z` the OU process driven by some
/// noise, `v + z` coincides node by node with the exponential-Euler
/// stochastic trajectory driven by the same noise.
pub fn solve_fx(x: &SpectralField, z: &DiscretePath, scheme: Scheme) -> Result<DiscretePath> {
    if z.truncation() != x.truncation() {
        return Err(Error::TruncationMismatch(x.truncation(), z.truncation()));
    }
    let dt = z.dt()?;
    let mut integ = Integrator::new(x.truncation(), dt, scheme, Flow::Forward)?;
    let mut v = x.clone();
    let mut states = Vec::with_capacity(z.len());
    states.push(v.clone());
    for (i, w) in z.states().windows(2).enumerate() {
        integ.step_shifted(&mut v, &w[0], &w[1], z.times()[i + 1])?;
        states.push(v.clone());
    }
    DiscretePath::new(z.times().to_vec(), states)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    pub nonlinear: bool,
    pub seed: u64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 100.0,
            scheme: Scheme::EtdRk2,
            nonlinear: true,
            seed: 0,
        }
    }
}

/// Initial conditions used by [`decay_time`]: the slowest Stokes mode, then
/// random directions with a `|k|^{-1}` spectrum, all on the sphere
/// `‖x‖_H = radius`.
pub fn decay_samples(trunc: TruncationParams, radius: f64, n_samples: usize, seed: u64) -> Vec<SpectralField> {
    let mut out = Vec::with_capacity(n_samples);
    if n_samples == 0 {
        return out;
    }
    let slow = crate::spectral::WaveVector { k1: 1, k2: 0 };
    let mut x = SpectralField::from_modes(trunc, &[(slow, num_complex::Complex64::new(1.0, 0.0))])
        .expect("(1, 0) is always retained");
    x.scale(radius / x.norm_h());
    out.push(x);
    let mut gauss = vec![0.0; trunc.mode_count()];
    for i in 1..n_samples {
        RngStream::new(seed, i as u64).gaussians(0, &mut gauss);
        let mut x = SpectralField::from_gaussians(trunc, &gauss, 1.0);
        x.scale(radius / x.norm_h());
        out.push(x);
    }
    out
}

/// Time after which every sampled unforced trajectory started on the sphere
/// of radius `radius` has `‖u‖_H < λ/2`: the first time each falls below
/// `λ`, with a factor-2 margin on the level. Zero when `λ ≥ radius`.
pub fn decay_time(trunc: TruncationParams, radius: f64, lambda: f64, n_samples: usize, opts: &DecayOptions) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    if lambda >= radius {
        return Ok(0.0);
    }
    let level = 0.5 * lambda;
    let flow = if opts.nonlinear { Flow::Forward } else { Flow::Linear };
    let mut integ = Integrator::new(trunc, opts.dt, opts.scheme, flow)?;
    let max_steps = (opts.t_max / opts.dt).ceil() as usize;
    let mut worst: f64 = 0.0;
    for x in decay_samples(trunc, radius, n_samples, opts.seed) {
        let mut u = x;
        let mut hit = None;
        for j in 1..=max_steps {
            integ.step_controlled(&mut u, None, j as f64 * opts.dt)?;
            if u.norm_h() < level {
                hit = Some(j as f64 * opts.dt);
                break;
            }
        }
        match hit {
            Some(t) => worst = worst.max(t),
            None => {
                return Err(Error::NoConvergence(format!(
                    "|u|_H still above {level} at t_max = {}",
                    opts.t_max
                )))
            }
        }
    }
    Ok(worst)
}

//! Monte-Carlo drivers: energy balance, stationary moments and tails, ball
//! probabilities around target paths, and reproducible run records.
//!
//! Trajectory `j` of the `e`-th noise level draws from the counter stream
//! `(seed, e·2³² + j)`. Per-trajectory results are collected in index order
//! and reduced with compensated sums, so results do not depend on the number
//! of worker threads.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{action_it, ControlPath};
use crate::dynamics::{decay_time, steps_for, DecayOptions, DiscretePath, Flow, Scheme, SolverConfig, StochasticSolver};
use crate::error::{Error, Result};
use crate::noise::{stationary_sample, trace_q, CovarianceSpec, NoiseSchedule, ScheduleFlags};
use crate::rng::RngStream;
use crate::spectral::{SpectralField, TruncationParams};
use crate::stats::{compensated_sum, fit_line, wilson_interval, Estimate, LineFit};

pub const SCHEMA_VERSION: u32 = 1;

const INITIAL_STREAM: u64 = u64::MAX;
const TARGET_STREAM: u64 = u64::MAX - 1;
const START_STREAM_BASE: u64 = u64::MAX - 1024;
/// Stationary samples handled per parallel task.
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    EnergyBalance,
    Invariant,
    Tails,
    Ldp,
    Uniformity,
    Oracle,
    ActionGrowth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusScaling {
    /// Radii are used as given.
    #[default]
    Absolute,
    /// Radius `r` means `r·√ε` at noise level `ε`.
    SqrtEpsilon,
}

fn default_initial_norm() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    0.2
}

fn default_starts() -> usize {
    5
}

fn default_start_radius() -> f64 {
    0.1
}

fn default_hold_segments() -> usize {
    4
}

fn default_hold_radius() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    /// Strictly decreasing noise levels.
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    pub beta: f64,
    pub trunc: TruncationParams,
    pub solver: SolverConfig,
    pub trajectories: usize,
    /// Time discarded before sampling the stationary law. `None` uses five
    /// times the decay time from `initial_norm` to `initial_norm/100`.
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub seed: u64,
    /// `‖x‖_H` of the initial condition (a fixed random direction).
    #[serde(default = "default_initial_norm")]
    pub initial_norm: f64,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub radius_scaling: RadiusScaling,
    /// Targets `‖x‖²_V` for action-based experiments; for `ldp` and
    /// `uniformity` the first entry is the control cost of the target path.
    #[serde(default)]
    pub targets: Vec<f64>,
    /// Ball radius around target paths.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_starts")]
    pub uniformity_starts: usize,
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    /// Number `N` of segments of length `t_final` for `action_growth`.
    #[serde(default = "default_hold_segments")]
    pub hold_segments: usize,
    /// Paths in `action_growth` keep `‖u(t_i)‖_H = hold_radius` at every node.
    #[serde(default = "default_hold_radius")]
    pub hold_radius: f64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.trunc.validate()?;
        self.solver.validate()?;
        self.schedule.validate()?;
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.epsilon_list.is_empty() {
            return Err(Error::invalid("epsilon_list", "must not be empty"));
        }
        if self.epsilon_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::invalid("epsilon_list", "entries must be positive"));
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("epsilon_list", "must be strictly decreasing"));
        }
        if self.trajectories == 0 {
            return Err(Error::invalid("trajectories", "must be positive"));
        }
        if let Some(b) = self.burn_in {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::invalid("burn_in", format!("must be non-negative, got {b}")));
            }
            if b > 0.0 {
                steps_for(b, self.solver.dt).map_err(|_| {
                    Error::invalid("burn_in", format!("{b} is not a multiple of dt = {}", self.solver.dt))
                })?;
            }
        }
        if !(self.initial_norm.is_finite() && self.initial_norm >= 0.0) {
            return Err(Error::invalid("initial_norm", "must be non-negative"));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("radii", "entries must be positive"));
        }
        if self.targets.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("targets", "entries must be non-negative"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if !(self.start_radius.is_finite() && self.start_radius >= 0.0) {
            return Err(Error::invalid("start_radius", "must be non-negative"));
        }
        if self.hold_segments == 0 {
            return Err(Error::invalid("hold_segments", "must be positive"));
        }
        if !(self.hold_radius.is_finite() && self.hold_radius > 0.0) {
            return Err(Error::invalid("hold_radius", "must be positive"));
        }
        Ok(())
    }

    pub fn covariance(&self, epsilon: f64) -> Result<CovarianceSpec> {
        self.schedule.covariance(epsilon, self.beta)
    }

    pub fn flags(&self) -> ScheduleFlags {
        self.schedule.flags(self.beta)
    }

    /// Deterministic initial condition with `‖x‖_H = initial_norm`.
    pub fn initial_state(&self) -> SpectralField {
        scaled_direction(self.trunc, self.seed, INITIAL_STREAM, self.initial_norm, 0.0)
    }

    /// Random direction used to build targets, normalized in `‖·‖_r`.
    pub fn target_direction(&self, r: f64) -> SpectralField {
        scaled_direction(self.trunc, self.seed, TARGET_STREAM, 1.0, r)
    }

    /// Starts in `B_H(0, start_radius)` for the uniformity probe.
    pub fn uniformity_start_states(&self) -> Vec<SpectralField> {
        (0..self.uniformity_starts)
            .map(|i| {
                let frac = (i + 1) as f64 / self.uniformity_starts as f64;
                scaled_direction(self.trunc, self.seed, START_STREAM_BASE + i as u64, self.start_radius * frac, 0.0)
            })
            .collect()
    }

    pub fn radii_for(&self, epsilon: f64) -> Vec<f64> {
        match self.radius_scaling {
            RadiusScaling::Absolute => self.radii.clone(),
            RadiusScaling::SqrtEpsilon => self.radii.iter().map(|r| r * epsilon.sqrt()).collect(),
        }
    }

    /// The configured burn-in, or five decay times from `initial_norm` down
    /// to one percent of it, rounded up to a multiple of `dt`.
    pub fn burn_in_time(&self) -> Result<f64> {
        if let Some(b) = self.burn_in {
            return Ok(b);
        }
        let r = if self.initial_norm > 0.0 { self.initial_norm } else { 1.0 };
        let opts = DecayOptions {
            dt: self.solver.dt,
            scheme: self.solver.scheme,
            nonlinear: self.solver.nonlinear,
            seed: self.seed,
            ..Default::default()
        };
        let t1 = decay_time(self.trunc, r, 0.01 * r, 8, &opts)?;
        Ok((5.0 * t1 / self.solver.dt).ceil() * self.solver.dt)
    }

    fn stream(&self, eps_index: usize, trajectory: usize) -> RngStream {
        RngStream::new(self.seed, ((eps_index as u64) << 32) | trajectory as u64)
    }
}

fn scaled_direction(trunc: TruncationParams, seed: u64, stream: u64, norm: f64, r: f64) -> SpectralField {
    if norm == 0.0 {
        return SpectralField::zeros(trunc);
    }
    let mut g = vec![0.0; trunc.mode_count()];
    RngStream::new(seed, stream).gaussians(0, &mut g);
    let mut x = SpectralField::from_gaussians(trunc, &g, 1.0);
    x.scale(norm / x.sobolev_norm(r));
    x
}

/// Builds a rayon pool; `threads = 0` uses rayon's default.
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))
}

/// Runs `f(workspace, j)` for `j in 0..n` on the pool and returns the results
/// in index order.
fn par_map<W, T, I, F>(pool: &rayon::ThreadPool, n: usize, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> W + Sync + Send,
    F: Fn(&mut W, usize) -> Result<T> + Sync + Send,
{
    pool.install(|| (0..n).into_par_iter().map_init(&init, |w, j| f(w, j)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalanceReport {
    pub epsilon: f64,
    pub delta: f64,
    pub t: f64,
    /// `‖u(t)‖²_H + 2∫₀ᵗ‖u‖²_V ds` per trajectory.
    pub lhs: Estimate,
    /// `‖x‖²_H + t ε Tr Q`.
    pub rhs: f64,
    pub relative_discrepancy: f64,
    /// Three standard errors of the left side relative to the right side.
    pub relative_error_3sigma: f64,
    pub final_energy: Estimate,
    /// Exact `E‖u(t)‖²_H` when the plan is linear.
    pub oracle_final_energy: Option<f64>,
    /// Fewer than 100 trajectories: the interval is too wide to trust.
    pub insufficient_samples: bool,
}

/// Exact `E‖u(t)‖²_H` for the linear equation started at `x`:
/// `Σ_k |x_k|² e^{−2λt} + εσ²(1 − e^{−2λt})/(2λ)`.
pub fn linear_energy_oracle(x: &SpectralField, spec: &CovarianceSpec, epsilon: f64, t: f64) -> f64 {
    let trunc = x.truncation();
    compensated_sum(x.coeffs().iter().enumerate().map(|(i, a)| {
        let l = trunc.wavevector(i).norm_sq();
        let e2 = (-2.0 * l * t).exp();
        a.norm_sqr() * e2 + epsilon * spec.sigma_sq(l) * (1.0 - e2) / (2.0 * l)
    }))
}

pub fn energy_balance_check(plan: &ExperimentPlan, pool: &rayon::ThreadPool) -> Result<Vec<EnergyBalanceReport>> {
    plan.validate()?;
    let x = plan.initial_state();
    let cfg = plan.solver;
    let n = cfg.n_steps();
    let t = n as f64 * cfg.dt;
    let mut out = Vec::new();
    for (e, &eps) in plan.epsilon_list.iter().enumerate() {
        let spec = plan.covariance(eps)?;
        let solver = StochasticSolver::new(plan.trunc, &spec, eps, cfg.dt, cfg.scheme, cfg.flow())?;
        let per: Vec<(f64, f64)> = par_map(
            pool,
            plan.trajectories,
            || solver.clone(),
            |solver, j| {
                let mut u = x.clone();
                let mut rng = plan.stream(e, j);
                let mut prev = u.sobolev_norm_sq(1.0);
                let mut integral = crate::stats::NeumaierSum::default();
                solver.run(&mut u, &mut rng, 0, n, |_, u| {
                    let v = u.sobolev_norm_sq(1.0);
                    integral.add(0.5 * cfg.dt * (prev + v));
                    prev = v;
                })?;
                let fe = u.norm_h_sq();
                Ok((fe, fe + 2.0 * integral.value()))
            },
        )?;
        let lhs = Estimate::from_samples(&per.iter().map(|p| p.1).collect::<Vec<_>>());
        let final_energy = Estimate::from_samples(&per.iter().map(|p| p.0).collect::<Vec<_>>());
        let rhs = x.norm_h_sq() + t * eps * trace_q(&spec, plan.trunc);
        out.push(EnergyBalanceReport {
            epsilon: eps,
            delta: spec.delta,
            t,
            relative_discrepancy: (lhs.mean - rhs).abs() / rhs,
            relative_error_3sigma: 3.0 * lhs.std_error / rhs,
            lhs,
            rhs,
            final_energy,
            oracle_final_energy: (!cfg.nonlinear).then(|| linear_energy_oracle(&x, &spec, eps, t)),
            insufficient_samples: plan.trajectories < 100,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges; values above the last edge go to the
    /// last bin.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(max: f64, bins: usize) -> Self {
        Self {
            edges: (0..=bins).map(|i| max * i as f64 / bins as f64).collect(),
            counts: vec![0; bins],
        }
    }

    fn add(&mut self, x: f64) {
        let bins = self.counts.len();
        let w = self.edges[bins] / bins as f64;
        let i = ((x / w) as usize).min(bins - 1);
        self.counts[i] += 1;
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub epsilon: f64,
    pub delta: f64,
    pub burn_in: f64,
    /// Time average of `‖x‖²_V`, one sample per trajectory.
    pub moment_v: Estimate,
    pub moment_h: Estimate,
    /// Linear model: `(ε/2) Tr Q` and `Σ_k εσ_k²/(2|k|²)`.
    pub oracle_moment_v: Option<f64>,
    pub oracle_moment_h: Option<f64>,
    /// `(R, fraction of time with ‖x‖_H < R)`.
    pub ball_mass: Vec<(f64, Estimate)>,
    pub histogram_h: Histogram,
    pub histogram_v: Histogram,
    /// First and second halves of the sampling window agree within 5σ.
    pub stationary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub reports: Vec<InvariantReport>,
    pub flags: ScheduleFlags,
    /// `max_ε ∫‖x‖²_V dν_ε` over the plan.
    pub sup_moment_v: f64,
}

pub fn linear_moments(spec: &CovarianceSpec, epsilon: f64, trunc: TruncationParams) -> (f64, f64) {
    let v = 0.5 * epsilon * trace_q(spec, trunc);
    let h = compensated_sum(trunc.wavevectors().map(|k| {
        let l = k.norm_sq();
        epsilon * spec.sigma_sq(l) / (2.0 * l)
    }));
    (v, h)
}

struct TrajectoryAverages {
    v: f64,
    h: f64,
    v_first: f64,
    v_second: f64,
    in_ball: Vec<f64>,
    hist_h: Histogram,
    hist_v: Histogram,
}

pub fn ergodic_sampler(plan: &ExperimentPlan, pool: &rayon::ThreadPool) -> Result<InvariantSummary> {
    plan.validate()?;
    let cfg = plan.solver;
    let burn_in = plan.burn_in_time()?;
    let burn_steps = if burn_in > 0.0 { steps_for(burn_in, cfg.dt)? } else { 0 };
    let n = cfg.n_steps();
    let x = plan.initial_state();
    let mut reports = Vec::new();
    for (e, &eps) in plan.epsilon_list.iter().enumerate() {
        let spec = plan.covariance(eps)?;
        let (lin_v, lin_h) = linear_moments(&spec, eps, plan.trunc);
        let radii = plan.radii_for(eps);
        // Histogram ranges from the linear stationary scale.
        let (max_h, max_v) = (6.0 * lin_h.sqrt(), 6.0 * lin_v.sqrt());
        let solver = StochasticSolver::new(plan.trunc, &spec, eps, cfg.dt, cfg.scheme, cfg.flow())?;
        let per: Vec<TrajectoryAverages> = par_map(
            pool,
            plan.trajectories,
            || solver.clone(),
            |solver, j| {
                let mut u = x.clone();
                let mut rng = plan.stream(e, j);
                solver.run(&mut u, &mut rng, 0, burn_steps, |_, _| {})?;
                let mut vs = Vec::with_capacity(n / cfg.record_stride + 1);
                let mut hs = Vec::with_capacity(vs.capacity());
                solver.run(&mut u, &mut rng, burn_steps as u64, n, |k, u| {
                    if k % cfg.record_stride == 0 {
                        vs.push(u.sobolev_norm_sq(1.0));
                        hs.push(u.norm_h_sq());
                    }
                })?;
                let m = vs.len() as f64;
                let half = vs.len() / 2;
                let mut hist_h = Histogram::new(max_h, 40);
                let mut hist_v = Histogram::new(max_v, 40);
                for (v, h) in vs.iter().zip(&hs) {
                    hist_h.add(h.sqrt());
                    hist_v.add(v.sqrt());
                }
                Ok(TrajectoryAverages {
                    v: compensated_sum(vs.iter().copied()) / m,
                    h: compensated_sum(hs.iter().copied()) / m,
                    v_first: compensated_sum(vs[..half].iter().copied()) / half.max(1) as f64,
                    v_second: compensated_sum(vs[half..].iter().copied()) / (vs.len() - half) as f64,
                    in_ball: radii
                        .iter()
                        .map(|r| hs.iter().filter(|h| h.sqrt() < *r).count() as f64 / m)
                        .collect(),
                    hist_h,
                    hist_v,
                })
            },
        )?;
        let col = |f: &dyn Fn(&TrajectoryAverages) -> f64| Estimate::from_samples(&per.iter().map(f).collect::<Vec<_>>());
        let first = col(&|a| a.v_first);
        let second = col(&|a| a.v_second);
        let stationary = plan.trajectories < 2 || first.consistent_with(&second, 5.0);
        let mut histogram_h = Histogram::new(max_h, 40);
        let mut histogram_v = Histogram::new(max_v, 40);
        for a in &per {
            histogram_h.merge(&a.hist_h);
            histogram_v.merge(&a.hist_v);
        }
        if !stationary {
            log::warn!("epsilon = {eps}: first and second half of the sampling window differ by more than 5 sigma");
        }
        reports.push(InvariantReport {
            epsilon: eps,
            delta: spec.delta,
            burn_in,
            moment_v: col(&|a| a.v),
            moment_h: col(&|a| a.h),
            oracle_moment_v: (!cfg.nonlinear).then_some(lin_v),
            oracle_moment_h: (!cfg.nonlinear).then_some(lin_h),
            ball_mass: radii
                .iter()
                .enumerate()
                .map(|(i, r)| (*r, Estimate::from_samples(&per.iter().map(|a| a.in_ball[i]).collect::<Vec<_>>())))
                .collect(),
            histogram_h,
            histogram_v,
            stationary,
        });
    }
    let sup_moment_v = reports.iter().map(|r| r.moment_v.mean).fold(0.0, f64::max);
    Ok(InvariantSummary {
        reports,
        flags: plan.flags(),
        sup_moment_v,
    })
}

/// Weights `w_k = ε σ_k²`, one per conjugate pair, such that under the
/// linear stationary law `‖x‖²_V = Σ_k w_k E_k` with independent standard
/// exponentials `E_k`.
pub fn linear_v_norm_weights(spec: &CovarianceSpec, epsilon: f64, trunc: TruncationParams) -> Vec<f64> {
    trunc
        .representatives()
        .map(|i| epsilon * spec.sigma_sq(trunc.wavevector(i).norm_sq()))
        .collect()
}

/// `P(Σ_j w_j E_j > x)` for independent standard exponentials `E_j`.
///
/// The sum is the absorption time of a chain of exponential phases with
/// rates `1/w_j`, so the tail is `e₁ᵀ exp(Sx) 1` for the bidiagonal
/// generator `S`. It is evaluated by uniformization: with `Λ = max 1/w_j`
/// and `P = I + S/Λ`, the tail is `Σ_n Poisson(n; Λx) (Pⁿ1)₁`, a sum of
/// nonnegative terms.
pub fn weighted_exponential_tail(weights: &[f64], x: f64) -> f64 {
    if x <= 0.0 || weights.is_empty() {
        return if x < 0.0 || !weights.is_empty() { 1.0 } else { 0.0 };
    }
    let rates: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    let stay: Vec<f64> = rates.iter().map(|r| 1.0 - r / lambda).collect();
    let mv = lambda * x;
    let n_max = (mv + 12.0 * mv.sqrt() + 60.0).ceil() as usize;
    let ln_mv = mv.ln();
    let m = weights.len();
    let mut v = vec![1.0; m];
    let mut ln_fact = 0.0;
    let mut acc = crate::stats::NeumaierSum::default();
    for n in 0..=n_max {
        if n > 0 {
            ln_fact += (n as f64).ln();
            for j in 0..m {
                let next = if j + 1 < m { v[j + 1] } else { 0.0 };
                v[j] = stay[j] * v[j] + (1.0 - stay[j]) * next;
            }
        }
        let ln_p = -mv + n as f64 * ln_mv - ln_fact;
        if ln_p > -745.0 {
            acc.add(ln_p.exp() * v[0]);
        }
    }
    acc.value().clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub radius: f64,
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub std_error: f64,
    pub wilson_3sigma: (f64, f64),
    /// `−ε log p̂`; `None` when there were no hits.
    pub rate: Option<f64>,
    /// No hits: only the upper Wilson bound is informative.
    pub censored: bool,
    /// Exact tail of the linear stationary law.
    pub oracle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub epsilon: f64,
    pub delta: f64,
    pub points: Vec<TailPoint>,
    /// Least-squares fit of `−ε log p̂` against `R²` over uncensored radii.
    pub rate_fit: Option<LineFit>,
}

/// Estimates `ν_ε(‖x‖_V > R)` for the configured radii.
///
/// The linear model samples its Gaussian stationary law exactly
/// (`trajectories` independent draws). The nonlinear model runs
/// `trajectories` trajectories past the burn-in and uses the fraction of
/// recorded snapshots beyond `R`, with errors taken across trajectories.
pub fn tail_probability(plan: &ExperimentPlan, pool: &rayon::ThreadPool) -> Result<Vec<TailReport>> {
    plan.validate()?;
    if plan.radii.is_empty() {
        return Err(Error::invalid("radii", "tails need at least one radius"));
    }
    let cfg = plan.solver;
    let mut out = Vec::new();
    for (e, &eps) in plan.epsilon_list.iter().enumerate() {
        let spec = plan.covariance(eps)?;
        let radii = plan.radii_for(eps);
        let sq: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let (counts, n_eff, per_traj): (Vec<u64>, u64, Option<Vec<Estimate>>) = if !cfg.nonlinear {
            let chunks = plan.trajectories.div_ceil(CHUNK);
            let per: Vec<Vec<u64>> = par_map(
                pool,
                chunks,
                || (Vec::new(), SpectralField::zeros(plan.trunc)),
                |(gauss, x), c| {
                    let mut hits = vec![0u64; sq.len()];
                    for j in c * CHUNK..((c + 1) * CHUNK).min(plan.trajectories) {
                        stationary_sample(plan.trunc, &spec, eps, &mut plan.stream(e, j), 0, gauss, x);
                        let v = x.sobolev_norm_sq(1.0);
                        for (h, r2) in hits.iter_mut().zip(&sq) {
                            *h += (v > *r2) as u64;
                        }
                    }
                    Ok(hits)
                },
            )?;
            let mut counts = vec![0u64; sq.len()];
            for h in per {
                for (a, b) in counts.iter_mut().zip(h) {
                    *a += b;
                }
            }
            (counts, plan.trajectories as u64, None)
        } else {
            let burn_in = plan.burn_in_time()?;
            let burn_steps = if burn_in > 0.0 { steps_for(burn_in, cfg.dt)? } else { 0 };
            let n = cfg.n_steps();
            let x = plan.initial_state();
            let solver = StochasticSolver::new(plan.trunc, &spec, eps, cfg.dt, cfg.scheme, cfg.flow())?;
            let per: Vec<(Vec<u64>, u64)> = par_map(
                pool,
                plan.trajectories,
                || solver.clone(),
                |solver, j| {
                    let mut u = x.clone();
                    let mut rng = plan.stream(e, j);
                    solver.run(&mut u, &mut rng, 0, burn_steps, |_, _| {})?;
                    let mut hits = vec![0u64; sq.len()];
                    let mut m = 0u64;
                    solver.run(&mut u, &mut rng, burn_steps as u64, n, |k, u| {
                        if k % cfg.record_stride == 0 {
                            let v = u.sobolev_norm_sq(1.0);
                            for (h, r2) in hits.iter_mut().zip(&sq) {
                                *h += (v > *r2) as u64;
                            }
                            m += 1;
                        }
                    })?;
                    Ok((hits, m))
                },
            )?;
            let m = per[0].1;
            let mut counts = vec![0u64; sq.len()];
            for (h, _) in &per {
                for (a, b) in counts.iter_mut().zip(h) {
                    *a += b;
                }
            }
            let est = (0..sq.len())
                .map(|i| Estimate::from_samples(&per.iter().map(|(h, m)| h[i] as f64 / *m as f64).collect::<Vec<_>>()))
                .collect();
            (counts, m * plan.trajectories as u64, Some(est))
        };
        let weights = (!cfg.nonlinear).then(|| linear_v_norm_weights(&spec, eps, plan.trunc));
        let points: Vec<TailPoint> = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let hits = counts[i];
                let p = hits as f64 / n_eff as f64;
                let se = match &per_traj {
                    Some(est) => est[i].std_error,
                    None => (p * (1.0 - p) / n_eff as f64).sqrt(),
                };
                let expected = weights.as_ref().map(|w| weighted_exponential_tail(w, r * r));
                if let Some(q) = expected {
                    if q * (n_eff as f64) < 10.0 {
                        log::warn!("epsilon = {eps}, R = {r}: expected hit count {:.1} < 10", q * n_eff as f64);
                    }
                }
                TailPoint {
                    radius: r,
                    hits,
                    n: n_eff,
                    p_hat: p,
                    std_error: se,
                    wilson_3sigma: wilson_interval(hits, n_eff, 3.0),
                    rate: (hits > 0).then(|| -eps * p.ln()),
                    censored: hits == 0,
                    oracle: expected,
                }
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter_map(|p| p.rate.map(|r| (p.radius * p.radius, r)))
            .unzip();
        out.push(TailReport {
            epsilon: eps,
            delta: spec.delta,
            points,
            rate_fit: fit_line(&xs, &ys).ok(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallPoint {
    pub epsilon: f64,
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub std_error: f64,
    /// `−ε log p̂`; `None` when censored.
    pub rate: Option<f64>,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallReport {
    /// `I_T(φ)` of the target path.
    pub action: f64,
    pub delta: f64,
    pub points: Vec<BallPoint>,
    /// Fit of `−ε log p̂` against `ε`; the intercept extrapolates the rate.
    pub rate_fit: Option<LineFit>,
}

/// `P(sup_i ‖u_ε(t_i) − φ(t_i)‖_H < δ)` for trajectories started at `φ(0)`,
/// checked on every node of `φ`, whose step must equal the solver step.
pub fn ball_probability(plan: &ExperimentPlan, target: &DiscretePath, delta: f64, pool: &rayon::ThreadPool) -> Result<BallReport> {
    plan.validate()?;
    let dt = target.dt()?;
    let cfg = plan.solver;
    if (dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::invalid(
            "target",
            format!("target step {dt} differs from solver step {}", cfg.dt),
        ));
    }
    if target.truncation() != plan.trunc {
        return Err(Error::TruncationMismatch(plan.trunc, target.truncation()));
    }
    let action = action_it(target)?.value;
    let n = target.len() - 1;
    let mut points = Vec::new();
    for (e, &eps) in plan.epsilon_list.iter().enumerate() {
        let spec = plan.covariance(eps)?;
        let solver = StochasticSolver::new(plan.trunc, &spec, eps, cfg.dt, cfg.scheme, cfg.flow())?;
        let hits: Vec<bool> = par_map(
            pool,
            plan.trajectories,
            || solver.clone(),
            |solver, j| {
                let mut u = target.first().clone();
                let mut rng = plan.stream(e, j);
                let mut inside = true;
                for i in 0..n {
                    solver.run(&mut u, &mut rng, i as u64, 1, |_, _| {})?;
                    if u.distance_h(&target.states()[i + 1]) >= delta {
                        inside = false;
                        break;
                    }
                }
                Ok(inside)
            },
        )?;
        let h = hits.iter().filter(|b| **b).count() as u64;
        let m = hits.len() as u64;
        let p = h as f64 / m as f64;
        points.push(BallPoint {
            epsilon: eps,
            hits: h,
            n: m,
            p_hat: p,
            std_error: (p * (1.0 - p) / m as f64).sqrt(),
            rate: (h > 0).then(|| -eps * p.ln()),
            censored: h == 0,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().filter_map(|p| p.rate.map(|r| (p.epsilon, r))).unzip();
    Ok(BallReport {
        action,
        delta,
        points,
        rate_fit: fit_line(&xs, &ys).ok(),
    })
}

/// Target path for `ldp`: the controlled trajectory from the initial state
/// driven by a constant control of cost `targets[0]` (zero if unset).
pub fn ldp_target(plan: &ExperimentPlan) -> Result<(DiscretePath, ControlPath)> {
    let cfg = plan.solver;
    let n = cfg.n_steps();
    let t = n as f64 * cfg.dt;
    let cost = plan.targets.first().copied().unwrap_or(0.0);
    let psi = plan.target_direction(0.0).scaled((2.0 * cost / t).sqrt());
    let control = ControlPath::new(cfg.dt, vec![psi; n])?;
    let flow = if cfg.nonlinear { Flow::Forward } else { Flow::Linear };
    let path = crate::dynamics::solve_controlled(&plan.initial_state(), Some(&control.controls), n, cfg.dt, Scheme::EtdRk2, flow)?;
    Ok((path, control))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    /// One ball-probability report per start.
    pub per_start: Vec<BallReport>,
    /// Per `ε`: `max − min` of `p̂` across starts.
    pub p_spread: Vec<(f64, f64)>,
    /// Per `ε`: `max − min` of `−ε log p̂` across uncensored starts.
    pub rate_spread: Vec<(f64, Option<f64>)>,
    /// Largest `‖u^x(T) − u^y(T)‖_H / ‖x − y‖_H` over pairs of starts under
    /// the shared control.
    pub max_continuity_ratio: f64,
}

/// Ball probabilities around the controlled trajectory from each start, all
/// driven by the same control.
pub fn uniformity_probe(
    plan: &ExperimentPlan,
    starts: &[SpectralField],
    control: &ControlPath,
    delta: f64,
    pool: &rayon::ThreadPool,
) -> Result<UniformityReport> {
    if starts.is_empty() {
        return Err(Error::invalid("starts", "need at least one start"));
    }
    let mut per_start = Vec::new();
    let mut finals = Vec::new();
    for y in starts {
        let target = control.replay(y)?;
        finals.push(target.last().clone());
        per_start.push(ball_probability(plan, &target, delta, pool)?);
    }
    let mut p_spread = Vec::new();
    let mut rate_spread = Vec::new();
    for (i, &eps) in plan.epsilon_list.iter().enumerate() {
        let ps: Vec<f64> = per_start.iter().map(|r| r.points[i].p_hat).collect();
        let max = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        p_spread.push((eps, max - min));
        let rates: Option<Vec<f64>> = per_start.iter().map(|r| r.points[i].rate).collect();
        rate_spread.push((
            eps,
            rates.map(|r| {
                r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - r.iter().cloned().fold(f64::INFINITY, f64::min)
            }),
        ));
    }
    let mut max_continuity_ratio: f64 = 0.0;
    for a in 0..starts.len() {
        for b in a + 1..starts.len() {
            let d0 = starts[a].distance_h(&starts[b]);
            if d0 > 0.0 {
                max_continuity_ratio = max_continuity_ratio.max(finals[a].distance_h(&finals[b]) / d0);
            }
        }
    }
    Ok(UniformityReport {
        per_start,
        p_spread,
        rate_spread,
        max_continuity_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldActionPoint {
    pub segments: usize,
    pub t: f64,
    /// Smallest action among the probed paths.
    pub min_action: f64,
    /// Mean and spread over the random rotating paths.
    pub rotating: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrowthReport {
    pub hold_radius: f64,
    pub points: Vec<HeldActionPoint>,
    /// `min_action` against `t`.
    pub min_rate: Option<LineFit>,
}

/// Action spent by paths that stay on the sphere `‖u‖_H = hold_radius` for
/// `n·t_final`, `n = 1..=hold_segments`.
///
/// The probed family is the constant lowest shear mode (where `B` vanishes,
/// so its action is `½ t ‖Au‖²_H`) and `trajectories` paths
/// `u(t) = λ(cos ωt a + sin ωt b)` with random `H`-orthonormal `a, b` and
/// `ω ∈ [0, 2π/t_final)`. The report is empirical: it exhibits linear growth
/// in the holding time and does not certify a minimum.
pub fn action_growth(plan: &ExperimentPlan, pool: &rayon::ThreadPool) -> Result<ActionGrowthReport> {
    let trunc = plan.trunc;
    let (dt, seg) = (plan.solver.dt, plan.solver.n_steps());
    let nodes = plan.hold_segments * seg + 1;
    let lambda = plan.hold_radius;
    let prefix = |integrand: &[f64]| -> Vec<f64> {
        (1..=plan.hold_segments)
            .map(|n| dt * compensated_sum(integrand[..n * seg].iter().copied()))
            .collect()
    };
    let shear = SpectralField::from_modes(trunc, &[(crate::spectral::WaveVector::new(1, 0)?, 1.0.into())])?;
    let shear = shear.scaled(lambda / shear.norm_h());
    let constant = DiscretePath::uniform(0.0, dt, vec![shear; nodes])?;
    let shear_actions = prefix(&action_it(&constant)?.integrand);
    let rotating: Vec<Vec<f64>> = par_map(
        pool,
        plan.trajectories,
        || vec![0.0; trunc.mode_count()],
        |g, j| {
            let mut rng = plan.stream(0, j);
            rng.gaussians(0, g);
            let mut a = SpectralField::from_gaussians(trunc, g, 1.0);
            a.scale(1.0 / a.norm_h());
            rng.gaussians(1, g);
            let mut b = SpectralField::from_gaussians(trunc, g, 1.0);
            b.axpy(-b.inner(&a), &a);
            b.scale(1.0 / b.norm_h());
            let omega = 2.0 * std::f64::consts::PI * rng.uniform(2, 0) / plan.solver.t_final;
            let states = (0..nodes)
                .map(|i| {
                    let th = omega * i as f64 * dt;
                    let mut u = a.scaled(lambda * th.cos());
                    u.axpy(lambda * th.sin(), &b);
                    u
                })
                .collect();
            Ok(prefix(&action_it(&DiscretePath::uniform(0.0, dt, states)?)?.integrand))
        },
    )?;
    let points: Vec<HeldActionPoint> = (0..plan.hold_segments)
        .map(|n| {
            let samples: Vec<f64> = rotating.iter().map(|r| r[n]).collect();
            let min_action = samples.iter().copied().fold(shear_actions[n], f64::min);
            HeldActionPoint {
                segments: n + 1,
                t: (n + 1) as f64 * plan.solver.t_final,
                min_action,
                rotating: Estimate::from_samples(&samples),
            }
        })
        .collect();
    let min_rate = (points.len() >= 2)
        .then(|| {
            let t: Vec<f64> = points.iter().map(|p| p.t).collect();
            let a: Vec<f64> = points.iter().map(|p| p.min_action).collect();
            fit_line(&t, &a)
        })
        .transpose()?;
    Ok(ActionGrowthReport {
        hold_radius: lambda,
        points,
        min_rate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub observable: String,
    pub params: BTreeMap<String, f64>,
    #[serde(with = "crate::stats::extended_float")]
    pub estimate: f64,
    #[serde(with = "crate::stats::extended_float")]
    pub std_error: f64,
    pub n_samples: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ObservableEstimate {
    fn new(observable: &str, params: &[(&str, f64)], est: Estimate) -> Self {
        Self {
            observable: observable.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            estimate: est.mean,
            std_error: est.std_error,
            n_samples: est.n_samples,
            flags: Vec::new(),
        }
    }

    fn flag(mut self, on: bool, name: &str) -> Self {
        if on {
            self.flags.push(name.to_string());
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub code_version: String,
    pub plan: ExperimentPlan,
    pub threads: usize,
    pub flags: ScheduleFlags,
    pub estimates: Vec<ObservableEstimate>,
    pub wall_ms: u64,
}

impl RunRecord {
    /// Bit-exact equality of all estimates.
    pub fn same_estimates(&self, other: &RunRecord) -> bool {
        self.estimates.len() == other.estimates.len()
            && self.estimates.iter().zip(&other.estimates).all(|(a, b)| {
                a.observable == b.observable
                    && a.params == b.params
                    && a.estimate.to_bits() == b.estimate.to_bits()
                    && a.std_error.to_bits() == b.std_error.to_bits()
                    && a.n_samples == b.n_samples
            })
    }

    /// Every pair of matching estimates agrees within `sigmas` combined
    /// standard errors.
    pub fn consistent_with(&self, other: &RunRecord, sigmas: f64) -> bool {
        self.estimates.len() == other.estimates.len()
            && self.estimates.iter().zip(&other.estimates).all(|(a, b)| {
                let se = a.std_error.hypot(b.std_error);
                a.observable == b.observable && (a.estimate == b.estimate || (a.estimate - b.estimate).abs() <= sigmas * se)
            })
    }
}

fn binomial(p: f64, n: u64) -> Estimate {
    Estimate {
        mean: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        n_samples: n,
    }
}

/// Runs `plan` on `threads` workers (`0`: rayon default) and collects its
/// observables.
pub fn run_plan(plan: &ExperimentPlan, threads: usize) -> Result<RunRecord> {
    plan.validate()?;
    let pool = thread_pool(threads)?;
    let start = Instant::now();
    let mut est = Vec::new();
    match plan.kind {
        ExperimentKind::Simulate => {
            let x = plan.initial_state();
            let cfg = plan.solver;
            for (e, &eps) in plan.epsilon_list.iter().enumerate() {
                let spec = plan.covariance(eps)?;
                let solver = StochasticSolver::new(plan.trunc, &spec, eps, cfg.dt, cfg.scheme, cfg.flow())?;
                let per: Vec<(f64, f64)> = par_map(
                    &pool,
                    plan.trajectories,
                    || solver.clone(),
                    |solver, j| {
                        let mut u = x.clone();
                        solver.run(&mut u, &mut plan.stream(e, j), 0, cfg.n_steps(), |_, _| {})?;
                        Ok((u.norm_h_sq(), u.sobolev_norm_sq(1.0)))
                    },
                )?;
                let p = [("epsilon", eps), ("delta", spec.delta), ("t", cfg.t_final)];
                est.push(ObservableEstimate::new(
                    "final_energy_h",
                    &p,
                    Estimate::from_samples(&per.iter().map(|v| v.0).collect::<Vec<_>>()),
                ));
                est.push(ObservableEstimate::new(
                    "final_energy_v",
                    &p,
                    Estimate::from_samples(&per.iter().map(|v| v.1).collect::<Vec<_>>()),
                ));
            }
        }
        ExperimentKind::EnergyBalance => {
            for r in energy_balance_check(plan, &pool)? {
                let p = [("epsilon", r.epsilon), ("delta", r.delta), ("t", r.t), ("rhs", r.rhs)];
                est.push(ObservableEstimate::new("energy_lhs", &p, r.lhs).flag(r.insufficient_samples, "insufficient_samples"));
                est.push(ObservableEstimate::new("energy_rhs", &p[..3], Estimate::exact(r.rhs)));
                let mut fe = ObservableEstimate::new("final_energy_h", &p[..3], r.final_energy);
                if let Some(o) = r.oracle_final_energy {
                    fe.params.insert("oracle".into(), o);
                    fe = fe.flag(!r.final_energy.agrees_with(o, 3.0), "oracle_mismatch");
                }
                est.push(fe);
            }
        }
        ExperimentKind::Invariant => {
            let s = ergodic_sampler(plan, &pool)?;
            for r in &s.reports {
                let p = [("epsilon", r.epsilon), ("delta", r.delta), ("burn_in", r.burn_in)];
                let mut v = ObservableEstimate::new("moment_v", &p, r.moment_v).flag(!r.stationary, "non_stationary");
                if let Some(o) = r.oracle_moment_v {
                    v.params.insert("oracle".into(), o);
                }
                est.push(v);
                let mut h = ObservableEstimate::new("moment_h", &p, r.moment_h).flag(!r.stationary, "non_stationary");
                if let Some(o) = r.oracle_moment_h {
                    h.params.insert("oracle".into(), o);
                }
                est.push(h);
                for (radius, m) in &r.ball_mass {
                    est.push(ObservableEstimate::new("ball_mass", &[("epsilon", r.epsilon), ("R", *radius)], *m));
                }
            }
        }
        ExperimentKind::Tails => {
            for r in tail_probability(plan, &pool)? {
                for pt in &r.points {
                    let mut o = ObservableEstimate::new(
                        "tail_probability",
                        &[("epsilon", r.epsilon), ("delta", r.delta), ("R", pt.radius)],
                        Estimate {
                            mean: pt.p_hat,
                            std_error: pt.std_error,
                            n_samples: pt.n,
                        },
                    )
                    .flag(pt.censored, "censored");
                    if let Some(q) = pt.oracle {
                        o.params.insert("oracle".into(), q);
                    }
                    if pt.censored {
                        o.params.insert("upper_bound".into(), pt.wilson_3sigma.1);
                    }
                    est.push(o);
                }
                if let Some(f) = r.rate_fit {
                    est.push(ObservableEstimate::new(
                        "tail_rate_slope",
                        &[("epsilon", r.epsilon)],
                        Estimate {
                            mean: f.slope,
                            std_error: f.slope_se,
                            n_samples: r.points.len() as u64,
                        },
                    ));
                }
            }
        }
        ExperimentKind::Ldp => {
            let (target, _) = ldp_target(plan)?;
            let r = ball_probability(plan, &target, plan.tolerance, &pool)?;
            push_ball(&mut est, &r, None);
        }
        ExperimentKind::Uniformity => {
            let (_, control) = ldp_target(plan)?;
            let starts = plan.uniformity_start_states();
            let r = uniformity_probe(plan, &starts, &control, plan.tolerance, &pool)?;
            for (i, b) in r.per_start.iter().enumerate() {
                push_ball(&mut est, b, Some(i));
            }
            for (eps, s) in &r.p_spread {
                est.push(ObservableEstimate::new("ball_probability_spread", &[("epsilon", *eps)], Estimate::exact(*s)));
            }
        }
        ExperimentKind::Oracle => {
            let mut lin = plan.clone();
            lin.solver.nonlinear = false;
            for r in energy_balance_check(&lin, &pool)? {
                let o = r.oracle_final_energy.expect("linear plan");
                let e = ObservableEstimate::new("oracle_final_energy_h", &[("epsilon", r.epsilon), ("oracle", o)], r.final_energy)
                    .flag(!r.final_energy.agrees_with(o, 3.0), "oracle_mismatch");
                est.push(e);
            }
            for (e, &eps) in lin.epsilon_list.iter().enumerate() {
                let spec = lin.covariance(eps)?;
                let (oracle_v, _) = linear_moments(&spec, eps, lin.trunc);
                let chunks = lin.trajectories.div_ceil(CHUNK);
                let sums: Vec<Vec<f64>> = par_map(
                    &pool,
                    chunks,
                    || (Vec::new(), SpectralField::zeros(lin.trunc)),
                    |(g, x), c| {
                        let mut v = Vec::new();
                        for j in c * CHUNK..((c + 1) * CHUNK).min(lin.trajectories) {
                            stationary_sample(lin.trunc, &spec, eps, &mut lin.stream(e, j), 0, g, x);
                            v.push(x.sobolev_norm_sq(1.0));
                        }
                        Ok(v)
                    },
                )?;
                let all: Vec<f64> = sums.into_iter().flatten().collect();
                let m = Estimate::from_samples(&all);
                est.push(
                    ObservableEstimate::new("oracle_stationary_moment_v", &[("epsilon", eps), ("oracle", oracle_v)], m)
                        .flag(!m.agrees_with(oracle_v, 3.0), "oracle_mismatch"),
                );
            }
            if !lin.radii.is_empty() {
                for r in tail_probability(&lin, &pool)? {
                    for pt in &r.points {
                        let q = pt.oracle.expect("linear plan");
                        let e = binomial(pt.p_hat, pt.n);
                        let ok = (pt.p_hat - q).abs() <= 3.0 * (q * (1.0 - q) / pt.n as f64).sqrt();
                        est.push(
                            ObservableEstimate::new("oracle_tail_probability", &[("epsilon", r.epsilon), ("R", pt.radius), ("oracle", q)], e)
                                .flag(!ok, "oracle_mismatch"),
                        );
                    }
                }
            }
        }
        ExperimentKind::ActionGrowth => {
            let r = action_growth(plan, &pool)?;
            for p in &r.points {
                let params = [("segments", p.segments as f64), ("t", p.t), ("lambda", r.hold_radius)];
                est.push(ObservableEstimate::new("held_action_min", &params, Estimate::exact(p.min_action)));
                est.push(ObservableEstimate::new("held_action_rotating", &params, p.rotating));
            }
            if let Some(f) = r.min_rate {
                est.push(ObservableEstimate::new(
                    "held_action_rate",
                    &[("lambda", r.hold_radius)],
                    Estimate {
                        mean: f.slope,
                        std_error: f.slope_se,
                        n_samples: r.points.len() as u64,
                    },
                ));
            }
        }
    }
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        plan: plan.clone(),
        threads: pool.current_num_threads(),
        flags: plan.flags(),
        estimates: est,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

fn push_ball(est: &mut Vec<ObservableEstimate>, r: &BallReport, start: Option<usize>) {
    for p in &r.points {
        let mut params = vec![("epsilon", p.epsilon), ("delta", r.delta), ("action", r.action)];
        if let Some(s) = start {
            params.push(("start", s as f64));
        }
        est.push(ObservableEstimate::new("ball_probability", &params, binomial(p.p_hat, p.n)).flag(p.censored, "censored"));
    }
}

/// Re-executes the plan stored in `record` on `threads` workers (`None`:
/// the recorded count).
pub fn rerun(record: &RunRecord, threads: Option<usize>) -> Result<RunRecord> {
    if record.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(
            "schema_version",
            format!("record has version {}, this build reads {}", record.schema_version, SCHEMA_VERSION),
        ));
    }
    run_plan(&record.plan, threads.unwrap_or(record.threads))
}

//! Discrete action functionals, the quasipotential and path constructions.
//!
//! A path `u_0, …, u_N` on a uniform grid of step `dt` has Hamiltonian
//! samples on the midpoints,
//!
//! ```text
//! H_i = (u_{i+1} − u_i)/dt + A ū_i + B(ū_i),   ū_i = (u_i + u_{i+1})/2,
//! ```
//!
//! and action `I = (dt/2) Σ_i ‖H_i‖²_H`. Because `⟨B(ū), Aū⟩ = 0` this
//! discretization satisfies the lower-bound identity exactly:
//!
//! ```text
//! I = (dt/2) Σ_i ‖(u_{i+1} − u_i)/dt − A ū_i + B(ū_i)‖² + ‖u_N‖²_V − ‖u_0‖²_V.
//! ```
//!
//! Concatenating paths shares the junction node, so actions of the pieces add
//! up to the action of the whole.

use serde::{Deserialize, Serialize};

use crate::dynamics::{solve_controlled, steps_for, DiscretePath, Flow, Scheme};
use crate::error::{Error, Result};
use crate::spectral::{Advection, SpectralField, TruncationParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub value: f64,
    /// `½‖H_i‖²` on each interval.
    pub integrand: Vec<f64>,
    pub dt: f64,
}

fn check_path(u: &DiscretePath) -> Result<f64> {
    if u.len() < 3 {
        return Err(Error::invalid("path", format!("need at least 3 nodes, got {}", u.len())));
    }
    u.dt()
}

/// `H_i` on every interval for advection sign `flow`.
fn hamiltonian_samples(u: &DiscretePath, flow: Flow, adv: &mut Advection) -> Result<(Vec<SpectralField>, f64)> {
    let dt = check_path(u)?;
    let trunc = u.truncation();
    let mut bbar = SpectralField::zeros(trunc);
    let mut out = Vec::with_capacity(u.len() - 1);
    for w in u.states().windows(2) {
        let mut mid = &w[0] + &w[1];
        mid.scale(0.5);
        let mut h = &w[1] - &w[0];
        h.scale(1.0 / dt);
        h.axpy(1.0, &mid.stokes_apply(1.0));
        if flow != Flow::Linear {
            adv.nonlinearity_into(&mid, &mut bbar);
            h.axpy(flow.sign(), &bbar);
        }
        out.push(h);
    }
    Ok((out, dt))
}

/// `H(u) = u' + Au + B(u)` sampled on the midpoints of the grid.
pub fn hamiltonian_of_path(u: &DiscretePath) -> Result<DiscretePath> {
    let mut adv = Advection::new(u.truncation());
    let (h, dt) = hamiltonian_samples(u, Flow::Forward, &mut adv)?;
    DiscretePath::uniform(u.t_start() + 0.5 * dt, dt, h)
}

fn action_with(u: &DiscretePath, flow: Flow) -> Result<ActionResult> {
    let mut adv = Advection::new(u.truncation());
    let (h, dt) = hamiltonian_samples(u, flow, &mut adv)?;
    let integrand: Vec<f64> = h.iter().map(|h| 0.5 * h.norm_h_sq()).collect();
    let value = dt * crate::stats::compensated_sum(integrand.iter().copied());
    Ok(ActionResult { value, integrand, dt })
}

/// `I_T(u) = ½∫‖u' + Au + B(u)‖²_H dt`.
pub fn action_it(u: &DiscretePath) -> Result<ActionResult> {
    action_with(u, Flow::Forward)
}

/// `J_T(z) = ½∫‖z' + Az‖²_H dt`.
pub fn action_jt(z: &DiscretePath) -> Result<ActionResult> {
    action_with(z, Flow::Linear)
}

/// `U(x) = ‖x‖²_V`. Every truncated field lies in `V`, so this is always
/// finite; for rough inputs it grows without bound as the truncation is
/// refined.
pub fn quasipotential_exact(x: &SpectralField) -> f64 {
    x.sobolev_norm_sq(1.0)
}

/// Terms of the discrete lower-bound identity for one path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub action: f64,
    /// `‖u_N‖²_V − ‖u_0‖²_V`.
    pub v_increase: f64,
    /// `(dt/2) Σ ‖(u_{i+1}−u_i)/dt − Aū_i + B(ū_i)‖²`, the non-negative slack.
    pub slack: f64,
    /// `action − v_increase − slack`; zero up to rounding.
    pub identity_defect: f64,
    pub dt: f64,
}

impl LowerBound {
    /// `action − v_increase`, non-negative up to `identity_defect`.
    pub fn gap(&self) -> f64 {
        self.action - self.v_increase
    }
}

pub fn lower_bound_gap(u: &DiscretePath) -> Result<LowerBound> {
    let action = action_it(u)?;
    let dt = action.dt;
    let mut adv = Advection::new(u.truncation());
    let mut bbar = SpectralField::zeros(u.truncation());
    let mut slack = crate::stats::NeumaierSum::default();
    for w in u.states().windows(2) {
        let mut mid = &w[0] + &w[1];
        mid.scale(0.5);
        let mut r = &w[1] - &w[0];
        r.scale(1.0 / dt);
        r.axpy(-1.0, &mid.stokes_apply(1.0));
        adv.nonlinearity_into(&mid, &mut bbar);
        r.axpy(1.0, &bbar);
        slack.add(0.5 * dt * r.norm_h_sq());
    }
    let v_increase = u.last().sobolev_norm_sq(1.0) - u.first().sobolev_norm_sq(1.0);
    let slack = slack.value();
    Ok(LowerBound {
        action: action.value,
        v_increase,
        slack,
        identity_defect: action.value - v_increase - slack,
        dt,
    })
}

/// Path from `v(T)` to `x` obtained by running `v' = −Av + B(v)` from
/// `v(0) = x` and reversing time: `u(t) = v(T − t)`. Its action is
/// `‖x‖²_V − ‖v(T)‖²_V` up to the time-stepping error.
pub fn reversed_flow_path(x: &SpectralField, t_final: f64, dt: f64) -> Result<DiscretePath> {
    let n = steps_for(t_final, dt)?;
    let v = solve_controlled(x, None, n, dt, Scheme::EtdRk2, Flow::Reversed)?;
    let mut states = v.into_states();
    states.reverse();
    DiscretePath::uniform(0.0, dt, states)
}

/// Minimal continuous action from 0 to `x` in time `T` for the linear
/// equation: `Σ_k |a_k|² |k|² / (1 − e^{−2|k|²T})`.
pub fn linear_minimal_action(x: &SpectralField, t_final: f64) -> f64 {
    let trunc = x.truncation();
    x.coeffs()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let l = trunc.wavevector(i).norm_sq();
            a.norm_sqr() * l / -(-2.0 * l * t_final).exp_m1()
        })
        .sum()
}

/// Discrete action and its gradient with respect to the interior nodes,
/// in the `H` inner product.
pub fn action_gradient(u: &DiscretePath, flow: Flow) -> Result<(f64, Vec<SpectralField>)> {
    let mut adv = Advection::new(u.truncation());
    action_gradient_with(u.states(), check_path(u)?, flow, &mut adv)
}

fn action_gradient_with(states: &[SpectralField], dt: f64, flow: Flow, adv: &mut Advection) -> Result<(f64, Vec<SpectralField>)> {
    let n = states.len() - 1;
    let s = flow.sign();
    let mut value = crate::stats::NeumaierSum::default();
    let mut hs = Vec::with_capacity(n);
    let mut ks = Vec::with_capacity(n);
    let mut bbar = SpectralField::zeros(states[0].truncation());
    for w in states.windows(2) {
        let mut mid = &w[0] + &w[1];
        mid.scale(0.5);
        let mut h = &w[1] - &w[0];
        h.scale(1.0 / dt);
        h.axpy(1.0, &mid.stokes_apply(1.0));
        if s != 0.0 {
            adv.nonlinearity_into(&mid, &mut bbar);
            h.axpy(s, &bbar);
        }
        value.add(0.5 * dt * h.norm_h_sq());
        // K_i = ½ A H_i + (s/2) DB(ū_i)* H_i
        let mut k = h.stokes_apply(1.0);
        if s != 0.0 {
            k.axpy(s, &adv.linearized_adjoint(&mid, &h));
        }
        k.scale(0.5);
        if !h.is_finite() {
            return Err(Error::BlowUp {
                time: f64::NAN,
                norm: h.norm_h(),
                state: Box::new(mid),
            });
        }
        hs.push(h);
        ks.push(k);
    }
    let grad = (1..n)
        .map(|j| {
            let mut g = &hs[j - 1] - &hs[j];
            g.axpy(dt, &ks[j - 1]);
            g.axpy(dt, &ks[j]);
            g
        })
        .collect();
    Ok((value.value(), grad))
}

/// Exact Hessian of the linear discrete action over the interior nodes,
/// which is tridiagonal in time for every mode.
struct LinearPreconditioner {
    /// Thomas-factorized systems, one per mode: modified super-diagonal and
    /// pivots for each interior node.
    upper: Vec<Vec<f64>>,
    pivot: Vec<Vec<f64>>,
}

impl LinearPreconditioner {
    fn new(trunc: TruncationParams, dt: f64, interior: usize) -> Self {
        let mut upper = Vec::with_capacity(trunc.mode_count());
        let mut pivot = Vec::with_capacity(trunc.mode_count());
        for k in trunc.wavevectors() {
            let l = k.norm_sq();
            let p = 1.0 / dt + 0.5 * l;
            let m = -1.0 / dt + 0.5 * l;
            let diag = dt * (p * p + m * m);
            let off = dt * p * m;
            let mut c = vec![0.0; interior];
            let mut b = vec![0.0; interior];
            for j in 0..interior {
                let prev = if j == 0 { 0.0 } else { off * c[j - 1] };
                b[j] = diag - prev;
                c[j] = off / b[j];
            }
            upper.push(c);
            pivot.push(b);
        }
        Self { upper, pivot }
    }

    fn solve(&self, g: &[SpectralField]) -> Vec<SpectralField> {
        let mut out: Vec<SpectralField> = g.to_vec();
        let n = g.len();
        for mode in 0..self.upper.len() {
            let (c, b) = (&self.upper[mode], &self.pivot[mode]);
            // Off-diagonal entries all equal `c[j]·b[j]`.
            let off = c[0] * b[0];
            let mut y = out[0].coeffs()[mode] / b[0];
            out[0].coeffs_mut()[mode] = y;
            for j in 1..n {
                y = (out[j].coeffs()[mode] - y * off) / b[j];
                out[j].coeffs_mut()[mode] = y;
            }
            for j in (0..n.saturating_sub(1)).rev() {
                let next = out[j + 1].coeffs()[mode];
                out[j].coeffs_mut()[mode] -= next * c[j];
            }
        }
        out
    }
}

fn dot(a: &[SpectralField], b: &[SpectralField]) -> f64 {
    crate::stats::compensated_sum(a.iter().zip(b).map(|(x, y)| x.inner(y)))
}

fn axpy_all(y: &mut [SpectralField], alpha: f64, x: &[SpectralField]) {
    for (a, b) in y.iter_mut().zip(x) {
        a.axpy(alpha, b);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the preconditioned gradient norm drops below
    /// `grad_tol · max(1, action)`.
    pub grad_tol: f64,
    pub memory: usize,
    pub flow: Flow,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-9,
            memory: 8,
            flow: Flow::Forward,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimized {
    pub path: DiscretePath,
    pub action: ActionResult,
    pub iterations: usize,
    pub converged: bool,
    /// Action after each accepted iteration, starting with the initial path.
    pub history: Vec<f64>,
}

/// Local minimum of the discrete action over paths with `u_0 = 0` and
/// `u_N = x_target` on `n_nodes` uniform nodes of `[0, t_final]`.
///
/// Preconditioned L-BFGS with Armijo backtracking; the preconditioner is the
/// exact Hessian of the linear action. `init` (default: the straight line)
/// must have `n_nodes` nodes; its endpoints are replaced by `0` and
/// `x_target`. When the iteration budget runs out the best iterate is
/// returned with `converged = false`.
pub fn minimize_action(
    x_target: &SpectralField,
    t_final: f64,
    n_nodes: usize,
    init: Option<&DiscretePath>,
    opts: &MinimizeOptions,
) -> Result<Minimized> {
    let trunc = x_target.truncation();
    if n_nodes < 3 {
        return Err(Error::invalid("n_nodes", "need at least 3 nodes"));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid("t_final", format!("must be positive, got {t_final}")));
    }
    let dt = t_final / (n_nodes - 1) as f64;
    let mut states: Vec<SpectralField> = match init {
        Some(p) => {
            if p.len() != n_nodes {
                return Err(Error::invalid(
                    "init",
                    format!("initial path has {} nodes, expected {n_nodes}", p.len()),
                ));
            }
            if p.truncation() != trunc {
                return Err(Error::TruncationMismatch(trunc, p.truncation()));
            }
            p.states().to_vec()
        }
        None => (0..n_nodes)
            .map(|i| x_target.scaled(i as f64 / (n_nodes - 1) as f64))
            .collect(),
    };
    states[0] = SpectralField::zeros(trunc);
    states[n_nodes - 1] = x_target.clone();

    let mut adv = Advection::new(trunc);
    let precond = LinearPreconditioner::new(trunc, dt, n_nodes - 2);
    let (mut f, mut g) = action_gradient_with(&states, dt, opts.flow, &mut adv)?;
    let mut history = vec![f];
    let mut mem: std::collections::VecDeque<(Vec<SpectralField>, Vec<SpectralField>, f64)> = Default::default();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let pg = precond.solve(&g);
        let gnorm = dot(&g, &pg).max(0.0).sqrt();
        if gnorm <= opts.grad_tol * f.max(1.0) {
            converged = true;
            break;
        }
        // Two-loop recursion with H0 = preconditioner.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            axpy_all(&mut q, -a, y);
            alphas.push(a);
        }
        let mut d = precond.solve(&q);
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            axpy_all(&mut d, a - b, s);
        }
        for v in &mut d {
            v.scale(-1.0);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            mem.clear();
            d = pg.iter().map(|v| v.scaled(-1.0)).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = states.clone();
            for (t, di) in trial[1..n_nodes - 1].iter_mut().zip(&d) {
                t.axpy(step, di);
            }
            if let Ok((ft, gt)) = action_gradient_with(&trial, dt, opts.flow, &mut adv) {
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            log::debug!("line search stalled at iteration {iterations}, action {f}");
            // No further decrease is representable; treat a tiny gradient as
            // convergence.
            converged = gnorm <= 1e3 * opts.grad_tol * f.max(1.0);
            break;
        };
        assert!(ft <= f, "action increased during minimization: {f} -> {ft}");
        let s: Vec<SpectralField> = (1..n_nodes - 1).map(|j| &trial[j] - &states[j]).collect();
        let y: Vec<SpectralField> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let f_prev = f;
        states = trial;
        f = ft;
        g = gt;
        history.push(f);
        iterations += 1;
        if f_prev - f <= 1e-15 * f.abs() {
            converged = true;
            break;
        }
    }
    let path = DiscretePath::uniform(0.0, dt, states)?;
    let action = action_with(&path, opts.flow)?;
    Ok(Minimized {
        path,
        action,
        iterations,
        converged,
        history,
    })
}

/// Piecewise-constant control on a uniform grid: `controls[i]` acts on
/// `[i·dt, (i+1)·dt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub dt: f64,
    pub controls: Vec<SpectralField>,
    /// `½∫‖φ‖²_H dt`.
    pub cost: f64,
}

impl ControlPath {
    pub fn new(dt: f64, controls: Vec<SpectralField>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::invalid("controls", "empty control path"));
        }
        let cost = 0.5 * dt * crate::stats::compensated_sum(controls.iter().map(|c| c.norm_h_sq()));
        if !cost.is_finite() {
            return Err(Error::invalid("controls", "infinite cost"));
        }
        Ok(Self { dt, controls, cost })
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.controls.len() as f64
    }

    /// Controlled Navier-Stokes trajectory from `start`.
    pub fn replay(&self, start: &SpectralField) -> Result<DiscretePath> {
        solve_controlled(
            start,
            Some(&self.controls),
            self.controls.len(),
            self.dt,
            Scheme::EtdRk2,
            Flow::Forward,
        )
    }

    /// Replays from every start and returns the final distances to
    /// `target`; fails on the first one that misses by more than `tol`.
    pub fn verify(&self, starts: &[SpectralField], target: &SpectralField, tol: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(starts.len());
        for s in starts {
            let d = self.replay(s)?.last().distance_h(target);
            if !(d < tol) {
                return Err(Error::ReplayMissed {
                    distance: d,
                    tolerance: tol,
                });
            }
            out.push(d);
        }
        Ok(out)
    }
}

/// Control that does nothing on `[0, T₁]` and then applies the Hamiltonian
/// of the reversed-flow path to `x` of length `T₂`.
///
/// Any start whose unforced flow is inside `B_H(0, λ)` by `T₁` is steered
/// close to `x`. Fails if the reversed-flow path itself does not start
/// inside `B_H(0, λ)`, i.e. `T₂` is too short.
pub fn control_for_target(x: &SpectralField, lambda: f64, t1: f64, t2: f64, dt: f64) -> Result<ControlPath> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(t1 >= 0.0 && t1.is_finite()) {
        return Err(Error::invalid("t1", format!("must be non-negative, got {t1}")));
    }
    let n1 = if t1 == 0.0 { 0 } else { steps_for(t1, dt)? };
    let path = reversed_flow_path(x, t2, dt)?;
    let start = path.first().norm_h();
    if start >= lambda {
        return Err(Error::invalid(
            "t2",
            format!("reversed flow only reaches |v(T2)|_H = {start:e}, not below lambda = {lambda}"),
        ));
    }
    let mut adv = Advection::new(x.truncation());
    let (h, _) = hamiltonian_samples(&path, Flow::Forward, &mut adv)?;
    let mut controls = vec![SpectralField::zeros(x.truncation()); n1];
    controls.extend(h);
    ControlPath::new(dt, controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_unforced;
    use crate::dynamics::SolverConfig;
    use crate::spectral::WaveVector;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trunc(n: usize) -> TruncationParams {
        TruncationParams::with_n_max(n).unwrap()
    }

    fn field_with_v_norm(t: TruncationParams, seed: u64, v: f64, slope: f64) -> SpectralField {
        let mut x = SpectralField::random(t, &mut ChaCha8Rng::seed_from_u64(seed), slope);
        x.scale(v / x.sobolev_norm(1.0));
        x
    }

    #[test]
    fn quasipotential_examples() {
        let t = trunc(3);
        assert_eq!(quasipotential_exact(&SpectralField::zeros(t)), 0.0);
        let x = SpectralField::from_modes(t, &[(WaveVector::new(1, 1).unwrap(), Complex64::new(0.6, 0.8))]).unwrap();
        assert_relative_eq!(quasipotential_exact(&x), 4.0, max_relative = 1e-14);
        assert_relative_eq!(quasipotential_exact(&x.scaled(3.0)), 36.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_short_or_uneven_paths() {
        let t = trunc(1);
        let z = SpectralField::zeros(t);
        let two = DiscretePath::uniform(0.0, 0.1, vec![z.clone(), z.clone()]).unwrap();
        assert!(action_it(&two).is_err());
        let uneven = DiscretePath::new(vec![0.0, 0.1, 0.3], vec![z.clone(), z.clone(), z]).unwrap();
        assert!(matches!(action_it(&uneven), Err(Error::NonUniformGrid { .. })));
    }

    #[test]
    fn single_mode_decay_has_small_hamiltonian() {
        let t = trunc(3);
        let k = WaveVector::new(2, 1).unwrap();
        let a = Complex64::new(0.3, 0.4);
        for (dt, bound) in [(1e-2, 1e-3), (5e-3, 2.6e-4)] {
            let n = (1.0 / dt) as usize;
            let states = (0..=n)
                .map(|i| {
                    let s = (-5.0 * i as f64 * dt).exp();
                    SpectralField::from_modes(t, &[(k, a * s)]).unwrap()
                })
                .collect();
            let p = DiscretePath::uniform(0.0, dt, states).unwrap();
            let h = hamiltonian_of_path(&p).unwrap();
            let worst = h.states().iter().map(|s| s.norm_h()).fold(0.0, f64::max);
            assert!(worst < bound, "dt = {dt}: |H| = {worst}");
        }
    }

    #[test]
    fn unforced_flow_action_vanishes_with_dt() {
        let t = trunc(4);
        let x = field_with_v_norm(t, 1, 1.0, 2.0);
        let mut prev = f64::INFINITY;
        for dt in [4e-3, 2e-3, 1e-3] {
            let cfg = SolverConfig::new(dt, 1.0, Scheme::EtdRk2).unwrap();
            let a = action_it(&solve_unforced(&x, &cfg).unwrap()).unwrap().value;
            assert!(a < prev / 3.0, "action {a} did not shrink from {prev}");
            prev = a;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn hamiltonian_recovers_the_control() {
        let t = trunc(4);
        let x = field_with_v_norm(t, 2, 0.5, 1.0);
        let phi = field_with_v_norm(t, 3, 2.0, 2.0);
        let mut errs = Vec::new();
        for dt in [2e-3, 1e-3] {
            let n = (0.5 / dt) as usize;
            let p = solve_controlled(&x, Some(&vec![phi.clone(); n]), n, dt, Scheme::EtdRk2, Flow::Forward).unwrap();
            let h = hamiltonian_of_path(&p).unwrap();
            errs.push(h.states().iter().map(|s| s.distance_h(&phi)).fold(0.0, f64::max));
        }
        assert!(errs[0] < 1e-2 * phi.norm_h());
        assert!(errs[1] < errs[0] / 1.9);
    }

    #[test]
    fn jt_closed_form_for_linear_ramp() {
        // z(t) = t ψ on one reality pair: ½∫|ψ|²(1 + λt)² dt per stored mode.
        let t = trunc(3);
        let k = WaveVector::new(1, 1).unwrap();
        let psi = SpectralField::from_modes(t, &[(k, Complex64::new(0.5, -0.5))]).unwrap();
        let (dt, tf) = (1e-3, 2.0);
        let states = (0..=2000).map(|i| psi.scaled(i as f64 * dt)).collect();
        let p = DiscretePath::uniform(0.0, dt, states).unwrap();
        let l = 2.0f64;
        let exact = 0.5 * psi.norm_h_sq() * ((1.0 + l * tf).powi(3) - 1.0) / (3.0 * l);
        let j = action_jt(&p).unwrap().value;
        // Midpoint sampling of a quadratic integrand: error dt²/12 · ∫f''.
        assert_relative_eq!(j, exact, max_relative = 1e-6);
        assert!(j >= 0.0);
    }

    #[test]
    fn linear_it_equals_jt_and_concat_is_additive() {
        let t = trunc(3);
        let x = field_with_v_norm(t, 4, 1.0, 1.0);
        let rev = reversed_flow_path(&x, 1.0, 1e-2).unwrap();
        let (f_lin, _) = action_gradient(&rev, Flow::Linear).unwrap();
        assert_eq!(f_lin, action_jt(&rev).unwrap().value);
        let states = rev.states();
        let a = DiscretePath::uniform(0.0, 1e-2, states[..=40].to_vec()).unwrap();
        let b = DiscretePath::uniform(0.4, 1e-2, states[40..].to_vec()).unwrap();
        let joined = a.concat(&b).unwrap();
        let whole = action_it(&rev).unwrap().value;
        let parts = action_it(&a).unwrap().value + action_it(&b).unwrap().value;
        assert_relative_eq!(whole, parts, max_relative = 1e-13);
        assert_relative_eq!(action_it(&joined).unwrap().value, whole, max_relative = 1e-13);
    }

    #[test]
    fn lower_bound_identity_is_exact() {
        let t = trunc(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let states: Vec<_> = (0..30).map(|_| SpectralField::random(t, &mut rng, 1.5)).collect();
        let p = DiscretePath::uniform(0.0, 0.05, states).unwrap();
        let lb = lower_bound_gap(&p).unwrap();
        assert!(lb.slack >= 0.0);
        assert!(lb.identity_defect.abs() < 1e-12 * lb.action);
        assert!(lb.gap() >= -1e-12 * lb.action);
    }

    #[test]
    fn reversed_flow_linear_oracle() {
        // B off: u(t) = e^{-A(T-t)}x, action = ‖x‖²_V − ‖e^{-AT}x‖²_V.
        let t = trunc(4);
        let x = field_with_v_norm(t, 6, 1.0, 1.0);
        let (tf, dt) = (1.0, 1e-3);
        let n = 1000;
        let states: Vec<_> = (0..=n)
            .map(|i| {
                let s = tf - i as f64 * dt;
                let mut u = x.clone();
                for (j, a) in u.coeffs_mut().iter_mut().enumerate() {
                    *a *= (-t.wavevector(j).norm_sq() * s).exp();
                }
                u
            })
            .collect();
        let p = DiscretePath::uniform(0.0, dt, states).unwrap();
        let end = p.first().sobolev_norm_sq(1.0);
        assert_relative_eq!(action_jt(&p).unwrap().value, 1.0 - end, max_relative = 1e-5);
    }

    #[test]
    fn reversed_flow_action_matches_v_norm_drop() {
        let t = trunc(4);
        let x = field_with_v_norm(t, 7, 1.0, 1.0);
        let mut defects = Vec::new();
        for dt in [1e-2, 5e-3] {
            let p = reversed_flow_path(&x, 5.0, dt).unwrap();
            assert!(p.first().norm_h() < 1e-2);
            assert!(p.last().distance_h(&x) == 0.0);
            let a = action_it(&p).unwrap().value;
            let d = (a - (quasipotential_exact(&x) - p.first().sobolev_norm_sq(1.0))).abs();
            assert!(d < 1e-4, "defect {d}");
            defects.push(d);
        }
        assert!(defects[1] < defects[0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = trunc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let states: Vec<_> = (0..6).map(|_| SpectralField::random(t, &mut rng, 1.0)).collect();
        let dt = 0.1;
        let p = DiscretePath::uniform(0.0, dt, states.clone()).unwrap();
        for flow in [Flow::Forward, Flow::Linear, Flow::Reversed] {
            let (f0, g) = action_gradient(&p, flow).unwrap();
            let dir: Vec<_> = (0..4).map(|_| SpectralField::random(t, &mut rng, 1.0)).collect();
            let h = 1e-6;
            let eval = |s: f64| {
                let mut st = states.clone();
                for (j, d) in dir.iter().enumerate() {
                    st[j + 1].axpy(s, d);
                }
                action_gradient(&DiscretePath::uniform(0.0, dt, st).unwrap(), flow).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = dot(&g, &dir);
            assert!((fd - an).abs() < 1e-6 * an.abs().max(f0), "{flow:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn linear_minimizer_matches_direct_solve_and_continuum() {
        let t = trunc(2);
        let x = field_with_v_norm(t, 9, 1.0, 1.0);
        let (tf, nodes) = (2.0, 201);
        let opts = MinimizeOptions {
            flow: Flow::Linear,
            ..Default::default()
        };
        let m = minimize_action(&x, tf, nodes, None, &opts).unwrap();
        assert!(m.converged);
        // Oracle: per mode, the stationarity conditions of the discrete
        // action with pinned ends form a tridiagonal system solved by plain
        // Gaussian elimination here.
        let dt = tf / (nodes - 1) as f64;
        let mut oracle = 0.0;
        for (i, a) in x.coeffs().iter().enumerate() {
            let l = t.wavevector(i).norm_sq();
            let (p, q) = (1.0 / dt + 0.5 * l, -1.0 / dt + 0.5 * l);
            let n = nodes - 2;
            let mut diag = vec![p * p + q * q; n];
            let mut rhs = vec![Complex64::new(0.0, 0.0); n];
            rhs[n - 1] = -*a * p * q;
            for j in 1..n {
                let w = p * q / diag[j - 1];
                diag[j] -= w * p * q;
                let prev = rhs[j - 1];
                rhs[j] -= prev * w;
            }
            let mut u = vec![Complex64::new(0.0, 0.0); n + 2];
            u[n + 1] = *a;
            for j in (0..n).rev() {
                u[j + 1] = (rhs[j] - u[j + 2] * (p * q) * if j + 1 == n { 0.0 } else { 1.0 }) / diag[j];
            }
            oracle += 0.5 * dt * u.windows(2).map(|w| (w[1] * p + w[0] * q).norm_sqr()).sum::<f64>();
        }
        assert_relative_eq!(m.action.value, oracle, max_relative = 1e-9);
        let continuum = linear_minimal_action(&x, tf);
        assert_relative_eq!(m.action.value, continuum, max_relative = 5e-3);
        assert!(continuum >= quasipotential_exact(&x));
    }

    #[test]
    fn minimizer_never_increases_from_reversed_flow() {
        let t = trunc(3);
        let x = field_with_v_norm(t, 10, 1.0, 1.0);
        let init = reversed_flow_path(&x, 2.0, 0.02).unwrap();
        let mut pinned = init.states().to_vec();
        pinned[0] = SpectralField::zeros(t);
        let start = action_it(&DiscretePath::uniform(0.0, 0.02, pinned).unwrap()).unwrap().value;
        let opts = MinimizeOptions {
            max_iter: 30,
            ..Default::default()
        };
        let m = minimize_action(&x, 2.0, init.len(), Some(&init), &opts).unwrap();
        assert!(m.action.value <= start);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.action.value >= quasipotential_exact(&x) * (1.0 - 1e-12));
    }

    #[test]
    fn zero_target_needs_no_control() {
        let t = trunc(2);
        let c = control_for_target(&SpectralField::zeros(t), 0.05, 1.0, 1.0, 1e-2).unwrap();
        assert_eq!(c.cost, 0.0);
        assert!(c.controls.iter().all(|c| c.norm_h() == 0.0));
    }

    #[test]
    fn short_reversed_horizon_is_rejected() {
        let t = trunc(2);
        let x = field_with_v_norm(t, 11, 3.0, 1.0);
        assert!(control_for_target(&x, 1e-3, 0.0, 0.1, 1e-2).is_err());
    }

    #[test]
    fn replay_miss_is_reported() {
        let t = trunc(2);
        let x = field_with_v_norm(t, 12, 1.0, 1.0);
        let c = control_for_target(&x, 0.05, 0.0, 3.0, 1e-2).unwrap();
        let far = field_with_v_norm(t, 13, 50.0, 0.0);
        match c.verify(&[far], &x.scaled(-1.0), 0.1) {
            Err(Error::ReplayMissed { distance, tolerance }) => assert!(distance > tolerance),
            other => panic!("expected a miss, got {other:?}"),
        }
    }
}

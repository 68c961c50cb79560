//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero on any unexpected outcome.
//!
//! Run a subset with `cargo test --test acceptance -- 4 7`.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tns_core::action::{action_it, control_for_target, lower_bound_gap, minimize_action, reversed_flow_path, MinimizeOptions};
use tns_core::dynamics::{decay_time, DecayOptions, DiscretePath, Scheme, SolverConfig};
use tns_core::experiments::{
    energy_balance_check, rerun, run_plan, tail_probability, thread_pool, ExperimentKind, ExperimentPlan, RadiusScaling, RunRecord,
};
use tns_core::noise::{convolution_series_bound, min_unsaturated_delta, ou_moments, p_epsilon, trace_q, CovarianceSpec, NoiseSchedule, OuStepper};
use tns_core::rng::RngStream;
use tns_core::spectral::{Advection, SpectralField, TruncationParams, WaveVector};
use tns_core::stats::{fit_line, Estimate};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

/// Criteria that are implemented faithfully but cannot hold as stated.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    2,
    "the logarithmic series bound has no lattice constant; the |k| = 1 shell alone exceeds it",
)];

fn trunc(n: usize) -> TruncationParams {
    TruncationParams::with_n_max(n).expect("valid truncation")
}

fn random_field(t: TruncationParams, rng: &mut ChaCha8Rng, slope: f64) -> SpectralField {
    SpectralField::random(t, rng, slope)
}

fn with_v_norm(t: TruncationParams, seed: u64, v: f64) -> SpectralField {
    let mut x = random_field(t, &mut ChaCha8Rng::seed_from_u64(seed), 1.0);
    x.scale(v / x.sobolev_norm(1.0));
    x
}

/// `P[(u·∇)v]` by direct summation over interacting triads:
/// `(u·∇)v` has the coefficient `a_p b_q (i/4π²)(p⊥·q)/|p| · q⊥/|q|` on
/// `e^{i(p+q)·x}`, and the `L²` pairing with `e_k` contributes `2π k⊥/|k|`.
fn convolution_oracle(u: &SpectralField, v: &SpectralField) -> Vec<Complex64> {
    let t = u.truncation();
    let perp = |w: WaveVector| [w.k2 as f64, -(w.k1 as f64)];
    let mut out = vec![Complex64::new(0.0, 0.0); t.mode_count()];
    for (i, a) in u.coeffs().iter().enumerate() {
        let p = t.wavevector(i);
        for (j, b) in v.coeffs().iter().enumerate() {
            let q = t.wavevector(j);
            let Ok(k) = WaveVector::new(p.k1 + q.k1, p.k2 + q.k2) else { continue };
            let Some(ik) = t.index_of(k) else { continue };
            let (pp, qp, kp) = (perp(p), perp(q), perp(k));
            let pq = pp[0] * q.k1 as f64 + pp[1] * q.k2 as f64;
            let qk = qp[0] * kp[0] + qp[1] * kp[1];
            out[ik] += a * b * Complex64::new(0.0, pq * qk / (TAU * p.norm() * q.norm() * k.norm()));
        }
    }
    out
}

fn criterion_1() -> Check {
    let t = trunc(8);
    let mut adv = Advection::new(t);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut energy, mut antisym) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let u = random_field(t, &mut rng, 1.0);
        let v = random_field(t, &mut rng, 1.0);
        let w = random_field(t, &mut rng, 1.0);
        let bu = adv.nonlinearity(&u);
        let au = u.stokes_apply(1.0);
        energy = energy.max(bu.inner(&au).abs() / (bu.norm_h() * au.norm_h()));
        let buv = adv.bilinear(&u, &v);
        let buw = adv.bilinear(&u, &w);
        let scale = buv.norm_h() * w.norm_h() + buw.norm_h() * v.norm_h();
        antisym = antisym.max((buv.inner(&w) + buw.inner(&v)).abs() / scale);
    }
    let t4 = trunc(4);
    let mut adv4 = Advection::new(t4);
    let mut conv = 0.0f64;
    for _ in 0..20 {
        let u = random_field(t4, &mut rng, 0.5);
        let v = random_field(t4, &mut rng, 0.5);
        let fast = adv4.bilinear(&u, &v);
        let oracle = convolution_oracle(&u, &v);
        let top = oracle.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let diff = fast.coeffs().iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        conv = conv.max(diff / top);
    }
    let pass = energy < 1e-10 && antisym < 1e-10 && conv < 1e-10;
    Ok((
        pass,
        format!("<B(u),Au> rel {energy:.1e}, b antisymmetry rel {antisym:.1e}, B vs convolution rel {conv:.1e}"),
    ))
}

fn criterion_2() -> Check {
    let beta = 3.0;
    let t64 = trunc(64);
    let mut bound_ok = true;
    let mut detail = Vec::new();
    for delta in [0.5, 0.1, 0.01] {
        let sb = convolution_series_bound(&CovarianceSpec::new(beta, delta)?, t64)?;
        bound_ok &= sb.holds();
        detail.push(format!("delta {delta}: series {:.3} vs bound {:.3}", sb.series, sb.bound));
    }
    // Guarded range: from 1e-2 down to where the lattice starts cutting off
    // the scaling.
    let floor = min_unsaturated_delta(beta, t64);
    let deltas: Vec<f64> = (0..=20)
        .map(|i| 10f64.powf(-2.0 - 0.25 * i as f64))
        .filter(|d| *d >= floor)
        .collect();
    let lx: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    let (mut ltr, mut lp) = (Vec::new(), Vec::new());
    for d in &deltas {
        let spec = CovarianceSpec::new(beta, *d)?;
        ltr.push(trace_q(&spec, t64).ln());
        lp.push(p_epsilon(&spec, t64).ln());
    }
    let s_tr = fit_line(&lx, &ltr)?.slope;
    let s_p = fit_line(&lx, &lp)?.slope;
    let slopes_ok = s_tr <= 1.0 / beta + 0.1 && s_p <= 2.0 / beta + 0.1;
    detail.push(format!(
        "slopes on delta in [{:.1e}, 1e-2]: Tr Q {s_tr:.3} (<= {:.3}), P {s_p:.3} (<= {:.3})",
        deltas.last().copied().unwrap_or(f64::NAN),
        1.0 / beta + 0.1,
        2.0 / beta + 0.1
    ));
    Ok((bound_ok && slopes_ok, detail.join("; ")))
}

fn criterion_3() -> Check {
    let t = trunc(2);
    let (eps, beta, delta) = (0.1, 3.0, 0.1);
    let spec = CovarianceSpec::new(beta, delta)?;
    let dt = 0.1;
    let n_chains = 10_000;
    let mut stepper = OuStepper::new(t, &spec, eps, dt)?;
    let reps: Vec<usize> = t.representatives().collect();
    let mut samples = vec![Vec::with_capacity(n_chains); reps.len()];
    let mut z = SpectralField::zeros(t);
    let mut scratch = SpectralField::zeros(t);
    for c in 0..n_chains {
        z.scale(0.0);
        let mut rng = RngStream::new(303, c as u64);
        // 200 steps of 0.1: e^{-2|k|² t} < e^{-40}.
        for s in 0..200 {
            stepper.step(&mut z, &mut rng, s, &mut scratch);
        }
        for (m, i) in reps.iter().enumerate() {
            samples[m].push(z.coeffs()[*i].norm_sqr());
        }
    }
    let mut worst_z: f64 = 0.0;
    for (m, i) in reps.iter().enumerate() {
        let l = t.wavevector(*i).norm_sq();
        let sigma_sq = 1.0 / (1.0 + delta * l.powf(beta));
        let oracle = eps * sigma_sq / (2.0 * l);
        worst_z = worst_z.max(Estimate::from_samples(&samples[m]).z_score(oracle));
    }
    // Semigroup: two exact steps of h against one of 2h, from a
    // non-stationary start, compared with the closed-form moments.
    let mut worst_sg: f64 = 0.0;
    for &(l, h) in &[(1.0, 0.01), (2.0, 0.37), (8.0, 0.05), (25.0, 1.3)] {
        let sigma_sq = 1.0 / (1.0 + delta * f64::powf(l, beta));
        let m0 = Complex64::new(0.7, -0.2);
        let v0 = 0.3;
        let (m1, v1) = ou_moments(m0, v0, l, sigma_sq, eps, h);
        let (m2, v2) = ou_moments(m1, v1, l, sigma_sq, eps, h);
        let (m3, v3) = ou_moments(m0, v0, l, sigma_sq, eps, 2.0 * h);
        let e = (-2.0 * l * h).exp();
        let exact_m = m0 * e;
        let exact_v = v0 * e * e + eps * sigma_sq * (1.0 - e * e) / (2.0 * l);
        for (a, b) in [(m2, exact_m), (m3, exact_m)] {
            worst_sg = worst_sg.max((a - b).norm() / b.norm());
        }
        for (a, b) in [(v2, exact_v), (v3, exact_v), (v2, v3)] {
            worst_sg = worst_sg.max((a - b).abs() / b);
        }
    }
    Ok((
        worst_z <= 3.0 && worst_sg <= 1e-12,
        format!(
            "worst per-mode variance z-score {worst_z:.2} over {} modes x {n_chains} samples, semigroup moment defect {worst_sg:.1e}",
            reps.len()
        ),
    ))
}

fn energy_plan(nonlinear: bool, trajectories: usize) -> Result<ExperimentPlan, tns_core::Error> {
    let mut solver = SolverConfig::new(1e-3, 1.0, Scheme::ExponentialEuler)?;
    solver.nonlinear = nonlinear;
    Ok(ExperimentPlan {
        kind: ExperimentKind::EnergyBalance,
        epsilon_list: vec![0.1],
        schedule: NoiseSchedule::power(1.0, 1.0)?,
        beta: 3.0,
        trunc: trunc(4),
        solver,
        trajectories,
        burn_in: Some(0.0),
        seed: 404,
        initial_norm: 1.0,
        radii: vec![],
        radius_scaling: RadiusScaling::Absolute,
        targets: vec![],
        tolerance: 0.2,
        uniformity_starts: 5,
        start_radius: 0.1,
        hold_segments: 4,
        hold_radius: 0.5,
    })
}

fn criterion_4() -> Check {
    let pool = thread_pool(0)?;
    let plan = energy_plan(true, 10_000)?;
    let r = energy_balance_check(&plan, &pool)?.remove(0);
    let plan_lin = energy_plan(false, 10_000)?;
    let rl = energy_balance_check(&plan_lin, &pool)?.remove(0);
    // Closed form E‖u(t)‖²_H of the linear equation, mode by mode.
    let x = plan_lin.initial_state();
    let t = plan_lin.trunc;
    let (eps, delta, beta, time) = (0.1, 0.1, 3.0, 1.0);
    let oracle: f64 = x
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let l = t.wavevector(i).norm_sq();
            let e2 = (-2.0 * l * time).exp();
            a.norm_sqr() * e2 + eps / (1.0 + delta * f64::powf(l, beta)) * (1.0 - e2) / (2.0 * l)
        })
        .sum();
    let z = rl.final_energy.z_score(oracle);
    Ok((
        r.relative_discrepancy <= 0.05 && z <= 3.0,
        format!(
            "nonlinear: E[lhs] {:.5} +- {:.5} vs rhs {:.5} (rel {:.2e}); linear E|u(1)|^2 {:.5} +- {:.5} vs oracle {:.5} (z {z:.2})",
            r.lhs.mean, r.lhs.std_error, r.rhs, r.relative_discrepancy, rl.final_energy.mean, rl.final_energy.std_error, oracle
        ),
    ))
}

fn criterion_5() -> Check {
    let t = trunc(4);
    let x = with_v_norm(t, 505, 2.0);
    let u_x = x.sobolev_norm_sq(1.0);
    let mut defects = Vec::new();
    for dt in [2e-3, 1e-3, 5e-4] {
        let p = reversed_flow_path(&x, 5.0, dt)?;
        let a = action_it(&p)?.value;
        defects.push((a - (u_x - p.first().sobolev_norm_sq(1.0))).abs());
    }
    let defects_ok = defects.iter().all(|d| *d < 1e-4) && defects.windows(2).all(|w| w[1] < w[0]);
    let m = minimize_action(&x, 5.0, 501, None, &MinimizeOptions::default())?;
    let lb = lower_bound_gap(&m.path)?;
    let rel = (m.action.value - u_x).abs() / u_x;
    let above_bound = m.action.value >= lb.v_increase - lb.identity_defect.abs();
    Ok((
        defects_ok && rel <= 0.05 && above_bound,
        format!(
            "reversed-flow defects {:.1e} > {:.1e} > {:.1e}; minimized {:.6} vs |x|_V^2 {:.6} (rel {rel:.1e}, {} iterations), lower bound {:.6} (defect {:.1e})",
            defects[0], defects[1], defects[2], m.action.value, u_x, m.iterations, lb.v_increase, lb.identity_defect
        ),
    ))
}

fn smooth_path(t: TruncationParams, fields: &[SpectralField; 4], phase: f64, n: usize) -> Result<DiscretePath, tns_core::Error> {
    let states = (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            let mut u = SpectralField::zeros(t);
            u.axpy(1.0 - s, &fields[0]);
            u.axpy(s, &fields[1]);
            u.axpy((std::f64::consts::PI * s).sin(), &fields[2]);
            u.axpy((TAU * s + phase).sin(), &fields[3]);
            u
        })
        .collect();
    DiscretePath::uniform(0.0, 1.0 / n as f64, states)
}

fn criterion_6() -> Check {
    let t = trunc(4);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut c = [0.0f64; 2];
    let mut worst_defect: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for i in 0..50 {
        let amp = rng.random_range(0.2..3.0);
        let fields = [(); 4].map(|_| random_field(t, &mut rng, 2.0).scaled(amp));
        let phase = rng.random_range(0.0..TAU);
        for (slot, n) in [100usize, 200].into_iter().enumerate() {
            let dt = 1.0 / n as f64;
            // Every other path is a slightly perturbed reversed-flow path,
            // for which the bound is nearly tight.
            let p = if i % 2 == 0 {
                smooth_path(t, &fields, phase, n)?
            } else {
                let base = reversed_flow_path(&fields[1], 1.0, dt)?;
                let states = base
                    .states()
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let mut s = s.clone();
                        s.axpy(1e-3 * (std::f64::consts::PI * j as f64 * dt).sin(), &fields[2]);
                        s
                    })
                    .collect();
                DiscretePath::uniform(0.0, dt, states)?
            };
            let lb = lower_bound_gap(&p)?;
            let round = 1e-12 * (lb.action.abs() + lb.v_increase.abs());
            c[slot] = c[slot].max((lb.v_increase - lb.action - round).max(0.0) / dt);
            worst_defect = worst_defect.max(lb.identity_defect.abs() / lb.action.abs().max(1.0));
            min_gap = min_gap.min(lb.gap());
        }
    }
    let stable = c[1] <= 2.0 * c[0] + 1e-9 && c[0] <= 2.0 * c[1] + 1e-9;
    Ok((
        stable,
        format!(
            "C(dt) = {:.1e}, C(dt/2) = {:.1e}; min I - dV = {min_gap:.3e}; worst identity defect rel {worst_defect:.1e}",
            c[0], c[1]
        ),
    ))
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `P(Σ w_j E_j > x)` by Gil-Pelaez inversion of `Π (1 − i w_j t)^{-1}`.
/// Converges fast when several weights are of order one, as here.
fn gil_pelaez_tail(w: &[f64], x: f64) -> f64 {
    let mean: f64 = w.iter().sum();
    let f = |t: f64| -> f64 {
        let mut lp = Complex64::new(0.0, -t * x);
        for wj in w {
            lp -= Complex64::new(1.0, -wj * t).ln();
        }
        lp.exp().im / t
    };
    let env = |t: f64| w.iter().map(|wj| -0.5 * (wj * wj * t * t).ln_1p()).sum::<f64>().exp() / t;
    let h = 0.2 / x.max(mean);
    let (mut acc, mut a) = (0.0, 0.0);
    while a == 0.0 || env(a) > 1e-16 {
        let mid = a + 0.5 * h;
        acc += 0.5 * h * GL8.iter().map(|(n, wt)| wt * (f(mid - 0.5 * h * n) + f(mid + 0.5 * h * n))).sum::<f64>();
        a += h;
    }
    0.5 + acc / std::f64::consts::PI
}

fn criterion_7() -> Check {
    let pool = thread_pool(0)?;
    let t = trunc(4);
    let beta = 3.0;
    let n = 200_000;
    let mut ok = true;
    let mut detail = Vec::new();
    for eps in [0.5, 0.2, 0.1, 0.05] {
        let delta = eps;
        // ‖x‖²_V = Σ_k ε σ_k² E_k over conjugate pairs.
        let w: Vec<f64> = t
            .representatives()
            .map(|i| eps / (1.0 + delta * t.wavevector(i).norm_sq().powf(beta)))
            .collect();
        let quantile = |p: f64| {
            let (mut lo, mut hi) = (0.0, 100.0 * eps);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if gil_pelaez_tail(&w, mid) > p {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            (0.5 * (lo + hi)).sqrt()
        };
        let radii: Vec<f64> = [0.1, 0.03, 0.01, 0.001].iter().map(|p| quantile(*p)).collect();
        let mut solver = SolverConfig::new(1e-2, 1.0, Scheme::ExponentialEuler)?;
        solver.nonlinear = false;
        let plan = ExperimentPlan {
            kind: ExperimentKind::Tails,
            epsilon_list: vec![eps],
            schedule: NoiseSchedule::power(1.0, 1.0)?,
            beta,
            trunc: t,
            solver,
            trajectories: n,
            burn_in: Some(0.0),
            seed: 707,
            initial_norm: 0.0,
            radii: radii.clone(),
            radius_scaling: RadiusScaling::Absolute,
            targets: vec![],
            tolerance: 0.2,
            uniformity_starts: 5,
            start_radius: 0.1,
            hold_segments: 4,
            hold_radius: 0.5,
        };
        let rep = tail_probability(&plan, &pool)?.remove(0);
        let mut worst_z: f64 = 0.0;
        let mut rates = Vec::new();
        for pt in &rep.points {
            let q = gil_pelaez_tail(&w, pt.radius * pt.radius);
            worst_z = worst_z.max((pt.p_hat - q).abs() / (q * (1.0 - q) / n as f64).sqrt());
            rates.push(pt.rate.unwrap_or(f64::NAN));
        }
        let positive = rates.iter().all(|r| *r > 0.0);
        let increasing = rates.windows(2).all(|p| p[1] > p[0]);
        let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let slope = fit_line(&r2, &rates)?.slope;
        let this = positive && increasing && (0.5..=2.0).contains(&slope) && worst_z <= 3.0;
        ok &= this;
        detail.push(format!("eps {eps}: slope {slope:.3}, oracle z {worst_z:.2}{}", if this { "" } else { " (failed)" }));
    }
    Ok((ok, detail.join("; ")))
}

fn criterion_8() -> Check {
    let t = trunc(4);
    let x = with_v_norm(t, 808, 1.0);
    let u_x = x.sobolev_norm_sq(1.0);
    let lambda = 0.05;
    let dt = 1e-2;
    let opts = DecayOptions {
        dt,
        ..Default::default()
    };
    let t1 = decay_time(t, 1.0, lambda, 8, &opts)?;
    let control = control_for_target(&x, lambda, t1, 5.0, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(809);
    let starts: Vec<SpectralField> = (0..5)
        .map(|i| {
            let r = if i == 0 { 0.999 } else { rng.random_range(0.0..1.0) };
            let mut y = random_field(t, &mut rng, 1.0);
            y.scale(r / y.norm_h());
            y
        })
        .collect();
    let distances: Vec<f64> = starts
        .iter()
        .map(|y| Ok(control.replay(y)?.last().distance_h(&x)))
        .collect::<Result<_, tns_core::Error>>()?;
    let worst = distances.iter().cloned().fold(0.0, f64::max);
    Ok((
        worst < 0.1 && control.cost <= u_x + 0.05,
        format!(
            "T1 = {t1:.2}, worst landing distance {worst:.2e} (< 0.1), cost {:.5} vs |x|_V^2 + 0.05 = {:.5}",
            control.cost,
            u_x + 0.05
        ),
    ))
}

fn criterion_9() -> Check {
    let mut solver = SolverConfig::new(1e-2, 0.5, Scheme::EtdRk2)?;
    solver.record_stride = 5;
    let base = ExperimentPlan {
        kind: ExperimentKind::Tails,
        epsilon_list: vec![0.2, 0.1],
        schedule: NoiseSchedule::power(1.0, 1.0)?,
        beta: 3.0,
        trunc: trunc(3),
        solver,
        trajectories: 64,
        burn_in: Some(0.5),
        seed: 909,
        initial_norm: 0.5,
        radii: vec![0.5, 1.0, 1.5],
        radius_scaling: RadiusScaling::SqrtEpsilon,
        targets: vec![],
        tolerance: 0.2,
        uniformity_starts: 5,
        start_radius: 0.1,
        hold_segments: 4,
        hold_radius: 0.5,
    };
    let mut simulate = base.clone();
    simulate.kind = ExperimentKind::Simulate;
    let mut linear = base.clone();
    linear.solver.nonlinear = false;
    linear.trajectories = 20_000;
    let mut exact = true;
    let mut consistent = true;
    let mut count = 0;
    for plan in [base, simulate, linear] {
        let a = run_plan(&plan, 2)?;
        let stored: RunRecord = serde_json::from_str(&serde_json::to_string(&a)?)?;
        exact &= rerun(&stored, None)?.same_estimates(&a);
        for threads in [1, 4] {
            consistent &= rerun(&stored, Some(threads))?.consistent_with(&a, 3.0);
        }
        count += a.estimates.len();
    }
    Ok((
        exact && consistent,
        format!("{count} estimates over 3 plans: bit-exact rerun at 2 workers {exact}, within 3 sigma at 1 and 4 workers {consistent}"),
    ))
}

type Criterion = (u32, &'static str, fn() -> Check);

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "operator identities", criterion_1),
        (2, "covariance laws", criterion_2),
        (3, "OU exactness", criterion_3),
        (4, "energy balance", criterion_4),
        (5, "quasipotential", criterion_5),
        (6, "path lower bound", criterion_6),
        (7, "concentration trend", criterion_7),
        (8, "control replay", criterion_8),
        (9, "reproducibility", criterion_9),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let verdict = match (pass, known) {
            (true, None) => "PASS".to_string(),
            (false, None) => {
                unexpected += 1;
                "FAIL".to_string()
            }
            (false, Some(why)) => format!("FAIL (known: {why})"),
            (true, Some(_)) => {
                unexpected += 1;
                "PASS (listed as a known failure; update KNOWN_FAILURES)".to_string()
            }
        };
        println!("criterion {id} [{name}]: {verdict} | {detail} | {secs:.1}s");
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

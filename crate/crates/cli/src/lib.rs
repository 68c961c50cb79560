//! `tns` command-line driver: configuration, subcommands and result files.

pub mod config;
pub mod error;
pub mod export;
pub mod results;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tns_core::action::{action_it, action_jt, lower_bound_gap, minimize_action, reversed_flow_path, MinimizeOptions};
use tns_core::dynamics::DiscretePath;
use tns_core::experiments::{rerun, run_plan, ExperimentKind, RunRecord};
use tns_core::noise::{ou_moments, CovarianceSpec};
use tns_core::spectral::{bilinear_direct, Advection, GridField, SpectralField, TruncationParams};

pub use config::ConfigDocument;
pub use error::CliError;
use results::{lines_from_record, write_lines, ResultLine};

#[derive(Debug, Parser)]
#[command(name = "tns", version, about = "Stochastic 2D Navier-Stokes experiments on the torus")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true, env = "TNS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Result lines are appended here; stdout when omitted.
    #[arg(long, global = true, env = "TNS_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "TNS_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, env = "TNS_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Also writes the full run record (JSON) for Monte-Carlo subcommands.
    #[arg(long, global = true, env = "TNS_RECORD")]
    pub record: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Operator identity suite; exits 3 if any threshold is breached.
    Check,
    /// Final-time energies of stochastic trajectories.
    Simulate,
    /// Energy balance of the stochastic equation.
    Energy,
    /// Stationary moments, ball masses and histograms.
    Invariant,
    /// Stationary tail probabilities and their rate fit.
    Tails,
    /// Probability of staying near a low-action target path.
    Ldp,
    /// Ball probabilities from several nearby starts.
    Uniformity,
    /// Linear-model Monte Carlo against closed-form Gaussian answers.
    Oracle,
    /// Action of paths held on the sphere `‖u‖_H = hold_radius` for
    /// 1..=hold_segments multiples of `t_final`.
    ActionGrowth,
    /// Action functionals of a stored path (JSON).
    Action {
        #[arg(long)]
        path: PathBuf,
    },
    /// Reversed-flow and minimized action to a target with the configured
    /// `‖x‖²_V`.
    Quasipotential {
        /// Stores the minimizing path as JSON.
        #[arg(long)]
        save_path: Option<PathBuf>,
    },
    /// Tabulates result lines as CSV (`tails` or any observable name).
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "tails")]
        kind: String,
    },
    /// Concatenates result shards into `--out`.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Re-executes a stored run record; exits 3 unless bit-identical.
    Rerun {
        #[arg(long = "from")]
        from: PathBuf,
    },
    /// Prints the effective configuration and its hash.
    Config,
}

fn load_config(cli: &Cli) -> Result<ConfigDocument, CliError> {
    let mut doc = match &cli.config {
        Some(p) => ConfigDocument::load(p)?,
        None => ConfigDocument::default(),
    };
    if let Some(seed) = cli.seed {
        doc.seed = seed;
    }
    Ok(doc)
}

fn summarize(lines: &[ResultLine]) {
    for l in lines {
        let params: Vec<String> = l
            .params
            .iter()
            .map(|(k, v)| {
                if v.fract() == 0.0 && v.abs() < 1e9 {
                    format!("{k}={v}")
                } else if (1e-3..1e4).contains(&v.abs()) {
                    format!("{k}={v:.6}")
                } else {
                    format!("{k}={v:.3e}")
                }
            })
            .collect();
        let flags = if l.flags.is_empty() {
            String::new()
        } else {
            format!(" [{}]", l.flags.join(", "))
        };
        eprintln!(
            "{:<34} {:<44} {:>14.6e} +- {:<10.3e} (n={}){flags}",
            l.observable,
            params.join(" "),
            l.estimate,
            l.std_error,
            l.n_samples
        );
    }
}

fn emit(cli: &Cli, lines: &[ResultLine]) -> Result<(), CliError> {
    summarize(lines);
    write_lines(cli.out.as_deref(), lines)
}

fn write_record(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(record).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn monte_carlo(cli: &Cli, kind: ExperimentKind) -> Result<(), CliError> {
    let doc = load_config(cli)?;
    let plan = doc.plan(kind)?;
    let record = run_plan(&plan, cli.threads)?;
    if record.estimates.iter().any(|e| e.estimate.is_nan()) {
        return Err(CliError::Numerical("an estimate is NaN".into()));
    }
    if let Some(p) = &cli.record {
        write_record(p, &record)?;
    }
    emit(cli, &lines_from_record(&doc.hash(), &record))
}

/// Worst values of each identity over random fields, with thresholds.
pub fn identity_suite(trunc: TruncationParams, seed: u64) -> Result<Vec<(String, f64, f64)>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adv = Advection::new(trunc);
    let small = TruncationParams::with_n_max(trunc.n_max.min(4))?;
    let mut adv_small = Advection::new(small);
    let rel = |a: f64, s: f64| a.abs() / s.max(f64::MIN_POSITIVE);
    let mut worst = [0.0f64; 8];
    for _ in 0..20 {
        let u = SpectralField::random(trunc, &mut rng, 1.0);
        let v = SpectralField::random(trunc, &mut rng, 1.0);
        let w = SpectralField::random(trunc, &mut rng, 1.0);
        let bu = adv.nonlinearity(&u);
        let au = u.stokes_apply(1.0);
        worst[0] = worst[0].max(rel(bu.inner(&au), bu.norm_h() * au.norm_h()));
        let buv = adv.bilinear(&u, &v);
        let buw = adv.bilinear(&u, &w);
        worst[1] = worst[1].max(rel(buv.inner(&w) + buw.inner(&v), buv.norm_h() * w.norm_h() + buw.norm_h() * v.norm_h()));
        worst[2] = worst[2].max(rel(buv.inner(&v), buv.norm_h() * v.norm_h()));
        let grid = GridField::from_spectral(&u);
        worst[3] = worst[3].max(rel(grid.l2_norm_sq() - u.norm_h_sq(), u.norm_h_sq()));
        let pu = grid.leray_project();
        worst[4] = worst[4].max(rel(pu.distance_h(&u), u.norm_h()));
        worst[5] = worst[5].max(bu.reality_defect().max(buv.reality_defect()));
        let us = SpectralField::random(small, &mut rng, 0.5);
        let vs = SpectralField::random(small, &mut rng, 0.5);
        let fast = adv_small.bilinear(&us, &vs);
        let slow = bilinear_direct(&us, &vs)?;
        worst[6] = worst[6].max(rel(fast.distance_h(&slow), slow.norm_h()));
        let states = (0..6).map(|_| SpectralField::random(trunc, &mut rng, 1.0)).collect();
        let lb = lower_bound_gap(&DiscretePath::uniform(0.0, 0.05, states)?)?;
        worst[7] = worst[7].max(rel(lb.identity_defect, lb.action.abs() + lb.v_increase.abs() + lb.slack));
    }
    let spec = CovarianceSpec::new(3.0, 0.1)?;
    let mut semigroup: f64 = 0.0;
    for (l, h) in [(1.0, 0.01), (5.0, 0.3), (32.0, 1.0)] {
        let s2 = spec.sigma_sq(l);
        let m0 = num_complex::Complex64::new(0.4, -0.3);
        let (m1, v1) = ou_moments(m0, 0.2, l, s2, 0.1, h);
        let (m2, v2) = ou_moments(m1, v1, l, s2, 0.1, h);
        let (m3, v3) = ou_moments(m0, 0.2, l, s2, 0.1, 2.0 * h);
        semigroup = semigroup.max((m2 - m3).norm() / m0.norm()).max((v2 - v3).abs() / v3);
    }
    Ok(vec![
        ("energy_orthogonality".into(), worst[0], 1e-10),
        ("trilinear_antisymmetry".into(), worst[1], 1e-10),
        ("trilinear_cancellation".into(), worst[2], 1e-10),
        ("parseval".into(), worst[3], 1e-10),
        ("leray_idempotence".into(), worst[4], 1e-12),
        ("reality".into(), worst[5], 0.0),
        ("nonlinearity_vs_convolution".into(), worst[6], 1e-10),
        ("action_lower_bound_identity".into(), worst[7], 1e-10),
        ("ou_semigroup".into(), semigroup, 1e-12),
    ])
}

fn check(cli: &Cli) -> Result<(), CliError> {
    let doc = load_config(cli)?;
    let start = Instant::now();
    let suite = identity_suite(doc.truncation()?, doc.seed)?;
    let ms = start.elapsed().as_millis() as u64;
    let hash = doc.hash();
    let mut breached = Vec::new();
    let lines: Vec<ResultLine> = suite
        .iter()
        .map(|(name, value, threshold)| {
            let ok = *value <= *threshold;
            if !ok {
                breached.push(format!("{name} = {value:e} > {threshold:e}"));
            }
            let mut l = ResultLine::new(&hash, format!("check.{name}"), *value, 0.0, 20, ms).with_param("threshold", *threshold);
            if !ok {
                l.flags.push("breach".into());
            }
            l
        })
        .collect();
    emit(cli, &lines)?;
    if breached.is_empty() {
        eprintln!("all {} identity checks passed", lines.len());
        Ok(())
    } else {
        Err(CliError::CheckFailed(breached.join("; ")))
    }
}

fn action(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let doc = load_config(cli)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let p: DiscretePath = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let start = Instant::now();
    let it = action_it(&p)?;
    let jt = action_jt(&p)?;
    let lb = lower_bound_gap(&p)?;
    let ms = start.elapsed().as_millis() as u64;
    let hash = doc.hash();
    let n = p.len() as u64;
    let t = p.t_end() - p.t_start();
    emit(
        cli,
        &[
            ResultLine::new(&hash, "action_it", it.value, 0.0, n, ms).with_param("t", t).with_param("dt", it.dt),
            ResultLine::new(&hash, "action_jt", jt.value, 0.0, n, ms).with_param("t", t).with_param("dt", jt.dt),
            ResultLine::new(&hash, "v_norm_increase", lb.v_increase, 0.0, n, ms)
                .with_param("slack", lb.slack)
                .with_param("identity_defect", lb.identity_defect),
        ],
    )
}

fn quasipotential(cli: &Cli, save: Option<&Path>) -> Result<(), CliError> {
    let doc = load_config(cli)?;
    let plan = doc.plan(ExperimentKind::Simulate)?;
    let target = plan.targets.first().copied().unwrap_or(4.0);
    let x = plan.target_direction(1.0).scaled(target.sqrt());
    let u_x = x.sobolev_norm_sq(1.0);
    let (t, dt) = (plan.solver.t_final, plan.solver.dt);
    let start = Instant::now();
    let reversed = reversed_flow_path(&x, t, dt)?;
    let a_rev = action_it(&reversed)?.value;
    let m = minimize_action(&x, t, plan.solver.n_steps() + 1, None, &MinimizeOptions::default())?;
    let ms = start.elapsed().as_millis() as u64;
    if let Some(p) = save {
        let text = serde_json::to_string(&m.path).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    let hash = doc.hash();
    let rel = (m.action.value - u_x).abs() / u_x;
    let mut min_line = ResultLine::new(&hash, "quasipotential.minimized", m.action.value, 0.0, m.iterations as u64, ms)
        .with_param("target", u_x)
        .with_param("relative_error", rel)
        .with_param("t", t);
    if !m.converged {
        min_line.flags.push("not_converged".into());
    }
    emit(
        cli,
        &[
            ResultLine::new(&hash, "quasipotential.target", u_x, 0.0, 0, ms),
            ResultLine::new(&hash, "quasipotential.reversed_flow", a_rev, 0.0, reversed.len() as u64, ms)
                .with_param("start_v_norm_sq", reversed.first().sobolev_norm_sq(1.0))
                .with_param("t", t),
            min_line,
        ],
    )?;
    eprintln!("minimized action {:.6} vs |x|_V^2 = {u_x:.6} (relative error {rel:.2e})", m.action.value);
    Ok(())
}

fn export(cli: &Cli, input: &Path, kind: &str) -> Result<(), CliError> {
    let lines = results::read_lines(input)?;
    let kind = export::TableKind::parse(kind);
    let rows = match &cli.out {
        Some(p) => export::export_table(&lines, &kind, std::fs::File::create(p)?)?,
        None => export::export_table(&lines, &kind, std::io::stdout().lock())?,
    };
    eprintln!("{rows} rows");
    Ok(())
}

fn rerun_record(cli: &Cli, from: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(from).map_err(|e| CliError::Io(format!("{}: {e}", from.display())))?;
    let record: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", from.display())))?;
    let threads = (cli.threads != 0).then_some(cli.threads);
    let again = rerun(&record, threads)?;
    if let Some(p) = &cli.record {
        write_record(p, &again)?;
    }
    if again.same_estimates(&record) {
        eprintln!("rerun reproduced all {} estimates bit for bit", record.estimates.len());
        Ok(())
    } else if again.consistent_with(&record, 3.0) {
        Err(CliError::CheckFailed("estimates differ in the last bits but agree within 3 sigma".into()))
    } else {
        Err(CliError::CheckFailed("estimates differ by more than 3 sigma".into()))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Check => check(cli),
        Command::Simulate => monte_carlo(cli, ExperimentKind::Simulate),
        Command::Energy => monte_carlo(cli, ExperimentKind::EnergyBalance),
        Command::Invariant => monte_carlo(cli, ExperimentKind::Invariant),
        Command::Tails => monte_carlo(cli, ExperimentKind::Tails),
        Command::Ldp => monte_carlo(cli, ExperimentKind::Ldp),
        Command::Uniformity => monte_carlo(cli, ExperimentKind::Uniformity),
        Command::Oracle => monte_carlo(cli, ExperimentKind::Oracle),
        Command::ActionGrowth => monte_carlo(cli, ExperimentKind::ActionGrowth),
        Command::Action { path } => action(cli, path),
        Command::Quasipotential { save_path } => quasipotential(cli, save_path.as_deref()),
        Command::Export { input, kind } => export(cli, input, kind),
        Command::Merge { inputs } => {
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| CliError::Validation("merge needs --out".into()))?;
            let n = export::merge(inputs, out)?;
            eprintln!("merged {n} records into {}", out.display());
            Ok(())
        }
        Command::Rerun { from } => rerun_record(cli, from),
        Command::Config => {
            let doc = load_config(cli)?;
            print!("{}", toml::to_string(&doc).map_err(|e| CliError::Io(e.to_string()))?);
            eprintln!("config_hash = {}", doc.hash());
            Ok(())
        }
    }
}

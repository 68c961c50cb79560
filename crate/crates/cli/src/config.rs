//! TOML configuration document, validation and canonical hashing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tns_core::dynamics::{Scheme, SolverConfig};
use tns_core::experiments::{ExperimentKind, ExperimentPlan, RadiusScaling};
use tns_core::noise::NoiseSchedule;
use tns_core::spectral::TruncationParams;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub n_max: usize,
    /// Defaults to the smallest FFT-friendly size that dealiases.
    #[serde(default)]
    pub grid_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub beta: f64,
    #[serde(default)]
    pub delta_law: NoiseSchedule,
}

fn default_trajectories() -> usize {
    1000
}

fn default_epsilons() -> Vec<f64> {
    vec![0.5, 0.2, 0.1, 0.05]
}

fn default_tolerance() -> f64 {
    0.2
}

fn default_initial_norm() -> f64 {
    1.0
}

fn default_radii() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}

fn default_radius_scaling() -> RadiusScaling {
    RadiusScaling::SqrtEpsilon
}

fn default_targets() -> Vec<f64> {
    vec![4.0]
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
pub struct ExperimentSection {
    /// Only consulted by `run`-style subcommands that do not fix the kind.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_epsilons")]
    pub epsilon_list: Vec<f64>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_radius_scaling")]
    pub radius_scaling: RadiusScaling,
    /// `‖x‖²_V` of action targets; the first entry is used.
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_initial_norm")]
    pub initial_norm: f64,
    #[serde(default = "default_starts")]
    pub uniformity_starts: usize,
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    #[serde(default = "default_hold_segments")]
    pub hold_segments: usize,
    #[serde(default = "default_hold_radius")]
    pub hold_radius: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: None,
            epsilon_list: default_epsilons(),
            trajectories: default_trajectories(),
            burn_in: None,
            radii: default_radii(),
            radius_scaling: default_radius_scaling(),
            targets: default_targets(),
            tolerance: default_tolerance(),
            initial_norm: default_initial_norm(),
            uniformity_starts: default_starts(),
            start_radius: default_start_radius(),
            hold_segments: default_hold_segments(),
            hold_radius: default_hold_radius(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub truncation: TruncationSection,
    pub noise: NoiseSection,
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        Self {
            truncation: TruncationSection { n_max: 4, grid_size: None },
            noise: NoiseSection {
                beta: 3.0,
                delta_law: NoiseSchedule::default(),
            },
            solver: SolverConfig {
                dt: 1e-2,
                t_final: 5.0,
                scheme: Scheme::EtdRk2,
                record_stride: 10,
                nonlinear: true,
            },
            experiment: ExperimentSection::default(),
            seed: 0,
        }
    }
}

/// Prefixes a core validation error with the config section it came from.
fn in_section(section: &str, e: tns_core::Error) -> CliError {
    match e {
        tns_core::Error::InvalidParameter { name, reason } => CliError::Validation(format!("{section}.{name}: {reason}")),
        other => CliError::Validation(format!("{section}: {other}")),
    }
}

impl ConfigDocument {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let doc: ConfigDocument = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn truncation(&self) -> Result<TruncationParams, CliError> {
        let t = &self.truncation;
        match t.grid_size {
            Some(g) => TruncationParams::new(t.n_max, g),
            None => TruncationParams::with_n_max(t.n_max),
        }
        .map_err(|e| in_section("truncation", e))
    }

    /// Checks every section and reports the first offending field as
    /// `section.field: reason`.
    pub fn validate(&self) -> Result<(), CliError> {
        self.truncation()?;
        tns_core::noise::CovarianceSpec::new(self.noise.beta, 0.0).map_err(|e| in_section("noise", e))?;
        self.noise.delta_law.validate().map_err(|e| in_section("noise.delta_law", e))?;
        self.solver.validate().map_err(|e| in_section("solver", e))?;
        self.plan(ExperimentKind::Simulate)?;
        Ok(())
    }

    /// The experiment plan for `kind` described by this document.
    pub fn plan(&self, kind: ExperimentKind) -> Result<ExperimentPlan, CliError> {
        let e = &self.experiment;
        let plan = ExperimentPlan {
            kind,
            epsilon_list: e.epsilon_list.clone(),
            schedule: self.noise.delta_law,
            beta: self.noise.beta,
            trunc: self.truncation()?,
            solver: self.solver,
            trajectories: e.trajectories,
            burn_in: e.burn_in,
            seed: self.seed,
            initial_norm: e.initial_norm,
            radii: e.radii.clone(),
            radius_scaling: e.radius_scaling,
            targets: e.targets.clone(),
            tolerance: e.tolerance,
            uniformity_starts: e.uniformity_starts,
            start_radius: e.start_radius,
            hold_segments: e.hold_segments,
            hold_radius: e.hold_radius,
        };
        plan.validate().map_err(|e| match e {
            tns_core::Error::InvalidParameter { name, reason } => {
                let section = match name {
                    "beta" => "noise",
                    "dt" | "t_final" | "record_stride" => "solver",
                    "n_max" | "grid_size" => "truncation",
                    _ => "experiment",
                };
                CliError::Validation(format!("{section}.{name}: {reason}"))
            }
            other => CliError::Validation(other.to_string()),
        })?;
        Ok(plan)
    }

    /// Serialization with sorted keys and shortest round-trip floats, so the
    /// hash does not depend on key order or formatting in the source file.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[truncation]
n_max = 4

[noise]
beta = 3.0
delta_law = { kind = "power", c = 1.0, theta = 1.0 }

[solver]
dt = 0.01
t_final = 1.0
scheme = "etd-rk2"
record_stride = 10

[experiment]
epsilon_list = [0.5, 0.2]
trajectories = 100
radii = [1.0, 2.0]
"#;

    #[test]
    fn parses_sample() {
        let doc = ConfigDocument::from_toml(SAMPLE).unwrap();
        assert_eq!(doc.seed, 7);
        assert_eq!(doc.truncation().unwrap().grid_size, 15);
        assert_eq!(doc.solver.scheme, Scheme::EtdRk2);
        assert_eq!(doc.experiment.tolerance, 0.2);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let bad = SAMPLE.replace("record_stride = 10", "record_stride = 10\nstepsize = 3");
        let err = ConfigDocument::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("stepsize"), "{err}");
    }

    #[test]
    fn negative_dt_names_the_field() {
        let bad = SAMPLE.replace("dt = 0.01", "dt = -0.01");
        let err = ConfigDocument::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("solver.dt"), "{err}");
    }

    #[test]
    fn increasing_epsilons_are_rejected() {
        let bad = SAMPLE.replace("[0.5, 0.2]", "[0.2, 0.5]");
        let err = ConfigDocument::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("experiment.epsilon_list"), "{err}");
    }

    #[test]
    fn hash_ignores_layout() {
        let a = ConfigDocument::from_toml(SAMPLE).unwrap();
        let reordered = SAMPLE.replace("seed = 7\n", "") + "\n";
        let reordered = format!("seed = 7\n{reordered}").replace("dt = 0.01", "dt = 1e-2");
        let b = ConfigDocument::from_toml(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn default_round_trips_through_toml() {
        let d = ConfigDocument::default();
        let text = toml::to_string(&d).unwrap();
        assert_eq!(ConfigDocument::from_toml(&text).unwrap(), d);
    }
}

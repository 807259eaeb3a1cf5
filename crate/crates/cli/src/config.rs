//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use bbmmi_core::engine::{Policy, DEFAULT_EVENT_CAP};
use bbmmi_core::models::{Boundary, PiecewisePoly, Region};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_policy() -> Policy {
    Policy::Independent
}

/// Model preset and its parameters. In the file this is the flat `[model]`
/// section with a `preset` key; see [`ModelSection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSection", into = "ModelSection")]
pub enum ModelConfig {
    /// Birth-death benchmark on `{1..cap}`; no cap means unbounded.
    Benchmark { cap: Option<u32>, initial: u32 },
    /// Benchmark chain with `b = 0`, `kappa = cap - x`.
    Killed { cap: u32, initial: u32 },
    /// One state with growth rate `rate` (branching if positive, killing if
    /// negative).
    SingleState { rate: f64 },
    /// Birth-death chain with piecewise-polynomial rates. `birth` and
    /// `death` have one entry per coordinate and read that coordinate;
    /// `branch` and `kill` read the sum of coordinates.
    BirthDeath {
        dim: usize,
        floor: u32,
        cap: Option<u32>,
        boundary: Boundary,
        birth: Vec<PiecewisePoly>,
        death: Vec<PiecewisePoly>,
        branch: PiecewisePoly,
        kill: PiecewisePoly,
        initial: Vec<u32>,
    },
    /// Branching random walk with the regime carried by each particle.
    Brw(BrwConfig),
    /// Branching random walk with a single system-wide regime.
    BrwShared(BrwConfig),
    /// h-transformed neutron walk in a slab.
    Nrw {
        length: f64,
        velocities: Vec<f64>,
        alpha: f64,
        /// Overrides `alpha` with spatially piecewise scattering.
        regions: Option<Vec<Region>>,
        initial_position: f64,
        initial_velocity: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrwConfig {
    pub n: u32,
    pub p: f64,
    pub s_on: f64,
    pub s_off: f64,
    pub rate_draw: f64,
    pub kill: Vec<f64>,
    pub initial_site: u32,
}

/// `initial` is a single value or one value per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Initial {
    One(u32),
    Many(Vec<u32>),
}

/// `kill` is a piecewise polynomial for birth-death chains and a list of
/// per-site rates for the random walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KillField {
    Poly(PiecewisePoly),
    Sites(Vec<f64>),
}

/// The `[model]` section as written in the file. Every key is optional here;
/// which keys apply depends on `preset`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub birth: Option<Vec<PiecewisePoly>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub death: Option<Vec<PiecewisePoly>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<PiecewisePoly>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kill: Option<KillField>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_on: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_off: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_draw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_site: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<Region>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_velocity: Option<usize>,
}

impl ModelSection {
    fn keys(&self) -> Vec<&'static str> {
        let mut k = Vec::new();
        macro_rules! present {
            ($($f:ident),*) => { $(if self.$f.is_some() { k.push(stringify!($f)); })* };
        }
        present!(
            cap,
            initial,
            rate,
            dim,
            floor,
            boundary,
            birth,
            death,
            branch,
            kill,
            n,
            p,
            s_on,
            s_off,
            rate_draw,
            initial_site,
            length,
            velocities,
            alpha,
            regions,
            initial_position,
            initial_velocity
        );
        k
    }
}

fn require<T>(v: Option<T>, key: &str, preset: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("preset {preset:?} needs key `{key}`"))
}

fn single(initial: Option<Initial>) -> Result<u32, String> {
    match initial {
        None => Ok(1),
        Some(Initial::One(x)) => Ok(x),
        Some(Initial::Many(v)) if v.len() == 1 => Ok(v[0]),
        Some(Initial::Many(v)) => Err(format!("`initial` must be a single value, got {} values", v.len())),
    }
}

impl TryFrom<ModelSection> for ModelConfig {
    type Error = String;

    fn try_from(m: ModelSection) -> Result<Self, String> {
        let allowed: &[&str] = match m.preset.as_str() {
            "benchmark" | "killed" => &["cap", "initial"],
            "single-state" => &["rate"],
            "birth-death" => &["dim", "floor", "cap", "boundary", "birth", "death", "branch", "kill", "initial"],
            "brw" | "brw-shared" => &["n", "p", "s_on", "s_off", "rate_draw", "kill", "initial_site"],
            "nrw" => &["length", "velocities", "alpha", "regions", "initial_position", "initial_velocity"],
            other => {
                return Err(format!(
                    "unknown preset {other:?}; expected benchmark, killed, single-state, birth-death, brw, brw-shared or nrw"
                ))
            }
        };
        if let Some(key) = m.keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(format!("key `{key}` does not apply to preset {:?}", m.preset));
        }
        let preset = m.preset.as_str();
        Ok(match preset {
            "benchmark" => ModelConfig::Benchmark {
                cap: m.cap,
                initial: single(m.initial)?,
            },
            "killed" => ModelConfig::Killed {
                cap: require(m.cap, "cap", preset)?,
                initial: single(m.initial)?,
            },
            "single-state" => ModelConfig::SingleState {
                rate: require(m.rate, "rate", preset)?,
            },
            "birth-death" => {
                let kill = match m.kill {
                    None => PiecewisePoly::default(),
                    Some(KillField::Poly(p)) => p,
                    Some(KillField::Sites(_)) => return Err("`kill` must be a piecewise polynomial table".into()),
                };
                ModelConfig::BirthDeath {
                    dim: m.dim.unwrap_or(1),
                    floor: m.floor.unwrap_or(0),
                    cap: m.cap,
                    boundary: m.boundary.unwrap_or_default(),
                    birth: require(m.birth, "birth", preset)?,
                    death: require(m.death, "death", preset)?,
                    branch: m.branch.unwrap_or_default(),
                    kill,
                    initial: match require(m.initial, "initial", preset)? {
                        Initial::One(x) => vec![x],
                        Initial::Many(v) => v,
                    },
                }
            }
            "brw" | "brw-shared" => {
                let kill = match m.kill {
                    None => Vec::new(),
                    Some(KillField::Sites(v)) => v,
                    Some(KillField::Poly(_)) => return Err("`kill` must be a list of per-site rates".into()),
                };
                let c = BrwConfig {
                    n: require(m.n, "n", preset)?,
                    p: m.p.unwrap_or(0.5),
                    s_on: require(m.s_on, "s_on", preset)?,
                    s_off: require(m.s_off, "s_off", preset)?,
                    rate_draw: require(m.rate_draw, "rate_draw", preset)?,
                    kill,
                    initial_site: m.initial_site.unwrap_or(0),
                };
                if preset == "brw" {
                    ModelConfig::Brw(c)
                } else {
                    ModelConfig::BrwShared(c)
                }
            }
            _ => ModelConfig::Nrw {
                length: m.length.unwrap_or(4.0),
                velocities: m.velocities.unwrap_or_else(|| vec![-1.5, -0.5, 0.5, 1.5]),
                alpha: m.alpha.unwrap_or(1.0),
                regions: m.regions,
                initial_position: m.initial_position.unwrap_or(2.0),
                initial_velocity: m.initial_velocity.unwrap_or(0),
            },
        })
    }
}

impl From<ModelConfig> for ModelSection {
    fn from(c: ModelConfig) -> Self {
        let preset = c.name().to_string();
        let base = ModelSection {
            preset,
            ..Default::default()
        };
        match c {
            ModelConfig::Benchmark { cap, initial } => ModelSection {
                cap,
                initial: Some(Initial::One(initial)),
                ..base
            },
            ModelConfig::Killed { cap, initial } => ModelSection {
                cap: Some(cap),
                initial: Some(Initial::One(initial)),
                ..base
            },
            ModelConfig::SingleState { rate } => ModelSection {
                rate: Some(rate),
                ..base
            },
            ModelConfig::BirthDeath {
                dim,
                floor,
                cap,
                boundary,
                birth,
                death,
                branch,
                kill,
                initial,
            } => ModelSection {
                dim: Some(dim),
                floor: Some(floor),
                cap,
                boundary: Some(boundary),
                birth: Some(birth),
                death: Some(death),
                branch: Some(branch),
                kill: Some(KillField::Poly(kill)),
                initial: Some(Initial::Many(initial)),
                ..base
            },
            ModelConfig::Brw(b) | ModelConfig::BrwShared(b) => ModelSection {
                n: Some(b.n),
                p: Some(b.p),
                s_on: Some(b.s_on),
                s_off: Some(b.s_off),
                rate_draw: Some(b.rate_draw),
                kill: Some(KillField::Sites(b.kill)),
                initial_site: Some(b.initial_site),
                ..base
            },
            ModelConfig::Nrw {
                length,
                velocities,
                alpha,
                regions,
                initial_position,
                initial_velocity,
            } => ModelSection {
                length: Some(length),
                velocities: Some(velocities),
                alpha: Some(alpha),
                regions,
                initial_position: Some(initial_position),
                initial_velocity: Some(initial_velocity),
                ..base
            },
        }
    }
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Benchmark { .. } => "benchmark",
            ModelConfig::Killed { .. } => "killed",
            ModelConfig::SingleState { .. } => "single-state",
            ModelConfig::BirthDeath { .. } => "birth-death",
            ModelConfig::Brw(_) => "brw",
            ModelConfig::BrwShared(_) => "brw-shared",
            ModelConfig::Nrw { .. } => "nrw",
        }
    }
}

/// Test function recorded in snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableConfig {
    /// Sum of coordinates, lattice site or position.
    #[default]
    State,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Initial number of particles.
    pub particles: usize,
    pub horizon: f64,
    /// Snapshot spacing; the grid always includes 0 and the horizon.
    pub dt: f64,
    pub replicas: u64,
    pub seed: u64,
    pub workers: usize,
    pub event_cap: u64,
    pub record_events: bool,
    pub observable: ObservableConfig,
    /// Fraction of the horizon discarded by stationary metrics.
    pub burn_in: f64,
    /// Truncation used by the oracle for unbounded chains.
    pub oracle_cap: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            particles: 10,
            horizon: 1.0,
            dt: 0.1,
            replicas: 1,
            seed: 1,
            workers: 1,
            event_cap: DEFAULT_EVENT_CAP,
            record_events: false,
            observable: ObservableConfig::State,
            burn_in: 0.2,
            oracle_cap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaConfig {
    /// Horizon of the single-trajectory estimators.
    pub single_horizon: f64,
    /// Window of the windowed estimator and of the particle filter.
    pub window: f64,
    pub pf_horizon: f64,
    pub pf_systems: usize,
    pub ess_threshold: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            single_horizon: 4000.0,
            window: 0.4,
            pf_horizon: 40.0,
            pf_systems: 100,
            ess_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

pub const OUT_DIR_ENV: &str = "BBMMI_OUT_DIR";

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML form, used as the config echo in output headers.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unserialisable config: {e}>"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let run = &self.run;
        if run.particles == 0 {
            return bad("run.particles must be at least 1".into());
        }
        if !(run.horizon >= 0.0 && run.horizon.is_finite()) {
            return bad(format!(
                "run.horizon must be finite and nonnegative, got {}",
                run.horizon
            ));
        }
        if !(run.dt > 0.0) {
            return bad(format!("run.dt must be positive, got {}", run.dt));
        }
        if run.replicas == 0 {
            return bad("run.replicas must be at least 1".into());
        }
        if run.workers == 0 {
            return bad("run.workers must be at least 1".into());
        }
        if !(0.0..1.0).contains(&run.burn_in) {
            return bad(format!("run.burn_in must lie in [0, 1), got {}", run.burn_in));
        }
        if let Policy::NminNmax { nmin, nmax } = self.policy {
            Policy::nmin_nmax(nmin, nmax).map_err(|e| CliError::Config(format!("policy: {e}")))?;
        }
        let l = &self.lambda;
        if !(l.window > 0.0 && l.pf_horizon > 0.0 && l.single_horizon > 0.0) {
            return bad("lambda horizons and window must be positive".into());
        }
        if l.pf_systems == 0 {
            return bad("lambda.pf_systems must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&l.ess_threshold) {
            return bad(format!(
                "lambda.ess_threshold must lie in [0, 1], got {}",
                l.ess_threshold
            ));
        }
        Ok(())
    }

    /// Output directory: command line, then environment, then config,
    /// then the current directory.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
            return PathBuf::from(p);
        }
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn preset_name(&self) -> &'static str {
        self.model.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::parse("[model]\npreset = \"benchmark\"\ncap = 10\n").unwrap();
        assert_eq!(
            c.model,
            ModelConfig::Benchmark {
                cap: Some(10),
                initial: 1
            }
        );
        assert_eq!(c.policy, Policy::Independent);
        assert_eq!(c.run.replicas, 1);
    }

    #[test]
    fn policy_and_run_sections() {
        let text = r#"
[model]
preset = "killed"
cap = 5

[policy]
kind = "nmin-nmax"
nmin = 2
nmax = 6

[run]
particles = 3
horizon = 2.0
replicas = 7
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.policy, Policy::NminNmax { nmin: 2, nmax: Some(6) });
        assert_eq!(c.run.particles, 3);
        assert_eq!(c.run.dt, 0.1);
        let again = ExperimentConfig::parse(&c.echo()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("[model]\npreset = \"benchmark\"\ncap = \"ten\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::parse("[model]\npreset = \"benchmark\"\n[run]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn semantic_checks() {
        let base = "[model]\npreset = \"benchmark\"\ncap = 10\n";
        let nmin_one = format!("{base}[policy]\nkind = \"nmin-nmax\"\nnmin = 1\nnmax = 4\n");
        assert!(matches!(ExperimentConfig::parse(&nmin_one), Err(CliError::Config(_))));
        let bad_dt = format!("{base}[run]\ndt = 0.0\n");
        assert!(ExperimentConfig::parse(&bad_dt).is_err());
    }
    #[test]
    fn keys_must_match_preset() {
        let err = ExperimentConfig::parse("[model]\npreset = \"single-state\"\nrate = 1.0\ncap = 4\n").unwrap_err();
        assert!(err.to_string().contains("cap"), "{err}");
        assert!(ExperimentConfig::parse("[model]\npreset = \"nope\"\n").is_err());
    }

    #[test]
    fn brw_round_trip() {
        let text = "[model]\npreset = \"brw-shared\"\nn = 6\np = 0.5\ns_on = 1.0\ns_off = 3.0\nrate_draw = 2.0\n\
                    kill = [0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4]\ninitial_site = 2\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.model.name(), "brw-shared");
        assert_eq!(ExperimentConfig::parse(&c.echo()).unwrap(), c);
    }
}

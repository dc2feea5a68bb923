//! Experiment descriptions.
//!
//! [`ScenarioConfig`] is the TOML document users write; [`ScenarioSpec`] is
//! the fully resolved description (topology built, noise profile and
//! optimal system drawn) consumed by the simulator and the theory.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::generate_optimal_system;
use crate::theory::{mean_stability_bound, MomentCoefficients};
use crate::topology::{Topology, TopologyDocument};
use crate::weights::{CombinationMatrix, CombinationRule};

/// ChaCha stream used when drawing a noise-variance profile.
pub(crate) const NOISE_PROFILE_STREAM: u64 = 1;
/// ChaCha stream used when drawing the optimal system.
pub(crate) const OPTIMAL_SYSTEM_STREAM: u64 = 2;
/// Realization `r` draws from stream `REALIZATION_STREAM_BASE + r`.
pub(crate) const REALIZATION_STREAM_BASE: u64 = 1 << 32;

/// Pseudo-random generator used for every draw in a scenario.
///
/// `chacha8` is ChaCha with 8 rounds as implemented by `rand_chacha`, keyed
/// by `seed_from_u64(seed)` and separated into independent streams with
/// `set_stream`. Gaussian draws use the ziggurat `StandardNormal` sampler of
/// `rand_distr`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RngAlgorithm {
    #[default]
    #[serde(rename = "chacha8")]
    ChaCha8,
}

impl RngAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            RngAlgorithm::ChaCha8 => "chacha8",
        }
    }

    pub(crate) fn stream(self, seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

impl fmt::Display for RngAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub topology: Topology,
    pub rule: CombinationRule,
    pub mu: f64,
    pub filter_length: usize,
    pub p_zeta: f64,
    pub sigma_u2: f64,
    pub noise_variances: Vec<f64>,
    pub optimal_system: Vec<f64>,
    pub horizon: usize,
    pub realizations: usize,
    pub master_seed: u64,
    pub rng: RngAlgorithm,
}

impl ScenarioSpec {
    /// A spec with `p_ζ = 1`, `σ_u² = 1`, every `σ_v_k² = 0.01` and an
    /// optimal system drawn from seed 0. Adjust with the `with_*` methods.
    pub fn new(topology: Topology, rule: CombinationRule, mu: f64, filter_length: usize) -> Self {
        let v = topology.node_count();
        ScenarioSpec {
            topology,
            rule,
            mu,
            filter_length,
            p_zeta: 1.0,
            sigma_u2: 1.0,
            noise_variances: vec![0.01; v],
            optimal_system: generate_optimal_system(filter_length.max(1), 0),
            horizon: 1000,
            realizations: 100,
            master_seed: 0,
            rng: RngAlgorithm::ChaCha8,
        }
    }

    pub fn with_p_zeta(mut self, p_zeta: f64) -> Self {
        self.p_zeta = p_zeta;
        self
    }

    pub fn with_sigma_u2(mut self, sigma_u2: f64) -> Self {
        self.sigma_u2 = sigma_u2;
        self
    }

    pub fn with_noise_variances(mut self, noise_variances: Vec<f64>) -> Self {
        self.noise_variances = noise_variances;
        self
    }

    /// Noise variances drawn uniformly from `[lo, hi]`.
    pub fn with_noise_range(mut self, lo: f64, hi: f64, seed: u64) -> Self {
        self.noise_variances = noise_profile(self.topology.node_count(), lo, hi, seed, self.rng);
        self
    }

    pub fn with_optimal_system(mut self, optimal_system: Vec<f64>) -> Self {
        self.optimal_system = optimal_system;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_realizations(mut self, realizations: usize) -> Self {
        self.realizations = realizations;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_rule(mut self, rule: CombinationRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn combination_matrix(&self) -> CombinationMatrix {
        self.rule.build(&self.topology)
    }

    /// `‖w_o‖²`, the initial deviation of every node.
    pub fn optimal_norm_sq(&self) -> f64 {
        self.optimal_system.iter().map(|w| w * w).sum()
    }

    pub fn mean_noise_variance(&self) -> f64 {
        self.noise_variances.iter().sum::<f64>() / self.noise_variances.len() as f64
    }

    pub fn moment_coefficients(&self) -> MomentCoefficients {
        MomentCoefficients::new(self.mu, self.p_zeta, self.sigma_u2, self.filter_length)
    }

    /// Every invariant violation and advisory warning.
    pub fn issues(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            issues.push(Issue::error(format!("mu = {} must be a positive finite number", self.mu)));
        }
        if self.filter_length == 0 {
            issues.push(Issue::error("filter_length must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_zeta) {
            issues.push(Issue::error(format!("p_zeta = {} outside [0, 1]", self.p_zeta)));
        }
        if !(self.sigma_u2 > 0.0 && self.sigma_u2.is_finite()) {
            issues.push(Issue::error(format!("sigma_u2 = {} must be positive", self.sigma_u2)));
        }
        if self.noise_variances.len() != self.node_count() {
            issues.push(Issue::error(format!(
                "{} noise variances for {} nodes",
                self.noise_variances.len(),
                self.node_count()
            )));
        }
        if let Some((k, s)) = self
            .noise_variances
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s > 0.0 && s.is_finite()))
        {
            issues.push(Issue::error(format!("noise variance of node {k} is {s}, must be positive")));
        }
        if self.optimal_system.len() != self.filter_length {
            issues.push(Issue::error(format!(
                "optimal system has {} taps but filter_length is {}",
                self.optimal_system.len(),
                self.filter_length
            )));
        }
        if self.optimal_system.iter().any(|w| !w.is_finite()) {
            issues.push(Issue::error("optimal system has non-finite coefficients"));
        }
        if self.horizon == 0 {
            issues.push(Issue::error("horizon must be at least 1"));
        }
        if self.realizations == 0 {
            issues.push(Issue::error("realizations must be at least 1"));
        }
        if let Err(e) = self.combination_matrix().validate(&self.topology) {
            issues.push(Issue::error(e.to_string()));
        }
        if self.filter_length > 0 && self.sigma_u2 > 0.0 {
            let bound = mean_stability_bound(self.sigma_u2, self.filter_length);
            if self.mu >= bound {
                issues.push(Issue::warning(format!(
                    "mu = {} exceeds the mean stability bound 2/((M+2)·sigma_u2) = {bound:.6}; \
                     stability then depends on cooperation and p_zeta",
                    self.mu
                )));
            }
        }
        issues
    }

    /// Fails on the first invariant violation; warnings are ignored.
    pub fn validate(&self) -> Result<()> {
        match self.issues().into_iter().find(|i| i.severity == Severity::Error) {
            Some(issue) => Err(Error::Config(issue.message)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl Issue {
    fn error(message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn noise_profile(v: usize, lo: f64, hi: f64, seed: u64, alg: RngAlgorithm) -> Vec<f64> {
    let mut rng = alg.stream(seed, NOISE_PROFILE_STREAM);
    (0..v)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTopology {
    pub node_count: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteTopology {
    pub node_count: usize,
}

/// Where a scenario's graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    /// Edge-list document on disk, relative to the config file.
    File(PathBuf),
    Random {
        random: RandomTopology,
    },
    Complete {
        complete: CompleteTopology,
    },
    Inline(TopologyDocument),
}

impl TopologySource {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Topology> {
        match self {
            TopologySource::File(path) => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Topology::load(path)
            }
            TopologySource::Random { random } => {
                Topology::random_connected(random.node_count, random.edge_prob, random.seed)
            }
            TopologySource::Complete { complete } => Topology::complete_graph(complete.node_count),
            TopologySource::Inline(doc) => Topology::from_document(doc),
        }
    }
}

fn default_sigma_u2() -> f64 {
    1.0
}

/// Scenario config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub mu: f64,
    pub filter_length: usize,
    pub p_zeta: f64,
    #[serde(default = "default_sigma_u2")]
    pub sigma_u2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variances: Option<Vec<f64>>,
    /// `[lo, hi]` for uniformly drawn variances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_range: Option<[f64; 2]>,
    /// Seed of the noise profile draw; defaults to `master_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_system: Option<Vec<f64>>,
    /// Seed of the optimal system draw; defaults to `master_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_system_seed: Option<u64>,
    pub rule: CombinationRule,
    pub horizon: usize,
    pub realizations: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub rng: RngAlgorithm,
    pub topology: TopologySource,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

const PRESETS: [(&str, &str); 4] = [
    ("scenario1", include_str!("../presets/scenario1.toml")),
    ("scenario2", include_str!("../presets/scenario2.toml")),
    ("scenario3", include_str!("../presets/scenario3.toml")),
    ("scenario4", include_str!("../presets/scenario4.toml")),
];

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; relative topology paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ScenarioConfig::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(name, _)| *name)
    }

    /// Built-in scenarios on a seeded 20-node graph.
    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| ScenarioConfig::from_toml_str(text).expect("preset parses"))
    }

    /// Builds the topology and draws any generated quantities.
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let topology = self.topology.build(self.base_dir.as_deref())?;
        let v = topology.node_count();
        let noise_variances = match (&self.noise_variances, self.noise_range) {
            (Some(values), None) => values.clone(),
            (None, Some([lo, hi])) => {
                if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::Config(format!(
                        "noise_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
                    )));
                }
                noise_profile(v, lo, hi, self.noise_seed.unwrap_or(self.master_seed), self.rng)
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either noise_variances or noise_range, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config("one of noise_variances or noise_range is required".into()))
            }
        };
        let optimal_system = match &self.optimal_system {
            Some(w) => w.clone(),
            None if self.filter_length == 0 => Vec::new(),
            None => generate_optimal_system(
                self.filter_length,
                self.optimal_system_seed.unwrap_or(self.master_seed),
            ),
        };
        Ok(ScenarioSpec {
            topology,
            rule: self.rule,
            mu: self.mu,
            filter_length: self.filter_length,
            p_zeta: self.p_zeta,
            sigma_u2: self.sigma_u2,
            noise_variances,
            optimal_system,
            horizon: self.horizon,
            realizations: self.realizations,
            master_seed: self.master_seed,
            rng: self.rng,
        })
    }

    /// Self-contained document for a resolved spec: inline topology and
    /// explicit noise profile and optimal system, so nothing is redrawn.
    pub fn from_spec(spec: &ScenarioSpec, name: Option<String>) -> Self {
        ScenarioConfig {
            name,
            description: None,
            mu: spec.mu,
            filter_length: spec.filter_length,
            p_zeta: spec.p_zeta,
            sigma_u2: spec.sigma_u2,
            noise_variances: Some(spec.noise_variances.clone()),
            noise_range: None,
            noise_seed: None,
            optimal_system: Some(spec.optimal_system.clone()),
            optimal_system_seed: None,
            rule: spec.rule,
            horizon: spec.horizon,
            realizations: spec.realizations,
            master_seed: spec.master_seed,
            rng: spec.rng,
            topology: TopologySource::Inline(spec.topology.to_document()),
            base_dir: None,
        }
    }

    /// Resolves and collects every issue instead of stopping at the first.
    pub fn check(&self) -> Vec<Issue> {
        match self.resolve() {
            Ok(spec) => spec.issues(),
            Err(e) => vec![Issue::error(e.to_string())],
        }
    }
}

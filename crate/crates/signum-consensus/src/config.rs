//! JSON configuration schemas and their translation to domain types.
//!
//! Node indices and the `x_i_l` naming are 1-based in every external
//! format, matching the figure conventions; the library itself is 0-based.
//! Validation errors carry the offending field path.

use serde::Deserialize;
use std::path::PathBuf;

use crate::graph::{build_graph, Graph};
use crate::protocol::{
    lipschitz_law, AgentLaw, LipschitzKind, Mode, NormIndex, ProtocolSpec, StateVector,
};
use crate::simulate::IntegratorConfig;

/// A schema or semantic violation; the message names the offending field.
#[derive(Debug, thiserror::Error, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(field: &str, msg: impl std::fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("{field}: {msg}")))
}

/// `{"n": 5, "edges": [[1,2,1.0], [2,3], ...]}`; weights default to 1.0.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub n: usize,
    pub edges: Vec<EdgeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EdgeConfig {
    Weighted(usize, usize, f64),
    Unweighted(usize, usize),
}

impl GraphConfig {
    pub fn build(&self, field: &str) -> Result<Graph, ConfigError> {
        let edges: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .map(|e| match *e {
                EdgeConfig::Weighted(i, j, w) => (i, j, w),
                EdgeConfig::Unweighted(i, j) => (i, j, 1.0),
            })
            .collect();
        build_graph(self.n, &edges).or_else(|e| err(&format!("{field}.edges"), e))
    }
}

/// Norm index as a JSON number or string; `"inf"` for the infinity norm.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NormIndexConfig {
    Number(f64),
    Text(String),
}

impl NormIndexConfig {
    pub fn build(&self, field: &str) -> Result<NormIndex, ConfigError> {
        match self {
            NormIndexConfig::Number(p) => NormIndex::finite(*p).or_else(|e| err(field, e)),
            NormIndexConfig::Text(s) if s == "inf" => Ok(NormIndex::Infinity),
            NormIndexConfig::Text(s) => match s.parse::<f64>() {
                Ok(p) => NormIndex::finite(p).or_else(|e| err(field, e)),
                Err(_) => err(field, format!("expected a number or \"inf\", got `{s}`")),
            },
        }
    }
}

/// `{"k":2, "p":"2", "mode":"dp", "agents":["sign", {"lipschitz":{...}}]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub k: usize,
    pub p: NormIndexConfig,
    pub mode: String,
    pub agents: Vec<AgentConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AgentConfig {
    Named(String),
    Lipschitz { lipschitz: LipschitzConfig },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    pub kind: String,
    pub gain: f64,
}

impl ProtocolConfig {
    pub fn build(&self, field: &str) -> Result<ProtocolSpec, ConfigError> {
        if self.k == 0 {
            return err(&format!("{field}.k"), "agent dimension must be >= 1");
        }
        let p = self.p.build(&format!("{field}.p"))?;
        let mode = match self.mode.as_str() {
            "dp" => Mode::DirectionPreserving,
            "cw" => Mode::ComponentWise,
            other => {
                return err(
                    &format!("{field}.mode"),
                    format!("expected \"dp\" or \"cw\", got `{other}`"),
                )
            }
        };
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("{field}.agents[{i}]");
            let law = match a {
                AgentConfig::Named(s) if s == "sign" => AgentLaw::Signum,
                AgentConfig::Named(s) => {
                    return err(
                        &path,
                        format!("unknown agent law `{s}`; expected \"sign\" or a lipschitz object"),
                    )
                }
                AgentConfig::Lipschitz { lipschitz } => {
                    let kind = LipschitzKind::from_name(&lipschitz.kind)
                        .or_else(|e| err(&format!("{path}.lipschitz.kind"), e))?;
                    lipschitz_law(kind, lipschitz.gain)
                        .or_else(|e| err(&format!("{path}.lipschitz.gain"), e))?
                }
            };
            agents.push(law);
        }
        Ok(ProtocolSpec::new(self.k, p, mode, agents))
    }
}

/// Explicit state matrix (n rows of k values) or a seeded ball sample.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Matrix(Vec<Vec<f64>>),
    Random {
        #[serde(rename = "random_in_ball")]
        random_in_ball: RandomBallConfig,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBallConfig {
    pub p: NormIndexConfig,
    pub radius: f64,
    /// Required unless a seed is injected via `--seed`; reproducibility
    /// contract.
    pub seed: Option<u64>,
}

impl InitialConfig {
    /// Resolve to a concrete state. `seed_override` comes from the CLI.
    pub fn build(
        &self,
        field: &str,
        n: usize,
        k: usize,
        seed_override: Option<u64>,
    ) -> Result<StateVector, ConfigError> {
        match self {
            InitialConfig::Matrix(rows) => {
                if rows.len() != n {
                    return err(field, format!("expected {n} rows, got {}", rows.len()));
                }
                if rows.iter().any(|r| r.len() != k) {
                    return err(field, format!("every row must have k = {k} entries"));
                }
                Ok(StateVector::from_rows(rows))
            }
            InitialConfig::Random { random_in_ball } => {
                let p = random_in_ball
                    .p
                    .build(&format!("{field}.random_in_ball.p"))?;
                if !(random_in_ball.radius > 0.0) {
                    return err(
                        &format!("{field}.random_in_ball.radius"),
                        "radius must be > 0",
                    );
                }
                let Some(seed) = seed_override.or(random_in_ball.seed) else {
                    return err(
                        &format!("{field}.random_in_ball.seed"),
                        "seed is required for random initial states (pass one here or via --seed)",
                    );
                };
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                Ok(crate::protocol::sample_state_in_ball(
                    n,
                    k,
                    p,
                    random_in_ball.radius,
                    &mut rng,
                ))
            }
        }
    }
}

/// Integrator overrides; missing fields take the documented defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOverrides {
    pub h: Option<f64>,
    pub epsilon: Option<f64>,
    pub t_max: Option<f64>,
    pub consensus_tol: Option<f64>,
    pub record_stride: Option<usize>,
}

impl IntegratorOverrides {
    pub fn build(&self, field: &str) -> Result<IntegratorConfig, ConfigError> {
        let d = IntegratorConfig::default();
        let cfg = IntegratorConfig {
            h: self.h.unwrap_or(d.h),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            t_max: self.t_max.unwrap_or(d.t_max),
            consensus_tol: self.consensus_tol.unwrap_or(d.consensus_tol),
            record_stride: self.record_stride.unwrap_or(d.record_stride),
        };
        cfg.validate().or_else(|e| err(field, e))?;
        Ok(cfg)
    }
}

/// Top-level config for `simulate` and the bundled reproduction scenarios.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphConfig,
    pub protocol: ProtocolConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub integrator: IntegratorOverrides,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

/// Fully validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Graph,
    pub spec: ProtocolSpec,
    pub x0: StateVector,
    pub integrator: IntegratorConfig,
    pub outputs: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn build(&self, seed_override: Option<u64>) -> Result<Scenario, ConfigError> {
        let graph = self.graph.build("graph")?;
        let spec = self.protocol.build("protocol")?;
        if spec.agents.len() != graph.n() {
            return err(
                "protocol.agents",
                format!(
                    "expected {} entries to match graph.n, got {}",
                    graph.n(),
                    spec.agents.len()
                ),
            );
        }
        let x0 = self
            .initial
            .build("initial", graph.n(), spec.k, seed_override)?;
        let integrator = self.integrator.build("integrator")?;
        Ok(Scenario {
            graph,
            spec,
            x0,
            outputs: self.outputs.clone(),
            integrator,
        })
    }
}

/// One matrix cell: a Lipschitz-cardinality with its initial-state rule.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixCellConfig {
    pub cardinality: usize,
    /// `"random"` (ball sample) or `"witness"` (necessity construction).
    pub initial: String,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorOverrides,
}

/// Optional extra cell: the two-agent path with all-signum agents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoAgentCellConfig {
    #[serde(default)]
    pub integrator: IntegratorOverrides,
}

/// Config for the theorem-matrix command.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub graph: GraphConfig,
    pub k: usize,
    pub p: NormIndexConfig,
    pub modes: Vec<String>,
    pub seeds: Vec<u64>,
    pub cells: Vec<MatrixCellConfig>,
    #[serde(default)]
    pub two_agent_cell: Option<TwoAgentCellConfig>,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

/// Config for `spectrum`: a graph, optionally a protocol and initial state
/// for the convergence-time bound.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub graph: GraphConfig,
    #[serde(default)]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
}

/// Config for `filippov-check`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilippovCheckConfig {
    pub graph: GraphConfig,
    pub protocol: ProtocolConfig,
    /// State matrix (n rows, k columns) at which the field map is evaluated.
    pub state: Vec<Vec<f64>>,
    /// Optional flat point (length n*k) for a membership query against the
    /// outer field map.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    /// Also compute the Example-1 drift interval (requires the uniform
    /// triangle scenario).
    #[serde(default)]
    pub drift_interval: bool,
}

/// Parse a JSON config of type `T` with schema errors mapped to
/// [`ConfigError`].
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
}

//! Per-agent control laws and the closed-loop consensus field `x' = f(-L_bar x)`.
//!
//! Agents are either signum-controlled (direction-preserving or
//! component-wise) or carry a locally Lipschitz direction-preserving law.
//! All functions here are single-valued: the signum of a zero argument is
//! zero. The set-valued treatment lives in [`crate::filippov`].

use nalgebra::DVector;
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("invalid norm index {0}: p must lie in [1, inf]")]
    InvalidNormIndex(f64),
    #[error("non-positive gain {0}")]
    NonPositiveGain(f64),
    #[error("unknown Lipschitz law kind `{0}`")]
    UnknownKind(String),
    #[error("assignment length {got} does not match agent count {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("agent index {idx} out of range for n = {n}")]
    IndexOutOfRange { idx: usize, n: usize },
}

/// Norm index `p in [1, inf]`. Infinity is a distinct variant, never a
/// float sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormIndex {
    Finite(f64),
    Infinity,
}

impl NormIndex {
    pub const ONE: NormIndex = NormIndex::Finite(1.0);
    pub const TWO: NormIndex = NormIndex::Finite(2.0);
    pub const INF: NormIndex = NormIndex::Infinity;

    pub fn finite(p: f64) -> Result<Self, ProtocolError> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(ProtocolError::InvalidNormIndex(p));
        }
        Ok(NormIndex::Finite(p))
    }

    /// The l_p norm of `v`.
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        match *self {
            NormIndex::Infinity => v.iter().fold(0.0, |m, &x| m.max(x.abs())),
            NormIndex::Finite(1.0) => v.iter().map(|x| x.abs()).sum(),
            NormIndex::Finite(2.0) => v.norm(),
            NormIndex::Finite(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    /// Hoelder conjugate: `1/p + 1/q = 1`, with `1 <-> inf`.
    pub fn dual(&self) -> NormIndex {
        match *self {
            NormIndex::Infinity => NormIndex::Finite(1.0),
            NormIndex::Finite(1.0) => NormIndex::Infinity,
            NormIndex::Finite(p) => NormIndex::Finite(p / (p - 1.0)),
        }
    }
}

impl std::fmt::Display for NormIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            NormIndex::Finite(p) => write!(f, "{p}"),
            NormIndex::Infinity => write!(f, "inf"),
        }
    }
}

/// Stacked agent states `x in R^{n k}`, addressable per agent block.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    data: DVector<f64>,
    n: usize,
    k: usize,
}

impl StateVector {
    pub fn zeros(n: usize, k: usize) -> Self {
        StateVector {
            data: DVector::zeros(n * k),
            n,
            k,
        }
    }

    pub fn from_flat(data: DVector<f64>, n: usize, k: usize) -> Self {
        assert_eq!(data.len(), n * k, "flat length must equal n*k");
        StateVector { data, n, k }
    }

    /// One row per agent, `k` entries per row.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(n > 0, "at least one agent");
        let k = rows[0].len();
        assert!(k > 0, "at least one component");
        let mut data = DVector::zeros(n * k);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), k, "ragged state matrix");
            for (l, &v) in row.iter().enumerate() {
                data[i * k + l] = v;
            }
        }
        StateVector { data, n, k }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn flat(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut DVector<f64> {
        &mut self.data
    }

    pub fn block(&self, i: usize) -> DVector<f64> {
        assert!(i < self.n);
        DVector::from_fn(self.k, |l, _| self.data[i * self.k + l])
    }

    pub fn set_block(&mut self, i: usize, v: &DVector<f64>) {
        assert!(i < self.n);
        assert_eq!(v.len(), self.k);
        for l in 0..self.k {
            self.data[i * self.k + l] = v[l];
        }
    }

    pub fn component(&self, i: usize, l: usize) -> f64 {
        self.data[i * self.k + l]
    }

    /// Mean of the agent blocks.
    pub fn block_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.k);
        for i in 0..self.n {
            for l in 0..self.k {
                mean[l] += self.data[i * self.k + l];
            }
        }
        mean / self.n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Kinds of Lipschitz direction-preserving laws shipped with the toolkit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzKind {
    /// `y -> gain * y`.
    Identity,
    /// `y -> gain * y / (1 + ||y||_p)`; per scalar component in
    /// component-wise mode.
    SaturatedRadial,
}

impl LipschitzKind {
    /// Parse the external name used in configs.
    pub fn from_name(name: &str) -> Result<Self, ProtocolError> {
        match name {
            "identity" => Ok(LipschitzKind::Identity),
            "saturated_radial" => Ok(LipschitzKind::SaturatedRadial),
            other => Err(ProtocolError::UnknownKind(other.to_string())),
        }
    }
}

/// A single agent's control law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentLaw {
    Signum,
    Lipschitz { kind: LipschitzKind, gain: f64 },
}

/// Validated constructor for the Lipschitz family.
pub fn lipschitz_law(kind: LipschitzKind, gain: f64) -> Result<AgentLaw, ProtocolError> {
    if !(gain > 0.0) {
        return Err(ProtocolError::NonPositiveGain(gain));
    }
    Ok(AgentLaw::Lipschitz { kind, gain })
}

/// How the signum acts on vector arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    DirectionPreserving,
    ComponentWise,
}

/// Protocol description: agent dimension, norm index, signum mode and the
/// per-agent law assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub k: usize,
    pub p: NormIndex,
    pub mode: Mode,
    pub agents: Vec<AgentLaw>,
}

impl ProtocolSpec {
    pub fn new(k: usize, p: NormIndex, mode: Mode, agents: Vec<AgentLaw>) -> Self {
        assert!(k >= 1, "agent dimension must be >= 1");
        ProtocolSpec { k, p, mode, agents }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn validate_for(&self, g: &Graph) -> Result<(), ProtocolError> {
        if self.agents.len() != g.n() {
            return Err(ProtocolError::AssignmentLength {
                expected: g.n(),
                got: self.agents.len(),
            });
        }
        Ok(())
    }

    /// Indices of agents with a Lipschitz law (the set `I_c`).
    pub fn lipschitz_agents(&self) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter_map(|(i, law)| matches!(law, AgentLaw::Lipschitz { .. }).then_some(i))
            .collect()
    }

    pub fn all_signum(&self) -> bool {
        self.agents
            .iter()
            .all(|law| matches!(law, AgentLaw::Signum))
    }

    /// Largest gain among the Lipschitz agents, if any.
    pub fn max_lipschitz_gain(&self) -> Option<f64> {
        self.agents
            .iter()
            .filter_map(|law| match law {
                AgentLaw::Lipschitz { gain, .. } => Some(*gain),
                AgentLaw::Signum => None,
            })
            .fold(None, |m, g| Some(m.map_or(g, |m: f64| m.max(g))))
    }

    /// Evaluate agent `i`'s law at argument `w` (single-valued selection).
    pub fn apply_law(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        match self.agents[i] {
            AgentLaw::Signum => match self.mode {
                Mode::DirectionPreserving => sign_dp(w, self.p),
                Mode::ComponentWise => sign_cw(w),
            },
            AgentLaw::Lipschitz { kind, gain } => apply_lipschitz(kind, gain, self.mode, self.p, w),
        }
    }

    /// Like [`Self::apply_law`] with the signum replaced by its
    /// boundary-layer saturation of width `eps`.
    pub fn apply_law_regularized(&self, i: usize, w: &DVector<f64>, eps: f64) -> DVector<f64> {
        match self.agents[i] {
            AgentLaw::Signum => match self.mode {
                Mode::DirectionPreserving => {
                    let norm = self.p.norm(w);
                    w / norm.max(eps)
                }
                Mode::ComponentWise => w.map(|c| c / c.abs().max(eps)),
            },
            AgentLaw::Lipschitz { kind, gain } => apply_lipschitz(kind, gain, self.mode, self.p, w),
        }
    }
}

fn apply_lipschitz(
    kind: LipschitzKind,
    gain: f64,
    mode: Mode,
    p: NormIndex,
    w: &DVector<f64>,
) -> DVector<f64> {
    match (kind, mode) {
        (LipschitzKind::Identity, _) => w * gain,
        (LipschitzKind::SaturatedRadial, Mode::DirectionPreserving) => {
            w * (gain / (1.0 + p.norm(w)))
        }
        (LipschitzKind::SaturatedRadial, Mode::ComponentWise) => {
            w.map(|c| gain * c / (1.0 + c.abs()))
        }
    }
}

/// Direction-preserving signum: `w / ||w||_p` for nonzero `w`, zero at zero.
pub fn sign_dp(w: &DVector<f64>, p: NormIndex) -> DVector<f64> {
    let norm = p.norm(w);
    if norm == 0.0 {
        DVector::zeros(w.len())
    } else {
        w / norm
    }
}

/// Component-wise signum with `sign(0) = 0`.
pub fn sign_cw(w: &DVector<f64>) -> DVector<f64> {
    w.map(|c| {
        if c > 0.0 {
            1.0
        } else if c < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Neighbor sum of agent `i`: `sum_j a_ij (x_j - x_i)`, i.e. minus the i-th
/// row block of `L_bar x`.
pub fn neighbor_sum(g: &Graph, x: &StateVector, i: usize) -> Result<DVector<f64>, ProtocolError> {
    if i >= g.n() {
        return Err(ProtocolError::IndexOutOfRange { idx: i, n: g.n() });
    }
    let k = x.k();
    let mut acc = DVector::zeros(k);
    for &(j, w) in g.neighbors(i) {
        for l in 0..k {
            acc[l] += w * (x.component(j, l) - x.component(i, l));
        }
    }
    Ok(acc)
}

/// Uniform sample from the closed p-ball of the given radius in `R^k`, by
/// rejection from the enclosing cube (fine for desk-scale k).
pub fn sample_block_in_ball<R: rand::Rng>(
    k: usize,
    p: NormIndex,
    radius: f64,
    rng: &mut R,
) -> DVector<f64> {
    loop {
        let cand = DVector::from_fn(k, |_, _| rng.gen_range(-radius..radius));
        if p.norm(&cand) <= radius {
            return cand;
        }
    }
}

/// Stacked state with every agent block drawn independently from the p-ball.
pub fn sample_state_in_ball<R: rand::Rng>(
    n: usize,
    k: usize,
    p: NormIndex,
    radius: f64,
    rng: &mut R,
) -> StateVector {
    let mut x = StateVector::zeros(n, k);
    for i in 0..n {
        x.set_block(i, &sample_block_in_ball(k, p, radius, rng));
    }
    x
}

/// Closed-loop vector field: block `i` is `f_i(sum_j a_ij (x_j - x_i))`.
/// Discontinuous laws are evaluated pointwise (signum of zero is zero).
pub fn eval_field(
    g: &Graph,
    spec: &ProtocolSpec,
    x: &StateVector,
) -> Result<StateVector, ProtocolError> {
    spec.validate_for(g)?;
    let mut out = StateVector::zeros(x.n(), x.k());
    for i in 0..g.n() {
        let w = neighbor_sum(g, x, i)?;
        out.set_block(i, &spec.apply_law(i, &w));
    }
    Ok(out)
}

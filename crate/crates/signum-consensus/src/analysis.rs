//! Lyapunov evaluation, convergence classification, the necessity-witness
//! construction and the theorem-level convergence-time bound.

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::graph::{algebraic_connectivity, laplacian, schur_lift, Graph, LaplacianMatrix};
use crate::protocol::{NormIndex, ProtocolSpec, StateVector};
use crate::simulate::{ball_norm_index, spread, EventKind, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("state lies on the consensus space")]
    OnConsensusSpace,
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("witness construction needs |I_c| >= 2, found {found}")]
    TooFewContinuousAgents { found: usize },
    #[error("agent index {idx} out of range for n = {n}")]
    IndexOutOfRange { idx: usize, n: usize },
}

/// Value of the max-norm Lyapunov function together with the attaining
/// agent set `alpha(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxNormValue {
    pub value: f64,
    pub attaining: Vec<usize>,
}

/// `max_i (1/p) ||x_i||_p^p` for finite `p`, `max_i ||x_i||_inf` for
/// `p = inf`, with the index set attaining the maximum (ties are a set; only
/// membership matters downstream).
pub fn lyapunov_max_norm(x: &StateVector, p: NormIndex) -> MaxNormValue {
    let per_agent: Vec<f64> = (0..x.n())
        .map(|i| {
            let b = x.block(i);
            match p {
                NormIndex::Infinity => NormIndex::Infinity.norm(&b),
                NormIndex::Finite(pp) => b.iter().map(|c| c.abs().powf(pp)).sum::<f64>() / pp,
            }
        })
        .collect();
    let value = per_agent.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * value.max(1.0);
    let attaining = (0..x.n())
        .filter(|&i| per_agent[i] >= value - tol)
        .collect();
    MaxNormValue { value, attaining }
}

/// Disagreement Lyapunov function `sqrt(x^T (L (x) I_k) x)`; zero exactly on
/// the consensus space of a connected graph.
pub fn disagreement(x: &StateVector, lap: &LaplacianMatrix) -> f64 {
    lap.quadratic_form(x.flat(), x.k()).max(0.0).sqrt()
}

/// Edge Lyapunov function of the necessity proof: `||L_bar_i x||_p`, the
/// p-norm of agent i's (negated) neighbor sum.
pub fn edge_lyapunov(
    x: &StateVector,
    lap: &LaplacianMatrix,
    i: usize,
    p: NormIndex,
) -> Result<f64, AnalysisError> {
    if i >= lap.n() {
        return Err(AnalysisError::IndexOutOfRange { idx: i, n: lap.n() });
    }
    Ok(p.norm(&lap.row_block(x.flat(), i, x.k())))
}

/// Norm-equivalence constant `d_1` with `d_1 ||v||_p <= ||v||_2` on `R^k`,
/// tight: 1 for p >= 2 (coordinate vectors), `k^(1/2 - 1/p)` for p in [1, 2)
/// (all-ones vector). Verified by randomized maximization in the tests.
pub fn d1_constant(p: NormIndex, k: usize) -> f64 {
    match p {
        NormIndex::Infinity => 1.0,
        NormIndex::Finite(pp) if pp >= 2.0 => 1.0,
        NormIndex::Finite(pp) => (k as f64).powf(0.5 - 1.0 / pp),
    }
}

/// Upper bound on the consensus time for the `|I_c| = 1` protocol class:
/// `T = 2 sqrt(x0^T L_bar x0) / (d_1 sqrt(lambda_2))`, from the decay bound
/// `-d_1 sqrt(lambda_2) / 2` on the disagreement function.
pub fn convergence_time_bound(
    lap: &LaplacianMatrix,
    x0: &StateVector,
    p: NormIndex,
) -> Result<f64, AnalysisError> {
    let lambda2 = algebraic_connectivity(lap).map_err(|_| AnalysisError::DisconnectedGraph)?;
    let v0 = disagreement(x0, lap);
    if v0 <= 1e-12 {
        return Err(AnalysisError::OnConsensusSpace);
    }
    Ok(2.0 * v0 / (d1_constant(p, x0.k()) * lambda2.sqrt()))
}

/// Initial state for the necessity construction: the Lipschitz blocks are
/// non-consensual, every signum agent starts on its sliding surface
/// (`L_bar_i x0 = 0` via the enslaving solve `x^d = -L_dd^{-1} L_dc x^c`),
/// and the whole state is scaled into `S(delta_eps)` with
/// `delta_eps = eps_L / (2 sqrt(m))`, where `eps_L = 1/gain_max` is the
/// radius on which all bundled Lipschitz laws have `||f_i(y)||_2 <= 1`.
pub fn necessity_witness<R: rand::Rng>(
    g: &Graph,
    spec: &ProtocolSpec,
    rng: &mut R,
) -> Result<StateVector, AnalysisError> {
    let continuous = spec.lipschitz_agents();
    if continuous.len() < 2 {
        return Err(AnalysisError::TooFewContinuousAgents {
            found: continuous.len(),
        });
    }
    let lap = laplacian(g);
    if !lap.is_connected_spectrally() {
        return Err(AnalysisError::DisconnectedGraph);
    }
    let n = g.n();
    let k = spec.k;
    let gain_max = spec.max_lipschitz_gain().expect("|I_c| >= 2");
    let delta_eps = (1.0 / gain_max) / (2.0 * (g.edge_count() as f64).sqrt());

    let sample_blocks = |rng: &mut R, count: usize| -> DMatrix<f64> {
        DMatrix::from_fn(count, k, |_, _| rng.gen_range(-1.0..1.0))
    };

    let mut x0 = StateVector::zeros(n, k);
    for _ in 0..64 {
        let x_c = sample_blocks(rng, continuous.len());
        // The continuous blocks must be non-consensual among themselves.
        let spread_c = (0..continuous.len())
            .flat_map(|a| (0..continuous.len()).map(move |b| (a, b)))
            .map(|(a, b)| (x_c.row(a) - x_c.row(b)).amax())
            .fold(0.0_f64, f64::max);
        if spread_c < 0.1 {
            continue;
        }
        if continuous.len() == n {
            for (row, &agent) in continuous.iter().enumerate() {
                x0.set_block(agent, &x_c.row(row).transpose());
            }
        } else {
            let x_d = schur_lift(&lap, &continuous, &x_c)
                .map_err(|_| AnalysisError::DisconnectedGraph)?;
            let dropped: Vec<usize> = (0..n).filter(|i| !continuous.contains(i)).collect();
            for (row, &agent) in continuous.iter().enumerate() {
                x0.set_block(agent, &x_c.row(row).transpose());
            }
            for (row, &agent) in dropped.iter().enumerate() {
                x0.set_block(agent, &x_d.row(row).transpose());
            }
        }
        let v0 = disagreement(&x0, &lap);
        if v0 <= 1e-9 {
            continue;
        }
        let scale = delta_eps / v0;
        for value in x0.flat_mut().iter_mut() {
            *value *= scale;
        }
        return Ok(x0);
    }
    unreachable!("random non-consensual blocks are found in a handful of draws")
}

/// Trajectory classification outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    FiniteTime { t_star: f64 },
    Asymptotic { rate: f64 },
    NonStatic,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::FiniteTime { .. } => "FiniteTime",
            Classification::Asymptotic { .. } => "Asymptotic",
            Classification::NonStatic => "NonStatic",
        }
    }
}

/// Per-trajectory convergence report.
///
/// Serializes with fixed field names `classification`, `t_star`, `rate`,
/// `ball_invariant`, `max_ball_norm`, `lyapunov_monotone`, `bound_t_star`
/// (absent fields are omitted), plus free-form `details`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub classification: Classification,
    pub ball_invariant: bool,
    pub max_ball_norm: f64,
    pub lyapunov_monotone: bool,
    pub bound_t_star: Option<f64>,
    pub details: Vec<String>,
}

impl ConvergenceReport {
    pub fn t_star(&self) -> Option<f64> {
        match self.classification {
            Classification::FiniteTime { t_star } => Some(t_star),
            _ => None,
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match self.classification {
            Classification::Asymptotic { rate } => Some(rate),
            _ => None,
        }
    }
}

impl Serialize for ConvergenceReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut fields = 5;
        if self.t_star().is_some() {
            fields += 1;
        }
        if self.rate().is_some() {
            fields += 1;
        }
        if self.bound_t_star.is_some() {
            fields += 1;
        }
        let mut s = serializer.serialize_struct("ConvergenceReport", fields)?;
        s.serialize_field("classification", self.classification.label())?;
        if let Some(t) = self.t_star() {
            s.serialize_field("t_star", &t)?;
        }
        if let Some(r) = self.rate() {
            s.serialize_field("rate", &r)?;
        }
        s.serialize_field("ball_invariant", &self.ball_invariant)?;
        s.serialize_field("max_ball_norm", &self.max_ball_norm)?;
        s.serialize_field("lyapunov_monotone", &self.lyapunov_monotone)?;
        if let Some(b) = self.bound_t_star {
            s.serialize_field("bound_t_star", &b)?;
        }
        s.serialize_field("details", &self.details)?;
        s.end()
    }
}

/// Least-squares line through `(t, y)`; returns `(slope, r_squared)`.
fn linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if stt == 0.0 || syy == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sty / stt;
    let r2 = (sty * sty) / (stt * syy);
    (slope, r2)
}

/// Minimum number of samples for a meaningful exponential-tail fit.
const FIT_MIN_SAMPLES: usize = 8;
/// R^2 threshold separating a clean exponential tail from drift or chatter.
const FIT_R2_THRESHOLD: f64 = 0.99;

/// Classify a simulated trajectory.
///
/// `FiniteTime` requires a consensus event with an exactly static post-snap
/// tail. `Asymptotic` requires positive spread throughout, a downward trend
/// and an exponential tail fit with `R^2 >= 0.99` over the last half of the
/// log-spread samples above `10 * consensus_tol`. Everything else —
/// post-consensus drift, chatter, stalled decay — is `NonStatic`. The report
/// also carries the ball-invariance check, the monotonicity of the max-norm
/// Lyapunov function (within `5 eps` slack) and, for the `|I_c| = 1` class,
/// the convergence-time bound.
pub fn classify(
    traj: &Trajectory,
    g: &Graph,
    spec: &ProtocolSpec,
) -> Result<ConvergenceReport, AnalysisError> {
    if traj.states.is_empty() {
        return Err(AnalysisError::EmptyTrajectory);
    }
    let eps = traj.config.epsilon;
    let ball_p = ball_norm_index(spec);
    let mut details = Vec::new();

    // Ball invariance relative to the initial radius.
    let radius0 = (0..traj.n())
        .map(|i| ball_p.norm(&traj.states[0].block(i)))
        .fold(0.0_f64, f64::max);
    let max_ball_norm = traj
        .states
        .iter()
        .map(|s| {
            (0..s.n())
                .map(|i| ball_p.norm(&s.block(i)))
                .fold(0.0_f64, f64::max)
        })
        .fold(0.0_f64, f64::max);
    let ball_invariant = max_ball_norm <= radius0 + 5.0 * eps;
    details.push(format!(
        "initial ball radius {radius0:.6}, max over time {max_ball_norm:.6}"
    ));

    // Max-norm Lyapunov monotonicity along recorded samples.
    let lyap: Vec<f64> = traj
        .states
        .iter()
        .map(|s| lyapunov_max_norm(s, ball_p).value)
        .collect();
    let lyapunov_monotone = lyap.windows(2).all(|w| w[1] <= w[0] + 5.0 * eps);

    // Convergence-time bound where the theorem's sufficiency class applies.
    let lap = laplacian(g);
    let bound_t_star = if spec.lipschitz_agents().len() == 1 {
        convergence_time_bound(&lap, &traj.states[0], spec.p).ok()
    } else {
        None
    };

    let spreads: Vec<f64> = traj.states.iter().map(|s| spread(s, spec.p)).collect();

    let classification = if let Some(event) = traj.consensus_event() {
        let static_tail = traj
            .times
            .iter()
            .zip(&spreads)
            .filter(|(&t, _)| t >= event.t)
            .all(|(_, &s)| s == 0.0);
        if static_tail {
            Classification::FiniteTime { t_star: event.t }
        } else {
            details.push("post-consensus samples have nonzero spread".into());
            Classification::NonStatic
        }
    } else if spreads.iter().all(|&s| s > 0.0) {
        let floor = 10.0 * traj.config.consensus_tol;
        let qualified: Vec<usize> = (0..spreads.len()).filter(|&m| spreads[m] > floor).collect();
        if qualified.len() < FIT_MIN_SAMPLES {
            details.push("too few samples above the fit floor".into());
            Classification::NonStatic
        } else {
            let window = &qualified[qualified.len() / 2..];
            let ts: Vec<f64> = window.iter().map(|&m| traj.times[m]).collect();
            let ys: Vec<f64> = window.iter().map(|&m| spreads[m].ln()).collect();
            let (slope, r2) = linear_fit(&ts, &ys);
            let trending_down = spreads[window[window.len() - 1]] < spreads[window[0]];
            details.push(format!(
                "log-spread tail fit: slope {slope:.6}, R^2 {r2:.6}"
            ));
            if slope < 0.0 && trending_down && r2 >= FIT_R2_THRESHOLD {
                Classification::Asymptotic { rate: -slope }
            } else {
                Classification::NonStatic
            }
        }
    } else {
        details.push("spread touched zero without a consensus event".into());
        Classification::NonStatic
    };

    if traj
        .events
        .iter()
        .any(|e| e.kind == EventKind::ChatterDetected)
    {
        details.push("chatter detected during integration".into());
    }

    Ok(ConvergenceReport {
        classification,
        ball_invariant,
        max_ball_norm,
        lyapunov_monotone,
        bound_t_star,
        details,
    })
}

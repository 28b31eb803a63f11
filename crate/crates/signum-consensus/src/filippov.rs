//! Exact set-valued computations at desk scale: Filippov maps of the
//! protocol field, membership queries, generalized-gradient elements and
//! set-valued Lie derivative intervals.
//!
//! The general field map is the product outer approximation `F_bar` (the
//! per-agent Cartesian product of Filippov sets); exact non-product maps are
//! computed only for the two special cases where the closed form is known:
//! the two-agent all-signum system at consensus and the three-node
//! unit-triangle example. The composition `F[sign](-L_bar_i x)` is adopted
//! as definitional; the rank condition of the underlying chain rule is not
//! re-verified per call.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::Graph;
use crate::lp::convex_hull_contains;
use crate::protocol::{neighbor_sum, AgentLaw, Mode, NormIndex, ProtocolSpec, StateVector};

/// Arguments with p-norm at or below this are treated as the discontinuity
/// point of the signum.
pub const ZERO_ARG_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum FilippovError {
    #[error("dimension mismatch: set has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("wrong scenario: {0}")]
    WrongScenario(String),
    #[error("state lies on the consensus space; the disagreement gradient is undefined there")]
    OnConsensusSpace,
    #[error("unsupported Lyapunov function: {0}")]
    UnsupportedLyapunov(String),
}

/// A closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Finitely generated convex set used for Filippov maps.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    /// A single point.
    Singleton(DVector<f64>),
    /// Convex hull of a nonempty vertex list (V-representation).
    Polytope(Vec<DVector<f64>>),
    /// `{ x : ||x - center||_p <= radius }`.
    NormBall {
        center: DVector<f64>,
        radius: f64,
        p: NormIndex,
    },
    /// Cartesian product of factors.
    Product(Vec<ConvexSet>),
    /// Linear image of a p-ball: `{ basis * u : ||u||_p <= radius }`.
    /// Used for the exact two-agent map, whose elements satisfy
    /// `nu_1 = -nu_2`.
    ImageBall {
        basis: DMatrix<f64>,
        radius: f64,
        p: NormIndex,
    },
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Singleton(v) => v.len(),
            ConvexSet::Polytope(vs) => vs[0].len(),
            ConvexSet::NormBall { center, .. } => center.len(),
            ConvexSet::Product(factors) => factors.iter().map(|f| f.dim()).sum(),
            ConvexSet::ImageBall { basis, .. } => basis.nrows(),
        }
    }

    /// Membership up to `tol`: exact norm comparison for singletons and
    /// balls, small LP feasibility for polytopes, factor-wise for products.
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> Result<bool, FilippovError> {
        if point.len() != self.dim() {
            return Err(FilippovError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(match self {
            ConvexSet::Singleton(v) => (point - v).abs().max() <= tol,
            ConvexSet::NormBall { center, radius, p } => p.norm(&(point - center)) <= radius + tol,
            ConvexSet::Polytope(vs) => convex_hull_contains(vs, point, tol),
            ConvexSet::Product(factors) => {
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    let block = DVector::from_fn(d, |r, _| point[offset + r]);
                    if !f.contains(&block, tol)? {
                        return Ok(false);
                    }
                    offset += d;
                }
                true
            }
            ConvexSet::ImageBall { basis, radius, p } => {
                // Solve the normal equations for the preimage, then check the
                // point actually lies in the column span.
                let gram = basis.transpose() * basis;
                let rhs = basis.transpose() * point;
                match gram.lu().solve(&rhs) {
                    None => false,
                    Some(u) => {
                        (basis * &u - point).abs().max() <= tol && p.norm(&u) <= radius + tol
                    }
                }
            }
        })
    }

    /// Vertex enumeration where available: polytopes, l1/linf balls (and any
    /// one-dimensional ball), and products/images thereof. `None` for balls
    /// with other norm indices, where only membership is supported.
    pub fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        const MAX_VERTICES: usize = 4096;
        match self {
            ConvexSet::Singleton(v) => Some(vec![v.clone()]),
            ConvexSet::Polytope(vs) => Some(vs.clone()),
            ConvexSet::NormBall { center, radius, p } => {
                let d = center.len();
                if d == 1 {
                    let mut lo = center.clone();
                    let mut hi = center.clone();
                    lo[0] -= radius;
                    hi[0] += radius;
                    return Some(vec![lo, hi]);
                }
                match p {
                    NormIndex::Infinity => {
                        if d > 12 {
                            return None;
                        }
                        let mut out = Vec::with_capacity(1 << d);
                        for mask in 0..(1u32 << d) {
                            let mut v = center.clone();
                            for r in 0..d {
                                v[r] += if mask & (1 << r) != 0 {
                                    *radius
                                } else {
                                    -radius
                                };
                            }
                            out.push(v);
                        }
                        Some(out)
                    }
                    NormIndex::Finite(p) if *p == 1.0 => {
                        let mut out = Vec::with_capacity(2 * d);
                        for r in 0..d {
                            for sign in [1.0, -1.0] {
                                let mut v = center.clone();
                                v[r] += sign * radius;
                                out.push(v);
                            }
                        }
                        Some(out)
                    }
                    _ => None,
                }
            }
            ConvexSet::Product(factors) => {
                let mut acc: Vec<Vec<f64>> = vec![Vec::new()];
                for f in factors {
                    let verts = f.vertices()?;
                    if acc.len() * verts.len() > MAX_VERTICES {
                        return None;
                    }
                    let mut next = Vec::with_capacity(acc.len() * verts.len());
                    for prefix in &acc {
                        for v in &verts {
                            let mut row = prefix.clone();
                            row.extend(v.iter());
                            next.push(row);
                        }
                    }
                    acc = next;
                }
                Some(acc.into_iter().map(DVector::from_vec).collect())
            }
            ConvexSet::ImageBall { basis, radius, p } => {
                let ball = ConvexSet::NormBall {
                    center: DVector::zeros(basis.ncols()),
                    radius: *radius,
                    p: *p,
                };
                Some(ball.vertices()?.iter().map(|u| basis * u).collect())
            }
        }
    }

    /// Collapse to a point when the set is a singleton (possibly a product
    /// of singletons).
    pub fn as_singleton(&self) -> Option<DVector<f64>> {
        match self {
            ConvexSet::Singleton(v) => Some(v.clone()),
            ConvexSet::Product(factors) => {
                let mut parts = Vec::new();
                for f in factors {
                    parts.push(f.as_singleton()?);
                }
                let flat: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
                Some(DVector::from_vec(flat))
            }
            _ => None,
        }
    }
}

/// Filippov set of the direction-preserving signum at argument `w`: the
/// singleton `w / ||w||_p` away from zero, the unit p-ball at zero.
pub fn filippov_sign_dp(w: &DVector<f64>, p: NormIndex) -> ConvexSet {
    let norm = p.norm(w);
    if norm > ZERO_ARG_TOL {
        ConvexSet::Singleton(w / norm)
    } else {
        ConvexSet::NormBall {
            center: DVector::zeros(w.len()),
            radius: 1.0,
            p,
        }
    }
}

/// Filippov set of the component-wise signum: a product of `{sign(w_l)}`
/// singletons and `[-1, 1]` intervals (where `w_l = 0`).
pub fn filippov_sign_cw(w: &DVector<f64>) -> ConvexSet {
    let factors = w
        .iter()
        .map(|&c| {
            if c.abs() > ZERO_ARG_TOL {
                ConvexSet::Singleton(DVector::from_element(1, c.signum()))
            } else {
                ConvexSet::NormBall {
                    center: DVector::zeros(1),
                    radius: 1.0,
                    p: NormIndex::Infinity,
                }
            }
        })
        .collect();
    ConvexSet::Product(factors)
}

/// Product outer approximation `F_bar(x)` of the closed-loop Filippov map:
/// the Cartesian product over agents of the per-agent Filippov sets at
/// `-L_bar_i x`. Lipschitz agents contribute singletons.
pub fn filippov_field(
    g: &Graph,
    spec: &ProtocolSpec,
    x: &StateVector,
) -> Result<ConvexSet, FilippovError> {
    let factors = (0..g.n())
        .map(|i| {
            let w = neighbor_sum(g, x, i).expect("agent index in range");
            match spec.agents[i] {
                AgentLaw::Signum => match spec.mode {
                    Mode::DirectionPreserving => filippov_sign_dp(&w, spec.p),
                    Mode::ComponentWise => filippov_sign_cw(&w),
                },
                AgentLaw::Lipschitz { .. } => ConvexSet::Singleton(spec.apply_law(i, &w)),
            }
        })
        .collect();
    Ok(ConvexSet::Product(factors))
}

fn on_consensus(x: &StateVector, tol: f64) -> bool {
    (1..x.n()).all(|i| (x.block(i) - x.block(0)).abs().max() <= tol)
}

/// Is `g` the three-node circular graph with equal positive weights?
fn is_uniform_triangle(g: &Graph) -> bool {
    if g.n() != 3 || g.edge_count() != 3 {
        return false;
    }
    let w0 = g.edges()[0].weight;
    g.edges()
        .iter()
        .all(|e| (e.weight - w0).abs() <= 1e-12 * w0.max(1.0))
}

/// Vertices of the exact Filippov set of the three-node all-signum example
/// at consensus: the six attainable sign patterns (the two constant
/// patterns cannot arise because the signum arguments sum to zero).
pub fn triangle_consensus_set() -> ConvexSet {
    let nu1 = DVector::from_row_slice(&[1.0, 1.0, -1.0]);
    let nu2 = DVector::from_row_slice(&[1.0, -1.0, 1.0]);
    let nu3 = DVector::from_row_slice(&[-1.0, 1.0, 1.0]);
    ConvexSet::Polytope(vec![
        nu1.clone(),
        nu2.clone(),
        nu3.clone(),
        -nu1,
        -nu2,
        -nu3,
    ])
}

/// Exact (non-product) Filippov map for the two hardcoded special cases;
/// `None` everywhere else. At states where the field is continuous the
/// product map is already exact, so nothing is lost.
pub fn filippov_field_exact(g: &Graph, spec: &ProtocolSpec, x: &StateVector) -> Option<ConvexSet> {
    if !spec.all_signum() || !on_consensus(x, ZERO_ARG_TOL) {
        return None;
    }
    if g.n() == 2 && spec.mode == Mode::DirectionPreserving {
        // Elements are (u, -u) with u in the unit p-ball.
        let k = spec.k;
        let mut basis = DMatrix::zeros(2 * k, k);
        for l in 0..k {
            basis[(l, l)] = 1.0;
            basis[(k + l, l)] = -1.0;
        }
        return Some(ConvexSet::ImageBall {
            basis,
            radius: 1.0,
            p: spec.p,
        });
    }
    if is_uniform_triangle(g) && spec.k == 1 {
        return Some(triangle_consensus_set());
    }
    None
}

/// Half-width of the largest symmetric drift interval: the largest `eta*`
/// with `eta * 1` in the exact consensus Filippov set of the three-node
/// example for all `|eta| <= eta*`. Computed by bisection over the
/// membership test; the answer is 1/3 regardless of the uniform edge weight
/// (the signum discards magnitudes).
pub fn consensus_drift_interval(g: &Graph) -> Result<Interval, FilippovError> {
    if !is_uniform_triangle(g) {
        return Err(FilippovError::WrongScenario(
            "drift interval is defined for the 3-node uniform-weight triangle with k=1, all-signum"
                .into(),
        ));
    }
    let set = triangle_consensus_set();
    let member = |eta: f64| {
        set.contains(&DVector::from_element(3, eta), 1e-9)
            .expect("dimension is fixed")
    };
    debug_assert!(member(0.0));
    let mut lo = 0.0; // always contained: 0 is the midpoint of +-nu_1
    let mut hi = 1.0; // never contained: the all-ones pattern is excluded
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if member(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bound = 0.5 * (lo + hi);
    Ok(Interval {
        lo: -bound,
        hi: bound,
    })
}

/// Lyapunov functions supported by [`lie_derivative_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovId {
    /// `V(x) = sqrt(x^T L_bar x)`.
    Disagreement,
    /// The max-norm Lyapunov function of the invariance lemma; its
    /// set-valued derivative is handled through gradient elements, not
    /// through this interval interface.
    MaxNorm,
}

/// Interval `[min, max]` of `grad V(x)^T nu` over the outer product set
/// `F_bar(x)`.
///
/// The objective is linear in each agent block, so ball factors are
/// extremized by the Hoelder-dual closed form; singleton factors contribute
/// a fixed term. For the disagreement function the gradient block of a
/// ball-factor agent vanishes, so the interval in fact collapses.
pub fn lie_derivative_samples(
    g: &Graph,
    spec: &ProtocolSpec,
    x: &StateVector,
    which: LyapunovId,
) -> Result<Interval, FilippovError> {
    if which != LyapunovId::Disagreement {
        return Err(FilippovError::UnsupportedLyapunov(format!("{which:?}")));
    }
    let n = g.n();
    // b_i = L_bar_i x = -neighbor_sum(i); V^2 = sum_i b_i . x_i.
    let blocks: Vec<DVector<f64>> = (0..n)
        .map(|i| -neighbor_sum(g, x, i).expect("agent index in range"))
        .collect();
    let vsq: f64 = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| b.dot(&x.block(i)))
        .sum();
    if vsq <= 1e-24 {
        return Err(FilippovError::OnConsensusSpace);
    }
    let v = vsq.sqrt();

    let mut fixed = 0.0;
    let mut amplitude = 0.0;
    let q = spec.p.dual();
    for i in 0..n {
        let b = &blocks[i];
        let w = -b; // the law argument
        match spec.agents[i] {
            AgentLaw::Lipschitz { .. } => fixed += b.dot(&spec.apply_law(i, &w)),
            AgentLaw::Signum => match spec.mode {
                Mode::DirectionPreserving => {
                    let norm = spec.p.norm(&w);
                    if norm > ZERO_ARG_TOL {
                        fixed -= b.norm_squared() / norm;
                    } else {
                        amplitude += q.norm(b);
                    }
                }
                Mode::ComponentWise => {
                    for l in 0..spec.k {
                        if w[l].abs() > ZERO_ARG_TOL {
                            fixed -= b[l].abs();
                        } else {
                            amplitude += b[l].abs();
                        }
                    }
                }
            },
        }
    }
    Ok(Interval {
        lo: (fixed - amplitude) / v,
        hi: (fixed + amplitude) / v,
    })
}

/// One element of the generalized gradient of the max-norm Lyapunov
/// function, structured as agent blocks. `agent` is the index that attains
/// the max; for the infinity norm `component` records which coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientElement {
    pub vector: DVector<f64>,
    pub agent: usize,
    pub component: Option<usize>,
}

/// Generating elements of the generalized gradient of
/// `V(x) = max_i (1/p) ||x_i||_p^p` (or `max_i ||x_i||_inf` for p = inf):
/// one per max-attaining agent (and per attaining coordinate for p = inf).
/// Set-valued sign selections at zero coordinates pick the center 0.
pub fn max_norm_gradient(x: &StateVector, p: NormIndex) -> Vec<GradientElement> {
    let (n, k) = (x.n(), x.k());
    let block_value = |i: usize| {
        let b = x.block(i);
        match p {
            NormIndex::Infinity => NormIndex::Infinity.norm(&b),
            NormIndex::Finite(pp) => b.iter().map(|c| c.abs().powf(pp)).sum::<f64>(),
        }
    };
    let values: Vec<f64> = (0..n).map(block_value).collect();
    let vmax = values.iter().cloned().fold(0.0_f64, f64::max);
    let attains = |val: f64| val >= vmax - 1e-12 * vmax.max(1.0);

    let mut out = Vec::new();
    for i in 0..n {
        if !attains(values[i]) {
            continue;
        }
        match p {
            NormIndex::Finite(pp) => {
                let mut zeta = DVector::zeros(n * k);
                for l in 0..k {
                    let c = x.component(i, l);
                    if c != 0.0 {
                        zeta[i * k + l] = c.abs().powf(pp - 1.0) * c.signum();
                    }
                }
                out.push(GradientElement {
                    vector: zeta,
                    agent: i,
                    component: None,
                });
            }
            NormIndex::Infinity => {
                for l in 0..k {
                    let c = x.component(i, l);
                    if c.abs() >= vmax - 1e-12 * vmax.max(1.0) && c != 0.0 {
                        let mut zeta = DVector::zeros(n * k);
                        zeta[i * k + l] = c.signum();
                        out.push(GradientElement {
                            vector: zeta,
                            agent: i,
                            component: Some(l),
                        });
                    }
                }
            }
        }
    }
    out
}

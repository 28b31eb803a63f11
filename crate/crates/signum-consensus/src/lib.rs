//! Simulator and analysis toolkit for finite-time consensus protocols on
//! multi-dimensional multi-agent systems with discontinuous (signum-based)
//! control laws.
//!
//! The crate is organized around six subsystems:
//!
//! - [`graph`]: weighted undirected graphs, Laplacians, spectra, Schur
//!   complements.
//! - [`protocol`]: direction-preserving / component-wise signum laws, the
//!   Lipschitz law family, and the closed-loop field `x' = f(-L_bar x)`.
//! - [`filippov`]: set-valued Filippov maps, membership queries, the
//!   Example-1 drift interval, set-valued Lie derivative intervals.
//! - [`simulate`]: boundary-layer regularized RK4 with consensus detection.
//! - [`analysis`]: Lyapunov diagnostics, the necessity-witness construction,
//!   the convergence-time bound, trajectory classification.
//! - [`cli`]: config ingestion and the reproduction/matrix commands behind
//!   the `signum-consensus` binary.
//!
//! Batch sweeps (`cli::run_matrix`, benchmarks, acceptance harnesses) go
//! through [`batch::run_batch`], which is rayon-parallel under the default
//! `parallel` feature and degrades to a sequential loop without it; results
//! are independent of scheduling either way.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check, and
// the numeric kernels keep explicit index loops like the rest of this
// codebase's linear-algebra style.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod batch;
pub mod cli;
pub mod config;
pub mod filippov;
pub mod graph;
mod lp;
pub mod protocol;
pub mod simulate;

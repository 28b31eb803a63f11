//! Self-contained phase-I simplex for small convex-combination feasibility
//! problems (dimensions <= 16, a few dozen vertices). No external solver.

use nalgebra::DVector;

/// Does `point` lie in the convex hull of `vertices`, up to `tol`?
///
/// Feasibility of `sum_j w_j v_j = point, sum_j w_j = 1, w >= 0` is decided
/// by minimizing the l1 residual with artificial variables; the hull
/// contains the point when the optimal residual is at most `tol` per row.
pub fn convex_hull_contains(vertices: &[DVector<f64>], point: &DVector<f64>, tol: f64) -> bool {
    assert!(!vertices.is_empty(), "polytope needs at least one vertex");
    let d = point.len();
    for v in vertices {
        assert_eq!(v.len(), d, "vertex dimension mismatch");
    }
    let rows = d + 1; // coordinate constraints plus the weight-sum row
    let cols = vertices.len();

    // Equality system A w = b.
    let mut a = vec![vec![0.0; cols]; rows];
    let mut b = vec![0.0; rows];
    for r in 0..d {
        for (c, v) in vertices.iter().enumerate() {
            a[r][c] = v[r];
        }
        b[r] = point[r];
    }
    for c in 0..cols {
        a[d][c] = 1.0;
    }
    b[d] = 1.0;

    let residual = phase_one_residual(&a, &b);
    residual <= tol * rows as f64
}

/// Minimal sum of artificial variables for `A w = b, w >= 0`.
///
/// Dense tableau simplex with Bland's rule; returns the phase-I optimum
/// (zero iff the system is feasible, up to rounding).
fn phase_one_residual(a: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = a.len();
    let n = a[0].len();
    let total = n + m; // structural + artificial columns

    // Tableau rows: [A | I | b], with rows flipped so b >= 0.
    let mut t = vec![vec![0.0; total + 1]; m];
    for r in 0..m {
        let flip = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..n {
            t[r][c] = flip * a[r][c];
        }
        t[r][n + r] = 1.0;
        t[r][total] = flip * b[r];
    }
    let mut basis: Vec<usize> = (n..total).collect();

    // Objective: minimize sum of artificials. Reduced costs start as
    // -(sum of constraint rows) on the structural columns.
    let mut obj = vec![0.0; total + 1];
    for r in 0..m {
        for c in 0..total + 1 {
            obj[c] -= t[r][c];
        }
    }
    for r in 0..m {
        obj[n + r] = 0.0;
    }

    const MAX_ITERS: usize = 10_000;
    for _ in 0..MAX_ITERS {
        // Bland's rule: first column with a negative reduced cost.
        let Some(enter) = (0..total).find(|&c| obj[c] < -1e-12) else {
            break;
        };
        // Ratio test, smallest index on ties.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            if t[r][enter] > 1e-12 {
                let ratio = t[r][total] / t[r][enter];
                if ratio < best - 1e-12
                    || (ratio < best + 1e-12 && leave.is_none_or(|l| basis[r] < basis[l]))
                {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(lr) = leave else {
            break; // unbounded cannot happen for phase I; bail defensively
        };
        // Pivot.
        let piv = t[lr][enter];
        for c in 0..total + 1 {
            t[lr][c] /= piv;
        }
        for r in 0..m {
            if r != lr && t[r][enter].abs() > 0.0 {
                let factor = t[r][enter];
                for c in 0..total + 1 {
                    t[r][c] -= factor * t[lr][c];
                }
            }
        }
        let factor = obj[enter];
        if factor.abs() > 0.0 {
            for c in 0..total + 1 {
                obj[c] -= factor * t[lr][c];
            }
        }
        basis[lr] = enter;
    }

    // Optimum value = sum of artificial basic variables = -obj constant.
    let mut value = 0.0;
    for r in 0..m {
        if basis[r] >= n {
            value += t[r][total];
        }
    }
    value.max(0.0)
}

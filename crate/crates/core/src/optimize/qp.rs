//! Dense least-distance and quadratic programs solved through non-negative
//! least squares.

use nalgebra::{DMatrix, DVector};

/// `min ‖E x − f‖` subject to `x ≥ 0` by the Lawson–Hanson active-set method.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let (m, n) = e.shape();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let tol = 10.0 * f64::EPSILON * e.abs().column_sum().max() * m.max(n) as f64;
    let mut passive = vec![false; n];
    let mut w = e.tr_mul(&(f - e * &x));
    for _ in 0..3 * n + 10 {
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = cand else { break };
        passive[t] = true;
        for _ in 0..3 * n + 10 {
            let z = passive_solve(e, f, &passive);
            if (0..n).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z[j]));
                }
            }
            x += (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
        w = e.tr_mul(&(f - e * &x));
    }
    x
}

fn passive_solve(e: &DMatrix<f64>, f: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    if cols.is_empty() {
        return DVector::zeros(passive.len());
    }
    let sub = e.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(f, 1e-13)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut z = DVector::zeros(passive.len());
    for (k, &j) in cols.iter().enumerate() {
        z[j] = sol[k];
    }
    z
}

/// Solution of `min ½‖u‖²` subject to `G u ≥ h`, with the constraint
/// multipliers. `None` when the constraints are inconsistent.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (k, n) = g.shape();
    if k == 0 || h.iter().all(|&x| x <= 0.0) {
        return Some((DVector::zeros(n), DVector::zeros(k)));
    }
    let mut e = DMatrix::zeros(n + 1, k);
    e.view_mut((0, 0), (n, k)).copy_from(&g.transpose());
    e.row_mut(n).copy_from(&h.transpose());
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let y = nnls(&e, &f);
    let r = &e * &y - &f;
    let rn = -r[n];
    if rn <= 1e-12 {
        return None;
    }
    let u = -r.rows(0, n) / r[n];
    Some((u, y / rn))
}

/// Result of one quadratic subproblem.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// True when the linearized constraints were inconsistent and had to be
    /// relaxed by a common slack.
    pub relaxed: bool,
}

/// `min ½ dᵀ B d + gᵀ d` subject to `A d + c ≥ 0`, for symmetric positive
/// definite `B`. Inconsistent constraints are relaxed to `A d + c + σ ≥ 0`
/// with a heavily penalized slack `σ ≥ 0`. `None` if `B` is not positive
/// definite.
pub fn solve_qp(
    b: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
) -> Option<QpSolution> {
    if let Some((d, lam)) = solve_strict(b, g, a, c)? {
        return Some(QpSolution {
            d,
            multipliers: lam,
            relaxed: false,
        });
    }
    let (n, k) = (g.len(), c.len());
    let scale = b.diagonal().max().max(1.0);
    let mut bb = DMatrix::zeros(n + 1, n + 1);
    bb.view_mut((0, 0), (n, n)).copy_from(b);
    bb[(n, n)] = 1e8 * scale;
    let mut gg = DVector::zeros(n + 1);
    gg.rows_mut(0, n).copy_from(g);
    let mut aa = DMatrix::zeros(k + 1, n + 1);
    aa.view_mut((0, 0), (k, n)).copy_from(a);
    for i in 0..k {
        aa[(i, n)] = 1.0;
    }
    aa[(k, n)] = 1.0;
    let mut cc = DVector::zeros(k + 1);
    cc.rows_mut(0, k).copy_from(c);
    let (z, lam) = solve_strict(&bb, &gg, &aa, &cc)??;
    Some(QpSolution {
        d: z.rows(0, n).into_owned(),
        multipliers: lam.rows(0, k).into_owned(),
        relaxed: true,
    })
}

/// Outer `None`: `B` not positive definite. Inner `None`: infeasible.
#[allow(clippy::type_complexity)]
fn solve_strict(
    b: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
) -> Option<Option<(DVector<f64>, DVector<f64>)>> {
    let chol = b.clone().cholesky()?;
    let l = chol.l();
    // u = Lᵀ d + L⁻¹ g turns the objective into ½‖u‖² (up to a constant).
    let gt = l.solve_lower_triangular(g)?;
    let gm = l.solve_lower_triangular(&a.transpose())?.transpose();
    let h = &gm * &gt - c;
    let Some((u, lam)) = ldp(&gm, &h) else {
        return Some(None);
    };
    let d = l.transpose().solve_upper_triangular(&(u - gt))?;
    Some(Some((d, lam)))
}

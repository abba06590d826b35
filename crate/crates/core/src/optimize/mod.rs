//! Sequential quadratic programming for `min f(x)` subject to `c(x) ≥ 0`,
//! using only first derivatives.
//!
//! Each iteration solves a quadratic model with linearized constraints (a
//! least-distance program solved by NNLS), then takes a backtracking step on
//! the L1 exact-penalty merit function. The Hessian model is a damped BFGS
//! approximation of the Lagrangian Hessian.

mod qp;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use qp::{ldp, nnls, solve_qp, QpSolution};

/// A smooth constrained problem. Evaluation failures are reported as text
/// and handled by the solver (step shrinking, or a numeric-failure status).
pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Objective value and gradient.
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), String>;
    /// Constraint values and their Jacobian (constraints × variables).
    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), String>;
}

pub type ScalarFn = Box<dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), String> + Send>;

/// An [`Nlp`] assembled from closures, one per constraint.
pub struct NlpProblem {
    pub num_vars: usize,
    pub objective: ScalarFn,
    pub constraints: Vec<ScalarFn>,
}

impl NlpProblem {
    pub fn new(num_vars: usize, objective: ScalarFn) -> Self {
        Self {
            num_vars,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn constraint(mut self, c: ScalarFn) -> Self {
        self.constraints.push(c);
        self
    }
}

impl Nlp for NlpProblem {
    fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), String> {
        (self.objective)(x)
    }

    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), String> {
        let mut vals = Vec::with_capacity(self.constraints.len());
        let mut jac = DMatrix::zeros(self.constraints.len(), self.num_vars);
        for (i, c) in self.constraints.iter_mut().enumerate() {
            let (v, g) = c(x)?;
            vals.push(v);
            for (j, gj) in g.into_iter().enumerate() {
                jac[(i, j)] = gj;
            }
        }
        Ok((vals, jac))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Bound on every KKT residual at convergence.
    pub tol: f64,
    /// Largest constraint violation accepted as feasible.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Steps with infinity norm below this end the iteration.
    pub step_tol: f64,
    /// Record one [`TraceRecord`] per iteration.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            feas_tol: 1e-8,
            max_iter: 200,
            step_tol: 1e-12,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Infeasible,
    NumericFailure,
    /// The step became negligible, or no step decreased the merit function,
    /// before the KKT conditions were met.
    Stalled,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Infeasible => "infeasible",
            Status::NumericFailure => "numeric_failure",
            Status::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖∇f − Σ λᵢ ∇cᵢ‖∞`
    pub stationarity: f64,
    /// `max(0, −cᵢ)`
    pub feasibility: f64,
    /// `max |λᵢ cᵢ|`
    pub complementarity: f64,
    /// `max(0, −λᵢ)`
    pub dual_feasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.dual_feasibility)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub violation: f64,
    pub step_norm: f64,
    pub step_length: f64,
    pub penalty: f64,
    /// Merit before and after the accepted step, under the same penalty.
    pub merit_before: f64,
    pub merit_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub multipliers: Vec<f64>,
    pub kkt: KktReport,
    #[serde(with = "secs")]
    pub wall_time: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

fn violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, &v| m.max(-v))
}

fn l1_violation(c: &[f64]) -> f64 {
    c.iter().map(|&v| (-v).max(0.0)).sum()
}

pub fn kkt_residuals(grad: &[f64], jac: &DMatrix<f64>, c: &[f64], lambda: &[f64]) -> KktReport {
    let mut r = DVector::from_column_slice(grad);
    if !c.is_empty() {
        r -= jac.tr_mul(&DVector::from_column_slice(lambda));
    }
    KktReport {
        stationarity: r.amax(),
        feasibility: violation(c).max(0.0),
        complementarity: c
            .iter()
            .zip(lambda)
            .fold(0.0, |m, (c, l)| m.max((c * l).abs())),
        dual_feasibility: lambda.iter().fold(0.0, |m, &l| m.max(-l)),
    }
}

/// KKT residuals of `problem` at `x` for the given multipliers.
pub fn check_kkt(problem: &mut dyn Nlp, x: &[f64], lambda: &[f64]) -> Result<KktReport, String> {
    let (_, g) = problem.objective(x)?;
    let (c, a) = problem.constraints(x)?;
    Ok(kkt_residuals(&g, &a, &c, lambda))
}

struct Point {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
}

fn evaluate(problem: &mut dyn Nlp, x: &DVector<f64>) -> Result<Point, String> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err("non-finite parameters".into());
    }
    let (f, g) = problem.objective(x.as_slice())?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite objective {f} or gradient"));
    }
    let (c, a) = problem.constraints(x.as_slice())?;
    if c.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err("non-finite constraint value or gradient".into());
    }
    Ok(Point {
        x: x.clone(),
        f,
        g: DVector::from_vec(g),
        c: DVector::from_vec(c),
        a,
    })
}

fn fmt_point(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Run<'a> {
    problem: &'a mut dyn Nlp,
    opts: &'a SolverOptions,
    start: Instant,
    iterations: usize,
    trace: Vec<TraceRecord>,
}

impl Run<'_> {
    fn finish(
        self,
        p: &Point,
        lambda: &DVector<f64>,
        status: Status,
        message: Option<String>,
    ) -> OptResult {
        OptResult {
            x: p.x.as_slice().to_vec(),
            status,
            iterations: self.iterations,
            objective: p.f,
            max_violation: violation(p.c.as_slice()).max(0.0),
            multipliers: lambda.as_slice().to_vec(),
            kkt: kkt_residuals(p.g.as_slice(), &p.a, p.c.as_slice(), lambda.as_slice()),
            wall_time: self.start.elapsed(),
            message,
            trace: self.trace,
        }
    }

    /// Drives the point toward feasibility with minimum-norm linearized
    /// corrections, decreasing `Σ max(0, −cᵢ)²`.
    fn restore(&mut self, mut p: Point) -> Result<Point, Box<(Point, String)>> {
        let n = p.x.len();
        let eye = DMatrix::identity(n, n);
        let zero = DVector::zeros(n);
        let phi = |c: &DVector<f64>| c.iter().map(|&v| v.min(0.0).powi(2)).sum::<f64>();
        while violation(p.c.as_slice()) > self.opts.feas_tol {
            if self.iterations >= self.opts.max_iter {
                return Err(Box::new((
                    p,
                    "restoration did not reach a feasible point".into(),
                )));
            }
            self.iterations += 1;
            let Some(qp) = solve_qp(&eye, &zero, &p.a, &p.c) else {
                return Err(Box::new((p, "restoration subproblem failed".into())));
            };
            let phi0 = phi(&p.c);
            let mut alpha = 1.0;
            let mut next = None;
            for _ in 0..40 {
                if let Ok(t) = evaluate(self.problem, &(&p.x + &qp.d * alpha)) {
                    if phi(&t.c) <= (1.0 - 1e-4 * alpha) * phi0 {
                        next = Some(t);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match next {
                Some(t) => p = t,
                None => return Err(Box::new((p, "restoration line search failed".into()))),
            }
        }
        Ok(p)
    }
}

/// Minimizes `problem` from `x0`.
pub fn minimize(problem: &mut dyn Nlp, x0: &[f64], opts: &SolverOptions) -> OptResult {
    let n = problem.num_vars();
    let k = problem.num_constraints();
    assert_eq!(x0.len(), n, "start point has the wrong dimension");
    let mut run = Run {
        problem,
        opts,
        start: Instant::now(),
        iterations: 0,
        trace: Vec::new(),
    };
    let mut lambda = DVector::zeros(k);
    let x0 = DVector::from_column_slice(x0);

    let mut p = match evaluate(run.problem, &x0) {
        Ok(p) => p,
        Err(e) => {
            let blank = Point {
                x: x0.clone(),
                f: f64::NAN,
                g: DVector::zeros(n),
                c: DVector::zeros(k),
                a: DMatrix::zeros(k, n),
            };
            return run.finish(
                &blank,
                &lambda,
                Status::NumericFailure,
                Some(format!("{e} at {}", fmt_point(&x0))),
            );
        }
    };
    if violation(p.c.as_slice()) > opts.feas_tol {
        p = match run.restore(p) {
            Ok(p) => p,
            Err(e) => {
                let (p, msg) = *e;
                return run.finish(&p, &lambda, Status::Infeasible, Some(msg));
            }
        };
    }

    let mut b = DMatrix::identity(n, n);
    let mut scaled = false;
    let mut penalty = 0.0f64;
    let mut reset_once = false;
    while run.iterations < opts.max_iter {
        let qp = match solve_qp(&b, &p.g, &p.a, &p.c) {
            Some(qp) => qp,
            None => {
                b = DMatrix::identity(n, n);
                match solve_qp(&b, &p.g, &p.a, &p.c) {
                    Some(qp) => qp,
                    None => {
                        return run.finish(
                            &p,
                            &lambda,
                            Status::NumericFailure,
                            Some("QP subproblem failed".into()),
                        )
                    }
                }
            }
        };
        lambda = qp.multipliers.clone();
        let kkt = kkt_residuals(p.g.as_slice(), &p.a, p.c.as_slice(), lambda.as_slice());
        let viol = violation(p.c.as_slice());
        if kkt.max() <= opts.tol && viol <= opts.feas_tol {
            return run.finish(&p, &lambda, Status::Converged, None);
        }
        let d = qp.d;
        let step_norm = d.amax();
        if step_norm < opts.step_tol {
            return run.finish(
                &p,
                &lambda,
                Status::Stalled,
                Some(format!("step norm {step_norm:e} below tolerance")),
            );
        }

        let lam_max = lambda.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        penalty = penalty.max(1.1 * lam_max + 1e-6);
        let merit0 = p.f + penalty * l1_violation(p.c.as_slice());
        let lin = &p.c + &p.a * &d;
        let slope =
            p.g.dot(&d) + penalty * (l1_violation(lin.as_slice()) - l1_violation(p.c.as_slice()));
        if slope >= 0.0 {
            if !reset_once {
                reset_once = true;
                b = DMatrix::identity(n, n);
                scaled = false;
                continue;
            }
            return run.finish(
                &p,
                &lambda,
                Status::Stalled,
                Some("search direction is not a descent direction".into()),
            );
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            match evaluate(run.problem, &(&p.x + &d * alpha)) {
                Ok(t) => {
                    let merit = t.f + penalty * l1_violation(t.c.as_slice());
                    if merit <= merit0 + 1e-4 * alpha * slope {
                        accepted = Some((t, merit));
                        break;
                    }
                    // Minimizer of the quadratic through merit0, slope and merit.
                    let q = -slope * alpha * alpha / (2.0 * (merit - merit0 - slope * alpha));
                    alpha = q.clamp(0.1 * alpha, 0.5 * alpha);
                }
                Err(_) => alpha *= 0.5,
            }
        }
        let Some((t, merit)) = accepted else {
            if !reset_once {
                reset_once = true;
                b = DMatrix::identity(n, n);
                scaled = false;
                continue;
            }
            return run.finish(
                &p,
                &lambda,
                Status::Stalled,
                Some("line search failed".into()),
            );
        };
        run.iterations += 1;
        reset_once = false;
        if opts.trace {
            run.trace.push(TraceRecord {
                iteration: run.iterations,
                objective: t.f,
                violation: violation(t.c.as_slice()).max(0.0),
                step_norm: alpha * step_norm,
                step_length: alpha,
                penalty,
                merit_before: merit0,
                merit_after: merit,
            });
        }

        // Damped BFGS update of the Lagrangian Hessian model.
        let s = &t.x - &p.x;
        let mut y = (&t.g - t.a.tr_mul(&lambda)) - (&p.g - p.a.tr_mul(&lambda));
        let sy = s.dot(&y);
        if !scaled && sy > 0.0 {
            b = DMatrix::identity(n, n) * (y.dot(&y) / sy);
            scaled = true;
        }
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        if sbs > 1e-300 {
            if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                y = &y * theta + &bs * (1.0 - theta);
            }
            let sy = s.dot(&y);
            if sy > 1e-300 {
                b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
                b = (&b + b.transpose()) * 0.5;
            } else {
                b = DMatrix::identity(n, n);
                scaled = false;
            }
        } else {
            b = DMatrix::identity(n, n);
            scaled = false;
        }
        p = t;
    }
    run.finish(&p, &lambda, Status::MaxIter, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem_1d() -> NlpProblem {
        NlpProblem::new(
            1,
            Box::new(|x| Ok(((x[0] - 2.0).powi(2), vec![2.0 * (x[0] - 2.0)]))),
        )
    }

    #[test]
    fn active_constraint() {
        let mut p = problem_1d().constraint(Box::new(|x| Ok((x[0] - 3.0, vec![1.0]))));
        let r = minimize(&mut p, &[5.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Converged);
        assert!((r.x[0] - 3.0).abs() <= 1e-6);
        assert!((r.multipliers[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn unconstrained_quadratic() {
        let r = minimize(&mut problem_1d(), &[10.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Converged);
        assert!((r.x[0] - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn halfspace_projection_from_infeasible_start() {
        let mut p = NlpProblem::new(
            2,
            Box::new(|x| Ok((x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]))),
        )
        .constraint(Box::new(|x| Ok((x[0] + x[1] - 1.0, vec![1.0, 1.0]))));
        let r = minimize(
            &mut p,
            &[-3.0, 0.2],
            &SolverOptions {
                trace: true,
                ..Default::default()
            },
        );
        assert_eq!(r.status, Status::Converged);
        assert!((r.x[0] - 0.5).abs() <= 1e-6 && (r.x[1] - 0.5).abs() <= 1e-6);
        assert!(r.kkt.max() <= 1e-6 && r.max_violation <= 1e-8);
        for t in &r.trace {
            assert!(t.merit_after <= t.merit_before);
        }
    }

    #[test]
    fn rosenbrock_with_disk_constraint() {
        // Known optimum on the boundary of x² + y² ≤ 2 is (1, 1).
        let mut p = NlpProblem::new(
            2,
            Box::new(|x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                Ok((
                    f,
                    vec![
                        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                        200.0 * (b - a * a),
                    ],
                ))
            }),
        )
        .constraint(Box::new(|x| {
            Ok((
                1.5 - x[0] * x[0] - x[1] * x[1],
                vec![-2.0 * x[0], -2.0 * x[1]],
            ))
        }));
        let r = minimize(&mut p, &[-1.0, 0.5], &SolverOptions::default());
        assert_eq!(r.status, Status::Converged, "{r:?}");
        assert!(r.max_violation <= 1e-8);
        let c = 1.5 - r.x[0].powi(2) - r.x[1].powi(2);
        assert!(c.abs() < 1e-6, "constraint should be active, got {c}");
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let mut p = problem_1d()
            .constraint(Box::new(|x| Ok((x[0] - 3.0, vec![1.0]))))
            .constraint(Box::new(|x| Ok((1.0 - x[0], vec![-1.0]))));
        let r = minimize(&mut p, &[0.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn non_finite_start_is_a_numeric_failure() {
        let mut p = NlpProblem::new(1, Box::new(|x| Ok((x[0].ln(), vec![1.0 / x[0]]))));
        let r = minimize(&mut p, &[-1.0], &SolverOptions::default());
        assert_eq!(r.status, Status::NumericFailure);
        assert!(r.message.unwrap().contains("[-1]"));
    }

    #[test]
    fn check_kkt_reports() {
        let mut p = NlpProblem::new(
            2,
            Box::new(|x| Ok((x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]))),
        )
        .constraint(Box::new(|x| Ok((x[0] + x[1] - 1.0, vec![1.0, 1.0]))));
        let r = check_kkt(&mut p, &[0.5, 0.5], &[1.0]).unwrap();
        assert!(r.max() <= 1e-10);
        // Zero multipliers at an interior point: only feasibility remains.
        let r = check_kkt(&mut p, &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(r.stationarity, 0.0);
        assert_eq!(r.feasibility, 1.0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = NlpProblem::new(
                2,
                Box::new(|x| {
                    Ok((
                        x[0].powi(4) + x[1] * x[1],
                        vec![4.0 * x[0].powi(3), 2.0 * x[1]],
                    ))
                }),
            )
            .constraint(Box::new(|x| Ok((x[0] + 2.0 * x[1] - 1.0, vec![1.0, 2.0]))));
            minimize(
                &mut p,
                &[3.0, -1.0],
                &SolverOptions {
                    trace: true,
                    ..Default::default()
                },
            )
        };
        let (a, b) = (run(), run());
        assert_eq!(a.x, b.x);
        assert_eq!(a.trace, b.trace);
    }
}

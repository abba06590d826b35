//! Central finite-difference checks of energy and constraint gradients.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TapeScratch};
use crate::error::Error;
use crate::objectives::{EnergyContext, EnergyScratch, ObjectiveId};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Smallest gradient scale used as a denominator; below it the comparison
/// is effectively absolute.
pub const REL_FLOOR: f64 = 1e-5;

/// Worst component of one function's gradient at one point.
///
/// Errors are measured against the scale of the whole gradient,
/// `|a_i − fd_i| / max(‖a‖∞, ‖fd‖∞, REL_FLOOR)`. A component that is zero by
/// symmetry is then judged against its siblings instead of against the
/// roundoff in its difference quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub point: usize,
    /// `energy:<name>` or `constraint:<index>`.
    pub function: String,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.rel_err <= REL_TOL
    }
}

/// Compares `grad` with central differences of `value` at `p`.
pub fn check_gradient(
    point: usize,
    function: String,
    p: &[f64],
    grad: &[f64],
    mut value: impl FnMut(&[f64]) -> Result<f64, Error>,
) -> Result<GradCheckRow, Error> {
    let mut x = p.to_vec();
    let mut fd = vec![0.0; p.len()];
    for i in 0..p.len() {
        x[i] = p[i] + FD_STEP;
        let fp = value(&x)?;
        x[i] = p[i] - FD_STEP;
        let fm = value(&x)?;
        x[i] = p[i];
        fd[i] = (fp - fm) / (2.0 * FD_STEP);
    }
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(grad).max(inf(&fd)).max(REL_FLOOR);
    let mut row = GradCheckRow {
        point,
        function,
        param: 0,
        analytic: 0.0,
        numeric: 0.0,
        rel_err: -1.0,
    };
    for i in 0..p.len() {
        let e = (grad[i] - fd[i]).abs() / scale;
        if e > row.rel_err {
            (row.param, row.analytic, row.numeric, row.rel_err) = (i, grad[i], fd[i], e);
        }
    }
    row.rel_err = row.rel_err.max(0.0);
    Ok(row)
}

pub fn check_energies(
    ctx: &EnergyContext,
    ids: &[ObjectiveId],
    point: usize,
    p: &[f64],
) -> Result<Vec<GradCheckRow>, Error> {
    let mut s = EnergyScratch::new(ctx);
    let mut rows = Vec::with_capacity(ids.len());
    for &id in ids {
        let (_, g) = ctx.energy(id, p, &mut s)?;
        rows.push(check_gradient(point, format!("energy:{id}"), p, &g, |x| {
            Ok(ctx.energy(id, x, &mut s)?.0)
        })?);
    }
    Ok(rows)
}

pub fn check_constraints(tape: &Tape, point: usize, p: &[f64]) -> Result<Vec<GradCheckRow>, Error> {
    let mut s = TapeScratch::new(tape);
    let (_, jac) = tape.constraint_jacobian(p, &mut s)?;
    let mut rows = Vec::with_capacity(tape.num_constraints());
    for k in 0..tape.num_constraints() {
        let g: Vec<f64> = jac.row(k).iter().copied().collect();
        rows.push(check_gradient(
            point,
            format!("constraint:{k}"),
            p,
            &g,
            |x| Ok(tape.eval_constraints(x, &mut s)?[k]),
        )?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use crate::models;
    use crate::objectives::EditSpec;

    #[test]
    fn tampered_gradient_fails() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1]);
        let p = [0.7, -0.2];
        assert!(check_gradient(0, "f".into(), &p, &[1.4, 3.0], f)
            .unwrap()
            .passed());
        let bad = check_gradient(0, "f".into(), &p, &[1.4, 3.001], f).unwrap();
        assert!(!bad.passed());
        assert_eq!(bad.param, 1);
    }

    #[test]
    fn constant_function_passes() {
        let row = check_gradient(0, "c".into(), &[1.0, 2.0], &[0.0, 0.0], |_| Ok(4.0)).unwrap();
        assert!(row.passed() && row.rel_err == 0.0);
    }

    #[test]
    fn mount_energies_and_constraints() {
        let m = Model::compile(models::MOUNT).unwrap();
        let edit = EditSpec::new([(3, [0.3, 0.2, 0.1]), (12, [0.0, 1.0, -0.2])], [0]);
        let ctx = EnergyContext::new(
            m.tape.clone(),
            m.topology.clone(),
            &m.initial_params,
            &edit,
            Default::default(),
        )
        .unwrap();
        let p: Vec<f64> = m.initial_params.iter().map(|x| x * 1.05).collect();
        let rows = check_energies(&ctx, &ObjectiveId::ALL, 0, &p).unwrap();
        assert_eq!(rows.len(), ObjectiveId::ALL.len());
        let rows2 = check_constraints(&m.tape, 0, &p).unwrap();
        assert_eq!(rows2.len(), m.tape.num_constraints());
        for r in rows.iter().chain(&rows2) {
            assert!(r.passed(), "{r:?}");
        }
    }
}

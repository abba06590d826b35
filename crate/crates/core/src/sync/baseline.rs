//! The geometry-first comparison pipeline: deform the mesh freely, then fit
//! the program parameters to the deformed vertices.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TapeScratch};
use crate::error::{Error, GeometryError};
use crate::mesh::{build_deformation_data, MeshTopology};
use crate::objectives::{EditSpec, EnergyContext, ObjectiveConfig, ObjectiveId};
use crate::optimize::{minimize, SolverOptions, Status};

use super::{ComposedProblem, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Minimum-bending vertex positions that meet the edit exactly.
    pub free_positions: Vec<f64>,
    /// Parameters fitted to `free_positions`.
    pub params: Vec<f64>,
    pub status: Status,
}

/// Displacement field of least bending energy `Tr(Dᵀ Q D)` that moves the
/// edited vertices exactly to their targets. Returns deformed positions.
pub fn free_biharmonic_deformation(
    topology: &MeshTopology,
    rest: &[f64],
    edit: &EditSpec,
) -> Result<Vec<f64>, Error> {
    let n = topology.num_vertices();
    edit.validate(n)?;
    let q = build_deformation_data(topology, rest).q.to_dense();
    let targets = edit.targets(rest);
    let mut fixed = vec![None; n];
    for &(v, t) in &targets {
        fixed[v] = Some(t);
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut out = rest.to_vec();
    for &(v, t) in &targets {
        out[3 * v..3 * v + 3].copy_from_slice(&t);
    }
    if free.is_empty() {
        return Ok(out);
    }
    let qff = DMatrix::from_fn(free.len(), free.len(), |a, b| q[(free[a], free[b])]);
    let lu = qff.lu();
    for c in 0..3 {
        let rhs = DVector::from_fn(free.len(), |a, _| {
            -targets
                .iter()
                .map(|&(v, t)| q[(free[a], v)] * (t[c] - rest[3 * v + c]))
                .sum::<f64>()
        });
        let d = lu
            .solve(&rhs)
            .filter(|d| d.iter().all(|x| x.is_finite()))
            .ok_or_else(|| {
                GeometryError::SingularSystem("free block of the bi-Laplacian is singular".into())
            })?;
        for (a, &v) in free.iter().enumerate() {
            out[3 * v + c] = rest[3 * v + c] + d[a];
        }
    }
    Ok(out)
}

/// Deforms the geometry ignoring the program, then fits parameters to every
/// deformed vertex with the edit energy alone.
pub fn project_then_fit_baseline(
    tape: Arc<Tape>,
    topology: Arc<MeshTopology>,
    p0: &[f64],
    edit: &EditSpec,
    opts: &SolverOptions,
) -> Result<Baseline, Error> {
    let rest = tape.eval_vertices(p0, &mut TapeScratch::new(&tape))?;
    let free_positions = free_biharmonic_deformation(&topology, &rest, edit)?;
    let n = topology.num_vertices();
    let all = EditSpec::new(
        (0..n).map(|v| {
            (
                v,
                [
                    free_positions[3 * v],
                    free_positions[3 * v + 1],
                    free_positions[3 * v + 2],
                ],
            )
        }),
        [],
    );
    let config = ObjectiveConfig::default().with_objectives(&[ObjectiveId::Edit]);
    let ctx = EnergyContext::new(tape, topology, p0, &all, config)?;
    let r = minimize(
        &mut ComposedProblem::new(&ctx, Term::Composed(ObjectiveId::Edit)),
        p0,
        opts,
    );
    Ok(Baseline {
        free_positions,
        params: r.x,
        status: r.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::point;
    use crate::model::Model;
    use crate::models;

    #[test]
    fn free_deformation_hits_targets_and_identity_is_rest() {
        let m = Model::compile(models::COUPLED_CYLINDER).unwrap();
        let rest = m.positions(&m.initial_params).unwrap();
        let edit = EditSpec::new(
            (24..32).map(|v| (v, [rest[3 * v] + 0.5, rest[3 * v + 1], rest[3 * v + 2]])),
            0..8,
        );
        let def = free_biharmonic_deformation(&m.topology, &rest, &edit).unwrap();
        for (v, t) in edit.targets(&rest) {
            assert_eq!([def[3 * v], def[3 * v + 1], def[3 * v + 2]], t);
        }
        // Middle rings move part of the way.
        let dx = def[3 * 12] - rest[3 * 12];
        assert!(dx > 0.01 && dx < 0.49, "{dx}");

        let ident = EditSpec::new([(0, [rest[0], rest[1], rest[2]])], []);
        let def = free_biharmonic_deformation(&m.topology, &rest, &ident).unwrap();
        for v in 0..m.num_vertices() {
            assert!((point(&def, v) - point(&rest, v)).norm() < 1e-9);
        }
    }

    #[test]
    fn identity_edit_fits_back_to_p0() {
        let m = Model::compile(models::BOX).unwrap();
        let rest = m.positions(&m.initial_params).unwrap();
        let edit = EditSpec::new([(3, [rest[9], rest[10], rest[11]])], []);
        let b = project_then_fit_baseline(
            m.tape.clone(),
            m.topology.clone(),
            &m.initial_params,
            &edit,
            &Default::default(),
        )
        .unwrap();
        for (a, e) in b.params.iter().zip(&m.initial_params) {
            assert!((a - e).abs() < 1e-6);
        }
    }
}

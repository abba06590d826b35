use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::autodiff::{Tape, TapeScratch};
use crate::error::{Error, GeometryError, NumericError, NumericSite};
use crate::mesh::{
    build_deformation_data, centroid, centroid_vjp, point, signed_volume, signed_volume_grad,
    DeformationData, MeshTopology,
};

use super::arap::{arap_energy, arap_local_step, arap_weights};
use super::weights::{compute_weights, LocalizationWeights};
use super::{EditSpec, ObjectiveConfig, ObjectiveId};

/// An energy value and its gradient with respect to the parameters.
pub type EnergyValue = (f64, Vec<f64>);

/// `edit + γ · objective`, pointwise in value and gradient.
pub fn compose(edit: EnergyValue, objective: EnergyValue, gamma: f64) -> EnergyValue {
    let (ev, mut eg) = edit;
    let (ov, og) = objective;
    for (a, b) in eg.iter_mut().zip(&og) {
        *a += gamma * b;
    }
    (ev + gamma * ov, eg)
}

/// Everything the energies need that is fixed for one edit: the rest
/// geometry at `p0`, the edit targets and the localization weights.
/// Immutable once built, so several solver threads can share it.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    pub tape: Arc<Tape>,
    pub topology: Arc<MeshTopology>,
    pub p0: Vec<f64>,
    /// Flattened vertex positions at `p0`.
    pub rest: Vec<f64>,
    pub targets: Vec<(usize, [f64; 3])>,
    pub weights: LocalizationWeights,
    pub deform: DeformationData,
    pub arap_rings: Vec<Vec<(usize, f64)>>,
    pub volume0: f64,
    pub centroid0: Result<Vector3<f64>, GeometryError>,
    pub config: ObjectiveConfig,
}

/// Per-thread buffers for energy evaluation.
#[derive(Debug, Clone)]
pub struct EnergyScratch {
    tape: TapeScratch,
    v: Vec<f64>,
    wv: Vec<f64>,
    wg: Vec<f64>,
    dv: Vec<f64>,
    dg: Vec<f64>,
    dp: Vec<f64>,
}

impl EnergyScratch {
    pub fn new(ctx: &EnergyContext) -> Self {
        let (n3, k, m) = (
            3 * ctx.tape.num_vertices(),
            ctx.tape.num_constraints(),
            ctx.tape.num_params(),
        );
        Self {
            tape: TapeScratch::new(&ctx.tape),
            v: vec![0.0; n3],
            wv: vec![0.0; n3],
            wg: vec![0.0; k],
            dv: vec![0.0; n3],
            dg: vec![0.0; k],
            dp: vec![0.0; m],
        }
    }
}

fn smooth_abs(x: f64, delta: f64) -> (f64, f64) {
    let r = (x * x + delta * delta).sqrt();
    (r - delta, x / r)
}

fn finite(name: &'static str, value: f64) -> Result<f64, Error> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(NumericError {
            site: NumericSite::Energy(name),
            span: Default::default(),
            detail: format!("value {value}"),
        }
        .into())
    }
}

impl EnergyContext {
    pub fn new(
        tape: Arc<Tape>,
        topology: Arc<MeshTopology>,
        p0: &[f64],
        edit: &EditSpec,
        config: ObjectiveConfig,
    ) -> Result<Self, Error> {
        edit.validate(topology.num_vertices())?;
        config.validate().map_err(Error::Other)?;
        let rest = tape.eval_vertices(p0, &mut TapeScratch::new(&tape))?;
        let weights = compute_weights(&tape, &topology, &rest, edit);
        let deform = build_deformation_data(&topology, &rest);
        let arap_rings = arap_weights(&deform);
        let volume0 = signed_volume(topology.tris(), &rest);
        let centroid0 = centroid(topology.tris(), &rest);
        Ok(Self {
            targets: edit.targets(&rest),
            tape,
            topology,
            p0: p0.to_vec(),
            rest,
            weights,
            deform,
            arap_rings,
            volume0,
            centroid0,
            config,
        })
    }

    pub fn num_params(&self) -> usize {
        self.p0.len()
    }

    /// Flattened vertex positions at `p`.
    pub fn positions(&self, p: &[f64], s: &mut EnergyScratch) -> Result<Vec<f64>, Error> {
        Ok(self.tape.eval_vertices(p, &mut s.tape)?)
    }

    /// Evaluates an energy defined on vertex positions and pulls its gradient
    /// back to the parameters with one reverse sweep. `f` receives the
    /// positions and a zeroed gradient buffer to accumulate into.
    fn pullback(
        &self,
        name: &'static str,
        p: &[f64],
        s: &mut EnergyScratch,
        f: impl FnOnce(&[f64], &mut [f64]) -> Result<f64, Error>,
    ) -> Result<EnergyValue, Error> {
        self.tape.forward(p, &mut s.tape)?;
        self.tape.read_outputs(&s.tape, &mut s.v, &mut s.dg);
        s.wv.iter_mut().for_each(|x| *x = 0.0);
        let value = finite(name, f(&s.v, &mut s.wv)?)?;
        let mut grad = vec![0.0; self.num_params()];
        self.tape
            .vjp_prepared(&s.wv, &s.wg, &mut s.tape, &mut grad)?;
        Ok((value, grad))
    }

    /// Squared distance of the edited vertices from their targets.
    pub fn e_edit(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        self.pullback("edit", p, s, |v, g| {
            let mut e = 0.0;
            for &(vid, t) in &self.targets {
                for k in 0..3 {
                    let d = v[3 * vid + k] - t[k];
                    e += d * d;
                    g[3 * vid + k] += 2.0 * d;
                }
            }
            Ok(e)
        })
    }

    fn vtx_term(&self, v: &[f64], g: &mut [f64], scale: f64) -> f64 {
        let delta = self.config.delta;
        let mut e = 0.0;
        for (vid, &w) in self.weights.vertex.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for k in 0..3 {
                let (a, da) = smooth_abs(v[3 * vid + k] - self.rest[3 * vid + k], delta);
                e += w * a;
                g[3 * vid + k] += scale * w * da;
            }
        }
        e
    }

    /// Distance-weighted L1 displacement of the unedited vertices.
    pub fn e_vtx(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        self.pullback("vtx", p, s, |v, g| Ok(self.vtx_term(v, g, 1.0)))
    }

    /// Weighted squared change of edge lengths outside the edit.
    pub fn e_edg(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        let delta = self.config.delta;
        let len = |x: &[f64], i: usize, j: usize| {
            let d = point(x, i) - point(x, j);
            let r = (d.norm_squared() + delta * delta).sqrt();
            (r - delta, d / r)
        };
        self.pullback("edg", p, s, |v, g| {
            let mut e = 0.0;
            for (k, &(i, j)) in self.topology.edges().iter().enumerate() {
                let w = self.weights.edge[k];
                if !self.weights.edge_active[k] || w == 0.0 {
                    continue;
                }
                let (l0, _) = len(&self.rest, i, j);
                let (l, dir) = len(v, i, j);
                e += w * (l - l0).powi(2);
                let c = 2.0 * w * (l - l0);
                for a in 0..3 {
                    g[3 * i + a] += c * dir[a];
                    g[3 * j + a] -= c * dir[a];
                }
            }
            Ok(e)
        })
    }

    /// Weighted L1 change of the parameters themselves.
    pub fn e_par(&self, p: &[f64]) -> Result<EnergyValue, Error> {
        let mut e = 0.0;
        let mut g = vec![0.0; p.len()];
        for (i, (&x, &x0)) in p.iter().zip(&self.p0).enumerate() {
            let (a, da) = smooth_abs(x - x0, self.config.delta);
            e += self.weights.param[i] * a;
            g[i] = self.weights.param[i] * da;
        }
        Ok((finite("par", e)?, g))
    }

    /// `Tr(Dᵀ Q D)` for the displacement field `D = V(P) − V(P0)`. The
    /// gradient is assembled one parameter at a time from forward-mode
    /// Jacobian columns.
    pub fn e_bh(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        let n = self.topology.num_vertices();
        self.tape.forward(p, &mut s.tape)?;
        self.tape.read_outputs(&s.tape, &mut s.v, &mut s.dg);
        let mut col = vec![0.0; n];
        let mut qcol = vec![0.0; n];
        let mut e = 0.0;
        // s.wv holds (Q + Qᵀ) D, with Q symmetric.
        for c in 0..3 {
            for (i, x) in col.iter_mut().enumerate() {
                *x = s.v[3 * i + c] - self.rest[3 * i + c];
            }
            self.deform.q.mul_vec(&col, &mut qcol);
            for i in 0..n {
                e += col[i] * qcol[i];
                s.wv[3 * i + c] = 2.0 * qcol[i];
            }
        }
        let e = finite("bh", e)?;
        let m = self.num_params();
        let mut grad = vec![0.0; m];
        for (j, g) in grad.iter_mut().enumerate() {
            s.dp.iter_mut().for_each(|x| *x = 0.0);
            s.dp[j] = 1.0;
            self.tape
                .jvp_prepared(&s.dp, &mut s.tape, &mut s.dv, &mut s.dg)?;
            *g = s.wv.iter().zip(&s.dv).map(|(a, b)| a * b).sum();
        }
        Ok((e, grad))
    }

    /// Local-step rotations for the mesh at `p`.
    pub fn arap_rotations(
        &self,
        p: &[f64],
        s: &mut EnergyScratch,
    ) -> Result<Vec<Matrix3<f64>>, Error> {
        let v = self.positions(p, s)?;
        Ok(arap_local_step(&v, &self.rest, &self.arap_rings))
    }

    /// Rigidity energy with the rotations held fixed.
    pub fn e_arap_fixed(
        &self,
        p: &[f64],
        rotations: &[Matrix3<f64>],
        s: &mut EnergyScratch,
    ) -> Result<EnergyValue, Error> {
        self.pullback("arap", p, s, |v, g| {
            Ok(arap_energy(
                v,
                &self.rest,
                &self.arap_rings,
                rotations,
                Some(g),
            ))
        })
    }

    /// Rigidity energy at the best-fit rotations for `p`. Since those
    /// rotations minimize the energy, its gradient is the fixed-rotation
    /// gradient.
    pub fn e_arap(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        let rotations = self.arap_rotations(p, s)?;
        self.e_arap_fixed(p, &rotations, s)
    }

    /// Squared change of the enclosed volume.
    pub fn e_vol(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        let tris = self.topology.tris();
        self.pullback("vol", p, s, |v, g| {
            let dv = signed_volume(tris, v) - self.volume0;
            for (a, b) in g.iter_mut().zip(signed_volume_grad(tris, v)) {
                *a += 2.0 * dv * b;
            }
            Ok(dv * dv)
        })
    }

    /// Center-of-mass displacement plus a small vertex-displacement term.
    pub fn e_cm(&self, p: &[f64], s: &mut EnergyScratch) -> Result<EnergyValue, Error> {
        let c0 = self.centroid0.clone()?;
        let tris = self.topology.tris();
        let (delta, k_v) = (self.config.delta, self.config.k_v);
        self.pullback("cm", p, s, |v, g| {
            let d = centroid(tris, v)? - c0;
            let r = (d.norm_squared() + delta * delta).sqrt();
            let dg = centroid_vjp(tris, v, d / r)?;
            for (a, b) in g.iter_mut().zip(dg) {
                *a += b;
            }
            Ok(r - delta + k_v * self.vtx_term(v, g, k_v))
        })
    }

    /// The raw objective energy (the edit energy for [`ObjectiveId::Edit`]).
    pub fn energy(
        &self,
        id: ObjectiveId,
        p: &[f64],
        s: &mut EnergyScratch,
    ) -> Result<EnergyValue, Error> {
        match id {
            ObjectiveId::Edit => self.e_edit(p, s),
            ObjectiveId::Vtx => self.e_vtx(p, s),
            ObjectiveId::Edg => self.e_edg(p, s),
            ObjectiveId::Par => self.e_par(p),
            ObjectiveId::Bh => self.e_bh(p, s),
            ObjectiveId::Arap => self.e_arap(p, s),
            ObjectiveId::Vol => self.e_vol(p, s),
            ObjectiveId::Cm => self.e_cm(p, s),
        }
    }

    /// `E_edit + γ E_obj`, or the edit energy alone for the edit objective.
    pub fn composed(
        &self,
        id: ObjectiveId,
        p: &[f64],
        s: &mut EnergyScratch,
    ) -> Result<EnergyValue, Error> {
        let edit = self.e_edit(p, s)?;
        if id == ObjectiveId::Edit {
            return Ok(edit);
        }
        Ok(compose(edit, self.energy(id, p, s)?, self.config.gamma(id)))
    }
}

//! Turns a vertex edit into a gallery of candidate parameter vectors, one
//! solve per enabled objective, with near-identical results merged.

mod baseline;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TapeScratch};
use crate::error::Error;
use crate::mesh::{to_obj, MeshTopology};
use crate::objectives::{EditSpec, EnergyContext, EnergyScratch, ObjectiveConfig, ObjectiveId};
use crate::optimize::{minimize, Nlp, OptResult, SolverOptions, Status};

pub use baseline::{free_biharmonic_deformation, project_then_fit_baseline, Baseline};

/// Version tag written into serialized galleries.
pub const GALLERY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncOptions {
    pub solver: SolverOptions,
    /// Results closer than this in relative L∞ parameter distance merge.
    pub dedup_threshold: f64,
    /// Run the objectives on the rayon pool.
    pub parallel: bool,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            dedup_threshold: 1e-3,
            parallel: true,
        }
    }
}

/// `max_i |p_i − q_i| / max(1, |p_i|, |q_i|)`.
pub fn relative_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs() / 1f64.max(a.abs()).max(b.abs()))
        .fold(0.0, f64::max)
}

/// Outcome of one objective's solve, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRun {
    pub objective: ObjectiveId,
    pub gamma: f64,
    pub status: Status,
    pub params: Vec<f64>,
    pub e_edit: f64,
    /// Raw (unweighted) objective energy at the result.
    pub objective_value: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Composed energy after each local/global alternation (rigidity only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternation_energies: Vec<f64>,
    /// Gallery option this run contributed to, if it succeeded.
    pub option: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryOption {
    /// Objectives whose results merged into this option; the first one
    /// supplied the parameters.
    pub objectives: Vec<ObjectiveId>,
    pub params: Vec<f64>,
    /// Flattened vertex positions at `params`.
    pub positions: Vec<f64>,
    pub e_edit: f64,
    pub objective_value: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionGallery {
    pub v: u32,
    pub param_names: Vec<String>,
    pub p0: Vec<f64>,
    /// Sorted by ascending edit energy.
    pub options: Vec<GalleryOption>,
    /// Every objective run in objective order, including failures.
    pub runs: Vec<ObjectiveRun>,
    /// Objective name to option index.
    pub dedup_map: BTreeMap<ObjectiveId, usize>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

impl OptionGallery {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gallery serializes")
    }

    pub fn option_obj(&self, index: usize, topology: &MeshTopology) -> Result<String, Error> {
        let o = self.options.get(index).ok_or(Error::OptionIndex {
            index,
            len: self.options.len(),
        })?;
        Ok(to_obj(topology, &o.positions, false))
    }
}

/// Parameters and positions of option `index`; these become the rest state
/// for the next edit.
pub fn apply_option(gallery: &OptionGallery, index: usize) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let o = gallery.options.get(index).ok_or(Error::OptionIndex {
        index,
        len: gallery.options.len(),
    })?;
    Ok((o.params.clone(), o.positions.clone()))
}

/// One composed objective as a constrained problem over the parameters.
struct ComposedProblem<'a> {
    ctx: &'a EnergyContext,
    scratch: EnergyScratch,
    tape_scratch: TapeScratch,
    kind: Term,
}

enum Term {
    Composed(ObjectiveId),
    /// Edit plus rigidity at frozen rotations.
    ArapFixed(Vec<nalgebra::Matrix3<f64>>),
}

impl<'a> ComposedProblem<'a> {
    fn new(ctx: &'a EnergyContext, kind: Term) -> Self {
        Self {
            ctx,
            scratch: EnergyScratch::new(ctx),
            tape_scratch: TapeScratch::new(&ctx.tape),
            kind,
        }
    }
}

impl Nlp for ComposedProblem<'_> {
    fn num_vars(&self) -> usize {
        self.ctx.num_params()
    }

    fn num_constraints(&self) -> usize {
        self.ctx.tape.num_constraints()
    }

    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), String> {
        let r = match &self.kind {
            Term::Composed(id) => self.ctx.composed(*id, x, &mut self.scratch),
            Term::ArapFixed(rot) => {
                let gamma = self.ctx.config.gamma(ObjectiveId::Arap);
                self.ctx.e_edit(x, &mut self.scratch).and_then(|edit| {
                    let arap = self.ctx.e_arap_fixed(x, rot, &mut self.scratch)?;
                    Ok(crate::objectives::compose(edit, arap, gamma))
                })
            }
        };
        r.map_err(|e| e.to_string())
    }

    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), String> {
        self.ctx
            .tape
            .constraint_jacobian(x, &mut self.tape_scratch)
            .map_err(|e| e.to_string())
    }
}

fn solver_options(ctx: &EnergyContext, id: ObjectiveId, base: &SolverOptions) -> SolverOptions {
    // The objective term enters scaled by γ, so its share of the gradient
    // must be resolved to γ times the tolerance.
    let gamma = if id == ObjectiveId::Edit {
        1.0
    } else {
        ctx.config.gamma(id).min(1.0)
    };
    SolverOptions {
        tol: base.tol * gamma,
        ..base.clone()
    }
}

/// Runs one objective to completion.
pub fn run_objective(ctx: &EnergyContext, id: ObjectiveId, opts: &SolverOptions) -> ObjectiveRun {
    let start = Instant::now();
    let sopts = solver_options(ctx, id, opts);
    let mut alternation_energies = Vec::new();
    let result = if id == ObjectiveId::Arap {
        run_arap(ctx, &sopts, &mut alternation_energies)
    } else {
        minimize(
            &mut ComposedProblem::new(ctx, Term::Composed(id)),
            &ctx.p0,
            &sopts,
        )
    };
    let mut s = EnergyScratch::new(ctx);
    let values = ctx
        .e_edit(&result.x, &mut s)
        .and_then(|(e, _)| Ok((e, ctx.energy(id, &result.x, &mut s)?.0)));
    let (e_edit, objective_value, message, status) = match values {
        Ok((e, o)) => (e, o, result.message.clone(), result.status),
        Err(err) => (
            f64::NAN,
            f64::NAN,
            Some(err.to_string()),
            Status::NumericFailure,
        ),
    };
    ObjectiveRun {
        objective: id,
        gamma: if id == ObjectiveId::Edit {
            0.0
        } else {
            ctx.config.gamma(id)
        },
        status,
        params: result.x,
        e_edit,
        objective_value,
        max_violation: result.max_violation,
        iterations: result.iterations,
        seconds: start.elapsed().as_secs_f64(),
        message,
        alternation_energies,
        option: None,
    }
}

/// Alternates best-fit rotations with constrained parameter solves at those
/// rotations. Each half step cannot increase the composed energy.
fn run_arap(ctx: &EnergyContext, opts: &SolverOptions, energies: &mut Vec<f64>) -> OptResult {
    let mut s = EnergyScratch::new(ctx);
    let gamma = ctx.config.gamma(ObjectiveId::Arap);
    let energy_at =
        |p: &[f64], rot: &[nalgebra::Matrix3<f64>], s: &mut EnergyScratch| -> Result<f64, Error> {
            Ok(ctx.e_edit(p, s)?.0 + gamma * ctx.e_arap_fixed(p, rot, s)?.0)
        };
    let mut p = ctx.p0.clone();
    let mut last: Option<OptResult> = None;
    let mut iterations = 0;
    for _ in 0..ctx.config.arap_max_alternations.max(1) {
        let rot = match ctx.arap_rotations(&p, &mut s) {
            Ok(r) => r,
            Err(e) => return failed(&p, e.to_string(), last),
        };
        match energy_at(&p, &rot, &mut s) {
            Ok(e) => energies.push(e),
            Err(e) => return failed(&p, e.to_string(), last),
        }
        let prev = energies.len().checked_sub(2).map(|i| energies[i]);
        if let Some(prev) = prev {
            if (prev - energies[energies.len() - 1]).abs()
                < ctx.config.arap_tol * prev.abs().max(1e-300).max(1.0)
            {
                break;
            }
        }
        let mut r = minimize(
            &mut ComposedProblem::new(ctx, Term::ArapFixed(rot)),
            &p,
            opts,
        );
        iterations += r.iterations;
        r.iterations = iterations;
        let stop = matches!(r.status, Status::Infeasible | Status::NumericFailure);
        p = r.x.clone();
        last = Some(r);
        if stop {
            break;
        }
    }
    let mut r = last.expect("at least one alternation runs");
    if let (Ok(rot), Status::Converged) = (ctx.arap_rotations(&p, &mut s), r.status) {
        if let Ok(e) = energy_at(&p, &rot, &mut s) {
            if energies.last() != Some(&e) {
                energies.push(e);
            }
        }
    }
    r.x = p;
    r
}

fn failed(p: &[f64], message: String, last: Option<OptResult>) -> OptResult {
    let mut r = last.unwrap_or(OptResult {
        x: p.to_vec(),
        status: Status::NumericFailure,
        iterations: 0,
        objective: f64::NAN,
        max_violation: 0.0,
        multipliers: Vec::new(),
        kkt: Default::default(),
        wall_time: Default::default(),
        message: None,
        trace: Vec::new(),
    });
    r.status = Status::NumericFailure;
    r.message = Some(message);
    r
}

/// Runs every enabled objective for `edit` and gathers the results into a
/// gallery.
pub fn synchronize(
    tape: Arc<Tape>,
    topology: Arc<MeshTopology>,
    param_names: &[String],
    p0: &[f64],
    edit: &EditSpec,
    config: &ObjectiveConfig,
    opts: &SyncOptions,
) -> Result<OptionGallery, Error> {
    let start = Instant::now();
    let n = topology.num_vertices();
    edit.validate(n)?;
    let mut warnings = Vec::new();
    if edit.vids().len() == n {
        warnings.push(
            "the edit constrains every vertex; there is nothing left for the objectives to decide"
                .into(),
        );
    }
    let ctx = EnergyContext::new(tape.clone(), topology, p0, edit, config.clone())?;
    let mut ids = config.enabled.clone();
    ids.sort();
    ids.dedup();

    let mut runs: Vec<ObjectiveRun> = if opts.parallel {
        ids.par_iter()
            .map(|&id| run_objective(&ctx, id, &opts.solver))
            .collect()
    } else {
        ids.iter()
            .map(|&id| run_objective(&ctx, id, &opts.solver))
            .collect()
    };

    let feas = opts.solver.feas_tol;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for run in runs.iter_mut() {
        let usable = matches!(
            run.status,
            Status::Converged | Status::MaxIter | Status::Stalled
        ) && run.max_violation <= feas
            && run.e_edit.is_finite();
        if !usable && run.status != Status::NumericFailure && run.status != Status::Infeasible {
            run.message.get_or_insert_with(|| {
                format!("result violates constraints by {:e}", run.max_violation)
            });
            run.status = Status::Infeasible;
        }
    }
    for i in 0..runs.len() {
        if !matches!(
            runs[i].status,
            Status::Converged | Status::MaxIter | Status::Stalled
        ) {
            continue;
        }
        let home = groups.iter().position(|g| {
            g.iter().all(|&j| {
                relative_distance(&runs[i].params, &runs[j].params) < opts.dedup_threshold
            })
        });
        match home {
            Some(g) => groups[g].push(i),
            None => groups.push(vec![i]),
        }
    }

    let mut scratch = TapeScratch::new(&tape);
    let mut options = Vec::with_capacity(groups.len());
    for g in &groups {
        let rep = &runs[g[0]];
        let positions = tape.eval_vertices(&rep.params, &mut scratch)?;
        options.push((
            g.clone(),
            GalleryOption {
                objectives: g.iter().map(|&j| runs[j].objective).collect(),
                params: rep.params.clone(),
                positions,
                e_edit: rep.e_edit,
                objective_value: rep.objective_value,
                status: rep.status,
            },
        ));
    }
    options.sort_by(|a, b| a.1.e_edit.total_cmp(&b.1.e_edit));
    let mut dedup_map = BTreeMap::new();
    for (k, (members, _)) in options.iter().enumerate() {
        for &j in members {
            runs[j].option = Some(k);
            dedup_map.insert(runs[j].objective, k);
        }
    }

    Ok(OptionGallery {
        v: GALLERY_VERSION,
        param_names: param_names.to_vec(),
        p0: p0.to_vec(),
        options: options.into_iter().map(|(_, o)| o).collect(),
        runs,
        dedup_map,
        warnings,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use crate::models;

    fn sync(m: &Model, edit: &EditSpec, config: &ObjectiveConfig) -> OptionGallery {
        synchronize(
            m.tape.clone(),
            m.topology.clone(),
            &m.param_names,
            &m.initial_params,
            edit,
            config,
            &SyncOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_edit_gives_one_option_at_p0() {
        let m = Model::compile(models::BOX).unwrap();
        let rest = m.positions(&m.initial_params).unwrap();
        let edit = EditSpec::new([(7, [rest[21], rest[22], rest[23]])], [0]);
        let g = sync(&m, &edit, &ObjectiveConfig::default());
        assert_eq!(g.options.len(), 1, "{:#?}", g.runs);
        assert_eq!(g.options[0].params, m.initial_params);
        assert_eq!(g.options[0].objectives.len(), 6);
    }

    #[test]
    fn box_corner_pull_is_unambiguous() {
        let m = Model::compile(models::BOX).unwrap();
        let edit = EditSpec::new([(7, [1.5, 0.5, 0.5])], []);
        let g = sync(&m, &edit, &ObjectiveConfig::default());
        for r in &g.runs {
            assert!(
                (r.params[0] - 3.0).abs() <= 1e-4,
                "{:?}: {:?} {:?}",
                r.objective,
                r.params,
                r.status
            );
        }
        assert_eq!(g.options.len(), 1, "{:#?}", g.runs);
        let (p, v) = apply_option(&g, 0).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-4 && (v[21] - 1.5).abs() < 1e-4);
        assert!(matches!(
            apply_option(&g, 1),
            Err(Error::OptionIndex { index: 1, len: 1 })
        ));
    }

    #[test]
    fn gallery_serializes() {
        let m = Model::compile(models::BOX).unwrap();
        let g = sync(
            &m,
            &EditSpec::new([(7, [1.5, 0.5, 0.5])], []),
            &ObjectiveConfig::default(),
        );
        let back: OptionGallery = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back.options.len(), g.options.len());
        assert_eq!(back.v, GALLERY_VERSION);
        assert!(g.option_obj(0, &m.topology).unwrap().starts_with("v "));
    }

    #[test]
    fn relative_distance_metric() {
        assert_eq!(relative_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_distance(&[0.0, 10.0], &[0.5, 11.0]) - 0.5).abs() < 1e-15);
        assert!((relative_distance(&[10.0], &[11.0]) - 1.0 / 11.0).abs() < 1e-15);
    }
}

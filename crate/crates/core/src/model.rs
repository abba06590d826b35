//! The compile pipeline: parse, validate, interpret and lower.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::autodiff::{lower, Tape, TapeScratch};
use crate::dsl::{self, Diagnostic, Program};
use crate::error::{Error, NumericError};
use crate::interp::{interpret, ConstraintRecord, InterpResult};
use crate::mesh::MeshTopology;

#[derive(Debug, Clone, Copy, Default)]
pub struct CompileTimings {
    pub parse: Duration,
    pub interpret: Duration,
    pub lower: Duration,
}

/// A compiled program. The tape and topology are shared so solver threads
/// and sessions can hold them cheaply.
#[derive(Debug, Clone)]
pub struct Model {
    pub source: String,
    pub program: Program,
    /// Warnings from validation; errors abort compilation.
    pub warnings: Vec<Diagnostic>,
    pub tape: Arc<Tape>,
    pub topology: Arc<MeshTopology>,
    pub constraints: Vec<ConstraintRecord>,
    pub param_names: Vec<String>,
    pub initial_params: Vec<f64>,
    pub timings: CompileTimings,
}

impl Model {
    pub fn compile(source: &str) -> Result<Model, Error> {
        let t0 = Instant::now();
        let program = dsl::parse(source)?;
        let diags = dsl::validate(&program);
        if dsl::has_errors(&diags) {
            return Err(Error::Invalid(diags));
        }
        let t1 = Instant::now();
        let InterpResult {
            graph,
            topology,
            constraints,
            param_names,
            initial_params,
            ..
        } = interpret(&program)?;
        let t2 = Instant::now();
        let tape = lower(&graph);
        let t3 = Instant::now();
        Ok(Model {
            source: source.to_string(),
            program,
            warnings: diags,
            tape: Arc::new(tape),
            topology: Arc::new(topology),
            constraints,
            param_names,
            initial_params,
            timings: CompileTimings {
                parse: t1 - t0,
                interpret: t2 - t1,
                lower: t3 - t2,
            },
        })
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.topology.num_vertices()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Flattened vertex positions at `params`.
    pub fn positions(&self, params: &[f64]) -> Result<Vec<f64>, NumericError> {
        self.tape
            .eval_vertices(params, &mut TapeScratch::new(&self.tape))
    }

    pub fn constraint_values(&self, params: &[f64]) -> Result<Vec<f64>, NumericError> {
        self.tape
            .eval_constraints(params, &mut TapeScratch::new(&self.tape))
    }

    /// Source text with every parameter literal replaced by `params`.
    pub fn source_with_params(&self, params: &[f64]) -> String {
        let values: Vec<(String, f64)> = self
            .param_names
            .iter()
            .cloned()
            .zip(params.iter().copied())
            .collect();
        dsl::rewrite_params(&self.source, &values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn bundled_models_compile_cleanly() {
        for (name, src) in models::ALL {
            let m = Model::compile(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(m.warnings.is_empty(), "{name}: {:?}", m.warnings);
            let g = m.constraint_values(&m.initial_params).unwrap();
            assert!(
                g.iter().all(|&x| x >= 0.0),
                "{name} starts infeasible: {g:?}"
            );
        }
    }

    #[test]
    fn bundled_model_sizes() {
        let size = |src| {
            let m = Model::compile(src).unwrap();
            (m.num_vertices(), m.num_params())
        };
        assert_eq!(size(models::BOX), (8, 3));
        assert_eq!(size(models::MOUNT).0, 20);
        assert_eq!(size(models::COUPLED_CYLINDER), (32, 8));
        let (n, m) = size(models::DRESSER);
        assert!(n >= 200 && m >= 30, "{n} vertices, {m} params");
    }

    #[test]
    fn invalid_program_reports_diagnostics() {
        let err = Model::compile("param w = 1.0\nsolid b = box(w, q, 1)\n").unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        assert!(err.diagnostics()[0].message.contains("`q`"));
    }

    #[test]
    fn rewriting_params_round_trips() {
        let m = Model::compile(models::BOX).unwrap();
        let text = m.source_with_params(&[3.0, 1.0, 1.0]);
        assert!(text.contains("param w = 3.0"));
        let m2 = Model::compile(&text).unwrap();
        assert_eq!(m2.initial_params, vec![3.0, 1.0, 1.0]);
    }
}

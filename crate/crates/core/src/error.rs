use thiserror::Error;

use crate::dsl::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {message}{}", expected_suffix(.expected))]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected {})", expected.join(" or "))
    }
}

impl SyntaxError {
    pub fn new(span: Span, message: String, expected: Vec<String>) -> Self {
        Self {
            line: span.line,
            col: span.col,
            message,
            expected,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic {
            severity: crate::dsl::Severity::Error,
            message: self.message.clone(),
            line: self.line,
            col: self.col,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{span}: {message}")]
pub struct InterpError {
    pub span: Span,
    pub message: String,
}

impl InterpError {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic {
            severity: crate::dsl::Severity::Error,
            message: self.message.clone(),
            line: self.span.line,
            col: self.span.col,
        }
    }
}

/// Where a non-finite value appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericSite {
    Node(usize),
    Instruction(usize),
    Energy(&'static str),
}

impl std::fmt::Display for NumericSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumericSite::Node(i) => write!(f, "graph node {i}"),
            NumericSite::Instruction(i) => write!(f, "tape instruction {i}"),
            NumericSite::Energy(name) => write!(f, "energy `{name}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite value at {site} (source {span}): {detail}")]
pub struct NumericError {
    pub site: NumericSite,
    pub span: Span,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("face {face} has {len} vertices; at least 3 are required")]
    DegenerateFace { face: usize, len: usize },
    #[error("face {face} references vertex {vertex} but the mesh has {n} vertices")]
    VertexOutOfRange {
        face: usize,
        vertex: usize,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("enclosed volume {volume:e} is too small to define a center of mass")]
    DegenerateVolume { volume: f64 },
    #[error("biharmonic system is singular: {0}")]
    SingularSystem(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("edit selects no vertices")]
    Empty,
    #[error("vertex {vid} is out of range (mesh has {n} vertices)")]
    VertexOutOfRange { vid: usize, n: usize },
    #[error("vertex {vid} appears more than once in the edit")]
    Duplicate { vid: usize },
    #[error("target for vertex {vid} is not finite")]
    NonFiniteTarget { vid: usize },
}

/// Top-level error for pipelines that chain several stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("invalid program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("interpretation failed at {0}")]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("option index {index} is out of range ({len} options)")]
    OptionIndex { index: usize, len: usize },
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Diagnostics suitable for returning to an editor.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            Error::Syntax(e) => vec![e.to_diagnostic()],
            Error::Invalid(d) => d.clone(),
            Error::Interp(e) => vec![e.to_diagnostic()],
            other => vec![Diagnostic {
                severity: crate::dsl::Severity::Error,
                message: other.to_string(),
                line: 0,
                col: 0,
            }],
        }
    }
}

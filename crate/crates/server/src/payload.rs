//! Request and response bodies. Every response carries `v`.

use std::collections::BTreeMap;

use dcad_core::dsl::Diagnostic;
use dcad_core::mesh::MeshTopology;
use dcad_core::objectives::EditDocument;
use dcad_core::sync::OptionGallery;
use serde::{Deserialize, Serialize};

use crate::API_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPayload {
    pub v: u32,
    /// Flattened xyz.
    pub vertices: Vec<f64>,
    /// Polygon faces as vertex index lists.
    pub faces: Vec<Vec<usize>>,
    pub edges: Vec<[usize; 2]>,
    /// Fan triangulation of `faces`.
    pub triangles: Vec<[usize; 3]>,
}

impl MeshPayload {
    pub fn new(topology: &MeshTopology, vertices: Vec<f64>) -> Self {
        Self {
            v: API_VERSION,
            vertices,
            faces: topology.faces().to_vec(),
            edges: topology.edges().iter().map(|&(a, b)| [a, b]).collect(),
            triangles: topology.tris().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramPayload {
    pub v: u32,
    pub id: String,
    pub revision: u64,
    pub text: String,
    pub params: Vec<ParamEntry>,
    /// Validation warnings of the current text.
    pub diagnostics: Vec<Diagnostic>,
    pub mesh: MeshPayload,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateProgram {
    pub text: String,
    /// Values overriding the literals in `text`.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct UpdateProgram {
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EditRequest {
    #[serde(flatten)]
    pub document: EditDocument,
    /// Revision the client last compiled against; a mismatch is rejected.
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPayload {
    pub v: u32,
    pub edit_id: String,
    /// Session revision the edit was solved against.
    pub revision: u64,
    pub status: EditStatus,
    /// Where to poll for the result.
    pub poll: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<OptionGallery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SelectRequest {
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectPayload {
    pub v: u32,
    pub revision: u64,
    pub params: Vec<ParamEntry>,
    pub text: String,
    pub mesh: MeshPayload,
}

/// Everything needed to recreate a session; POSTing it to `/programs`
/// restores the text and parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDump {
    pub v: u32,
    pub id: String,
    pub revision: u64,
    pub text: String,
    pub params: BTreeMap<String, f64>,
    pub edits: Vec<EditPayload>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelList {
    pub v: u32,
    pub models: Vec<BundledModel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundledModel {
    pub name: String,
    pub text: String,
}

use crate::autodiff::Tape;
use crate::mesh::{geodesic_distances, MeshTopology};

use super::EditSpec;

/// Per-vertex, per-edge and per-parameter weights that concentrate change
/// near the edit. Computed once from the rest positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationWeights {
    /// Edge-graph distance from each vertex to the nearest edited vertex.
    pub distance: Vec<f64>,
    /// `true` for vertices in the edit.
    pub edited: Vec<bool>,
    /// Normalized distance weight per vertex; zero on edited vertices and
    /// summing to one over the rest.
    pub vertex: Vec<f64>,
    /// Weight per topology edge (same order as `MeshTopology::edges`); zero
    /// for edges between two edited vertices.
    pub edge: Vec<f64>,
    pub edge_active: Vec<bool>,
    /// Per-parameter weight in [0, 1].
    pub param: Vec<f64>,
    /// Vertices each parameter influences.
    pub param_vertices: Vec<Vec<usize>>,
}

pub fn compute_weights(
    tape: &Tape,
    topology: &MeshTopology,
    rest: &[f64],
    edit: &EditSpec,
) -> LocalizationWeights {
    let n = topology.num_vertices();
    let sources = edit.vids();
    let mut edited = vec![false; n];
    sources.iter().for_each(|&v| edited[v] = true);

    let distance = geodesic_distances(topology, rest, &sources);
    let free: Vec<usize> = (0..n).filter(|&v| !edited[v]).collect();
    let total: f64 = free.iter().map(|&v| distance[v]).sum();
    let mut vertex = vec![0.0; n];
    for &v in &free {
        vertex[v] = if total > 0.0 {
            distance[v] / total
        } else {
            1.0 / free.len() as f64
        };
    }

    let mut edge = Vec::with_capacity(topology.edges().len());
    let mut edge_active = Vec::with_capacity(topology.edges().len());
    for &(i, j) in topology.edges() {
        let active = !(edited[i] && edited[j]);
        edge_active.push(active);
        edge.push(if active {
            vertex[i].max(vertex[j])
        } else {
            0.0
        });
    }

    let param_vertices: Vec<Vec<usize>> = tape
        .param_vertex_dependence()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &d)| d)
                .map(|(v, _)| v)
                .collect()
        })
        .collect();
    let param = param_vertices
        .iter()
        .map(|vs| {
            if vs.is_empty() {
                return 1.0;
            }
            let hit = vs.iter().filter(|&&v| edited[v]).count() as f64;
            (1.0 - hit / vs.len() as f64).powi(2)
        })
        .collect();

    LocalizationWeights {
        distance,
        edited,
        vertex,
        edge,
        edge_active,
        param,
        param_vertices,
    }
}

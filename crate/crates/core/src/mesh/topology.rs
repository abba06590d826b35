use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::TopologyError;

/// Static connectivity of a polygon mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshTopology {
    n: usize,
    faces: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    tris: Vec<[usize; 3]>,
    tri_face: Vec<usize>,
}

impl MeshTopology {
    /// Validates faces and derives edges and the fan triangulation.
    pub fn new(n: usize, faces: Vec<Vec<usize>>) -> Result<Self, TopologyError> {
        let (tris, tri_face) = triangulate(n, &faces)?;
        let mut set = BTreeSet::new();
        for f in &faces {
            for k in 0..f.len() {
                let (a, b) = (f[k], f[(k + 1) % f.len()]);
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            }
        }
        Ok(Self {
            n,
            faces,
            edges: set.into_iter().collect(),
            tris,
            tri_face,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    /// Unique undirected polygon edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn tris(&self) -> &[[usize; 3]] {
        &self.tris
    }

    /// Source polygon of each triangle.
    pub fn tri_face(&self) -> &[usize] {
        &self.tri_face
    }

    /// Adjacency lists over polygon edges.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Fan triangulation anchored at each polygon's first vertex.
pub fn triangulate(
    n: usize,
    faces: &[Vec<usize>],
) -> Result<(Vec<[usize; 3]>, Vec<usize>), TopologyError> {
    let mut tris = Vec::new();
    let mut tri_face = Vec::new();
    for (fi, f) in faces.iter().enumerate() {
        if f.len() < 3 {
            return Err(TopologyError::DegenerateFace {
                face: fi,
                len: f.len(),
            });
        }
        if let Some(&v) = f.iter().find(|&&v| v >= n) {
            return Err(TopologyError::VertexOutOfRange {
                face: fi,
                vertex: v,
                n,
            });
        }
        for k in 1..f.len() - 1 {
            tris.push([f[0], f[k], f[k + 1]]);
            tri_face.push(fi);
        }
    }
    Ok((tris, tri_face))
}

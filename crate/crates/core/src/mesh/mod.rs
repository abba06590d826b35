//! Mesh topology and geometry kernels used by the deformation energies.

mod geodesic;
mod laplacian;
mod sparse;
mod topology;
mod volume;

use std::fmt::Write;

use nalgebra::Vector3;

pub use geodesic::geodesic_distances;
pub use laplacian::{build_deformation_data, cot_weights, DeformationData, COT_CLAMP, MASS_FLOOR};
pub use sparse::CsrMatrix;
pub use topology::{triangulate, MeshTopology};
pub use volume::{centroid, centroid_vjp, signed_volume, signed_volume_grad, MIN_VOLUME};

/// Vertex `i` of a flattened xyz position array.
#[inline]
pub fn point(positions: &[f64], i: usize) -> Vector3<f64> {
    Vector3::new(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2])
}

/// Wavefront OBJ text. Faces are written as polygons, or as the fan
/// triangulation when `triangulated` is set.
pub fn to_obj(topology: &MeshTopology, positions: &[f64], triangulated: bool) -> String {
    let mut out = String::new();
    for p in positions.chunks(3) {
        let _ = writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    if triangulated {
        for t in topology.tris() {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    } else {
        for f in topology.faces() {
            let idx: Vec<String> = f.iter().map(|i| (i + 1).to_string()).collect();
            let _ = writeln!(out, "f {}", idx.join(" "));
        }
    }
    out
}

/// Axis-aligned bounding-box diagonal length.
pub fn bbox_diagonal(positions: &[f64]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions.chunks(3) {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if positions.is_empty() {
        return 0.0;
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::MeshTopology;

    /// Unit cube with corners at {0,1}³ using the box vertex convention.
    pub fn unit_cube() -> (MeshTopology, Vec<f64>) {
        let pos: Vec<f64> = (0..8)
            .flat_map(|k| [(k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64])
            .collect();
        let faces = [
            [0, 4, 6, 2],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 2, 3, 1],
            [4, 5, 7, 6],
        ];
        (
            MeshTopology::new(8, faces.iter().map(|f| f.to_vec()).collect()).unwrap(),
            pos,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_has_one_line_per_element() {
        let (topo, pos) = test_util::unit_cube();
        let poly = to_obj(&topo, &pos, false);
        assert_eq!(poly.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(poly.lines().filter(|l| l.starts_with("f ")).count(), 6);
        assert!(poly.contains("f 1 5 7 3"));
        let tri = to_obj(&topo, &pos, true);
        assert_eq!(tri.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn bbox() {
        let (_, pos) = test_util::unit_cube();
        assert!((bbox_diagonal(&pos) - 3f64.sqrt()).abs() < 1e-15);
    }
}

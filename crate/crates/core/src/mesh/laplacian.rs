use super::{point, CsrMatrix, MeshTopology};

/// Largest cotangent magnitude a single angle may contribute.
pub const COT_CLAMP: f64 = 1e6;
/// Smallest lumped mass; keeps `M⁻¹` finite on isolated vertices.
pub const MASS_FLOOR: f64 = 1e-12;

/// Discrete differential operators of a mesh at fixed rest positions.
#[derive(Debug, Clone)]
pub struct DeformationData {
    /// Cotangent Laplacian with positive diagonal; rows sum to zero.
    pub laplacian: CsrMatrix,
    /// Barycentric lumped mass per vertex.
    pub mass: Vec<f64>,
    /// Bi-Laplacian `L M⁻¹ L`.
    pub q: CsrMatrix,
    /// One-ring neighbours of each vertex with cotangent weights `w_ij`.
    pub rings: Vec<Vec<(usize, f64)>>,
}

fn cot(u: nalgebra::Vector3<f64>, v: nalgebra::Vector3<f64>) -> f64 {
    let cross = u.cross(&v).norm();
    let dot = u.dot(&v);
    if cross < 1e-300 {
        return if dot >= 0.0 { COT_CLAMP } else { -COT_CLAMP };
    }
    (dot / cross).clamp(-COT_CLAMP, COT_CLAMP)
}

/// Cotangent weights `w_ij = ½ (cot α_ij + cot β_ij)` keyed by triangle edge.
pub fn cot_weights(topology: &MeshTopology, positions: &[f64]) -> Vec<((usize, usize), f64)> {
    let mut w = std::collections::BTreeMap::new();
    for t in topology.tris() {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let pc = point(positions, c);
            let ct = cot(point(positions, a) - pc, point(positions, b) - pc);
            *w.entry((a.min(b), a.max(b))).or_insert(0.0) += 0.5 * ct;
        }
    }
    w.into_iter().collect()
}

pub fn build_deformation_data(topology: &MeshTopology, positions: &[f64]) -> DeformationData {
    let n = topology.num_vertices();
    let weights = cot_weights(topology, positions);
    let mut trip = Vec::with_capacity(4 * weights.len());
    let mut rings = vec![Vec::new(); n];
    for &((i, j), w) in &weights {
        if i == j {
            continue;
        }
        trip.push((i, j, -w));
        trip.push((j, i, -w));
        trip.push((i, i, w));
        trip.push((j, j, w));
        rings[i].push((j, w));
        rings[j].push((i, w));
    }
    let laplacian = CsrMatrix::from_triplets(n, trip);
    let mut mass = vec![0.0; n];
    for t in topology.tris() {
        let (a, b, c) = (
            point(positions, t[0]),
            point(positions, t[1]),
            point(positions, t[2]),
        );
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        for &v in t {
            mass[v] += area / 3.0;
        }
    }
    for m in &mut mass {
        *m = m.max(MASS_FLOOR);
    }
    let inv: Vec<f64> = mass.iter().map(|m| 1.0 / m).collect();
    let q = laplacian.sandwich_diag(&inv);
    DeformationData {
        laplacian,
        mass,
        q,
        rings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_util::unit_cube;

    #[test]
    fn equilateral_pair_shared_weight() {
        let h = 3f64.sqrt() / 2.0;
        let pos = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, h, 0.0, 0.5, -h, 0.0];
        let topo = MeshTopology::new(4, vec![vec![0, 1, 2], vec![1, 0, 3]]).unwrap();
        let w = cot_weights(&topo, &pos);
        let shared = w.iter().find(|(e, _)| *e == (0, 1)).unwrap().1;
        assert!((shared - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_zero_and_q_kills_constants() {
        let (topo, pos) = unit_cube();
        let d = build_deformation_data(&topo, &pos);
        let ones = vec![1.0; 8];
        let mut out = vec![0.0; 8];
        d.laplacian.mul_vec(&ones, &mut out);
        assert!(out.iter().all(|x| x.abs() < 1e-12));
        d.q.mul_vec(&ones, &mut out);
        assert!(out.iter().all(|x| x.abs() < 1e-9));
        let q = d.q.to_dense();
        assert!((&q - q.transpose()).abs().max() < 1e-9);
        let eig = q.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > -1e-9));
    }

    #[test]
    fn degenerate_triangle_is_clamped() {
        let pos = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let topo = MeshTopology::new(3, vec![vec![0, 1, 2]]).unwrap();
        let d = build_deformation_data(&topo, &pos);
        assert!(d
            .laplacian
            .to_dense()
            .iter()
            .all(|v| v.is_finite() && v.abs() <= COT_CLAMP));
        assert!(d.mass.iter().all(|&m| m >= MASS_FLOOR));
    }
}

use nalgebra::{Matrix3, Vector3};

use crate::mesh::{point, DeformationData};

/// One-ring weights for the rigidity energy: cotangent weights clipped at
/// zero so the energy stays non-negative on obtuse triangles.
pub fn arap_weights(deform: &DeformationData) -> Vec<Vec<(usize, f64)>> {
    deform
        .rings
        .iter()
        .map(|ring| ring.iter().map(|&(j, w)| (j, w.max(0.0))).collect())
        .collect()
}

/// Best-fit rotation per vertex between its rest one-ring and its current
/// one-ring. Always a proper rotation; degenerate rings get the identity.
pub fn arap_local_step(
    current: &[f64],
    rest: &[f64],
    rings: &[Vec<(usize, f64)>],
) -> Vec<Matrix3<f64>> {
    rings
        .iter()
        .enumerate()
        .map(|(i, ring)| {
            let (pi, qi) = (point(rest, i), point(current, i));
            let mut s = Matrix3::zeros();
            for &(j, w) in ring {
                s += w * (pi - point(rest, j)) * (qi - point(current, j)).transpose();
            }
            fit_rotation(&s)
        })
        .collect()
}

/// Rotation `R` maximizing `tr(R S)`.
fn fit_rotation(s: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = s.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv = svd.singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    let mid = sv.sum() - lo - hi;
    if hi.is_nan() || hi <= 0.0 || mid <= 1e-12 * hi {
        return Matrix3::identity();
    }
    let mut r = vt.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let k = sv.imin();
        let mut d = Vector3::repeat(1.0);
        d[k] = -1.0;
        r = vt.transpose() * Matrix3::from_diagonal(&d) * u.transpose();
    }
    r
}

/// `Σ_i Σ_j w_ij ‖(q_i − q_j) − R_i (p_i − p_j)‖²` and its gradient with
/// respect to the current positions `q`, rotations held fixed.
pub fn arap_energy(
    current: &[f64],
    rest: &[f64],
    rings: &[Vec<(usize, f64)>],
    rotations: &[Matrix3<f64>],
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut e = 0.0;
    let mut g = grad;
    for (i, ring) in rings.iter().enumerate() {
        let (pi, qi) = (point(rest, i), point(current, i));
        for &(j, w) in ring {
            if w == 0.0 {
                continue;
            }
            let r = (qi - point(current, j)) - rotations[i] * (pi - point(rest, j));
            e += w * r.norm_squared();
            if let Some(g) = g.as_deref_mut() {
                for k in 0..3 {
                    g[3 * i + k] += 2.0 * w * r[k];
                    g[3 * j + k] -= 2.0 * w * r[k];
                }
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_util::unit_cube;
    use crate::mesh::{build_deformation_data, MeshTopology};
    use nalgebra::Rotation3;

    fn moved(pos: &[f64], f: impl Fn(Vector3<f64>) -> Vector3<f64>) -> Vec<f64> {
        pos.chunks(3)
            .flat_map(|p| {
                f(Vector3::new(p[0], p[1], p[2]))
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn rigid_motion_is_recovered_with_zero_energy() {
        let (topo, rest) = unit_cube();
        let rings = arap_weights(&build_deformation_data(&topo, &rest));
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let cur = moved(&rest, |p| rot * p + Vector3::new(2.0, -1.0, 0.5));
        let rs = arap_local_step(&cur, &rest, &rings);
        for r in &rs {
            assert!((r - rot.matrix()).norm() < 1e-10);
        }
        assert!(arap_energy(&cur, &rest, &rings, &rs, None) < 1e-20);

        let same = arap_local_step(&rest, &rest, &rings);
        assert!(same
            .iter()
            .all(|r| (r - Matrix3::identity()).norm() < 1e-12));
    }

    #[test]
    fn mirrored_patch_still_gets_proper_rotation() {
        // Two triangles in the plane; the deformed copy is mirrored in x,
        // which a reflection would fit exactly.
        let rest = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.2];
        let topo = MeshTopology::new(4, vec![vec![0, 1, 2], vec![1, 3, 2]]).unwrap();
        let rings = arap_weights(&build_deformation_data(&topo, &rest));
        let cur = moved(&rest, |p| Vector3::new(-p.x, p.y, p.z));
        for r in arap_local_step(&cur, &rest, &rings) {
            assert!((r.determinant() - 1.0).abs() < 1e-10);
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn degenerate_ring_gets_identity() {
        let s = Vector3::new(1.0, 2.0, 3.0) * Vector3::new(0.5, 0.1, 0.0).transpose();
        assert_eq!(fit_rotation(&s), Matrix3::identity());
        assert_eq!(fit_rotation(&Matrix3::zeros()), Matrix3::identity());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (topo, rest) = unit_cube();
        let rings = arap_weights(&build_deformation_data(&topo, &rest));
        let cur = moved(&rest, |p| {
            Vector3::new(1.2 * p.x + 0.1 * p.z, p.y - 0.3 * p.x * p.x, 0.9 * p.z)
        });
        let rs = arap_local_step(&cur, &rest, &rings);
        let mut g = vec![0.0; cur.len()];
        arap_energy(&cur, &rest, &rings, &rs, Some(&mut g));
        let h = 1e-6;
        for i in 0..cur.len() {
            let (mut a, mut b) = (cur.clone(), cur.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (arap_energy(&a, &rest, &rings, &rs, None)
                - arap_energy(&b, &rest, &rings, &rs, None))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }
}

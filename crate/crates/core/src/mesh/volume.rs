use nalgebra::Vector3;

use crate::error::GeometryError;

use super::point;

/// Smallest |volume| for which a center of mass is defined.
pub const MIN_VOLUME: f64 = 1e-10;

/// Signed enclosed volume `(1/6) Σ det[a, b, c]`. Exact for closed,
/// consistently oriented surfaces.
pub fn signed_volume(tris: &[[usize; 3]], positions: &[f64]) -> f64 {
    tris.iter()
        .map(|t| {
            let (a, b, c) = (
                point(positions, t[0]),
                point(positions, t[1]),
                point(positions, t[2]),
            );
            a.dot(&b.cross(&c))
        })
        .sum::<f64>()
        / 6.0
}

/// Gradient of [`signed_volume`] with respect to the flattened positions.
pub fn signed_volume_grad(tris: &[[usize; 3]], positions: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; positions.len()];
    for t in tris {
        let (a, b, c) = (
            point(positions, t[0]),
            point(positions, t[1]),
            point(positions, t[2]),
        );
        for (v, d) in [
            (t[0], b.cross(&c)),
            (t[1], c.cross(&a)),
            (t[2], a.cross(&b)),
        ] {
            for k in 0..3 {
                g[3 * v + k] += d[k] / 6.0;
            }
        }
    }
    g
}

/// Center of mass of the enclosed solid, from origin-apex tetrahedra.
pub fn centroid(tris: &[[usize; 3]], positions: &[f64]) -> Result<Vector3<f64>, GeometryError> {
    let mut vol = 0.0;
    let mut s = Vector3::zeros();
    for t in tris {
        let (a, b, c) = (
            point(positions, t[0]),
            point(positions, t[1]),
            point(positions, t[2]),
        );
        let v = a.dot(&b.cross(&c)) / 6.0;
        vol += v;
        s += v * (a + b + c) / 4.0;
    }
    if vol.abs() < MIN_VOLUME {
        return Err(GeometryError::DegenerateVolume { volume: vol });
    }
    Ok(s / vol)
}

/// `wᵀ ∂COM/∂V`: pulls a cotangent on the center of mass back to positions.
pub fn centroid_vjp(
    tris: &[[usize; 3]],
    positions: &[f64],
    w: Vector3<f64>,
) -> Result<Vec<f64>, GeometryError> {
    let vol = signed_volume(tris, positions);
    if vol.abs() < MIN_VOLUME {
        return Err(GeometryError::DegenerateVolume { volume: vol });
    }
    let com = centroid(tris, positions)?;
    // COM = S / Vol, so w·dCOM = (w·dS − (w·COM) dVol) / Vol.
    let wc = w.dot(&com);
    let mut g = vec![0.0; positions.len()];
    for t in tris {
        let (a, b, c) = (
            point(positions, t[0]),
            point(positions, t[1]),
            point(positions, t[2]),
        );
        let vt = a.dot(&b.cross(&c)) / 6.0;
        let ws = w.dot(&(a + b + c)) / 4.0;
        for (v, dv) in [
            (t[0], b.cross(&c) / 6.0),
            (t[1], c.cross(&a) / 6.0),
            (t[2], a.cross(&b) / 6.0),
        ] {
            let d = dv * (ws - wc) + w * (vt / 4.0);
            for k in 0..3 {
                g[3 * v + k] += d[k] / vol;
            }
        }
    }
    Ok(g)
}
